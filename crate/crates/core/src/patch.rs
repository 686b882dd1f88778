//! Exact patches, occurrence enumeration and Delone statistics of
//! occurrence sets.
//!
//! A patch is stored as the labels of the open lattice ball
//! `{x : |x|^2 < s}` in lexicographic offset order. `s` is always a
//! realized squared norm, so it equals the smallest squared norm of a cell
//! outside the domain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::RowBlocks;
use crate::error::{Error, Result};
use crate::geometry::{
    ball, interval_len, is_realized, next_realized, realized_up_to, BallShape, SortedOffsets,
};
use crate::lattice::{norm_sq, Alphabet, Cell, LabelId, TilingOracle, Window};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Patch {
    radius_sq: u64,
    dim: usize,
    labels: Vec<LabelId>,
}

/// Wire form: `{"s": int, "cells": [[[offset...], labelId], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub s: u64,
    pub cells: Vec<(Vec<i64>, LabelId)>,
}

impl Patch {
    pub fn empty(dim: usize) -> Self {
        Patch {
            radius_sq: 0,
            dim,
            labels: Vec::new(),
        }
    }

    pub fn new(dim: usize, radius_sq: u64, labels: Vec<LabelId>) -> Result<Self> {
        if radius_sq > 0 && !is_realized(dim, radius_sq) {
            return Err(Error::InvalidArgument(format!(
                "{radius_sq} is not a squared norm of Z^{dim}"
            )));
        }
        let expected = if dim == 1 {
            interval_len(radius_sq)
        } else {
            ball(dim, radius_sq).len()
        };
        if expected != labels.len() {
            return Err(Error::InvalidArgument(
                "label count does not match the ball".into(),
            ));
        }
        Ok(Patch {
            radius_sq,
            dim,
            labels,
        })
    }

    pub fn from_record(dim: usize, rec: &PatchRecord) -> Result<Self> {
        let shape = ball(dim, rec.s);
        if shape.len() != rec.cells.len()
            || shape
                .offsets()
                .zip(&rec.cells)
                .any(|(x, (y, _))| x != y.as_slice())
        {
            return Err(Error::InvalidArgument(
                "cells do not form the canonical ball".into(),
            ));
        }
        Patch::new(dim, rec.s, rec.cells.iter().map(|(_, l)| *l).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius_sq(&self) -> u64 {
        self.radius_sq
    }

    pub fn radius(&self) -> f64 {
        (self.radius_sq as f64).sqrt()
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> Arc<BallShape> {
        ball(self.dim, self.radius_sq)
    }

    pub fn cells(&self) -> Vec<(Vec<i64>, LabelId)> {
        self.shape()
            .offsets()
            .zip(&self.labels)
            .map(|(x, &l)| (x.to_vec(), l))
            .collect()
    }

    pub fn label_at_offset(&self, x: &[i64]) -> Option<LabelId> {
        if norm_sq(x) >= self.radius_sq {
            return None;
        }
        if self.dim == 1 {
            return Some(self.labels[(x[0] + self.labels.len() as i64 / 2) as usize]);
        }
        let shape = self.shape();
        let n = shape.len();
        // offsets are lexicographically sorted
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match shape.offset(mid).cmp(x) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(self.labels[mid]),
            }
        }
        None
    }

    /// Concentric sub-patch of canonical squared radius `s <= radius_sq`.
    pub fn restrict(&self, s: u64) -> Option<Patch> {
        if s > self.radius_sq || (s > 0 && !is_realized(self.dim, s)) {
            return None;
        }
        if self.dim == 1 && s > 0 {
            let cut = (self.labels.len() - interval_len(s)) / 2;
            return Some(Patch {
                radius_sq: s,
                dim: 1,
                labels: self.labels[cut..self.labels.len() - cut].to_vec(),
            });
        }
        let labels = self
            .shape()
            .offsets()
            .zip(&self.labels)
            .filter(|(x, _)| norm_sq(x) < s)
            .map(|(_, &l)| l)
            .collect();
        Some(Patch {
            radius_sq: s,
            dim: self.dim,
            labels,
        })
    }

    /// `inner ⊆ self` with both marked at the origin.
    pub fn contains_concentric(&self, inner: &Patch) -> bool {
        inner.dim == self.dim
            && inner.radius_sq <= self.radius_sq
            && self.restrict(inner.radius_sq).as_ref() == Some(inner)
    }

    pub fn to_record(&self) -> PatchRecord {
        PatchRecord {
            s: self.radius_sq,
            cells: self.cells(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("patch serializes")
    }

    /// First 16 hex digits of the SHA-256 of the JSON form. The JSON is
    /// streamed into the hash rather than built.
    pub fn digest(&self) -> String {
        use std::io::Write;
        let mut h = Sha256::new();
        let mut put = |bytes: &[u8]| h.update(bytes);
        put(format!("{{\"s\":{},\"cells\":[", self.radius_sq).as_bytes());
        let mut buf = Vec::with_capacity(64);
        let mut cell = |i: usize, x: &[i64], l: LabelId| {
            buf.clear();
            if i > 0 {
                buf.push(b',');
            }
            buf.extend_from_slice(b"[[");
            for (k, c) in x.iter().enumerate() {
                if k > 0 {
                    buf.push(b',');
                }
                write!(buf, "{c}").expect("in-memory write");
            }
            write!(buf, "],{l}]").expect("in-memory write");
            put(&buf);
        };
        if self.dim == 1 {
            let e = self.labels.len() as i64 / 2;
            for (i, &l) in self.labels.iter().enumerate() {
                cell(i, &[i as i64 - e], l);
            }
        } else {
            for (i, (x, &l)) in self.shape().offsets().zip(&self.labels).enumerate() {
                cell(i, x, l);
            }
        }
        h.update(b"]}");
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Human-readable pattern: the word for 1-d patches, a digest otherwise.
    pub fn pattern(&self, alphabet: &Alphabet) -> String {
        if self.dim == 1 && self.labels.len() <= 40 {
            if self.labels.is_empty() {
                return "∅".into();
            }
            self.labels.iter().map(|&l| alphabet.name(l)).collect()
        } else {
            self.digest()
        }
    }
}

impl fmt::Debug for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Patch(s={}, ", self.radius_sq)?;
        if self.dim == 1 {
            for &l in &self.labels {
                write!(f, "{l}")?;
            }
        } else {
            write!(f, "{}", self.digest())?;
        }
        write!(f, ")")
    }
}

impl Serialize for Patch {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

pub(crate) fn short_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Ball shape plus its index deltas in a window's row-major layout.
pub(crate) struct Stencil {
    pub shape: Arc<BallShape>,
    pub deltas: Vec<isize>,
}

impl Stencil {
    pub fn new(dim: usize, radius_sq: u64, window: &Window) -> Self {
        let shape = ball(dim, radius_sq);
        let deltas = shape.deltas(&window.strides());
        Stencil { shape, deltas }
    }

    pub fn read(&self, raw: &[LabelId], center: usize) -> Vec<LabelId> {
        self.deltas
            .iter()
            .map(|&d| raw[(center as isize + d) as usize])
            .collect()
    }

    /// Early-exit comparison in order of increasing distance from the center.
    pub fn matches(&self, raw: &[LabelId], center: usize, labels: &[LabelId]) -> bool {
        self.shape.match_order.iter().all(|&j| {
            let j = j as usize;
            raw[(center as isize + self.deltas[j]) as usize] == labels[j]
        })
    }
}

fn check_inside(oracle: &TilingOracle, window: &Window) -> Result<()> {
    if !oracle.window().contains_window(window) {
        let bad = if oracle.window().contains_coords(window.lo()) {
            window.hi().to_vec()
        } else {
            window.lo().to_vec()
        };
        return Err(Error::OutOfWindow(bad));
    }
    Ok(())
}

/// The patch at `center` with the smallest canonical squared radius
/// `>= s_min` (`s_min = 0` gives the empty patch).
pub fn concentric_patch(oracle: &TilingOracle, center: &Cell, s_min: u64) -> Result<Patch> {
    let d = oracle.dim();
    if center.dim() != d {
        return Err(Error::InvalidArgument("center dimension mismatch".into()));
    }
    if !oracle.window().contains(center) {
        return Err(Error::OutOfWindow(center.0.clone()));
    }
    if s_min == 0 {
        return Ok(Patch::empty(d));
    }
    let s = next_realized(d, s_min);
    let shape = ball(d, s);
    if !oracle
        .window()
        .contains_with_margin(center.coords(), shape.extent)
    {
        return Err(Error::OutOfWindow(center.0.clone()));
    }
    let stencil = Stencil::new(d, s, oracle.window());
    let idx = oracle.window().index_of(center.coords()).unwrap();
    Ok(Patch {
        radius_sq: s,
        dim: d,
        labels: stencil.read(oracle.raw(), idx),
    })
}

/// `L_p` restricted to a window: sites `y` with `y + dom(p)` inside the
/// window and matching labels, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccurrenceList {
    pub patch: Patch,
    pub window: Window,
    pub sites: Vec<Cell>,
}

impl OccurrenceList {
    pub fn new(patch: Patch, window: Window, mut sites: Vec<Cell>) -> Self {
        sites.sort();
        OccurrenceList {
            patch,
            window,
            sites,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

pub fn occurrences(oracle: &TilingOracle, p: &Patch, window: &Window) -> Result<OccurrenceList> {
    check_inside(oracle, window)?;
    let stencil = Stencil::new(p.dim, p.radius_sq, oracle.window());
    let e = stencil.shape.extent;
    let sites: Vec<Cell> = match window.shrink(e) {
        None => Vec::new(),
        Some(inner) => (0..inner.len())
            .into_par_iter()
            .filter_map(|i| {
                let c = inner.coords_of(i);
                let idx = oracle.window().index_of(&c).unwrap();
                stencil
                    .matches(oracle.raw(), idx, &p.labels)
                    .then_some(Cell(c))
            })
            .collect(),
    };
    Ok(OccurrenceList::new(p.clone(), window.clone(), sites))
}

/// [`occurrences`] for many patches at once: one pass over the window per
/// distinct radius. A rolling hash of every row screens the sites and the
/// exact block keys confirm them.
pub fn occurrences_batch(
    oracle: &TilingOracle,
    patches: &[Patch],
    window: &Window,
) -> Result<Vec<OccurrenceList>> {
    check_inside(oracle, window)?;
    let ow = oracle.window();
    let strides = ow.strides();
    let raw = oracle.raw();
    let mut blocks = RowBlocks::new(raw, ow);
    let hasher = RowHasher::new(raw);
    let mut by_radius: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, p) in patches.iter().enumerate() {
        by_radius.entry(p.radius_sq).or_default().push(i);
    }
    let mut sites: Vec<Vec<Cell>> = vec![Vec::new(); patches.len()];
    for (s, members) in by_radius {
        let stencil = Stencil::new(oracle.dim(), s, ow);
        let Some(inner) = window.shrink(stencil.shape.extent) else {
            continue;
        };
        if s == 0 {
            for &m in &members {
                sites[m] = inner.cells().collect();
            }
            continue;
        }
        let rows = RowBlocks::rows(&stencil.shape, &strides);
        blocks.prepare(&rows);
        let mut wanted: HashMap<u64, Vec<usize>> = HashMap::new();
        for &m in &members {
            wanted
                .entry(RowHasher::of_labels(&patches[m].labels, &rows))
                .or_default()
                .push(m);
        }
        let mask = (4 * wanted.len()).next_power_of_two().max(1024) - 1;
        let mut filter = vec![false; mask + 1];
        for h in wanted.keys() {
            filter[*h as usize & mask] = true;
        }
        let mut keys: HashMap<usize, Vec<u32>> = HashMap::new();
        for idx in indices_within(ow, &inner) {
            let h = hasher.of_ball(idx, &rows);
            if !filter[h as usize & mask] {
                continue;
            }
            let Some(cands) = wanted.get(&h) else {
                continue;
            };
            for &m in cands {
                let hit = match keys.get(&m) {
                    Some(k) => blocks.key(idx, &rows) == *k,
                    None => {
                        let ok = stencil.matches(raw, idx, &patches[m].labels);
                        if ok {
                            keys.insert(m, blocks.key(idx, &rows));
                        }
                        ok
                    }
                };
                if hit {
                    sites[m].push(Cell(ow.coords_of(idx)));
                }
            }
        }
    }
    Ok(patches
        .iter()
        .zip(sites)
        .map(|(p, s)| OccurrenceList::new(p.clone(), window.clone(), s))
        .collect())
}

/// Indices in `outer` of the cells of `inner`, in row-major order.
fn indices_within<'a>(outer: &'a Window, inner: &'a Window) -> impl Iterator<Item = usize> + 'a {
    let d = inner.dim();
    let run = inner.extent(d - 1);
    let heads = inner.len() / run;
    (0..heads).flat_map(move |h| {
        let mut c = inner.coords_of(h * run);
        c[d - 1] = inner.lo()[d - 1];
        let start = outer.index_of(&c).unwrap();
        start..start + run
    })
}

/// Polynomial hashes of contiguous runs of labels, modulo `2^61 - 1`.
struct RowHasher {
    prefix: Vec<u64>,
    powers: Vec<u64>,
}

impl RowHasher {
    const MOD: u64 = (1 << 61) - 1;
    const BASE: u64 = 0x1f3d_5b79_a2c4_e681 % Self::MOD;
    const FOLD: u64 = 0x2545_f491_4f6c_dd1d % Self::MOD;

    fn mul(a: u64, b: u64) -> u64 {
        let p = a as u128 * b as u128;
        let r = (p as u64 & Self::MOD) + (p >> 61) as u64;
        if r >= Self::MOD {
            r - Self::MOD
        } else {
            r
        }
    }

    fn add(a: u64, b: u64) -> u64 {
        let r = a + b;
        if r >= Self::MOD {
            r - Self::MOD
        } else {
            r
        }
    }

    fn new(raw: &[LabelId]) -> Self {
        let mut prefix = Vec::with_capacity(raw.len() + 1);
        let mut powers = Vec::with_capacity(raw.len() + 1);
        prefix.push(0);
        powers.push(1);
        for (i, &l) in raw.iter().enumerate() {
            prefix.push(Self::add(Self::mul(prefix[i], Self::BASE), l as u64 + 1));
            powers.push(Self::mul(powers[i], Self::BASE));
        }
        RowHasher { prefix, powers }
    }

    fn run(&self, start: usize, len: usize) -> u64 {
        let high = Self::mul(self.prefix[start], self.powers[len]);
        Self::add(self.prefix[start + len], Self::MOD - high)
    }

    fn of_ball(&self, center: usize, rows: &[(isize, usize)]) -> u64 {
        rows.iter().fold(0, |h, &(delta, len)| {
            Self::add(
                Self::mul(h, Self::FOLD),
                self.run((center as isize + delta) as usize, len),
            )
        })
    }

    fn of_labels(labels: &[LabelId], rows: &[(isize, usize)]) -> u64 {
        let mut at = 0;
        rows.iter().fold(0, |h, &(_, len)| {
            let run = labels[at..at + len]
                .iter()
                .fold(0, |r, &l| Self::add(Self::mul(r, Self::BASE), l as u64 + 1));
            at += len;
            Self::add(Self::mul(h, Self::FOLD), run)
        })
    }
}

/// Packing and covering radii of an occurrence set. Squared distances are
/// kept exactly; the radii are half the square roots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiiStats {
    pub r_pack: f64,
    pub r_cov: f64,
    /// Smallest squared distance between two sites of the primary list.
    pub min_dist_sq: u64,
    /// Largest squared nearest-neighbour distance over sites of the larger
    /// list whose nearest neighbour is certainly inside its window.
    pub max_nn_sq: u64,
    pub stable: bool,
    pub sites: usize,
    pub reliable_sites: usize,
}

/// Below this many sites, distances in two or more dimensions are found by
/// comparing all pairs instead of scanning shells.
const PAIRWISE_SITES: usize = 2048;

/// Nearest-neighbour squared distances; `None` where the answer could lie
/// outside the window (no site found within the distance to the outside).
fn nearest_neighbours(list: &OccurrenceList) -> Vec<Option<u64>> {
    let w = &list.window;
    if w.dim() == 1 {
        let xs: Vec<i64> = list.sites.iter().map(|c| c.0[0]).collect();
        return xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let left = (i > 0).then(|| x - xs[i - 1]);
                let right = xs.get(i + 1).map(|&y| y - x);
                let nn = match (left, right) {
                    (Some(a), Some(b)) => a.min(b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => return None,
                };
                (nn <= w.distance_to_outside(&[x])).then_some((nn * nn) as u64)
            })
            .collect();
    }
    if list.sites.len() <= PAIRWISE_SITES {
        return list
            .sites
            .par_iter()
            .map(|c| {
                let out = w.distance_to_outside(c.coords());
                let nn = list
                    .sites
                    .iter()
                    .filter(|&z| z != c)
                    .map(|z| norm_sq(&c.sub(z.coords()).0))
                    .min()?;
                (nn <= (out * out) as u64).then_some(nn)
            })
            .collect();
    }
    let mut present = vec![false; w.len()];
    for c in &list.sites {
        present[w.index_of(c.coords()).unwrap()] = true;
    }
    let max_norm = (w.min_extent() as u64).pow(2);
    let offsets = SortedOffsets::new(w.dim(), max_norm);
    list.sites
        .par_iter()
        .map(|c| {
            let out = w.distance_to_outside(c.coords());
            let limit = (out * out) as u64;
            for (n, a) in offsets.iter() {
                if n > limit {
                    break;
                }
                let z = c.add(a);
                if let Some(i) = w.index_of(z.coords()) {
                    if present[i] {
                        return Some(n);
                    }
                }
            }
            None
        })
        .collect()
}

fn min_pair_dist_sq(list: &OccurrenceList) -> Option<u64> {
    let w = &list.window;
    if list.sites.len() < 2 {
        return None;
    }
    if w.dim() == 1 {
        return list
            .sites
            .windows(2)
            .map(|p| ((p[1].0[0] - p[0].0[0]).pow(2)) as u64)
            .min();
    }
    if list.sites.len() <= PAIRWISE_SITES {
        let sites = &list.sites;
        return (0..sites.len())
            .into_par_iter()
            .filter_map(|i| {
                sites[i + 1..]
                    .iter()
                    .map(|z| norm_sq(&sites[i].sub(z.coords()).0))
                    .min()
            })
            .min();
    }
    let mut present = vec![false; w.len()];
    for c in &list.sites {
        present[w.index_of(c.coords()).unwrap()] = true;
    }
    let max_norm = norm_sq(&(0..w.dim()).map(|a| w.extent(a) as i64).collect::<Vec<_>>());
    let mut best = u64::MAX;
    for c in &list.sites {
        for (n, a) in crate::geometry::ShellIter::new(w.dim(), max_norm.min(best.saturating_sub(1)))
        {
            if n >= best {
                break;
            }
            if let Some(i) = w.index_of(c.add(&a).coords()) {
                if present[i] {
                    best = n;
                    break;
                }
            }
        }
    }
    (best < u64::MAX).then_some(best)
}

/// `r_pack` from `occ`, `r_cov` from `doubled` (a window at least twice the
/// span), `stable` when both lists give the same packing radius.
pub fn radii_stats(occ: &OccurrenceList, doubled: &OccurrenceList) -> Result<RadiiStats> {
    let min_sq = min_pair_dist_sq(occ).ok_or(Error::TooFewOccurrences)?;
    let min_sq_doubled = min_pair_dist_sq(doubled);
    let nn = nearest_neighbours(doubled);
    let reliable: Vec<u64> = nn.iter().flatten().copied().collect();
    let max_nn_sq = *reliable.iter().max().ok_or(Error::TooFewOccurrences)?;
    Ok(RadiiStats {
        r_pack: (min_sq as f64).sqrt() / 2.0,
        r_cov: (max_nn_sq as f64).sqrt() / 2.0,
        min_dist_sq: min_sq,
        max_nn_sq,
        stable: min_sq_doubled == Some(min_sq),
        sites: occ.len(),
        reliable_sites: reliable.len(),
    })
}

/// Concentric patch classes of every site in a region, refined radius by
/// radius up to `s_max`.
pub(crate) struct Census {
    /// Sites whose `s_max` ball fits in the analysed window.
    pub region: Window,
    pub levels: Vec<CensusLevel>,
}

pub(crate) struct CensusLevel {
    pub radius_sq: u64,
    /// Class id per region index.
    pub ids: Vec<u32>,
    /// Region index of the first site of each class.
    pub reps: Vec<usize>,
}

pub(crate) fn census(oracle: &TilingOracle, s_max: u64, window: &Window) -> Result<Census> {
    check_inside(oracle, window)?;
    let d = oracle.dim();
    let radii = realized_up_to(d, s_max);
    let e = radii.last().map(|&s| ball(d, s).extent).unwrap_or(0);
    let region = window
        .shrink(e)
        .ok_or_else(|| Error::OutOfWindow(window.lo().to_vec()))?;
    let n = region.len();
    let tw = oracle.window();
    let centers: Vec<usize> = (0..n)
        .map(|i| tw.index_of(&region.coords_of(i)).unwrap())
        .collect();
    let mut levels = vec![CensusLevel {
        radius_sq: 0,
        ids: vec![0; n],
        reps: if n > 0 { vec![0] } else { vec![] },
    }];
    let strides = tw.strides();
    let mut prev = 0u64;
    for &s in &radii {
        let shape = ball(d, s);
        let shell: Vec<isize> = shape
            .offsets()
            .filter(|x| norm_sq(x) >= prev)
            .map(|x| x.iter().zip(&strides).map(|(a, b)| a * b).sum::<i64>() as isize)
            .collect();
        let last = levels.last().unwrap();
        let mut table: HashMap<(u32, Vec<LabelId>), u32> = HashMap::new();
        let mut ids = Vec::with_capacity(n);
        let mut reps = Vec::new();
        for (i, &c) in centers.iter().enumerate() {
            let key: Vec<LabelId> = shell
                .iter()
                .map(|&dl| oracle.raw()[(c as isize + dl) as usize])
                .collect();
            let next = table.len() as u32;
            let id = *table.entry((last.ids[i], key)).or_insert_with(|| {
                reps.push(i);
                next
            });
            ids.push(id);
        }
        levels.push(CensusLevel {
            radius_sq: s,
            ids,
            reps,
        });
        prev = s;
    }
    Ok(Census { region, levels })
}

impl Census {
    pub fn patch(&self, oracle: &TilingOracle, level: usize, class: u32) -> Patch {
        let lv = &self.levels[level];
        let site = Cell(self.region.coords_of(lv.reps[class as usize]));
        concentric_patch(oracle, &site, lv.radius_sq).expect("census site fits")
    }

    /// Smallest squared distance between two sites of each class (None for
    /// classes seen once).
    pub fn min_pair_dist_sq(&self, level: usize) -> Vec<Option<u64>> {
        let lv = &self.levels[level];
        let classes = lv.reps.len();
        let mut best = vec![u64::MAX; classes];
        let r = &self.region;
        if r.dim() == 1 {
            let mut last: Vec<Option<i64>> = vec![None; classes];
            for (i, &id) in lv.ids.iter().enumerate() {
                let x = i as i64;
                if let Some(p) = last[id as usize] {
                    best[id as usize] = best[id as usize].min(((x - p) * (x - p)) as u64);
                }
                last[id as usize] = Some(x);
            }
        } else {
            let span: Vec<i64> = (0..r.dim()).map(|a| r.extent(a) as i64).collect();
            let offsets = SortedOffsets::new(r.dim(), norm_sq(&span));
            for i in 0..lv.ids.len() {
                let id = lv.ids[i] as usize;
                let y = r.coords_of(i);
                for (n, a) in offsets.iter() {
                    if n >= best[id] {
                        break;
                    }
                    // half space: first nonzero coordinate positive
                    if a.iter().find(|&&t| t != 0).is_some_and(|&t| t < 0) {
                        continue;
                    }
                    let z: Vec<i64> = y.iter().zip(a).map(|(p, q)| p + q).collect();
                    if let Some(j) = r.index_of(&z) {
                        if lv.ids[j] as usize == id {
                            best[id] = n;
                            break;
                        }
                    }
                }
            }
        }
        best.into_iter()
            .map(|b| (b < u64::MAX).then_some(b))
            .collect()
    }
}

/// Distinct patches of canonical squared radius `<= s_max` seen at sites of
/// the window whose `s_max` ball fits, grouped by squared radius.
pub fn distinct_patches(
    oracle: &TilingOracle,
    s_max: u64,
    window: &Window,
) -> Result<BTreeMap<u64, BTreeSet<Patch>>> {
    let c = census(oracle, s_max, window)?;
    let mut out = BTreeMap::new();
    for (li, lv) in c.levels.iter().enumerate() {
        let set: BTreeSet<Patch> = (0..lv.reps.len() as u32)
            .map(|k| c.patch(oracle, li, k))
            .collect();
        if !set.is_empty() {
            out.insert(lv.radius_sq, set);
        }
    }
    Ok(out)
}
