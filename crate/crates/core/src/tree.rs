//! Derived patches and the tree of privileged patches.
//!
//! Derivation at a site only needs the squared radius of the smallest
//! origin-centred ball that swallows a translate `a + dom(p)` of the
//! patch domain. For a translate by `a` that is `h(a) + 1` rounded up to a
//! realized norm, where `h(a) = max |a + x|^2` over the domain; so the
//! derived radius is fixed by the occurrence `a != 0` minimising `h(a)`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::RowBlocks;
use crate::error::{Error, Partial, Result};
use crate::geometry::{ball, extent_of, next_realized, BallShape, SortedOffsets};
use crate::lattice::{Alphabet, Cell, LabelId, TilingOracle, Window};
use crate::patch::{concentric_patch, occurrences, Patch, PatchRecord};

pub type VertexId = usize;

const UNKNOWN: u32 = u32::MAX;

/// Occurrence lists up to this length are searched pairwise in dimension
/// two and up; longer ones fall back to the offset scan.
const PAIRWISE_MAX: usize = 512;

/// A ball of fixed radius laid over a row-major label array. In dimension
/// one the ball is an interval and no shape is materialized.
pub(crate) struct Footprint {
    pub extent: i64,
    radius_sq: u64,
    shape: Option<Arc<BallShape>>,
    deltas: Vec<isize>,
}

impl Footprint {
    pub fn new(dim: usize, radius_sq: u64, window: &Window) -> Self {
        let extent = extent_of(radius_sq);
        if dim == 1 {
            return Footprint {
                extent,
                radius_sq,
                shape: None,
                deltas: Vec::new(),
            };
        }
        let shape = ball(dim, radius_sq);
        let deltas = shape.deltas(&window.strides());
        Footprint {
            extent,
            radius_sq,
            shape: Some(shape),
            deltas,
        }
    }

    fn span(&self, center: usize) -> std::ops::Range<usize> {
        if self.radius_sq == 0 {
            return center..center;
        }
        let e = self.extent as usize;
        center - e..center + e + 1
    }

    fn enclosing_sq(&self, a: &[i64]) -> u64 {
        match &self.shape {
            Some(sh) => sh.enclosing_sq(a),
            None => {
                let t = a[0].unsigned_abs() + self.extent as u64;
                t * t
            }
        }
    }

    fn lower_bound(&self, a: &[i64]) -> u64 {
        match &self.shape {
            Some(sh) => sh.enclosing_lower_bound(a),
            None => self.enclosing_sq(a),
        }
    }

    pub fn read(&self, raw: &[LabelId], center: usize) -> Vec<LabelId> {
        match &self.shape {
            None => raw[self.span(center)].to_vec(),
            Some(_) => self
                .deltas
                .iter()
                .map(|&d| raw[(center as isize + d) as usize])
                .collect(),
        }
    }

    fn matches(&self, raw: &[LabelId], center: usize, labels: &[LabelId]) -> bool {
        match &self.shape {
            None => raw[self.span(center)] == *labels,
            Some(sh) => sh.match_order.iter().all(|&j| {
                let j = j as usize;
                raw[(center as isize + self.deltas[j]) as usize] == labels[j]
            }),
        }
    }

    /// Lexicographic comparison of the two balls' label lists.
    fn cmp(&self, raw: &[LabelId], c1: usize, c2: usize) -> Ordering {
        match &self.shape {
            None => raw[self.span(c1)].cmp(&raw[self.span(c2)]),
            Some(_) => self
                .deltas
                .iter()
                .map(|&d| raw[(c1 as isize + d) as usize].cmp(&raw[(c2 as isize + d) as usize]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal),
        }
    }

    fn rows(&self, strides: &[i64]) -> Vec<(isize, usize)> {
        match &self.shape {
            None => vec![(-(self.extent as isize), 2 * self.extent as usize + 1)],
            Some(sh) => RowBlocks::rows(sh, strides),
        }
    }
}

/// Minimal `h(a)` over occurrences `z = y + a`, `a != 0`.
///
/// `occurs(z)` answers `None` when the question cannot be settled inside
/// the data at hand; the search then gives up rather than guess.
fn best_enclosing(
    fp: &Footprint,
    offsets: &SortedOffsets,
    y: &[i64],
    mut occurs: impl FnMut(&[i64]) -> Option<bool>,
) -> Option<u64> {
    let e2 = (fp.extent * fp.extent) as u64;
    let mut best = u64::MAX;
    let mut z = y.to_vec();
    let mut finished = false;
    for (n, a) in offsets.iter() {
        if n + e2 >= best {
            finished = true;
            break;
        }
        if fp.lower_bound(a) >= best {
            continue;
        }
        let h = fp.enclosing_sq(a);
        if h >= best {
            continue;
        }
        for (zi, (yi, ai)) in z.iter_mut().zip(y.iter().zip(a)) {
            *zi = yi + ai;
        }
        match occurs(&z) {
            Some(true) => best = h,
            Some(false) => {}
            None => return None,
        }
    }
    if !finished && best > offsets.max_norm() + 1 + e2 {
        return None;
    }
    (best < u64::MAX).then_some(best)
}

fn offsets_for(window: &Window) -> SortedOffsets {
    let span: Vec<i64> = (0..window.dim()).map(|a| window.extent(a) as i64).collect();
    SortedOffsets::new(window.dim(), crate::lattice::norm_sq(&span))
}

fn derived_radius_in(
    oracle: &TilingOracle,
    offsets: &SortedOffsets,
    site: &Cell,
    p: &Patch,
) -> Option<u64> {
    let w = oracle.window();
    let fp = Footprint::new(p.dim(), p.radius_sq(), w);
    let e = fp.extent;
    let best = best_enclosing(&fp, offsets, site.coords(), |z| {
        if !w.contains_with_margin(z, e) {
            return None;
        }
        Some(fp.matches(oracle.raw(), w.index_of(z).unwrap(), p.labels()))
    })?;
    let s = next_realized(p.dim(), best + 1);
    w.contains_with_margin(site.coords(), extent_of(s))
        .then_some(s)
}

/// The derived patch of `p` at a site where `p` occurs: the smallest
/// concentric extension containing a second occurrence of `p`.
pub fn derived_at(oracle: &TilingOracle, site: &Cell, p: &Patch) -> Result<Patch> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(
            "the empty patch has no derived patch".into(),
        ));
    }
    if p.dim() != oracle.dim() || site.dim() != oracle.dim() {
        return Err(Error::DifferentDimensions(p.dim(), oracle.dim()));
    }
    if concentric_patch(oracle, site, p.radius_sq())? != *p {
        return Err(Error::InvalidArgument(format!(
            "patch does not occur at {site}"
        )));
    }
    let offsets = offsets_for(oracle.window());
    let s = derived_radius_in(oracle, &offsets, site, p).ok_or_else(|| Error::exhausted(0))?;
    concentric_patch(oracle, site, s)
}

#[derive(Clone, Debug)]
pub struct DerivedSet {
    pub patches: Vec<Patch>,
    /// Occurrences whose derivation would leave the window.
    pub skipped: usize,
}

/// Derived patches of `p` over its occurrences in `window`, deduplicated
/// and sorted.
pub fn derived_set(oracle: &TilingOracle, p: &Patch, window: &Window) -> Result<DerivedSet> {
    let occ = occurrences(oracle, p, window)?;
    if occ.is_empty() {
        return Err(Error::NoInteriorSites);
    }
    let sub = TilingOracle::from_fn(
        oracle.alphabet().clone(),
        window.clone(),
        oracle.provenance(),
        |c| oracle.raw()[oracle.window().index_of(c).unwrap()],
    )?;
    let offsets = offsets_for(window);
    let results: Vec<Option<Patch>> = occ
        .sites
        .par_iter()
        .map(|y| {
            let s = derived_radius_in(&sub, &offsets, y, p)?;
            concentric_patch(&sub, y, s).ok()
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let mut patches: Vec<Patch> = results.into_iter().flatten().collect();
    patches.sort();
    patches.dedup();
    if patches.is_empty() && skipped == 0 {
        return Err(Error::NoInteriorSites);
    }
    Ok(DerivedSet { patches, skipped })
}

/// A privileged patch of the tree. Its labels are not stored; the tree
/// reads them back from the oracle at [`first_site`](Self::first_site).
#[derive(Clone, Debug)]
pub struct TreeVertex {
    pub order: usize,
    radius_sq: u64,
    pub parent: Option<VertexId>,
    pub children: Vec<VertexId>,
    /// Sites of the build window recognised as occurrences at this order.
    pub sites: usize,
    pub first_site: Cell,
    center: usize,
}

impl TreeVertex {
    pub fn radius_sq(&self) -> u64 {
        self.radius_sq
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub vertices: usize,
    pub sites: usize,
    pub skipped: usize,
    pub min_children: usize,
    pub max_children: usize,
    pub single_child: usize,
    /// Vertices left without children although a deeper level exists.
    pub open: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Keep growing past vertices whose occurrences all ran out of window.
    pub lenient: bool,
}

#[derive(Clone)]
pub struct PrivilegedTree {
    oracle: Arc<TilingOracle>,
    window: Window,
    vertices: Vec<TreeVertex>,
    keys: Vec<OnceLock<String>>,
    levels: Vec<Vec<VertexId>>,
    skipped: Vec<usize>,
    /// Per level, the vertex recognised at each cell of the window.
    site_vertex: Vec<Vec<u32>>,
    complete_depth: usize,
    tag: String,
}

impl std::fmt::Debug for PrivilegedTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrivilegedTree")
            .field("window", &self.window)
            .field("depth", &self.depth())
            .field("complete_depth", &self.complete_depth)
            .field(
                "level_sizes",
                &self.levels.iter().map(Vec::len).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl PrivilegedTree {
    pub fn root(&self) -> VertexId {
        0
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.oracle.alphabet()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn provenance(&self) -> &str {
        self.oracle.provenance()
    }

    /// Identifies the tree; paths from different trees never compare.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Deepest level built.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Deepest level down to which every vertex above has its children.
    pub fn complete_depth(&self) -> usize {
        self.complete_depth
    }

    /// Vertices above the deepest level that received no children.
    pub fn open_vertices(&self) -> Vec<VertexId> {
        let depth = self.depth();
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].order < depth && self.vertices[v].children.is_empty())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, v: VertexId) -> &TreeVertex {
        &self.vertices[v]
    }

    pub fn vertices(&self) -> &[TreeVertex] {
        &self.vertices
    }

    /// The patch of a vertex, read back from the oracle.
    pub fn patch(&self, v: VertexId) -> Patch {
        let tv = &self.vertices[v];
        let d = self.dim();
        if tv.radius_sq == 0 {
            return Patch::empty(d);
        }
        let ow = self.oracle.window();
        let labels = Footprint::new(d, tv.radius_sq, ow).read(self.oracle.raw(), tv.center);
        Patch::new(d, tv.radius_sq, labels).expect("canonical ball")
    }

    /// Stable identifier: digest of the serialized patch.
    pub fn key(&self, v: VertexId) -> &str {
        self.keys[v].get_or_init(|| self.patch(v).digest())
    }

    pub fn pattern(&self, v: VertexId) -> String {
        self.patch(v).pattern(self.alphabet())
    }

    pub fn level(&self, n: usize) -> &[VertexId] {
        self.levels.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn levels(&self) -> &[Vec<VertexId>] {
        &self.levels
    }

    pub fn find(&self, p: &Patch) -> Option<VertexId> {
        self.levels.iter().find_map(|lv| {
            lv.binary_search_by(|&v| self.patch(v).cmp(p))
                .ok()
                .map(|i| lv[i])
        })
    }

    pub fn find_key(&self, key: &str) -> Option<VertexId> {
        (0..self.vertices.len()).find(|&v| self.key(v) == key)
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.vertices[v].parent
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        &self.vertices[v].children
    }

    pub fn radius_sq(&self, v: VertexId) -> u64 {
        self.vertices[v].radius_sq
    }

    pub fn order(&self, v: VertexId) -> usize {
        self.vertices[v].order
    }

    /// Vertices from the root down to `v`.
    pub fn ancestry(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.vertices[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn level_stats(&self) -> Vec<LevelStats> {
        self.levels
            .iter()
            .enumerate()
            .map(|(n, lv)| {
                let kids: Vec<usize> = lv
                    .iter()
                    .map(|&v| self.vertices[v].children.len())
                    .collect();
                let deepest = n == self.depth();
                let pick = |x: Option<usize>| if deepest { 0 } else { x.unwrap_or(0) };
                LevelStats {
                    level: n,
                    vertices: lv.len(),
                    sites: lv.iter().map(|&v| self.vertices[v].sites).sum(),
                    skipped: self.skipped.get(n).copied().unwrap_or(0),
                    min_children: pick(kids.iter().copied().min()),
                    max_children: pick(kids.iter().copied().max()),
                    single_child: pick(Some(kids.iter().filter(|&&k| k == 1).count())),
                    open: pick(Some(kids.iter().filter(|&&k| k == 0).count())),
                }
            })
            .collect()
    }

    /// The path recorded for a cell of the build window, as deep as the
    /// cell was classified.
    pub fn path_at_site(&self, site: &Cell) -> Option<BoundaryPath> {
        let idx = self.window.index_of(site.coords())?;
        let mut vs = Vec::new();
        for lv in &self.site_vertex {
            match lv[idx] {
                UNKNOWN => break,
                v => vs.push(v as VertexId),
            }
        }
        Some(self.boundary_path(vs))
    }

    /// Cells of the build window classified down to `level`.
    pub fn sites_at_level(&self, level: usize) -> Vec<Cell> {
        let Some(lv) = self.site_vertex.get(level) else {
            return Vec::new();
        };
        lv.iter()
            .enumerate()
            .filter(|(_, &v)| v != UNKNOWN)
            .map(|(i, _)| Cell(self.window.coords_of(i)))
            .collect()
    }

    pub fn boundary_path(&self, vertices: Vec<VertexId>) -> BoundaryPath {
        let radii_sq = vertices.iter().map(|&v| self.radius_sq(v)).collect();
        BoundaryPath {
            tag: self.tag.clone(),
            vertices,
            radii_sq,
        }
    }

    /// The root-to-leaf path through `v` that keeps taking the first child.
    pub fn leftmost_extension(&self, v: VertexId) -> BoundaryPath {
        let mut vs = self.ancestry(v);
        let mut cur = v;
        while let Some(&c) = self.vertices[cur].children.first() {
            vs.push(c);
            cur = c;
        }
        self.boundary_path(vs)
    }

    /// Map a path of patches onto tree vertices.
    pub fn locate(&self, path: &PatchPath) -> Option<BoundaryPath> {
        let first = path.patches.first()?;
        if !first.is_empty() {
            return None;
        }
        let mut vs = vec![self.root()];
        for p in &path.patches[1..] {
            let cur = *vs.last().unwrap();
            let next = self.vertices[cur]
                .children
                .iter()
                .copied()
                .find(|&c| self.radius_sq(c) == p.radius_sq() && self.patch(c) == *p)?;
            vs.push(next);
        }
        Some(self.boundary_path(vs))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph privileged_tree {\n  node [shape=box];\n");
        for (v, tv) in self.vertices.iter().enumerate() {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"n={} s={} {}\"];",
                self.key(v),
                tv.order,
                tv.radius_sq,
                self.pattern(v)
            );
            if let Some(p) = tv.parent {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", self.key(p), self.key(v));
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct V<'a> {
            id: &'a str,
            order: usize,
            s: u64,
            parent: Option<&'a str>,
            children: Vec<&'a str>,
            sites: usize,
            patch: PatchRecord,
        }
        #[derive(Serialize)]
        struct T<'a> {
            schema_version: u32,
            provenance: &'a str,
            alphabet: &'a [String],
            window: Vec<[i64; 2]>,
            depth: usize,
            complete_depth: usize,
            levels: Vec<LevelStats>,
            vertices: Vec<V<'a>>,
        }
        let t = T {
            schema_version: 1,
            provenance: self.provenance(),
            alphabet: self.alphabet().names(),
            window: self.window.bounds(),
            depth: self.depth(),
            complete_depth: self.complete_depth,
            levels: self.level_stats(),
            vertices: self
                .vertices
                .iter()
                .enumerate()
                .map(|(v, tv)| V {
                    id: self.key(v),
                    order: tv.order,
                    s: tv.radius_sq,
                    parent: tv.parent.map(|p| self.key(p)),
                    children: tv.children.iter().map(|&c| self.key(c)).collect(),
                    sites: tv.sites,
                    patch: self.patch(v).to_record(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&t)?)
    }

    fn truncate_to(&mut self, depth: usize) {
        self.levels.truncate(depth + 1);
        self.site_vertex.truncate(depth + 1);
        self.skipped.truncate(depth + 1);
        let keep = self.levels[depth].last().map_or(0, |&v| v + 1);
        self.vertices.truncate(keep);
        self.keys.truncate(keep);
        for v in &mut self.vertices {
            v.children.retain(|&c| c < keep);
        }
    }
}

fn tree_tag(provenance: &str, window: &Window) -> String {
    crate::patch::short_digest(format!("{provenance}|{window}").as_bytes())
}

type Class = (u32, u64, Vec<u32>, Vec<u32>);

struct Builder<'a> {
    oracle: &'a TilingOracle,
    window: Window,
    offsets: SortedOffsets,
    /// Oracle index of each window cell.
    oracle_index: Vec<usize>,
    blocks: RowBlocks,
    tree: PrivilegedTree,
}

impl Builder<'_> {
    fn new_vertex(
        &mut self,
        order: usize,
        radius_sq: u64,
        parent: Option<VertexId>,
        sites: &[u32],
    ) -> VertexId {
        let id = self.tree.vertices.len();
        let first = sites.first().copied().unwrap_or(0) as usize;
        self.tree.vertices.push(TreeVertex {
            order,
            radius_sq,
            parent,
            children: Vec::new(),
            sites: sites.len(),
            first_site: Cell(self.window.coords_of(first)),
            center: self.oracle_index[first],
        });
        self.tree.keys.push(OnceLock::new());
        if let Some(p) = parent {
            self.tree.vertices[p].children.push(id);
        }
        id
    }

    fn seed_levels(&mut self) {
        let n = self.window.len();
        let all: Vec<u32> = (0..n as u32).collect();
        self.new_vertex(0, 0, None, &all);
        self.tree.levels.push(vec![0]);
        self.tree.site_vertex.push(vec![0; n]);
        self.tree.skipped.push(0);

        let mut by_label: BTreeMap<LabelId, Vec<u32>> = BTreeMap::new();
        for (i, &oi) in self.oracle_index.iter().enumerate() {
            by_label
                .entry(self.oracle.raw()[oi])
                .or_default()
                .push(i as u32);
        }
        let mut level = Vec::new();
        let mut vid = vec![UNKNOWN; n];
        for sites in by_label.values() {
            let v = self.new_vertex(1, 1, Some(0), sites);
            for &s in sites {
                vid[s as usize] = v as u32;
            }
            level.push(v);
        }
        self.tree.levels.push(level);
        self.tree.site_vertex.push(vid);
        self.tree.skipped.push(0);
    }

    /// `h` of the nearest other occurrence of a level-`n` vertex seen from
    /// the site at oracle index `o`, given all its occurrences `occ`.
    ///
    /// Centers whose ball leaves the oracle cannot be judged. `h` is even
    /// and convex in each coordinate, so the best such a center could do
    /// is `h(c e_1)` with `c` its distance to the site along an axis; the
    /// answer stands only if it is no worse than that.
    fn nearest(&self, o: usize, fp: &Footprint, occ: &[u32]) -> Option<u64> {
        let ow = self.oracle.window();
        let e = fp.extent;
        let y = ow.coords_of(o);
        let c = ow.distance_to_outside(&y) - e;
        let mut axis = vec![0i64; y.len()];
        axis[0] = c;
        let undecided = fp.enclosing_sq(&axis);
        let best = if ow.dim() == 1 {
            let pos = occ
                .binary_search(&(o as u32))
                .expect("site among the occurrences");
            let prev = pos.checked_sub(1).map(|p| o - occ[p] as usize);
            let next = occ.get(pos + 1).map(|&j| j as usize - o);
            let d = prev.into_iter().chain(next).min()? as i64;
            fp.enclosing_sq(&[d])
        } else if occ.len() <= PAIRWISE_MAX {
            let mut a = vec![0i64; y.len()];
            let mut b = u64::MAX;
            for &j in occ {
                if j as usize == o {
                    continue;
                }
                for (ak, (zk, yk)) in a.iter_mut().zip(ow.coords_of(j as usize).iter().zip(&y)) {
                    *ak = zk - yk;
                }
                if fp.lower_bound(&a) < b {
                    b = b.min(fp.enclosing_sq(&a));
                }
            }
            b
        } else {
            let e2 = (e * e) as u64;
            let mut b = u64::MAX;
            let mut z = y.clone();
            for (n, a) in self.offsets.iter() {
                if n + e2 > b.min(undecided) {
                    break;
                }
                if fp.lower_bound(a) >= b {
                    continue;
                }
                for (zi, (yi, ai)) in z.iter_mut().zip(y.iter().zip(a)) {
                    *zi = yi + ai;
                }
                let hit = ow.contains_with_margin(&z, e)
                    && occ
                        .binary_search(&(ow.index_of(&z).unwrap() as u32))
                        .is_ok();
                if hit {
                    b = b.min(fp.enclosing_sq(a));
                }
            }
            b
        };
        (best <= undecided).then_some(best)
    }

    /// Footprints and row lists for a set of radii, with the block index
    /// made ready for them.
    fn footprints(
        &mut self,
        mut radii: Vec<u64>,
    ) -> HashMap<u64, (Footprint, Vec<(isize, usize)>)> {
        radii.sort_unstable();
        radii.dedup();
        let ow = self.oracle.window();
        let strides = ow.strides();
        let out: HashMap<u64, (Footprint, Vec<(isize, usize)>)> = radii
            .par_iter()
            .map(|&s| {
                let fp = Footprint::new(ow.dim(), s, ow);
                let rows = fp.rows(&strides);
                (s, (fp, rows))
            })
            .collect();
        for (_, rows) in out.values() {
            self.blocks.prepare(rows);
        }
        out
    }

    fn grow(&mut self, n: usize) -> Result<()> {
        let dim = self.window.dim();
        let ow = self.oracle.window();
        let level = self.tree.levels[n].clone();
        let base = level[0];
        let fps = self.footprints(level.iter().map(|&v| self.tree.radius_sq(v)).collect());
        let occ: Vec<Vec<u32>> = level
            .par_iter()
            .map(|&v| {
                let (fp, rows) = &fps[&self.tree.radius_sq(v)];
                let e = fp.extent;
                let fits = |z: usize| {
                    if dim == 1 {
                        z as i64 >= e && z as i64 + e < ow.len() as i64
                    } else {
                        ow.contains_with_margin(&ow.coords_of(z), e)
                    }
                };
                self.blocks
                    .matches(self.tree.vertices[v].center, rows, fits)
            })
            .collect();
        let vid = &self.tree.site_vertex[n];
        let sites: Vec<u32> = (0..vid.len() as u32)
            .filter(|&i| vid[i as usize] != UNKNOWN)
            .collect();
        let mut derived: Vec<(u32, u64, u32)> = sites
            .par_iter()
            .filter_map(|&i| {
                let i = i as usize;
                let v = vid[i];
                let loc = v as usize - base;
                let fp = &fps[&self.tree.radius_sq(v as usize)].0;
                let h = self.nearest(self.oracle_index[i], fp, &occ[loc])?;
                let s = next_realized(dim, h + 1);
                self.window
                    .contains_with_margin(&self.window.coords_of(i), extent_of(s))
                    .then_some((v, s, i as u32))
            })
            .collect();
        let skipped = sites.len() - derived.len();
        derived.par_sort_unstable();

        let shapes = self.footprints(derived.iter().map(|d| d.1).collect());
        let (blocks, oi, raw) = (&self.blocks, &self.oracle_index, self.oracle.raw());
        let mut keyed: Vec<(u32, u64, Vec<u32>, u32)> = derived
            .par_iter()
            .map(|&(v, s, i)| (v, s, blocks.key(oi[i as usize], &shapes[&s].1), i))
            .collect();
        keyed.par_sort_unstable();
        let mut classes: Vec<Class> = keyed
            .chunk_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2)
            .map(|g| {
                (
                    g[0].0,
                    g[0].1,
                    g[0].2.clone(),
                    g.iter().map(|x| x.3).collect(),
                )
            })
            .collect();
        let order = |a: &Class, b: &Class| {
            a.1.cmp(&b.1).then_with(|| {
                if a.2 == b.2 {
                    Ordering::Equal
                } else {
                    shapes[&a.1]
                        .0
                        .cmp(raw, oi[a.3[0] as usize], oi[b.3[0] as usize])
                }
            })
        };
        classes.sort_by(|a, b| order(a, b).then(a.0.cmp(&b.0)));
        if classes
            .windows(2)
            .any(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2)
        {
            return Err(Error::ParentConflict { level: n + 1 });
        }

        let mut level = Vec::with_capacity(classes.len());
        let mut next = vec![UNKNOWN; self.window.len()];
        for (parent, s, _, members) in classes {
            if s <= self.tree.radius_sq(parent as usize) {
                return Err(Error::InvalidArgument(format!(
                    "radius failed to grow at level {}",
                    n + 1
                )));
            }
            let v = self.new_vertex(n + 1, s, Some(parent as usize), &members);
            for &i in &members {
                next[i as usize] = v as u32;
            }
            level.push(v);
        }
        self.tree.levels.push(level);
        self.tree.site_vertex.push(next);
        self.tree.skipped.push(skipped);
        Ok(())
    }
}

/// Build the privileged-patch tree down to `depth` from the cells of
/// `window`. Fails with [`Error::WindowExhausted`] (carrying the complete
/// part) as soon as some vertex above `depth` gets no children.
pub fn build_tree(oracle: &TilingOracle, depth: usize, window: &Window) -> Result<PrivilegedTree> {
    build_tree_with(oracle, depth, window, BuildOptions::default())
}

/// Like [`build_tree`], but keeps every level that still has vertices.
/// Vertices that ran out of window stay open; see
/// [`PrivilegedTree::complete_depth`].
pub fn build_tree_lenient(
    oracle: &TilingOracle,
    depth: usize,
    window: &Window,
) -> Result<PrivilegedTree> {
    build_tree_with(oracle, depth, window, BuildOptions { lenient: true })
}

pub fn build_tree_with(
    oracle: &TilingOracle,
    depth: usize,
    window: &Window,
    opts: BuildOptions,
) -> Result<PrivilegedTree> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if window.dim() != oracle.dim() {
        return Err(Error::DifferentDimensions(window.dim(), oracle.dim()));
    }
    if !oracle.window().contains_window(window) {
        return Err(Error::OutOfWindow(window.hi().to_vec()));
    }
    let oracle_index = (0..window.len())
        .map(|i| oracle.window().index_of(&window.coords_of(i)).unwrap())
        .collect();
    let mut b = Builder {
        oracle,
        window: window.clone(),
        offsets: offsets_for(oracle.window()),
        oracle_index,
        blocks: RowBlocks::new(oracle.raw(), oracle.window()),
        tree: PrivilegedTree {
            oracle: Arc::new(oracle.clone()),
            window: window.clone(),
            vertices: Vec::new(),
            keys: Vec::new(),
            levels: Vec::new(),
            skipped: Vec::new(),
            site_vertex: Vec::new(),
            complete_depth: depth,
            tag: tree_tag(oracle.provenance(), window),
        },
    };
    b.seed_levels();
    let mut complete = None;
    for n in 1..depth {
        b.grow(n)?;
        let barren = b.tree.levels[n]
            .iter()
            .any(|&v| b.tree.vertices[v].children.is_empty());
        if barren {
            if !opts.lenient {
                b.tree.truncate_to(n);
                b.tree.complete_depth = n;
                return Err(Error::WindowExhausted {
                    level: n,
                    partial: Partial::Tree(Box::new(b.tree)),
                });
            }
            complete.get_or_insert(n);
        }
        if b.tree.levels[n + 1].is_empty() {
            b.tree.truncate_to(n);
            break;
        }
    }
    b.tree.complete_depth = complete.unwrap_or(b.tree.depth());
    Ok(b.tree)
}

/// Concentric privileged patches at one center, order 0 upwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPath {
    pub center: Cell,
    pub patches: Vec<Patch>,
}

impl PatchPath {
    pub fn depth(&self) -> usize {
        self.patches.len() - 1
    }

    pub fn radii_sq(&self) -> Vec<u64> {
        self.patches.iter().map(Patch::radius_sq).collect()
    }
}

pub fn path_at(oracle: &TilingOracle, center: &Cell, depth: usize) -> Result<PatchPath> {
    if !oracle.window().contains(center) {
        return Err(Error::OutOfWindow(center.0.clone()));
    }
    let mut path = PatchPath {
        center: center.clone(),
        patches: vec![Patch::empty(oracle.dim())],
    };
    if depth == 0 {
        return Ok(path);
    }
    path.patches.push(concentric_patch(oracle, center, 1)?);
    let offsets = offsets_for(oracle.window());
    for n in 1..depth {
        let p = path.patches.last().unwrap();
        match derived_radius_in(oracle, &offsets, center, p) {
            Some(s) => {
                let q = concentric_patch(oracle, center, s)?;
                path.patches.push(q);
            }
            None => {
                return Err(Error::WindowExhausted {
                    level: n,
                    partial: Partial::Path(path),
                })
            }
        }
    }
    Ok(path)
}

/// A truncated infinite rooted path of the tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryPath {
    pub tag: String,
    pub vertices: Vec<VertexId>,
    pub radii_sq: Vec<u64>,
}

impl BoundaryPath {
    /// Truncation depth `N` (the path is `ξ_0..ξ_N`).
    pub fn depth(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn truncate(&self, depth: usize) -> BoundaryPath {
        let k = (depth + 1).min(self.vertices.len());
        BoundaryPath {
            tag: self.tag.clone(),
            vertices: self.vertices[..k].to_vec(),
            radii_sq: self.radii_sq[..k].to_vec(),
        }
    }
}

/// `i` with `q = p^(i)` when `p` is concentrically contained in `q`.
pub fn derivation_index(tree: &PrivilegedTree, p: VertexId, q: VertexId) -> Option<usize> {
    if !tree.patch(q).contains_concentric(&tree.patch(p)) {
        return None;
    }
    ancestor_distance(tree, p, q)
}

fn ancestor_distance(tree: &PrivilegedTree, p: VertexId, q: VertexId) -> Option<usize> {
    let (op, oq) = (tree.order(p), tree.order(q));
    if op > oq {
        return None;
    }
    let mut cur = q;
    for _ in 0..oq - op {
        cur = tree.parent(cur)?;
    }
    (cur == p).then_some(oq - op)
}

/// Concentric containment agrees with ancestry for this pair.
pub fn containment_matches_ancestry(tree: &PrivilegedTree, p: VertexId, q: VertexId) -> bool {
    let contained = tree.patch(q).contains_concentric(&tree.patch(p));
    contained == ancestor_distance(tree, p, q).is_some()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlowChain {
    /// `p_0, ..., p_m` along tree edges.
    pub vertices: Vec<VertexId>,
    pub radii_sq: Vec<u64>,
}

impl SlowChain {
    pub fn m(&self) -> usize {
        self.vertices.len() - 1
    }
}

fn slow_depth(tree: &PrivilegedTree, v: VertexId, cap: u64, want: usize) -> (usize, Vec<VertexId>) {
    if want == 0 {
        return (0, vec![]);
    }
    let mut best = (0, vec![]);
    for &c in tree.children(v) {
        if tree.radius_sq(c) <= cap {
            let (d, mut tail) = slow_depth(tree, c, cap, want - 1);
            if d + 1 > best.0 {
                tail.insert(0, c);
                best = (d + 1, tail);
                if best.0 == want {
                    break;
                }
            }
        }
    }
    best
}

fn chain_from(tree: &PrivilegedTree, p1: VertexId, want: usize) -> Option<SlowChain> {
    let p0 = tree.parent(p1)?;
    let cap = 4 * tree.radius_sq(p1);
    let (_, tail) = slow_depth(tree, p1, cap, want);
    let mut vs = vec![p0, p1];
    vs.extend(tail);
    let radii_sq = vs.iter().map(|&v| tree.radius_sq(v)).collect();
    Some(SlowChain {
        vertices: vs,
        radii_sq,
    })
}

/// A chain `p_0, ..., p_m` of consecutive derivations with `r_m <= 2 r_1`
/// (compared as `s_m <= 4 s_1`).
pub fn find_slow_chain(tree: &PrivilegedTree, m: usize) -> Option<SlowChain> {
    if m == 0 {
        return None;
    }
    (1..tree.len())
        .filter_map(|p1| chain_from(tree, p1, m - 1))
        .find(|c| c.m() == m)
}

/// The longest slow chain in the built tree (earliest vertex on ties).
pub fn longest_slow_chain(tree: &PrivilegedTree) -> Option<SlowChain> {
    let depth = tree.depth();
    let chains: Vec<SlowChain> = (1..tree.len())
        .into_par_iter()
        .filter_map(|p1| chain_from(tree, p1, depth))
        .collect();
    chains.into_iter().rev().max_by_key(SlowChain::m)
}
