//! Substitution tilings: one-dimensional word substitutions (images of
//! any length) and constant-shape block substitutions in `Z^d`.
//!
//! A two-sided tiling is grown from a legal seed around the origin that is
//! fixed by some iterate of the rule.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lattice::{Alphabet, LabelId, TilingOracle, Window};

/// Largest iterate searched for a fixed seed.
const MAX_ITERATE: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordRule {
    alphabet: Alphabet,
    images: Vec<Vec<LabelId>>,
}

impl WordRule {
    pub fn new(alphabet: Alphabet, images: Vec<Vec<LabelId>>) -> Result<Self> {
        if images.len() != alphabet.len() {
            return Err(Error::InvalidConfig("one image per label required".into()));
        }
        for img in &images {
            if img.is_empty() {
                return Err(Error::InvalidConfig("empty image".into()));
            }
            if img.iter().any(|&l| l as usize >= alphabet.len()) {
                return Err(Error::InvalidConfig(
                    "image uses a label outside the alphabet".into(),
                ));
            }
        }
        Ok(WordRule { alphabet, images })
    }

    /// Rule from single-character names, e.g. `[("a","ab"),("b","a")]`.
    pub fn from_strs(rules: &[(&str, &str)]) -> Result<Self> {
        let alphabet = Alphabet::new(rules.iter().map(|(n, _)| *n))?;
        let images = rules
            .iter()
            .map(|(_, img)| {
                img.chars()
                    .map(|c| {
                        alphabet
                            .id(&c.to_string())
                            .ok_or_else(|| Error::InvalidConfig(format!("unknown letter `{c}`")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        WordRule::new(alphabet, images)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn image(&self, l: LabelId) -> &[LabelId] {
        &self.images[l as usize]
    }

    pub fn apply(&self, w: &[LabelId]) -> Vec<LabelId> {
        w.iter()
            .flat_map(|&l| self.images[l as usize].iter().copied())
            .collect()
    }
}

/// Constant-shape rule: every label maps to a `k^d` block, stored row-major
/// with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRule {
    alphabet: Alphabet,
    dim: usize,
    expansion: usize,
    images: Vec<Vec<LabelId>>,
}

impl BlockRule {
    pub fn new(
        alphabet: Alphabet,
        dim: usize,
        expansion: usize,
        images: Vec<Vec<LabelId>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be ≥ 1".into()));
        }
        if expansion < 2 {
            return Err(Error::InvalidConfig("expansion factor must be ≥ 2".into()));
        }
        if images.len() != alphabet.len() {
            return Err(Error::InvalidConfig("one image per label required".into()));
        }
        let block = expansion.pow(dim as u32);
        for img in &images {
            if img.len() != block {
                return Err(Error::InvalidConfig(format!(
                    "block image has {} cells, expected {block}",
                    img.len()
                )));
            }
            if img.iter().any(|&l| l as usize >= alphabet.len()) {
                return Err(Error::InvalidConfig(
                    "image uses a label outside the alphabet".into(),
                ));
            }
        }
        Ok(BlockRule {
            alphabet,
            dim,
            expansion,
            images,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expansion(&self) -> usize {
        self.expansion
    }

    pub fn image(&self, l: LabelId) -> &[LabelId] {
        &self.images[l as usize]
    }

    /// Substitute a block of the given shape once.
    fn apply(&self, shape: &[usize], cells: &[LabelId]) -> (Vec<usize>, Vec<LabelId>) {
        let k = self.expansion;
        let d = self.dim;
        let new_shape: Vec<usize> = shape.iter().map(|e| e * k).collect();
        let total: usize = new_shape.iter().product();
        let mut out = vec![0u8; total];
        let mut coord = vec![0usize; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut rem = i;
            for a in (0..d).rev() {
                coord[a] = rem % new_shape[a];
                rem /= new_shape[a];
            }
            let mut parent = 0usize;
            let mut inner = 0usize;
            for a in 0..d {
                parent = parent * shape[a] + coord[a] / k;
                inner = inner * k + coord[a] % k;
            }
            *o = self.images[cells[parent] as usize][inner];
        }
        (new_shape, out)
    }

    /// Label at the image corner selected by `corner` (bit `a` set means the
    /// high end of axis `a`).
    fn corner_label(&self, l: LabelId, corner: usize) -> LabelId {
        let k = self.expansion;
        let mut idx = 0usize;
        for a in 0..self.dim {
            let hi = corner >> (self.dim - 1 - a) & 1 == 1;
            idx = idx * k + if hi { k - 1 } else { 0 };
        }
        self.images[l as usize][idx]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubstitutionRule {
    Word(WordRule),
    Block(BlockRule),
}

impl SubstitutionRule {
    pub fn alphabet(&self) -> &Alphabet {
        match self {
            SubstitutionRule::Word(r) => &r.alphabet,
            SubstitutionRule::Block(r) => &r.alphabet,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SubstitutionRule::Word(_) => 1,
            SubstitutionRule::Block(r) => r.dim,
        }
    }

    fn images(&self) -> &[Vec<LabelId>] {
        match self {
            SubstitutionRule::Word(r) => &r.images,
            SubstitutionRule::Block(r) => &r.images,
        }
    }

    /// Some power of the incidence matrix is strictly positive. A single
    /// letter alphabet never counts as primitive here.
    pub fn is_primitive(&self) -> bool {
        let n = self.alphabet().len();
        if n < 2 {
            return false;
        }
        let mut m = vec![vec![false; n]; n];
        for (i, img) in self.images().iter().enumerate() {
            for &j in img {
                m[i][j as usize] = true;
            }
        }
        let mut p = m.clone();
        // Wielandt bound
        for _ in 0..(n - 1) * (n - 1) + 1 {
            if p.iter().all(|row| row.iter().all(|&x| x)) {
                return true;
            }
            let mut q = vec![vec![false; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if p[i][k] {
                        for j in 0..n {
                            q[i][j] |= m[k][j];
                        }
                    }
                }
            }
            p = q;
        }
        p.iter().all(|row| row.iter().all(|&x| x))
    }
}

/// Seed used to grow a two-sided fixed point: `iterate` applications of the
/// rule map the seed into a superset of itself around the origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedSeed {
    pub iterate: usize,
    /// Word rule: `[p, q]` with `p` at cell -1 and `q` at cell 0.
    /// Block rule: `2^d` labels for the cells of `{-1,0}^d`, row-major.
    pub labels: Vec<LabelId>,
}

fn periodic_points(f: &[LabelId], k: usize) -> Vec<LabelId> {
    (0..f.len() as LabelId)
        .filter(|&l| {
            let mut x = l;
            for _ in 0..k {
                x = f[x as usize];
            }
            x == l
        })
        .collect()
}

fn legal_pairs(rule: &WordRule) -> HashSet<(LabelId, LabelId)> {
    let mut pairs = HashSet::new();
    let mut w = vec![0];
    let mut stable_rounds = 0;
    while w.len() < 1 << 16 && stable_rounds < 3 {
        let before = pairs.len();
        pairs.extend(w.windows(2).map(|p| (p[0], p[1])));
        stable_rounds = if pairs.len() == before && w.len() > 64 {
            stable_rounds + 1
        } else {
            0
        };
        let next = rule.apply(&w);
        if next.len() == w.len() {
            break;
        }
        w = next;
    }
    pairs.extend(w.windows(2).map(|p| (p[0], p[1])));
    pairs
}

fn word_seed(rule: &WordRule) -> Result<FixedSeed> {
    let first: Vec<LabelId> = rule.images.iter().map(|i| i[0]).collect();
    let last: Vec<LabelId> = rule.images.iter().map(|i| *i.last().unwrap()).collect();
    let legal = legal_pairs(rule);
    for k in 1..=MAX_ITERATE {
        let ps = periodic_points(&last, k);
        let qs = periodic_points(&first, k);
        for &p in &ps {
            for &q in &qs {
                if legal.contains(&(p, q)) {
                    return Ok(FixedSeed {
                        iterate: k,
                        labels: vec![p, q],
                    });
                }
            }
        }
    }
    Err(Error::NoFixedSeed)
}

fn legal_blocks(rule: &BlockRule) -> HashSet<Vec<LabelId>> {
    let d = rule.dim;
    let mut shape = vec![1usize; d];
    let mut cells = vec![0u8];
    // grow until every side has at least 64 cells (or the block is large)
    while shape[0] < 64 && cells.len() < 1 << 20 {
        let (s, c) = rule.apply(&shape, &cells);
        shape = s;
        cells = c;
    }
    let corners = 1usize << d;
    let mut out = HashSet::new();
    let total: usize = shape.iter().map(|e| e - 1).product();
    let mut base = vec![0usize; d];
    for i in 0..total {
        let mut rem = i;
        for a in (0..d).rev() {
            base[a] = rem % (shape[a] - 1);
            rem /= shape[a] - 1;
        }
        let block: Vec<LabelId> = (0..corners)
            .map(|c| {
                let mut idx = 0usize;
                for a in 0..d {
                    let bit = c >> (d - 1 - a) & 1;
                    idx = idx * shape[a] + base[a] + bit;
                }
                cells[idx]
            })
            .collect();
        out.insert(block);
    }
    out
}

fn block_seed(rule: &BlockRule) -> Result<FixedSeed> {
    let d = rule.dim;
    let corners = 1usize << d;
    let n = rule.alphabet.len();
    // seed cell with bit a = 0 sits at coordinate -1 on axis a and must be
    // reproduced by the high corner of its image; bit 1 (coordinate 0) by
    // the low corner
    let corner_maps: Vec<Vec<LabelId>> = (0..corners)
        .map(|c| {
            let image_corner = !c & (corners - 1);
            (0..n as LabelId)
                .map(|l| rule.corner_label(l, image_corner))
                .collect()
        })
        .collect();
    let legal = legal_blocks(rule);
    for k in 1..=MAX_ITERATE {
        let options: Vec<Vec<LabelId>> =
            corner_maps.iter().map(|f| periodic_points(f, k)).collect();
        if options.iter().any(|o| o.is_empty()) {
            continue;
        }
        let combos: usize = options.iter().map(|o| o.len()).product();
        for i in 0..combos {
            let mut rem = i;
            let mut seed = vec![0u8; corners];
            for c in (0..corners).rev() {
                seed[c] = options[c][rem % options[c].len()];
                rem /= options[c].len();
            }
            if legal.contains(&seed) {
                return Ok(FixedSeed {
                    iterate: k,
                    labels: seed,
                });
            }
        }
    }
    Err(Error::NoFixedSeed)
}

pub fn find_seed(rule: &SubstitutionRule) -> Result<FixedSeed> {
    if !rule.is_primitive() {
        return Err(Error::NotPrimitive);
    }
    match rule {
        SubstitutionRule::Word(r) => word_seed(r),
        SubstitutionRule::Block(r) => block_seed(r),
    }
}

/// Oracle agreeing with the two-sided fixed point grown from
/// [`find_seed`] on `window`.
pub fn build_substitution_oracle(rule: &SubstitutionRule, window: &Window) -> Result<TilingOracle> {
    if window.dim() != rule.dim() {
        return Err(Error::InvalidArgument(format!(
            "window has dimension {}, rule has {}",
            window.dim(),
            rule.dim()
        )));
    }
    let seed = find_seed(rule)?;
    match rule {
        SubstitutionRule::Word(r) => word_oracle(r, &seed, window),
        SubstitutionRule::Block(r) => block_oracle(r, &seed, window),
    }
}

fn describe_seed(alphabet: &Alphabet, seed: &FixedSeed) -> String {
    let names: Vec<&str> = seed.labels.iter().map(|&l| alphabet.name(l)).collect();
    format!("iterate={} seed={}", seed.iterate, names.join("|"))
}

fn word_oracle(rule: &WordRule, seed: &FixedSeed, window: &Window) -> Result<TilingOracle> {
    let need_left = (-window.lo()[0]).max(0) as usize;
    let need_right = (window.hi()[0] + 1).max(0) as usize;
    let mut left = vec![seed.labels[0]];
    let mut right = vec![seed.labels[1]];
    while left.len() < need_left || right.len() < need_right {
        let (l0, r0) = (left.len(), right.len());
        for _ in 0..seed.iterate {
            left = rule.apply(&left);
            right = rule.apply(&right);
        }
        if (left.len() < need_left && left.len() == l0)
            || (right.len() < need_right && right.len() == r0)
        {
            return Err(Error::NoFixedSeed);
        }
    }
    let provenance = format!("substitution(word) {}", describe_seed(&rule.alphabet, seed));
    TilingOracle::from_fn(rule.alphabet.clone(), window.clone(), provenance, |c| {
        let x = c[0];
        if x >= 0 {
            right[x as usize]
        } else {
            left[(left.len() as i64 + x) as usize]
        }
    })
}

fn block_oracle(rule: &BlockRule, seed: &FixedSeed, window: &Window) -> Result<TilingOracle> {
    let d = rule.dim;
    let mut shape = vec![2usize; d];
    let mut lo = vec![-1i64; d];
    let mut cells = seed.labels.clone();
    let covers = |lo: &[i64], shape: &[usize]| {
        (0..d).all(|a| lo[a] <= window.lo()[a] && lo[a] + shape[a] as i64 > window.hi()[a])
    };
    while !covers(&lo, &shape) {
        for _ in 0..seed.iterate {
            let (s, c) = rule.apply(&shape, &cells);
            shape = s;
            cells = c;
            for l in lo.iter_mut() {
                *l *= rule.expansion as i64;
            }
        }
    }
    let provenance = format!(
        "substitution(block k={} d={}) {}",
        rule.expansion,
        d,
        describe_seed(&rule.alphabet, seed)
    );
    TilingOracle::from_fn(rule.alphabet.clone(), window.clone(), provenance, |c| {
        let mut idx = 0usize;
        for a in 0..d {
            idx = idx * shape[a] + (c[a] - lo[a]) as usize;
        }
        cells[idx]
    })
}

/// Number of cells where substituting the oracle once (through the seed's
/// iterate) disagrees with the oracle itself, over all cells whose image
/// lies inside the window. Zero for a correct fixed point.
pub fn self_consistency_mismatches(
    rule: &SubstitutionRule,
    oracle: &TilingOracle,
) -> Result<usize> {
    let seed = find_seed(rule)?;
    let w = oracle.window();
    match rule {
        SubstitutionRule::Word(r) => {
            let image = |l: LabelId| {
                let mut v = vec![l];
                for _ in 0..seed.iterate {
                    v = r.apply(&v);
                }
                v
            };
            let lo = w.lo()[0];
            let hi = w.hi()[0];
            let mut bad = 0usize;
            // nonnegative half: images of cells 0,1,... laid out from 0
            let mut pos = 0i64;
            let mut parent = 0i64;
            while pos <= hi && parent <= hi {
                for l in image(oracle.label_at(&parent.into())?) {
                    if pos <= hi && pos >= lo && oracle.label_at(&pos.into())? != l {
                        bad += 1;
                    }
                    pos += 1;
                }
                parent += 1;
            }
            // negative half: images of cells -1,-2,... laid out leftwards from -1
            let mut pos = -1i64;
            let mut parent = -1i64;
            while pos >= lo && parent >= lo {
                for l in image(oracle.label_at(&parent.into())?).into_iter().rev() {
                    if pos >= lo && pos <= hi && oracle.label_at(&pos.into())? != l {
                        bad += 1;
                    }
                    pos -= 1;
                }
                parent -= 1;
            }
            Ok(bad)
        }
        SubstitutionRule::Block(r) => {
            let d = r.dim;
            let mut shape = vec![1usize; d];
            let big = r.expansion.pow(seed.iterate as u32) as i64;
            let images: Vec<Vec<LabelId>> = (0..r.alphabet.len() as LabelId)
                .map(|l| {
                    shape = vec![1usize; d];
                    let mut c = vec![l];
                    for _ in 0..seed.iterate {
                        let (s, n) = r.apply(&shape, &c);
                        shape = s;
                        c = n;
                    }
                    c
                })
                .collect();
            let mut bad = 0usize;
            for cell in w.cells() {
                let child_lo: Vec<i64> = cell.0.iter().map(|x| x * big).collect();
                let child_hi: Vec<i64> = child_lo.iter().map(|x| x + big - 1).collect();
                if !w.contains_coords(&cell.0)
                    || !w.contains_coords(&child_lo)
                    || !w.contains_coords(&child_hi)
                {
                    continue;
                }
                let img = &images[oracle.label_at(&cell)? as usize];
                for (i, &l) in img.iter().enumerate() {
                    let mut rem = i;
                    let mut c = vec![0i64; d];
                    for a in (0..d).rev() {
                        c[a] = child_lo[a] + (rem % big as usize) as i64;
                        rem /= big as usize;
                    }
                    if oracle.label_at(&crate::lattice::Cell(c))? != l {
                        bad += 1;
                    }
                }
            }
            Ok(bad)
        }
    }
}
