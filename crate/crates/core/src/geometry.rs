//! Integer geometry of lattice balls: realized squared norms, ball shapes
//! and offsets ordered by distance.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::lattice::norm_sq;

pub(crate) fn isqrt(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut x = (n as f64).sqrt() as u64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

fn is_square(n: u64) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// Whether `n` is a sum of `dim` squares, i.e. the squared norm of some
/// cell of `Z^dim`.
pub fn is_realized(dim: usize, n: u64) -> bool {
    match dim {
        0 => n == 0,
        1 => is_square(n),
        2 => {
            let mut i = 0u64;
            while 2 * i * i <= n {
                if is_square(n - i * i) {
                    return true;
                }
                i += 1;
            }
            false
        }
        3 => {
            // Legendre: not of the form 4^a (8b + 7)
            if n == 0 {
                return true;
            }
            let mut m = n;
            while m.is_multiple_of(4) {
                m /= 4;
            }
            m % 8 != 7
        }
        _ => true,
    }
}

/// Smallest realized squared norm `>= t`.
pub fn next_realized(dim: usize, t: u64) -> u64 {
    if dim == 1 {
        let r = isqrt(t);
        return if r * r == t { t } else { (r + 1) * (r + 1) };
    }
    let mut n = t;
    while !is_realized(dim, n) {
        n += 1;
    }
    n
}

/// Realized squared norms in `1..=s_max`, ascending.
pub fn realized_up_to(dim: usize, s_max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = next_realized(dim, 1);
    while n <= s_max {
        out.push(n);
        n = next_realized(dim, n + 1);
    }
    out
}

/// Cells `x` with `|x|^2 < radius_sq`, listed lexicographically.
#[derive(Debug)]
pub struct BallShape {
    pub dim: usize,
    pub radius_sq: u64,
    /// Largest `|x_i|` over the ball.
    pub extent: i64,
    offsets: Vec<i64>,
    /// Cell indices ordered by norm, for early-exit matching.
    pub match_order: Vec<u32>,
    /// Cells with an axis neighbour outside the ball; contains every
    /// extreme point of the ball's convex hull.
    pub boundary: Vec<u32>,
}

impl BallShape {
    fn build(dim: usize, radius_sq: u64) -> Self {
        if radius_sq == 0 {
            return BallShape {
                dim,
                radius_sq,
                extent: 0,
                offsets: Vec::new(),
                match_order: Vec::new(),
                boundary: Vec::new(),
            };
        }
        let extent = isqrt(radius_sq - 1) as i64;
        let side = (2 * extent + 1) as usize;
        let total = side.pow(dim as u32);
        let mut offsets = Vec::new();
        let mut x = vec![0i64; dim];
        for k in 0..total {
            let mut rem = k;
            for a in (0..dim).rev() {
                x[a] = (rem % side) as i64 - extent;
                rem /= side;
            }
            if norm_sq(&x) < radius_sq {
                offsets.extend_from_slice(&x);
            }
        }
        let n = offsets.len() / dim;
        let mut match_order: Vec<u32> = (0..n as u32).collect();
        match_order.sort_by_key(|&i| norm_sq(&offsets[i as usize * dim..(i as usize + 1) * dim]));
        let mut boundary = Vec::new();
        let mut y = vec![0i64; dim];
        for i in 0..n {
            let c = &offsets[i * dim..(i + 1) * dim];
            let on_boundary = (0..dim).any(|a| {
                [-1i64, 1].iter().any(|&step| {
                    y.copy_from_slice(c);
                    y[a] += step;
                    norm_sq(&y) >= radius_sq
                })
            });
            if on_boundary {
                boundary.push(i as u32);
            }
        }
        BallShape {
            dim,
            radius_sq,
            extent,
            offsets,
            match_order,
            boundary,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset(&self, i: usize) -> &[i64] {
        &self.offsets[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offsets(&self) -> impl Iterator<Item = &[i64]> {
        self.offsets.chunks_exact(self.dim.max(1))
    }

    /// Linear index deltas for a row-major array with the given strides.
    pub fn deltas(&self, strides: &[i64]) -> Vec<isize> {
        self.offsets()
            .map(|x| x.iter().zip(strides).map(|(a, s)| a * s).sum::<i64>() as isize)
            .collect()
    }

    /// `max_{x in ball} |a + x|^2`: the squared radius of the smallest
    /// origin-centred ball containing the translate `a + ball`, minus one
    /// step (the ball must be open, so containment needs `> this value`).
    pub fn enclosing_sq(&self, a: &[i64]) -> u64 {
        self.boundary
            .iter()
            .map(|&i| {
                let x = self.offset(i as usize);
                x.iter()
                    .zip(a)
                    .map(|(p, q)| ((p + q) * (p + q)) as u64)
                    .sum::<u64>()
            })
            .max()
            .unwrap_or_else(|| norm_sq(a))
    }

    /// Cheap lower bound for [`enclosing_sq`](Self::enclosing_sq) using
    /// the axis extreme point aligned with the largest coordinate of `a`.
    pub fn enclosing_lower_bound(&self, a: &[i64]) -> u64 {
        let m = a.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
        let e = self.extent as u64;
        norm_sq(a) + 2 * e * m + e * e
    }
}

type ShapeCache = RwLock<HashMap<(usize, u64), Arc<BallShape>>>;

fn cache() -> &'static ShapeCache {
    static CACHE: OnceLock<ShapeCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Largest `|x_i|` over the ball `|x|^2 < radius_sq`.
pub fn extent_of(radius_sq: u64) -> i64 {
    if radius_sq == 0 {
        0
    } else {
        isqrt(radius_sq - 1) as i64
    }
}

/// Number of cells of the ball in dimension 1.
pub fn interval_len(radius_sq: u64) -> usize {
    if radius_sq == 0 {
        0
    } else {
        2 * extent_of(radius_sq) as usize + 1
    }
}

const CACHED_CELLS: u64 = 1 << 14;

pub fn ball(dim: usize, radius_sq: u64) -> Arc<BallShape> {
    if let Some(b) = cache().read().unwrap().get(&(dim, radius_sq)) {
        return b.clone();
    }
    let b = Arc::new(BallShape::build(dim, radius_sq));
    let side = 2 * extent_of(radius_sq) as u64 + 1;
    if side.saturating_pow(dim as u32) > CACHED_CELLS {
        return b;
    }
    cache()
        .write()
        .unwrap()
        .entry((dim, radius_sq))
        .or_insert(b)
        .clone()
}

/// Nonzero offsets with `|a|^2 <= max_norm`, sorted by `(|a|^2, lex)`.
#[derive(Debug, Clone)]
pub struct SortedOffsets {
    pub dim: usize,
    flat: Vec<i64>,
    norms: Vec<u64>,
}

impl SortedOffsets {
    pub fn new(dim: usize, max_norm: u64) -> Self {
        let r = isqrt(max_norm) as i64;
        let side = (2 * r + 1) as usize;
        let total = side.pow(dim as u32);
        let mut items: Vec<(u64, Vec<i64>)> = Vec::new();
        let mut x = vec![0i64; dim];
        for k in 0..total {
            let mut rem = k;
            for a in (0..dim).rev() {
                x[a] = (rem % side) as i64 - r;
                rem /= side;
            }
            let n = norm_sq(&x);
            if n > 0 && n <= max_norm {
                items.push((n, x.clone()));
            }
        }
        items.sort();
        let mut flat = Vec::with_capacity(items.len() * dim);
        let mut norms = Vec::with_capacity(items.len());
        for (n, v) in items {
            norms.push(n);
            flat.extend(v);
        }
        SortedOffsets { dim, flat, norms }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn max_norm(&self) -> u64 {
        self.norms.last().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[i64])> {
        self.norms
            .iter()
            .copied()
            .zip(self.flat.chunks_exact(self.dim))
    }
}

/// Offsets in nondecreasing norm order, generated shell band by shell band
/// so that callers needing only a few nearby offsets pay little.
pub struct ShellIter {
    dim: usize,
    done: u64,
    radius: i64,
    buf: Vec<(u64, Vec<i64>)>,
    pos: usize,
    limit: u64,
}

impl ShellIter {
    /// Nonzero offsets with `|a|^2 <= limit`.
    pub fn new(dim: usize, limit: u64) -> Self {
        ShellIter {
            dim,
            done: 0,
            radius: 0,
            buf: Vec::new(),
            pos: 0,
            limit,
        }
    }

    fn refill(&mut self) -> bool {
        if self.done >= self.limit {
            return false;
        }
        self.radius = (self.radius * 2).max(4);
        let r = self.radius;
        let hi = ((r * r) as u64).min(self.limit);
        let side = (2 * r + 1) as usize;
        let total = side.pow(self.dim as u32);
        let mut x = vec![0i64; self.dim];
        self.buf.clear();
        self.pos = 0;
        for k in 0..total {
            let mut rem = k;
            for a in (0..self.dim).rev() {
                x[a] = (rem % side) as i64 - r;
                rem /= side;
            }
            let n = norm_sq(&x);
            if n > self.done && n <= hi {
                self.buf.push((n, x.clone()));
            }
        }
        self.buf.sort();
        self.done = hi;
        true
    }
}

impl Iterator for ShellIter {
    type Item = (u64, Vec<i64>);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos >= self.buf.len() {
            if !self.refill() {
                return None;
            }
        }
        let item = std::mem::take(&mut self.buf[self.pos]);
        self.pos += 1;
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realized_norms_in_one_and_two_dims() {
        assert_eq!(next_realized(1, 2), 4);
        assert_eq!(next_realized(1, 4), 4);
        assert_eq!(next_realized(1, 5), 9);
        assert_eq!(realized_up_to(2, 10), vec![1, 2, 4, 5, 8, 9, 10]);
        assert!(!is_realized(2, 3));
        assert!(!is_realized(3, 7));
        assert!(is_realized(3, 6));
    }

    #[test]
    fn ball_shapes() {
        let b = ball(1, 9);
        assert_eq!(b.len(), 5);
        assert_eq!(b.extent, 2);
        assert_eq!(b.offset(0), &[-2]);
        assert_eq!(b.match_order[0], 2);
        let b2 = ball(2, 2);
        assert_eq!(b2.len(), 5);
        assert_eq!(ball(2, 0).len(), 0);
    }

    #[test]
    fn enclosing_matches_brute_force() {
        for s in [1u64, 2, 4, 5, 13, 25] {
            let b = ball(2, s);
            for a in [[3i64, 1], [-2, 5], [0, 0], [7, -7]] {
                let brute = b
                    .offsets()
                    .map(|x| norm_sq(&[x[0] + a[0], x[1] + a[1]]))
                    .max()
                    .unwrap();
                assert_eq!(b.enclosing_sq(&a), brute);
                assert!(b.enclosing_lower_bound(&a) <= brute);
            }
        }
    }

    #[test]
    fn shell_iter_is_sorted_and_complete() {
        let v: Vec<_> = ShellIter::new(2, 200).collect();
        let s = SortedOffsets::new(2, 200);
        assert_eq!(v.len(), s.len());
        for ((n1, a1), (n2, a2)) in v.iter().zip(s.iter()) {
            assert_eq!(*n1, n2);
            assert_eq!(a1.as_slice(), a2);
        }
    }
}
