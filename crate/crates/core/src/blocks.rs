//! Exact constant-time comparison of lattice balls inside one oracle.
//!
//! Runs of `2^k` consecutive cells along the last axis receive class ids
//! by prefix doubling; any run of length `L` is then identified by the ids
//! of its two overlapping power-of-two halves, and a ball by the keys of
//! its rows.

use std::collections::HashMap;

use crate::geometry::BallShape;
use crate::lattice::{LabelId, Window};

const NONE: u32 = u32::MAX;

/// Positions grouped by block id.
struct PosIndex {
    starts: Vec<u32>,
    positions: Vec<u32>,
}

impl PosIndex {
    fn new(ids: &[u32]) -> Self {
        let m = ids
            .iter()
            .filter(|&&x| x != NONE)
            .max()
            .map_or(0, |&x| x as usize + 1);
        let mut starts = vec![0u32; m + 1];
        for &x in ids.iter().filter(|&&x| x != NONE) {
            starts[x as usize + 1] += 1;
        }
        for j in 0..m {
            starts[j + 1] += starts[j];
        }
        let mut fill = starts.clone();
        let mut positions = vec![0u32; starts[m] as usize];
        for (p, &x) in ids.iter().enumerate() {
            if x != NONE {
                positions[fill[x as usize] as usize] = p as u32;
                fill[x as usize] += 1;
            }
        }
        PosIndex { starts, positions }
    }
}

pub(crate) struct RowBlocks {
    row_len: usize,
    ids: Vec<Vec<u32>>,
    index: Vec<Option<PosIndex>>,
}

impl RowBlocks {
    pub fn new(raw: &[LabelId], window: &Window) -> Self {
        let row_len = window.extent(window.dim() - 1);
        RowBlocks {
            row_len,
            ids: vec![raw.iter().map(|&l| l as u32).collect()],
            index: vec![None],
        }
    }

    fn ensure(&mut self, len: usize) {
        while (1usize << (self.ids.len() - 1)) * 2 <= len {
            let k = self.ids.len() - 1;
            let half = 1usize << k;
            let prev = &self.ids[k];
            let mut table: HashMap<(u32, u32), u32> = HashMap::new();
            let next: Vec<u32> = (0..prev.len())
                .map(|i| {
                    if i % self.row_len + 2 * half > self.row_len {
                        return NONE;
                    }
                    let key = (prev[i], prev[i + half]);
                    let fresh = table.len() as u32;
                    *table.entry(key).or_insert(fresh)
                })
                .collect();
            self.ids.push(next);
            self.index.push(None);
        }
    }

    /// Rows of a ball as (index delta of the row start, row length).
    pub fn rows(shape: &BallShape, strides: &[i64]) -> Vec<(isize, usize)> {
        let d = shape.dim;
        let mut rows: Vec<(isize, usize)> = Vec::new();
        let mut prev: Option<&[i64]> = None;
        for x in shape.offsets() {
            let same_row = prev.is_some_and(|p| p[..d - 1] == x[..d - 1]);
            if same_row {
                rows.last_mut().unwrap().1 += 1;
            } else {
                let delta: i64 = x.iter().zip(strides).map(|(a, s)| a * s).sum();
                rows.push((delta as isize, 1));
            }
            prev = Some(x);
        }
        rows
    }

    /// Make keys of balls with these rows available, along with the
    /// position index of their longest row.
    pub fn prepare(&mut self, rows: &[(isize, usize)]) {
        if let Some(max) = rows.iter().map(|r| r.1).max() {
            self.ensure(max);
            let k = log2(max);
            if self.index[k].is_none() {
                self.index[k] = Some(PosIndex::new(&self.ids[k]));
            }
        }
    }

    /// Centers of all balls in the array whose labels equal those of the
    /// ball at `center`, ascending; `fits` screens centers whose ball
    /// would leave the array.
    pub fn matches(
        &self,
        center: usize,
        rows: &[(isize, usize)],
        fits: impl Fn(usize) -> bool,
    ) -> Vec<u32> {
        let Some(anchor) = (0..rows.len()).max_by_key(|&r| (rows[r].1, std::cmp::Reverse(r)))
        else {
            return Vec::new();
        };
        let key = self.key(center, rows);
        let (delta, len) = rows[anchor];
        let k = log2(len);
        let idx = self.index[k].as_ref().expect("prepared rows");
        let id = key[2 * anchor] as usize;
        let cands = &idx.positions[idx.starts[id] as usize..idx.starts[id + 1] as usize];
        cands
            .iter()
            .filter_map(|&p| {
                let z = p as isize - delta;
                if z < 0 || z as usize >= self.ids[0].len() || !fits(z as usize) {
                    return None;
                }
                (self.key(z as usize, rows) == key).then_some(z as u32)
            })
            .collect()
    }

    /// Key of the ball at `center`; equal keys mean equal labels. Rows
    /// must have been passed to [`prepare`](Self::prepare).
    pub fn key(&self, center: usize, rows: &[(isize, usize)]) -> Vec<u32> {
        let mut out = Vec::with_capacity(2 * rows.len());
        for &(delta, len) in rows {
            let start = (center as isize + delta) as usize;
            let k = log2(len);
            let ids = &self.ids[k];
            out.push(ids[start]);
            out.push(ids[start + len - (1 << k)]);
        }
        out
    }
}

fn log2(n: usize) -> usize {
    usize::BITS as usize - 1 - n.leading_zeros() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ball;

    #[test]
    fn ball_keys_detect_equality_exactly() {
        let w = Window::new(vec![0, 0], vec![19, 19]).unwrap();
        let raw: Vec<LabelId> = (0..w.len()).map(|i| ((i * 7 + i / 20) % 3) as u8).collect();
        let shape = ball(2, 10);
        let rows = RowBlocks::rows(&shape, &w.strides());
        let mut blocks = RowBlocks::new(&raw, &w);
        blocks.prepare(&rows);
        let deltas = shape.deltas(&w.strides());
        let inner = w.shrink(shape.extent).unwrap();
        let centers: Vec<usize> = inner
            .cells()
            .map(|c| w.index_of(c.coords()).unwrap())
            .collect();
        for &a in &centers {
            for &b in &centers {
                let same = deltas
                    .iter()
                    .all(|&d| raw[(a as isize + d) as usize] == raw[(b as isize + d) as usize]);
                assert_eq!(same, blocks.key(a, &rows) == blocks.key(b, &rows));
            }
            let fits = |z: usize| w.contains_with_margin(&w.coords_of(z), shape.extent);
            let found: Vec<usize> = blocks
                .matches(a, &rows, fits)
                .into_iter()
                .map(|z| z as usize)
                .collect();
            let expected: Vec<usize> = centers
                .iter()
                .copied()
                .filter(|&b| {
                    deltas
                        .iter()
                        .all(|&d| raw[(a as isize + d) as usize] == raw[(b as isize + d) as usize])
                })
                .collect();
            assert_eq!(found, expected);
        }
    }
}
