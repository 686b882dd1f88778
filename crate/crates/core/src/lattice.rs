//! Symbolic tilings of `Z^d`: labeled unit cells with markers at lattice
//! points, served through an oracle over a trusted window.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LabelId = u8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub id: LabelId,
    pub name: String,
}

/// Dense label ids `0..len` with unique names.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidConfig("empty alphabet".into()));
        }
        if names.len() > LabelId::MAX as usize + 1 {
            return Err(Error::InvalidConfig("alphabet too large".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::InvalidConfig("empty label name".into()));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidConfig(format!("duplicate label `{n}`")));
            }
        }
        Ok(Alphabet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as LabelId)
    }

    pub fn label(&self, id: LabelId) -> Label {
        Label {
            id,
            name: self.names[id as usize].clone(),
        }
    }
}

/// A lattice cell, identified with the marker of its tile.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cell(pub Vec<i64>);

impl Cell {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Cell(coords.into())
    }

    pub fn origin(dim: usize) -> Self {
        Cell(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn norm_sq(&self) -> u64 {
        norm_sq(&self.0)
    }

    pub fn add(&self, other: &[i64]) -> Cell {
        Cell(self.0.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &[i64]) -> Cell {
        Cell(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell(vec![x])
    }
}

impl<const N: usize> From<[i64; N]> for Cell {
    fn from(c: [i64; N]) -> Self {
        Cell(c.to_vec())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

pub fn norm_sq(v: &[i64]) -> u64 {
    v.iter().map(|&x| (x * x) as u64).sum()
}

/// Axis-aligned box of cells, bounds inclusive. Cells are indexed
/// row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Window {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidArgument(
                "window bounds must share a dimension ≥ 1".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument(format!(
                "empty window {lo:?}..{hi:?}"
            )));
        }
        Ok(Window { lo, hi })
    }

    pub fn interval(lo: i64, hi: i64) -> Result<Self> {
        Window::new(vec![lo], vec![hi])
    }

    /// `[-half, half]^dim`.
    pub fn cube(dim: usize, half: i64) -> Self {
        Window {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    pub fn from_bounds(bounds: &[[i64; 2]]) -> Result<Self> {
        Window::new(
            bounds.iter().map(|b| b[0]).collect(),
            bounds.iter().map(|b| b[1]).collect(),
        )
    }

    pub fn bounds(&self) -> Vec<[i64; 2]> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| [l, h])
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest extent over all axes.
    pub fn min_extent(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).min().unwrap_or(0)
    }

    pub fn contains(&self, c: &Cell) -> bool {
        self.contains_coords(c.coords())
    }

    pub fn contains_coords(&self, c: &[i64]) -> bool {
        c.len() == self.dim()
            && c.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| l <= x && x <= h)
    }

    /// True when the cube `c + [-margin, margin]^d` lies inside the window.
    pub fn contains_with_margin(&self, c: &[i64], margin: i64) -> bool {
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| l + margin <= *x && *x <= h - margin)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        other.dim() == self.dim()
            && self.contains_coords(&other.lo)
            && self.contains_coords(&other.hi)
    }

    pub fn strides(&self) -> Vec<i64> {
        let d = self.dim();
        let mut s = vec![1i64; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.extent(a + 1) as i64;
        }
        s
    }

    pub fn index_of(&self, c: &[i64]) -> Option<usize> {
        if !self.contains_coords(c) {
            return None;
        }
        let mut idx = 0usize;
        for (a, (&x, &lo)) in c.iter().zip(&self.lo).enumerate() {
            idx = idx * self.extent(a) + (x - lo) as usize;
        }
        Some(idx)
    }

    pub fn coords_of(&self, mut idx: usize) -> Vec<i64> {
        let d = self.dim();
        let mut c = vec![0i64; d];
        for a in (0..d).rev() {
            let e = self.extent(a);
            c[a] = self.lo[a] + (idx % e) as i64;
            idx /= e;
        }
        c
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |i| Cell(self.coords_of(i)))
    }

    /// Erode by `margin` on every side; `None` when nothing is left.
    pub fn shrink(&self, margin: i64) -> Option<Window> {
        let lo: Vec<i64> = self.lo.iter().map(|l| l + margin).collect();
        let hi: Vec<i64> = self.hi.iter().map(|h| h - margin).collect();
        Window::new(lo, hi).ok()
    }

    pub fn grow(&self, margin: i64) -> Window {
        Window {
            lo: self.lo.iter().map(|l| l - margin).collect(),
            hi: self.hi.iter().map(|h| h + margin).collect(),
        }
    }

    /// Same center, twice the span `hi - lo` on every axis.
    pub fn doubled(&self) -> Window {
        Window {
            lo: self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| l - (h - l) / 2)
                .collect(),
            hi: self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| h + (h - l) - (h - l) / 2)
                .collect(),
        }
    }

    /// Same center, half the span.
    pub fn halved(&self) -> Window {
        Window {
            lo: self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| l + (h - l) / 4)
                .collect(),
            hi: self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| h - (h - l) / 4)
                .collect(),
        }
    }

    /// Distance from `c` to the nearest cell outside the window.
    pub fn distance_to_outside(&self, c: &[i64]) -> i64 {
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| (x - l + 1).min(h - x + 1))
            .min()
            .unwrap_or(0)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in 0..self.dim() {
            if a > 0 {
                write!(f, "x")?;
            }
            write!(f, "[{},{}]", self.lo[a], self.hi[a])?;
        }
        Ok(())
    }
}

/// A total labeling of the trusted window, standing for one tiling of the
/// hull. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilingOracle {
    alphabet: Alphabet,
    window: Window,
    labels: Vec<LabelId>,
    provenance: String,
}

impl TilingOracle {
    pub fn from_fn(
        alphabet: Alphabet,
        window: Window,
        provenance: impl Into<String>,
        mut f: impl FnMut(&[i64]) -> LabelId,
    ) -> Result<Self> {
        let labels: Vec<LabelId> = (0..window.len()).map(|i| f(&window.coords_of(i))).collect();
        TilingOracle::from_labels(alphabet, window, provenance, labels)
    }

    /// Labels in window index order.
    pub fn from_labels(
        alphabet: Alphabet,
        window: Window,
        provenance: impl Into<String>,
        labels: Vec<LabelId>,
    ) -> Result<Self> {
        if labels.len() != window.len() {
            return Err(Error::InvalidArgument(
                "label array does not match window".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= alphabet.len()) {
            return Err(Error::InvalidArgument(format!(
                "label id {bad} outside alphabet"
            )));
        }
        Ok(TilingOracle {
            alphabet,
            window,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn label_at(&self, cell: &Cell) -> Result<LabelId> {
        self.window
            .index_of(cell.coords())
            .map(|i| self.labels[i])
            .ok_or_else(|| Error::OutOfWindow(cell.0.clone()))
    }

    pub fn label(&self, cell: &Cell) -> Result<Label> {
        self.label_at(cell).map(|id| self.alphabet.label(id))
    }

    pub(crate) fn raw(&self) -> &[LabelId] {
        &self.labels
    }

    /// Labels of a 1-d window as a string of label names.
    pub fn word(&self, lo: i64, hi: i64) -> Result<String> {
        let mut s = String::new();
        for x in lo..=hi {
            s.push_str(self.alphabet.name(self.label_at(&Cell::from(x))?));
        }
        Ok(s)
    }

    /// Smallest translation vector `p` with `|p_i| <= window_extent/4`
    /// under which the whole window labeling is invariant.
    pub fn find_small_period(&self) -> Option<Vec<i64>> {
        let d = self.dim();
        let w = &self.window;
        let bound: Vec<i64> = (0..d).map(|a| (w.extent(a) / 4) as i64).collect();
        let strides = w.strides();
        let mut best: Option<(u64, Vec<i64>)> = None;
        let box_len: usize = bound.iter().map(|b| (2 * b + 1) as usize).product();
        for k in 0..box_len {
            let mut rem = k;
            let mut p = vec![0i64; d];
            for a in (0..d).rev() {
                let e = (2 * bound[a] + 1) as usize;
                p[a] = (rem % e) as i64 - bound[a];
                rem /= e;
            }
            // one representative of each +-p pair
            match p.iter().find(|&&x| x != 0) {
                Some(&x) if x > 0 => {}
                _ => continue,
            }
            let n = norm_sq(&p);
            if best.as_ref().is_some_and(|(bn, _)| *bn <= n) {
                continue;
            }
            if self.invariant_under(&p, &strides) {
                best = Some((n, p));
            }
        }
        best.map(|(_, p)| p)
    }

    fn invariant_under(&self, p: &[i64], strides: &[i64]) -> bool {
        let w = &self.window;
        let shift: i64 = p.iter().zip(strides).map(|(a, s)| a * s).sum();
        (0..w.len()).all(|i| {
            let c = w.coords_of(i);
            let moved: Vec<i64> = c.iter().zip(p).map(|(x, y)| x + y).collect();
            if !w.contains_coords(&moved) {
                return true;
            }
            self.labels[i] == self.labels[(i as i64 + shift) as usize]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_indexing_roundtrip() {
        let w = Window::new(vec![-2, 3], vec![1, 7]).unwrap();
        assert_eq!(w.len(), 4 * 5);
        for i in 0..w.len() {
            let c = w.coords_of(i);
            assert_eq!(w.index_of(&c), Some(i));
        }
        let s = w.strides();
        assert_eq!(s, vec![5, 1]);
        assert_eq!(w.index_of(&[2, 3]), None);
    }

    #[test]
    fn doubled_window_doubles_span() {
        let w = Window::interval(-10, 10).unwrap();
        assert_eq!(w.doubled(), Window::interval(-20, 20).unwrap());
        assert_eq!(w.doubled().halved(), w);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn out_of_window_label() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let o = TilingOracle::from_fn(a, Window::interval(0, 9).unwrap(), "t", |c| {
            (c[0] % 2) as u8
        })
        .unwrap();
        assert_eq!(o.label_at(&Cell::from(3)).unwrap(), 1);
        assert!(matches!(
            o.label_at(&Cell::from(10)),
            Err(Error::OutOfWindow(_))
        ));
    }

    #[test]
    fn periodic_labeling_detected() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let o = TilingOracle::from_fn(a, Window::interval(-40, 40).unwrap(), "t", |c| {
            c[0].rem_euclid(2) as u8
        })
        .unwrap();
        assert_eq!(o.find_small_period(), Some(vec![2]));
    }
}
