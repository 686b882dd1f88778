//! Weight functions, the branch metrics `d_inf` / `d_sup` on the tree
//! boundary, the Lipschitz ratio table and the repulsiveness estimate.
//!
//! Radii enter only through exact squared radii `s`; the weight is
//! evaluated as `max(1, s)^(-alpha/2)` so that equal radii always give
//! bit-identical weights.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::realized_up_to;
use crate::lattice::{Cell, TilingOracle, Window};
use crate::patch::{census, concentric_patch, Patch};
use crate::tree::{BoundaryPath, PrivilegedTree, VertexId};

/// `δ(r) = 1` for `r <= 1`, `r^(-alpha)` beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightFn {
    pub alpha: f64,
}

impl WeightFn {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        Ok(WeightFn { alpha })
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= 1.0 {
            1.0
        } else {
            r.powf(-self.alpha)
        }
    }

    /// Weight at radius `sqrt(s)`.
    pub fn at_sq(&self, s: u64) -> f64 {
        if s <= 1 {
            1.0
        } else {
            (s as f64).powf(-self.alpha / 2.0)
        }
    }

    /// The doubling constant `2^(-alpha)`.
    pub fn c2(&self) -> f64 {
        2f64.powf(-self.alpha)
    }

    /// Check `δ(ab) <= δ(a)δ(b)` (for `a, b >= 1`) and `δ(2a) >= c2 δ(a)`
    /// over all pairs of the given squared radii. The comparisons reduce
    /// to integer inequalities on `max(1, s)` because the rule is a power.
    pub fn check_conditions(&self, radii_sq: &[u64]) -> WeightCheck {
        let key = |s: u64| s.max(1) as u128;
        let mut radii: Vec<u64> = radii_sq.to_vec();
        radii.sort_unstable();
        radii.dedup();
        let mut out = WeightCheck::default();
        for &a in &radii {
            out.doubling_checked += 1;
            let exact = key(4 * a) <= 4 * key(a);
            let float = self.at_sq(4 * a) >= self.c2() * self.at_sq(a) * (1.0 - 1e-12);
            if !(exact && float) {
                out.doubling_violations += 1;
            }
            if a == 0 {
                continue;
            }
            for &b in radii.iter().filter(|&&b| b >= 1) {
                out.product_checked += 1;
                let exact = key(a) * key(b) <= (a as u128) * (b as u128);
                let ab = self.value(((a * b) as f64).sqrt());
                let float = ab <= self.at_sq(a) * self.at_sq(b) * (1.0 + 1e-12);
                if !(exact && float) {
                    out.product_violations += 1;
                }
            }
        }
        out
    }

    /// `Σ_{n>N} δ(r_n)` bound for both paths, from the growth floor
    /// `r_n >= 2(n-1)` and `r_1 = 1`, with the zeta tail estimated by an
    /// integral.
    pub fn tail_bound(&self, depth: usize) -> f64 {
        let first = if depth == 0 { 1.0 } else { 0.0 };
        let j0 = depth.max(1) as f64;
        let zeta_tail = j0.powf(-self.alpha) + j0.powf(1.0 - self.alpha) / (self.alpha - 1.0);
        2.0 * (first + self.c2() * zeta_tail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WeightCheck {
    pub product_checked: usize,
    pub product_violations: usize,
    pub doubling_checked: usize,
    pub doubling_violations: usize,
}

impl WeightCheck {
    pub fn holds(&self) -> bool {
        self.product_violations == 0 && self.doubling_violations == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    Exact,
    /// The two paths agree to the truncation depth.
    IndistinguishableAtDepth,
    /// The comparison stopped at the radius cap; value is an upper bound.
    Capped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub tail_bound: f64,
    pub depth: usize,
    pub flag: MetricFlag,
}

/// Deepest common vertex of two paths and its order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub vertex: VertexId,
    pub order: usize,
    /// No branching happens within the common truncation depth.
    pub within_depth: bool,
}

pub fn branch_order(x: &BoundaryPath, y: &BoundaryPath) -> Result<Branch> {
    if x.tag != y.tag || x.vertices.first() != y.vertices.first() || x.vertices.is_empty() {
        return Err(Error::DisjointRoots);
    }
    let common = x.vertices.len().min(y.vertices.len());
    let k = (0..common)
        .take_while(|&i| x.vertices[i] == y.vertices[i])
        .count();
    Ok(Branch {
        vertex: x.vertices[k - 1],
        order: k - 1,
        within_depth: k < common,
    })
}

pub fn d_inf_val(w: &WeightFn, x: &BoundaryPath, y: &BoundaryPath) -> Result<MetricValue> {
    let b = branch_order(x, y)?;
    let depth = x.depth().min(y.depth());
    Ok(if b.within_depth {
        MetricValue {
            value: w.at_sq(x.radii_sq[b.order]),
            tail_bound: 0.0,
            depth,
            flag: MetricFlag::Exact,
        }
    } else {
        MetricValue {
            value: 0.0,
            tail_bound: 0.0,
            depth,
            flag: MetricFlag::IndistinguishableAtDepth,
        }
    })
}

pub fn d_sup_val(w: &WeightFn, x: &BoundaryPath, y: &BoundaryPath) -> Result<MetricValue> {
    let inf = d_inf_val(w, x, y)?;
    if inf.flag == MetricFlag::IndistinguishableAtDepth {
        return Ok(inf);
    }
    let o = branch_order(x, y)?.order;
    let n = inf.depth;
    let sum: f64 = (o + 1..=n)
        .map(|k| w.at_sq(x.radii_sq[k]) + w.at_sq(y.radii_sq[k]))
        .sum();
    Ok(MetricValue {
        value: inf.value + sum,
        tail_bound: w.tail_bound(n),
        depth: n,
        flag: MetricFlag::Exact,
    })
}

/// Both metrics for the recorded paths of two sites of the build window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairMetrics {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub branch_order: usize,
    pub d_inf: MetricValue,
    pub d_sup: MetricValue,
}

pub fn pair_metrics(
    tree: &PrivilegedTree,
    w: &WeightFn,
    x: &Cell,
    y: &Cell,
) -> Result<PairMetrics> {
    let px = tree
        .path_at_site(x)
        .ok_or_else(|| Error::OutOfWindow(x.0.clone()))?;
    let py = tree
        .path_at_site(y)
        .ok_or_else(|| Error::OutOfWindow(y.0.clone()))?;
    let depth = px.depth().min(py.depth());
    let (px, py) = (px.truncate(depth), py.truncate(depth));
    Ok(PairMetrics {
        x: x.0.clone(),
        y: y.0.clone(),
        branch_order: branch_order(&px, &py)?.order,
        d_inf: d_inf_val(w, &px, &py)?,
        d_sup: d_sup_val(w, &px, &py)?,
    })
}

pub fn pair_metrics_csv(rows: &[PairMetrics]) -> String {
    let cell = |c: &[i64]| c.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "x",
        "y",
        "depth",
        "branch_order",
        "d_inf",
        "d_sup",
        "d_sup_tail",
        "flag",
    ])
    .expect("in-memory csv");
    for r in rows {
        let flag = serde_json::to_value(r.d_sup.flag).expect("flag serializes");
        wtr.write_record([
            cell(&r.x),
            cell(&r.y),
            r.d_sup.depth.to_string(),
            r.branch_order.to_string(),
            format!("{:.12}", r.d_inf.value),
            format!("{:.12}", r.d_sup.value),
            format!("{:.12}", r.d_sup.tail_bound),
            flag.as_str().unwrap_or_default().to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf8")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub depth: usize,
    pub c: f64,
    pub argmax: VertexId,
    pub argmax_key: String,
    /// Maximising descendant path below the argmax vertex.
    pub path: Vec<VertexId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioTable {
    pub alpha: f64,
    pub rows: Vec<RatioRow>,
}

impl RatioTable {
    pub fn c(&self, depth: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.depth == depth).map(|r| r.c)
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].c <= w[1].c)
    }

    pub fn to_csv(&self, tree: &PrivilegedTree) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "depth",
            "alpha",
            "C_N",
            "argmax_vertex",
            "argmax_order",
            "argmax_path_digest",
        ])
        .expect("in-memory csv");
        for r in &self.rows {
            let keys: Vec<&str> = r.path.iter().map(|&v| tree.key(v)).collect();
            let digest = crate::patch::short_digest(keys.join("/").as_bytes());
            wtr.write_record([
                r.depth.to_string(),
                format!("{}", self.alpha),
                format!("{:.12}", r.c),
                r.argmax_key.clone(),
                tree.order(r.argmax).to_string(),
                digest,
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf8")
    }
}

/// `C_N = max_v δ(r_v)^(-1) · max_{descending paths to order N} Σ δ(r)`,
/// for every `N` from 1 to `depth`.
pub fn lipschitz_table(tree: &PrivilegedTree, w: &WeightFn, depth: usize) -> RatioTable {
    let depth = depth.min(tree.depth());
    let mut rows = Vec::new();
    for n in 1..=depth {
        let mut f = vec![0.0f64; tree.len()];
        let mut next: Vec<Option<VertexId>> = vec![None; tree.len()];
        for level in (0..n).rev() {
            for &v in tree.level(level) {
                for &c in tree.children(v) {
                    let val = w.at_sq(tree.radius_sq(c)) + f[c];
                    if next[v].is_none() || val > f[v] {
                        f[v] = val;
                        next[v] = Some(c);
                    }
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for level in 0..n {
            for &v in tree.level(level) {
                let ratio = f[v] / w.at_sq(tree.radius_sq(v));
                if ratio > best.0 {
                    best = (ratio, v);
                }
            }
        }
        let mut path = vec![best.1];
        while let Some(c) = next[*path.last().unwrap()] {
            path.push(c);
        }
        rows.push(RatioRow {
            depth: n,
            c: best.0,
            argmax: best.1,
            argmax_key: tree.key(best.1).to_string(),
            path,
        });
    }
    RatioTable {
        alpha: w.alpha,
        rows,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepulsivenessEstimate {
    pub ell_hat: f64,
    pub argmin: Patch,
    pub argmin_s: u64,
    /// Squared pair distance realising the packing radius of the argmin.
    pub argmin_pair_sq: u64,
    pub s_max: u64,
    pub stable: bool,
    pub patches_examined: usize,
    pub window: Window,
}

/// `min r_pack(L_p) / r` over the distinct patches of squared radius up to
/// `s_max`, on `window` with packing radii re-measured on the doubled
/// window for the stability flag.
pub fn repulsiveness_estimate(
    oracle: &TilingOracle,
    s_max: u64,
    window: &Window,
) -> Result<RepulsivenessEstimate> {
    let big = window.doubled();
    if !oracle.window().contains_window(&big) {
        return Err(Error::OutOfWindow(big.hi().to_vec()));
    }
    let small_c = census(oracle, s_max, window)?;
    let big_c = census(oracle, s_max, &big)?;
    let mut best: Option<(f64, u64, Patch, u64)> = None;
    let mut stable = true;
    let mut examined = 0;
    for (li, lv) in small_c.levels.iter().enumerate().skip(1) {
        let small_min = small_c.min_pair_dist_sq(li);
        let big_min = big_c.min_pair_dist_sq(li);
        let big_by_patch: HashMap<Patch, Option<u64>> = (0..big_c.levels[li].reps.len() as u32)
            .map(|k| (big_c.patch(oracle, li, k), big_min[k as usize]))
            .collect();
        for k in 0..lv.reps.len() as u32 {
            examined += 1;
            let p = small_c.patch(oracle, li, k);
            let Some(d2) = small_min[k as usize] else {
                stable = false;
                continue;
            };
            if big_by_patch.get(&p).copied().flatten() != Some(d2) {
                stable = false;
            }
            // r_pack / r = sqrt(d2) / (2 sqrt(s))
            let ratio = ((d2 as f64) / (lv.radius_sq as f64)).sqrt() / 2.0;
            let better = match &best {
                None => true,
                // exact comparison of d2/s
                Some((_, bs, _, bd)) => {
                    (d2 as u128) * (*bs as u128) < (*bd as u128) * (lv.radius_sq as u128)
                }
            };
            if better {
                best = Some((ratio, lv.radius_sq, p, d2));
            }
        }
    }
    let (ell_hat, argmin_s, argmin, argmin_pair_sq) = best.ok_or(Error::TooFewOccurrences)?;
    Ok(RepulsivenessEstimate {
        ell_hat,
        argmin,
        argmin_s,
        argmin_pair_sq,
        s_max: realized_up_to(oracle.dim(), s_max)
            .last()
            .copied()
            .unwrap_or(0),
        stable,
        patches_examined: examined,
        window: window.clone(),
    })
}

/// `δ(sqrt(s*))` with `s*` the largest squared radius up to `s_max` at
/// which the concentric patches of the two tilings agree.
pub fn hull_ultrametric(
    w: &WeightFn,
    oracle1: &TilingOracle,
    center1: &Cell,
    oracle2: &TilingOracle,
    center2: &Cell,
    s_max: u64,
) -> Result<MetricValue> {
    if oracle1.dim() != oracle2.dim() {
        return Err(Error::DifferentDimensions(oracle1.dim(), oracle2.dim()));
    }
    let s = common_radius_sq(oracle1, center1, oracle2, center2, s_max)?;
    let radii = realized_up_to(oracle1.dim(), s_max);
    let capped = radii.last() == Some(&s);
    Ok(MetricValue {
        value: w.at_sq(s),
        tail_bound: 0.0,
        depth: radii.iter().take_while(|&&r| r <= s).count(),
        flag: if capped {
            MetricFlag::Capped
        } else {
            MetricFlag::Exact
        },
    })
}

/// Largest agreeing squared radius (0 when even the prototiles differ).
pub fn common_radius_sq(
    oracle1: &TilingOracle,
    center1: &Cell,
    oracle2: &TilingOracle,
    center2: &Cell,
    s_max: u64,
) -> Result<u64> {
    let radii = realized_up_to(oracle1.dim(), s_max);
    let top = radii.last().copied().unwrap_or(0);
    // reading the largest balls up front reports window problems early
    let p1 = concentric_patch(oracle1, center1, top)?;
    let p2 = concentric_patch(oracle2, center2, top)?;
    let mut agreed = 0;
    for &s in &radii {
        if p1.restrict(s) != p2.restrict(s) {
            break;
        }
        agreed = s;
    }
    Ok(agreed)
}
