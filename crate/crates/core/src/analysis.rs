//! End-to-end analysis of one system: tree, ratio table, repulsiveness
//! sweep, slow chains and a verdict backed by the numbers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{lipschitz_table, repulsiveness_estimate, RatioTable, WeightFn};
use crate::systems::SystemConfig;
use crate::tree::{build_tree_lenient, longest_slow_chain, LevelStats};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct AnalysisRequest {
    pub config: SystemConfig,
    pub depth: usize,
    pub alpha: f64,
    pub s_max: u64,
    pub seed: u64,
}

impl AnalysisRequest {
    pub fn new(config: SystemConfig, depth: usize, alpha: f64, s_max: u64) -> Self {
        AnalysisRequest {
            config,
            depth,
            alpha,
            s_max,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "evidence-repulsive")]
    EvidenceRepulsive,
    #[serde(rename = "evidence-non-repulsive")]
    EvidenceNonRepulsive,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::EvidenceRepulsive => "evidence-repulsive",
            Verdict::EvidenceNonRepulsive => "evidence-non-repulsive",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SystemSummary {
    pub kind: &'static str,
    pub provenance: String,
    pub dimension: usize,
    pub alphabet: Vec<String>,
    pub window: Vec<[i64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Parameters {
    pub depth: usize,
    pub alpha: f64,
    pub s_max: u64,
    pub seed: u64,
    pub tree_window: Vec<[i64; 2]>,
    pub estimate_window: Vec<[i64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeSummary {
    pub depth_built: usize,
    /// Every vertex above this level has all its children.
    pub complete_depth: usize,
    pub open_vertices: usize,
    pub levels: Vec<LevelStats>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RepulsivenessSummary {
    pub ell_hat: f64,
    /// The same sweep stopped at `coarse_s_max`.
    pub coarse_ell_hat: f64,
    pub coarse_s_max: u64,
    /// Relative drop from `coarse_ell_hat` to `ell_hat`.
    pub decay: f64,
    pub argmin_s: u64,
    pub argmin_pair_sq: u64,
    pub argmin_digest: String,
    pub argmin_pattern: String,
    pub s_max: u64,
    pub stable: bool,
    pub patches_examined: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlowChainSummary {
    pub max_m: usize,
    pub chain: Vec<String>,
    pub radii_sq: Vec<u64>,
    /// `(m - 1) 2^(-alpha)`.
    pub certified_lower_bound: f64,
    /// `C_N` at the depth where the chain ends.
    pub c_at_chain_depth: f64,
    pub bound_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictSummary {
    pub verdict: Verdict,
    pub c_first: f64,
    pub c_last: f64,
    /// `C_N - C_M` over the last third of the depths.
    pub c_growth: f64,
    pub ell_hat: f64,
    pub ell_stable: bool,
    pub ell_decay: f64,
    pub max_slow_chain: usize,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub system: SystemSummary,
    pub parameters: Parameters,
    pub tree: TreeSummary,
    pub ratio_table: RatioTable,
    pub repulsiveness: RepulsivenessSummary,
    pub slow_chain: SlowChainSummary,
    pub verdict: VerdictSummary,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Growth of `C_N` that still counts as settled.
pub const C_GROWTH_TOLERANCE: f64 = 0.05;
/// Slow chains of this length or more count against repulsiveness.
pub const LONG_CHAIN: usize = 5;
/// Relative drop of `ell_hat` over the last sixteenfold range of `s_max`
/// that still counts as a plateau.
pub const ELL_DECAY_TOLERANCE: f64 = 0.10;
/// Ratio between the full and the coarse repulsiveness sweep.
pub const COARSE_FACTOR: u64 = 16;

/// Default `s_max` for the repulsiveness sweep in dimension `dim`.
pub fn default_s_max(dim: usize) -> u64 {
    if dim == 1 {
        1600
    } else {
        64
    }
}

pub struct Evidence {
    pub ell_hat: f64,
    pub ell_stable: bool,
    pub ell_decay: f64,
    pub max_m: usize,
    pub certified: f64,
}

pub fn verdict(table: &RatioTable, ev: &Evidence) -> VerdictSummary {
    let c_first = table.rows.first().map_or(0.0, |r| r.c);
    let c_last = table.rows.last().map_or(0.0, |r| r.c);
    let n = table.rows.len();
    let from = (2 * n).div_ceil(3).max(1) - 1;
    let c_growth = c_last - table.rows.get(from).map_or(c_last, |r| r.c);
    let mut reasons = Vec::new();
    if ev.max_m >= LONG_CHAIN {
        reasons.push(format!(
            "slow chain of length {} certifies C_N >= {:.6}",
            ev.max_m, ev.certified
        ));
    }
    if c_growth > C_GROWTH_TOLERANCE {
        reasons.push(format!(
            "C_N still grows by {c_growth:.6} over the last third of the depths"
        ));
    }
    if ev.ell_decay > ELL_DECAY_TOLERANCE {
        reasons.push(format!(
            "ell_hat keeps falling: down {:.1}% over the last sixteenfold range of s_max",
            100.0 * ev.ell_decay
        ));
    }
    let non_rep = !reasons.is_empty();
    let rep = !non_rep && ev.ell_stable && ev.ell_hat > 0.0;
    if rep {
        reasons.push(format!(
            "C_N settled (growth {c_growth:.6}), ell_hat = {:.6} stable and flat (decay {:.1}%), longest slow chain {}",
            ev.ell_hat,
            100.0 * ev.ell_decay,
            ev.max_m
        ));
    } else if !non_rep {
        reasons.push(format!(
            "ell_hat = {:.6} is not stable between the window and its doubling",
            ev.ell_hat
        ));
    }
    VerdictSummary {
        verdict: if non_rep {
            Verdict::EvidenceNonRepulsive
        } else if rep {
            Verdict::EvidenceRepulsive
        } else {
            Verdict::Inconclusive
        },
        c_first,
        c_last,
        c_growth,
        ell_hat: ev.ell_hat,
        ell_stable: ev.ell_stable,
        ell_decay: ev.ell_decay,
        max_slow_chain: ev.max_m,
        reasons,
    }
}

pub fn analyze(req: &AnalysisRequest) -> Result<AnalysisReport> {
    if req.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let w = WeightFn::new(req.alpha)?;
    let oracle = req.config.build()?;
    if let Some(p) = oracle.find_small_period() {
        return Err(Error::PeriodicInput(p));
    }
    let window = oracle.window().clone();
    let tree = build_tree_lenient(&oracle, req.depth, &window)?;
    let table = lipschitz_table(&tree, &w, tree.depth());

    let est_window = window.halved();
    let est = repulsiveness_estimate(&oracle, req.s_max, &est_window)?;
    let coarse_s_max = (req.s_max / COARSE_FACTOR).max(1);
    let coarse = repulsiveness_estimate(&oracle, coarse_s_max, &est_window)?;
    let decay = if coarse.ell_hat > 0.0 {
        1.0 - est.ell_hat / coarse.ell_hat
    } else {
        0.0
    };

    let chain = longest_slow_chain(&tree);
    let (max_m, chain_keys, chain_radii, c_at) = match &chain {
        Some(c) => {
            let end = tree.order(*c.vertices.last().unwrap());
            let c_at = table.c(end.max(1)).unwrap_or(0.0);
            (
                c.m(),
                c.vertices
                    .iter()
                    .map(|&v| tree.key(v).to_string())
                    .collect(),
                c.radii_sq.clone(),
                c_at,
            )
        }
        None => (0, vec![], vec![], 0.0),
    };
    let certified = max_m.saturating_sub(1) as f64 * w.c2();
    let v = verdict(
        &table,
        &Evidence {
            ell_hat: est.ell_hat,
            ell_stable: est.stable,
            ell_decay: decay,
            max_m,
            certified,
        },
    );

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        system: SystemSummary {
            kind: req.config.kind(),
            provenance: oracle.provenance().to_string(),
            dimension: oracle.dim(),
            alphabet: oracle.alphabet().names().to_vec(),
            window: window.bounds(),
        },
        parameters: Parameters {
            depth: req.depth,
            alpha: req.alpha,
            s_max: est.s_max,
            seed: req.seed,
            tree_window: window.bounds(),
            estimate_window: est_window.bounds(),
        },
        tree: TreeSummary {
            depth_built: tree.depth(),
            complete_depth: tree.complete_depth(),
            open_vertices: tree.open_vertices().len(),
            levels: tree.level_stats(),
        },
        repulsiveness: RepulsivenessSummary {
            ell_hat: est.ell_hat,
            coarse_ell_hat: coarse.ell_hat,
            coarse_s_max: coarse.s_max,
            decay,
            argmin_s: est.argmin_s,
            argmin_pair_sq: est.argmin_pair_sq,
            argmin_digest: est.argmin.digest(),
            argmin_pattern: est.argmin.pattern(oracle.alphabet()),
            s_max: est.s_max,
            stable: est.stable,
            patches_examined: est.patches_examined,
        },
        slow_chain: SlowChainSummary {
            max_m,
            chain: chain_keys,
            radii_sq: chain_radii,
            certified_lower_bound: certified,
            c_at_chain_depth: c_at,
            bound_holds: c_at >= certified,
        },
        ratio_table: table,
        verdict: v,
    })
}
