//! Privileged-patch trees of symbolic tilings of `Z^d`.
//!
//! A tiling is served by a [`TilingOracle`]: a labeling of the cells of a
//! trusted window, produced by a substitution or a Sturmian slope. From it
//! the crate extracts exact concentric patches, derives privileged patches
//! order by order into a [`PrivilegedTree`], and measures the boundary of
//! that tree with the branch metrics `d_inf` and `d_sup`. Whether the two
//! metrics stay Lipschitz equivalent is read off the ratio table and set
//! against the repulsiveness of the tiling.
//!
//! ```
//! use privileged::{build_tree, builtin_system, Window};
//!
//! let oracle = builtin_system("fibonacci", &Window::interval(-300, 300)?)?;
//! let tree = build_tree(&oracle, 2, &Window::interval(-250, 250)?)?;
//! assert_eq!(tree.level(2).len(), 6);
//! # Ok::<(), privileged::Error>(())
//! ```

pub mod analysis;
mod blocks;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod metrics;
pub mod patch;
pub mod spectral;
pub mod sturmian;
pub mod substitution;
pub mod systems;
pub mod tree;

pub use analysis::{analyze, default_s_max, AnalysisReport, AnalysisRequest, Verdict};
pub use error::{Error, Partial, Result};
pub use lattice::{Alphabet, Cell, Label, LabelId, TilingOracle, Window};
pub use metrics::{
    branch_order, d_inf_val, d_sup_val, hull_ultrametric, lipschitz_table, pair_metrics,
    pair_metrics_csv, repulsiveness_estimate, MetricFlag, MetricValue, PairMetrics, RatioTable,
    RepulsivenessEstimate, WeightFn,
};
pub use patch::{
    concentric_patch, distinct_patches, occurrences, occurrences_batch, radii_stats,
    OccurrenceList, Patch, RadiiStats,
};
pub use spectral::{
    approx_graph, compare_bounds, d_tau_explicit, make_choice, sibling_edges, ApproxGraph, Choice,
    HorizontalEdge, Strategy, StrategySpec,
};
pub use sturmian::build_sturmian_oracle;
pub use substitution::{build_substitution_oracle, SubstitutionRule};
pub use systems::{builtin_system, SystemConfig, BUILTINS};
pub use tree::{
    build_tree, build_tree_lenient, build_tree_with, derivation_index, derived_at, derived_set,
    find_slow_chain, longest_slow_chain, path_at, BoundaryPath, BuildOptions, LevelStats,
    PatchPath, PrivilegedTree, SlowChain, TreeVertex, VertexId,
};
