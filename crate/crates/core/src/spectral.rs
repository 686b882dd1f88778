//! Horizontal sibling edges, choices of boundary paths and the
//! approximation graph they induce, with the explicit branching formula
//! for the choice distance and its geodesic counterpart.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{d_inf_val, d_sup_val, MetricFlag, MetricValue, WeightFn};
use crate::tree::{BoundaryPath, PrivilegedTree, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizontalEdge {
    pub source: VertexId,
    pub range: VertexId,
    pub parent: VertexId,
    pub level: usize,
    /// Squared radius of the parent patch.
    pub parent_radius_sq: u64,
    pub length: f64,
    pub orientation: Orientation,
}

/// Both orientations of every sibling pair at `level`.
pub fn sibling_edges(tree: &PrivilegedTree, w: &WeightFn, level: usize) -> Vec<HorizontalEdge> {
    let mut out = Vec::new();
    if level == 0 {
        return out;
    }
    for &p in tree.level(level - 1) {
        let kids = tree.children(p);
        let s = tree.radius_sq(p);
        for (i, &u) in kids.iter().enumerate() {
            for &v in &kids[i + 1..] {
                for (a, b, o) in [(u, v, Orientation::Plus), (v, u, Orientation::Minus)] {
                    out.push(HorizontalEdge {
                        source: a,
                        range: b,
                        parent: p,
                        level,
                        parent_radius_sq: s,
                        length: w.at_sq(s),
                        orientation: o,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    Leftmost,
    Random {
        seed: u64,
    },
    /// Follow the given paths wherever possible.
    Stay(Vec<BoundaryPath>),
    /// Leave the given paths wherever a vertex offers an alternative.
    Avoid(Vec<BoundaryPath>),
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Leftmost => "leftmost".into(),
            Strategy::Random { seed } => format!("random:{seed}"),
            Strategy::Stay(_) => "stay".into(),
            Strategy::Avoid(_) => "avoid".into(),
        }
    }
}

/// A choice `τ`, stored as one preferred child per vertex. `τ(v)` is the
/// root-to-leaf path through `v` that keeps taking preferred children, so
/// choices are consistent along their own paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Choice {
    tag: String,
    preferred: Vec<Option<VertexId>>,
}

pub fn make_choice(tree: &PrivilegedTree, strategy: &Strategy) -> Choice {
    let n = tree.len();
    let mut preferred: Vec<Option<VertexId>> =
        (0..n).map(|v| tree.children(v).first().copied()).collect();
    match strategy {
        Strategy::Leftmost => {}
        Strategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for (v, pref) in preferred.iter_mut().enumerate() {
                let kids = tree.children(v);
                if !kids.is_empty() {
                    *pref = Some(kids[rng.gen_range(0..kids.len())]);
                }
            }
        }
        Strategy::Stay(paths) | Strategy::Avoid(paths) => {
            let stay = matches!(strategy, Strategy::Stay(_));
            let mut fixed = HashSet::new();
            for path in paths.iter().filter(|p| p.tag == tree.tag()) {
                for k in 0..path.vertices.len().saturating_sub(1) {
                    let (v, next) = (path.vertices[k], path.vertices[k + 1]);
                    if !fixed.insert(v) {
                        continue;
                    }
                    preferred[v] = if stay {
                        Some(next)
                    } else {
                        tree.children(v)
                            .iter()
                            .copied()
                            .find(|&c| c != next)
                            .or(Some(next))
                    };
                }
            }
        }
    }
    Choice {
        tag: tree.tag().to_string(),
        preferred,
    }
}

impl Choice {
    pub fn preferred(&self, v: VertexId) -> Option<VertexId> {
        self.preferred.get(v).copied().flatten()
    }

    /// The leaf reached from `v` by preferred children.
    pub fn leaf(&self, v: VertexId) -> VertexId {
        let mut cur = v;
        while let Some(c) = self.preferred(cur) {
            cur = c;
        }
        cur
    }

    pub fn path(&self, tree: &PrivilegedTree, v: VertexId) -> BoundaryPath {
        let mut vs = tree.ancestry(v);
        let mut cur = v;
        while let Some(c) = self.preferred(cur) {
            vs.push(c);
            cur = c;
        }
        tree.boundary_path(vs)
    }

    /// `b_τ(ξ_n)`: 1 when `τ(ξ_n)` leaves `ξ` at `ξ_n`; `None` at the end of
    /// the truncated path where `ξ_{n+1}` is unknown.
    pub fn branches(&self, path: &BoundaryPath, n: usize) -> Option<bool> {
        let next = *path.vertices.get(n + 1)?;
        Some(self.preferred(path.vertices[n]) != Some(next))
    }
}

/// `d_inf + Σ_{n > O} b_τ(ξ_n) δ(r_n) + b_τ(ξ'_n) δ(r'_n)`, truncated. The
/// last terms of each path, whose `b_τ` needs the unseen next vertex, go
/// into the tail bound together with the usual truncation tail.
pub fn d_tau_explicit(
    w: &WeightFn,
    tau: &Choice,
    x: &BoundaryPath,
    y: &BoundaryPath,
) -> Result<MetricValue> {
    if tau.tag != x.tag {
        return Err(Error::DisjointRoots);
    }
    let inf = d_inf_val(w, x, y)?;
    if inf.flag == MetricFlag::IndistinguishableAtDepth {
        return Ok(inf);
    }
    let o = crate::metrics::branch_order(x, y)?.order;
    let n = inf.depth;
    let mut value = inf.value;
    let mut tail = w.tail_bound(n);
    for path in [x, y] {
        for k in o + 1..=n {
            let weight = w.at_sq(path.radii_sq[k]);
            match tau.branches(path, k) {
                Some(true) => value += weight,
                Some(false) => {}
                None => tail += weight,
            }
        }
    }
    Ok(MetricValue {
        value,
        tail_bound: tail,
        depth: n,
        flag: MetricFlag::Exact,
    })
}

#[derive(Clone, Debug)]
pub struct ApproxGraph {
    /// Leaf representatives `τ(v)`, ascending.
    pub vertices: Vec<VertexId>,
    /// Edges `τ×τ(h)` with their orientation.
    pub edges: Vec<HorizontalEdge>,
    graph: DiGraph<VertexId, f64>,
    index: HashMap<VertexId, NodeIndex>,
}

pub fn approx_graph(tree: &PrivilegedTree, w: &WeightFn, tau: &Choice) -> ApproxGraph {
    let mut edges = Vec::new();
    for level in 1..=tree.depth() {
        for e in sibling_edges(tree, w, level) {
            edges.push(HorizontalEdge {
                source: tau.leaf(e.source),
                range: tau.leaf(e.range),
                ..e
            });
        }
    }
    let vertices: Vec<VertexId> = (0..tree.len())
        .map(|v| tau.leaf(v))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut graph = DiGraph::new();
    let index: HashMap<VertexId, NodeIndex> =
        vertices.iter().map(|&v| (v, graph.add_node(v))).collect();
    for e in &edges {
        graph.add_edge(index[&e.source], index[&e.range], e.length);
    }
    ApproxGraph {
        vertices,
        edges,
        graph,
        index,
    }
}

impl ApproxGraph {
    /// Shortest-path distance over horizontal edges. Always run from the
    /// smaller endpoint so the result is symmetric to the bit.
    pub fn geodesic_distance(&self, v1: VertexId, v2: VertexId) -> Result<f64> {
        let (a, b) = (v1.min(v2), v1.max(v2));
        let (&ia, &ib) = match (self.index.get(&a), self.index.get(&b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::InvalidArgument("vertex is not a choice leaf".into())),
        };
        if a == b {
            return Ok(0.0);
        }
        let dist = dijkstra(&self.graph, ia, Some(ib), |e| *e.weight());
        dist.get(&ib).copied().ok_or(Error::Disconnected)
    }

    pub fn to_dot(&self, tree: &PrivilegedTree, w: &WeightFn) -> String {
        let mut out = String::from("graph approximation {\n");
        for &v in &self.vertices {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"n={} s={}\"];",
                tree.key(v),
                tree.order(v),
                tree.radius_sq(v)
            );
        }
        for e in self
            .edges
            .iter()
            .filter(|e| e.orientation == Orientation::Plus)
        {
            let _ = writeln!(
                out,
                "  \"{}\" -- \"{}\" [label=\"{}\", level={}];",
                tree.key(e.source),
                tree.key(e.range),
                format_length(e.parent_radius_sq, e.length, w.alpha).0,
                e.level
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self, tree: &PrivilegedTree, w: &WeightFn, strategy: &str) -> Result<String> {
        #[derive(Serialize)]
        struct E<'a> {
            source: &'a str,
            range: &'a str,
            level: usize,
            orientation: Orientation,
            parent_s: u64,
            length: serde_json::Value,
            exact: bool,
        }
        #[derive(Serialize)]
        struct G<'a> {
            schema_version: u32,
            provenance: &'a str,
            alpha: f64,
            strategy: &'a str,
            depth: usize,
            vertices: Vec<&'a str>,
            edges: Vec<E<'a>>,
        }
        let key = |v: VertexId| tree.key(v);
        let g = G {
            schema_version: 1,
            provenance: tree.provenance(),
            alpha: w.alpha,
            strategy,
            depth: tree.depth(),
            vertices: self.vertices.iter().map(|&v| key(v)).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let (text, exact) = format_length(e.parent_radius_sq, e.length, w.alpha);
                    E {
                        source: key(e.source),
                        range: key(e.range),
                        level: e.level,
                        orientation: e.orientation,
                        parent_s: e.parent_radius_sq,
                        length: if exact {
                            serde_json::Value::String(text)
                        } else {
                            serde_json::json!(e.length)
                        },
                        exact,
                    }
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&g)?)
    }
}

/// `δ` as an exact fraction `1/r^alpha` when both `r` and `alpha` are
/// integers, else the float.
fn format_length(s: u64, length: f64, alpha: f64) -> (String, bool) {
    if s <= 1 {
        return ("1".into(), true);
    }
    let r = (s as f64).sqrt().round() as u64;
    if r * r == s && alpha.fract() == 0.0 && alpha > 0.0 {
        if let Some(den) = r.checked_pow(alpha as u32) {
            return (format!("1/{den}"), true);
        }
    }
    (format!("{length}"), false)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Leftmost,
    Random(u64),
    Stay,
    Avoid,
}

impl StrategySpec {
    pub fn instantiate(&self, x: &BoundaryPath, y: &BoundaryPath) -> Strategy {
        match self {
            StrategySpec::Leftmost => Strategy::Leftmost,
            StrategySpec::Random(seed) => Strategy::Random { seed: *seed },
            StrategySpec::Stay => Strategy::Stay(vec![x.clone(), y.clone()]),
            StrategySpec::Avoid => Strategy::Avoid(vec![x.clone(), y.clone()]),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "leftmost" => Ok(StrategySpec::Leftmost),
            "stay" => Ok(StrategySpec::Stay),
            "avoid" => Ok(StrategySpec::Avoid),
            _ => match s.strip_prefix("random") {
                Some(rest) => {
                    let seed = rest.trim_start_matches(':');
                    let seed = if seed.is_empty() {
                        0
                    } else {
                        seed.parse()
                            .map_err(|_| Error::InvalidArgument(format!("bad seed in `{s}`")))?
                    };
                    Ok(StrategySpec::Random(seed))
                }
                None => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairComparison {
    pub d_inf: f64,
    pub d_sup: f64,
    pub d_sup_tail: f64,
    pub per_strategy: BTreeMap<String, f64>,
    pub min: f64,
    pub max: f64,
    pub min_is_d_inf: bool,
    /// `max <= d_sup` and `d_sup - max` within the truncation tail.
    pub max_is_d_sup: bool,
    /// Vertices beyond the branch, on either path, with a single child.
    pub single_child_vertices: usize,
}

/// Minimum and maximum of the choice distance over strategies, against
/// `d_inf` and `d_sup`.
pub fn compare_bounds(
    tree: &PrivilegedTree,
    w: &WeightFn,
    pairs: &[(BoundaryPath, BoundaryPath)],
    strategies: &[StrategySpec],
) -> Result<Vec<PairComparison>> {
    if pairs.is_empty() || strategies.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one pair and one strategy".into(),
        ));
    }
    pairs
        .iter()
        .map(|(x, y)| {
            let inf = d_inf_val(w, x, y)?;
            let sup = d_sup_val(w, x, y)?;
            let mut per = BTreeMap::new();
            let mut tails = Vec::new();
            for spec in strategies {
                let st = spec.instantiate(x, y);
                let tau = make_choice(tree, &st);
                let d = d_tau_explicit(w, &tau, x, y)?;
                tails.push((d.value, d.tail_bound));
                per.insert(st.name(), d.value);
            }
            let min = tails.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
            let (max, max_tail) =
                tails.iter().copied().fold(
                    (f64::NEG_INFINITY, 0.0),
                    |a, t| if t.0 > a.0 { t } else { a },
                );
            let o = crate::metrics::branch_order(x, y)?.order;
            let single = [x, y]
                .iter()
                .flat_map(|p| {
                    p.vertices
                        .iter()
                        .skip(o + 1)
                        .take(p.depth().saturating_sub(o + 1))
                })
                .filter(|&&v| tree.children(v).len() == 1)
                .count();
            Ok(PairComparison {
                d_inf: inf.value,
                d_sup: sup.value,
                d_sup_tail: sup.tail_bound,
                per_strategy: per,
                min,
                max,
                min_is_d_inf: min == inf.value,
                max_is_d_sup: max <= sup.value
                    && sup.value - max <= max_tail - sup.tail_bound + 1e-12,
                single_child_vertices: single,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Cell, Window};
    use crate::systems::builtin_system;
    use crate::tree::build_tree;

    fn fib_tree(depth: usize) -> PrivilegedTree {
        let o = builtin_system("fibonacci", &Window::interval(-3000, 3000).unwrap()).unwrap();
        build_tree(&o, depth, &Window::interval(-2500, 2500).unwrap()).unwrap()
    }

    fn vertex(t: &PrivilegedTree, word: &str) -> VertexId {
        (0..t.len()).find(|&v| t.pattern(v) == word).unwrap()
    }

    #[test]
    fn sibling_edges_on_fibonacci() {
        let t = fib_tree(3);
        let w = WeightFn::new(2.0).unwrap();
        let edges = sibling_edges(&t, &w, 2);
        let b = vertex(&t, "b");
        let under_b: Vec<_> = edges.iter().filter(|e| e.parent == b).collect();
        assert_eq!(under_b.len(), 6);
        assert!(under_b.iter().all(|e| e.length == 1.0));
        assert_eq!(
            under_b
                .iter()
                .filter(|e| e.orientation == Orientation::Plus)
                .count(),
            3
        );
        let a = vertex(&t, "a");
        assert_eq!(edges.iter().filter(|e| e.parent == a).count(), 6);
    }

    #[test]
    fn strategies_behave() {
        let t = fib_tree(6);
        let w = WeightFn::new(2.0).unwrap();
        let left = make_choice(&t, &Strategy::Leftmost);
        assert_eq!(left.path(&t, t.root()), t.leftmost_extension(t.root()));

        let x = t.path_at_site(&Cell::from(4)).unwrap();
        let y = t.path_at_site(&Cell::from(9)).unwrap();
        let stay = make_choice(&t, &Strategy::Stay(vec![x.clone(), y.clone()]));
        for k in 2..x.depth() {
            assert_eq!(stay.branches(&x, k), Some(false));
        }
        let d = d_tau_explicit(&w, &stay, &x, &y).unwrap();
        assert_eq!(d.value, d_inf_val(&w, &x, &y).unwrap().value);
        assert_eq!(d_tau_explicit(&w, &stay, &x, &x).unwrap().value, 0.0);

        let avoid = make_choice(&t, &Strategy::Avoid(vec![x.clone(), y.clone()]));
        for k in 2..x.depth() {
            let many = t.children(x.vertices[k]).len() >= 2;
            assert_eq!(avoid.branches(&x, k), Some(many));
        }
        let r1 = make_choice(&t, &Strategy::Random { seed: 7 });
        let r2 = make_choice(&t, &Strategy::Random { seed: 7 });
        assert_eq!(r1, r2);
    }

    #[test]
    fn geodesics_between_siblings() {
        let t = fib_tree(5);
        let w = WeightFn::new(2.0).unwrap();
        let tau = make_choice(&t, &Strategy::Random { seed: 3 });
        let g = approx_graph(&t, &w, &tau);
        for level in 1..=t.depth() {
            for e in sibling_edges(&t, &w, level) {
                let d = g
                    .geodesic_distance(tau.leaf(e.source), tau.leaf(e.range))
                    .unwrap();
                assert_eq!(d, e.length);
            }
        }
        let v = g.vertices[0];
        assert_eq!(g.geodesic_distance(v, v).unwrap(), 0.0);
    }

    #[test]
    fn disconnected_pairs_reported() {
        let t = fib_tree(2);
        let w = WeightFn::new(2.0).unwrap();
        let tau = make_choice(&t, &Strategy::Leftmost);
        let g = approx_graph(&t, &w, &tau);
        // every level-2 leaf reaches every other through the root siblings
        let a = tau.leaf(t.level(1)[0]);
        let b = tau.leaf(t.level(1)[1]);
        assert_eq!(g.geodesic_distance(a, b).unwrap(), 1.0);
        assert!(g.geodesic_distance(a, 10_000).is_err());
    }

    #[test]
    fn compare_bounds_flags() {
        let t = fib_tree(6);
        let w = WeightFn::new(2.0).unwrap();
        let x = t.path_at_site(&Cell::from(4)).unwrap();
        let y = t.path_at_site(&Cell::from(9)).unwrap();
        let rows = compare_bounds(
            &t,
            &w,
            &[(x, y)],
            &[
                StrategySpec::Leftmost,
                StrategySpec::Stay,
                StrategySpec::Avoid,
                StrategySpec::Random(1),
            ],
        )
        .unwrap();
        assert!(rows[0].min_is_d_inf);
        assert!(rows[0].max <= rows[0].d_sup);
        assert_eq!(
            StrategySpec::parse("random:9").unwrap(),
            StrategySpec::Random(9)
        );
        assert!(StrategySpec::parse("zigzag").is_err());
    }

    #[test]
    fn exact_lengths() {
        assert_eq!(format_length(4, 0.25, 2.0), ("1/4".to_string(), true));
        assert_eq!(format_length(1, 1.0, 2.0), ("1".to_string(), true));
        assert!(!format_length(2, 0.5, 2.0).1);
    }
}
