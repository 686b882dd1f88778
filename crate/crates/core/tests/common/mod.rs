#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use privileged::{
    builtin_system, derivation_index, occurrences_batch, radii_stats, PrivilegedTree, TilingOracle,
    VertexId, Window,
};

/// Privileged words of a one-dimensional tiling, enumerated directly on
/// the string: at every site the path starts at the letter and each step
/// widens the centered word until a second copy of the previous word fits
/// inside it. Returns `(order, word, parent word)` triples.
pub fn brute_force_levels(
    word: &[u8],
    offset: i64,
    sites: std::ops::RangeInclusive<i64>,
    depth: usize,
) -> BTreeSet<(usize, String, String)> {
    let at = |x: i64| (x - offset) as usize;
    let n = word.len() as i64;
    let inside = |lo: i64, hi: i64| lo >= offset && hi < offset + n;
    let mut out = BTreeSet::new();
    for y in sites {
        out.insert((1, (word[at(y)] as char).to_string(), String::new()));
        let mut e = 0i64;
        for order in 2..=depth {
            let centered = &word[at(y - e)..=at(y + e)];
            let mut found = None;
            for d in 1.. {
                let right = inside(y + d - e, y + d + e)
                    && &word[at(y + d - e)..=at(y + d + e)] == centered;
                let left = inside(y - d - e, y - d + e)
                    && &word[at(y - d - e)..=at(y - d + e)] == centered;
                if right || left {
                    found = Some(d);
                    break;
                }
                if !inside(y - d - e, y + d + e) {
                    break;
                }
            }
            let Some(d) = found else {
                panic!("site {y} undecided at order {order}; widen the word");
            };
            let e2 = d + e;
            let child = String::from_utf8(word[at(y - e2)..=at(y + e2)].to_vec()).unwrap();
            let parent = String::from_utf8(centered.to_vec()).unwrap();
            out.insert((order, child, parent));
            e = e2;
        }
    }
    out
}

pub fn full_word(tree: &PrivilegedTree, v: VertexId) -> String {
    tree.patch(v)
        .labels()
        .iter()
        .map(|&l| tree.alphabet().name(l))
        .collect()
}

/// The same triples read off a built tree.
pub fn tree_levels(tree: &PrivilegedTree, depth: usize) -> BTreeSet<(usize, String, String)> {
    let mut out = BTreeSet::new();
    for n in 1..=depth {
        for &v in tree.level(n) {
            let parent = tree
                .parent(v)
                .filter(|_| n > 1)
                .map(|p| full_word(tree, p))
                .unwrap_or_default();
            out.insert((n, full_word(tree, v), parent));
        }
    }
    out
}

/// Fibonacci by `a -> ab, b -> a` and Thue-Morse by `a -> ab, b -> ba`,
/// iterated here rather than taken from the library, as one-sided words.
pub fn substitution_word(name: &str, len: usize) -> Vec<u8> {
    let image = |c: u8| -> &'static [u8] {
        match (name, c) {
            ("fibonacci", b'a') => b"ab",
            ("fibonacci", b'b') => b"a",
            ("thue_morse", b'a') => b"ab",
            ("thue_morse", b'b') => b"ba",
            _ => panic!("no rule for {name}"),
        }
    };
    let mut w = vec![b'a'];
    while w.len() < len {
        w = w.iter().flat_map(|&c| image(c).iter().copied()).collect();
    }
    w.truncate(len);
    w
}

pub struct System {
    pub name: &'static str,
    pub half: i64,
    pub depth: usize,
}

/// Systems and sizes of the lemma suite.
pub const LEMMA_SYSTEMS: [System; 4] = [
    System {
        name: "fibonacci",
        half: 100_000,
        depth: 10,
    },
    System {
        name: "thue_morse",
        half: 100_000,
        depth: 9,
    },
    System {
        name: "period_doubling",
        half: 100_000,
        depth: 10,
    },
    System {
        name: "chair2d",
        half: 128,
        depth: 6,
    },
];

pub fn dim_of(name: &str) -> usize {
    if name == "chair2d" {
        2
    } else {
        1
    }
}

pub fn oracle(name: &str, half: i64) -> TilingOracle {
    builtin_system(name, &Window::cube(dim_of(name), half)).unwrap()
}

#[derive(Debug, Default)]
pub struct LemmaReport {
    pub vertices: usize,
    pub parent_violations: usize,
    pub pairs_checked: usize,
    pub index_violations: usize,
    pub edges_checked: usize,
    pub edges_unstable: usize,
    pub radius_violations: usize,
    pub worst_shortfall: f64,
    pub worst_excess: f64,
    pub floor_violations: usize,
    pub elapsed: Duration,
}

impl LemmaReport {
    pub fn clean(&self) -> bool {
        self.parent_violations == 0
            && self.index_violations == 0
            && self.radius_violations == 0
            && self.floor_violations == 0
    }
}

/// Slack allowed in the radius bounds. Lattice balls are exact intervals
/// on the line, but in higher dimension a lattice ball and the union of its
/// unit cubes differ by up to half a cube diagonal.
pub fn lattice_slack(dim: usize) -> f64 {
    if dim == 1 {
        0.0
    } else {
        (dim as f64).sqrt() / 2.0
    }
}

pub fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn is_ancestor(tree: &PrivilegedTree, p: VertexId, mut q: VertexId) -> bool {
    loop {
        if p == q {
            return true;
        }
        match tree.parent(q) {
            Some(up) => q = up,
            None => return false,
        }
    }
}

pub fn lemma_suite(sys: &System) -> LemmaReport {
    let start = Instant::now();
    let o = oracle(sys.name, sys.half);
    let tree = privileged::build_tree_lenient(&o, sys.depth, o.window()).unwrap();
    let mut rep = LemmaReport {
        vertices: tree.len(),
        ..LemmaReport::default()
    };

    // every vertex hangs below exactly one vertex of the previous order,
    // whose patch is its concentric core; patches of one level are distinct
    for n in 1..=tree.depth() {
        let mut seen: HashMap<(u64, u64), VertexId> = HashMap::new();
        for &v in tree.level(n) {
            let mut h = DefaultHasher::new();
            tree.patch(v).labels().hash(&mut h);
            let ok = match tree.parent(v) {
                Some(p) => {
                    tree.order(p) + 1 == n
                        && tree.children(p).iter().filter(|&&c| c == v).count() == 1
                        && (n == 1
                            || tree.patch(v).restrict(tree.radius_sq(p)) == Some(tree.patch(p)))
                        && tree.radius_sq(v) > tree.radius_sq(p)
                }
                None => false,
            };
            let fresh = match seen.insert((tree.radius_sq(v), h.finish()), v) {
                Some(u) => tree.patch(u) != tree.patch(v),
                None => true,
            };
            if !(ok && fresh) {
                rep.parent_violations += 1;
            }
        }
    }

    // concentric containment against ancestry, on ancestor pairs along
    // sampled paths and on random pairs
    let mut rng = 0x5eed_u64 ^ sys.depth as u64;
    let all: Vec<VertexId> = (1..tree.len()).collect();
    for _ in 0..400 {
        let q = all[(splitmix(&mut rng) % all.len() as u64) as usize];
        let anc = tree.ancestry(q);
        let p = anc[(splitmix(&mut rng) % anc.len() as u64) as usize];
        let r = all[(splitmix(&mut rng) % all.len() as u64) as usize];
        for (p, q) in [(p, q), (r, q), (q, r)] {
            rep.pairs_checked += 1;
            let contained = tree.radius_sq(p) <= tree.radius_sq(q)
                && tree.patch(q).contains_concentric(&tree.patch(p));
            let ancestor = is_ancestor(&tree, p, q);
            let index = derivation_index(&tree, p, q);
            let expected = ancestor.then(|| tree.order(q) - tree.order(p));
            if contained != ancestor || index != expected {
                rep.index_violations += 1;
            }
        }
    }

    // 2 r_pack + r <= r' <= 2 r_cov + r on edges whose parent has stable
    // radii; packing on the half window, covering on the full one
    let big = o.window().clone();
    let small = big.halved();
    let slack = lattice_slack(o.dim()) + 1e-9;
    let parents: Vec<VertexId> = (0..tree.len())
        .filter(|&v| tree.order(v) > 0 && !tree.children(v).is_empty())
        .collect();
    for chunk in parents.chunks(20_000) {
        let patches: Vec<_> = chunk.iter().map(|&v| tree.patch(v)).collect();
        let occ = occurrences_batch(&o, &patches, &small).unwrap();
        let occ2 = occurrences_batch(&o, &patches, &big).unwrap();
        for (k, &v) in chunk.iter().enumerate() {
            let st = match radii_stats(&occ[k], &occ2[k]) {
                Ok(st) if st.stable => st,
                _ => {
                    rep.edges_unstable += tree.children(v).len();
                    continue;
                }
            };
            let r = (tree.radius_sq(v) as f64).sqrt();
            for &c in tree.children(v) {
                rep.edges_checked += 1;
                let rc = (tree.radius_sq(c) as f64).sqrt();
                let shortfall = 2.0 * st.r_pack + r - rc;
                let excess = rc - 2.0 * st.r_cov - r;
                rep.worst_shortfall = rep.worst_shortfall.max(shortfall);
                rep.worst_excess = rep.worst_excess.max(excess);
                if shortfall > slack || excess > slack {
                    rep.radius_violations += 1;
                }
            }
        }
    }

    // r_{n+1} >= 2n, compared on squares
    for v in 0..tree.len() {
        let n = tree.order(v) as u64;
        if n >= 2 && tree.radius_sq(v) < 4 * (n - 1) * (n - 1) {
            rep.floor_violations += 1;
        }
    }
    rep.elapsed = start.elapsed();
    rep
}
