//! The curve `Γ = E ∪ ⋃ Γ_Δ` as a weighted graph.
//!
//! A bridge `[x, y]*` is the three-segment path `x → x↑ → y↑ → y` whose
//! segments all have length `d(x, y)`. Lifted vertices are abstract; nothing
//! is embedded. `E` is joined to itself by adjacency edges below a resolution
//! scale, and the connected result is parametrized by a doubled traversal of
//! its minimum spanning tree.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubes::{CubeId, CubeTree};
use crate::error::{Error, Result};
use crate::par;
use crate::porosity::{PorosityConfig, PorousCube};
use crate::space::{MetricMeasureSpace, TargetSet};

/// A vertex of `Γ`. Ground vertices sort before lifted ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vertex {
    /// A space point, by index.
    Ground(usize),
    /// The endpoint of bridge `(x, y)` lifted above `end`, where `end` is `x` or `y`.
    Lifted { x: usize, y: usize, end: usize },
}

impl Vertex {
    pub fn ground(&self) -> Option<usize> {
        match *self {
            Vertex::Ground(p) => Some(p),
            Vertex::Lifted { .. } => None,
        }
    }

    /// `"17"` for a ground point, `"3-17^3"` for the lift of 3 on bridge (3, 17).
    pub fn label(&self, space: &MetricMeasureSpace) -> String {
        match *self {
            Vertex::Ground(p) => space.id(p).to_string(),
            Vertex::Lifted { x, y, end } => {
                format!("{}-{}^{}", space.id(x), space.id(y), space.id(end))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Bridge(CubeId),
    Adjacency,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Bridge(c) => write!(f, "cube:{}", c.0),
            Provenance::Adjacency => f.write_str("E-adjacency"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: Vertex,
    pub v: Vertex,
    pub length: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub x: usize,
    pub y: usize,
    pub cube: CubeId,
}

/// Bridge statistics for one porous cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeBridges {
    pub cube: CubeId,
    /// Points of `X_{n+n0}` inside `B(ζ, M ℓ)`.
    pub net_points: usize,
    /// Pairs requested by this cube, before removing pairs already bridged.
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every unordered pair of qualifying net points.
    Complete,
    /// Only pairs `(ζ_Δ, x)`.
    Star,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    pub bridges: Vec<Bridge>,
    pub per_cube: Vec<CubeBridges>,
    /// Porous cubes too deep for level `n + n0` to exist.
    pub skipped: Vec<CubeId>,
}

impl BridgeGraph {
    fn from_parts(vertices: BTreeSet<Vertex>, edges: Vec<Edge>) -> Self {
        BridgeGraph { vertices: vertices.into_iter().collect(), edges, ..Default::default() }
    }

    /// Sorted, without duplicates.
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn index(&self, v: &Vertex) -> Option<usize> {
        self.vertices.binary_search(v).ok()
    }

    pub fn ground_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.vertices.iter().filter_map(Vertex::ground)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, |a, b| a + b)
    }

    pub fn length_by(&self, pred: impl Fn(&Provenance) -> bool) -> f64 {
        self.edges.iter().filter(|e| pred(&e.provenance)).map(|e| e.length).fold(0.0, |a, b| a + b)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let (a, b) = (self.index(&e.u).unwrap(), self.index(&e.v).unwrap());
            adj[a].push((b, e.length));
            adj[b].push((a, e.length));
        }
        adj
    }

    /// Shortest-path distances from a set of source vertex indices.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        dijkstra(&self.adjacency(), sources)
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], sources: &[usize]) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }

    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Reverse(Item(0.0, s)));
    }
    while let Some(Reverse(Item(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse(Item(nd, v)));
            }
        }
    }
    dist
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Bridges `Γ_Δ` for every porous cube. A pair already bridged by an earlier
/// cube is not duplicated; its provenance stays with the first cube.
pub fn build_bridges(
    space: &MetricMeasureSpace,
    tree: &CubeTree,
    porous: &[PorousCube],
    cfg: &PorosityConfig,
    pairing: Pairing,
) -> BridgeGraph {
    let nets = tree.nets();
    let jobs = par::map(porous, |pc| {
        let cube = tree.cube(pc.cube);
        let target = cube.level + cfg.n0;
        if !nets.contains_level(target) {
            return None;
        }
        let reach = cfg.m * cube.side;
        let pts: Vec<usize> =
            nets.level(target).iter().copied().filter(|&x| space.dist(cube.center, x) < reach).collect();
        let mut pairs = Vec::new();
        match pairing {
            Pairing::Complete => {
                for (i, &a) in pts.iter().enumerate() {
                    for &b in &pts[i + 1..] {
                        pairs.push((a.min(b), a.max(b)));
                    }
                }
            }
            Pairing::Star => {
                for &b in pts.iter().filter(|&&b| b != cube.center) {
                    pairs.push((cube.center.min(b), cube.center.max(b)));
                }
            }
        }
        Some((cube.center, pts.len(), pairs))
    });

    let mut vertices = BTreeSet::new();
    let mut edges = Vec::new();
    let mut bridges = Vec::new();
    let mut per_cube = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    for (pc, job) in porous.iter().zip(jobs) {
        let Some((center, net_points, pairs)) = job else {
            skipped.push(pc.cube);
            continue;
        };
        vertices.insert(Vertex::Ground(center));
        per_cube.push(CubeBridges { cube: pc.cube, net_points, pairs: pairs.len() });
        for (x, y) in pairs {
            let d = space.dist(x, y);
            if !(d > 0.0) || !seen.insert((x, y)) {
                continue;
            }
            let provenance = Provenance::Bridge(pc.cube);
            let gx = Vertex::Ground(x);
            let gy = Vertex::Ground(y);
            let lx = Vertex::Lifted { x, y, end: x };
            let ly = Vertex::Lifted { x, y, end: y };
            vertices.extend([gx, gy, lx, ly]);
            for (u, v) in [(gx, lx), (lx, ly), (ly, gy)] {
                edges.push(Edge { u, v, length: d, provenance });
            }
            bridges.push(Bridge { x, y, cube: pc.cube });
        }
    }
    let mut g = BridgeGraph::from_parts(vertices, edges);
    g.bridges = bridges;
    g.per_cube = per_cube;
    g.skipped = skipped;
    g
}

/// Adds `E` and adjacency edges between ground vertices closer than `eps_res`.
pub fn assemble_gamma(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    bridges: &BridgeGraph,
    eps_res: f64,
) -> Result<BridgeGraph> {
    if !(eps_res > 0.0) {
        return Err(crate::error::param(format!("eps_res must be positive, got {eps_res}")));
    }
    let mut vertices: BTreeSet<Vertex> = bridges.vertices.iter().copied().collect();
    vertices.extend(e.members.iter().map(|&p| Vertex::Ground(p)));
    let ground: Vec<usize> = vertices.iter().filter_map(Vertex::ground).collect();
    let near = par::map_range(ground.len(), |i| {
        let a = ground[i];
        ground[i + 1..]
            .iter()
            .filter_map(|&b| {
                let d = space.dist(a, b);
                (d < eps_res && d > 0.0).then_some((b, d))
            })
            .collect::<Vec<_>>()
    });
    let mut edges = bridges.edges.clone();
    for (i, list) in near.into_iter().enumerate() {
        for (b, d) in list {
            edges.push(Edge {
                u: Vertex::Ground(ground[i]),
                v: Vertex::Ground(b),
                length: d,
                provenance: Provenance::Adjacency,
            });
        }
    }
    let mut g = BridgeGraph::from_parts(vertices, edges);
    g.bridges = bridges.bridges.clone();
    g.per_cube = bridges.per_cube.clone();
    g.skipped = bridges.skipped.clone();
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connectivity {
    pub components: usize,
    /// Component label per vertex; labels ascend with each component's smallest vertex.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Smallest vertex of each component.
    pub representatives: Vec<Vertex>,
}

pub fn connectivity(g: &BridgeGraph) -> Connectivity {
    let n = g.vertices.len();
    let mut sets = DisjointSets::new(n);
    for e in &g.edges {
        sets.union(g.index(&e.u).unwrap(), g.index(&e.v).unwrap());
    }
    let mut root_label = BTreeMap::new();
    let mut labels = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    let mut representatives = Vec::new();
    for i in 0..n {
        let r = sets.find(i);
        let next = root_label.len();
        let label = *root_label.entry(r).or_insert_with(|| {
            sizes.push(0);
            representatives.push(g.vertices[i]);
            next
        });
        sizes[label] += 1;
        labels.push(label);
    }
    Connectivity { components: sizes.len(), labels, sizes, representatives }
}

fn edge_key(g: &BridgeGraph, e: &Edge) -> (usize, usize) {
    let (a, b) = (g.index(&e.u).unwrap(), g.index(&e.v).unwrap());
    (a.min(b), a.max(b))
}

/// Kruskal over the given edges: order by length, then by the vertex pair.
fn spanning_forest<'a>(g: &BridgeGraph, edges: impl Iterator<Item = &'a Edge>) -> Vec<(usize, usize, f64)> {
    let mut keyed: Vec<(f64, (usize, usize))> = edges.map(|e| (e.length, edge_key(g, e))).collect();
    keyed.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    let mut sets = DisjointSets::new(g.vertices.len());
    keyed.into_iter().filter(|&(_, (a, b))| sets.union(a, b)).map(|(l, (a, b))| (a, b, l)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfClause {
    /// Porous cubes at whose scale `μ(B(x, ℓ)) >= 2ℓ` holds for every `x ∈ Δ ∩ E`, with `ℓ < r0`.
    pub cubes: usize,
    pub sum_side: f64,
    pub sum_mass: f64,
    /// `Σℓ <= Σμ / 2`; `None` when no cube qualifies.
    pub holds: Option<bool>,
    /// `K` in `ℓ(Δ) <= K μ(Δ)` derived from the inner ball and doubling.
    pub derived_factor: f64,
    /// `Σℓ <= K Σμ` over the same cubes.
    pub derived_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBudget {
    /// Length of a minimum spanning forest of the adjacency edges.
    pub e_part: f64,
    /// Total length of all adjacency edges.
    pub e_part_total: f64,
    pub bridge_part: f64,
    pub bound_e: f64,
    pub bound_bridge: f64,
    pub c_pair: f64,
    pub sum_side: f64,
    pub sum_mass: f64,
    /// Whether `μ(B(x, r)) >= 2r` held for every `x ∈ E` and grid radius `r < r0`.
    pub mu_r_holds: bool,
    pub mu_r_failures: usize,
    pub e_within_bound: bool,
    pub bridge_within_bound: bool,
    /// Both bounds hold, or vacuously true when `mu_r_holds` is false.
    pub ok: bool,
    pub vacuous: bool,
    pub half_clause: HalfClause,
}

/// Compares the length of `Γ` with `10 μ(E) + C_pair Σ ℓ(Δ)`.
pub fn length_budget(
    space: &MetricMeasureSpace,
    gamma: &BridgeGraph,
    e: &TargetSet,
    porous: &[PorousCube],
    tree: &CubeTree,
    cfg: &PorosityConfig,
    radii: &[f64],
) -> LengthBudget {
    let is_adj = |p: &Provenance| *p == Provenance::Adjacency;
    let e_part: f64 = spanning_forest(gamma, gamma.edges.iter().filter(|e| is_adj(&e.provenance)))
        .iter()
        .map(|t| t.2)
        .fold(0.0, |a, b| a + b);
    let e_part_total = gamma.length_by(is_adj);
    let bridge_part = gamma.length_by(|p| !is_adj(p));

    let max_pairs = gamma.per_cube.iter().map(|c| c.pairs).max().unwrap_or(0);
    let c_pair = 3.0 * 2.0 * cfg.m * max_pairs as f64;
    let sum_side: f64 = porous.iter().map(|pc| tree.cube(pc.cube).side).fold(0.0, |a, b| a + b);
    let sum_mass: f64 = porous.iter().map(|pc| tree.cube(pc.cube).mass).fold(0.0, |a, b| a + b);
    let bound_e = 10.0 * e.mass(space);
    let bound_bridge = c_pair * sum_side;

    let radial: Vec<_> = par::map(&e.members, |&x| space.radial_mass(x));
    let mu_r_failures: usize = radial
        .iter()
        .map(|rm| radii.iter().filter(|&&r| r < e.r0 && rm.mass_within(r) < 2.0 * r).count())
        .sum();

    let qualifying: Vec<&PorousCube> = porous
        .iter()
        .filter(|pc| {
            let c = tree.cube(pc.cube);
            c.side < e.r0
                && c.members
                    .iter()
                    .filter(|&&x| e.contains(x))
                    .all(|&x| space.radial_mass(x).mass_within(c.side) >= 2.0 * c.side)
        })
        .collect();
    let q_side: f64 = qualifying.iter().map(|pc| tree.cube(pc.cube).side).fold(0.0, |a, b| a + b);
    let q_mass: f64 = qualifying.iter().map(|pc| tree.cube(pc.cube).mass).fold(0.0, |a, b| a + b);
    // B(x, ℓ) ⊆ B(ζ, 2ℓ) and 2^k c0 >= 2 give μ(B(x, ℓ)) <= C^k μ(Δ).
    let c0 = tree.c0_achieved;
    let derived_factor = if c0 > 0.0 {
        0.5 * cfg.c_mu.max(1.0).powi((2.0 / c0).log2().ceil().max(0.0) as i32)
    } else {
        f64::INFINITY
    };
    let any = !qualifying.is_empty();
    let half_clause = HalfClause {
        cubes: qualifying.len(),
        sum_side: q_side,
        sum_mass: q_mass,
        holds: any.then(|| q_side <= 0.5 * q_mass),
        derived_factor,
        derived_holds: any.then(|| q_side <= derived_factor * q_mass),
    };

    LengthBudget {
        e_part,
        e_part_total,
        bridge_part,
        bound_e,
        bound_bridge,
        c_pair,
        sum_side,
        sum_mass,
        mu_r_holds: mu_r_failures == 0,
        mu_r_failures,
        e_within_bound: e_part <= bound_e,
        bridge_within_bound: bridge_part <= bound_bridge,
        ok: mu_r_failures > 0 || (e_part <= bound_e && bridge_part <= bound_bridge),
        vacuous: mu_r_failures > 0,
        half_clause,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveParametrization {
    pub visits: Vec<Vertex>,
    pub t: Vec<f64>,
    pub tree_length: f64,
    pub lip_bound: f64,
}

/// Doubled depth-first traversal of the minimum spanning tree, starting at the
/// smallest vertex and taking children in ascending order.
pub fn parametrize(g: &BridgeGraph) -> Result<CurveParametrization> {
    let n = g.vertices.len();
    if n == 0 {
        return Err(Error::Degenerate("cannot parametrize an empty graph".into()));
    }
    let conn = connectivity(g);
    if conn.components > 1 {
        return Err(Error::Disconnected { components: conn.components });
    }
    if n == 1 {
        return Ok(CurveParametrization {
            visits: vec![g.vertices[0]; 2],
            t: vec![0.0, 1.0],
            tree_length: 0.0,
            lip_bound: 0.0,
        });
    }
    let forest = spanning_forest(g, g.edges.iter());
    let mut children: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, l) in &forest {
        children[a].push((b, l));
        children[b].push((a, l));
    }
    for c in &mut children {
        c.sort_by_key(|&(v, _)| v);
    }
    let tree_length = forest.iter().map(|t| t.2).fold(0.0, |a, b| a + b);

    let mut visits = vec![0usize];
    let mut cum = vec![0.0];
    // (vertex, parent, next child slot, length of edge to parent)
    let mut stack = vec![(0usize, usize::MAX, 0usize, 0.0)];
    let mut walked = 0.0;
    while let Some(top) = stack.last_mut() {
        let (v, parent, slot, _) = *top;
        if let Some(&(w, l)) = children[v][slot..].iter().find(|&&(w, _)| w != parent) {
            top.2 = children[v].iter().position(|&(x, _)| x == w).unwrap() + 1;
            walked += l;
            visits.push(w);
            cum.push(walked);
            stack.push((w, v, 0, l));
        } else {
            let (_, _, _, l) = stack.pop().unwrap();
            if let Some(&(p, _, _, _)) = stack.last() {
                walked += l;
                visits.push(p);
                cum.push(walked);
            }
        }
    }
    // normalize by the walked length itself so the last parameter is exactly 1
    let total = walked;
    let t = cum.iter().map(|&c| if total > 0.0 { c / total } else { 0.0 }).collect();
    Ok(CurveParametrization {
        visits: visits.into_iter().map(|i| g.vertices[i]).collect(),
        t,
        tree_length,
        lip_bound: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzWitness {
    pub s: f64,
    pub t: f64,
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub surjective: bool,
    pub adjacent_steps: bool,
    pub monotone: bool,
    pub pairs_checked: usize,
    /// Largest certified `distance / |s - t|` over the random pairs.
    pub max_ratio: f64,
    /// The same over consecutive visits, where `t` carries only a few ulps of precision.
    pub max_step_ratio: f64,
    pub lip_bound: f64,
    pub lipschitz: bool,
    pub witness: Option<LipschitzWitness>,
    pub ok: bool,
}

/// Verifies surjectivity, adjacency of consecutive visits, and the Lipschitz
/// bound on every consecutive visit pair plus `sample_pairs` random parameter
/// pairs (seeded by `seed`). Distances along the traversal bound the graph
/// metric from above; only pairs exceeding the bound that way are re-measured
/// with exact shortest paths.
pub fn check_parametrization(
    param: &CurveParametrization,
    g: &BridgeGraph,
    sample_pairs: usize,
    seed: u64,
) -> ParamCheck {
    let lip = param.lip_bound;
    // relative tolerance plus a few units of parameter precision
    let allowed = |gap: f64| lip * (gap * (1.0 + 1e-9) + 4.0 * f64::EPSILON);
    let idx: Vec<usize> = param.visits.iter().map(|v| g.index(v).unwrap_or(usize::MAX)).collect();
    let mut seen = vec![false; g.vertices.len()];
    for &i in idx.iter().filter(|&&i| i != usize::MAX) {
        seen[i] = true;
    }
    let surjective = idx.iter().all(|&i| i != usize::MAX) && seen.iter().all(|&s| s);

    let mut edge_len: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in &g.edges {
        let k = edge_key(g, e);
        let l = edge_len.entry(k).or_insert(f64::INFINITY);
        *l = l.min(e.length);
    }
    let step_len: Vec<Option<f64>> =
        idx.windows(2)
            .map(|w| {
                if w[0] == w[1] {
                    Some(0.0)
                } else {
                    edge_len.get(&(w[0].min(w[1]), w[0].max(w[1]))).copied()
                }
            })
            .collect();
    let adjacent_steps = step_len.iter().all(Option::is_some);
    let steps: Vec<f64> = step_len.iter().map(|l| l.unwrap_or(f64::INFINITY)).collect();
    let monotone = param.t.windows(2).all(|w| w[0] <= w[1])
        && param.t.first() == Some(&0.0)
        && param.t.last() == Some(&1.0);

    let adj = g.adjacency();
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut graph_dist =
        |a: usize, b: usize| -> f64 { cache.entry(a).or_insert_with(|| dijkstra(&adj, &[a]))[b] };

    let mut max_ratio: f64 = 0.0;
    let mut max_step_ratio: f64 = 0.0;
    let mut witness: Option<LipschitzWitness> = None;
    let mut pairs_checked = 0;
    let record = |s: f64, t: f64, d: f64, max_ratio: &mut f64, witness: &mut Option<LipschitzWitness>| {
        let gap = (s - t).abs();
        let ratio = if gap > 0.0 {
            d / gap
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > *max_ratio {
            *max_ratio = ratio;
        }
        if d > allowed(gap) && witness.as_ref().map_or(true, |w| ratio > w.ratio) {
            *witness = Some(LipschitzWitness { s, t, distance: d, ratio });
        }
    };

    // consecutive visits
    for (k, w) in idx.windows(2).enumerate() {
        if w[0] == usize::MAX || w[1] == usize::MAX {
            continue;
        }
        pairs_checked += 1;
        let (s, t) = (param.t[k], param.t[k + 1]);
        let upper = steps[k];
        let d = if upper > allowed((s - t).abs()) { graph_dist(w[0], w[1]) } else { upper };
        record(s, t, d, &mut max_step_ratio, &mut witness);
    }

    // random parameter pairs, positions interpolated along the traversal
    if monotone && adjacent_steps && idx.len() >= 2 {
        let mut along = vec![0.0];
        for &l in &steps {
            along.push(along.last().unwrap() + l);
        }
        let locate = |s: f64| -> (usize, f64) {
            let k = param.t.partition_point(|&x| x <= s).clamp(1, param.t.len() - 1) - 1;
            let span = param.t[k + 1] - param.t[k];
            let f = if span > 0.0 { ((s - param.t[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
            (k, f)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..sample_pairs {
            let (s, t): (f64, f64) = (rng.gen(), rng.gen());
            if s == t {
                continue;
            }
            pairs_checked += 1;
            let (ks, fs) = locate(s);
            let (kt, ft) = locate(t);
            let ps = along[ks] + fs * steps[ks];
            let pt = along[kt] + ft * steps[kt];
            let upper = (ps - pt).abs();
            let d = if upper > allowed((s - t).abs()) {
                // exact: exit each point's edge through either end
                let ends = |k: usize, f: f64| [(idx[k], f * steps[k]), (idx[k + 1], (1.0 - f) * steps[k])];
                let mut best = if ks == kt { (fs - ft).abs() * steps[ks] } else { f64::INFINITY };
                for (a, da) in ends(ks, fs) {
                    for (b, db) in ends(kt, ft) {
                        best = best.min(da + graph_dist(a, b) + db);
                    }
                }
                best
            } else {
                upper
            };
            record(s, t, d, &mut max_ratio, &mut witness);
        }
    }
    let lipschitz = witness.is_none();
    ParamCheck {
        surjective,
        adjacent_steps,
        monotone,
        pairs_checked,
        max_ratio,
        max_step_ratio,
        lip_bound: lip,
        lipschitz,
        witness,
        ok: surjective && adjacent_steps && monotone && lipschitz,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCheck {
    pub lifted_checked: usize,
    pub max_error: f64,
    pub ok: bool,
}

/// For every lifted vertex `v` of bridge `(x, y)`, compares the graph distance
/// from `v` to the ground vertices `f` with the best route leaving the bridge
/// at `x` or at `y`.
pub fn check_bridge_exits(g: &BridgeGraph, f: &[usize]) -> ExitCheck {
    let sources: Vec<usize> = f.iter().filter_map(|&p| g.index(&Vertex::Ground(p))).collect();
    let dist = g.distances_from(&sources);
    let mut bridge_len = BTreeMap::new();
    for e in &g.edges {
        if let Vertex::Lifted { x, y, .. } = e.u {
            bridge_len.insert((x, y), e.length);
        }
    }
    let mut max_error: f64 = 0.0;
    let mut lifted_checked = 0;
    for (i, v) in g.vertices.iter().enumerate() {
        let Vertex::Lifted { x, y, end } = *v else { continue };
        let d = bridge_len[&(x, y)];
        let near = if end == x { (d, 2.0 * d) } else { (2.0 * d, d) };
        let dx = g.index(&Vertex::Ground(x)).map_or(f64::INFINITY, |k| dist[k]);
        let dy = g.index(&Vertex::Ground(y)).map_or(f64::INFINITY, |k| dist[k]);
        let expected = (near.0 + dx).min(near.1 + dy);
        let err = if expected.is_infinite() && dist[i].is_infinite() {
            0.0
        } else {
            (dist[i] - expected).abs() / expected.max(1e-300)
        };
        max_error = max_error.max(err);
        lifted_checked += 1;
    }
    ExitCheck { lifted_checked, max_error, ok: max_error <= 1e-12 }
}
