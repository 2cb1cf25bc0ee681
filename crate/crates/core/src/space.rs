//! Finite metric measure spaces.
//!
//! A [`MetricMeasureSpace`] is a weighted point set with a distance oracle:
//! either Euclidean coordinates or an explicit symmetric matrix. Points are
//! addressed internally by their index, and indices are ordered by the
//! external point id, so "smaller id" tie-breaks and "smaller index"
//! tie-breaks coincide everywhere in the crate.
//!
//! Balls are open: `B(x, r) = { p : dist(x, p) < r }`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::par;

/// Number of random triples checked for the triangle inequality on matrix input.
pub const TRIANGLE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
enum Metric {
    Euclidean { dim: usize, coords: Vec<f64> },
    Matrix { data: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricMeasureSpace {
    ids: Vec<u64>,
    metric: Metric,
    weights: Vec<f64>,
    index: HashMap<u64, usize>,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(param(format!("weights must be finite and nonnegative, got {w}")));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Degenerate("total mass must be positive".into()));
    }
    Ok(())
}

fn sort_permutation(ids: &[u64]) -> Result<Vec<usize>> {
    let mut perm: Vec<usize> = (0..ids.len()).collect();
    perm.sort_by_key(|&i| ids[i]);
    if let Some(w) = perm.windows(2).find(|w| ids[w[0]] == ids[w[1]]) {
        return Err(Error::Input(format!("duplicate point id {}", ids[w[0]])));
    }
    Ok(perm)
}

impl MetricMeasureSpace {
    /// Euclidean space from per-point coordinate vectors.
    pub fn from_coords(ids: Vec<u64>, coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Degenerate("empty point set".into()));
        }
        if coords.len() != n || weights.len() != n {
            return Err(Error::Input(format!(
                "length mismatch: {} ids, {} coordinate rows, {} weights",
                n,
                coords.len(),
                weights.len()
            )));
        }
        let dim = coords[0].len();
        if dim == 0 {
            return Err(Error::Input("coordinates must have at least one component".into()));
        }
        if let Some(row) = coords.iter().find(|c| c.len() != dim) {
            return Err(Error::Input(format!("inconsistent dimension: expected {dim}, found {}", row.len())));
        }
        if coords.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        check_weights(&weights)?;

        let perm = sort_permutation(&ids)?;
        let mut flat = Vec::with_capacity(n * dim);
        for &i in &perm {
            flat.extend_from_slice(&coords[i]);
        }
        Ok(Self::assemble(
            perm.iter().map(|&i| ids[i]).collect(),
            Metric::Euclidean { dim, coords: flat },
            perm.iter().map(|&i| weights[i]).collect(),
        ))
    }

    /// Space with unit-free ids `0..n` and the given coordinates.
    pub fn from_points(coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let ids = (0..coords.len() as u64).collect();
        Self::from_coords(ids, coords, weights)
    }

    /// Space from an explicit distance matrix.
    ///
    /// Symmetry, zero diagonal and nonnegativity are checked exactly; the
    /// triangle inequality is checked on [`TRIANGLE_SAMPLES`] random triples.
    pub fn from_matrix(ids: Vec<u64>, matrix: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Degenerate("empty point set".into()));
        }
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) || weights.len() != n {
            return Err(Error::Input(format!("distance matrix must be {n}x{n} with {n} weights")));
        }
        check_weights(&weights)?;
        for i in 0..n {
            if matrix[i][i] != 0.0 {
                return Err(Error::InvalidMetric(format!("dist(p,p) = {} at row {i}", matrix[i][i])));
            }
            for j in 0..i {
                let (a, b) = (matrix[i][j], matrix[j][i]);
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidMetric(format!("entry ({i},{j}) = {a}")));
                }
                if a != b {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i},{j}): {a} vs {b}")));
                }
            }
        }

        let perm = sort_permutation(&ids)?;
        let mut data = Vec::with_capacity(n * n);
        for &i in &perm {
            for &j in &perm {
                data.push(matrix[i][j]);
            }
        }
        let space = Self::assemble(
            perm.iter().map(|&i| ids[i]).collect(),
            Metric::Matrix { data },
            perm.iter().map(|&i| weights[i]).collect(),
        );
        space.check_triangle_samples(TRIANGLE_SAMPLES, 0)?;
        Ok(space)
    }

    fn assemble(ids: Vec<u64>, metric: Metric, weights: Vec<f64>) -> Self {
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Self { ids, metric, weights, index }
    }

    /// Checks the triangle inequality on `samples` random triples.
    pub fn check_triangle_samples(&self, samples: usize, seed: u64) -> Result<()> {
        let n = self.len();
        if n < 3 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            let (ab, bc, ac) = (self.dist(a, b), self.dist(b, c), self.dist(a, c));
            let slack = 1e-12 * (ab + bc + ac).max(1.0);
            if ac > ab + bc + slack {
                return Err(Error::InvalidMetric(format!(
                    "triangle inequality fails on ids ({}, {}, {}): {ac} > {ab} + {bc}",
                    self.ids[a], self.ids[b], self.ids[c]
                )));
            }
        }
        Ok(())
    }

    /// Copy of the space with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let weights: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        check_weights(&weights)?;
        Ok(Self { weights, ..self.clone() })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn index_of(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownPoint(id))
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass_of(&self, points: &[usize]) -> f64 {
        points.iter().map(|&i| self.weights[i]).sum()
    }

    /// Coordinate dimension, `None` for matrix-backed spaces.
    pub fn dim(&self) -> Option<usize> {
        match &self.metric {
            Metric::Euclidean { dim, .. } => Some(*dim),
            Metric::Matrix { .. } => None,
        }
    }

    pub fn coords(&self, i: usize) -> Option<&[f64]> {
        match &self.metric {
            Metric::Euclidean { dim, coords } => Some(&coords[i * dim..(i + 1) * dim]),
            Metric::Matrix { .. } => None,
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Euclidean { dim, coords } => {
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Metric::Matrix { data } => data[i * self.ids.len() + j],
        }
    }

    /// Indices of the points in the open ball `B(center, radius)`, ascending.
    pub fn ball_members(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.dist(center, p) < radius).collect()
    }

    pub fn diameter(&self) -> f64 {
        let n = self.len();
        par::map_range(n, |i| (i + 1..n).map(|j| self.dist(i, j)).fold(0.0, f64::max))
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Largest nearest-neighbour distance: the sampling resolution.
    pub fn resolution(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        par::map_range(n, |i| {
            (0..n).filter(|&j| j != i).map(|j| self.dist(i, j)).fold(f64::INFINITY, f64::min)
        })
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// `dist(p, S)` for every point `p`.
    pub fn distances_to_set(&self, set: &[usize]) -> Vec<f64> {
        par::map_range(self.len(), |p| set.iter().map(|&q| self.dist(p, q)).fold(f64::INFINITY, f64::min))
    }

    /// `mu(B(center, r))` for every radius, via one sorted distance sweep.
    pub fn radial_mass(&self, center: usize) -> RadialMass {
        let mut pairs: Vec<(f64, usize)> = (0..self.len()).map(|p| (self.dist(center, p), p)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut cum = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for &(_, p) in &pairs {
            acc += self.weights[p];
            cum.push(acc);
        }
        RadialMass { dists: pairs.into_iter().map(|(d, _)| d).collect(), cum }
    }

    /// `mu(B(b.center, b.radius))`.
    pub fn ball_mass(&self, b: &Ball) -> Result<f64> {
        let c = self.index_of(b.center)?;
        if !(b.radius > 0.0) {
            return Err(param(format!("ball radius must be positive, got {}", b.radius)));
        }
        Ok((0..self.len()).filter(|&p| self.dist(c, p) < b.radius).map(|p| self.weights[p]).sum())
    }
}

/// Ball masses around one center at arbitrary radii.
#[derive(Debug, Clone)]
pub struct RadialMass {
    dists: Vec<f64>,
    cum: Vec<f64>,
}

impl RadialMass {
    /// Mass strictly within `r`.
    pub fn mass_within(&self, r: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d < r);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }
}

/// An open ball around a point, addressed by external point id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: u64,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: u64, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// The compact set `E` of the reduction step, with its enclosing ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    /// Point indices, ascending.
    pub members: Vec<usize>,
    pub r0: f64,
    pub xi0: usize,
}

impl TargetSet {
    pub fn new(space: &MetricMeasureSpace, mut members: Vec<usize>, xi0: usize, r0: f64) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::Degenerate("target set is empty".into()));
        }
        if let Some(&p) = members.iter().find(|&&p| p >= space.len()) {
            return Err(Error::Input(format!("target index {p} out of range")));
        }
        if xi0 >= space.len() {
            return Err(Error::Input(format!("center index {xi0} out of range")));
        }
        if let Some(&p) = members.iter().find(|&&p| !(space.dist(xi0, p) < r0 / 2.0)) {
            return Err(param(format!("target point id {} is not inside B(xi0, r0/2)", space.id(p))));
        }
        Ok(Self { members, r0, xi0 })
    }

    /// Encloses `members` in the smallest ball centered at a space point
    /// (ties to the smaller id), with `r0` just above twice its radius.
    pub fn enclosing(space: &MetricMeasureSpace, members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Degenerate("target set is empty".into()));
        }
        let radii =
            par::map_range(space.len(), |c| members.iter().map(|&p| space.dist(c, p)).fold(0.0, f64::max));
        let (xi0, &rad) = radii
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("space is nonempty");
        let r0 = if rad > 0.0 { 2.0 * rad * (1.0 + 1e-9) } else { f64::EPSILON };
        Self::new(space, members, xi0, r0)
    }

    /// The whole space as target.
    pub fn all(space: &MetricMeasureSpace) -> Result<Self> {
        Self::enclosing(space, (0..space.len()).collect())
    }

    pub fn contains(&self, p: usize) -> bool {
        self.members.binary_search(&p).is_ok()
    }

    pub fn mass(&self, space: &MetricMeasureSpace) -> f64 {
        space.mass_of(&self.members)
    }
}

/// Result of [`doubling_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingEstimate {
    pub c_hat: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub worst_center: u64,
    pub worst_radius: f64,
}

/// Maximum of `mu(B(x,2r)) / mu(B(x,r))` over the sampled centers and radii.
/// Pairs with an empty inner ball are skipped and counted.
pub fn doubling_estimate(
    space: &MetricMeasureSpace,
    radii: &[f64],
    centers: &[usize],
) -> Result<DoublingEstimate> {
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(param(format!("radii must be positive, got {r}")));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= space.len()) {
        return Err(Error::Input(format!("center index {c} out of range")));
    }
    let per_center = par::map(centers, |&c| {
        let rm = space.radial_mass(c);
        let mut best: Option<(f64, f64)> = None;
        let mut skipped = 0;
        for &r in radii {
            let inner = rm.mass_within(r);
            if inner <= 0.0 {
                skipped += 1;
                continue;
            }
            let ratio = rm.mass_within(2.0 * r) / inner;
            if best.map_or(true, |(b, _)| ratio > b) {
                best = Some((ratio, r));
            }
        }
        (c, best, skipped)
    });

    let skipped: usize = per_center.iter().map(|x| x.2).sum();
    let evaluated = centers.len() * radii.len() - skipped;
    let mut worst: Option<(f64, usize, f64)> = None;
    for (c, best, _) in per_center {
        if let Some((ratio, r)) = best {
            if worst.map_or(true, |(b, _, _)| ratio > b) {
                worst = Some((ratio, c, r));
            }
        }
    }
    let (c_hat, c, r) = worst
        .ok_or_else(|| Error::Degenerate("every (center, radius) pair has an empty inner ball".into()))?;
    Ok(DoublingEstimate { c_hat, evaluated, skipped, worst_center: space.id(c), worst_radius: r })
}

/// Greedy Vitali 5r-subcover: balls by decreasing radius (ties to the smaller
/// center id), keeping each ball whose members avoid every kept ball.
pub fn vitali_subcover(space: &MetricMeasureSpace, balls: &[Ball]) -> Result<Vec<Ball>> {
    let mut resolved = Vec::with_capacity(balls.len());
    for b in balls {
        resolved.push((space.index_of(b.center)?, *b));
    }
    resolved.sort_by(|a, b| b.1.radius.total_cmp(&a.1.radius).then(a.0.cmp(&b.0)));

    let mut taken = vec![false; space.len()];
    let mut selected = Vec::new();
    for (c, b) in resolved {
        let members = space.ball_members(c, b.radius);
        if members.iter().all(|&p| !taken[p]) {
            for p in members {
                taken[p] = true;
            }
            selected.push(b);
        }
    }
    Ok(selected)
}

/// Upper and lower heuristics for the spherical `H^1_delta` of a target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HausdorffEstimate {
    pub delta: f64,
    pub upper: f64,
    pub lower: f64,
    pub cover: Vec<Ball>,
    pub packing: Vec<Ball>,
    /// Candidate radii tried by the greedy cover, descending.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    radius_rank: usize,
    center: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // max-heap: larger value, then larger radius (smaller rank), then smaller center
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(other.radius_rank.cmp(&self.radius_rank))
            .then(other.center.cmp(&self.center))
    }
}

/// [`hausdorff_estimate_with`] with `r_min = 1e-12 * delta`.
pub fn hausdorff_estimate(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    delta: f64,
) -> Result<HausdorffEstimate> {
    hausdorff_estimate_with(space, e, delta, 1e-12 * delta)
}

/// Greedy spherical cover of `E` by balls centered in `E` with radii below `delta`.
///
/// Each sample point `p` stands for a cell of radius `pad(p)` (half its
/// nearest-neighbour distance within `E`, capped at `delta/4`); a ball covers
/// `p` only when `dist(x, p) + pad(p) < r`. Candidate radii are
/// `delta/2, delta/4, ...` down to the cell scale, plus `r_min`. The greedy
/// step takes the ball with the most uncovered mass per unit radius (ties: the
/// larger radius, then the smaller center id). `upper` sums `2r` over the
/// cover; `lower` sums `2r/5` over its Vitali subfamily.
pub fn hausdorff_estimate_with(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    delta: f64,
    r_min: f64,
) -> Result<HausdorffEstimate> {
    if !(delta > 0.0) {
        return Err(param(format!("delta must be positive, got {delta}")));
    }
    if !(r_min > 0.0) || r_min >= delta {
        return Err(param(format!("r_min must lie in (0, delta), got {r_min}")));
    }
    let members = &e.members;
    let m = members.len();
    let pad: Vec<f64> = par::map(members, |&p| {
        let nn = members.iter().filter(|&&q| q != p).map(|&q| space.dist(p, q)).fold(f64::INFINITY, f64::min);
        if nn.is_finite() {
            (nn / 2.0).min(delta / 4.0)
        } else {
            0.0
        }
    });
    let max_pad = pad.iter().copied().fold(0.0, f64::max);

    let mut radii = vec![delta / 2.0];
    loop {
        let next = radii.last().unwrap() / 2.0;
        if next <= 2.0 * max_pad || next < r_min || radii.len() >= 64 {
            break;
        }
        radii.push(next);
    }
    if r_min < *radii.last().unwrap() {
        radii.push(r_min);
    }
    let reach = radii[0];

    // per center: (dist + pad, member slot), ascending
    let neighbours: Vec<Vec<(f64, usize)>> = par::map_range(m, |a| {
        let mut v: Vec<(f64, usize)> = (0..m)
            .map(|b| (space.dist(members[a], members[b]) + pad[b], b))
            .filter(|&(k, _)| k < reach)
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        v
    });

    let mut covered = vec![false; m];
    let value = |covered: &[bool], a: usize, rank: usize| -> f64 {
        let r = radii[rank];
        let mass: f64 = neighbours[a]
            .iter()
            .take_while(|(k, _)| *k < r)
            .filter(|(_, b)| !covered[*b])
            .map(|(_, b)| space.weight(members[*b]))
            .sum();
        mass / r
    };

    let mut heap = BinaryHeap::new();
    for a in 0..m {
        for rank in 0..radii.len() {
            let v = value(&covered, a, rank);
            if v > 0.0 {
                heap.push(Candidate { value: v, radius_rank: rank, center: a });
            }
        }
    }

    let mut cover = Vec::new();
    let mut take = |a: usize, rank: usize, covered: &mut Vec<bool>| {
        let r = radii[rank];
        for &(k, b) in &neighbours[a] {
            if k >= r {
                break;
            }
            covered[b] = true;
        }
        cover.push(Ball::new(space.id(members[a]), r));
    };
    while let Some(top) = heap.pop() {
        let fresh = value(&covered, top.center, top.radius_rank);
        if fresh <= 0.0 {
            continue;
        }
        if fresh == top.value {
            take(top.center, top.radius_rank, &mut covered);
        } else {
            heap.push(Candidate { value: fresh, ..top });
        }
    }
    // massless leftovers: each takes the smallest candidate ball covering itself
    for a in 0..m {
        if !covered[a] {
            let rank = (0..radii.len()).rev().find(|&k| pad[a] < radii[k]).unwrap_or(0);
            take(a, rank, &mut covered);
        }
    }

    let upper = cover.iter().map(|b| 2.0 * b.radius).sum();
    let packing = vitali_subcover(space, &cover)?;
    let lower = packing.iter().map(|b| 2.0 * b.radius / 5.0).sum();
    Ok(HausdorffEstimate { delta, upper, lower, cover, packing, radii })
}
