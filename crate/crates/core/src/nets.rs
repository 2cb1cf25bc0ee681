//! Nested maximal `rho^n`-nets.
//!
//! Level `n` has scale `rho^n`. Separation is `dist >= rho^n` and covering is
//! `dist < rho^n`, so a point at exactly `rho^n` from every member is still
//! admitted and the two conditions hold together on finite sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::space::MetricMeasureSpace;

/// Order in which non-member points are offered to each level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    #[default]
    Ascending,
    FarthestPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHierarchy {
    pub rho: f64,
    pub n_min: i32,
    pub n_max: i32,
    /// `levels[k]` is `X_{n_min + k}` as ascending point indices.
    levels: Vec<Vec<usize>>,
}

impl NetHierarchy {
    /// Assembles a hierarchy from explicit levels (no validation; see [`verify_nets`]).
    pub fn from_levels(rho: f64, n_min: i32, levels: Vec<Vec<usize>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(param("hierarchy needs at least one level"));
        }
        let n_max = n_min + levels.len() as i32 - 1;
        let levels = levels
            .into_iter()
            .map(|mut l| {
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        Ok(Self { rho, n_min, n_max, levels })
    }

    pub fn scale(&self, n: i32) -> f64 {
        self.rho.powi(n)
    }

    pub fn contains_level(&self, n: i32) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    /// `X_n`, ascending point indices.
    pub fn level(&self, n: i32) -> &[usize] {
        &self.levels[(n - self.n_min) as usize]
    }

    pub fn level_mut(&mut self, n: i32) -> &mut Vec<usize> {
        &mut self.levels[(n - self.n_min) as usize]
    }

    pub fn levels(&self) -> impl Iterator<Item = (i32, &[usize])> {
        self.levels.iter().enumerate().map(move |(k, l)| (self.n_min + k as i32, l.as_slice()))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// The JSON dump `{rho, levels: {n: [ids]}}`.
    pub fn to_json(&self, space: &MetricMeasureSpace) -> serde_json::Value {
        let levels: BTreeMap<i32, Vec<u64>> =
            self.levels().map(|(n, pts)| (n, pts.iter().map(|&p| space.id(p)).collect())).collect();
        serde_json::json!({ "rho": self.rho, "levels": levels })
    }
}

/// Configurable net construction.
#[derive(Debug, Clone)]
pub struct NetBuilder {
    rho: f64,
    n_min: i32,
    n_max: i32,
    seeds: Vec<usize>,
    order: ScanOrder,
}

impl NetBuilder {
    pub fn new(rho: f64, n_min: i32, n_max: i32) -> Self {
        Self { rho, n_min, n_max, seeds: Vec::new(), order: ScanOrder::Ascending }
    }

    /// Points offered first at the coarsest level, in the given order.
    pub fn seeds(mut self, seeds: Vec<usize>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn order(mut self, order: ScanOrder) -> Self {
        self.order = order;
        self
    }

    pub fn build(&self, space: &MetricMeasureSpace) -> Result<NetHierarchy> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(param(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.n_min > self.n_max {
            return Err(param(format!("n_min {} exceeds n_max {}", self.n_min, self.n_max)));
        }
        if let Some(&s) = self.seeds.iter().find(|&&s| s >= space.len()) {
            return Err(Error::Input(format!("seed index {s} out of range")));
        }

        let n = space.len();
        let mut member = vec![false; n];
        let mut members: Vec<usize> = Vec::new();
        // distance from every point to the current member set
        let mut near = vec![f64::INFINITY; n];
        let admit = |p: usize, member: &mut Vec<bool>, members: &mut Vec<usize>, near: &mut Vec<f64>| {
            member[p] = true;
            members.push(p);
            for (q, d) in near.iter_mut().enumerate() {
                let pq = space.dist(p, q);
                if pq < *d {
                    *d = pq;
                }
            }
        };

        let mut levels = Vec::with_capacity((self.n_max - self.n_min + 1) as usize);
        for level in self.n_min..=self.n_max {
            let r = self.rho.powi(level);
            if level == self.n_min {
                for &s in &self.seeds {
                    if !member[s] && near[s] >= r {
                        admit(s, &mut member, &mut members, &mut near);
                    }
                }
            }
            match self.order {
                ScanOrder::Ascending => {
                    for p in 0..n {
                        if !member[p] && near[p] >= r {
                            admit(p, &mut member, &mut members, &mut near);
                        }
                    }
                }
                ScanOrder::FarthestPoint => loop {
                    let pick = (0..n)
                        .filter(|&p| !member[p])
                        .max_by(|&a, &b| near[a].total_cmp(&near[b]).then(b.cmp(&a)));
                    match pick {
                        Some(p) if near[p] >= r => admit(p, &mut member, &mut members, &mut near),
                        _ => break,
                    }
                },
            }
            let mut sorted = members.clone();
            sorted.sort_unstable();
            levels.push(sorted);
        }
        Ok(NetHierarchy { rho: self.rho, n_min: self.n_min, n_max: self.n_max, levels })
    }
}

/// Ascending-scan nets with no seeds.
pub fn build_nets(space: &MetricMeasureSpace, rho: f64, n_min: i32, n_max: i32) -> Result<NetHierarchy> {
    NetBuilder::new(rho, n_min, n_max).build(space)
}

/// Largest `n` with `rho^n > diam`: the level whose net is a single point.
pub fn coarsest_level(rho: f64, diam: f64) -> i32 {
    if diam <= 0.0 {
        return 0;
    }
    let mut n = (diam.ln() / rho.ln()).ceil() as i32;
    while rho.powi(n) <= diam {
        n -= 1;
    }
    while rho.powi(n + 1) > diam {
        n += 1;
    }
    n
}

/// Largest `n` with `rho^n > target` (for choosing the finest level).
pub fn finest_level_above(rho: f64, target: f64) -> i32 {
    coarsest_level(rho, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetViolation {
    NotNested { level: i32, point: u64 },
    TooClose { level: i32, a: u64, b: u64, dist: f64 },
    Uncovered { level: i32, point: u64, dist: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetReport {
    pub nesting: bool,
    pub separation: bool,
    pub covering: bool,
    pub witnesses: Vec<NetViolation>,
}

impl NetReport {
    pub fn ok(&self) -> bool {
        self.nesting && self.separation && self.covering
    }
}

/// Checks nesting, separation and covering, recording the first violation of each.
pub fn verify_nets(h: &NetHierarchy, space: &MetricMeasureSpace) -> NetReport {
    let mut witnesses = Vec::new();

    let mut nesting = None;
    for (n, pts) in h.levels().skip(1) {
        let coarser = h.level(n - 1);
        if let Some(&p) = coarser.iter().find(|p| pts.binary_search(p).is_err()) {
            nesting = Some(NetViolation::NotNested { level: n, point: space.id(p) });
            break;
        }
    }

    let mut separation = None;
    'sep: for (n, pts) in h.levels() {
        let r = h.scale(n);
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                let d = space.dist(a, b);
                if d < r {
                    separation =
                        Some(NetViolation::TooClose { level: n, a: space.id(a), b: space.id(b), dist: d });
                    break 'sep;
                }
            }
        }
    }

    let mut covering = None;
    'cov: for (n, pts) in h.levels() {
        let r = h.scale(n);
        for p in 0..space.len() {
            let d = pts.iter().map(|&q| space.dist(p, q)).fold(f64::INFINITY, f64::min);
            if !(d < r) {
                covering = Some(NetViolation::Uncovered { level: n, point: space.id(p), dist: d });
                break 'cov;
            }
        }
    }

    let report = NetReport {
        nesting: nesting.is_none(),
        separation: separation.is_none(),
        covering: covering.is_none(),
        witnesses: Vec::new(),
    };
    witnesses.extend(nesting);
    witnesses.extend(separation);
    witnesses.extend(covering);
    NetReport { witnesses, ..report }
}

/// For each level `n < n_max`: the largest `|X_{n+1} ∩ B(x, rho^n)|` over `x in X_n`.
pub fn local_child_counts(h: &NetHierarchy, space: &MetricMeasureSpace) -> Vec<(i32, usize)> {
    h.levels()
        .filter(|(n, _)| *n < h.n_max)
        .map(|(n, pts)| {
            let finer = h.level(n + 1);
            let r = h.scale(n);
            let worst = pts
                .iter()
                .map(|&x| finer.iter().filter(|&&y| space.dist(x, y) < r).count())
                .max()
                .unwrap_or(0);
            (n, worst)
        })
        .collect()
}
