//! Deterministic test measures.
//!
//! `resolution` is the point count for `interval`, `circle` and
//! `lipschitz_curve`, the side `m` for `grid2d`, and the construction level
//! for `cantor4`, `koch` and `cascade`. A nonzero seed only permutes the
//! point ids; coordinates and weights do not depend on it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::space::{MetricMeasureSpace, TargetSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Interval,
    Circle,
    Grid2d,
    Cantor4,
    Koch,
    Cascade,
    LipschitzCurve,
}

impl std::str::FromStr for GeneratorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| param(format!("unknown generator kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub resolution: usize,
    /// `interval`: hole endpoints `a1, b1, a2, b2, ...`, removed from the target.
    /// `cascade`: four quadrant ratios (SW, SE, NW, NE), default `0.3, 0.2, 0.3, 0.2`.
    /// `lipschitz_curve`: `coils, x0, y0, x1, y1, ...`.
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, resolution: usize) -> Self {
        GeneratorSpec { kind, resolution, params: Vec::new(), seed: 0 }
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub space: MetricMeasureSpace,
    /// Target point ids, when the generator singles out a proper subset.
    pub target_ids: Option<Vec<u64>>,
}

impl Generated {
    /// The generator's target, or the whole space.
    pub fn target(&self) -> Result<TargetSet> {
        match &self.target_ids {
            None => TargetSet::all(&self.space),
            Some(ids) => {
                let members = ids.iter().map(|&id| self.space.index_of(id)).collect::<Result<Vec<_>>>()?;
                TargetSet::enclosing(&self.space, members)
            }
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let n = spec.resolution;
    if n < 1
        || (n < 2
            && !matches!(spec.kind, GeneratorKind::Cantor4 | GeneratorKind::Koch | GeneratorKind::Cascade))
    {
        return Err(param(format!("resolution must be at least 2, got {n}")));
    }
    let (coords, weights, in_target) = match spec.kind {
        GeneratorKind::Interval => interval(n, &spec.params)?,
        GeneratorKind::Circle => all_in(circle(n)),
        GeneratorKind::Grid2d => all_in(grid2d(n)),
        GeneratorKind::Cantor4 => all_in(cantor4(level(n, 7)?)),
        GeneratorKind::Koch => all_in(koch(level(n, 7)?)),
        GeneratorKind::Cascade => all_in(cascade(level(n, 7)?, &spec.params)?),
        GeneratorKind::LipschitzCurve => all_in(lipschitz_curve(n, &spec.params)?),
    };
    let mut ids: Vec<u64> = (0..coords.len() as u64).collect();
    if spec.seed != 0 {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    let target_ids = if in_target.iter().all(|&b| b) {
        None
    } else {
        Some(ids.iter().zip(&in_target).filter(|(_, &b)| b).map(|(&id, _)| id).collect())
    };
    let space = MetricMeasureSpace::from_coords(ids, coords, weights)?;
    Ok(Generated { space, target_ids })
}

type Cloud = (Vec<Vec<f64>>, Vec<f64>);

fn all_in((c, w): Cloud) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let n = c.len();
    (c, w, vec![true; n])
}

fn level(l: usize, max: usize) -> Result<u32> {
    if l > max {
        return Err(param(format!("level {l} exceeds the supported maximum {max}")));
    }
    Ok(l as u32)
}

/// `n` points `i/(n-1)` of weight `2/n`; points inside an open hole `(a, b)`
/// stay in the space but leave the target.
fn interval(n: usize, holes: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<bool>)> {
    if holes.len() % 2 != 0 || holes.chunks(2).any(|h| !(h[0] < h[1])) {
        return Err(param("interval holes must be pairs a < b"));
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let keep = xs.iter().map(|&x| !holes.chunks(2).any(|h| h[0] < x && x < h[1])).collect::<Vec<_>>();
    if !keep.iter().any(|&k| k) {
        return Err(param("the holes cover every point"));
    }
    Ok((xs.into_iter().map(|x| vec![x]).collect(), vec![2.0 / n as f64; n], keep))
}

/// Unit circle with arc-length weights, scaled up by the least factor making
/// `mu(B(x, r)) >= 2r` on the grid `r = 2^-k / 2` down to eight spacings.
fn circle(n: usize) -> Cloud {
    let h = 2.0 * PI / n as f64;
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let a = h * i as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let mut dists: Vec<f64> = coords.iter().map(|c| ((c[0] - 1.0).powi(2) + c[1].powi(2)).sqrt()).collect();
    dists.sort_by(f64::total_cmp);
    let mut kappa: f64 = 1.0;
    let mut r = 0.5;
    while r >= 8.0 * h {
        let inside = dists.partition_point(|&d| d < r) as f64;
        kappa = kappa.max(2.0 * r / (inside * h));
        r /= 2.0;
    }
    (coords, vec![h * kappa; n])
}

fn grid2d(m: usize) -> Cloud {
    let s = 1.0 / m as f64;
    let coords = (0..m * m).map(|k| vec![((k % m) as f64 + 0.5) * s, ((k / m) as f64 + 0.5) * s]).collect();
    (coords, vec![s * s; m * m])
}

/// Centers of the `4^L` level-`L` squares of the four-corner construction.
fn cantor4(l: u32) -> Cloud {
    let mut pts = vec![(0.0, 0.0)];
    let mut side = 1.0;
    for _ in 0..l {
        side /= 4.0;
        let step = 3.0 * side;
        pts = pts
            .iter()
            .flat_map(|&(x, y)| [(x, y), (x + step, y), (x, y + step), (x + step, y + step)])
            .collect();
    }
    let coords = pts.into_iter().map(|(x, y)| vec![x + side / 2.0, y + side / 2.0]).collect();
    (coords, vec![4f64.powi(-(l as i32)); 4usize.pow(l)])
}

/// Midpoints of the `4^L` edges of the level-`L` Koch curve from (0,0) to (1,0).
fn koch(l: u32) -> Cloud {
    let mut verts = vec![(0.0f64, 0.0f64), (1.0, 0.0)];
    let (s, c) = (PI / 3.0).sin_cos();
    for _ in 0..l {
        let mut next = Vec::with_capacity(4 * verts.len());
        for w in verts.windows(2) {
            let ((ax, ay), (bx, by)) = (w[0], w[1]);
            let (dx, dy) = ((bx - ax) / 3.0, (by - ay) / 3.0);
            let p = (ax + dx, ay + dy);
            let q = (ax + 2.0 * dx, ay + 2.0 * dy);
            let peak = (p.0 + dx * c - dy * s, p.1 + dx * s + dy * c);
            next.extend([w[0], p, peak, q]);
        }
        next.push(*verts.last().unwrap());
        verts = next;
    }
    let coords = verts.windows(2).map(|w| vec![(w[0].0 + w[1].0) / 2.0, (w[0].1 + w[1].1) / 2.0]).collect();
    (coords, vec![4f64.powi(-(l as i32)); 4usize.pow(l)])
}

/// Cell centers of the depth-`D` dyadic grid on the unit square; a cell's mass
/// is the product of the quadrant ratios along its address.
fn cascade(d: u32, params: &[f64]) -> Result<Cloud> {
    let ratios: [f64; 4] = match params {
        [] => [0.3, 0.2, 0.3, 0.2],
        [a, b, c, e] => [*a, *b, *c, *e],
        _ => return Err(param("cascade takes exactly four ratios")),
    };
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(param("cascade ratios must be positive"));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(param(format!("cascade ratios must sum to 1, got {total}")));
    }
    let m = 1usize << d;
    let side = 1.0 / m as f64;
    let mut coords = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let mut w = 1.0;
            for bit in (0..d).rev() {
                let q = ((i >> bit) & 1) + 2 * ((j >> bit) & 1);
                w *= ratios[q];
            }
            coords.push(vec![(i as f64 + 0.5) * side, (j as f64 + 0.5) * side]);
            weights.push(w);
        }
    }
    Ok((coords, weights))
}

/// Samples `u = (i + 1/2)/n` of a polyline traversed `coils` times back and
/// forth; coincident samples are merged. Each sample carries `traversed length / n`.
fn lipschitz_curve(n: usize, params: &[f64]) -> Result<Cloud> {
    let default = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let params = if params.is_empty() { &default[..] } else { params };
    let coils = params[0];
    if coils < 1.0 || coils.fract() != 0.0 {
        return Err(param("coils must be a positive integer"));
    }
    let pts: Vec<(f64, f64)> =
        params[1..].chunks(2).map(|c| (c[0], *c.get(1).unwrap_or(&f64::NAN))).collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(param("lipschitz_curve needs at least two (x, y) vertices"));
    }
    let seg: Vec<f64> =
        pts.windows(2).map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt()).collect();
    let len: f64 = seg.iter().sum();
    if !(len > 0.0) {
        return Err(param("polyline has zero length"));
    }
    let at = |s: f64| -> (f64, f64) {
        let mut left = s * len;
        for (k, &l) in seg.iter().enumerate() {
            if left <= l || k == seg.len() - 1 {
                let f = if l > 0.0 { (left / l).min(1.0) } else { 0.0 };
                let (a, b) = (pts[k], pts[k + 1]);
                return (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
            }
            left -= l;
        }
        unreachable!()
    };
    let w = coils * len / n as f64;
    let mut merged: BTreeMap<(u64, u64), ((f64, f64), f64)> = BTreeMap::new();
    for i in 0..n {
        let v = coils * (i as f64 + 0.5) / n as f64;
        let lap = v.floor();
        let s = if lap as u64 % 2 == 0 { v - lap } else { 1.0 - (v - lap) };
        let p = at(s);
        let key = ((p.0 * 1e12).round() as i64 as u64, (p.1 * 1e12).round() as i64 as u64);
        merged.entry(key).or_insert((p, 0.0)).1 += w;
    }
    let (coords, weights) = merged.into_values().map(|((x, y), m)| (vec![x, y], m)).unzip();
    Ok((coords, weights))
}
