//! Lower 1-density estimates, density stratification, β₂ numbers and the
//! truncated dyadic `diam/mass` sum.
//!
//! The liminf in the lower density is replaced by a minimum over a geometric
//! radius grid (ratio 1/2) that stops at the sampling resolution.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::par;
use crate::space::{MetricMeasureSpace, TargetSet};

/// `r_hi, r_hi/2, r_hi/4, ...` down to the last value `>= r_lo`.
pub fn radius_grid(r_lo: f64, r_hi: f64) -> Result<Vec<f64>> {
    if !(r_lo > 0.0 && r_lo < r_hi && r_hi.is_finite()) {
        return Err(param(format!("need 0 < r_lo < r_hi, got r_lo={r_lo}, r_hi={r_hi}")));
    }
    let mut out = vec![r_hi];
    loop {
        let next = out.last().unwrap() / 2.0;
        if next < r_lo {
            return Ok(out);
        }
        out.push(next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub point: u64,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    /// `mu(B(x, r)) / r` per radius.
    pub values: Vec<f64>,
    pub lower_estimate: f64,
}

pub fn density_profile(space: &MetricMeasureSpace, x: usize, r_lo: f64, r_hi: f64) -> Result<DensityProfile> {
    let radii = radius_grid(r_lo, r_hi)?;
    if x >= space.len() {
        return Err(Error::Input(format!("point index {x} out of range")));
    }
    Ok(profile_on_grid(space, x, radii))
}

fn profile_on_grid(space: &MetricMeasureSpace, x: usize, radii: Vec<f64>) -> DensityProfile {
    let rm = space.radial_mass(x);
    let values: Vec<f64> = radii.iter().map(|&r| rm.mass_within(r) / r).collect();
    let lower_estimate = values.iter().copied().fold(f64::INFINITY, f64::min);
    DensityProfile { point: space.id(x), radii, values, lower_estimate }
}

/// Profiles for many points on one grid, evaluated in parallel.
pub fn density_profiles(
    space: &MetricMeasureSpace,
    points: &[usize],
    r_lo: f64,
    r_hi: f64,
) -> Result<Vec<DensityProfile>> {
    let radii = radius_grid(r_lo, r_hi)?;
    if let Some(&p) = points.iter().find(|&&p| p >= space.len()) {
        return Err(Error::Input(format!("point index {p} out of range")));
    }
    Ok(par::map(points, |&p| profile_on_grid(space, p, radii.clone())))
}

/// Members `x` of `E` with `mu(B(x, r)) >= r / j` at every grid radius
/// `r = 2^-m / k` (`m >= 1`) down to `r_lo`.
pub fn stratify(space: &MetricMeasureSpace, e: &TargetSet, j: u32, k: u32, r_lo: f64) -> Result<Vec<usize>> {
    if j == 0 || k == 0 {
        return Err(param("j and k must be at least 1"));
    }
    let top = 1.0 / k as f64;
    let radii: Vec<f64> = if r_lo < top / 2.0 { radius_grid(r_lo, top / 2.0)? } else { Vec::new() };
    let jf = j as f64;
    let keep = par::map(&e.members, |&x| {
        let rm = space.radial_mass(x);
        radii.iter().all(|&r| rm.mass_within(r) >= r / jf)
    });
    Ok(e.members.iter().zip(keep).filter(|(_, k)| *k).map(|(&x, _)| x).collect())
}

/// Greedy partition of `set` into pieces of diameter `< bound`: seed with the
/// smallest unassigned index and absorb everything unassigned within `bound/2`.
pub fn split_by_diameter(space: &MetricMeasureSpace, set: &[usize], bound: f64) -> Result<Vec<Vec<usize>>> {
    if !(bound > 0.0) {
        return Err(param(format!("bound must be positive, got {bound}")));
    }
    let mut rest: Vec<usize> = set.to_vec();
    rest.sort_unstable();
    rest.dedup();
    let mut pieces = Vec::new();
    while let Some(&seed) = rest.first() {
        let (piece, left): (Vec<usize>, Vec<usize>) =
            rest.iter().partition(|&&p| space.dist(seed, p) < bound / 2.0);
        pieces.push(piece);
        rest = left;
    }
    Ok(pieces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beta2Result {
    pub size: usize,
    pub beta2: f64,
    pub beta2_sq: f64,
    pub line: Line,
}

/// β₂ of the weighted subset `a`: the best-fit line passes through the
/// weighted centroid along the top eigenvector of the second-moment tensor.
pub fn beta2(space: &MetricMeasureSpace, a: &[usize]) -> Result<Beta2Result> {
    let dim = space.dim().ok_or(Error::UnsupportedMetric)?;
    if a.len() < 2 {
        return Err(param(format!("beta2 needs at least 2 points, got {}", a.len())));
    }
    let mass = space.mass_of(a);
    if !(mass > 0.0) {
        return Err(Error::Degenerate("subset has zero mass".into()));
    }
    let mut centroid = vec![0.0; dim];
    for &p in a {
        let w = space.weight(p);
        for (c, x) in centroid.iter_mut().zip(space.coords(p).unwrap()) {
            *c += w * x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= mass);

    let mut moment = DMatrix::<f64>::zeros(dim, dim);
    for &p in a {
        let w = space.weight(p) / mass;
        let x = space.coords(p).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                moment[(i, j)] += w * (x[i] - centroid[i]) * (x[j] - centroid[j]);
            }
        }
    }
    let trace = moment.trace();
    let eig = SymmetricEigen::new(moment);
    let top = eig.eigenvalues.imax();
    let col = eig.eigenvectors.column(top);
    let norm = col.norm();
    let direction: Vec<f64> = col.iter().map(|v| v / norm).collect();

    let mut diam = 0.0_f64;
    for (i, &p) in a.iter().enumerate() {
        for &q in &a[i + 1..] {
            diam = diam.max(space.dist(p, q));
        }
    }
    if !(diam > 0.0) {
        return Err(Error::Degenerate("subset has zero diameter".into()));
    }
    let beta2_sq = ((trace - eig.eigenvalues[top]).max(0.0) / (diam * diam)).min(1.0);
    Ok(Beta2Result {
        size: a.len(),
        beta2: beta2_sq.sqrt(),
        beta2_sq,
        line: Line { point: centroid, direction },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsSum {
    pub point: u64,
    pub depth: u32,
    pub sum: f64,
    /// Per-generation terms `diam(Q_m) / mu(Q_m)` (zero where skipped).
    pub terms: Vec<f64>,
    pub skipped: usize,
}

/// `sum_{m=0..depth} diam(Q_m) / mu(Q_m)` over the half-open dyadic cubes
/// `Q_m ∋ x` of side `2^-m`, skipping empty cubes.
pub fn bs_sum(space: &MetricMeasureSpace, x: usize, depth: u32) -> Result<BsSum> {
    let dim = space.dim().ok_or(Error::UnsupportedMetric)?;
    if depth < 1 {
        return Err(param("depth must be at least 1"));
    }
    if x >= space.len() {
        return Err(Error::Input(format!("point index {x} out of range")));
    }
    let cell = |p: usize, m: u32| -> Vec<i64> {
        let scale = (m as f64).exp2();
        space.coords(p).unwrap().iter().map(|c| (c * scale).floor() as i64).collect()
    };
    let side_diam = (dim as f64).sqrt();
    let mut terms = Vec::with_capacity(depth as usize + 1);
    let mut skipped = 0;
    for m in 0..=depth {
        let home = cell(x, m);
        let mass: f64 = (0..space.len()).filter(|&p| cell(p, m) == home).map(|p| space.weight(p)).sum();
        if mass > 0.0 {
            terms.push(side_diam * (-(m as f64)).exp2() / mass);
        } else {
            skipped += 1;
            terms.push(0.0);
        }
    }
    Ok(BsSum { point: space.id(x), depth, sum: terms.iter().sum(), terms, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(xs: &[f64], w: f64) -> MetricMeasureSpace {
        MetricMeasureSpace::from_points(xs.iter().map(|&x| vec![x]).collect(), vec![w; xs.len()]).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = radius_grid(0.1, 1.0).unwrap();
        assert_eq!(g, vec![1.0, 0.5, 0.25, 0.125]);
        assert!(radius_grid(1.0, 0.5).is_err());
        assert!(radius_grid(0.0, 0.5).is_err());
    }

    #[test]
    fn single_atom_profile() {
        let s = line(&[0.0], 3.0);
        let p = density_profile(&s, 0, 0.01, 2.0).unwrap();
        assert_relative_eq!(p.lower_estimate, 1.5);
        assert!(p.radii.windows(2).all(|w| w[0] > w[1]));
        for (r, v) in p.radii.iter().zip(&p.values) {
            assert_relative_eq!(*v, 3.0 / r);
        }
    }

    #[test]
    fn two_atoms_stratify() {
        let s = line(&[0.0, 1.0], 1.0);
        let e = TargetSet::all(&s).unwrap();
        assert_eq!(stratify(&s, &e, 1, 1, 1e-3).unwrap(), vec![0, 1]);
        assert!(stratify(&s, &e, 0, 1, 1e-3).is_err());
    }

    #[test]
    fn split_examples() {
        let s = line(&[0.0, 0.4, 0.8], 1.0);
        assert_eq!(split_by_diameter(&s, &[0, 1, 2], 0.5).unwrap(), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(split_by_diameter(&s, &[0, 1, 2], 2.0).unwrap(), vec![vec![0, 1, 2]]);
        assert!(split_by_diameter(&s, &[], 0.5).unwrap().is_empty());
        assert!(split_by_diameter(&s, &[0], 0.0).is_err());
    }

    #[test]
    fn beta2_collinear_and_pairs() {
        let s = MetricMeasureSpace::from_points(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![5.0, 1.0]],
            vec![1.0, 2.0, 1.0, 1.0],
        )
        .unwrap();
        let b = beta2(&s, &[0, 1, 2]).unwrap();
        assert!(b.beta2 < 1e-12);
        let d = &b.line.direction;
        assert_relative_eq!((d[0] * d[0] + d[1] * d[1]).sqrt(), 1.0, epsilon = 1e-12);
        assert!(beta2(&s, &[1, 3]).unwrap().beta2 < 1e-12);
        assert!(beta2(&s, &[1]).is_err());
    }

    #[test]
    fn beta2_needs_coords() {
        let m = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let s = MetricMeasureSpace::from_matrix(vec![0, 1], m, vec![1.0; 2]).unwrap();
        assert!(matches!(beta2(&s, &[0, 1]), Err(Error::UnsupportedMetric)));
        assert!(matches!(bs_sum(&s, 0, 2), Err(Error::UnsupportedMetric)));
    }

    #[test]
    fn bs_sum_lebesgue_line() {
        let n = 1024;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let s = line(&xs, 1.0 / n as f64);
        for depth in [1u32, 4, 8] {
            let b = bs_sum(&s, 300, depth).unwrap();
            assert_relative_eq!(b.sum, depth as f64 + 1.0, epsilon = 1e-9);
            assert_eq!(b.skipped, 0);
        }
    }

    #[test]
    fn bs_sum_single_atom_bounded() {
        let s = MetricMeasureSpace::from_points(vec![vec![0.3, 0.7]], vec![1.0]).unwrap();
        let b = bs_sum(&s, 0, 20).unwrap();
        assert!(b.sum <= 2.0 * 2f64.sqrt());
        assert!(bs_sum(&s, 0, 0).is_err());
    }
}
