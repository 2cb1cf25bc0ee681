//! Porous cubes and their Carleson packing.
//!
//! A cube `Δ` is porous when it meets `E` and its `M`-dilate `B(ζ_Δ, M ℓ(Δ))`
//! contains a sample point at distance at least `δ ℓ(Δ)` from `E`. The
//! packing constant is built from the doubling estimate through the shadow
//! map: every porous cube is charged to the largest cube containing its
//! witness whose doubled ball misses `E`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cubes::{CubeId, CubeTree};
use crate::error::{param, Error, Result};
use crate::par;
use crate::space::{MetricMeasureSpace, TargetSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PorosityConfig {
    /// Dilation factor of the witness ball.
    #[serde(rename = "M")]
    pub m: f64,
    pub delta: f64,
    pub n0: i32,
    pub rho: f64,
    pub c0: f64,
    pub c_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigValidation {
    pub ok: bool,
    pub strict: bool,
    pub violations: Vec<Violation>,
}

impl ConfigValidation {
    pub fn violates(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

pub const C_M_GT_10: &str = "M > 10";
pub const C_DELTA_LT_4RHO: &str = "delta < 4*rho";
pub const C_RHO_LT_3_OVER_M1: &str = "rho < 3/(M+1)";
pub const C_INV_RHO_GT_M: &str = "1/rho > M";
pub const C_N0_GE_2: &str = "n0 >= 2";
pub const C_5MRHO_N0_LT_1: &str = "5*M*rho^n0 < 1";
pub const C_STRICT_RHO: &str = "rho < 1/1000";
pub const C_STRICT_C0: &str = "c0 = 1/500";

/// Checks every parameter constraint the connectivity argument needs.
/// Strict mode additionally pins `rho < 1/1000` and `c0 = 1/500`.
pub fn validate_config(cfg: &PorosityConfig, strict: bool) -> ConfigValidation {
    let PorosityConfig { m, delta, n0, rho, c0, .. } = *cfg;
    let checks: Vec<(&str, bool, String)> = vec![
        (C_M_GT_10, m > 10.0, format!("M = {m}")),
        (C_DELTA_LT_4RHO, delta < 4.0 * rho, format!("delta = {delta}, 4*rho = {}", 4.0 * rho)),
        (C_RHO_LT_3_OVER_M1, rho < 3.0 / (m + 1.0), format!("rho = {rho}, 3/(M+1) = {}", 3.0 / (m + 1.0))),
        (C_INV_RHO_GT_M, 1.0 / rho > m, format!("1/rho = {}, M = {m}", 1.0 / rho)),
        (C_N0_GE_2, n0 >= 2, format!("n0 = {n0}")),
        (C_5MRHO_N0_LT_1, 5.0 * m * rho.powi(n0) < 1.0, format!("5*M*rho^n0 = {}", 5.0 * m * rho.powi(n0))),
    ];
    let mut violations: Vec<Violation> = checks
        .into_iter()
        .filter(|(_, ok, _)| !ok)
        .map(|(c, _, d)| Violation { constraint: c.to_string(), detail: d })
        .collect();
    if !(rho > 0.0 && rho < 1.0) || !(delta > 0.0) {
        violations.push(Violation {
            constraint: "0 < rho < 1, delta > 0".into(),
            detail: format!("rho = {rho}, delta = {delta}"),
        });
    }
    if strict {
        if !(rho < 1e-3) {
            violations.push(Violation { constraint: C_STRICT_RHO.into(), detail: format!("rho = {rho}") });
        }
        if c0 != 1.0 / 500.0 {
            violations.push(Violation { constraint: C_STRICT_C0.into(), detail: format!("c0 = {c0}") });
        }
    }
    ConfigValidation { ok: violations.is_empty(), strict, violations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousCube {
    pub cube: CubeId,
    pub level: i32,
    /// Witness point index.
    pub witness: usize,
    pub witness_gap: f64,
}

/// The level-`n_min` cube containing all of `E`.
pub fn root_cube(space: &MetricMeasureSpace, tree: &CubeTree, e: &TargetSet) -> Result<CubeId> {
    let root = tree.cube_at(e.members[0], tree.n_min());
    if let Some(&p) = e.members.iter().find(|&&p| tree.cube_at(p, tree.n_min()) != root) {
        return Err(Error::Containment(space.id(p)));
    }
    Ok(root)
}

/// All porous cubes below the root cube, in cube-id order. The witness is the
/// sample point of largest gap `dist(ξ, E)` in the dilate (ties: smaller id).
pub fn find_porous(
    space: &MetricMeasureSpace,
    tree: &CubeTree,
    e: &TargetSet,
    cfg: &PorosityConfig,
) -> Result<Vec<PorousCube>> {
    let root = root_cube(space, tree, e)?;
    let gap = space.distances_to_set(&e.members);
    let mut candidates = tree.subtree(root);
    candidates.sort_unstable();
    let found = par::map(&candidates, |&id| {
        let c = tree.cube(id);
        if !c.members.iter().any(|&p| e.contains(p)) {
            return None;
        }
        let reach = cfg.m * c.side;
        let mut best: Option<(usize, f64)> = None;
        for p in 0..space.len() {
            if space.dist(c.center, p) < reach && best.map_or(true, |(_, g)| gap[p] > g) {
                best = Some((p, gap[p]));
            }
        }
        let (witness, witness_gap) = best?;
        (witness_gap >= cfg.delta * c.side).then_some(PorousCube {
            cube: id,
            level: c.level,
            witness,
            witness_gap,
        })
    });
    Ok(found.into_iter().flatten().collect())
}

/// How the multiplicity `b` entering the packing constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "b_mode", content = "value", rename_all = "snake_case")]
pub enum Multiplicity {
    Observed(usize),
    Supplied(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixConstants {
    pub a: f64,
    pub c1: f64,
    pub b: f64,
    pub multiplicity: Multiplicity,
}

/// `a = C^{log2(c0/(4M))} (4/rho)^{log2 C}` and `C1 = a b C^{log2(M/c0) + 1}`.
/// An observed multiplicity is floored at 1.
pub fn appendix_constants(cfg: &PorosityConfig, multiplicity: Multiplicity) -> Result<AppendixConstants> {
    let c = cfg.c_mu;
    if !(c > 1.0) || !c.is_finite() {
        return Err(param(format!("doubling constant must exceed 1, got {c}")));
    }
    if !(cfg.m > 0.0 && cfg.c0 > 0.0 && cfg.rho > 0.0) {
        return Err(param("M, c0 and rho must be positive"));
    }
    let b = match multiplicity {
        Multiplicity::Observed(k) => (k as f64).max(1.0),
        Multiplicity::Supplied(b) if b > 0.0 => b,
        Multiplicity::Supplied(b) => return Err(param(format!("supplied b must be positive, got {b}"))),
    };
    let log_c = c.log2();
    let a = c.powf((cfg.c0 / (4.0 * cfg.m)).log2()) * (4.0 / cfg.rho).powf(log_c);
    let c1 = a * b * c.powf((cfg.m / cfg.c0).log2() + 1.0);
    Ok(AppendixConstants { a, c1, b, multiplicity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonRatio {
    pub cube: CubeId,
    pub level: i32,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// One entry per positive-mass cube of the root subtree, in cube-id order.
    pub ratios: Vec<CarlesonRatio>,
    pub worst_ratio: f64,
    pub worst_cube: Option<CubeId>,
    pub skipped_zero_mass: usize,
    pub constants: AppendixConstants,
    pub ok: bool,
}

/// Exact `sum_{Δ ⊆ Δ', Δ porous} mu(Δ) / mu(Δ')` for every `Δ'` below the root.
pub fn carleson_check(
    tree: &CubeTree,
    root: CubeId,
    porous: &[PorousCube],
    constants: &AppendixConstants,
) -> CarlesonReport {
    let mut packed = vec![0.0; tree.cubes().len()];
    for pc in porous {
        packed[pc.cube.0] = tree.cube(pc.cube).mass;
    }
    let order = tree.subtree(root);
    for &id in order.iter().rev() {
        let below: f64 = tree.cube(id).children.iter().map(|k| packed[k.0]).sum();
        packed[id.0] += below;
    }

    let mut ids = order;
    ids.sort_unstable();
    let mut ratios = Vec::with_capacity(ids.len());
    let mut skipped_zero_mass = 0;
    let mut worst: Option<(f64, CubeId)> = None;
    for id in ids {
        let c = tree.cube(id);
        if !(c.mass > 0.0) {
            skipped_zero_mass += 1;
            continue;
        }
        let ratio = packed[id.0] / c.mass;
        if worst.map_or(true, |(w, _)| ratio > w) {
            worst = Some((ratio, id));
        }
        ratios.push(CarlesonRatio { cube: id, level: c.level, ratio });
    }
    let worst_ratio = worst.map_or(0.0, |w| w.0);
    CarlesonReport {
        ratios,
        worst_ratio,
        worst_cube: worst.map(|w| w.1),
        skipped_zero_mass,
        constants: constants.clone(),
        ok: worst_ratio <= constants.c1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRecord {
    pub cube: CubeId,
    pub witness: u64,
    pub shadow: Option<CubeId>,
    pub witness_gap: f64,
    /// `δ ℓ(Δ)`
    pub gap_floor: f64,
    /// `(4/rho) ℓ(Δ̃)`
    pub gap_ceiling: f64,
    /// `(2M/c0) ℓ(Δ)`
    pub shadow_side_bound: f64,
    pub shadow_side: f64,
    /// `δ ℓ(Δ) <= dist(ξ, E) <= (4/rho) ℓ(Δ̃)`
    pub gap_ok: bool,
    /// `ℓ(Δ̃) <= (2M/c0) ℓ(Δ)`
    pub side_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub records: Vec<ShadowRecord>,
    /// Largest number of porous cubes charged to one shadow cube.
    pub b_observed: usize,
    /// Porous cubes whose witness sits in no far-from-`E` cube at the built levels.
    pub resolution_failures: usize,
    pub all_ok: bool,
}

/// Maps each porous cube to the largest cube containing its witness whose
/// ball `B(ζ, 2ℓ)` misses `E`, and checks both size comparisons.
pub fn shadow_map(
    space: &MetricMeasureSpace,
    tree: &CubeTree,
    e: &TargetSet,
    porous: &[PorousCube],
    cfg: &PorosityConfig,
) -> ShadowReport {
    let gap = space.distances_to_set(&e.members);
    let mut records = Vec::with_capacity(porous.len());
    let mut load: BTreeMap<CubeId, usize> = BTreeMap::new();
    let mut resolution_failures = 0;

    for pc in porous {
        let side = tree.cube(pc.cube).side;
        let shadow = (tree.n_min()..=tree.n_max()).map(|n| tree.cube_at(pc.witness, n)).find(|&id| {
            let c = tree.cube(id);
            gap[c.center] >= 2.0 * c.side
        });
        let gap_floor = cfg.delta * side;
        let shadow_side_bound = 2.0 * cfg.m / cfg.c0 * side;
        let record = match shadow {
            Some(s) => {
                *load.entry(s).or_default() += 1;
                let s_side = tree.cube(s).side;
                let gap_ceiling = 4.0 / cfg.rho * s_side;
                ShadowRecord {
                    cube: pc.cube,
                    witness: space.id(pc.witness),
                    shadow: Some(s),
                    witness_gap: pc.witness_gap,
                    gap_floor,
                    gap_ceiling,
                    shadow_side_bound,
                    shadow_side: s_side,
                    gap_ok: gap_floor <= pc.witness_gap && pc.witness_gap <= gap_ceiling,
                    side_ok: s_side <= shadow_side_bound,
                }
            }
            None => {
                resolution_failures += 1;
                ShadowRecord {
                    cube: pc.cube,
                    witness: space.id(pc.witness),
                    shadow: None,
                    witness_gap: pc.witness_gap,
                    gap_floor,
                    gap_ceiling: f64::NAN,
                    shadow_side_bound,
                    shadow_side: f64::NAN,
                    gap_ok: true,
                    side_ok: true,
                }
            }
        };
        records.push(record);
    }
    let all_ok = records.iter().all(|r| r.gap_ok && r.side_ok);
    ShadowReport {
        records,
        b_observed: load.values().copied().max().unwrap_or(0),
        resolution_failures,
        all_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::build_cubes;
    use crate::nets::{coarsest_level, NetBuilder};
    use approx::assert_relative_eq;

    fn cfg(m: f64, delta: f64, rho: f64, n0: i32) -> PorosityConfig {
        PorosityConfig { m, delta, n0, rho, c0: 1.0 / 500.0, c_mu: 2.0 }
    }

    #[test]
    fn accepts_reference_config() {
        let v = validate_config(&cfg(11.0, 0.003, 1.0 / 1024.0, 2), false);
        assert!(v.ok, "{:?}", v.violations);
        assert!(validate_config(&cfg(11.0, 0.003, 1.0 / 1024.0, 2), true).ok);
    }

    #[test]
    fn single_constraint_violations() {
        let v = validate_config(&cfg(9.0, 0.003, 1.0 / 1024.0, 2), false);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violates(C_M_GT_10));

        let v = validate_config(&cfg(11.0, 4.0 / 1024.0, 1.0 / 1024.0, 2), false);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violates(C_DELTA_LT_4RHO));

        let v = validate_config(&cfg(11.0, 0.003, 0.25, 2), false);
        assert!(v.violates(C_INV_RHO_GT_M));

        let v = validate_config(&cfg(11.0, 0.003, 1.0 / 1024.0, 1), false);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violates(C_N0_GE_2));
    }

    #[test]
    fn strict_mode() {
        let v = validate_config(&cfg(11.0, 0.02, 1.0 / 16.0, 2), true);
        assert!(v.violates(C_STRICT_RHO));
        let mut c = cfg(11.0, 0.003, 1.0 / 1024.0, 2);
        c.c0 = 0.01;
        assert!(validate_config(&c, true).violates(C_STRICT_C0));
        assert!(validate_config(&c, false).ok);
    }

    #[test]
    fn reference_constants() {
        let k = appendix_constants(&cfg(11.0, 0.003, 1.0 / 1024.0, 2), Multiplicity::Supplied(1.0)).unwrap();
        assert_relative_eq!(k.a, 4096.0 / 22000.0, max_relative = 1e-12);
        assert_relative_eq!(k.c1, 2048.0, max_relative = 1e-12);
    }

    #[test]
    fn constants_near_one() {
        let mut c = cfg(11.0, 0.003, 1.0 / 1024.0, 2);
        c.c_mu = 1.0 + 1e-9;
        let k = appendix_constants(&c, Multiplicity::Supplied(3.0)).unwrap();
        assert_relative_eq!(k.a, 1.0, max_relative = 1e-6);
        assert_relative_eq!(k.c1, 3.0, max_relative = 1e-6);
        c.c_mu = 1.0;
        assert!(appendix_constants(&c, Multiplicity::Observed(1)).is_err());
    }

    fn segment(n: usize) -> MetricMeasureSpace {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        MetricMeasureSpace::from_points(xs, vec![2.0 / n as f64; n]).unwrap()
    }

    fn tree_for(s: &MetricMeasureSpace, e: &TargetSet, rho: f64, n_max: i32) -> CubeTree {
        let n_min = coarsest_level(rho, s.diameter());
        let h = NetBuilder::new(rho, n_min, n_max).seeds(vec![e.xi0]).build(s).unwrap();
        build_cubes(s, &h, 0.01).unwrap()
    }

    #[test]
    fn whole_space_target_has_no_porous_cubes() {
        let s = segment(200);
        let e = TargetSet::all(&s).unwrap();
        let t = tree_for(&s, &e, 1.0 / 16.0, 2);
        assert!(find_porous(&s, &t, &e, &cfg(11.0, 0.02, 1.0 / 16.0, 2)).unwrap().is_empty());
    }

    #[test]
    fn left_half_target() {
        let s = segment(256);
        let left: Vec<usize> = (0..128).collect();
        let e = TargetSet::enclosing(&s, left).unwrap();
        let t = tree_for(&s, &e, 1.0 / 16.0, 2);
        let c = cfg(11.0, 0.02, 1.0 / 16.0, 2);
        let p = find_porous(&s, &t, &e, &c).unwrap();
        assert!(!p.is_empty());
        let gap = s.distances_to_set(&e.members);
        for pc in &p {
            let cube = t.cube(pc.cube);
            assert!(cube.members.iter().any(|&m| e.contains(m)));
            assert!(s.dist(cube.center, pc.witness) < c.m * cube.side);
            assert!(gap[pc.witness] >= c.delta * cube.side);
            assert_eq!(gap[pc.witness], pc.witness_gap);
        }
        // huge delta: nothing qualifies
        let mut big = c;
        big.delta = 1e6;
        assert!(find_porous(&s, &t, &e, &big).unwrap().is_empty());
    }

    #[test]
    fn carleson_trivial_cases() {
        let s = segment(64);
        let e = TargetSet::all(&s).unwrap();
        let t = tree_for(&s, &e, 1.0 / 16.0, 1);
        let root = root_cube(&s, &t, &e).unwrap();
        let k = appendix_constants(&cfg(11.0, 0.02, 1.0 / 16.0, 2), Multiplicity::Observed(0)).unwrap();
        let r = carleson_check(&t, root, &[], &k);
        assert!(r.ok);
        assert_eq!(r.worst_ratio, 0.0);

        let one = PorousCube { cube: root, level: t.n_min(), witness: 0, witness_gap: 0.0 };
        let r = carleson_check(&t, root, &[one], &k);
        assert_relative_eq!(r.worst_ratio, 1.0);
        assert!(k.c1 > 1.0 && r.ok);
    }

    #[test]
    fn empty_family_has_empty_shadow() {
        let s = segment(32);
        let e = TargetSet::all(&s).unwrap();
        let t = tree_for(&s, &e, 1.0 / 16.0, 1);
        let rep = shadow_map(&s, &t, &e, &[], &cfg(11.0, 0.02, 1.0 / 16.0, 2));
        assert!(rep.records.is_empty());
        assert_eq!(rep.b_observed, 0);
        assert!(rep.all_ok);
    }
}
