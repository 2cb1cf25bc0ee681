//! Worked examples checked against independent recomputations.

use std::collections::BTreeMap;

use approx::assert_relative_eq;
use rectilib::cubes::build_cubes;
use rectilib::curve::{assemble_gamma, build_bridges, length_budget, BridgeGraph, Pairing};
use rectilib::density::beta2;
use rectilib::generators::{generate, GeneratorKind, GeneratorSpec};
use rectilib::nets::{coarsest_level, NetBuilder};
use rectilib::porosity::{
    appendix_constants, find_porous, shadow_map, Multiplicity, PorosityConfig, PorousCube,
};
use rectilib::space::{hausdorff_estimate, MetricMeasureSpace, TargetSet};

fn cfg(m: f64, delta: f64, rho: f64, c0: f64, c_mu: f64) -> PorosityConfig {
    PorosityConfig { m, delta, n0: 2, rho, c0, c_mu }
}

#[test]
fn appendix_constants_by_logarithms() {
    for &(m, rho, c0, c_mu, b) in &[
        (11.0, 1.0 / 1024.0, 1.0 / 500.0, 2.0, 1.0),
        (12.0, 1.0 / 16.0, 0.01, 3.7, 4.0),
        (20.0, 1e-3, 0.002, 1.5, 2.0),
    ] {
        let k = appendix_constants(&cfg(m, 0.001, rho, c0, c_mu), Multiplicity::Supplied(b)).unwrap();
        let l = c_mu.ln();
        let a = (l * (c0 / (4.0 * m)).ln() / 2f64.ln() + (4.0 / rho).ln() * l / 2f64.ln()).exp();
        let c1 = a * b * (l * ((m / c0).ln() / 2f64.ln() + 1.0)).exp();
        assert_relative_eq!(k.a, a, max_relative = 1e-12);
        assert_relative_eq!(k.c1, c1, max_relative = 1e-12);
        // the product collapses to b C (1/rho)^{log2 C}
        assert_relative_eq!(k.c1, b * c_mu * (1.0 / rho).powf(c_mu.log2()), max_relative = 1e-12);
    }
    let k =
        appendix_constants(&cfg(11.0, 0.003, 1.0 / 1024.0, 1.0 / 500.0, 2.0), Multiplicity::Supplied(1.0))
            .unwrap();
    assert_relative_eq!(k.a, 4096.0 / 22000.0, max_relative = 1e-12);
    assert_relative_eq!(k.c1, 2048.0, max_relative = 1e-12);
}

fn cascade_oracle(depth: u32, ratios: [f64; 4]) -> BTreeMap<(u64, u64), f64> {
    fn rec(
        x0: f64,
        y0: f64,
        side: f64,
        mass: f64,
        left: u32,
        r: &[f64; 4],
        out: &mut BTreeMap<(u64, u64), f64>,
    ) {
        if left == 0 {
            out.insert(
                (((x0 + side / 2.0) * 1e9).round() as u64, ((y0 + side / 2.0) * 1e9).round() as u64),
                mass,
            );
            return;
        }
        let h = side / 2.0;
        rec(x0, y0, h, mass * r[0], left - 1, r, out);
        rec(x0 + h, y0, h, mass * r[1], left - 1, r, out);
        rec(x0, y0 + h, h, mass * r[2], left - 1, r, out);
        rec(x0 + h, y0 + h, h, mass * r[3], left - 1, r, out);
    }
    let mut out = BTreeMap::new();
    rec(0.0, 0.0, 1.0, 1.0, depth, &ratios, &mut out);
    out
}

#[test]
fn cascade_masses_match_recursion() {
    let ratios = [0.3, 0.2, 0.3, 0.2];
    let g = generate(&GeneratorSpec::new(GeneratorKind::Cascade, 6).with_params(ratios.to_vec())).unwrap();
    assert_eq!(g.space.len(), 4096);
    let oracle = cascade_oracle(6, ratios);
    for i in 0..g.space.len() {
        let c = g.space.coords(i).unwrap();
        let key = ((c[0] * 1e9).round() as u64, (c[1] * 1e9).round() as u64);
        assert_relative_eq!(g.space.weight(i), oracle[&key], max_relative = 1e-12);
    }
    assert!((g.space.total_mass() - 1.0).abs() <= 1e-12);
}

#[test]
fn square_corners_beta2() {
    let s = MetricMeasureSpace::from_points(
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        vec![1.0; 4],
    )
    .unwrap();
    let b = beta2(&s, &[0, 1, 2, 3]).unwrap();
    assert!((b.beta2_sq - 0.125).abs() <= 1e-12);
}

/// `μ(B(x, r)) >= 2r` on the grid `r = 2^-k / 2`: for the interval at every
/// point whose ball stays inside [0, 1] with `r > 2/n`, for the circle at every
/// point with `r` at least eight spacings.
#[test]
fn interval_and_circle_mass_lower_bound() {
    let n = 512;
    let g = generate(&GeneratorSpec::new(GeneratorKind::Interval, n)).unwrap();
    let s = &g.space;
    for x in 0..n {
        let cx = s.coords(x).unwrap()[0];
        let mut r = 0.5;
        while r > 2.0 / n as f64 {
            if cx - r >= 0.0 && cx + r <= 1.0 {
                let m: f64 = (0..n).filter(|&p| s.dist(x, p) < r).map(|p| s.weight(p)).sum();
                assert!(m >= 2.0 * r, "x={cx} r={r} m={m}");
            }
            r /= 2.0;
        }
    }
    let g = generate(&GeneratorSpec::new(GeneratorKind::Circle, n)).unwrap();
    let s = &g.space;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    for x in (0..n).step_by(7) {
        let mut r = 0.5;
        while r >= 8.0 * h {
            let m: f64 = (0..n).filter(|&p| s.dist(x, p) < r).map(|p| s.weight(p)).sum();
            assert!(m >= 2.0 * r * (1.0 - 1e-12), "x={x} r={r} m={m}");
            r /= 2.0;
        }
    }
}

#[test]
fn hausdorff_upper_within_ten_mu() {
    for kind in [GeneratorKind::Interval, GeneratorKind::Circle] {
        let g = generate(&GeneratorSpec::new(kind, 256)).unwrap();
        let e = TargetSet::all(&g.space).unwrap();
        let h = hausdorff_estimate(&g.space, &e, 0.05).unwrap();
        assert!(h.upper <= 10.0 * e.mass(&g.space), "{kind:?}: {} vs {}", h.upper, e.mass(&g.space));
        assert!(h.lower <= h.upper);
    }
}

fn segment(n: usize) -> MetricMeasureSpace {
    let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    MetricMeasureSpace::from_points(xs, vec![2.0 / n as f64; n]).unwrap()
}

#[test]
fn porous_family_by_brute_force() {
    let s = segment(200);
    let e = TargetSet::enclosing(&s, (0..100).collect()).unwrap();
    let n_min = coarsest_level(1.0 / 16.0, s.diameter());
    let h = NetBuilder::new(1.0 / 16.0, n_min, 2).seeds(vec![e.xi0]).build(&s).unwrap();
    let t = build_cubes(&s, &h, 0.002).unwrap();
    let c = cfg(11.0, 0.02, 1.0 / 16.0, 0.002, 2.0);
    let found: BTreeMap<_, _> =
        find_porous(&s, &t, &e, &c).unwrap().into_iter().map(|p| (p.cube, p)).collect();

    for cube in t.cubes() {
        let meets = cube.members.iter().any(|&p| p < 100);
        let mut best: Option<(usize, f64)> = None;
        for p in 0..s.len() {
            if s.dist(cube.center, p) < c.m * cube.side {
                let gap = (0..100).map(|q| s.dist(p, q)).fold(f64::INFINITY, f64::min);
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((p, gap));
                }
            }
        }
        let expect = meets && best.is_some_and(|(_, g)| g >= c.delta * cube.side);
        assert_eq!(found.contains_key(&cube.id), expect, "cube {:?}", cube.id);
        if expect {
            let pc = &found[&cube.id];
            assert_eq!((pc.witness, pc.witness_gap), best.unwrap());
        }
    }
    assert!(!found.is_empty());
}

#[test]
fn shadow_cubes_are_maximal_far_cubes() {
    // E: a short dense run at the left; isolated points further right act as witnesses
    let mut xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.01).collect();
    xs.extend([0.5, 0.8, 1.0]);
    let s =
        MetricMeasureSpace::from_points(xs.iter().map(|&x| vec![x]).collect(), vec![0.1; xs.len()]).unwrap();
    let e = TargetSet::enclosing(&s, (0..12).collect()).unwrap();
    let rho = 1.0 / 16.0;
    let n_min = coarsest_level(rho, s.diameter());
    let h = NetBuilder::new(rho, n_min, 2).seeds(vec![e.xi0]).build(&s).unwrap();
    let t = build_cubes(&s, &h, 0.002).unwrap();
    let c = cfg(11.0, 0.01, rho, 0.002, 2.0);
    let porous = find_porous(&s, &t, &e, &c).unwrap();
    assert!(porous.len() >= 2);
    let rep = shadow_map(&s, &t, &e, &porous, &c);

    let gap = |p: usize| (0..12).map(|q| s.dist(p, q)).fold(f64::INFINITY, f64::min);
    let mut load: BTreeMap<_, usize> = BTreeMap::new();
    for (pc, rec) in porous.iter().zip(&rep.records) {
        let Some(sh) = rec.shadow else { continue };
        *load.entry(sh).or_default() += 1;
        let cube = t.cube(sh);
        assert!(cube.members.contains(&pc.witness));
        assert!(gap(cube.center) >= 2.0 * cube.side);
        for anc in t.chain(sh).into_iter().rev().skip(1) {
            let a = t.cube(anc);
            assert!(gap(a.center) < 2.0 * a.side, "an ancestor of the shadow is already far from E");
        }
        assert!(rec.gap_ok && rec.side_ok);
        assert!(c.delta * t.cube(pc.cube).side <= pc.witness_gap);
        assert!(pc.witness_gap <= 4.0 / rho * cube.side);
    }
    assert_eq!(rep.b_observed, load.values().copied().max().unwrap_or(0));
    assert!(rep.b_observed >= 2, "several porous cubes share the witness at 1.0");
}

#[test]
fn one_cube_bridge_counts() {
    let s = segment(257);
    let e = TargetSet::enclosing(&s, (0..257).filter(|&i| !(90..=166).contains(&i)).collect()).unwrap();
    let rho = 1.0 / 16.0;
    let n_min = coarsest_level(rho, s.diameter());
    let h = NetBuilder::new(rho, n_min, n_min + 3).seeds(vec![e.xi0]).build(&s).unwrap();
    let t = build_cubes(&s, &h, 0.002).unwrap();
    let c = cfg(11.0, 0.02, rho, 0.002, 2.0);
    let root = t.roots()[0];
    let pc = PorousCube { cube: root, level: n_min, witness: 128, witness_gap: 0.0 };
    let b = build_bridges(&s, &t, std::slice::from_ref(&pc), &c, Pairing::Complete);
    let cube = t.cube(root);
    let p = h.level(n_min + 2).iter().filter(|&&x| s.dist(cube.center, x) < c.m * cube.side).count();
    assert_eq!(b.bridges.len(), p * (p - 1) / 2);
    assert!(b.total_length() <= 3.0 * 2.0 * c.m * cube.side * (p * (p - 1) / 2) as f64);
    let star = build_bridges(&s, &t, &[pc], &c, Pairing::Star);
    assert_eq!(star.bridges.len(), p - 1);
}

#[test]
fn chain_budget_without_bridges() {
    let s = segment(101);
    let e = TargetSet::all(&s).unwrap();
    let n_min = coarsest_level(0.25, s.diameter());
    let h = NetBuilder::new(0.25, n_min, n_min + 2).build(&s).unwrap();
    let t = build_cubes(&s, &h, 0.002).unwrap();
    let g = assemble_gamma(&s, &e, &BridgeGraph::default(), 0.015).unwrap();
    let c = cfg(11.0, 0.02, 1.0 / 16.0, 0.002, 2.0);
    let lb = length_budget(&s, &g, &e, &[], &t, &c, &[0.25, 0.125]);
    assert_relative_eq!(lb.e_part, 1.0, max_relative = 1e-12);
    assert_relative_eq!(lb.bound_e, 10.0 * 2.0 * 101.0 / 101.0, max_relative = 1e-12);
    assert_eq!(lb.bridge_part, 0.0);
    assert_eq!(lb.bound_bridge, 0.0);
    assert!(lb.ok);
}
