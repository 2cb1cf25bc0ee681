//! Metric dyadic cubes over a net hierarchy.
//!
//! Every net point of `X_{n+1}` is attached to its nearest point of `X_n`
//! (ties to the smaller id) and every space point to its nearest point of the
//! finest net. A cube at level `n` is the set of points whose ancestor chain
//! passes through its center, with sidelength `5 rho^n`. Partition and nesting
//! then hold by construction; the inner-ball constant is measured.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::nets::NetHierarchy;
use crate::par;
use crate::space::MetricMeasureSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub id: CubeId,
    pub level: i32,
    /// Center point index.
    pub center: usize,
    pub side: f64,
    pub parent: Option<CubeId>,
    pub children: Vec<CubeId>,
    /// Member point indices, ascending.
    pub members: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeTree {
    pub rho: f64,
    pub c0_target: f64,
    /// Largest `c` with `B(center, c * side) ⊆ cube` for every cube, capped at 1.
    pub c0_achieved: f64,
    nets: NetHierarchy,
    cubes: Vec<Cube>,
    /// `by_level[k]` lists the cubes of level `n_min + k`, in center order.
    by_level: Vec<Vec<CubeId>>,
    /// `assignment[k][p]` is the level-`(n_min + k)` cube containing point `p`.
    assignment: Vec<Vec<CubeId>>,
}

fn nearest(space: &MetricMeasureSpace, p: usize, candidates: &[usize]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, &q) in candidates.iter().enumerate() {
        let d = space.dist(p, q);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Builds the cube tree over `h`.
pub fn build_cubes(space: &MetricMeasureSpace, h: &NetHierarchy, c0_target: f64) -> Result<CubeTree> {
    if h.levels().any(|(_, l)| l.is_empty()) {
        return Err(param("hierarchy has an empty level"));
    }
    if !(c0_target > 0.0 && c0_target < 0.5) {
        return Err(param(format!("c0_target must lie in (0, 1/2), got {c0_target}")));
    }
    let levels: Vec<i32> = (h.n_min..=h.n_max).collect();
    let depth = levels.len();

    // parent slot (index into X_{n}) of every slot of X_{n+1}
    let parent_slot: Vec<Vec<usize>> = levels[..depth - 1]
        .iter()
        .map(|&n| {
            let coarse = h.level(n);
            par::map(h.level(n + 1), |&q| nearest(space, q, coarse))
        })
        .collect();

    let mut cubes = Vec::new();
    let mut by_level = Vec::with_capacity(depth);
    for &n in &levels {
        let ids: Vec<CubeId> = h
            .level(n)
            .iter()
            .map(|&c| {
                let id = CubeId(cubes.len());
                cubes.push(Cube {
                    id,
                    level: n,
                    center: c,
                    side: 5.0 * h.scale(n),
                    parent: None,
                    children: Vec::new(),
                    members: Vec::new(),
                    mass: 0.0,
                });
                id
            })
            .collect();
        by_level.push(ids);
    }
    for k in 0..depth - 1 {
        for (slot, &ps) in parent_slot[k].iter().enumerate() {
            let child = by_level[k + 1][slot];
            let parent = by_level[k][ps];
            cubes[child.0].parent = Some(parent);
            cubes[parent.0].children.push(child);
        }
    }

    let finest = h.level(h.n_max);
    let leaf_slot = par::map_range(space.len(), |p| nearest(space, p, finest));
    let mut assignment = vec![vec![CubeId(0); space.len()]; depth];
    for p in 0..space.len() {
        let mut slot = leaf_slot[p];
        for k in (0..depth).rev() {
            assignment[k][p] = by_level[k][slot];
            if k > 0 {
                slot = parent_slot[k - 1][slot];
            }
        }
    }
    for row in &assignment {
        for (p, &c) in row.iter().enumerate() {
            cubes[c.0].members.push(p);
        }
    }
    for c in &mut cubes {
        c.mass = space.mass_of(&c.members);
    }

    let mut tree =
        CubeTree { rho: h.rho, c0_target, c0_achieved: 1.0, nets: h.clone(), cubes, by_level, assignment };
    tree.c0_achieved = tree.measure_inner_constant(space);
    Ok(tree)
}

impl CubeTree {
    pub fn n_min(&self) -> i32 {
        self.nets.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.nets.n_max
    }

    pub fn nets(&self) -> &NetHierarchy {
        &self.nets
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn cube(&self, id: CubeId) -> &Cube {
        &self.cubes[id.0]
    }

    pub fn level(&self, n: i32) -> &[CubeId] {
        &self.by_level[(n - self.n_min()) as usize]
    }

    pub fn roots(&self) -> &[CubeId] {
        self.level(self.n_min())
    }

    /// The level-`n` cube containing point index `p`.
    pub fn cube_at(&self, p: usize, n: i32) -> CubeId {
        self.assignment[(n - self.n_min()) as usize][p]
    }

    /// `cube_at` addressed by external id, with range checks.
    pub fn cube_of(&self, space: &MetricMeasureSpace, point_id: u64, n: i32) -> Result<CubeId> {
        let p = space.index_of(point_id)?;
        if !self.nets.contains_level(n) {
            return Err(param(format!("level {n} outside [{}, {}]", self.n_min(), self.n_max())));
        }
        Ok(self.cube_at(p, n))
    }

    /// `true` if `inner` is `outer` or one of its descendants.
    pub fn is_descendant(&self, inner: CubeId, outer: CubeId) -> bool {
        let mut cur = Some(inner);
        while let Some(c) = cur {
            if c == outer {
                return true;
            }
            if self.cube(c).level <= self.cube(outer).level {
                return false;
            }
            cur = self.cube(c).parent;
        }
        false
    }

    /// Ancestor chain from the root down to `id`.
    pub fn chain(&self, id: CubeId) -> Vec<CubeId> {
        let mut out = vec![id];
        let mut cur = self.cube(id).parent;
        while let Some(c) = cur {
            out.push(c);
            cur = self.cube(c).parent;
        }
        out.reverse();
        out
    }

    /// All cubes of the subtree rooted at `root`, parents before children.
    pub fn subtree(&self, root: CubeId) -> Vec<CubeId> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.cube(out[i]).children);
            i += 1;
        }
        out
    }

    fn measure_inner_constant(&self, space: &MetricMeasureSpace) -> f64 {
        let ratios = par::map(&self.cubes, |c| {
            let k = (c.level - self.n_min()) as usize;
            let nearest_outside = (0..space.len())
                .filter(|&p| self.assignment[k][p] != c.id)
                .map(|p| space.dist(c.center, p))
                .fold(f64::INFINITY, f64::min);
            nearest_outside / c.side
        });
        ratios.into_iter().fold(1.0, f64::min)
    }

    /// Moves `point` into cube `to` at its level, leaving every other level
    /// untouched. Only useful for fault injection in tests.
    pub fn move_member(&mut self, point: usize, to: CubeId) {
        let level = self.cubes[to.0].level;
        let k = (level - self.n_min()) as usize;
        let from = self.assignment[k][point];
        self.cubes[from.0].members.retain(|&p| p != point);
        let dest = &mut self.cubes[to.0].members;
        let pos = dest.partition_point(|&p| p < point);
        dest.insert(pos, point);
        self.assignment[k][point] = to;
    }

    /// JSON dump: per level, each cube's center id, parent center id and mass.
    pub fn to_json(&self, space: &MetricMeasureSpace) -> serde_json::Value {
        let levels: Vec<serde_json::Value> = (self.n_min()..=self.n_max())
            .map(|n| {
                let cubes: Vec<serde_json::Value> = self
                    .level(n)
                    .iter()
                    .map(|&id| {
                        let c = self.cube(id);
                        serde_json::json!({
                            "id": c.id.0,
                            "center": space.id(c.center),
                            "side": c.side,
                            "parent": c.parent.map(|p| p.0),
                            "size": c.members.len(),
                            "mass": c.mass,
                        })
                    })
                    .collect();
                serde_json::json!({ "level": n, "cubes": cubes })
            })
            .collect();
        serde_json::json!({
            "rho": self.rho,
            "c0_target": self.c0_target,
            "c0_achieved": self.c0_achieved,
            "levels": levels,
        })
    }

    /// Per-point assignment rows `(point id, level, cube id, center id)`.
    pub fn assignment_rows(&self, space: &MetricMeasureSpace) -> Vec<(u64, i32, usize, u64)> {
        let mut rows = Vec::new();
        for n in self.n_min()..=self.n_max() {
            for p in 0..space.len() {
                let c = self.cube(self.cube_at(p, n));
                rows.push((space.id(p), n, c.id.0, space.id(c.center)));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CubeViolation {
    Partition { level: i32, point: u64, count: usize },
    Nesting { cube: usize, point: u64 },
    OuterBall { cube: usize, point: u64, dist: f64, side: f64 },
    InnerBall { cube: usize, point: u64, dist: f64, radius: f64 },
    Centers { level: i32 },
    Mass { cube: usize, mass: f64, children: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeAxiomReport {
    pub partition: bool,
    pub nesting: bool,
    pub outer_ball: bool,
    pub inner_ball: bool,
    pub centers_are_nets: bool,
    pub mass_conservation: bool,
    pub c0_target: f64,
    pub c0_achieved: f64,
    pub witnesses: Vec<CubeViolation>,
}

impl CubeAxiomReport {
    pub fn ok(&self) -> bool {
        self.partition
            && self.nesting
            && self.outer_ball
            && self.inner_ball
            && self.centers_are_nets
            && self.mass_conservation
    }
}

/// Re-derives every cube axiom from member lists alone.
pub fn verify_cube_axioms(tree: &CubeTree, space: &MetricMeasureSpace) -> CubeAxiomReport {
    let mut witnesses = Vec::new();
    let n = space.len();

    let mut partition = true;
    for level in tree.n_min()..=tree.n_max() {
        let mut count = vec![0usize; n];
        for &id in tree.level(level) {
            for &p in &tree.cube(id).members {
                count[p] += 1;
            }
        }
        if let Some(p) = (0..n).find(|&p| count[p] != 1) {
            partition = false;
            witnesses.push(CubeViolation::Partition { level, point: space.id(p), count: count[p] });
            break;
        }
    }

    // a cube nests iff all its members fall in its parent's member list
    let mut nesting = true;
    'nest: for c in tree.cubes() {
        if let Some(parent) = c.parent {
            let pm = &tree.cube(parent).members;
            for &p in &c.members {
                if pm.binary_search(&p).is_err() {
                    nesting = false;
                    witnesses.push(CubeViolation::Nesting { cube: c.id.0, point: space.id(p) });
                    break 'nest;
                }
            }
        }
    }

    let mut outer_ball = true;
    'outer: for c in tree.cubes() {
        for &p in &c.members {
            let d = space.dist(c.center, p);
            if !(d < c.side) {
                outer_ball = false;
                witnesses.push(CubeViolation::OuterBall {
                    cube: c.id.0,
                    point: space.id(p),
                    dist: d,
                    side: c.side,
                });
                break 'outer;
            }
        }
    }

    let mut inner_ball = true;
    'inner: for c in tree.cubes() {
        let radius = tree.c0_target * c.side;
        for p in 0..n {
            let d = space.dist(c.center, p);
            if d < radius && c.members.binary_search(&p).is_err() {
                inner_ball = false;
                witnesses.push(CubeViolation::InnerBall {
                    cube: c.id.0,
                    point: space.id(p),
                    dist: d,
                    radius,
                });
                break 'inner;
            }
        }
    }

    let mut centers_are_nets = true;
    for (level, net) in tree.nets().levels() {
        let mut centers: Vec<usize> = tree.level(level).iter().map(|&id| tree.cube(id).center).collect();
        centers.sort_unstable();
        if centers != net {
            centers_are_nets = false;
            witnesses.push(CubeViolation::Centers { level });
            break;
        }
    }

    let mut mass_conservation = true;
    for c in tree.cubes() {
        if c.children.is_empty() {
            continue;
        }
        let sum: f64 = c.children.iter().map(|&k| tree.cube(k).mass).sum();
        if (sum - c.mass).abs() > 1e-12 * c.mass.max(1.0) {
            mass_conservation = false;
            witnesses.push(CubeViolation::Mass { cube: c.id.0, mass: c.mass, children: sum });
            break;
        }
    }

    CubeAxiomReport {
        partition,
        nesting,
        outer_ball,
        inner_ball,
        centers_are_nets,
        mass_conservation,
        c0_target: tree.c0_target,
        c0_achieved: tree.c0_achieved,
        witnesses,
    }
}

/// Looks up a cube id, failing on out-of-range ids.
pub fn checked_cube(tree: &CubeTree, id: usize) -> Result<&Cube> {
    tree.cubes().get(id).ok_or_else(|| Error::Input(format!("unknown cube id {id}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::build_nets;

    fn line(xs: &[f64]) -> MetricMeasureSpace {
        MetricMeasureSpace::from_points(xs.iter().map(|&x| vec![x]).collect(), vec![1.0; xs.len()]).unwrap()
    }

    #[test]
    fn singleton_space() {
        let s = line(&[0.0]);
        let h = build_nets(&s, 0.25, 0, 3).unwrap();
        let t = build_cubes(&s, &h, 0.1).unwrap();
        assert_eq!(t.cubes().len(), 4);
        assert!(t.cubes().iter().all(|c| c.members == [0]));
        assert!(verify_cube_axioms(&t, &s).ok());
    }

    #[test]
    fn four_points_hand_trace() {
        // X_0 = {0, 1} (scale 1, the endpoints are exactly 1 apart), X_1 = everything
        let s = line(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let h = build_nets(&s, 0.25, 0, 1).unwrap();
        assert_eq!(h.level(0), &[0, 3]);
        assert_eq!(h.level(1), &[0, 1, 2, 3]);
        let t = build_cubes(&s, &h, 0.1).unwrap();
        // 1/3 -> 0 (dist 1/3 < 2/3), 2/3 -> 1 (dist 1/3 < 2/3)
        let c0 = t.cube_at(0, 0);
        let c3 = t.cube_at(3, 0);
        assert_eq!(t.cube(c0).members, vec![0, 1]);
        assert_eq!(t.cube(c3).members, vec![2, 3]);
        for p in 0..4 {
            assert_eq!(t.cube(t.cube_at(p, 1)).members, vec![p]);
        }
        assert!(verify_cube_axioms(&t, &s).ok());
    }

    #[test]
    fn cube_of_properties() {
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let s = line(&xs);
        let h = build_nets(&s, 0.25, -1, 3).unwrap();
        let t = build_cubes(&s, &h, 0.05).unwrap();
        let root = t.roots()[0];
        for p in 0..64u64 {
            assert_eq!(t.cube_of(&s, p, -1).unwrap(), root);
            for n in -1..3 {
                let fine = t.cube_of(&s, p, n + 1).unwrap();
                assert_eq!(t.cube(fine).parent, Some(t.cube_of(&s, p, n).unwrap()));
            }
        }
        for c in t.cubes() {
            assert_eq!(t.cube_at(c.center, c.level), c.id);
        }
        assert!(t.cube_of(&s, 999, 0).is_err());
        assert!(t.cube_of(&s, 0, 9).is_err());
    }

    #[test]
    fn moved_member_breaks_outer_ball() {
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let s = line(&xs);
        let h = build_nets(&s, 0.25, -1, 3).unwrap();
        let mut t = build_cubes(&s, &h, 0.05).unwrap();
        let target = t.cube_at(0, 3);
        t.move_member(63, target);
        let rep = verify_cube_axioms(&t, &s);
        assert!(rep.partition);
        assert!(!rep.outer_ball);
        assert!(rep.witnesses.iter().any(|w| matches!(w, CubeViolation::OuterBall { point: 63, .. })));
    }

    #[test]
    fn rejects_bad_c0() {
        let s = line(&[0.0, 1.0]);
        let h = build_nets(&s, 0.25, 0, 1).unwrap();
        assert!(build_cubes(&s, &h, 0.5).is_err());
        assert!(build_cubes(&s, &h, 0.0).is_err());
    }
}
