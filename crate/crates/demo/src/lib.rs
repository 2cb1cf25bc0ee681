//! Browser bindings. Every operation takes a generator spec and returns a JSON
//! string for the page to draw.

use rectilib::curve::{Pairing, Provenance, Vertex};
use rectilib::density::density_profile;
use rectilib::generators::{generate, GeneratorKind, GeneratorSpec};
use rectilib::pipeline::{prepare, run_pipeline, RunConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest point count the page will build.
pub const MAX_POINTS: usize = 5000;

pub fn spec(kind: &str, resolution: usize, params: &[f64]) -> Result<GeneratorSpec, String> {
    let kind: GeneratorKind = kind.parse().map_err(|e: rectilib::Error| e.to_string())?;
    Ok(GeneratorSpec::new(kind, resolution).with_params(params.to_vec()))
}

fn config(spec: GeneratorSpec, rho: f64, delta: f64) -> Result<RunConfig, String> {
    let size = generate(&spec).map_err(|e| e.to_string())?.space.len();
    if size > MAX_POINTS {
        return Err(format!("{size} points; the demo stops at {MAX_POINTS}"));
    }
    Ok(RunConfig { rho, delta, ..RunConfig::from_generator(spec) })
}

fn xy(space: &rectilib::space::MetricMeasureSpace, i: usize) -> [f64; 2] {
    let c = space.coords(i).unwrap_or(&[]);
    [c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)]
}

/// Points, the net at every level, and the cube of every point at every level.
pub fn nets_json(spec: GeneratorSpec, rho: f64) -> Result<String, String> {
    let cfg = config(spec, rho, 0.02)?;
    let s = prepare(&cfg).map_err(|e| e.to_string())?;
    let h = s.nets(&cfg).map_err(|e| e.to_string())?;
    let tree = rectilib::cubes::build_cubes(&s.space, &h, cfg.c0).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = (0..s.space.len()).map(|i| xy(&s.space, i)).collect();
    let levels: Vec<Value> = (tree.n_min()..=tree.n_max())
        .map(|n| {
            let cubes: Vec<usize> = (0..s.space.len()).map(|p| tree.cube_at(p, n).0).collect();
            json!({
                "level": n,
                "radius": h.scale(n),
                "net": h.level(n),
                "cube_of": cubes,
                "side": 5.0 * h.scale(n),
            })
        })
        .collect();
    Ok(json!({ "points": points, "levels": levels, "c0_achieved": tree.c0_achieved }).to_string())
}

/// Runs the whole pipeline and returns what is needed to draw `E`, the porous
/// cubes, `Γ` (bridges as pairs of endpoints) and the traversal order.
pub fn curve_json(spec: GeneratorSpec, rho: f64, delta: f64, star: bool) -> Result<String, String> {
    let mut cfg = config(spec, rho, delta)?;
    cfg.sample_pairs = 2000;
    if star {
        cfg.pairing = Pairing::Star;
    }
    let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let r = &out.report;
    let Some(st) = &r.stages else {
        return Ok(json!({ "rejected": r.validation }).to_string());
    };
    let space = out.space.as_ref().unwrap();
    let tree = out.tree.as_ref().unwrap();
    let gamma = out.gamma.as_ref().unwrap();
    let points: Vec<[f64; 2]> = (0..space.len()).map(|i| xy(space, i)).collect();
    let mut in_e = vec![false; space.len()];
    for &p in &out.target.as_ref().unwrap().members {
        in_e[p] = true;
    }
    let porous: Vec<Value> = st
        .porous
        .family
        .iter()
        .map(|pc| {
            let c = tree.cube(pc.cube);
            json!({ "center": c.center, "side": c.side, "level": pc.level, "witness": pc.witness })
        })
        .collect();
    let adjacency: Vec<[usize; 2]> = gamma
        .edges()
        .iter()
        .filter(|e| e.provenance == Provenance::Adjacency)
        .filter_map(|e| Some([e.u.ground()?, e.v.ground()?]))
        .collect();
    let bridges: Vec<[usize; 2]> = gamma.bridges.iter().map(|b| [b.x, b.y]).collect();
    let order: Vec<usize> =
        out.param.as_ref().map(|p| p.visits.iter().filter_map(Vertex::ground).collect()).unwrap_or_default();
    Ok(json!({
        "points": points,
        "in_e": in_e,
        "porous": porous,
        "adjacency": adjacency,
        "bridges": bridges,
        "order": order,
        "components": st.gamma.components,
        "carleson": { "worst": st.carleson.worst_ratio, "c1": st.carleson.constants.c1 },
        "length": { "e_part": st.length.e_part, "bridge_part": st.length.bridge_part },
        "lip_bound": st.parametrization.as_ref().map(|p| p.lip_bound),
        "invariants": r.invariants,
    })
    .to_string())
}

/// `μ(B(x, r)) / r` against `r` for one point, and every point's lower estimate.
pub fn density_json(spec: GeneratorSpec, point: usize) -> Result<String, String> {
    let cfg = config(spec, 1.0 / 16.0, 0.02)?;
    let s = prepare(&cfg).map_err(|e| e.to_string())?;
    if point >= s.space.len() {
        return Err(format!("point {point} out of range"));
    }
    let all: Vec<usize> = (0..s.space.len()).collect();
    let lower: Vec<f64> = rectilib::density::density_profiles(&s.space, &all, s.r_lo, s.r_hi)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.lower_estimate)
        .collect();
    let prof = density_profile(&s.space, point, s.r_lo, s.r_hi).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = all.iter().map(|&i| xy(&s.space, i)).collect();
    Ok(json!({ "points": points, "lower": lower, "point": point, "radii": prof.radii, "values": prof.values })
        .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn nets_view(kind: &str, resolution: usize, params: Vec<f64>, rho: f64) -> Result<String, JsValue> {
    js(spec(kind, resolution, &params).and_then(|s| nets_json(s, rho)))
}

#[wasm_bindgen]
pub fn curve_view(
    kind: &str,
    resolution: usize,
    params: Vec<f64>,
    rho: f64,
    delta: f64,
    star: bool,
) -> Result<String, JsValue> {
    js(spec(kind, resolution, &params).and_then(|s| curve_json(s, rho, delta, star)))
}

#[wasm_bindgen]
pub fn density_view(
    kind: &str,
    resolution: usize,
    params: Vec<f64>,
    point: usize,
) -> Result<String, JsValue> {
    js(spec(kind, resolution, &params).and_then(|s| density_json(s, point)))
}
