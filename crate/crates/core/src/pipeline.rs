//! The end-to-end run: nets, cubes, densities, porous cubes and their
//! packing, bridges, `Γ`, and its parametrization.
//!
//! The report is a pure function of the configuration; wall-clock timings are
//! returned separately.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cubes::{build_cubes, verify_cube_axioms, CubeAxiomReport, CubeTree};
use crate::curve::{
    assemble_gamma, build_bridges, check_parametrization, connectivity, length_budget, parametrize,
    BridgeGraph, CubeBridges, CurveParametrization, LengthBudget, Pairing, ParamCheck,
};
use crate::density::{density_profiles, radius_grid, DensityProfile};
use crate::error::{Error, Result};
use crate::generators::{generate, GeneratorSpec};
use crate::io;
use crate::nets::{coarsest_level, finest_level_above, verify_nets, NetBuilder, NetHierarchy, NetReport};
use crate::porosity::{
    appendix_constants, carleson_check, find_porous, root_cube, shadow_map, validate_config, CarlesonReport,
    ConfigValidation, Multiplicity, PorosityConfig, PorousCube, ShadowReport,
};
use crate::space::{doubling_estimate, DoublingEstimate, MetricMeasureSpace, TargetSet};

pub const SCHEMA: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// One points file, or a matrix file and a weights file.
    pub input: Vec<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    /// File of target point ids.
    pub target_ids: Option<PathBuf>,
    /// Axis box `lo1, hi1, lo2, hi2, ...` (closed) selecting the target.
    pub target_box: Option<Vec<f64>>,
    pub rho: f64,
    pub c0: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub delta: f64,
    pub n0: i32,
    pub n_max: Option<i32>,
    pub eps_res: Option<f64>,
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    /// Overrides the measured doubling constant.
    pub c_mu: Option<f64>,
    /// Supplied multiplicity `b`; measured from the shadow map otherwise.
    pub b: Option<f64>,
    pub pairing: Pairing,
    pub sample_pairs: usize,
    pub sample_seed: u64,
    pub strict: bool,
    /// Run even when the porosity parameters fail validation.
    pub force: bool,
    /// Not part of the report: two runs differing only here report identically.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: Vec::new(),
            generator: None,
            target_ids: None,
            target_box: None,
            rho: 1.0 / 16.0,
            c0: 1.0 / 500.0,
            m: 11.0,
            delta: 0.02,
            n0: 2,
            n_max: None,
            eps_res: None,
            r_lo: None,
            r_hi: None,
            c_mu: None,
            b: None,
            pairing: Pairing::Complete,
            sample_pairs: 10_000,
            sample_seed: 0,
            strict: false,
            force: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_generator(spec: GeneratorSpec) -> Self {
        RunConfig { generator: Some(spec), ..Default::default() }
    }

    pub fn porosity(&self, c_mu: f64) -> PorosityConfig {
        PorosityConfig { m: self.m, delta: self.delta, n0: self.n0, rho: self.rho, c0: self.c0, c_mu }
    }

    /// Loads or generates the space and selects the target.
    pub fn load(&self) -> Result<(MetricMeasureSpace, TargetSet)> {
        let (space, gen_target) = match (&self.generator, self.input.is_empty()) {
            (Some(spec), true) => {
                let g = generate(spec)?;
                let t = g.target_ids.is_some().then(|| g.target()).transpose()?;
                (g.space, t)
            }
            (None, false) => (io::load_space(&self.input)?, None),
            _ => return Err(Error::Input("give exactly one of an input file and a generator".into())),
        };
        let target = match (&self.target_ids, &self.target_box) {
            (Some(_), Some(_)) => {
                return Err(Error::Input("give at most one of target ids and target box".into()))
            }
            (Some(path), None) => {
                let ids = io::read_ids(std::fs::File::open(path)?)?;
                let members = ids.iter().map(|&id| space.index_of(id)).collect::<Result<Vec<_>>>()?;
                TargetSet::enclosing(&space, members)?
            }
            (None, Some(bx)) => {
                let dim = space.dim().ok_or(Error::UnsupportedMetric)?;
                if bx.len() != 2 * dim {
                    return Err(Error::Input(format!("target box needs {} numbers", 2 * dim)));
                }
                let members: Vec<usize> = (0..space.len())
                    .filter(|&p| {
                        let c = space.coords(p).unwrap();
                        (0..dim).all(|k| bx[2 * k] <= c[k] && c[k] <= bx[2 * k + 1])
                    })
                    .collect();
                TargetSet::enclosing(&space, members)?
            }
            (None, None) => match gen_target {
                Some(t) => t,
                None => TargetSet::all(&space)?,
            },
        };
        Ok((space, target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub points: usize,
    pub dim: Option<usize>,
    pub total_mass: f64,
    pub diameter: f64,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub points: usize,
    pub mass: f64,
    pub r0: f64,
    pub xi0: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub n_min: i32,
    pub n_max: i32,
    pub eps_res: f64,
    pub radii: Vec<f64>,
    pub c_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetsSummary {
    pub sizes: Vec<usize>,
    pub report: NetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubesSummary {
    pub count: usize,
    pub axioms: CubeAxiomReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub points: usize,
    pub min_lower_estimate: f64,
    pub median_lower_estimate: f64,
    pub max_lower_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousSummary {
    pub count: usize,
    pub per_level: BTreeMap<i32, usize>,
    pub family: Vec<PorousCube>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSummary {
    pub bridges: usize,
    pub skipped: usize,
    pub per_cube: Vec<CubeBridges>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub vertices: usize,
    pub edges: usize,
    pub components: usize,
    pub component_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub visits: usize,
    pub tree_length: f64,
    pub lip_bound: f64,
    pub check: ParamCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stages {
    pub space: SpaceSummary,
    pub target: TargetSummary,
    pub scales: Scales,
    pub doubling: DoublingEstimate,
    pub nets: NetsSummary,
    pub cubes: CubesSummary,
    pub density: DensitySummary,
    pub porous: PorousSummary,
    pub carleson: CarlesonReport,
    pub shadow: ShadowReport,
    pub bridges: BridgeSummary,
    pub gamma: GammaSummary,
    pub length: LengthBudget,
    pub parametrization: Option<ParamSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: RunConfig,
    pub validation: ConfigValidation,
    pub stages: Option<Stages>,
    pub invariants: BTreeMap<String, bool>,
    pub ok: bool,
    pub exit_code: i32,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Everything a run produced, for side outputs.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// `(stage, seconds)` in execution order.
    pub timings: Vec<(String, f64)>,
    pub space: Option<MetricMeasureSpace>,
    pub target: Option<TargetSet>,
    pub tree: Option<CubeTree>,
    pub profiles: Vec<DensityProfile>,
    pub gamma: Option<BridgeGraph>,
    pub param: Option<CurveParametrization>,
}

/// Stage timer; records nothing where the platform has no clock.
struct Clock {
    start: Option<Instant>,
    laps: Vec<(String, f64)>,
}

impl Clock {
    fn new() -> Self {
        Clock { start: (!cfg!(target_arch = "wasm32")).then(Instant::now), laps: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        if let Some(start) = self.start {
            let now = Instant::now();
            self.laps.push((stage.to_string(), (now - start).as_secs_f64()));
            self.start = Some(now);
        }
    }
}

/// The loaded space and target with every derived scale of a run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub space: MetricMeasureSpace,
    pub e: TargetSet,
    pub n_min: i32,
    pub n_max: i32,
    pub eps_res: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub radii: Vec<f64>,
    pub doubling: DoublingEstimate,
    pub c_mu: f64,
}

impl Setup {
    pub fn porosity(&self, cfg: &RunConfig) -> PorosityConfig {
        cfg.porosity(self.c_mu)
    }

    pub fn nets(&self, cfg: &RunConfig) -> Result<NetHierarchy> {
        NetBuilder::new(cfg.rho, self.n_min, self.n_max)
            .seeds(vec![self.e.xi0])
            .build(&self.space)
            .map_err(Error::at("nets"))
    }
}

/// Loads the input and fixes the level range, adjacency scale, radius grid and doubling constant.
pub fn prepare(cfg: &RunConfig) -> Result<Setup> {
    setup(cfg, &mut Clock::new())
}

fn setup(cfg: &RunConfig, clock: &mut Clock) -> Result<Setup> {
    let (space, e) = cfg.load().map_err(Error::at("load"))?;
    let diameter = space.diameter();
    let resolution = space.resolution();
    clock.lap("load");

    let n_min = coarsest_level(cfg.rho, diameter);
    let n_max = cfg.n_max.unwrap_or_else(|| finest_level_above(cfg.rho, resolution / 2.0)).max(n_min);
    let eps_res = cfg.eps_res.unwrap_or(2.0 * cfg.rho.powi(n_max));
    let r_hi = cfg.r_hi.unwrap_or(diameter / 4.0);
    let r_lo = cfg.r_lo.unwrap_or((8.0 * resolution).min(r_hi / 2.0));
    let radii = radius_grid(r_lo, r_hi).map_err(Error::at("scales"))?;

    let all: Vec<usize> = (0..space.len()).collect();
    let doubling = doubling_estimate(&space, &radii, &all).map_err(Error::at("doubling"))?;
    let c_mu = cfg.c_mu.unwrap_or(doubling.c_hat).max(1.0 + 1e-12);
    clock.lap("doubling");
    Ok(Setup { space, e, n_min, n_max, eps_res, r_lo, r_hi, radii, doubling, c_mu })
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut clock = Clock::new();
    let validation = validate_config(&cfg.porosity(2.0), cfg.strict);
    if !validation.ok && (cfg.strict || !cfg.force) {
        let report = RunReport {
            schema: SCHEMA,
            config: cfg.clone(),
            validation,
            stages: None,
            invariants: BTreeMap::new(),
            ok: false,
            exit_code: EXIT_INPUT,
        };
        return Ok(RunOutcome {
            report,
            timings: Vec::new(),
            space: None,
            target: None,
            tree: None,
            profiles: Vec::new(),
            gamma: None,
            param: None,
        });
    }

    let Setup { space, e, n_min, n_max, eps_res, r_lo, r_hi, radii, doubling, c_mu } =
        setup(cfg, &mut clock)?;
    let diameter = space.diameter();
    let resolution = space.resolution();
    let pcfg = cfg.porosity(c_mu);

    let h =
        NetBuilder::new(cfg.rho, n_min, n_max).seeds(vec![e.xi0]).build(&space).map_err(Error::at("nets"))?;
    let net_report = verify_nets(&h, &space);
    clock.lap("nets");

    let tree = build_cubes(&space, &h, cfg.c0).map_err(Error::at("cubes"))?;
    let axioms = verify_cube_axioms(&tree, &space);
    clock.lap("cubes");

    let profiles = density_profiles(&space, &e.members, r_lo, r_hi).map_err(Error::at("density"))?;
    let mut lower: Vec<f64> = profiles.iter().map(|p| p.lower_estimate).collect();
    lower.sort_by(f64::total_cmp);
    let density = DensitySummary {
        points: lower.len(),
        min_lower_estimate: lower[0],
        median_lower_estimate: lower[lower.len() / 2],
        max_lower_estimate: lower[lower.len() - 1],
    };
    clock.lap("density");

    let root = root_cube(&space, &tree, &e).map_err(Error::at("porous"))?;
    let porous = find_porous(&space, &tree, &e, &pcfg).map_err(Error::at("porous"))?;
    let shadow = shadow_map(&space, &tree, &e, &porous, &pcfg);
    let multiplicity = match cfg.b {
        Some(b) => Multiplicity::Supplied(b),
        None => Multiplicity::Observed(shadow.b_observed),
    };
    let constants = appendix_constants(&pcfg, multiplicity).map_err(Error::at("carleson"))?;
    let carleson = carleson_check(&tree, root, &porous, &constants);
    let mut per_level = BTreeMap::new();
    for pc in &porous {
        *per_level.entry(pc.level).or_insert(0) += 1;
    }
    clock.lap("porous");

    let bridges = build_bridges(&space, &tree, &porous, &pcfg, cfg.pairing);
    let gamma = assemble_gamma(&space, &e, &bridges, eps_res).map_err(Error::at("gamma"))?;
    let conn = connectivity(&gamma);
    let length = length_budget(&space, &gamma, &e, &porous, &tree, &pcfg, &radii);
    clock.lap("gamma");

    let param = if conn.components == 1 {
        Some(parametrize(&gamma).map_err(Error::at("parametrize"))?)
    } else {
        None
    };
    let param_summary = param.as_ref().map(|p| ParamSummary {
        visits: p.visits.len(),
        tree_length: p.tree_length,
        lip_bound: p.lip_bound,
        check: check_parametrization(p, &gamma, cfg.sample_pairs, cfg.sample_seed),
    });
    clock.lap("parametrize");

    let mut invariants = BTreeMap::new();
    invariants.insert("config_valid".to_string(), validation.ok);
    invariants.insert("nets".into(), net_report.ok());
    invariants.insert("cubes".into(), axioms.ok());
    invariants.insert("carleson".into(), carleson.ok);
    invariants.insert("shadow".into(), shadow.all_ok);
    invariants.insert("connected".into(), conn.components == 1);
    invariants.insert("length_budget".into(), length.ok);
    invariants.insert("parametrization".into(), param_summary.as_ref().is_some_and(|p| p.check.ok));
    let ok = invariants.values().all(|&b| b);

    let stages = Stages {
        space: SpaceSummary {
            points: space.len(),
            dim: space.dim(),
            total_mass: space.total_mass(),
            diameter,
            resolution,
        },
        target: TargetSummary {
            points: e.members.len(),
            mass: e.mass(&space),
            r0: e.r0,
            xi0: space.id(e.xi0),
        },
        scales: Scales { n_min, n_max, eps_res, radii, c_mu },
        doubling,
        nets: NetsSummary { sizes: h.sizes(), report: net_report },
        cubes: CubesSummary { count: tree.cubes().len(), axioms },
        density,
        porous: PorousSummary { count: porous.len(), per_level, family: porous },
        carleson,
        shadow,
        bridges: BridgeSummary {
            bridges: gamma.bridges.len(),
            skipped: gamma.skipped.len(),
            per_cube: gamma.per_cube.clone(),
        },
        gamma: GammaSummary {
            vertices: gamma.vertices().len(),
            edges: gamma.edges().len(),
            components: conn.components,
            component_sizes: conn.sizes,
        },
        length,
        parametrization: param_summary,
    };
    let report = RunReport {
        schema: SCHEMA,
        config: cfg.clone(),
        validation,
        stages: Some(stages),
        invariants,
        ok,
        exit_code: if ok { EXIT_OK } else { EXIT_INVARIANT },
    };
    Ok(RunOutcome {
        report,
        timings: clock.laps,
        space: Some(space),
        target: Some(e),
        tree: Some(tree),
        profiles,
        gamma: Some(gamma),
        param,
    })
}

/// Writes `report.json`, `timings.json` and the CSV side outputs into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    use std::fs::File;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), outcome.report.to_json()?)?;
    let timings: BTreeMap<&str, f64> = outcome.timings.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
    let Some(space) = &outcome.space else { return Ok(()) };
    if let Some(g) = &outcome.gamma {
        io::write_edges_csv(space, g, File::create(dir.join("gamma_edges.csv"))?)?;
    }
    if let Some(p) = &outcome.param {
        io::write_param_csv(space, p, File::create(dir.join("param.csv"))?)?;
    }
    let mut w = csv::Writer::from_path(dir.join("density.csv"))?;
    w.write_record(["id", "lower_estimate"])?;
    for p in &outcome.profiles {
        w.write_record([p.point.to_string(), p.lower_estimate.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
