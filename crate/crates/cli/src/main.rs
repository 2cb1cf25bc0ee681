use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rectilib::cubes::{build_cubes, verify_cube_axioms, CubeTree};
use rectilib::curve::{
    assemble_gamma, build_bridges, check_bridge_exits, check_parametrization, connectivity, length_budget,
    parametrize, BridgeGraph, Pairing,
};
use rectilib::density::{beta2, bs_sum, density_profiles, split_by_diameter, stratify};
use rectilib::generators::{generate, GeneratorKind, GeneratorSpec};
use rectilib::io;
use rectilib::nets::verify_nets;
use rectilib::pipeline::{
    prepare, run_pipeline, write_outputs, RunConfig, Setup, EXIT_INPUT, EXIT_INVARIANT, EXIT_OK,
};
use rectilib::porosity::{
    appendix_constants, carleson_check, find_porous, root_cube, shadow_map, validate_config, Multiplicity,
    PorousCube,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "rectilib",
    version,
    about = "Nets, dyadic cubes, porous packings and curves through finite measures"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a generator fixture as a points CSV.
    Gen(GenArgs),
    /// Build and verify the net hierarchy.
    Nets(Common),
    /// Build and verify the dyadic cubes.
    Cubes(WithCsv),
    /// Lower density profiles on the target set.
    Density(DensityArgs),
    /// β₂ of the target set, or of its pieces.
    Beta2(Beta2Args),
    /// Truncated dyadic sums diam(Q)/μ(Q).
    Bssum(BssumArgs),
    /// Porous family, packing ratios and shadow map.
    Porous(Common),
    /// Bridges, Γ and its length budget.
    Curve(WithCsv),
    /// Parametrize Γ and check the Lipschitz bound.
    Param(WithCsv),
    /// The whole pipeline; writes report.json and side outputs.
    Run(Common),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: Option<GeneratorKind>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator spec JSON instead of the flags above.
    #[arg(long, conflicts_with_all = ["kind", "resolution", "params"])]
    spec: Option<PathBuf>,
    /// Points CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generator's target ids, if it defines any.
    #[arg(long)]
    target_out: Option<PathBuf>,
}

#[derive(Args)]
struct Common {
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Points file (.csv/.json), or a distance matrix CSV and a weights CSV.
    #[arg(long, num_args = 1..=2)]
    input: Vec<PathBuf>,
    #[arg(long = "gen", value_parser = parse_kind)]
    kind: Option<GeneratorKind>,
    #[arg(long, default_value_t = 1024)]
    resolution: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    target_ids: Option<PathBuf>,
    /// lo1,hi1,lo2,hi2,...
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target_box: Vec<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(short = 'M', long = "M")]
    m: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n0: Option<i32>,
    #[arg(long)]
    n_max: Option<i32>,
    #[arg(long)]
    eps_res: Option<f64>,
    #[arg(long)]
    r_lo: Option<f64>,
    #[arg(long)]
    r_hi: Option<f64>,
    #[arg(long)]
    c_mu: Option<f64>,
    /// Supplied multiplicity b.
    #[arg(long)]
    b: Option<f64>,
    /// Star pairing on ζ_Δ instead of all pairs.
    #[arg(long)]
    spanning: bool,
    #[arg(long)]
    sample_pairs: Option<usize>,
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    force: bool,
    /// Output directory (`run`) or JSON output file (other subcommands).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithCsv {
    #[command(flatten)]
    common: Common,
    /// CSV side output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    common: Common,
    /// Per-point CSV `id,lower_estimate`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report the members with μ(B(x,r)) ≥ r/j below radius 1/k.
    #[arg(long, num_args = 2, value_names = ["J", "K"])]
    stratify: Vec<u32>,
}

#[derive(Args)]
struct Beta2Args {
    #[command(flatten)]
    common: Common,
    /// Point ids of the set; the target set when absent.
    #[arg(long)]
    ids: Option<PathBuf>,
    /// Split the set into pieces of diameter below this bound first.
    #[arg(long)]
    pieces: Option<f64>,
}

#[derive(Args)]
struct BssumArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8)]
    depth: u32,
    /// Point ids; every target point when absent.
    #[arg(long, value_delimiter = ',')]
    point: Vec<u64>,
    /// Per-point CSV `id,sum,skipped`.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<GeneratorKind, String> {
    s.parse().map_err(|_| format!("unknown generator kind {s:?}"))
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(p) => serde_json::from_reader(File::open(p).with_context(|| p.display().to_string())?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => RunConfig::default(),
        };
        if !self.input.is_empty() {
            cfg.input = self.input.clone();
            cfg.generator = None;
        }
        if let Some(kind) = self.kind {
            cfg.generator = Some(
                GeneratorSpec::new(kind, self.resolution)
                    .with_params(self.params.clone())
                    .with_seed(self.seed),
            );
            cfg.input.clear();
        }
        if self.target_ids.is_some() {
            cfg.target_ids = self.target_ids.clone();
        }
        if !self.target_box.is_empty() {
            cfg.target_box = Some(self.target_box.clone());
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(rho, c0, m, delta, n0, sample_pairs, sample_seed);
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f; } )* };
        }
        set_opt!(n_max, eps_res, r_lo, r_hi, c_mu, b);
        if self.spanning {
            cfg.pairing = Pairing::Star;
        }
        cfg.strict |= self.strict;
        cfg.force |= self.force;
        if self.out.is_some() {
            cfg.out_dir = self.out.clone();
        }
        if cfg.input.is_empty() && cfg.generator.is_none() {
            bail!("give --input or --gen (or a --config naming one)");
        }
        Ok(cfg)
    }
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| path.display().to_string())
}

fn status(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}

/// Shared front half of `porous`, `curve` and `param`.
struct Porous {
    setup: Setup,
    tree: CubeTree,
    family: Vec<PorousCube>,
}

fn porous_stage(cfg: &RunConfig) -> Result<Option<Porous>> {
    let validation = validate_config(&cfg.porosity(2.0), cfg.strict);
    if !validation.ok && (cfg.strict || !cfg.force) {
        eprintln!("rejected configuration: {}", serde_json::to_string(&validation)?);
        return Ok(None);
    }
    let setup = prepare(cfg)?;
    let h = setup.nets(cfg)?;
    let tree = build_cubes(&setup.space, &h, cfg.c0)?;
    let family = find_porous(&setup.space, &tree, &setup.e, &setup.porosity(cfg))?;
    Ok(Some(Porous { setup, tree, family }))
}

fn gamma_of(cfg: &RunConfig, p: &Porous) -> Result<BridgeGraph> {
    let bridges = build_bridges(&p.setup.space, &p.tree, &p.family, &p.setup.porosity(cfg), cfg.pairing);
    Ok(assemble_gamma(&p.setup.space, &p.setup.e, &bridges, p.setup.eps_res)?)
}

fn gen(a: &GenArgs) -> Result<i32> {
    let spec = match (&a.spec, a.kind) {
        (Some(p), _) => serde_json::from_reader(File::open(p).with_context(|| p.display().to_string())?)?,
        (None, Some(kind)) => GeneratorSpec::new(kind, a.resolution.context("--resolution is required")?)
            .with_params(a.params.clone())
            .with_seed(a.seed),
        (None, None) => bail!("give --kind or --spec"),
    };
    let g = generate(&spec)?;
    match &a.out {
        Some(p) => io::write_points_csv(&g.space, File::create(p).with_context(|| p.display().to_string())?)?,
        None => io::write_points_csv(&g.space, std::io::stdout().lock())?,
    }
    if let Some(p) = &a.target_out {
        let mut w = csv_writer(p)?;
        w.write_record(["id"])?;
        for id in g.target_ids.iter().flatten() {
            w.write_record([id.to_string()])?;
        }
        w.flush()?;
    }
    Ok(EXIT_OK)
}

fn nets(c: &Common) -> Result<i32> {
    let cfg = c.config()?;
    let s = prepare(&cfg)?;
    let h = s.nets(&cfg)?;
    let report = verify_nets(&h, &s.space);
    let ok = report.ok();
    emit(&json!({ "hierarchy": h.to_json(&s.space), "report": report, "ok": ok }), c.out.as_deref())?;
    Ok(status(ok))
}

fn cubes(a: &WithCsv) -> Result<i32> {
    let cfg = a.common.config()?;
    let s = prepare(&cfg)?;
    let tree = build_cubes(&s.space, &s.nets(&cfg)?, cfg.c0)?;
    let axioms = verify_cube_axioms(&tree, &s.space);
    if let Some(p) = &a.csv {
        let mut w = csv_writer(p)?;
        w.write_record(["id", "level", "cube", "center"])?;
        for (id, n, cube, center) in tree.assignment_rows(&s.space) {
            w.write_record([id.to_string(), n.to_string(), cube.to_string(), center.to_string()])?;
        }
        w.flush()?;
    }
    let ok = axioms.ok();
    emit(&json!({ "tree": tree.to_json(&s.space), "axioms": axioms, "ok": ok }), a.common.out.as_deref())?;
    Ok(status(ok))
}

fn density(a: &DensityArgs) -> Result<i32> {
    let cfg = a.common.config()?;
    let s = prepare(&cfg)?;
    let profiles = density_profiles(&s.space, &s.e.members, s.r_lo, s.r_hi)?;
    let mut lower: Vec<f64> = profiles.iter().map(|p| p.lower_estimate).collect();
    lower.sort_by(f64::total_cmp);
    if let Some(p) = &a.csv {
        let mut w = csv_writer(p)?;
        w.write_record(["id", "lower_estimate"])?;
        for p in &profiles {
            w.write_record([p.point.to_string(), p.lower_estimate.to_string()])?;
        }
        w.flush()?;
    }
    let mut summary = json!({
        "points": lower.len(),
        "radii": s.radii,
        "min_lower_estimate": lower[0],
        "median_lower_estimate": lower[lower.len() / 2],
        "max_lower_estimate": lower[lower.len() - 1],
    });
    if let [j, k] = a.stratify[..] {
        let kept = stratify(&s.space, &s.e, j, k, s.r_lo)?;
        summary["stratum"] = json!({ "j": j, "k": k, "points": kept.len() });
    }
    emit(&summary, a.common.out.as_deref())?;
    Ok(EXIT_OK)
}

fn beta2_cmd(a: &Beta2Args) -> Result<i32> {
    let cfg = a.common.config()?;
    let (space, e) = cfg.load()?;
    let set = match &a.ids {
        Some(p) => io::read_ids(File::open(p).with_context(|| p.display().to_string())?)?
            .into_iter()
            .map(|id| space.index_of(id))
            .collect::<rectilib::Result<Vec<_>>>()?,
        None => e.members.clone(),
    };
    let value = match a.pieces {
        None => serde_json::to_value(beta2(&space, &set)?)?,
        Some(bound) => {
            let pieces: Vec<Value> = split_by_diameter(&space, &set, bound)?
                .into_iter()
                .filter(|p| p.len() >= 2)
                .map(|p| beta2(&space, &p).map(|b| json!({ "size": p.len(), "beta2": b.beta2 })))
                .collect::<rectilib::Result<_>>()?;
            let min = pieces.iter().filter_map(|p| p["beta2"].as_f64()).fold(f64::INFINITY, f64::min);
            json!({ "bound": bound, "pieces": pieces, "min_beta2": min })
        }
    };
    emit(&value, a.common.out.as_deref())?;
    Ok(EXIT_OK)
}

fn bssum(a: &BssumArgs) -> Result<i32> {
    let cfg = a.common.config()?;
    let (space, e) = cfg.load()?;
    let points: Vec<usize> = if a.point.is_empty() {
        e.members.clone()
    } else {
        a.point.iter().map(|&id| space.index_of(id)).collect::<rectilib::Result<_>>()?
    };
    let sums = points.iter().map(|&x| bs_sum(&space, x, a.depth)).collect::<rectilib::Result<Vec<_>>>()?;
    if let Some(p) = &a.csv {
        let mut w = csv_writer(p)?;
        w.write_record(["id", "sum", "skipped"])?;
        for s in &sums {
            w.write_record([s.point.to_string(), s.sum.to_string(), s.skipped.to_string()])?;
        }
        w.flush()?;
    }
    let value = if sums.len() == 1 {
        serde_json::to_value(&sums[0])?
    } else {
        let mut v: Vec<f64> = sums.iter().map(|s| s.sum).collect();
        v.sort_by(f64::total_cmp);
        json!({ "depth": a.depth, "points": v.len(), "min": v[0], "median": v[v.len() / 2], "max": v[v.len() - 1] })
    };
    emit(&value, a.common.out.as_deref())?;
    Ok(EXIT_OK)
}

fn porous(c: &Common) -> Result<i32> {
    let cfg = c.config()?;
    let Some(p) = porous_stage(&cfg)? else { return Ok(EXIT_INPUT) };
    let pcfg = p.setup.porosity(&cfg);
    let shadow = shadow_map(&p.setup.space, &p.tree, &p.setup.e, &p.family, &pcfg);
    let multiplicity = match cfg.b {
        Some(b) => Multiplicity::Supplied(b),
        None => Multiplicity::Observed(shadow.b_observed),
    };
    let constants = appendix_constants(&pcfg, multiplicity)?;
    let root = root_cube(&p.setup.space, &p.tree, &p.setup.e)?;
    let carleson = carleson_check(&p.tree, root, &p.family, &constants);
    let ok = carleson.ok && shadow.all_ok;
    emit(
        &json!({
            "config": pcfg,
            "validation": validate_config(&pcfg, cfg.strict),
            "family": p.family,
            "carleson": carleson,
            "shadow": shadow,
            "ok": ok,
        }),
        c.out.as_deref(),
    )?;
    Ok(status(ok))
}

fn curve(a: &WithCsv) -> Result<i32> {
    let cfg = a.common.config()?;
    let Some(p) = porous_stage(&cfg)? else { return Ok(EXIT_INPUT) };
    let g = gamma_of(&cfg, &p)?;
    let conn = connectivity(&g);
    let budget = length_budget(
        &p.setup.space,
        &g,
        &p.setup.e,
        &p.family,
        &p.tree,
        &p.setup.porosity(&cfg),
        &p.setup.radii,
    );
    let exits = check_bridge_exits(&g, &p.setup.e.members);
    if let Some(path) = &a.csv {
        io::write_edges_csv(
            &p.setup.space,
            &g,
            File::create(path).with_context(|| path.display().to_string())?,
        )?;
    }
    let ok = conn.components == 1 && budget.ok && exits.ok;
    emit(
        &json!({
            "porous": p.family.len(),
            "bridges": g.bridges.len(),
            "skipped": g.skipped.len(),
            "vertices": g.vertices().len(),
            "edges": g.edges().len(),
            "total_length": g.total_length(),
            "components": conn.components,
            "component_sizes": conn.sizes,
            "length_budget": budget,
            "exits": exits,
            "ok": ok,
        }),
        a.common.out.as_deref(),
    )?;
    Ok(status(ok))
}

fn param(a: &WithCsv) -> Result<i32> {
    let cfg = a.common.config()?;
    let Some(p) = porous_stage(&cfg)? else { return Ok(EXIT_INPUT) };
    let g = gamma_of(&cfg, &p)?;
    let conn = connectivity(&g);
    if conn.components != 1 {
        emit(&json!({ "components": conn.components, "ok": false }), a.common.out.as_deref())?;
        return Ok(EXIT_INVARIANT);
    }
    let param = parametrize(&g)?;
    let check = check_parametrization(&param, &g, cfg.sample_pairs, cfg.sample_seed);
    if let Some(path) = &a.csv {
        io::write_param_csv(
            &p.setup.space,
            &param,
            File::create(path).with_context(|| path.display().to_string())?,
        )?;
    }
    emit(
        &json!({
            "visits": param.visits.len(),
            "tree_length": param.tree_length,
            "lip_bound": param.lip_bound,
            "check": check,
            "ok": check.ok,
        }),
        a.common.out.as_deref(),
    )?;
    Ok(status(check.ok))
}

fn run(c: &Common) -> Result<i32> {
    let cfg = c.config()?;
    let outcome = run_pipeline(&cfg)?;
    match &cfg.out_dir {
        Some(dir) => {
            write_outputs(&outcome, dir)?;
            eprintln!("wrote {} (exit {})", dir.join("report.json").display(), outcome.report.exit_code);
        }
        None => std::io::stdout().write_all(outcome.report.to_json()?.as_bytes())?,
    }
    Ok(outcome.report.exit_code)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RECTILIB_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("RECTILIB_THREADS={v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Nets(c) => nets(c),
        Cmd::Cubes(a) => cubes(a),
        Cmd::Density(a) => density(a),
        Cmd::Beta2(a) => beta2_cmd(a),
        Cmd::Bssum(a) => bssum(a),
        Cmd::Porous(c) => porous(c),
        Cmd::Curve(a) => curve(a),
        Cmd::Param(a) => param(a),
        Cmd::Run(c) => run(c),
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
