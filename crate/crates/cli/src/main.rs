use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use reparam::functionals::{
    c0_distance, calibrate_c0_embedding, calibrate_energy_bound, diameter, energy, energy_bound_ratio,
    sobolev_distance, sobolev_norm, v1_energy, volume, SobolevParams,
};
use reparam::mapspace::{
    antipodal_map, axis_map, bump_perturb, constant_map, identity_map, power_map, pullback, DiscreteMap,
    TargetManifold,
};
use reparam::mobius::{random_element, Mat2, MobiusElement};
use reparam::moment::{center_map, pseudo_moment, pseudo_moment_diagnostics, CenteringOptions, CenteringStatus};
use reparam::properness::{
    align, energy_separation_threshold, orbit_escape_experiment, precompact_witness, resampling_error,
    separation_experiment, stabilizer_search, ExperimentReport, Metric, NeighborhoodSpec, PrecompactConfig,
    SeparationConfig, StabilizerConfig,
};
use reparam::sphere::{SphereMesh, SphericalRegion, Vec3};

mod args;
use args::{parse_profile, Cli, Command, Experiment, GlobalArgs, MetricArg, Quantity, StockMap};

/// An error message naming the offending flag.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Everything needed to reproduce a run; embedded in every report.
#[derive(Debug, Serialize)]
struct RunConfig {
    mesh_level: u32,
    target: TargetManifold,
    sobolev: SobolevParams,
    seed: Option<u64>,
    tolerances: BTreeMap<&'static str, f64>,
    out: Option<PathBuf>,
}

struct Outcome {
    name: &'static str,
    body: Value,
    csv: Option<Vec<Vec<String>>>,
    /// A map file written in place of a report.
    map: Option<Value>,
    passed: bool,
}

impl Outcome {
    fn report(name: &'static str, body: Value) -> Self {
        Outcome { name, body, csv: None, map: None, passed: true }
    }
}

struct Ctx {
    global: GlobalArgs,
    sobolev: SobolevParams,
    config: RunConfig,
}

impl Ctx {
    fn new(global: GlobalArgs) -> Result<Self> {
        let sobolev =
            SobolevParams::new(global.sobolev_k, global.sobolev_p).map_err(|e| usage(format!("--sobolev-k/--sobolev-p: {e}")))?;
        let target: TargetManifold = global.target.parse().map_err(|e| usage(format!("--target: {e}")))?;
        let config = RunConfig {
            mesh_level: global.level,
            target,
            sobolev,
            seed: None,
            tolerances: BTreeMap::new(),
            out: global.out.clone(),
        };
        Ok(Ctx { global, sobolev, config })
    }

    fn mesh(&self) -> Result<std::sync::Arc<SphereMesh>> {
        SphereMesh::shared(self.global.level).map_err(|e| usage(format!("--level: {e}")))
    }

    fn load(&mut self, path: &Path) -> Result<DiscreteMap> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("parsing {}: {e}", path.display())))?;
        let f = DiscreteMap::from_json(&value).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        self.config.mesh_level = f.mesh().level();
        self.config.target = f.target();
        Ok(f)
    }

    fn metric(&self, m: MetricArg) -> Metric {
        match m {
            MetricArg::C0 => Metric::C0,
            MetricArg::L2 => Metric::L2,
            MetricArg::Sobolev => Metric::Sobolev(self.sobolev),
        }
    }

    fn seed(&mut self, seed: u64) -> u64 {
        self.config.seed = Some(seed);
        seed
    }

    fn tol(&mut self, name: &'static str, value: f64) -> f64 {
        self.config.tolerances.insert(name, value);
        value
    }
}

fn vec3(v: &[f64], flag: &str) -> Result<Vec3> {
    match v {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(usage(format!("{flag} takes three comma-separated numbers, got {}", v.len()))),
    }
}

fn complex(v: &[f64], flag: &str) -> Result<Complex64> {
    match v {
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(usage(format!("{flag} takes `re,im`, got {} numbers", v.len()))),
    }
}

fn generate(ctx: &mut Ctx, a: args::GenerateArgs) -> Result<Outcome> {
    let mesh = ctx.mesh()?;
    let target = ctx.config.target;
    let need_sphere = |what: &str| -> Result<()> {
        if target != TargetManifold::UnitSphere {
            return Err(usage(format!("--map {what} needs --target unit_sphere_in_R3")));
        }
        Ok(())
    };
    let f = match a.map {
        StockMap::Identity => {
            need_sphere("identity")?;
            identity_map(&mesh)
        }
        StockMap::Antipodal => {
            need_sphere("antipodal")?;
            antipodal_map(&mesh)
        }
        StockMap::Power => {
            need_sphere("power")?;
            power_map(&mesh, a.degree).map_err(|e| usage(format!("--degree: {e}")))?
        }
        StockMap::Constant => {
            let q = a.point.map(|f| f.0).ok_or_else(|| usage("--map constant needs --point"))?;
            constant_map(&mesh, target, &q).map_err(|e| usage(format!("--point: {e}")))?
        }
        StockMap::Axis => {
            let axis = vec3(&a.axis.map(|f| f.0).unwrap_or_else(|| vec![0.0, 0.0, 1.0]), "--axis")?;
            let profile = parse_profile(a.profile.as_deref().ok_or_else(|| usage("--map axis needs --profile"))?)
                .map_err(|e| usage(format!("--profile: {e}")))?;
            axis_map(&mesh, target, axis, &profile).map_err(|e| usage(format!("--profile: {e}")))?
        }
        StockMap::Bump => {
            need_sphere("bump")?;
            let seed = a.seed.ok_or_else(|| usage("--map bump needs --seed"))?;
            ctx.seed(seed);
            let center = vec3(&a.axis.map(|f| f.0).unwrap_or_else(|| vec![0.0, 0.0, 1.0]), "--axis")?;
            bump_perturb(&identity_map(&mesh), center, a.radius, a.amplitude, seed)
                .map_err(|e| usage(format!("--radius/--amplitude: {e}")))?
        }
    };
    Ok(Outcome { map: Some(f.to_json()), ..Outcome::report("map", Value::Null) })
}

fn functional(ctx: &mut Ctx, a: args::FunctionalArgs) -> Result<Outcome> {
    let f = ctx.load(&a.input)?;
    let p = ctx.sobolev;
    let mut body = json!({
        "energy": energy(&f),
        "volume": volume(&f),
        "v1": v1_energy(&f, a.v1_power),
        "v1_power": a.v1_power,
        "sobolev_norm": sobolev_norm(&f, p),
        "diameter": diameter(&f, &SphericalRegion::Full)?,
        "max_target_deviation": f.max_target_deviation(),
    });
    if let Some(path) = a.other {
        let h = ctx.load(&path)?;
        f.check_compatible(&h).map_err(|e| usage(format!("--other: {e}")))?;
        body["other"] = json!({
            "energy": energy(&h),
            "c0_distance": c0_distance(&f, &h)?,
            "l2_distance": Metric::L2.distance(&f, &h)?,
            "sobolev_distance": sobolev_distance(&f, &h, p)?,
            "energy_bound_ratio": energy_bound_ratio(&f, &h, p)?,
        });
    }
    Ok(Outcome::report("functional", body))
}

fn element(ctx: &mut Ctx, a: &args::PullbackArgs) -> Result<MobiusElement> {
    let e = &a.element;
    if let Some(v) = &e.dilation {
        return Ok(MobiusElement::dilation(complex(&v.0, "--dilation")?));
    }
    if let Some(v) = &e.translation {
        return Ok(MobiusElement::translation(complex(&v.0, "--translation")?));
    }
    if let Some(v) = &e.rotation {
        let [x, y, z, angle] = v.0[..] else {
            return Err(usage("--rotation takes `x,y,z,angle`"));
        };
        return Ok(MobiusElement::rotation(Vec3::new(x, y, z), angle));
    }
    if let Some(v) = &e.matrix {
        let [ar, ai, br, bi, cr, ci, dr, di] = v.0[..] else {
            return Err(usage("--matrix takes eight numbers"));
        };
        let m = Mat2::new(Complex64::new(ar, ai), Complex64::new(br, bi), Complex64::new(cr, ci), Complex64::new(dr, di));
        return MobiusElement::from_matrix(m).map_err(|e| usage(format!("--matrix: {e}")));
    }
    let bound = e.random_bound.expect("clap enforces one element flag");
    let seed = a.seed.ok_or_else(|| usage("--random-bound needs --seed"))?;
    random_element(bound, a.family, ctx.seed(seed)).map_err(|e| usage(format!("--random-bound: {e}")))
}

fn pullback_cmd(ctx: &mut Ctx, a: args::PullbackArgs) -> Result<Outcome> {
    let f = ctx.load(&a.input)?;
    let g = element(ctx, &a)?;
    let h = pullback(&f, &g)?;
    Ok(Outcome { map: Some(h.to_json()), ..Outcome::report("map", Value::Null) })
}

fn moment(ctx: &mut Ctx, a: args::MomentArgs) -> Result<Outcome> {
    let f = ctx.load(&a.input)?;
    let v = volume(&f);
    let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    let mut body = json!({
        "volume": v,
        "moment": pseudo_moment(&f),
        "diagnostics": axes.iter().map(|&e| pseudo_moment_diagnostics(&f, e)).collect::<Vec<_>>(),
    });
    let mut passed = true;
    if a.center {
        let tol = ctx.tol("centering_tol", a.tol.unwrap_or(1e-3 * v));
        let out = center_map(&f, CenteringOptions::new(tol, a.max_iter)).map_err(|e| usage(e.to_string()))?;
        passed = out.status == CenteringStatus::Converged;
        body["centering"] = json!({
            "status": out.status,
            "g": out.g,
            "a_factor": out.g.a_factor(),
            "params": out.params,
            "moment": out.moment,
            "residual": out.residual,
            "iterations": out.iterations,
            "centered_map": out.f_centered.to_json(),
        });
    }
    Ok(Outcome { passed, ..Outcome::report("moment", body) })
}

fn experiment_outcome(r: ExperimentReport) -> Result<Outcome> {
    let rows = r.csv_rows().into_iter().map(|row| row.to_vec()).collect();
    let passed = r.verdict.passed();
    Ok(Outcome { csv: Some(rows), passed, ..Outcome::report("experiment", serde_json::to_value(r)?) })
}

fn experiment(ctx: &mut Ctx, e: Experiment) -> Result<Outcome> {
    match e {
        Experiment::Escape(a) => {
            let f = ctx.load(&a.map)?;
            let eps = ctx.tol("eps", a.eps);
            let nb = NeighborhoodSpec::new(f.clone(), eps, ctx.metric(a.metric)).map_err(|e| usage(format!("--eps: {e}")))?;
            experiment_outcome(orbit_escape_experiment(&f, a.family, a.mode, a.nmax, &nb).map_err(proper)?)
        }
        Experiment::Separate(a) => {
            let f1 = ctx.load(&a.map1)?;
            let f2 = ctx.load(&a.map2)?;
            let seed = ctx.seed(a.seed);
            let calib = calibrate_energy_bound(f1.mesh(), a.calibration_pairs, ctx.sobolev, seed)?;
            let (eps1, eps2) = match (a.eps1, a.eps2) {
                (Some(e1), Some(e2)) => (e1, e2),
                (None, None) => {
                    let eps = energy_separation_threshold(&f1, &f2, &calib).map_err(proper)?;
                    ctx.tol("separation_threshold", eps);
                    (eps / 3.0, eps / 3.0)
                }
                _ => return Err(usage("give both --eps1 and --eps2, or neither")),
            };
            ctx.tol("eps1", eps1);
            ctx.tol("eps2", eps2);
            let mut cfg = SeparationConfig::new(eps1, eps2, a.samples, seed, ctx.metric(a.metric));
            cfg.calibration = Some(calib);
            experiment_outcome(separation_experiment(&f1, &f2, &cfg).map_err(proper)?)
        }
        Experiment::Stabilizer(a) => {
            let f = ctx.load(&a.map)?;
            let metric = ctx.metric(a.metric);
            let threshold = match a.threshold {
                Some(t) => t,
                None => 3.0 * resampling_error(&f, metric).map_err(proper)?,
            };
            ctx.tol("threshold", threshold);
            let cfg = StabilizerConfig::new(threshold, a.budget, a.n, ctx.seed(a.seed), metric);
            let est = stabilizer_search(&f, &cfg).map_err(proper)?;
            let rows = est
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| vec![i.to_string(), c.source.clone(), c.residual.to_string(), c.a_factor.to_string()])
                .collect::<Vec<_>>();
            let mut csv = vec![["index", "source", "residual", "a_factor"].map(String::from).to_vec()];
            csv.extend(rows);
            let body = json!({"experiment": "stabilizer", "estimate": est});
            Ok(Outcome { csv: Some(csv), ..Outcome::report("experiment", body) })
        }
        Experiment::Precompact(a) => {
            let f1 = ctx.load(&a.map1)?;
            let f2 = ctx.load(&a.map2)?;
            let eps = ctx.tol("eps", a.eps);
            let cfg = PrecompactConfig::new(eps, a.samples, ctx.seed(a.seed), ctx.metric(a.metric));
            experiment_outcome(precompact_witness(&f1, &f2, &cfg).map_err(proper)?)
        }
        Experiment::Align(a) => {
            let f1 = ctx.load(&a.map1)?;
            let f2 = ctx.load(&a.map2)?;
            let seed = ctx.seed(a.seed);
            let r = align(&f1, &f2, ctx.metric(a.metric), a.budget, seed).map_err(proper)?;
            let body = json!({
                "experiment": "align",
                "result": r,
                "a_factor": r.g.a_factor(),
                "resampling_error": resampling_error(&f1, r.metric).map_err(proper)?,
            });
            Ok(Outcome::report("experiment", body))
        }
    }
}

/// Rejected inputs (constant maps, mismatched meshes, bad radii) are usage errors.
fn proper(e: reparam::properness::ProperError) -> anyhow::Error {
    usage(e.to_string())
}

fn calibrate(ctx: &mut Ctx, a: args::CalibrateArgs) -> Result<Outcome> {
    let mesh = ctx.mesh()?;
    let seed = ctx.seed(a.seed);
    let report = match a.quantity {
        Quantity::Energy => calibrate_energy_bound(&mesh, a.pairs, ctx.sobolev, seed)?,
        Quantity::C0 => calibrate_c0_embedding(&mesh, a.pairs, ctx.sobolev, seed)?,
    };
    Ok(Outcome::report("calibration", serde_json::to_value(report)?))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Functional(_) => "functional",
        Command::Pullback(_) => "pullback",
        Command::Moment(_) => "moment",
        Command::Experiment(Experiment::Escape(_)) => "escape",
        Command::Experiment(Experiment::Separate(_)) => "separate",
        Command::Experiment(Experiment::Stabilizer(_)) => "stabilizer",
        Command::Experiment(Experiment::Precompact(_)) => "precompact",
        Command::Experiment(Experiment::Align(_)) => "align",
        Command::Calibrate(_) => "calibrate",
    }
}

/// `--out x.json` names the file; any other path is a directory receiving
/// `<command>.json`. CSV sidecars share the stem.
fn output_paths(out: &Path, command: &str) -> Result<(PathBuf, PathBuf)> {
    let json_path = if out.extension().is_some_and(|e| e == "json") {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        out.to_path_buf()
    } else {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        out.join(format!("{command}.json"))
    };
    let csv_path = json_path.with_extension("csv");
    Ok((json_path, csv_path))
}

fn write_csv(path: &Path, rows: &[Vec<String>], header: Option<&[&str]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Ok(v) = std::env::var("REPARAM_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| usage(format!("REPARAM_THREADS=`{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!(e))?;
    }
    let name = command_name(&cli.command);
    let mut ctx = Ctx::new(cli.global)?;
    let outcome = match cli.command {
        Command::Generate(a) => generate(&mut ctx, a)?,
        Command::Functional(a) => functional(&mut ctx, a)?,
        Command::Pullback(a) => pullback_cmd(&mut ctx, a)?,
        Command::Moment(a) => moment(&mut ctx, a)?,
        Command::Experiment(e) => experiment(&mut ctx, e)?,
        Command::Calibrate(a) => calibrate(&mut ctx, a)?,
    };

    let is_map = outcome.map.is_some();
    let document = match outcome.map {
        Some(map) => map,
        None => json!({
            "tool": "reparam",
            "version": env!("CARGO_PKG_VERSION"),
            "command": name,
            "run_config": ctx.config,
            "kind": outcome.name,
            "result": outcome.body,
        }),
    };
    let text = serde_json::to_string_pretty(&document)? + "\n";
    match &ctx.global.out {
        None => print!("{text}"),
        Some(out) => {
            let (json_path, csv_path) = output_paths(out, name)?;
            std::fs::write(&json_path, text).with_context(|| format!("writing {}", json_path.display()))?;
            if let Some(rows) = &outcome.csv {
                let header = (outcome.name == "experiment" && name != "stabilizer").then_some(&ExperimentReport::CSV_HEADER[..]);
                write_csv(&csv_path, rows, header)?;
            }
        }
    }
    if !outcome.passed && !is_map {
        eprintln!("{name}: fail verdict");
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // Every failure here traces back to the arguments or their files.
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
