use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reparam::mobius::{EscapeMode, GroupFamily};

#[derive(Debug, Parser)]
#[command(name = "reparam", version, about = "Möbius reparametrization laboratory for maps S² → M")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Icosphere subdivision level for generated maps and calibration.
    #[arg(long, global = true, default_value_t = 4)]
    pub level: u32,
    /// Target manifold: unit_sphere_in_R3, flat_torus_in_R4 or ambient_R<m>.
    #[arg(long, global = true, default_value = "unit_sphere_in_R3")]
    pub target: String,
    /// Derivative order of the Sobolev norm.
    #[arg(long, global = true, default_value_t = 2)]
    pub sobolev_k: u32,
    /// Exponent of the Sobolev norm.
    #[arg(long, global = true, default_value_t = 4.0)]
    pub sobolev_p: f64,
    /// Output file (`*.json`) or directory; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a stock map.
    Generate(GenerateArgs),
    /// Evaluate functionals of a map (and distances to a second map).
    Functional(FunctionalArgs),
    /// Reparametrize a map by a group element.
    Pullback(PullbackArgs),
    /// Pseudo-moment of a map, optionally centering it.
    Moment(MomentArgs),
    /// Properness experiments.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Estimate an analytic constant from random map pairs.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StockMap {
    Identity,
    Antipodal,
    Power,
    Constant,
    Axis,
    Bump,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long = "map", value_enum)]
    pub map: StockMap,
    /// Degree of the power map `z^d`.
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    /// Value of the constant map, comma separated.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true)]
    pub point: Option<Floats>,
    /// Symmetry axis of the axis map, or bump centre.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true)]
    pub axis: Option<Floats>,
    /// Profile samples of the axis map: `x,y,z;x,y,z;...`.
    #[arg(long, allow_hyphen_values = true)]
    pub profile: Option<String>,
    #[arg(long, default_value_t = 0.8)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.3)]
    pub amplitude: f64,
    /// Seed of the bump direction.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FunctionalArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Second map for distances and the energy-difference ratio.
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Power `m` of the volume-type functional `v_m`.
    #[arg(long, default_value_t = 2)]
    pub v1_power: u32,
}

#[derive(Debug, Args)]
#[group(id = "element", required = true, multiple = false)]
pub struct ElementArgs {
    /// Chart dilation `z ↦ a z`, given as `re,im`.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true, group = "element")]
    pub dilation: Option<Floats>,
    /// Chart translation `z ↦ z + b`, given as `re,im`.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true, group = "element")]
    pub translation: Option<Floats>,
    /// Rotation `x,y,z,angle` of the sphere.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true, group = "element")]
    pub rotation: Option<Floats>,
    /// Matrix entries `a,b,c,d` as eight reals (re, im pairs).
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true, group = "element")]
    pub matrix: Option<Floats>,
    /// Random element of `K_bound` (needs `--seed`).
    #[arg(long, group = "element")]
    pub random_bound: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PullbackArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub element: ElementArgs,
    #[arg(long, default_value = "G0")]
    pub family: GroupFamily,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Also solve for a centering element.
    #[arg(long)]
    pub center: bool,
    /// Centering tolerance; defaults to `1e-3 · v(f)`.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 40)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    C0,
    L2,
    Sobolev,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Distances along an escape sequence.
    Escape(EscapeArgs),
    /// Sampled separation of two orbit neighbourhoods.
    Separate(SeparateArgs),
    /// Approximate stabilizer of a map.
    Stabilizer(StabilizerArgs),
    /// Recorded group elements joining two neighbourhoods.
    Precompact(PrecompactArgs),
    /// Best reparametrization of one map onto another.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct EscapeArgs {
    #[arg(long = "map")]
    pub map: PathBuf,
    #[arg(long, default_value = "G2")]
    pub family: GroupFamily,
    #[arg(long, default_value = "dilate_to_inf")]
    pub mode: EscapeMode,
    #[arg(long, default_value_t = 12)]
    pub nmax: u32,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "c0")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub map1: PathBuf,
    #[arg(long)]
    pub map2: PathBuf,
    /// Radius about `map1`; with `--eps2` omitted too, both default to a
    /// third of the calibrated separation threshold.
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Random pairs for the energy-bound calibration.
    #[arg(long, default_value_t = 200)]
    pub calibration_pairs: usize,
    #[arg(long, value_enum, default_value = "sobolev")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct StabilizerArgs {
    #[arg(long = "map")]
    pub map: PathBuf,
    /// Acceptance residual; defaults to 3x the resampling error.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 96)]
    pub budget: usize,
    /// Index of the compact set searched.
    #[arg(long, default_value_t = 4)]
    pub n: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "c0")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct PrecompactArgs {
    #[arg(long)]
    pub map1: PathBuf,
    #[arg(long)]
    pub map2: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 240)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "c0")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub map1: PathBuf,
    #[arg(long)]
    pub map2: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub budget: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "c0")]
    pub metric: MetricArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Quantity {
    /// `C` in `|E(f) - E(h)| <= C (‖f‖ + ‖h‖) ‖f - h‖`.
    Energy,
    /// Discrete embedding constant `‖f - h‖_C0 <= C ‖f - h‖_{k,p}`.
    C0,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum, default_value = "energy")]
    pub quantity: Quantity,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long)]
    pub seed: u64,
}

/// Comma-separated numbers taken as one flag value.
#[derive(Debug, Clone)]
pub struct Floats(pub Vec<f64>);

fn parse_floats(s: &str) -> Result<Floats, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Floats)
}

pub fn parse_profile(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(|t| parse_floats(t).map(|f| f.0)).collect()
}
