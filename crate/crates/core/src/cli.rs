//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::effects::{EffectsVector, EstimatorKind};
use crate::error::{Error, Result};
use crate::gaussian::{target_shapley_oracle_with, LinearGaussianModel, OracleCost};
use crate::knn::{estimate_target_shapley_knn, estimate_target_shapley_l1_knn, subsample_confidence, ConfidenceIntervals, KnnConfig};
use crate::linear_diag::{diagnose, LinearDiagnostics};
use crate::mc::{estimate_failure_probability, estimate_target_shapley_mc, InnerCorrection, McConfig};
use crate::models::{
    correlated_case, exogenous_case, flood_dependence, flood_marginals, flood_model_with, independent_case,
    sample_with_output, CopulaModel, DependenceSpec, InputModel, LinearGaussianInputs, MarginalSpec, FLOOD_NAMES,
    FLOOD_THRESHOLD,
};
use crate::rng::{child_seed, stream, Purpose};
use crate::sample::{FailureEvent, SampleSet};
use crate::shapley::{Aggregation, PermutationMode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tshap", version, about = "Target Shapley effects of a failure event")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "TSHAP_THREADS")]
    pub threads: Option<usize>,

    /// Include the wall time in the output; it is always printed to stderr.
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Nearest-neighbour estimate from an input-output CSV.
    EstimateKnn(KnnArgs),
    /// Double-loop Monte Carlo estimate on a built-in or configured model.
    EstimateMc(McArgs),
    /// Reference effects of a linear Gaussian model, optionally over a parameter grid.
    Oracle(OracleArgs),
    /// Flood model: failure probability and nearest-neighbour effects.
    FloodDemo(FloodArgs),
    /// Linear-regression importance measures from a CSV.
    DiagnoseLinear(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PermArgs {
    /// Sample this many random permutations instead of exact aggregation.
    #[arg(long, conflicts_with = "exhaustive_perm")]
    pub perm: Option<usize>,
    /// Average over all d! permutations (d <= 8).
    #[arg(long)]
    pub exhaustive_perm: bool,
}

impl PermArgs {
    fn aggregation(&self) -> Aggregation {
        match (self.perm, self.exhaustive_perm) {
            (Some(m), _) => Aggregation::Permutations(PermutationMode::Sampled(m)),
            (None, true) => Aggregation::Permutations(PermutationMode::Exhaustive),
            (None, false) => Aggregation::Exact,
        }
    }
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the output column; every other column is an input.
    #[arg(long)]
    pub output_col: String,
    /// Failure threshold: failure is output > t.
    #[arg(long = "t", allow_hyphen_values = true)]
    pub threshold: f64,
    /// Neighbours per row (N_s).
    #[arg(long, default_value_t = 3)]
    pub neighbors: usize,
    /// Use raw column values in distances.
    #[arg(long)]
    pub no_standardize: bool,
    /// Rescale effects to sum to one.
    #[arg(long)]
    pub normalize: bool,
    /// Mean-absolute-deviation cost (experimental).
    #[arg(long)]
    pub l1: bool,
    /// Subsample fraction for 95% intervals.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Repetitions for the subsample intervals.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub perm: PermArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinModel {
    /// Three independent standard normals, Y = X1 + X2 + X3.
    Independent,
    /// As `independent` with Corr(X2, X3) = rho.
    Correlated,
    /// Y = X1 + 6 X2 + 4 X3 with X4 correlated to X2 only.
    Exogenous,
    /// River flood model.
    Flood,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in model.
    #[arg(long, value_enum, required_unless_present = "config")]
    pub model: Option<BuiltinModel>,
    /// TOML model description instead of a built-in.
    #[arg(long, conflicts_with = "model")]
    pub config: Option<PathBuf>,
    /// Threshold (defaults: 1 independent, 3 correlated, 16 exogenous, 54.5 flood).
    #[arg(long = "t", allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Correlation parameter (defaults: 0.6 correlated, 0.5 exogenous).
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1_000)]
    pub nv: usize,
    #[arg(long, default_value_t = 3)]
    pub np: usize,
    /// Use the uncorrected inner estimator (allows N_p = 1).
    #[arg(long)]
    pub raw_inner: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub perm: PermArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    T,
    Rho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    ClosedSobol,
    Residual,
    L1,
}

impl From<CostArg> for OracleCost {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::ClosedSobol => OracleCost::ClosedSobol,
            CostArg::Residual => OracleCost::Residual,
            CostArg::L1 => OracleCost::L1,
        }
    }
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "closed-sobol")]
    pub cost: CostArg,
    /// Parameter to sweep; without it a single point is evaluated.
    #[arg(long, value_enum, requires_all = ["from", "to"])]
    pub sweep: Option<SweepParam>,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 81)]
    pub steps: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FloodArgs {
    #[arg(long, default_value_t = 200_000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub neighbors: usize,
    #[arg(long = "t", default_value_t = FLOOD_THRESHOLD)]
    pub threshold: f64,
    /// Independent repetitions, each with a fresh sample.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Only estimate the failure probability from N draws.
    #[arg(long)]
    pub only_prob: bool,
    /// Standardize columns before measuring distances.
    #[arg(long)]
    pub standardize: bool,
    /// Also write the first generated sample to this CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_col: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateProbability { .. } | Error::ZeroVariance | Error::NonBinaryOutput { .. } => 2,
        Error::QuadratureNonConvergence { .. }
        | Error::Singular(_)
        | Error::Collinear(_)
        | Error::NonFiniteOutput { .. }
        | Error::Domain(_) => 3,
        _ => 1,
    }
}

// ---------------------------------------------------------------- CSV input

/// Parsed CSV table with the number of rows dropped for missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub sample: SampleSet,
    pub rows_rejected: usize,
}

/// Reads a CSV with a header row; `output_col` becomes the output and the
/// other columns the inputs. Rows with an empty or NaN cell are skipped and
/// counted; any other unparseable cell is an error naming its position.
pub fn read_csv(path: &Path, output_col: &str) -> Result<CsvData> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_csv_from(file, output_col)
}

pub fn read_csv_from<R: std::io::Read>(reader: R, output_col: &str) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let out_idx = headers
        .iter()
        .position(|h| h == output_col)
        .ok_or_else(|| Error::Data(format!("no column named {output_col:?} in header {headers:?}")))?;
    let input_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != out_idx).collect();
    if input_idx.is_empty() {
        return Err(Error::Data("no input columns".into()));
    }
    let mut columns = vec![Vec::new(); input_idx.len()];
    let mut output = Vec::new();
    let mut rejected = 0;
    let mut values = vec![0.0; headers.len()];
    for (r, rec) in rdr.records().enumerate() {
        // line 1 is the header
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!("line {line}: {} fields, expected {}", rec.len(), headers.len())));
        }
        let mut missing = false;
        for (c, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("line {line}, column {:?}: cannot parse {cell:?} as a number", headers[c]))
            })?;
            if v.is_nan() {
                missing = true;
            } else if !v.is_finite() {
                return Err(Error::Data(format!("line {line}, column {:?}: non-finite value", headers[c])));
            }
            values[c] = v;
        }
        if missing {
            rejected += 1;
            continue;
        }
        for (col, &i) in columns.iter_mut().zip(&input_idx) {
            col.push(values[i]);
        }
        output.push(values[out_idx]);
    }
    let names = input_idx.iter().map(|&i| headers[i].clone()).collect();
    let sample = SampleSet::new(columns, names, Some(output))?;
    Ok(CsvData { sample, rows_rejected: rejected })
}

/// Writes a sample (inputs then output) as CSV.
pub fn write_sample_csv(path: &Path, sample: &SampleSet, output_name: &str) -> Result<()> {
    let io = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = sample.names().to_vec();
    header.push(output_name.to_string());
    w.write_record(&header).map_err(io)?;
    let out = sample.output();
    for i in 0..sample.len() {
        let mut rec: Vec<String> = sample.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(o) = out {
            rec.push(o[i].to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

// ---------------------------------------------------------------- model configs

/// Declarative model description loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    LinearGaussian {
        #[serde(default)]
        beta0: f64,
        beta: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        threshold: f64,
    },
    Flood {
        #[serde(default = "flood_threshold")]
        threshold: f64,
        #[serde(default)]
        marginals: Option<Vec<MarginalSpec>>,
        /// `[i, j, rho]` triples with zero-based indices.
        #[serde(default)]
        correlations: Option<Vec<(usize, usize, f64)>>,
    },
}

fn flood_threshold() -> f64 {
    FLOOD_THRESHOLD
}

pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// A resolved model: linear Gaussian models also have an oracle.
pub enum ResolvedModel {
    Linear(LinearGaussianModel),
    Copula(CopulaModel),
}

impl ResolvedModel {
    pub fn names(&self) -> Vec<String> {
        match self {
            Self::Linear(m) => crate::sample::default_names(m.dim()),
            Self::Copula(m) => m.names(),
        }
    }
}

fn linear_from_config(beta0: f64, beta: Vec<f64>, mu: Vec<f64>, sigma: Vec<Vec<f64>>, t: f64) -> Result<LinearGaussianModel> {
    let d = beta.len();
    if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidConfig(format!("sigma must be {d}x{d}")));
    }
    let flat: Vec<f64> = sigma.into_iter().flatten().collect();
    LinearGaussianModel::new(beta0, beta, mu, DMatrix::from_row_slice(d, d, &flat), FailureEvent::new(t)?)
}

pub fn resolve_model(args: &ModelArgs) -> Result<ResolvedModel> {
    if let Some(path) = &args.config {
        if args.rho.is_some() {
            return Err(Error::InvalidConfig("--rho applies to built-in models only".into()));
        }
        return match load_model_config(path)? {
            ModelConfig::LinearGaussian { beta0, beta, mu, sigma, threshold } => {
                let t = args.threshold.unwrap_or(threshold);
                Ok(ResolvedModel::Linear(linear_from_config(beta0, beta, mu, sigma, t)?))
            }
            ModelConfig::Flood { threshold, marginals, correlations } => {
                let dep = correlations.map(DependenceSpec::new).unwrap_or_else(flood_dependence);
                let t = args.threshold.unwrap_or(threshold);
                Ok(ResolvedModel::Copula(flood_model_with(marginals.unwrap_or_else(flood_marginals), &dep, t)?))
            }
        };
    }
    let model = args.model.ok_or_else(|| Error::InvalidConfig("either --model or --config is required".into()))?;
    if args.rho.is_some() && !matches!(model, BuiltinModel::Correlated | BuiltinModel::Exogenous) {
        return Err(Error::InvalidConfig("--rho applies to the correlated and exogenous models".into()));
    }
    Ok(match model {
        BuiltinModel::Independent => ResolvedModel::Linear(independent_case(args.threshold.unwrap_or(1.0))?),
        BuiltinModel::Correlated => ResolvedModel::Linear(correlated_case(
            args.rho.unwrap_or(0.6),
            args.threshold.unwrap_or(3.0),
        )?),
        BuiltinModel::Exogenous => ResolvedModel::Linear(exogenous_case(
            args.rho.unwrap_or(0.5),
            args.threshold.unwrap_or(16.0),
        )?),
        BuiltinModel::Flood => ResolvedModel::Copula(flood_model_with(
            flood_marginals(),
            &flood_dependence(),
            args.threshold.unwrap_or(FLOOD_THRESHOLD),
        )?),
    })
}

// ---------------------------------------------------------------- reports

/// Results of one effects estimate, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsReport {
    pub schema: u32,
    pub command: String,
    pub names: Vec<String>,
    pub estimator: EstimatorKind,
    /// Effects as requested (normalized when `normalized` is set).
    pub effects: Vec<f64>,
    pub effects_raw: Vec<f64>,
    pub effects_normalized: Vec<f64>,
    pub raw_sum: f64,
    pub normalized: bool,
    pub experimental: bool,
    pub failure_probability: Option<f64>,
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows_rejected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_calls: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_calls_unmemoized: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub level: f64,
    pub fraction: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub successful: usize,
    pub failed: usize,
}

impl ConfidenceReport {
    fn new(ci: ConfidenceIntervals, fraction: f64) -> Self {
        Self {
            level: 0.95,
            fraction,
            lower: ci.lower,
            upper: ci.upper,
            mean: ci.mean,
            successful: ci.successful,
            failed: ci.failed,
        }
    }
}

impl EffectsReport {
    /// `raw` must be the un-normalized estimate.
    pub fn new(command: &str, names: Vec<String>, raw: &EffectsVector, normalize: bool) -> Self {
        let sum = raw.sum();
        let normalized: Vec<f64> =
            if sum != 0.0 && sum.is_finite() { raw.effects.iter().map(|e| e / sum).collect() } else { raw.effects.clone() };
        let failure_probability = raw.config.get("failure_probability").and_then(|v| v.as_f64());
        Self {
            schema: SCHEMA_VERSION,
            command: command.to_string(),
            names,
            estimator: raw.estimator,
            effects: if normalize { normalized.clone() } else { raw.effects.clone() },
            effects_raw: raw.effects.clone(),
            effects_normalized: normalized,
            raw_sum: sum,
            normalized: normalize,
            experimental: raw.experimental,
            failure_probability,
            seed: raw.seed,
            config: raw.config.clone(),
            rows_rejected: None,
            model_calls: None,
            model_calls_unmemoized: None,
            confidence: None,
            wall_time_s: None,
        }
    }

    fn to_csv(&self) -> String {
        let mut s = String::from("input,effect,effect_raw,effect_normalized");
        if self.confidence.is_some() {
            s.push_str(",ci_lower,ci_upper");
        }
        s.push('\n');
        for (j, name) in self.names.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}",
                csv_field(name),
                self.effects[j],
                self.effects_raw[j],
                self.effects_normalized[j]
            ));
            if let Some(c) = &self.confidence {
                s.push_str(&format!(",{},{}", c.lower[j], c.upper[j]));
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Data(e.to_string()))
        }
    }
}

fn emit_report(mut report: EffectsReport, out: &OutputArgs, timing: Option<f64>) -> Result<()> {
    report.wall_time_s = timing;
    let text = match out.format {
        Format::Json => to_json(&report)?,
        Format::Csv => report.to_csv(),
    };
    emit(out.out.as_deref(), &text)
}

// ---------------------------------------------------------------- commands

fn cmd_estimate_knn(a: &KnnArgs, started: Instant, timing: bool) -> Result<()> {
    let data = read_csv(&a.input, &a.output_col)?;
    let event = FailureEvent::new(a.threshold)?;
    let cfg = KnnConfig {
        n_s: a.neighbors,
        standardize: !a.no_standardize,
        aggregation: a.perm.aggregation(),
        normalize_to_one: false,
        seed: a.seed,
    };
    let raw = if a.l1 {
        estimate_target_shapley_l1_knn(&data.sample, &event, &cfg)?
    } else {
        estimate_target_shapley_knn(&data.sample, &event, &cfg)?
    };
    let mut report = EffectsReport::new("estimate-knn", data.sample.names().to_vec(), &raw, a.normalize);
    report.rows_rejected = Some(data.rows_rejected);
    if let Some(f) = a.subsample {
        if a.l1 {
            return Err(Error::InvalidConfig("subsample intervals are available for the variance cost only".into()));
        }
        let ci = subsample_confidence(&data.sample, &event, &cfg, f, a.reps)?;
        report.confidence = Some(ConfidenceReport::new(ci, f));
    }
    emit_report(report, &a.output, wall(started, timing))
}

fn cmd_estimate_mc(a: &McArgs, started: Instant, timing: bool) -> Result<()> {
    let resolved = resolve_model(&a.model)?;
    let cfg = McConfig {
        n: a.n,
        n_v: a.nv,
        n_p: a.np,
        aggregation: a.perm.aggregation(),
        inner: if a.raw_inner { InnerCorrection::Raw } else { InnerCorrection::BiasCorrected },
        seed: a.seed,
    };
    let names = resolved.names();
    let out = match &resolved {
        ResolvedModel::Linear(m) => estimate_target_shapley_mc(&LinearGaussianInputs::new(m.clone()), &cfg)?,
        ResolvedModel::Copula(m) => estimate_target_shapley_mc(m, &cfg)?,
    };
    let mut report = EffectsReport::new("estimate-mc", names, &out.effects, false);
    report.model_calls = Some(out.calls.actual);
    report.model_calls_unmemoized = Some(out.calls.unmemoized);
    emit_report(report, &a.output, wall(started, timing))
}

/// One evaluated grid point of an oracle sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub value: f64,
    pub effects: Option<Vec<f64>>,
    pub failure_probability: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema: u32,
    pub command: String,
    pub cost: String,
    pub parameter: Option<SweepParam>,
    pub names: Vec<String>,
    pub points: Vec<OraclePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

fn grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite()) {
        return Err(Error::InvalidConfig("sweep bounds must be finite".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("--steps must be positive".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect())
}

fn cmd_oracle(a: &OracleArgs, started: Instant, timing: bool) -> Result<()> {
    let cost: OracleCost = a.cost.into();
    let base = match resolve_model(&a.model)? {
        ResolvedModel::Linear(m) => m,
        ResolvedModel::Copula(_) => {
            return Err(Error::InvalidConfig("the oracle covers linear Gaussian models only".into()))
        }
    };
    let names = crate::sample::default_names(base.dim());
    let build = |v: f64| -> Result<LinearGaussianModel> {
        match a.sweep {
            None | Some(SweepParam::T) => base.with_threshold(v),
            Some(SweepParam::Rho) => {
                let t = base.event().threshold();
                match a.model.model {
                    Some(BuiltinModel::Correlated) if a.model.config.is_none() => correlated_case(v, t),
                    Some(BuiltinModel::Exogenous) if a.model.config.is_none() => exogenous_case(v, t),
                    _ => Err(Error::InvalidConfig(
                        "a rho sweep needs --model correlated or --model exogenous".into(),
                    )),
                }
            }
        }
    };
    if a.sweep == Some(SweepParam::Rho) && !matches!(a.model.model, Some(BuiltinModel::Correlated | BuiltinModel::Exogenous)) {
        return Err(Error::InvalidConfig("a rho sweep needs --model correlated or --model exogenous".into()));
    }
    let values = match a.sweep {
        None => vec![base.event().threshold()],
        Some(_) => grid(a.from.unwrap_or(0.0), a.to.unwrap_or(0.0), a.steps)?,
    };
    use rayon::prelude::*;
    let points: Vec<OraclePoint> = values
        .par_iter()
        .map(|&v| match build(v).and_then(|m| Ok((target_shapley_oracle_with(&m, cost)?, m.failure_probability()))) {
            Ok((e, p)) => OraclePoint { value: v, effects: Some(e.effects), failure_probability: Some(p), error: None },
            Err(e) => OraclePoint { value: v, effects: None, failure_probability: None, error: Some(e.to_string()) },
        })
        .collect();
    if a.sweep.is_none() {
        if let Some(err) = &points[0].error {
            // a single point has nothing to record the failure against
            let m = build(values[0])?;
            target_shapley_oracle_with(&m, cost)?;
            return Err(Error::Data(err.clone()));
        }
    }
    let report = OracleReport {
        schema: SCHEMA_VERSION,
        command: "oracle".into(),
        cost: serde_json::to_value(cost).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        parameter: Some(a.sweep.unwrap_or(SweepParam::T)),
        names,
        points,
        wall_time_s: wall(started, timing),
    };
    let text = match a.format {
        Format::Json => to_json(&report)?,
        Format::Csv => oracle_csv(&report),
    };
    emit(a.out.as_deref(), &text)
}

fn oracle_csv(r: &OracleReport) -> String {
    let param = match r.parameter {
        Some(SweepParam::Rho) => "rho",
        _ => "t",
    };
    let mut s = String::from("parameter,value,input,effect,status\n");
    for p in &r.points {
        for (j, name) in r.names.iter().enumerate() {
            match (&p.effects, &p.error) {
                (Some(e), _) => s.push_str(&format!("{param},{},{},{},ok\n", p.value, name, e[j])),
                (None, err) => s.push_str(&format!(
                    "{param},{},{},NaN,{}\n",
                    p.value,
                    name,
                    csv_field(err.as_deref().unwrap_or("error"))
                )),
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodReport {
    pub schema: u32,
    pub command: String,
    pub names: Vec<String>,
    pub n: usize,
    pub threshold: f64,
    pub seed: u64,
    pub failure_probability: f64,
    pub failure_probability_se: f64,
    #[serde(default)]
    pub neighbors: Option<usize>,
    #[serde(default)]
    pub standardize: Option<bool>,
    /// One effects vector per repetition.
    #[serde(default)]
    pub repetitions: Vec<Vec<f64>>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

fn cmd_flood_demo(a: &FloodArgs, started: Instant, timing: bool) -> Result<()> {
    if a.reps == 0 {
        return Err(Error::InvalidConfig("--reps must be positive".into()));
    }
    let model = flood_model_with(flood_marginals(), &flood_dependence(), a.threshold)?;
    let names: Vec<String> = FLOOD_NAMES.iter().map(|s| s.to_string()).collect();
    let mut report = FloodReport {
        schema: SCHEMA_VERSION,
        command: "flood-demo".into(),
        names,
        n: a.n,
        threshold: a.threshold,
        seed: a.seed,
        failure_probability: 0.0,
        failure_probability_se: 0.0,
        neighbors: None,
        standardize: None,
        repetitions: Vec::new(),
        mean: None,
        wall_time_s: None,
    };
    if a.only_prob {
        let p = estimate_failure_probability(&model, a.n, a.seed)?;
        report.failure_probability = p.p;
        report.failure_probability_se = p.standard_error;
    } else {
        let event = model.event();
        let mut first_p = None;
        for r in 0..a.reps {
            let seed = if a.reps == 1 { a.seed } else { child_seed(a.seed, r as u64) };
            let sample = sample_with_output(&model, a.n, &mut stream(seed, Purpose::Dataset, 0, 0))?;
            if r == 0 {
                if let Some(path) = &a.dataset_out {
                    write_sample_csv(path, &sample, "Y")?;
                }
            }
            let cfg = KnnConfig { n_s: a.neighbors, standardize: a.standardize, seed, ..KnnConfig::default() };
            let e = estimate_target_shapley_knn(&sample, &event, &cfg)?;
            if first_p.is_none() {
                first_p = e.config.get("failure_probability").and_then(|v| v.as_f64());
            }
            report.repetitions.push(e.effects);
        }
        let p = first_p.unwrap_or(f64::NAN);
        report.failure_probability = p;
        report.failure_probability_se = (p * (1.0 - p) / a.n as f64).sqrt();
        report.neighbors = Some(a.neighbors);
        report.standardize = Some(a.standardize);
        let reps = report.repetitions.len() as f64;
        report.mean = Some((0..6).map(|j| report.repetitions.iter().map(|e| e[j]).sum::<f64>() / reps).collect());
    }
    report.wall_time_s = wall(started, timing);
    let text = match a.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("repetition,input,effect\n");
            for (r, e) in report.repetitions.iter().enumerate() {
                for (name, v) in report.names.iter().zip(e) {
                    s.push_str(&format!("{r},{name},{v}\n"));
                }
            }
            s
        }
    };
    emit(a.output.out.as_deref(), &text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct DiagnoseReport<'a> {
    schema: u32,
    command: &'static str,
    rows_rejected: usize,
    #[serde(flatten)]
    diagnostics: &'a LinearDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn cmd_diagnose(a: &DiagnoseArgs, started: Instant, timing: bool) -> Result<()> {
    let data = read_csv(&a.input, &a.output_col)?;
    let diag = diagnose(&data.sample)?;
    let text = match a.output.format {
        Format::Json => to_json(&DiagnoseReport {
            schema: SCHEMA_VERSION,
            command: "diagnose-linear",
            rows_rejected: data.rows_rejected,
            diagnostics: &diag,
            wall_time_s: wall(started, timing),
        })?,
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let mut s = String::from("input,coefficient,src,pcc,spcc,lmg\n");
            for j in 0..diag.names.len() {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    csv_field(&diag.names[j]),
                    diag.fit.coefficients[j],
                    diag.src[j],
                    opt(diag.pcc[j]),
                    opt(diag.spcc[j]),
                    diag.lmg.effects[j]
                ));
            }
            s
        }
    };
    emit(a.output.out.as_deref(), &text)
}

fn wall(started: Instant, timing: bool) -> Option<f64> {
    timing.then(|| started.elapsed().as_secs_f64())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        // A second initialization (e.g. in tests) keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let started = Instant::now();
    let result = match &cli.command {
        Command::EstimateKnn(a) => cmd_estimate_knn(a, started, cli.timing),
        Command::EstimateMc(a) => cmd_estimate_mc(a, started, cli.timing),
        Command::Oracle(a) => cmd_oracle(a, started, cli.timing),
        Command::FloodDemo(a) => cmd_flood_demo(a, started, cli.timing),
        Command::DiagnoseLinear(a) => cmd_diagnose(a, started, cli.timing),
    };
    eprintln!("elapsed: {:.3} s", started.elapsed().as_secs_f64());
    result
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
