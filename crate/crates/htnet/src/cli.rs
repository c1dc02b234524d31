//! The `htnet` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
//! file-format error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use htnet_core::cost::{cost_report, count_macs, CostReport, LayerDesc};
use htnet_core::hadamard::{conv_theorem_sides, fht1d, fht2d, ifht1d, max_abs_diff, Convention};
use htnet_core::nn::ModelSpec;
use htnet_core::perceptron::HtBackend;
use htnet_core::quantum::{
    hybrid_ht, hybrid_ht2d, lemma1_check, shifted_input, Epsilon, MeasurementPlan,
};
use htnet_core::{seeded_rng, Matrix};
use rand::Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{resolve_data_dir, ArchName, TrainConfig};
use crate::dataset::Dataset;
use crate::error::Error;
use crate::mnist::Split;
use crate::train::{self, metrics_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "htnet",
    version,
    about = "Hadamard-transform layers, hybrid quantum simulation and MNIST training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hadamard transform of a vector or matrix.
    Transform(TransformArgs),
    /// Randomized checks of transform identities.
    Verify(VerifyArgs),
    /// Parameter and MAC totals.
    Count(CountArgs),
    /// Train a model from a JSON configuration.
    Train(TrainArgs),
    /// Test-set accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Time naive, fast and hybrid transforms.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Classical,
    QuantumExact,
    QuantumShots,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// CSV file; one matrix row per line.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub input: Option<PathBuf>,
    /// Random input of this length (side length with --2d), uniform in [-1, 1).
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, value_enum, default_value = "classical")]
    pub mode: ModeArg,
    /// Measurement shots per 1D transform; only with quantum-shots.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Treat the input as a matrix and transform rows then columns.
    #[arg(long = "2d")]
    pub two_d: bool,
    /// Zero-pad every dimension to the next power of two.
    #[arg(long)]
    pub pad: bool,
    /// Absolute shift margin for the hybrid modes (default: 1e-3 * (1 + sum|x|)).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Result CSV (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON report for hybrid modes (stderr when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Conv,
    Lemma1,
    Involution,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    /// Largest size; every power of two from 2 up to it is checked.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Random trials per size.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    ToyCnn,
    ToyHtCnn,
}

impl From<ArchArg> for ArchName {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::ToyCnn => ArchName::ToyCnn,
            ArchArg::ToyHtCnn => ArchName::ToyHtCnn,
        }
    }
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(
        long,
        value_enum,
        required_unless_present = "layer",
        conflicts_with = "layer"
    )]
    pub arch: Option<ArchArg>,
    #[arg(long, default_value_t = 3)]
    pub paths: usize,
    /// `conv:K,C,N` (KxK kernel, C inputs, N outputs) or `htp:P,C,N` (P paths).
    #[arg(long)]
    pub layer: Option<String>,
    /// Spatial side length used for `--layer` MACs.
    #[arg(long, default_value_t = 32)]
    pub size: u64,
    /// Give a `--layer` convolution a bias.
    #[arg(long)]
    pub bias: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON configuration; defaults are used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// MNIST directory (default: HT_DATA_DIR).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fail unless the checkpoint holds this architecture.
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum, default_value = "classical")]
    pub backend: ModeArg,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate only the first `n` test images.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 64, 256, 1024])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 15)]
    pub reps: usize,
    #[arg(long)]
    pub json: bool,
}

/// Errors surfaced by a subcommand, each mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Failed(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Failed(_) => EXIT_FAILED,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Failed(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let text = e.to_string();
        match e {
            Error::Io { .. } | Error::Format { .. } | Error::Schema(_) | Error::Csv(_) => {
                Failure::Io(text)
            }
            Error::Json(ref j) if j.is_io() => Failure::Io(text),
            Error::Diverged { .. } => Failure::Failed(text),
            _ => Failure::Usage(text),
        }
    }
}

impl From<htnet_core::Error> for Failure {
    fn from(e: htnet_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Transform(a) => transform(&a, stdout, stderr),
        Command::Verify(a) => verify(&a, stdout),
        Command::Count(a) => count(&a, stdout),
        Command::Train(a) => train_cmd(&a, stdout, stderr),
        Command::Eval(a) => eval(&a, stdout),
        Command::Bench(a) => bench(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Io(format!("writing output: {e}")))
}

fn write_to(path: Option<&Path>, fallback: &mut dyn Write, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_fail(p, e)),
        None => emit(fallback, text),
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn backend_from(mode: ModeArg, shots: Option<u64>, seed: u64) -> Result<HtBackend, Failure> {
    match (mode, shots) {
        (ModeArg::QuantumShots, Some(0)) => Err(Failure::Usage("--shots must be positive".into())),
        (ModeArg::QuantumShots, Some(shots)) => Ok(HtBackend::QuantumSampled { shots, seed }),
        (ModeArg::QuantumShots, None) => Err(Failure::Usage("quantum-shots needs --shots".into())),
        (_, Some(_)) => Err(Failure::Usage(
            "--shots is only valid with quantum-shots".into(),
        )),
        (ModeArg::Classical, None) => Ok(HtBackend::Classical),
        (ModeArg::QuantumExact, None) => Ok(HtBackend::QuantumExact),
    }
}

/// Rows of numbers from a headerless CSV file.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Failure::Io(format!("{}: `{f}` is not a number", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Failure::Io(format!("{}: no numbers found", path.display())));
    }
    Ok(rows)
}

fn to_csv(rows: &[&[f64]]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn padded_len(len: usize, pad: bool) -> Result<usize, Failure> {
    if len.is_power_of_two() {
        Ok(len)
    } else if pad {
        Ok(len.next_power_of_two())
    } else {
        Err(Failure::Usage(format!(
            "length {len} is not a power of two (use --pad)"
        )))
    }
}

#[derive(Debug, Serialize)]
struct HybridReport {
    mode: &'static str,
    shots: Option<u64>,
    seed: u64,
    epsilon: String,
    n: usize,
    b: f64,
    c: f64,
    delta: f64,
    probabilities: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Hybrid2dReport {
    mode: &'static str,
    shots: Option<u64>,
    seed: u64,
    epsilon: String,
    rows: usize,
    cols: usize,
    transforms: usize,
}

fn transform(a: &TransformArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let backend = backend_from(a.mode, a.shots, a.seed)?;
    let plan = match backend {
        HtBackend::QuantumSampled { shots, seed } => MeasurementPlan::Sampled { shots, seed },
        _ => MeasurementPlan::Exact,
    };
    let epsilon = match a.epsilon {
        Some(e) if !(e > 0.0 && e.is_finite()) => {
            return Err(Failure::Usage("--epsilon must be positive".into()))
        }
        Some(e) => Epsilon::Absolute(e),
        None => Epsilon::default(),
    };
    let mut rows = match (&a.input, a.random) {
        (Some(path), _) => read_csv_rows(path)?,
        (None, Some(0)) => return Err(Failure::Usage("--random needs a positive size".into())),
        (None, Some(n)) => {
            let mut rng = seeded_rng(a.seed);
            let height = if a.two_d { n } else { 1 };
            (0..height)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        }
        (None, None) => return Err(Failure::Usage("give --input or --random".into())),
    };
    let mode_name = match a.mode {
        ModeArg::Classical => "classical",
        ModeArg::QuantumExact => "quantum-exact",
        ModeArg::QuantumShots => "quantum-shots",
    };
    let epsilon_text = match epsilon {
        Epsilon::Absolute(e) => format!("absolute {e}"),
        Epsilon::Relative(e) => format!("relative {e} * (1 + sum|x|)"),
    };

    if !a.two_d {
        let mut x: Vec<f64> = rows.concat();
        x.resize(padded_len(x.len(), a.pad)?, 0.0);
        let (result, report) = match backend {
            HtBackend::Classical => (fht1d(&x, Convention::Symmetric)?, None),
            _ => {
                let r = hybrid_ht(&x, epsilon, plan)?;
                let report = HybridReport {
                    mode: mode_name,
                    shots: a.shots,
                    seed: a.seed,
                    epsilon: epsilon_text,
                    n: x.len(),
                    b: r.b,
                    c: r.c,
                    delta: r.delta,
                    probabilities: r.probabilities.clone(),
                };
                (r.result, Some(json_line(&report)))
            }
        };
        write_to(a.output.as_deref(), stdout, &to_csv(&[&result]))?;
        if let Some(report) = report {
            write_to(a.report.as_deref(), stderr, &report)?;
        }
        return Ok(());
    }

    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.iter().any(|r| r.len() != cols) && !a.pad {
        return Err(Failure::Usage(
            "matrix rows have different lengths (use --pad)".into(),
        ));
    }
    let (height, width) = (padded_len(rows.len(), a.pad)?, padded_len(cols, a.pad)?);
    rows.iter_mut().for_each(|r| r.resize(width, 0.0));
    rows.resize(height, vec![0.0; width]);
    let m = Matrix::from_vec(height, width, rows.concat())?;
    let (result, report) = match backend {
        HtBackend::Classical => (fht2d(&m, Convention::Symmetric)?, None),
        _ => {
            let report = Hybrid2dReport {
                mode: mode_name,
                shots: a.shots,
                seed: a.seed,
                epsilon: epsilon_text,
                rows: height,
                cols: width,
                transforms: height + width,
            };
            (hybrid_ht2d(&m, epsilon, plan)?, Some(json_line(&report)))
        }
    };
    let lines: Vec<&[f64]> = (0..height).map(|r| result.row(r)).collect();
    write_to(a.output.as_deref(), stdout, &to_csv(&lines))?;
    if let Some(report) = report {
        write_to(a.report.as_deref(), stderr, &report)?;
    }
    Ok(())
}

/// Outcome of `verify`, also its JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub theorem: Theorem,
    pub sizes: Vec<usize>,
    pub trials_per_size: usize,
    pub tol: f64,
    pub checks: usize,
    pub failures: usize,
    pub max_error: f64,
    pub passed: bool,
}

/// Runs the randomized identity checks behind `verify`.
pub fn run_verify(
    theorem: Theorem,
    n: usize,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<VerifyReport, Failure> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Failure::Usage(format!(
            "--n {n} must be a power of two >= 2"
        )));
    }
    if trials == 0 || tol.is_nan() || tol < 0.0 {
        return Err(Failure::Usage(
            "--trials must be positive and --tol non-negative".into(),
        ));
    }
    let sizes: Vec<usize> = (1..=n.trailing_zeros()).map(|k| 1usize << k).collect();
    let mut rng = seeded_rng(seed);
    let (mut failures, mut checks, mut max_error) = (0usize, 0usize, 0.0f64);
    for &size in &sizes {
        for _ in 0..trials {
            let mut draw =
                || -> Vec<f64> { (0..size).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let (ok, err) = match theorem {
                Theorem::Conv => {
                    let (a, x) = (draw(), draw());
                    let (lhs, rhs) = conv_theorem_sides(&a, &x)?;
                    let err = max_abs_diff(&lhs, &rhs);
                    (err <= tol, err)
                }
                Theorem::Involution => {
                    let x = draw();
                    let back = ifht1d(&fht1d(&x, Convention::Symmetric)?, Convention::Symmetric)?;
                    let err = max_abs_diff(&x, &back);
                    (err <= tol, err)
                }
                Theorem::Lemma1 => {
                    let shifted = shifted_input(&draw(), Epsilon::default())?;
                    let spectrum = fht1d(&shifted, Convention::Symmetric)?;
                    let min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
                    (lemma1_check(&shifted), if min > 0.0 { 0.0 } else { -min })
                }
            };
            checks += 1;
            max_error = max_error.max(err);
            if !ok {
                failures += 1;
            }
        }
    }
    Ok(VerifyReport {
        theorem,
        sizes,
        trials_per_size: trials,
        tol,
        checks,
        failures,
        max_error,
        passed: failures == 0,
    })
}

fn verify(a: &VerifyArgs, stdout: &mut dyn Write) -> CmdResult {
    let report = run_verify(a.theorem, a.n, a.trials, a.tol, a.seed)?;
    emit(stdout, &json_line(&report))?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Failed(format!(
            "{} of {} checks failed",
            report.failures, report.checks
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct CostItemJson {
    pub label: String,
    pub params: u64,
    pub macs: u64,
}

/// JSON shape of `count --json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct CountJson {
    pub subject: String,
    pub params: u64,
    pub macs: u64,
    pub mac_convention: String,
    pub breakdown: Vec<CostItemJson>,
    /// For HT-perceptron models: the baseline CNN's totals and the MAC saving
    /// of the swapped layer counted without its bias.
    pub baseline_params: Option<u64>,
    pub baseline_macs: Option<u64>,
    pub swap_mac_reduction: Option<u64>,
}

fn count_json(subject: String, report: &CostReport) -> CountJson {
    CountJson {
        subject,
        params: report.params,
        macs: report.macs,
        mac_convention: crate::checkpoint::MAC_CONVENTION.into(),
        breakdown: report
            .breakdown
            .iter()
            .map(|i| CostItemJson {
                label: i.label.clone(),
                params: i.params,
                macs: i.macs,
            })
            .collect(),
        baseline_params: None,
        baseline_macs: None,
        swap_mac_reduction: None,
    }
}

fn parse_triple(text: &str) -> Result<[u64; 3], Failure> {
    let parts: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("`{text}` is not three integers")))?;
    match parts.as_slice() {
        &[a, b, c] if a > 0 && b > 0 && c > 0 => Ok([a, b, c]),
        _ => Err(Failure::Usage(format!(
            "`{text}` must be three positive integers"
        ))),
    }
}

/// Cost table for one `--layer` description.
pub fn layer_cost(layer: &str, size: u64, bias: bool) -> Result<CountJson, Failure> {
    let (kind, rest) = layer.split_once(':').ok_or_else(|| {
        Failure::Usage(format!(
            "`{layer}` should look like conv:K,C,N or htp:P,C,N"
        ))
    })?;
    let [a, c, n] = parse_triple(rest)?;
    let desc = match kind {
        "conv" => LayerDesc::Conv2d {
            kernel: a,
            in_channels: c,
            out_channels: n,
            size,
            bias,
        },
        "htp" => {
            if !size.is_power_of_two() {
                return Err(Failure::Usage(format!(
                    "--size {size} must be a power of two for htp"
                )));
            }
            LayerDesc::HtPerceptron {
                paths: a,
                in_channels: c,
                out_channels: n,
                size,
            }
        }
        other => return Err(Failure::Usage(format!("unknown layer kind `{other}`"))),
    };
    Ok(count_json(layer.to_string(), &cost_report([(kind, desc)])))
}

/// Cost table for a whole architecture.
pub fn arch_cost(arch: ArchName, paths: usize) -> Result<CountJson, Failure> {
    let baseline = ModelSpec::toy_cnn();
    match arch {
        ArchName::ToyCnn => Ok(count_json("toy-cnn".into(), &baseline.cost())),
        ArchName::ToyHtCnn => {
            let spec = ModelSpec::toy_ht_cnn(paths);
            spec.validate()?;
            let mut json = count_json(format!("toy-ht-cnn ({paths} paths)"), &spec.cost());
            let base = baseline.cost();
            let (c, s) = (spec.channels as u64, spec.image_size as u64);
            let conv = LayerDesc::Conv2d {
                kernel: 3,
                in_channels: c,
                out_channels: c,
                size: s,
                bias: false,
            };
            let htp = LayerDesc::HtPerceptron {
                paths: paths as u64,
                in_channels: c,
                out_channels: c,
                size: s,
            };
            json.baseline_params = Some(base.params);
            json.baseline_macs = Some(base.macs);
            json.swap_mac_reduction = Some(count_macs(&conv).saturating_sub(count_macs(&htp)));
            Ok(json)
        }
    }
}

fn count(a: &CountArgs, stdout: &mut dyn Write) -> CmdResult {
    let json = match (&a.layer, a.arch) {
        (Some(layer), _) => layer_cost(layer, a.size, a.bias)?,
        (None, Some(arch)) => arch_cost(arch.into(), a.paths)?,
        (None, None) => return Err(Failure::Usage("give --arch or --layer".into())),
    };
    if a.json {
        return emit(stdout, &json_line(&json));
    }
    let mut text = format!(
        "{}\n{:<28} {:>12} {:>14}\n",
        json.subject, "item", "params", "MACs"
    );
    for item in &json.breakdown {
        text.push_str(&format!(
            "{:<28} {:>12} {:>14}\n",
            item.label, item.params, item.macs
        ));
    }
    text.push_str(&format!(
        "{:<28} {:>12} {:>14}\n",
        "total", json.params, json.macs
    ));
    if let (Some(p), Some(m), Some(r)) = (
        json.baseline_params,
        json.baseline_macs,
        json.swap_mac_reduction,
    ) {
        text.push_str(&format!("{:<28} {:>12} {:>14}\n", "baseline toy-cnn", p, m));
        text.push_str(&format!(
            "{:<28} {:>12} {:>14}\n",
            "swap reduction (bias-free)", "", r
        ));
    }
    text.push_str(&format!("convention: {}\n", json.mac_convention));
    emit(stdout, &text)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    checkpoint: PathBuf,
    metrics: PathBuf,
    best_epoch: usize,
    best_test_acc: f64,
}

fn train_cmd(a: &TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let mut config = match &a.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(d) = &a.data {
        config.data_dir = Some(d.clone());
    }
    if let Some(o) = &a.output {
        config.output_dir = o.clone();
    }
    config.validate()?;
    let _ = writeln!(stderr, "{}", crate::train::METRICS_HEADER);
    let artifacts = train::run_with(&config, |m| {
        let _ = write!(
            stderr,
            "{}",
            metrics_csv(std::slice::from_ref(m))
                .lines()
                .nth(1)
                .unwrap_or("")
        );
        let _ = writeln!(stderr);
    })?;
    let best = artifacts.outcome.best_metrics();
    let summary = TrainSummary {
        checkpoint: artifacts.checkpoint,
        metrics: artifacts.metrics,
        best_epoch: best.epoch,
        best_test_acc: best.test_acc,
    };
    emit(stdout, &json_line(&summary))
}

/// JSON shape of `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EvalJson {
    pub accuracy: f64,
    pub images: usize,
    pub backend: String,
    pub architecture: ArchName,
    pub paths: usize,
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> CmdResult {
    let backend = backend_from(a.backend, a.shots, a.seed)?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let model = match a.arch {
        Some(arch) => checkpoint.model_for(arch.into(), a.paths)?,
        None => checkpoint.model()?,
    };
    let dir = resolve_data_dir(a.data.as_deref())?;
    let mut test = Dataset::load(&dir, Split::Test)?;
    if let Some(n) = a.limit {
        if n == 0 {
            return Err(Failure::Usage("--limit must be positive".into()));
        }
        test = test.head(n);
    }
    let accuracy = train::evaluate(&model, &test, backend)?;
    let json = EvalJson {
        accuracy,
        images: test.len(),
        backend: format!("{backend:?}"),
        architecture: checkpoint.manifest.model.architecture,
        paths: checkpoint.manifest.model.paths,
    };
    emit(stdout, &json_line(&json))
}

fn bench(a: &BenchArgs, stdout: &mut dyn Write) -> CmdResult {
    if a.reps == 0 || a.sizes.iter().any(|&n| n == 0 || !n.is_power_of_two()) {
        return Err(Failure::Usage(
            "--sizes must be powers of two and --reps positive".into(),
        ));
    }
    let rows = crate::bench::run(&a.sizes, a.reps, 0)?;
    if a.json {
        return emit(stdout, &json_line(&rows));
    }
    let mut text = format!(
        "{:>6} {:>14} {:>14} {:>18}\n",
        "n", "naive ns/op", "fht1d ns/op", "hybrid exact ns/op"
    );
    for r in &rows {
        text.push_str(&format!(
            "{:>6} {:>14.1} {:>14.1} {:>18.1}\n",
            r.n, r.naive_ns, r.fast_ns, r.hybrid_exact_ns
        ));
    }
    emit(stdout, &text)
}
