//! Command-line surface for the calmix toolkit.
//!
//! One binary, seven subcommands, every report emitted as line-delimited
//! JSON with a stable field order. Exit codes: 0 success, 1 validation or
//! parse error, 2 solver failure, 3 verification failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, IsTerminal, Read, Write};
use std::path::{Path, PathBuf};

use calmix_core::balance::{
    solve_l2_closed, solve_pair_2class, solve_pair_numeric, t_ce, t_fl, verify_propositions,
    LossKind, MixPairProblem, NumericOptions, SolverKind, VerifyOptions,
};
use calmix_core::io::{
    read_benchmark, read_embeddings, read_predictions_named, write_benchmark, write_jsonl,
};
use calmix_core::metrics::{ece, oe, ue, MetricsReport, PredictionSet};
use calmix_core::mixsim::{build_benchmark, lambda_grid, BenchmarkConfig, MixWorld};
use calmix_core::reannotate::{
    class_prototypes, reannotate_batch, EmbeddingSet, MixedSample, PrototypeMode,
};
use calmix_core::simplex::ln_clamped;
use calmix_core::streams::stream;
use calmix_core::tempscale::{fit_temperature, GridSpec, Objective};
use calmix_core::trainer::{train, Dataset, MixTargets, TrainConfig};
use calmix_core::{Error, LogitVector, ProbVector, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

/// Parse `argv` and run the selected subcommand, returning the process
/// exit code instead of exiting (keeps the surface testable in-process).
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::SolverFailure(_) | Error::TrainingFailure { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Metrics(args) => run_metrics(args),
        Command::TempScale(args) => run_temp_scale(args),
        Command::Reannotate(args) => run_reannotate(args),
        Command::Balance(args) => run_balance(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Train(args) => run_train(args),
        Command::Verify(args) => run_verify(args),
    }
}

#[derive(Parser)]
#[command(
    name = "calmix",
    version,
    about = "Calibration metrics, soft-label reannotation, and confidence-balance analysis for semantic mixing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a prediction file with the calibration metric family.
    Metrics(MetricsArgs),
    /// Fit a softmax temperature on held-out predictions.
    TempScale(TempScaleArgs),
    /// Recover and debias mixing coefficients from embeddings.
    Reannotate(ReannotateArgs),
    /// Solve proximity-constrained pair problems and report the tilt.
    Balance(BalanceArgs),
    /// Generate a synthetic semantic-mixing benchmark directory.
    Simulate(SimulateArgs),
    /// Train the linear soft-label classifier on a benchmark directory.
    Train(TrainArgs),
    /// Run the full proposition and invariant suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Ce,
    Focal,
    L2,
}

impl LossArg {
    fn to_loss(self, gamma: f64) -> LossKind {
        match self {
            LossArg::Ce => LossKind::Ce,
            LossArg::Focal => LossKind::Focal { gamma },
            LossArg::L2 => LossKind::L2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            LossArg::Ce => "ce",
            LossArg::Focal => "focal",
            LossArg::L2 => "l2",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Nll,
    Ece,
}

impl From<ObjectiveArg> for Objective {
    fn from(arg: ObjectiveArg) -> Objective {
        match arg {
            ObjectiveArg::Nll => Objective::Nll,
            ObjectiveArg::Ece => Objective::Ece,
        }
    }
}

fn parse_grid(text: &str) -> std::result::Result<GridSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be lo:hi:step, got '{text}'"));
    }
    let mut values = [0.0f64; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("grid component '{part}' is not a number"))?;
    }
    Ok(GridSpec {
        lo: values[0],
        hi: values[1],
        step: values[2],
    })
}

fn parse_lr_drop(text: &str) -> std::result::Result<(usize, f64), String> {
    let (epoch, mult) = text
        .split_once(':')
        .ok_or_else(|| format!("expected epoch:multiplier, got '{text}'"))?;
    let epoch = epoch
        .parse()
        .map_err(|_| format!("epoch '{epoch}' is not an integer"))?;
    let mult = mult
        .parse()
        .map_err(|_| format!("multiplier '{mult}' is not a number"))?;
    Ok((epoch, mult))
}

/// Write records to `path`, or to stdout when no path is given.
fn emit<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    match path {
        Some(path) => write_jsonl(BufWriter::new(File::create(path)?), records),
        None => write_jsonl(io::stdout().lock(), records),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

// ---------- metrics ----------

#[derive(Args)]
struct MetricsArgs {
    /// Prediction CSV: `label,p0,..` for probabilities or `label,z0,..`
    /// for logits (softmaxed at temperature 1 before scoring).
    #[arg(long)]
    input: PathBuf,
    /// Number of equal-width confidence bins.
    #[arg(long, default_value_t = 15)]
    bins: usize,
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    labels_col: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run_metrics(args: MetricsArgs) -> Result<i32> {
    let file = read_predictions_named(open(&args.input)?, &args.labels_col)?;
    let set = file.to_prediction_set()?;
    let report = MetricsReport::compute(&set, args.bins)?;
    emit(args.report.as_deref(), &[report])?;
    Ok(0)
}

// ---------- temp-scale ----------

#[derive(Args)]
struct TempScaleArgs {
    /// Prediction CSV; logit files are used directly, probability files
    /// are scaled through their log-probabilities.
    #[arg(long)]
    input: PathBuf,
    /// What the grid search minimizes.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Nll)]
    objective: ObjectiveArg,
    /// Temperature grid as lo:hi:step.
    #[arg(long, value_parser = parse_grid, default_value = "0.5:5:0.01")]
    grid: GridSpec,
    /// Bin count when the objective is ece.
    #[arg(long, default_value_t = 15)]
    bins: usize,
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    labels_col: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run_temp_scale(args: TempScaleArgs) -> Result<i32> {
    let file = read_predictions_named(open(&args.input)?, &args.labels_col)?;
    let (logits, labels) = match file.logit_rows() {
        Some((logits, labels)) => (logits.to_vec(), labels.to_vec()),
        None => {
            let set = file.to_prediction_set()?;
            let logits = set
                .probs()
                .iter()
                .map(|p| LogitVector::new(p.iter().map(|&v| ln_clamped(v)).collect()))
                .collect::<Result<Vec<_>>>()?;
            (logits, set.labels().to_vec())
        }
    };
    let fit = fit_temperature(&logits, &labels, args.objective.into(), args.grid, args.bins)?;
    emit(args.report.as_deref(), &[fit])?;
    Ok(0)
}

// ---------- reannotate ----------

#[derive(Clone, Copy, ValueEnum)]
enum PrototypeArg {
    Mean,
    Sum,
}

#[derive(Args)]
struct ReannotateArgs {
    /// Labeled embedding CSV (`label,e0,..`) the prototypes come from.
    #[arg(long)]
    embeddings: PathBuf,
    /// Mixed-sample CSV: `class_i,class_j,x0,..`.
    #[arg(long)]
    pairs: PathBuf,
    /// Debias scale; the calibrated choice is squared prototype distance
    /// over the noise variance.
    #[arg(long)]
    scale_s: f64,
    /// How class prototypes aggregate their embeddings.
    #[arg(long, value_enum, default_value_t = PrototypeArg::Mean)]
    prototype_mode: PrototypeArg,
    /// L2-normalize embeddings and mixed samples first.
    #[arg(long)]
    normalize: bool,
    /// Write the reports here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn unit_scale(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Read the mixed-sample file: `class_i,class_j,x0,..,x{d-1}`.
fn read_pairs<R: Read>(reader: R) -> Result<Vec<MixedSample>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 3 || header.get(0) != Some("class_i") || header.get(1) != Some("class_j") {
        return Err(Error::Parse {
            line: 1,
            message: "header must be class_i,class_j,x0,..".to_string(),
        });
    }
    for (i, name) in header.iter().skip(2).enumerate() {
        let expected = format!("x{i}");
        if name != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {} must be '{expected}', got '{name}'", i + 2),
            });
        }
    }
    let dim = header.len() - 2;
    let mut samples = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line: row,
            message: e.to_string(),
        })?;
        if record.len() != dim + 2 {
            return Err(Error::Parse {
                line: row,
                message: format!("expected {} fields, got {}", dim + 2, record.len()),
            });
        }
        let class = |idx: usize| -> Result<usize> {
            record.get(idx).unwrap_or("").parse().map_err(|_| Error::Parse {
                line: row,
                message: format!(
                    "class '{}' is not a non-negative integer",
                    record.get(idx).unwrap_or("")
                ),
            })
        };
        let class_i = class(0)?;
        let class_j = class(1)?;
        let mut embedding = Vec::with_capacity(dim);
        for field in record.iter().skip(2) {
            embedding.push(field.parse().map_err(|_| Error::Parse {
                line: row,
                message: format!("value '{field}' is not a number"),
            })?);
        }
        samples.push(MixedSample {
            embedding,
            class_i,
            class_j,
        });
    }
    Ok(samples)
}

fn run_reannotate(args: ReannotateArgs) -> Result<i32> {
    let mut embeddings: EmbeddingSet = read_embeddings(open(&args.embeddings)?)?;
    if args.normalize {
        embeddings = embeddings.l2_normalized();
    }
    let mode = match args.prototype_mode {
        PrototypeArg::Mean => PrototypeMode::Mean,
        PrototypeArg::Sum => PrototypeMode::Sum,
    };
    let prototypes = class_prototypes(&embeddings, mode)?;
    let mut samples = read_pairs(open(&args.pairs)?)?;
    if args.normalize {
        for sample in &mut samples {
            unit_scale(&mut sample.embedding);
        }
    }
    let notes = reannotate_batch(&samples, &prototypes, args.scale_s)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    emit(args.report.as_deref(), &notes)?;
    Ok(0)
}

// ---------- balance ----------

#[derive(Clone, Copy)]
struct Instance {
    alpha1: f64,
    alpha2: f64,
    delta: f64,
    k: usize,
}

fn parse_instance(text: &str) -> std::result::Result<Instance, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("instance must be a1,a2,delta,k, got '{text}'"));
    }
    let number = |part: &str| -> std::result::Result<f64, String> {
        part.parse()
            .map_err(|_| format!("instance component '{part}' is not a number"))
    };
    Ok(Instance {
        alpha1: number(parts[0])?,
        alpha2: number(parts[1])?,
        delta: number(parts[2])?,
        k: parts[3]
            .parse()
            .map_err(|_| format!("class count '{}' is not an integer", parts[3]))?,
    })
}

#[derive(Args)]
struct BalanceArgs {
    /// Loss the pair objective uses.
    #[arg(long, value_enum)]
    loss: LossArg,
    /// Focusing strength when the loss is focal.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Number of random instances when no --instance is given.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Seed for the random instances.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Solve one instance given as a1,a2,delta,k.
    #[arg(long, value_parser = parse_instance)]
    instance: Option<Instance>,
    /// Write the reports here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct BalanceRecord {
    alpha1: f64,
    alpha2: f64,
    delta: f64,
    k: usize,
    loss: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    solver: SolverKind,
    constraint_active: bool,
    p1_star: Vec<f64>,
    p2_star: Vec<f64>,
    beta: f64,
    objective_value: f64,
    tilt: &'static str,
}

fn tilt_verdict(beta: f64) -> &'static str {
    if beta < -1e-10 {
        "sharper"
    } else if beta > 1e-10 {
        "softer"
    } else {
        "balanced"
    }
}

fn solve_instance(arg: LossArg, gamma: f64, instance: Instance) -> Result<Vec<BalanceRecord>> {
    let loss = arg.to_loss(gamma);
    let problem = MixPairProblem::new(
        loss,
        instance.alpha1,
        instance.alpha2,
        instance.delta,
        instance.k,
    )?;
    let structured = match loss {
        LossKind::L2 => solve_l2_closed(&problem)?,
        _ => solve_pair_2class(&problem)?,
    };
    let numeric = solve_pair_numeric(&problem, &NumericOptions::default())?;
    let record = |report: &calmix_core::balance::BalanceReport| BalanceRecord {
        alpha1: instance.alpha1,
        alpha2: instance.alpha2,
        delta: instance.delta,
        k: instance.k,
        loss: arg.name(),
        gamma: match loss {
            LossKind::Focal { gamma } => Some(gamma),
            _ => None,
        },
        solver: report.solver,
        constraint_active: report.constraint_active,
        p1_star: report.p1_star.as_slice().to_vec(),
        p2_star: report.p2_star.as_slice().to_vec(),
        beta: report.beta,
        objective_value: report.objective_value,
        tilt: tilt_verdict(report.beta),
    };
    Ok(vec![record(&structured), record(&numeric)])
}

fn run_balance(args: BalanceArgs) -> Result<i32> {
    let mut records = Vec::new();
    match args.instance {
        Some(instance) => {
            records.extend(solve_instance(args.loss, args.gamma, instance)?);
        }
        None => {
            for trial in 0..args.trials {
                let mut rng = stream(args.seed, "cli-balance", trial as u64);
                let alpha2 = rng.gen_range(0.5..0.93);
                let alpha1 = rng.gen_range(alpha2 + 0.02..0.99);
                let k = rng.gen_range(2..=8usize);
                let gap_sq = 2.0 * (alpha1 - alpha2) * (alpha1 - alpha2);
                let delta = rng.gen_range(0.0..2.0) * gap_sq;
                let instance = Instance {
                    alpha1,
                    alpha2,
                    delta,
                    k,
                };
                records.extend(solve_instance(args.loss, args.gamma, instance)?);
            }
        }
    }
    emit(args.report.as_deref(), &records)?;
    Ok(0)
}

// ---------- simulate ----------

#[derive(Args)]
struct SimulateArgs {
    /// Number of classes in the regular world.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Embedding dimension (defaults to the class count).
    #[arg(long)]
    dim: Option<usize>,
    /// Euclidean distance between any two class means.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Isotropic noise scale.
    #[arg(long, default_value_t = 0.8)]
    sigma: f64,
    /// Conditioning-vs-posterior warp strength.
    #[arg(long, default_value_t = 3.0)]
    warp: f64,
    /// Number of mixed sets.
    #[arg(long, default_value_t = 100)]
    sets: usize,
    /// Size of the mixing-coefficient grid (endpoints included).
    #[arg(long, default_value_t = 9)]
    lambdas: usize,
    /// Pure samples drawn per class.
    #[arg(long, default_value_t = 50)]
    onehot_per_class: usize,
    /// World seed; every draw derives from it.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SimulateSummary {
    out: String,
    classes: usize,
    dim: usize,
    n_sets: usize,
    n_mixed: usize,
    n_onehot: usize,
    seed: u64,
}

fn run_simulate(args: SimulateArgs) -> Result<i32> {
    let dim = args.dim.unwrap_or(args.classes);
    let world = MixWorld::regular(
        args.classes,
        dim,
        args.separation,
        args.sigma,
        args.warp,
        args.seed,
    )?;
    let config = BenchmarkConfig {
        n_sets: args.sets,
        lambdas: lambda_grid(args.lambdas)?,
        onehot_per_class: args.onehot_per_class,
    };
    let benchmark = build_benchmark(&world, &config)?;
    write_benchmark(&args.out, &world, &benchmark)?;
    let summary = SimulateSummary {
        out: args.out.display().to_string(),
        classes: args.classes,
        dim,
        n_sets: benchmark.sets.len(),
        n_mixed: benchmark.sets.iter().map(|s| s.samples.len()).sum(),
        n_onehot: benchmark.onehot.len(),
        seed: args.seed,
    };
    emit(None, &[summary])?;
    Ok(0)
}

// ---------- train ----------

#[derive(Clone, Copy, ValueEnum)]
enum TargetsArg {
    Conditioning,
    Oracle,
    Debiased,
    Ignore,
}

impl From<TargetsArg> for MixTargets {
    fn from(arg: TargetsArg) -> MixTargets {
        match arg {
            TargetsArg::Conditioning => MixTargets::Conditioning,
            TargetsArg::Oracle => MixTargets::Oracle,
            TargetsArg::Debiased => MixTargets::Debiased,
            TargetsArg::Ignore => MixTargets::Ignore,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Benchmark directory produced by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Which targets the mixed pool trains against.
    #[arg(long, value_enum, default_value_t = TargetsArg::Debiased)]
    targets: TargetsArg,
    /// Loss on the soft pool (the one-hot pool always trains with ce).
    #[arg(long, value_enum, default_value_t = LossArg::L2)]
    soft_loss: LossArg,
    /// Focusing strength when the soft loss is focal.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    lr: f64,
    /// Learning-rate drop as epoch:multiplier; may repeat.
    #[arg(long, value_parser = parse_lr_drop)]
    lr_drop: Vec<(usize, f64)>,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    /// Weight of the soft term relative to the one-hot term.
    #[arg(long, default_value_t = 4.0)]
    soft_ratio: f64,
    /// Fraction of each one-hot class held out for validation.
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Bin count for the validation metrics.
    #[arg(long, default_value_t = 15)]
    bins: usize,
    /// What the post-hoc temperature search minimizes.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Nll)]
    ts_objective: ObjectiveArg,
    /// Temperature grid as lo:hi:step.
    #[arg(long, value_parser = parse_grid, default_value = "0.5:5:0.01")]
    ts_grid: GridSpec,
    /// Shuffling and split seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run_train(args: TrainArgs) -> Result<i32> {
    let (world, benchmark) = read_benchmark(&args.input).map_err(|e| match e {
        Error::Io(io) => Error::invalid(format!(
            "cannot read benchmark at {}: {io}",
            args.input.display()
        )),
        other => other,
    })?;
    let dataset = Dataset::from_benchmark(&world, &benchmark, args.targets.into())?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        soft_loss: args.soft_loss.to_loss(args.gamma),
        soft_ratio: args.soft_ratio,
        lr_schedule: args.lr_drop.clone(),
        val_fraction: args.val_fraction,
        n_bins: args.bins,
        ts_objective: args.ts_objective.into(),
        ts_grid: args.ts_grid,
        seed: args.seed,
    };
    let report = train(&dataset, &config)?;
    emit(args.report.as_deref(), &[report])?;
    Ok(0)
}

// ---------- verify ----------

#[derive(Args)]
struct VerifyArgs {
    /// Random pair instances per proposition.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Skip the projected solver (root-finder route only).
    #[arg(long)]
    fast: bool,
    /// Also write the machine-readable summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct VerifySummary {
    propositions: calmix_core::balance::PropositionSummary,
    witness_points: usize,
    witness_ok: bool,
    metric_sets: usize,
    metric_ok: bool,
    all_passed: bool,
}

fn use_color() -> bool {
    std::env::var_os("NO_COLOR").is_none() && io::stdout().is_terminal()
}

fn status_line(out: &mut impl Write, color: bool, ok: bool, text: &str) -> io::Result<()> {
    let tag = match (ok, color) {
        (true, true) => "\x1b[32m[PASS]\x1b[0m",
        (false, true) => "\x1b[31m[FAIL]\x1b[0m",
        (true, false) => "[PASS]",
        (false, false) => "[FAIL]",
    };
    writeln!(out, "{tag} {text}")
}

/// Sign witnesses on an interior grid (they vanish on the boundary).
fn witness_signs_hold(side: usize) -> Result<(usize, bool)> {
    let mut points = 0;
    let mut ok = true;
    for i in 0..side {
        let alpha2 = 0.5 + 0.44 * i as f64 / (side - 1) as f64;
        for j in 0..side {
            let alpha1 = alpha2 + 0.02 + (0.96 - alpha2) * j as f64 / (side - 1) as f64;
            for l in 0..5 {
                let eps = (l + 1) as f64 / 6.0 * (alpha1 - alpha2);
                ok &= t_ce(alpha1, alpha2, eps)? < 0.0;
                ok &= t_fl(alpha1, alpha2, eps)? > 0.0;
                points += 1;
            }
        }
    }
    Ok((points, ok))
}

/// The signed gaps must split the absolute one: oe + ue = ece.
fn metric_identity_holds(seed: u64, sets: usize) -> Result<bool> {
    for trial in 0..sets {
        let mut rng = stream(seed, "cli-verify-metrics", trial as u64);
        let n = rng.gen_range(2..=40usize);
        let k = rng.gen_range(2..=6usize);
        let bins = rng.gen_range(1..=15usize);
        let mut probs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.001..1.0)).collect();
            let total: f64 = raw.iter().sum();
            probs.push(ProbVector::normalized(
                raw.into_iter().map(|v| v / total).collect(),
            )?);
            labels.push(rng.gen_range(0..k));
        }
        let set = PredictionSet::new(probs, labels)?;
        let gap = (oe(&set, bins)? + ue(&set, bins)? - ece(&set, bins)?).abs();
        if gap > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn run_verify(args: VerifyArgs) -> Result<i32> {
    let options = VerifyOptions {
        trials: args.trials,
        seed: args.seed,
        run_numeric: !args.fast,
    };
    let summary = verify_propositions(&options)?;
    let (witness_points, witness_ok) = witness_signs_hold(12)?;
    let metric_sets = 50;
    let metric_ok = metric_identity_holds(args.seed, metric_sets)?;
    let all_passed = summary.all_passed && witness_ok && metric_ok;

    let color = use_color();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let routes = if summary.ran_numeric {
        "both routes"
    } else {
        "root-finder route"
    };
    let ce_ok = summary.ce_negative_rootfind == summary.ce_active_trials
        && summary.ce_slack_ok_rootfind == summary.ce_slack_trials
        && (!summary.ran_numeric
            || (summary.ce_negative_numeric == summary.ce_active_trials
                && summary.ce_slack_ok_numeric == summary.ce_slack_trials));
    status_line(
        &mut out,
        color,
        ce_ok,
        &format!(
            "ce tilts sharper: {}/{} binding instances negative, {}/{} slack instances return the targets ({routes})",
            summary.ce_negative_rootfind,
            summary.ce_active_trials,
            summary.ce_slack_ok_rootfind,
            summary.ce_slack_trials,
        ),
    )?;
    let fl_ok = summary.fl_positive_rootfind == summary.fl_tilt_trials
        && (!summary.ran_numeric || summary.fl_positive_numeric == summary.fl_tilt_trials);
    status_line(
        &mut out,
        color,
        fl_ok,
        &format!(
            "focal tilts softer: {}/{} binding instances positive ({routes})",
            summary.fl_positive_rootfind, summary.fl_tilt_trials,
        ),
    )?;
    status_line(
        &mut out,
        color,
        summary.l2_max_abs_beta <= 1e-10,
        &format!(
            "l2 stays balanced: max |beta| = {:.2e} (tolerance 1e-10)",
            summary.l2_max_abs_beta,
        ),
    )?;
    if summary.ran_numeric {
        status_line(
            &mut out,
            color,
            summary.max_objective_gap <= 1e-6,
            &format!(
                "route agreement: max objective gap = {:.2e} (tolerance 1e-6)",
                summary.max_objective_gap,
            ),
        )?;
        status_line(
            &mut out,
            color,
            summary.max_off_support_mass <= 1e-6,
            // + 0.0 folds IEEE negative zero into plain zero for display.
            &format!(
                "support reduction: max off-support mass = {:.2e} (tolerance 1e-6)",
                summary.max_off_support_mass + 0.0,
            ),
        )?;
    }
    status_line(
        &mut out,
        color,
        witness_ok,
        &format!("sign witnesses: t_ce < 0 and t_fl > 0 on {witness_points} interior grid points"),
    )?;
    status_line(
        &mut out,
        color,
        metric_ok,
        &format!("metric identity: oe + ue = ece on {metric_sets} random sets"),
    )?;
    for failure in &summary.failures {
        writeln!(out, "  failure: {failure}")?;
    }

    if let Some(path) = &args.report {
        let record = VerifySummary {
            propositions: summary,
            witness_points,
            witness_ok,
            metric_sets,
            metric_ok,
            all_passed,
        };
        emit(Some(path), &[record])?;
    }
    Ok(if all_passed { 0 } else { 3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parser_accepts_three_fields() {
        let grid = parse_grid("0.5:5:0.01").unwrap();
        assert_eq!(grid.lo, 0.5);
        assert_eq!(grid.hi, 5.0);
        assert_eq!(grid.step, 0.01);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn instance_parser_reads_four_fields() {
        let inst = parse_instance("0.9,0.6,0.045,2").unwrap();
        assert_eq!(inst.alpha1, 0.9);
        assert_eq!(inst.alpha2, 0.6);
        assert_eq!(inst.delta, 0.045);
        assert_eq!(inst.k, 2);
        assert!(parse_instance("0.9,0.6,0.045").is_err());
        assert!(parse_instance("0.9,0.6,x,2").is_err());
    }

    #[test]
    fn lr_drop_parser_reads_epoch_and_multiplier() {
        assert_eq!(parse_lr_drop("24:0.1").unwrap(), (24, 0.1));
        assert!(parse_lr_drop("24").is_err());
        assert!(parse_lr_drop("x:0.1").is_err());
    }

    #[test]
    fn pairs_reader_validates_header_and_rows() {
        let good = "class_i,class_j,x0,x1\n0,1,0.5,0.25\n";
        let samples = read_pairs(good.as_bytes()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].class_i, 0);
        assert_eq!(samples[0].embedding, vec![0.5, 0.25]);

        let bad_header = "a,b,x0\n0,1,0.5\n";
        assert!(read_pairs(bad_header.as_bytes()).is_err());

        let bad_row = "class_i,class_j,x0\n0,1,zebra\n";
        let err = read_pairs(bad_row.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn tilt_verdict_has_a_dead_band() {
        assert_eq!(tilt_verdict(-1e-9), "sharper");
        assert_eq!(tilt_verdict(1e-9), "softer");
        assert_eq!(tilt_verdict(0.0), "balanced");
        assert_eq!(tilt_verdict(5e-11), "balanced");
    }

    #[test]
    fn help_and_unknown_flag_exit_codes() {
        assert_eq!(run_cli(["calmix", "--help"]), 0);
        assert_eq!(run_cli(["calmix", "metrics", "--no-such-flag"]), 1);
        assert_eq!(run_cli(["calmix", "no-such-command"]), 1);
    }
}
