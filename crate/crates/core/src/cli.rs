//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, parse or contract errors, 2 on I/O
//! errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{evaluate_folds, evaluate_with, results_table_csv, FoldReport};
use crate::gradcheck::{audit, audit_csv, AuditConfig};
use crate::letor::{load_fold_dir, read_letor_file, Dataset, FoldSplit};
use crate::model::ParamVector;
use crate::objectives::{energy_derivatives, ObjectiveKind, ObjectiveSpec};
use crate::trainer::{
    sgd_train, sweep, training_log_csv, SelectionMetric, SweepGrid, TrainConfig,
    DEFAULT_LA_WEIGHTS, DEFAULT_LEARNING_RATES, DEFAULT_MAX_GROUP_SIZE, DEFAULT_TEMPERATURES,
    PRINTED_LEARNING_RATES,
};

#[derive(Debug, Parser)]
#[command(
    name = "crfrank",
    version,
    about = "Loss-sensitive ranking CRF toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and report NDCG@1..k.
    Evaluate(EvaluateArgs),
    /// Hyperparameter sweep with validation selection over folds.
    Sweep(SweepArgs),
    /// Normalized negative energy derivatives of each objective.
    AnalyzeDerivatives(AnalyzeArgs),
    /// Finite-difference audit of the analytic gradients.
    CheckGradients(CheckArgs),
}

#[derive(Debug, Args)]
struct HyperArgs {
    /// ml, la, ls, el or kl
    #[arg(long, default_value = "ml")]
    objective: String,
    /// Loss-augmentation weight (LA).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Target distribution temperature (KL).
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_GROUP_SIZE)]
    max_group_size: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Visit queries in file order every epoch.
    #[arg(long)]
    no_shuffle: bool,
    /// Also take steps on queries with a single relevance level.
    #[arg(long)]
    keep_zero_signal: bool,
}

impl HyperArgs {
    fn config(&self) -> Result<TrainConfig> {
        let kind: ObjectiveKind = self.objective.parse()?;
        let spec = ObjectiveSpec::new(kind, self.alpha, self.temperature)?;
        let mut cfg = TrainConfig::new(spec, self.lr, self.epochs);
        cfg.seed = self.seed;
        cfg.max_group_size = self.max_group_size;
        cfg.weight_decay = self.weight_decay;
        cfg.shuffle_queries = !self.no_shuffle;
        cfg.skip_zero_signal_queries = !self.keep_zero_signal;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// LETOR training file.
    #[arg(long, conflicts_with = "fold_dir")]
    train: Option<PathBuf>,
    /// Directory holding Fold<k>/{train,vali,test}.txt.
    #[arg(long)]
    fold_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    fold: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Checkpoint destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch CSV log destination.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// LETOR file to score.
    #[arg(long, conflicts_with = "fold_dir")]
    data: Option<PathBuf>,
    /// Score the test split of Fold<k> under this directory.
    #[arg(long)]
    fold_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    fold: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    exclude_empty: bool,
    /// Means CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query CSV destination.
    #[arg(long)]
    per_query: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    fold_dir: PathBuf,
    /// Comma-separated fold numbers.
    #[arg(long, default_value = "1,2,3,4,5")]
    folds: String,
    /// Comma-separated objectives.
    #[arg(long, default_value = "ml,la,ls,el,kl")]
    objectives: String,
    /// Learning-rate grid; defaults to 0.5,0.1,0.01,0.001.
    #[arg(long)]
    lrs: Option<String>,
    /// Use the learning-rate grid 0.5,0.01,0.01,0.001 verbatim.
    #[arg(long, conflicts_with = "lrs")]
    printed_lr_grid: bool,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    temperatures: Option<String>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_GROUP_SIZE)]
    max_group_size: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    exclude_empty: bool,
    /// Results table destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write selected checkpoints and the selection log.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, allow_hyphen_values = true)]
    energies: String,
    #[arg(long, allow_hyphen_values = true)]
    losses: String,
    /// 1-based index of the ground-truth configuration.
    #[arg(long)]
    gt: usize,
    #[arg(long, default_value = "ml,la,ls,el,kl")]
    objectives: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = crate::gradcheck::DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = crate::gradcheck::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::contract(format!("invalid {what} entry {s:?}")))
        })
        .collect()
}

fn parse_objectives(text: &str) -> Result<Vec<ObjectiveKind>> {
    text.split(',').map(str::parse).collect()
}

fn emit(text: &str, path: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = args.hyper.config()?;
    let data = match (&args.train, &args.fold_dir) {
        (Some(p), _) => read_letor_file(p, None)?,
        (None, Some(dir)) => load_fold_dir(dir, args.fold)?.train,
        (None, None) => return Err(Error::contract("either --train or --fold-dir is required")),
    };
    let out = sgd_train(&data, &cfg)?;
    if let Some(p) = &args.log {
        emit(&training_log_csv(&out.log), Some(p), stdout)?;
    }
    emit(
        &out.theta.to_checkpoint_string(),
        args.out.as_deref(),
        stdout,
    )
}

fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let theta = ParamVector::load(&args.model)?;
    let data: Dataset = match (&args.data, &args.fold_dir) {
        (Some(p), _) => read_letor_file(p, Some(theta.dim()))?,
        (None, Some(dir)) => load_fold_dir(dir, args.fold)?.test,
        (None, None) => return Err(Error::contract("either --data or --fold-dir is required")),
    };
    let report = evaluate_with(&theta, &data, args.k, args.exclude_empty)?;
    if let Some(p) = &args.per_query {
        emit(&report.per_query_csv(), Some(p), stdout)?;
    }
    emit(&report.means_csv(), args.out.as_deref(), stdout)
}

/// Everything produced by [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// `(objective label, fold report)` in requested order.
    pub rows: Vec<(String, FoldReport)>,
    pub selection_csv: String,
}

/// Sweep every objective on every fold, select on validation, report test
/// NDCG averaged over folds. Checkpoints go to `checkpoint_dir` when given.
pub fn run_sweep(
    folds: &[FoldSplit],
    kinds: &[ObjectiveKind],
    grid: &SweepGrid,
    base: &TrainConfig,
    max_k: usize,
    exclude_empty: bool,
    checkpoint_dir: Option<&Path>,
) -> Result<SweepOutput> {
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut selection =
        String::from("objective,fold,learning_rate,la_weight,temperature,validation_score\n");
    let mut rows = Vec::new();
    for &kind in kinds {
        let mut models = Vec::with_capacity(folds.len());
        for fold in folds {
            let res = sweep(fold, grid, kind, base)?;
            let _ = writeln!(
                selection,
                "{kind},{},{:?},{:?},{:?},{:?}",
                fold.fold_index,
                res.best.learning_rate,
                res.best.objective.la_weight,
                res.best.objective.temperature,
                res.validation_score
            );
            if let Some(dir) = checkpoint_dir {
                let name = format!(
                    "{}_fold{}.theta",
                    kind.label().to_lowercase(),
                    fold.fold_index
                );
                res.theta.save(&dir.join(name))?;
            }
            models.push(res.theta);
        }
        let report = evaluate_folds(&models, folds, max_k, exclude_empty)?;
        rows.push((kind.label().to_string(), report));
    }
    if let Some(dir) = checkpoint_dir {
        let p = dir.join("selection.csv");
        fs::write(&p, &selection).map_err(|e| Error::io(p, e))?;
    }
    Ok(SweepOutput {
        rows,
        selection_csv: selection,
    })
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let fold_ids: Vec<usize> = parse_list(&args.folds, "fold")?;
    let kinds = parse_objectives(&args.objectives)?;
    let learning_rates = match (&args.lrs, args.printed_lr_grid) {
        (Some(s), _) => parse_list(s, "learning rate")?,
        (None, true) => PRINTED_LEARNING_RATES.to_vec(),
        (None, false) => DEFAULT_LEARNING_RATES.to_vec(),
    };
    let grid = SweepGrid {
        learning_rates,
        la_weights: match &args.alphas {
            Some(s) => parse_list(s, "alpha")?,
            None => DEFAULT_LA_WEIGHTS.to_vec(),
        },
        temperatures: match &args.temperatures {
            Some(s) => parse_list(s, "temperature")?,
            None => DEFAULT_TEMPERATURES.to_vec(),
        },
        selection: SelectionMetric::MeanUpTo(args.k),
    };
    let mut base = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Ml), 0.1, args.epochs);
    base.seed = args.seed;
    base.max_group_size = args.max_group_size;

    let folds = fold_ids
        .iter()
        .map(|&k| load_fold_dir(&args.fold_dir, k))
        .collect::<Result<Vec<_>>>()?;
    let out = run_sweep(
        &folds,
        &kinds,
        &grid,
        &base,
        args.k,
        args.exclude_empty,
        args.checkpoint_dir.as_deref(),
    )?;
    emit(&results_table_csv(&out.rows), args.out.as_deref(), stdout)
}

/// `objective,y1,...,yn` rows of l2-normalized negative energy derivatives.
pub fn derivative_table(
    kinds: &[ObjectiveKind],
    energies: &[f64],
    losses: &[f64],
    gt_index: usize,
    la_weight: f64,
    temperature: f64,
) -> Result<String> {
    let mut out = String::from("objective");
    for j in 1..=energies.len() {
        let _ = write!(out, ",y{j}");
    }
    out.push('\n');
    for &kind in kinds {
        let spec = ObjectiveSpec::new(kind, la_weight, temperature)?;
        let v = energy_derivatives(&spec, energies, losses, gt_index)?;
        out.push_str(kind.label());
        for x in v {
            let _ = write!(out, ",{x:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let energies: Vec<f64> = parse_list(&args.energies, "energy")?;
    let losses: Vec<f64> = parse_list(&args.losses, "loss")?;
    if args.gt == 0 || args.gt > energies.len() {
        return Err(Error::contract(format!(
            "--gt must lie in 1..={}",
            energies.len()
        )));
    }
    let kinds = parse_objectives(&args.objectives)?;
    let table = derivative_table(
        &kinds,
        &energies,
        &losses,
        args.gt - 1,
        args.alpha,
        args.temperature,
    )?;
    emit(&table, args.out.as_deref(), stdout)
}

fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write) -> Result<()> {
    let rows = audit(&AuditConfig {
        trials: args.trials,
        seed: args.seed,
        dim: args.dim,
        step: args.h,
        tolerance: args.tol,
        la_weight: args.alpha,
        temperature: args.temperature,
        ..AuditConfig::default()
    })?;
    emit(&audit_csv(&rows), args.out.as_deref(), stdout)?;
    if let Some(bad) = rows.iter().find(|r| !r.passed) {
        return Err(Error::contract(format!(
            "{} gradient audit failed: max relative error {:e}",
            bad.kind, bad.max_relative_error
        )));
    }
    Ok(())
}

/// Parse `args` (including the program name) and run the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::AnalyzeDerivatives(a) => cmd_analyze(a, stdout),
        Command::CheckGradients(a) => cmd_check(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
