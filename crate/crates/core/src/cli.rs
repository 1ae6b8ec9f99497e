//! Experiment harness behind the `cwsl` binary.
//!
//! Four subcommands: `synth` writes a corrupted synthetic split, `train` fits
//! CWSL (or the ERM baseline) and writes its curves, weights and coefficients,
//! `eval` scores a labeled CSV with saved coefficients, and `weights-audit`
//! summarizes learned weights on flipped versus clean instances. Results go to
//! standard output as `name=value` lines.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aucloss::exact_auc;
use crate::bilevel::{self, HyperParams};
use crate::data::{
    append_bias, flip_labels, load_csv, make_gaussian_blobs, split, standardize_apply,
    standardize_fit, subsample_by_class, write_csv, SplitSpec, StandardizerStats,
};
use crate::error::{Error, Result};
use crate::metrics::{
    calibrate_probability, precision_recall_f1, threshold_scores, ClassificationCounts,
};
use crate::model::{predict_prob, read_theta_csv, scores, write_theta_csv, ModelParams};

#[derive(Debug, Parser)]
#[command(
    name = "cwsl",
    version,
    about = "Instance reweighting for AUC under label noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Gaussian blobs, split them and flip training labels.
    Synth(SynthArgs),
    /// Fit a model and write curves.csv, weights.csv and theta.csv.
    Train(TrainArgs),
    /// Score a labeled CSV with saved coefficients.
    Eval(EvalArgs),
    /// Compare learned weights on flipped and clean training instances.
    WeightsAudit(AuditArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 569)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Distance between the class means along the first axis.
    #[arg(long, default_value_t = 6.0)]
    pub sep: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pos_fraction: f64,
    /// Train, validation and test sizes.
    #[arg(long, value_delimiter = ',', default_value = "469,50,50")]
    pub split: Vec<usize>,
    /// Number of training labels to flip.
    #[arg(long, default_value_t = 100)]
    pub flips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subsample the validation set to this positive-to-negative ratio.
    #[arg(long)]
    pub val_ratio: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Unweighted logistic regression.
    Erm,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_theta: f64,
    #[arg(long, default_value_t = 0.4)]
    pub lambda_w: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub w_init: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub cg_tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub cg_max_iter: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
}

impl TrainArgs {
    pub fn hyper_params(&self) -> HyperParams {
        let mut hp = HyperParams {
            lambda_theta: self.lambda_theta,
            lambda_w: self.lambda_w,
            epochs: self.epochs,
            w_init: self.w_init,
            damping: self.damping,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            batch_size: self.batch_size,
            seed: self.seed,
        };
        if self.baseline == Some(Baseline::Erm) {
            hp.lambda_w = 0.0;
            hp.w_init = 1.0;
        }
        hp
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Coefficients written by `train`.
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Decision threshold on the linear score.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// Positive sampling ratio; thresholds corrected probabilities at 0.5.
    #[arg(long)]
    pub calibrate: Option<f64>,
    /// Also write the metrics to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub flipped: PathBuf,
}

pub fn run(cli: &Cli, stdout: &mut impl Write) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, stdout),
        Command::Train(args) => cmd_train(args, stdout),
        Command::Eval(args) => cmd_eval(args, stdout),
        Command::WeightsAudit(args) => cmd_weights_audit(args, stdout),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(stdout: &mut impl Write, lines: &[(&str, String)]) -> Result<()> {
    let text = render(lines);
    stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
        .map_err(io_error(Path::new("<stdout>")))
}

fn render(lines: &[(&str, String)]) -> String {
    lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_error(path))
}

pub fn cmd_synth(args: &SynthArgs, stdout: &mut impl Write) -> Result<()> {
    if args.split.len() != 3 {
        return Err(Error::invalid(format!(
            "--split needs three sizes (train,validation,test), got {}",
            args.split.len()
        )));
    }
    let total: usize = args.split.iter().sum();
    if total != args.n {
        return Err(Error::invalid(format!(
            "--split sizes sum to {total}, but --n is {}",
            args.n
        )));
    }
    let seed = args.seed;
    let blobs = make_gaussian_blobs(args.n, args.d, args.sep, args.pos_fraction, seed)?;
    let parts = split(
        &blobs,
        &SplitSpec::from_counts(&args.split, seed.wrapping_add(1))?,
    )?;
    let [clean_train, validation, test]: [_; 3] = parts
        .try_into()
        .map_err(|_| Error::invalid("split did not produce three parts"))?;
    let (train, flipped) = flip_labels(&clean_train, args.flips, seed.wrapping_add(2))?;
    let validation = match args.val_ratio {
        Some(ratio) => subsample_by_class(&validation, ratio, seed.wrapping_add(3))?,
        None => validation,
    };

    create_dir(&args.out)?;
    write_csv(args.out.join("train.csv"), &train)?;
    write_csv(args.out.join("validation.csv"), &validation)?;
    write_csv(args.out.join("test.csv"), &test)?;
    let flipped_path = args.out.join("flipped.csv");
    let body: String = std::iter::once("index".to_string())
        .chain(flipped.iter().map(usize::to_string))
        .map(|l| l + "\n")
        .collect();
    fs::write(&flipped_path, body).map_err(io_error(&flipped_path))?;

    emit(
        stdout,
        &[
            ("train", train.len().to_string()),
            ("validation", validation.len().to_string()),
            ("test", test.len().to_string()),
            ("flipped", flipped.len().to_string()),
        ],
    )
}

/// Rewrites coefficients fit on standardized features with an appended bias
/// as coefficients on raw features, bias last.
pub fn fold_standardization(theta: &ModelParams, stats: &StandardizerStats) -> Result<ModelParams> {
    let d = stats.mean.len();
    if theta.len() != d + 1 {
        return Err(Error::DimensionMismatch {
            expected: d + 1,
            found: theta.len(),
        });
    }
    let t = theta.as_slice();
    let mut raw: Vec<f64> = t[..d]
        .iter()
        .zip(&stats.scale)
        .map(|(c, s)| c / s)
        .collect();
    let shift: f64 = raw.iter().zip(&stats.mean).map(|(c, m)| c * m).sum();
    raw.push(t[d] - shift);
    ModelParams::new(raw)
}

pub fn cmd_train(args: &TrainArgs, stdout: &mut impl Write) -> Result<()> {
    let hp = args.hyper_params();
    hp.validate()?;
    let train_raw = load_csv(&args.train)?;
    let val_raw = load_csv(&args.validation)?;
    let stats = standardize_fit(&train_raw)?;
    let train = append_bias(&standardize_apply(&train_raw, &stats)?);
    let validation = append_bias(&standardize_apply(&val_raw, &stats)?);

    let report = bilevel::train(&train, &validation, &hp)?;
    let theta = fold_standardization(&report.final_theta, &stats)?;

    create_dir(&args.out)?;
    report.write_curves_csv(args.out.join("curves.csv"))?;
    report.write_weights_csv(args.out.join("weights.csv"))?;
    write_theta_csv(args.out.join("theta.csv"), &theta)?;

    let last = report.epochs.last().expect("at least one epoch");
    emit(
        stdout,
        &[
            ("epochs", last.epoch.to_string()),
            ("final_train_loss", last.train_loss.to_string()),
            ("final_val_surrogate", last.val_surrogate.to_string()),
            ("final_val_auc", last.val_auc.to_string()),
        ],
    )
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut impl Write) -> Result<()> {
    if let Some(beta) = args.calibrate {
        calibrate_probability(0.5, beta)?;
    }
    if !args.tau.is_finite() {
        return Err(Error::invalid(format!(
            "--tau must be finite (got {})",
            args.tau
        )));
    }
    let theta = read_theta_csv(&args.theta)?;
    let data = append_bias(&load_csv(&args.data)?);
    let s = scores(&theta, &data)?;
    let auc = exact_auc(&s, data.labels())?;
    let predicted = match args.calibrate {
        None => threshold_scores(&s, args.tau),
        Some(beta) => {
            let probs = data
                .iter()
                .map(|(x, _)| calibrate_probability(predict_prob(&theta, x)?, beta))
                .collect::<Result<Vec<f64>>>()?;
            threshold_scores(&probs, 0.5)
        }
    };
    let prf = precision_recall_f1(&predicted, data.labels())?;
    let accuracy = ClassificationCounts::from_predictions(&predicted, data.labels())?.accuracy();
    let lines = [
        ("auc", auc.to_string()),
        ("accuracy", accuracy.to_string()),
        ("precision", prf.precision.to_string()),
        ("recall", prf.recall.to_string()),
        ("f1", prf.f1.to_string()),
    ];
    if let Some(path) = &args.out {
        fs::write(path, render(&lines)).map_err(io_error(path))?;
    }
    emit(stdout, &lines)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

impl GroupSummary {
    /// Mean and median are NaN for an empty group.
    fn of(mut values: Vec<f64>) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                median: f64::NAN,
            };
        }
        values.sort_by(f64::total_cmp);
        let mid = count / 2;
        let median = if count % 2 == 1 {
            values[mid]
        } else {
            (values[mid - 1] + values[mid]) / 2.0
        };
        Self {
            count,
            mean: values.iter().sum::<f64>() / count as f64,
            median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightAudit {
    pub flipped: GroupSummary,
    pub clean: GroupSummary,
    /// Fraction of flipped instances with weight below 0.1.
    pub flipped_below: f64,
    /// Fraction of clean instances with weight above 0.9.
    pub clean_above: f64,
}

pub fn audit_weights(weights: &[f64], flipped: &[usize]) -> Result<WeightAudit> {
    let mut is_flipped = vec![false; weights.len()];
    for &i in flipped {
        let slot = is_flipped.get_mut(i).ok_or_else(|| {
            Error::invalid(format!(
                "flipped index {i} out of range for {} weights",
                weights.len()
            ))
        })?;
        *slot = true;
    }
    let (mut f, mut c) = (Vec::new(), Vec::new());
    for (&w, flipped) in weights.iter().zip(is_flipped) {
        if flipped { &mut f } else { &mut c }.push(w);
    }
    let fraction = |vals: &[f64], pred: fn(f64) -> bool| {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().filter(|&&v| pred(v)).count() as f64 / vals.len() as f64
        }
    };
    Ok(WeightAudit {
        flipped_below: fraction(&f, |w| w < 0.1),
        clean_above: fraction(&c, |w| w > 0.9),
        flipped: GroupSummary::of(f),
        clean: GroupSummary::of(c),
    })
}

pub fn cmd_weights_audit(args: &AuditArgs, stdout: &mut impl Write) -> Result<()> {
    let rows = read_index_value_csv(&args.weights, "weight")?;
    for (expected, (index, _)) in rows.iter().enumerate() {
        if *index != expected {
            return Err(Error::invalid(format!(
                "{}: weight index {index} out of order (expected {expected})",
                args.weights.display()
            )));
        }
    }
    let weights: Vec<f64> = rows.into_iter().map(|(_, w)| w).collect();
    let flipped = read_index_csv(&args.flipped)?;
    let audit = audit_weights(&weights, &flipped)?;
    emit(
        stdout,
        &[
            ("flipped_count", audit.flipped.count.to_string()),
            ("clean_count", audit.clean.count.to_string()),
            ("flipped_mean", audit.flipped.mean.to_string()),
            ("clean_mean", audit.clean.mean.to_string()),
            ("flipped_median", audit.flipped.median.to_string()),
            ("clean_median", audit.clean.median.to_string()),
            ("flipped_below_0.1", audit.flipped_below.to_string()),
            ("clean_above_0.9", audit.clean_above.to_string()),
        ],
    )
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(io_error(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::RaggedRow {
            path: path.to_path_buf(),
            line: pos.as_ref().map_or(0, |p| p.line()),
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => Error::Csv {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        },
    }
}

fn column(path: &Path, header: &csv::StringRecord, name: &'static str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })
}

fn parse_cell<T: std::str::FromStr>(
    path: &Path,
    record: &csv::StringRecord,
    header: &csv::StringRecord,
    j: usize,
    expected: &'static str,
) -> Result<T> {
    let cell = &record[j];
    cell.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: record.position().map_or(0, |p| p.line()),
        column: header[j].to_string(),
        value: cell.to_string(),
        expected,
    })
}

/// Reads `index,<value_col>` rows in file order.
pub(crate) fn read_index_value_csv(
    path: &Path,
    value_col: &'static str,
) -> Result<Vec<(usize, f64)>> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(csv_error(path))?.clone();
    let ii = column(path, &header, "index")?;
    let vi = column(path, &header, value_col)?;
    reader
        .records()
        .map(|record| {
            let record = record.map_err(csv_error(path))?;
            let index = parse_cell(path, &record, &header, ii, "an index")?;
            let value: f64 = parse_cell(path, &record, &header, vi, "a real")?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{}: {value_col} {value}",
                    path.display()
                )));
            }
            Ok((index, value))
        })
        .collect()
}

/// Reads a single `index` column.
pub(crate) fn read_index_csv(path: &Path) -> Result<Vec<usize>> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(csv_error(path))?.clone();
    let ii = column(path, &header, "index")?;
    reader
        .records()
        .map(|record| {
            let record = record.map_err(csv_error(path))?;
            parse_cell(path, &record, &header, ii, "an index")
        })
        .collect()
}
