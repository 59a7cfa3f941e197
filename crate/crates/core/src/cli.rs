//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::audit;
use crate::dataset::{generate_synthetic, load_dataset, save_dataset, split_by_video, Dataset, SplitSpec, SyntheticConfig};
use crate::evaluator::{
    self, ensemble_predict, exact_baseline, fit_linear_regression, random_baseline, read_predictions, score_predictions,
    select_models, write_predictions, EnsembleWeights, EvalReport, Predictions, VideoPrediction, SELECTION_THRESHOLD,
};
use crate::trainer::{self, Checkpoint, TrainConfig, TrainOutcome};

#[derive(Parser, Debug)]
#[command(name = "vidsum", version, about = "Segment importance regression for video summarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with planted importance
    Synth(SynthArgs),
    /// Load a dataset manifest and report its dimensions
    Validate(DataArgs),
    /// Supervised importance regression
    Train(TrainArgs),
    /// Odd-position pretraining (shuffle ratio defaults to 0.15)
    Pretrain(TrainArgs),
    /// Joint regression and odd-position training
    TrainMultitask(MultitaskArgs),
    /// Score every segment of a dataset with a checkpoint
    Predict(PredictArgs),
    /// Summary score of a prediction file against ground truth
    Eval(EvalArgs),
    /// Summary score of random submissions
    Baseline(BaselineArgs),
    /// Fit linear stacking weights over several prediction files
    EnsembleFit(EnsembleFitArgs),
    /// Combine prediction files with fitted weights
    EnsembleApply(EnsembleApplyArgs),
    /// Finite-difference audit of every op and the full network
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SyntheticConfig::default().num_videos)]
    pub videos: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = SyntheticConfig::default().t_n_min)]
    pub t_n_min: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().t_n_max)]
    pub t_n_max: usize,
    /// Frames per segment
    #[arg(long, default_value_t = SyntheticConfig::default().t_g)]
    pub t_g: usize,
    /// Frame feature width
    #[arg(long, default_value_t = SyntheticConfig::default().fd)]
    pub fd: usize,
    /// Segment feature width
    #[arg(long, default_value_t = SyntheticConfig::default().wd)]
    pub wd: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().noise_std)]
    pub noise_std: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().temporal_correlation)]
    pub temporal_correlation: f64,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
}

/// Training settings. Each flag overrides the config file, which overrides
/// the built-in default shown.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigFlags {
    /// Flat JSON file whose keys mirror the flags below (underscored)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sets sfd, vd and d_h together
    #[arg(long)]
    pub dim: Option<usize>,
    /// Segment embedding width [default: 256]
    #[arg(long)]
    pub sfd: Option<usize>,
    /// Video context width [default: 256]
    #[arg(long)]
    pub vd: Option<usize>,
    /// GRU hidden width per direction [default: 256]
    #[arg(long)]
    pub d_h: Option<usize>,
    /// Stacked bidirectional GRU layers [default: 1]
    #[arg(long)]
    pub gru_layers: Option<usize>,
    /// Temporal convolution width [default: 3]
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Temporal convolution stride [default: 1]
    #[arg(long)]
    pub conv_stride: Option<usize>,
    /// Bottleneck branch in the segment fusion [default: true]
    #[arg(long)]
    pub bottleneck: Option<bool>,
    /// Dropout after the segment fusion [default: 0]
    #[arg(long)]
    pub dropout_p: Option<f64>,
    /// Shuffle ratio of the odd-position task [default: 0.02]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the odd-position loss [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Feature portions averaged into the context, 1 = off [default: 1]
    #[arg(long)]
    pub portions: Option<usize>,
    /// Portion averaging also at prediction time [default: false]
    #[arg(long)]
    pub augment_at_inference: Option<bool>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// First-moment decay [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Second-moment decay [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Optimizer epsilon [default: 1e-8]
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Passes over the training set [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for every random choice of the run [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Segments per summary [default: 6]
    #[arg(long)]
    pub n_s: Option<usize>,
    /// Share of videos used for training when --val is absent [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Divide targets by the largest training importance [default: true]
    #[arg(long)]
    pub normalize_targets: Option<bool>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Separate validation manifest; otherwise --data is split by video
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output directory for checkpoint.bin, best.bin, history.csv, config.json
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigFlags,
}

#[derive(Args, Debug)]
pub struct MultitaskArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Pretrained checkpoint to start from
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Prediction CSV
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = evaluator::DEFAULT_N_S)]
    pub n_s: usize,
    /// Report JSON to write; printed to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = evaluator::DEFAULT_N_S)]
    pub n_s: usize,
    #[arg(long, default_value_t = evaluator::DEFAULT_BASELINE_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Closed-form expectation instead of sampling
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnsembleFitArgs {
    /// One prediction CSV per model
    #[arg(long, num_args = 1.., required = true)]
    pub predictions: Vec<PathBuf>,
    /// Dataset supplying the targets
    #[arg(long)]
    pub data: PathBuf,
    /// Fit raw importances instead of importances divided by the largest one
    #[arg(long)]
    pub raw_targets: bool,
    /// Models below this fraction of the largest coefficient are reported as dropped
    #[arg(long, default_value_t = SELECTION_THRESHOLD)]
    pub threshold: f64,
    /// Weights JSON to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleApplyArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub weights: PathBuf,
    /// Combined prediction CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// First seed audited
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long, default_value_t = audit::DEFAULT_EPS)]
    pub eps: f64,
    /// Largest relative error accepted
    #[arg(long, default_value_t = audit::TOLERANCE)]
    pub tolerance: f64,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn to_value(cfg: &TrainConfig) -> anyhow::Result<Map<String, Value>> {
    match serde_json::to_value(cfg)? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("a struct serializes to an object"),
    }
}

/// Defaults, then the config file, then flags; the result is validated.
pub fn parse_config(flags: &ConfigFlags, defaults: TrainConfig) -> anyhow::Result<TrainConfig> {
    let mut merged = to_value(&defaults)?;
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(file) = file else {
            bail!("config {} is not a JSON object", path.display());
        };
        merged.extend(file);
    }
    let mut cfg: TrainConfig =
        serde_json::from_value(Value::Object(merged)).context("config keys must mirror the training settings")?;
    if let Some(d) = flags.dim {
        cfg = cfg.with_dim(d);
    }
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { cfg.$f = v; } )* };
    }
    over!(
        sfd, vd, d_h, gru_layers, kernel_size, conv_stride, bottleneck, dropout_p, alpha, beta, portions,
        augment_at_inference, lr, beta1, beta2, adam_eps, epochs, seed, n_s, train_fraction, normalize_targets
    );
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path) -> anyhow::Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn datasets(args: &TrainArgs, cfg: &TrainConfig) -> anyhow::Result<(Dataset, Dataset)> {
    let data = load(&args.data)?;
    match &args.val {
        Some(v) => Ok((data, load(v)?)),
        None => Ok(split_by_video(
            &data,
            &SplitSpec {
                train_fraction: cfg.train_fraction,
                seed: cfg.seed,
            },
        )?),
    }
}

fn write_outcome(out: &Path, cfg: &TrainConfig, outcome: &TrainOutcome) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    outcome.last.save(out.join("checkpoint.bin"))?;
    if let Some(best) = &outcome.best {
        best.save(out.join("best.bin"))?;
    }
    outcome.history.write_csv(out.join("history.csv"))?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    if let Some(r) = outcome.history.last() {
        let score = r.val_summary_score.map_or(String::new(), |s| format!(", val summary score {s:.4}"));
        let acc = r.selfsup_acc.map_or(String::new(), |a| format!(", odd-position accuracy {a:.4}"));
        println!("epoch {}: train loss {:.6}{score}{acc}", r.epoch, r.train_loss);
    }
    Ok(())
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_all(paths: &[PathBuf]) -> anyhow::Result<Vec<Predictions>> {
    paths
        .iter()
        .map(|p| read_predictions(p).with_context(|| format!("reading predictions {}", p.display())))
        .collect()
}

/// Per-video score matrices `[model][segment]`, in the first file's video
/// order; every file must cover the same videos.
fn stack(preds: &[Predictions]) -> anyhow::Result<Vec<(String, Vec<Vec<f64>>)>> {
    let first = &preds[0];
    first
        .videos
        .iter()
        .map(|v| {
            let rows = preds
                .iter()
                .enumerate()
                .map(|(m, p)| {
                    let other = p
                        .get(&v.video_id)
                        .with_context(|| format!("model {m} has no predictions for `{}`", v.video_id))?;
                    if other.scores.len() != v.scores.len() {
                        bail!("model {m} has {} scores for `{}`, expected {}", other.scores.len(), v.video_id, v.scores.len());
                    }
                    Ok(other.scores.clone())
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Ok((v.video_id.clone(), rows))
        })
        .collect()
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Synth(a) => {
            let cfg = SyntheticConfig {
                num_videos: a.videos,
                t_n_min: a.t_n_min,
                t_n_max: a.t_n_max,
                t_g: a.t_g,
                fd: a.fd,
                wd: a.wd,
                noise_std: a.noise_std,
                temporal_correlation: a.temporal_correlation,
                seed: a.seed,
            };
            let (ds, generator) = generate_synthetic(&cfg)?;
            let manifest = save_dataset(&ds, &a.out)?;
            fs::write(a.out.join("generator.json"), serde_json::to_string_pretty(&generator)? + "\n")?;
            println!("{}", manifest.display());
        }
        Command::Validate(a) => {
            let ds = load(&a.data)?;
            let lens: Vec<usize> = ds.records().iter().map(|r| r.num_segments()).collect();
            write_json(
                None,
                &serde_json::json!({
                    "videos": ds.len(),
                    "dims": ds.dims(),
                    "segments": lens.iter().sum::<usize>(),
                    "min_segments": lens.iter().min(),
                    "max_segments": lens.iter().max(),
                    "max_importance": ds.max_importance(),
                }),
            )?;
        }
        Command::Train(a) => {
            let cfg = parse_config(&a.cfg, TrainConfig::default())?;
            let (tr, va) = datasets(&a, &cfg)?;
            write_outcome(&a.out, &cfg, &trainer::train_supervised(&cfg, &tr, &va)?)?;
        }
        Command::Pretrain(a) => {
            let defaults = TrainConfig {
                alpha: 0.15,
                ..TrainConfig::default()
            };
            let cfg = parse_config(&a.cfg, defaults)?;
            let (tr, va) = datasets(&a, &cfg)?;
            write_outcome(&a.out, &cfg, &trainer::pretrain_selfsup(&cfg, &tr, &va)?)?;
        }
        Command::TrainMultitask(a) => {
            let cfg = parse_config(&a.train.cfg, TrainConfig::default())?;
            let (tr, va) = datasets(&a.train, &cfg)?;
            let init = match &a.init {
                Some(p) => Some(Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
                None => None,
            };
            write_outcome(&a.train.out, &cfg, &trainer::train_multitask(&cfg, init.as_ref(), &tr, &va)?)?;
        }
        Command::Predict(a) => {
            let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
            let ds = load(&a.data)?;
            write_predictions(&trainer::predict_dataset(&ck, &ds)?, &a.out)?;
        }
        Command::Eval(a) => {
            let ds = load(&a.data)?;
            let preds = read_all(std::slice::from_ref(&a.predictions))?.remove(0);
            let scores = preds.aligned_to(&ds)?;
            let report = score_predictions(&scores, &evaluator::ground_truth(&ds), a.n_s)?;
            let report = EvalReport::new(&ds, &report);
            if a.out.is_some() {
                println!("mean summary score {:.6} over {} videos", report.mean, report.n);
            }
            write_json(a.out.as_deref(), &report)?;
        }
        Command::Baseline(a) => {
            let ds = load(&a.data)?;
            let report = if a.exact {
                exact_baseline(&ds, a.n_s)?
            } else {
                random_baseline(&ds, a.n_s, a.trials, a.seed)?
            };
            write_json(a.out.as_deref(), &report)?;
        }
        Command::EnsembleFit(a) => {
            let ds = load(&a.data)?;
            let preds = read_all(&a.predictions)?;
            let divisor = if a.raw_targets || ds.max_importance() <= 0.0 {
                1.0
            } else {
                f64::from(ds.max_importance())
            };
            let m = preds.len();
            let mut columns = vec![Vec::new(); m];
            let mut targets = Vec::new();
            for rec in ds.records() {
                for (j, p) in preds.iter().enumerate() {
                    let v = p.get(&rec.video_id).with_context(|| {
                        format!("{} has no predictions for `{}`", a.predictions[j].display(), rec.video_id)
                    })?;
                    if v.scores.len() != rec.num_segments() {
                        bail!("{}: wrong segment count for `{}`", a.predictions[j].display(), rec.video_id);
                    }
                    columns[j].extend_from_slice(&v.scores);
                }
                targets.extend(rec.importance.data().iter().map(|&x| f64::from(x) / divisor));
            }
            let weights = fit_linear_regression(&columns, &targets)?;
            let kept = select_models(&weights, a.threshold);
            println!("kept models {kept:?} of {m}");
            write_json(Some(&a.out), &weights)?;
        }
        Command::EnsembleApply(a) => {
            let preds = read_all(&a.predictions)?;
            let text = fs::read_to_string(&a.weights).with_context(|| format!("reading {}", a.weights.display()))?;
            let weights: EnsembleWeights = serde_json::from_str(&text)?;
            let videos = stack(&preds)?
                .into_iter()
                .map(|(video_id, rows)| Ok(VideoPrediction { video_id, scores: ensemble_predict(&rows, &weights)? }))
                .collect::<anyhow::Result<Vec<_>>>()?;
            write_predictions(&Predictions { videos }, &a.out)?;
        }
        Command::Gradcheck(a) => {
            let mut worst = 0.0f64;
            for seed in a.seed..a.seed.saturating_add(a.count.max(1)) {
                let entries = audit::audit_all(seed, a.eps)?;
                for e in &entries {
                    println!("seed {seed} {:<20} {:.3e}", e.name, e.report.max_rel_error);
                }
                worst = worst.max(audit::max_error(&entries));
            }
            println!("max relative error {worst:.3e}");
            if !(worst <= a.tolerance) {
                bail!("max relative error {worst:.3e} exceeds {:.1e}", a.tolerance);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn flags(args: &[&str]) -> ConfigFlags {
        let mut argv = vec!["vidsum", "train", "--data", "d", "--out", "o"];
        argv.extend_from_slice(args);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(t) => t.cfg,
            _ => unreachable!(),
        }
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config(&ConfigFlags::default(), TrainConfig::default()).unwrap();
        assert_eq!(cfg.sfd, 256);
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"beta": 1.0, "epochs": 3}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse_config(&flags(&["--config", p, "--beta", "0"]), TrainConfig::default()).unwrap();
        assert_eq!((cfg.beta, cfg.epochs), (0.0, 3));
        let err = parse_config(&flags(&["--alpha", "1.5"]), TrainConfig::default()).unwrap_err();
        assert!(format!("{err:#}").contains("alpha"));
        fs::write(&path, r#"{"alpha": 0.3}"#).unwrap();
        let pre = TrainConfig { alpha: 0.15, ..TrainConfig::default() };
        assert_eq!(parse_config(&flags(&["--config", p]), pre.clone()).unwrap().alpha, 0.3);
        assert_eq!(parse_config(&flags(&[]), pre).unwrap().alpha, 0.15);
    }

    #[test]
    fn help_documents_every_training_default() {
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
        let d = TrainConfig::default();
        for (flag, value) in [
            ("--sfd", d.sfd.to_string()),
            ("--vd", d.vd.to_string()),
            ("--d-h", d.d_h.to_string()),
            ("--gru-layers", d.gru_layers.to_string()),
            ("--kernel-size", d.kernel_size.to_string()),
            ("--conv-stride", d.conv_stride.to_string()),
            ("--bottleneck", d.bottleneck.to_string()),
            ("--dropout-p", d.dropout_p.to_string()),
            ("--alpha", d.alpha.to_string()),
            ("--beta", d.beta.to_string()),
            ("--portions", d.portions.to_string()),
            ("--augment-at-inference", d.augment_at_inference.to_string()),
            ("--lr", d.lr.to_string()),
            ("--beta1", d.beta1.to_string()),
            ("--beta2", d.beta2.to_string()),
            ("--adam-eps", format!("{:e}", d.adam_eps)),
            ("--epochs", d.epochs.to_string()),
            ("--seed", d.seed.to_string()),
            ("--n-s", d.n_s.to_string()),
            ("--train-fraction", d.train_fraction.to_string()),
            ("--normalize-targets", d.normalize_targets.to_string()),
        ] {
            let at = help.find(&format!("{flag} ")).unwrap_or_else(|| panic!("{flag} missing"));
            let rest = &help[at..];
            let end = rest.find("\n  -").unwrap_or(rest.len());
            assert!(rest[..end].contains(&format!("[default: {value}]")), "{flag}: {}", &rest[..end]);
        }
    }

    #[test]
    fn unknown_subcommand_exits_two() {
        assert_eq!(run(["vidsum", "frobnicate"]), 2);
        assert_eq!(run(["vidsum", "train", "--help"]), 0);
    }
}
