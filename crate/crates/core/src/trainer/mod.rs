//! Supervised training, self-supervised pretraining and joint training.
//! One optimizer step per video; every random choice comes from a stream
//! keyed by the run seed, the epoch and the video.

mod checkpoint;
mod config;
mod history;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use history::{EpochRecord, History};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::{adam_step, AdamState, GradStore, ParamSet, Tape, Tensor, Var};
use crate::dataset::{Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::evaluator::{score_predictions, Predictions, VideoPrediction};
use crate::model::{self, Architecture, Dropout};
use crate::selfsup::{self, SelfSupCounts};
use crate::{rng, videonet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Importance regression only.
    Supervised,
    /// Odd-position detection only; importance labels are ignored.
    Pretrain,
    /// Regression plus `β ×` odd-position detection.
    Multitask,
}

impl Regime {
    fn uses_targets(self) -> bool {
        self != Regime::Pretrain
    }

    fn uses_shuffle(self, cfg: &TrainConfig) -> bool {
        match self {
            Regime::Supervised => false,
            Regime::Pretrain => true,
            Regime::Multitask => cfg.beta > 0.0,
        }
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Checkpoint of the best validation epoch, when there was validation.
    pub best: Option<Checkpoint>,
    pub history: History,
}

pub fn train_supervised(cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    run(Regime::Supervised, cfg, None, train, val)
}

pub fn pretrain_selfsup(cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    run(Regime::Pretrain, cfg, None, train, val)
}

/// Joint training, optionally starting from a pretrained checkpoint's
/// parameters (its optimizer state is not carried over).
pub fn train_multitask(
    cfg: &TrainConfig,
    init: Option<&Checkpoint>,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome> {
    run(Regime::Multitask, cfg, init, train, val)
}

fn target_divisor(cfg: &TrainConfig, train: &Dataset) -> f32 {
    let m = train.max_importance();
    if cfg.normalize_targets && m > 0.0 {
        m
    } else {
        1.0
    }
}

fn targets(rec: &VideoRecord, divisor: f32) -> Tensor<f32> {
    rec.importance.map(|a| a / divisor)
}

fn check_inputs(cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<Architecture> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if !val.is_empty() && val.dims() != train.dims() {
        return Err(Error::Invalid(format!(
            "validation dims {:?} differ from training dims {:?}",
            val.dims(),
            train.dims()
        )));
    }
    let arch = cfg.architecture(train.dims());
    arch.validate()?;
    Ok(arch)
}

/// Runs one video forward and returns the loss node.
struct StepSeeds {
    dropout: u64,
    portions: u64,
    shuffle: u64,
}

fn video_loss(
    tape: &mut Tape<f32>,
    params: &ParamSet<f32>,
    arch: &Architecture,
    cfg: &TrainConfig,
    regime: Regime,
    rec: &VideoRecord,
    divisor: f32,
    seeds: &StepSeeds,
) -> Result<Var> {
    let dropout = Some(Dropout {
        p: cfg.dropout_p,
        seed: seeds.dropout,
    });
    let segments = model::segment_embeddings(tape, params, arch, rec, dropout)?;
    let l_self = if regime.uses_shuffle(cfg) {
        let plan = selfsup::plan_shuffle(segments.len(), cfg.alpha, seeds.shuffle)?;
        let shuffled: Vec<Var> = plan.source_order(segments.len()).iter().map(|&i| segments[i]).collect();
        let enc = videonet::encode_video(tape, params, arch, &shuffled)?;
        Some(selfsup::selfsup_loss(tape, params, enc.per_step, &plan.labels(segments.len()))?)
    } else {
        None
    };
    if !regime.uses_targets() {
        return l_self.ok_or_else(|| Error::Invalid("pretraining without a shuffle task".into()));
    }
    let fwd = model::scores_from_segments(tape, params, arch, segments, cfg.portions, seeds.portions)?;
    let l_sup = tape.mse(fwd.scores, &targets(rec, divisor))?;
    match l_self {
        Some(l) => selfsup::multitask_loss(tape, l_sup, l, cfg.beta as f32),
        None => Ok(l_sup),
    }
}

/// Validation measurements for one video.
#[derive(Default)]
struct VideoEval {
    sup_loss: f64,
    scores: Vec<f64>,
    self_loss: f64,
    counts: SelfSupCounts,
}

fn evaluate_video(
    params: &ParamSet<f32>,
    arch: &Architecture,
    cfg: &TrainConfig,
    regime: Regime,
    rec: &VideoRecord,
    idx: usize,
    divisor: f32,
) -> Result<VideoEval> {
    let mut out = VideoEval::default();
    if regime.uses_targets() {
        let seed = rng::derive_seed(cfg.seed, "portions-eval", &[idx as u64]);
        let scores = model::predict_scores(params, arch, rec, cfg.inference_portions(), seed)?;
        let t = targets(rec, divisor);
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::vector(scores.clone()));
        let l = tape.mse(pred, &t)?;
        out.sup_loss = f64::from(tape.value(l).item());
        out.scores = scores.into_iter().map(f64::from).collect();
    }
    if regime.uses_shuffle(cfg) {
        let mut tape = Tape::new();
        let segments = model::segment_embeddings(&mut tape, params, arch, rec, None)?;
        // the same shuffle every epoch, so epochs are comparable
        let plan = selfsup::plan_shuffle(segments.len(), cfg.alpha, rng::derive_seed(cfg.seed, "val-shuffle", &[idx as u64]))?;
        let shuffled: Vec<Var> = plan.source_order(segments.len()).iter().map(|&i| segments[i]).collect();
        let enc = videonet::encode_video(&mut tape, params, arch, &shuffled)?;
        let labels = plan.labels(segments.len());
        let logits = selfsup::selfsup_logits(&mut tape, params, enc.per_step)?;
        out.counts = SelfSupCounts::from_logits(tape.value(logits).data(), &labels)?;
        let l = tape.bce(logits, &labels.as_tensor())?;
        out.self_loss = f64::from(tape.value(l).item());
    }
    Ok(out)
}

struct ValSummary {
    sup_loss: f64,
    summary: Option<f64>,
    self_loss: f64,
    counts: SelfSupCounts,
}

fn evaluate_set(
    params: &ParamSet<f32>,
    arch: &Architecture,
    cfg: &TrainConfig,
    regime: Regime,
    ds: &Dataset,
    divisor: f32,
) -> Result<ValSummary> {
    let evals = ds
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, rec)| evaluate_video(params, arch, cfg, regime, rec, i, divisor))
        .collect::<Result<Vec<_>>>()?;
    let n = evals.len() as f64;
    let mut counts = SelfSupCounts::default();
    for e in &evals {
        counts.add(&e.counts);
    }
    let summary = if regime.uses_targets() {
        let scores: Vec<Vec<f64>> = evals.iter().map(|e| e.scores.clone()).collect();
        Some(score_predictions(&scores, &crate::evaluator::ground_truth(ds), cfg.n_s)?.mean)
    } else {
        None
    };
    Ok(ValSummary {
        sup_loss: evals.iter().map(|e| e.sup_loss).sum::<f64>() / n,
        summary,
        self_loss: evals.iter().map(|e| e.self_loss).sum::<f64>() / n,
        counts,
    })
}

fn ensure_finite(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what()))
    }
}

fn run(
    regime: Regime,
    cfg: &TrainConfig,
    init: Option<&Checkpoint>,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome> {
    let arch = check_inputs(cfg, train, val)?;
    let mut params = match init {
        Some(ck) => {
            if ck.architecture != arch {
                return Err(Error::Invalid(format!(
                    "checkpoint architecture {:?} is incompatible with {:?}",
                    ck.architecture, arch
                )));
            }
            model::check_params(&arch, &ck.params)?;
            ck.params.clone()
        }
        None => model::init_params::<f32>(&arch, cfg.seed)?,
    };
    let divisor = target_divisor(cfg, train);
    let hyper = cfg.adam();
    let mut adam = AdamState::new(&params);
    let snapshot = |params: &ParamSet<f32>, adam: &AdamState<f32>, epoch: usize| Checkpoint {
        params: params.clone(),
        adam: adam.clone(),
        config: cfg.clone(),
        architecture: arch,
        divisor,
        epoch,
    };

    let mut history = History::default();
    if cfg.epochs > 0 {
        let initial = evaluate_set(&params, &arch, cfg, regime, train, divisor)?;
        let loss = if regime.uses_targets() { initial.sup_loss } else { initial.self_loss };
        history.initial_train_loss = Some(ensure_finite(loss, || "initial training loss".into())?);
    }
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "order", &[e]));
        let mut total = 0.0f64;
        for &vi in &order {
            let rec = &train.records()[vi];
            let key = [e, vi as u64];
            let seeds = StepSeeds {
                dropout: rng::derive_seed(cfg.seed, "dropout", &key),
                portions: rng::derive_seed(cfg.seed, "portions", &key),
                shuffle: rng::derive_seed(cfg.seed, "shuffle", &key),
            };
            let mut tape = Tape::new();
            let loss = video_loss(&mut tape, &params, &arch, cfg, regime, rec, divisor, &seeds)?;
            let value = f64::from(tape.value(loss).item());
            ensure_finite(value, || format!("training loss at epoch {epoch}, video `{}`", rec.video_id))?;
            let grads = tape.backward(loss)?;
            let mut store = GradStore::zeros_like(&params);
            store.merge(&tape.param_grads(&grads)?, 1.0)?;
            if !store.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient at epoch {epoch}, video `{}`",
                    rec.video_id
                )));
            }
            adam_step(&mut params, &store, &mut adam, &hyper)?;
            total += value;
        }
        let train_loss = total / train.len() as f64;

        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_summary_score: None,
            selfsup_acc: None,
            selfsup_recall: None,
        };
        if !val.is_empty() {
            let v = evaluate_set(&params, &arch, cfg, regime, val, divisor)?;
            record.val_loss = Some(if regime.uses_targets() { v.sup_loss } else { v.self_loss });
            record.val_summary_score = v.summary;
            if regime.uses_shuffle(cfg) {
                let m = v.counts.metrics();
                record.selfsup_acc = Some(m.accuracy);
                record.selfsup_recall = Some(m.recall_on_odd);
            }
            // higher is better for the summary score, lower for the loss
            let merit = match record.val_summary_score {
                Some(s) => s,
                None => -record.val_loss.unwrap_or(f64::INFINITY),
            };
            ensure_finite(merit, || format!("validation at epoch {epoch}"))?;
            if best.as_ref().is_none_or(|(m, _)| merit > *m) {
                best = Some((merit, snapshot(&params, &adam, epoch)));
            }
        }
        history.records.push(record);
    }

    Ok(TrainOutcome {
        last: snapshot(&params, &adam, cfg.epochs),
        best: best.map(|(_, ck)| ck),
        history,
    })
}

/// Scores every video of `ds` with a checkpoint, in model units.
pub fn predict_dataset(ck: &Checkpoint, ds: &Dataset) -> Result<Predictions> {
    if ds.dims() != ck.architecture.dims && !ds.is_empty() {
        return Err(Error::Invalid(format!(
            "dataset dims {:?} differ from the checkpoint's {:?}",
            ds.dims(),
            ck.architecture.dims
        )));
    }
    let videos = ds
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let seed = rng::derive_seed(ck.config.seed, "portions-eval", &[i as u64]);
            let scores = model::predict_scores(&ck.params, &ck.architecture, rec, ck.config.inference_portions(), seed)?;
            Ok(VideoPrediction {
                video_id: rec.video_id.clone(),
                scores: scores.into_iter().map(f64::from).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Predictions { videos })
}

/// Summary score of a checkpoint on `ds` (shuffle off).
pub fn evaluate(ck: &Checkpoint, ds: &Dataset) -> Result<crate::evaluator::SummaryScoreReport> {
    let preds = predict_dataset(ck, ds)?;
    let scores = preds.aligned_to(ds)?;
    score_predictions(&scores, &crate::evaluator::ground_truth(ds), ck.config.n_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, split_by_video, SplitSpec, SyntheticConfig};

    fn small() -> (Dataset, Dataset) {
        let (ds, _) = generate_synthetic(&SyntheticConfig {
            num_videos: 8,
            t_n_min: 6,
            t_n_max: 8,
            t_g: 6,
            fd: 4,
            wd: 3,
            ..SyntheticConfig::default()
        })
        .unwrap();
        split_by_video(&ds, &SplitSpec { train_fraction: 0.75, seed: 0 }).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            n_s: 3,
            ..TrainConfig::default()
        }
        .with_dim(5)
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let (tr, va) = small();
        let c = TrainConfig { epochs: 0, ..cfg() };
        let out = train_supervised(&c, &tr, &va).unwrap();
        let init = model::init_params::<f32>(&c.architecture(tr.dims()), c.seed).unwrap();
        assert_eq!(out.last.params, init);
        assert!(out.history.records.is_empty());
        assert!(out.best.is_none());
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (tr, va) = small();
        let c = TrainConfig { epochs: 1, lr: 0.0, ..cfg() };
        let out = train_supervised(&c, &tr, &va).unwrap();
        let init = model::init_params::<f32>(&c.architecture(tr.dims()), c.seed).unwrap();
        assert_eq!(out.last.params, init);
        assert_eq!(out.history.records.len(), 1);
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let (tr, va) = small();
        let c = TrainConfig { dropout_p: 0.2, portions: 2, ..cfg() };
        let a = train_multitask(&c, None, &tr, &va).unwrap();
        let b = train_multitask(&c, None, &tr, &va).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.last.to_bytes().unwrap(), b.last.to_bytes().unwrap());
        let r = a.history.last().unwrap();
        assert!(r.val_summary_score.is_some() && r.selfsup_acc.is_some());
    }

    #[test]
    fn zero_beta_reduces_to_supervised() {
        let (tr, va) = small();
        let c = TrainConfig { beta: 0.0, ..cfg() };
        let s = train_supervised(&c, &tr, &va).unwrap();
        let m = train_multitask(&c, None, &tr, &va).unwrap();
        assert_eq!(s.history, m.history);
        assert_eq!(s.last.to_bytes().unwrap(), m.last.to_bytes().unwrap());
    }

    #[test]
    fn pretrained_checkpoint_chains_into_joint_training() {
        let (tr, va) = small();
        let c = TrainConfig { alpha: 0.15, ..cfg() };
        let pre = pretrain_selfsup(&c, &tr, &va).unwrap();
        let rec = pre.history.last().unwrap();
        assert!(rec.val_summary_score.is_none() && rec.selfsup_recall.is_some());
        let reloaded = Checkpoint::from_bytes(&pre.last.to_bytes().unwrap()).unwrap();
        assert_eq!(reloaded.to_bytes().unwrap(), pre.last.to_bytes().unwrap());
        train_multitask(&c, Some(&reloaded), &tr, &va).unwrap();
        let wider = TrainConfig { d_h: 6, ..c };
        assert!(train_multitask(&wider, Some(&reloaded), &tr, &va).is_err());
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let (tr, va) = small();
        let c = TrainConfig { lr: 1e30, epochs: 3, ..cfg() };
        let err = train_supervised(&c, &tr, &va).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn mismatched_validation_dims_rejected() {
        let (tr, _) = small();
        let (other, _) = generate_synthetic(&SyntheticConfig {
            num_videos: 2,
            t_n_min: 6,
            t_n_max: 6,
            t_g: 6,
            fd: 5,
            wd: 3,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert!(train_supervised(&cfg(), &tr, &other).is_err());
    }
}
