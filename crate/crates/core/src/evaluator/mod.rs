//! Top-k selection, the summary score, the random baseline and
//! linear-regression ensembling.

mod ensemble;
mod predictions;

pub use ensemble::{ensemble_predict, fit_linear_regression, select_models, EnsembleWeights, SELECTION_THRESHOLD};
pub use predictions::{
    read_predictions, read_predictions_from, write_predictions, write_predictions_to, EvalReport, Predictions,
    VideoPrediction, VideoRatio,
};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Default number of segments per summary.
pub const DEFAULT_N_S: usize = 6;
pub const DEFAULT_BASELINE_TRIALS: usize = 1000;

/// Indices of the `k` largest scores, ascending. Equal scores prefer the
/// lower index; `k` is clamped to the number of scores.
pub fn top_k_summary<T: Copy + Into<f64>>(scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y): (f64, f64) = (scores[a].into(), scores[b].into());
        y.total_cmp(&x).then(a.cmp(&b))
    });
    order.truncate(k.min(scores.len()));
    order.sort_unstable();
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryScoreReport {
    pub per_video: Vec<f64>,
    pub mean: f64,
    pub n: usize,
    pub n_s: usize,
}

fn check_submission(sub: &[usize], t_n: usize, n_s: usize, video: usize) -> Result<Vec<usize>> {
    if sub.len() != n_s {
        return Err(Error::Invalid(format!(
            "video {video}: submission has {} segments, expected {n_s}",
            sub.len()
        )));
    }
    let mut sorted = sub.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid(format!("video {video}: duplicate segment index in submission")));
    }
    if let Some(&bad) = sorted.last().filter(|&&i| i >= t_n) {
        return Err(Error::Invalid(format!(
            "video {video}: segment index {bad} out of range for {t_n} segments"
        )));
    }
    Ok(sorted)
}

fn check_lengths(ground_truth: &[Vec<f64>], n_s: usize) -> Result<()> {
    if n_s == 0 {
        return Err(Error::range("n_s", n_s, ">= 1"));
    }
    for (v, gt) in ground_truth.iter().enumerate() {
        if gt.len() < n_s {
            return Err(Error::Invalid(format!(
                "video {v} has {} segments, fewer than N_s = {n_s}",
                gt.len()
            )));
        }
        if gt.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("ground-truth importance of video {v}")));
        }
    }
    Ok(())
}

/// Sum of the ground-truth top-`n_s` importances.
fn gt_sum(gt: &[f64], n_s: usize) -> f64 {
    top_k_summary(gt, n_s).iter().map(|&i| gt[i]).sum()
}

fn ratio(sub_sum: f64, gt_sum: f64) -> f64 {
    // a video whose importances are all zero cannot be summarised badly
    if gt_sum == 0.0 {
        1.0
    } else {
        (sub_sum / gt_sum).min(1.0)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Per-video ratio of the submitted segments' importance to the best
/// achievable importance, both read from the ground-truth table.
pub fn summary_score(submissions: &[Vec<usize>], ground_truth: &[Vec<f64>], n_s: usize) -> Result<SummaryScoreReport> {
    if submissions.len() != ground_truth.len() {
        return Err(Error::Invalid(format!(
            "{} submissions for {} videos",
            submissions.len(),
            ground_truth.len()
        )));
    }
    check_lengths(ground_truth, n_s)?;
    let per_video = submissions
        .iter()
        .zip(ground_truth)
        .enumerate()
        .map(|(v, (sub, gt))| {
            let sub = check_submission(sub, gt.len(), n_s, v)?;
            Ok(ratio(sub.iter().map(|&i| gt[i]).sum(), gt_sum(gt, n_s)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryScoreReport {
        mean: mean(&per_video),
        n: per_video.len(),
        per_video,
        n_s,
    })
}

/// Scores predicted importances by selecting each video's top `n_s`.
pub fn score_predictions(scores: &[Vec<f64>], ground_truth: &[Vec<f64>], n_s: usize) -> Result<SummaryScoreReport> {
    let subs: Vec<Vec<usize>> = scores.iter().map(|s| top_k_summary(s, n_s)).collect();
    for (v, (s, gt)) in scores.iter().zip(ground_truth).enumerate() {
        if s.len() != gt.len() {
            return Err(Error::Invalid(format!(
                "video {v}: {} predictions for {} segments",
                s.len(),
                gt.len()
            )));
        }
    }
    summary_score(&subs, ground_truth, n_s)
}

pub fn ground_truth(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.records().iter().map(|r| r.importance.to_f64_vec()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Monte Carlo over uniformly drawn subsets.
    Sample,
    /// Closed-form expectation and spread of the per-trial score.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub mode: BaselineMode,
    /// Mean summary score of a uniformly random submission.
    pub mean: f64,
    /// Standard deviation of the per-trial summary score.
    pub std: f64,
    pub trials: Option<usize>,
    pub n_s: usize,
}

impl BaselineReport {
    /// Standard error of `mean`; zero in exact mode.
    pub fn std_error(&self) -> f64 {
        match self.trials {
            Some(t) => self.std / (t as f64).sqrt(),
            None => 0.0,
        }
    }
}

/// Score of random `n_s`-subsets, drawn independently per video and trial.
pub fn random_baseline(ds: &Dataset, n_s: usize, trials: usize, seed: u64) -> Result<BaselineReport> {
    random_baseline_gt(&ground_truth(ds), n_s, trials, seed)
}

pub fn random_baseline_gt(ground_truth: &[Vec<f64>], n_s: usize, trials: usize, seed: u64) -> Result<BaselineReport> {
    if trials == 0 {
        return Err(Error::range("trials", trials, ">= 1"));
    }
    check_lengths(ground_truth, n_s)?;
    let gts: Vec<f64> = ground_truth.iter().map(|gt| gt_sum(gt, n_s)).collect();
    let scores: Vec<f64> = (0..trials)
        .map(|t| {
            let mut r = rng::stream(seed, "baseline", &[t as u64]);
            let ratios: Vec<f64> = ground_truth
                .iter()
                .zip(&gts)
                .map(|(gt, &g)| {
                    let mut pick = index::sample(&mut r, gt.len(), n_s).into_vec();
                    pick.sort_unstable();
                    ratio(pick.iter().map(|&i| gt[i]).sum(), g)
                })
                .collect();
            mean(&ratios)
        })
        .collect();
    let m = mean(&scores);
    let std = if trials > 1 {
        (scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BaselineReport {
        mode: BaselineMode::Sample,
        mean: m,
        std,
        trials: Some(trials),
        n_s,
    })
}

/// Exact expectation of the random baseline. A uniform `n_s`-subset
/// contains each segment with probability `n_s / T_N`, so the expected
/// ratio is `n_s · Σa / (T_N · GT)`; the spread follows from the variance
/// of a sample sum drawn without replacement.
pub fn exact_baseline(ds: &Dataset, n_s: usize) -> Result<BaselineReport> {
    exact_baseline_gt(&ground_truth(ds), n_s)
}

pub fn exact_baseline_gt(ground_truth: &[Vec<f64>], n_s: usize) -> Result<BaselineReport> {
    check_lengths(ground_truth, n_s)?;
    let mut means = Vec::with_capacity(ground_truth.len());
    let mut var_sum = 0.0;
    for gt in ground_truth {
        let g = gt_sum(gt, n_s);
        let t_n = gt.len() as f64;
        let n = n_s as f64;
        if g == 0.0 {
            means.push(1.0);
            continue;
        }
        let total: f64 = gt.iter().sum();
        means.push((n * total) / (t_n * g));
        if gt.len() > 1 {
            let mu = total / t_n;
            let pop_var = gt.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / t_n;
            let var_sum_sub = n * pop_var * (t_n - n) / (t_n - 1.0);
            var_sum += var_sum_sub / (g * g);
        }
    }
    let count = ground_truth.len().max(1) as f64;
    Ok(BaselineReport {
        mode: BaselineMode::Exact,
        mean: mean(&means),
        std: var_sum.sqrt() / count,
        trials: None,
        n_s,
    })
}
