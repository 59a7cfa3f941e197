//! Odd-position self-supervision: a fraction of a video's segments is
//! displaced by a derangement, and a per-step linear head on the video
//! encoder's outputs learns to flag the displaced ones.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::rng;

pub fn param_shapes(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    vec![
        ("selfsup.head.weight".into(), vec![2 * arch.d_h, 1]),
        ("selfsup.head.bias".into(), vec![1]),
    ]
}

/// Which positions are displaced and where their rows come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePlan {
    /// Sorted displaced positions.
    pub selected_positions: Vec<usize>,
    /// `permutation[j]` is the original position whose row lands at
    /// `selected_positions[j]`; never equal to it.
    pub permutation: Vec<usize>,
    pub seed: u64,
}

impl ShufflePlan {
    /// For each output position, the input row it takes.
    pub fn source_order(&self, t_n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..t_n).collect();
        for (&dst, &src) in self.selected_positions.iter().zip(&self.permutation) {
            order[dst] = src;
        }
        order
    }

    pub fn labels(&self, t_n: usize) -> OddLabels {
        let mut labels = vec![false; t_n];
        for &p in &self.selected_positions {
            labels[p] = true;
        }
        OddLabels { labels }
    }
}

/// 1 for every segment not at its original position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OddLabels {
    pub labels: Vec<bool>,
}

impl OddLabels {
    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::vector(
            self.labels
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect(),
        )
    }
}

/// Number of displaced segments: `max(2, round(α·T_N))` for `α > 0`, else 0.
pub fn num_selected(t_n: usize, alpha: f64) -> usize {
    if alpha > 0.0 {
        ((alpha * t_n as f64).round() as usize).max(2)
    } else {
        0
    }
}

pub fn plan_shuffle(t_n: usize, alpha: f64, seed: u64) -> Result<ShufflePlan> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::range("alpha", alpha, "[0, 1]"));
    }
    if alpha > 0.0 && t_n < 2 {
        return Err(Error::Invalid(format!(
            "shuffling needs at least 2 segments, video has {t_n}"
        )));
    }
    let k = num_selected(t_n, alpha);
    let mut r = rng::stream(seed, "shuffle", &[]);
    let mut selected = index::sample(&mut r, t_n, k).into_vec();
    selected.sort_unstable();
    let mut perm: Vec<usize> = (0..k).collect();
    if k >= 2 {
        loop {
            perm.shuffle(&mut r);
            if perm.iter().enumerate().all(|(i, &p)| i != p) {
                break;
            }
        }
    }
    Ok(ShufflePlan {
        permutation: perm.iter().map(|&j| selected[j]).collect(),
        selected_positions: selected,
        seed,
    })
}

/// Displaces `max(2, round(α·T_N))` rows of `segments: [T_N, d]`.
pub fn shuffle_segments<T: Real>(
    segments: &Tensor<T>,
    alpha: f64,
    seed: u64,
) -> Result<(Tensor<T>, OddLabels, ShufflePlan)> {
    if segments.rank() != 2 {
        return Err(Error::shape("shuffle_segments", segments.shape(), &[0, 0]));
    }
    let t_n = segments.shape()[0];
    let plan = plan_shuffle(t_n, alpha, seed)?;
    let mut data = Vec::with_capacity(segments.len());
    for src in plan.source_order(t_n) {
        data.extend_from_slice(segments.row(src));
    }
    let shuffled = Tensor::new(segments.shape().to_vec(), data)?;
    Ok((shuffled, plan.labels(t_n), plan))
}

/// One logit per row of `per_step: [T_N, 2 d_h]`.
pub fn selfsup_logits<T: Real>(tape: &mut Tape<T>, params: &ParamSet<T>, per_step: Var) -> Result<Var> {
    let w = tape.param(params, "selfsup.head.weight")?;
    let b = tape.param(params, "selfsup.head.bias")?;
    let out = tape.linear(per_step, w, Some(b))?;
    tape.flatten(out)
}

pub fn selfsup_loss<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    per_step: Var,
    labels: &OddLabels,
) -> Result<Var> {
    let rows = tape.value(per_step).shape()[0];
    if rows != labels.len() {
        return Err(Error::shape("selfsup_loss", &[rows], &[labels.len()]));
    }
    let logits = selfsup_logits(tape, params, per_step)?;
    tape.bce(logits, &labels.as_tensor())
}

/// `L_sup + β·L_self`
pub fn multitask_loss<T: Real>(tape: &mut Tape<T>, l_sup: Var, l_self: Var, beta: T) -> Result<Var> {
    let weighted = tape.scale(l_self, beta)?;
    tape.add(l_sup, weighted)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSupMetrics {
    pub accuracy: f64,
    pub recall_on_odd: f64,
}

/// Sign-threshold accuracy and recall on displaced segments. Recall is 1
/// when no segment was displaced.
pub fn selfsup_metrics<T: Real>(logits: &[T], labels: &OddLabels) -> Result<SelfSupMetrics> {
    let c = SelfSupCounts::from_logits(logits, labels)?;
    Ok(c.metrics())
}

/// Raw counts, so metrics can be pooled over many videos.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelfSupCounts {
    pub total: usize,
    pub correct: usize,
    pub positives: usize,
    pub true_positives: usize,
}

impl SelfSupCounts {
    pub fn from_logits<T: Real>(logits: &[T], labels: &OddLabels) -> Result<Self> {
        if logits.len() != labels.len() {
            return Err(Error::shape("selfsup_metrics", &[logits.len()], &[labels.len()]));
        }
        let mut c = SelfSupCounts::default();
        for (&l, &y) in logits.iter().zip(&labels.labels) {
            let pred = l > T::zero();
            c.total += 1;
            c.correct += usize::from(pred == y);
            c.positives += usize::from(y);
            c.true_positives += usize::from(pred && y);
        }
        Ok(c)
    }

    pub fn add(&mut self, other: &SelfSupCounts) {
        self.total += other.total;
        self.correct += other.correct;
        self.positives += other.positives;
        self.true_positives += other.true_positives;
    }

    pub fn metrics(&self) -> SelfSupMetrics {
        SelfSupMetrics {
            accuracy: if self.total == 0 { 1.0 } else { self.correct as f64 / self.total as f64 },
            recall_on_odd: if self.positives == 0 {
                1.0
            } else {
                self.true_positives as f64 / self.positives as f64
            },
        }
    }
}
