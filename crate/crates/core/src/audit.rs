//! Finite-difference audit of every differentiable op and of the assembled
//! network, in double precision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, gru_block_shapes, gru_cell, GradCheckReport, ParamSet, PoolMode, Tape, Tensor, Var};
use crate::dataset::{DatasetDims, VideoRecord};
use crate::error::Result;
use crate::model::{self, Architecture};
use crate::{rng, selfsup, videonet};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct AuditEntry {
    pub name: String,
    pub report: GradCheckReport,
}

fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).expect("nonzero shape")
}

/// Values bounded away from zero so that no relu input sits on its kink.
fn off_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(r, shape, 0.1, 1.0)
}

type LossFn = Box<dyn Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>>;

/// Squared distance of `out` (any shape) to a fixed random target.
fn to_loss(tape: &mut Tape<f64>, out: Var, target: &Tensor<f64>) -> Result<Var> {
    let flat = tape.flatten(out)?;
    tape.mse(flat, target)
}

fn case(name: &str, params: ParamSet<f64>, out_len: usize, r: &mut ChaCha8Rng, f: impl Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var> + 'static) -> (String, ParamSet<f64>, LossFn) {
    let target = uniform(r, &[out_len], -1.0, 1.0);
    let loss: LossFn = Box::new(move |tape, ps| {
        let out = f(tape, ps)?;
        to_loss(tape, out, &target)
    });
    (name.to_string(), params, loss)
}

fn set(entries: Vec<(&str, Tensor<f64>)>) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    for (k, v) in entries {
        p.insert(k, v);
    }
    p
}

/// Gradient check of each op in isolation.
pub fn audit_ops(seed: u64, eps: f64) -> Result<Vec<AuditEntry>> {
    let mut r = rng::stream(seed, "audit-ops", &[]);
    let mut cases: Vec<(String, ParamSet<f64>, LossFn)> = Vec::new();

    let p = set(vec![("x", uniform(&mut r, &[3, 4], -1.0, 1.0)), ("w", uniform(&mut r, &[4, 2], -1.0, 1.0)), ("b", uniform(&mut r, &[2], -1.0, 1.0))]);
    cases.push(case("linear", p, 6, &mut r, |t, ps| {
        let (x, w, b) = (t.param(ps, "x")?, t.param(ps, "w")?, t.param(ps, "b")?);
        t.linear(x, w, Some(b))
    }));
    let p = set(vec![("x", uniform(&mut r, &[4], -1.0, 1.0)), ("w", uniform(&mut r, &[4, 3], -1.0, 1.0))]);
    cases.push(case("linear_vector", p, 3, &mut r, |t, ps| {
        let (x, w) = (t.param(ps, "x")?, t.param(ps, "w")?);
        t.linear(x, w, None)
    }));
    for stride in [1usize, 2] {
        let p = set(vec![("x", uniform(&mut r, &[7, 3], -1.0, 1.0)), ("k", uniform(&mut r, &[3, 3, 2], -1.0, 1.0))]);
        let out_len = 2 * ((7 - 3) / stride + 1);
        cases.push(case(&format!("conv1d_stride{stride}"), p, out_len, &mut r, move |t, ps| {
            let (x, k) = (t.param(ps, "x")?, t.param(ps, "k")?);
            t.conv1d(x, k, stride)
        }));
    }
    for (name, mode) in [("pool_mean", PoolMode::Mean), ("pool_max", PoolMode::Max)] {
        let p = set(vec![("x", uniform(&mut r, &[5, 3], -1.0, 1.0))]);
        cases.push(case(name, p, 3, &mut r, move |t, ps| {
            let x = t.param(ps, "x")?;
            t.pool(x, mode)
        }));
    }
    let mut relu_in = off_zero(&mut r, &[6]);
    for (i, v) in relu_in.data_mut().iter_mut().enumerate() {
        if i % 2 == 1 {
            *v = -*v;
        }
    }
    cases.push(case("relu", set(vec![("x", relu_in)]), 6, &mut r, |t, ps| {
        let x = t.param(ps, "x")?;
        t.relu(x)
    }));
    let p = set(vec![("x", uniform(&mut r, &[6], -3.0, 3.0))]);
    cases.push(case("sigmoid", p, 6, &mut r, |t, ps| {
        let x = t.param(ps, "x")?;
        t.sigmoid(x)
    }));
    let p = set(vec![("x", uniform(&mut r, &[6], -2.0, 2.0))]);
    cases.push(case("tanh", p, 6, &mut r, |t, ps| {
        let x = t.param(ps, "x")?;
        t.tanh(x)
    }));
    type Binary = fn(&mut Tape<f64>, Var, Var) -> Result<Var>;
    let binaries: [(&str, Binary); 3] = [("add", Tape::add), ("sub", Tape::sub), ("mul", Tape::mul)];
    for (name, op) in binaries {
        let p = set(vec![("a", uniform(&mut r, &[5], -1.0, 1.0)), ("b", uniform(&mut r, &[5], -1.0, 1.0))]);
        cases.push(case(name, p, 5, &mut r, move |t, ps| {
            let (a, b) = (t.param(ps, "a")?, t.param(ps, "b")?);
            op(t, a, b)
        }));
    }
    let p = set(vec![("x", uniform(&mut r, &[5], -1.0, 1.0))]);
    cases.push(case("scale", p, 5, &mut r, |t, ps| {
        let x = t.param(ps, "x")?;
        t.scale(x, -1.7)
    }));
    let p = set(vec![("a", uniform(&mut r, &[3], -1.0, 1.0)), ("b", uniform(&mut r, &[2], -1.0, 1.0))]);
    cases.push(case("concat", p, 5, &mut r, |t, ps| {
        let (a, b) = (t.param(ps, "a")?, t.param(ps, "b")?);
        t.concat(&[a, b])
    }));
    let p = set(vec![("a", uniform(&mut r, &[3], -1.0, 1.0)), ("b", uniform(&mut r, &[3], -1.0, 1.0))]);
    cases.push(case("stack_rows", p, 9, &mut r, |t, ps| {
        let (a, b) = (t.param(ps, "a")?, t.param(ps, "b")?);
        t.stack_rows(&[a, b, a])
    }));
    let p = set(vec![("m", uniform(&mut r, &[3, 4], -1.0, 1.0))]);
    cases.push(case("row", p, 4, &mut r, |t, ps| {
        let m = t.param(ps, "m")?;
        t.row(m, 1)
    }));
    let p = set(vec![("v", uniform(&mut r, &[3], -1.0, 1.0))]);
    cases.push(case("broadcast_rows", p, 12, &mut r, |t, ps| {
        let v = t.param(ps, "v")?;
        t.broadcast_rows(v, 4)
    }));
    let p = set(vec![("a", uniform(&mut r, &[3, 2], -1.0, 1.0)), ("b", uniform(&mut r, &[3, 3], -1.0, 1.0))]);
    cases.push(case("concat_cols", p, 15, &mut r, |t, ps| {
        let (a, b) = (t.param(ps, "a")?, t.param(ps, "b")?);
        t.concat_cols(a, b)
    }));
    let mut p = set(vec![("x", uniform(&mut r, &[3], -1.0, 1.0)), ("h", uniform(&mut r, &[2], -0.9, 0.9))]);
    for (block, shape) in gru_block_shapes(3, 2) {
        p.insert(format!("gru.{block}"), uniform(&mut r, &shape, -1.0, 1.0));
    }
    cases.push(case("gru_cell", p, 2, &mut r, |t, ps| {
        let (x, h) = (t.param(ps, "x")?, t.param(ps, "h")?);
        gru_cell(t, ps, "gru", x, h)
    }));

    let mut entries = Vec::new();
    for (name, params, loss) in cases {
        entries.push(AuditEntry {
            name,
            report: grad_check(loss, &params, eps)?,
        });
    }

    // the losses themselves, differentiated in their prediction argument
    let target = uniform(&mut r, &[6], -1.0, 1.0);
    let p = set(vec![("x", uniform(&mut r, &[6], -1.0, 1.0))]);
    entries.push(AuditEntry {
        name: "mse".into(),
        report: grad_check(
            move |t, ps| {
                let x = t.param(ps, "x")?;
                t.mse(x, &target)
            },
            &p,
            eps,
        )?,
    });
    let labels = Tensor::vector((0..6).map(|i| f64::from(u8::from(i % 3 == 0))).collect());
    let p = set(vec![("x", uniform(&mut r, &[6], -3.0, 3.0))]);
    entries.push(AuditEntry {
        name: "bce".into(),
        report: grad_check(
            move |t, ps| {
                let x = t.param(ps, "x")?;
                t.bce(x, &labels)
            },
            &p,
            eps,
        )?,
    });
    Ok(entries)
}

/// The small architecture the pipeline audit runs on.
pub fn toy_architecture() -> Architecture {
    Architecture {
        dims: DatasetDims { t_g: 6, fd: 4, wd: 3 },
        sfd: 4,
        vd: 4,
        d_h: 3,
        gru_layers: 1,
        kernel_size: 3,
        conv_stride: 1,
        bottleneck: true,
    }
}

/// A random `t_n`-segment video for `arch`.
pub fn toy_video(arch: &Architecture, t_n: usize, seed: u64) -> Result<VideoRecord> {
    let mut r = rng::stream(seed, "audit-video", &[]);
    let d = arch.dims;
    let frames = uniform(&mut r, &[t_n, d.t_g, d.fd], -1.0, 1.0).cast::<f32>();
    let seg = uniform(&mut r, &[t_n, d.wd], -1.0, 1.0).cast::<f32>();
    let imp = uniform(&mut r, &[t_n], 0.0, 1.0).cast::<f32>();
    VideoRecord::new(format!("toy-{seed}"), frames, seg, imp)
}

/// End-to-end checks on a 3-segment toy video: SegNet → VideoNet →
/// HighlightNet → MSE, the same with portion averaging, and the joint
/// objective with the odd-position loss.
pub fn audit_pipeline(seed: u64, eps: f64) -> Result<Vec<AuditEntry>> {
    let arch = toy_architecture();
    let rec = toy_video(&arch, 3, seed)?;
    let mut params = model::init_params::<f64>(&arch, seed)?;
    // zero biases can put a whole relu layer exactly on its kink
    let mut r = rng::stream(seed, "audit-bias", &[]);
    for (_, t) in params.iter_mut().filter(|(_, t)| t.rank() == 1) {
        *t = uniform(&mut r, t.shape(), -0.05, 0.05);
    }
    let target = rec.importance.cast::<f64>();
    let mut entries = Vec::new();

    for (name, portions) in [("pipeline_mse", 1usize), ("pipeline_portions", 2)] {
        let (rec, target) = (rec.clone(), target.clone());
        let report = grad_check(
            move |t, ps| {
                let fwd = model::forward_scores(t, ps, &arch, &rec, portions, seed, None)?;
                t.mse(fwd.scores, &target)
            },
            &params,
            eps,
        )?;
        entries.push(AuditEntry { name: name.into(), report });
    }

    let plan = selfsup::plan_shuffle(3, 0.5, seed)?;
    let (rec2, target2) = (rec.clone(), target.clone());
    let report = grad_check(
        move |t, ps| {
            let segments = model::segment_embeddings(t, ps, &arch, &rec2, None)?;
            let shuffled: Vec<Var> = plan.source_order(3).iter().map(|&i| segments[i]).collect();
            let enc = videonet::encode_video(t, ps, &arch, &shuffled)?;
            let l_self = selfsup::selfsup_loss(t, ps, enc.per_step, &plan.labels(3))?;
            let fwd = model::scores_from_segments(t, ps, &arch, segments, 1, 0)?;
            let l_sup = t.mse(fwd.scores, &target2)?;
            selfsup::multitask_loss(t, l_sup, l_self, 1.0)
        },
        &params,
        eps,
    )?;
    entries.push(AuditEntry {
        name: "pipeline_multitask".into(),
        report,
    });
    Ok(entries)
}

/// Every op and pipeline check for one seed.
pub fn audit_all(seed: u64, eps: f64) -> Result<Vec<AuditEntry>> {
    let mut v = audit_ops(seed, eps)?;
    v.extend(audit_pipeline(seed, eps)?);
    Ok(v)
}

pub fn max_error(entries: &[AuditEntry]) -> f64 {
    entries.iter().map(|e| e.report.max_rel_error).fold(0.0, f64::max)
}
