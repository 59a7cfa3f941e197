//! Ranking head: each segment embedding joined with the shared video
//! context, scored by a two-hidden-layer perceptron with a linear output.

use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Architecture;

pub fn hidden_widths(arch: &Architecture) -> (usize, usize) {
    let input = arch.sfd + arch.vd;
    ((input / 2).max(1), (input / 4).max(1))
}

pub fn param_shapes(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    let input = arch.sfd + arch.vd;
    let (h1, h2) = hidden_widths(arch);
    vec![
        ("highlight.fc1.weight".into(), vec![input, h1]),
        ("highlight.fc1.bias".into(), vec![h1]),
        ("highlight.fc2.weight".into(), vec![h1, h2]),
        ("highlight.fc2.bias".into(), vec![h2]),
        ("highlight.out.weight".into(), vec![h2, 1]),
        ("highlight.out.bias".into(), vec![1]),
    ]
}

fn dense<T: Real>(tape: &mut Tape<T>, params: &ParamSet<T>, name: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("highlight.{name}.weight"))?;
    let b = tape.param(params, &format!("highlight.{name}.bias"))?;
    tape.linear(x, w, Some(b))
}

/// `segments: [T_N, sfd]`, `context: [vd]` → scores `[T_N]`.
pub fn predict_importance<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    segments: Var,
    context: Var,
) -> Result<Var> {
    let (ss, cs) = (tape.value(segments).shape().to_vec(), tape.value(context).shape().to_vec());
    if ss.len() != 2 || ss[1] != arch.sfd || cs != [arch.vd] {
        return Err(Error::shape("predict_importance", &ss, &cs));
    }
    let ctx = tape.broadcast_rows(context, ss[0])?;
    let x = tape.concat_cols(segments, ctx)?;
    let h = dense(tape, params, "fc1", x)?;
    let h = tape.relu(h)?;
    let h = dense(tape, params, "fc2", h)?;
    let h = tape.relu(h)?;
    let out = dense(tape, params, "out", h)?;
    tape.flatten(out)
}

/// Per-video mean squared error.
pub fn supervised_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: &Tensor<T>) -> Result<Var> {
    tape.mse(pred, target)
}
