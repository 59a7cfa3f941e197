//! Video encoder: a (stacked) bidirectional GRU over the segment embeddings.
//! The context vector is a projection of the final forward and final
//! backward hidden states; per-step outputs feed the odd-position head.

use rand::seq::SliceRandom;

use crate::autodiff::{gru_block_shapes, gru_cell, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::rng;

pub fn param_shapes(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    for layer in 0..arch.gru_layers {
        let d_in = if layer == 0 { arch.sfd } else { 2 * arch.d_h };
        for dir in ["fwd", "bwd"] {
            for (name, shape) in gru_block_shapes(d_in, arch.d_h) {
                v.push((format!("videonet.l{layer}.{dir}.{name}"), shape));
            }
        }
    }
    v.push(("videonet.context.weight".into(), vec![2 * arch.d_h, arch.vd]));
    v.push(("videonet.context.bias".into(), vec![arch.vd]));
    v
}

/// Context vector and per-step outputs as tape nodes.
#[derive(Clone, Debug)]
pub struct ContextVars {
    /// `[vd]`
    pub context: Var,
    /// `[T_N, 2 d_h]`: forward state then backward state per position.
    pub per_step: Var,
}

/// Context and per-step outputs as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoContext<T> {
    pub vector: Tensor<T>,
    pub per_step: Tensor<T>,
}

fn run_direction<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    prefix: &str,
    inputs: &[Var],
    d_h: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let mut h = tape.constant(Tensor::zeros(&[d_h]));
    let mut states = vec![h; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        h = gru_cell(tape, params, prefix, inputs[t], h)?;
        states[t] = h;
    }
    Ok(states)
}

/// Encodes a sequence of `[sfd]` segment embeddings.
pub fn encode_video<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    segments: &[Var],
) -> Result<ContextVars> {
    if segments.is_empty() {
        return Err(Error::Invalid("cannot encode an empty segment sequence".into()));
    }
    let mut inputs = segments.to_vec();
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    for layer in 0..arch.gru_layers {
        fwd = run_direction(tape, params, &format!("videonet.l{layer}.fwd"), &inputs, arch.d_h, false)?;
        bwd = run_direction(tape, params, &format!("videonet.l{layer}.bwd"), &inputs, arch.d_h, true)?;
        inputs = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<Result<_>>()?;
    }
    let per_step = tape.stack_rows(&inputs)?;
    let last = tape.concat(&[fwd[fwd.len() - 1], bwd[0]])?;
    let w = tape.param(params, "videonet.context.weight")?;
    let b = tape.param(params, "videonet.context.bias")?;
    let context = tape.linear(last, w, Some(b))?;
    Ok(ContextVars { context, per_step })
}

/// Forward-only encoding of a `[T_N, sfd]` segment matrix.
pub fn encode_video_tensor<T: Real>(
    params: &ParamSet<T>,
    arch: &Architecture,
    segments: &Tensor<T>,
) -> Result<VideoContext<T>> {
    if segments.rank() != 2 || segments.shape()[1] != arch.sfd {
        return Err(Error::shape("encode_video", segments.shape(), &[0, arch.sfd]));
    }
    let mut tape = Tape::new();
    let rows: Vec<Var> = (0..segments.shape()[0])
        .map(|i| tape.constant(Tensor::vector(segments.row(i).to_vec())))
        .collect();
    let c = encode_video(&mut tape, params, arch, &rows)?;
    Ok(VideoContext {
        vector: tape.value(c.context).clone(),
        per_step: tape.value(c.per_step).clone(),
    })
}

/// Splits `0..width` into `portions` disjoint groups whose sizes differ by
/// at most one, assigned by a seeded shuffle.
pub fn portion_groups(width: usize, portions: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if portions == 0 || portions > width {
        return Err(Error::range("portions", portions, &format!("[1, {width}]")));
    }
    let mut coords: Vec<usize> = (0..width).collect();
    coords.shuffle(&mut rng::stream(seed, "portions", &[]));
    let mut groups = vec![Vec::new(); portions];
    for (i, c) in coords.into_iter().enumerate() {
        groups[i % portions].push(c);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    Ok(groups)
}

/// Encodes the sequence once per coordinate group, with all coordinates
/// outside the group zeroed, and averages the resulting contexts.
pub fn augment_portions<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    segments: &[Var],
    portions: usize,
    seed: u64,
) -> Result<Var> {
    let groups = portion_groups(arch.sfd, portions, seed)?;
    let mut sum: Option<Var> = None;
    for group in &groups {
        let mut mask = vec![T::zero(); arch.sfd];
        for &c in group {
            mask[c] = T::one();
        }
        let mask = tape.constant(Tensor::vector(mask));
        let masked: Vec<Var> = segments
            .iter()
            .map(|&s| tape.mul(s, mask))
            .collect::<Result<_>>()?;
        let ctx = encode_video(tape, params, arch, &masked)?.context;
        sum = Some(match sum {
            Some(acc) => tape.add(acc, ctx)?,
            None => ctx,
        });
    }
    tape.scale(sum.expect("at least one portion"), T::one() / T::from_usize(portions).unwrap())
}
