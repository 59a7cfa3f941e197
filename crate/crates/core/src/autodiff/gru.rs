//! Gated recurrent unit with reset and update gates:
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
//! h' = (1 - z) ⊙ h + z ⊙ h~
//! ```

use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::tensor::Real;
use crate::error::{Error, Result};

/// Parameter block names of one cell, relative to its prefix.
pub const GRU_BLOCKS: [&str; 9] = ["b_h", "b_r", "b_z", "u_h", "u_r", "u_z", "w_h", "w_r", "w_z"];

/// Shapes of the nine parameter blocks for the given widths.
pub fn gru_block_shapes(d_in: usize, d_h: usize) -> Vec<(&'static str, Vec<usize>)> {
    GRU_BLOCKS
        .iter()
        .map(|&name| {
            let shape = match &name[..1] {
                "w" => vec![d_in, d_h],
                "u" => vec![d_h, d_h],
                _ => vec![d_h],
            };
            (name, shape)
        })
        .collect()
}

fn gate<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    prefix: &str,
    tag: &str,
    x: Var,
    h: Var,
) -> Result<Var> {
    let w = tape.param(params, &format!("{prefix}.w_{tag}"))?;
    let u = tape.param(params, &format!("{prefix}.u_{tag}"))?;
    let b = tape.param(params, &format!("{prefix}.b_{tag}"))?;
    let xi = tape.linear(x, w, Some(b))?;
    let hi = tape.linear(h, u, None)?;
    tape.add(xi, hi)
}

/// One recurrent step. `x: [d_in]`, `h: [d_h]`, parameters at `{prefix}.{block}`.
pub fn gru_cell<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    prefix: &str,
    x: Var,
    h: Var,
) -> Result<Var> {
    if !tape.value(x).is_finite() || !tape.value(h).is_finite() {
        return Err(Error::NonFinite("gru_cell input".into()));
    }
    let zi = gate(tape, params, prefix, "z", x, h)?;
    let z = tape.sigmoid(zi)?;
    let ri = gate(tape, params, prefix, "r", x, h)?;
    let r = tape.sigmoid(ri)?;

    let rh = tape.mul(r, h)?;
    let w = tape.param(params, &format!("{prefix}.w_h"))?;
    let u = tape.param(params, &format!("{prefix}.u_h"))?;
    let b = tape.param(params, &format!("{prefix}.b_h"))?;
    let xi = tape.linear(x, w, Some(b))?;
    let hi = tape.linear(rh, u, None)?;
    let cand_in = tape.add(xi, hi)?;
    let cand = tape.tanh(cand_in)?;

    let zh = tape.mul(z, h)?;
    let keep = tape.sub(h, zh)?;
    let zc = tape.mul(z, cand)?;
    tape.add(keep, zc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn zero_params(d_in: usize, d_h: usize) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        for (name, shape) in gru_block_shapes(d_in, d_h) {
            p.insert(format!("g.{name}"), Tensor::zeros(&shape));
        }
        p
    }

    #[test]
    fn zero_weights_zero_state_is_fixed_point() {
        let p = zero_params(3, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let h = tape.constant(Tensor::zeros(&[2]));
        let out = gru_cell(&mut tape, &p, "g", x, h).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = zero_params(3, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let h = tape.constant(Tensor::vector(vec![0.8, -0.3]));
        let out = gru_cell(&mut tape, &p, "g", x, h).unwrap();
        assert_eq!(tape.value(out).data(), &[0.4, -0.15]);
    }

    #[test]
    fn mismatched_shapes_fail() {
        let p = zero_params(3, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let h = tape.constant(Tensor::zeros(&[2]));
        assert!(gru_cell(&mut tape, &p, "g", x, h).is_err());
    }

    #[test]
    fn non_finite_input_fails() {
        let p = zero_params(1, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![f64::NAN]));
        let h = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(gru_cell(&mut tape, &p, "g", x, h), Err(Error::NonFinite(_))));
    }
}
