use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::range("lr", self.lr, "[0, inf)"));
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::range(field, v, "[0, 1)"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::range("adam_eps", self.eps, "(0, inf)"));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter path.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected adaptive-moment update, applied in path order.
///
/// All key spaces are validated before anything is mutated, so an error
/// leaves `params` and `state` untouched.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &GradStore<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<()> {
    for (path, p) in params.iter() {
        let g = grads
            .get(path)
            .ok_or_else(|| Error::MissingGradient(path.clone()))?;
        if g.shape() != p.shape() {
            return Err(Error::shape("adam gradient", p.shape(), g.shape()));
        }
        for moments in [&state.m, &state.v] {
            let m = moments.get(path)?;
            if m.shape() != p.shape() {
                return Err(Error::shape("adam moment", p.shape(), m.shape()));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(hyper.beta1);
    let b2 = T::lit(hyper.beta2);
    let c1 = T::lit(1.0 - hyper.beta1.powi(t));
    let c2 = T::lit(1.0 - hyper.beta2.powi(t));
    let lr = T::lit(hyper.lr);
    let eps = T::lit(hyper.eps);
    let one = T::one();

    for (path, p) in params.iter_mut() {
        let g: &Tensor<T> = grads.get(path).unwrap();
        let m = state.m.get_mut(path).unwrap();
        let v = state.v.get_mut(path).unwrap();
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn zero_lr_is_identity_but_moments_move() {
        let mut p = one_param(0.7);
        let mut st = AdamState::new(&p);
        let mut g = GradStore::zeros_like(&p);
        g.accumulate("w", &Tensor::vector(vec![2.0]), 1.0).unwrap();
        let hyper = AdamHyper { lr: 0.0, ..Default::default() };
        adam_step(&mut p, &g, &mut st, &hyper).unwrap();
        assert_eq!(p, one_param(0.7));
        assert!(st.m.get("w").unwrap().item() != 0.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(-1.5);
        let mut st = AdamState::new(&p);
        let g = GradStore::zeros_like(&p);
        adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p, one_param(-1.5));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr * g / (|g| + eps).
        let mut p = one_param(3.0);
        let mut st = AdamState::new(&p);
        let mut g = GradStore::zeros_like(&p);
        g.accumulate("w", &Tensor::vector(vec![1.0]), 1.0).unwrap();
        let hyper = AdamHyper::default();
        adam_step(&mut p, &g, &mut st, &hyper).unwrap();
        let got = p.get("w").unwrap().item();
        assert!((got - (3.0 - hyper.lr)).abs() < 1e-6, "{got}");
    }

    #[test]
    fn missing_gradient_is_reported_without_mutation() {
        let mut p = one_param(1.0);
        p.insert("z", Tensor::vector(vec![2.0]));
        let mut st = AdamState::new(&p);
        let mut g = GradStore::empty();
        g.accumulate("w", &Tensor::vector(vec![1.0]), 1.0).unwrap();
        let err = adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(ref s) if s == "z"));
        assert_eq!(st.step, 0);
        assert_eq!(p.get("w").unwrap().item(), 1.0);
    }
}
