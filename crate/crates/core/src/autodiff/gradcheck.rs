use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Path and flat index of the coordinate with the largest error.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn evaluate<F>(loss_fn: &F, params: &ParamSet<f64>) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, params)?;
    Ok(tape.value(loss).item())
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(f(p + eps) - f(p - eps)) / (2 eps)` for every coordinate of `params`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::range("eps", eps, "> 0"));
    }
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, params)?;
    let base = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let analytic = tape.param_grads(&grads)?;

    let again = evaluate(&loss_fn, params)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let paths: Vec<String> = params.paths().cloned().collect();
    for path in paths {
        let n = params.get(&path)?.len();
        for i in 0..n {
            let orig = params.get(&path)?.data()[i];
            work.get_mut(&path).unwrap().data_mut()[i] = orig + eps;
            let plus = evaluate(&loss_fn, &work)?;
            work.get_mut(&path).unwrap().data_mut()[i] = orig - eps;
            let minus = evaluate(&loss_fn, &work)?;
            work.get_mut(&path).unwrap().data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(&path).map_or(0.0, |g| g.data()[i]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((path.clone(), i));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use std::cell::Cell;

    #[test]
    fn quadratic_at_three() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::vector(vec![3.0]));
        // loss = p * p, a one-element tensor
        let r = grad_check(
            |tape, ps| {
                let v = tape.param(ps, "p")?;
                tape.mul(v, v)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
        assert!((r.analytic - 6.0).abs() < 1e-12);
        assert!((r.numeric - 6.0).abs() < 1e-9);
    }

    #[test]
    fn nondeterminism_is_detected() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::vector(vec![1.0]));
        let calls = Cell::new(0u32);
        let err = grad_check(
            |tape, ps| {
                calls.set(calls.get() + 1);
                let v = tape.param(ps, "p")?;
                let s = tape.scale(v, 1.0 + calls.get() as f64)?;
                tape.mse(s, &Tensor::vector(vec![0.0]))
            },
            &p,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }
}
