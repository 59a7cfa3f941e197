//! Forward kernels of the differentiable op set. The [`Tape`](super::Tape)
//! records these and supplies the matching backward rules.

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Mean,
    Max,
}

/// Largest value strictly below one.
fn below_one<T: Real>() -> T {
    T::one() - T::epsilon() / T::lit(2.0)
}

/// Logistic function, evaluated without overflow for either sign.
pub fn sigmoid_unclamped<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Logistic function with the result kept strictly inside (0, 1).
pub fn sigmoid<T: Real>(x: T) -> T {
    sigmoid_unclamped(x)
        .max(T::min_positive_value())
        .min(below_one())
}

/// Hyperbolic tangent with the result kept strictly inside (-1, 1).
pub fn tanh<T: Real>(x: T) -> T {
    let b = below_one::<T>();
    x.tanh().max(-b).min(b)
}

pub fn activate<T: Real>(x: T, kind: Activation) -> T {
    match kind {
        Activation::Relu => {
            if x > T::zero() {
                x
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => sigmoid(x),
        Activation::Tanh => tanh(x),
    }
}

pub fn activation<T: Real>(x: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    x.ensure_finite("activation input")?;
    Ok(x.map(|v| activate(v, kind)))
}

/// `y = x W + b` for `x` of shape `[n, p]` or `[p]`, `W` of shape `[p, q]`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    if w.rank() != 2 || x.rank() == 0 || x.rank() > 2 || x.shape()[x.rank() - 1] != w.shape()[0] {
        return Err(Error::shape("linear", x.shape(), w.shape()));
    }
    let (n, p) = x.as_matrix_dims();
    let q = w.shape()[1];
    if let Some(b) = b {
        if b.shape() != [q] {
            return Err(Error::shape("linear bias", b.shape(), &[q]));
        }
    }
    let xd = x.data();
    let wd = w.data();
    let mut y = vec![T::zero(); n * q];
    for i in 0..n {
        let yrow = &mut y[i * q..(i + 1) * q];
        if let Some(b) = b {
            yrow.copy_from_slice(b.data());
        }
        for k in 0..p {
            let xik = xd[i * p + k];
            let wrow = &wd[k * q..(k + 1) * q];
            for (yj, &wkj) in yrow.iter_mut().zip(wrow) {
                *yj = *yj + xik * wkj;
            }
        }
    }
    let shape = if x.rank() == 1 { vec![q] } else { vec![n, q] };
    Tensor::new(shape, y)
}

pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Invalid("stride must be at least 1".into()));
    }
    if len < kernel {
        return Err(Error::SequenceTooShort { len, kernel });
    }
    Ok((len - kernel) / stride + 1)
}

/// Valid (unpadded) correlation along the temporal axis.
/// `x: [T, d]`, `kernels: [k, d, c]` → `[T', c]`.
pub fn temporal_conv1d<T: Real>(x: &Tensor<T>, kernels: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    if x.rank() != 2 || kernels.rank() != 3 || x.shape()[1] != kernels.shape()[1] {
        return Err(Error::shape("temporal_conv1d", x.shape(), kernels.shape()));
    }
    let (len, d) = (x.shape()[0], x.shape()[1]);
    let (k, c) = (kernels.shape()[0], kernels.shape()[2]);
    let out_len = conv_output_len(len, k, stride)?;
    let xd = x.data();
    let kd = kernels.data();
    let mut y = vec![T::zero(); out_len * c];
    for t in 0..out_len {
        let yrow = &mut y[t * c..(t + 1) * c];
        for j in 0..k {
            let xrow = &xd[(t * stride + j) * d..(t * stride + j + 1) * d];
            for (i, &xv) in xrow.iter().enumerate() {
                let krow = &kd[(j * d + i) * c..(j * d + i + 1) * c];
                for (yo, &kv) in yrow.iter_mut().zip(krow) {
                    *yo = *yo + xv * kv;
                }
            }
        }
    }
    Tensor::new(vec![out_len, c], y)
}

/// Per-column reduction over the temporal axis. For max mode also returns
/// the winning row per column (first maximal index on ties).
pub fn pool_temporal<T: Real>(x: &Tensor<T>, mode: PoolMode) -> Result<(Tensor<T>, Vec<usize>)> {
    if x.rank() != 2 {
        return Err(Error::shape("pool_temporal", x.shape(), &[0, 0]));
    }
    let (len, d) = (x.shape()[0], x.shape()[1]);
    let xd = x.data();
    match mode {
        PoolMode::Mean => {
            let mut y = vec![T::zero(); d];
            for t in 0..len {
                for (yi, &v) in y.iter_mut().zip(&xd[t * d..(t + 1) * d]) {
                    *yi = *yi + v;
                }
            }
            let n = T::from_usize(len).unwrap();
            Ok((Tensor::vector(y.into_iter().map(|v| v / n).collect()), Vec::new()))
        }
        PoolMode::Max => {
            let mut y = xd[..d].to_vec();
            let mut arg = vec![0usize; d];
            for t in 1..len {
                for i in 0..d {
                    if xd[t * d + i] > y[i] {
                        y[i] = xd[t * d + i];
                        arg[i] = t;
                    }
                }
            }
            Ok((Tensor::vector(y), arg))
        }
    }
}

pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let n = T::from_usize(pred.len()).unwrap();
    let s: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(s / n)
}

/// Mean binary cross-entropy on logits, `max(l,0) - l*y + ln(1 + e^{-|l|})`.
pub fn bce_loss<T: Real>(logits: &Tensor<T>, labels: &Tensor<T>) -> Result<T> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::shape("bce_loss", logits.shape(), labels.shape()));
    }
    check_binary(labels)?;
    let n = T::from_usize(logits.len()).unwrap();
    let s: T = logits
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&l, &y)| l.max(T::zero()) - l * y + (-l.abs()).exp().ln_1p())
        .sum();
    Ok(s / n)
}

pub(crate) fn check_binary<T: Real>(labels: &Tensor<T>) -> Result<()> {
    match labels
        .data()
        .iter()
        .find(|&&y| y != T::zero() && y != T::one())
    {
        Some(bad) => Err(Error::Invalid(format!("non-binary label {bad}"))),
        None => Ok(()),
    }
}
