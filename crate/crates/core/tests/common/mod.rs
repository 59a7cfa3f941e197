//! Scalar-loop reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vidsum::autodiff::Tensor;

pub fn rand_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

pub fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rand_vec(r, n, -1.0, 1.0)).unwrap()
}

/// Largest `|a - b| / max(|b|, 1)` over paired entries.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn linear(x: &[f64], n: usize, p: usize, w: &[f64], q: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; n * q];
    for i in 0..n {
        for j in 0..q {
            let mut s = b.map_or(0.0, |b| b[j]);
            for k in 0..p {
                s += x[i * p + k] * w[k * q + j];
            }
            y[i * q + j] = s;
        }
    }
    y
}

/// Valid correlation of `x: [t, d]` with `k: [kw, d, c]`.
pub fn conv1d(x: &[f64], t: usize, d: usize, k: &[f64], kw: usize, c: usize, stride: usize) -> Vec<f64> {
    let out = (t - kw) / stride + 1;
    let mut y = vec![0.0; out * c];
    for o in 0..out {
        for ch in 0..c {
            let mut s = 0.0;
            for a in 0..kw {
                for e in 0..d {
                    s += x[(o * stride + a) * d + e] * k[(a * d + e) * c + ch];
                }
            }
            y[o * c + ch] = s;
        }
    }
    y
}

pub fn pool(x: &[f64], t: usize, d: usize, max: bool) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let col = (0..t).map(|i| x[i * d + j]);
            if max {
                col.fold(f64::NEG_INFINITY, f64::max)
            } else {
                col.sum::<f64>() / t as f64
            }
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook GRU step; `blocks` maps `w_z`, `u_z`, `b_z`, ... to row-major data.
pub fn gru(x: &[f64], h: &[f64], blocks: &dyn Fn(&str) -> Vec<f64>) -> Vec<f64> {
    let (din, dh) = (x.len(), h.len());
    let affine = |wn: &str, un: &str, bn: &str, hin: &[f64]| -> Vec<f64> {
        let (w, u, b) = (blocks(wn), blocks(un), blocks(bn));
        (0..dh)
            .map(|j| {
                let mut s = b[j];
                for k in 0..din {
                    s += x[k] * w[k * dh + j];
                }
                for k in 0..dh {
                    s += hin[k] * u[k * dh + j];
                }
                s
            })
            .collect()
    };
    let z: Vec<f64> = affine("w_z", "u_z", "b_z", h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine("w_r", "u_r", "b_r", h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = affine("w_h", "u_h", "b_h", &rh).into_iter().map(f64::tanh).collect();
    (0..dh).map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j]).collect()
}

pub fn mse(p: &[f64], t: &[f64]) -> f64 {
    p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

/// Direct cross-entropy, `-y ln σ(l) - (1 - y) ln(1 - σ(l))`, for moderate logits.
pub fn bce(l: &[f64], y: &[f64]) -> f64 {
    l.iter()
        .zip(y)
        .map(|(&l, &y)| {
            let s = sigmoid(l);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum::<f64>()
        / l.len() as f64
}

pub fn ensemble(preds: &[Vec<f64>], coef: &[f64], intercept: f64) -> Vec<f64> {
    (0..preds[0].len())
        .map(|i| intercept + preds.iter().zip(coef).map(|(p, c)| c * p[i]).sum::<f64>())
        .collect()
}

/// Least squares via Gaussian elimination with partial pivoting on the
/// normal equations. `rows` are feature vectors.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &t) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * t;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Every `k`-subset of `0..n`.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

use rand::SeedableRng;
use vidsum::autodiff::{gru_block_shapes, gru_cell, ops, ParamSet, PoolMode, Tape};
use vidsum::evaluator::{ensemble_predict, EnsembleWeights};

pub const INSTANCES: usize = 100;

fn dims(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

/// Worst relative error of each op against its scalar-loop oracle over
/// `INSTANCES` random small instances.
pub fn oracle_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![
        ("linear", 0.0f64),
        ("temporal_conv1d", 0.0),
        ("pool_mean", 0.0),
        ("pool_max", 0.0),
        ("gru_cell", 0.0),
        ("mse", 0.0),
        ("bce", 0.0),
        ("ensemble_predict", 0.0),
    ];
    for _ in 0..INSTANCES {
        let (n, p, q) = (dims(&mut r, 1, 6), dims(&mut r, 1, 6), dims(&mut r, 1, 6));
        let (x, w, b) = (rand_tensor(&mut r, &[n, p]), rand_tensor(&mut r, &[p, q]), rand_tensor(&mut r, &[q]));
        let got = ops::linear(&x, &w, Some(&b)).unwrap();
        let want = linear(x.data(), n, p, w.data(), q, Some(b.data()));
        worst[0].1 = worst[0].1.max(max_rel(got.data(), &want));

        let (k, d, c) = (dims(&mut r, 1, 4), dims(&mut r, 1, 5), dims(&mut r, 1, 5));
        let t = dims(&mut r, k, 12);
        let stride = dims(&mut r, 1, 3);
        let (x, kern) = (rand_tensor(&mut r, &[t, d]), rand_tensor(&mut r, &[k, d, c]));
        let got = ops::temporal_conv1d(&x, &kern, stride).unwrap();
        let want = conv1d(x.data(), t, d, kern.data(), k, c, stride);
        worst[1].1 = worst[1].1.max(max_rel(got.data(), &want));

        let (t, d) = (dims(&mut r, 1, 9), dims(&mut r, 1, 6));
        let x = rand_tensor(&mut r, &[t, d]);
        for (slot, mode, max) in [(2, PoolMode::Mean, false), (3, PoolMode::Max, true)] {
            let (got, _) = ops::pool_temporal(&x, mode).unwrap();
            worst[slot].1 = worst[slot].1.max(max_rel(got.data(), &pool(x.data(), t, d, max)));
        }

        let (din, dh) = (dims(&mut r, 1, 5), dims(&mut r, 1, 5));
        let mut params = ParamSet::new();
        for (name, shape) in gru_block_shapes(din, dh) {
            params.insert(format!("g.{name}"), rand_tensor(&mut r, &shape));
        }
        let (xv, hv) = (rand_vec(&mut r, din, -1.0, 1.0), rand_vec(&mut r, dh, -1.0, 1.0));
        let mut tape = Tape::new();
        let xn = tape.constant(Tensor::vector(xv.clone()));
        let hn = tape.constant(Tensor::vector(hv.clone()));
        let out = gru_cell(&mut tape, &params, "g", xn, hn).unwrap();
        let blocks = |name: &str| params.get(&format!("g.{name}")).unwrap().data().to_vec();
        let want = gru(&xv, &hv, &blocks);
        worst[4].1 = worst[4].1.max(max_rel(tape.value(out).data(), &want));

        let m = dims(&mut r, 1, 10);
        let (pr, tg) = (rand_vec(&mut r, m, -2.0, 2.0), rand_vec(&mut r, m, -2.0, 2.0));
        let got = ops::mse_loss(&Tensor::vector(pr.clone()), &Tensor::vector(tg.clone())).unwrap();
        worst[5].1 = worst[5].1.max(max_rel(&[got], &[mse(&pr, &tg)]));
        let logits = rand_vec(&mut r, m, -10.0, 10.0);
        let labels: Vec<f64> = (0..m).map(|_| f64::from(r.random_bool(0.5) as u8)).collect();
        let got = ops::bce_loss(&Tensor::vector(logits.clone()), &Tensor::vector(labels.clone())).unwrap();
        worst[6].1 = worst[6].1.max(max_rel(&[got], &[bce(&logits, &labels)]));

        let (models, s) = (dims(&mut r, 1, 4), dims(&mut r, 1, 12));
        let preds: Vec<Vec<f64>> = (0..models).map(|_| rand_vec(&mut r, s, 0.0, 1.0)).collect();
        let weights = EnsembleWeights {
            coefficients: rand_vec(&mut r, models, -1.0, 1.0),
            intercept: r.random_range(-1.0..1.0),
            ridge: false,
            degenerate: vec![],
        };
        let got = ensemble_predict(&preds, &weights).unwrap();
        let want = ensemble(&preds, &weights.coefficients, weights.intercept);
        worst[7].1 = worst[7].1.max(max_rel(&got, &want));
    }
    worst
}

pub mod cli {
    use std::fs;
    use std::path::Path;
    use std::process::{Command, Output};

    pub fn vidsum(dir: &Path, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_vidsum"))
            .args(args)
            .current_dir(dir)
            .output()
            .expect("spawn vidsum")
    }

    pub fn ok(dir: &Path, args: &[&str]) -> Vec<u8> {
        let out = vidsum(dir, args);
        assert!(
            out.status.success(),
            "vidsum {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    }

    const SMALL: &[&str] = &["--dim", "8", "--epochs", "2", "--seed", "5"];

    /// Runs every artifact-producing subcommand on a small synthetic set in
    /// `dir` (relative paths only) and returns each artifact's bytes, with
    /// the captured stdout of each invocation.
    pub fn full_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut logs = Vec::new();
        let mut run = |name: &str, args: Vec<&str>| logs.push((format!("stdout:{name}"), ok(dir, &args)));
        run(
            "synth",
            vec!["synth", "--out", "data", "--videos", "10", "--seed", "3", "--t-n-min", "7", "--t-n-max", "9", "--t-g", "6", "--fd", "5", "--wd", "3"],
        );
        let data = "data/manifest.json";
        let with = |head: &[&'static str], extra: &[&'static str]| -> Vec<&'static str> {
            head.iter().chain(SMALL).chain(extra).copied().collect()
        };
        run("train", with(&["train", "--data", data, "--out", "sup"], &["--dropout-p", "0.2", "--portions", "2", "--augment-at-inference", "true"]));
        run("pretrain", with(&["pretrain", "--data", data, "--out", "pre"], &[]));
        run("multitask", with(&["train-multitask", "--data", data, "--out", "mt", "--init", "pre/checkpoint.bin"], &["--alpha", "0.3"]));
        run("predict-sup", vec!["predict", "--checkpoint", "sup/checkpoint.bin", "--data", data, "--out", "sup.csv"]);
        run("predict-mt", vec!["predict", "--checkpoint", "mt/best.bin", "--data", data, "--out", "mt.csv"]);
        run("eval", vec!["eval", "--predictions", "sup.csv", "--data", data, "--out", "eval.json"]);
        run("baseline", vec!["baseline", "--data", data, "--trials", "50", "--seed", "2", "--out", "baseline.json"]);
        run("baseline-exact", vec!["baseline", "--data", data, "--exact", "--out", "exact.json"]);
        run("ensemble-fit", vec!["ensemble-fit", "--predictions", "sup.csv", "mt.csv", "--data", data, "--out", "weights.json"]);
        run("ensemble-apply", vec!["ensemble-apply", "--predictions", "sup.csv", "mt.csv", "--weights", "weights.json", "--out", "ens.csv"]);

        let mut files = Vec::new();
        collect(dir, dir, &mut files);
        files.sort();
        files.extend(logs);
        files
    }

    fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                collect(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
}
