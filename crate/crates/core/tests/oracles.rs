mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidsum::audit::{toy_architecture, toy_video};
use vidsum::autodiff::{grad_check, gru_block_shapes, gru_cell, ops, Activation, ParamSet, PoolMode, Tape, Tensor};
use vidsum::model::{self, init_params};
use vidsum::selfsup;

#[test]
fn every_op_matches_its_scalar_oracle() {
    for (name, err) in oracle_suite(2024) {
        assert!(err <= 1e-6, "{name}: {err:e}");
    }
}

#[test]
fn linear_seed_7() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let (x, w, b) = (rand_tensor(&mut r, &[5, 4]), rand_tensor(&mut r, &[4, 3]), rand_tensor(&mut r, &[3]));
    let got = ops::linear(&x, &w, Some(&b)).unwrap();
    assert_eq!(got.shape(), &[5, 3]);
    assert!(max_rel(got.data(), &linear(x.data(), 5, 4, w.data(), 3, Some(b.data()))) <= 1e-6);
}

#[test]
fn strided_conv_16x8() {
    let mut r = ChaCha8Rng::seed_from_u64(16);
    let (x, k) = (rand_tensor(&mut r, &[16, 8]), rand_tensor(&mut r, &[3, 8, 4]));
    let got = ops::temporal_conv1d(&x, &k, 2).unwrap();
    assert_eq!(got.shape(), &[7, 4]);
    assert!(max_rel(got.data(), &conv1d(x.data(), 16, 8, k.data(), 3, 4, 2)) <= 1e-6);
}

#[test]
fn max_pool_9x5_scan_and_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut r, &[9, 5]);
    let (got, _) = ops::pool_temporal(&x, PoolMode::Max).unwrap();
    assert_eq!(got.data(), pool(x.data(), 9, 5, true).as_slice());

    let target = rand_tensor(&mut r, &[5]);
    let mut p = ParamSet::new();
    p.insert("x", x);
    let rep = grad_check(
        |t, ps| {
            let x = t.param(ps, "x")?;
            let y = t.pool(x, PoolMode::Max)?;
            t.mse(y, &target)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(rep.max_rel_error <= 1e-4, "{rep:?}");
}

#[test]
fn gru_seed_11_all_nine_blocks() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let (din, dh) = (4, 3);
    let mut p = ParamSet::new();
    for (name, shape) in gru_block_shapes(din, dh) {
        p.insert(format!("g.{name}"), rand_tensor(&mut r, &shape));
    }
    let (x, h, target) = (rand_tensor(&mut r, &[din]), rand_tensor(&mut r, &[dh]), rand_tensor(&mut r, &[dh]));
    let rep = grad_check(
        |t, ps| {
            let (xn, hn) = (t.constant(x.clone()), t.constant(h.clone()));
            let out = gru_cell(t, ps, "g", xn, hn)?;
            t.mse(out, &target)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert_eq!(rep.coordinates, din * dh * 3 + dh * dh * 3 + dh * 3);
    assert!(rep.max_rel_error <= 1e-4, "{rep:?}");

    // each block gets a nonzero gradient
    let mut tape = Tape::new();
    let (xn, hn) = (tape.constant(x), tape.constant(h));
    let out = gru_cell(&mut tape, &p, "g", xn, hn).unwrap();
    let loss = tape.mse(out, &target).unwrap();
    let grads = tape.param_grads(&tape.backward(loss).unwrap()).unwrap();
    assert_eq!(grads.len(), 9);
    for (path, g) in grads.iter() {
        assert!(g.data().iter().any(|&v| v != 0.0), "{path}");
    }
}

fn segnet_check(seed: u64) -> f64 {
    let arch = toy_architecture();
    let rec = toy_video(&arch, 1, seed).unwrap();
    let mut p = init_params::<f64>(&arch, seed).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in p.iter_mut().filter(|(_, t)| t.rank() == 1) {
        *t = Tensor::vector(rand_vec(&mut r, t.len(), -0.05, 0.05));
    }
    let segnet_only = p.with_prefix("segnet.");
    let target = rand_tensor(&mut r, &[arch.sfd]);
    grad_check(
        |t, ps| {
            let emb = model::segment_embeddings(t, ps, &arch, &rec, None)?;
            t.mse(emb[0], &target)
        },
        &segnet_only,
        1e-5,
    )
    .unwrap()
    .max_rel_error
}

#[test]
fn segnet_gradients_seed_5_and_others() {
    for seed in [5, 0, 1, 2, 3, 4] {
        let err = segnet_check(seed);
        assert!(err <= 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn mse_of_linear_gradcheck() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut p = ParamSet::new();
    p.insert("x", rand_tensor(&mut r, &[3, 4]));
    p.insert("w", rand_tensor(&mut r, &[4, 2]));
    p.insert("b", rand_tensor(&mut r, &[2]));
    let target = rand_tensor(&mut r, &[6]);
    let rep = grad_check(
        |t, ps| {
            let (x, w, b) = (t.param(ps, "x")?, t.param(ps, "w")?, t.param(ps, "b")?);
            let y = t.linear(x, w, Some(b))?;
            let y = t.flatten(y)?;
            t.mse(y, &target)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
}

#[test]
fn bce_seed_3_direct_formula() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let logits = rand_vec(&mut r, 20, -8.0, 8.0);
    let labels: Vec<f64> = (0..20).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let got = ops::bce_loss(&Tensor::vector(logits.clone()), &Tensor::vector(labels.clone())).unwrap();
    assert!((got - bce(&logits, &labels)).abs() <= 1e-10);
}

/// Joint-objective gradients are the supervised gradients plus β times the
/// odd-position gradients.
#[test]
fn multitask_gradient_decomposes() {
    let arch = toy_architecture();
    let rec = toy_video(&arch, 4, 3).unwrap();
    let p = init_params::<f64>(&arch, 3).unwrap();
    let target = rec.importance.cast::<f64>();
    let plan = selfsup::plan_shuffle(4, 0.5, 3).unwrap();
    let beta = 0.7;

    let grads = |which: u8| {
        let mut t = Tape::new();
        let segments = model::segment_embeddings(&mut t, &p, &arch, &rec, None).unwrap();
        let shuffled: Vec<_> = plan.source_order(4).iter().map(|&i| segments[i]).collect();
        let enc = vidsum::videonet::encode_video(&mut t, &p, &arch, &shuffled).unwrap();
        let l_self = selfsup::selfsup_loss(&mut t, &p, enc.per_step, &plan.labels(4)).unwrap();
        let fwd = model::scores_from_segments(&mut t, &p, &arch, segments, 1, 0).unwrap();
        let l_sup = t.mse(fwd.scores, &target).unwrap();
        let loss = match which {
            0 => l_sup,
            1 => l_self,
            _ => selfsup::multitask_loss(&mut t, l_sup, l_self, beta).unwrap(),
        };
        let g = t.backward(loss).unwrap();
        t.param_grads(&g).unwrap()
    };
    let (sup, slf, joint) = (grads(0), grads(1), grads(2));
    for (path, g) in joint.iter() {
        let want: Vec<f64> = match (sup.get(path), slf.get(path)) {
            (Some(a), Some(b)) => a.data().iter().zip(b.data()).map(|(a, b)| a + beta * b).collect(),
            (Some(a), None) => a.data().to_vec(),
            (None, Some(b)) => b.data().iter().map(|b| beta * b).collect(),
            (None, None) => panic!("{path}"),
        };
        for (x, y) in g.data().iter().zip(&want) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{path}: {x} vs {y}");
        }
    }
}

#[test]
fn forward_is_pure() {
    let arch = toy_architecture();
    let rec = toy_video(&arch, 5, 1).unwrap();
    let p = init_params::<f64>(&arch, 1).unwrap();
    let before = p.clone();
    let a = model::predict_scores(&p, &arch, &rec, 2, 9).unwrap();
    let b = model::predict_scores(&p, &arch, &rec, 2, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(p, before);
}

proptest! {
    #[test]
    fn bce_finite_on_large_logits(l in -1e4f64..1e4, y in 0u8..2) {
        let v = ops::bce_loss(&Tensor::vector(vec![l]), &Tensor::vector(vec![f64::from(y)])).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
        let v32 = ops::bce_loss(&Tensor::vector(vec![l as f32]), &Tensor::vector(vec![f32::from(y)])).unwrap();
        prop_assert!(v32.is_finite());
    }

    #[test]
    fn squashing_stays_inside_open_range(x in -1e4f64..1e4) {
        let t = Tensor::vector(vec![x]);
        let s = ops::activation(&t, Activation::Sigmoid).unwrap().data()[0];
        let h = ops::activation(&t, Activation::Tanh).unwrap().data()[0];
        prop_assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        prop_assert!(h > -1.0 && h < 1.0, "tanh({x}) = {h}");
        let s32 = ops::sigmoid(x as f32);
        prop_assert!(s32 > 0.0 && s32 < 1.0);
    }

    #[test]
    fn linear_matches_loop(seed in any::<u64>(), n in 1usize..5, p in 1usize..5, q in 1usize..5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (rand_tensor(&mut r, &[n, p]), rand_tensor(&mut r, &[p, q]));
        let got = ops::linear(&x, &w, None).unwrap();
        prop_assert!(max_rel(got.data(), &linear(x.data(), n, p, w.data(), q, None)) <= 1e-12);
    }
}
