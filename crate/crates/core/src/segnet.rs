//! Segment encoder: a frame-feature sequence is squeezed along time by two
//! temporal convolutions and mean pooling, then fused with the segment's
//! precomputed vector through a bottleneck block with a projected residual.

use rand::Rng;

use crate::autodiff::{ParamSet, PoolMode, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::rng;

/// Fewest frames the two-convolution stack accepts.
pub fn frame_footprint(arch: &Architecture) -> usize {
    arch.kernel_size + arch.conv_stride * (arch.kernel_size - 1)
}

pub fn param_shapes(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    let (k, fd, wd, sfd) = (arch.kernel_size, arch.dims.fd, arch.dims.wd, arch.sfd);
    let fused = sfd + wd;
    let b = arch.bottleneck_width();
    let mut v = vec![
        ("segnet.conv1.kernel", vec![k, fd, sfd]),
        ("segnet.conv2.kernel", vec![k, sfd, sfd]),
        ("segnet.frame_proj.weight", vec![sfd, sfd]),
        ("segnet.frame_proj.bias", vec![sfd]),
        ("segnet.fuse.res.weight", vec![fused, sfd]),
        ("segnet.fuse.res.bias", vec![sfd]),
        ("segnet.out.weight", vec![sfd, sfd]),
        ("segnet.out.bias", vec![sfd]),
    ];
    if arch.bottleneck {
        v.extend([
            ("segnet.fuse.down.weight", vec![fused, b]),
            ("segnet.fuse.down.bias", vec![b]),
            ("segnet.fuse.up.weight", vec![b, sfd]),
            ("segnet.fuse.up.bias", vec![sfd]),
        ]);
    }
    v.into_iter().map(|(p, s)| (p.to_string(), s)).collect()
}

fn dense<T: Real>(tape: &mut Tape<T>, params: &ParamSet<T>, name: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{name}.weight"))?;
    let b = tape.param(params, &format!("{name}.bias"))?;
    tape.linear(x, w, Some(b))
}

/// Frame sequence `[T_G, fd]` → frame-based vector `[sfd]`.
pub fn encode_frames<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    frames: Var,
) -> Result<Var> {
    let len = tape.value(frames).shape()[0];
    let footprint = frame_footprint(arch);
    if len < footprint {
        return Err(Error::SequenceTooShort {
            len,
            kernel: footprint,
        });
    }
    let k1 = tape.param(params, "segnet.conv1.kernel")?;
    let c1 = tape.conv1d(frames, k1, arch.conv_stride)?;
    let a1 = tape.relu(c1)?;
    let k2 = tape.param(params, "segnet.conv2.kernel")?;
    let c2 = tape.conv1d(a1, k2, arch.conv_stride)?;
    let a2 = tape.relu(c2)?;
    let pooled = tape.pool(a2, PoolMode::Mean)?;
    dense(tape, params, "segnet.frame_proj", pooled)
}

/// Inverted-dropout mask over the fused width: kept units scaled by `1/(1-p)`.
pub fn dropout_mask<T: Real>(width: usize, p: f64, seed: u64) -> Tensor<T> {
    let mut r = rng::stream(seed, "dropout-mask", &[]);
    let keep = T::lit(1.0 / (1.0 - p));
    Tensor::vector(
        (0..width)
            .map(|_| if r.random::<f64>() < p { T::zero() } else { keep })
            .collect(),
    )
}

/// Fuses `v_r: [sfd]` with the segment vector `v_w: [wd]` into the final
/// segment embedding `[sfd]`.
pub fn fuse_segment<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    v_r: Var,
    v_w: Var,
    dropout_mask: Option<Tensor<T>>,
) -> Result<Var> {
    let (lr, lw) = (tape.value(v_r).len(), tape.value(v_w).len());
    if lr != arch.sfd || lw != arch.dims.wd {
        return Err(Error::shape("fuse_segment", &[lr, lw], &[arch.sfd, arch.dims.wd]));
    }
    let joined = tape.concat(&[v_r, v_w])?;
    let mut fused = dense(tape, params, "segnet.fuse.res", joined)?;
    if arch.bottleneck {
        let down = dense(tape, params, "segnet.fuse.down", joined)?;
        let act = tape.relu(down)?;
        let up = dense(tape, params, "segnet.fuse.up", act)?;
        fused = tape.add(up, fused)?;
    }
    if let Some(mask) = dropout_mask {
        let m = tape.constant(mask);
        fused = tape.mul(fused, m)?;
    }
    dense(tape, params, "segnet.out", fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::*;
    use crate::model::{init_params, segment_embeddings};

    fn zero_params(arch: &Architecture) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        for (path, shape) in param_shapes(arch) {
            p.insert(path, Tensor::zeros(&shape));
        }
        p
    }

    #[test]
    fn zero_network_gives_zero_output() {
        let arch = tiny_arch();
        let p = zero_params(&arch);
        let mut tape = Tape::new();
        let frames = tape.constant(Tensor::full(&[6, 4], 0.7));
        let v_r = encode_frames(&mut tape, &p, &arch, frames).unwrap();
        assert!(tape.value(v_r).data().iter().all(|&x| x == 0.0));
        let v_w = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let e = fuse_segment(&mut tape, &p, &arch, v_r, v_w, None).unwrap();
        assert_eq!(tape.value(e).shape(), &[arch.sfd]);
        assert!(tape.value(e).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_frames_invariant_to_length() {
        let arch = tiny_arch();
        let p = init_params::<f64>(&arch, 5).unwrap();
        let run = |len: usize| {
            let mut tape = Tape::new();
            let frames = tape.constant(Tensor::from_f64(&[len, 4], &[0.3, -0.2, 0.9, 0.1].repeat(len)).unwrap());
            let v = encode_frames(&mut tape, &p, &arch, frames).unwrap();
            tape.value(v).data().to_vec()
        };
        let base = run(6);
        for len in [7, 9, 16] {
            for (a, b) in base.iter().zip(run(len)) {
                assert!((a - b).abs() < 1e-12, "{len}");
            }
        }
    }

    #[test]
    fn short_sequence_rejected() {
        let arch = tiny_arch();
        let p = zero_params(&arch);
        let mut tape = Tape::new();
        let frames = tape.constant(Tensor::zeros(&[4, 4]));
        assert!(matches!(
            encode_frames(&mut tape, &p, &arch, frames),
            Err(Error::SequenceTooShort { len: 4, kernel: 5 })
        ));
    }

    #[test]
    fn fuse_dim_mismatch() {
        let arch = tiny_arch();
        let p = zero_params(&arch);
        let mut tape = Tape::new();
        let v_r = tape.constant(Tensor::zeros(&[4]));
        let v_w = tape.constant(Tensor::zeros(&[2]));
        assert!(fuse_segment(&mut tape, &p, &arch, v_r, v_w, None).is_err());
    }

    #[test]
    fn segment_vector_moves_embedding() {
        // central difference of the embedding w.r.t. each V_w coordinate
        let arch = tiny_arch();
        let p = init_params::<f64>(&arch, 5).unwrap();
        let embed = |vw: &[f64]| {
            let mut tape = Tape::new();
            let frames = tape.constant(Tensor::full(&[6, 4], 0.5));
            let v_r = encode_frames(&mut tape, &p, &arch, frames).unwrap();
            let v_w = tape.constant(Tensor::vector(vw.to_vec()));
            let e = fuse_segment(&mut tape, &p, &arch, v_r, v_w, None).unwrap();
            tape.value(e).data().to_vec()
        };
        let base = [0.2, -0.4, 0.6];
        let h = 1e-4;
        let mut biggest = 0.0f64;
        for j in 0..3 {
            let mut up = base;
            let mut dn = base;
            up[j] += h;
            dn[j] -= h;
            for (a, b) in embed(&up).iter().zip(embed(&dn)) {
                biggest = biggest.max(((a - b) / (2.0 * h)).abs());
            }
        }
        assert!(biggest >= 1e-6, "{biggest}");
    }

    #[test]
    fn embeddings_are_segment_local() {
        let arch = tiny_arch();
        let p = init_params::<f64>(&arch, 1).unwrap();
        let rec = random_record(&arch, 4, 9);
        let mut edited = rec.clone();
        let n = arch.dims.t_g * arch.dims.fd;
        for x in &mut edited.frame_features.data_mut()[2 * n..3 * n] {
            *x += 0.5;
        }
        let emb = |r| {
            let mut tape = Tape::new();
            let e = segment_embeddings(&mut tape, &p, &arch, r, None).unwrap();
            e.iter().map(|&v| tape.value(v).data().to_vec()).collect::<Vec<_>>()
        };
        let (a, b) = (emb(&rec), emb(&edited));
        for i in [0, 1, 3] {
            assert_eq!(a[i], b[i]);
        }
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn no_bottleneck_drops_its_params() {
        let mut arch = tiny_arch();
        arch.bottleneck = false;
        assert!(param_shapes(&arch).iter().all(|(p, _)| !p.contains("down") && !p.contains("up.")));
        let p = init_params::<f64>(&arch, 0).unwrap();
        let rec = random_record(&arch, 2, 0);
        let mut tape = Tape::new();
        segment_embeddings(&mut tape, &p, &arch, &rec, None).unwrap();
    }

    #[test]
    fn dropout_mask_keeps_expected_fraction() {
        let m = dropout_mask::<f64>(10_000, 0.25, 3);
        let kept = m.data().iter().filter(|&&x| x > 0.0).count();
        assert!((kept as f64 / 10_000.0 - 0.75).abs() < 0.02);
        assert!(m.data().iter().all(|&x| x == 0.0 || (x - 4.0 / 3.0).abs() < 1e-12));
    }
}
