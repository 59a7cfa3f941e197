//! Architecture description and the assembled per-video forward pass
//! (SegNet → VideoNet → HighlightNet).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Real, Tape, Tensor, Var};
use crate::dataset::{DatasetDims, VideoRecord};
use crate::error::{Error, Result};
use crate::{highlight, rng, segnet, selfsup, videonet};

/// Every width and structural switch of the three subnetworks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dims: DatasetDims,
    /// Segment embedding width (also the frame-branch width).
    pub sfd: usize,
    /// Video context width.
    pub vd: usize,
    /// GRU hidden width per direction.
    pub d_h: usize,
    pub gru_layers: usize,
    pub kernel_size: usize,
    pub conv_stride: usize,
    /// Bottleneck branch in the segment fusion block.
    pub bottleneck: bool,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_g", self.dims.t_g),
            ("fd", self.dims.fd),
            ("wd", self.dims.wd),
            ("sfd", self.sfd),
            ("vd", self.vd),
            ("d_h", self.d_h),
            ("gru_layers", self.gru_layers),
            ("kernel_size", self.kernel_size),
            ("conv_stride", self.conv_stride),
        ] {
            if v == 0 {
                return Err(Error::range(name, v, ">= 1"));
            }
        }
        let footprint = segnet::frame_footprint(self);
        if self.dims.t_g < footprint {
            return Err(Error::SequenceTooShort {
                len: self.dims.t_g,
                kernel: footprint,
            });
        }
        Ok(())
    }

    /// Inner width of the fusion bottleneck, `ceil(sfd / 4)`.
    pub fn bottleneck_width(&self) -> usize {
        self.sfd.div_ceil(4)
    }

    /// Every parameter path with its shape, in path order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut v = segnet::param_shapes(self);
        v.extend(videonet::param_shapes(self));
        v.extend(highlight::param_shapes(self));
        v.extend(selfsup::param_shapes(self));
        v.sort();
        v
    }
}

/// Balanced-variance uniform initialization: weights in
/// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_params<T: Real>(arch: &Architecture, seed: u64) -> Result<ParamSet<T>> {
    arch.validate()?;
    let mut rng = rng::stream(seed, "init", &[]);
    let mut params = ParamSet::new();
    for (path, shape) in arch.param_shapes() {
        let t = if shape.len() == 1 {
            Tensor::zeros(&shape)
        } else {
            let (fan_in, fan_out) = match shape.as_slice() {
                [k, d, c] => (k * d, k * c),
                [i, o] => (*i, *o),
                _ => unreachable!("parameters are vectors, matrices or conv kernels"),
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
            Tensor::new(shape, data)?
        };
        params.insert(path, t);
    }
    Ok(params)
}

/// Checks that `params` has exactly the paths and shapes `arch` requires.
pub fn check_params<T: Real>(arch: &Architecture, params: &ParamSet<T>) -> Result<()> {
    let want = arch.param_shapes();
    if want.len() != params.len() {
        return Err(Error::Invalid(format!(
            "parameter set has {} entries, architecture needs {}",
            params.len(),
            want.len()
        )));
    }
    for (path, shape) in want {
        let got = params.get(&path)?;
        if got.shape() != shape.as_slice() {
            return Err(Error::Shape {
                op: "parameter",
                lhs: got.shape().to_vec(),
                rhs: shape,
            });
        }
    }
    Ok(())
}

/// Dropout applied after the fusion bottleneck during training.
#[derive(Clone, Copy, Debug)]
pub struct Dropout {
    pub p: f64,
    pub seed: u64,
}

/// Segment embeddings for every segment of `rec`, one `[sfd]` node each.
pub fn segment_embeddings<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    rec: &VideoRecord,
    dropout: Option<Dropout>,
) -> Result<Vec<Var>> {
    if rec.dims() != arch.dims {
        return Err(Error::Invalid(format!(
            "video `{}` has dims {:?}, model expects {:?}",
            rec.video_id,
            rec.dims(),
            arch.dims
        )));
    }
    (0..rec.num_segments())
        .map(|i| {
            let frames = tape.constant(rec.frames(i).cast());
            let segvec = tape.constant(rec.segment_vector(i).cast());
            let v_r = segnet::encode_frames(tape, params, arch, frames)?;
            let mask = dropout
                .filter(|d| d.p > 0.0)
                .map(|d| segnet::dropout_mask::<T>(arch.sfd, d.p, rng::derive_seed(d.seed, "dropout", &[i as u64])));
            segnet::fuse_segment(tape, params, arch, v_r, segvec, mask)
        })
        .collect()
}

/// Nodes produced by one supervised forward pass over a video.
pub struct VideoForward {
    pub segments: Vec<Var>,
    pub context: Var,
    pub scores: Var,
}

/// Importance prediction for every segment. `portions > 1` replaces the
/// plain context with the portion-averaged one.
pub fn forward_scores<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    rec: &VideoRecord,
    portions: usize,
    portion_seed: u64,
    dropout: Option<Dropout>,
) -> Result<VideoForward> {
    let segments = segment_embeddings(tape, params, arch, rec, dropout)?;
    scores_from_segments(tape, params, arch, segments, portions, portion_seed)
}

pub fn scores_from_segments<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    arch: &Architecture,
    segments: Vec<Var>,
    portions: usize,
    portion_seed: u64,
) -> Result<VideoForward> {
    let context = if portions > 1 {
        videonet::augment_portions(tape, params, arch, &segments, portions, portion_seed)?
    } else {
        videonet::encode_video(tape, params, arch, &segments)?.context
    };
    let seg_matrix = tape.stack_rows(&segments)?;
    let scores = highlight::predict_importance(tape, params, arch, seg_matrix, context)?;
    Ok(VideoForward {
        segments,
        context,
        scores,
    })
}

/// Inference-only score prediction.
pub fn predict_scores<T: Real>(
    params: &ParamSet<T>,
    arch: &Architecture,
    rec: &VideoRecord,
    portions: usize,
    portion_seed: u64,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let fwd = forward_scores(&mut tape, params, arch, rec, portions, portion_seed, None)?;
    let scores = tape.value(fwd.scores);
    scores.ensure_finite(&format!("predictions for `{}`", rec.video_id))?;
    Ok(scores.data().to_vec())
}
