//! Video records, the on-disk manifest format, planted-signal synthetic
//! data, and whole-video train/validation splits.
//!
//! A manifest is a JSON file
//! `{version: 1, dims: {t_g, fd, wd}, videos: [{id, t_n, frames_blob, segfeat_blob, importance_blob}]}`
//! whose blobs are headerless little-endian `f32`, row-major, holding
//! `t_n*t_g*fd`, `t_n*wd` and `t_n` values. Blob paths are relative to the
//! manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDims {
    pub t_g: usize,
    pub fd: usize,
    pub wd: usize,
}

/// One long video: per-segment frame-feature sequences, per-segment
/// precomputed vectors, and mean annotator importance.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `[T_N, T_G, fd]`
    pub frame_features: Tensor<f32>,
    /// `[T_N, wd]`
    pub segment_features: Tensor<f32>,
    /// `[T_N]`
    pub importance: Tensor<f32>,
}

impl VideoRecord {
    pub fn new(
        video_id: impl Into<String>,
        frame_features: Tensor<f32>,
        segment_features: Tensor<f32>,
        importance: Tensor<f32>,
    ) -> Result<Self> {
        let rec = Self {
            video_id: video_id.into(),
            frame_features,
            segment_features,
            importance,
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        let t_n = self.importance.len();
        let ff = self.frame_features.shape();
        let sf = self.segment_features.shape();
        if self.importance.rank() != 1 || ff.len() != 3 || sf.len() != 2 || ff[0] != t_n || sf[0] != t_n {
            return Err(Error::Invalid(format!(
                "video `{}`: inconsistent segment counts (frames {ff:?}, segment features {sf:?}, importance {:?})",
                self.video_id,
                self.importance.shape()
            )));
        }
        for (what, t) in [
            ("frame features", &self.frame_features),
            ("segment features", &self.segment_features),
            ("importance", &self.importance),
        ] {
            t.ensure_finite(&format!("video `{}` {what}", self.video_id))?;
        }
        if self.importance.data().iter().any(|&a| a < 0.0) {
            return Err(Error::Invalid(format!(
                "video `{}`: negative importance score",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn num_segments(&self) -> usize {
        self.importance.len()
    }

    pub fn dims(&self) -> DatasetDims {
        let ff = self.frame_features.shape();
        DatasetDims {
            t_g: ff[1],
            fd: ff[2],
            wd: self.segment_features.shape()[1],
        }
    }

    /// Frame-feature sequence of segment `i` as `[T_G, fd]`.
    pub fn frames(&self, i: usize) -> Tensor<f32> {
        let ff = self.frame_features.shape();
        let n = ff[1] * ff[2];
        Tensor::new(
            vec![ff[1], ff[2]],
            self.frame_features.data()[i * n..(i + 1) * n].to_vec(),
        )
        .expect("frame slice")
    }

    pub fn segment_vector(&self, i: usize) -> Tensor<f32> {
        Tensor::vector(self.segment_features.row(i).to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dims: DatasetDims,
    records: Vec<VideoRecord>,
}

impl Dataset {
    pub fn new(dims: DatasetDims, records: Vec<VideoRecord>) -> Result<Self> {
        if dims.t_g == 0 || dims.fd == 0 || dims.wd == 0 {
            return Err(Error::Invalid(format!("dataset dims must be positive: {dims:?}")));
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.dims() != dims {
                return Err(Error::Invalid(format!(
                    "video `{}` has dims {:?}, dataset expects {dims:?}",
                    r.video_id,
                    r.dims()
                )));
            }
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate video id `{}`", r.video_id)));
            }
        }
        Ok(Self { dims, records })
    }

    pub fn dims(&self) -> DatasetDims {
        self.dims
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    pub fn max_importance(&self) -> f32 {
        self.records
            .iter()
            .flat_map(|r| r.importance.data().iter().copied())
            .fold(0.0, f32::max)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dims: self.dims,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dims: DatasetDims,
    videos: Vec<ManifestVideo>,
}

#[derive(Serialize, Deserialize)]
struct ManifestVideo {
    id: String,
    t_n: usize,
    frames_blob: String,
    segfeat_blob: String,
    importance_blob: String,
}

fn read_blob(path: &Path, expected_values: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected_values * 4 {
        return Err(Error::PayloadSize {
            what: path.display().to_string(),
            expected: expected_values * 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_blob(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let d = manifest.dims;
    let mut records = Vec::with_capacity(manifest.videos.len());
    for v in manifest.videos {
        if v.t_n == 0 {
            return Err(Error::Invalid(format!("video `{}` has no segments", v.id)));
        }
        let frames = read_blob(&base.join(&v.frames_blob), v.t_n * d.t_g * d.fd)?;
        let segfeat = read_blob(&base.join(&v.segfeat_blob), v.t_n * d.wd)?;
        let importance = read_blob(&base.join(&v.importance_blob), v.t_n)?;
        records.push(VideoRecord::new(
            v.id,
            Tensor::new(vec![v.t_n, d.t_g, d.fd], frames)?,
            Tensor::new(vec![v.t_n, d.wd], segfeat)?,
            Tensor::vector(importance),
        )?);
    }
    Dataset::new(d, records)
}

/// Writes `manifest.json` plus three blobs per video into `dir`.
/// Returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut videos = Vec::with_capacity(ds.len());
    for (i, r) in ds.records().iter().enumerate() {
        let stem = format!("v{i:05}");
        let entry = ManifestVideo {
            id: r.video_id.clone(),
            t_n: r.num_segments(),
            frames_blob: format!("{stem}.frames.bin"),
            segfeat_blob: format!("{stem}.segfeat.bin"),
            importance_blob: format!("{stem}.importance.bin"),
        };
        write_blob(&dir.join(&entry.frames_blob), r.frame_features.data())?;
        write_blob(&dir.join(&entry.segfeat_blob), r.segment_features.data())?;
        write_blob(&dir.join(&entry.importance_blob), r.importance.data())?;
        videos.push(entry);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        dims: ds.dims(),
        videos,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_videos: usize,
    pub t_n_min: usize,
    pub t_n_max: usize,
    pub t_g: usize,
    pub fd: usize,
    pub wd: usize,
    pub noise_std: f64,
    /// Lag-one correlation of consecutive segments' latent content, so that
    /// temporal order carries information.
    pub temporal_correlation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_videos: 200,
            t_n_min: 12,
            t_n_max: 24,
            t_g: 16,
            fd: 32,
            wd: 16,
            noise_std: 0.02,
            temporal_correlation: 0.9,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(Error::range("num_videos", self.num_videos, ">= 1"));
        }
        if self.t_n_min == 0 || self.t_n_min > self.t_n_max {
            return Err(Error::range(
                "t_n range",
                format!("[{}, {}]", self.t_n_min, self.t_n_max),
                "nonempty with minimum >= 1",
            ));
        }
        for (name, v) in [("t_g", self.t_g), ("fd", self.fd), ("wd", self.wd)] {
            if v == 0 {
                return Err(Error::range(name, v, ">= 1"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::range("noise_std", self.noise_std, ">= 0"));
        }
        if !(0.0..1.0).contains(&self.temporal_correlation) {
            return Err(Error::range("temporal_correlation", self.temporal_correlation, "[0, 1)"));
        }
        Ok(())
    }
}

/// The latent weights a synthetic dataset was planted with.
///
/// Noiseless importance of segment `i` is
/// `sigmoid(w_frames · mean_t(S_i) + w_segment · V_i + w_context · mean_j(V_j))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGenerator {
    pub w_frames: Vec<f64>,
    pub w_segment: Vec<f64>,
    pub w_context: Vec<f64>,
}

impl SyntheticGenerator {
    /// Pre-sigmoid planted score per segment, evaluated on the stored features.
    pub fn planted_logits(&self, rec: &VideoRecord) -> Vec<f64> {
        let t_n = rec.num_segments();
        let dims = rec.dims();
        let mut context = vec![0.0f64; dims.wd];
        for i in 0..t_n {
            for (c, &v) in context.iter_mut().zip(rec.segment_features.row(i)) {
                *c += f64::from(v);
            }
        }
        for c in &mut context {
            *c /= t_n as f64;
        }
        let ctx_term: f64 = self.w_context.iter().zip(&context).map(|(w, c)| w * c).sum();
        let frames = rec.frame_features.data();
        (0..t_n)
            .map(|i| {
                let mut pooled = vec![0.0f64; dims.fd];
                for t in 0..dims.t_g {
                    let off = (i * dims.t_g + t) * dims.fd;
                    for (p, &v) in pooled.iter_mut().zip(&frames[off..off + dims.fd]) {
                        *p += f64::from(v);
                    }
                }
                let frame_term: f64 = self
                    .w_frames
                    .iter()
                    .zip(&pooled)
                    .map(|(w, p)| w * p / dims.t_g as f64)
                    .sum();
                let seg_term: f64 = self
                    .w_segment
                    .iter()
                    .zip(rec.segment_features.row(i))
                    .map(|(w, &v)| w * f64::from(v))
                    .sum();
                frame_term + seg_term + ctx_term
            })
            .collect()
    }

    /// Noiseless importance per segment.
    pub fn planted_scores(&self, rec: &VideoRecord) -> Vec<f32> {
        self.planted_logits(rec)
            .into_iter()
            .map(|z| (1.0 / (1.0 + (-z).exp())) as f32)
            .collect()
    }
}

const FRAME_NOISE: f64 = 0.5;
const FRAME_WEIGHT_SCALE: f64 = 1.2;
const SEGMENT_WEIGHT_SCALE: f64 = 0.8;
const CONTEXT_WEIGHT_SCALE: f64 = 1.0;
const VIDEO_OFFSET_SCALE: f64 = 0.7;

fn normal_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// First-order autoregressive sequence of `len` unit-variance vectors.
fn ar_sequence<R: Rng>(rng: &mut R, len: usize, dim: usize, rho: f64) -> Vec<Vec<f64>> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut cur = normal_vec(rng, dim, 1.0);
    for _ in 0..len {
        out.push(cur.clone());
        let fresh = normal_vec(rng, dim, innov);
        for (c, f) in cur.iter_mut().zip(fresh) {
            *c = rho * *c + f;
        }
    }
    out
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, SyntheticGenerator)> {
    cfg.validate()?;
    let mut wrng = rng::stream(cfg.seed, "synthetic.weights", &[]);
    let generator = SyntheticGenerator {
        w_frames: normal_vec(&mut wrng, cfg.fd, FRAME_WEIGHT_SCALE / (cfg.fd as f64).sqrt()),
        w_segment: normal_vec(&mut wrng, cfg.wd, SEGMENT_WEIGHT_SCALE / (cfg.wd as f64).sqrt()),
        w_context: normal_vec(
            &mut wrng,
            cfg.wd,
            CONTEXT_WEIGHT_SCALE / (VIDEO_OFFSET_SCALE * (cfg.wd as f64).sqrt()),
        ),
    };
    let dims = DatasetDims {
        t_g: cfg.t_g,
        fd: cfg.fd,
        wd: cfg.wd,
    };
    let rho = cfg.temporal_correlation;
    let mut records = Vec::with_capacity(cfg.num_videos);
    for v in 0..cfg.num_videos {
        let mut r = rng::stream(cfg.seed, "synthetic.video", &[v as u64]);
        let t_n = r.random_range(cfg.t_n_min..=cfg.t_n_max);
        let latent = ar_sequence(&mut r, t_n, cfg.fd, rho);
        let mut frames = Vec::with_capacity(t_n * cfg.t_g * cfg.fd);
        for u in &latent {
            for _ in 0..cfg.t_g {
                for &ui in u {
                    let eps: f64 = r.sample(StandardNormal);
                    frames.push((ui + FRAME_NOISE * eps) as f32);
                }
            }
        }
        let offset = normal_vec(&mut r, cfg.wd, VIDEO_OFFSET_SCALE);
        let seg_latent = ar_sequence(&mut r, t_n, cfg.wd, rho);
        let mut segfeat = Vec::with_capacity(t_n * cfg.wd);
        for e in &seg_latent {
            for (o, ei) in offset.iter().zip(e) {
                segfeat.push((o + ei) as f32);
            }
        }
        let mut rec = VideoRecord::new(
            format!("synth-{v:05}"),
            Tensor::new(vec![t_n, cfg.t_g, cfg.fd], frames)?,
            Tensor::new(vec![t_n, cfg.wd], segfeat)?,
            Tensor::zeros(&[t_n]),
        )?;
        let planted = generator.planted_scores(&rec);
        let importance = planted
            .into_iter()
            .map(|a| {
                let noise = if cfg.noise_std > 0.0 {
                    cfg.noise_std * r.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                ((f64::from(a) + noise).max(0.0)) as f32
            })
            .collect::<Vec<_>>();
        rec.importance = Tensor::vector(importance);
        records.push(rec);
    }
    Ok((Dataset::new(dims, records)?, generator))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Partitions whole videos into train and validation sets.
pub fn split_by_video(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(Error::range("train_fraction", spec.train_fraction, "(0, 1]"));
    }
    if ds.is_empty() {
        return Err(Error::Invalid("cannot split an empty dataset".into()));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, "split", &[]));
    let mut n_train = (spec.train_fraction * n as f64).round() as usize;
    if spec.train_fraction < 1.0 && n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let n_train = n_train.clamp(1, n);
    Ok((ds.select(&order[..n_train]), ds.select(&order[n_train..])))
}
