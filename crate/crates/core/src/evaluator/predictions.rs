//! Prediction CSV (`video_id,segment_index,score`) and the JSON report.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SummaryScoreReport;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub video_id: String,
    pub scores: Vec<f64>,
}

/// Per-segment scores for a list of videos, in file order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub videos: Vec<VideoPrediction>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    video_id: String,
    segment_index: usize,
    score: f64,
}

impl Predictions {
    pub fn get(&self, video_id: &str) -> Option<&VideoPrediction> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Scores reordered to follow `ds`, checking every video is present
    /// with one score per segment.
    pub fn aligned_to(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        ds.records()
            .iter()
            .map(|rec| {
                let p = self
                    .get(&rec.video_id)
                    .ok_or_else(|| Error::Invalid(format!("no predictions for video `{}`", rec.video_id)))?;
                if p.scores.len() != rec.num_segments() {
                    return Err(Error::Invalid(format!(
                        "video `{}`: {} predictions for {} segments",
                        rec.video_id,
                        p.scores.len(),
                        rec.num_segments()
                    )));
                }
                Ok(p.scores.clone())
            })
            .collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("prediction csv: {e}"))
}

pub fn write_predictions_to<W: Write>(preds: &Predictions, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for v in &preds.videos {
        for (i, &score) in v.scores.iter().enumerate() {
            out.serialize(Row {
                video_id: v.video_id.clone(),
                segment_index: i,
                score,
            })
            .map_err(csv_err)?;
        }
    }
    if preds.videos.is_empty() {
        out.write_record(["video_id", "segment_index", "score"]).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(format!("prediction csv: {e}")))?;
    Ok(())
}

pub fn write_predictions(preds: &Predictions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions_to(preds, f)
}

/// Rows of one video must be contiguous and numbered `0..T_N` in order.
pub fn read_predictions_from<R: Read>(r: R) -> Result<Predictions> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut videos: Vec<VideoPrediction> = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_err)?;
        if !row.score.is_finite() {
            return Err(Error::NonFinite(format!("prediction row {}", line + 1)));
        }
        match videos.last_mut() {
            Some(v) if v.video_id == row.video_id => {
                if row.segment_index != v.scores.len() {
                    return Err(Error::Format(format!(
                        "video `{}`: segment index {} out of sequence (expected {})",
                        row.video_id,
                        row.segment_index,
                        v.scores.len()
                    )));
                }
                v.scores.push(row.score);
            }
            _ => {
                if videos.iter().any(|v| v.video_id == row.video_id) {
                    return Err(Error::Format(format!("rows for video `{}` are not contiguous", row.video_id)));
                }
                if row.segment_index != 0 {
                    return Err(Error::Format(format!(
                        "video `{}` starts at segment index {}",
                        row.video_id, row.segment_index
                    )));
                }
                videos.push(VideoPrediction {
                    video_id: row.video_id,
                    scores: vec![row.score],
                });
            }
        }
    }
    Ok(Predictions { videos })
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions_from(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRatio {
    pub video_id: String,
    pub ratio: f64,
}

/// Evaluation output: per-video ratios and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_s: usize,
    pub n: usize,
    pub mean: f64,
    pub videos: Vec<VideoRatio>,
}

impl EvalReport {
    pub fn new(ds: &Dataset, report: &SummaryScoreReport) -> Self {
        EvalReport {
            n_s: report.n_s,
            n: report.n,
            mean: report.mean,
            videos: ds
                .records()
                .iter()
                .zip(&report.per_video)
                .map(|(r, &ratio)| VideoRatio {
                    video_id: r.video_id.clone(),
                    ratio,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let p = Predictions {
            videos: vec![
                VideoPrediction {
                    video_id: "a".into(),
                    scores: vec![0.1, -1.0 / 3.0, 1e-300],
                },
                VideoPrediction {
                    video_id: "b,c".into(),
                    scores: vec![f32::MAX as f64],
                },
            ],
        };
        let mut buf = Vec::new();
        write_predictions_to(&p, &mut buf).unwrap();
        assert!(buf.starts_with(b"video_id,segment_index,score\n"));
        assert_eq!(read_predictions_from(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn malformed_rows_rejected() {
        let gap = "video_id,segment_index,score\na,0,1\na,2,1\n";
        assert!(read_predictions_from(gap.as_bytes()).is_err());
        let split = "video_id,segment_index,score\na,0,1\nb,0,1\na,1,1\n";
        assert!(read_predictions_from(split.as_bytes()).is_err());
        let nan = "video_id,segment_index,score\na,0,NaN\n";
        assert!(read_predictions_from(nan.as_bytes()).is_err());
        let empty = "video_id,segment_index,score\n";
        assert!(read_predictions_from(empty.as_bytes()).unwrap().videos.is_empty());
    }
}
