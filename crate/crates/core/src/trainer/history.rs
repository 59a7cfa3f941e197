use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One completed epoch. Fields that do not apply to a regime are `None`
/// and written as empty CSV cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_summary_score: Option<f64>,
    pub selfsup_acc: Option<f64>,
    pub selfsup_recall: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Training objective of the initial parameters, before any update.
    pub initial_train_loss: Option<f64>,
    pub records: Vec<EpochRecord>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("history csv: {e}"))
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "epoch",
            "train_loss",
            "val_loss",
            "val_summary_score",
            "selfsup_acc",
            "selfsup_recall",
        ])
        .map_err(csv_err)?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                cell(r.val_loss),
                cell(r.val_summary_score),
                cell(r.selfsup_acc),
                cell(r.selfsup_recall),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Format(format!("history csv: {e}")))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(f)
    }

    pub fn read_csv_from<R: std::io::Read>(r: R) -> Result<Vec<EpochRecord>> {
        let mut rdr = csv::Reader::from_reader(r);
        rdr.deserialize().map(|row| row.map_err(csv_err)).collect()
    }
}
