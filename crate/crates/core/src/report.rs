//! Per-epoch loss records, written as `epoch,split,total,data,physics`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

/// Epochs reported in summaries.
pub const MILESTONES: [usize; 5] = [1, 10, 100, 1000, 10000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "T",
            Split::Val => "V",
        })
    }
}

/// Loss decomposition; `physics` is already weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub data: f64,
    pub physics: f64,
}

impl LossParts {
    pub fn new(data: f64, physics: f64) -> Self {
        Self {
            total: data + physics,
            data,
            physics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub split: Split,
    #[serde(flatten)]
    pub loss: LossParts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub records: Vec<LossRecord>,
}

impl LossReport {
    pub fn push(&mut self, epoch: usize, split: Split, loss: LossParts) {
        self.records.push(LossRecord { epoch, split, loss });
    }

    pub fn at(&self, epoch: usize, split: Split) -> Option<LossParts> {
        self.records
            .iter()
            .find(|r| r.epoch == epoch && r.split == split)
            .map(|r| r.loss)
    }

    pub fn last(&self, split: Split) -> Option<LossRecord> {
        self.records.iter().rev().find(|r| r.split == split).copied()
    }

    pub fn series(&self, split: Split) -> impl Iterator<Item = &LossRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,split,total,data,physics")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                match r.split {
                    Split::Train => "train",
                    Split::Val => "val",
                },
                r.loss.total,
                r.loss.data,
                r.loss.physics
            )?;
        }
        Ok(())
    }

    /// Milestone rows in the `Epoch / Data set / Total / Data / Physics`
    /// layout.
    pub fn milestone_table(&self) -> String {
        let mut out = String::from("Epoch\tSet\tTotal\tData\tPhysics\n");
        for e in MILESTONES {
            for split in [Split::Train, Split::Val] {
                if let Some(l) = self.at(e, split) {
                    out.push_str(&format!(
                        "{e}\t{split}\t{:.7}\t{:.7}\t{:.7}\n",
                        l.total, l.data, l.physics
                    ));
                }
            }
        }
        out
    }
}
