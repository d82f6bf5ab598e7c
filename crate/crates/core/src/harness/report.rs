//! Run reports: per-seed metrics, summaries and their CSV/JSON forms.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::MetricsReport;

/// One evaluated run of one variant under one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub label: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Target episodes consumed during adaptation; absent for classical controllers.
    pub interactions: Option<usize>,
    /// Diagnostics such as held-out prediction errors.
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub runs: usize,
    pub mean: MetricsReport,
    /// Sample standard deviation (n - 1); zero for a single run.
    pub std: MetricsReport,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub target: String,
    pub rows: Vec<SeedRow>,
    pub summaries: Vec<Summary>,
    pub config_digest: String,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(name: &str, target: &str, rows: Vec<SeedRow>, config_digest: String, wall_clock_s: f64) -> RunReport {
        let mut labels: Vec<String> = Vec::new();
        for r in &rows {
            if !labels.contains(&r.label) {
                labels.push(r.label.clone());
            }
        }
        let summaries = labels
            .into_iter()
            .map(|label| {
                let sel: Vec<&SeedRow> = rows.iter().filter(|r| r.label == label).collect();
                let tt: Vec<f64> = sel.iter().map(|r| r.metrics.avg_travel_time_s).collect();
                let q: Vec<f64> = sel.iter().map(|r| r.metrics.avg_queue_length).collect();
                let (mt, st) = mean_std(&tt);
                let (mq, sq) = mean_std(&q);
                Summary {
                    label,
                    runs: sel.len(),
                    mean: MetricsReport {
                        avg_travel_time_s: mt,
                        avg_queue_length: mq,
                    },
                    std: MetricsReport {
                        avg_travel_time_s: st,
                        avg_queue_length: sq,
                    },
                }
            })
            .collect();
        RunReport {
            name: name.to_string(),
            target: target.to_string(),
            rows,
            summaries,
            config_digest,
            wall_clock_s,
        }
    }

    pub fn summary(&self, label: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    pub fn mean_travel_time(&self, label: &str) -> Option<f64> {
        self.summary(label).map(|s| s.mean.avg_travel_time_s)
    }

    /// `label,seed,travel_time,queue_length,interactions`, one line per row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "seed", "travel_time", "queue_length", "interactions"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.seed.to_string(),
                format!("{:.4}", r.metrics.avg_travel_time_s),
                format!("{:.4}", r.metrics.avg_queue_length),
                r.interactions.map_or(String::new(), |i| i.to_string()),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut out = format!("{} on {}\n", self.name, self.target);
        out.push_str(&format!("{:<20} {:>5} {:>22} {:>18}\n", "label", "runs", "travel time (s)", "queue length"));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:<20} {:>5} {:>13.2} ± {:>6.2} {:>9.3} ± {:>6.3}\n",
                s.label, s.runs, s.mean.avg_travel_time_s, s.std.avg_travel_time_s, s.mean.avg_queue_length, s.std.avg_queue_length
            ));
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A directional claim checked against the results without failing the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub claim: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Expectation {
    /// `lhs <= rhs`.
    pub fn at_most(claim: impl Into<String>, lhs: f64, rhs: f64) -> Expectation {
        Expectation {
            claim: claim.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}
