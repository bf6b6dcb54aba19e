//! `metrics.csv`: one row per logging step per domain, raw values followed by
//! their EMA-smoothed copies.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const EMA_COEFF: f64 = 0.5;

/// Frozen column order.
pub const COLUMNS: [&str; 15] = [
    "step",
    "domain",
    "objective",
    "train_reward",
    "eval_accuracy",
    "mean_length",
    "mean_entropy",
    "kl_to_teacher",
    "exact_kl",
    "objective_ema",
    "train_reward_ema",
    "eval_accuracy_ema",
    "mean_length_ema",
    "mean_entropy_ema",
    "kl_to_teacher_ema",
];

const SMOOTHED: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub domain: String,
    pub objective: f64,
    pub train_reward: f64,
    pub eval_accuracy: f64,
    pub mean_length: f64,
    pub mean_entropy: f64,
    pub kl_to_teacher: f64,
    /// False when `kl_to_teacher` is a sampled estimate.
    pub exact_kl: bool,
}

impl MetricsRow {
    fn smoothed(&self) -> [f64; SMOOTHED] {
        [
            self.objective,
            self.train_reward,
            self.eval_accuracy,
            self.mean_length,
            self.mean_entropy,
            self.kl_to_teacher,
        ]
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

/// Rows plus EMA columns, smoothed separately per domain in row order.
pub fn render(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Runtime(format!("writing metrics: {e}"));
    w.write_record(COLUMNS).map_err(csv_err)?;
    let mut ema: BTreeMap<&str, [f64; SMOOTHED]> = BTreeMap::new();
    for row in rows {
        let raw = row.smoothed();
        let e = ema
            .entry(row.domain.as_str())
            .and_modify(|prev| {
                for (p, x) in prev.iter_mut().zip(raw) {
                    *p = EMA_COEFF * x + (1.0 - EMA_COEFF) * *p;
                }
            })
            .or_insert(raw);
        let mut record = vec![row.step.to_string(), row.domain.clone()];
        record.extend(raw.iter().map(|&x| fmt(x)));
        record.push(row.exact_kl.to_string());
        record.extend(e.iter().map(|&x| fmt(x)));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(format!("writing metrics: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, render(rows)?).map_err(|e| HarnessError::io(path, e))
}

/// Reads the raw columns back; the header must match [`COLUMNS`] exactly.
pub fn read(path: &Path) -> Result<Vec<MetricsRow>> {
    let schema = |message: String| HarnessError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| schema(e.to_string()))?;
    let header = r.headers().map_err(|e| schema(e.to_string()))?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != COLUMNS {
        let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !got.contains(c)).collect();
        return Err(schema(if missing.is_empty() {
            format!("columns out of order: {}", got.join(","))
        } else {
            format!("missing columns: {}", missing.join(", "))
        }));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| schema(format!("line {line}: `{}` is not a number in {}", &rec[j], COLUMNS[j])))
        };
        rows.push(MetricsRow {
            step: rec[0]
                .parse()
                .map_err(|_| schema(format!("line {line}: bad step `{}`", &rec[0])))?,
            domain: rec[1].to_string(),
            objective: num(2)?,
            train_reward: num(3)?,
            eval_accuracy: num(4)?,
            mean_length: num(5)?,
            mean_entropy: num(6)?,
            kl_to_teacher: num(7)?,
            exact_kl: match &rec[8] {
                "true" => true,
                "false" => false,
                other => return Err(schema(format!("line {line}: bad exact_kl `{other}`"))),
            },
        });
    }
    Ok(rows)
}
