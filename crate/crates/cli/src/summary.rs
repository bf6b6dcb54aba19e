//! Cross-seed aggregation of finished runs into `summary.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::{HarnessError, Result};
use crate::experiment::{read_record, ArmKind, ArmRecord};
use crate::metrics::{self, MetricsRow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Spread {
            median,
            min: v[0],
            max: v[n - 1],
            n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: String,
    pub kind: ArmKind,
    pub domain: String,
    pub lambda: Option<f64>,
    pub seeds: Vec<u64>,
    pub accuracy: Spread,
    pub mean_length: Spread,
    pub mean_entropy: Spread,
    pub kl_to_teacher: Spread,
    /// Median accuracy minus the domain teacher's median accuracy.
    pub delta_teacher: Option<f64>,
    /// Median accuracy minus the base's median accuracy.
    pub delta_base: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: Experiment,
    pub run_dirs: Vec<PathBuf>,
    pub rows: Vec<SummaryRow>,
}

/// One finished arm of one seed.
#[derive(Clone, Debug)]
pub struct ArmResult {
    pub record: ArmRecord,
    pub rows: Vec<MetricsRow>,
}

impl ArmResult {
    /// Last logged row per domain.
    pub fn finals(&self) -> BTreeMap<&str, &MetricsRow> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            out.insert(r.domain.as_str(), r);
        }
        out
    }
}

fn sorted_dirs(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() && name.starts_with(prefix) {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Every arm directory holding both `arm.json` and `metrics.csv`.
pub fn load_run(run_dir: &Path) -> Result<Vec<ArmResult>> {
    let mut out = Vec::new();
    for seed_dir in sorted_dirs(run_dir, "seed-")? {
        for arm_dir in sorted_dirs(&seed_dir, "")? {
            let (json, csv) = (arm_dir.join("arm.json"), arm_dir.join("metrics.csv"));
            if !json.exists() || !csv.exists() {
                continue;
            }
            out.push(ArmResult {
                record: read_record(&json)?,
                rows: metrics::read(&csv)?,
            });
        }
    }
    Ok(out)
}

/// Aggregates one or more run directories of the same experiment.
pub fn summarize(run_dirs: &[PathBuf]) -> Result<Summary> {
    let mut experiment = None;
    let mut results = Vec::new();
    for dir in run_dirs {
        let arms = load_run(dir)?;
        for a in &arms {
            match experiment {
                None => experiment = Some(a.record.experiment),
                Some(e) if e != a.record.experiment => {
                    return Err(HarnessError::Schema {
                        path: dir.clone(),
                        message: format!(
                            "mixes experiments {} and {}",
                            e.name(),
                            a.record.experiment.name()
                        ),
                    })
                }
                _ => {}
            }
        }
        results.extend(arms);
    }
    let experiment = experiment.ok_or_else(|| HarnessError::Runtime("no finished arms found".into()))?;

    // (arm, domain) in first-seen order.
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<(&ArmRecord, &MetricsRow)>> = BTreeMap::new();
    for r in &results {
        for (domain, row) in r.finals() {
            let key = (r.record.arm.clone(), domain.to_string());
            let g = groups.entry(key.clone()).or_default();
            if g.is_empty() {
                order.push(key);
            }
            g.push((&r.record, row));
        }
    }
    let spread = |g: &[(&ArmRecord, &MetricsRow)], f: fn(&MetricsRow) -> f64| {
        Spread::of(&g.iter().map(|(_, r)| f(r)).collect::<Vec<_>>()).expect("groups are non-empty")
    };
    let median_acc = |arm: &str, domain: &str| {
        groups
            .get(&(arm.to_string(), domain.to_string()))
            .map(|g| spread(g, |r| r.eval_accuracy).median)
    };
    let mut rows = Vec::new();
    for key in &order {
        let g = &groups[key];
        let (arm, domain) = key;
        let accuracy = spread(g, |r| r.eval_accuracy);
        let record = g[0].0;
        let mut seeds: Vec<u64> = g.iter().map(|(rec, _)| rec.seed).collect();
        seeds.sort_unstable();
        rows.push(SummaryRow {
            arm: arm.clone(),
            kind: record.kind,
            domain: domain.clone(),
            lambda: record.lambda,
            seeds,
            accuracy,
            mean_length: spread(g, |r| r.mean_length),
            mean_entropy: spread(g, |r| r.mean_entropy),
            kl_to_teacher: spread(g, |r| r.kl_to_teacher),
            delta_teacher: median_acc(&format!("teacher-{domain}"), domain).map(|t| accuracy.median - t),
            delta_base: median_acc("base", domain).map(|b| accuracy.median - b),
        });
    }
    Ok(Summary {
        experiment,
        run_dirs: run_dirs.to_vec(),
        rows,
    })
}

fn signed(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:+.4}"))
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| HarnessError::io(path, e))
    }

    /// Plain-text table; deltas are relative to the domain teacher and the base.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<14} {:>6} {:>8} {:>19} {:>9} {:>9} {:>8}",
            "arm", "domain", "lambda", "acc", "[min, max]", "d_teacher", "d_base", "length"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:<14} {:>6} {:>8.4} {:>19} {:>9} {:>9} {:>8.3}",
                r.arm,
                r.domain,
                r.lambda.map_or("-".into(), |l| format!("{l}")),
                r.accuracy.median,
                format!("[{:.4}, {:.4}]", r.accuracy.min, r.accuracy.max),
                signed(r.delta_teacher),
                signed(r.delta_base),
                r.mean_length.median,
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_of_odd_and_even() {
        let s = Spread::of(&[0.3, 0.1, 0.2]).unwrap();
        assert_eq!((s.median, s.min, s.max, s.n), (0.2, 0.1, 0.3, 3));
        assert_eq!(Spread::of(&[1.0, 0.0]).unwrap().median, 0.5);
        assert!(Spread::of(&[]).is_none());
    }
}
