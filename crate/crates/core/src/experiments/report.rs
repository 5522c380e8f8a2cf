use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,condition,model,trial,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    /// Sweep coordinate; `inf` marks the clean condition.
    pub condition: f64,
    pub model: String,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

impl Row {
    pub fn new(experiment: &str, condition: f64, model: &str, trial: usize, metric: &str, value: f64) -> Self {
        Row {
            experiment: experiment.into(),
            condition,
            model: model.into(),
            trial,
            metric: metric.into(),
            value,
        }
    }

    fn canonical_cmp(&self, other: &Row) -> Ordering {
        self.experiment
            .cmp(&other.experiment)
            .then(self.condition.total_cmp(&other.condition))
            .then(self.model.cmp(&other.model))
            .then(self.trial.cmp(&other.trial))
            .then(self.metric.cmp(&other.metric))
    }

    fn key(&self) -> (String, u64, String, usize, String) {
        (
            self.experiment.clone(),
            self.condition.to_bits(),
            self.model.clone(),
            self.trial,
            self.metric.clone(),
        )
    }
}

/// A trial, or one model within it, that failed and contributed no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub experiment: String,
    /// Formatted like the CSV condition column.
    pub condition: Option<String>,
    pub model: String,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_hash: String,
    pub failures: Vec<Failure>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Mean and sample standard deviation of one metric over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub experiment: String,
    pub condition: f64,
    pub model: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    rows: Vec<Row>,
    pub meta: ReportMeta,
}

pub(crate) fn format_condition(c: f64) -> String {
    if c == f64::INFINITY {
        "inf".into()
    } else {
        format!("{c}")
    }
}

impl SweepReport {
    /// Sorts rows canonically and checks key uniqueness and finiteness.
    pub fn new(mut rows: Vec<Row>, mut meta: ReportMeta) -> Result<Self> {
        rows.sort_by(Row::canonical_cmp);
        meta.failures.sort_by(|a, b| {
            (&a.experiment, a.trial, &a.model, &a.condition).cmp(&(&b.experiment, b.trial, &b.model, &b.condition))
        });
        let report = SweepReport { rows, meta };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !r.value.is_finite() {
                return Err(Error::Contract(format!("non-finite value in report row {r:?}")));
            }
            if r.condition.is_nan() {
                return Err(Error::Contract(format!("NaN condition in report row {r:?}")));
            }
            if !seen.insert(r.key()) {
                return Err(Error::Contract(format!("duplicate report key {r:?}")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Merges reports of separate sweeps; metadata comes from `self`.
    pub fn merge(self, other: SweepReport) -> Result<Self> {
        let mut rows = self.rows;
        rows.extend(other.rows);
        let mut meta = self.meta;
        meta.failures.extend(other.meta.failures);
        SweepReport::new(rows, meta)
    }

    pub fn values(&self, experiment: &str, condition: f64, model: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.experiment == experiment && r.condition == condition && r.model == model && r.metric == metric
            })
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, experiment: &str, condition: f64, model: &str, metric: &str) -> Option<f64> {
        let v = self.values(experiment, condition, model, metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summary(&self) -> Vec<Summary> {
        let mut groups: BTreeMap<(String, u64, String, String), (f64, Vec<f64>)> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.experiment.clone(), r.condition.to_bits(), r.model.clone(), r.metric.clone()))
                .or_insert_with(|| (r.condition, Vec::new()))
                .1
                .push(r.value);
        }
        let mut out: Vec<Summary> = groups
            .into_iter()
            .map(|((experiment, _, model, metric), (condition, v))| {
                let n = v.len();
                let mean = v.iter().sum::<f64>() / n as f64;
                let std = if n > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                Summary {
                    experiment,
                    condition,
                    model,
                    metric,
                    n,
                    mean,
                    std,
                }
            })
            .collect();
        out.sort_by(|a, b| {
            a.experiment
                .cmp(&b.experiment)
                .then(a.condition.total_cmp(&b.condition))
                .then(a.model.cmp(&b.model))
                .then(a.metric.cmp(&b.metric))
        });
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.experiment,
                format_condition(r.condition),
                r.model,
                r.trial,
                r.metric,
                r.value
            )
            .unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("experiment,condition,model,metric,n,mean,std\n");
        for s in self.summary() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.experiment,
                format_condition(s.condition),
                s.model,
                s.metric,
                s.n,
                s.mean,
                s.std
            )
            .unwrap();
        }
        out
    }

    /// Writes `<stem>.csv` and the `<stem>.json` metadata sidecar.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&json, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }

    /// Reads a report CSV and, when present, its sidecar.
    pub fn read(csv: impl AsRef<Path>) -> Result<Self> {
        let csv = csv.as_ref();
        let text = fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
        let bad = |offset: usize, message: String| Error::Format {
            path: csv.to_path_buf(),
            offset: offset as u64,
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(bad(0, format!("expected header `{CSV_HEADER}`")));
        }
        let mut offset = CSV_HEADER.len() + 1;
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(offset, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(offset, format!("bad number `{s}`")));
            rows.push(Row {
                experiment: f[0].into(),
                condition: num(f[1])?,
                model: f[2].into(),
                trial: f[3].parse().map_err(|_| bad(offset, format!("bad trial `{}`", f[3])))?,
                metric: f[4].into(),
                value: num(f[5])?,
            });
            offset += line.len() + 1;
        }
        let sidecar = csv.with_extension("json");
        let meta = if sidecar.exists() {
            let s = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            serde_json::from_str(&s)?
        } else {
            ReportMeta {
                seed: 0,
                config_hash: String::new(),
                failures: Vec::new(),
                timestamp: 0,
            }
        };
        SweepReport::new(rows, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            seed: 1,
            config_hash: "abc".into(),
            failures: vec![],
            timestamp: 0,
        }
    }

    #[test]
    fn rows_are_sorted_and_validated() {
        let rows = vec![
            Row::new("noise", 0.5, "cen", 1, "test_error", 0.2),
            Row::new("noise", f64::INFINITY, "cen", 0, "test_error", 0.1),
            Row::new("noise", 0.5, "cen", 0, "test_error", 0.3),
        ];
        let r = SweepReport::new(rows, meta()).unwrap();
        let conds: Vec<f64> = r.rows().iter().map(|r| r.condition).collect();
        assert_eq!(conds, vec![0.5, 0.5, f64::INFINITY]);
        assert!(r.to_csv().contains("noise,inf,cen,0,test_error,0.1\n"));

        let dup = vec![Row::new("a", 1.0, "m", 0, "x", 1.0), Row::new("a", 1.0, "m", 0, "x", 2.0)];
        assert!(SweepReport::new(dup, meta()).is_err());
        assert!(SweepReport::new(vec![Row::new("a", 1.0, "m", 0, "x", f64::NAN)], meta()).is_err());
    }

    #[test]
    fn summary_statistics() {
        let rows = (0..5).map(|t| Row::new("table", 0.0, "lr", t, "test_error", t as f64)).collect();
        let r = SweepReport::new(rows, meta()).unwrap();
        let s = &r.summary()[0];
        assert_eq!((s.n, s.mean), (5, 2.0));
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            Row::new("noise", f64::INFINITY, "lime", 0, "fidelity", 0.1 + 0.2),
            Row::new("features", 0.25, "cen", 3, "test_error", 1.0 / 3.0),
        ];
        let r = SweepReport::new(rows, meta()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv, _) = r.write(dir.path(), "rep").unwrap();
        assert_eq!(SweepReport::read(&csv).unwrap(), r);
    }
}
