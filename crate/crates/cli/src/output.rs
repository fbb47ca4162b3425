//! CSV and JSON emission with a stable, documented column schema.
//!
//! Every table row carries `seed` (where applicable), `config_hash`, and
//! `version`, so any row can be reproduced bit for bit from the config file
//! and the binary version.

use std::io::Write;

use crate::experiments::{DeltaFRow, LocalMinRow, OutlierRow, SampleNRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// A table row with a fixed column schema. The JSON mirror uses the same
/// column names as object keys.
pub trait TableRow {
    fn header() -> Vec<&'static str>;
    fn values(&self) -> Vec<String>;
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

impl TableRow for DeltaFRow {
    fn header() -> Vec<&'static str> {
        vec![
            "seed",
            "r",
            "n_dirs",
            "n_signals",
            "min_delta_f",
            "mean_delta_f",
            "theory_bound",
            "eta_n",
            "bound_valid",
            "positive",
            "certified_fraction",
            "solver_failures",
            "config_hash",
            "version",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            fmt(self.r),
            self.n_dirs.to_string(),
            self.n_signals.to_string(),
            fmt(self.min_delta_f),
            fmt(self.mean_delta_f),
            fmt(self.theory_bound),
            fmt(self.eta_n),
            self.bound_valid.to_string(),
            self.positive.to_string(),
            fmt(self.certified_fraction),
            self.solver_failures.to_string(),
            self.config_hash.clone(),
            self.version.clone(),
        ]
    }
}

impl TableRow for LocalMinRow {
    fn header() -> Vec<&'static str> {
        vec![
            "seed",
            "converged",
            "diverged",
            "iterations",
            "r_init",
            "final_radius",
            "sign_match_rate",
            "f_first",
            "f_final",
            "f_trace",
            "solver_failures",
            "config_hash",
            "version",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.converged.to_string(),
            self.diverged.to_string(),
            self.iterations.to_string(),
            fmt(self.r_init),
            fmt(self.final_radius),
            fmt(self.sign_match_rate),
            fmt(self.f_first),
            fmt(self.f_final),
            self.trace_string(),
            self.solver_failures.to_string(),
            self.config_hash.clone(),
            self.version.clone(),
        ]
    }
}

impl TableRow for OutlierRow {
    fn header() -> Vec<&'static str> {
        vec![
            "seed",
            "r",
            "multiplier",
            "style",
            "n_out",
            "outlier_energy",
            "fro_sq_over_n_in",
            "l12_over_n_in",
            "min_delta_f_inliers",
            "min_delta_f_full",
            "naive_threshold_empirical",
            "naive_threshold_theory",
            "refined_threshold_theory",
            "theory_zero_budget",
            "within_naive_empirical",
            "positive",
            "solver_failures",
            "config_hash",
            "version",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            fmt(self.r),
            fmt(self.multiplier),
            self.style.clone(),
            self.n_out.to_string(),
            fmt(self.outlier_energy),
            fmt(self.fro_sq_over_n_in),
            fmt(self.l12_over_n_in),
            fmt(self.min_delta_f_inliers),
            fmt(self.min_delta_f_full),
            fmt(self.naive_threshold_empirical),
            fmt(self.naive_threshold_theory),
            fmt(self.refined_threshold_theory),
            self.theory_zero_budget.to_string(),
            self.within_naive_empirical.to_string(),
            self.positive.to_string(),
            self.solver_failures.to_string(),
            self.config_hash.clone(),
            self.version.clone(),
        ]
    }
}

impl TableRow for SampleNRow {
    fn header() -> Vec<&'static str> {
        vec![
            "n",
            "r",
            "seed",
            "seeds",
            "failures",
            "failure_rate",
            "min_delta_f_worst",
            "eta_n",
            "n_required",
            "solver_failures",
            "config_hash",
            "version",
        ]
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt(self.r),
            self.seed.to_string(),
            self.seeds.to_string(),
            self.failures.to_string(),
            fmt(self.failure_rate),
            fmt(self.min_delta_f_worst),
            fmt(self.eta_n),
            fmt(self.n_required),
            self.solver_failures.to_string(),
            self.config_hash.clone(),
            self.version.clone(),
        ]
    }
}

pub fn write_table<R: TableRow, W: Write>(
    rows: &[R],
    format: OutputFormat,
    out: &mut W,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(out, "{}", R::header().join(","))?;
            for row in rows {
                writeln!(out, "{}", row.values().join(","))?;
            }
        }
        OutputFormat::Json => {
            let header = R::header();
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let mut map = serde_json::Map::new();
                    for (key, value) in header.iter().zip(row.values()) {
                        map.insert((*key).to_string(), serde_json::Value::String(value));
                    }
                    serde_json::Value::Object(map)
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &serde_json::Value::Array(objects))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> DeltaFRow {
        DeltaFRow {
            seed: 3,
            r: 0.05,
            n_dirs: 10,
            n_signals: 100,
            min_delta_f: 1e-4,
            mean_delta_f: 2e-4,
            theory_bound: f64::NAN,
            eta_n: 0.5,
            bound_valid: false,
            positive: true,
            certified_fraction: 0.99,
            solver_failures: 0,
            config_hash: "abc123".into(),
            version: "sparsid-0.1.0".into(),
        }
    }

    #[test]
    fn csv_and_json_share_schema() {
        let rows = vec![sample_row()];
        let mut csv = Vec::new();
        write_table(&rows, OutputFormat::Csv, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("seed,r,n_dirs"));
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.contains("nan"));

        let mut json = Vec::new();
        write_table(&rows, OutputFormat::Json, &mut json).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&json).unwrap();
        let obj = &parsed.as_array().unwrap()[0];
        for key in DeltaFRow::header() {
            assert!(obj.get(key).is_some(), "missing {key}");
        }
    }
}
