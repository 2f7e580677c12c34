// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON encodings of a run.

use serde::Serialize;

use cqed_chem::dynamics::TimeSeries;
use cqed_chem::models::ScenarioConfig;
use cqed_chem::reduction::ReductionReport;

pub const CSV_DIGITS: usize = 12;
pub const JSON_DIGITS: usize = 15;

/// `x` in scientific notation with `digits` significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        // Avoid "-0" and keep zero columns uniform.
        return format!("{:.*e}", digits - 1, 0.0);
    }
    format!("{:.*e}", digits - 1, x)
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() {
        return x;
    }
    sig(x, digits).parse().expect("formatted float parses")
}

/// Header `time,<labels…>`, one row per sample.
pub fn to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("time");
    for l in &series.labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (s, t) in series.times.iter().enumerate() {
        out.push_str(&sig(*t, CSV_DIGITS));
        for col in &series.values {
            out.push(',');
            out.push_str(&sig(col[s], CSV_DIGITS));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Serialize)]
pub struct Tolerances {
    pub norm: f64,
    pub hermitian: f64,
    pub imaginary_residue: f64,
    pub instability_trace_drift: f64,
    pub dt: f64,
}

#[derive(Debug, Serialize)]
struct Column<'a> {
    label: &'a str,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SeriesDoc<'a> {
    scenario: &'a str,
    solver: &'a str,
    dim_full: usize,
    dim_simulated: usize,
    samples: usize,
    tolerances: &'a Tolerances,
    config: &'a ScenarioConfig,
    times: Vec<f64>,
    series: Vec<Column<'a>>,
}

/// Metadata shared by the JSON outputs.
pub struct RunInfo<'a> {
    pub config: &'a ScenarioConfig,
    pub solver: &'a str,
    pub dim_full: usize,
    pub dim_simulated: usize,
    pub tolerances: Tolerances,
}

pub fn to_json(series: &TimeSeries, info: &RunInfo<'_>) -> String {
    let doc = SeriesDoc {
        scenario: info.config.scenario.as_str(),
        solver: info.solver,
        dim_full: info.dim_full,
        dim_simulated: info.dim_simulated,
        samples: series.len(),
        tolerances: &info.tolerances,
        config: info.config,
        times: series.times.iter().map(|&t| round_sig(t, JSON_DIGITS)).collect(),
        series: series
            .labels
            .iter()
            .zip(&series.values)
            .map(|(label, v)| Column { label, values: v.iter().map(|&x| round_sig(x, JSON_DIGITS)).collect() })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("series serialize");
    s.push('\n');
    s
}

pub fn report_json(report: &ReductionReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(1.0, 12), "1.00000000000e0");
        assert_eq!(sig(-0.0, 3), "0.00e0");
        assert_eq!(round_sig(0.123456789012345678, 15), 0.123456789012346);
    }

    #[test]
    fn csv_layout() {
        let mut ts = TimeSeries::new(vec!["P(O)".into(), "a,b".into()]);
        ts.push(0.0, &[1.0, 0.5]);
        ts.push(0.5, &[0.25, 0.0]);
        let csv = to_csv(&ts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,P(O),\"a,b\"");
        assert_eq!(lines[1], "0.00000000000e0,1.00000000000e0,5.00000000000e-1");
        assert_eq!(lines.len(), 3);
    }
}
