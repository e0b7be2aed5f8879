//! Result files: one row per training step, or one per theorem temperature.

use std::io::{BufRead, Write};

use moa_core::sim::{StepRecord, TheoremCheck, TheoremReport};
use moa_core::Strategy;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::OutputFormat;

/// Smoothing factor of the optional moving average.
pub const EMA_FACTOR: f64 = 0.9;

/// Significant digits of floats in CSV output.
pub const CSV_DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Formats `x` like C's `%.9g`.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", CSV_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= CSV_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (CSV_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Column names for a `dims`-dimensional run.
pub fn csv_header(dims: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "strategy".into(), "step".into()];
    h.extend((0..dims).map(|d| format!("mean_r_{d}")));
    h.extend((0..dims).map(|d| format!("w_{d}")));
    h.extend(["pivot", "retained", "scalarized"].map(String::from));
    h
}

/// Replaces reward columns with their exponential moving average along each
/// `(seed, strategy)` run. The first value of each run is kept as is.
pub fn smooth(records: &[StepRecord]) -> Vec<StepRecord> {
    let mut out: Vec<StepRecord> = Vec::with_capacity(records.len());
    for r in records {
        let mut s = r.clone();
        if let Some(prev) = out.last() {
            if prev.seed == r.seed && prev.strategy == r.strategy {
                let ema = |p: f64, x: f64| EMA_FACTOR * p + (1.0 - EMA_FACTOR) * x;
                for (m, p) in s.mean_rewards.iter_mut().zip(&prev.mean_rewards) {
                    *m = ema(*p, *m);
                }
                s.scalarized = ema(prev.scalarized, s.scalarized);
            }
        }
        out.push(s);
    }
    out
}

pub fn write_records<W: Write>(
    out: W,
    records: &[StepRecord],
    dims: usize,
    format: OutputFormat,
) -> Result<(), OutputError> {
    match format {
        OutputFormat::Csv => write_csv(out, records, dims),
        OutputFormat::Jsonl => write_jsonl(out, records),
    }
}

fn write_csv<W: Write>(out: W, records: &[StepRecord], dims: usize) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(dims))?;
    for r in records {
        let mut row = vec![
            r.seed.to_string(),
            r.strategy.to_string(),
            r.step.to_string(),
        ];
        row.extend(r.mean_rewards.iter().map(|v| format_sig(*v)));
        row.extend(r.weights.iter().map(|v| format_sig(*v)));
        row.push(r.pivot.to_string());
        row.push(format_sig(r.retained));
        row.push(format_sig(r.scalarized));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn record_object(r: &StepRecord) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("seed".into(), r.seed.into());
    m.insert("strategy".into(), r.strategy.name().into());
    m.insert("step".into(), r.step.into());
    for (d, v) in r.mean_rewards.iter().enumerate() {
        m.insert(format!("mean_r_{d}"), (*v).into());
    }
    for (d, v) in r.weights.iter().enumerate() {
        m.insert(format!("w_{d}"), (*v).into());
    }
    m.insert("pivot".into(), r.pivot.into());
    m.insert("retained".into(), r.retained.into());
    m.insert("scalarized".into(), r.scalarized.into());
    m
}

fn write_jsonl<W: Write>(mut out: W, records: &[StepRecord]) -> Result<(), OutputError> {
    for r in records {
        serde_json::to_writer(&mut out, &record_object(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn malformed(line: usize, reason: impl Into<String>) -> OutputError {
    OutputError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T, OutputError> {
    s.parse()
        .map_err(|_| malformed(line, format!("bad value `{s}` for {name}")))
}

/// Reads a CSV written by [`write_records`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<StepRecord>, OutputError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < 8 || !(header.len() - 6).is_multiple_of(2) {
        return Err(malformed(
            1,
            format!("unexpected column count {}", header.len()),
        ));
    }
    let dims = (header.len() - 6) / 2;
    if header != csv_header(dims) {
        return Err(malformed(1, "header does not match the record schema"));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let f = |k: usize| &row[k];
        let floats = |from: usize| -> Result<Vec<f64>, OutputError> {
            (from..from + dims)
                .map(|k| parse_field(line, &header[k], f(k)))
                .collect()
        };
        records.push(StepRecord {
            seed: parse_field(line, "seed", f(0))?,
            strategy: parse_field::<Strategy>(line, "strategy", f(1))?,
            step: parse_field(line, "step", f(2))?,
            mean_rewards: floats(3)?,
            weights: floats(3 + dims)?,
            pivot: parse_field(line, "pivot", f(3 + 2 * dims))?,
            retained: parse_field(line, "retained", f(4 + 2 * dims))?,
            scalarized: parse_field(line, "scalarized", f(5 + 2 * dims))?,
        });
    }
    Ok(records)
}

/// Reads a JSONL file written by [`write_records`].
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<StepRecord>, OutputError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let obj: Map<String, Value> = serde_json::from_str(&line)?;
        let get = |k: &str| {
            obj.get(k)
                .ok_or_else(|| malformed(n, format!("missing {k}")))
        };
        let uint = |k: &str| {
            get(k)?
                .as_u64()
                .ok_or_else(|| malformed(n, format!("{k} not an integer")))
        };
        let float = |k: &str| {
            get(k)?
                .as_f64()
                .ok_or_else(|| malformed(n, format!("{k} not a number")))
        };
        let series = |prefix: &str| -> Result<Vec<f64>, OutputError> {
            (0..)
                .map(|d| format!("{prefix}{d}"))
                .take_while(|k| obj.contains_key(k))
                .map(|k| float(&k))
                .collect()
        };
        let strategy = get("strategy")?
            .as_str()
            .ok_or_else(|| malformed(n, "strategy not a string"))?;
        records.push(StepRecord {
            seed: uint("seed")?,
            strategy: parse_field(n, "strategy", strategy)?,
            step: uint("step")?,
            mean_rewards: series("mean_r_")?,
            weights: series("w_")?,
            pivot: uint("pivot")? as usize,
            retained: float("retained")?,
            scalarized: float("scalarized")?,
        });
    }
    Ok(records)
}

pub fn check_label(check: TheoremCheck) -> &'static str {
    match check {
        TheoremCheck::Pass => "pass",
        TheoremCheck::NotApplicable => "not_applicable",
        TheoremCheck::NotPositive => "not_positive",
        TheoremCheck::OutsideTolerance => "outside_tolerance",
    }
}

pub const THEOREM_HEADER: [&str; 8] = [
    "beta",
    "measured_gap",
    "predicted_gap",
    "covariance_u_s",
    "trials",
    "zero_covariance",
    "claimed",
    "status",
];

/// One theorem row: the report, whether the bound is asserted at this
/// temperature, and the verdict.
pub struct TheoremRow {
    pub report: TheoremReport,
    pub claimed: bool,
    pub check: TheoremCheck,
}

pub fn write_theorem<W: Write>(
    out: W,
    rows: &[TheoremRow],
    format: OutputFormat,
) -> Result<(), OutputError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(THEOREM_HEADER)?;
            for row in rows {
                let r = &row.report;
                w.write_record([
                    format_sig(r.beta),
                    format_sig(r.measured_gap),
                    format_sig(r.predicted_gap),
                    format_sig(r.covariance_u_s),
                    r.trials.to_string(),
                    r.zero_covariance.to_string(),
                    row.claimed.to_string(),
                    check_label(row.check).to_string(),
                ])?;
            }
            w.flush()?;
        }
        OutputFormat::Jsonl => {
            let mut out = out;
            for row in rows {
                let mut m = match serde_json::to_value(&row.report)? {
                    Value::Object(m) => m,
                    _ => unreachable!("report serializes to an object"),
                };
                m.insert("claimed".into(), row.claimed.into());
                m.insert("status".into(), check_label(row.check).into());
                serde_json::to_writer(&mut out, &m)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Reads the reports back from a JSONL theorem file.
pub fn read_theorem_jsonl<R: BufRead>(input: R) -> Result<Vec<TheoremReport>, OutputError> {
    input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
