//! File formats: scenario records and precision sweeps as CSV or JSON,
//! spectrum traces as CSV, and scenario configs as JSON.
//!
//! Numbers are written like C's `%.9g`, so output is byte-stable and
//! round-trips to nine significant digits. Missing values are `NaN` in CSV
//! and `null` in JSON.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scenarios::{
    FieldValue, PrecisionSweep, ScenarioConfig, ScenarioRecord, RECORD_COLUMNS,
};
use crate::spectral::{AxisKind, SpectrumTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// `%.9g`: nine significant digits, trailing zeros trimmed, scientific
/// notation outside `1e-4 ≤ |v| < 1e9`.
pub fn format_g9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (8 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn json_number(v: f64) -> String {
    if v.is_finite() {
        format_g9(v)
    } else {
        "null".into()
    }
}

fn csv_field(f: FieldValue) -> String {
    match f {
        FieldValue::Real(v) => format_g9(v),
        FieldValue::Count(n) => n.to_string(),
        FieldValue::Flag(b) => u8::from(b).to_string(),
    }
}

fn json_field(f: FieldValue) -> String {
    match f {
        FieldValue::Real(v) => json_number(v),
        FieldValue::Count(n) => n.to_string(),
        FieldValue::Flag(b) => b.to_string(),
    }
}

fn write_table<W: Write>(
    out: &mut W,
    columns: &[&str],
    rows: &[Vec<(String, String)>],
    format: Format,
) -> Result<()> {
    let mut text = String::new();
    match format {
        Format::Csv => {
            text.push_str(&columns.join(","));
            text.push('\n');
            for row in rows {
                let cells: Vec<&str> = row.iter().map(|(csv, _)| csv.as_str()).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
        }
        Format::Json => {
            text.push('[');
            for (i, row) in rows.iter().enumerate() {
                text.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
                for (j, (name, (_, json))) in columns.iter().zip(row).enumerate() {
                    let sep = if j == 0 { "" } else { ", " };
                    write!(text, "{sep}\"{name}\": {json}").expect("write to string");
                }
                text.push('}');
            }
            text.push_str("\n]\n");
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Write scenario records. An empty slice is an error: a header-only file
/// would hide a failed run.
pub fn write_records<W: Write>(
    records: &[ScenarioRecord],
    out: &mut W,
    format: Format,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no records to write"));
    }
    let rows: Vec<Vec<(String, String)>> = records
        .iter()
        .map(|r| {
            r.fields()
                .iter()
                .map(|&f| (csv_field(f), json_field(f)))
                .collect()
        })
        .collect();
    write_table(out, &RECORD_COLUMNS, &rows, format)
}

pub fn write_records_to_path(
    records: &[ScenarioRecord],
    path: &Path,
    format: Format,
) -> Result<()> {
    let mut buf = Vec::new();
    write_records(records, &mut buf, format)?;
    fs::write(path, buf)?;
    Ok(())
}

fn parse_real(s: &str, column: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("column {column}: `{s}` is not a number")))
}

/// Parse a record CSV written by [`write_records`].
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ScenarioRecord>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty record file"))??;
    let names: Vec<&str> = header.trim_end().split(',').collect();
    if names != RECORD_COLUMNS {
        return Err(Error::invalid(
            "record header does not match the expected columns",
        ));
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != RECORD_COLUMNS.len() {
            return Err(Error::invalid(format!(
                "row {}: expected {} fields",
                n + 1,
                RECORD_COLUMNS.len()
            )));
        }
        let mut fields = [FieldValue::Real(0.0); 18];
        for (i, (cell, column)) in cells.iter().zip(RECORD_COLUMNS).enumerate() {
            fields[i] = match column {
                "nv_n_dips" => FieldValue::Count(cell.parse().map_err(|_| {
                    Error::invalid(format!("column {column}: `{cell}` is not a count"))
                })?),
                "artifact_flag" => FieldValue::Flag(match *cell {
                    "1" => true,
                    "0" => false,
                    _ => {
                        return Err(Error::invalid(format!(
                            "column {column}: `{cell}` is not 0 or 1"
                        )))
                    }
                }),
                _ => FieldValue::Real(parse_real(cell, column)?),
            };
        }
        records.push(ScenarioRecord::from_fields(&fields).expect("field kinds match columns"));
    }
    Ok(records)
}

pub const PRECISION_COLUMNS: [&str; 8] = [
    "integration_time_s",
    "repetitions",
    "nv_sigma_C",
    "nv_mean_C",
    "nv_failures",
    "siv_sigma_C",
    "siv_mean_C",
    "siv_failures",
];

/// One row per integration time.
pub fn write_precision<W: Write>(
    sweep: &PrecisionSweep,
    out: &mut W,
    format: Format,
) -> Result<()> {
    let real = |v: f64| (format_g9(v), json_number(v));
    let count = |n: usize| (n.to_string(), n.to_string());
    let rows: Vec<Vec<(String, String)>> = sweep
        .points
        .iter()
        .map(|p| {
            vec![
                real(p.integration_time_s),
                count(p.repetitions),
                real(p.nv_sigma_c),
                real(p.nv_mean_c),
                count(p.nv_failures),
                real(p.siv_sigma_c),
                real(p.siv_mean_c),
                count(p.siv_failures),
            ]
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("no precision points to write"));
    }
    write_table(out, &PRECISION_COLUMNS, &rows, format)
}

pub const TRACE_COLUMNS: [&str; 5] = ["axis_kind", "axis", "counts", "exposure_s", "timestamp_s"];

/// Trace CSV: one row per sample; kind, exposure and timestamp repeat.
pub fn write_trace<W: Write>(
    trace: &SpectrumTrace<f64>,
    out: &mut W,
    format: Format,
) -> Result<()> {
    let kind = trace.axis_kind.as_str();
    let rows: Vec<Vec<(String, String)>> = trace
        .axis
        .iter()
        .zip(&trace.counts)
        .map(|(&x, &c)| {
            vec![
                (kind.to_string(), format!("\"{kind}\"")),
                (format_g9(x), json_number(x)),
                (format_g9(c), json_number(c)),
                (format_g9(trace.exposure_s), json_number(trace.exposure_s)),
                (format_g9(trace.timestamp_s), json_number(trace.timestamp_s)),
            ]
        })
        .collect();
    write_table(out, &TRACE_COLUMNS, &rows, format)
}

/// Parse a trace CSV written by [`write_trace`].
pub fn read_trace_csv<R: Read>(input: R) -> Result<SpectrumTrace<f64>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty trace file"))??;
    if header.trim_end().split(',').collect::<Vec<_>>() != TRACE_COLUMNS {
        return Err(Error::invalid(format!(
            "trace header must be `{}`",
            TRACE_COLUMNS.join(",")
        )));
    }
    let mut kind = None;
    let (mut axis, mut counts) = (Vec::new(), Vec::new());
    let (mut exposure, mut timestamp) = (f64::NAN, f64::NAN);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != TRACE_COLUMNS.len() {
            return Err(Error::invalid(format!(
                "trace row {}: expected 5 fields",
                n + 1
            )));
        }
        let k: AxisKind = cells[0].parse()?;
        if kind.is_some_and(|prev| prev != k) {
            return Err(Error::invalid("trace mixes axis kinds"));
        }
        kind = Some(k);
        axis.push(parse_real(cells[1], "axis")?);
        counts.push(parse_real(cells[2], "counts")?);
        exposure = parse_real(cells[3], "exposure_s")?;
        timestamp = parse_real(cells[4], "timestamp_s")?;
    }
    let kind = kind.ok_or_else(|| Error::invalid("trace has no samples"))?;
    SpectrumTrace::new(kind, axis, counts, exposure, timestamp)
}

/// Read and validate a scenario config. Unreadable files are `Io` errors;
/// schema and range problems are `Config` errors naming the key.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text)
}
