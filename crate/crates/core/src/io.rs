// SPDX-License-Identifier: Apache-2.0

//! CSV input for pools and payments, and report output.
//!
//! UTXO files have the header `id,value_sat`. Payment files have
//! `id,value_sat` with an optional third column `urgency_rank`; without it,
//! row order is the urgency order.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::decimal::format_decimal;
use crate::model::{PaymentRequest, Utxo};
use crate::simulation::{CellResult, ScenarioReport, SweepReport};

pub const KNAPSACK_CSV: &str = "knapsack.csv";
pub const LEVERAGE_CSV: &str = "leverage.csv";
pub const SAVINGS_CSV: &str = "savings.csv";

const METHOD_HEADER: [&str; 7] = [
    "gamma",
    "M",
    "fallback_success_rate",
    "knapsack_success_rate",
    "leverage_success_rate",
    "payments_processed",
    "cost_per_payment_usd",
];
const SAVINGS_HEADER: [&str; 4] = ["gamma", "M", "percent_savings_per_payment", "usd_savings_per_payment"];
const PLACES: u32 = 6;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: value of {id:?} must be positive")]
    NonPositiveValue { line: u64, id: String },
    #[error("line {line}: duplicate urgency rank {rank}")]
    DuplicateRank { line: u64, rank: u32 },
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?} (expected json, csv or md)")),
        }
    }
}

#[derive(Deserialize)]
struct UtxoRow {
    id: String,
    value_sat: u64,
}

#[derive(Deserialize)]
struct PaymentRow {
    id: String,
    value_sat: u64,
    urgency_rank: Option<u32>,
}

fn csv_error(err: csv::Error) -> IoError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => IoError::Io(e),
        csv::ErrorKind::Deserialize { err, .. } => IoError::Parse { line, message: err.to_string() },
        other => IoError::Parse { line, message: format!("{other:?}") },
    }
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, allowed: &[&[&str]]) -> Result<(), IoError> {
    let header = reader.headers().map_err(csv_error)?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if allowed.contains(&names.as_slice()) {
        return Ok(());
    }
    let expected: Vec<String> = allowed.iter().map(|h| h.join(",")).collect();
    Err(IoError::Parse { line: 1, message: format!("header must be {}", expected.join(" or ")) })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

pub fn parse_utxos<R: Read>(input: R) -> Result<Vec<Utxo>, IoError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &[&["id", "value_sat"]])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize::<UtxoRow>() {
        let line = out.len() as u64 + 2;
        let row = row.map_err(csv_error)?;
        if row.value_sat == 0 {
            return Err(IoError::NonPositiveValue { line, id: row.id });
        }
        if !seen.insert(row.id.clone()) {
            return Err(IoError::DuplicateId { line, id: row.id });
        }
        out.push(Utxo::new(row.id, row.value_sat));
    }
    Ok(out)
}

pub fn parse_payments<R: Read>(input: R) -> Result<Vec<PaymentRequest>, IoError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &[&["id", "value_sat"], &["id", "value_sat", "urgency_rank"]])?;
    let mut ids = HashSet::new();
    let mut ranks = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize::<PaymentRow>() {
        let line = out.len() as u64 + 2;
        let row = row.map_err(csv_error)?;
        if row.value_sat == 0 {
            return Err(IoError::NonPositiveValue { line, id: row.id });
        }
        if !ids.insert(row.id.clone()) {
            return Err(IoError::DuplicateId { line, id: row.id });
        }
        let rank = row.urgency_rank.unwrap_or(out.len() as u32);
        if !ranks.insert(rank) {
            return Err(IoError::DuplicateRank { line, rank });
        }
        out.push(PaymentRequest::new(row.id, row.value_sat, rank));
    }
    Ok(out)
}

pub fn load_utxos(path: &Path) -> Result<Vec<Utxo>, IoError> {
    parse_utxos(fs::File::open(path)?)
}

pub fn load_payments(path: &Path) -> Result<Vec<PaymentRequest>, IoError> {
    parse_payments(fs::File::open(path)?)
}

pub fn write_utxos<W: Write>(out: W, utxos: &[Utxo]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "value_sat"]).map_err(csv_error)?;
    for u in utxos {
        w.write_record([u.id.as_str(), &u.value.to_sat().to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_payments<W: Write>(out: W, payments: &[PaymentRequest]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "value_sat", "urgency_rank"]).map_err(csv_error)?;
    for p in payments {
        w.write_record([p.id.as_str(), &p.value.to_sat().to_string(), &p.urgency_rank.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<SweepReport, IoError> {
    Ok(serde_json::from_reader(io::BufReader::new(fs::File::open(path)?))?)
}

fn method_row(cell: &CellResult, report: &ScenarioReport) -> [String; 7] {
    [
        cell.config().gamma.to_string(),
        cell.config().m.to_string(),
        format_decimal(&report.fallback_rate(), PLACES),
        format_decimal(&report.knapsack_rate(), PLACES),
        format_decimal(&report.leverage_rate(), PLACES),
        report.payments_processed.to_string(),
        format_decimal(&report.cost_per_payment_usd(), PLACES),
    ]
}

/// Savings columns are empty when the baseline cost is zero.
fn savings_row(cell: &CellResult) -> [String; 4] {
    let (pct, usd) = match cell.savings() {
        Ok(s) => {
            (format_decimal(&s.percent_savings_per_payment, PLACES), format_decimal(&s.usd_savings_per_payment, PLACES))
        }
        Err(_) => (String::new(), String::new()),
    };
    [cell.config().gamma.to_string(), cell.config().m.to_string(), pct, usd]
}

fn write_csv_table<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn markdown_table<const N: usize>(
    out: &mut String,
    title: &str,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) {
    out.push_str(&format!("## {title}\n\n| {} |\n|", header.join(" | ")));
    out.push_str(&" --- |".repeat(N));
    out.push('\n');
    for row in rows {
        let cells: Vec<&str> = row.iter().map(|c| if c.is_empty() { "n/a" } else { c.as_str() }).collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out.push('\n');
}

/// Markdown rendering of the three result tables.
pub fn render_markdown(report: &SweepReport) -> String {
    let cells = &report.cells;
    let mut out = String::from("# Simulation results\n\n");
    markdown_table(&mut out, "Without leverage", METHOD_HEADER, cells.iter().map(|c| method_row(c, &c.no_leverage)));
    markdown_table(&mut out, "With leverage", METHOD_HEADER, cells.iter().map(|c| method_row(c, &c.leverage)));
    markdown_table(&mut out, "Savings", SAVINGS_HEADER, cells.iter().map(savings_row));
    if !report.failures.is_empty() {
        out.push_str("## Failed cells\n\n");
        for f in &report.failures {
            out.push_str(&format!("- gamma {} M {}: {}\n", f.gamma, f.m, f.error));
        }
    }
    out
}

/// Writes `report` to `path`. JSON and markdown produce one file; CSV
/// produces a directory holding `knapsack.csv`, `leverage.csv` and
/// `savings.csv`.
pub fn emit_report(report: &SweepReport, format: ReportFormat, path: &Path) -> Result<(), IoError> {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            fs::write(path, text)?;
        }
        ReportFormat::Markdown => fs::write(path, render_markdown(report))?,
        ReportFormat::Csv => {
            fs::create_dir_all(path)?;
            let cells = &report.cells;
            write_csv_table(
                &path.join(KNAPSACK_CSV),
                METHOD_HEADER,
                cells.iter().map(|c| method_row(c, &c.no_leverage)),
            )?;
            write_csv_table(&path.join(LEVERAGE_CSV), METHOD_HEADER, cells.iter().map(|c| method_row(c, &c.leverage)))?;
            write_csv_table(&path.join(SAVINGS_CSV), SAVINGS_HEADER, cells.iter().map(savings_row))?;
        }
    }
    Ok(())
}
