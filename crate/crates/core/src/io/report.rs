//! Agreement comparison reports: CSV and JSON serialization with stable
//! field order, so identical results always produce identical bytes. CSV
//! uses fixed 6-decimal formatting for tabular display; JSON keeps full
//! float precision and round-trips losslessly.

use serde::{Deserialize, Serialize};

use super::{json_error, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Agreement metrics for one gait parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub n: usize,
    /// Absent when the correlation is undefined (constant input).
    pub pearson_r: Option<f64>,
    pub mae: f64,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub parameters: Vec<ReportRow>,
}

const CSV_HEADER: &str = "parameter,n,pearson_r,mae,bias,loa_low,loa_high";

/// Serialize a report. Byte output is deterministic for identical input.
pub fn write_report(report: &ComparisonReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => write_csv(report),
        ReportFormat::Json => write_json(report),
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| format!("{v:.6}"))
}

fn write_csv(report: &ComparisonReport) -> Vec<u8> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.parameters {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            row.parameter,
            row.n,
            fmt_opt(row.pearson_r),
            row.mae,
            row.bias,
            row.loa_low,
            row.loa_high
        ));
    }
    out.into_bytes()
}

/// Shortest decimal form that parses back to the identical f64. Integral
/// values keep a trailing `.0` so the token stays a JSON float.
fn json_number(value: f64) -> String {
    let s = value.to_string();
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn write_json(report: &ComparisonReport) -> Vec<u8> {
    let mut out = String::from("{\n  \"parameters\": [");
    for (i, row) in report.parameters.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "\n    {{\n      \"parameter\": {},\n      \"n\": {},\n      \"pearson_r\": {},\n      \"mae\": {},\n      \"bias\": {},\n      \"loa_low\": {},\n      \"loa_high\": {}\n    }}",
            serde_json::to_string(&row.parameter).expect("strings serialize"),
            row.n,
            row.pearson_r
                .map_or("null".to_string(), |v| json_number(v)),
            json_number(row.mae),
            json_number(row.bias),
            json_number(row.loa_low),
            json_number(row.loa_high)
        ));
    }
    if !report.parameters.is_empty() {
        out.push_str("\n  ");
    }
    out.push_str("]\n}\n");
    out.into_bytes()
}

/// Parse a JSON report produced by [`write_report`].
pub fn parse_report_json(bytes: &[u8]) -> Result<ComparisonReport, IoError> {
    serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))
}
