//! Versioned run reports: JSON for everything, CSV for tabular scans.

use std::io::Write;
use std::path::Path;

use euclid_core::acceptance::Measurement;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    pub verdicts: Vec<Measurement>,
    pub pass: bool,
    /// The only field that differs between identical runs.
    pub wall_time_seconds: f64,
}

#[derive(Debug)]
pub enum EmitError {
    NotTabular(String),
    Io(std::io::Error),
    Csv(csv::Error),
}

impl std::fmt::Display for EmitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmitError::NotTabular(cmd) => write!(
                f,
                "`{cmd}` produces a scalar report; csv is available for propagator and energy-density, use --format json"
            ),
            EmitError::Io(e) => write!(f, "cannot write report: {e}"),
            EmitError::Csv(e) => write!(f, "cannot write csv: {e}"),
        }
    }
}

impl From<std::io::Error> for EmitError {
    fn from(e: std::io::Error) -> Self {
        EmitError::Io(e)
    }
}

impl From<csv::Error> for EmitError {
    fn from(e: csv::Error) -> Self {
        EmitError::Csv(e)
    }
}

pub fn render(report: &RunReport, format: Format) -> Result<Vec<u8>, EmitError> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| EmitError::Io(e.into()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let table = report.table.as_ref().ok_or_else(|| EmitError::NotTabular(report.command.clone()))?;
            let mut out = format!(
                "# schema_version={} command={} tool_version={} seed={} pass={}\n",
                report.schema_version, report.command, report.tool_version, report.seed, report.pass
            )
            .into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&table.headers)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(|v| v.to_string()))?;
                }
                w.flush()?;
            }
            Ok(out)
        }
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(report: &RunReport, format: Format, path: Option<&Path>) -> Result<(), EmitError> {
    let bytes = render(report, format)?;
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use euclid_core::acceptance::Relation;

    fn report(table: Option<Table>) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: "energy-density".into(),
            tool_version: "0",
            seed: 3,
            config: serde_json::json!({}),
            results: serde_json::json!({"x": 1.0}),
            table,
            verdicts: vec![Measurement::new("x", 1.0, Relation::AtMost, 2.0)],
            pass: true,
            wall_time_seconds: 0.0,
        }
    }

    #[test]
    fn csv_needs_a_table() {
        let r = report(None);
        assert!(matches!(render(&r, Format::Csv), Err(EmitError::NotTabular(_))));
        let json = String::from_utf8(render(&r, Format::Json).unwrap()).unwrap();
        assert!(json.contains("\"schema_version\": 1"));
    }

    #[test]
    fn csv_layout() {
        let r = report(Some(Table { headers: vec!["ell".into(), "alpha".into()], rows: vec![vec![1.0, -0.5]] }));
        let text = String::from_utf8(render(&r, Format::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# schema_version=1"));
        assert_eq!(lines[1], "ell,alpha");
        assert_eq!(lines[2], "1,-0.5");
    }
}
