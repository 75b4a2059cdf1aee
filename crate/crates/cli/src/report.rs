//! Report artifacts: report.json plus self-describing CSV tables
//! (header row, decimal point, LF line endings).

use std::fs;
use std::path::Path;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        CsvTable {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Format a float for CSV: shortest round-trip representation, always with
/// a decimal point culture of '.', never locale-dependent.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_report(out_dir: &Path, report: &Value, tables: &[CsvTable]) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(out_dir.join("report.json"), json + "\n")?;
    for table in tables {
        fs::write(out_dir.join(table.name), table.to_csv())?;
    }
    Ok(())
}
