//! Report serialization: byte-stable JSON, or a directory of CSV files.

use std::fs;
use std::path::Path;

use super::commands::Report;
use crate::error::Result;
use crate::report::to_stable_json;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    CsvBundle,
}

pub fn report_json(report: &Report) -> Result<String> {
    Ok(to_stable_json(report)?)
}

/// JSON goes to `out` as a file. A CSV bundle makes `out` a directory
/// holding `fit.json` and one CSV per sample table.
pub fn write_report(report: &Report, format: Format, out: &Path) -> Result<()> {
    let json = report_json(report)?;
    match format {
        Format::Json => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(out, json)?;
        }
        Format::CsvBundle => {
            fs::create_dir_all(out)?;
            fs::write(out.join("fit.json"), json)?;
            for t in &report.tables {
                let mut w = csv::Writer::from_path(out.join(t.file))?;
                w.write_record(&t.header)?;
                for row in &t.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
            }
        }
    }
    Ok(())
}
