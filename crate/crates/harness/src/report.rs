//! CSV output of evaluation records.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::experiment::{EvalRecord, SummaryRow};
use crate::HarnessError;

pub const HEADER: &str = "preset,n_m,new_batch_size,seed,avg_mse,stderr,list_size,wall_ms";

fn write_rows<W: Write, T: Serialize>(out: W, header: &[&str], rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, records: &[EvalRecord]) -> Result<(), HarnessError> {
    write_rows(out, &HEADER.split(',').collect::<Vec<_>>(), records)
}

pub fn emit_csv(records: &[EvalRecord], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    write_records(std::io::BufWriter::new(file), records)
}

pub fn emit_summary(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    write_rows(std::io::BufWriter::new(file), &["preset", "n_m", "new_batch_size", "runs", "mean_mse", "stderr"], rows)
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub fn parse_records(text: &str) -> Result<Vec<EvalRecord>, HarnessError> {
    parse(text)
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, HarnessError> {
    parse(text)
}

/// `out.csv` → `out.summary.csv`
pub fn summary_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}
