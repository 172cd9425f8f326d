//! CSV export of the stability-percentage time series.
//!
//! Columns are iteration, timestamp, one per-line stability percentage
//! (index x 100) in line order, then the pipe stability percentage — the
//! series you plot to see each line against the aggregate envelope.

use std::io::Write;

use thiserror::Error;

use crate::record::{IterationRecord, LogHeader};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write report: {0}")]
    Csv(#[from] csv::Error),
    #[error("record for iteration {iteration} has {got} lines, header says {expected}")]
    LineCountMismatch {
        iteration: u64,
        expected: usize,
        got: usize,
    },
}

/// Render the report for an already-read log. Same records, same bytes.
pub fn write_csv<W: Write>(
    header: &LogHeader,
    records: &[IterationRecord],
    out: W,
) -> Result<(), ReportError> {
    let line_count = header.params.line_count as usize;
    let mut writer = csv::Writer::from_writer(out);

    let mut columns = Vec::with_capacity(line_count + 3);
    columns.push("iteration".to_string());
    columns.push("timestamp".to_string());
    for i in 1..=line_count {
        columns.push(format!("s{i}_pct"));
    }
    columns.push("is_pct".to_string());
    writer.write_record(&columns)?;

    for record in records {
        if record.lines.len() != line_count {
            return Err(ReportError::LineCountMismatch {
                iteration: record.iteration,
                expected: line_count,
                got: record.lines.len(),
            });
        }
        let mut row = Vec::with_capacity(line_count + 3);
        row.push(record.iteration.to_string());
        row.push(format!("{:?}", record.timestamp));
        for line in &record.lines {
            row.push(format!("{:?}", line.stability * 100.0));
        }
        row.push(format!("{:?}", record.pipe_stability * 100.0));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
