//! CSV readers and writers for label chains, matrices and label vectors.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! binary64 value exactly.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::LabelSampleSet;

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn reader<R: Read>(input: R, has_header: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn parse_rows<R: Read, T>(
    input: R,
    has_header: bool,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Vec<Vec<T>>> {
    let mut rdr = reader(input, has_header);
    let mut rows = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::Parse {
                    line,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
        }
        width = Some(record.len());
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                parse(field).map_err(|message| Error::Parse {
                    line,
                    column: c + 1,
                    message,
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads label draws: one draw per row, one integer column per observation.
pub fn read_labels<R: Read>(input: R, has_header: bool) -> Result<LabelSampleSet> {
    let rows = parse_rows(input, has_header, |f| {
        f.parse::<i64>()
            .map_err(|_| format!("'{f}' is not an integer label"))
    })?;
    LabelSampleSet::new(rows)
}

/// Reads a numeric matrix with no header.
pub fn read_matrix<R: Read>(input: R) -> Result<Array2<f64>> {
    let rows = parse_rows(input, false, |f| {
        f.parse::<f64>().map_err(|_| format!("'{f}' is not a number"))
    })?;
    let n_rows = rows.len();
    if n_rows == 0 {
        return Err(Error::InputShape("matrix file has no rows".into()));
    }
    let n_cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n_rows, n_cols), flat).map_err(|e| Error::InputShape(e.to_string()))
}

pub fn write_matrix<W: Write>(out: W, m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.rows() {
        w.write_record(row.iter().map(|&x| format_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a partition as a single row of one-based labels, which reads back
/// as a one-draw chain.
pub fn write_partition<W: Write>(out: W, p: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(p.labels_one_based().iter().map(|l| l.to_string()))?;
    w.flush()?;
    Ok(())
}

/// Reads a partition from the first row of a label file.
pub fn read_partition<R: Read>(input: R, has_header: bool) -> Result<Partition> {
    let set = read_labels(input, has_header)?;
    Ok(Partition::from_labels(&set.draws()[0]))
}
