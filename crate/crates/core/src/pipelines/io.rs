//! Plain-text point and label files: one record per row, comma separated,
//! `#` lines ignored, no header.

use std::io::{Read, Write};

use crate::data::DataSet;
use crate::error::{Error, Result};

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            msg: format!("{kind:?}"),
        },
    }
}

/// Reads rows of floats. All rows must have the same length.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader(input).records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_points<R: Read>(input: R) -> Result<DataSet> {
    let rows = read_rows(input)?;
    if rows.is_empty() {
        return Err(Error::invalid("no data rows"));
    }
    DataSet::from_rows(&rows)
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for record in reader(input).records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        match record.get(0) {
            Some(field) if !field.is_empty() => {
                labels.push(field.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("not a label: {field:?}"),
                })?)
            }
            _ => {}
        }
    }
    Ok(labels)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(output)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Writes rows with the shortest decimal form that reads back exactly.
pub fn write_rows<W: Write>(output: W, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = writer(output);
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    flush(w)
}

pub fn write_points<W: Write>(output: W, data: &DataSet) -> Result<()> {
    write_rows(output, data.iter().map(<[f64]>::to_vec))
}

pub fn write_labels<W: Write>(output: W, labels: &[usize]) -> Result<()> {
    let mut w = writer(output);
    for l in labels {
        w.write_record([l.to_string()]).map_err(csv_error)?;
    }
    flush(w)
}
