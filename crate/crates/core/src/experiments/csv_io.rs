use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::model::{AnswerVector, ObservationMatrix};

/// Worker id marking the optional ground-truth row.
pub const GROUND_TRUTH_ID: &str = "__GROUND_TRUTH__";

const QUESTION_PREFIX: &str = "q_";

fn parse_error(line: u64, col: usize, message: impl Into<String>) -> Error {
    Error::ParseError { line: line as usize, col, message: message.into() }
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, 0, e.to_string())
        }
    }
}

fn parse_cell(field: &str, line: u64, col: usize) -> Result<f64> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(line, col, format!("not a number: {field:?}")))?;
    if !value.is_finite() {
        return Err(parse_error(line, col, format!("non-finite value: {field:?}")));
    }
    Ok(value)
}

/// Parses a dataset in the `worker_id,q_<id>,...` wire format.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::EmptyMatrix),
        Some(r) => r.map_err(csv_error)?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    if header.get(0).map(str::trim) != Some("worker_id") {
        return Err(parse_error(header_line, 1, "first header field must be `worker_id`"));
    }
    let mut question_ids = Vec::with_capacity(header.len().saturating_sub(1));
    for (k, field) in header.iter().enumerate().skip(1) {
        let id = field
            .trim()
            .strip_prefix(QUESTION_PREFIX)
            .ok_or_else(|| parse_error(header_line, k + 1, format!("question header must start with `q_`: {field:?}")))?;
        question_ids.push(id.to_string());
    }
    let m = question_ids.len();
    if m == 0 {
        return Err(parse_error(header_line, 1, "no question columns"));
    }

    let mut worker_ids = Vec::new();
    let mut values = Vec::new();
    let mut truth: Option<Vec<f64>> = None;
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != m + 1 {
            return Err(parse_error(line, record.len().min(m + 1), format!("expected {} fields, got {}", m + 1, record.len())));
        }
        let id = record[0].trim();
        let row = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, f)| parse_cell(f, line, k + 1))
            .collect::<Result<Vec<f64>>>()?;
        if id == GROUND_TRUTH_ID {
            if truth.is_some() {
                return Err(Error::DuplicateGroundTruth { line: line as usize });
            }
            truth = Some(row);
        } else {
            if truth.is_some() {
                return Err(parse_error(line, 1, "worker rows must precede the ground-truth row"));
            }
            worker_ids.push(id.to_string());
            values.extend(row);
        }
    }
    if worker_ids.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let matrix = ObservationMatrix::from_row_major(worker_ids.len(), m, values)?.with_ids(worker_ids, question_ids)?;
    let ground_truth = truth.map(AnswerVector::new).transpose()?;
    Dataset::new(matrix, ground_truth)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

/// Writes a dataset in the wire format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(writer: W, ds: &Dataset) -> Result<()> {
    let x = &ds.matrix;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["worker_id".to_string()];
    header.extend((0..x.n_questions()).map(|j| format!("{QUESTION_PREFIX}{}", x.question_id(j))));
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..x.n_workers() {
        let mut rec = vec![x.worker_id(i)];
        rec.extend(x.row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    if let Some(gt) = &ds.ground_truth {
        let mut rec = vec![GROUND_TRUTH_ID.to_string()];
        rec.extend(gt.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    write_csv(File::create(path)?, ds)
}

/// Reads a precomputed aggregate: a single `answer` column.
pub fn read_answers<R: Read>(reader: R) -> Result<AnswerVector> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 1 || header[0].trim() != "answer" {
        return Err(parse_error(1, 1, "expected a single `answer` column"));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(parse_cell(&record[0], line, 1)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyVector);
    }
    AnswerVector::new(out)
}

pub fn write_answers<W: Write>(mut writer: W, answers: &AnswerVector) -> Result<()> {
    writeln!(writer, "answer")?;
    for a in answers.iter() {
        writeln!(writer, "{a}")?;
    }
    Ok(())
}
