//! Plain CSV for dense vectors and matrices.
//!
//! Values are written with `f64`'s `Display`, which round-trips exactly.
//! Lines starting with `#` are skipped on read.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{EivError, Result};

pub fn write_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector(path: &Path, v: ArrayView1<'_, f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for x in v {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| EivError::Parse(format!("line {line}: {s:?}: {e}")))
}

pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, l) in data_lines(text) {
        let before = data.len();
        for field in l.split(',') {
            data.push(parse_f64(field, line)?);
        }
        let k = data.len() - before;
        match cols {
            None => cols = Some(k),
            Some(c) if c != k => {
                return Err(EivError::Parse(format!("line {line}: expected {c} columns, found {k}")));
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| EivError::Parse(e.to_string()))
}

pub fn parse_vector(text: &str) -> Result<Array1<f64>> {
    data_lines(text)
        .map(|(line, l)| parse_f64(l, line))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}
