//! Matrix Market reader and writer.
//!
//! Symmetric matrices are written in `coordinate real symmetric` form with
//! only the lower triangle stored; dense blocks of vectors use
//! `array real general`. Values are printed in shortest round-trip form, so
//! a write followed by a read reproduces every entry bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::SymMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::MatrixMarket {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<Header> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unknown format '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    Ok(Header { layout, symmetry })
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number '{token}'")))
}

fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("invalid index '{token}'")))
}

/// Reads any real Matrix Market matrix into a dense matrix. Symmetric
/// storage is mirrored.
pub fn read_dense<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = parse_header(&first?)?;

    let mut body = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        body.push((idx + 1, trimmed.to_string()));
    }
    let mut body = body.into_iter();
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<&str> = size.split_whitespace().collect();

    match header.layout {
        Layout::Coordinate => {
            if dims.len() != 3 {
                return Err(parse_err(size_line, "expected 'rows cols nnz'"));
            }
            let nrows = parse_usize(dims[0], size_line)?;
            let ncols = parse_usize(dims[1], size_line)?;
            let nnz = parse_usize(dims[2], size_line)?;
            if header.symmetry == Symmetry::Symmetric && nrows != ncols {
                return Err(parse_err(size_line, "symmetric matrix must be square"));
            }
            let mut m = DMatrix::zeros(nrows, ncols);
            let mut seen = 0;
            for (line_no, entry) in body {
                let t: Vec<&str> = entry.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(line_no, "expected 'row col value'"));
                }
                let i = parse_usize(t[0], line_no)?;
                let j = parse_usize(t[1], line_no)?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(parse_err(line_no, format!("index ({i}, {j}) out of range")));
                }
                let v = parse_f64(t[2], line_no)?;
                let (i, j) = (i - 1, j - 1);
                if header.symmetry == Symmetry::Symmetric {
                    if i < j {
                        return Err(parse_err(line_no, "upper-triangle entry in symmetric file"));
                    }
                    m[(i, j)] += v;
                    if i != j {
                        m[(j, i)] += v;
                    }
                } else {
                    m[(i, j)] += v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(
                    size_line,
                    format!("declared {nnz} entries, found {seen}"),
                ));
            }
            Ok(m)
        }
        Layout::Array => {
            if dims.len() != 2 {
                return Err(parse_err(size_line, "expected 'rows cols'"));
            }
            let nrows = parse_usize(dims[0], size_line)?;
            let ncols = parse_usize(dims[1], size_line)?;
            let mut values = Vec::new();
            for (line_no, entry) in body {
                for tok in entry.split_whitespace() {
                    values.push(parse_f64(tok, line_no)?);
                }
            }
            let mut m = DMatrix::zeros(nrows, ncols);
            let mut it = values.into_iter();
            let mut next = || {
                it.next()
                    .ok_or_else(|| parse_err(0, "too few array entries"))
            };
            match header.symmetry {
                Symmetry::General => {
                    for j in 0..ncols {
                        for i in 0..nrows {
                            m[(i, j)] = next()?;
                        }
                    }
                }
                Symmetry::Symmetric => {
                    if nrows != ncols {
                        return Err(parse_err(size_line, "symmetric matrix must be square"));
                    }
                    for j in 0..ncols {
                        for i in j..nrows {
                            let v = next()?;
                            m[(i, j)] = v;
                            m[(j, i)] = v;
                        }
                    }
                }
            }
            if next().is_ok() {
                return Err(parse_err(0, "too many array entries"));
            }
            Ok(m)
        }
    }
}

pub fn read_sym_matrix<R: BufRead>(reader: R) -> Result<SymMatrix> {
    SymMatrix::from_dense(read_dense(reader)?)
}

pub fn read_sym_matrix_file(path: impl AsRef<Path>) -> Result<SymMatrix> {
    read_sym_matrix(BufReader::new(File::open(path)?))
}

pub fn read_dense_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_dense(BufReader::new(File::open(path)?))
}

/// Writes the lower triangle in coordinate form, column by column.
pub fn write_sym_matrix<W: Write>(mut w: W, m: &SymMatrix) -> Result<()> {
    let n = m.order();
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", n, n, m.lower_nnz())?;
    for j in 0..n {
        for i in j..n {
            let v = m.get(i, j);
            if v != 0.0 {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

pub fn write_sym_matrix_file(path: impl AsRef<Path>, m: &SymMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sym_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Writes a dense matrix in column-major array form.
pub fn write_dense<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn write_dense_file(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense(&mut w, m)?;
    w.flush()?;
    Ok(())
}
