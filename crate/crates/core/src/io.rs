//! File formats.
//!
//! * Matrix Market `coordinate real general` for shift operators and other
//!   matrices (1-based indices on disk, 0-based in memory). `symmetric`
//!   files and `integer`/`pattern` fields are accepted on read.
//! * CSV with header `node,value` for graph signals (0-based node ids).
//! * Header-less CSV for dense matrices (one matrix row per line).
//!
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`
//! bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{GspError, Result};
use crate::graph::ShiftOperator;

fn io_err(path: &Path, source: std::io::Error) -> GspError {
    GspError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GspError {
    GspError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| io_err(path, e))?,
    ))
}

/// Writes nonzero entries of `m` in coordinate form.
pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut t = Vec::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(r, c)] != 0.0 {
                t.push((r, c, m[(r, c)]));
            }
        }
    }
    write_coordinate(path.as_ref(), m.nrows(), m.ncols(), &t)
}

pub fn save_shift(path: impl AsRef<Path>, s: &ShiftOperator) -> Result<()> {
    write_coordinate(path.as_ref(), s.n(), s.n(), &s.triplets())
}

fn write_coordinate(
    path: &Path,
    rows: usize,
    cols: usize,
    t: &[(usize, usize, f64)],
) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::new();
    body.push_str("%%MatrixMarket matrix coordinate real general\n");
    body.push_str(&format!("{rows} {cols} {}\n", t.len()));
    for &(r, c, v) in t {
        body.push_str(&format!("{} {} {}\n", r + 1, c + 1, fmt_f64(v)));
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a Matrix Market coordinate file as `(rows, cols, triplets)`.
pub fn load_coordinate(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<(usize, usize, f64)>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (lineno, banner) = match lines.next() {
        Some((i, l)) => (i + 1, l.map_err(|e| io_err(path, e))?),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            path,
            lineno,
            "missing %%MatrixMarket matrix banner",
        ));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(
            path,
            lineno,
            format!("unsupported format '{}'", tokens[2]),
        ));
    }
    let field = tokens[3].as_str();
    if !matches!(field, "real" | "integer" | "pattern") {
        return Err(parse_err(
            path,
            lineno,
            format!("unsupported field '{field}'"),
        ));
    }
    let symmetry = tokens[4].as_str();
    if !matches!(symmetry, "general" | "symmetric") {
        return Err(parse_err(
            path,
            lineno,
            format!("unsupported symmetry '{symmetry}'"),
        ));
    }

    let mut header: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match header {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(path, lineno, "size line must be 'rows cols nnz'"));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(path, lineno, format!("invalid size field '{s}'")))
                };
                header = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
            }
            Some((rows, cols, _)) => {
                let need = if field == "pattern" { 2 } else { 3 };
                if fields.len() != need {
                    return Err(parse_err(path, lineno, format!("expected {need} fields")));
                }
                let idx = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(path, lineno, format!("invalid index '{s}'")))
                };
                let (r, c) = (idx(fields[0])?, idx(fields[1])?);
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(GspError::OutOfBounds {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("entry ({r}, {c}) outside {rows}x{cols}"),
                    });
                }
                let v = if field == "pattern" {
                    1.0
                } else {
                    fields[2].parse::<f64>().map_err(|_| {
                        parse_err(path, lineno, format!("invalid value '{}'", fields[2]))
                    })?
                };
                triplets.push((r - 1, c - 1, v));
                if symmetry == "symmetric" && r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = header.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let stored = if symmetry == "symmetric" {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(
            path,
            1,
            format!("header declares {nnz} entries, found {stored}"),
        ));
    }
    Ok((rows, cols, triplets))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let (rows, cols, t) = load_coordinate(path)?;
    let mut m = DMatrix::zeros(rows, cols);
    for (r, c, v) in t {
        m[(r, c)] += v;
    }
    Ok(m)
}

pub fn load_shift(path: impl AsRef<Path>) -> Result<ShiftOperator> {
    let path = path.as_ref();
    let (rows, cols, t) = load_coordinate(path)?;
    if rows != cols {
        return Err(parse_err(
            path,
            2,
            format!("shift operator must be square, got {rows}x{cols}"),
        ));
    }
    ShiftOperator::from_triplets(rows, &t).map_err(|e| parse_err(path, 2, e.to_string()))
}

pub fn save_signal(path: impl AsRef<Path>, x: &DVector<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = String::from("node,value\n");
    for (i, v) in x.iter().enumerate() {
        body.push_str(&format!("{i},{}\n", fmt_f64(*v)));
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a `node,value` CSV. Every node id in `0..rows` must appear once.
pub fn load_signal(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "node" || &headers[1] != "value" {
        return Err(parse_err(path, 1, "expected header 'node,value'"));
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(parse_err(path, line, "expected 2 fields"));
        }
        let node = rec[0]
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("invalid node id '{}'", &rec[0])))?;
        let value = rec[1]
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("non-numeric value '{}'", &rec[1])))?;
        entries.push((line, node, value));
    }
    let n = entries.len();
    let mut x = DVector::from_element(n, f64::NAN);
    let mut seen = vec![false; n];
    for (line, node, value) in entries {
        if node >= n {
            return Err(GspError::OutOfBounds {
                path: path.to_path_buf(),
                line,
                msg: format!("node {node} with only {n} rows"),
            });
        }
        if seen[node] {
            return Err(parse_err(path, line, format!("duplicate node {node}")));
        }
        seen[node] = true;
        x[node] = value;
    }
    Ok(x)
}

pub fn save_dense_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_f64(m[(r, c)])).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_dense_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("non-numeric field '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
