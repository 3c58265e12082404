use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Reads a LIBSVM file. Labels become `b`; the feature count is the largest
/// index seen unless `n_features` is given.
pub fn load_libsvm(path: &Path, n_features: Option<usize>) -> Result<(SparseMatrix, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    parse_libsvm(&text, n_features)
}

pub fn parse_libsvm(text: &str, n_features: Option<usize>) -> Result<(SparseMatrix, Vec<f64>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let mut tokens = content.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label '{label_tok}'")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label '{label_tok}'")));
        }
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected index:value, found '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value in '{tok}'")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} does not increase past {last}")));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value in '{tok}'")));
            }
            last = idx;
            if val != 0.0 {
                row.push((idx - 1, val));
            }
        }
        max_index = max_index.max(last);
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    let d = match n_features {
        Some(d) if d < max_index => {
            return Err(Error::InvalidArgument(format!(
                "feature count {d} is below the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    if d == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok((SparseMatrix::from_rows(d, rows)?, labels))
}

/// Writes `(A, b)` in LIBSVM format with round-trip float formatting.
pub fn write_libsvm<W: Write>(mut w: W, a: &SparseMatrix, b: &[f64]) -> Result<()> {
    crate::error::check_len(a.n_rows(), b.len())?;
    for ((cols, vals), label) in a.rows().zip(b) {
        write!(w, "{label:?}")?;
        for (c, v) in cols.iter().zip(vals) {
            write!(w, " {}:{v:?}", c + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn normalize_rows(a: &SparseMatrix) -> SparseMatrix {
    let rows = a
        .rows()
        .map(|(cols, vals)| {
            let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm = if norm > 0.0 { norm } else { 1.0 };
            cols.iter().zip(vals).map(|(&c, v)| (c, v / norm)).collect()
        })
        .collect();
    SparseMatrix::from_rows(a.n_cols(), rows).expect("row structure is unchanged")
}
