//! Parity-check matrices in the standard alist text format.
//!
//! Layout: `n m`, `max_col_deg max_row_deg`, the n column degrees, the m row
//! degrees, then per-column 1-based row indices and per-row 1-based column
//! indices. Both the zero-padded (classic) and unpadded variants are
//! accepted; files are written padded.

use std::fmt::Write as _;
use std::path::Path;

use crate::link::ldpc::SparseH;
use crate::{Error, Result};

pub fn parse_alist(text: &str) -> Result<SparseH> {
    let mut tokens = text.split_whitespace().map(|t| {
        t.parse::<i64>()
            .map_err(|_| Error::AlistParse(format!("non-integer token {t:?}")))
    });
    let mut next = |what: &str| -> Result<i64> {
        tokens
            .next()
            .ok_or_else(|| Error::AlistParse(format!("unexpected end of file reading {what}")))?
    };

    let n = next("n")? as usize;
    let m = next("m")? as usize;
    if n == 0 || m == 0 {
        return Err(Error::AlistParse("zero dimensions".into()));
    }
    let max_col = next("max column degree")? as usize;
    let max_row = next("max row degree")? as usize;
    let col_deg: Vec<usize> = (0..n)
        .map(|_| next("column degree").map(|v| v as usize))
        .collect::<Result<_>>()?;
    let row_deg: Vec<usize> = (0..m)
        .map(|_| next("row degree").map(|v| v as usize))
        .collect::<Result<_>>()?;
    if col_deg.iter().any(|&d| d > max_col) || row_deg.iter().any(|&d| d > max_row) {
        return Err(Error::AlistParse("degree exceeds declared maximum".into()));
    }

    // Remaining token count decides padded vs unpadded.
    let rest: Vec<i64> = tokens.collect::<Result<_>>()?;
    let padded_len = n * max_col + m * max_row;
    let unpadded_len = col_deg.iter().sum::<usize>() + row_deg.iter().sum::<usize>();
    let padded = if rest.len() == padded_len {
        true
    } else if rest.len() == unpadded_len {
        false
    } else {
        return Err(Error::AlistParse(format!(
            "unexpected token count {} (padded {}, unpadded {})",
            rest.len(),
            padded_len,
            unpadded_len
        )));
    };

    let mut pos = 0usize;
    let mut take = |count: usize, width: usize| -> Vec<i64> {
        let stride = if padded { width } else { count };
        let slice = rest[pos..pos + stride].to_vec();
        pos += stride;
        slice.into_iter().take(count).collect()
    };

    let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
    for &d in &col_deg {
        let entries = take(d, max_col);
        let mut col = Vec::with_capacity(d);
        for e in entries {
            if e < 1 || e as usize > m {
                return Err(Error::AlistParse(format!("row index {e} out of range")));
            }
            col.push(e as usize - 1);
        }
        cols.push(col);
    }
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(m);
    for &d in &row_deg {
        let entries = take(d, max_row);
        let mut row = Vec::with_capacity(d);
        for e in entries {
            if e < 1 || e as usize > n {
                return Err(Error::AlistParse(format!("column index {e} out of range")));
            }
            row.push(e as usize - 1);
        }
        rows.push(row);
    }

    let h = SparseH::from_rows(m, n, rows);
    // Cross-check the column lists against the row-derived adjacency.
    for (v, col) in cols.iter().enumerate() {
        let mut sorted = col.clone();
        sorted.sort_unstable();
        if sorted != h.cols[v] {
            return Err(Error::AlistParse(format!(
                "column {v} adjacency disagrees with row lists"
            )));
        }
    }
    Ok(h)
}

pub fn to_alist(h: &SparseH) -> String {
    let max_col = h.cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = h.rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", h.num_vars, h.num_checks);
    let _ = writeln!(out, "{max_col} {max_row}");
    let degs = |v: &[Vec<usize>]| {
        v.iter()
            .map(|x| x.len().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "{}", degs(&h.cols));
    let _ = writeln!(out, "{}", degs(&h.rows));
    let padded_line = |list: &[usize], width: usize| {
        let mut parts: Vec<String> = list.iter().map(|i| (i + 1).to_string()).collect();
        parts.resize(width, "0".to_string());
        parts.join(" ")
    };
    for col in &h.cols {
        let _ = writeln!(out, "{}", padded_line(col, max_col));
    }
    for row in &h.rows {
        let _ = writeln!(out, "{}", padded_line(row, max_row));
    }
    out
}

pub fn load_alist(path: &Path) -> Result<SparseH> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::AlistParse(format!("{}: {e}", path.display())))?;
    parse_alist(&text)
}
