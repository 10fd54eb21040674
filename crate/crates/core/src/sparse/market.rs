//! Matrix Market coordinate files.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FieldKind {
    Real,
    Integer,
    Complex,
    Pattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

/// Reads a coordinate-format file. Symmetric, skew-symmetric and hermitian files
/// store the lower triangle and are expanded to the full matrix.
pub fn read_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<CsrMatrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

fn parse<T: Scalar>(text: &str, name: &str) -> Result<CsrMatrix<T>> {
    let err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(err(1, format!("malformed header `{header}`")));
    }
    if words[2] != "coordinate" {
        return Err(err(1, format!("unsupported format `{}`, expected coordinate", words[2])));
    }
    let field = match words[3].as_str() {
        "real" => FieldKind::Real,
        "integer" => FieldKind::Integer,
        "complex" => FieldKind::Complex,
        "pattern" => FieldKind::Pattern,
        other => return Err(err(1, format!("unknown field `{other}`"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        "hermitian" => Symmetry::Hermitian,
        other => return Err(err(1, format!("unknown symmetry `{other}`"))),
    };
    if field == FieldKind::Complex && !T::KIND.is_complex() {
        return Err(err(1, format!("complex file cannot be read as {}", T::KIND)));
    }

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data
        .next()
        .ok_or_else(|| err(1, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(size_line, format!("malformed size line `{size}`")))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(size_line, format!("size line needs 3 integers, got `{size}`")));
    };
    if symmetry != Symmetry::General && nrows != ncols {
        return Err(err(size_line, "symmetric storage needs a square matrix".into()));
    }

    let want_words = match field {
        FieldKind::Pattern => 2,
        FieldKind::Complex => 4,
        _ => 3,
    };
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(nnz);
    let mut trip: Vec<(usize, usize, T)> = Vec::with_capacity(nnz * 2);
    let mut count = 0usize;
    let mut last_line = size_line;
    for (ln, line) in data {
        last_line = ln;
        count += 1;
        if count > nnz {
            return Err(err(ln, format!("more than the declared {nnz} entries")));
        }
        let w: Vec<&str> = line.split_whitespace().collect();
        if w.len() != want_words {
            return Err(err(ln, format!("expected {want_words} fields, got {}", w.len())));
        }
        let idx = |s: &str, n: usize| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| err(ln, format!("invalid index `{s}`")))?;
            if v == 0 || v > n {
                return Err(err(ln, format!("index {v} out of bounds 1..={n}")));
            }
            Ok(v - 1)
        };
        let i = idx(w[0], nrows)?;
        let j = idx(w[1], ncols)?;
        let v = match field {
            FieldKind::Pattern => T::one(),
            FieldKind::Complex => T::parse_parts(w[2], Some(w[3])).map_err(|m| err(ln, m))?,
            _ => T::parse_parts(w[2], None).map_err(|m| err(ln, m))?,
        };
        match symmetry {
            Symmetry::General => {}
            Symmetry::SkewSymmetric if i <= j => {
                return Err(err(ln, format!("skew-symmetric entry ({}, {}) not below the diagonal", i + 1, j + 1)))
            }
            _ if i < j => {
                return Err(err(ln, format!("entry ({}, {}) above the diagonal in a symmetric file", i + 1, j + 1)))
            }
            _ => {}
        }
        if let Some(first) = seen.insert((i, j), ln) {
            return Err(err(ln, format!("duplicate entry ({}, {}), first on line {first}", i + 1, j + 1)));
        }
        trip.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => trip.push((j, i, v)),
                Symmetry::SkewSymmetric => trip.push((j, i, -v)),
                Symmetry::Hermitian => trip.push((j, i, v.conj())),
            }
        }
    }
    if count < nnz {
        return Err(err(last_line, format!("expected {nnz} entries, found {count}")));
    }
    CsrMatrix::from_triplets(nrows, ncols, trip).map_err(|e| err(last_line, e.to_string()))
}

/// Writes all stored entries in `general` symmetry, `real` or `complex` field.
pub fn write_matrix_market<T: Scalar>(a: &CsrMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let field = if T::KIND.is_complex() { "complex" } else { "real" };
    writeln!(w, "%%MatrixMarket matrix coordinate {field} general").map_err(io)?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz()).map_err(io)?;
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            let (re, im) = v.format_parts();
            match im {
                Some(im) => writeln!(w, "{} {} {re} {im}", i + 1, j + 1),
                None => writeln!(w, "{} {} {re}", i + 1, j + 1),
            }
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
