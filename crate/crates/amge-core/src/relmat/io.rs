//! Matrix Market import/export.
//!
//! Coordinate files carry the exact header
//! `%%MatrixMarket matrix coordinate real general`; boolean relations are
//! written with value 1.0. Dense vectors use the array variant.

use super::{EntityKind, Relation, SparseMatrix};
use crate::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};

pub const COORDINATE_HEADER: &str = "%%MatrixMarket matrix coordinate real general";
pub const ARRAY_HEADER: &str = "%%MatrixMarket matrix array real general";

pub fn write_matrix<W: Write>(w: &mut W, m: &SparseMatrix) -> Result<()> {
    writeln!(w, "{COORDINATE_HEADER}")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.iter() {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_relation<W: Write>(w: &mut W, r: &Relation) -> Result<()> {
    writeln!(w, "{COORDINATE_HEADER}")?;
    writeln!(w, "{} {} {}", r.nrows(), r.ncols(), r.nnz())?;
    for (i, j) in r.iter() {
        writeln!(w, "{} {} 1.0", i + 1, j + 1)?;
    }
    Ok(())
}

/// Dense column vector in array format.
pub fn write_vector<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    writeln!(w, "{ARRAY_HEADER}")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

struct Coordinate {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

fn read_coordinate<R: Read>(r: R) -> Result<Coordinate> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::MatrixMarket {
            line: 1,
            detail: "empty file".into(),
        })
        .and_then(|(n, l)| Ok((n + 1, l?)))?;
    if header.trim() != COORDINATE_HEADER {
        return Err(Error::MatrixMarket {
            line: line_no,
            detail: format!("expected `{COORDINATE_HEADER}`, found `{header}`"),
        });
    }
    let mut size_line = None;
    let mut size_line_no = 0;
    for (n, line) in &mut lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some(trimmed.to_string());
        size_line_no = n + 1;
        break;
    }
    let size_line = size_line.ok_or(Error::MatrixMarket {
        line: size_line_no,
        detail: "missing size line".into(),
    })?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::MatrixMarket {
                line: size_line_no,
                detail: format!("bad size token `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::MatrixMarket {
            line: size_line_no,
            detail: "size line must be `nrows ncols nnz`".into(),
        });
    }
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets = Vec::with_capacity(nnz);
    for (n, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let parse_idx = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse::<usize>().ok())
                .ok_or(Error::MatrixMarket {
                    line: n + 1,
                    detail: "bad entry line".into(),
                })
        };
        let i = parse_idx(tokens.next())?;
        let j = parse_idx(tokens.next())?;
        let v: f64 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(Error::MatrixMarket {
                line: n + 1,
                detail: "bad value token".into(),
            })?;
        if i == 0 || j == 0 {
            return Err(Error::MatrixMarket {
                line: n + 1,
                detail: "indices are 1-based".into(),
            });
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::MatrixMarket {
            line: size_line_no,
            detail: format!("declared {} entries, found {}", nnz, triplets.len()),
        });
    }
    Ok(Coordinate {
        nrows,
        ncols,
        triplets,
    })
}

pub fn read_matrix<R: Read>(r: R) -> Result<SparseMatrix> {
    let coo = read_coordinate(r)?;
    SparseMatrix::from_triplets(coo.nrows, coo.ncols, coo.triplets)
}

pub fn read_relation<R: Read>(r: R, row_kind: EntityKind, col_kind: EntityKind) -> Result<Relation> {
    let coo = read_coordinate(r)?;
    Relation::from_pairs(
        row_kind,
        col_kind,
        coo.nrows,
        coo.ncols,
        coo.triplets.into_iter().map(|(i, j, _)| (i, j)),
    )
}
