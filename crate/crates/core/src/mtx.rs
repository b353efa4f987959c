//! Matrix Market coordinate I/O for real matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Writes the lower triangle of a symmetric matrix with the `symmetric`
/// qualifier (1-based indices).
pub fn write_symmetric(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let lower: Vec<(usize, usize, f64)> = a.entries().filter(|&(i, j, _)| j <= i).collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric").map_err(io)?;
    writeln!(out, "{} {} {}", a.n(), a.n(), lower.len()).map_err(io)?;
    for (i, j, v) in lower {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a square real coordinate matrix (`general` or `symmetric`).
pub fn read(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let banner = lines
        .next()
        .ok_or_else(|| Error::parse(&ctx, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(Error::parse(&ctx, format!("unsupported banner `{banner}`")));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(Error::parse(&ctx, format!("unsupported field `{}`", words[3])));
    }
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::parse(&ctx, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                let nums: Vec<usize> = fields
                    .iter()
                    .map(|f| f.parse().map_err(|_| Error::parse(&ctx, format!("bad size line `{line}`"))))
                    .collect::<Result<_>>()?;
                if nums.len() != 3 || nums[0] != nums[1] {
                    return Err(Error::parse(&ctx, format!("expected square size line, got `{line}`")));
                }
                size = Some((nums[0], nums[2]));
                triplets.reserve(nums[2] * if symmetric { 2 } else { 1 });
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(Error::parse(&ctx, format!("bad entry `{line}`")));
                }
                let i: usize = fields[0].parse().map_err(|_| Error::parse(&ctx, format!("bad row in `{line}`")))?;
                let j: usize = fields[1].parse().map_err(|_| Error::parse(&ctx, format!("bad column in `{line}`")))?;
                let v: f64 = fields[2].parse().map_err(|_| Error::parse(&ctx, format!("bad value in `{line}`")))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(Error::parse(&ctx, format!("index out of range in `{line}`")));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| Error::parse(&ctx, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(Error::parse(&ctx, format!("expected {nnz} entries, found {stored}")));
    }
    Ok(CsrMatrix::from_triplets(n, &triplets))
}
