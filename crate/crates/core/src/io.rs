//! Atomic file output and the plain-text matrix format.
//!
//! Matrix files are row-major CSV preceded by two comment lines:
//!
//! ```text
//! # spiked-cycles matrix v1
//! # n=5,p=7,kappa=1,seed=42,provenance=alternative
//! 0.12,-1.3,...
//! ```
//!
//! `kappa` and `seed` may be `none`. Readers accept files without the header,
//! which are tagged as external data.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{DataMatrix, Provenance};

pub const MATRIX_MAGIC: &str = "# spiked-cycles matrix v1";

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::Null => "null",
        Provenance::Alternative => "alternative",
        Provenance::External => "external",
    }
}

/// CSV text of a matrix with the versioned header. Values use shortest round-trip formatting.
pub fn matrix_to_csv(x: &DataMatrix, kappa: Option<usize>) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let mut out = format!(
        "{MATRIX_MAGIC}\n# n={},p={},kappa={},seed={},provenance={}\n",
        x.n(),
        x.p(),
        opt(kappa.map(|k| k.to_string())),
        opt(x.seed().map(|s| s.to_string())),
        provenance_name(x.provenance())
    );
    for row in x.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, x: &DataMatrix, kappa: Option<usize>) -> Result<()> {
    write_atomic(path, matrix_to_csv(x, kappa).as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<DataMatrix> {
    parse_matrix_csv(&read_text(path)?, path)
}

/// Parses matrix CSV text; `path` only labels errors.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DataMatrix> {
    let fail = |message: String| Error::MatrixFormat {
        path: path.to_path_buf(),
        message,
    };
    let mut provenance = Provenance::External;
    let mut seed = None;
    let mut declared: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let (mut n, mut p) = (None, None);
            for field in comment.split(',') {
                let Some((key, value)) = field.trim().split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "n" => n = value.parse().ok(),
                    "p" => p = value.parse().ok(),
                    "seed" => seed = value.parse().ok(),
                    "provenance" => {
                        provenance = match value {
                            "null" => Provenance::Null,
                            "alternative" => Provenance::Alternative,
                            _ => Provenance::External,
                        }
                    }
                    _ => {}
                }
            }
            if let (Some(n), Some(p)) = (n, p) {
                declared = Some((n, p));
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| fail(format!("line {}: cannot parse {:?} as a number", lineno + 1, c.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(fail(format!(
                    "line {}: expected {w} values, found {}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let width = width.ok_or_else(|| fail("no data rows".into()))?;
    if let Some((n, p)) = declared {
        if (n, p) != (rows, width) {
            return Err(fail(format!("header declares {n}x{p}, data is {rows}x{width}")));
        }
    }
    let array = Array2::from_shape_vec((rows, width), values).expect("rows have equal width");
    DataMatrix::new(array, provenance, seed).map_err(|e| fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_null;

    #[test]
    fn matrix_round_trip_is_exact() {
        let x = sample_null(5, 7, 42).x;
        let text = matrix_to_csv(&x, Some(1));
        assert!(text.starts_with(MATRIX_MAGIC));
        assert!(text.contains("n=5,p=7,kappa=1,seed=42,provenance=null"));
        let back = parse_matrix_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn headerless_files_are_external() {
        let x = parse_matrix_csv("1,2\n3,4\n", Path::new("mem")).unwrap();
        assert_eq!(x.provenance(), Provenance::External);
        assert_eq!(x.values()[(1, 0)], 3.0);
    }

    #[test]
    fn malformed_files_are_rejected() {
        for text in ["1,2\n3\n", "1,x\n", "", "# n=3,p=2\n1,2\n"] {
            assert!(matches!(
                parse_matrix_csv(text, Path::new("mem")),
                Err(Error::MatrixFormat { .. })
            ));
        }
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
