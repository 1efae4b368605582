use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// What a stored matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Soft,
    Hard,
    Lifted,
}

impl MatrixKind {
    fn code(self) -> u8 {
        match self {
            MatrixKind::Soft => 0,
            MatrixKind::Hard => 1,
            MatrixKind::Lifted => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [MatrixKind::Soft, MatrixKind::Hard, MatrixKind::Lifted].into_iter().find(|k| k.code() == c)
    }

    fn name(self) -> &'static str {
        match self {
            MatrixKind::Soft => "soft",
            MatrixKind::Hard => "hard",
            MatrixKind::Lifted => "lifted",
        }
    }
}

const MAGIC: &[u8; 8] = b"FSEGMAT\0";

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes a square matrix. Paths ending in `.csv` get a text file with a
/// `# kind=<kind> n=<n>` comment line; anything else gets the binary layout
/// `magic, u64 n, u8 kind, n*n f64` (little endian, row-major).
pub fn write_matrix(path: impl AsRef<Path>, m: &Mat, kind: MatrixKind) -> Result<()> {
    let path = path.as_ref();
    assert!(m.is_square());
    let n = m.rows();
    let bytes = if is_csv(path) {
        let mut s = format!("# kind={} n={n}\n", kind.name());
        for r in 0..n {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s.into_bytes()
    } else {
        let mut b = Vec::with_capacity(17 + 8 * n * n);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&(n as u64).to_le_bytes());
        b.push(kind.code());
        for v in m.as_slice() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(Mat, MatrixKind)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) { parse_binary(&bytes) } else { parse_csv(&bytes) };
    parsed.map_err(|reason| Error::format(path, reason))
}

fn parse_binary(b: &[u8]) -> std::result::Result<(Mat, MatrixKind), String> {
    if b.len() < 17 {
        return Err("truncated header".into());
    }
    let n = u64::from_le_bytes(b[8..16].try_into().expect("8 bytes")) as usize;
    let kind = MatrixKind::from_code(b[16]).ok_or_else(|| format!("unknown matrix kind {}", b[16]))?;
    let expected = n.checked_mul(n).and_then(|c| c.checked_mul(8)).ok_or("matrix too large")?;
    let data = &b[17..];
    if data.len() != expected {
        return Err(format!("expected {expected} data bytes, found {}", data.len()));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((Mat::from_row_major(n, n, values), kind))
}

fn parse_csv(b: &[u8]) -> std::result::Result<(Mat, MatrixKind), String> {
    let text = std::str::from_utf8(b).map_err(|_| "neither a binary matrix nor UTF-8 text")?;
    let mut kind = MatrixKind::Lifted;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some(k) = token.strip_prefix("kind=") {
                    kind = match k {
                        "soft" => MatrixKind::Soft,
                        "hard" => MatrixKind::Hard,
                        "lifted" => MatrixKind::Lifted,
                        other => return Err(format!("unknown matrix kind `{other}`")),
                    };
                }
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err("matrix is not square".into());
    }
    Ok((Mat::from_row_major(n, n, rows.concat()), kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mat::from_fn(3, 3, |r, c| 0.1 * (r * 3 + c) as f64 + 1.0 / 3.0);
        for (name, kind) in [("a.bin", MatrixKind::Soft), ("b.csv", MatrixKind::Lifted), ("c.csv", MatrixKind::Hard)] {
            let p = dir.path().join(name);
            write_matrix(&p, &m, kind).unwrap();
            let (back, k) = read_matrix(&p).unwrap();
            assert_eq!(back, m);
            assert_eq!(k, kind);
        }
    }

    #[test]
    fn rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"FSEGMAT\0\x02\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format { .. })));
    }
}
