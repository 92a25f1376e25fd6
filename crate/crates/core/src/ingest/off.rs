use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{parse_err, read_bytes, IngestError};
use crate::complex::{build_complex, SimplicialComplex};

/// Reads an OFF triangle mesh into a 3D complex (triangles plus their
/// edges and vertices).
pub fn load_off(path: &Path) -> Result<SimplicialComplex, IngestError> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| parse_err(path, "not UTF-8 text"))?;
    parse_off(path, text)
}

pub fn parse_off(path: &Path, text: &str) -> Result<SimplicialComplex, IngestError> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());

    let first = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let mut tokens: Vec<&str> = first.split_whitespace().collect();
    if tokens.first() != Some(&"OFF") {
        return Err(parse_err(path, format!("malformed header {first:?}: expected OFF")));
    }
    tokens.remove(0);
    // counts may sit on the header line or on the next one
    if tokens.is_empty() {
        tokens = lines
            .next()
            .ok_or_else(|| parse_err(path, "missing element counts"))?
            .split_whitespace()
            .collect();
    }
    let counts = tokens
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| parse_err(path, format!("malformed counts {tokens:?}")))?;
    if counts.len() < 2 {
        return Err(parse_err(path, format!("malformed counts {tokens:?}")));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let line = lines
            .next()
            .ok_or_else(|| parse_err(path, format!("expected {nv} vertices, found {i}")))?;
        let xyz = line
            .split_whitespace()
            .take(3)
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, format!("bad vertex line {line:?}")))?;
        if xyz.len() != 3 {
            return Err(parse_err(path, format!("vertex {i} needs 3 coordinates")));
        }
        vertices.push(xyz);
    }

    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let line = lines
            .next()
            .ok_or_else(|| parse_err(path, format!("expected {nf} faces, found {f}")))?;
        let vals = line
            .split_whitespace()
            .map(str::parse::<usize>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, format!("bad face line {line:?}")))?;
        let count = *vals.first().ok_or_else(|| parse_err(path, "empty face line"))?;
        if count != 3 {
            return Err(IngestError::NonTriangleFace {
                path: path.to_path_buf(),
                face: f,
                count,
            });
        }
        if vals.len() < 4 {
            return Err(parse_err(path, format!("face {f} lists fewer than 3 indices")));
        }
        faces.push(vals[1..4].to_vec());
    }
    Ok(build_complex(3, &vertices, &faces)?)
}

/// Writes the triangles of a 3D complex as OFF.
pub fn write_off(complex: &SimplicialComplex, path: &Path) -> Result<(), IngestError> {
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", complex.point_count(), complex.count(2));
    for p in complex.points() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p.get(2).copied().unwrap_or(0.0));
    }
    for t in complex.simplices(2) {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    fs::write(path, out).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
