use std::fs;
use std::path::Path;

use super::{parse_err, read_bytes, IngestError};
use crate::complex::{build_complex, SimplicialComplex};

/// Rectangular foreground mask. Row 0 is the top row of the image.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
    /// Distance between neighbouring pixel centers.
    pub spacing: f64,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            pixels: vec![false; width * height],
            spacing: 1.0,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        BinaryImage {
            width,
            height,
            pixels,
            spacing: 1.0,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// Reads a PGM (`P2` or `P5`) or a CSV grid; nonzero pixels are foreground.
pub fn load_mask(path: &Path) -> Result<BinaryImage, IngestError> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(path, &bytes)
    } else {
        parse_csv_mask(path, &bytes)
    }
}

fn parse_csv_mask(path: &Path, bytes: &[u8]) -> Result<BinaryImage, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse_err(path, "not UTF-8 text"))?;
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split([',', ';', ' ', '\t'])
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map(|v| v != 0.0)
                    .map_err(|_| parse_err(path, format!("line {}: bad value {t:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    format!(
                        "non-rectangular CSV: line {} has {} values, expected {}",
                        lineno + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    Ok(BinaryImage {
        width,
        height,
        pixels: rows.into_iter().flatten().collect(),
        spacing: 1.0,
    })
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<BinaryImage, IngestError> {
    let binary = bytes[1] == b'5';
    // header: magic, width, height, maxval, with '#' comments
    let mut pos = 2;
    let mut header = Vec::with_capacity(3);
    while header.len() < 3 {
        pos = skip_space_and_comments(bytes, pos);
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        let v: usize = tok
            .parse()
            .map_err(|_| parse_err(path, format!("bad PGM header token {tok:?}")))?;
        header.push(v);
    }
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, format!("bad PGM maxval {maxval}")));
    }
    let n = width * height;
    let pixels = if binary {
        pos += 1; // single whitespace after maxval
        let bpp = if maxval < 256 { 1 } else { 2 };
        let data = bytes.get(pos..pos + n * bpp).ok_or_else(|| parse_err(path, "truncated PGM data"))?;
        data.chunks_exact(bpp)
            .map(|c| c.iter().any(|&b| b != 0))
            .collect()
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| parse_err(path, "not ASCII"))?;
        let vals = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .take(n)
            .map(|t| t.parse::<u32>().map(|v| v != 0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, "bad PGM pixel value"))?;
        if vals.len() != n {
            return Err(parse_err(path, "truncated PGM data"));
        }
        vals
    };
    Ok(BinaryImage {
        width,
        height,
        pixels,
        spacing: 1.0,
    })
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

/// Writes a binary `P5` PGM with foreground 255.
pub fn write_pgm(img: &BinaryImage, path: &Path) -> Result<(), IngestError> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| if p { 255u8 } else { 0 }));
    fs::write(path, out).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Triangulates the foreground: one vertex per foreground pixel center,
/// edges between 4-adjacent foreground pixels, and each fully foreground
/// 2x2 block split into two triangles along its lower-left to upper-right
/// diagonal. Pixel (row, col) sits at `(col, height - 1 - row) * spacing`.
pub fn mask_to_complex(img: &BinaryImage) -> Result<SimplicialComplex, IngestError> {
    if img.foreground_count() == 0 {
        return Err(IngestError::EmptyMask);
    }
    let mut index = vec![usize::MAX; img.pixels.len()];
    let mut points = Vec::with_capacity(img.foreground_count());
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) {
                index[r * img.width + c] = points.len();
                points.push(vec![
                    c as f64 * img.spacing,
                    (img.height - 1 - r) as f64 * img.spacing,
                ]);
            }
        }
    }
    let id = |r: usize, c: usize| index[r * img.width + c];
    let mut simplices: Vec<Vec<usize>> = Vec::new();
    for r in 0..img.height {
        for c in 0..img.width {
            if !img.get(r, c) {
                continue;
            }
            simplices.push(vec![id(r, c)]);
            if c + 1 < img.width && img.get(r, c + 1) {
                simplices.push(vec![id(r, c), id(r, c + 1)]);
            }
            if r + 1 < img.height && img.get(r + 1, c) {
                simplices.push(vec![id(r, c), id(r + 1, c)]);
            }
            if r + 1 < img.height && c + 1 < img.width && img.get(r, c + 1) && img.get(r + 1, c) && img.get(r + 1, c + 1) {
                // row r is the upper row of the block
                let (ul, ur, ll, lr) = (id(r, c), id(r, c + 1), id(r + 1, c), id(r + 1, c + 1));
                simplices.push(vec![ll, lr, ur]);
                simplices.push(vec![ll, ul, ur]);
            }
        }
    }
    Ok(build_complex(2, &points, &simplices)?)
}
