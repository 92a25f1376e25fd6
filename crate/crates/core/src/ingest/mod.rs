//! Loading shapes and tabular data.
//!
//! * Binary masks (PGM `P2`/`P5`, or CSV grids of numbers) become planar
//!   complexes through [`mask_to_complex`].
//! * OFF triangle meshes become 3D complexes through [`load_off`].
//! * Complex dumps (JSON) round-trip any [`SimplicialComplex`].
//! * A JSON manifest ties subjects to shapes, responses and covariate CSVs;
//!   see [`load_dataset`].

mod dataset;
mod mask;
mod off;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{build_complex, ComplexError, SimplicialComplex};

pub use dataset::{load_dataset, read_feature_csv, Dataset, FeatureMatrix, Manifest, SubjectEntry};
pub use mask::{load_mask, mask_to_complex, write_pgm, BinaryImage};
pub use off::{load_off, parse_off, write_off};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("{path}: face {face} has {count} vertices; only triangles are supported")]
    NonTriangleFace {
        path: PathBuf,
        face: usize,
        count: usize,
    },
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("{path}: unknown subject id {id:?}")]
    UnknownSubject { path: PathBuf, id: String },
    #[error("duplicate subject id {0:?}")]
    DuplicateId(String),
    #[error("subject {subject:?} has no row in covariate {kind:?}")]
    MissingCovariate { subject: String, kind: String },
    #[error("{path}: non-finite value for subject {id:?} in column {column:?}")]
    NonFinite {
        path: PathBuf,
        id: String,
        column: String,
    },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("cannot tell the format of {0} from its extension")]
    UnsupportedFormat(PathBuf),
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn parse_err(path: &Path, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Plain dump of a complex: coordinates and every simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexDump {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
}

impl From<&SimplicialComplex> for ComplexDump {
    fn from(k: &SimplicialComplex) -> Self {
        ComplexDump {
            dim: k.dim(),
            vertices: k.points().map(<[f64]>::to_vec).collect(),
            simplices: k.all_simplices().cloned().collect(),
        }
    }
}

impl ComplexDump {
    pub fn build(&self) -> Result<SimplicialComplex, ComplexError> {
        build_complex(self.dim, &self.vertices, &self.simplices)
    }
}

pub fn save_complex_json(complex: &SimplicialComplex, path: &Path) -> Result<(), IngestError> {
    let text = serde_json::to_string(&ComplexDump::from(complex)).expect("dump serializes");
    fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_complex_json(path: &Path) -> Result<SimplicialComplex, IngestError> {
    let dump: ComplexDump =
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| parse_err(path, e.to_string()))?;
    Ok(dump.build()?)
}

/// Loads any supported shape by extension: `.pgm`/`.csv` masks (scaled by
/// `pixel_spacing`), `.off` meshes, `.json` complex dumps.
pub fn load_shape(path: &Path, pixel_spacing: f64) -> Result<SimplicialComplex, IngestError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" | "csv" => {
            let mut img = load_mask(path)?;
            img.spacing = pixel_spacing;
            mask_to_complex(&img)
        }
        "off" => load_off(path),
        "json" => load_complex_json(path),
        _ => Err(IngestError::UnsupportedFormat(path.to_path_buf())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{betti_numbers, euler_characteristic};

    #[test]
    fn dump_round_trip_keeps_topology() {
        let k = build_complex(
            2,
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]],
            &[vec![0, 1, 2], vec![2, 3], vec![1, 3]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        save_complex_json(&k, &path).unwrap();
        let back = load_shape(&path, 1.0).unwrap();
        assert_eq!(back, k);
        assert_eq!(euler_characteristic(&back), euler_characteristic(&k));
        assert_eq!(betti_numbers(&back), betti_numbers(&k));
    }

    #[test]
    fn unknown_extension() {
        assert!(matches!(
            load_shape(Path::new("shape.xyz"), 1.0),
            Err(IngestError::UnsupportedFormat(_))
        ));
    }
}
