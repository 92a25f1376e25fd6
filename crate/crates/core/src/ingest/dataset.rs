use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{parse_err, read_bytes, IngestError};

/// Cohort description. Relative paths are resolved against the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subjects: Vec<SubjectEntry>,
    /// Covariate type name to CSV path (header row, id in the first column).
    #[serde(default)]
    pub covariates: BTreeMap<String, PathBuf>,
    /// Missing covariate rows are an error instead of dropping the subject.
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "unit_spacing")]
    pub pixel_spacing: f64,
}

fn unit_spacing() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    /// 2D slice masks, aggregated per direction.
    #[serde(default)]
    pub masks: Vec<PathBuf>,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    #[serde(default)]
    pub responses: BTreeMap<String, f64>,
}

/// Numeric matrix with one row per subject.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.rows[i].as_slice())
    }
}

/// A loaded manifest with covariate matrices aligned to `manifest.subjects`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub covariates: BTreeMap<String, FeatureMatrix>,
}

impl Dataset {
    pub fn ids(&self) -> Vec<&str> {
        self.manifest.subjects.iter().map(|s| s.id.as_str()).collect()
    }
}

/// Reads a numeric CSV: header row, subject id in the first column.
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix, IngestError> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(parse_err(path, "missing header row"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let id = record.get(0).unwrap_or("").to_owned();
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId(id));
        }
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(IngestError::NonFinite {
                    path: path.to_path_buf(),
                    id,
                    column: names[j].clone(),
                });
            }
            row.push(v);
        }
        ids.push(id);
        rows.push(row);
    }
    Ok(FeatureMatrix { names, ids, rows })
}

/// Loads the manifest and every covariate CSV it references, aligning rows
/// to subject order. Subjects without a row in some covariate are dropped
/// with a warning, or rejected when the manifest is strict.
pub fn load_dataset(path: &Path) -> Result<Dataset, IngestError> {
    let mut manifest: Manifest =
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| parse_err(path, e.to_string()))?;
    let root = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);

    let mut seen = HashSet::new();
    for s in &mut manifest.subjects {
        if !seen.insert(s.id.clone()) {
            return Err(IngestError::DuplicateId(s.id.clone()));
        }
        for m in &mut s.masks {
            *m = resolve(&root, m)?;
        }
        if let Some(mesh) = &mut s.mesh {
            *mesh = resolve(&root, mesh)?;
        }
        for (name, v) in &s.responses {
            if !v.is_finite() {
                return Err(IngestError::NonFinite {
                    path: path.to_path_buf(),
                    id: s.id.clone(),
                    column: name.clone(),
                });
            }
        }
    }

    let mut raw = BTreeMap::new();
    for (kind, file) in &mut manifest.covariates {
        *file = resolve(&root, file)?;
        let m = read_feature_csv(file)?;
        if let Some(id) = m.ids.iter().find(|id| !seen.contains(*id)) {
            return Err(IngestError::UnknownSubject {
                path: file.clone(),
                id: id.clone(),
            });
        }
        raw.insert(kind.clone(), m);
    }

    let mut keep = Vec::new();
    for s in &manifest.subjects {
        let missing = raw.iter().find(|(_, m)| m.row_of(&s.id).is_none());
        match missing {
            Some((kind, _)) if manifest.strict => {
                return Err(IngestError::MissingCovariate {
                    subject: s.id.clone(),
                    kind: kind.clone(),
                })
            }
            Some((kind, _)) => warn!("dropping subject {:?}: no row in covariate {kind:?}", s.id),
            None => keep.push(s.clone()),
        }
    }
    manifest.subjects = keep;

    let covariates = raw
        .into_iter()
        .map(|(kind, m)| {
            let pos: HashMap<&str, usize> = m.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let rows = manifest
                .subjects
                .iter()
                .map(|s| m.rows[pos[s.id.as_str()]].clone())
                .collect();
            let ids = manifest.subjects.iter().map(|s| s.id.clone()).collect();
            (kind, FeatureMatrix { names: m.names, ids, rows })
        })
        .collect();
    Ok(Dataset {
        root,
        manifest,
        covariates,
    })
}

fn resolve(root: &Path, p: &Path) -> Result<PathBuf, IngestError> {
    let full = if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
    if !full.exists() {
        return Err(IngestError::MissingFile(full));
    }
    Ok(full)
}
