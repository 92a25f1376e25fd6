//! Seeded synthetic cohort: binary masks of one or two disks with interior
//! holes, a response driven by the hole and component counts, and pure-noise
//! distractor covariates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentConfig, NoisePolicy};
use crate::gp::KernelFamily;
use crate::ingest::{write_pgm, BinaryImage, IngestError, Manifest, SubjectEntry};

pub const MASK_SIZE: usize = 48;
pub const NOISE_COLUMNS: usize = 20;
pub const RESPONSE_NOISE_SD: f64 = 0.3;
pub const RESPONSE_NAME: &str = "y";
pub const RESPONSE_FORMULA: &str = "y = 0.8 k + 1.2 (j - 1) - 0.1 k^2 + e, e ~ N(0, 0.3^2)";

/// Noise-free part of the response for `k` holes and `j` components.
pub fn response_mean(k: usize, j: usize) -> f64 {
    let k = k as f64;
    0.8 * k + 1.2 * (j as f64 - 1.0) - 0.1 * k * k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubject {
    pub id: String,
    pub holes: usize,
    pub components: usize,
    pub response: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortParams {
    pub n: usize,
    pub seed: u64,
    pub mask_size: usize,
    pub formula: String,
    pub response_noise_sd: f64,
    pub noise_columns: usize,
    pub subjects: Vec<SyntheticSubject>,
}

/// Paths written by [`generate_synthetic_cohort`].
#[derive(Clone, Debug)]
pub struct Cohort {
    pub manifest: PathBuf,
    pub params: PathBuf,
    pub config: PathBuf,
    pub subjects: Vec<SyntheticSubject>,
}

struct Disc {
    cx: f64,
    cy: f64,
    r: f64,
}

impl Disc {
    fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.r * self.r
    }
}

/// Mask with `components` (1 or 2) solid disks and `holes` (0..=3) interior
/// holes. Positions and sizes carry seeded jitter; topology does not.
pub fn synthetic_mask(holes: usize, components: usize, rng: &mut impl Rng) -> BinaryImage {
    assert!((1..=2).contains(&components) && holes <= 3, "unsupported shape ({holes}, {components})");
    let mid = MASK_SIZE as f64 / 2.0 - 0.5;
    let mut jitter = |amp: f64| rng.random_range(-amp..=amp);
    let tilt = jitter(PI);
    let mut disks = Vec::new();
    let mut cutouts = Vec::new();
    if components == 1 {
        let d = Disc {
            cx: mid + jitter(2.0),
            cy: mid + jitter(2.0),
            r: 14.0 + jitter(1.0),
        };
        for h in 0..holes {
            let angle = tilt + 2.0 * PI * h as f64 / 3.0;
            let dist = if holes == 1 { jitter(3.0).abs() } else { 7.0 + jitter(0.7) };
            cutouts.push(Disc {
                cx: d.cx + dist * angle.cos(),
                cy: d.cy + dist * angle.sin(),
                r: 2.5 + jitter(0.3),
            });
        }
        disks.push(d);
    } else {
        let sep = 11.5 + jitter(0.5);
        for s in [-1.0, 1.0] {
            disks.push(Disc {
                cx: mid + s * sep * tilt.cos() + jitter(0.5),
                cy: mid + s * sep * tilt.sin() + jitter(0.5),
                r: 9.0 + jitter(0.4),
            });
        }
        // round-robin assignment of holes to the two disks
        let per_disk = [holes.div_ceil(2), holes / 2];
        for (d, &count) in disks.iter().zip(&per_disk) {
            let spin = jitter(PI);
            for h in 0..count {
                let dist = if count == 1 { jitter(1.5).abs() } else { 4.0 + jitter(0.3) };
                let angle = spin + PI * h as f64;
                cutouts.push(Disc {
                    cx: d.cx + dist * angle.cos(),
                    cy: d.cy + dist * angle.sin(),
                    r: 2.0 + jitter(0.2),
                });
            }
        }
    }
    BinaryImage::from_fn(MASK_SIZE, MASK_SIZE, |r, c| {
        let (x, y) = (c as f64, r as f64);
        disks.iter().any(|d| d.contains(x, y)) && !cutouts.iter().any(|h| h.contains(x, y))
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `n` subjects under `out`: `masks/*.pgm`, `noise.csv`,
/// `manifest.json`, `params.json` and a ready-to-run `experiment.json`.
pub fn generate_synthetic_cohort(n: usize, seed: u64, out: &Path) -> Result<Cohort, IngestError> {
    assert!(n >= 10, "cohort needs at least 10 subjects");
    let masks_dir = out.join("masks");
    fs::create_dir_all(&masks_dir).map_err(io_err(&masks_dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, RESPONSE_NOISE_SD).expect("positive sd");
    let unit = Normal::new(0.0, 1.0).expect("positive sd");

    let mut subjects = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    let mut noise = String::from("id");
    for c in 0..NOISE_COLUMNS {
        let _ = write!(noise, ",noise{c:02}");
    }
    noise.push('\n');

    for i in 0..n {
        let id = format!("s{i:03}");
        let holes = i % 4;
        let components = 1 + (i / 4) % 2;
        let img = synthetic_mask(holes, components, &mut rng);
        let rel = PathBuf::from("masks").join(format!("{id}.pgm"));
        write_pgm(&img, &out.join(&rel))?;
        let response = response_mean(holes, components) + eps.sample(&mut rng);

        let _ = write!(noise, "{id}");
        for _ in 0..NOISE_COLUMNS {
            let _ = write!(noise, ",{}", unit.sample(&mut rng));
        }
        noise.push('\n');

        entries.push(SubjectEntry {
            id: id.clone(),
            masks: vec![rel],
            mesh: None,
            responses: BTreeMap::from([(RESPONSE_NAME.to_owned(), response)]),
        });
        subjects.push(SyntheticSubject {
            id,
            holes,
            components,
            response,
        });
    }

    let noise_path = out.join("noise.csv");
    fs::write(&noise_path, noise).map_err(io_err(&noise_path))?;

    let manifest = Manifest {
        subjects: entries,
        covariates: BTreeMap::from([("noise".to_owned(), PathBuf::from("noise.csv"))]),
        strict: true,
        pixel_spacing: 1.0,
    };
    let params = CohortParams {
        n,
        seed,
        mask_size: MASK_SIZE,
        formula: RESPONSE_FORMULA.to_owned(),
        response_noise_sd: RESPONSE_NOISE_SD,
        noise_columns: NOISE_COLUMNS,
        subjects: subjects.clone(),
    };
    let config = ExperimentConfig {
        data_types: vec!["sect".into(), "noise".into()],
        kernels: vec![KernelFamily::Gaussian],
        noise: NoisePolicy::Fixed(crate::gp::DEFAULT_NOISE),
        seed,
        output_dir: Some(PathBuf::from("report")),
        ..ExperimentConfig::new("manifest.json")
    };

    let write_json = |name: &str, text: String| -> Result<PathBuf, IngestError> {
        let path = out.join(name);
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    };
    let manifest_path = write_json("manifest.json", serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    let params_path = write_json("params.json", serde_json::to_string_pretty(&params).expect("serializes"))?;
    let config_path = write_json("experiment.json", serde_json::to_string_pretty(&config).expect("serializes"))?;
    log::info!("wrote {n} synthetic subjects to {}", out.display());
    Ok(Cohort {
        manifest: manifest_path,
        params: params_path,
        config: config_path,
        subjects,
    })
}
