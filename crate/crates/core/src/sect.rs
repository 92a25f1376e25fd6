//! Smooth Euler characteristic curves and per-shape transform profiles.
//!
//! For each direction the EC curve is centered by its left-rectangle mean
//! over `[a, b]` and integrated with the left-rectangle rule, which gives a
//! continuous piecewise-linear curve that starts and ends at zero.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::SimplicialComplex;
use crate::filtration::{ec_curve, grid_point, grid_step, Direction, EcCurve, FiltrationError};

#[derive(Debug, Error)]
pub enum SectError {
    #[error(transparent)]
    Filtration(#[from] FiltrationError),
    #[error("no profiles to aggregate")]
    NoProfiles,
    #[error("profiles disagree: {0}")]
    Mismatch(String),
    #[error("cache I/O: {0}")]
    Io(#[from] io::Error),
    #[error("cache entry is not a valid profile: {0}")]
    Json(#[from] serde_json::Error),
}

/// Smooth Euler characteristic curve on a uniform grid over `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecCurve {
    pub direction: Direction,
    pub a: f64,
    pub b: f64,
    pub samples: Vec<f64>,
}

impl SecCurve {
    pub fn levels(&self) -> usize {
        self.samples.len()
    }

    pub fn step(&self) -> f64 {
        grid_step(self.a, self.b, self.levels())
    }

    pub fn threshold(&self, j: usize) -> f64 {
        grid_point(self.a, self.b, self.levels(), j)
    }

    /// Piecewise-linear value at `y`: zero left of `a`, the terminal sample
    /// right of `b`.
    pub fn value_at(&self, y: f64) -> f64 {
        let last = *self.samples.last().expect("at least two samples");
        if y < self.a {
            return 0.0;
        }
        if y >= self.b {
            return last;
        }
        let pos = (y - self.a) / self.step();
        let i = (pos.floor() as usize).min(self.levels() - 2);
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

/// Subtracts the left-rectangle mean (the average of all but the last
/// sample) from every sample.
pub fn center_curve(curve: &EcCurve) -> Vec<f64> {
    let n = curve.samples.len();
    let mean = curve.samples[..n - 1].iter().map(|&s| s as f64).sum::<f64>() / (n - 1) as f64;
    curve.samples.iter().map(|&s| s as f64 - mean).collect()
}

/// Cumulative left-rectangle integral of the piecewise-constant `centered`
/// samples over the uniform grid on `[a, b]`.
pub fn smooth_curve(centered: &[f64], a: f64, b: f64, direction: Direction) -> SecCurve {
    let h = grid_step(a, b, centered.len());
    let mut samples = Vec::with_capacity(centered.len());
    let mut acc = 0.0;
    samples.push(0.0);
    for z in &centered[..centered.len() - 1] {
        acc += z;
        samples.push(h * acc);
    }
    SecCurve {
        direction,
        a,
        b,
        samples,
    }
}

/// EC curve, centered curve and SEC for one direction.
pub fn curve_table(
    complex: &SimplicialComplex,
    nu: &Direction,
    levels: usize,
) -> Result<(EcCurve, Vec<f64>, SecCurve), SectError> {
    let ec = ec_curve(complex, nu, levels)?;
    let z = center_curve(&ec);
    let sec = smooth_curve(&z, ec.a, ec.b, nu.clone());
    Ok((ec, z, sec))
}

/// Writes `threshold,ec,z,f` rows for one direction.
pub fn write_curve_csv<W: Write>(ec: &EcCurve, z: &[f64], sec: &SecCurve, mut w: W) -> io::Result<()> {
    writeln!(w, "threshold,ec,z,f")?;
    for j in 0..ec.levels() {
        writeln!(w, "{},{},{},{}", ec.threshold(j), ec.samples[j], z[j], sec.samples[j])?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub source_id: Option<String>,
    /// Slice indices that contributed to this profile.
    pub slices: Vec<usize>,
}

/// The transform of one shape: one SEC per direction, in direction order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectProfile {
    pub levels: usize,
    pub curves: Vec<SecCurve>,
    #[serde(default)]
    pub meta: ShapeMeta,
}

impl SectProfile {
    pub fn directions(&self) -> impl Iterator<Item = &Direction> + '_ {
        self.curves.iter().map(|c| &c.direction)
    }

    pub fn direction_count(&self) -> usize {
        self.curves.len()
    }

    /// Per-direction curves on their own grids, concatenated in order.
    pub fn feature_vector(&self) -> Vec<f64> {
        self.curves.iter().flat_map(|c| c.samples.iter().copied()).collect()
    }

    pub fn with_meta(mut self, meta: ShapeMeta) -> Self {
        self.meta = meta;
        self
    }

    fn check_compatible(&self, other: &SectProfile) -> Result<(), SectError> {
        if self.levels != other.levels {
            return Err(SectError::Mismatch(format!(
                "levels {} vs {}",
                self.levels, other.levels
            )));
        }
        if self.curves.len() != other.curves.len() {
            return Err(SectError::Mismatch(format!(
                "{} vs {} directions",
                self.curves.len(),
                other.curves.len()
            )));
        }
        for (j, (p, q)) in self.directions().zip(other.directions()).enumerate() {
            let same = p.dim() == q.dim()
                && p.as_slice()
                    .iter()
                    .zip(q.as_slice())
                    .all(|(x, y)| (x - y).abs() <= 1e-12);
            if !same {
                return Err(SectError::Mismatch(format!("direction {j} differs")));
            }
        }
        Ok(())
    }
}

/// SEC curves of `complex` over `directions` with `levels` thresholds each.
pub fn sect(complex: &SimplicialComplex, directions: &[Direction], levels: usize) -> Result<SectProfile, SectError> {
    let curves = directions
        .par_iter()
        .map(|nu| curve_table(complex, nu, levels).map(|(_, _, sec)| sec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SectProfile {
        levels,
        curves,
        meta: ShapeMeta::default(),
    })
}

/// Position-wise mean of several slice profiles. The grid ends of each
/// direction are averaged as well.
pub fn aggregate_slices(profiles: &[SectProfile]) -> Result<SectProfile, SectError> {
    let first = profiles.first().ok_or(SectError::NoProfiles)?;
    for p in &profiles[1..] {
        first.check_compatible(p)?;
    }
    let n = profiles.len() as f64;
    let curves = (0..first.curves.len())
        .map(|d| {
            let mut a = 0.0;
            let mut b = 0.0;
            let mut samples = vec![0.0; first.levels];
            for p in profiles {
                let c = &p.curves[d];
                a += c.a;
                b += c.b;
                samples.iter_mut().zip(&c.samples).for_each(|(s, x)| *s += x);
            }
            SecCurve {
                direction: first.curves[d].direction.clone(),
                a: a / n,
                b: b / n,
                samples: samples.into_iter().map(|s| s / n).collect(),
            }
        })
        .collect();
    let mut slices = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        if p.meta.slices.is_empty() {
            slices.push(i);
        } else {
            slices.extend(&p.meta.slices);
        }
    }
    Ok(SectProfile {
        levels: first.levels,
        curves,
        meta: ShapeMeta {
            source_id: first.meta.source_id.clone(),
            slices,
        },
    })
}

/// L2 distance between two profiles, averaged uniformly over directions.
/// Each pair of curves is compared on the union of their intervals.
pub fn sect_distance(p: &SectProfile, q: &SectProfile) -> Result<f64, SectError> {
    p.check_compatible(q)?;
    let levels = p.levels;
    let mut total = 0.0;
    for (cp, cq) in p.curves.iter().zip(&q.curves) {
        let lo = cp.a.min(cq.a);
        let hi = cp.b.max(cq.b);
        let h = grid_step(lo, hi, levels);
        let sq: f64 = (0..levels)
            .map(|j| {
                let y = grid_point(lo, hi, levels, j);
                let d = cp.value_at(y) - cq.value_at(y);
                d * d
            })
            .sum();
        total += h * sq;
    }
    Ok((total / p.curves.len() as f64).sqrt())
}

/// Name of the direction convention used for cache keys.
pub fn direction_convention(dim: usize) -> &'static str {
    if dim == 3 {
        "fibonacci"
    } else {
        "even-angle"
    }
}

/// On-disk JSON cache of profiles keyed by shape id, direction count,
/// level count and direction convention.
#[derive(Clone, Debug)]
pub struct ProfileCache {
    dir: PathBuf,
}

impl ProfileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ProfileCache { dir: dir.into() }
    }

    pub fn path_for(&self, id: &str, directions: usize, levels: usize, convention: &str) -> PathBuf {
        let safe: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.dir
            .join(format!("{safe}.m{directions}.t{levels}.{convention}.json"))
    }

    pub fn get(&self, id: &str, directions: usize, levels: usize, convention: &str) -> Result<Option<SectProfile>, SectError> {
        let path = self.path_for(id, directions, levels, convention);
        if !path.exists() {
            return Ok(None);
        }
        let profile: SectProfile = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Some(profile))
    }

    pub fn put(&self, id: &str, convention: &str, profile: &SectProfile) -> Result<(), SectError> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(id, profile.direction_count(), profile.levels, convention);
        fs::write(path, serde_json::to_vec(profile)?)?;
        Ok(())
    }
}

/// Reads a profile written with [`save_profile`].
pub fn load_profile(path: &Path) -> Result<SectProfile, SectError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn save_profile(path: &Path, profile: &SectProfile) -> Result<(), SectError> {
    fs::write(path, serde_json::to_vec_pretty(profile)?)?;
    Ok(())
}
