//! Directional height filtrations and Euler characteristic curves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{SimplicialComplex, MAX_DEGREE};

/// Default number of thresholds per curve.
pub const DEFAULT_LEVELS: usize = 100;
/// Default number of directions.
pub const DEFAULT_DIRECTIONS: usize = 72;

const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiltrationError {
    #[error("need at least one direction, got {0}")]
    InvalidCount(usize),
    #[error("dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("complex has no vertices")]
    EmptyComplex,
    #[error("need at least 2 levels, got {0}")]
    TooFewLevels(usize),
}

/// Unit vector on S^{d-1}, d in {2, 3}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(v: Vec<f64>) -> Result<Self, FiltrationError> {
        if v.len() != 2 && v.len() != 3 {
            return Err(FiltrationError::InvalidDimension(v.len()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(FiltrationError::NotUnit(norm));
        }
        Ok(Direction(v))
    }

    /// Scales a nonzero vector to unit length.
    pub fn normalized(v: Vec<f64>) -> Result<Self, FiltrationError> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(FiltrationError::NotUnit(norm));
        }
        Direction::new(v.into_iter().map(|x| x / norm).collect())
    }

    /// Planar direction at `radians` from the positive x axis.
    pub fn from_angle(radians: f64) -> Self {
        Direction(vec![radians.cos(), radians.sin()])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Direction(self.0.iter().map(|x| -x).collect())
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = FiltrationError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

/// `m` directions: evenly spaced angles 2*pi*j/m in the plane (half-open,
/// starting at (1, 0)), or a Fibonacci lattice on the unit sphere.
pub fn direction_set(m: usize, d: usize) -> Result<Vec<Direction>, FiltrationError> {
    if m < 1 {
        return Err(FiltrationError::InvalidCount(m));
    }
    match d {
        2 => Ok((0..m).map(|j| planar_direction(j, m)).collect()),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            Ok((0..m)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    Direction(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect())
        }
        _ => Err(FiltrationError::InvalidDimension(d)),
    }
}

fn planar_direction(j: usize, m: usize) -> Direction {
    // quarter turns are snapped so axis-aligned sweeps are exact
    if (4 * j) % m == 0 {
        let v = match 4 * j / m {
            0 => [1.0, 0.0],
            1 => [0.0, 1.0],
            2 => [-1.0, 0.0],
            _ => [0.0, -1.0],
        };
        return Direction(v.to_vec());
    }
    Direction::from_angle(2.0 * PI * j as f64 / m as f64)
}

/// Height of `x` in direction `nu`: the dot product.
pub fn height(x: &[f64], nu: &Direction) -> Result<f64, FiltrationError> {
    if x.len() != nu.dim() {
        return Err(FiltrationError::DimensionMismatch {
            expected: nu.dim(),
            found: x.len(),
        });
    }
    Ok(dot(x, nu.as_slice()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Heights of every point of `complex`, indexed like its points.
pub fn point_heights(complex: &SimplicialComplex, nu: &Direction) -> Result<Vec<f64>, FiltrationError> {
    if complex.dim() != nu.dim() {
        return Err(FiltrationError::DimensionMismatch {
            expected: complex.dim(),
            found: nu.dim(),
        });
    }
    Ok(complex.points().map(|p| dot(p, nu.as_slice())).collect())
}

/// Minimum and maximum vertex height.
pub fn extremal_heights(complex: &SimplicialComplex, nu: &Direction) -> Result<(f64, f64), FiltrationError> {
    if complex.is_empty() {
        return Err(FiltrationError::EmptyComplex);
    }
    let h = point_heights(complex, nu)?;
    Ok(complex
        .vertex_indices()
        .map(|v| h[v])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x))))
}

/// Largest subcomplex whose vertices all have height at most `r`.
pub fn sublevel_complex(
    complex: &SimplicialComplex,
    nu: &Direction,
    r: f64,
) -> Result<SimplicialComplex, FiltrationError> {
    let h = point_heights(complex, nu)?;
    Ok(complex.vertex_subcomplex(|v| h[v] <= r))
}

/// Euler characteristic curve sampled on `samples.len()` uniform
/// thresholds covering `[a, b]`, both ends included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcCurve {
    pub direction: Direction,
    pub a: f64,
    pub b: f64,
    pub samples: Vec<i64>,
}

impl EcCurve {
    pub fn levels(&self) -> usize {
        self.samples.len()
    }

    pub fn step(&self) -> f64 {
        grid_step(self.a, self.b, self.levels())
    }

    pub fn threshold(&self, j: usize) -> f64 {
        grid_point(self.a, self.b, self.levels(), j)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.levels()).map(|j| self.threshold(j)).collect()
    }
}

pub(crate) fn grid_step(a: f64, b: f64, levels: usize) -> f64 {
    (b - a) / (levels - 1) as f64
}

/// j-th point of the uniform grid; the last point is `b` exactly.
pub(crate) fn grid_point(a: f64, b: f64, levels: usize, j: usize) -> f64 {
    if j + 1 == levels {
        b
    } else {
        a + j as f64 * (b - a) / (levels - 1) as f64
    }
}

/// EC curve of `complex` in direction `nu` with `levels` thresholds.
///
/// Every simplex contributes `(-1)^k` from the height of its highest vertex
/// onward, so one sorted sweep produces all samples.
pub fn ec_curve(complex: &SimplicialComplex, nu: &Direction, levels: usize) -> Result<EcCurve, FiltrationError> {
    if levels < 2 {
        return Err(FiltrationError::TooFewLevels(levels));
    }
    let (a, b) = extremal_heights(complex, nu)?;
    let h = point_heights(complex, nu)?;

    let mut events: Vec<(f64, i64)> = Vec::with_capacity(complex.total_simplices());
    for k in 0..=MAX_DEGREE {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        events.extend(complex.simplices(k).iter().map(|s| {
            let top = s.iter().map(|&v| h[v]).fold(f64::NEG_INFINITY, f64::max);
            (top, sign)
        }));
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut samples = Vec::with_capacity(levels);
    let mut chi = 0i64;
    let mut next = 0;
    for j in 0..levels {
        let t = grid_point(a, b, levels, j);
        while next < events.len() && events[next].0 <= t {
            chi += events[next].1;
            next += 1;
        }
        samples.push(chi);
    }
    Ok(EcCurve {
        direction: nu.clone(),
        a,
        b,
        samples,
    })
}
