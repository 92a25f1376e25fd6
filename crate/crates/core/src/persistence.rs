//! Sublevel-set persistent homology over Z2.
//!
//! A [`FilteredComplex`] assigns a value to every simplex such that faces
//! never enter after their cofaces. [`compute_barcode`] runs the standard
//! column reduction on the filtration-ordered boundary matrix and reads off
//! the birth/death pairs.

use std::collections::HashMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::complex::{SimplicialComplex, MAX_DEGREE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PersistenceError {
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("filtration value of {simplex:?} is not finite")]
    NonFinite { simplex: Vec<usize> },
    #[error("filtration not monotone: {simplex:?} enters at {value} before its face {face:?} at {face_value}")]
    NonMonotone {
        simplex: Vec<usize>,
        value: f64,
        face: Vec<usize>,
        face_value: f64,
    },
}

/// A complex with one filtration value per simplex.
#[derive(Clone, Debug)]
pub struct FilteredComplex {
    base: SimplicialComplex,
    values: [Vec<f64>; MAX_DEGREE + 1],
}

impl FilteredComplex {
    /// `values[k][i]` is the entry value of the i-th k-simplex of `base`.
    pub fn new(base: SimplicialComplex, values: Vec<Vec<f64>>) -> Result<Self, PersistenceError> {
        if values.len() > MAX_DEGREE + 1 {
            return Err(PersistenceError::LengthMismatch {
                expected: MAX_DEGREE + 1,
                found: values.len(),
            });
        }
        let mut values = values;
        values.resize(MAX_DEGREE + 1, Vec::new());
        for k in 0..=MAX_DEGREE {
            if values[k].len() != base.count(k) {
                return Err(PersistenceError::LengthMismatch {
                    expected: base.count(k),
                    found: values[k].len(),
                });
            }
            for (i, s) in base.simplices(k).iter().enumerate() {
                let v = values[k][i];
                if !v.is_finite() {
                    return Err(PersistenceError::NonFinite { simplex: s.clone() });
                }
                if k == 0 {
                    continue;
                }
                for skip in 0..s.len() {
                    let face: Vec<usize> = s
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != skip)
                        .map(|(_, &x)| x)
                        .collect();
                    let fi = base.index_of(&face).expect("closure invariant");
                    let fv = values[k - 1][fi];
                    if fv > v {
                        return Err(PersistenceError::NonMonotone {
                            simplex: s.clone(),
                            value: v,
                            face,
                            face_value: fv,
                        });
                    }
                }
            }
        }
        let values: [Vec<f64>; MAX_DEGREE + 1] =
            values.try_into().expect("resized to MAX_DEGREE + 1");
        Ok(FilteredComplex { base, values })
    }

    pub fn base(&self) -> &SimplicialComplex {
        &self.base
    }

    pub fn values(&self, k: usize) -> &[f64] {
        self.values.get(k).map_or(&[], |v| v.as_slice())
    }

    /// Subcomplex of simplices with value at most `t`.
    pub fn sublevel(&self, t: f64) -> SimplicialComplex {
        // Lower-star data is vertex-driven, but general filtrations are not,
        // so rebuild from the surviving simplex list.
        let kept: Vec<Vec<usize>> = (0..=MAX_DEGREE)
            .flat_map(|k| {
                self.base
                    .simplices(k)
                    .iter()
                    .zip(&self.values[k])
                    .filter(move |(_, &v)| v <= t)
                    .map(|(s, _)| s.clone())
            })
            .collect();
        let points: Vec<Vec<f64>> = self.base.points().map(<[f64]>::to_vec).collect();
        crate::complex::build_complex(self.base.dim(), &points, &kept)
            .expect("sublevel of a monotone filtration is a complex")
    }
}

/// Filtration where each simplex enters at the largest height among its
/// vertices.
pub fn lower_star_filtration(
    complex: &SimplicialComplex,
    heights: &[f64],
) -> Result<FilteredComplex, PersistenceError> {
    if heights.len() != complex.point_count() {
        return Err(PersistenceError::LengthMismatch {
            expected: complex.point_count(),
            found: heights.len(),
        });
    }
    let values = (0..=MAX_DEGREE)
        .map(|k| {
            complex
                .simplices(k)
                .iter()
                .map(|s| s.iter().map(|&v| heights[v]).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        })
        .collect();
    FilteredComplex::new(complex.clone(), values)
}

/// One persistence interval `[birth, death)`; `death` is `f64::INFINITY`
/// for essential classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub degree: usize,
    pub birth: f64,
    pub death: f64,
}

impl Bar {
    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    pub fn is_zero_length(&self) -> bool {
        self.birth == self.death
    }

    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Barcode {
    pub intervals: Vec<Bar>,
    /// Simplices per degree whose column reduced to zero.
    pub creators: [usize; MAX_DEGREE + 1],
    /// Simplices per degree that killed a class one degree lower.
    pub destroyers: [usize; MAX_DEGREE + 1],
}

impl Barcode {
    /// Bars of degree `k` alive at `t`.
    pub fn alive_count(&self, k: usize, t: f64) -> usize {
        self.intervals
            .iter()
            .filter(|b| b.degree == k && b.alive_at(t))
            .count()
    }

    /// Alternating count of alive bars, the Euler characteristic at `t`.
    pub fn euler_at(&self, t: f64) -> i64 {
        self.intervals
            .iter()
            .filter(|b| b.alive_at(t))
            .map(|b| if b.degree % 2 == 0 { 1 } else { -1 })
            .sum()
    }

    pub fn infinite_counts(&self) -> [usize; MAX_DEGREE + 1] {
        let mut out = [0; MAX_DEGREE + 1];
        for b in self.intervals.iter().filter(|b| b.is_infinite()) {
            out[b.degree] += 1;
        }
        out
    }

    pub fn without_zero_length(&self) -> Barcode {
        Barcode {
            intervals: self
                .intervals
                .iter()
                .filter(|b| !b.is_zero_length())
                .copied()
                .collect(),
            ..self.clone()
        }
    }

    /// CSV rows `degree,birth,death` with `inf` for essential classes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "degree,birth,death")?;
        for b in &self.intervals {
            if b.is_infinite() {
                writeln!(w, "{},{},inf", b.degree, b.birth)?;
            } else {
                writeln!(w, "{},{},{}", b.degree, b.birth, b.death)?;
            }
        }
        Ok(())
    }
}

/// Standard left-to-right reduction of the filtration-ordered boundary
/// matrix. Simplices are ordered by (value, degree, vertex tuple).
pub fn compute_barcode(filtered: &FilteredComplex) -> Barcode {
    let base = filtered.base();
    let mut order: Vec<(usize, usize)> = (0..=MAX_DEGREE)
        .flat_map(|k| (0..base.count(k)).map(move |i| (k, i)))
        .collect();
    order.sort_by(|&(ka, ia), &(kb, ib)| {
        filtered.values[ka][ia]
            .total_cmp(&filtered.values[kb][ib])
            .then(ka.cmp(&kb))
            .then_with(|| base.simplices(ka)[ia].cmp(&base.simplices(kb)[ib]))
    });
    let mut position: [Vec<usize>; MAX_DEGREE + 1] =
        std::array::from_fn(|k| vec![0; base.count(k)]);
    for (p, &(k, i)) in order.iter().enumerate() {
        position[k][i] = p;
    }

    let mut barcode = Barcode::default();
    let mut reduced: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    let mut pivot_of: HashMap<usize, usize> = HashMap::new();
    let mut paired = vec![false; order.len()];

    for (j, &(k, i)) in order.iter().enumerate() {
        let s = &base.simplices(k)[i];
        let mut col: Vec<usize> = if k == 0 {
            Vec::new()
        } else {
            (0..s.len())
                .map(|skip| {
                    let face: Vec<usize> = s
                        .iter()
                        .enumerate()
                        .filter(|(x, _)| *x != skip)
                        .map(|(_, &v)| v)
                        .collect();
                    position[k - 1][base.index_of(&face).expect("closure invariant")]
                })
                .collect()
        };
        col.sort_unstable();
        while let Some(&low) = col.last() {
            match pivot_of.get(&low) {
                Some(&other) => col = symmetric_difference(&col, &reduced[other]),
                None => break,
            }
        }
        match col.last() {
            Some(&low) => {
                pivot_of.insert(low, j);
                paired[low] = true;
                paired[j] = true;
                barcode.destroyers[k] += 1;
                let (lk, li) = order[low];
                barcode.intervals.push(Bar {
                    degree: lk,
                    birth: filtered.values[lk][li],
                    death: filtered.values[k][i],
                });
            }
            None => barcode.creators[k] += 1,
        }
        reduced.push(col);
    }
    for (j, &(k, i)) in order.iter().enumerate() {
        if !paired[j] {
            barcode.intervals.push(Bar {
                degree: k,
                birth: filtered.values[k][i],
                death: f64::INFINITY,
            });
        }
    }
    barcode.intervals.sort_by(|a, b| {
        a.degree
            .cmp(&b.degree)
            .then(a.birth.total_cmp(&b.birth))
            .then(a.death.total_cmp(&b.death))
    });
    barcode
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
