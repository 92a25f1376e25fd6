//! Finite simplicial complexes embedded in R^2 or R^3, with Z2 chain
//! machinery: boundary matrices, ranks, Betti numbers and the Euler
//! characteristic.
//!
//! Simplices are stored per degree as strictly increasing vertex-index
//! tuples, sorted lexicographically, so a simplex can be located with a
//! binary search. Points that no simplex references are kept as coordinates
//! but are not 0-simplices of the complex.

use std::collections::BTreeSet;

use thiserror::Error;

/// Highest simplex degree supported (tetrahedra).
pub const MAX_DEGREE: usize = 3;

/// A simplex as a strictly increasing list of vertex indices.
pub type Simplex = Vec<usize>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("embedding dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("vertex {vertex} has {found} coordinates, expected {expected}")]
    CoordinateDimension {
        vertex: usize,
        expected: usize,
        found: usize,
    },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteCoordinate(usize),
    #[error("vertex index {index} out of range ({vertex_count} vertices)")]
    IndexOutOfRange { index: usize, vertex_count: usize },
    #[error("simplex {0:?} repeats a vertex")]
    RepeatedVertex(Vec<usize>),
    #[error("empty simplex")]
    EmptySimplex,
    #[error("simplex {simplex:?} has {} vertices; at most {max} allowed in dimension {dim}", simplex.len())]
    SimplexTooLarge {
        simplex: Vec<usize>,
        max: usize,
        dim: usize,
    },
    #[error("boundary degree {0} out of range 1..=3")]
    DegreeOutOfRange(usize),
}

/// A finite simplicial complex with vertex coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialComplex {
    dim: usize,
    coords: Vec<f64>,
    simplices: [Vec<Simplex>; MAX_DEGREE + 1],
}

/// Builds a complex from coordinates and a list of (not necessarily
/// maximal) simplices, completing it under taking faces.
pub fn build_complex(
    dim: usize,
    vertices: &[Vec<f64>],
    maximal_simplices: &[Vec<usize>],
) -> Result<SimplicialComplex, ComplexError> {
    if dim != 2 && dim != 3 {
        return Err(ComplexError::InvalidDimension(dim));
    }
    let mut coords = Vec::with_capacity(vertices.len() * dim);
    for (i, p) in vertices.iter().enumerate() {
        if p.len() != dim {
            return Err(ComplexError::CoordinateDimension {
                vertex: i,
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(ComplexError::NonFiniteCoordinate(i));
        }
        coords.extend_from_slice(p);
    }

    let mut sets: [BTreeSet<Simplex>; MAX_DEGREE + 1] = Default::default();
    for s in maximal_simplices {
        let sorted = canonical_simplex(s, dim, vertices.len())?;
        let n = sorted.len();
        // every nonempty subset of the vertex tuple is a face
        for mask in 1u32..(1u32 << n) {
            let face: Simplex = (0..n)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| sorted[b])
                .collect();
            sets[face.len() - 1].insert(face);
        }
    }
    let simplices = sets.map(|s| s.into_iter().collect());
    Ok(SimplicialComplex {
        dim,
        coords,
        simplices,
    })
}

fn canonical_simplex(s: &[usize], dim: usize, vertex_count: usize) -> Result<Simplex, ComplexError> {
    if s.is_empty() {
        return Err(ComplexError::EmptySimplex);
    }
    if s.len() > dim + 1 {
        return Err(ComplexError::SimplexTooLarge {
            simplex: s.to_vec(),
            max: dim + 1,
            dim,
        });
    }
    if let Some(&index) = s.iter().find(|&&v| v >= vertex_count) {
        return Err(ComplexError::IndexOutOfRange {
            index,
            vertex_count,
        });
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ComplexError::RepeatedVertex(s.to_vec()));
    }
    Ok(sorted)
}

impl SimplicialComplex {
    /// Complex with coordinates but no simplices.
    pub fn empty(dim: usize, vertices: &[Vec<f64>]) -> Result<Self, ComplexError> {
        build_complex(dim, vertices, &[])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coordinate points (including unreferenced ones).
    pub fn point_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// The sorted k-simplices; empty for k > 3.
    pub fn simplices(&self, k: usize) -> &[Simplex] {
        self.simplices.get(k).map_or(&[], |v| v.as_slice())
    }

    pub fn count(&self, k: usize) -> usize {
        self.simplices(k).len()
    }

    pub fn total_simplices(&self) -> usize {
        self.simplices.iter().map(Vec::len).sum()
    }

    /// Indices of the points that are 0-simplices.
    pub fn vertex_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.simplices[0].iter().map(|s| s[0])
    }

    pub fn is_empty(&self) -> bool {
        self.simplices[0].is_empty()
    }

    /// Highest degree with at least one simplex, or `None` when empty.
    pub fn top_degree(&self) -> Option<usize> {
        (0..=MAX_DEGREE).rev().find(|&k| !self.simplices[k].is_empty())
    }

    /// Position of `simplex` in the sorted list of its degree.
    pub fn index_of(&self, simplex: &[usize]) -> Option<usize> {
        let k = simplex.len().checked_sub(1)?;
        self.simplices
            .get(k)?
            .binary_search_by(|s| s.as_slice().cmp(simplex))
            .ok()
    }

    pub fn contains(&self, simplex: &[usize]) -> bool {
        self.index_of(simplex).is_some()
    }

    /// All simplices in degree order, handy for building dumps.
    pub fn all_simplices(&self) -> impl Iterator<Item = &Simplex> + '_ {
        self.simplices.iter().flatten()
    }

    /// Largest subcomplex whose vertices all satisfy `keep`. Coordinates are
    /// retained unchanged.
    pub fn vertex_subcomplex(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mask: Vec<bool> = (0..self.point_count()).map(keep).collect();
        let simplices = std::array::from_fn(|k| {
            self.simplices[k]
                .iter()
                .filter(|s| s.iter().all(|&v| mask[v]))
                .cloned()
                .collect()
        });
        SimplicialComplex {
            dim: self.dim,
            coords: self.coords.clone(),
            simplices,
        }
    }

    /// Applies `f` to every point; the combinatorics are untouched.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self, ComplexError> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for (i, p) in self.points().enumerate() {
            let q = f(p);
            if q.len() != self.dim {
                return Err(ComplexError::CoordinateDimension {
                    vertex: i,
                    expected: self.dim,
                    found: q.len(),
                });
            }
            if q.iter().any(|x| !x.is_finite()) {
                return Err(ComplexError::NonFiniteCoordinate(i));
            }
            coords.extend(q);
        }
        Ok(SimplicialComplex {
            dim: self.dim,
            coords,
            simplices: self.simplices.clone(),
        })
    }

    /// Disjoint union; the points of `other` are appended after ours.
    pub fn disjoint_union(&self, other: &Self) -> Result<Self, ComplexError> {
        if self.dim != other.dim {
            return Err(ComplexError::CoordinateDimension {
                vertex: 0,
                expected: self.dim,
                found: other.dim,
            });
        }
        let offset = self.point_count();
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let simplices = std::array::from_fn(|k| {
            let mut v = self.simplices[k].clone();
            v.extend(
                other.simplices[k]
                    .iter()
                    .map(|s| s.iter().map(|&i| i + offset).collect::<Simplex>()),
            );
            v.sort();
            v
        });
        Ok(SimplicialComplex {
            dim: self.dim,
            coords,
            simplices,
        })
    }
}

/// Dense bit-packed matrix over Z2, stored column by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Z2Matrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl Z2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = rows.div_ceil(64);
        Z2Matrix {
            rows,
            cols,
            words,
            data: vec![0; words * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        self.data[c * self.words + r / 64] >> (r % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[c * self.words + r / 64];
        if value {
            *w |= 1 << (r % 64);
        } else {
            *w &= !(1 << (r % 64));
        }
    }

    fn column(&self, c: usize) -> &[u64] {
        &self.data[c * self.words..(c + 1) * self.words]
    }

    /// Row indices of the nonzero entries of column `c`.
    pub fn column_support(&self, c: usize) -> Vec<usize> {
        (0..self.rows).filter(|&r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Matrix product over Z2. Panics on a shape mismatch.
    pub fn mul(&self, rhs: &Z2Matrix) -> Z2Matrix {
        assert_eq!(self.cols, rhs.rows, "Z2 product shape mismatch");
        let mut out = Z2Matrix::zeros(self.rows, rhs.cols);
        for c in 0..rhs.cols {
            for k in rhs.column_support(c) {
                let src = c * out.words;
                for (w, a) in self.column(k).iter().enumerate() {
                    out.data[src + w] ^= a;
                }
            }
        }
        out
    }

    /// Rank by column elimination on the lowest nonzero row.
    pub fn rank(&self) -> usize {
        let mut pivots: Vec<Option<Vec<u64>>> = vec![None; self.rows];
        let mut rank = 0;
        for c in 0..self.cols {
            let mut col = self.column(c).to_vec();
            while let Some(low) = lowest_one(&col) {
                match &pivots[low] {
                    Some(p) => col.iter_mut().zip(p).for_each(|(a, b)| *a ^= b),
                    None => {
                        pivots[low] = Some(col);
                        rank += 1;
                        break;
                    }
                }
            }
        }
        rank
    }
}

fn lowest_one(col: &[u64]) -> Option<usize> {
    col.iter()
        .enumerate()
        .rev()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// Alternating sum of simplex counts.
pub fn euler_characteristic(k: &SimplicialComplex) -> i64 {
    (0..=MAX_DEGREE)
        .map(|d| {
            let n = k.count(d) as i64;
            if d % 2 == 0 {
                n
            } else {
                -n
            }
        })
        .sum()
}

/// Boundary map from k-chains to (k-1)-chains; column j holds the faces of
/// the j-th k-simplex.
pub fn boundary_matrix(complex: &SimplicialComplex, k: usize) -> Result<Z2Matrix, ComplexError> {
    if !(1..=MAX_DEGREE).contains(&k) {
        return Err(ComplexError::DegreeOutOfRange(k));
    }
    let faces = complex.simplices(k - 1);
    let cells = complex.simplices(k);
    let mut m = Z2Matrix::zeros(faces.len(), cells.len());
    let mut face = Vec::with_capacity(k);
    for (j, s) in cells.iter().enumerate() {
        for skip in 0..s.len() {
            face.clear();
            face.extend(s.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v));
            let row = faces
                .binary_search(&face)
                .expect("closure invariant: face of a stored simplex is stored");
            m.set(row, j, true);
        }
    }
    Ok(m)
}

/// Z2 Betti numbers beta_0..beta_dim.
pub fn betti_numbers(complex: &SimplicialComplex) -> Vec<usize> {
    // ranks[k] = rank of the boundary map out of degree k; ranks[0] = 0
    let mut ranks = [0usize; MAX_DEGREE + 2];
    for k in 1..=MAX_DEGREE {
        if complex.count(k) > 0 {
            ranks[k] = boundary_matrix(complex, k)
                .expect("degree in range")
                .rank();
        }
    }
    (0..=complex.dim())
        .map(|k| complex.count(k) - ranks[k] - ranks[k + 1])
        .collect()
}
