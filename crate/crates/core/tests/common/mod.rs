//! Test-only oracles shared by the integration suites. Nothing here calls
//! the library's rank, reduction or sweep code.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::IteratorRandom;
use rand::Rng;
use sect_core::complex::{build_complex, SimplicialComplex};
use sect_core::ingest::BinaryImage;

pub fn fixture(name: &str) -> PathBuf {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let own = root.join("tests/fixtures").join(name);
    if own.exists() {
        own
    } else {
        root.join("../core/tests/fixtures").join(name)
    }
}

/// Random complex in `dim` dimensions: up to `max_vertices` points in
/// general position and a handful of random maximal simplices.
pub fn random_complex(rng: &mut impl Rng, max_vertices: usize, dim: usize) -> SimplicialComplex {
    let n = rng.random_range(1..=max_vertices);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let tops = rng.random_range(0..=10);
    let simplices: Vec<Vec<usize>> = (0..tops)
        .map(|_| {
            let size = rng.random_range(1..=(dim + 1).min(n));
            let mut s = (0..n).choose_multiple(rng, size);
            s.sort_unstable();
            s
        })
        .collect();
    build_complex(dim, &points, &simplices).expect("valid random complex")
}

/// Rank over GF(2) of a dense boolean matrix given as rows.
pub fn gf2_rank(mut rows: Vec<Vec<bool>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c]) else { continue };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[c] {
                row.iter_mut().zip(&pivot).for_each(|(x, y)| *x ^= *y);
            }
        }
        rank += 1;
    }
    rank
}

/// Boundary of the k-simplices as rows indexed by (k-1)-simplices, built
/// by linear search over the face lists.
pub fn boundary_rows(k: &SimplicialComplex, deg: usize) -> Vec<Vec<bool>> {
    let faces = k.simplices(deg - 1);
    let cells = k.simplices(deg);
    let mut rows = vec![vec![false; cells.len()]; faces.len()];
    for (j, s) in cells.iter().enumerate() {
        for drop in 0..s.len() {
            let face: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &v)| v).collect();
            let i = faces.iter().position(|f| *f == face).expect("closed under faces");
            rows[i][j] = true;
        }
    }
    rows
}

pub fn oracle_betti(k: &SimplicialComplex) -> Vec<usize> {
    let rank = |deg: usize| -> usize {
        if deg == 0 || deg > 3 || k.count(deg) == 0 || k.count(deg - 1) == 0 {
            0
        } else {
            gf2_rank(boundary_rows(k, deg))
        }
    };
    (0..=k.dim()).map(|d| k.count(d) - rank(d) - rank(d + 1)).collect()
}

/// Alternating count of simplices whose highest vertex lies at or below `t`.
pub fn brute_euler_at(k: &SimplicialComplex, heights: &[f64], t: f64) -> i64 {
    (0..=3)
        .map(|d| {
            let n = k
                .simplices(d)
                .iter()
                .filter(|s| s.iter().all(|&v| heights[v] <= t))
                .count() as i64;
            if d % 2 == 0 {
                n
            } else {
                -n
            }
        })
        .sum()
}

/// Number of 4-connected foreground components by flood fill.
pub fn flood_components(img: &BinaryImage) -> usize {
    let (h, w) = (img.height, img.width);
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || !img.get(start / w, start % w) {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            let (r, c) = (p / w, p % w);
            let mut push = |rr: usize, cc: usize| {
                let q = rr * w + cc;
                if !seen[q] && img.get(rr, cc) {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < w {
                push(r, c + 1);
            }
        }
    }
    count
}

/// Random binary mask of the given size with roughly `density` foreground.
pub fn random_mask(rng: &mut impl Rng, width: usize, height: usize, density: f64) -> BinaryImage {
    let bits: Vec<bool> = (0..width * height).map(|_| rng.random_bool(density)).collect();
    BinaryImage::from_fn(width, height, |r, c| bits[r * width + c])
}
