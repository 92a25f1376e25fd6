//! Smooth Euler characteristic transform (SECT) of planar and solid shapes,
//! SECT distances, and Gaussian-process regression with shape curves as
//! covariates.
//!
//! The pipeline runs bottom-up:
//!
//! * [`complex`] stores simplicial complexes and computes Z2 homology.
//! * [`persistence`] computes sublevel-set barcodes.
//! * [`filtration`] sweeps a direction and records Euler characteristic curves.
//! * [`sect`] centers and integrates those curves into smooth curves and
//!   assembles per-shape profiles.
//! * [`ingest`] turns masks, meshes and tabular files into inputs.
//! * [`gp`] fits and evaluates Gaussian-process regressions.
//! * [`experiment`] and [`synth`] drive repeated-split evaluations.

pub mod complex;
pub mod filtration;
pub mod persistence;
pub mod sect;
pub mod ingest;
pub mod gp;
pub mod experiment;
pub mod synth;

pub use nalgebra;
