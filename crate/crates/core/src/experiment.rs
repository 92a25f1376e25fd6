//! Repeated random-split evaluation of GP regressions across covariate
//! types.
//!
//! Every split draws its own seed from the master seed, standardizes the
//! response with training statistics, tunes the bandwidth by
//! cross-validation, fits, and scores the held-out subjects. Splits run in
//! parallel and are reduced in index order, so reports do not depend on the
//! worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::filtration::{direction_set, DEFAULT_DIRECTIONS, DEFAULT_LEVELS};
use crate::gp::{
    cv_bandwidth_from_distances, default_bandwidth_grid, r_squared, rmsep, FeatureScaler, GpError, GramFit,
    KernelFamily, KernelSpec, Standardizer, DEFAULT_NOISE, NOISE_GRID,
};
use crate::ingest::{load_dataset, load_shape, Dataset, IngestError};
use crate::sect::{aggregate_slices, direction_convention, sect, ProfileCache, SectError, SectProfile, ShapeMeta};

/// Data-type name for features computed from each subject's shapes.
pub const SECT_FEATURES: &str = "sect";
pub const MIN_SUBJECTS: usize = 10;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sect(#[from] SectError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("requested data type {0:?} is neither \"sect\" nor a manifest covariate")]
    UnknownDataType(String),
    #[error("subject {subject:?} has no response {response:?}")]
    MissingResponse { subject: String, response: String },
    #[error("subject {0:?} has no masks or mesh")]
    NoShape(String),
    #[error("need at least {MIN_SUBJECTS} subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How the observation noise variance is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePolicy {
    Fixed(f64),
    /// Chosen from a fixed grid by marginal likelihood after the bandwidth.
    MarginalLikelihood,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        NoisePolicy::Fixed(DEFAULT_NOISE)
    }
}

fn default_data_types() -> Vec<String> {
    vec![SECT_FEATURES.to_owned()]
}
fn default_kernels() -> Vec<KernelFamily> {
    vec![KernelFamily::Linear, KernelFamily::Gaussian, KernelFamily::Cauchy]
}
fn default_folds() -> usize {
    10
}
fn default_splits() -> usize {
    1000
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_directions() -> usize {
    DEFAULT_DIRECTIONS
}
fn default_levels() -> usize {
    DEFAULT_LEVELS
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_data_types")]
    pub data_types: Vec<String>,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelFamily>,
    /// Response names to model; empty means every response in the manifest.
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_bandwidth_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub noise: NoisePolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Column-standardize features with training statistics.
    #[serde(default = "yes")]
    pub standardize_features: bool,
    /// Divide squared distances and inner products by the feature count.
    #[serde(default = "yes")]
    pub per_feature_distances: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            manifest: manifest.into(),
            data_types: default_data_types(),
            kernels: default_kernels(),
            responses: Vec::new(),
            folds: default_folds(),
            grid: default_bandwidth_grid(),
            splits: default_splits(),
            train_fraction: default_train_fraction(),
            noise: NoisePolicy::default(),
            seed: 0,
            output_dir: None,
            directions: default_directions(),
            levels: default_levels(),
            standardize_features: true,
            per_feature_distances: true,
            cache_dir: None,
        }
    }

    /// Reads a config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_slice(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let root = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        };
        fix(&mut cfg.manifest);
        cfg.output_dir.as_mut().map(fix);
        cfg.cache_dir.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_owned()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.splits == 0 {
            return bad("splits must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.data_types.is_empty() || self.kernels.is_empty() {
            return bad("need at least one data type and one kernel");
        }
        if self.grid.is_empty() || self.grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("bandwidth grid must be non-empty and positive");
        }
        if let NoisePolicy::Fixed(t) = self.noise {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("noise must be non-negative");
            }
        }
        Ok(())
    }
}

/// One model fit on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub response: String,
    pub data_type: String,
    pub kernel: KernelFamily,
    pub theta: Option<f64>,
    pub noise: f64,
    /// `None` when the held-out response is constant.
    pub r2: Option<f64>,
    pub rmsep: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub index: usize,
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub fits: Vec<FitRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSummary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub response: String,
    pub data_type: String,
    pub kernel: KernelFamily,
    pub mean_r2: f64,
    /// Sample standard deviation of per-split R^2 over sqrt(split count).
    pub se_r2: f64,
    pub r2_splits: usize,
    pub optimal_pct: f64,
    pub mean_rmsep: f64,
    pub theta: Option<ThetaSummary>,
}

/// Paired one-sided t-test of per-split R^2: best data type minus another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub response: String,
    pub kernel: KernelFamily,
    pub best: String,
    pub other: String,
    pub pairs: usize,
    pub mean_difference: f64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub software_version: String,
    pub config: ExperimentConfig,
    pub subjects: Vec<String>,
    pub responses: Vec<String>,
    pub feature_widths: BTreeMap<String, usize>,
    pub summaries: Vec<Summary>,
    pub paired_tests: Vec<PairedTest>,
    pub splits: Vec<SplitRecord>,
}

fn subject_profile(
    ds: &Dataset,
    index: usize,
    cfg: &ExperimentConfig,
    cache: Option<&ProfileCache>,
) -> Result<SectProfile, ExperimentError> {
    let s = &ds.manifest.subjects[index];
    let dim = if s.masks.is_empty() { 3 } else { 2 };
    let conv = direction_convention(dim);
    if let Some(hit) = cache.map(|c| c.get(&s.id, cfg.directions, cfg.levels, conv)).transpose()?.flatten() {
        return Ok(hit);
    }
    let dirs = direction_set(cfg.directions, dim).map_err(SectError::from)?;
    let profile = if !s.masks.is_empty() {
        let slices = s
            .masks
            .iter()
            .map(|m| {
                let k = load_shape(m, ds.manifest.pixel_spacing)?;
                Ok(sect(&k, &dirs, cfg.levels)?)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        aggregate_slices(&slices)?
    } else if let Some(mesh) = &s.mesh {
        sect(&load_shape(mesh, 1.0)?, &dirs, cfg.levels)?
    } else {
        return Err(ExperimentError::NoShape(s.id.clone()));
    };
    let profile = profile.with_meta(ShapeMeta {
        source_id: Some(s.id.clone()),
        slices: (0..s.masks.len()).collect(),
    });
    if let Some(c) = cache {
        c.put(&s.id, conv, &profile)?;
    }
    Ok(profile)
}

/// SECT feature rows, one per subject in manifest order.
pub fn sect_features(ds: &Dataset, cfg: &ExperimentConfig) -> Result<DMatrix<f64>, ExperimentError> {
    let cache = cfg.cache_dir.as_ref().map(ProfileCache::new);
    let rows = (0..ds.manifest.subjects.len())
        .into_par_iter()
        .map(|i| subject_profile(ds, i, cfg, cache.as_ref()).map(|p| p.feature_vector()))
        .collect::<Result<Vec<_>, _>>()?;
    to_matrix(&rows).map_err(|w| ExperimentError::Config(format!("SECT feature lengths differ ({w:?})")))
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, (usize, usize)> {
    let p = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != p) {
        return Err((p, r.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Inputs shared by every split.
struct Prepared {
    ids: Vec<String>,
    responses: Vec<String>,
    y: Vec<Vec<f64>>,
    features: Vec<(String, DMatrix<f64>)>,
}

fn prepare(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let subjects = &ds.manifest.subjects;
    if subjects.len() < MIN_SUBJECTS {
        return Err(ExperimentError::TooFewSubjects(subjects.len()));
    }
    let responses: Vec<String> = if cfg.responses.is_empty() {
        let all: BTreeSet<&String> = subjects.iter().flat_map(|s| s.responses.keys()).collect();
        all.into_iter().cloned().collect()
    } else {
        cfg.responses.clone()
    };
    if responses.is_empty() {
        return Err(ExperimentError::Config("manifest lists no responses".into()));
    }
    let mut y = Vec::new();
    for r in &responses {
        let col = subjects
            .iter()
            .map(|s| {
                s.responses.get(r).copied().ok_or_else(|| ExperimentError::MissingResponse {
                    subject: s.id.clone(),
                    response: r.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        y.push(col);
    }
    let mut features = Vec::new();
    for dt in &cfg.data_types {
        let m = if dt == SECT_FEATURES {
            sect_features(ds, cfg)?
        } else {
            let cov = ds
                .covariates
                .get(dt)
                .ok_or_else(|| ExperimentError::UnknownDataType(dt.clone()))?;
            to_matrix(&cov.rows).map_err(|_| ExperimentError::Config(format!("ragged covariate {dt:?}")))?
        };
        features.push((dt.clone(), m));
    }
    Ok(Prepared {
        ids: subjects.iter().map(|s| s.id.clone()).collect(),
        responses,
        y,
        features,
    })
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Inner products and squared distances between the rows of `a` and `b`,
/// both divided by `scale`.
fn pair_stats(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let dot = a * b.transpose();
    let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let sq = DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (na[i] + nb[j] - 2.0 * dot[(i, j)]).max(0.0) / scale);
    (dot / scale, sq)
}

/// Membership of one split: sorted train and test indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(2, n.saturating_sub(2).max(2));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Per-split seeds drawn in order from the master seed.
pub fn split_seeds(master: u64, splits: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..splits).map(|_| rng.random()).collect()
}

fn run_split(index: usize, seed: u64, prep: &Prepared, cfg: &ExperimentConfig) -> Result<SplitRecord, ExperimentError> {
    let n = prep.ids.len();
    let (train, test) = split_indices(n, cfg.train_fraction, seed);
    let fold_seed = seed.wrapping_add(1);
    let mut fits = Vec::new();

    let ys: Vec<(DVector<f64>, Vec<f64>)> = prep
        .y
        .iter()
        .map(|col| {
            let tr: Vec<f64> = train.iter().map(|&i| col[i]).collect();
            let s = Standardizer::fit(&tr);
            let y_tr = DVector::from_iterator(tr.len(), tr.iter().map(|&v| s.apply(v)));
            let y_te = test.iter().map(|&i| s.apply(col[i])).collect();
            (y_tr, y_te)
        })
        .collect();

    for (dt, x) in &prep.features {
        let (mut x_tr, mut x_te) = (rows_of(x, &train), rows_of(x, &test));
        if cfg.standardize_features {
            let scaler = FeatureScaler::fit(&x_tr);
            x_tr = scaler.transform(&x_tr);
            x_te = scaler.transform(&x_te);
        }
        let scale = if cfg.per_feature_distances { x_tr.ncols().max(1) as f64 } else { 1.0 };
        // the linear kernel divides by the feature count on its own
        let lin_scale = if cfg.per_feature_distances { scale } else { x_tr.ncols().max(1) as f64 };
        let (dot_ss, sq_ss) = pair_stats(&x_tr, &x_tr, scale);
        let (dot_ts, sq_ts) = pair_stats(&x_te, &x_tr, scale);
        let lin = lin_scale / scale;

        for (r, (y_tr, y_te)) in prep.responses.iter().zip(&ys) {
            for &family in &cfg.kernels {
                let base_noise = match cfg.noise {
                    NoisePolicy::Fixed(t) => t,
                    NoisePolicy::MarginalLikelihood => DEFAULT_NOISE,
                };
                let theta = if family.has_bandwidth() {
                    Some(cv_bandwidth_from_distances(
                        family, &sq_ss, y_tr, cfg.folds, &cfg.grid, base_noise, fold_seed,
                    )?)
                } else {
                    None
                };
                let spec = KernelSpec::with_family(family, theta.unwrap_or(1.0));
                let kern = |dot: &DMatrix<f64>, sq: &DMatrix<f64>| {
                    DMatrix::from_fn(dot.nrows(), dot.ncols(), |i, j| spec.from_parts(dot[(i, j)] / lin, sq[(i, j)], 1))
                };
                let k_ss = kern(&dot_ss, &sq_ss);
                let noise = match cfg.noise {
                    NoisePolicy::Fixed(t) => t,
                    NoisePolicy::MarginalLikelihood => {
                        let mut best = (base_noise, f64::NEG_INFINITY);
                        for &t in &NOISE_GRID {
                            if let Ok(f) = GramFit::new(&k_ss, t, y_tr) {
                                let l = f.log_marginal_likelihood(y_tr);
                                if l > best.1 {
                                    best = (t, l);
                                }
                            }
                        }
                        best.0
                    }
                };
                let fit = GramFit::new(&k_ss, noise, y_tr)?;
                let pred = fit.predict(&kern(&dot_ts, &sq_ts));
                let pred = pred.as_slice();
                fits.push(FitRecord {
                    response: r.clone(),
                    data_type: dt.clone(),
                    kernel: family,
                    theta,
                    noise,
                    r2: r_squared(y_te, pred).ok(),
                    rmsep: rmsep(y_te, pred)?,
                });
            }
        }
    }
    Ok(SplitRecord {
        index,
        seed,
        test_ids: test.iter().map(|&i| prep.ids[i].clone()).collect(),
        fits,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn summarize(prep: &Prepared, cfg: &ExperimentConfig, splits: &[SplitRecord]) -> (Vec<Summary>, Vec<PairedTest>) {
    let find = |s: &SplitRecord, r: &str, dt: &str, k: KernelFamily| {
        s.fits
            .iter()
            .find(|f| f.response == r && f.data_type == dt && f.kernel == k)
            .expect("every combination is fitted")
            .clone()
    };
    let mut summaries = Vec::new();
    let mut tests = Vec::new();
    for r in &prep.responses {
        for &k in &cfg.kernels {
            let per_dt: Vec<Vec<FitRecord>> = cfg
                .data_types
                .iter()
                .map(|dt| splits.iter().map(|s| find(s, r, dt, k)).collect())
                .collect();
            let mut credit = vec![0.0; cfg.data_types.len()];
            for s in 0..splits.len() {
                let best = per_dt.iter().map(|f| f[s].rmsep).fold(f64::INFINITY, f64::min);
                let winners: Vec<usize> = (0..per_dt.len()).filter(|&d| per_dt[d][s].rmsep == best).collect();
                for &w in &winners {
                    credit[w] += 1.0 / winners.len() as f64;
                }
            }
            let start = summaries.len();
            for (d, dt) in cfg.data_types.iter().enumerate() {
                let fits = &per_dt[d];
                let r2: Vec<f64> = fits.iter().filter_map(|f| f.r2).collect();
                let rm: Vec<f64> = fits.iter().map(|f| f.rmsep).collect();
                let theta = k.has_bandwidth().then(|| {
                    let mut t: Vec<f64> = fits.iter().filter_map(|f| f.theta).collect();
                    t.sort_by(f64::total_cmp);
                    let mid = t.len() / 2;
                    ThetaSummary {
                        mean: mean(&t),
                        median: if t.len() % 2 == 1 { t[mid] } else { 0.5 * (t[mid - 1] + t[mid]) },
                        min: t[0],
                        max: t[t.len() - 1],
                    }
                });
                summaries.push(Summary {
                    response: r.clone(),
                    data_type: dt.clone(),
                    kernel: k,
                    mean_r2: if r2.is_empty() { f64::NAN } else { mean(&r2) },
                    se_r2: sample_sd(&r2) / (r2.len().max(1) as f64).sqrt(),
                    r2_splits: r2.len(),
                    optimal_pct: 100.0 * credit[d] / splits.len() as f64,
                    mean_rmsep: mean(&rm),
                    theta,
                });
            }
            if cfg.data_types.len() < 2 {
                continue;
            }
            let group = &summaries[start..];
            let best = (0..group.len())
                .max_by(|&a, &b| group[a].mean_r2.total_cmp(&group[b].mean_r2).then(b.cmp(&a)))
                .expect("non-empty");
            for other in (0..group.len()).filter(|&o| o != best) {
                let diffs: Vec<f64> = (0..splits.len())
                    .filter_map(|s| Some(per_dt[best][s].r2? - per_dt[other][s].r2?))
                    .collect();
                tests.push(paired_test(r, k, &cfg.data_types[best], &cfg.data_types[other], &diffs));
            }
        }
    }
    (summaries, tests)
}

/// One-sided test that the mean of `diffs` exceeds zero.
pub fn paired_test(response: &str, kernel: KernelFamily, best: &str, other: &str, diffs: &[f64]) -> PairedTest {
    let n = diffs.len();
    let m = if n == 0 { f64::NAN } else { mean(diffs) };
    let sd = sample_sd(diffs);
    let (t, p) = if n >= 2 && sd > 0.0 {
        let t = m / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
        (Some(t), Some(1.0 - dist.cdf(t)))
    } else {
        (None, None)
    };
    PairedTest {
        response: response.to_owned(),
        kernel,
        best: best.to_owned(),
        other: other.to_owned(),
        pairs: n,
        mean_difference: m,
        t,
        p_value: p,
    }
}

/// Runs the full protocol on an already loaded dataset. `workers` sets the
/// thread count (0 or `None` for the rayon default); results do not depend
/// on it.
pub fn run_on_dataset(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    pool.install(|| {
        let prep = prepare(ds, cfg)?;
        let seeds = split_seeds(cfg.seed, cfg.splits);
        let splits = seeds
            .par_iter()
            .enumerate()
            .map(|(i, &s)| run_split(i, s, &prep, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let (summaries, paired_tests) = summarize(&prep, cfg, &splits);
        let mut echo = cfg.clone();
        echo.output_dir = None;
        echo.cache_dir = None;
        Ok(ExperimentReport {
            software_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: echo,
            subjects: prep.ids.clone(),
            responses: prep.responses.clone(),
            feature_widths: prep.features.iter().map(|(n, m)| (n.clone(), m.ncols())).collect(),
            summaries,
            paired_tests,
            splits,
        })
    })
}

/// Loads the manifest named in `cfg`, runs every split, and writes the
/// report files when `cfg.output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport, ExperimentError> {
    let ds = load_dataset(&cfg.manifest)?;
    let report = run_on_dataset(&ds, cfg, workers)?;
    if let Some(dir) = &cfg.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per (response, data type, kernel).
    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("response,data_type,kernel,mean_r2,se_r2,r2_splits,optimal_pct,mean_rmsep,theta_mean,theta_median\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.response,
                s.data_type,
                s.kernel.name(),
                s.mean_r2,
                s.se_r2,
                s.r2_splits,
                s.optimal_pct,
                s.mean_rmsep,
                opt(s.theta.as_ref().map(|t| t.mean)),
                opt(s.theta.as_ref().map(|t| t.median)),
            );
        }
        out
    }

    pub fn splits_csv(&self) -> String {
        let mut out = String::from("split,seed,response,data_type,kernel,theta,noise,r2,rmsep\n");
        for s in &self.splits {
            for f in &s.fits {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    s.index,
                    s.seed,
                    f.response,
                    f.data_type,
                    f.kernel.name(),
                    opt(f.theta),
                    f.noise,
                    opt(f.r2),
                    f.rmsep
                );
            }
        }
        out
    }

    /// Mean R^2 with standard errors in parentheses, one row per kernel and
    /// data type, one column pair per response.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("kernel,data_type");
        for r in &self.responses {
            let _ = write!(out, ",{r} R2 (SE),{r} optimal %");
        }
        out.push('\n');
        for &k in &self.config.kernels {
            for dt in &self.config.data_types {
                let _ = write!(out, "{},{dt}", k.name());
                for r in &self.responses {
                    let s = self
                        .summaries
                        .iter()
                        .find(|s| &s.response == r && &s.data_type == dt && s.kernel == k)
                        .expect("summary exists");
                    let _ = write!(out, ",{:.3} ({:.2}),{:.1}", s.mean_r2, s.se_r2, s.optimal_pct);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        let io = |path: PathBuf| move |source| ExperimentError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, body) in [
            ("report.json", self.to_json()),
            ("summary.csv", self.summary_csv()),
            ("splits.csv", self.splits_csv()),
            ("table.csv", self.table_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FeatureMatrix, Manifest, SubjectEntry};

    fn toy_dataset(n: usize, covariates: &[(&str, Vec<Vec<f64>>)]) -> Dataset {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let subjects = ids
            .iter()
            .enumerate()
            .map(|(i, id)| SubjectEntry {
                id: id.clone(),
                masks: vec![],
                mesh: None,
                responses: BTreeMap::from([("y".to_owned(), (i as f64 * 0.7).sin() + 0.1 * i as f64)]),
            })
            .collect();
        Dataset {
            root: PathBuf::from("."),
            manifest: Manifest {
                subjects,
                covariates: BTreeMap::new(),
                strict: true,
                pixel_spacing: 1.0,
            },
            covariates: covariates
                .iter()
                .map(|(name, rows)| {
                    (
                        name.to_string(),
                        FeatureMatrix {
                            names: (0..rows[0].len()).map(|j| format!("f{j}")).collect(),
                            ids: ids.clone(),
                            rows: rows.clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    fn rows(n: usize, p: usize, salt: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..p).map(|j| ((i * 31 + j * 7) as f64 * 0.37 + salt).sin()).collect())
            .collect()
    }

    fn config(types: &[&str], kernels: Vec<KernelFamily>, splits: usize) -> ExperimentConfig {
        ExperimentConfig {
            data_types: types.iter().map(|s| s.to_string()).collect(),
            kernels,
            splits,
            folds: 3,
            grid: vec![0.5, 1.0, 2.0],
            seed: 9,
            ..ExperimentConfig::new("unused.json")
        }
    }

    #[test]
    fn single_type_is_always_optimal() {
        let ds = toy_dataset(14, &[("a", rows(14, 3, 0.0))]);
        let rep = run_on_dataset(&ds, &config(&["a"], vec![KernelFamily::Gaussian], 4), Some(1)).unwrap();
        assert_eq!(rep.summaries.len(), 1);
        assert_eq!(rep.summaries[0].optimal_pct, 100.0);
        assert!(rep.paired_tests.is_empty());
    }

    #[test]
    fn identical_types_split_credit() {
        let x = rows(15, 4, 0.3);
        let ds = toy_dataset(15, &[("a", x.clone()), ("b", x)]);
        let cfg = config(&["a", "b"], vec![KernelFamily::Cauchy, KernelFamily::Linear], 5);
        let rep = run_on_dataset(&ds, &cfg, Some(1)).unwrap();
        for pair in rep.summaries.chunks(2) {
            assert_eq!(pair[0].mean_r2, pair[1].mean_r2);
            assert_eq!(pair[0].optimal_pct, 50.0);
            assert_eq!(pair[1].optimal_pct, 50.0);
        }
        assert!(rep.paired_tests.iter().all(|t| t.t.is_none() && t.mean_difference == 0.0));
    }

    #[test]
    fn optimal_sums_to_hundred() {
        let ds = toy_dataset(16, &[("a", rows(16, 3, 0.0)), ("b", rows(16, 5, 1.0)), ("c", rows(16, 2, 2.0))]);
        let cfg = config(&["a", "b", "c"], vec![KernelFamily::Gaussian], 6);
        let rep = run_on_dataset(&ds, &cfg, Some(1)).unwrap();
        let total: f64 = rep.summaries.iter().map(|s| s.optimal_pct).sum();
        assert!((total - 100.0).abs() < 1e-9);
        assert!(rep.summaries.iter().all(|s| s.se_r2 >= 0.0));
        assert_eq!(rep.paired_tests.len(), 2);
    }

    #[test]
    fn worker_count_does_not_change_report() {
        let ds = toy_dataset(14, &[("a", rows(14, 3, 0.5)), ("b", rows(14, 3, 1.5))]);
        let mut cfg = config(&["a", "b"], vec![KernelFamily::Gaussian], 6);
        cfg.noise = NoisePolicy::MarginalLikelihood;
        let one = run_on_dataset(&ds, &cfg, Some(1)).unwrap().to_json();
        let three = run_on_dataset(&ds, &cfg, Some(3)).unwrap().to_json();
        assert_eq!(one, three);
    }

    #[test]
    fn errors() {
        let ds = toy_dataset(14, &[("a", rows(14, 3, 0.0))]);
        let r = run_on_dataset(&ds, &config(&["zz"], vec![KernelFamily::Gaussian], 1), Some(1));
        assert!(matches!(r, Err(ExperimentError::UnknownDataType(_))));
        let small = toy_dataset(9, &[("a", rows(9, 3, 0.0))]);
        let r = run_on_dataset(&small, &config(&["a"], vec![KernelFamily::Gaussian], 1), Some(1));
        assert!(matches!(r, Err(ExperimentError::TooFewSubjects(9))));
        let mut cfg = config(&["a"], vec![KernelFamily::Gaussian], 1);
        cfg.train_fraction = 1.0;
        assert!(matches!(run_on_dataset(&ds, &cfg, None), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn splits_partition_subjects() {
        let (tr, te) = split_indices(60, 0.8, 42);
        assert_eq!((tr.len(), te.len()), (48, 12));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        assert_eq!(split_indices(60, 0.8, 42), (tr, te));
    }

    #[test]
    fn paired_test_direction() {
        let t = paired_test("y", KernelFamily::Gaussian, "a", "b", &[0.2, 0.3, 0.25, 0.1]);
        assert!(t.t.unwrap() > 0.0);
        assert!(t.p_value.unwrap() < 0.01);
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"manifest": "m.json"}"#).unwrap();
        assert_eq!(cfg.splits, 1000);
        assert_eq!(cfg.train_fraction, 0.8);
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.grid.len(), 100);
        assert_eq!(cfg.noise, NoisePolicy::Fixed(0.1));
        let ml: ExperimentConfig =
            serde_json::from_str(r#"{"manifest": "m.json", "noise": "marginal-likelihood"}"#).unwrap();
        assert_eq!(ml.noise, NoisePolicy::MarginalLikelihood);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"manifest": "m", "bogus": 1}"#).is_err());
    }
}
