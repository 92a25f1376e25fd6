//! Gaussian-process regression on flattened feature vectors.
//!
//! Three covariance families are supported: the linear (gram) kernel
//! `u.v / p`, the Gaussian kernel `exp(-|u-v|^2 / (2 theta))` and the
//! Cauchy kernel `1 / (1 + theta |u-v|^2)`. Bandwidths are picked by k-fold
//! cross-validation on out-of-fold RMSEP.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default observation noise on standardized responses.
pub const DEFAULT_NOISE: f64 = 0.1;
/// Noise grid searched when the marginal-likelihood policy is selected.
pub const NOISE_GRID: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("feature length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("{0:?} kernel needs a bandwidth")]
    MissingBandwidth(KernelFamily),
    #[error("linear kernel has no bandwidth to tune")]
    NoBandwidth,
    #[error("noise variance must be non-negative and finite, got {0}")]
    BadNoise(f64),
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("covariance is not positive definite (min eigenvalue {min_eigenvalue:e}); raise the noise variance")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("response is constant; R^2 is undefined")]
    ConstantResponse,
    #[error("bandwidth grid is empty")]
    EmptyGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Gaussian,
    Cauchy,
}

impl KernelFamily {
    pub fn has_bandwidth(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Cauchy => "cauchy",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gram" => Ok(KernelFamily::Linear),
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "cauchy" => Ok(KernelFamily::Cauchy),
            other => Err(format!("unknown kernel {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            bandwidth: None,
        }
    }

    pub fn gaussian(theta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth: Some(theta),
        }
    }

    pub fn cauchy(theta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Cauchy,
            bandwidth: Some(theta),
        }
    }

    pub fn with_family(family: KernelFamily, theta: f64) -> Self {
        match family {
            KernelFamily::Linear => Self::linear(),
            KernelFamily::Gaussian => Self::gaussian(theta),
            KernelFamily::Cauchy => Self::cauchy(theta),
        }
    }

    fn theta(&self) -> Result<f64, GpError> {
        match (self.family, self.bandwidth) {
            (KernelFamily::Linear, _) => Ok(0.0),
            (f, None) => Err(GpError::MissingBandwidth(f)),
            (_, Some(t)) if !(t > 0.0 && t.is_finite()) => Err(GpError::BadBandwidth(t)),
            (_, Some(t)) => Ok(t),
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        self.theta().map(|_| ())
    }

    /// Kernel value from the inner product, the squared distance and the
    /// feature length. Assumes a validated spec.
    pub fn from_parts(&self, dot: f64, sqdist: f64, p: usize) -> f64 {
        match self.family {
            KernelFamily::Linear => dot / p as f64,
            KernelFamily::Gaussian => (-sqdist / (2.0 * self.bandwidth.unwrap_or(1.0))).exp(),
            KernelFamily::Cauchy => 1.0 / (1.0 + self.bandwidth.unwrap_or(1.0) * sqdist),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64, GpError> {
    if u.len() != v.len() {
        return Err(GpError::LengthMismatch(u.len(), v.len()));
    }
    spec.validate()?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(spec.from_parts(dot, sq, u.len()))
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn cross_gram(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    if a.ncols() != b.ncols() {
        return Err(GpError::LengthMismatch(a.ncols(), b.ncols()));
    }
    spec.validate()?;
    let p = a.ncols();
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let (u, v) = (a.row(i), b.row(j));
        let dot = u.dot(&v);
        let sq = (u - v).norm_squared();
        spec.from_parts(dot, sq, p)
    }))
}

/// Symmetric kernel matrix over the rows of `x`.
pub fn gram_matrix(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    if x.nrows() < 1 {
        return Err(GpError::TooFewSamples { needed: 1, found: 0 });
    }
    let mut g = cross_gram(spec, x, x)?;
    // exact symmetry regardless of rounding in the row differences
    for i in 0..g.nrows() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}

/// Pairwise squared Euclidean distances between rows.
pub fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.row(i) - x.row(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Cholesky factor of `k + noise I`, escalating a diagonal jitter when
/// `noise > 0` and the plain factorization fails.
fn factorize(k: &DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(GpError::BadNoise(noise));
    }
    let n = k.nrows();
    let base = k + DMatrix::identity(n, n) * noise;
    if let Some(c) = Cholesky::new(base.clone()) {
        return Ok((c, 0.0));
    }
    if noise > 0.0 {
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * 1.0000001 {
            if let Some(c) = Cholesky::new(&base + DMatrix::identity(n, n) * jitter) {
                return Ok((c, jitter));
            }
            jitter *= 10.0;
        }
    }
    let min_eigenvalue = SymmetricEigen::new(base).eigenvalues.min();
    Err(GpError::NotPositiveDefinite { min_eigenvalue })
}

/// Fitted GP: training inputs and the factorization of `K_SS + noise I`.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub noise: f64,
    /// Extra diagonal added to obtain a factorization (0 when none needed).
    pub jitter: f64,
    train_x: DMatrix<f64>,
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

pub fn fit(spec: KernelSpec, noise: f64, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GpModel, GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch(x.nrows(), y.len()));
    }
    let k = gram_matrix(&spec, x)?;
    let (chol, jitter) = factorize(&k, noise)?;
    let alpha = chol.solve(y);
    Ok(GpModel {
        kernel: spec,
        noise,
        jitter,
        train_x: x.clone(),
        y: y.clone(),
        chol,
        alpha,
    })
}

impl GpModel {
    pub fn train_size(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn feature_len(&self) -> usize {
        self.train_x.ncols()
    }

    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Max-abs difference between `K_SS + (noise + jitter) I` and `L L^T`.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.train_size();
        let k = gram_matrix(&self.kernel, &self.train_x).expect("validated at fit");
        let target = k + DMatrix::identity(n, n) * (self.noise + self.jitter);
        let l = self.chol.l();
        (target - &l * l.transpose()).amax()
    }

    /// `log p(y)` under the fitted covariance.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train_size() as f64;
        let log_det: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.y.dot(&self.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn predict_mean(&self, x_test: &DMatrix<f64>) -> Result<DVector<f64>, GpError> {
        let k_ts = cross_gram(&self.kernel, x_test, &self.train_x)?;
        Ok(k_ts * &self.alpha)
    }
}

/// Posterior-mean solver on a precomputed training kernel matrix.
#[derive(Clone, Debug)]
pub struct GramFit {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    pub jitter: f64,
}

impl GramFit {
    pub fn new(k_ss: &DMatrix<f64>, noise: f64, y: &DVector<f64>) -> Result<Self, GpError> {
        if k_ss.nrows() != y.len() {
            return Err(GpError::LengthMismatch(k_ss.nrows(), y.len()));
        }
        let (chol, jitter) = factorize(k_ss, noise)?;
        let alpha = chol.solve(y);
        Ok(GramFit { chol, alpha, jitter })
    }

    /// Posterior mean given the test-by-train kernel matrix.
    pub fn predict(&self, k_ts: &DMatrix<f64>) -> DVector<f64> {
        k_ts * &self.alpha
    }

    pub fn log_marginal_likelihood(&self, y: &DVector<f64>) -> f64 {
        let n = y.len() as f64;
        let log_det: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Posterior predictive mean and covariance at the rows of `x_test`.
pub fn posterior_predict(model: &GpModel, x_test: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), GpError> {
    if x_test.ncols() != model.feature_len() {
        return Err(GpError::LengthMismatch(x_test.ncols(), model.feature_len()));
    }
    let k_ts = cross_gram(&model.kernel, x_test, &model.train_x)?;
    let mean = &k_ts * &model.alpha;
    let k_tt = gram_matrix(&model.kernel, x_test)?;
    let l = model.chol.l();
    let v = l
        .solve_lower_triangular(&k_ts.transpose())
        .expect("Cholesky factor has a positive diagonal");
    let mut cov = k_tt - v.transpose() * v;
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok((mean, cov))
}

/// Diagonal of a posterior covariance with small negative values clamped
/// to zero.
pub fn reported_variances(cov: &DMatrix<f64>) -> Vec<f64> {
    cov.diagonal().iter().map(|v| v.max(0.0)).collect()
}

/// The grid 0.1, 0.2, ..., 10.0.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 10.0).collect()
}

/// Seeded assignment of `n` samples to `folds` folds of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

/// Mean out-of-fold RMSEP for a kernel given as a function of squared
/// distance, evaluated on a precomputed distance matrix.
fn cv_score(
    kernel: impl Fn(f64) -> f64,
    sqdist: &DMatrix<f64>,
    y: &DVector<f64>,
    fold: &[usize],
    folds: usize,
    noise: f64,
) -> f64 {
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let k_ss = DMatrix::from_fn(train.len(), train.len(), |i, j| kernel(sqdist[(train[i], train[j])]));
        let Ok((chol, _)) = factorize(&k_ss, noise) else {
            return f64::INFINITY;
        };
        let y_s = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let alpha = chol.solve(&y_s);
        let mut sse = 0.0;
        for &t in &test {
            let pred: f64 = train.iter().zip(alpha.iter()).map(|(&s, a)| kernel(sqdist[(t, s)]) * a).sum();
            sse += (pred - y[t]).powi(2);
        }
        total += (sse / test.len() as f64).sqrt();
    }
    total / folds as f64
}

/// Bandwidth minimizing mean out-of-fold RMSEP, from a precomputed
/// squared-distance matrix. Ties go to the smaller bandwidth.
pub fn cv_bandwidth_from_distances(
    family: KernelFamily,
    sqdist: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    grid: &[f64],
    noise: f64,
    seed: u64,
) -> Result<f64, GpError> {
    if !family.has_bandwidth() {
        return Err(GpError::NoBandwidth);
    }
    if grid.is_empty() {
        return Err(GpError::EmptyGrid);
    }
    let folds = folds.max(2);
    if y.len() < folds {
        return Err(GpError::TooFewSamples {
            needed: folds,
            found: y.len(),
        });
    }
    for &t in grid {
        KernelSpec::with_family(family, t).validate()?;
    }
    let fold = fold_assignment(y.len(), folds, seed);
    let mut best = (grid[0], f64::INFINITY);
    for &theta in grid {
        let spec = KernelSpec::with_family(family, theta);
        let score = cv_score(|d| spec.from_parts(0.0, d, 1), sqdist, y, &fold, folds, noise);
        if score < best.1 {
            best = (theta, score);
        }
    }
    Ok(best.0)
}

/// Bandwidth chosen by `folds`-fold cross-validation over `grid`.
pub fn cv_bandwidth(
    family: KernelFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    grid: &[f64],
    noise: f64,
    seed: u64,
) -> Result<f64, GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch(x.nrows(), y.len()));
    }
    cv_bandwidth_from_distances(family, &squared_distances(x), y, folds, grid, noise, seed)
}

/// Noise variance from `grid` maximizing the log marginal likelihood.
pub fn select_noise(spec: KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, grid: &[f64]) -> Result<f64, GpError> {
    let mut best = None;
    for &noise in grid {
        let Ok(model) = fit(spec, noise, x, y) else { continue };
        let lml = model.log_marginal_likelihood();
        if best.is_none_or(|(_, b)| lml > b) {
            best = Some((noise, lml));
        }
    }
    best.map(|(n, _)| n).ok_or(GpError::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), GpError> {
    if a.len() != b.len() {
        return Err(GpError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(GpError::TooFewSamples {
            needed: 2,
            found: a.len(),
        });
    }
    Ok(())
}

/// Squared Pearson correlation. Constant predictions give 0.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64, GpError> {
    check_pair(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let mt = y_true.iter().sum::<f64>() / n;
    let mp = y_pred.iter().sum::<f64>() / n;
    let (mut stt, mut spp, mut stp) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        stt += (t - mt) * (t - mt);
        spp += (p - mp) * (p - mp);
        stp += (t - mt) * (p - mp);
    }
    if stt == 0.0 {
        return Err(GpError::ConstantResponse);
    }
    if spp == 0.0 {
        return Ok(0.0);
    }
    Ok((stp * stp / (stt * spp)).clamp(0.0, 1.0))
}

/// Root mean squared error of prediction.
pub fn rmsep(y_true: &[f64], y_pred: &[f64]) -> Result<f64, GpError> {
    check_pair(y_true, y_pred)?;
    let mse = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / y_true.len() as f64;
    Ok(mse.sqrt())
}

/// Mean and sample standard deviation learnt on training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    /// A zero spread maps every value to 0.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Standardizer { mean, sd: var.sqrt() }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.sd > 0.0 {
            (v - self.mean) / self.sd
        } else {
            0.0
        }
    }
}

/// Column standardization with train-set statistics; zero-variance columns
/// are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    kept: Vec<usize>,
    columns: Vec<Standardizer>,
    pub dropped: usize,
}

impl FeatureScaler {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let mut kept = Vec::new();
        let mut columns = Vec::new();
        for j in 0..x.ncols() {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let s = Standardizer::fit(&col);
            if s.sd > 0.0 {
                kept.push(j);
                columns.push(s);
            }
        }
        FeatureScaler {
            dropped: x.ncols() - kept.len(),
            kept,
            columns,
        }
    }

    pub fn kept_columns(&self) -> usize {
        self.kept.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.kept.len(), |i, j| self.columns[j].apply(x[(i, self.kept[j])]))
    }
}

/// Reproducibility record of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub kernel: KernelSpec,
    pub noise: f64,
    pub jitter: f64,
    pub seed: Option<u64>,
    pub train_size: usize,
    pub feature_len: usize,
    pub features_sha256: String,
    pub responses_sha256: String,
}

impl ModelExport {
    pub fn new(model: &GpModel, seed: Option<u64>) -> Self {
        ModelExport {
            kernel: model.kernel,
            noise: model.noise,
            jitter: model.jitter,
            seed,
            train_size: model.train_size(),
            feature_len: model.feature_len(),
            features_sha256: digest(model.train_x.transpose().iter()),
            responses_sha256: digest(model.y.iter()),
        }
    }
}

/// SHA-256 of the little-endian bytes of a float sequence, as hex.
pub fn digest<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_at_zero_distance() {
        let u = [0.3, -1.2, 4.0];
        for theta in [0.1, 1.0, 7.5] {
            assert_eq!(kernel_eval(&KernelSpec::gaussian(theta), &u, &u).unwrap(), 1.0);
            assert_eq!(kernel_eval(&KernelSpec::cauchy(theta), &u, &u).unwrap(), 1.0);
        }
        let ones = [1.0; 17];
        assert_eq!(kernel_eval(&KernelSpec::linear(), &ones, &ones).unwrap(), 1.0);
    }

    #[test]
    fn kernel_formulas() {
        let u = [1.0, 0.0];
        let v = [0.0, 1.0];
        let g = kernel_eval(&KernelSpec::gaussian(2.0), &u, &v).unwrap();
        assert!((g - (-0.5f64).exp()).abs() < 1e-15);
        let c = kernel_eval(&KernelSpec::cauchy(0.5), &u, &v).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        let l = kernel_eval(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(l, 5.5);
    }

    #[test]
    fn kernel_errors() {
        assert_eq!(
            kernel_eval(&KernelSpec::gaussian(1.0), &[1.0], &[1.0, 2.0]),
            Err(GpError::LengthMismatch(1, 2))
        );
        assert_eq!(
            kernel_eval(&KernelSpec::cauchy(0.0), &[1.0], &[1.0]),
            Err(GpError::BadBandwidth(0.0))
        );
        let missing = KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth: None,
        };
        assert!(matches!(kernel_eval(&missing, &[1.0], &[1.0]), Err(GpError::MissingBandwidth(_))));
    }

    #[test]
    fn gram_shapes() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(gram_matrix(&KernelSpec::gaussian(1.0), &x).unwrap().shape(), (1, 1));
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, 0.1, 1.0, 2.0]);
        let g = gram_matrix(&KernelSpec::cauchy(1.0), &x).unwrap();
        assert_eq!(g.row(0), g.row(2));
        assert_eq!(g.column(0), g.column(2));
        assert!(g.diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn orthogonal_linear_features_factor() {
        // rows are scaled unit vectors so that x x^T / p = I
        let p = 3.0f64;
        let x = DMatrix::identity(3, 3) * p.sqrt();
        let y = DVector::from_vec(vec![0.5, -1.0, 0.5]);
        let m = fit(KernelSpec::linear(), 0.1, &x, &y).unwrap();
        let l = m.factor();
        let want = DMatrix::identity(3, 3) * 1.1f64.sqrt();
        assert!((l - want).amax() < 1e-12);
        assert!(m.factorization_residual() < 1e-12);
    }

    #[test]
    fn singular_without_noise() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        match fit(KernelSpec::gaussian(1.0), 0.0, &x, &y) {
            Err(GpError::NotPositiveDefinite { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("expected failure, got {:?}", other.map(|m| m.jitter)),
        }
    }

    #[test]
    fn scalar_posterior() {
        let xs = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let xt = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0]);
        let m = fit(KernelSpec::gaussian(2.0), 0.5, &xs, &y).unwrap();
        let (mu, cov) = posterior_predict(&m, &xt).unwrap();
        let k = (-0.5f64).exp();
        assert!((mu[0] - k / 1.5).abs() < 1e-14);
        assert!((mu[0] - 0.4044).abs() < 1e-4);
        assert!((cov[(0, 0)] - (1.0 - k * k / 1.5)).abs() < 1e-14);
    }

    #[test]
    fn zero_response_leaves_covariance() {
        let xs = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.5]);
        let xt = DMatrix::from_row_slice(2, 1, &[0.5, 3.0]);
        let spec = KernelSpec::cauchy(0.7);
        let m0 = fit(spec, 0.2, &xs, &DVector::zeros(3)).unwrap();
        let m1 = fit(spec, 0.2, &xs, &DVector::from_vec(vec![1.0, -2.0, 0.3])).unwrap();
        let (mu0, c0) = posterior_predict(&m0, &xt).unwrap();
        let (_, c1) = posterior_predict(&m1, &xt).unwrap();
        assert!(mu0.iter().all(|&v| v == 0.0));
        assert_eq!(c0, c1);
    }

    #[test]
    fn predict_shape_mismatch() {
        let xs = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let m = fit(KernelSpec::gaussian(1.0), 0.1, &xs, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let bad = DMatrix::zeros(1, 3);
        assert_eq!(posterior_predict(&m, &bad).unwrap_err(), GpError::LengthMismatch(3, 2));
    }

    #[test]
    fn metrics() {
        let y = [1.0, -1.0, 0.5, -0.5];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(rmsep(&y, &y).unwrap(), 0.0);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((r_squared(&y, &neg).unwrap() - 1.0).abs() < 1e-15);
        let affine: Vec<f64> = y.iter().map(|v| 3.0 + 2.0 * v).collect();
        assert!((r_squared(&y, &affine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r_squared(&[1.0, 1.0], &[0.0, 1.0]), Err(GpError::ConstantResponse));
        assert!(rmsep(&[1.0], &[1.0]).is_err());
        assert_eq!(r_squared(&y, &[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn standardized_negation_rmsep_is_two() {
        let raw = [3.0, 7.0, 1.0, 4.0, 10.0];
        let s = Standardizer::fit(&raw);
        let z: Vec<f64> = raw.iter().map(|&v| s.apply(v)).collect();
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        // sum z^2 = n - 1 under the sample standard deviation
        let want = 2.0 * ((raw.len() - 1) as f64 / raw.len() as f64).sqrt();
        assert!((rmsep(&z, &neg).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn constant_response_picks_smallest_bandwidth() {
        let x = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y = DVector::zeros(20);
        let grid = default_bandwidth_grid();
        let theta = cv_bandwidth(KernelFamily::Gaussian, &x, &y, 10, &grid, 0.1, 1).unwrap();
        assert_eq!(theta, 0.1);
        let one = cv_bandwidth(KernelFamily::Cauchy, &x, &y, 10, &[3.3], 0.1, 1).unwrap();
        assert_eq!(one, 3.3);
    }

    #[test]
    fn cv_errors() {
        let x = DMatrix::zeros(5, 2);
        let y = DVector::zeros(5);
        assert_eq!(
            cv_bandwidth(KernelFamily::Gaussian, &x, &y, 10, &[1.0], 0.1, 0),
            Err(GpError::TooFewSamples { needed: 10, found: 5 })
        );
        assert_eq!(
            cv_bandwidth(KernelFamily::Linear, &x, &y, 2, &[1.0], 0.1, 0),
            Err(GpError::NoBandwidth)
        );
        assert_eq!(cv_bandwidth(KernelFamily::Gaussian, &x, &y, 2, &[], 0.1, 0), Err(GpError::EmptyGrid));
    }

    #[test]
    fn grid_is_exact_tenths() {
        let g = default_bandwidth_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[99], 10.0);
        assert_eq!(g[29], 3.0);
    }

    #[test]
    fn folds_balanced_and_seeded() {
        let a = fold_assignment(23, 10, 5);
        assert_eq!(a, fold_assignment(23, 10, 5));
        for f in 0..10 {
            let c = a.iter().filter(|&&x| x == f).count();
            assert!(c == 2 || c == 3);
        }
    }

    #[test]
    fn scaler_drops_constant_columns() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 0.0, 2.0, 5.0, 1.0, 3.0, 5.0, 2.0]);
        let s = FeatureScaler::fit(&x);
        assert_eq!((s.kept_columns(), s.dropped), (2, 1));
        let t = s.transform(&x);
        assert_eq!(t.column(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn noise_selection_prefers_small_noise_for_smooth_data() {
        let x = DMatrix::from_fn(15, 1, |i, _| i as f64 / 3.0);
        let y = DVector::from_fn(15, |i, _| (i as f64 / 3.0).sin());
        let n = select_noise(KernelSpec::gaussian(1.0), &x, &y, &NOISE_GRID).unwrap();
        assert_eq!(n, 1e-3);
    }

    #[test]
    fn export_digests_are_stable() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let m = fit(KernelSpec::gaussian(1.0), 0.1, &x, &y).unwrap();
        let e = ModelExport::new(&m, Some(4));
        assert_eq!(e, ModelExport::new(&m, Some(4)));
        assert_eq!(e.features_sha256.len(), 64);
        assert_ne!(e.features_sha256, e.responses_sha256);
    }
}
