//! Monte Carlo check of the concentration rates for autocovariance,
//! eigenvalue and score-covariance estimates.
//!
//! Each variable is a 5-dimensional Fourier process whose coefficients are
//! independent with variances `lambda`, so the eigenfunctions are the basis
//! functions and the scores are the coefficients. The dependent fixture
//! gives every coefficient an AR(1) law with the same marginal variance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfarError};
use crate::linalg::sym_eigen_desc;
use crate::moments::{autocov_empirical, score_autocov, stability_measure_var1, DEFAULT_THETA_GRID};
use crate::rng;

pub const FIXTURE_EIGENVALUES: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Fixture {
    Iid,
    /// Every coefficient follows AR(1) with coefficient `a`.
    Ar1 { a: f64 },
}

impl Fixture {
    fn coefficient(&self) -> f64 {
        match self {
            Fixture::Iid => 0.0,
            Fixture::Ar1 { a } => *a,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub fixture: Fixture,
    pub p: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Lags entering the score-covariance error.
    pub score_lags: Vec<usize>,
    /// Exponent in the `(l v m)^(alpha + 1)` score scaling.
    pub alpha: f64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            fixture: Fixture::Iid,
            p: 5,
            n_grid: vec![250, 500, 1000, 2000, 4000],
            reps: 100,
            seed: 0,
            score_lags: vec![0, 1],
            alpha: 1.0,
        }
    }
}

/// Max-norm errors of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepErrors {
    pub sigma: f64,
    pub eigen: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub median_sigma: f64,
    pub median_eigen: f64,
    pub median_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub config: ConcentrationConfig,
    pub stability: f64,
    pub rows: Vec<RateRow>,
    pub slope_sigma: f64,
    pub slope_eigen: f64,
    pub slope_score: f64,
}

/// `n x G` coefficient matrices for each of `p` variables.
pub fn simulate_fixture(fixture: Fixture, p: usize, n: usize, rng: &mut rng::StreamRng) -> Vec<DMatrix<f64>> {
    let a = fixture.coefficient();
    let g = FIXTURE_EIGENVALUES.len();
    let mut out: Vec<DMatrix<f64>> = (0..p).map(|_| DMatrix::zeros(n, g)).collect();
    for m in out.iter_mut() {
        for (l, &lam) in FIXTURE_EIGENVALUES.iter().enumerate() {
            let innov = (lam * (1.0 - a * a)).sqrt();
            let mut x = lam.sqrt() * rng.sample::<f64, _>(StandardNormal);
            m[(0, l)] = x;
            for t in 1..n {
                x = a * x + innov * rng.sample::<f64, _>(StandardNormal);
                m[(t, l)] = x;
            }
        }
    }
    out
}

/// Errors of the lag-0 autocovariance (block HS norm), the relative
/// eigenvalues and the scaled score covariances against the fixture truth.
pub fn replication_errors(coeffs: &[DMatrix<f64>], fixture: Fixture, score_lags: &[usize], alpha: f64) -> Result<RepErrors> {
    let lam = FIXTURE_EIGENVALUES;
    let g = lam.len();
    let a = fixture.coefficient();
    let p = coeffs.len();
    let s0 = autocov_empirical(coeffs, 0)?;
    let truth0 = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&lam));
    let mut sigma = 0.0_f64;
    let mut eigen = 0.0_f64;
    let mut scores = Vec::with_capacity(p);
    for j in 0..p {
        for k in 0..p {
            let block = s0.block(j, k);
            let err = if j == k { (&block - &truth0).norm() } else { block.norm() };
            sigma = sigma.max(err);
        }
        let (vals, mut vecs) = sym_eigen_desc(&s0.block(j, j));
        for l in 0..g {
            eigen = eigen.max(((vals[l] - lam[l]) / lam[l]).abs());
            if vecs[(l, l)] < 0.0 {
                vecs.column_mut(l).neg_mut();
            }
        }
        scores.push(&coeffs[j] * vecs);
    }
    let mut score = 0.0_f64;
    for &h in score_lags {
        let cov = score_autocov(&scores, h)?;
        for j in 0..p {
            for k in 0..p {
                for l in 0..g {
                    for m in 0..g {
                        let truth = if j == k && l == m { lam[l] * a.powi(h as i32) } else { 0.0 };
                        let scale = ((l.max(m) + 1) as f64).powf(alpha + 1.0) * (lam[l] * lam[m]).sqrt();
                        score = score.max((cov.get(j, k, l, m) - truth).abs() / scale);
                    }
                }
            }
        }
    }
    Ok(RepErrors { sigma, eigen, score })
}

/// `M(f_X)` of the fixture (every coordinate is an independent AR(1)).
pub fn fixture_stability(fixture: Fixture) -> Result<f64> {
    let a = fixture.coefficient();
    let lam = FIXTURE_EIGENVALUES;
    let c = DMatrix::from_diagonal_element(lam.len(), lam.len(), a);
    let noise = DMatrix::from_fn(lam.len(), lam.len(), |i, j| if i == j { lam[i] * (1.0 - a * a) } else { 0.0 });
    Ok(stability_measure_var1(&c, &noise, DEFAULT_THETA_GRID, None)?.value)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Replication `r` at grid position `i` draws from stream `i * reps + r`.
pub fn verify_concentration(config: &ConcentrationConfig) -> Result<RateReport> {
    let a = config.fixture.coefficient();
    if !(a.abs() < 1.0) {
        return Err(VfarError::Nonstationary { radius: a.abs() });
    }
    if config.p == 0 || config.reps == 0 || config.n_grid.len() < 2 {
        return Err(VfarError::Config("need p >= 1, reps >= 1 and at least two sample sizes".into()));
    }
    if config.n_grid.iter().any(|&n| n <= config.score_lags.iter().copied().max().unwrap_or(0) + 1) {
        return Err(VfarError::Config("every n must exceed the largest score lag".into()));
    }
    let stability = fixture_stability(config.fixture)?;
    let mut rows = Vec::with_capacity(config.n_grid.len());
    for (i, &n) in config.n_grid.iter().enumerate() {
        let reps: Vec<RepErrors> = (0..config.reps)
            .into_par_iter()
            .map(|r| {
                let mut stream = rng::stream(config.seed, (i * config.reps + r) as u64);
                let coeffs = simulate_fixture(config.fixture, config.p, n, &mut stream);
                replication_errors(&coeffs, config.fixture, &config.score_lags, config.alpha)
            })
            .collect::<Result<_>>()?;
        let col = |f: fn(&RepErrors) -> f64| median(&mut reps.iter().map(f).collect::<Vec<_>>());
        rows.push(RateRow {
            n,
            median_sigma: col(|e| e.sigma),
            median_eigen: col(|e| e.eigen),
            median_score: col(|e| e.score),
        });
    }
    let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let slope = |f: fn(&RateRow) -> f64| ols_slope(&log_n, &rows.iter().map(|r| f(r).ln()).collect::<Vec<_>>());
    Ok(RateReport {
        config: config.clone(),
        stability,
        slope_sigma: slope(|r| r.median_sigma),
        slope_eigen: slope(|r| r.median_eigen),
        slope_score: slope(|r| r.median_score),
        rows,
    })
}
