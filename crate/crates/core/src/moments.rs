//! Autocovariance estimators, score covariances, VAR(1) spectral densities
//! and the functional stability measure.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfarError};
use crate::linalg::{inv_sqrt_spd, spectral_radius, sym_eigen_desc, symmetrize};
use crate::serde_matrix;

pub const DEFAULT_THETA_GRID: usize = 1024;

/// Lag-`h` autocovariance in basis coordinates. Block `(j, k)` of `stacked`
/// is `C_jk`, so that `Sigma_jk(u, v) = b(u)^T C_jk b(v)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocovEstimate {
    pub h: usize,
    pub p: usize,
    pub g: usize,
    #[serde(with = "serde_matrix")]
    pub stacked: DMatrix<f64>,
}

impl AutocovEstimate {
    pub fn block(&self, j: usize, k: usize) -> DMatrix<f64> {
        self.stacked.view((j * self.g, k * self.g), (self.g, self.g)).into_owned()
    }

    /// Hilbert–Schmidt norm of the `(j, k)` kernel given the basis Gram `J`.
    pub fn hs_norm(&self, j: usize, k: usize, gram: &DMatrix<f64>) -> f64 {
        hs_norm(&self.block(j, k), gram, gram)
    }

    /// Largest block Hilbert–Schmidt norm.
    pub fn max_hs_norm(&self, gram: &DMatrix<f64>) -> f64 {
        let mut best = 0.0_f64;
        for j in 0..self.p {
            for k in 0..self.p {
                best = best.max(self.hs_norm(j, k, gram));
            }
        }
        best
    }

    /// `max_j int Sigma_jj(u, u) du`; meaningful at lag 0.
    pub fn lambda0(&self, gram: &DMatrix<f64>) -> f64 {
        (0..self.p)
            .map(|j| (gram * self.block(j, j)).trace())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `sqrt(int int (b_l(u)^T C b_r(v))^2 du dv)` for bases with Grams `gl`, `gr`.
pub fn hs_norm(c: &DMatrix<f64>, gl: &DMatrix<f64>, gr: &DMatrix<f64>) -> f64 {
    (c.transpose() * gl * c * gr).trace().max(0.0).sqrt()
}

fn hstack(coeffs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = coeffs.first().map_or(0, |m| m.nrows());
    if coeffs.iter().any(|m| m.nrows() != n) {
        return Err(VfarError::InvalidArgument("panel variables have different n".into()));
    }
    let total: usize = coeffs.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut col = 0;
    for m in coeffs {
        out.view_mut((0, col), (n, m.ncols())).copy_from(m);
        col += m.ncols();
    }
    Ok(out)
}

/// `(n-h)^{-1} sum_t X_t X_{t+h}^T` as a stacked matrix over all columns of
/// the per-variable matrices.
fn lagged_cross(coeffs: &[DMatrix<f64>], h: usize) -> Result<DMatrix<f64>> {
    let x = hstack(coeffs)?;
    let n = x.nrows();
    if h >= n {
        return Err(VfarError::InvalidArgument(format!("lag h={h} needs n > h, got n={n}")));
    }
    let m = n - h;
    let early = x.rows(0, m);
    let late = x.rows(h, m);
    Ok(early.transpose() * late / m as f64)
}

/// Empirical lag-`h` autocovariance from per-variable `n x G` coefficient
/// matrices. The panel is assumed centered.
pub fn autocov_empirical(coeffs: &[DMatrix<f64>], h: usize) -> Result<AutocovEstimate> {
    let g = coeffs.first().map_or(0, |m| m.ncols());
    if coeffs.iter().any(|m| m.ncols() != g) {
        return Err(VfarError::InvalidArgument("all variables must share one basis".into()));
    }
    let mut stacked = lagged_cross(coeffs, h)?;
    if h == 0 {
        stacked = symmetrize(&stacked);
    }
    Ok(AutocovEstimate { h, p: coeffs.len(), g, stacked })
}

/// Score covariances `sigma_jklm^(h)` stacked over `(j, l)` rows and
/// `(k, m)` columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreCov {
    pub h: usize,
    pub q: Vec<usize>,
    #[serde(with = "serde_matrix")]
    pub values: DMatrix<f64>,
}

impl ScoreCov {
    fn offset(&self, j: usize) -> usize {
        self.q[..j].iter().sum()
    }

    pub fn get(&self, j: usize, k: usize, l: usize, m: usize) -> f64 {
        self.values[(self.offset(j) + l, self.offset(k) + m)]
    }
}

pub fn score_autocov(scores: &[DMatrix<f64>], h: usize) -> Result<ScoreCov> {
    let mut values = lagged_cross(scores, h)?;
    if h == 0 {
        values = symmetrize(&values);
    }
    Ok(ScoreCov { h, q: scores.iter().map(|s| s.ncols()).collect(), values })
}

/// Solves `S = C S C^T + noise_cov` by doubling.
pub fn var1_stationary_cov(c: &DMatrix<f64>, noise_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(c, noise_cov)?;
    let radius = spectral_radius(c)?;
    if radius >= 1.0 {
        return Err(VfarError::Nonstationary { radius });
    }
    let mut s = noise_cov.clone();
    let mut a = c.clone();
    for _ in 0..200 {
        let inc = &a * &s * a.transpose();
        s += &inc;
        a = &a * &a;
        if inc.amax() <= 1e-12 * s.amax() {
            return Ok(symmetrize(&s));
        }
    }
    Err(VfarError::Numerical(format!(
        "Lyapunov doubling did not converge (spectral radius {radius})"
    )))
}

fn check_square(c: &DMatrix<f64>, noise_cov: &DMatrix<f64>) -> Result<()> {
    let d = c.nrows();
    if c.ncols() != d || noise_cov.shape() != (d, d) {
        return Err(VfarError::InvalidArgument(format!(
            "transition {:?} and noise covariance {:?} are not conformable square matrices",
            c.shape(),
            noise_cov.shape()
        )));
    }
    Ok(())
}

/// Spectral density of a stationary VAR(1) at frequency `theta`,
/// `(2 pi)^{-1} (I - C e^{i theta})^{-1} Sigma (I - C^T e^{-i theta})^{-1}`.
pub fn var1_spectral_density(
    c: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    theta: f64,
) -> Result<DMatrix<Complex<f64>>> {
    check_square(c, noise_cov)?;
    let radius = spectral_radius(c)?;
    if radius >= 1.0 {
        return Err(VfarError::Nonstationary { radius });
    }
    Ok(density_unchecked(c, noise_cov, theta))
}

fn density_unchecked(c: &DMatrix<f64>, noise_cov: &DMatrix<f64>, theta: f64) -> DMatrix<Complex<f64>> {
    let d = c.nrows();
    let z = Complex::from_polar(1.0, theta);
    let m = DMatrix::from_fn(d, d, |i, k| {
        let id = if i == k { Complex::new(1.0, 0.0) } else { Complex::new(0.0, 0.0) };
        id - z * c[(i, k)]
    });
    let inv = m.try_inverse().expect("I - C z is invertible when rho(C) < 1");
    let sigma = noise_cov.map(|v| Complex::new(v, 0.0));
    let f = &inv * sigma * inv.adjoint() / Complex::new(2.0 * PI, 0.0);
    (&f + f.adjoint()) / Complex::new(2.0, 0.0)
}

/// Uniform grid on `[-pi, pi]` including both endpoints.
pub fn theta_grid(size: usize) -> Vec<f64> {
    (0..size).map(|i| -PI + 2.0 * PI * i as f64 / (size - 1) as f64).collect()
}

/// Largest eigenvalue of a Hermitian matrix through its real symmetric
/// embedding `[[Re, -Im], [Im, Re]]`.
pub fn hermitian_lambda_max(h: &DMatrix<Complex<f64>>) -> f64 {
    let d = h.nrows();
    let emb = DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        let v = h[(r % d, c % d)];
        match (r < d, c < d) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    sym_eigen_desc(&emb).0[0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub value: f64,
    pub argmax_theta: f64,
    pub theta_grid_size: usize,
    pub lambda0: f64,
}

fn submatrix<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// `max_theta lambda_max(2 pi S0^{-1/2} f(theta) S0^{-1/2})` over a uniform
/// grid, optionally restricted to a coordinate subset.
pub fn stability_measure_var1(
    c: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    theta_grid_size: usize,
    subset: Option<&[usize]>,
) -> Result<StabilityReport> {
    let d = c.nrows();
    let all: Vec<usize> = (0..d).collect();
    let subset = subset.unwrap_or(&all);
    Ok(stability_over_subsets(c, noise_cov, theta_grid_size, &[subset.to_vec()])?.remove(0))
}

/// Stability reports for several coordinate subsets sharing one density
/// evaluation per frequency.
pub fn stability_over_subsets(
    c: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    theta_grid_size: usize,
    subsets: &[Vec<usize>],
) -> Result<Vec<StabilityReport>> {
    if theta_grid_size < 64 {
        return Err(VfarError::InvalidArgument(format!(
            "theta grid needs at least 64 points, got {theta_grid_size}"
        )));
    }
    let d = c.nrows();
    for s in subsets {
        if s.is_empty() || s.iter().any(|&i| i >= d) {
            return Err(VfarError::InvalidArgument(format!("subset {s:?} is not within 0..{d}")));
        }
    }
    let s0 = var1_stationary_cov(c, noise_cov)?;
    let whiten: Vec<DMatrix<Complex<f64>>> = subsets
        .iter()
        .map(|s| inv_sqrt_spd(&submatrix(&s0, s), "stationary covariance S0").map(|w| w.map(|v| Complex::new(v, 0.0))))
        .collect::<Result<_>>()?;
    let grid = theta_grid(theta_grid_size);
    let per_theta: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&theta| {
            let f = density_unchecked(c, noise_cov, theta);
            subsets
                .iter()
                .zip(&whiten)
                .map(|(s, w)| {
                    let k = w * submatrix(&f, s) * w * Complex::new(2.0 * PI, 0.0);
                    hermitian_lambda_max(&k)
                })
                .collect()
        })
        .collect();
    Ok(subsets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (mut best, mut arg) = (f64::NEG_INFINITY, grid[0]);
            for (t, row) in per_theta.iter().enumerate() {
                if row[i] > best {
                    best = row[i];
                    arg = grid[t];
                }
            }
            StabilityReport {
                value: best,
                argmax_theta: arg,
                theta_grid_size,
                lambda0: s.iter().map(|&j| s0[(j, j)]).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// `M_k`: the largest stability measure over coordinate subsets of size at
/// most `k`.
pub fn stability_measure_k(
    c: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    theta_grid_size: usize,
    k: usize,
) -> Result<StabilityReport> {
    let d = c.nrows();
    if k == 0 || k > d {
        return Err(VfarError::InvalidArgument(format!("k={k} must lie in 1..={d}")));
    }
    let mut subsets = Vec::new();
    for mask in 1u64..(1u64 << d) {
        if (mask.count_ones() as usize) <= k {
            subsets.push((0..d).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>());
        }
    }
    let reports = stability_over_subsets(c, noise_cov, theta_grid_size, &subsets)?;
    Ok(reports
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one subset"))
}

/// Operator norm of `A(u, v) = psi(u)^T C psi(v)` for orthonormal `psi`:
/// the largest singular value of `C`.
pub fn operator_norm_var1_kernel(c: &DMatrix<f64>) -> f64 {
    c.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub b: f64,
    pub operator_norm: f64,
    pub stability: f64,
}

/// Sweep of the two-dimensional example `C = [[a, b], [0, a]]` with unit
/// noise.
pub fn stability_sweep(a_values: &[f64], b_values: &[f64], theta_grid_size: usize) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(a_values.len() * b_values.len());
    for &a in a_values {
        for &b in b_values {
            let c = DMatrix::from_row_slice(2, 2, &[a, b, 0.0, a]);
            let m = stability_measure_var1(&c, &DMatrix::identity(2, 2), theta_grid_size, None)?;
            rows.push(SweepRow { a, b, operator_norm: operator_norm_var1_kernel(&c), stability: m.value });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    fn two_by_two(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, 0.0, a])
    }

    fn closed_form_s0(a: f64, b: f64) -> DMatrix<f64> {
        let o = 1.0 - a * a;
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 / o + (a * a + 1.0) * b * b / o.powi(3), a * b / (o * o), a * b / (o * o), 1.0 / o],
        )
    }

    #[test]
    fn autocov_lag_errors() {
        let one = vec![DMatrix::from_element(1, 3, 1.0)];
        assert!(autocov_empirical(&one, 1).is_err());
        let few = vec![DMatrix::from_element(4, 3, 1.0)];
        assert!(autocov_empirical(&few, 4).is_err());
        assert!(autocov_empirical(&few, 3).is_ok());
    }

    #[test]
    fn rank_one_panel() {
        let loadings = [1.0, -2.0, 0.5, 0.5];
        let coeffs = vec![DMatrix::from_fn(4, 3, |t, k| if k == 0 { loadings[t] } else { 0.0 })];
        let est = autocov_empirical(&coeffs, 0).unwrap();
        let second_moment = loadings.iter().map(|v| v * v).sum::<f64>() / 4.0;
        let mut expect = DMatrix::zeros(3, 3);
        expect[(0, 0)] = second_moment;
        assert!(close(&est.block(0, 0), &expect, 1e-15));
    }

    #[test]
    fn lag_zero_is_symmetric_psd() {
        let mut r = rng::stream(1, 0);
        let coeffs: Vec<DMatrix<f64>> =
            (0..3).map(|_| DMatrix::from_fn(30, 4, |_, _| r.sample(StandardNormal))).collect();
        let est = autocov_empirical(&coeffs, 0).unwrap();
        assert!(close(&est.block(0, 2), &est.block(2, 0).transpose(), 1e-15));
        let (vals, _) = sym_eigen_desc(&est.stacked);
        assert!(vals[vals.len() - 1] > -1e-10);
    }

    #[test]
    fn lag_one_concentrates_for_iid_coefficients() {
        let (n, p, g) = (2000, 5, 3);
        let lam = [1.0, 0.5, 0.25];
        let lambda0: f64 = lam.iter().sum();
        let bound = 3.0 * lambda0 * ((p as f64).ln() / n as f64).sqrt();
        let gram = DMatrix::identity(g, g);
        let hits = (0..200u64)
            .into_par_iter()
            .filter(|&rep| {
                let mut r = rng::stream(99, rep);
                let coeffs: Vec<DMatrix<f64>> = (0..p)
                    .map(|_| DMatrix::from_fn(n, g, |_, k| lam[k].sqrt() * r.sample::<f64, _>(StandardNormal)))
                    .collect();
                autocov_empirical(&coeffs, 1).unwrap().max_hs_norm(&gram) < bound
            })
            .count();
        assert!(hits >= 190, "{hits}/200 within bound");
    }

    #[test]
    fn score_cov_ar1_and_symmetry() {
        let n = 20_000;
        let a = 0.6;
        let mut r = rng::stream(4, 0);
        let mut x = DMatrix::zeros(n, 2);
        for t in 1..n {
            x[(t, 0)] = a * x[(t - 1, 0)] + r.sample::<f64, _>(StandardNormal);
            x[(t, 1)] = r.sample::<f64, _>(StandardNormal);
        }
        let lambda = 1.0 / (1.0 - a * a);
        let s1 = score_autocov(&[x.clone()], 1).unwrap();
        assert!((s1.get(0, 0, 0, 0) - a * lambda).abs() < 0.1 * lambda);
        let s0 = score_autocov(&[x.columns(0, 1).into_owned(), x.columns(1, 1).into_owned()], 0).unwrap();
        assert_eq!(s0.get(0, 1, 0, 0), s0.get(1, 0, 0, 0));
    }

    #[test]
    fn lyapunov_fixtures() {
        let zero = DMatrix::zeros(3, 3);
        let noise = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(close(&var1_stationary_cov(&zero, &noise).unwrap(), &noise, 0.0));
        let scalar = var1_stationary_cov(&DMatrix::from_element(1, 1, 0.5), &DMatrix::identity(1, 1)).unwrap();
        assert!((scalar[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        for &a in &[0.2, 0.5, 0.8] {
            for &b in &[0.0, 0.5, 1.0] {
                let s = var1_stationary_cov(&two_by_two(a, b), &DMatrix::identity(2, 2)).unwrap();
                let expect = closed_form_s0(a, b);
                assert!(close(&s, &expect, 1e-10 * expect.amax()), "a={a} b={b}");
            }
        }
        let err = var1_stationary_cov(&two_by_two(1.0, 0.0), &DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, VfarError::Nonstationary { .. }));
    }

    #[test]
    fn density_matches_truncated_series() {
        let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.4]);
        let noise = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let s0 = var1_stationary_cov(&c, &noise).unwrap();
        for &theta in &[-2.0, -0.3, 0.0, 1.1, PI] {
            let f = var1_spectral_density(&c, &noise, theta).unwrap();
            let s0c = s0.map(|v| Complex::new(v, 0.0));
            let mut series = s0c.clone();
            let mut ch = DMatrix::<f64>::identity(2, 2);
            for h in 1..400 {
                ch = &ch * &c;
                let fwd = (&ch * &s0).map(|v| Complex::new(v, 0.0)) * Complex::from_polar(1.0, h as f64 * theta);
                let back = (&s0 * ch.transpose()).map(|v| Complex::new(v, 0.0)) * Complex::from_polar(1.0, -(h as f64) * theta);
                series += fwd + back;
            }
            series /= Complex::new(2.0 * PI, 0.0);
            assert!((&f - &series).iter().all(|z| z.norm() < 1e-12), "theta={theta}");
            let mirrored = var1_spectral_density(&c, &noise, -theta).unwrap();
            assert!((&mirrored - f.map(|z| z.conj())).iter().all(|z| z.norm() < 1e-13));
            assert!((&f - f.adjoint()).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn white_noise_density_is_flat() {
        let noise = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        for &theta in &[-PI, 0.0, 0.7] {
            let f = var1_spectral_density(&DMatrix::zeros(2, 2), &noise, theta).unwrap();
            assert!(f.iter().zip(noise.iter()).all(|(z, v)| (z.re - v / (2.0 * PI)).abs() < 1e-15 && z.im == 0.0));
        }
    }

    #[test]
    fn diagonal_example_matches_scalar_ar1() {
        let a = 0.5;
        for &theta in &[-1.0, 0.2, 2.5] {
            let f = var1_spectral_density(&two_by_two(a, 0.0), &DMatrix::identity(2, 2), theta).unwrap();
            let expect = 1.0 / (2.0 * PI * (Complex::new(1.0, 0.0) - Complex::from_polar(a, -theta)).norm_sqr());
            assert!((f[(0, 0)].re - expect).abs() < 1e-14);
            assert!(f[(0, 1)].norm() < 1e-15);
        }
    }

    #[test]
    fn inversion_identity() {
        let c = two_by_two(0.8, 1.0);
        let noise = DMatrix::identity(2, 2);
        let s0 = var1_stationary_cov(&c, &noise).unwrap();
        let grid = theta_grid(DEFAULT_THETA_GRID);
        let step = grid[1] - grid[0];
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for (i, &theta) in grid.iter().enumerate() {
            let w = if i == 0 || i == grid.len() - 1 { 0.5 * step } else { step };
            acc += var1_spectral_density(&c, &noise, theta).unwrap().map(|z| z.re) * w;
        }
        assert!(close(&acc, &s0, 1e-6 * s0.amax()));
    }

    #[test]
    fn white_noise_stability_is_one() {
        let noise = DMatrix::from_row_slice(3, 3, &[2.0, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 1.5]);
        let r = stability_measure_var1(&DMatrix::zeros(3, 3), &noise, DEFAULT_THETA_GRID, None).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
        assert!((r.lambda0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ar1_stability_closed_form() {
        for &a in &[0.3, 0.7, -0.4] {
            let r = stability_measure_var1(&DMatrix::from_element(1, 1, a), &DMatrix::identity(1, 1), 1025, None)
                .unwrap();
            let a: f64 = a;
            let expect = (1.0 + a.abs()) / (1.0 - a.abs());
            assert!((r.value - expect).abs() < 1e-9 * expect, "a={a}");
        }
    }

    #[test]
    fn stability_monotone_on_example_grid() {
        let grid = DEFAULT_THETA_GRID;
        let m = |a: f64, b: f64| {
            stability_measure_var1(&two_by_two(a, b), &DMatrix::identity(2, 2), grid, None).unwrap().value
        };
        for &b in &[0.0, 0.5, 1.0] {
            let vals: Vec<f64> = (1..10).map(|i| m(i as f64 / 10.0, b)).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-8), "b={b}: {vals:?}");
        }
        for &a in &[0.2, 0.5, 0.8] {
            let vals: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&b| m(a, b)).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-8), "a={a}: {vals:?}");
            assert!((m(a, -0.5) - m(a, 0.5)).abs() < 1e-8);
        }
    }

    #[test]
    fn subset_measures_are_nested() {
        let c = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.1, -0.3, 0.4, 0.0, 0.2, 0.6]);
        let noise = DMatrix::identity(3, 3);
        let mk: Vec<f64> = (1..=3)
            .map(|k| stability_measure_k(&c, &noise, 256, k).unwrap().value)
            .collect();
        assert!(mk.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{mk:?}");
        let full = stability_measure_var1(&c, &noise, 256, None).unwrap().value;
        assert!((mk[2] - full).abs() < 1e-12);
        for sub in [[0usize, 1], [1, 2], [0, 2]] {
            let part = stability_measure_var1(&c, &noise, 256, Some(&sub)).unwrap().value;
            assert!(full >= part - 1e-8);
        }
        assert!(stability_measure_var1(&c, &noise, 32, None).is_err());
    }

    #[test]
    fn operator_norms() {
        assert!((operator_norm_var1_kernel(&DMatrix::identity(2, 2)) - 1.0).abs() < 1e-15);
        let (cs, sn) = (0.3f64.cos(), 0.3f64.sin());
        let u = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
        let (cs2, sn2) = (1.2f64.cos(), 1.2f64.sin());
        let v = DMatrix::from_row_slice(2, 2, &[cs2, sn2, -sn2, cs2]);
        let c = u * DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]) * v;
        assert!((operator_norm_var1_kernel(&c) - 2.0).abs() < 1e-14);
        let norms: Vec<f64> = [0.0, 0.5, 1.0].iter().map(|&b| operator_norm_var1_kernel(&two_by_two(0.5, b))).collect();
        assert!(norms.windows(2).all(|w| w[1] > w[0]));
    }
}
