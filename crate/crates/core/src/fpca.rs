//! Regularized functional principal components per variable.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, GramPair};
use crate::error::{Result, VfarError};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::{rng, serde_matrix};

/// Discretized curves: `values[j]` is the `n x T` matrix of variable `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePanel {
    #[serde(with = "serde_matrix::vec_of")]
    pub values: Vec<DMatrix<f64>>,
    pub grid: Vec<f64>,
    pub ids: Vec<String>,
}

impl CurvePanel {
    pub fn new(values: Vec<DMatrix<f64>>, grid: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        let panel = Self { values, grid, ids };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(VfarError::Data("grid needs at least two points".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(VfarError::Data("grid must be strictly increasing".into()));
        }
        if self.values.is_empty() || self.values.len() != self.ids.len() {
            return Err(VfarError::Data(format!(
                "{} variables but {} ids",
                self.values.len(),
                self.ids.len()
            )));
        }
        let n = self.values[0].nrows();
        for (j, m) in self.values.iter().enumerate() {
            if m.nrows() != n || m.ncols() != self.grid.len() {
                return Err(VfarError::Data(format!(
                    "variable {j} has shape {}x{}, expected {n}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.grid.len()
                )));
            }
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                return Err(VfarError::Data(format!(
                    "variable {j} has a missing or non-finite value at t={}, s={}",
                    pos % n,
                    pos / n
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Long-format CSV with columns `t,variable,grid_index,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "variable", "grid_index", "value"])?;
        for (j, m) in self.values.iter().enumerate() {
            for t in 0..m.nrows() {
                for s in 0..m.ncols() {
                    w.write_record([
                        t.to_string(),
                        self.ids[j].clone(),
                        s.to_string(),
                        format!("{:e}", m[(t, s)]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the long CSV format. Variables keep first-appearance order.
    /// `grid` defaults to equispaced points on `[0, 1]`.
    pub fn read_csv(path: &Path, grid: Option<Vec<f64>>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: usize,
            variable: String,
            grid_index: usize,
            value: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let mut ids: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
        let (mut n, mut t_len) = (0, 0);
        for rec in rdr.deserialize() {
            let row: Row = rec?;
            let j = *index.entry(row.variable.clone()).or_insert_with(|| {
                ids.push(row.variable.clone());
                ids.len() - 1
            });
            n = n.max(row.t + 1);
            t_len = t_len.max(row.grid_index + 1);
            cells.push((j, row.t, row.grid_index, row.value));
        }
        if cells.is_empty() {
            return Err(VfarError::Data(format!("{} has no rows", path.display())));
        }
        let mut values = vec![DMatrix::from_element(n, t_len, f64::NAN); ids.len()];
        for (j, t, s, v) in cells {
            values[j][(t, s)] = v;
        }
        let grid = match grid {
            Some(g) => g,
            None => (0..t_len).map(|s| s as f64 / (t_len - 1).max(1) as f64).collect(),
        };
        Self::new(values, grid, ids)
    }
}

/// Karhunen–Loève truncation for one variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KLModel {
    pub basis: BasisSpec,
    pub smoothing: f64,
    #[serde(with = "serde_matrix::vector")]
    pub mean_coeffs: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    /// `q x G`; row `l` holds the coefficients of the `l`-th eigenfunction.
    #[serde(with = "serde_matrix")]
    pub eigen_coeffs: DMatrix<f64>,
    /// `n x q` scores.
    #[serde(with = "serde_matrix")]
    pub scores: DMatrix<f64>,
    /// Set when fewer components than requested were numerically available.
    pub truncated: bool,
}

impl KLModel {
    pub fn q(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    /// `mu(u) + sum_l xi_tl phi_l(u)` at the given points.
    pub fn reconstruct(&self, t: usize, points: &[f64]) -> Result<DVector<f64>> {
        if t >= self.n() {
            return Err(VfarError::InvalidArgument(format!("t={t} out of range for n={}", self.n())));
        }
        let scores = self.scores.row(t).transpose();
        self.curve_from_scores(&scores, points)
    }

    pub fn curve_from_scores(&self, scores: &DVector<f64>, points: &[f64]) -> Result<DVector<f64>> {
        let coeffs = &self.mean_coeffs + self.eigen_coeffs.transpose() * scores;
        Ok(self.basis.evaluate(points)? * coeffs)
    }

    /// Eigenfunctions evaluated at the points, one column per component.
    pub fn eigenfunctions(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.basis.evaluate(points)? * self.eigen_coeffs.transpose())
    }

    /// Gram matrix of the estimated eigenfunctions, `Z J Z^T`. The identity
    /// when `smoothing` is zero.
    pub fn eigen_gram(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.eigen_coeffs * j * self.eigen_coeffs.transpose()))
    }
}

/// Basis quantities shared by every fit on one grid.
#[derive(Debug, Clone)]
pub struct FpcaContext {
    pub basis: BasisSpec,
    pub grid: Vec<f64>,
    pub gram: GramPair,
    /// Basis functions on the grid, `T x G`.
    pub design: DMatrix<f64>,
    /// Least-squares projector `G x T`.
    projector: DMatrix<f64>,
}

impl FpcaContext {
    pub fn new(basis: BasisSpec, grid: &[f64]) -> Result<Self> {
        let gram = basis.default_gram()?;
        let design = basis.evaluate(grid)?;
        let projector = design
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| VfarError::Numerical(format!("basis projection failed: {e}")))?;
        Ok(Self { basis, grid: grid.to_vec(), gram, design, projector })
    }

    /// Least-squares basis coefficients of each row, `n x G`.
    pub fn project(&self, curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if curves.ncols() != self.grid.len() {
            return Err(VfarError::InvalidArgument(format!(
                "curves have {} grid points, context has {}",
                curves.ncols(),
                self.grid.len()
            )));
        }
        Ok(curves * self.projector.transpose())
    }

    pub fn fit(&self, curves: &DMatrix<f64>, q: usize, eta: f64) -> Result<KLModel> {
        let delta = self.project(curves)?;
        self.fit_coeffs(&delta, q, eta)
    }

    /// FPCA from basis coefficients `delta` (`n x G`, uncentered).
    pub fn fit_coeffs(&self, delta: &DMatrix<f64>, q: usize, eta: f64) -> Result<KLModel> {
        let n = delta.nrows();
        let g = self.basis.dimension;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(VfarError::InvalidArgument(format!("smoothing must be >= 0, got {eta}")));
        }
        if q == 0 || q > g.min(n) {
            return Err(VfarError::InvalidArgument(format!(
                "q={q} must lie in 1..={} (min of G={g} and n={n})",
                g.min(n)
            )));
        }
        let mean = delta.row_mean().transpose();
        let mut centered = delta.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let j = &self.gram.j;
        let u = symmetrize(&(j * centered.transpose() * &centered * j / n as f64));

        let penalized = j + &self.gram.q * eta;
        let (lam, p1) = sym_eigen_desc(&penalized);
        let max = lam[0].abs();
        if !(lam[g - 1] > 1e-12 * max) {
            return Err(VfarError::Singular(format!(
                "J + eta Q is rank deficient (smallest eigenvalue {:e})",
                lam[g - 1]
            )));
        }
        let s1 = DMatrix::from_diagonal(&lam.map(|v| 1.0 / v.sqrt()));
        let back = &p1 * &s1;
        let inner = symmetrize(&(back.transpose() * &u * &back));
        let (rho, x) = sym_eigen_desc(&inner);

        let top = rho[0].max(0.0);
        let available = rho.iter().take_while(|&&r| top > 0.0 && r > 1e-10 * top).count();
        let kept = q.min(available.max(1));
        let truncated = kept < q;

        let mut comps: Vec<(f64, DVector<f64>)> = (0..kept)
            .map(|l| {
                let mut zeta = &back * x.column(l);
                let norm = (zeta.transpose() * j * &zeta)[(0, 0)].sqrt();
                zeta /= norm;
                let lambda = (zeta.transpose() * &u * &zeta)[(0, 0)];
                let big = zeta.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
                if big < 0.0 {
                    zeta = -zeta;
                }
                (lambda.max(0.0), zeta)
            })
            .collect();
        comps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

        let mut eigen_coeffs = DMatrix::zeros(kept, g);
        for (l, (_, z)) in comps.iter().enumerate() {
            eigen_coeffs.set_row(l, &z.transpose());
        }
        let scores = &centered * j * eigen_coeffs.transpose();
        Ok(KLModel {
            basis: self.basis.clone(),
            smoothing: eta,
            mean_coeffs: mean,
            eigenvalues: comps.iter().map(|c| c.0).collect(),
            eigen_coeffs,
            scores,
            truncated,
        })
    }

    /// Scores of new coefficient rows under a fitted model.
    pub fn scores_for(&self, model: &KLModel, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = delta.clone();
        for mut row in centered.row_iter_mut() {
            row -= model.mean_coeffs.transpose();
        }
        centered * &self.gram.j * model.eigen_coeffs.transpose()
    }
}

/// Convenience wrapper building a context for a single fit.
pub fn fit_regularized_fpca(
    curves: &DMatrix<f64>,
    grid: &[f64],
    basis: &BasisSpec,
    q: usize,
    eta: f64,
) -> Result<KLModel> {
    FpcaContext::new(basis.clone(), grid)?.fit(curves, q, eta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvEntry {
    pub q: usize,
    pub eta: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub q: usize,
    pub eta: f64,
    pub table: Vec<CvEntry>,
}

/// Random `k`-fold split of `0..n`, drawn from `seed`.
pub fn folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(VfarError::Config(format!("need at least 2 folds, got {k}")));
    }
    if n / k < 2 {
        return Err(VfarError::Config(format!("{k} folds over n={n} leave a fold with fewer than 2 samples")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, 0));
    let mut out = vec![Vec::new(); k];
    for (i, t) in perm.into_iter().enumerate() {
        out[i % k].push(t);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// K-fold cross-validation over `(q, eta)`, scoring held-out reconstructions
/// against the raw observed values.
pub fn cross_validate(
    ctx: &FpcaContext,
    curves: &DMatrix<f64>,
    q_grid: &[usize],
    eta_grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    if q_grid.is_empty() || eta_grid.is_empty() {
        return Err(VfarError::Config("CV grids must be nonempty".into()));
    }
    let n = curves.nrows();
    let t_len = curves.ncols();
    let parts = folds(n, k, seed)?;
    let delta = ctx.project(curves)?;
    let mut errors = vec![0.0; q_grid.len() * eta_grid.len()];
    for held in &parts {
        let mut is_held = vec![false; n];
        for &t in held {
            is_held[t] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&t| !is_held[t]).collect();
        let delta_train = delta.select_rows(&train);
        let delta_held = delta.select_rows(held);
        let raw_held = curves.select_rows(held);
        for (ei, &eta) in eta_grid.iter().enumerate() {
            for (qi, &q) in q_grid.iter().enumerate() {
                let model = ctx.fit_coeffs(&delta_train, q, eta)?;
                let xi = ctx.scores_for(&model, &delta_held);
                let mut coeffs = xi * &model.eigen_coeffs;
                for mut row in coeffs.row_iter_mut() {
                    row += model.mean_coeffs.transpose();
                }
                let fitted = coeffs * ctx.design.transpose();
                errors[ei * q_grid.len() + qi] += (&raw_held - fitted).norm_squared();
            }
        }
    }
    let scale = (k * t_len) as f64;
    let mut table = Vec::with_capacity(errors.len());
    for (ei, &eta) in eta_grid.iter().enumerate() {
        for (qi, &q) in q_grid.iter().enumerate() {
            table.push(CvEntry { q, eta, error: errors[ei * q_grid.len() + qi] / scale });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            a.error
                .partial_cmp(&b.error)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.q.cmp(&b.q))
                .then(a.eta.partial_cmp(&b.eta).unwrap_or(std::cmp::Ordering::Equal))
        })
        .expect("nonempty table");
    Ok(CvResult { q: best.q, eta: best.eta, table })
}
