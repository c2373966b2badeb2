//! Standardized group lasso for each VFAR row, solved by block FISTA with
//! gradient restart; information criteria and kernel recovery.
//!
//! Row `j` solves, over the standardized coefficients `X`,
//!
//! ```text
//! 1/2 ||Y - B X||_F^2 + gamma * sum_g ||X_g||_F
//! ```
//!
//! where `Y` holds the responses, `B = [V_k^(h) D_k^(h)^{-1}]` the
//! standardized lagged scores and `Psi_jk^(h) = D_k^(h)^{-1} X_g`. Since
//! `B_g^T B_g = (n - L) I`, the penalty `||V Psi||_F` of the unstandardized
//! criterion equals `sqrt(n - L) ||X_g||_F`; `gamma` is reported in the
//! standardized units used here and `gamma_paper = gamma / sqrt(n - L)`.
//! The degrees-of-freedom shrinkage term uses the standardized `gamma`.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfarError};
use crate::fpca::KLModel;
use crate::linalg::{power_lambda_max, psd_sqrt, sym_eigen_desc};
use crate::moments::hs_norm;
use crate::serde_matrix;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_PATH_LEN: usize = 50;
pub const DEFAULT_PATH_RATIO: f64 = 1e-3;
pub const STEP_SAFETY: f64 = 0.9;

/// Lagged score matrices and standardizers shared by all row problems.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub lag: usize,
    pub n: usize,
    pub q: Vec<usize>,
    /// `V_j^(0)`: rows are scores at times `L..n`.
    pub responses: Vec<DMatrix<f64>>,
    /// `V_k^(h)` indexed by group `g = (h - 1) p + k`.
    pub predictors: Vec<DMatrix<f64>>,
    pub standardizers: Vec<DMatrix<f64>>,
    pub inv_standardizers: Vec<DMatrix<f64>>,
    /// Standardized design `[V_g D_g^{-1}]`.
    pub design: DMatrix<f64>,
    pub groups: Vec<Range<usize>>,
    pub gram: DMatrix<f64>,
    pub lambda_max: f64,
}

impl DesignSet {
    pub fn p(&self) -> usize {
        self.q.len()
    }

    pub fn rows(&self) -> usize {
        self.n - self.lag
    }

    pub fn group(&self, h: usize, k: usize) -> usize {
        h * self.p() + k
    }

    /// Step size `0.9 / lambda_max(B^T B)`.
    pub fn step(&self) -> f64 {
        STEP_SAFETY / self.lambda_max
    }

    pub fn problem(&self, j: usize) -> GramProblem<'_> {
        let y = &self.responses[j];
        GramProblem {
            gram: &self.gram,
            bty: self.design.transpose() * y,
            yty: y.norm_squared(),
            groups: &self.groups,
        }
    }

    /// Smallest standardized `gamma` at which the zero solution is optimal
    /// for row `j`, padded by a relative `1e-10` so the first proximal step
    /// from zero annihilates every group despite rounding.
    pub fn gamma_max(&self, j: usize) -> f64 {
        let bty = self.design.transpose() * &self.responses[j];
        let g = self
            .groups
            .iter()
            .map(|g| bty.rows(g.start, g.len()).norm())
            .fold(0.0, f64::max);
        g * (1.0 + 1e-10)
    }

    pub fn gamma_to_paper(&self, gamma: f64) -> f64 {
        gamma / (self.rows() as f64).sqrt()
    }

    pub fn gamma_from_paper(&self, gamma_paper: f64) -> f64 {
        gamma_paper * (self.rows() as f64).sqrt()
    }
}

/// Builds the lagged design from per-variable `n x q_k` score matrices.
pub fn build_design(scores: &[DMatrix<f64>], lag: usize) -> Result<DesignSet> {
    if scores.is_empty() || lag == 0 {
        return Err(VfarError::InvalidArgument("need at least one variable and lag >= 1".into()));
    }
    let n = scores[0].nrows();
    if scores.iter().any(|s| s.nrows() != n) {
        return Err(VfarError::InvalidArgument("score matrices must share n".into()));
    }
    if n <= lag {
        return Err(VfarError::InvalidArgument(format!("n={n} must exceed the lag order {lag}")));
    }
    let p = scores.len();
    let rows = n - lag;
    let q: Vec<usize> = scores.iter().map(|s| s.ncols()).collect();
    let responses = scores.iter().map(|s| s.rows(lag, rows).into_owned()).collect();
    let mut predictors = Vec::with_capacity(lag * p);
    let mut standardizers = Vec::with_capacity(lag * p);
    let mut inv_standardizers = Vec::with_capacity(lag * p);
    let mut groups = Vec::with_capacity(lag * p);
    let mut offset = 0;
    for h in 1..=lag {
        for (k, s) in scores.iter().enumerate() {
            let v = s.rows(lag - h, rows).into_owned();
            let cov = v.transpose() * &v / rows as f64;
            let d = psd_sqrt(&cov)?;
            let (vals, vecs) = sym_eigen_desc(&d);
            let top = vals[0].max(0.0);
            let low = vals[vals.len() - 1];
            if !(low > 1e-10 * top) || top == 0.0 {
                return Err(VfarError::Singular(format!(
                    "standardizer of variable {k} at lag {h} is singular (smallest singular value {low:e}); use a smaller q for this variable"
                )));
            }
            let inv = &vecs * DMatrix::from_diagonal(&vals.map(|x| 1.0 / x)) * vecs.transpose();
            groups.push(offset..offset + q[k]);
            offset += q[k];
            predictors.push(v);
            standardizers.push(d);
            inv_standardizers.push(inv);
        }
    }
    let mut design = DMatrix::zeros(rows, offset);
    for (g, range) in groups.iter().enumerate() {
        design
            .view_mut((0, range.start), (rows, range.len()))
            .copy_from(&(&predictors[g] * &inv_standardizers[g]));
    }
    let gram = design.transpose() * &design;
    let gram = (&gram + gram.transpose()) * 0.5;
    let lambda_max = power_lambda_max(&gram, 1e-6, 10_000);
    Ok(DesignSet { lag, n, q, responses, predictors, standardizers, inv_standardizers, design, groups, gram, lambda_max })
}

pub fn build_design_from_models(models: &[KLModel], lag: usize) -> Result<DesignSet> {
    let scores: Vec<DMatrix<f64>> = models.iter().map(|m| m.scores.clone()).collect();
    build_design(&scores, lag)
}

/// Largest off-diagonal entry of the full-sample score Gram
/// `n^{-1} V^T V` of one variable.
pub fn score_gram_offdiag(scores: &DMatrix<f64>) -> f64 {
    let n = scores.nrows() as f64;
    let gram = scores.transpose() * scores / n;
    let mut worst = 0.0_f64;
    for i in 0..gram.nrows() {
        for k in 0..gram.ncols() {
            if i != k {
                worst = worst.max(gram[(i, k)].abs());
            }
        }
    }
    worst
}

/// `Z_g -> (1 - tau / ||Z_g||_F)_+ Z_g` for every row block `g`.
pub fn group_soft_threshold(z: &DMatrix<f64>, groups: &[Range<usize>], tau: f64) -> DMatrix<f64> {
    let mut out = z.clone();
    for g in groups {
        let mut block = out.rows_mut(g.start, g.len());
        let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { (1.0 - tau / norm).max(0.0) } else { 0.0 };
        block *= scale;
    }
    out
}

/// The smooth part in Gram form: `f(X) = 1/2 (y'y - 2 tr(X' B'Y) + tr(X' G X))`.
#[derive(Debug, Clone)]
pub struct GramProblem<'a> {
    pub gram: &'a DMatrix<f64>,
    pub bty: DMatrix<f64>,
    pub yty: f64,
    pub groups: &'a [Range<usize>],
}

impl GramProblem<'_> {
    pub fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram * x - &self.bty
    }

    pub fn smooth(&self, x: &DMatrix<f64>) -> f64 {
        let gx = self.gram * x;
        0.5 * (self.yty - 2.0 * x.dot(&self.bty) + x.dot(&gx))
    }

    pub fn penalty(&self, x: &DMatrix<f64>) -> f64 {
        self.groups.iter().map(|g| x.rows(g.start, g.len()).norm()).sum()
    }

    pub fn objective(&self, x: &DMatrix<f64>, gamma: f64) -> f64 {
        self.smooth(x) + gamma * self.penalty(x)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FistaOptions {
    pub step: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self { step: None, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutput {
    /// The last proximal point `X~`, which carries exact group zeros.
    pub x: DMatrix<f64>,
    /// `g(X~^(m))`, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Iterations (1-based, matching trace positions) that triggered a restart.
    pub restart_at: Vec<usize>,
    pub converged: bool,
}

/// Block FISTA with gradient restart on a Gram-form problem.
pub fn block_fista_gram(
    problem: &GramProblem<'_>,
    gamma: f64,
    step: f64,
    init: Option<&DMatrix<f64>>,
    opts: &FistaOptions,
) -> Result<FistaOutput> {
    if !(gamma >= 0.0) {
        return Err(VfarError::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(VfarError::InvalidArgument(format!("step size must be positive, got {step}")));
    }
    let (r, qj) = problem.bty.shape();
    let mut x = match init {
        Some(x0) if x0.shape() == (r, qj) => x0.clone(),
        Some(x0) => {
            return Err(VfarError::InvalidArgument(format!(
                "warm start has shape {:?}, expected {:?}",
                x0.shape(),
                (r, qj)
            )))
        }
        None => DMatrix::zeros(r, qj),
    };
    let mut x_tilde = x.clone();
    let mut theta = 1.0_f64;
    let mut trace = vec![problem.objective(&x_tilde, gamma)];
    let mut restart_at = Vec::new();
    let mut after_restart = false;
    for m in 0..opts.max_iter {
        // (3.a)
        let z = &x - problem.gradient(&x) * step;
        // (3.b)
        let next_tilde = group_soft_threshold(&z, problem.groups, gamma * step);
        let obj = problem.objective(&next_tilde, gamma);
        if !obj.is_finite() {
            return Err(VfarError::Divergence { iteration: m + 1, objective: obj });
        }
        // (3.c)
        let mut theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        // (3.d)
        let diff = &next_tilde - &x_tilde;
        let mut x_next = &next_tilde + &diff * ((theta - 1.0) / theta_next);
        // (3.e)
        let restart = (&x - &next_tilde).dot(&diff) > 0.0;
        if restart {
            x_next = x.clone();
            theta_next = 1.0;
            restart_at.push(m + 1);
        }
        let prev = *trace.last().expect("trace starts nonempty");
        trace.push(obj);
        x_tilde = next_tilde;
        x = x_next;
        theta = theta_next;
        // a restarting step overshot, and the step after it repeats the same
        // proximal point; neither change says anything about convergence
        if !restart && !after_restart && (prev - obj).abs() <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            return Ok(FistaOutput { x: x_tilde, objective_trace: trace, iterations: m + 1, restart_at, converged: true });
        }
        after_restart = restart;
    }
    Ok(FistaOutput { x: x_tilde, objective_trace: trace, iterations: opts.max_iter, restart_at, converged: false })
}

/// Block FISTA on `1/2 ||Y - B X||_F^2 + gamma sum_g ||X_g||_F`. The step
/// defaults to `0.9 / lambda_max(B^T B)`.
pub fn block_fista(
    y: &DMatrix<f64>,
    design: &DMatrix<f64>,
    groups: &[Range<usize>],
    gamma: f64,
    opts: &FistaOptions,
) -> Result<FistaOutput> {
    if design.nrows() != y.nrows() || groups.last().map_or(0, |g| g.end) != design.ncols() {
        return Err(VfarError::InvalidArgument("design, response and groups are not conformable".into()));
    }
    let gram = design.transpose() * design;
    let gram = (&gram + gram.transpose()) * 0.5;
    let problem = GramProblem { gram: &gram, bty: design.transpose() * y, yty: y.norm_squared(), groups };
    let step = match opts.step {
        Some(c) => c,
        None => STEP_SAFETY / power_lambda_max(&gram, 1e-6, 10_000).max(f64::MIN_POSITIVE),
    };
    block_fista_gram(&problem, gamma, step, None, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub row: usize,
    /// Standardized-units regularization.
    pub gamma: f64,
    /// The same regularization on the unstandardized criterion scale.
    pub gamma_paper: f64,
    /// `Psi_jk^(h)` for group `g = (h - 1) p + k`, each `q_k x q_j`.
    #[serde(with = "serde_matrix::vec_of")]
    pub psi_blocks: Vec<DMatrix<f64>>,
    #[serde(with = "serde_matrix")]
    pub standardized: DMatrix<f64>,
    pub active: Vec<bool>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub rss: f64,
    pub df: f64,
    pub aic: f64,
    pub bic: f64,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("nonempty trace")
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Fits row `j` at standardized `gamma`, optionally warm-started from
/// standardized coefficients.
pub fn fit_row(
    j: usize,
    design: &DesignSet,
    gamma: f64,
    init: Option<&DMatrix<f64>>,
    opts: &FistaOptions,
) -> Result<FitResult> {
    if j >= design.p() {
        return Err(VfarError::InvalidArgument(format!("row {j} out of range for p={}", design.p())));
    }
    let problem = design.problem(j);
    let step = opts.step.unwrap_or_else(|| design.step());
    let out = block_fista_gram(&problem, gamma, step, init, opts)?;
    Ok(finish_fit(j, design, gamma, out))
}

fn finish_fit(j: usize, design: &DesignSet, gamma: f64, out: FistaOutput) -> FitResult {
    let x = out.x;
    let mut psi_blocks = Vec::with_capacity(design.groups.len());
    let mut active = Vec::with_capacity(design.groups.len());
    let mut contrib_sq = Vec::with_capacity(design.groups.len());
    for (g, range) in design.groups.iter().enumerate() {
        let block = x.rows(range.start, range.len());
        let nonzero = block.iter().any(|&v| v != 0.0);
        let psi = &design.inv_standardizers[g] * block;
        contrib_sq.push((&design.predictors[g] * &psi).norm_squared());
        psi_blocks.push(psi);
        active.push(nonzero);
    }
    let resid = &design.responses[j] - &design.design * &x;
    let rss = resid.norm_squared();
    let gamma_paper = design.gamma_to_paper(gamma);
    let qk: Vec<usize> = design.groups.iter().map(|g| g.len()).collect();
    let df = df_formula(&active, &contrib_sq, design.q[j], &qk, gamma);
    let n = design.n as f64;
    FitResult {
        row: j,
        gamma,
        gamma_paper,
        psi_blocks,
        standardized: x,
        active,
        objective_trace: out.objective_trace,
        iterations: out.iterations,
        restarts: out.restart_at.len(),
        converged: out.converged,
        rss,
        df,
        aic: information_criterion(rss, df, design.n, 2.0),
        bic: information_criterion(rss, df, design.n, n.ln()),
    }
}

/// Effective degrees of freedom
/// `sum_g [1{g active} + (q_j q_g - 1) c_g / (c_g + gamma)]` where `c_g` is
/// the squared norm of the group's fitted contribution.
pub fn df_formula(active: &[bool], contrib_sq: &[f64], qj: usize, qk: &[usize], gamma: f64) -> f64 {
    active
        .iter()
        .zip(contrib_sq)
        .zip(qk)
        .filter(|((a, _), _)| **a)
        .map(|((_, &c), &q)| {
            let ratio = if c + gamma > 0.0 { c / (c + gamma) } else { 0.0 };
            1.0 + ((qj * q) as f64 - 1.0) * ratio
        })
        .sum()
}

/// Degrees of freedom of a fit, recomputed from its blocks, at the
/// standardized `gamma` the solver used.
pub fn degrees_of_freedom(design: &DesignSet, fit: &FitResult, gamma: f64) -> f64 {
    let contrib: Vec<f64> = fit
        .psi_blocks
        .iter()
        .enumerate()
        .map(|(g, psi)| (&design.predictors[g] * psi).norm_squared())
        .collect();
    let qk: Vec<usize> = design.groups.iter().map(|g| g.len()).collect();
    df_formula(&fit.active, &contrib, design.q[fit.row], &qk, gamma)
}

/// `n log(max(rss, 1e-300)) + kappa df`.
pub fn information_criterion(rss: f64, df: f64, n: usize, kappa: f64) -> f64 {
    n as f64 * rss.max(1e-300).ln() + kappa * df
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn value(&self, fit: &FitResult) -> f64 {
        match self {
            Criterion::Aic => fit.aic,
            Criterion::Bic => fit.bic,
        }
    }
}

/// Index of the smallest criterion value; ties go to the larger `gamma`
/// (earlier on a descending path).
pub fn select_index(path: &[FitResult], criterion: Criterion) -> usize {
    let mut best = 0;
    for (i, f) in path.iter().enumerate() {
        if criterion.value(f) < criterion.value(&path[best]) {
            best = i;
        }
    }
    best
}

/// Descending log-spaced grid from `gamma_max` to `ratio * gamma_max`.
pub fn default_gamma_grid(gamma_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![gamma_max];
    }
    (0..len)
        .map(|i| gamma_max * ratio.powf(i as f64 / (len - 1) as f64))
        .collect()
}

/// Fits row `j` along a descending grid, optionally warm-starting each
/// point from the previous solution.
pub fn regularization_path(
    design: &DesignSet,
    j: usize,
    gamma_grid: &[f64],
    warm_start: bool,
    opts: &FistaOptions,
) -> Result<Vec<FitResult>> {
    if gamma_grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(VfarError::InvalidArgument("gamma grid must be descending".into()));
    }
    let mut out: Vec<FitResult> = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let init = if warm_start { out.last().map(|f| &f.standardized) } else { None };
        out.push(fit_row(j, design, gamma, init, opts)?);
    }
    Ok(out)
}

/// Per-row paths on the fractional grid `gamma_max_j * ratio^(i / (len-1))`,
/// rows in parallel. `paths[j][i]` is row `j` at grid index `i`.
pub fn all_row_paths(design: &DesignSet, len: usize, ratio: f64, opts: &FistaOptions) -> Result<Vec<Vec<FitResult>>> {
    (0..design.p())
        .into_par_iter()
        .map(|j| {
            let grid = default_gamma_grid(design.gamma_max(j), len, ratio);
            regularization_path(design, j, &grid, true, opts)
        })
        .collect()
}

/// KKT residuals of a standardized solution: the worst zero-block ratio
/// `||grad_g|| / gamma` and the worst active-block residual
/// `||grad_g + gamma X_g / ||X_g|| ||`.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub zero_ratio: f64,
    pub active_residual: f64,
}

impl KktReport {
    pub fn passes(&self, gamma: f64) -> bool {
        self.zero_ratio <= 1.0 + 1e-4 && self.active_residual <= 1e-4 * (1.0 + gamma)
    }
}

pub fn kkt_report(problem: &GramProblem<'_>, x: &DMatrix<f64>, gamma: f64) -> KktReport {
    let grad = problem.gradient(x);
    let mut zero_ratio = 0.0_f64;
    let mut active_residual = 0.0_f64;
    for g in problem.groups {
        let xg = x.rows(g.start, g.len());
        let gg = grad.rows(g.start, g.len());
        let norm = xg.norm();
        if norm == 0.0 {
            let ratio = if gamma > 0.0 { gg.norm() / gamma } else if gg.norm() == 0.0 { 0.0 } else { f64::INFINITY };
            zero_ratio = zero_ratio.max(ratio);
        } else {
            active_residual = active_residual.max((gg + xg * (gamma / norm)).norm());
        }
    }
    KktReport { zero_ratio, active_residual }
}

/// Estimated transition kernels
/// `A_jk^(h)(u, v) = phi_k(v)^T Psi_jk^(h) phi_j(u)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub lag: usize,
    pub p: usize,
    /// `psi[h][j * p + k]` is `q_k x q_j`.
    pub psi: Vec<Vec<DMatrixSer>>,
    pub models: Vec<KLModel>,
    /// `hs_norms[h][j][k]`.
    pub hs_norms: Vec<Vec<Vec<f64>>>,
}

/// Serde wrapper so nested block arrays serialize as row arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DMatrixSer(#[serde(with = "serde_matrix")] pub DMatrix<f64>);

impl KernelEstimate {
    pub fn psi(&self, h: usize, j: usize, k: usize) -> &DMatrix<f64> {
        &self.psi[h][j * self.p + k].0
    }

    /// Kernel values on `u_points x v_points`.
    pub fn kernel(&self, h: usize, j: usize, k: usize, u_points: &[f64], v_points: &[f64]) -> Result<DMatrix<f64>> {
        let phi_j = self.models[j].eigenfunctions(u_points)?;
        let phi_k = self.models[k].eigenfunctions(v_points)?;
        Ok(phi_j * self.psi(h, j, k).transpose() * phi_k.transpose())
    }

    /// Largest HS norm across lags for each `(j, k)`.
    pub fn edge_weights(&self) -> Vec<Vec<f64>> {
        (0..self.p)
            .map(|j| {
                (0..self.p)
                    .map(|k| (0..self.lag).map(|h| self.hs_norms[h][j][k]).fold(0.0, f64::max))
                    .collect()
            })
            .collect()
    }

    /// `support[j][k]`: some lag block is not exactly zero.
    pub fn support(&self) -> Vec<Vec<bool>> {
        (0..self.p)
            .map(|j| {
                (0..self.p)
                    .map(|k| (0..self.lag).any(|h| self.psi(h, j, k).iter().any(|&v| v != 0.0)))
                    .collect()
            })
            .collect()
    }
}

/// Collects one fit per row into kernel estimates with exact HS norms
/// computed through the eigenfunction Gram matrices.
pub fn recover_kernels(fits: &[FitResult], models: &[KLModel]) -> Result<KernelEstimate> {
    let p = models.len();
    if fits.len() != p {
        return Err(VfarError::InvalidArgument(format!("{} fits for {p} variables", fits.len())));
    }
    let groups = fits[0].psi_blocks.len();
    if groups % p != 0 || fits.iter().any(|f| f.psi_blocks.len() != groups) {
        return Err(VfarError::InvalidArgument("fits disagree on the number of blocks".into()));
    }
    let lag = groups / p;
    let grams: Vec<DMatrix<f64>> = models
        .iter()
        .map(|m| {
            let g = m.basis.default_gram()?;
            Ok(m.eigen_gram(&g.j))
        })
        .collect::<Result<_>>()?;
    let mut by_row = fits.to_vec();
    by_row.sort_by_key(|f| f.row);
    if by_row.iter().enumerate().any(|(j, f)| f.row != j) {
        return Err(VfarError::InvalidArgument("need exactly one fit per row".into()));
    }
    let mut psi = vec![Vec::with_capacity(p * p); lag];
    let mut hs_norms = vec![vec![vec![0.0; p]; p]; lag];
    for h in 0..lag {
        for (j, fit) in by_row.iter().enumerate() {
            for k in 0..p {
                let block = fit.psi_blocks[h * p + k].clone();
                if block.shape() != (models[k].q(), models[j].q()) {
                    return Err(VfarError::InvalidArgument(format!(
                        "block ({j},{k}) at lag {} has shape {:?}",
                        h + 1,
                        block.shape()
                    )));
                }
                hs_norms[h][j][k] = hs_norm(&block, &grams[k], &grams[j]);
                psi[h].push(DMatrixSer(block));
            }
        }
    }
    Ok(KernelEstimate { lag, p, psi, models: models.to_vec(), hs_norms })
}
