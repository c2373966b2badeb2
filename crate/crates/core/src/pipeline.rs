//! The three-step estimation procedure end to end: per-variable FPCA with
//! cross-validation, penalized paths for every row, and selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Result, VfarError};
use crate::fpca::{cross_validate, CurvePanel, CvResult, FpcaContext, KLModel};
use crate::network::{relative_error, roc_and_auroc, DEFAULT_ERROR_INTERVALS, DEFAULT_ERROR_NODES};
use crate::solver::{
    all_row_paths, build_design_from_models, fit_row, recover_kernels, select_index, Criterion, DesignSet,
    FistaOptions, FitResult, KernelEstimate, DEFAULT_PATH_LEN, DEFAULT_PATH_RATIO,
};
use crate::vfar::{self, VFARModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaSettings {
    pub basis: BasisSpec,
    pub q_grid: Vec<usize>,
    pub eta_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for FpcaSettings {
    fn default() -> Self {
        Self {
            basis: BasisSpec::bspline(12).expect("valid basis"),
            q_grid: (1..=5).collect(),
            eta_grid: vec![0.0, 1e-7, 1e-6, 1e-5],
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableFpca {
    pub cv: CvResult,
    pub model: KLModel,
}

/// Cross-validated FPCA for every variable, in parallel. Variable `j` uses
/// fold seed `seed + j`.
pub fn fpca_panel(panel: &CurvePanel, settings: &FpcaSettings) -> Result<Vec<VariableFpca>> {
    let ctx = FpcaContext::new(settings.basis.clone(), &panel.grid)?;
    panel
        .values
        .par_iter()
        .enumerate()
        .map(|(j, curves)| {
            let seed = settings.seed.wrapping_add(j as u64);
            let cv = cross_validate(&ctx, curves, &settings.q_grid, &settings.eta_grid, settings.folds, seed)?;
            let model = ctx.fit(curves, cv.q, cv.eta)?;
            Ok(VariableFpca { cv, model })
        })
        .collect()
}

/// Refits every variable with `q` components at its cross-validated
/// smoothing level.
pub fn refit_fixed_q(panel: &CurvePanel, basis: &BasisSpec, fitted: &[VariableFpca], q: usize) -> Result<Vec<KLModel>> {
    let ctx = FpcaContext::new(basis.clone(), &panel.grid)?;
    panel
        .values
        .par_iter()
        .zip(fitted)
        .map(|(curves, f)| ctx.fit(curves, q, f.cv.eta))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathSettings {
    pub lag: usize,
    pub len: usize,
    pub ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PathSettings {
    fn default() -> Self {
        let opts = FistaOptions::default();
        Self { lag: 1, len: DEFAULT_PATH_LEN, ratio: DEFAULT_PATH_RATIO, tol: opts.tol, max_iter: opts.max_iter }
    }
}

impl PathSettings {
    pub fn fista(&self) -> FistaOptions {
        FistaOptions { step: None, tol: self.tol, max_iter: self.max_iter }
    }
}

/// Row paths sharing the fractional grid index, so `paths[j][i]` for all
/// `j` forms the `i`-th joint estimate.
#[derive(Debug, Clone)]
pub struct PathFit {
    pub design: DesignSet,
    pub models: Vec<KLModel>,
    pub paths: Vec<Vec<FitResult>>,
}

impl PathFit {
    pub fn len(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kernels_at(&self, i: usize) -> Result<KernelEstimate> {
        let fits: Vec<FitResult> = self.paths.iter().map(|p| p[i].clone()).collect();
        recover_kernels(&fits, &self.models)
    }

    pub fn path_kernels(&self) -> Result<Vec<KernelEstimate>> {
        (0..self.len()).map(|i| self.kernels_at(i)).collect()
    }

    /// Per-row grid indices minimizing the criterion.
    pub fn selected_indices(&self, criterion: Criterion) -> Vec<usize> {
        self.paths.iter().map(|p| select_index(p, criterion)).collect()
    }

    pub fn selected(&self, criterion: Criterion) -> Result<KernelEstimate> {
        let fits: Vec<FitResult> = self
            .paths
            .iter()
            .zip(self.selected_indices(criterion))
            .map(|(p, i)| p[i].clone())
            .collect();
        recover_kernels(&fits, &self.models)
    }
}

pub fn fit_paths(models: Vec<KLModel>, settings: &PathSettings) -> Result<PathFit> {
    let design = build_design_from_models(&models, settings.lag)?;
    let paths = all_row_paths(&design, settings.len, settings.ratio, &settings.fista())?;
    Ok(PathFit { design, models, paths })
}

/// Fits all rows at one standardized regularization level.
pub fn fit_at_gamma(models: Vec<KLModel>, lag: usize, gamma: f64, opts: &FistaOptions) -> Result<(Vec<FitResult>, KernelEstimate)> {
    if !(gamma >= 0.0) {
        return Err(VfarError::Config(format!("gamma must be >= 0, got {gamma}")));
    }
    let design = build_design_from_models(&models, lag)?;
    let fits: Vec<FitResult> = (0..design.p())
        .into_par_iter()
        .map(|j| fit_row(j, &design, gamma, None, opts))
        .collect::<Result<_>>()?;
    let kernels = recover_kernels(&fits, &models)?;
    Ok((fits, kernels))
}

/// The three compared estimators: all cross-validated components, the
/// first two components, and the first score only (a plain lasso VAR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Full,
    Two,
    Single,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Full, Method::Two, Method::Single];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Full => "l1l2_ls_a",
            Method::Two => "l1l2_ls_2",
            Method::Single => "l1_ls_1",
        }
    }
}

pub fn method_models(method: Method, panel: &CurvePanel, basis: &BasisSpec, fitted: &[VariableFpca]) -> Result<Vec<KLModel>> {
    match method {
        Method::Full => Ok(fitted.iter().map(|f| f.model.clone()).collect()),
        Method::Two => refit_fixed_q(panel, basis, fitted, 2),
        Method::Single => refit_fixed_q(panel, basis, fitted, 1),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub auroc: f64,
    pub error_aic: f64,
    pub error_bic: f64,
    pub q: Vec<usize>,
}

/// One simulated replication: simulate, run all three methods along their
/// paths, and score each against the truth.
pub fn compare_methods(
    truth: &VFARModel,
    n: usize,
    grid_len: usize,
    seed: u64,
    fpca: &FpcaSettings,
    path: &PathSettings,
) -> Result<Vec<MethodReport>> {
    let grid = vfar::equispaced_grid(&truth.basis, grid_len);
    let panel = vfar::simulate(truth, n, &grid, vfar::DEFAULT_BURN_IN, seed)?;
    let fitted = fpca_panel(&panel, fpca)?;
    Method::ALL
        .iter()
        .map(|&method| {
            let models = method_models(method, &panel, &fpca.basis, &fitted)?;
            let q = models.iter().map(|m| m.q()).collect();
            let fit = fit_paths(models, path)?;
            let report = roc_and_auroc(&fit.path_kernels()?, truth);
            let err = |c| relative_error(&fit.selected(c)?, truth, DEFAULT_ERROR_INTERVALS, DEFAULT_ERROR_NODES);
            Ok(MethodReport { method, auroc: report.auroc, error_aic: err(Criterion::Aic)?, error_bic: err(Criterion::Bic)?, q })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_share_smoothing() {
        let truth = vfar::gen_block_banded(3, BasisSpec::fourier(5).unwrap(), 1, 2).unwrap();
        let grid = vfar::equispaced_grid(&truth.basis, 30);
        let panel = vfar::simulate(&truth, 120, &grid, 200, 4).unwrap();
        let settings = FpcaSettings { basis: BasisSpec::bspline(10).unwrap(), ..FpcaSettings::default() };
        let fitted = fpca_panel(&panel, &settings).unwrap();
        let two = method_models(Method::Two, &panel, &settings.basis, &fitted).unwrap();
        for (m, f) in two.iter().zip(&fitted) {
            assert_eq!(m.q(), 2);
            assert_eq!(m.smoothing, f.cv.eta);
            if f.model.q() >= 2 {
                assert!((m.eigen_coeffs.clone() - f.model.eigen_coeffs.rows(0, 2)).amax() < 1e-8);
            }
        }
        assert_eq!(fpca_panel(&panel, &settings).unwrap()[1].cv.table.len(), 20);
    }

    #[test]
    fn path_starts_empty_and_selection_lies_on_path() {
        let truth = vfar::gen_block_sparse(4, BasisSpec::fourier(5).unwrap(), 2, 8).unwrap();
        let grid = vfar::equispaced_grid(&truth.basis, 30);
        let panel = vfar::simulate(&truth, 150, &grid, 200, 1).unwrap();
        let fitted = fpca_panel(&panel, &FpcaSettings { basis: BasisSpec::bspline(10).unwrap(), ..Default::default() }).unwrap();
        let models = fitted.into_iter().map(|f| f.model).collect();
        let fit = fit_paths(models, &PathSettings { len: 15, ..Default::default() }).unwrap();
        assert_eq!(fit.len(), 15);
        assert!(fit.kernels_at(0).unwrap().support().iter().flatten().all(|&s| !s));
        let idx = fit.selected_indices(Criterion::Bic);
        let sel = fit.selected(Criterion::Bic).unwrap();
        for (j, &i) in idx.iter().enumerate() {
            for k in 0..4 {
                assert_eq!(sel.psi(0, j, k), &fit.paths[j][i].psi_blocks[k]);
            }
        }
    }
}
