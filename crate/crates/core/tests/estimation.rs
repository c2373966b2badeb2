use nalgebra::DMatrix;

use vfar_core::basis::BasisSpec;
use vfar_core::concentration::{verify_concentration, ConcentrationConfig};
use vfar_core::moments::autocov_empirical;
use vfar_core::network::{relative_error, DEFAULT_ERROR_INTERVALS, DEFAULT_ERROR_NODES};
use vfar_core::pipeline::{fit_at_gamma, fit_paths, fpca_panel, FpcaSettings, PathSettings};
use vfar_core::solver::{block_fista, build_design, Criterion, FistaOptions};
use vfar_core::vfar::{self, VFARModel};

#[test]
fn null_model_bic_selects_nothing() {
    let basis = BasisSpec::fourier(5).unwrap();
    let truth = VFARModel::new(basis.clone(), 5, vec![DMatrix::zeros(25, 25)], 1.0, 0.5).unwrap();
    let grid = vfar::equispaced_grid(&basis, 50);
    let fpca = FpcaSettings::default();
    let mut empty = 0;
    for r in 0..50 {
        let panel = vfar::simulate(&truth, 200, &grid, vfar::DEFAULT_BURN_IN, 300 + r).unwrap();
        let models = fpca_panel(&panel, &FpcaSettings { seed: r, ..fpca.clone() })
            .unwrap()
            .into_iter()
            .map(|f| f.model)
            .collect();
        let fit = fit_paths(models, &PathSettings::default()).unwrap();
        let support = fit.selected(Criterion::Bic).unwrap().support();
        empty += support.iter().flatten().all(|&s| !s) as usize;
    }
    assert!(empty >= 45, "only {empty}/50 replications selected the empty model");
}

#[test]
fn unpenalized_fit_recovers_sparse_model() {
    let truth = vfar::gen_block_sparse(3, BasisSpec::fourier(5).unwrap(), 1, 21).unwrap();
    let grid = vfar::equispaced_grid(&truth.basis, 50);
    let panel = vfar::simulate(&truth, 2000, &grid, vfar::DEFAULT_BURN_IN, 22).unwrap();
    let models = fpca_panel(&panel, &FpcaSettings::default()).unwrap().into_iter().map(|f| f.model).collect();
    let (_, kernels) = fit_at_gamma(models, 1, 0.0, &FistaOptions { tol: 1e-12, ..Default::default() }).unwrap();
    let support = kernels.support();
    let weights = kernels.edge_weights();
    let true_support = truth.support();
    let mut weakest_true = f64::INFINITY;
    let mut strongest_false = 0.0_f64;
    for j in 0..3 {
        for k in 0..3 {
            if true_support[j][k] {
                assert!(support[j][k]);
                weakest_true = weakest_true.min(weights[j][k]);
            } else {
                strongest_false = strongest_false.max(weights[j][k]);
            }
        }
    }
    assert!(weakest_true > strongest_false, "true {weakest_true} vs false {strongest_false}");
    let err = relative_error(&kernels, &truth, DEFAULT_ERROR_INTERVALS, DEFAULT_ERROR_NODES).unwrap();
    assert!(err < 0.5, "relative error {err}");
}

#[test]
fn least_squares_limit_matches_normal_equations() {
    let truth = vfar::gen_block_sparse(3, BasisSpec::fourier(2).unwrap(), 2, 7).unwrap();
    let scores = vfar::simulate_coefficients(&truth, 60, vfar::DEFAULT_BURN_IN, 8).unwrap();
    let design = build_design(&scores, 1).unwrap();
    let opts = FistaOptions { tol: 1e-15, max_iter: 200_000, ..Default::default() };
    for j in 0..3 {
        let y = &design.responses[j];
        let b = &design.design;
        let x = (b.transpose() * b).lu().solve(&(b.transpose() * y)).unwrap();
        let oracle = 0.5 * (y - b * x).norm_squared();
        let out = block_fista(y, b, &design.groups, 0.0, &opts).unwrap();
        let got = 0.5 * (y - b * &out.x).norm_squared();
        assert!((got - oracle).abs() <= 1e-10 * oracle.max(1.0), "row {j}: {got} vs {oracle}");
    }
}

#[test]
fn simulated_scores_are_stationary_after_burn_in() {
    let truth = vfar::gen_block_banded(4, BasisSpec::fourier(3).unwrap(), 1, 5).unwrap();
    let coeffs = vfar::simulate_coefficients(&truth, 40_000, vfar::DEFAULT_BURN_IN, 6).unwrap();
    let half = |lo: usize| -> Vec<DMatrix<f64>> { coeffs.iter().map(|c| c.rows(lo, 20_000).into_owned()).collect() };
    let a = autocov_empirical(&half(0), 0).unwrap().stacked;
    let b = autocov_empirical(&half(20_000), 0).unwrap().stacked;
    let gap = (&a - &b).amax() / a.amax();
    assert!(gap < 0.1, "halves differ by {gap}");
}

#[test]
fn doubling_dimension_costs_at_most_log_factor() {
    let base = ConcentrationConfig { n_grid: vec![500, 1000], reps: 60, ..Default::default() };
    let small = verify_concentration(&base).unwrap();
    let large = verify_concentration(&ConcentrationConfig { p: 20, ..base.clone() }).unwrap();
    let bound = (20f64.ln() / 5f64.ln()).sqrt() * 1.5;
    for (s, l) in small.rows.iter().zip(&large.rows) {
        let ratio = l.median_sigma / s.median_sigma;
        assert!(ratio <= bound, "n={}: ratio {ratio} above {bound}", s.n);
        assert!(ratio >= 1.0, "n={}: ratio {ratio}", s.n);
    }
}
