use std::path::Path;

use serde::{Deserialize, Serialize};
use vfar_core::basis::BasisSpec;
use vfar_core::concentration::{verify_concentration, ConcentrationConfig, Fixture};
use vfar_core::fpca::{CurvePanel, CvResult, KLModel};
use vfar_core::moments::stability_sweep;
use vfar_core::network::{
    cidr_transform, extract_network, read_prices, relative_error, roc_and_auroc, EdgeRule, DEFAULT_ERROR_INTERVALS,
    DEFAULT_ERROR_NODES,
};
use vfar_core::pipeline::{fit_at_gamma, fit_paths, fpca_panel, FpcaSettings, PathSettings};
use vfar_core::solver::{recover_kernels, select_index, Criterion, FistaOptions, FitResult, KernelEstimate};
use vfar_core::vfar::{self, VFARModel};
use vfar_core::{Result, VfarError};

use crate::config::{self, *};
use crate::output::{read_json, OutDir};
use crate::{Cli, Command, FixtureArg};

macro_rules! set {
    ($cfg:ident.$field:ident, $value:expr) => {
        if let Some(v) = $value {
            $cfg.$field = v;
        }
    };
    ($cfg:ident.$field:ident, Some $value:expr) => {
        if let Some(v) = $value {
            $cfg.$field = Some(v);
        }
    };
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| VfarError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let cfg_path = cli.config.as_deref();
    let out = OutDir::create(&cli.out)?;
    let seed = |saved: Option<u64>| cli.seed.or(saved).unwrap_or(0);
    match cli.command {
        Command::Simulate(a) => {
            let (mut c, saved): (SimulateConfig, _) = config::load(cfg_path, "simulate")?;
            set!(c.preset, Some a.preset);
            set!(c.n, Some a.n);
            set!(c.p, Some a.p);
            set!(c.model, a.model);
            set!(c.degree, a.degree);
            set!(c.bandwidth, a.bandwidth);
            set!(c.basis_dim, a.basis_dim);
            set!(c.grid_len, a.grid_len);
            set!(c.burn_in, a.burn_in);
            set!(c.measurement_noise, a.measurement_noise);
            simulate(&c, seed(saved), cli.threads, out)
        }
        Command::Fit(a) => {
            let (c, saved) = estimate_config(cfg_path, "fit", a)?;
            fit(&c, seed(saved), cli.threads, out)
        }
        Command::Path(a) => {
            let (c, saved) = estimate_config(cfg_path, "path", a)?;
            path(&c, seed(saved), cli.threads, out)
        }
        Command::Select(a) => {
            let (mut c, saved): (SelectConfig, _) = config::load(cfg_path, "select")?;
            set!(c.path, a.path);
            set!(c.truth, Some a.truth);
            set!(c.ic, a.ic.map(Criterion::from));
            select(&c, seed(saved), cli.threads, out)
        }
        Command::Network(a) => {
            let (mut c, saved): (NetworkConfig, _) = config::load(cfg_path, "network")?;
            set!(c.kernels, a.kernels);
            set!(c.threshold, Some a.threshold);
            set!(c.indegree, Some a.indegree);
            if a.threshold.is_some() {
                c.indegree = None;
            }
            if a.indegree.is_some() {
                c.threshold = None;
            }
            c.no_self |= a.no_self;
            network(&c, seed(saved), cli.threads, out)
        }
        Command::Stability(a) => {
            let (mut c, saved): (StabilityConfig, _) = config::load(cfg_path, "stability")?;
            set!(c.a, a.a);
            set!(c.b, a.b);
            set!(c.theta_grid, a.theta_grid);
            stability(&c, seed(saved), cli.threads, out)
        }
        Command::VerifyConcentration(a) => {
            let (mut c, saved): (ConcentrationSettings, _) = config::load(cfg_path, "verify-concentration")?;
            match (a.fixture, a.ar) {
                (Some(FixtureArg::Iid), _) => c.fixture = Fixture::Iid,
                (Some(FixtureArg::Ar1), ar) => c.fixture = Fixture::Ar1 { a: ar.unwrap_or(0.5) },
                (None, Some(ar)) => c.fixture = Fixture::Ar1 { a: ar },
                (None, None) => {}
            }
            set!(c.p, a.p);
            set!(c.n_grid, a.n_grid);
            set!(c.reps, a.reps);
            set!(c.score_lags, a.score_lags);
            set!(c.alpha, a.alpha);
            concentration(&c, seed(saved), cli.threads, out)
        }
        Command::IngestCidr(a) => {
            let (mut c, saved): (CidrConfig, _) = config::load(cfg_path, "ingest-cidr")?;
            set!(c.prices, a.prices);
            ingest_cidr(&c, seed(saved), cli.threads, out)
        }
    }
}

fn estimate_config(cfg_path: Option<&Path>, command: &str, a: crate::EstimateArgs) -> Result<(EstimateConfig, Option<u64>)> {
    let (mut c, saved): (EstimateConfig, _) = config::load(cfg_path, command)?;
    set!(c.panel, a.panel);
    set!(c.truth, Some a.truth);
    set!(c.lag, a.lag);
    set!(c.basis_dim, a.basis_dim);
    set!(c.q_max, a.q_max);
    set!(c.eta_grid, a.eta_grid);
    set!(c.folds, a.folds);
    set!(c.path_len, a.path_len);
    set!(c.path_ratio, a.path_ratio);
    set!(c.tol, a.tol);
    set!(c.max_iter, a.max_iter);
    set!(c.gamma, Some a.gamma);
    set!(c.ic, a.ic.map(Criterion::from));
    if c.q_max == 0 || c.path_len == 0 || !(c.path_ratio > 0.0 && c.path_ratio <= 1.0) || !(c.tol > 0.0) {
        return Err(VfarError::Config("need q_max >= 1, path_len >= 1, 0 < path_ratio <= 1 and tol > 0".into()));
    }
    Ok((c, saved))
}

fn simulate(c: &SimulateConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let (n, p) = c.size();
    if n < 2 || p == 0 || c.grid_len < 2 {
        return Err(VfarError::Config(format!("need n >= 2, p >= 1 and grid_len >= 2 (got n={n}, p={p}, grid_len={})", c.grid_len)));
    }
    let basis = BasisSpec::fourier(c.basis_dim)?;
    let mut model = match c.model {
        ModelKind::Sparse => vfar::gen_block_sparse(p, basis, c.degree, seed)?,
        ModelKind::Banded => vfar::gen_block_banded(p, basis, c.bandwidth, seed)?,
    };
    model.measurement_noise = c.measurement_noise;
    let grid = vfar::equispaced_grid(&model.basis, c.grid_len);
    let panel = vfar::simulate(&model, n, &grid, c.burn_in, seed.wrapping_add(1))?;
    panel.write_csv(&out.path("panel.csv"))?;
    out.json("truth.json", &model)?;
    out.manifest("simulate", seed, threads, c)
}

#[derive(Serialize)]
struct VariableCv<'a> {
    id: &'a str,
    q: usize,
    eta: f64,
    eigenvalues: &'a [f64],
    cv: &'a CvResult,
}

fn estimate_models(c: &EstimateConfig, seed: u64, out: &mut OutDir) -> Result<Vec<KLModel>> {
    if !c.panel.is_file() {
        return Err(VfarError::Config(format!("panel file {} not found", c.panel.display())));
    }
    let panel = CurvePanel::read_csv(&c.panel, None)?;
    let settings = FpcaSettings {
        basis: BasisSpec::bspline(c.basis_dim)?,
        q_grid: (1..=c.q_max).collect(),
        eta_grid: c.eta_grid.clone(),
        folds: c.folds,
        seed,
    };
    let fitted = fpca_panel(&panel, &settings)?;
    let summary: Vec<VariableCv> = fitted
        .iter()
        .zip(&panel.ids)
        .map(|(f, id)| VariableCv { id, q: f.model.q(), eta: f.cv.eta, eigenvalues: &f.model.eigenvalues, cv: &f.cv })
        .collect();
    out.json("fpca.json", &summary)?;
    Ok(fitted.into_iter().map(|f| f.model).collect())
}

fn path_settings(c: &EstimateConfig) -> PathSettings {
    PathSettings { lag: c.lag, len: c.path_len, ratio: c.path_ratio, tol: c.tol, max_iter: c.max_iter }
}

#[derive(Serialize)]
struct IcRow {
    row: usize,
    index: usize,
    gamma: f64,
    gamma_paper: f64,
    active_blocks: usize,
    rss: f64,
    df: f64,
    aic: f64,
    bic: f64,
    iterations: usize,
    converged: bool,
}

fn ic_rows(paths: &[Vec<FitResult>]) -> Vec<IcRow> {
    paths
        .iter()
        .flat_map(|p| {
            p.iter().enumerate().map(|(index, f)| IcRow {
                row: f.row,
                index,
                gamma: f.gamma,
                gamma_paper: f.gamma_paper,
                active_blocks: f.active_count(),
                rss: f.rss,
                df: f.df,
                aic: f.aic,
                bic: f.bic,
                iterations: f.iterations,
                converged: f.converged,
            })
        })
        .collect()
}

/// A regularization path as written by `vfar path`.
#[derive(Serialize, Deserialize)]
struct SavedPath {
    lag: usize,
    models: Vec<KLModel>,
    paths: Vec<Vec<FitResult>>,
}

#[derive(Serialize)]
struct Evaluation {
    criterion: Option<Criterion>,
    relative_error: f64,
    selected_blocks: usize,
    true_blocks: usize,
}

fn evaluate(kernels: &KernelEstimate, truth: &VFARModel, criterion: Option<Criterion>) -> Result<Evaluation> {
    Ok(Evaluation {
        criterion,
        relative_error: relative_error(kernels, truth, DEFAULT_ERROR_INTERVALS, DEFAULT_ERROR_NODES)?,
        selected_blocks: kernels.support().iter().flatten().filter(|&&s| s).count(),
        true_blocks: truth.support().iter().flatten().filter(|&&s| s).count(),
    })
}

fn load_truth(path: &Option<std::path::PathBuf>) -> Result<Option<VFARModel>> {
    path.as_deref()
        .map(|p| {
            let m: VFARModel = read_json(p)?;
            m.validate()?;
            Ok(m)
        })
        .transpose()
}

fn fit(c: &EstimateConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let truth = load_truth(&c.truth)?;
    let models = estimate_models(c, seed, &mut out)?;
    let (fits, kernels) = match c.gamma {
        Some(gamma) => {
            let opts = FistaOptions { step: None, tol: c.tol, max_iter: c.max_iter };
            fit_at_gamma(models, c.lag, gamma, &opts)?
        }
        None => {
            let fit = fit_paths(models, &path_settings(c))?;
            out.csv("ic_table.csv", &ic_rows(&fit.paths))?;
            let fits = fit.paths.iter().zip(fit.selected_indices(c.ic)).map(|(p, i)| p[i].clone()).collect();
            (fits, fit.selected(c.ic)?)
        }
    };
    out.json("fits.json", &fits)?;
    out.json("kernels.json", &kernels)?;
    if let Some(truth) = truth {
        out.json("eval.json", &evaluate(&kernels, &truth, c.gamma.is_none().then_some(c.ic))?)?;
    }
    out.manifest("fit", seed, threads, c)
}

#[derive(Serialize)]
struct RocRow {
    index: usize,
    tpr: f64,
    fpr: f64,
}

#[derive(Serialize)]
struct PathEvaluation {
    auroc: f64,
    aic: Evaluation,
    bic: Evaluation,
}

fn path(c: &EstimateConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let truth = load_truth(&c.truth)?;
    let models = estimate_models(c, seed, &mut out)?;
    let fit = fit_paths(models, &path_settings(c))?;
    out.csv("ic_table.csv", &ic_rows(&fit.paths))?;
    if let Some(truth) = truth {
        let report = roc_and_auroc(&fit.path_kernels()?, &truth);
        let roc: Vec<RocRow> =
            report.tpr.iter().zip(&report.fpr).enumerate().map(|(index, (&tpr, &fpr))| RocRow { index, tpr, fpr }).collect();
        out.csv("roc.csv", &roc)?;
        let eval = PathEvaluation {
            auroc: report.auroc,
            aic: evaluate(&fit.selected(Criterion::Aic)?, &truth, Some(Criterion::Aic))?,
            bic: evaluate(&fit.selected(Criterion::Bic)?, &truth, Some(Criterion::Bic))?,
        };
        out.json("eval.json", &eval)?;
    }
    out.json("path.json", &SavedPath { lag: c.lag, models: fit.models, paths: fit.paths })?;
    out.manifest("path", seed, threads, c)
}

fn select(c: &SelectConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let saved: SavedPath = read_json(&c.path)?;
    let truth = load_truth(&c.truth)?;
    if saved.paths.len() != saved.models.len() || saved.paths.iter().any(|p| p.is_empty()) {
        return Err(VfarError::Data(format!("{} needs one nonempty path per variable", c.path.display())));
    }
    let fits: Vec<FitResult> = saved.paths.iter().map(|p| p[select_index(p, c.ic)].clone()).collect();
    let kernels = recover_kernels(&fits, &saved.models)?;
    let rows: Vec<IcRow> = ic_rows(&[fits.clone()]);
    out.csv("selected.csv", &rows)?;
    out.json("fits.json", &fits)?;
    out.json("kernels.json", &kernels)?;
    if let Some(truth) = truth {
        out.json("eval.json", &evaluate(&kernels, &truth, Some(c.ic))?)?;
    }
    out.manifest("select", seed, threads, c)
}

fn network(c: &NetworkConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let rule = match (c.threshold, c.indegree) {
        (Some(t), None) => EdgeRule::Threshold(t),
        (None, Some(d)) => EdgeRule::Indegree(d),
        (None, None) => EdgeRule::Threshold(0.0),
        (Some(_), Some(_)) => return Err(VfarError::Config("give either a threshold or an indegree, not both".into())),
    };
    let kernels: KernelEstimate = read_json(&c.kernels)?;
    let graph = extract_network(&kernels, rule, c.no_self, None)?;
    out.json("graph.json", &graph)?;
    out.text("graph.dot", &graph.to_dot())?;
    out.manifest("network", seed, threads, c)
}

fn stability(c: &StabilityConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    if c.theta_grid < 2 {
        return Err(VfarError::Config("theta_grid must be at least 2".into()));
    }
    let rows = stability_sweep(&c.a, &c.b, c.theta_grid)?;
    out.csv("stability.csv", &rows)?;
    out.manifest("stability", seed, threads, c)
}

fn concentration(c: &ConcentrationSettings, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let config = ConcentrationConfig {
        fixture: c.fixture,
        p: c.p,
        n_grid: c.n_grid.clone(),
        reps: c.reps,
        seed,
        score_lags: c.score_lags.clone(),
        alpha: c.alpha,
    };
    let report = verify_concentration(&config)?;
    out.csv("rates.csv", &report.rows)?;
    out.json("rates.json", &report)?;
    out.manifest("verify-concentration", seed, threads, c)
}

#[derive(Serialize)]
struct CidrMeta<'a> {
    dates: &'a [String],
    tickers: &'a [String],
    minutes: usize,
}

fn ingest_cidr(c: &CidrConfig, seed: u64, threads: Option<usize>, mut out: OutDir) -> Result<()> {
    let table = read_prices(&c.prices)?;
    let panel = cidr_transform(&table.prices, table.tickers.clone())?;
    panel.write_csv(&out.path("panel.csv"))?;
    out.json("cidr.json", &CidrMeta { dates: &table.dates, tickers: &table.tickers, minutes: panel.grid_len() })?;
    out.manifest("ingest-cidr", seed, threads, c)
}
