use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use vfar_core::network::CausalGraph;
use vfar_core::solver::{FitResult, KernelEstimate};

fn vfar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vfar")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = vfar(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn read<T: serde::de::DeserializeOwned>(p: PathBuf) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic_and_presets_set_size() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &["--preset", "n100p40", "--seed", "5"]);
    let b = simulate(dir.path(), "b", &["--preset", "n100p40", "--seed", "5"]);
    let c = simulate(dir.path(), "c", &["--preset", "n100p40", "--seed", "6"]);
    let panel = fs::read(a.join("panel.csv")).unwrap();
    assert_eq!(panel, fs::read(b.join("panel.csv")).unwrap());
    assert_ne!(panel, fs::read(c.join("panel.csv")).unwrap());
    let truth: vfar_core::vfar::VFARModel = read(a.join("truth.json"));
    assert_eq!(truth.p, 40);
    assert_eq!(truth.basis.dimension, 5);
    let rows = String::from_utf8(panel).unwrap().lines().count();
    assert_eq!(rows, 1 + 100 * 40 * 50);
}

#[test]
fn rerun_from_manifest_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--n", "80", "--p", "4", "--seed", "2"]);
    let panel = sim.join("panel.csv");
    let first = dir.path().join("first");
    ok(&["fit", "--panel", s(&panel), "--path-len", "12", "--seed", "9", "--out", s(&first)]);
    let second = dir.path().join("second");
    ok(&["fit", "--config", s(&first.join("manifest.json")), "--out", s(&second)]);
    for f in ["kernels.json", "fits.json", "ic_table.csv", "fpca.json", "manifest.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn gamma_zero_matches_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--n", "120", "--p", "3", "--bandwidth", "1", "--seed", "4"]);
    let fit = dir.path().join("fit");
    ok(&["fit", "--panel", s(&sim.join("panel.csv")), "--gamma", "0", "--tol", "1e-15", "--max-iter", "200000", "--out", s(&fit)]);
    let kernels: KernelEstimate = read(fit.join("kernels.json"));
    let p = kernels.p;
    let scores: Vec<&DMatrix<f64>> = kernels.models.iter().map(|m| &m.scores).collect();
    let n = scores[0].nrows();
    let x = DMatrix::from_fn(n - 1, scores.iter().map(|s| s.ncols()).sum(), |t, c| {
        let mut c = c;
        for s in &scores {
            if c < s.ncols() {
                return s[(t, c)];
            }
            c -= s.ncols();
        }
        unreachable!()
    });
    let xtx = x.transpose() * &x;
    for j in 0..p {
        let y = scores[j].rows(1, n - 1).into_owned();
        let coef = xtx.clone().lu().solve(&(x.transpose() * y)).unwrap();
        let mut offset = 0;
        for k in 0..p {
            let qk = scores[k].ncols();
            let oracle = coef.rows(offset, qk);
            let got = &kernels.psi[0][j * p + k].0;
            let gap = (got - oracle).amax() / oracle.amax();
            assert!(gap < 1e-6, "row {j} block {k}: relative gap {gap}");
            offset += qk;
        }
    }
}

#[test]
fn bic_selects_sparser_model_than_aic_on_desk() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--preset", "desk", "--seed", "11"]);
    let panel = sim.join("panel.csv");
    let active = |ic: &str| {
        let out = dir.path().join(ic);
        ok(&["fit", "--panel", s(&panel), "--ic", ic, "--out", s(&out)]);
        let fits: Vec<FitResult> = read(out.join("fits.json"));
        fits.iter().map(|f| f.active_count()).sum::<usize>()
    };
    let start = std::time::Instant::now();
    let (aic, bic) = (active("aic"), active("bic"));
    assert!(bic < aic, "bic {bic} vs aic {aic}");
    assert!(start.elapsed().as_secs() < 300);
}

#[test]
fn commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &["--n", "100", "--p", "5", "--model", "sparse", "--degree", "2", "--seed", "1"]);
    let panel = sim.join("panel.csv");
    let truth = sim.join("truth.json");
    let path = dir.path().join("path");
    ok(&["path", "--panel", s(&panel), "--truth", s(&truth), "--path-len", "15", "--out", s(&path)]);
    let eval: serde_json::Value = read(path.join("eval.json"));
    let auroc = eval["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));
    let roc = fs::read_to_string(path.join("roc.csv")).unwrap();
    assert_eq!(roc.lines().count(), 16);

    let sel = dir.path().join("select");
    ok(&["select", "--path", s(&path.join("path.json")), "--ic", "bic", "--out", s(&sel)]);
    let fit = dir.path().join("fit");
    ok(&["fit", "--panel", s(&panel), "--path-len", "15", "--ic", "bic", "--out", s(&fit)]);
    assert_eq!(fs::read(sel.join("kernels.json")).unwrap(), fs::read(fit.join("kernels.json")).unwrap());

    let net = dir.path().join("net");
    ok(&["network", "--kernels", s(&sel.join("kernels.json")), "--indegree", "5", "--out", s(&net)]);
    let graph: CausalGraph = read(net.join("graph.json"));
    let kernels: KernelEstimate = read(sel.join("kernels.json"));
    let nonzero = kernels.support().iter().flatten().filter(|&&b| b).count();
    assert_eq!(graph.edges.len(), nonzero);
    assert!(fs::read_to_string(net.join("graph.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"no_such_field": 1}"#).unwrap();
    let out = vfar(&["stability", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = vfar(&["verify-concentration", "--fixture", "ar1", "--ar", "1.0", "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = vfar(&["fit", "--panel", s(&dir.path().join("missing.csv")), "--out", s(&dir.path().join("z"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stability_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("st");
    ok(&["stability", "--a", "0,0.5", "--b", "0,0.5,1", "--out", s(&out)]);
    let mut rdr = csv::Reader::from_path(out.join("stability.csv")).unwrap();
    let rows: Vec<(f64, f64, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let (a, b, norm, m) = rows[0];
    assert_eq!((a, b, norm), (0.0, 0.0, 0.0));
    assert!((m - 1.0).abs() < 1e-8);
    assert!(rows[5].3 > rows[3].3);
}

#[test]
fn small_concentration_run_writes_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conc");
    ok(&["verify-concentration", "--n-grid", "100,400", "--reps", "6", "--out", s(&out)]);
    let report: serde_json::Value = read(out.join("rates.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(report["slope_sigma"].as_f64().unwrap() < 0.0);
}

#[test]
fn ingest_cidr_produces_demeaned_panel() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let mut body = String::from("date,ticker,minute_index,price\n");
    for (d, date) in ["2020-01-02", "2020-01-03", "2020-01-06"].iter().enumerate() {
        for (j, tk) in ["AAA", "BBB"].iter().enumerate() {
            for m in 0..5 {
                let price = 10.0 * (j + 1) as f64 + (d * m) as f64 * 0.1 + m as f64 * 0.01 * j as f64;
                body.push_str(&format!("{date},{tk},{m},{price}\n"));
            }
        }
    }
    fs::write(&prices, body).unwrap();
    let out = dir.path().join("cidr");
    ok(&["ingest-cidr", "--prices", s(&prices), "--out", s(&out)]);
    let panel = vfar_core::fpca::CurvePanel::read_csv(&out.join("panel.csv"), None).unwrap();
    assert_eq!((panel.n(), panel.p(), panel.grid_len()), (3, 2, 5));
    for m in &panel.values {
        for s in 0..5 {
            assert!(m.column(s).sum().abs() < 1e-9);
        }
    }
}
