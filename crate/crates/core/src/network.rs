//! Granger-causality networks from estimated kernels, support-recovery and
//! estimation-error metrics, and intraday-return ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfarError};
use crate::fpca::CurvePanel;
use crate::quadrature;
use crate::solver::KernelEstimate;
use crate::vfar::VFARModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "value")]
pub enum EdgeRule {
    /// Keep edges with weight strictly above the threshold.
    Threshold(f64),
    /// Keep the `d` heaviest sources of every node.
    Indegree(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub lag_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl CausalGraph {
    pub fn indegree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.target == node).count()
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edges.iter().any(|e| e.source == source && e.target == target)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fngc {\n");
        for name in &self.nodes {
            let _ = writeln!(out, "  \"{name}\";");
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [weight={:.6e}, label=\"{:.3}\"];",
                self.nodes[e.source], self.nodes[e.target], e.weight, e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Edges `k -> j` weighted by `max_h ||A_jk^(h)||_S`.
///
/// With `no_self`, self-loops are still reported when present but do not
/// use up any of the `d` in-edges of the indegree rule.
pub fn extract_network(kernels: &KernelEstimate, rule: EdgeRule, no_self: bool, names: Option<&[String]>) -> Result<CausalGraph> {
    let p = kernels.p;
    let nodes: Vec<String> = match names {
        Some(n) if n.len() == p => n.to_vec(),
        Some(n) => {
            return Err(VfarError::InvalidArgument(format!("{} node names for p={p}", n.len())));
        }
        None => (0..p).map(|j| format!("X{}", j + 1)).collect(),
    };
    let weights = kernels.edge_weights();
    let support = kernels.support();
    let edge = |j: usize, k: usize| Edge {
        source: k,
        target: j,
        weight: weights[j][k],
        lag_weights: (0..kernels.lag).map(|h| kernels.hs_norms[h][j][k]).collect(),
    };
    let mut edges = Vec::new();
    match rule {
        EdgeRule::Threshold(tau) => {
            if !(tau >= 0.0) {
                return Err(VfarError::InvalidArgument(format!("threshold must be >= 0, got {tau}")));
            }
            for j in 0..p {
                for k in 0..p {
                    if support[j][k] && weights[j][k] > tau {
                        edges.push(edge(j, k));
                    }
                }
            }
        }
        EdgeRule::Indegree(d) => {
            if d == 0 || d > p {
                return Err(VfarError::InvalidArgument(format!("indegree must lie in 1..={p}, got {d}")));
            }
            for j in 0..p {
                let mut cand: Vec<usize> = (0..p)
                    .filter(|&k| support[j][k] && weights[j][k] > 0.0 && !(no_self && k == j))
                    .collect();
                cand.sort_by(|&a, &b| weights[j][b].partial_cmp(&weights[j][a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
                cand.truncate(d);
                if no_self && support[j][j] && weights[j][j] > 0.0 {
                    cand.push(j);
                }
                cand.sort_unstable();
                edges.extend(cand.into_iter().map(|k| edge(j, k)));
            }
        }
    }
    Ok(CausalGraph { nodes, edges })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auroc: f64,
    pub relative_error: Option<f64>,
}

/// `(tpr, fpr)` of an estimated support against the truth over all `p^2`
/// ordered pairs.
pub fn rates(estimate: &[Vec<bool>], truth: &[Vec<bool>]) -> (f64, f64) {
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (er, tr) in estimate.iter().zip(truth) {
        for (&e, &t) in er.iter().zip(tr) {
            if t {
                pos += 1;
                tp += e as usize;
            } else {
                neg += 1;
                fp += e as usize;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(tp, pos), ratio(fp, neg))
}

/// Trapezoid area under ROC points augmented with `(0,0)` and `(1,1)`.
pub fn auroc(tpr: &[f64], fpr: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = fpr.iter().copied().zip(tpr.iter().copied()).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1)).sum()
}

/// ROC over a sequence of estimated supports.
pub fn roc_from_supports(supports: &[Vec<Vec<bool>>], truth: &[Vec<bool>]) -> EvalReport {
    let (tpr, fpr): (Vec<f64>, Vec<f64>) = supports.iter().map(|s| rates(s, truth)).unzip();
    let area = auroc(&tpr, &fpr);
    EvalReport { tpr, fpr, auroc: area, relative_error: None }
}

/// ROC of a path of kernel estimates against a true model.
pub fn roc_and_auroc(path: &[KernelEstimate], truth: &VFARModel) -> EvalReport {
    let supports: Vec<Vec<Vec<bool>>> = path.iter().map(|k| k.support()).collect();
    roc_from_supports(&supports, &truth.support())
}

/// ROC obtained by thresholding edge scores at every distinct value.
pub fn roc_from_scores(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> EvalReport {
    let mut levels: Vec<f64> = scores.iter().flatten().copied().collect();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    levels.dedup();
    let supports: Vec<Vec<Vec<bool>>> = levels
        .iter()
        .map(|&lvl| scores.iter().map(|r| r.iter().map(|&s| s >= lvl).collect()).collect())
        .collect();
    roc_from_supports(&supports, truth)
}

pub const DEFAULT_ERROR_INTERVALS: usize = 20;
pub const DEFAULT_ERROR_NODES: usize = 10;

/// `||A_hat - A||_F / ||A||_F` with functional Frobenius norms over all
/// lags and pairs, integrated on a composite Gauss–Legendre grid.
pub fn relative_error(kernels: &KernelEstimate, truth: &VFARModel, intervals: usize, nodes_per: usize) -> Result<f64> {
    if kernels.p != truth.p {
        return Err(VfarError::InvalidArgument(format!("estimate has p={}, truth p={}", kernels.p, truth.p)));
    }
    let [lo, hi] = truth.basis.domain;
    let (pts, w) = quadrature::uniform_rule(lo, hi, intervals, nodes_per);
    let s = truth.basis.evaluate(&pts)?;
    let phis: Vec<DMatrix<f64>> = kernels.models.iter().map(|m| m.eigenfunctions(&pts)).collect::<Result<_>>()?;
    let wmat = DMatrix::from_fn(pts.len(), pts.len(), |a, b| w[a] * w[b]);
    let lags = kernels.lag.max(truth.lag);
    let (mut num, mut den) = (0.0, 0.0);
    for h in 0..lags {
        for j in 0..truth.p {
            for k in 0..truth.p {
                let a = if h < truth.lag { &s * truth.block(h, j, k) * s.transpose() } else { DMatrix::zeros(pts.len(), pts.len()) };
                let ahat = if h < kernels.lag {
                    &phis[j] * kernels.psi(h, j, k).transpose() * phis[k].transpose()
                } else {
                    DMatrix::zeros(pts.len(), pts.len())
                };
                num += (&ahat - &a).component_mul(&(&ahat - &a)).dot(&wmat);
                den += a.component_mul(&a).dot(&wmat);
            }
        }
    }
    if den == 0.0 {
        return Err(VfarError::InvalidArgument("true model has zero kernels".into()));
    }
    Ok((num / den).sqrt())
}

/// `100 log(P(u) / P(u_1))` for each stock's `n x T` price matrix.
pub fn cidr_curves(prices: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    prices
        .iter()
        .enumerate()
        .map(|(j, m)| {
            if let Some(pos) = m.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                let n = m.nrows();
                return Err(VfarError::Data(format!(
                    "nonpositive price {} for stock {j} at day {}, minute {}",
                    m[pos],
                    pos % n,
                    pos / n
                )));
            }
            Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |t, s| 100.0 * (m[(t, s)] / m[(t, 0)]).ln()))
        })
        .collect()
}

/// CIDR curves centered about the mean curve of each stock.
pub fn cidr_transform(prices: &[DMatrix<f64>], ids: Vec<String>) -> Result<CurvePanel> {
    let curves = cidr_curves(prices)?;
    let t_len = curves.first().map_or(0, |m| m.ncols());
    let centered = curves
        .into_iter()
        .map(|mut m| {
            let mean = m.row_mean();
            for mut row in m.row_iter_mut() {
                row -= &mean;
            }
            m
        })
        .collect();
    let grid = (0..t_len).map(|s| s as f64 / (t_len.max(2) - 1) as f64).collect();
    CurvePanel::new(centered, grid, ids)
}

/// Minute prices by ticker: `prices[j]` is `days x minutes`.
#[derive(Debug, Clone)]
pub struct PriceTable {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub prices: Vec<DMatrix<f64>>,
}

/// Reads `date,ticker,minute_index,price` rows. Dates, tickers and minutes
/// are sorted; every combination must be present exactly once.
pub fn read_prices(path: &Path) -> Result<PriceTable> {
    #[derive(Deserialize)]
    struct Row {
        date: String,
        ticker: String,
        minute_index: usize,
        price: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut cells: BTreeMap<(String, String, usize), f64> = BTreeMap::new();
    let (mut dates, mut tickers, mut minutes) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
    for rec in rdr.deserialize() {
        let row: Row = rec?;
        dates.insert(row.date.clone());
        tickers.insert(row.ticker.clone());
        minutes.insert(row.minute_index);
        if cells.insert((row.ticker, row.date, row.minute_index), row.price).is_some() {
            return Err(VfarError::Data("duplicate (date, ticker, minute_index) row".into()));
        }
    }
    let dates: Vec<String> = dates.into_iter().collect();
    let tickers: Vec<String> = tickers.into_iter().collect();
    let minutes: Vec<usize> = minutes.into_iter().collect();
    if minutes.len() < 2 {
        return Err(VfarError::Data("need at least two minutes per day".into()));
    }
    let mut prices = Vec::with_capacity(tickers.len());
    for tk in &tickers {
        let mut m = DMatrix::zeros(dates.len(), minutes.len());
        for (t, d) in dates.iter().enumerate() {
            for (s, &mi) in minutes.iter().enumerate() {
                m[(t, s)] = *cells.get(&(tk.clone(), d.clone(), mi)).ok_or_else(|| {
                    VfarError::Data(format!("missing price for {tk} on {d} at minute {mi}"))
                })?;
            }
        }
        prices.push(m);
    }
    Ok(PriceTable { dates, tickers, prices })
}
