//! Fourier and cubic B-spline bases with their Gram and roughness matrices.
//!
//! The Fourier system on `[a, b]` is orthonormal: the constant
//! `1/sqrt(T)` followed by `sqrt(2/T) sin(2 pi k (u-a)/T)`,
//! `sqrt(2/T) cos(2 pi k (u-a)/T)` pairs of increasing frequency. On `[0, 1]`
//! this is `{1, sqrt2 sin(2 pi k u), sqrt2 cos(2 pi k u)}`.
//!
//! B-splines are cubic (order 4) on uniform clamped knots.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfarError};
use crate::quadrature;

pub const BSPLINE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Bspline,
}

/// A finite basis on a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisSpec")]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dimension: usize,
    pub domain: [f64; 2],
}

#[derive(Deserialize)]
struct RawBasisSpec {
    kind: BasisKind,
    dimension: usize,
    domain: [f64; 2],
}

impl TryFrom<RawBasisSpec> for BasisSpec {
    type Error = VfarError;

    fn try_from(raw: RawBasisSpec) -> Result<Self> {
        BasisSpec::new(raw.kind, raw.dimension, raw.domain)
    }
}

/// Gram matrix `J = int b b^T` and roughness matrix `Q = int b'' b''^T`.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub j: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, dimension: usize, domain: [f64; 2]) -> Result<Self> {
        let [lo, hi] = domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(VfarError::InvalidArgument(format!(
                "basis domain [{lo}, {hi}] must have positive length"
            )));
        }
        match kind {
            BasisKind::Fourier if dimension < 1 => {
                return Err(VfarError::InvalidArgument("Fourier basis needs dimension >= 1".into()))
            }
            BasisKind::Bspline if dimension < BSPLINE_ORDER => {
                return Err(VfarError::InvalidArgument(format!(
                    "cubic B-spline basis needs dimension >= {BSPLINE_ORDER}, got {dimension}"
                )))
            }
            _ => {}
        }
        Ok(Self { kind, dimension, domain })
    }

    pub fn fourier(dimension: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier, dimension, [0.0, 1.0])
    }

    pub fn bspline(dimension: usize) -> Result<Self> {
        Self::new(BasisKind::Bspline, dimension, [0.0, 1.0])
    }

    pub fn len(&self) -> f64 {
        self.domain[1] - self.domain[0]
    }

    fn check_point(&self, u: f64) -> Result<()> {
        let [lo, hi] = self.domain;
        let slack = 1e-12 * self.len();
        if !(u >= lo - slack && u <= hi + slack) {
            return Err(VfarError::Domain { point: u, lo, hi });
        }
        Ok(())
    }

    /// Distinct breakpoints of the basis. Quadrature is done per interval.
    pub fn breakpoints(&self) -> Vec<f64> {
        let [lo, hi] = self.domain;
        let pieces = match self.kind {
            BasisKind::Bspline => self.dimension - BSPLINE_ORDER + 1,
            BasisKind::Fourier => self.dimension.max(1),
        };
        (0..=pieces)
            .map(|i| lo + (hi - lo) * i as f64 / pieces as f64)
            .collect()
    }

    fn knots(&self) -> Vec<f64> {
        let breaks = self.breakpoints();
        let mut knots = Vec::with_capacity(self.dimension + BSPLINE_ORDER);
        knots.extend(std::iter::repeat_n(breaks[0], BSPLINE_ORDER - 1));
        knots.extend_from_slice(&breaks);
        knots.extend(std::iter::repeat_n(*breaks.last().unwrap(), BSPLINE_ORDER - 1));
        knots
    }

    /// Evaluates the `deriv`-th derivative of every basis function at each
    /// point (`deriv` in 0..=2). Row `t` is `(b_1(u_t), ..., b_G(u_t))`.
    pub fn evaluate_derivative(&self, points: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
        if deriv > 2 {
            return Err(VfarError::InvalidArgument("only derivatives up to order 2 are supported".into()));
        }
        let g = self.dimension;
        let mut out = DMatrix::zeros(points.len(), g);
        match self.kind {
            BasisKind::Fourier => {
                let [lo, _] = self.domain;
                let period = self.len();
                for (r, &u) in points.iter().enumerate() {
                    self.check_point(u)?;
                    let x = (u - lo) / period;
                    for c in 0..g {
                        out[(r, c)] = fourier_value(c, x, period, deriv);
                    }
                }
            }
            BasisKind::Bspline => {
                let knots = self.knots();
                for (r, &u) in points.iter().enumerate() {
                    self.check_point(u)?;
                    let u = u.clamp(self.domain[0], self.domain[1]);
                    let row = bspline_row(&knots, g, u, deriv);
                    for c in 0..g {
                        out[(r, c)] = row[c];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        self.evaluate_derivative(points, 0)
    }

    /// Composite Gauss–Legendre rule with `order` nodes per basis interval.
    pub fn quadrature_rule(&self, order: usize) -> (Vec<f64>, Vec<f64>) {
        quadrature::composite_rule(&self.breakpoints(), order)
    }

    /// `J` and `Q` by Gauss–Legendre quadrature with `quadrature_order`
    /// nodes per interval. Requires `quadrature_order >= 2G`.
    pub fn gram_matrices(&self, quadrature_order: usize) -> Result<GramPair> {
        if quadrature_order < 2 * self.dimension {
            return Err(VfarError::InvalidArgument(format!(
                "quadrature order {quadrature_order} is below 2G = {}",
                2 * self.dimension
            )));
        }
        let (nodes, weights) = self.quadrature_rule(quadrature_order);
        let b = self.evaluate(&nodes)?;
        let b2 = self.evaluate_derivative(&nodes, 2)?;
        Ok(GramPair {
            j: weighted_cross(&b, &weights),
            q: weighted_cross(&b2, &weights),
        })
    }

    /// Gram matrices using the default quadrature order `2G`.
    pub fn default_gram(&self) -> Result<GramPair> {
        self.gram_matrices(2 * self.dimension)
    }

    /// Closed-form `J` and `Q` for the orthonormal Fourier system.
    pub fn fourier_closed_form(&self) -> Option<GramPair> {
        if self.kind != BasisKind::Fourier {
            return None;
        }
        let g = self.dimension;
        let period = self.len();
        let j = DMatrix::identity(g, g);
        let mut q = DMatrix::zeros(g, g);
        for c in 1..g {
            let w = 2.0 * PI * fourier_frequency(c) as f64 / period;
            q[(c, c)] = w.powi(4);
        }
        Some(GramPair { j, q })
    }
}

fn fourier_frequency(c: usize) -> usize {
    c.div_ceil(2)
}

fn fourier_value(c: usize, x: f64, period: f64, deriv: usize) -> f64 {
    if c == 0 {
        return if deriv == 0 { 1.0 / period.sqrt() } else { 0.0 };
    }
    let k = fourier_frequency(c) as f64;
    let w = 2.0 * PI * k / period;
    let arg = 2.0 * PI * k * x;
    let amp = (2.0 / period).sqrt();
    let (s, co) = arg.sin_cos();
    let is_sin = c % 2 == 1;
    match (deriv, is_sin) {
        (0, true) => amp * s,
        (0, false) => amp * co,
        (1, true) => amp * w * co,
        (1, false) => -amp * w * s,
        (_, true) => -amp * w * w * s,
        (_, false) => -amp * w * w * co,
    }
}

fn weighted_cross(b: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (r, w) in weights.iter().enumerate() {
        scaled.row_mut(r).scale_mut(*w);
    }
    let m = b.transpose() * scaled;
    (&m + m.transpose()) * 0.5
}

/// All B-spline values (or derivatives) at `u` for the clamped knot vector.
fn bspline_row(knots: &[f64], g: usize, u: f64, deriv: usize) -> Vec<f64> {
    let order = BSPLINE_ORDER;
    let nk = knots.len();
    // order-1 indicator functions on half-open spans; the right endpoint
    // belongs to the last nonempty span
    let last = *knots.last().unwrap();
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(order);
    let mut base = vec![0.0; nk - 1];
    let mut span = None;
    for i in 0..nk - 1 {
        if knots[i] < knots[i + 1] && ((u >= knots[i] && u < knots[i + 1]) || (u == last && knots[i + 1] == last)) {
            span = Some(i);
        }
    }
    if let Some(i) = span {
        base[i] = 1.0;
    }
    table.push(base);
    for k in 2..=order {
        let prev = &table[k - 2];
        let mut cur = vec![0.0; nk - k];
        for i in 0..nk - k {
            let d1 = knots[i + k - 1] - knots[i];
            let d2 = knots[i + k] - knots[i + 1];
            let left = if d1 > 0.0 { (u - knots[i]) / d1 * prev[i] } else { 0.0 };
            let right = if d2 > 0.0 { (knots[i + k] - u) / d2 * prev[i + 1] } else { 0.0 };
            cur[i] = left + right;
        }
        table.push(cur);
    }
    (0..g).map(|i| derivative_value(knots, &table, i, order, deriv)).collect()
}

fn derivative_value(knots: &[f64], table: &[Vec<f64>], i: usize, k: usize, deriv: usize) -> f64 {
    if deriv == 0 {
        return table[k - 1][i];
    }
    let d1 = knots[i + k - 1] - knots[i];
    let d2 = knots[i + k] - knots[i + 1];
    let left = if d1 > 0.0 { derivative_value(knots, table, i, k - 1, deriv - 1) / d1 } else { 0.0 };
    let right = if d2 > 0.0 { derivative_value(knots, table, i + 1, k - 1, deriv - 1) / d2 } else { 0.0 };
    (k - 1) as f64 * (left - right)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive Cox–de Boor definition, independent of the
    /// triangular table used above.
    fn cox_de_boor(knots: &[f64], i: usize, k: usize, u: f64, last: f64) -> f64 {
        if k == 1 {
            let inside = u >= knots[i] && u < knots[i + 1];
            let right_end = u == last && knots[i + 1] == last && knots[i] < knots[i + 1];
            return if inside || right_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + k - 1] - knots[i];
        if d1 > 0.0 {
            v += (u - knots[i]) / d1 * cox_de_boor(knots, i, k - 1, u, last);
        }
        let d2 = knots[i + k] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + k] - u) / d2 * cox_de_boor(knots, i + 1, k - 1, u, last);
        }
        v
    }

    #[test]
    fn fourier_constant_only() {
        let spec = BasisSpec::fourier(1).unwrap();
        let row = spec.evaluate(&[0.5]).unwrap();
        assert_eq!(row.ncols(), 1);
        assert!((row[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fourier_at_zero() {
        let spec = BasisSpec::fourier(3).unwrap();
        let row = spec.evaluate(&[0.0]).unwrap();
        assert!((row[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(row[(0, 1)].abs() < 1e-15);
        assert!((row[(0, 2)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let spec = BasisSpec::bspline(6).unwrap();
        assert!(matches!(spec.evaluate(&[1.5]), Err(VfarError::Domain { .. })));
        assert!(matches!(BasisSpec::fourier(3).unwrap().evaluate(&[-0.1]), Err(VfarError::Domain { .. })));
    }

    #[test]
    fn invalid_specs() {
        assert!(BasisSpec::new(BasisKind::Bspline, 3, [0.0, 1.0]).is_err());
        assert!(BasisSpec::new(BasisKind::Fourier, 5, [1.0, 1.0]).is_err());
        assert!(BasisSpec::fourier(5).unwrap().gram_matrices(9).is_err());
    }

    #[test]
    fn bspline_matches_recursive_definition_and_sums_to_one() {
        let spec = BasisSpec::bspline(8).unwrap();
        let knots = spec.knots();
        let pts: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let b = spec.evaluate(&pts).unwrap();
        for (r, &u) in pts.iter().enumerate() {
            let mut sum = 0.0;
            for c in 0..8 {
                let oracle = cox_de_boor(&knots, c, BSPLINE_ORDER, u, 1.0);
                assert!((b[(r, c)] - oracle).abs() < 1e-13, "u={u} c={c}");
                sum += b[(r, c)];
            }
            assert!((sum - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn bspline_second_derivative_matches_finite_differences() {
        let spec = BasisSpec::bspline(7).unwrap();
        let h = 1e-4;
        for &u in &[0.13, 0.37, 0.61, 0.88] {
            let d2 = spec.evaluate_derivative(&[u], 2).unwrap();
            let f = spec.evaluate(&[u - h, u, u + h]).unwrap();
            for c in 0..7 {
                let fd = (f[(0, c)] - 2.0 * f[(1, c)] + f[(2, c)]) / (h * h);
                assert!((d2[(0, c)] - fd).abs() < 1e-4 * (1.0 + fd.abs()), "u={u} c={c}");
            }
        }
    }

    #[test]
    fn fourier_gram_is_identity_and_matches_closed_form() {
        let spec = BasisSpec::fourier(5).unwrap();
        let quad = spec.gram_matrices(10).unwrap();
        let closed = spec.fourier_closed_form().unwrap();
        assert!((&quad.j - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
        let scale = closed.q.amax();
        assert!((&quad.j - &closed.j).amax() < 1e-10);
        assert!((&quad.q - &closed.q).amax() < 1e-10 * scale);
    }

    #[test]
    fn fourier_roughness_for_g3() {
        let spec = BasisSpec::fourier(3).unwrap();
        let gp = spec.gram_matrices(6).unwrap();
        let w4 = (2.0 * PI).powi(4);
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, w4, w4]));
        assert!((&gp.q - expect).amax() < 1e-10 * w4);
    }

    #[test]
    fn bspline_gram_matches_dense_trapezoid() {
        let spec = BasisSpec::bspline(6).unwrap();
        let gp = spec.default_gram().unwrap();
        let m = 100_000;
        let pts: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let b = spec.evaluate(&pts).unwrap();
        let h = 1.0 / m as f64;
        for a in 0..6 {
            for c in 0..6 {
                let mut s = 0.0;
                for r in 0..=m {
                    let w = if r == 0 || r == m { 0.5 * h } else { h };
                    s += w * b[(r, a)] * b[(r, c)];
                }
                assert!((gp.j[(a, c)] - s).abs() < 1e-8, "J[{a},{c}]");
            }
        }
    }

    #[test]
    fn roughness_annihilates_linear_functions() {
        // B-splines reproduce u -> a + b u through Greville abscissae
        let spec = BasisSpec::bspline(9).unwrap();
        let gp = spec.default_gram().unwrap();
        let knots = spec.knots();
        let (a, b) = (0.7, -2.3);
        let coef = nalgebra::DVector::from_iterator(
            9,
            (0..9).map(|i| {
                let greville = (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0;
                a + b * greville
            }),
        );
        let vals = spec.evaluate(&[0.0, 0.31, 1.0]).unwrap() * &coef;
        assert!((vals[1] - (a + b * 0.31)).abs() < 1e-12);
        let pen = (coef.transpose() * &gp.q * &coef)[(0, 0)];
        assert!(pen.abs() < 1e-9);
    }

    #[test]
    fn basis_spec_json_shape() {
        let spec = BasisSpec::fourier(5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"fourier","dimension":5,"domain":[0.0,1.0]}"#);
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<BasisSpec>(r#"{"kind":"bspline","dimension":2,"domain":[0,1]}"#).is_err());
    }
}
