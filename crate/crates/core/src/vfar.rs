//! VFAR models in a fixed basis, simulation generators and the companion
//! form.
//!
//! A lag-`h` block `B_jk` acts on basis coefficients, so the transition
//! kernel is `A_jk(u, v) = s(u)^T B_jk s(v)` and the coefficient process is
//! the VAR `theta_t = sum_h B_h theta_{t-h} + eta_t`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Result, VfarError};
use crate::fpca::CurvePanel;
pub use crate::linalg::spectral_radius;
use crate::{rng, serde_matrix};

pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VFARModel {
    pub lag: usize,
    pub p: usize,
    pub basis: BasisSpec,
    /// One `pG x pG` matrix per lag; block `(j, k)` is `B_jk^(h)`.
    #[serde(with = "serde_matrix::vec_of")]
    pub blocks: Vec<DMatrix<f64>>,
    pub noise_scale: f64,
    pub measurement_noise: f64,
    /// Spectral radius target drawn by the random generators.
    #[serde(default)]
    pub iota: Option<f64>,
    /// Innovations enter only the first `noise_vars` variables. Equal to `p`
    /// except for companion forms.
    pub noise_vars: usize,
}

impl VFARModel {
    pub fn new(
        basis: BasisSpec,
        p: usize,
        blocks: Vec<DMatrix<f64>>,
        noise_scale: f64,
        measurement_noise: f64,
    ) -> Result<Self> {
        let model = Self {
            lag: blocks.len(),
            p,
            basis,
            blocks,
            noise_scale,
            measurement_noise,
            iota: None,
            noise_vars: p,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.lag == 0 || self.blocks.len() != self.lag {
            return Err(VfarError::InvalidArgument(format!(
                "lag order {} with {} coefficient matrices",
                self.lag,
                self.blocks.len()
            )));
        }
        if self.p == 0 || self.blocks.iter().any(|b| b.shape() != (d, d)) {
            return Err(VfarError::InvalidArgument(format!("coefficient matrices must be {d}x{d}")));
        }
        if !(self.noise_scale > 0.0) || !(self.measurement_noise >= 0.0) {
            return Err(VfarError::InvalidArgument("noise scales must be positive / nonnegative".into()));
        }
        if self.noise_vars == 0 || self.noise_vars > self.p {
            return Err(VfarError::InvalidArgument(format!("noise_vars {} outside 1..={}", self.noise_vars, self.p)));
        }
        Ok(())
    }

    pub fn g(&self) -> usize {
        self.basis.dimension
    }

    pub fn dim(&self) -> usize {
        self.p * self.g()
    }

    pub fn block(&self, h: usize, j: usize, k: usize) -> DMatrix<f64> {
        let g = self.g();
        self.blocks[h].view((j * g, k * g), (g, g)).into_owned()
    }

    pub fn is_nonzero(&self, h: usize, j: usize, k: usize) -> bool {
        let g = self.g();
        self.blocks[h].view((j * g, k * g), (g, g)).iter().any(|&v| v != 0.0)
    }

    /// `support[j][k]` is true when some lag links `k` to `j`.
    pub fn support(&self) -> Vec<Vec<bool>> {
        (0..self.p)
            .map(|j| (0..self.p).map(|k| (0..self.lag).any(|h| self.is_nonzero(h, j, k))).collect())
            .collect()
    }

    pub fn nonzero_blocks(&self) -> usize {
        (0..self.lag)
            .map(|h| {
                (0..self.p)
                    .flat_map(|j| (0..self.p).map(move |k| (j, k)))
                    .filter(|&(j, k)| self.is_nonzero(h, j, k))
                    .count()
            })
            .sum()
    }

    /// Kernel `A_jk^(h)` on `u_points x v_points`.
    pub fn kernel(&self, h: usize, j: usize, k: usize, u_points: &[f64], v_points: &[f64]) -> Result<DMatrix<f64>> {
        let su = self.basis.evaluate(u_points)?;
        let sv = self.basis.evaluate(v_points)?;
        Ok(su * self.block(h, j, k) * sv.transpose())
    }

    /// The lag-1 coefficient matrix of the companion form.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let big = d * self.lag;
        let mut m = DMatrix::zeros(big, big);
        for (h, b) in self.blocks.iter().enumerate() {
            m.view_mut((0, h * d), (d, d)).copy_from(b);
        }
        for h in 1..self.lag {
            m.view_mut((h * d, (h - 1) * d), (d, d)).fill_with_identity();
        }
        m
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.companion_matrix())
    }

    pub fn check_stationary(&self) -> Result<()> {
        let radius = self.spectral_radius()?;
        if radius >= 1.0 {
            return Err(VfarError::Nonstationary { radius });
        }
        Ok(())
    }
}

/// Lag-`L` model as a `pL`-variable lag-1 model. Innovations stay in the
/// first `p` variables.
pub fn companion_form(model: &VFARModel) -> VFARModel {
    if model.lag == 1 {
        return model.clone();
    }
    VFARModel {
        lag: 1,
        p: model.p * model.lag,
        basis: model.basis.clone(),
        blocks: vec![model.companion_matrix()],
        noise_scale: model.noise_scale,
        measurement_noise: model.measurement_noise,
        iota: model.iota,
        noise_vars: model.noise_vars,
    }
}

fn standard_normal_block<R: Rng>(r: &mut R, g: usize) -> DMatrix<f64> {
    DMatrix::from_fn(g, g, |_, _| r.sample(StandardNormal))
}

fn rescaled<R: Rng>(basis: BasisSpec, p: usize, mut b: DMatrix<f64>, r: &mut R) -> Result<VFARModel> {
    let iota: f64 = r.sample(Uniform::new_inclusive(0.5, 1.0).expect("valid range"));
    let radius = spectral_radius(&b)?;
    if radius > 0.0 {
        b *= iota / radius;
    }
    let mut model = VFARModel::new(basis, p, vec![b], 1.0, 0.5)?;
    model.iota = Some(iota);
    Ok(model)
}

/// Block-sparse lag-1 model: `per_row_degree` standard-normal blocks per
/// block row at uniformly drawn positions, rescaled to spectral radius
/// `iota ~ U[0.5, 1]`.
pub fn gen_block_sparse(p: usize, basis: BasisSpec, per_row_degree: usize, seed: u64) -> Result<VFARModel> {
    if per_row_degree > p {
        return Err(VfarError::InvalidArgument(format!("degree {per_row_degree} exceeds p={p}")));
    }
    let g = basis.dimension;
    let mut r = rng::stream(seed, 0);
    let mut b = DMatrix::zeros(p * g, p * g);
    for j in 0..p {
        let mut cols = rand::seq::index::sample(&mut r, p, per_row_degree).into_vec();
        cols.sort_unstable();
        for k in cols {
            b.view_mut((j * g, k * g), (g, g)).copy_from(&standard_normal_block(&mut r, g));
        }
    }
    rescaled(basis, p, b, &mut r)
}

/// Banded lag-1 model: `B_jk` nonzero iff `|j - k| <= bandwidth`, rescaled
/// as in [`gen_block_sparse`].
pub fn gen_block_banded(p: usize, basis: BasisSpec, bandwidth: usize, seed: u64) -> Result<VFARModel> {
    let g = basis.dimension;
    let mut r = rng::stream(seed, 0);
    let mut b = DMatrix::zeros(p * g, p * g);
    for j in 0..p {
        for k in j.saturating_sub(bandwidth)..(j + bandwidth + 1).min(p) {
            b.view_mut((j * g, k * g), (g, g)).copy_from(&standard_normal_block(&mut r, g));
        }
    }
    rescaled(basis, p, b, &mut r)
}

/// Simulated basis-coefficient paths, one `n x G` matrix per variable.
///
/// Starts from zero and discards `burn_in` draws. Innovations come from
/// stream 0 of `seed`, so a model and its companion form produce identical
/// paths in the shared coordinates.
pub fn simulate_coefficients(model: &VFARModel, n: usize, burn_in: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    model.validate()?;
    model.check_stationary()?;
    let d = model.dim();
    let g = model.g();
    let noisy = model.noise_vars * g;
    let mut r = rng::stream(seed, 0);
    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(d); model.lag];
    let mut out = vec![DMatrix::zeros(n, g); model.p];
    for step in 0..burn_in + n {
        let mut next = DVector::zeros(d);
        for i in 0..noisy {
            next[i] = model.noise_scale * r.sample::<f64, _>(StandardNormal);
        }
        for (h, b) in model.blocks.iter().enumerate() {
            next += b * &history[h];
        }
        history.rotate_right(1);
        history[0] = next;
        if step >= burn_in {
            let t = step - burn_in;
            for (j, m) in out.iter_mut().enumerate() {
                for c in 0..g {
                    m[(t, c)] = history[0][j * g + c];
                }
            }
        }
    }
    Ok(out)
}

/// Curves `X_tj(u) = s(u)^T theta_tj` on `grid` plus i.i.d.
/// `N(0, measurement_noise^2)` errors. Measurement errors of variable `j`
/// come from stream `1 + j`.
pub fn simulate(model: &VFARModel, n: usize, grid: &[f64], burn_in: usize, seed: u64) -> Result<CurvePanel> {
    let coeffs = simulate_coefficients(model, n, burn_in, seed)?;
    let s = model.basis.evaluate(grid)?;
    let values = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut curves = c * s.transpose();
            if model.measurement_noise > 0.0 {
                let mut r = rng::stream(seed, 1 + j as u64);
                for t in 0..n {
                    for col in 0..grid.len() {
                        curves[(t, col)] += model.measurement_noise * r.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            curves
        })
        .collect();
    let ids = (0..model.p).map(|j| format!("X{}", j + 1)).collect();
    CurvePanel::new(values, grid.to_vec(), ids)
}

/// `T` equispaced points on the basis domain, endpoints included.
pub fn equispaced_grid(basis: &BasisSpec, t: usize) -> Vec<f64> {
    let [lo, hi] = basis.domain;
    (0..t).map(|s| lo + (hi - lo) * s as f64 / (t - 1) as f64).collect()
}
