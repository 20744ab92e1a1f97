//! Positive-definite kernels on `[0,1]^d`, Gram matrices and eigendecay profiles.
//!
//! Every kernel here is normalized so that `K(z, z) <= 1` on the unit cube.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

/// A state-action point embedded in `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return input_err("point must have at least one coordinate");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return input_err("point coordinates must be finite");
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

fn default_lengthscale() -> f64 {
    0.2
}

/// Kernel selection, as it appears in JSON configs:
/// `{"kind": "se", "lengthscale": 0.2}`, `{"kind": "matern", "nu": 2.5, "lengthscale": 0.2}`,
/// `{"kind": "linear", "offset": 0.5}` or `{"kind": "finite_rank", "eigenvalues": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-r^2 / (2 l^2))`.
    #[serde(rename = "se")]
    SquaredExponential {
        #[serde(default = "default_lengthscale")]
        lengthscale: f64,
    },
    /// Matérn with half-integer smoothness `nu` in {0.5, 1.5, 2.5}.
    Matern {
        nu: f64,
        #[serde(default = "default_lengthscale")]
        lengthscale: f64,
    },
    /// `(offset + <z, z'>) / (offset + d)`; bounded by 1 on `[0,1]^d`.
    Linear {
        #[serde(default)]
        offset: f64,
    },
    /// `sum_m s * sigma_m * psi_m(x) psi_m(x')` with `psi_m(x) = sqrt(2) cos(m pi x)` on `[0,1]`.
    /// The scale `s = min(1, 1 / (2 sum sigma))` keeps `K(x, x) <= 1`.
    FiniteRank { eigenvalues: Vec<f64> },
}

impl KernelSpec {
    pub fn se(lengthscale: f64) -> Self {
        KernelSpec::SquaredExponential { lengthscale }
    }

    pub fn matern(nu: f64, lengthscale: f64) -> Self {
        KernelSpec::Matern { nu, lengthscale }
    }

    pub fn finite_rank(eigenvalues: Vec<f64>) -> Self {
        KernelSpec::FiniteRank { eigenvalues }
    }

    /// Checks hyperparameters. Deserialized specs should be validated before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::SquaredExponential { lengthscale } => check_lengthscale(*lengthscale),
            KernelSpec::Matern { nu, lengthscale } => {
                if ![0.5, 1.5, 2.5].contains(nu) {
                    return input_err(format!("matern nu must be 0.5, 1.5 or 2.5, got {nu}"));
                }
                check_lengthscale(*lengthscale)
            }
            KernelSpec::Linear { offset } => {
                if !(0.0..=1.0).contains(offset) {
                    return input_err(format!("linear offset must lie in [0, 1], got {offset}"));
                }
                Ok(())
            }
            KernelSpec::FiniteRank { eigenvalues } => {
                if eigenvalues.is_empty() {
                    return input_err("finite-rank kernel needs at least one eigenvalue");
                }
                if eigenvalues.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return input_err("finite-rank eigenvalues must be positive and finite");
                }
                if eigenvalues.windows(2).any(|w| w[1] >= w[0]) {
                    return input_err("finite-rank eigenvalues must be strictly descending");
                }
                Ok(())
            }
        }
    }

    /// Input dimension the kernel is restricted to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::FiniteRank { .. } => Some(1),
            _ => None,
        }
    }

    /// `K(z, z2)`.
    pub fn eval(&self, z: &Point, z2: &Point) -> Result<f64> {
        if z.dim() != z2.dim() {
            return input_err(format!("dimension mismatch: {} vs {}", z.dim(), z2.dim()));
        }
        if let Some(d) = self.fixed_dim() {
            if z.dim() != d {
                return input_err(format!("kernel is defined on dimension {d}, got {}", z.dim()));
            }
        }
        Ok(self.k(z.coords(), z2.coords()))
    }

    /// Unchecked evaluation on raw coordinates. Callers guarantee matching dimensions.
    pub(crate) fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::SquaredExponential { lengthscale } => {
                (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelSpec::Matern { nu, lengthscale } => {
                let r = sq_dist(a, b).sqrt() / lengthscale;
                if *nu == 0.5 {
                    (-r).exp()
                } else if *nu == 1.5 {
                    let t = 3f64.sqrt() * r;
                    (1.0 + t) * (-t).exp()
                } else {
                    let t = 5f64.sqrt() * r;
                    (1.0 + t + t * t / 3.0) * (-t).exp()
                }
            }
            KernelSpec::Linear { offset } => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (offset + dot) / (offset + a.len() as f64)
            }
            KernelSpec::FiniteRank { eigenvalues } => {
                let scale = finite_rank_scale(eigenvalues);
                let (x, y) = (a[0], b[0]);
                eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let m = (i + 1) as f64;
                        2.0 * s * (m * std::f64::consts::PI * x).cos() * (m * std::f64::consts::PI * y).cos()
                    })
                    .sum::<f64>()
                    * scale
            }
        }
    }

    /// Eigenvalues actually used by a finite-rank kernel after normalization.
    pub fn effective_eigenvalues(&self) -> Option<Vec<f64>> {
        match self {
            KernelSpec::FiniteRank { eigenvalues } => {
                let scale = finite_rank_scale(eigenvalues);
                Some(eigenvalues.iter().map(|s| s * scale).collect())
            }
            _ => None,
        }
    }

    /// Eigendecay profile of the kernel on `[0,1]^dim`.
    ///
    /// SE maps to an exponential profile with `beta_e = 1/d`, Matérn to a polynomial
    /// profile with `beta_p = 1 + 2 nu / d`, and a finite-rank kernel to the tightest
    /// polynomial envelope through its declared eigenvalues.
    pub fn eigendecay(&self, dim: usize) -> Result<EigendecayProfile> {
        if dim == 0 {
            return input_err("dimension must be positive");
        }
        match self {
            KernelSpec::SquaredExponential { .. } => {
                Ok(EigendecayProfile::Exponential { c_e1: 1.0, c_e2: 1.0, beta_e: 1.0 / dim as f64 })
            }
            KernelSpec::Matern { nu, .. } => {
                Ok(EigendecayProfile::Polynomial { c_p: 1.0, beta_p: 1.0 + 2.0 * nu / dim as f64 })
            }
            KernelSpec::FiniteRank { eigenvalues } => Ok(fit_polynomial(eigenvalues)),
            KernelSpec::Linear { .. } => Err(Error::UnsupportedProfile(
                "linear kernel has finite rank d; describe it as a finite-rank kernel instead".into(),
            )),
        }
    }
}

fn check_lengthscale(l: f64) -> Result<()> {
    if !(l.is_finite() && l > 0.0) {
        return input_err(format!("lengthscale must be positive, got {l}"));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn finite_rank_scale(eigenvalues: &[f64]) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    (0.5 / total).min(1.0)
}

fn fit_polynomial(sigma: &[f64]) -> EigendecayProfile {
    let c_p = sigma[0];
    let fitted = sigma
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, s)| -(s / c_p).ln() / ((i + 1) as f64).ln())
        .fold(f64::INFINITY, f64::min);
    if fitted.is_finite() && fitted > 1.0 {
        return EigendecayProfile::Polynomial { c_p, beta_p: fitted };
    }
    // Too few or too slowly decaying eigenvalues: pin the exponent and grow the constant.
    let beta_p = if fitted.is_finite() { 1.5 } else { 2.0 };
    let c_p = sigma.iter().enumerate().map(|(i, s)| s * ((i + 1) as f64).powf(beta_p)).fold(0.0, f64::max);
    EigendecayProfile::Polynomial { c_p, beta_p }
}

/// Gram matrix `[K(z_i, z_j)]`.
pub fn gram(k: &KernelSpec, pts: &[Point]) -> Result<DMatrix<f64>> {
    let first = pts.first().ok_or_else(|| Error::Input("gram of an empty point list".into()))?;
    check_dims(k, pts, first.dim())?;
    let n = pts.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = k.k(pts[i].coords(), pts[j].coords());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

pub(crate) fn check_dims(k: &KernelSpec, pts: &[Point], dim: usize) -> Result<()> {
    if let Some(p) = pts.iter().find(|p| p.dim() != dim) {
        return input_err(format!("dimension mismatch: {} vs {dim}", p.dim()));
    }
    if let Some(d) = k.fixed_dim() {
        if d != dim {
            return input_err(format!("kernel is defined on dimension {d}, got {dim}"));
        }
    }
    Ok(())
}

/// Mercer eigendecay envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigendecayProfile {
    /// `sigma_m <= c_p m^-beta_p`, `beta_p > 1`.
    Polynomial { c_p: f64, beta_p: f64 },
    /// `sigma_m <= c_e1 exp(-c_e2 m^beta_e)`.
    Exponential { c_e1: f64, c_e2: f64, beta_e: f64 },
}

impl EigendecayProfile {
    /// Envelope value at index `m >= 1`.
    pub fn envelope(&self, m: usize) -> f64 {
        let m = m as f64;
        match *self {
            EigendecayProfile::Polynomial { c_p, beta_p } => c_p * m.powf(-beta_p),
            EigendecayProfile::Exponential { c_e1, c_e2, beta_e } => c_e1 * (-c_e2 * m.powf(beta_e)).exp(),
        }
    }

    /// True if every listed eigenvalue (index from 1) sits under the envelope.
    pub fn dominates(&self, sigma: &[f64]) -> bool {
        sigma.iter().enumerate().all(|(i, s)| *s <= self.envelope(i + 1) * (1.0 + 1e-12))
    }
}

/// Leading-order information gain bound with unit constant:
/// `J^(1/beta_p) (ln J)^(1 - 1/beta_p)` for polynomial decay and
/// `(ln J)^(1 + 1/beta_e)` for exponential decay.
///
/// Only meaningful for scaling comparisons. The regularization parameter enters the
/// hidden constant and is accepted for interface symmetry.
pub fn theoretical_info_gain_bound(profile: &EigendecayProfile, j: usize, lambda: f64) -> Result<f64> {
    if j < 2 {
        return input_err(format!("information gain bound needs J >= 2, got {j}"));
    }
    if !(lambda > 0.0) {
        return input_err("lambda must be positive");
    }
    let log_j = (j as f64).ln();
    Ok(match *profile {
        EigendecayProfile::Polynomial { beta_p, .. } => {
            (j as f64).powf(1.0 / beta_p) * log_j.powf(1.0 - 1.0 / beta_p)
        }
        EigendecayProfile::Exponential { beta_e, .. } => log_j.powf(1.0 + 1.0 / beta_e),
    })
}
