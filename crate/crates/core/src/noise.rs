//! Elliptical noise distributions.
//!
//! The noising kernels used throughout the crate have log-density
//! proportional to a central potential of the Mahalanobis distance,
//! `q(u) ∝ exp(−V(‖u‖_{Σ⁻¹}))`. The generalized Gaussian sub-family uses
//! the power-law potential `V(r) = (λ/β)·r^β`: `β = 2` is the Gaussian,
//! `β = 1` the multivariate Laplace, `β < 2` heavy-tailed.

use crate::linalg::Spd;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters (β, λ, Σ) of a generalized Gaussian elliptical distribution
/// `q(u) ∝ exp(−(λ/β)·‖u‖^β_{Σ⁻¹})`.
#[derive(Debug, Clone)]
pub struct GenGaussParams {
    beta: f64,
    lambda: f64,
    sigma: Spd,
}

impl GenGaussParams {
    pub fn new(beta: f64, lambda: f64, sigma: Spd) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be in (0, inf), got {beta}"),
            });
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        Ok(Self { beta, lambda, sigma })
    }

    /// Isotropic noise with covariance factor `std² · I`.
    pub fn isotropic(beta: f64, lambda: f64, dim: usize, std: f64) -> Result<Self> {
        Self::new(beta, lambda, Spd::isotropic(dim, std)?)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma(&self) -> &Spd {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Same (β, λ) with covariance rescaled to `s² · Σ`.
    pub fn with_sigma_scaled(&self, s: f64) -> Result<Self> {
        Ok(Self {
            beta: self.beta,
            lambda: self.lambda,
            sigma: self.sigma.scaled(s)?,
        })
    }
}

/// JSON wire form: `{beta, lambda, sigma}` with sigma flattened row-major.
#[derive(Serialize, Deserialize)]
struct GenGaussParamsWire {
    beta: f64,
    lambda: f64,
    sigma: Vec<f64>,
}

impl Serialize for GenGaussParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GenGaussParamsWire {
            beta: self.beta,
            lambda: self.lambda,
            sigma: self.sigma.sigma().iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GenGaussParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let wire = GenGaussParamsWire::deserialize(d)?;
        let n = (wire.sigma.len() as f64).sqrt().round() as usize;
        if n * n != wire.sigma.len() {
            return Err(D::Error::custom(format!(
                "sigma has {} entries, not a square",
                wire.sigma.len()
            )));
        }
        let sigma = Array2::from_shape_vec((n, n), wire.sigma)
            .map_err(|e| D::Error::custom(e.to_string()))?;
        GenGaussParams::new(
            wire.beta,
            wire.lambda,
            Spd::new(sigma).map_err(|e| D::Error::custom(e.to_string()))?,
        )
        .map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// A central potential V on [0, ∞) defining an elliptical kernel
/// `q(u) ∝ exp(−V(‖u‖_{Σ⁻¹}))`.
///
/// Two concrete potentials ship; anything differentiable with the same
/// shape slots in as a new variant.
#[derive(Debug, Clone, Copy)]
pub enum Potential {
    /// `V(r) = λ·r^β / β` — the generalized Gaussian family.
    PowerLaw { beta: f64, lambda: f64 },
    /// `V(r) = ((ν+n)/2)·log(1 + r²/ν)` — Student-t-like heavy tails.
    StudentT { nu: f64, dim: usize },
}

impl Potential {
    pub fn power_law(beta: f64, lambda: f64) -> Self {
        Potential::PowerLaw { beta, lambda }
    }

    pub fn student_t(nu: f64, dim: usize) -> Self {
        Potential::StudentT { nu, dim }
    }

    /// The potential matching a generalized Gaussian parameter set.
    pub fn matching(params: &GenGaussParams) -> Self {
        Potential::PowerLaw {
            beta: params.beta(),
            lambda: params.lambda(),
        }
    }

    pub fn v(&self, r: f64) -> f64 {
        match *self {
            Potential::PowerLaw { beta, lambda } => lambda * r.powf(beta) / beta,
            Potential::StudentT { nu, dim } => {
                0.5 * (nu + dim as f64) * (1.0 + r * r / nu).ln()
            }
        }
    }

    pub fn v_prime(&self, r: f64) -> f64 {
        match *self {
            Potential::PowerLaw { beta, lambda } => lambda * r.powf(beta - 1.0),
            Potential::StudentT { nu, dim } => {
                (nu + dim as f64) * (r / nu) / (1.0 + r * r / nu)
            }
        }
    }

    /// V′(r)/r, the radial weight of the kernel score. `None` when the
    /// ratio diverges as r → 0 (power law with β < 2).
    fn v_prime_over_r(&self, r: f64) -> Option<f64> {
        match *self {
            Potential::PowerLaw { beta, lambda } => {
                if r == 0.0 {
                    if beta < 2.0 {
                        None
                    } else if beta == 2.0 {
                        Some(lambda)
                    } else {
                        Some(0.0)
                    }
                } else {
                    Some(lambda * r.powf(beta - 2.0))
                }
            }
            Potential::StudentT { nu, dim } => {
                Some((nu + dim as f64) / nu / (1.0 + r * r / nu))
            }
        }
    }
}

/// Mahalanobis norm ‖u‖_{Σ⁻¹} under the params' covariance.
pub fn mahalanobis_norm(u: ArrayView1<'_, f64>, params: &GenGaussParams) -> Result<f64> {
    params.sigma().mahalanobis(u)
}

/// Exact i.i.d. draws from `q(u) ∝ exp(−(λ/β)‖u‖^β_{Σ⁻¹})`.
///
/// Radial–directional decomposition: with t ~ Gamma(n/β, 1) the radius
/// r = (β·t/λ)^{1/β} has the marginal radial law of q, a uniform sphere
/// direction supplies the angles, and any A with A·Aᵀ = Σ (here the
/// Cholesky factor) maps the whitened draw to Σ-geometry.
pub fn gg_sample<R: Rng + ?Sized>(
    params: &GenGaussParams,
    count: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: "need at least one draw".into(),
        });
    }
    let n = params.dim();
    let gamma = Gamma::new(n as f64 / params.beta(), 1.0).map_err(|e| Error::InvalidParameter {
        name: "beta",
        reason: e.to_string(),
    })?;
    let chol = params.sigma().chol_lower();
    let mut out = Array2::<f64>::zeros((count, n));
    let mut dir = Array1::<f64>::zeros(n);
    for mut row in out.rows_mut() {
        let t: f64 = gamma.sample(rng);
        let r = (params.beta() * t / params.lambda()).powf(1.0 / params.beta());
        loop {
            for d in dir.iter_mut() {
                *d = rng.sample(StandardNormal);
            }
            let norm = dir.dot(&dir).sqrt();
            if norm > 1e-12 {
                dir /= norm;
                break;
            }
        }
        row.assign(&chol.dot(&(&dir * r)));
    }
    Ok(out)
}

/// Unnormalized log-density −(λ/β)·‖u‖^β_{Σ⁻¹}.
pub fn gg_log_density_unnorm(params: &GenGaussParams, u: ArrayView1<'_, f64>) -> Result<f64> {
    let r = mahalanobis_norm(u, params)?;
    Ok(-params.lambda() / params.beta() * r.powf(params.beta()))
}

/// Unnormalized log-density −V(‖u‖_{Σ⁻¹}) for an arbitrary central potential.
pub fn elliptic_log_density_unnorm(
    potential: &Potential,
    u: ArrayView1<'_, f64>,
    params: &GenGaussParams,
) -> Result<f64> {
    let r = mahalanobis_norm(u, params)?;
    Ok(-potential.v(r))
}

/// Score of the noising kernel, ∇_u log q(u) = −(V′(r)/r)·Σ⁻¹·u with
/// r = ‖u‖_{Σ⁻¹}.
///
/// At u = 0 the score is 0 whenever V′(r)/r has a finite limit (power law
/// with β ≥ 2, Student-t); for β < 2 the coincidence is a hard error.
pub fn elliptic_kernel_score(
    potential: &Potential,
    u: ArrayView1<'_, f64>,
    params: &GenGaussParams,
) -> Result<Array1<f64>> {
    let r = mahalanobis_norm(u, params)?;
    match potential.v_prime_over_r(r) {
        Some(w) => Ok(params.sigma().sigma_inv_apply(u).mapv_into(|x| -w * x)),
        None => {
            let beta = match potential {
                Potential::PowerLaw { beta, .. } => *beta,
                Potential::StudentT { .. } => unreachable!("student-t weight is finite"),
            };
            Err(Error::KernelSingularity { beta })
        }
    }
}
