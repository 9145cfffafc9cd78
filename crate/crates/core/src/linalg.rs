//! Dense symmetric positive-definite matrices with a cached Cholesky
//! factorization.
//!
//! Every noise distribution in this crate measures distances in the
//! `Σ⁻¹` metric, so the factorization is computed once at construction:
//! `Σ = C·Cᵀ` (Cholesky, `C` lower) and `L = C⁻¹`, giving `Σ⁻¹ = Lᵀ·L`
//! and `‖u‖_{Σ⁻¹} = ‖L·u‖₂`.

use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Symmetric positive-definite matrix with cached factors.
#[derive(Debug, Clone)]
pub struct Spd {
    sigma: Array2<f64>,
    /// Lower Cholesky factor: sigma = chol · cholᵀ.
    chol: Array2<f64>,
    /// Whitening factor L = chol⁻¹ (lower triangular), so Σ⁻¹ = Lᵀ·L.
    whiten: Array2<f64>,
}

impl Spd {
    /// Factorize a dense SPD matrix. Fails on asymmetry or non-positive pivots.
    pub fn new(sigma: Array2<f64>) -> Result<Self> {
        let n = sigma.nrows();
        if sigma.ncols() != n {
            return Err(Error::NotPositiveDefinite(format!(
                "matrix is {}x{}, not square",
                n,
                sigma.ncols()
            )));
        }
        let scale = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (sigma[[i, j]] - sigma[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        sigma[[i, j]],
                        sigma[[j, i]]
                    )));
                }
            }
        }
        let chol = cholesky_lower(&sigma)?;
        let whiten = invert_lower(&chol);
        Ok(Self { sigma, chol, whiten })
    }

    /// Identity covariance of the given dimension.
    pub fn identity(n: usize) -> Self {
        Self::new(Array2::eye(n)).expect("identity is SPD")
    }

    /// Isotropic covariance `s² · I`.
    pub fn isotropic(n: usize, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "std",
                reason: format!("must be positive and finite, got {std}"),
            });
        }
        Self::new(Array2::eye(n) * (std * std))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> ArrayView2<'_, f64> {
        self.sigma.view()
    }

    /// Lower Cholesky factor C with Σ = C·Cᵀ (valid as a Σ^{1/2} for sampling).
    pub fn chol_lower(&self) -> ArrayView2<'_, f64> {
        self.chol.view()
    }

    /// Whitening factor L with Σ⁻¹ = Lᵀ·L.
    pub fn whiten_factor(&self) -> ArrayView2<'_, f64> {
        self.whiten.view()
    }

    /// Mahalanobis norm ‖u‖_{Σ⁻¹} = ‖L·u‖₂.
    pub fn mahalanobis(&self, u: ArrayView1<'_, f64>) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let w = self.whiten.dot(&u);
        Ok(w.dot(&w).sqrt())
    }

    /// Σ⁻¹ · v computed as Lᵀ·(L·v).
    pub fn sigma_inv_apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let w = self.whiten.dot(&v);
        self.whiten.t().dot(&w)
    }

    /// Σ · v.
    pub fn sigma_apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.sigma.dot(&v)
    }

    /// Rescaled covariance `s² · Σ`, reusing the cached factors.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be positive and finite, got {s}"),
            });
        }
        Ok(Self {
            sigma: &self.sigma * (s * s),
            chol: &self.chol * s,
            whiten: &self.whiten / s,
        })
    }

    /// Max-norm of Lᵀ·L·Σ − I; construction guarantees this is tiny.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.dim();
        let prod = self.whiten.t().dot(&self.whiten).dot(&self.sigma);
        let mut resid = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                resid = resid.max((prod[[i, j]] - target).abs());
            }
        }
        resid
    }
}

/// A random well-conditioned SPD matrix A·Aᵀ + c·I with eigenvalues
/// bounded away from zero; used by randomized checks throughout.
pub fn random_spd<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Spd {
    let a = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
    let mut sigma = a.dot(&a.t());
    for i in 0..n {
        sigma[[i, i]] += 0.3 + rng.gen_range(0.0..0.5);
    }
    Spd::new(sigma).expect("A·Aᵀ + cI is SPD")
}

/// Random weights that sum to zero exactly (last entry balances the rest).
pub fn random_zero_sum_weights<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.push(-s);
    w
}

/// Lower Cholesky factor of an SPD matrix.
fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {i} is {s:e}"
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn invert_lower(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for col in 0..n {
        let mut x = Array1::<f64>::zeros(n);
        x[col] = 1.0;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[[i, k]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        for i in 0..n {
            inv[[i, col]] = x[i];
        }
    }
    inv
}
