//! Mahalanobis energy scores and the energy distance.
//!
//! The (negative-convention) energy score of a predictive sample batch
//! {X₁..X_N} against an observation y is
//!
//! ```text
//! ES(X, y) = mean_i ‖Xᵢ − y‖^β  −  ½ · mean_{i≠j} ‖Xᵢ − Xⱼ‖^β
//! ```
//!
//! with all norms taken in the ‖·‖_{Σ⁻¹} metric. Both the pairwise term and
//! the energy distance use diagonal-excluded U-statistics. Propriety of the
//! Mahalanobis score for β ∈ (0, 2] is checked numerically via conditional
//! negative definiteness of the kernel ‖x − x′‖^β_{Σ⁻¹}.

use crate::linalg::Spd;
use crate::{Error, Result};
use ndarray::{Array1, ArrayView1, ArrayView2};

/// Tie threshold below which distinct points are treated as coincident.
pub const TIE_EPS: f64 = 1e-12;

/// Energy-score parameters: exponent β ∈ (0, 2] and the metric geometry.
#[derive(Debug, Clone)]
pub struct EnergyScoreParams {
    beta: f64,
    /// `None` means Euclidean geometry (Σ = I at any dimension).
    sigma: Option<Spd>,
}

impl EnergyScoreParams {
    /// Euclidean geometry. β must lie in (0, 2], where the score is proper.
    pub fn euclidean(beta: f64) -> Result<Self> {
        Self::check_beta(beta)?;
        Ok(Self { beta, sigma: None })
    }

    /// Mahalanobis geometry with the given covariance.
    pub fn with_sigma(beta: f64, sigma: Spd) -> Result<Self> {
        Self::check_beta(beta)?;
        Ok(Self {
            beta,
            sigma: Some(sigma),
        })
    }

    fn check_beta(beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta <= 2.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("energy score requires beta in (0, 2], got {beta}"),
            });
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> Option<&Spd> {
        self.sigma.as_ref()
    }

    fn norm(&self, diff: ArrayView1<'_, f64>) -> Result<f64> {
        match &self.sigma {
            Some(s) => s.mahalanobis(diff),
            None => Ok(diff.dot(&diff).sqrt()),
        }
    }

    fn sigma_inv_apply(&self, v: Array1<f64>) -> Array1<f64> {
        match &self.sigma {
            Some(s) => s.sigma_inv_apply(v.view()),
            None => v,
        }
    }
}

/// U-statistic Monte-Carlo energy score of a sample batch against y.
pub fn energy_score_mc(
    samples: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    es: &EnergyScoreParams,
) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::BatchTooSmall { need: 2, got: n });
    }
    let beta = es.beta();
    let mut first = 0.0;
    for row in samples.rows() {
        let diff = &row - &y;
        first += es.norm(diff.view())?.powf(beta);
    }
    first /= n as f64;

    let mut pair = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &samples.row(i) - &samples.row(j);
            pair += es.norm(diff.view())?.powf(beta);
        }
    }
    // Unordered pairs counted once; the ordered-pair U-statistic mean doubles them.
    pair *= 2.0 / (n as f64 * (n - 1) as f64);

    Ok(first - 0.5 * pair)
}

/// Path-derivative gradient of the energy score in y, holding the sample
/// batch fixed:
///
/// ```text
/// ∇ᵧ ES = −β · Σ⁻¹ · mean_i ‖Xᵢ − y‖^{β−2} · (Xᵢ − y)
/// ```
///
/// Only the first term of the score depends on y; the pairwise term
/// contributes nothing.
pub fn energy_score_path_grad(
    samples: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    es: &EnergyScoreParams,
) -> Result<Array1<f64>> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::BatchTooSmall { need: 1, got: n });
    }
    let beta = es.beta();
    let mut acc = Array1::<f64>::zeros(y.len());
    for (index, row) in samples.rows().into_iter().enumerate() {
        let diff = &row - &y;
        let r = es.norm(diff.view())?;
        if r < TIE_EPS && beta < 2.0 {
            return Err(Error::SampleCoincidence { index, beta });
        }
        let w = if beta == 2.0 { 1.0 } else { r.powf(beta - 2.0) };
        acc.scaled_add(w, &diff);
    }
    acc *= -beta / n as f64;
    Ok(es.sigma_inv_apply(acc))
}

/// U-statistic energy distance between two sample batches,
/// `2·Ê‖X−Y‖^β − Ê‖X−X′‖^β − Ê‖Y−Y′‖^β`, clipped at zero.
///
/// The cross term is accumulated in both loop orders and averaged so the
/// result is exactly symmetric in its arguments.
pub fn energy_distance(
    xs: ArrayView2<'_, f64>,
    ys: ArrayView2<'_, f64>,
    es: &EnergyScoreParams,
) -> Result<f64> {
    let (nx, ny) = (xs.nrows(), ys.nrows());
    if nx < 2 {
        return Err(Error::BatchTooSmall { need: 2, got: nx });
    }
    if ny < 2 {
        return Err(Error::BatchTooSmall { need: 2, got: ny });
    }
    let beta = es.beta();

    let within = |b: ArrayView2<'_, f64>| -> Result<f64> {
        let m = b.nrows();
        let mut acc = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let diff = &b.row(i) - &b.row(j);
                acc += es.norm(diff.view())?.powf(beta);
            }
        }
        Ok(acc * 2.0 / (m as f64 * (m - 1) as f64))
    };

    let cross_major = |a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>| -> Result<f64> {
        let mut acc = 0.0;
        for ra in a.rows() {
            for rb in b.rows() {
                let diff = &ra - &rb;
                acc += es.norm(diff.view())?.powf(beta);
            }
        }
        Ok(acc)
    };

    let cross =
        (cross_major(xs, ys)? + cross_major(ys, xs)?) / (2.0 * nx as f64 * ny as f64);
    Ok((2.0 * cross - within(xs)? - within(ys)?).max(0.0))
}

/// Quadratic form Σᵢⱼ aᵢaⱼ ‖xᵢ − xⱼ‖^β_{Σ⁻¹} for zero-sum weights a.
///
/// Conditional negative definiteness of the β-power Mahalanobis kernel —
/// the form staying ≤ 0 over all zero-sum weightings — is what makes the
/// corresponding energy score proper; β > 2 breaks it.
pub fn cnd_quadratic_form(
    points: ArrayView2<'_, f64>,
    weights: &[f64],
    beta: f64,
    sigma: &Spd,
) -> Result<f64> {
    let m = points.nrows();
    if weights.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: weights.len(),
        });
    }
    let wsum: f64 = weights.iter().sum();
    if wsum.abs() >= 1e-12 {
        return Err(Error::WeightsNotZeroSum(wsum.abs()));
    }
    let mut acc = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let diff = &points.row(i) - &points.row(j);
            let d = sigma.mahalanobis(diff.view())?;
            acc += 2.0 * weights[i] * weights[j] * d.powf(beta);
        }
    }
    Ok(acc)
}
