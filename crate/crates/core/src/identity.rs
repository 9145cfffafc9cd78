//! Score identities as Monte-Carlo estimators.
//!
//! Given samples X₁..X_N from the denoising posterior P(X | Y = y) under
//! generalized Gaussian noise (β, λ, Σ), the Stein score of the noisy
//! marginal is estimated by
//!
//! ```text
//! ŝ_m(y) = −λ · Σ⁻¹ · mean_i ‖y − Xᵢ‖^{β−2}_{Σ⁻¹} · (y − Xᵢ)
//! ```
//!
//! which algebraically equals −(λ/β) times the path gradient of the
//! parameter-matched Mahalanobis energy score. At β = 2, λ = 1 this
//! collapses to Tweedie's formula: the posterior mean is y + Σ·ŝ_m(y).
//!
//! The same machinery estimates the *clean* score by shrinking the noise
//! scale: with Σ = ε²Σ₀ the estimate converges to ∇log p(y) as ε ↓ 0, and
//! Richardson extrapolation across two scales cancels the leading ε² bias.

use crate::escore::TIE_EPS;
use crate::linalg::Spd;
use crate::noise::{GenGaussParams, Potential};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::RngCore;

/// A Monte-Carlo Stein-score estimate together with its provenance.
#[derive(Debug, Clone)]
pub struct ScoreEstimate {
    pub value: Array1<f64>,
    pub n_samples: usize,
    pub params: GenGaussParams,
}

/// Source of samples from the denoising posterior P(X | Y = y) at a given
/// noise scale.
///
/// The scale σ multiplies the sampler's base covariance: the effective noise
/// is (β, λ, σ²Σ₀). Schedules map their time index t to σ before calling in.
pub trait PosteriorSampler {
    fn dim(&self) -> usize;

    /// Draw `count` posterior samples at noise scale `sigma_scale`.
    fn sample_at_scale(
        &self,
        y: ArrayView1<'_, f64>,
        sigma_scale: f64,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Array2<f64>>;
}

/// Shared accumulation for the weighted-residual estimators: returns
/// mean_i w(rᵢ)·(y − Xᵢ) with w supplied per radius.
fn weighted_residual_mean(
    samples: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    params: &GenGaussParams,
    weight: impl Fn(f64) -> Option<f64>,
) -> Result<Array1<f64>> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::BatchTooSmall { need: 1, got: 0 });
    }
    if samples.ncols() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: samples.ncols(),
        });
    }
    let mut acc = Array1::<f64>::zeros(y.len());
    for (index, row) in samples.rows().into_iter().enumerate() {
        let diff = &y - &row;
        let r = params.sigma().mahalanobis(diff.view())?;
        match weight(r) {
            Some(w) => acc.scaled_add(w, &diff),
            None => {
                return Err(Error::SampleCoincidence {
                    index,
                    beta: params.beta(),
                })
            }
        }
    }
    acc /= n as f64;
    Ok(acc)
}

/// Noisy-marginal score estimate from posterior samples (the Monte-Carlo
/// form of the energy-score identity).
pub fn noisy_score_mc(
    posterior_samples: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    params: &GenGaussParams,
) -> Result<ScoreEstimate> {
    let beta = params.beta();
    let mean = weighted_residual_mean(posterior_samples, y, params, |r| {
        if r < TIE_EPS && beta < 2.0 {
            None
        } else if beta == 2.0 {
            Some(1.0)
        } else {
            Some(r.powf(beta - 2.0))
        }
    })?;
    let value = params
        .sigma()
        .sigma_inv_apply(mean.view())
        .mapv_into(|x| -params.lambda() * x);
    finite_or_err(&value, "noisy_score_mc")?;
    Ok(ScoreEstimate {
        value,
        n_samples: posterior_samples.nrows(),
        params: params.clone(),
    })
}

/// Elliptical-noise score estimate −mean_i ∇_y V(‖y − Xᵢ‖_{Σ⁻¹}); for
/// power-law potentials this coincides with [`noisy_score_mc`].
pub fn elliptic_score_mc(
    posterior_samples: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    potential: &Potential,
    params: &GenGaussParams,
) -> Result<ScoreEstimate> {
    let tie_guard = match potential {
        Potential::PowerLaw { beta, .. } if *beta < 2.0 => Some(*beta),
        _ => None,
    };
    let mean = weighted_residual_mean(posterior_samples, y, params, |r| {
        if tie_guard.is_some() && r < TIE_EPS {
            return None;
        }
        potential_weight(potential, r)
    })?;
    let value = params.sigma().sigma_inv_apply(mean.view()).mapv_into(|x| -x);
    finite_or_err(&value, "elliptic_score_mc")?;
    Ok(ScoreEstimate {
        value,
        n_samples: posterior_samples.nrows(),
        params: params.clone(),
    })
}

fn potential_weight(potential: &Potential, r: f64) -> Option<f64> {
    match *potential {
        Potential::PowerLaw { beta, lambda } => {
            if r == 0.0 {
                match beta {
                    b if b < 2.0 => None,
                    b if b == 2.0 => Some(lambda),
                    _ => Some(0.0),
                }
            } else {
                Some(lambda * r.powf(beta - 2.0))
            }
        }
        Potential::StudentT { nu, dim } => Some((nu + dim as f64) / nu / (1.0 + r * r / nu)),
    }
}

fn finite_or_err(v: &Array1<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Tweedie posterior mean y + Σ·s given a score estimate at y.
pub fn tweedie_posterior_mean(
    y: ArrayView1<'_, f64>,
    score: ArrayView1<'_, f64>,
    sigma: &Spd,
) -> Result<Array1<f64>> {
    if y.len() != sigma.dim() || score.len() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            got: y.len().max(score.len()),
        });
    }
    Ok(&y + &sigma.sigma_apply(score))
}

/// Clean-score estimate at shrunken noise scale ε: draws posterior samples
/// at Σ = ε²Σ₀ and applies the identity there. Bias vanishes as ε ↓ 0.
pub fn clean_score_eps(
    sampler: &dyn PosteriorSampler,
    y: ArrayView1<'_, f64>,
    eps: f64,
    params0: &GenGaussParams,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Array1<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must be positive, got {eps}"),
        });
    }
    let params_eps = params0.with_sigma_scaled(eps)?;
    let samples = sampler.sample_at_scale(y, eps, count, rng)?;
    Ok(noisy_score_mc(samples.view(), y, &params_eps)?.value)
}

/// Richardson extrapolation across two scales: cancels the O(ε²) bias of
/// any ε-indexed score estimator, leaving O(ε⁴).
pub fn clean_score_richardson(
    mut score_at_eps: impl FnMut(f64) -> Result<Array1<f64>>,
    eps1: f64,
    eps2: f64,
) -> Result<Array1<f64>> {
    if !(eps1 > 0.0 && eps2 > 0.0) || !eps1.is_finite() || !eps2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("scales must be positive, got {eps1}, {eps2}"),
        });
    }
    if eps1 == eps2 {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "extrapolation needs two distinct scales".into(),
        });
    }
    let s1 = score_at_eps(eps1)?;
    let s2 = score_at_eps(eps2)?;
    let (e1, e2) = (eps1 * eps1, eps2 * eps2);
    Ok((&s1 * e2 - &s2 * e1) / (e2 - e1))
}

/// Self-adjointness residual of the denoiser f(y) = y + Σ·s(y) in the Σ⁻¹
/// geometry: ‖JᵀΣ⁻¹ − Σ⁻¹J‖_max with J the central-difference Jacobian.
///
/// Ideal (conservative) denoisers have residual ~0; the size of the
/// violation is a direct misspecification signal for the score field.
pub fn denoiser_selfadjointness_residual(
    score_field: &dyn Fn(ArrayView1<'_, f64>) -> Array1<f64>,
    y: ArrayView1<'_, f64>,
    sigma: &Spd,
    fd_step: f64,
) -> f64 {
    let n = y.len();
    let f = |point: ArrayView1<'_, f64>| -> Array1<f64> {
        &point + &sigma.sigma_apply(score_field(point).view())
    };
    let mut jac = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let mut yp = y.to_owned();
        let mut ym = y.to_owned();
        yp[k] += fd_step;
        ym[k] -= fd_step;
        let col = (f(yp.view()) - f(ym.view())) / (2.0 * fd_step);
        for i in 0..n {
            jac[[i, k]] = col[i];
        }
    }
    let sigma_inv = sigma.whiten_factor().t().dot(&sigma.whiten_factor());
    let lhs = jac.t().dot(&sigma_inv);
    let rhs = sigma_inv.dot(&jac);
    lhs.iter()
        .zip(rhs.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escore::{energy_score_path_grad, EnergyScoreParams};
    use crate::linalg::random_spd;
    use crate::noise::elliptic_kernel_score;
    use crate::rng::stream;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_batch(n: usize, dim: usize, rng: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, dim), |_| 2.0 * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn identity_with_path_gradient() {
        let mut rng = stream(77);
        for _ in 0..50 {
            let dim = rng.gen_range(1..4);
            let beta = 0.4 + 1.6 * rng.gen::<f64>();
            let lambda = 0.2 + 3.0 * rng.gen::<f64>();
            let sigma = random_spd(dim, &mut rng);
            let params = GenGaussParams::new(beta, lambda, sigma.clone()).unwrap();
            let es = EnergyScoreParams::with_sigma(beta, sigma).unwrap();
            let samples = random_batch(rng.gen_range(1..12), dim, &mut rng);
            let y = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));

            let direct = noisy_score_mc(samples.view(), y.view(), &params).unwrap().value;
            let via_es = energy_score_path_grad(samples.view(), y.view(), &es)
                .unwrap()
                .mapv_into(|g| -(lambda / beta) * g);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for k in 0..dim {
                assert!(
                    (direct[k] - via_es[k]).abs() / scale < 1e-12,
                    "component {k}: {} vs {}",
                    direct[k],
                    via_es[k]
                );
            }
        }
    }

    #[test]
    fn tweedie_reduction_recovers_sample_mean() {
        let mut rng = stream(101);
        for _ in 0..50 {
            let dim = rng.gen_range(1..4);
            let sigma = random_spd(dim, &mut rng);
            let params = GenGaussParams::new(2.0, 1.0, sigma.clone()).unwrap();
            let samples = random_batch(rng.gen_range(2..10), dim, &mut rng);
            let y = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
            let score = noisy_score_mc(samples.view(), y.view(), &params).unwrap().value;
            let mean = tweedie_posterior_mean(y.view(), score.view(), &sigma).unwrap();
            let xbar = samples.mean_axis(ndarray::Axis(0)).unwrap();
            for k in 0..dim {
                assert!(
                    (mean[k] - xbar[k]).abs() / xbar[k].abs().max(1.0) < 1e-12,
                    "{} vs {}",
                    mean[k],
                    xbar[k]
                );
            }
        }
    }

    #[test]
    fn point_mass_posterior_matches_kernel_score() {
        let params = GenGaussParams::isotropic(1.4, 1.8, 2, 0.9).unwrap();
        let x0 = array![0.4, -0.7];
        let y = array![1.0, 0.5];
        let batch = Array2::from_shape_fn((6, 2), |(_, j)| x0[j]);
        let est = noisy_score_mc(batch.view(), y.view(), &params).unwrap().value;
        let u = &y - &x0;
        let pot = Potential::matching(&params);
        let kernel = elliptic_kernel_score(&pot, u.view(), &params).unwrap();
        for k in 0..2 {
            assert!((est[k] - kernel[k]).abs() < 1e-12, "{est} vs {kernel}");
        }
    }

    #[test]
    fn elliptic_power_law_equals_noisy() {
        let mut rng = stream(13);
        let sigma = random_spd(2, &mut rng);
        let params = GenGaussParams::new(1.3, 2.2, sigma).unwrap();
        let pot = Potential::matching(&params);
        let samples = random_batch(8, 2, &mut rng);
        let y = array![0.2, 0.1];
        let a = noisy_score_mc(samples.view(), y.view(), &params).unwrap().value;
        let b = elliptic_score_mc(samples.view(), y.view(), &pot, &params)
            .unwrap()
            .value;
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn student_t_point_mass_matches_log_kernel_gradient() {
        let params = GenGaussParams::isotropic(2.0, 1.0, 2, 1.0).unwrap();
        let pot = Potential::student_t(3.0, 2);
        let x0 = array![0.3, 0.6];
        let y = array![1.1, -0.4];
        let batch = Array2::from_shape_fn((4, 2), |(_, j)| x0[j]);
        let est = elliptic_score_mc(batch.view(), y.view(), &pot, &params)
            .unwrap()
            .value;
        // Central finite difference of log q(y - x0) in y.
        let h = 1e-6;
        for k in 0..2 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            let up = &yp - &x0;
            let um = &ym - &x0;
            let fd = (crate::noise::elliptic_log_density_unnorm(&pot, up.view(), &params).unwrap()
                - crate::noise::elliptic_log_density_unnorm(&pot, um.view(), &params).unwrap())
                / (2.0 * h);
            assert!((fd - est[k]).abs() < 1e-6, "fd {fd} vs {}", est[k]);
        }
    }

    #[test]
    fn laplace_scaling_in_lambda() {
        let mut rng = stream(29);
        let samples = random_batch(16, 2, &mut rng);
        let y = array![0.5, -0.5];
        let p1 = GenGaussParams::isotropic(1.0, 1.0, 2, 1.0).unwrap();
        let p2 = GenGaussParams::isotropic(1.0, 2.0, 2, 1.0).unwrap();
        let s1 = noisy_score_mc(samples.view(), y.view(), &p1).unwrap().value;
        let s2 = noisy_score_mc(samples.view(), y.view(), &p2).unwrap().value;
        for k in 0..2 {
            assert!((s2[k] - 2.0 * s1[k]).abs() < 1e-12);
        }
        // Mean unit residual direction times lambda.
        let mut unit_mean = Array1::<f64>::zeros(2);
        for row in samples.rows() {
            let d = &row - &y;
            let norm = d.dot(&d).sqrt();
            unit_mean.scaled_add(1.0 / norm, &d);
        }
        unit_mean /= samples.nrows() as f64;
        for k in 0..2 {
            assert!((s1[k] - unit_mean[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_rejection_reports_index() {
        let params = GenGaussParams::isotropic(1.5, 1.0, 2, 1.0).unwrap();
        let y = array![1.0, 1.0];
        let samples = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        match noisy_score_mc(samples.view(), y.view(), &params) {
            Err(Error::SampleCoincidence { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected coincidence, got {other:?}"),
        }
    }

    #[test]
    fn tweedie_mean_trivia() {
        let sigma = Spd::identity(2);
        let y = array![1.0, -2.0];
        let mean = tweedie_posterior_mean(y.view(), array![0.0, 0.0].view(), &sigma).unwrap();
        assert_eq!(mean, y);
        // Standard-normal prior, sigma^2 I noise: s(y) = -y/(1+sigma^2).
        let s2 = 0.49;
        let sig = Spd::isotropic(2, 0.7).unwrap();
        let score = y.mapv(|v| -v / (1.0 + s2));
        let mean = tweedie_posterior_mean(y.view(), score.view(), &sig).unwrap();
        for k in 0..2 {
            assert!((mean[k] - y[k] / (1.0 + s2)).abs() < 1e-12);
        }
    }

    struct PointMassSampler {
        x0: Array1<f64>,
    }

    impl PosteriorSampler for PointMassSampler {
        fn dim(&self) -> usize {
            self.x0.len()
        }
        fn sample_at_scale(
            &self,
            _y: ArrayView1<'_, f64>,
            _sigma: f64,
            count: usize,
            _rng: &mut dyn RngCore,
        ) -> Result<Array2<f64>> {
            Ok(Array2::from_shape_fn((count, self.x0.len()), |(_, j)| {
                self.x0[j]
            }))
        }
    }

    #[test]
    fn clean_score_eps_point_mass_prior() {
        let sampler = PointMassSampler { x0: array![0.5, 0.0] };
        let params0 = GenGaussParams::isotropic(2.0, 1.0, 2, 1.0).unwrap();
        let y = array![1.0, 0.0];
        let mut rng = stream(3);
        for &eps in &[0.5, 0.1] {
            let s = clean_score_eps(&sampler, y.view(), eps, &params0, 32, &mut rng).unwrap();
            let params_eps = params0.with_sigma_scaled(eps).unwrap();
            let u = &y - &sampler.x0;
            let kernel = elliptic_kernel_score(&Potential::matching(&params_eps), u.view(), &params_eps)
                .unwrap();
            for k in 0..2 {
                assert!((s[k] - kernel[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn richardson_is_exact_on_linear_bias() {
        let a = array![1.5, -0.3];
        let b = array![0.2, 0.9];
        let f = |eps: f64| -> Result<Array1<f64>> { Ok(&a + &(&b * (eps * eps))) };
        let out = clean_score_richardson(f, 0.3, 0.17).unwrap();
        for k in 0..2 {
            assert!((out[k] - a[k]).abs() < 1e-12);
        }
        assert!(clean_score_richardson(f, 0.3, 0.3).is_err());
        assert!(clean_score_richardson(f, -0.1, 0.3).is_err());
    }

    #[test]
    fn richardson_conjugate_gaussian_closed_form() {
        let y = array![1.7, -0.8];
        let f = |eps: f64| -> Result<Array1<f64>> { Ok(y.mapv(|v| -v / (1.0 + eps * eps))) };
        let out = clean_score_richardson(f, 0.1, 0.05).unwrap();
        let err = |o: &Array1<f64>| {
            o.iter()
                .zip(y.iter())
                .map(|(s, v)| (s + v).abs() / v.abs())
                .fold(0.0f64, f64::max)
        };
        assert!(err(&out) <= 3e-5, "relative error {}", err(&out));

        // Halving both scales cuts the error ~16x (order-4), at least 8x.
        let out_half = clean_score_richardson(f, 0.05, 0.025).unwrap();
        let ratio = err(&out) / err(&out_half);
        assert!(ratio >= 8.0, "order check ratio {ratio}");
    }

    #[test]
    fn selfadjointness_detects_rotation() {
        let field = |p: ArrayView1<'_, f64>| array![-p[1], p[0]];
        let res = denoiser_selfadjointness_residual(&field, array![0.3, 0.4].view(), &Spd::identity(2), 1e-4);
        assert!((res - 2.0).abs() < 1e-6, "residual {res}");
    }

    #[test]
    fn selfadjointness_accepts_gradient_field() {
        // score = -y is the gradient of -||y||^2/2; residual ~ 0 for any SPD sigma.
        let field = |p: ArrayView1<'_, f64>| p.mapv(|v| -v);
        let sigma = Spd::new(array![[1.0, 0.0], [0.0, 0.25]]).unwrap();
        let res = denoiser_selfadjointness_residual(&field, array![1.0, -0.5].view(), &sigma, 1e-4);
        assert!(res < 1e-10, "residual {res}");
    }
}
