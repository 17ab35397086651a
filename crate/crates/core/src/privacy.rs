//! Closed-form leakage bounds for the analog sharing scheme, together with
//! exact and numerical oracles that the bounds must dominate.
//!
//! Two metrics are covered: mutual-information security (MIS, in bits) and
//! distinguishing security (DS, a total-variation distance). All exact forms
//! are evaluated with `ln_1p`/`expm1` so that the tiny ratios `r / sigma_n`
//! used in practice (down to 1e-16) do not cancel to zero.

use std::f64::consts::{LN_2, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sharing::ProtocolParams;

/// Below this ratio `r / sigma_n` the first-order asymptotic forms are reported.
pub const ASYMPTOTIC_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Exact,
    SmallRatioAsymptotic,
}

impl Regime {
    pub fn for_ratio(ratio: f64) -> Self {
        if ratio < ASYMPTOTIC_RATIO {
            Regime::SmallRatioAsymptotic
        } else {
            Regime::Exact
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Exact => "exact",
            Regime::SmallRatioAsymptotic => "small-ratio-asymptotic",
        }
    }
}

/// An exact bound plus its first-order asymptote when `r / sigma_n` is small.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub asymptotic: Option<f64>,
}

impl Bound {
    fn new(value: f64, ratio: f64, asymptote: impl FnOnce() -> f64) -> Self {
        let asymptotic = (Regime::for_ratio(ratio) == Regime::SmallRatioAsymptotic).then(asymptote);
        Bound { value, asymptotic }
    }
}

fn check_sigma(sigma_n: f64) -> Result<()> {
    if sigma_n > 0.0 && sigma_n.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("sigma_n = {sigma_n} must be positive and finite")))
    }
}

fn check_r(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("r = {r} must be non-negative and finite")))
    }
}

fn check_t(t: usize) -> Result<()> {
    if t >= 1 {
        Ok(())
    } else {
        Err(Error::param("collusion bound t must be at least 1"))
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Single-party MIS bound `log2(1 + r^2 / sigma_n^2)` (AWGN capacity at power `r^2`).
pub fn mis_bound_single(r: f64, sigma_n: f64) -> Result<Bound> {
    mis_bound_collusion(r, sigma_n, 1)
}

/// MIS bound against `t` colluding parties, `log2(1 + r^2 t^2 / sigma_n^2)`.
pub fn mis_bound_collusion(r: f64, sigma_n: f64, t: usize) -> Result<Bound> {
    check_sigma(sigma_n)?;
    check_r(r)?;
    check_t(t)?;
    let ratio = r / sigma_n;
    let snr = (ratio * t as f64).powi(2);
    Ok(Bound::new(log2_1p(snr), ratio, || snr / LN_2))
}

/// Hellinger distance between two circular complex Gaussians of equal variance `sigma^2`.
pub fn hellinger_gaussian(mu1: Complex64, mu2: Complex64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let x = (mu1 - mu2).norm_sqr() / (4.0 * sigma * sigma);
    Ok((-(-x).exp_m1()).sqrt())
}

/// Single-party DS bound `sqrt(2 (1 - exp(-r^2 / sigma_n^2)))`, i.e. `sqrt(2)` times
/// the Hellinger distance between the share distributions for secrets `r` and `-r`.
pub fn ds_bound_single(r: f64, sigma_n: f64) -> Result<Bound> {
    check_r(r)?;
    let h = hellinger_gaussian(Complex64::new(r, 0.0), Complex64::new(-r, 0.0), sigma_n)?;
    let ratio = r / sigma_n;
    Ok(Bound::new(SQRT_2 * h, ratio, || SQRT_2 * ratio))
}

/// DS bound implied by an MIS bound: `sqrt(2 eta_c)`.
pub fn ds_from_mis(eta_c: f64) -> Result<f64> {
    if !(eta_c >= 0.0) {
        return Err(Error::arg(format!("MIS value {eta_c} must be non-negative")));
    }
    Ok((2.0 * eta_c).sqrt())
}

/// DS bound against `t` colluding parties: [`ds_from_mis`] applied to
/// [`mis_bound_collusion`].
pub fn ds_bound_collusion(r: f64, sigma_n: f64, t: usize) -> Result<Bound> {
    let mis = mis_bound_collusion(r, sigma_n, t)?;
    let ratio = r / sigma_n;
    Ok(Bound::new(ds_from_mis(mis.value)?, ratio, || {
        (2.0 / LN_2).sqrt() * t as f64 * ratio
    }))
}

/// DS bound when the masking coefficients are truncated at `alpha sigma_n / sqrt(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDs {
    /// `eta_s / w + tail / w`, infinite when `w_lower <= 0`.
    pub eta_s_truncated: f64,
    /// The untruncated collusion bound it is built from.
    pub eta_s: f64,
    /// Lower bound `(1 - 2 exp(-alpha^2 / 2))^t` on the probability mass kept by truncation.
    pub w_lower: f64,
    /// `eta_s_truncated - eta_s`, evaluated without cancellation.
    pub excess: f64,
    /// `alpha <= 2 r sqrt(t) / sigma_n`: the tail term is not small.
    pub degraded: bool,
    /// The bound exceeds `sqrt(2)` or `w_lower <= 0` and says nothing.
    pub vacuous: bool,
}

impl TruncatedDs {
    /// The value to report: clamped at `sqrt(2)` when vacuous.
    pub fn reported(&self) -> f64 {
        if self.vacuous {
            SQRT_2
        } else {
            self.eta_s_truncated
        }
    }
}

pub fn ds_bound_truncated(r: f64, sigma_n: f64, t: usize, alpha: f64) -> Result<TruncatedDs> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha = {alpha} must be positive and finite")));
    }
    let eta_s = ds_bound_collusion(r, sigma_n, t)?.value;
    let tf = t as f64;
    // w = (1 - q)^t with q = 2 exp(-alpha^2 / 2)
    let q = 2.0 * (-alpha * alpha / 2.0).exp();
    let w_lower = (1.0 - q).powi(t as i32);
    let shift = 2.0 * r * tf.sqrt() / sigma_n;
    let degraded = alpha <= shift;
    let tail = (2.0 * (-0.5 * (alpha - shift).powi(2)).exp()).powi(t as i32);
    if !(w_lower > 0.0) {
        return Ok(TruncatedDs {
            eta_s_truncated: f64::INFINITY,
            eta_s,
            w_lower,
            excess: f64::INFINITY,
            degraded,
            vacuous: true,
        });
    }
    // 1 - w computed as -expm1(t ln(1 - q))
    let one_minus_w = -(tf * (-q).ln_1p()).exp_m1();
    let excess = eta_s * one_minus_w / w_lower + tail / w_lower;
    let eta_s_truncated = (eta_s + tail) / w_lower;
    Ok(TruncatedDs {
        eta_s_truncated,
        eta_s,
        w_lower,
        excess,
        degraded,
        vacuous: eta_s_truncated > SQRT_2,
    })
}

/// Exact total-variation distance between the single-party share distributions
/// for secrets `-r` and `r`: `erf(r / sigma_n)`.
///
/// The two circular Gaussians differ only along the real axis, where each has
/// variance `sigma_n^2 / 2`; the imaginary parts cancel out of the distance.
pub fn tv_oracle_single(r: f64, sigma_n: f64) -> Result<f64> {
    check_sigma(sigma_n)?;
    check_r(r)?;
    Ok(libm::erf(r / sigma_n))
}

/// Minimum grid resolution accepted by [`mi_oracle_single`].
pub const MIN_MI_RESOLUTION: usize = 64;

/// Numerical `I(S; Y)` in bits for `S` uniform on `[-r, r]` and `Y = S + Z` with
/// `Z` circular complex Gaussian of variance `sigma_n^2`.
///
/// Only the real part of `Y` carries information, so this is
/// `h(Re Y) - h(Re Z)` with both entropies integrated by composite Simpson on
/// the same grid of `resolution` intervals over `[-r - 12s, r + 12s]`.
pub fn mi_oracle_single(r: f64, sigma_n: f64, resolution: usize) -> Result<f64> {
    check_sigma(sigma_n)?;
    check_r(r)?;
    if resolution < MIN_MI_RESOLUTION {
        return Err(Error::param(format!(
            "quadrature resolution {resolution} is below {MIN_MI_RESOLUTION}"
        )));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let s = sigma_n / SQRT_2;
    let intervals = resolution + resolution % 2;
    let lo = -r - 12.0 * s;
    let hi = r + 12.0 * s;
    let h = (hi - lo) / intervals as f64;
    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    let integrand = |y: f64| {
        let noise = norm * (-0.5 * (y / s).powi(2)).exp();
        // P(y - r < Z < y + r) through upper tails, no catastrophic cancellation
        let (a, b) = ((y - r) / (s * SQRT_2), (y + r) / (s * SQRT_2));
        let mass = if y >= 0.0 {
            0.5 * (libm::erfc(a) - libm::erfc(b))
        } else {
            0.5 * (libm::erfc(-b) - libm::erfc(-a))
        };
        let out = mass / (2.0 * r);
        xlogx(noise) - xlogx(out)
    };
    let mut acc = integrand(lo) + integrand(hi);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(lo + k as f64 * h);
    }
    Ok(acc * h / 3.0 / LN_2)
}

/// `Ñ = ((t+1)/t) I - (1/t) 11^T`: the normalized noise covariance seen by `t`
/// colluding parties when `N = t + 1`.
pub fn normalized_collusion_matrix(t: usize) -> DMatrix<Complex64> {
    let tf = t as f64;
    DMatrix::from_fn(t, t, |a, b| {
        let v = if a == b { (tf + 1.0) / tf - 1.0 / tf } else { -1.0 / tf };
        Complex64::new(v, 0.0)
    })
}

/// Joint noise `ñ_i = sum_j omega_i^j n_j` seen by a colluding set.
#[derive(Debug, Clone, PartialEq)]
pub struct CollusionNoiseModel {
    /// 1-based server indices, or empty when built from a bare covariance.
    pub indices: Vec<usize>,
    /// `E[ñ_a conj(ñ_b)]`.
    pub covariance: DMatrix<Complex64>,
    pub sigma_n: f64,
    /// Largest eigenvalue of `(covariance / sigma_n^2)^-1`.
    pub nu_max: f64,
}

impl CollusionNoiseModel {
    pub fn from_covariance(covariance: DMatrix<Complex64>, sigma_n: f64) -> Result<Self> {
        check_sigma(sigma_n)?;
        if covariance.nrows() != covariance.ncols() || covariance.nrows() == 0 {
            return Err(Error::arg("covariance must be a non-empty square matrix"));
        }
        let scale = covariance.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for a in 0..covariance.nrows() {
            for b in 0..covariance.ncols() {
                if (covariance[(a, b)] - covariance[(b, a)].conj()).norm() > 1e-12 * scale {
                    return Err(Error::arg("covariance is not Hermitian"));
                }
            }
        }
        let normalized = covariance.map(|z| z / (sigma_n * sigma_n));
        let ev = linalg::hermitian_eigenvalues(&normalized);
        let (min, max) = (ev[0], ev[ev.len() - 1]);
        if !(max > 0.0) || min <= 1e-12 * max {
            return Err(Error::Singular(format!(
                "covariance eigenvalues span [{min:e}, {max:e}]"
            )));
        }
        Ok(CollusionNoiseModel {
            indices: Vec::new(),
            covariance,
            sigma_n,
            nu_max: 1.0 / min,
        })
    }

    pub fn t(&self) -> usize {
        self.covariance.nrows()
    }

    /// Eigenvalues of `covariance / sigma_n^2`, ascending.
    pub fn normalized_eigenvalues(&self) -> Vec<f64> {
        let s2 = self.sigma_n * self.sigma_n;
        linalg::hermitian_eigenvalues(&self.covariance.map(|z| z / s2))
    }
}

/// Exact noise covariance of the colluding set `indices` (1-based, `|indices| = t`).
pub fn noise_covariance(params: &ProtocolParams, indices: &[usize]) -> Result<CollusionNoiseModel> {
    let t = params.t();
    if indices.len() != t {
        return Err(Error::arg(format!(
            "colluding set has {} members, expected t = {t}",
            indices.len()
        )));
    }
    for (k, &i) in indices.iter().enumerate() {
        if i == 0 || i > params.n() {
            return Err(Error::arg(format!("server index {i} outside 1..={}", params.n())));
        }
        if indices[..k].contains(&i) {
            return Err(Error::arg(format!("server index {i} appears twice")));
        }
    }
    let sigma2 = params.sigma_n() * params.sigma_n();
    let per_coeff = sigma2 / t as f64;
    let cov = DMatrix::from_fn(t, t, |a, b| {
        if a == b {
            return Complex64::new(sigma2, 0.0);
        }
        let sum: Complex64 = (1..=t)
            .map(|j| params.power(indices[a], j) * params.power(indices[b], j).conj())
            .sum();
        sum * per_coeff
    });
    let mut model = CollusionNoiseModel::from_covariance(cov, params.sigma_n())?;
    model.indices = indices.to_vec();
    Ok(model)
}

/// SIMO-capacity bound `log2(1 + p ||h||^2 nu)` with `p = r^2`, `h` all ones and
/// `nu` the largest eigenvalue of the inverse noise covariance.
pub fn simo_bound_general(model: &CollusionNoiseModel, r: f64) -> Result<f64> {
    check_r(r)?;
    let s2 = model.sigma_n * model.sigma_n;
    // nu_max is for the normalized covariance; undo the sigma_n^2 scaling
    let snr = r * r * model.t() as f64 * model.nu_max / s2;
    Ok(log2_1p(snr))
}

/// MIS bound for one specific colluding set, through the general SIMO path.
pub fn mis_bound_for_set(params: &ProtocolParams, indices: &[usize]) -> Result<f64> {
    simo_bound_general(&noise_covariance(params, indices)?, params.r())
}

/// All bounds for one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    /// MIS bound against `t` colluding parties.
    pub eta_c_bits: f64,
    /// DS bound from the MIS bound (collusion path).
    pub eta_s: f64,
    /// DS bound under truncated noise, clamped to `sqrt(2)` when vacuous.
    pub eta_s_truncated: f64,
    pub w_lower: f64,
    pub regime: Regime,
    pub r: f64,
    pub sigma_n: f64,
    pub t: usize,
    pub alpha: f64,
    /// Direct Hellinger bound; only defined against a single party (`t = 1`).
    pub eta_s_direct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_c_asymptotic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_s_asymptotic: Option<f64>,
    pub flags: Vec<String>,
}

impl PrivacyReport {
    pub fn compute(r: f64, sigma_n: f64, t: usize, alpha: f64) -> Result<Self> {
        let mis = mis_bound_collusion(r, sigma_n, t)?;
        let ds = ds_bound_collusion(r, sigma_n, t)?;
        let trunc = ds_bound_truncated(r, sigma_n, t, alpha)?;
        let direct = if t == 1 { Some(ds_bound_single(r, sigma_n)?.value) } else { None };
        let mut flags = Vec::new();
        if trunc.degraded {
            flags.push("truncation-degraded".to_string());
        }
        if trunc.vacuous {
            flags.push("truncation-vacuous".to_string());
        }
        Ok(PrivacyReport {
            eta_c_bits: mis.value,
            eta_s: ds.value,
            eta_s_truncated: trunc.reported(),
            w_lower: trunc.w_lower,
            regime: Regime::for_ratio(r / sigma_n),
            r,
            sigma_n,
            t,
            alpha,
            eta_s_direct: direct,
            eta_c_asymptotic: mis.asymptotic,
            eta_s_asymptotic: ds.asymptotic,
            flags,
        })
    }

    pub fn from_params(params: &ProtocolParams) -> Result<Self> {
        Self::compute(params.r(), params.sigma_n(), params.t(), params.alpha())
    }

    pub const CSV_HEADER: &'static str =
        "eta_c_bits,eta_s,eta_s_truncated,w_lower,regime,r,sigma_n,t,alpha,eta_s_direct,flags";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{},{},{},{:e},{},{},{},{}",
            self.eta_c_bits,
            self.eta_s,
            self.eta_s_truncated,
            self.w_lower,
            self.regime.as_str(),
            self.r,
            self.sigma_n,
            self.t,
            self.alpha,
            self.eta_s_direct.map(|v| format!("{v:e}")).unwrap_or_default(),
            self.flags.join(";"),
        )
    }
}

/// Leakage of a `k`-iteration training run.
///
/// The dataset is shared once, so it leaks at most one `eta_s`; the model is
/// re-shared with fresh noise every iteration, so its leakage composes to
/// `k * eta_s`. With one party the direct Hellinger bound is used, with more
/// the collusion bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageAccounting {
    pub iterations: usize,
    pub eta_s_per_share: f64,
    pub dataset_eta_s: f64,
    pub model_eta_s: f64,
}

impl LeakageAccounting {
    pub fn compute(r: f64, sigma_n: f64, t: usize, iterations: usize) -> Result<Self> {
        let eta = if t == 1 {
            ds_bound_single(r, sigma_n)?.value
        } else {
            ds_bound_collusion(r, sigma_n, t)?.value
        };
        Ok(LeakageAccounting {
            iterations,
            eta_s_per_share: eta,
            dataset_eta_s: eta,
            model_eta_s: iterations as f64 * eta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    // Reference values below were computed with mpmath at 50 significant digits.

    #[test]
    fn mis_single() {
        assert_eq!(mis_bound_single(0.0, 1.0).unwrap().value, 0.0);
        assert!((mis_bound_single(3.0, 3.0).unwrap().value - 1.0).abs() < 1e-15);
        // log2(1 + 6.5025e-6)
        let v = mis_bound_single(255.0, 1e5).unwrap();
        assert!(rel(v.value, 9.381_094_003_131_66e-6) < 1e-12, "{}", v.value);
        assert!(v.asymptotic.is_none()); // ratio 2.55e-3 is above the switch
        let small = mis_bound_single(1.0, 1e5).unwrap();
        assert!(rel(small.asymptotic.unwrap(), 1e-10 / LN_2) < 1e-14);
        assert!(mis_bound_single(1.0, 0.0).is_err());
        assert!(mis_bound_single(1.0, -2.0).is_err());
    }

    #[test]
    fn mis_collusion() {
        assert!((mis_bound_collusion(2.0, 2.0, 1).unwrap().value - 1.0).abs() < 1e-15);
        // log2(1 + 6.5025e-4)
        let v = mis_bound_collusion(255.0, 1e5, 10).unwrap().value;
        assert!(rel(v, 9.378_075_786_823_36e-4) < 1e-12, "{v}");
        assert_eq!(mis_bound_collusion(0.0, 1.0, 7).unwrap().value, 0.0);
        assert!(mis_bound_collusion(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn hellinger() {
        let z = Complex64::new(0.3, -1.0);
        assert_eq!(hellinger_gaussian(z, z, 2.0).unwrap(), 0.0);
        let h = hellinger_gaussian(Complex64::new(0.0, 0.0), Complex64::new(0.0, 4.0), 2.0).unwrap();
        // sqrt(1 - e^-1)
        assert!((h - 0.795_060_097_620_650_1).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..60 {
            let d = 1.2f64.powi(k);
            let h = hellinger_gaussian(Complex64::new(0.0, 0.0), Complex64::new(d, 0.0), 1.0).unwrap();
            assert!(h >= prev && h <= 1.0);
            prev = h;
        }
        assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ds_single() {
        assert_eq!(ds_bound_single(0.0, 1.0).unwrap().value, 0.0);
        // sqrt(2) * sqrt(1 - exp(-6.5025e-6))
        let v = ds_bound_single(255.0, 1e5).unwrap().value;
        assert!(rel(v, 3.606_238_721_657_98e-3) < 1e-10, "{v}");
        assert!((ds_bound_single(1e9, 1.0).unwrap().value - SQRT_2).abs() < 1e-15);
        // tiny ratios must not cancel to zero
        let tiny = ds_bound_single(255.0, 1e18).unwrap();
        assert!(rel(tiny.value, SQRT_2 * 2.55e-16) < 1e-12);
        assert!(rel(tiny.asymptotic.unwrap(), SQRT_2 * 2.55e-16) < 1e-15);
    }

    #[test]
    fn ds_mis_relation() {
        assert_eq!(ds_from_mis(0.0).unwrap(), 0.0);
        assert_eq!(ds_from_mis(0.5).unwrap(), 1.0);
        assert!(ds_from_mis(-1e-3).is_err());
        let composed = ds_from_mis(mis_bound_collusion(255.0, 1e5, 1).unwrap().value).unwrap();
        assert!((composed.log10() - (-2.36)).abs() < 0.005, "{}", composed.log10());
    }

    #[test]
    fn ds_collusion_values() {
        for (sigma, want) in [(1e10, 4.331_541_181_468_90e-8), (1e15, 4.331_541_181_468_90e-13)] {
            let v = ds_bound_collusion(255.0, sigma, 1).unwrap();
            assert!(rel(v.value, want) < 1e-9, "{} vs {want}", v.value);
            assert!(rel(v.asymptotic.unwrap(), want) < 1e-6);
        }
        assert_eq!(ds_bound_collusion(0.0, 1.0, 3).unwrap().value, 0.0);
    }

    #[test]
    fn truncated_examples() {
        let b = ds_bound_truncated(255.0, 1e5, 1, 10.0).unwrap();
        assert!(b.excess < 1e-20 && b.excess > 0.0, "{}", b.excess);
        assert!(b.eta_s_truncated >= b.eta_s);
        assert!(!b.degraded && !b.vacuous);

        let b = ds_bound_truncated(1.0, 1.0, 2, 3.0).unwrap();
        assert!((b.w_lower - 0.956_057_653_063_377_5).abs() < 1e-12, "{}", b.w_lower);

        let b = ds_bound_truncated(0.0, 1.0, 1, 10.0).unwrap();
        let want = 2.0 * (-50.0f64).exp() / b.w_lower;
        assert!(rel(b.eta_s_truncated, want) < 1e-14);
    }

    #[test]
    fn truncated_degraded_and_vacuous() {
        let b = ds_bound_truncated(1.0, 1.0, 1, 1.5).unwrap();
        assert!(b.degraded);
        assert!(b.vacuous);
        assert_eq!(b.reported(), SQRT_2);
        let b = ds_bound_truncated(0.01, 1.0, 1, 1.0).unwrap();
        assert!(b.w_lower <= 0.0 && b.vacuous);
        assert!(ds_bound_truncated(1.0, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn truncation_vanishes_for_large_alpha() {
        let b = ds_bound_truncated(255.0, 1e5, 3, 20.0).unwrap();
        assert!(b.excess < 1e-30);
    }

    #[test]
    fn tv_oracle() {
        assert_eq!(tv_oracle_single(0.0, 1.0).unwrap(), 0.0);
        assert!((tv_oracle_single(2.0, 2.0).unwrap() - 0.842_700_792_949_714_9).abs() < 1e-15);
    }

    #[test]
    fn mi_oracle() {
        assert_eq!(mi_oracle_single(0.0, 1.0, 64).unwrap(), 0.0);
        let v = mi_oracle_single(1.0, 1.0, 2048).unwrap();
        assert!(v > 0.0 && v < 1.0, "{v}");
        let v = mi_oracle_single(1e-2, 1.0, 2048).unwrap();
        assert!(v <= 7.22e-5, "{v}");
        assert!(mi_oracle_single(1.0, 1.0, 63).is_err());
    }

    #[test]
    fn mi_oracle_matches_small_signal_expansion() {
        // Uniform input of variance r^2/3 through a real Gaussian channel of
        // variance sigma^2/2: I ~ (1/2) (2 r^2 / (3 sigma^2)) / ln 2 for small r.
        let (r, s) = (1e-2, 1.0);
        let approx = (r * r / (3.0 * s * s)) / LN_2;
        let v = mi_oracle_single(r, s, 4096).unwrap();
        assert!(rel(v, approx) < 1e-3, "{v} vs {approx}");
    }

    #[test]
    fn collusion_matrix_spectrum() {
        for t in [1usize, 2, 3, 5, 10] {
            let ev = linalg::hermitian_eigenvalues(&normalized_collusion_matrix(t));
            let tf = t as f64;
            assert!((ev[0] - 1.0 / tf).abs() < 1e-10);
            for e in &ev[1..] {
                assert!((e - (tf + 1.0) / tf).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn covariance_for_minimal_servers() {
        let sigma = 3.0;
        for t in [1usize, 2, 4] {
            let p = ProtocolParams::new(t + 1, t, 1, sigma, 10.0, 1.0, 0).unwrap();
            let idx: Vec<usize> = (1..=t).collect();
            let m = noise_covariance(&p, &idx).unwrap();
            for a in 0..t {
                for b in 0..t {
                    let want = if a == b { sigma * sigma } else { -sigma * sigma / t as f64 };
                    assert!((m.covariance[(a, b)] - Complex64::new(want, 0.0)).norm() <= 1e-12 * sigma * sigma);
                }
            }
        }
    }

    #[test]
    fn covariance_errors() {
        let p = ProtocolParams::new(5, 2, 1, 1.0, 10.0, 1.0, 0).unwrap();
        assert!(matches!(noise_covariance(&p, &[1, 1]), Err(Error::InvalidArgument(_))));
        assert!(noise_covariance(&p, &[1]).is_err());
        assert!(noise_covariance(&p, &[0, 2]).is_err());
        assert!(noise_covariance(&p, &[2, 6]).is_err());
    }

    #[test]
    fn simo_examples() {
        let (r, s) = (2.0, 5.0);
        let scalar = CollusionNoiseModel::from_covariance(DMatrix::from_element(1, 1, Complex64::new(s * s, 0.0)), s).unwrap();
        assert!((simo_bound_general(&scalar, r).unwrap() - log2_1p(r * r / (s * s))).abs() < 1e-15);

        let id = linalg::identity(2).map(|z| z * s * s);
        let m = CollusionNoiseModel::from_covariance(id, s).unwrap();
        assert!(rel(simo_bound_general(&m, r).unwrap(), log2_1p(2.0 * r * r / (s * s))) < 1e-14);

        for t in [2usize, 3, 5, 10] {
            let cov = normalized_collusion_matrix(t).map(|z| z * s * s);
            let m = CollusionNoiseModel::from_covariance(cov, s).unwrap();
            let want = mis_bound_collusion(r, s, t).unwrap().value;
            assert!(rel(simo_bound_general(&m, r).unwrap(), want) < 1e-10);
        }
    }

    #[test]
    fn singular_covariance() {
        let cov = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(CollusionNoiseModel::from_covariance(cov, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn report_fields() {
        let rep = PrivacyReport::compute(255.0, 1e5, 1, 10.0).unwrap();
        assert!(rep.eta_s_truncated >= rep.eta_s);
        assert!(rep.eta_s <= (2.0 * rep.eta_c_bits).sqrt() + 1e-12);
        assert!(rep.w_lower > 0.0 && rep.w_lower <= 1.0);
        assert_eq!(rep.regime, Regime::Exact);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["eta_c_bits", "eta_s", "eta_s_truncated", "w_lower", "regime", "r", "sigma_n", "t", "alpha"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["regime"], "exact");
        let row = rep.csv_row();
        assert_eq!(row.split(',').count(), PrivacyReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn leakage_accounting() {
        let acc = LeakageAccounting::compute(255.0, 1e18, 1, 20).unwrap();
        assert!(acc.dataset_eta_s <= 1e-15);
        assert!(acc.model_eta_s <= 2e-14);
        assert!(rel(acc.model_eta_s, 20.0 * acc.dataset_eta_s) < 1e-15);
    }
}
