//! Floating-point perturbation bound for decoded results and the
//! privacy/accuracy trade-off table.
//!
//! A share `y` stored with `v` mantissa bits is off by at most `|y| 2^-(v+1)`.
//! Pushed through a degree-`D` polynomial with coefficient mass `a_D` and the
//! decoder, this gives `Δf <= a_D sqrt(t+1) m^D κ 2^-(v+1)` where `m` is the
//! noise truncation bound and `κ` the condition number of the evaluation-point
//! Vandermonde matrix.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;
use crate::privacy;
use crate::sharing::{self, Masking, NoiseBlock, Polynomial, ProtocolParams};

pub use crate::linalg::condition_number;

/// Binary floating-point format: `v` mantissa bits, `q` exponent bits.
/// Only `v` enters the bound; `q` is carried for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloatModel {
    pub v: u32,
    pub q: u32,
}

impl Default for FloatModel {
    fn default() -> Self {
        FloatModel { v: 52, q: 11 }
    }
}

impl FloatModel {
    pub fn new(v: u32, q: u32) -> Result<Self> {
        if v < 1 {
            return Err(Error::param("mantissa bits v must be at least 1"));
        }
        Ok(FloatModel { v, q })
    }

    /// Relative perturbation `2^-(v+1)` of a stored value.
    pub fn unit_roundoff(&self) -> f64 {
        (-(self.v as f64 + 1.0)).exp2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBound {
    /// Absolute bound on the decoded error, in units of `f(s)`. May be `inf`
    /// when the bound overflows; `log10_delta_f` is always finite.
    pub delta_f: f64,
    pub log10_delta_f: f64,
    pub kappa: f64,
    pub a_d: f64,
    pub t: usize,
    /// Truncation bound on each masking coefficient.
    pub m: f64,
    pub degree: usize,
    pub v: u32,
}

/// Condition number of the `N x (Dt+1)` Vandermonde matrix of the params'
/// evaluation points.
pub fn vandermonde_condition(params: &ProtocolParams) -> Result<f64> {
    condition_number(&linalg::vandermonde(params.omegas(), params.share_degree() + 1))
}

/// Sum of the absolute coefficients, the `a_D` used for a general polynomial.
pub fn coefficient_mass(f: &Polynomial) -> f64 {
    f.coeffs().iter().map(|c| c.abs()).sum()
}

/// Evaluates the bound for `params`. `kappa = None` uses 1 for the default
/// root-of-unity points and recomputes it for custom points.
pub fn accuracy_bound(a_d: f64, params: &ProtocolParams, fm: FloatModel, kappa: Option<f64>) -> Result<AccuracyBound> {
    if !(a_d >= 0.0 && a_d.is_finite()) {
        return Err(Error::param(format!("a_D = {a_d} must be non-negative and finite")));
    }
    let m = params.trunc_bound();
    if params.r() > m {
        return Err(Error::HypothesisViolated { r: params.r(), m });
    }
    let kappa = match kappa {
        Some(k) if k >= 1.0 && k.is_finite() => k,
        Some(k) => return Err(Error::param(format!("condition number {k} must be finite and >= 1"))),
        None if params.custom_points() => vandermonde_condition(params)?,
        None => 1.0,
    };
    let (t, d) = (params.t(), params.degree());
    let log10_delta_f = a_d.log10()
        + 0.5 * ((t + 1) as f64).log10()
        + d as f64 * m.log10()
        + kappa.log10()
        - (fm.v as f64 + 1.0) * std::f64::consts::LOG10_2;
    let delta_f = a_d * ((t + 1) as f64).sqrt() * m.powi(d as i32) * kappa * fm.unit_roundoff();
    Ok(AccuracyBound {
        delta_f,
        log10_delta_f,
        kappa,
        a_d,
        t,
        m,
        degree: d,
        v: fm.v,
    })
}

/// One row of the trade-off table. A row whose parameters are invalid carries
/// `error` and no values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub sigma_n: f64,
    pub log10_delta_f: Option<f64>,
    pub log10_eta_s: Option<f64>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const TRADEOFF_CSV_HEADER: &str = "sigma_n,log10_delta_f,log10_eta_s,flags";

impl TradeoffRow {
    pub fn csv_row(&self) -> String {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut flags = self.flags.clone();
        if let Some(e) = &self.error {
            flags.push(format!("error: {}", e.replace([',', '\n'], ";")));
        }
        format!(
            "{:e},{},{},{}",
            self.sigma_n,
            num(self.log10_delta_f),
            num(self.log10_eta_s),
            flags.join(";")
        )
    }
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let mut out = String::from(TRADEOFF_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Pairs the accuracy bound with the collusion DS bound for every `sigma_n`
/// in the grid, keeping everything else from `template`.
pub fn tradeoff_table(sigma_grid: &[f64], template: &ProtocolParams, a_d: f64, fm: FloatModel) -> Result<Vec<TradeoffRow>> {
    if sigma_grid.is_empty() {
        return Err(Error::param("trade-off grid is empty"));
    }
    Ok(sigma_grid
        .iter()
        .map(|&sigma_n| tradeoff_row(sigma_n, template, a_d, fm))
        .collect())
}

fn tradeoff_row(sigma_n: f64, template: &ProtocolParams, a_d: f64, fm: FloatModel) -> TradeoffRow {
    let computed = (|| -> Result<(AccuracyBound, f64)> {
        let p = template.with_sigma_n(sigma_n)?;
        let acc = accuracy_bound(a_d, &p, fm, None)?;
        let eta = privacy::ds_bound_collusion(p.r(), sigma_n, p.t())?.value;
        Ok((acc, eta))
    })();
    match computed {
        Ok((acc, eta)) => {
            let mut flags = Vec::new();
            let scale = (a_d * template.r().powi(template.degree() as i32)).log10();
            if acc.log10_delta_f > scale {
                flags.push("accuracy-vacuous".to_string());
            }
            TradeoffRow {
                sigma_n,
                log10_delta_f: Some(acc.log10_delta_f),
                log10_eta_s: Some(eta.log10()),
                flags,
                error: None,
            }
        }
        Err(e) => TradeoffRow {
            sigma_n,
            log10_delta_f: None,
            log10_eta_s: None,
            flags: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Largest decode error seen over Monte-Carlo trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalError {
    pub trials: usize,
    /// `max |decoded - f(s)|`, imaginary residue included.
    pub max_abs_error: f64,
    /// Largest imaginary residue alone.
    pub max_residue: f64,
}

/// Runs share -> evaluate `f` on every share -> decode for `trials` random real
/// secrets uniform on `[-r, r]`, in native `f64`.
///
/// Trial `k` draws from its own ChaCha20 stream `k` under `params.seed()`, so
/// results do not depend on `exec`.
pub fn empirical_error(
    trials: usize,
    f: &Polynomial,
    params: &ProtocolParams,
    masking: Masking,
    exec: Execution,
) -> Result<EmpiricalError> {
    if trials == 0 {
        return Err(Error::param("empirical_error needs at least one trial"));
    }
    if f.degree() > params.degree() {
        return Err(Error::param(format!(
            "polynomial of degree {} exceeds the protocol degree {}",
            f.degree(),
            params.degree()
        )));
    }
    let weights = sharing::decoder_weights(params)?;
    let per_trial = exec::map_indexed(exec, trials, |k| -> Result<(f64, f64)> {
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed());
        rng.set_stream(k as u64);
        let s = if params.r() > 0.0 { rng.gen_range(-params.r()..=params.r()) } else { 0.0 };
        let noise = match masking {
            Masking::TruncatedGaussian => sharing::sample_noise_block(params, 1, &mut rng)?,
            Masking::Disabled => NoiseBlock::zeros(params.t(), 1),
        };
        let secret = [Complex64::new(s, 0.0)];
        let results: Vec<Complex64> = (1..=params.n())
            .map(|i| f.eval(sharing::share_for_server(&secret, params, &noise, i)[0]))
            .collect();
        let z = sharing::decode_constant(&results, &weights)?;
        Ok(((z - f.eval_real(s)).norm(), z.im.abs()))
    });
    let mut out = EmpiricalError {
        trials,
        max_abs_error: 0.0,
        max_residue: 0.0,
    };
    for r in per_trial {
        let (e, res) = r?;
        out.max_abs_error = out.max_abs_error.max(e);
        out.max_residue = out.max_residue.max(res);
    }
    Ok(out)
}
