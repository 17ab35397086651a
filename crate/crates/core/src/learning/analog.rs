use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{evaluate, expanded_update, label_term, logistic_loss, Dataset, IterationRecord, ModelState, TrainingConfig};
use crate::accuracy::{accuracy_bound, FloatModel};
use crate::error::{Error, Result};
use crate::privacy::{LeakageAccounting, PrivacyReport};
use crate::runtime::{gram_product, Master, MasterConfig, TrafficCounts, Transcript, Transport, WorkCounts};
use crate::sharing::{Encoder, Masking, ProtocolParams};

/// Settings of the shared trainer beyond the learning rate and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogConfig {
    /// Sharing parameters; the degree is forced to 3.
    pub params: ProtocolParams,
    pub master: MasterConfig,
    pub masking: Masking,
    /// An iteration is flagged when `|Im u| > threshold * |u|`.
    pub residue_threshold: f64,
    /// Also compute `X^T X w` in plaintext and record the decoding error.
    pub track_drift: bool,
}

impl AnalogConfig {
    pub fn new(params: ProtocolParams) -> Self {
        AnalogConfig {
            params,
            master: MasterConfig::default(),
            masking: Masking::TruncatedGaussian,
            residue_threshold: 1e-3,
            track_drift: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalogRun {
    pub model: ModelState,
    #[serde(skip)]
    pub transcript: Transcript,
    pub traffic: TrafficCounts,
    pub work: WorkCounts,
    pub privacy: PrivacyReport,
    pub leakage: LeakageAccounting,
    /// Coefficient mass used for the per-iteration error bound (`m * d`).
    pub a_d: f64,
    pub u_error_bound: Option<f64>,
    pub max_drift: Option<f64>,
    /// Iterations whose observed drift exceeded the bound.
    pub drift_violations: usize,
    pub warnings: Vec<String>,
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains with the data and model secret-shared across `N` workers. The data
/// matrix is shared once; each iteration re-shares `w` with fresh noise and
/// the workers return shares of `X^T X w`.
pub fn train_analog(
    data: &Dataset,
    cfg: &TrainingConfig,
    analog: &AnalogConfig,
    transport: &Transport,
    test: Option<&Dataset>,
) -> Result<AnalogRun> {
    cfg.validate()?;
    let params = analog.params.with_degree(3)?;
    let mut warnings = Vec::new();
    if data.max_abs() > params.r() {
        let msg = format!(
            "largest feature {} exceeds r = {}; privacy and accuracy bounds do not cover it",
            data.max_abs(),
            params.r()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let privacy = PrivacyReport::from_params(&params)?;
    let leakage = LeakageAccounting::compute(params.r(), params.sigma_n(), params.t(), cfg.k)?;
    let a_d = (data.m * data.d) as f64;
    let u_error_bound = match accuracy_bound(a_d, &params, FloatModel::default(), None) {
        Ok(b) => Some(b.delta_f),
        Err(e @ Error::HypothesisViolated { .. }) => {
            warnings.push(format!("no error bound: {e}"));
            None
        }
        Err(e) => return Err(e),
    };

    let x = data.to_complex();
    let plain = analog.track_drift.then(|| x.clone());
    let lt = label_term(data);
    let mut encoder = Encoder::new(params.clone()).with_masking(analog.masking);
    let mut master = Master::connect(params.clone(), transport, analog.master)?;
    master.share_matrix(&mut encoder, x, data.m, data.d)?;

    let mut state = ModelState::zeros(data.d);
    let (mut max_drift, mut drift_violations) = (None::<f64>, 0);
    for j in 1..=cfg.k {
        let wc: Vec<Complex64> = state.w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let z = master.lr_product(&mut encoder, &wc)?;
        let u: Vec<f64> = z.iter().map(|c| c.re).collect();
        let residue_max = z.iter().fold(0.0f64, |a, c| a.max(c.im.abs()));
        let degraded = l2(z.iter().map(|c| c.im)) > analog.residue_threshold * l2(z.iter().map(|c| c.norm()));
        let u_drift = plain.as_ref().map(|xp| {
            let truth = gram_product(xp, data.m, data.d, &wc, analog.master.exec);
            z.iter().zip(&truth).fold(0.0f64, |a, (z, t)| a.max((z - t).norm()))
        });
        if let Some(dr) = u_drift {
            max_drift = Some(max_drift.map_or(dr, |m| m.max(dr)));
            if u_error_bound.is_some_and(|b| dr > b) {
                drift_violations += 1;
            }
        }
        expanded_update(&mut state.w, &u, &lt, cfg.beta, data.m);
        let rec = IterationRecord {
            iteration: j,
            train_loss: logistic_loss(data, &state.w),
            test_accuracy: test.map(|t| evaluate(&state.w, t)).transpose()?,
            residue_max,
            u_error_bound,
            u_drift,
            degraded,
        };
        state.push(rec);
    }
    let flagged = state.history.iter().filter(|r| r.degraded).count();
    if flagged > 0 {
        let msg = format!(
            "{flagged} of {} iterations had an imaginary residue above {} of |u|",
            cfg.k, analog.residue_threshold
        );
        log::info!("{msg}");
        warnings.push(msg);
    }
    let work = master.work();
    let transcript = master.shutdown();
    Ok(AnalogRun {
        model: state,
        traffic: transcript.counts(),
        transcript,
        work,
        privacy,
        leakage,
        a_d,
        u_error_bound,
        max_drift,
        drift_violations,
        warnings,
    })
}
