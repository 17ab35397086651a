use serde::{Deserialize, Serialize};

use super::{
    certified_overflow_threshold, evaluate, train_analog, train_centralized, train_fixed_point, AnalogConfig, Dataset,
    FixedPointConfig, TrainingConfig,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::runtime::{TrafficCounts, Transport};

/// Accuracy-versus-size study of the three trainers on balanced subsamples.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    /// Total sample counts; each must be even (half per class).
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub training: TrainingConfig,
    pub analog: AnalogConfig,
    pub fixed: FixedPointConfig,
    pub seed: u64,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub trainer: String,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub repeats: usize,
    /// Runs in which the finite-field gradient wrapped at least once.
    pub overflow_runs: usize,
}

pub const CURVE_CSV_HEADER: &str = "dataset_size,trainer,mean_accuracy,min_accuracy,max_accuracy,repeats,overflow_runs";

impl CurvePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.size, self.trainer, self.mean_accuracy, self.min_accuracy, self.max_accuracy, self.repeats, self.overflow_runs
        )
    }
}

/// Communication and arithmetic totals of one trainer over the whole study.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerOps {
    pub trainer: String,
    pub runs: usize,
    pub traffic: TrafficCounts,
    /// Complex multiply-adds (shared trainer), field multiplications
    /// (finite-field trainer) or real multiply-adds (plaintext).
    pub master_ops: u64,
    pub worker_ops: u64,
}

impl TrainerOps {
    fn add(&mut self, t: &TrafficCounts, master: u64, worker: u64) {
        self.runs += 1;
        self.traffic.master_to_worker += t.master_to_worker;
        self.traffic.worker_to_master += t.worker_to_master;
        self.traffic.worker_to_worker += t.worker_to_worker;
        self.traffic.bytes_master_to_worker += t.bytes_master_to_worker;
        self.traffic.bytes_worker_to_master += t.bytes_worker_to_master;
        self.master_ops += master;
        self.worker_ops += worker;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub points: Vec<CurvePoint>,
    pub ops: Vec<TrainerOps>,
    /// Sample size above which the finite-field gradient must wrap, from the
    /// statistic of the whole pool.
    pub certified_threshold: f64,
    pub pool_size: usize,
    pub test_size: usize,
}

impl CompareReport {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from(CURVE_CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&p.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn point(&self, size: usize, trainer: &str) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.size == size && p.trainer == trainer)
    }
}

pub const TRAINERS: [&str; 3] = ["analog", "fixed-point", "centralized"];

fn run_seed(seed: u64, size: usize, rep: usize) -> u64 {
    seed ^ ((size as u64) << 32 | rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn summarize(size: usize, trainer: &str, acc: &[f64], overflow_runs: usize) -> CurvePoint {
    CurvePoint {
        size,
        trainer: trainer.to_string(),
        mean_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
        min_accuracy: acc.iter().cloned().fold(f64::INFINITY, f64::min),
        max_accuracy: acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        repeats: acc.len(),
        overflow_runs,
    }
}

/// For every size and repeat, draws one balanced subsample of `pool` and
/// trains all three models on it; accuracy is measured on `test`.
pub fn compare(pool: &Dataset, test: &Dataset, cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.repeats == 0 || cfg.sizes.is_empty() {
        return Err(Error::arg("compare needs at least one size and one repeat"));
    }
    if let Some(s) = cfg.sizes.iter().find(|&&s| s == 0 || s % 2 == 1) {
        return Err(Error::arg(format!("dataset size {s} must be positive and even")));
    }
    let params = cfg.analog.params.with_degree(3)?;
    let transport = Transport::InProcess {
        n: params.n(),
        exec: cfg.exec,
        fault: None,
    };
    let mut ops: Vec<TrainerOps> = TRAINERS
        .iter()
        .map(|t| TrainerOps {
            trainer: t.to_string(),
            ..TrainerOps::default()
        })
        .collect();
    let mut points = Vec::new();
    for &size in &cfg.sizes {
        let mut acc = [Vec::new(), Vec::new(), Vec::new()];
        let mut overflow_runs = 0;
        for rep in 0..cfg.repeats {
            let seed = run_seed(cfg.seed, size, rep);
            let data = pool.balanced_subsample(size / 2, seed)?;

            let mut analog = cfg.analog.clone();
            analog.params = params.clone().with_seed(seed);
            let a = train_analog(&data, &cfg.training, &analog, &transport, None)?;
            acc[0].push(evaluate(&a.model.w, test)?);
            ops[0].add(&a.traffic, a.work.master_encode_macs + a.work.master_decode_macs, a.work.worker_macs);

            let fx = FixedPointConfig { seed, ..cfg.fixed };
            let f = train_fixed_point(&data, &cfg.training, &fx, None, cfg.exec)?;
            acc[1].push(evaluate(&f.model.w, test)?);
            if !f.overflow_iterations.is_empty() {
                overflow_runs += 1;
            }
            ops[1].add(&f.traffic, f.master_field_mults, f.worker_field_mults);

            let c = train_centralized(&data, &cfg.training, None)?;
            acc[2].push(evaluate(&c.w, test)?);
            ops[2].add(&TrafficCounts::default(), (2 * cfg.training.k * data.m * data.d) as u64, 0);
        }
        log::info!(
            "size {size}: analog {:.3}, fixed-point {:.3}, centralized {:.3}",
            acc[0].iter().sum::<f64>() / cfg.repeats as f64,
            acc[1].iter().sum::<f64>() / cfg.repeats as f64,
            acc[2].iter().sum::<f64>() / cfg.repeats as f64,
        );
        for (k, name) in TRAINERS.iter().enumerate() {
            points.push(summarize(size, name, &acc[k], if k == 1 { overflow_runs } else { 0 }));
        }
    }
    Ok(CompareReport {
        points,
        ops,
        certified_threshold: certified_overflow_threshold(pool, &cfg.fixed)?,
        pool_size: pool.m,
        test_size: test.m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{toy, SigmoidMode};
    use crate::sharing::ProtocolParams;

    #[test]
    fn small_study_has_every_point() {
        let pool = toy(60, 3, 1);
        let test = toy(40, 3, 2);
        let cfg = CompareConfig {
            sizes: vec![4, 10],
            repeats: 2,
            training: TrainingConfig {
                beta: 0.05,
                k: 3,
                sigmoid: SigmoidMode::Degree1,
            },
            analog: AnalogConfig::new(ProtocolParams::new(4, 1, 3, 10.0, 10.0, 2.0, 0).unwrap()),
            fixed: FixedPointConfig::default(),
            seed: 7,
            exec: Execution::Sequential,
        };
        let r = compare(&pool, &test, &cfg).unwrap();
        assert_eq!(r.points.len(), 6);
        assert!(r.point(10, "fixed-point").is_some());
        let csv = r.curve_csv();
        assert!(csv.starts_with(CURVE_CSV_HEADER));
        assert_eq!(csv.lines().count(), 7);
        assert!(r.ops.iter().all(|o| o.runs == 4 && o.traffic.worker_to_worker == 0));
        assert_eq!(r, compare(&pool, &test, &cfg).unwrap());
        let bad = CompareConfig { sizes: vec![5], ..cfg };
        assert!(compare(&pool, &test, &bad).is_err());
    }
}
