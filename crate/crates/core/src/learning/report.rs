use serde::{Deserialize, Serialize};

use super::{ClassMap, FeatureScale, IterationRecord, TrainingConfig};
use crate::privacy::{LeakageAccounting, PrivacyReport};
use crate::runtime::{TrafficCounts, WorkCounts};

pub const HISTORY_CSV_HEADER: &str = "iteration,train_loss,test_accuracy,residue_max,u_error_bound";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-iteration curve, one line per update.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut s = String::from(HISTORY_CSV_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&format!(
            "{},{},{},{:e},{}\n",
            r.iteration,
            r.train_loss,
            opt(r.test_accuracy),
            r.residue_max,
            r.u_error_bound.map(|b| format!("{b:e}")).unwrap_or_default()
        ));
    }
    s
}

/// Everything a `train` invocation reports, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trainer: String,
    pub train_size: usize,
    pub test_size: Option<usize>,
    pub features: usize,
    pub class_map: ClassMap,
    pub scale: FeatureScale,
    pub training: TrainingConfig,
    pub seed: u64,
    pub final_train_loss: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub final_weights_l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage: Option<LeakageAccounting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work: Option<WorkCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overflow_iterations: Option<Vec<usize>>,
    pub warnings: Vec<String>,
    pub history: Vec<IterationRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let h = vec![IterationRecord {
            iteration: 1,
            train_loss: 0.5,
            test_accuracy: Some(0.75),
            residue_max: 0.0,
            u_error_bound: None,
            u_drift: None,
            degraded: false,
        }];
        let csv = history_csv(&h);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], HISTORY_CSV_HEADER);
        assert_eq!(lines[1], "1,0.5,0.75,0e0,");
    }
}
