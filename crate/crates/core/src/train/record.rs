use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use crate::error::Result;
use crate::metrics::{last_k_average, EpochMetrics};

pub const SCHEMA_VERSION: u32 = 1;

/// Per-epoch curve plus a summary of a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub networks: usize,
    pub rows: Vec<EpochMetrics>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub last_k: usize,
    /// Mean over the last `k` epochs of the average per-network accuracy.
    pub last_k_mean_acc: f64,
    pub last_k_ensemble_acc: f64,
    pub last_k_acc_per_network: Vec<f64>,
    pub peak_mean_acc: f64,
    pub peak_epoch: usize,
    pub final_mean_acc: f64,
    pub final_ensemble_acc: f64,
    pub final_label_precision: f64,
    pub final_r_hat: f64,
}

impl RunRecord {
    pub(crate) fn new(method: Method, networks: usize, rows: Vec<EpochMetrics>, k: usize) -> Result<Self> {
        let mean: Vec<f64> = rows.iter().map(EpochMetrics::mean_test_acc).collect();
        let ensemble: Vec<f64> = rows.iter().map(|r| r.ensemble_acc).collect();
        let per_network = (0..networks)
            .map(|i| {
                let curve: Vec<f64> = rows.iter().map(|r| r.test_acc[i]).collect();
                last_k_average(&curve, k)
            })
            .collect::<Result<Vec<_>>>()?;
        let (peak_idx, peak) =
            mean.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        let last = rows.last().expect("run with no epochs");
        let summary = RunSummary {
            last_k: k,
            last_k_mean_acc: last_k_average(&mean, k)?,
            last_k_ensemble_acc: last_k_average(&ensemble, k)?,
            last_k_acc_per_network: per_network,
            peak_mean_acc: peak,
            peak_epoch: rows[peak_idx].epoch,
            final_mean_acc: *mean.last().unwrap(),
            final_ensemble_acc: last.ensemble_acc,
            final_label_precision: last.label_precision,
            final_r_hat: last.r_hat,
        };
        Ok(RunRecord {
            method,
            networks,
            rows,
            summary,
        })
    }

    pub fn mean_acc_curve(&self) -> Vec<f64> {
        self.rows.iter().map(EpochMetrics::mean_test_acc).collect()
    }

    pub fn precision_curve(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.label_precision).collect()
    }

    /// Curve CSV. Columns, in order:
    ///
    /// `schema_version, epoch, warmup, mean_acc, ensemble_acc, label_precision,
    /// true_class_mass, r_hat, r_diag, r_off, diag_off_deviation, r_min,
    /// cross_risk_condition, train_loss, acc_0 .. acc_{n-1}`
    ///
    /// Absent optional values are empty fields.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "schema_version",
            "epoch",
            "warmup",
            "mean_acc",
            "ensemble_acc",
            "label_precision",
            "true_class_mass",
            "r_hat",
            "r_diag",
            "r_off",
            "diag_off_deviation",
            "r_min",
            "cross_risk_condition",
            "train_loss",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..self.networks).map(|i| format!("acc_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                r.epoch.to_string(),
                r.warmup.to_string(),
                r.mean_test_acc().to_string(),
                r.ensemble_acc.to_string(),
                r.label_precision.to_string(),
                r.true_class_mass.to_string(),
                r.r_hat.to_string(),
                r.r_diag.to_string(),
                r.r_off.to_string(),
                r.diag_off_deviation.to_string(),
                r.r_min.map(|v| v.to_string()).unwrap_or_default(),
                r.cross_risk_condition.map(|v| v.to_string()).unwrap_or_default(),
                r.train_loss.to_string(),
            ];
            row.extend(r.test_acc.iter().map(|a| a.to_string()));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::io("<csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// JSON summary with the full configuration echoed back.
    pub fn summary_json(&self, config: &TrainConfig, extra: serde_json::Value) -> Result<String> {
        let value = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "networks": self.networks,
            "seed": config.seed,
            "config": config,
            "summary": self.summary,
            "context": extra,
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}
