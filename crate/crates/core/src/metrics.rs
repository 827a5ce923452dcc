//! Training-dynamics measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskmath::{argmax, ProbVector, RiskMatrix};

/// Fraction of supervisions whose arg-max equals the true class. Ties pick
/// the lowest class index.
pub fn label_precision(supervisions: &[ProbVector], true_labels: &[usize]) -> Result<f64> {
    check_aligned(supervisions.len(), true_labels.len())?;
    let correct = supervisions
        .iter()
        .zip(true_labels)
        .filter(|(s, &y)| s.argmax() == y)
        .count();
    Ok(correct as f64 / true_labels.len() as f64)
}

/// Mean probability mass a supervision puts on the true class.
pub fn true_class_mass(supervisions: &[ProbVector], true_labels: &[usize]) -> Result<f64> {
    check_aligned(supervisions.len(), true_labels.len())?;
    let mass: f64 = supervisions
        .iter()
        .zip(true_labels)
        .map(|(s, &y)| s.as_slice().get(y).copied().unwrap_or(0.0))
        .sum();
    Ok(mass / true_labels.len() as f64)
}

/// Precision of hard-label supervision: fraction of observed labels that are
/// correct.
pub fn hard_label_precision(labels: &[usize], true_labels: &[usize]) -> Result<f64> {
    check_aligned(labels.len(), true_labels.len())?;
    let correct = labels.iter().zip(true_labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / labels.len() as f64)
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::Dimension("no supervisions".into()));
    }
    if a != b {
        return Err(Error::Dimension(format!("{a} supervisions for {b} labels")));
    }
    Ok(())
}

/// Accuracy of arg-max predictions stored as raw probability rows.
pub fn accuracy(probs: &[Vec<f64>], true_labels: &[usize]) -> Result<f64> {
    check_aligned(probs.len(), true_labels.len())?;
    let correct = probs.iter().zip(true_labels).filter(|(p, &y)| argmax(p) == y).count();
    Ok(correct as f64 / true_labels.len() as f64)
}

pub fn last_k_average(curve: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > curve.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot average the last {k} of {} values",
            curve.len()
        )));
    }
    Ok(curve[curve.len() - k..].iter().sum::<f64>() / k as f64)
}

/// True when the mean of the final `split` fraction of the curve exceeds the
/// mean of the initial `split` fraction. Each window holds at least one point.
pub fn trend_increasing(curve: &[f64], split: f64) -> Result<bool> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument("trend needs at least two points".into()));
    }
    if !(split > 0.0 && split <= 0.5) {
        return Err(Error::InvalidArgument(format!("split {split} outside (0, 0.5]")));
    }
    let k = ((curve.len() as f64 * split).floor() as usize).max(1);
    let head = curve[..k].iter().sum::<f64>() / k as f64;
    let tail = curve[curve.len() - k..].iter().sum::<f64>() / k as f64;
    Ok(tail > head)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagOffEstimate {
    pub r_diag: f64,
    /// Equal to `r_diag` for a 1×1 matrix, which has no off-diagonal.
    pub r_off: f64,
    /// Largest absolute deviation of any entry from its group mean.
    pub max_deviation: f64,
}

/// Means of the diagonal and off-diagonal entries of a risk matrix.
pub fn estimate_diag_off(r: &RiskMatrix) -> DiagOffEstimate {
    let n = r.n();
    let diag: Vec<f64> = (0..n).map(|i| r.get(i, i)).collect();
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| r.get(i, j))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let r_diag = mean(&diag);
    let r_off = if off.is_empty() { r_diag } else { mean(&off) };
    let max_deviation = diag
        .iter()
        .map(|v| (v - r_diag).abs())
        .chain(off.iter().map(|v| (v - r_off).abs()))
        .fold(0.0, f64::max);
    DiagOffEstimate {
        r_diag,
        r_off,
        max_deviation,
    }
}

/// Measurements for one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// True while classifiers are still in their warm-up phase.
    pub warmup: bool,
    /// Test accuracy of each classifier.
    pub test_acc: Vec<f64>,
    /// Test accuracy of the soft vote of all classifiers.
    pub ensemble_acc: f64,
    pub label_precision: f64,
    pub true_class_mass: f64,
    /// Risk of the combined supervision on the risk subsample.
    pub r_hat: f64,
    pub r_diag: f64,
    pub r_off: f64,
    pub diag_off_deviation: f64,
    /// Lagrange-optimal cooperation risk, when the risk matrix is invertible.
    pub r_min: Option<f64>,
    /// Whether `0 ≤ r12 < min(r1, r2)` held this epoch (two classifiers only).
    pub cross_risk_condition: Option<bool>,
    pub train_loss: f64,
    /// Full risk matrix, row-major.
    #[serde(skip)]
    pub risk_entries: Vec<f64>,
}

impl EpochMetrics {
    pub fn mean_test_acc(&self) -> f64 {
        self.test_acc.iter().sum::<f64>() / self.test_acc.len() as f64
    }
}
