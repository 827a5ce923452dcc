use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Row-stochastic `c × c` corruption matrix; row `i` is the distribution of
/// the observed label given true class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    c: usize,
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let c = rows.len();
        if c < 2 {
            return Err(Error::InvalidArgument(format!(
                "transition matrix needs at least 2 classes, got {c}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidDistribution(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("row {i} sums to {sum}")));
            }
        }
        Ok(TransitionMatrix { c, rows })
    }

    pub fn identity(c: usize) -> Result<Self> {
        Self::new(
            (0..c)
                .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    /// Probability that a uniformly drawn class keeps its label.
    pub fn mean_keep_rate(&self) -> f64 {
        (0..self.c).map(|i| self.rows[i][i]).sum::<f64>() / self.c as f64
    }
}

fn check_ratio(c: usize, r: f64) -> Result<()> {
    if c < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {c}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("noise ratio {r} outside [0, 1)")));
    }
    Ok(())
}

/// Class `i` flips to `(i + 1) mod c` with probability `r`.
pub fn pairwise_transition(c: usize, r: f64) -> Result<TransitionMatrix> {
    check_ratio(c, r)?;
    let mut rows = vec![vec![0.0; c]; c];
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = 1.0 - r;
        row[(i + 1) % c] += r;
    }
    TransitionMatrix::new(rows)
}

/// Mass `r` spread evenly over the `c − 1` wrong classes.
pub fn symmetric_transition(c: usize, r: f64) -> Result<TransitionMatrix> {
    check_ratio(c, r)?;
    let off = r / (c - 1) as f64;
    TransitionMatrix::new(
        (0..c)
            .map(|i| (0..c).map(|j| if i == j { 1.0 - r } else { off }).collect())
            .collect(),
    )
}

/// Class-dependent flips: each `(source, target)` pair moves mass `r` from
/// `source` to `target`; unlisted classes are clean.
pub fn asymmetric_transition(c: usize, r: f64, flip_pairs: &[(usize, usize)]) -> Result<TransitionMatrix> {
    check_ratio(c, r)?;
    let mut rows: Vec<Vec<f64>> = (0..c)
        .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut seen = vec![false; c];
    for &(s, t) in flip_pairs {
        if s >= c || t >= c {
            return Err(Error::InvalidArgument(format!(
                "flip pair ({s}, {t}) out of range for {c} classes"
            )));
        }
        if s == t {
            return Err(Error::InvalidArgument(format!(
                "flip pair ({s}, {t}) maps a class to itself"
            )));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidArgument(format!("duplicate flip source {s}")));
        }
        rows[s][s] = 1.0 - r;
        rows[s][t] = r;
    }
    TransitionMatrix::new(rows)
}

/// Draws each noisy label independently from the row of its clean label.
pub fn inject_noise(clean_labels: &[usize], t: &TransitionMatrix, seed: u64) -> Result<Vec<usize>> {
    if let Some(bad) = clean_labels.iter().find(|&&y| y >= t.classes()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            t.classes()
        )));
    }
    let samplers = t
        .rows()
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::InvalidDistribution(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seed::rng(seed);
    Ok(clean_labels.iter().map(|&y| samplers[y].sample(&mut rng)).collect())
}

/// Serializable description of a corruption process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Symmetric { rate: f64 },
    Pairwise { rate: f64 },
    Asymmetric { rate: f64, pairs: Vec<(usize, usize)> },
}

impl NoiseSpec {
    pub fn transition(&self, c: usize) -> Result<TransitionMatrix> {
        match self {
            NoiseSpec::None => TransitionMatrix::identity(c),
            NoiseSpec::Symmetric { rate } => symmetric_transition(c, *rate),
            NoiseSpec::Pairwise { rate } => pairwise_transition(c, *rate),
            NoiseSpec::Asymmetric { rate, pairs } => asymmetric_transition(c, *rate, pairs),
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Symmetric { rate } | NoiseSpec::Pairwise { rate } | NoiseSpec::Asymmetric { rate, .. } => *rate,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseSpec::None => "none".into(),
            NoiseSpec::Symmetric { rate } => format!("symmetric:{rate}"),
            NoiseSpec::Pairwise { rate } => format!("pairwise:{rate}"),
            NoiseSpec::Asymmetric { rate, pairs } => format!("asymmetric:{rate}:{pairs:?}"),
        }
    }
}
