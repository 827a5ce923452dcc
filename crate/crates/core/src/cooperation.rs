//! Cooperation supervision and the per-sample CooL objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, LossSpec};
use crate::riskmath::{CooperationWeights, ProbVector};

/// Convex combination `Σ λ_i p_i` of classifier predictions.
pub fn combine(lambda: &CooperationWeights, preds: &[ProbVector]) -> Result<ProbVector> {
    if lambda.len() != preds.len() || preds.is_empty() {
        return Err(Error::Dimension(format!(
            "{} weights for {} predictions",
            lambda.len(),
            preds.len()
        )));
    }
    if let Some(l) = lambda.as_slice().iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidArgument(format!("combination weight {l} outside [0, 1]")));
    }
    let c = preds[0].classes();
    if preds.iter().any(|p| p.classes() != c) {
        return Err(Error::Dimension("predictions disagree on class count".into()));
    }
    let mut out = vec![0.0; c];
    for (l, p) in lambda.as_slice().iter().zip(preds) {
        out.iter_mut().zip(p.as_slice()).for_each(|(o, v)| *o += l * v);
    }
    ProbVector::new(out)
}

/// A combined target that training treats as a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervision(ProbVector);

impl Supervision {
    pub fn target(&self) -> &ProbVector {
        &self.0
    }

    pub fn into_target(self) -> ProbVector {
        self.0
    }
}

pub fn build_supervision(all_preds_for_sample: &[ProbVector], lambda: &CooperationWeights) -> Result<Supervision> {
    combine(lambda, all_preds_for_sample).map(Supervision)
}

/// Supervision for classifier `own` that leaves its own prediction out,
/// renormalizing the remaining weights.
pub fn build_peer_supervision(
    all_preds_for_sample: &[ProbVector],
    lambda: &CooperationWeights,
    own: usize,
) -> Result<Supervision> {
    let n = all_preds_for_sample.len();
    if n < 2 || own >= n || lambda.len() != n {
        return Err(Error::Dimension(format!(
            "peer supervision for classifier {own} of {n}"
        )));
    }
    let rest: f64 = lambda
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != own)
        .map(|(_, l)| l)
        .sum();
    if rest <= 0.0 {
        return Err(Error::InvalidArgument("peers carry no weight".into()));
    }
    let weights: Vec<f64> = lambda
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, l)| if i == own { 0.0 } else { l / rest })
        .collect();
    combine(&CooperationWeights::new(weights)?, all_preds_for_sample).map(Supervision)
}

/// Which samples receive the entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyScope {
    #[default]
    OwnPartition,
    AllData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolLossSpec {
    pub cooperation_target: ProbVector,
    /// Present exactly when the sample lies in the classifier's own partition.
    pub noisy_label: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub in_own_partition: bool,
    pub entropy_scope: EntropyScope,
}

impl CoolLossSpec {
    pub fn new(
        target: Supervision,
        own_partition_label: Option<usize>,
        alpha: f64,
        beta: f64,
        entropy_scope: EntropyScope,
    ) -> Result<Self> {
        let spec = CoolLossSpec {
            cooperation_target: target.into_target(),
            noisy_label: own_partition_label,
            alpha,
            beta,
            in_own_partition: own_partition_label.is_some(),
            entropy_scope,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.noisy_label.is_some() != self.in_own_partition {
            return Err(Error::InvalidArgument(
                "noisy label must be present exactly for own-partition samples".into(),
            ));
        }
        if matches!(self.noisy_label, Some(y) if y >= self.cooperation_target.classes()) {
            return Err(Error::InvalidArgument("noisy label out of range".into()));
        }
        Ok(())
    }

    fn entropy_weight(&self) -> f64 {
        match (self.entropy_scope, self.in_own_partition) {
            (EntropyScope::AllData, _) | (EntropyScope::OwnPartition, true) => self.beta,
            (EntropyScope::OwnPartition, false) => 0.0,
        }
    }

    /// The equivalent network objective.
    pub fn as_loss_spec(&self) -> LossSpec<'_> {
        LossSpec {
            soft_target: self.cooperation_target.as_slice(),
            hard_label: self.noisy_label,
            alpha: self.alpha,
            beta: self.entropy_weight(),
        }
    }
}

/// `CE(p, p̂) + [own] α·CE(p, y) + β·H(p)` for one prediction.
pub fn cool_loss(prediction: &ProbVector, spec: &CoolLossSpec) -> Result<f64> {
    spec.validate()?;
    if prediction.classes() != spec.cooperation_target.classes() {
        return Err(Error::Dimension(format!(
            "{} predicted classes against {} target classes",
            prediction.classes(),
            spec.cooperation_target.classes()
        )));
    }
    Ok(spec.as_loss_spec().value(prediction.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Constant,
    LinearDecay,
}

/// Weight of the noisy-label term over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub alpha0: f64,
    pub end_epoch: usize,
    pub mode: AlphaMode,
}

impl AlphaSchedule {
    pub fn constant(alpha0: f64) -> Self {
        AlphaSchedule {
            alpha0,
            end_epoch: 0,
            mode: AlphaMode::Constant,
        }
    }

    pub fn linear(alpha0: f64, end_epoch: usize) -> Self {
        AlphaSchedule {
            alpha0,
            end_epoch,
            mode: AlphaMode::LinearDecay,
        }
    }
}

pub fn alpha_at(schedule: &AlphaSchedule, epoch: usize) -> Result<f64> {
    if !(schedule.alpha0 >= 0.0 && schedule.alpha0.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha0 = {}", schedule.alpha0)));
    }
    match schedule.mode {
        AlphaMode::Constant => Ok(schedule.alpha0),
        AlphaMode::LinearDecay => {
            if schedule.end_epoch == 0 {
                return Err(Error::InvalidArgument("linear decay needs end_epoch > 0".into()));
            }
            let remaining = 1.0 - epoch as f64 / schedule.end_epoch as f64;
            Ok(schedule.alpha0 * remaining.max(0.0))
        }
    }
}

/// Entropy of the target, a lower bound on the soft cross-entropy term.
pub fn target_entropy(spec: &CoolLossSpec) -> f64 {
    nn::prediction_entropy(&spec.cooperation_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn sup(v: &[f64]) -> Supervision {
        Supervision(pv(v))
    }

    #[test]
    fn combine_examples() {
        let p1 = pv(&[1.0, 0.0]);
        let p2 = pv(&[0.0, 1.0]);
        let first = CooperationWeights::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(combine(&first, &[p1.clone(), p2.clone()]).unwrap(), p1);
        let half = CooperationWeights::uniform(2).unwrap();
        assert_eq!(combine(&half, &[p1.clone(), p2.clone()]).unwrap(), pv(&[0.5, 0.5]));
        let three = [pv(&[0.2, 0.3, 0.5]), pv(&[0.9, 0.05, 0.05]), pv(&[0.1, 0.8, 0.1])];
        let w = CooperationWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let out = combine(&w, &three).unwrap();
        assert_abs_diff_eq!(out.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let negative = CooperationWeights::new(vec![1.5, -0.5]).unwrap();
        assert!(combine(&negative, &[p1.clone(), p2.clone()]).is_err());
        assert!(combine(&half, &[p1]).is_err());
    }

    #[test]
    fn peer_supervision_excludes_self() {
        let preds = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[0.5, 0.5])];
        let w = CooperationWeights::uniform(3).unwrap();
        let s = build_peer_supervision(&preds, &w, 0).unwrap();
        assert_abs_diff_eq!(s.target().get(0), 0.25, epsilon = 1e-15);
        assert!(build_peer_supervision(&preds[..1], &CooperationWeights::uniform(1).unwrap(), 0).is_err());
    }

    #[test]
    fn cool_loss_examples() {
        let target = pv(&[0.1, 0.6, 0.3]);
        let pred = pv(&[0.3, 0.3, 0.4]);
        let plain = CoolLossSpec::new(sup(target.as_slice()), None, 0.0, 0.0, EntropyScope::OwnPartition).unwrap();
        assert_abs_diff_eq!(
            cool_loss(&pred, &plain).unwrap(),
            nn::soft_cross_entropy(&pred, &target).unwrap(),
            epsilon = 1e-15
        );

        let hot = pv(&[0.0, 1.0, 0.0]);
        let spec = CoolLossSpec::new(sup(hot.as_slice()), Some(1), 0.3, 0.7, EntropyScope::OwnPartition).unwrap();
        assert_eq!(cool_loss(&hot, &spec).unwrap(), 0.0);

        // log 4 + 0.05 log 4 + 0.05 log 4.
        let uniform = ProbVector::uniform(4).unwrap();
        let spec = CoolLossSpec::new(
            sup(&[0.0, 0.0, 1.0, 0.0]),
            Some(2),
            0.05,
            0.05,
            EntropyScope::OwnPartition,
        )
        .unwrap();
        let expected = 4f64.ln() + 0.05 * 4f64.ln() + 0.05 * 4f64.ln();
        assert_abs_diff_eq!(cool_loss(&uniform, &spec).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.5249, epsilon = 1e-4);
    }

    #[test]
    fn out_of_partition_samples_only_see_the_cooperation_term() {
        let target = pv(&[0.2, 0.8]);
        let pred = pv(&[0.6, 0.4]);
        let outside = CoolLossSpec::new(sup(target.as_slice()), None, 0.5, 0.5, EntropyScope::OwnPartition).unwrap();
        assert_abs_diff_eq!(
            cool_loss(&pred, &outside).unwrap(),
            nn::soft_cross_entropy(&pred, &target).unwrap(),
            epsilon = 1e-15
        );
        let everywhere = CoolLossSpec {
            entropy_scope: EntropyScope::AllData,
            ..outside
        };
        assert_abs_diff_eq!(
            cool_loss(&pred, &everywhere).unwrap(),
            nn::soft_cross_entropy(&pred, &target).unwrap() + 0.5 * nn::prediction_entropy(&pred),
            epsilon = 1e-15
        );
    }

    #[test]
    fn spec_invariants() {
        assert!(CoolLossSpec::new(sup(&[0.5, 0.5]), None, -0.1, 0.0, EntropyScope::OwnPartition).is_err());
        assert!(CoolLossSpec::new(sup(&[0.5, 0.5]), Some(2), 0.1, 0.0, EntropyScope::OwnPartition).is_err());
        let mut s = CoolLossSpec::new(sup(&[0.5, 0.5]), Some(0), 0.1, 0.0, EntropyScope::OwnPartition).unwrap();
        s.in_own_partition = false;
        assert!(cool_loss(&pv(&[0.5, 0.5]), &s).is_err());
    }

    #[test]
    fn self_distillation_loss_is_at_least_target_entropy() {
        let p = pv(&[0.7, 0.2, 0.1]);
        let spec = CoolLossSpec::new(sup(p.as_slice()), None, 0.0, 0.0, EntropyScope::OwnPartition).unwrap();
        assert_abs_diff_eq!(cool_loss(&p, &spec).unwrap(), target_entropy(&spec), epsilon = 1e-15);
        let other = pv(&[0.3, 0.3, 0.4]);
        assert!(cool_loss(&other, &spec).unwrap() >= target_entropy(&spec));
    }

    #[test]
    fn alpha_schedule_examples() {
        let s = AlphaSchedule::linear(0.05, 100);
        assert_eq!(alpha_at(&s, 0).unwrap(), 0.05);
        assert_abs_diff_eq!(alpha_at(&s, 50).unwrap(), 0.025, epsilon = 1e-15);
        assert_eq!(alpha_at(&s, 100).unwrap(), 0.0);
        assert_eq!(alpha_at(&s, 250).unwrap(), 0.0);
        assert_eq!(alpha_at(&AlphaSchedule::constant(0.1), 999).unwrap(), 0.1);
        assert!(alpha_at(&AlphaSchedule::linear(0.05, 0), 3).is_err());
    }

    fn dist(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, c).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn combine_is_permutation_equivariant(
            preds in prop::collection::vec(dist(4), 3),
            w in prop::collection::vec(0.01f64..1.0, 3),
            shift in 1usize..3,
        ) {
            let s: f64 = w.iter().sum();
            let l: Vec<f64> = w.iter().map(|x| x / s).collect();
            let p: Vec<ProbVector> = preds.iter().map(|v| pv(v)).collect();
            let perm: Vec<usize> = (0..3).map(|i| (i + shift) % 3).collect();
            let pp: Vec<ProbVector> = perm.iter().map(|&i| p[i].clone()).collect();
            let pl: Vec<f64> = perm.iter().map(|&i| l[i]).collect();
            let a = combine(&CooperationWeights::new(l).unwrap(), &p).unwrap();
            let b = combine(&CooperationWeights::new(pl).unwrap(), &pp).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn cool_loss_is_monotone_in_weights(
            target in dist(3), pred in dist(3), y in 0usize..3,
            a1 in 0.0f64..1.0, a2 in 0.0f64..1.0, b1 in 0.0f64..1.0, b2 in 0.0f64..1.0,
        ) {
            let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let (blo, bhi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let pred = pv(&pred);
            let lo = CoolLossSpec::new(sup(&target), Some(y), alo, blo, EntropyScope::OwnPartition).unwrap();
            let hi = CoolLossSpec::new(sup(&target), Some(y), ahi, bhi, EntropyScope::OwnPartition).unwrap();
            prop_assert!(cool_loss(&pred, &lo).unwrap() <= cool_loss(&pred, &hi).unwrap() + 1e-15);
        }
    }
}
