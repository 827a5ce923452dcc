//! Supervision risk and closed-form cooperation weights.
//!
//! A supervision `s` for a sample with ground truth `y*` has risk
//! `‖s − y*‖²`; the risk of a prediction set is the plain mean of that
//! quantity over the samples. Combining classifiers with weights `λ` on the
//! affine hyperplane `Σλ = 1` gives a risk that is the quadratic form
//! `λ R λᵀ` in the matrix of pairwise cross-risks, which is what the
//! optimizers in this module minimize.

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;
const PIVOT_THRESHOLD: f64 = 1e-10;

/// A probability distribution over `c` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some((k, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {k} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    pub fn one_hot(classes: usize, class: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(ProbVector(probs))
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("zero classes".into()));
        }
        Ok(ProbVector(vec![1.0 / classes as f64; classes]))
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Weights on the affine hyperplane `Σλ = 1`.
///
/// Entries may be negative: the unconstrained Lagrange optimum is not
/// guaranteed to stay inside the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperationWeights(Vec<f64>);

impl CooperationWeights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("cooperation weight".into()));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("cooperation weights sum to {sum}")));
        }
        Ok(CooperationWeights(lambda))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("zero classifiers".into()));
        }
        Ok(CooperationWeights(vec![1.0 / n as f64; n]))
    }

    /// Two-classifier weights `(λ, 1 − λ)`.
    pub fn dual(lambda: f64) -> Result<Self> {
        Self::new(vec![lambda, 1.0 - lambda])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Symmetric `n × n` matrix of pairwise cross-risks; the diagonal holds the
/// individual risks.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RiskMatrix {
    /// Builds a matrix from row-major entries, requiring exact symmetry and
    /// non-negative entries.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        let m = Self::from_entries_allow_negative(n, entries)?;
        if let Some(v) = m.entries.iter().find(|v| **v < 0.0) {
            return Err(Error::ConditionViolation(format!("negative cross-risk {v}")));
        }
        Ok(m)
    }

    /// Like [`RiskMatrix::from_entries`] but only the diagonal must be
    /// non-negative. Cross-risks of genuine distributions against one-hot
    /// truths are never negative, so this exists for hand-built matrices.
    pub fn from_entries_allow_negative(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} entries for a {n}x{n} risk matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("risk matrix entry".into()));
        }
        for i in 0..n {
            if entries[i * n + i] < 0.0 {
                return Err(Error::ConditionViolation(format!("negative individual risk at {i}")));
            }
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::ConditionViolation(format!("asymmetric entries at ({i}, {j})")));
                }
            }
        }
        Ok(RiskMatrix { n, entries })
    }

    /// The equi-correlated matrix with `r_diag` on the diagonal and `r_off`
    /// everywhere else.
    pub fn equicorrelated(n: usize, r_diag: f64, r_off: f64) -> Result<Self> {
        let entries = (0..n * n)
            .map(|k| if k / n == k % n { r_diag } else { r_off })
            .collect();
        Self::from_entries(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

fn check_aligned(preds: &[ProbVector], truths: &[ProbVector]) -> Result<usize> {
    if preds.is_empty() || truths.is_empty() {
        return Err(Error::Dimension("empty sample set".into()));
    }
    if preds.len() != truths.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let c = truths[0].classes();
    if let Some(i) = preds
        .iter()
        .zip(truths)
        .position(|(p, t)| p.classes() != c || t.classes() != c)
    {
        return Err(Error::Dimension(format!("sample {i} does not have {c} classes")));
    }
    Ok(c)
}

/// Mean squared Euclidean distance between predictions and truths.
pub fn empirical_risk(preds: &[ProbVector], truths: &[ProbVector]) -> Result<f64> {
    cross_risk(preds, preds, truths)
}

/// Mean inner product of the two classifiers' error vectors `p − y*`.
pub fn cross_risk(preds_i: &[ProbVector], preds_j: &[ProbVector], truths: &[ProbVector]) -> Result<f64> {
    check_aligned(preds_i, truths)?;
    check_aligned(preds_j, truths)?;
    let total: f64 = preds_i
        .iter()
        .zip(preds_j)
        .zip(truths)
        .map(|((a, b), t)| error_dot(a.as_slice(), b.as_slice(), t.as_slice()))
        .sum();
    Ok(total / truths.len() as f64)
}

fn error_dot(a: &[f64], b: &[f64], t: &[f64]) -> f64 {
    a.iter().zip(b).zip(t).map(|((a, b), t)| (a - t) * (b - t)).sum()
}

// Per-sample error inner products of distributions against a one-hot truth
// are non-negative; this slack only absorbs rounding.
const CROSS_RISK_SLACK: f64 = 1e-12;

/// Pairwise cross-risk matrix of `n` aligned prediction sequences.
pub fn risk_matrix(all_preds: &[Vec<ProbVector>], truths: &[ProbVector]) -> Result<RiskMatrix> {
    let n = all_preds.len();
    if n == 0 {
        return Err(Error::Dimension("no classifiers".into()));
    }
    for preds in all_preds {
        check_aligned(preds, truths)?;
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let r = cross_risk(&all_preds[i], &all_preds[j], truths)?;
            if r < -CROSS_RISK_SLACK {
                return Err(Error::ConditionViolation(format!("cross-risk ({i}, {j}) is {r}")));
            }
            let r = r.max(0.0);
            entries[i * n + j] = r;
            entries[j * n + i] = r;
        }
    }
    RiskMatrix::from_entries(n, entries)
}

/// `λ R λᵀ`, the risk of the supervision `Σ λ_i p_i`.
pub fn cooperation_risk(lambda: &CooperationWeights, r: &RiskMatrix) -> Result<f64> {
    let n = r.n();
    if lambda.len() != n {
        return Err(Error::Dimension(format!(
            "{} weights for {n} classifiers",
            lambda.len()
        )));
    }
    let l = lambda.as_slice();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += l[i] * r.get(i, j) * l[j];
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptimum {
    /// Weight on the first classifier.
    pub lambda_star: f64,
    pub min_risk: f64,
    /// Set when `lambda_star` falls outside `(0, 1)`, i.e. one classifier
    /// dominates and the inputs break the cross-risk precondition.
    pub dominated: bool,
}

/// Minimizer of `λ²r1 + 2λ(1−λ)r12 + (1−λ)²r2` over `λ`.
///
/// The result is not clamped to `[0, 1]`.
pub fn optimal_lambda_dual(r1: f64, r2: f64, r12: f64) -> Result<DualOptimum> {
    if !(r1.is_finite() && r2.is_finite() && r12.is_finite()) {
        return Err(Error::NonFinite("risk".into()));
    }
    let denominator = r1 + r2 - 2.0 * r12;
    if denominator <= 0.0 {
        return Err(Error::IdenticalClassifiers { denominator });
    }
    let lambda_star = (r2 - r12) / denominator;
    let min_risk = r1 - (r1 - r12).powi(2) / denominator;
    Ok(DualOptimum {
        lambda_star,
        min_risk,
        dominated: !(lambda_star > 0.0 && lambda_star < 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOptimum {
    pub weights: CooperationWeights,
    pub min_risk: f64,
}

/// Lagrange optimum of `λ R λᵀ` subject to `Σλ = 1`:
/// `λ₀ = R⁻¹1 / 1ᵀR⁻¹1` with minimum `1 / Σ_ij [R⁻¹]_ij`.
pub fn optimal_lambda_multi(r: &RiskMatrix) -> Result<MultiOptimum> {
    let n = r.n();
    let x = solve(n, r.entries(), &vec![1.0; n])?;
    // R is symmetric, so 1ᵀR⁻¹1 is the sum of every entry of R⁻¹.
    let inverse_sum: f64 = x.iter().sum();
    if !(inverse_sum.is_finite() && inverse_sum > 0.0) {
        return Err(Error::ConditionViolation(format!(
            "sum of inverse entries is {inverse_sum}; R is not positive definite"
        )));
    }
    let lambda: Vec<f64> = x.iter().map(|v| v / inverse_sum).collect();
    Ok(MultiOptimum {
        weights: CooperationWeights::new(lambda)?,
        min_risk: 1.0 / inverse_sum,
    })
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve(n: usize, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap_or(col);
        let magnitude = m[pivot_row * n + col].abs();
        if magnitude < PIVOT_THRESHOLD {
            return Err(Error::SingularMatrix {
                pivot_index: col,
                magnitude,
            });
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        let pivot = m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (x[row] - tail) / m[row * n + row];
    }
    Ok(x)
}

/// Minimum cooperation risk when every individual risk is `r_diag` and every
/// cross-risk is `r_off`: `(r_diag − r_off)/n + r_off`.
pub fn symmetric_min_risk(n: usize, r_diag: f64, r_off: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if r_off < 0.0 {
        return Err(Error::ConditionViolation(format!("r_off = {r_off} is negative")));
    }
    if r_off >= r_diag {
        return Err(Error::ConditionViolation(format!(
            "r_off = {r_off} must be below r_diag = {r_diag}"
        )));
    }
    Ok((r_diag - r_off) / n as f64 + r_off)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodistillationOptimum {
    /// Weight on the noisy labels.
    pub lambda: f64,
    pub risk: f64,
}

/// Optimal mix of noisy labels (risk `r_y`) with a peer prediction (risk
/// `r_p2`) when the two error sources are uncorrelated.
pub fn codistillation_risk(r_y: f64, r_p2: f64) -> Result<CodistillationOptimum> {
    if !(r_y > 0.0 && r_p2 > 0.0) || !(r_y.is_finite() && r_p2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "risks must be positive, got r_y = {r_y}, r_p2 = {r_p2}"
        )));
    }
    Ok(CodistillationOptimum {
        lambda: r_p2 / (r_y + r_p2),
        risk: r_y * r_p2 / (r_y + r_p2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn hot(c: usize, k: usize) -> ProbVector {
        ProbVector::one_hot(c, k).unwrap()
    }

    fn brute_risk(preds: &[Vec<f64>], truths: &[usize]) -> f64 {
        let mut total = 0.0;
        for (p, &t) in preds.iter().zip(truths) {
            for (k, &v) in p.iter().enumerate() {
                let target = if k == t { 1.0 } else { 0.0 };
                total += (v - target) * (v - target);
            }
        }
        total / preds.len() as f64
    }

    #[test]
    fn prob_vector_rejects_bad_input() {
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert_eq!(pv(&[0.2, 0.4, 0.4]).argmax(), 1);
    }

    #[test]
    fn risk_of_perfect_predictions_is_zero() {
        let truths: Vec<_> = (0..5).map(|i| hot(3, i % 3)).collect();
        assert_eq!(empirical_risk(&truths, &truths).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_risk() {
        let r = empirical_risk(&[ProbVector::uniform(10).unwrap()], &[hot(10, 3)]).unwrap();
        assert_abs_diff_eq!(r, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn smoothed_predictions_match_summation_oracle() {
        let (c, eps) = (4, 0.2);
        let labels: Vec<usize> = (0..1000).map(|i| (i * 7 + i / 3) % c).collect();
        let raw: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| {
                (0..c)
                    .map(|k| (1.0 - eps) * if k == y { 1.0 } else { 0.0 } + eps / c as f64)
                    .collect()
            })
            .collect();
        let preds: Vec<_> = raw.iter().map(|v| pv(v)).collect();
        let truths: Vec<_> = labels.iter().map(|&y| hot(c, y)).collect();
        let expected = brute_risk(&raw, &labels);
        assert_abs_diff_eq!(empirical_risk(&preds, &truths).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let t = vec![hot(2, 0)];
        assert!(matches!(empirical_risk(&[], &[]), Err(Error::Dimension(_))));
        assert!(matches!(
            empirical_risk(&[hot(2, 0), hot(2, 1)], &t),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(empirical_risk(&[hot(3, 0)], &t), Err(Error::Dimension(_))));
        assert!(risk_matrix(&[vec![hot(2, 0)], vec![]], &t).is_err());
    }

    #[test]
    fn cross_risk_of_perfect_classifier_is_zero() {
        let truths = vec![hot(3, 0), hot(3, 2)];
        let other = vec![pv(&[0.2, 0.5, 0.3]), pv(&[0.6, 0.1, 0.3])];
        assert_eq!(cross_risk(&truths, &other, &truths).unwrap(), 0.0);
    }

    #[test]
    fn never_jointly_wrong_pair_beats_both() {
        // Six samples over two classes, truth always class 0. Classifier a
        // errs on samples 0 and 1, classifier b on samples 4 and 5.
        let truths = vec![hot(2, 0); 6];
        let a = vec![
            pv(&[0.3, 0.7]),
            pv(&[0.4, 0.6]),
            pv(&[0.9, 0.1]),
            pv(&[0.8, 0.2]),
            pv(&[0.9, 0.1]),
            pv(&[0.7, 0.3]),
        ];
        let b = vec![
            pv(&[0.9, 0.1]),
            pv(&[0.8, 0.2]),
            pv(&[1.0, 0.0]),
            pv(&[0.9, 0.1]),
            pv(&[0.2, 0.8]),
            pv(&[0.4, 0.6]),
        ];
        // Per-sample error inner product is 2·(1−a0)(1−b0).
        let expected = 2.0 * (0.7 * 0.1 + 0.6 * 0.2 + 0.1 * 0.0 + 0.2 * 0.1 + 0.1 * 0.8 + 0.3 * 0.6) / 6.0;
        let r12 = cross_risk(&a, &b, &truths).unwrap();
        assert_abs_diff_eq!(r12, expected, epsilon = 1e-12);
        let r1 = empirical_risk(&a, &truths).unwrap();
        let r2 = empirical_risk(&b, &truths).unwrap();
        assert!(r12 >= 0.0 && r12 < r1.min(r2));
    }

    #[test]
    fn risk_matrix_degenerate_cases() {
        let truths = vec![hot(3, 0), hot(3, 1)];
        let p = vec![pv(&[0.5, 0.3, 0.2]), pv(&[0.1, 0.1, 0.8])];
        let r1 = risk_matrix(std::slice::from_ref(&p), &truths).unwrap();
        assert_eq!(r1.n(), 1);
        assert_eq!(r1.get(0, 0), empirical_risk(&p, &truths).unwrap());
        let r2 = risk_matrix(&[p.clone(), p.clone()], &truths).unwrap();
        assert!(r2.entries().iter().all(|v| *v == r2.get(0, 0)));
    }

    #[test]
    fn cooperation_risk_examples() {
        let r = RiskMatrix::from_entries(2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let half = CooperationWeights::uniform(2).unwrap();
        assert_abs_diff_eq!(cooperation_risk(&half, &r).unwrap(), 0.25, epsilon = 1e-15);
        let first = CooperationWeights::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(cooperation_risk(&first, &r).unwrap(), 0.4);
        let three = CooperationWeights::uniform(3).unwrap();
        assert!(matches!(cooperation_risk(&three, &r), Err(Error::Dimension(_))));
    }

    #[test]
    fn dual_optimum_examples() {
        let sym = optimal_lambda_dual(0.4, 0.4, 0.0).unwrap();
        assert_abs_diff_eq!(sym.lambda_star, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sym.min_risk, 0.2, epsilon = 1e-15);
        assert!(!sym.dominated);

        // Grid oracle at step 1e-5 over [0, 1].
        let (r1, r2, r12) = (0.6, 0.3, 0.1);
        let (mut best_l, mut best) = (0.0, f64::INFINITY);
        for i in 0..=100_000 {
            let l = i as f64 * 1e-5;
            let v = l * l * r1 + 2.0 * l * (1.0 - l) * r12 + (1.0 - l) * (1.0 - l) * r2;
            if v < best {
                best = v;
                best_l = l;
            }
        }
        let opt = optimal_lambda_dual(r1, r2, r12).unwrap();
        assert_abs_diff_eq!(opt.lambda_star, best_l, epsilon = 1e-5);
        assert_abs_diff_eq!(opt.min_risk, best, epsilon = 1e-9);
        assert_abs_diff_eq!(opt.lambda_star, 0.2857142857, epsilon = 1e-9);
        assert_abs_diff_eq!(opt.min_risk, 0.2428571428, epsilon = 1e-9);

        assert!(matches!(
            optimal_lambda_dual(0.5, 0.5, 0.5),
            Err(Error::IdenticalClassifiers { .. })
        ));
    }

    #[test]
    fn dual_optimum_flags_dominated_inputs() {
        // r12 above r2 breaks the precondition; the optimum leaves (0, 1).
        let opt = optimal_lambda_dual(0.5, 0.1, 0.2).unwrap();
        assert!(opt.dominated);
        assert!(opt.lambda_star < 0.0);
    }

    #[test]
    fn multi_optimum_small_cases() {
        let one = RiskMatrix::from_entries(1, vec![0.3]).unwrap();
        let opt = optimal_lambda_multi(&one).unwrap();
        assert_eq!(opt.weights.as_slice(), &[1.0]);
        assert_abs_diff_eq!(opt.min_risk, 0.3, epsilon = 1e-15);

        // [[0.4,0.1],[0.1,0.4]]⁻¹ = [[0.4,-0.1],[-0.1,0.4]]/0.15, entry sum 4.
        let two = RiskMatrix::from_entries(2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let opt = optimal_lambda_multi(&two).unwrap();
        assert_abs_diff_eq!(opt.weights.as_slice()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(opt.min_risk, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn multi_optimum_reports_failing_pivot() {
        let singular = RiskMatrix::from_entries(2, vec![0.4, 0.4, 0.4, 0.4]).unwrap();
        match optimal_lambda_multi(&singular) {
            Err(Error::SingularMatrix { pivot_index, .. }) => assert_eq!(pivot_index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn multi_restricted_to_two_matches_dual() {
        let (r1, r2, r12) = (0.6, 0.3, 0.1);
        let m = RiskMatrix::from_entries(2, vec![r1, r12, r12, r2]).unwrap();
        let multi = optimal_lambda_multi(&m).unwrap();
        let dual = optimal_lambda_dual(r1, r2, r12).unwrap();
        assert_abs_diff_eq!(multi.min_risk, dual.min_risk, epsilon = 1e-12);
        assert_abs_diff_eq!(multi.weights.as_slice()[0], dual.lambda_star, epsilon = 1e-12);
    }

    #[test]
    fn multi_matches_simplex_grid_for_three() {
        let r = RiskMatrix::from_entries(3, vec![0.5, 0.1, 0.05, 0.1, 0.35, 0.08, 0.05, 0.08, 0.42]).unwrap();
        let opt = optimal_lambda_multi(&r).unwrap();
        let mut best = f64::INFINITY;
        let steps = 1000;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                let l = [
                    a as f64 / steps as f64,
                    b as f64 / steps as f64,
                    (steps - a - b) as f64 / steps as f64,
                ];
                let mut v = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        v += l[i] * r.get(i, j) * l[j];
                    }
                }
                best = best.min(v);
            }
        }
        assert_abs_diff_eq!(opt.min_risk, best, epsilon = 1e-3);
        assert!(opt.min_risk <= best + 1e-12);
    }

    #[test]
    fn symmetric_min_risk_examples() {
        assert_eq!(symmetric_min_risk(1, 0.4, 0.1).unwrap(), 0.4);
        assert_abs_diff_eq!(symmetric_min_risk(2, 0.4, 0.1).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(symmetric_min_risk(1000, 0.4, 0.1).unwrap(), 0.1003, epsilon = 1e-12);
        assert!(matches!(
            symmetric_min_risk(3, 0.2, 0.2),
            Err(Error::ConditionViolation(_))
        ));
        let m = RiskMatrix::equicorrelated(2, 0.4, 0.1).unwrap();
        assert_abs_diff_eq!(
            optimal_lambda_multi(&m).unwrap().min_risk,
            symmetric_min_risk(2, 0.4, 0.1).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn codistillation_examples() {
        let sym = codistillation_risk(0.4, 0.4).unwrap();
        assert_abs_diff_eq!(sym.lambda, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sym.risk, 0.2, epsilon = 1e-15);

        // Labels as an uncorrelated first "classifier": dual optimum with r12 = 0.
        let opt = codistillation_risk(0.5, 0.3).unwrap();
        let dual = optimal_lambda_dual(0.5, 0.3, 0.0).unwrap();
        assert_abs_diff_eq!(opt.lambda, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(opt.risk, 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(opt.lambda, dual.lambda_star, epsilon = 1e-12);
        assert_abs_diff_eq!(opt.risk, dual.min_risk, epsilon = 1e-12);

        assert!(codistillation_risk(0.5, 1e-12).unwrap().risk < 1e-11);
        assert!(codistillation_risk(0.0, 0.3).is_err());
        assert!(codistillation_risk(0.5, -0.1).is_err());
    }

    #[test]
    fn risk_matrix_rejects_asymmetry() {
        assert!(RiskMatrix::from_entries(2, vec![0.4, 0.1, 0.2, 0.4]).is_err());
        assert!(RiskMatrix::from_entries(2, vec![0.4, -0.1, -0.1, 0.4]).is_err());
        assert!(RiskMatrix::from_entries_allow_negative(2, vec![0.4, -0.1, -0.1, 0.4]).is_ok());
    }

    fn dist(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, c).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    fn sample_set(c: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>, usize)>> {
        prop::collection::vec((dist(c), dist(c), 0..c), 1..40)
    }

    proptest! {
        #[test]
        fn decomposition_identity(samples in sample_set(4), lambda in 0.0f64..=1.0) {
            let a: Vec<_> = samples.iter().map(|s| pv(&s.0)).collect();
            let b: Vec<_> = samples.iter().map(|s| pv(&s.1)).collect();
            let t: Vec<_> = samples.iter().map(|s| hot(4, s.2)).collect();
            let combined: Vec<_> = samples
                .iter()
                .map(|s| s.0.iter().zip(&s.1).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect::<Vec<_>>())
                .collect();
            let labels: Vec<usize> = samples.iter().map(|s| s.2).collect();
            let measured = brute_risk(&combined, &labels);
            let r1 = empirical_risk(&a, &t).unwrap();
            let r2 = empirical_risk(&b, &t).unwrap();
            let r12 = cross_risk(&a, &b, &t).unwrap();
            let predicted = lambda * lambda * r1 + 2.0 * lambda * (1.0 - lambda) * r12 + (1.0 - lambda).powi(2) * r2;
            prop_assert!((measured - predicted).abs() < 1e-10);
            prop_assert!(r12 >= 0.0);
            prop_assert_eq!(cross_risk(&a, &a, &t).unwrap(), empirical_risk(&a, &t).unwrap());
        }

        #[test]
        fn theorem_one(r1 in 0.01f64..2.0, r2 in 0.01f64..2.0, frac in 0.0f64..0.999) {
            let r12 = frac * r1.min(r2);
            let opt = optimal_lambda_dual(r1, r2, r12).unwrap();
            prop_assert!(opt.min_risk < r1.min(r2));
            prop_assert!(opt.lambda_star > 0.0 && opt.lambda_star < 1.0);
            prop_assert!(!opt.dominated);
        }

        #[test]
        fn symmetric_risk_decreases(n in 1usize..200, d in 0.01f64..2.0, frac in 0.0f64..0.99) {
            let o = frac * d;
            prop_assert!(symmetric_min_risk(n + 1, d, o).unwrap() < symmetric_min_risk(n, d, o).unwrap());
        }

        #[test]
        fn cooperation_risk_permutation_invariant(
            raw in prop::collection::vec(0.0f64..0.3, 10),
            diag in prop::collection::vec(0.5f64..1.0, 4),
            w in prop::collection::vec(0.01f64..1.0, 4),
            shift in 1usize..4,
        ) {
            let n = 4;
            let mut e = vec![0.0; n * n];
            let mut k = 0;
            for i in 0..n {
                e[i * n + i] = diag[i];
                for j in (i + 1)..n {
                    e[i * n + j] = raw[k];
                    e[j * n + i] = raw[k];
                    k += 1;
                }
            }
            let s: f64 = w.iter().sum();
            let l: Vec<f64> = w.iter().map(|x| x / s).collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let mut pe = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    pe[i * n + j] = e[perm[i] * n + perm[j]];
                }
            }
            let pl: Vec<f64> = perm.iter().map(|&i| l[i]).collect();
            let r = RiskMatrix::from_entries(n, e).unwrap();
            let pr = RiskMatrix::from_entries(n, pe).unwrap();
            let a = cooperation_risk(&CooperationWeights::new(l).unwrap(), &r).unwrap();
            let b = cooperation_risk(&CooperationWeights::new(pl).unwrap(), &pr).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn cooperation_risk_equals_combined_prediction_risk(
            samples in prop::collection::vec((dist(3), dist(3), dist(3), 0usize..3), 1..30),
            w in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let s: f64 = w.iter().sum();
            let l: Vec<f64> = w.iter().map(|x| x / s).collect();
            let preds: Vec<Vec<ProbVector>> = (0..3)
                .map(|i| samples.iter().map(|smp| pv(match i { 0 => &smp.0, 1 => &smp.1, _ => &smp.2 })).collect())
                .collect();
            let t: Vec<_> = samples.iter().map(|smp| hot(3, smp.3)).collect();
            let combined: Vec<Vec<f64>> = samples
                .iter()
                .map(|smp| (0..3).map(|k| l[0] * smp.0[k] + l[1] * smp.1[k] + l[2] * smp.2[k]).collect())
                .collect();
            let labels: Vec<usize> = samples.iter().map(|smp| smp.3).collect();
            let r = risk_matrix(&preds, &t).unwrap();
            let via_r = cooperation_risk(&CooperationWeights::new(l).unwrap(), &r).unwrap();
            prop_assert!((via_r - brute_risk(&combined, &labels)).abs() < 1e-10);
        }
    }
}
