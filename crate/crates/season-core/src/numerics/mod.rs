//! Scalar and vector math primitives shared by every other module.
//!
//! Everything here is pure f64: the invariant tolerances used by the
//! self-check suite (down to 1e-12) are not reachable in single precision.

pub mod rng;

pub use rng::SeededRng;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Natural-log upper bound of the Jensen-Shannon divergence.
pub const LN_2: f64 = std::f64::consts::LN_2;

/// A probability distribution: non-negative entries summing to 1.
///
/// Construction validates the invariants (tolerance 1e-9 on the sum);
/// the inner vector is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    const SUM_TOL: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "probability vector entry {i} is {v}; entries must be finite and >= 0"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::invalid(format!(
                "probability vector sums to {sum}, expected 1 within {}",
                Self::SUM_TOL
            )));
        }
        Ok(ProbVec(values))
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("uniform distribution needs n >= 1"));
        }
        Ok(ProbVec(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVec::new(v)
    }
}

impl From<ProbVec> for Vec<f64> {
    fn from(p: ProbVec) -> Vec<f64> {
        p.0
    }
}

/// Numerically stable softmax with a temperature knob (default callers pass 1.0).
///
/// Uses max-subtraction so arbitrarily large finite logits cannot overflow.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<ProbVec> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax input must be non-empty"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!(
            "softmax temperature must be a positive finite real, got {temperature}"
        )));
    }
    if let Some((i, &v)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "softmax input entry {i} is {v}; all entries must be finite"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&x| ((x - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    ProbVec::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Softmax over raw scores that may include -inf (masked positions).
///
/// Masked entries get probability exactly 0. At least one entry must be finite.
pub fn softmax_masked(logits: &[f64]) -> Result<ProbVec> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax input must be non-empty"));
    }
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::invalid("softmax input must not contain NaN or +inf"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::invalid("softmax input is fully masked"));
    }
    let exps: Vec<f64> = logits
        .iter()
        .map(|&x| {
            if x == f64::NEG_INFINITY {
                0.0
            } else {
                (x - max).exp()
            }
        })
        .collect();
    let sum: f64 = exps.iter().sum();
    ProbVec::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Kullback-Leibler divergence KL(p || q) in nats, with the 0*log(0/q) = 0 convention.
///
/// Returns +inf when p places mass where q has none.
pub fn kl(p: &ProbVec, q: &ProbVec) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "kl: length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.values().iter().zip(q.values()) {
        if pi > 0.0 {
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc)
}

/// Jensen-Shannon divergence in nats: 0.5*KL(p||m) + 0.5*KL(q||m), m = (p+q)/2.
///
/// Natural log keeps the upper bound at ln 2; the base cancels anyway in the
/// diagnostic ratio downstream. Symmetric in its arguments, bounded in
/// [0, ln 2]. The p > 0, m = 0 case cannot occur since m >= p/2; tiny negative
/// rounding residues are clamped to 0.
pub fn jsd(p: &ProbVec, q: &ProbVec) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "jsd: length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.values().iter().zip(q.values()) {
        let mi = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += 0.5 * pi * (pi / mi).ln();
        }
        if qi > 0.0 {
            acc += 0.5 * qi * (qi / mi).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// Index of the maximum entry; ties break to the lowest index.
pub fn argmax_stable(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::invalid("argmax input must be non-empty"));
    }
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "argmax input entry {i} is {v}; all entries must be finite"
        )));
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Mean of a slice, summed in value order so the result is bitwise
/// independent of the input ordering (frame-permutation invariance of the
/// layer means depends on this).
pub fn order_invariant_mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sum: f64 = sorted.iter().sum();
    sum / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_shift_and_ratio() {
        // [c, c + ln 2] -> [1/3, 2/3] for any finite c
        for c in [-50.0, 0.0, 3.25, 100.0] {
            let p = softmax(&[c, c + LN_2], 1.0).unwrap();
            assert_close(p.values()[0], 1.0 / 3.0, 1e-12);
            assert_close(p.values()[1], 2.0 / 3.0, 1e-12);
        }
    }

    #[test]
    fn softmax_extended_precision_oracle() {
        // Frozen from a 60-digit evaluation of exp(x_i)/sum(exp(x_j)).
        let p = softmax(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_close(p.values()[0], 0.09003057317038046, 1e-15);
        assert_close(p.values()[1], 0.24472847105479764, 1e-15);
        assert_close(p.values()[2], 0.6652409557748219, 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax(&[], 1.0).is_err());
        assert!(softmax(&[1.0, f64::NAN], 1.0).is_err());
        assert!(softmax(&[1.0, f64::INFINITY], 1.0).is_err());
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn softmax_huge_logits_do_not_overflow() {
        let p = softmax(&[700.0, 710.0], 1.0).unwrap();
        assert!(p.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_temperature_scales_sharpness() {
        let sharp = softmax(&[0.0, 1.0], 0.5).unwrap();
        let soft = softmax(&[0.0, 1.0], 2.0).unwrap();
        assert!(sharp.values()[1] > soft.values()[1]);
    }

    #[test]
    fn jsd_identity_is_zero() {
        let p = ProbVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn jsd_disjoint_supports_is_ln2() {
        let p = ProbVec::new(vec![1.0, 0.0]).unwrap();
        let q = ProbVec::new(vec![0.0, 1.0]).unwrap();
        assert_close(jsd(&p, &q).unwrap(), LN_2, 1e-15);
    }

    #[test]
    fn jsd_matches_naive_oracle_value() {
        // Frozen from a 60-digit term-wise evaluation with natural log.
        let p = ProbVec::new(vec![0.5, 0.5]).unwrap();
        let q = ProbVec::new(vec![0.25, 0.75]).unwrap();
        assert_close(jsd(&p, &q).unwrap(), 0.03382207556860523, 1e-15);
    }

    #[test]
    fn jsd_rejects_length_mismatch() {
        let p = ProbVec::new(vec![0.5, 0.5]).unwrap();
        let q = ProbVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(jsd(&p, &q).is_err());
    }

    #[test]
    fn kl_infinite_when_support_mismatch() {
        let p = ProbVec::new(vec![1.0, 0.0]).unwrap();
        let q = ProbVec::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(kl(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn argmax_basic_and_ties() {
        assert_eq!(argmax_stable(&[1.0, 3.0, 2.0]).unwrap(), 1);
        assert_eq!(argmax_stable(&[5.0, 5.0, 5.0]).unwrap(), 0);
        assert!(argmax_stable(&[]).is_err());
        assert!(argmax_stable(&[f64::NAN]).is_err());
    }

    #[test]
    fn argmax_agrees_with_linear_scan_oracle() {
        // Brute-force scan oracle over 1000 seeded random vectors.
        let mut rng = SeededRng::new(17);
        for _ in 0..1000 {
            let n = 1 + (rng.next_u64() % 32) as usize;
            let v: Vec<f64> = (0..n).map(|_| rng.next_f64() * 10.0 - 5.0).collect();
            let mut oracle = 0;
            let mut best = v[0];
            for (i, &x) in v.iter().enumerate() {
                if x > best {
                    best = x;
                    oracle = i;
                }
            }
            assert_eq!(argmax_stable(&v).unwrap(), oracle);
        }
    }

    #[test]
    fn probvec_rejects_invalid() {
        assert!(ProbVec::new(vec![]).is_err());
        assert!(ProbVec::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVec::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVec::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn order_invariant_mean_ignores_permutation() {
        let a = [0.1, 1e15, -0.3, 7.25, -1e15, 0.42];
        let mut b = a;
        b.reverse();
        assert_eq!(
            order_invariant_mean(&a).to_bits(),
            order_invariant_mean(&b).to_bits()
        );
    }

    #[test]
    fn softmax_masked_zeroes_masked_entries() {
        let p = softmax_masked(&[1.0, f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(p.values()[1], 0.0);
        assert!(softmax_masked(&[f64::NEG_INFINITY]).is_err());
    }
}
