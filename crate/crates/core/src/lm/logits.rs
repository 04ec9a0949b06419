use crate::error::{DetoxError, Result};

/// Floor for log-probabilities of impossible tokens. Keeps logit arithmetic
/// finite; `exp(MIN_LOGIT)` is below any probability we care about.
pub const MIN_LOGIT: f64 = -700.0;

/// Unnormalized next-token scores over the vocabulary. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(DetoxError::config(format!("non-finite logit {bad}")));
        }
        Ok(LogitVector(values))
    }

    /// Natural-log logits of a probability vector.
    pub fn from_probs(probs: &[f64]) -> Self {
        LogitVector(probs.iter().map(|&p| super::ngram::safe_ln(p)).collect())
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn softmax(&self) -> Distribution {
        Distribution(softmax(&self.0))
    }
}

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Wraps a probability vector, checking it sums to 1 within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let d = Distribution(probs);
        d.check_normalized(1e-6)?;
        Ok(d)
    }

    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        Distribution(probs)
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let sum: f64 = self.0.iter().sum();
        if self.0.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > tol {
            return Err(DetoxError::Unnormalized(sum));
        }
        Ok(())
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Max-shifted softmax. `-inf` entries map to exactly 0.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    let mut out: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, -3.0, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_probs_round_trip() {
        let probs = [0.5, 0.25, 0.25, 0.0];
        let back = LogitVector::from_probs(&probs).softmax();
        for (a, b) in probs.iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![0.0, f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn entropy_of_uniform() {
        let d = Distribution::new(vec![0.25; 4]).unwrap();
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
    }
}
