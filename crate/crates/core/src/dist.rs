use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::vocab::PredicateId;

/// Allowed deviation of a distribution's total mass from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Dense probability vector over predicate categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validating constructor: entries in `[0, 1]`, sum within [`SUM_TOLERANCE`] of 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "probability {p} at index {i} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
        }
        Ok(Distribution(probs))
    }

    /// Wraps values produced by a computation known to yield a distribution
    /// (softmax, convex combinations of distributions).
    pub(crate) fn from_computed(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Distribution(probs)
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Distribution(v)
    }

    pub fn uniform(len: usize) -> Self {
        Distribution(vec![1.0 / len as f64; len])
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

    /// Most probable category, lowest index on ties.
    pub fn argmax(&self) -> PredicateId {
        math::argmax(&self.0).unwrap_or(0)
    }
}

/// Sparse category → score map whose scores sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel(BTreeMap<PredicateId, f64>);

impl SoftLabel {
    pub fn new(entries: BTreeMap<PredicateId, f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("soft label"));
        }
        for (&k, &s) in &entries {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidInput(format!(
                    "soft score {s} for category {k} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("soft label sums to {sum}")));
        }
        Ok(SoftLabel(entries))
    }

    pub fn hard(category: PredicateId) -> Self {
        let mut m = BTreeMap::new();
        m.insert(category, 1.0);
        SoftLabel(m)
    }

    /// Two-entry label built from complementary scores.
    pub(crate) fn pair(a: PredicateId, score_a: f64, b: PredicateId, score_b: f64) -> Self {
        debug_assert!(a != b);
        let mut m = BTreeMap::new();
        m.insert(a, score_a);
        m.insert(b, score_b);
        SoftLabel(m)
    }

    pub fn entries(&self) -> &BTreeMap<PredicateId, f64> {
        &self.0
    }

    pub fn score(&self, category: PredicateId) -> f64 {
        self.0.get(&category).copied().unwrap_or(0.0)
    }

    pub fn non_zero(&self) -> usize {
        self.0.values().filter(|&&s| s > 0.0).count()
    }

    /// Highest-scoring category, lowest id on ties.
    pub fn argmax(&self) -> PredicateId {
        let mut best = (0, f64::NEG_INFINITY);
        for (&k, &s) in &self.0 {
            if s > best.1 {
                best = (k, s);
            }
        }
        best.0
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for (&k, &s) in &self.0 {
            if k < len {
                v[k] = s;
            }
        }
        v
    }
}
