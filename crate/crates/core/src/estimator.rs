//! Monte Carlo error estimates and the posteriors built from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_tree::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("no samples to average")]
    EmptyAccumulator,
    #[error("accumulator for {0} is finalized")]
    Finalized(NodeId),
    #[error("no labels to compare")]
    EmptyInput,
    #[error("non-finite error for label {0:?}")]
    NonFinite(String),
    #[error("label {label:?} has {got} samples, expected {expected}")]
    Ragged {
        label: String,
        got: usize,
        expected: usize,
    },
    #[error("anchor label {0:?} not present")]
    UnknownAnchor(String),
}

/// Per-node sample errors collected during traversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeErrorAccumulator {
    node: NodeId,
    sample_errors: Vec<f64>,
    finalized: bool,
}

impl NodeErrorAccumulator {
    pub fn new(node: NodeId) -> Self {
        NodeErrorAccumulator {
            node,
            sample_errors: Vec::new(),
            finalized: false,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn push(&mut self, error: f64) -> Result<(), EstimateError> {
        if self.finalized {
            return Err(EstimateError::Finalized(self.node));
        }
        self.sample_errors.push(error);
        Ok(())
    }

    pub fn finalize(&mut self) {
        self.finalized = true;
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn sample_errors(&self) -> &[f64] {
        &self.sample_errors
    }

    pub fn len(&self) -> usize {
        self.sample_errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_errors.is_empty()
    }

    pub fn mean(&self) -> Result<f64, EstimateError> {
        mc_mean(&self.sample_errors)
    }
}

pub fn mc_mean(errors: &[f64]) -> Result<f64, EstimateError> {
    if errors.is_empty() {
        return Err(EstimateError::EmptyAccumulator);
    }
    // running mean: exact for constant lists
    let mut mean = 0.0;
    for (i, e) in errors.iter().enumerate() {
        mean += (e - mean) / (i + 1) as f64;
    }
    Ok(mean)
}

/// Class probabilities keyed by label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Posterior {
    pub entries: BTreeMap<String, f64>,
}

impl Posterior {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.get(label).copied()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most probable label; ties go to the lexicographically smallest.
    pub fn argmax(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (label, p) in &self.entries {
            if best.map_or(true, |(_, b)| *p > b) {
                best = Some((label, *p));
            }
        }
        best.map(|(l, _)| l)
    }
}

fn check_finite(mean_errors: &BTreeMap<String, f64>) -> Result<(), EstimateError> {
    if mean_errors.is_empty() {
        return Err(EstimateError::EmptyInput);
    }
    match mean_errors.iter().find(|(_, v)| !v.is_finite()) {
        Some((label, _)) => Err(EstimateError::NonFinite(label.clone())),
        None => Ok(()),
    }
}

/// `p(c) ∝ exp(−mean error)`, shifted by the minimum error before exponentiating.
pub fn softmax_posterior(mean_errors: &BTreeMap<String, f64>) -> Result<Posterior, EstimateError> {
    check_finite(mean_errors)?;
    let min = mean_errors.values().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = mean_errors.values().map(|e| (min - e).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(Posterior {
        entries: mean_errors
            .keys()
            .zip(weights)
            .map(|(label, w)| (label.clone(), w / total))
            .collect(),
    })
}

/// Posterior from per-sample error differences on a shared sample set:
/// `p(c_i) = 1 / Σ_j exp(mean_k[d_ik − d_jk])`.
///
/// Differences are taken sample by sample against `anchor`; since
/// `d_ik − d_jk = (d_ik − d_ak) − (d_jk − d_ak)`, the pairwise sum factors
/// through the anchored means and costs O(labels · samples).
pub fn paired_posterior(
    sample_errors: &BTreeMap<String, Vec<f64>>,
    anchor: &str,
) -> Result<Posterior, EstimateError> {
    if sample_errors.is_empty() {
        return Err(EstimateError::EmptyInput);
    }
    let anchor_errors = sample_errors
        .get(anchor)
        .ok_or_else(|| EstimateError::UnknownAnchor(anchor.to_string()))?;
    let m = anchor_errors.len();
    if m == 0 {
        return Err(EstimateError::EmptyAccumulator);
    }
    let mut deltas = Vec::with_capacity(sample_errors.len());
    for (label, errors) in sample_errors {
        if errors.len() != m {
            return Err(EstimateError::Ragged {
                label: label.clone(),
                got: errors.len(),
                expected: m,
            });
        }
        let delta = errors
            .iter()
            .zip(anchor_errors)
            .map(|(d, a)| d - a)
            .sum::<f64>()
            / m as f64;
        if !delta.is_finite() {
            return Err(EstimateError::NonFinite(label.clone()));
        }
        deltas.push(delta);
    }
    // Σ_j exp(Δ_i − Δ_j) = exp(Δ_i − Δ_min) · Σ_j exp(Δ_min − Δ_j)
    let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let tail: f64 = deltas.iter().map(|d| (min - d).exp()).sum();
    Ok(Posterior {
        entries: sample_errors
            .keys()
            .zip(&deltas)
            .map(|(label, d)| (label.clone(), 1.0 / ((d - min).exp() * tail)))
            .collect(),
    })
}

/// Label with the smallest mean error; ties go to the lexicographically smallest label.
pub fn argmin_label(mean_errors: &BTreeMap<String, f64>) -> Result<String, EstimateError> {
    check_finite(mean_errors)?;
    let mut best: Option<(&String, f64)> = None;
    for (label, e) in mean_errors {
        if best.map_or(true, |(_, b)| *e < b) {
            best = Some((label, *e));
        }
    }
    Ok(best.expect("non-empty").0.clone())
}

/// Labels sorted by ascending mean error, ties by label.
pub fn rank_labels(mean_errors: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> =
        mean_errors.iter().map(|(l, e)| (l.clone(), *e)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(l, v)| (l.to_string(), *v)).collect()
    }

    #[test]
    fn means() {
        assert!((mc_mean(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(mc_mean(&[0.7; 3]).unwrap(), 0.7);
        assert_eq!(mc_mean(&[]), Err(EstimateError::EmptyAccumulator));
    }

    #[test]
    fn accumulator_lifecycle() {
        let mut acc = NodeErrorAccumulator::new(NodeId(3));
        assert!(acc.mean().is_err());
        acc.push(1.0).unwrap();
        acc.push(2.0).unwrap();
        acc.finalize();
        assert_eq!(acc.push(3.0), Err(EstimateError::Finalized(NodeId(3))));
        assert_eq!(acc.mean().unwrap(), 1.5);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_posterior(&map(&[("a", 0.4), ("b", 0.4)])).unwrap();
        assert_eq!(p.get("a"), Some(0.5));
        let p = softmax_posterior(&map(&[("a", 0.0), ("b", 3f64.ln())])).unwrap();
        assert!((p.get("a").unwrap() - 0.75).abs() < 1e-12);
        assert!((p.get("b").unwrap() - 0.25).abs() < 1e-12);
        let p = softmax_posterior(&map(&[("a", 1000.0), ("b", 1001.0)])).unwrap();
        assert!(p.get("a").unwrap().is_finite() && p.get("b").unwrap() > 0.0);
        assert!(p.get("a").unwrap() > p.get("b").unwrap());
        assert_eq!(softmax_posterior(&BTreeMap::new()), Err(EstimateError::EmptyInput));
        assert!(matches!(
            softmax_posterior(&map(&[("a", f64::NAN)])),
            Err(EstimateError::NonFinite(_))
        ));
    }

    #[test]
    fn paired_examples() {
        let lists: BTreeMap<String, Vec<f64>> = [
            ("a".to_string(), vec![0.1, 0.3]),
            ("b".to_string(), vec![0.5, 0.7]),
        ]
        .into();
        let p = paired_posterior(&lists, "a").unwrap();
        // 1 / (1 + e^{-0.4})
        assert!((p.get("a").unwrap() - 0.598_687_660_112_452).abs() < 1e-12);

        let same: BTreeMap<String, Vec<f64>> =
            [("a".to_string(), vec![0.2, 0.9]), ("b".to_string(), vec![0.2, 0.9])].into();
        assert_eq!(paired_posterior(&same, "b").unwrap().get("a"), Some(0.5));

        let ragged: BTreeMap<String, Vec<f64>> =
            [("a".to_string(), vec![0.2]), ("b".to_string(), vec![0.2, 0.9])].into();
        assert!(matches!(paired_posterior(&ragged, "a"), Err(EstimateError::Ragged { .. })));
        assert!(matches!(paired_posterior(&same, "zz"), Err(EstimateError::UnknownAnchor(_))));
    }

    #[test]
    fn argmin_examples() {
        assert_eq!(argmin_label(&map(&[("a", 0.2), ("b", 0.1)])).unwrap(), "b");
        assert_eq!(argmin_label(&map(&[("b", 0.1), ("a", 0.1)])).unwrap(), "a");
        assert_eq!(argmin_label(&BTreeMap::new()), Err(EstimateError::EmptyInput));
        let ranked = rank_labels(&map(&[("c", 0.1), ("b", 0.3), ("a", 0.1)]));
        let order: Vec<_> = ranked.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(order, vec!["a", "c", "b"]);
    }

    fn error_map() -> impl Strategy<Value = BTreeMap<String, f64>> {
        prop::collection::btree_map("[a-z]{1,4}", 0.0f64..50.0, 1..12)
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(m in error_map(), shift in -100.0f64..100.0) {
            let p = softmax_posterior(&m).unwrap();
            prop_assert!((p.total() - 1.0).abs() < 1e-9);
            prop_assert!(p.entries.values().all(|v| (0.0..=1.0).contains(v)));
            let shifted: BTreeMap<String, f64> = m.iter().map(|(k, v)| (k.clone(), v + shift)).collect();
            let q = softmax_posterior(&shifted).unwrap();
            for (k, v) in &p.entries {
                prop_assert!((v - q.entries[k]).abs() < 1e-9);
            }
            prop_assert_eq!(argmin_label(&m).unwrap(), argmin_label(&shifted).unwrap());
        }

        #[test]
        fn argmin_matches_posterior_mode(m in error_map()) {
            let min = m.values().copied().fold(f64::INFINITY, f64::min);
            prop_assume!(m.values().filter(|v| **v == min).count() == 1);
            let p = softmax_posterior(&m).unwrap();
            prop_assert_eq!(p.argmax().unwrap(), argmin_label(&m).unwrap());
        }

        #[test]
        fn mean_is_permutation_invariant(mut xs in prop::collection::vec(0.0f64..10.0, 1..40), seed in any::<u64>()) {
            let before = mc_mean(&xs).unwrap();
            let n = xs.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert!((before - mc_mean(&xs).unwrap()).abs() < 1e-12);
        }
    }
}
