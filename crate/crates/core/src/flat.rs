//! Baseline diffusion classifier: every class, full sample budget.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{argmin_label, mc_mean, paired_posterior, rank_labels, EstimateError, Posterior};
use crate::label_tree::{LabelTree, NodeId, TreeError};
use crate::metrics::RunMetrics;
use crate::scoring::{
    render_prompt, ImageRef, SamplePoint, SampleSet, ScoreError, ScoreRequest, Scorer,
    DEFAULT_TEMPLATE, DEFAULT_T_MAX,
};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("scoring image {image_id:?} with label {label:?} at t={t}, noise={noise_id}: {source}")]
    Score {
        image_id: String,
        label: String,
        t: u32,
        noise_id: u64,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Setup(ScoreError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatConfig {
    pub m_final: usize,
    pub sample_seed: u64,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_t_max")]
    pub t_max: u32,
}

pub(crate) fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

pub(crate) fn default_t_max() -> u32 {
    DEFAULT_T_MAX
}

impl Default for FlatConfig {
    fn default() -> Self {
        FlatConfig {
            m_final: 16,
            sample_seed: 0,
            prompt_template: default_template(),
            t_max: DEFAULT_T_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub prediction: String,
    pub posterior: Posterior,
    /// Scored classes by ascending mean error, ties by label.
    pub ranking: Vec<(String, f64)>,
    pub metrics: RunMetrics,
}

impl Classification {
    pub fn ranked_labels(&self) -> Vec<String> {
        self.ranking.iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Scores each node's label on every sample, in the given node order.
pub(crate) fn score_nodes(
    tree: &LabelTree,
    image: &ImageRef,
    scorer: &dyn Scorer,
    nodes: &[NodeId],
    samples: &[SamplePoint],
    template: &str,
) -> Result<Vec<Vec<f64>>, ClassifyError> {
    nodes
        .iter()
        .map(|n| {
            let label = tree.label(*n);
            let prompt = render_prompt(template, label).map_err(ClassifyError::Setup)?;
            samples
                .iter()
                .map(|sample| {
                    scorer
                        .score(&ScoreRequest {
                            image,
                            prompt: &prompt,
                            sample: *sample,
                        })
                        .map_err(|source| ClassifyError::Score {
                            image_id: image.image_id.clone(),
                            label: label.to_string(),
                            t: sample.t,
                            noise_id: sample.noise_id,
                            source,
                        })
                })
                .collect()
        })
        .collect()
}

/// Final-stage argmin over a set of leaves on one shared sample set.
pub(crate) fn classify_leaves(
    tree: &LabelTree,
    image: &ImageRef,
    scorer: &dyn Scorer,
    leaves: &[NodeId],
    samples: &SampleSet,
    template: &str,
) -> Result<(String, Posterior, Vec<(String, f64)>), ClassifyError> {
    let scores = score_nodes(tree, image, scorer, leaves, samples.samples(), template)?;
    let mut lists: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut means: BTreeMap<String, f64> = BTreeMap::new();
    for (leaf, errors) in leaves.iter().zip(scores) {
        let label = tree.label(*leaf).to_string();
        means.insert(label.clone(), mc_mean(&errors)?);
        lists.insert(label, errors);
    }
    let prediction = argmin_label(&means)?;
    let posterior = paired_posterior(&lists, &prediction)?;
    Ok((prediction, posterior, rank_labels(&means)))
}

pub fn classify_flat(
    tree: &LabelTree,
    image: &ImageRef,
    scorer: &dyn Scorer,
    config: &FlatConfig,
) -> Result<Classification, ClassifyError> {
    let started = Instant::now();
    let samples = SampleSet::build(config.sample_seed, config.m_final, config.t_max)
        .map_err(ClassifyError::Setup)?;
    let leaves: Vec<NodeId> = tree.leaves().collect();
    let (prediction, posterior, ranking) =
        classify_leaves(tree, image, scorer, &leaves, &samples, &config.prompt_template)?;
    let mut metrics = RunMetrics::new(
        0,
        (leaves.len() * samples.len()) as u64,
        leaves.len() as u64,
    );
    metrics.wall_clock = Some(started.elapsed());
    Ok(Classification {
        prediction,
        posterior,
        ranking,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_tree::Draft;
    use crate::scoring::{CountingScorer, SyntheticParams, SyntheticScorer};
    use std::sync::Arc;

    fn eight_leaves() -> Arc<LabelTree> {
        let group = |name: &str, leaves: [&str; 4]| {
            Draft::node(name, leaves.iter().map(|l| Draft::leaf(*l)).collect())
        };
        Arc::new(
            LabelTree::from_draft(Draft::node(
                "entity",
                vec![
                    group("animal", ["cat", "dog", "snail", "zebra"]),
                    group("tool", ["hammer", "saw", "drill", "wrench"]),
                ],
            ))
            .unwrap(),
        )
    }

    #[test]
    fn counts_leaves_times_samples() {
        let tree = eight_leaves();
        let synth = SyntheticScorer::new(tree.clone(), SyntheticParams::default()).unwrap();
        let counting = CountingScorer::new(synth);
        let config = FlatConfig {
            m_final: 2,
            ..FlatConfig::default()
        };
        let img = ImageRef::new("i0", Some("saw".into()));
        let out = classify_flat(&tree, &img, &counting, &config).unwrap();
        assert_eq!(out.metrics.eps_calls_total, 16);
        assert_eq!(out.metrics.eps_calls_prune, 0);
        assert_eq!(counting.calls(), 16);
        assert_eq!(out.prediction, "saw");
        assert_eq!(out.ranking.len(), 8);
        assert!((out.posterior.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_predicts_truth_and_is_deterministic() {
        let tree = eight_leaves();
        let synth = SyntheticScorer::new(tree.clone(), SyntheticParams::default()).unwrap();
        let config = FlatConfig::default();
        for (i, label) in tree.leaf_labels().iter().enumerate() {
            let img = ImageRef::new(format!("i{i}"), Some(label.clone()));
            let a = classify_flat(&tree, &img, &synth, &config).unwrap();
            let b = classify_flat(&tree, &img, &synth, &config).unwrap();
            assert_eq!(&a.prediction, label);
            assert_eq!(a.ranking, b.ranking);
        }
    }

    #[test]
    fn scorer_failure_carries_context() {
        let tree = eight_leaves();
        let synth = SyntheticScorer::new(tree.clone(), SyntheticParams::default()).unwrap();
        let img = ImageRef::new("lost", None);
        let err = classify_flat(&tree, &img, &synth, &FlatConfig::default()).unwrap_err();
        match err {
            ClassifyError::Score { image_id, label, .. } => {
                assert_eq!(image_id, "lost");
                assert_eq!(label, "cat");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
