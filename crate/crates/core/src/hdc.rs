//! Hierarchical classification by pruning the label tree level by level.
//!
//! Starting from a frontier below the vague top levels, each step scores the
//! pooled effective children of the selected nodes with a small sample
//! budget, keeps the most promising ones, and descends. Once the frontier is
//! all leaves, the survivors go through the flat classifier with the full
//! budget.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::estimator::NodeErrorAccumulator;
use crate::flat::{classify_leaves, score_nodes, Classification, ClassifyError};
use crate::label_tree::{LabelTree, NodeId};
use crate::metrics::RunMetrics;
use crate::scoring::{splitmix64, ImageRef, SampleSet, Scorer, DEFAULT_T_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PruneStrategy {
    /// Keep the `ceil(K_d · n)` lowest-error candidates (at least one).
    FixedTopk {
        #[serde(default, with = "depth_keys")]
        ratios: BTreeMap<usize, f64>,
        #[serde(default = "half")]
        default_ratio: f64,
    },
    /// Keep candidates within `sigma_multiplier` population standard
    /// deviations of the lowest error.
    DynamicSigma {
        #[serde(default = "two")]
        sigma_multiplier: f64,
    },
}

/// JSON object keys are strings; tagged enums do not coerce them to integers.
mod depth_keys {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, f64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<String, f64>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<usize>()
                    .map(|k| (k, v))
                    .map_err(|_| serde::de::Error::custom(format!("depth key {k:?} is not an integer")))
            })
            .collect()
    }
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

impl Default for PruneStrategy {
    fn default() -> Self {
        PruneStrategy::uniform(0.5)
    }
}

impl PruneStrategy {
    pub fn uniform(ratio: f64) -> Self {
        PruneStrategy::FixedTopk {
            ratios: BTreeMap::new(),
            default_ratio: ratio,
        }
    }

    pub fn dynamic(sigma_multiplier: f64) -> Self {
        PruneStrategy::DynamicSigma { sigma_multiplier }
    }

    pub fn ratio_at(&self, depth: usize) -> Option<f64> {
        match self {
            PruneStrategy::FixedTopk {
                ratios,
                default_ratio,
            } => Some(ratios.get(&depth).copied().unwrap_or(*default_ratio)),
            PruneStrategy::DynamicSigma { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let in_range = |r: f64| r > 0.0 && r <= 1.0;
        match self {
            PruneStrategy::FixedTopk {
                ratios,
                default_ratio,
            } => {
                if !in_range(*default_ratio) {
                    return Err(ClassifyError::Config(format!(
                        "default ratio {default_ratio} outside (0, 1]"
                    )));
                }
                if let Some((d, r)) = ratios.iter().find(|(_, r)| !in_range(**r)) {
                    return Err(ClassifyError::Config(format!(
                        "ratio {r} at depth {d} outside (0, 1]"
                    )));
                }
                Ok(())
            }
            PruneStrategy::DynamicSigma { sigma_multiplier } => {
                if *sigma_multiplier > 0.0 && sigma_multiplier.is_finite() {
                    Ok(())
                } else {
                    Err(ClassifyError::Config(format!(
                        "sigma multiplier {sigma_multiplier} must be positive"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdcConfig {
    /// Samples per node while pruning; defaults to `max(1, m_final / 4)`.
    #[serde(default)]
    pub m_prune: Option<usize>,
    pub m_final: usize,
    #[serde(default = "default_start_level")]
    pub start_level: usize,
    #[serde(default)]
    pub strategy: PruneStrategy,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default = "crate::flat::default_template")]
    pub prompt_template: String,
    #[serde(default = "crate::flat::default_t_max")]
    pub t_max: u32,
}

fn default_start_level() -> usize {
    1
}

impl Default for HdcConfig {
    fn default() -> Self {
        HdcConfig {
            m_prune: None,
            m_final: 16,
            start_level: 1,
            strategy: PruneStrategy::default(),
            sample_seed: 0,
            prompt_template: crate::flat::default_template(),
            t_max: DEFAULT_T_MAX,
        }
    }
}

impl HdcConfig {
    pub fn effective_m_prune(&self) -> usize {
        self.m_prune.unwrap_or((self.m_final / 4).max(1))
    }
}

/// Seed of the pruning sample set drawn at `depth`. Distinct from the final
/// stage, which uses `sample_seed` itself.
pub fn depth_sample_seed(sample_seed: u64, depth: usize) -> u64 {
    splitmix64(sample_seed ^ splitmix64(0x6864_632d_7072_756e ^ depth as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierState {
    pub depth: usize,
    pub selected: Vec<NodeId>,
    pub accumulators: BTreeMap<NodeId, NodeErrorAccumulator>,
}

impl FrontierState {
    pub fn new(depth: usize, selected: Vec<NodeId>) -> Self {
        FrontierState {
            depth,
            selected,
            accumulators: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub node: NodeId,
    pub mean_error: f64,
    pub samples: usize,
    /// Mean carried over from an earlier depth.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierEvaluation {
    pub candidates: Vec<CandidateScore>,
    pub calls: u64,
}

impl FrontierEvaluation {
    pub fn means(&self) -> Vec<(NodeId, f64)> {
        self.candidates.iter().map(|c| (c.node, c.mean_error)).collect()
    }
}

/// Scores the effective children of every selected node on this depth's
/// shared samples. Nodes already finalized keep their earlier mean and cost
/// nothing.
pub fn evaluate_frontier(
    tree: &LabelTree,
    image: &ImageRef,
    scorer: &dyn Scorer,
    frontier: &mut FrontierState,
    samples: &SampleSet,
    template: &str,
) -> Result<FrontierEvaluation, ClassifyError> {
    if frontier.selected.is_empty() {
        return Err(ClassifyError::Config("frontier is empty".into()));
    }
    let mut candidates = Vec::new();
    let mut calls = 0u64;
    for parent in &frontier.selected {
        for node in tree.effective_children(*parent)? {
            if let Some(acc) = frontier.accumulators.get(&node) {
                if acc.is_finalized() {
                    candidates.push(CandidateScore {
                        node,
                        mean_error: acc.mean()?,
                        samples: acc.len(),
                        reused: true,
                    });
                    continue;
                }
            }
            let errors =
                score_nodes(tree, image, scorer, &[node], samples.samples(), template)?
                    .pop()
                    .expect("one row per node");
            calls += errors.len() as u64;
            let acc = frontier
                .accumulators
                .entry(node)
                .or_insert_with(|| NodeErrorAccumulator::new(node));
            for e in errors {
                acc.push(e)?;
            }
            acc.finalize();
            candidates.push(CandidateScore {
                node,
                mean_error: acc.mean()?,
                samples: acc.len(),
                reused: false,
            });
        }
    }
    Ok(FrontierEvaluation { candidates, calls })
}

/// Population standard deviation.
fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Selects the next frontier. The result is ordered by ascending mean
/// error, ties by node id.
pub fn prune(
    candidates: &[(NodeId, f64)],
    strategy: &PruneStrategy,
    depth: usize,
) -> Result<Vec<NodeId>, ClassifyError> {
    if candidates.is_empty() {
        return Err(ClassifyError::Config("no candidates to prune".into()));
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let keep = match strategy {
        PruneStrategy::FixedTopk { .. } => {
            let ratio = strategy.ratio_at(depth).expect("fixed strategy has ratios");
            // The epsilon absorbs products like 0.3 · 10 = 3.0000000000000004.
            ((ratio * ranked.len() as f64 - 1e-9).ceil() as usize).clamp(1, ranked.len())
        }
        PruneStrategy::DynamicSigma { sigma_multiplier } => {
            let means: Vec<f64> = ranked.iter().map(|c| c.1).collect();
            let threshold = means[0] + sigma_multiplier * population_std(&means);
            means.iter().take_while(|m| **m <= threshold).count().max(1)
        }
    };
    Ok(ranked.into_iter().take(keep).map(|c| c.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub node: NodeId,
    pub label: String,
    pub mean_error: f64,
    pub samples: usize,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub depth: usize,
    pub candidates: Vec<TraceCandidate>,
    pub kept: Vec<NodeId>,
    pub calls: u64,
}

/// Per-image record of every pruning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub image_id: String,
    pub start_level: usize,
    pub initial_frontier: Vec<NodeId>,
    pub levels: Vec<DepthRecord>,
    pub surviving: Vec<String>,
}

impl PruneTrace {
    /// True if every depth kept only nodes it had as candidates.
    pub fn kept_within_candidates(&self) -> bool {
        self.levels.iter().all(|level| {
            level
                .kept
                .iter()
                .all(|k| level.candidates.iter().any(|c| c.node == *k))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdcClassification {
    pub classification: Classification,
    pub trace: PruneTrace,
}

pub fn classify_hdc(
    tree: &LabelTree,
    image: &ImageRef,
    scorer: &dyn Scorer,
    config: &HdcConfig,
) -> Result<HdcClassification, ClassifyError> {
    let started = Instant::now();
    config.strategy.validate()?;
    let m_prune = config.effective_m_prune();
    if m_prune > config.m_final {
        log::warn!(
            "m_prune ({m_prune}) exceeds m_final ({}); pruning costs more than it saves",
            config.m_final
        );
    }
    let initial = tree.descend_to_level(config.start_level)?;
    let mut frontier = FrontierState::new(config.start_level, initial.clone());
    let mut levels = Vec::new();
    let mut prune_calls = 0u64;

    for depth in config.start_level..=tree.depth() {
        frontier.depth = depth;
        let samples = SampleSet::build(depth_sample_seed(config.sample_seed, depth), m_prune, config.t_max)
            .map_err(ClassifyError::Setup)?;
        let evaluation =
            evaluate_frontier(tree, image, scorer, &mut frontier, &samples, &config.prompt_template)?;
        prune_calls += evaluation.calls;
        let kept = prune(&evaluation.means(), &config.strategy, depth)?;
        levels.push(DepthRecord {
            depth,
            candidates: evaluation
                .candidates
                .iter()
                .map(|c| TraceCandidate {
                    node: c.node,
                    label: tree.label(c.node).to_string(),
                    mean_error: c.mean_error,
                    samples: c.samples,
                    reused: c.reused,
                })
                .collect(),
            kept: kept.clone(),
            calls: evaluation.calls,
        });
        frontier.selected = kept;
    }

    let mut surviving = frontier.selected.clone();
    surviving.sort();
    debug_assert!(surviving.iter().all(|n| tree.nodes()[n.index()].is_leaf()));

    let final_samples = SampleSet::build(config.sample_seed, config.m_final, config.t_max)
        .map_err(ClassifyError::Setup)?;
    let (prediction, posterior, ranking) = classify_leaves(
        tree,
        image,
        scorer,
        &surviving,
        &final_samples,
        &config.prompt_template,
    )?;
    let mut metrics = RunMetrics::new(
        prune_calls,
        (surviving.len() * final_samples.len()) as u64,
        surviving.len() as u64,
    );
    metrics.wall_clock = Some(started.elapsed());

    Ok(HdcClassification {
        classification: Classification {
            prediction,
            posterior,
            ranking,
            metrics,
        },
        trace: PruneTrace {
            image_id: image.image_id.clone(),
            start_level: config.start_level,
            initial_frontier: initial,
            levels,
            surviving: surviving.iter().map(|n| tree.label(*n).to_string()).collect(),
        },
    })
}
