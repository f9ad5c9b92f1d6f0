use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_score, ImageRef, ScoreError, ScoreRequest, Scorer};
use crate::label_tree::{LabelTree, NodeId};

/// Maps a timestep to the cumulative signal fraction `ᾱ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaBarSchedule {
    /// `ᾱ_t = 1 − (t − 1) / t_max`, from 1 at `t = 1` down to `1 / t_max`.
    Linear { t_max: u32 },
    Constant { value: f64 },
}

impl Default for AlphaBarSchedule {
    fn default() -> Self {
        AlphaBarSchedule::Linear { t_max: 1000 }
    }
}

impl AlphaBarSchedule {
    pub fn alpha_bar(&self, t: u32) -> f64 {
        match *self {
            AlphaBarSchedule::Linear { t_max } => {
                let t = t.clamp(1, t_max.max(1));
                1.0 - (t - 1) as f64 / t_max.max(1) as f64
            }
            AlphaBarSchedule::Constant { value } => value,
        }
    }

    fn validate(&self) -> Result<(), ScoreError> {
        match *self {
            AlphaBarSchedule::Linear { t_max } if t_max == 0 => {
                Err(ScoreError::Config("linear schedule needs t_max >= 1".into()))
            }
            AlphaBarSchedule::Constant { value } if !(value > 0.0 && value <= 1.0) => Err(
                ScoreError::Config(format!("constant alpha_bar {value} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub base_error: f64,
    pub distance_gain: f64,
    pub noise_sigma: f64,
    pub alpha_bar: AlphaBarSchedule,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            base_error: 0.1,
            distance_gain: 0.05,
            noise_sigma: 0.0,
            alpha_bar: AlphaBarSchedule::default(),
            seed: 0,
        }
    }
}

/// Deterministic stand-in for a diffusion model.
///
/// The noiseless error of a candidate grows linearly with its tree distance
/// to the image's true class; a synset scores like its closest descendant
/// leaf. Seeded Gaussian noise, scaled by `noise_sigma · √(1 − ᾱ_t)`, is
/// derived from a hash of the full request so results do not depend on
/// call order.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    params: SyntheticParams,
    tree: Arc<LabelTree>,
    by_label: HashMap<String, Vec<NodeId>>,
}

impl SyntheticScorer {
    pub fn new(tree: Arc<LabelTree>, params: SyntheticParams) -> Result<Self, ScoreError> {
        if !(params.base_error >= 0.0 && params.base_error.is_finite()) {
            return Err(ScoreError::Config("base_error must be finite and >= 0".into()));
        }
        if !(params.distance_gain > 0.0 && params.distance_gain.is_finite()) {
            return Err(ScoreError::Config("distance_gain must be finite and > 0".into()));
        }
        if !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite()) {
            return Err(ScoreError::Config("noise_sigma must be finite and >= 0".into()));
        }
        params.alpha_bar.validate()?;
        let mut by_label: HashMap<String, Vec<NodeId>> = HashMap::new();
        for n in tree.nodes() {
            by_label.entry(n.label.clone()).or_default().push(n.id);
        }
        Ok(SyntheticScorer {
            params,
            tree,
            by_label,
        })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    fn true_leaf(&self, image: &ImageRef) -> Result<NodeId, ScoreError> {
        let truth = image
            .true_class
            .as_deref()
            .ok_or_else(|| ScoreError::MissingTruth(image.image_id.clone()))?;
        self.tree
            .leaf_by_label(truth)
            .ok_or_else(|| ScoreError::UnknownClass(truth.to_string()))
    }

    /// Noiseless score of `node` for an image whose class is `truth`.
    pub fn mean_for(&self, truth: NodeId, node: NodeId) -> f64 {
        let tree = &*self.tree;
        let distance = if tree.is_ancestor_or_self(node, truth) {
            0
        } else {
            // Every leaf below `node` meets `truth` at the same common
            // ancestor, so the nearest one is the shallowest.
            let lca = tree.lowest_common_ancestor(truth, node);
            tree.node_depth(truth) + tree.min_leaf_depth(node) - 2 * tree.node_depth(lca)
        };
        self.params.base_error + self.params.distance_gain * distance as f64
    }

    pub fn synthetic_error_mean(&self, image: &ImageRef, node: NodeId) -> Result<f64, ScoreError> {
        let truth = self.true_leaf(image)?;
        if node.index() >= self.tree.len() {
            return Err(ScoreError::Config(format!("unknown node {node}")));
        }
        Ok(self.mean_for(truth, node))
    }

    /// Noiseless score for a label. Homonymous synsets take the best match;
    /// text naming no node scores as if one edge beyond the farthest leaf.
    pub fn label_mean(&self, image: &ImageRef, label: &str) -> Result<f64, ScoreError> {
        let truth = self.true_leaf(image)?;
        Ok(match self.by_label.get(label) {
            Some(nodes) => nodes
                .iter()
                .map(|n| self.mean_for(truth, *n))
                .fold(f64::INFINITY, f64::min),
            None => {
                let far = self.tree.node_depth(truth) + self.tree.depth() + 1;
                self.params.base_error + self.params.distance_gain * far as f64
            }
        })
    }
}

impl Scorer for SyntheticScorer {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        let mean = self.label_mean(request.image, &request.prompt.label)?;
        if self.params.noise_sigma == 0.0 {
            return check_score(mean);
        }
        let alpha_bar = self.params.alpha_bar.alpha_bar(request.sample.t);
        let scale = self.params.noise_sigma * (1.0 - alpha_bar).max(0.0).sqrt();
        let z = standard_normal(request_hash(self.params.seed, request));
        check_score((mean + scale * z).max(0.0))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn request_hash(seed: u64, request: &ScoreRequest<'_>) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, request.image.image_id.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, request.prompt.label.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &request.sample.t.to_le_bytes());
    h = fnv1a(h, &request.sample.noise_id.to_le_bytes());
    splitmix64(h)
}

/// Box–Muller on two uniforms drawn from the hash.
fn standard_normal(h: u64) -> f64 {
    let to_unit = |x: u64| ((x >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u1 = to_unit(splitmix64(h));
    let u2 = to_unit(splitmix64(h ^ 0x5851_f42d_4c95_7f2d));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
