//! Hierarchical pruning of label trees for diffusion-model classifiers.
//!
//! A diffusion classifier scores every candidate class by how well the model
//! predicts the noise added to an image when conditioned on that class. This
//! crate organizes the candidates in a label tree, scores synsets with a
//! small sample budget, prunes unpromising subtrees, and runs the full
//! classifier only on the surviving leaves. The model sits behind the
//! [`scoring::Scorer`] trait.

pub mod estimator;
pub mod flat;
pub mod harness;
pub mod hdc;
pub mod label_tree;
pub mod metrics;
pub mod scoring;

pub use estimator::{argmin_label, mc_mean, paired_posterior, softmax_posterior, Posterior};
pub use flat::{classify_flat, Classification, ClassifyError, FlatConfig};
pub use hdc::{classify_hdc, prune, HdcClassification, HdcConfig, PruneStrategy, PruneTrace};
pub use label_tree::{Draft, InsertMode, LabelTree, NodeId, TreeError, TreeFormat};
pub use metrics::{speedup, EvalReport, RunMetrics};
pub use scoring::{
    render_prompt, ImageRef, ReplayScorer, SamplePoint, SampleSet, ScoreError, ScoreRequest,
    Scorer, SyntheticParams, SyntheticScorer,
};
