//! Cost accounting and accuracy reporting.
//!
//! Cost is counted in ε-prediction calls, one per scorer invocation.
//! Wall-clock time is kept alongside but never compared.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_tree::{LabelTree, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("baseline cost must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("no results to evaluate")]
    EmptyResults,
    #[error("{0} is a leaf; confusion needs a synset")]
    LeafSynset(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub eps_calls_prune: u64,
    pub eps_calls_final: u64,
    pub eps_calls_total: u64,
    pub surviving_leaves: u64,
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

impl RunMetrics {
    pub fn new(eps_calls_prune: u64, eps_calls_final: u64, surviving_leaves: u64) -> Self {
        RunMetrics {
            eps_calls_prune,
            eps_calls_final,
            eps_calls_total: eps_calls_prune + eps_calls_final,
            surviving_leaves,
            wall_clock: None,
        }
    }
}

/// Percentage saved relative to the baseline: `100 · (1 − method / baseline)`.
pub fn speedup(baseline_cost: f64, method_cost: f64) -> Result<f64, MetricsError> {
    if !(baseline_cost > 0.0) {
        return Err(MetricsError::NonPositiveBaseline(baseline_cost));
    }
    Ok(100.0 * (1.0 - method_cost / baseline_cost))
}

/// True if `truth` is among the first `k` labels of `ranking`.
pub fn top_k_hit<S: AsRef<str>>(ranking: &[S], truth: &str, k: usize) -> bool {
    ranking.iter().take(k).any(|l| l.as_ref() == truth)
}

/// Mean of per-class accuracies over classes that have at least one image.
pub fn classwise_top1<S: AsRef<str>>(results: &[(S, S)]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let mut per_class: HashMap<&str, (u64, u64)> = HashMap::new();
    for (truth, pred) in results {
        let slot = per_class.entry(truth.as_ref()).or_default();
        slot.0 += 1;
        if truth.as_ref() == pred.as_ref() {
            slot.1 += 1;
        }
    }
    let sum: f64 = per_class
        .values()
        .map(|(n, ok)| *ok as f64 / *n as f64)
        .sum();
    Ok(100.0 * sum / per_class.len() as f64)
}

pub fn overall_top1<S: AsRef<str>>(results: &[(S, S)]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let ok = results
        .iter()
        .filter(|(t, p)| t.as_ref() == p.as_ref())
        .count();
    Ok(100.0 * ok as f64 / results.len() as f64)
}

pub const OTHER_COLUMN: &str = "other";

/// Confusion counts for the classes under one synset, with predictions
/// outside the synset pooled into a trailing "other" column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtreeConfusion {
    pub synset: String,
    pub rows: Vec<String>,
    /// `rows` followed by [`OTHER_COLUMN`].
    pub columns: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl SubtreeConfusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (row, counts) in self.rows.iter().zip(&self.counts) {
            out.push_str(&csv_field(row));
            for c in counts {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn confusion_subtree<S: AsRef<str>>(
    results: &[(S, S)],
    tree: &LabelTree,
    synset: NodeId,
) -> Result<SubtreeConfusion, MetricsError> {
    let node = tree.node(synset).map_err(|_| MetricsError::UnknownNode(synset))?;
    if node.is_leaf() {
        return Err(MetricsError::LeafSynset(node.label.clone()));
    }
    let rows: Vec<String> = tree
        .descendant_leaves(synset)
        .into_iter()
        .map(|l| tree.label(l).to_string())
        .collect();
    let index: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let other = rows.len();
    let mut counts = vec![vec![0u64; rows.len() + 1]; rows.len()];
    for (truth, pred) in results {
        if let Some(&r) = index.get(truth.as_ref()) {
            let c = index.get(pred.as_ref()).copied().unwrap_or(other);
            counts[r][c] += 1;
        }
    }
    let mut columns = rows.clone();
    columns.push(OTHER_COLUMN.to_string());
    Ok(SubtreeConfusion {
        synset: node.label.clone(),
        rows,
        columns,
        counts,
    })
}

/// One classified image as stored in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    pub prediction: String,
    /// Best-ranked labels, at most five.
    pub top: Vec<String>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub images: u64,
    pub correct: u64,
    pub eps_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub truth: String,
    pub predicted: String,
    pub count: u64,
}

pub const TOP_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset_hash: String,
    pub image_count: u64,
    pub leaf_count: u64,
    /// k → top-k accuracy in percent, over images with a known class.
    pub top_k_overall: BTreeMap<usize, f64>,
    pub top1_classwise: Option<f64>,
    pub mean_calls_per_image: f64,
    /// Calls a flat classifier would spend per image: `leaf_count · m_final`.
    pub baseline_calls_per_image: f64,
    pub speedup_vs_baseline: f64,
    pub mean_surviving_leaves: f64,
    pub per_class: BTreeMap<String, ClassStats>,
    pub confusion: Vec<ConfusionEntry>,
    pub images: Vec<ImageRecord>,
}

impl EvalReport {
    pub fn build(
        method: &str,
        dataset_hash: &str,
        leaf_count: usize,
        m_final: usize,
        images: Vec<ImageRecord>,
    ) -> Result<Self, MetricsError> {
        if images.is_empty() {
            return Err(MetricsError::EmptyResults);
        }
        let n = images.len() as f64;
        let labelled: Vec<(&str, &ImageRecord)> = images
            .iter()
            .filter_map(|r| r.truth.as_deref().map(|t| (t, r)))
            .collect();

        let mut top_k_overall = BTreeMap::new();
        let mut top1_classwise = None;
        if !labelled.is_empty() {
            for k in TOP_KS {
                let hits = labelled
                    .iter()
                    .filter(|(t, r)| top_k_hit(&r.top, t, k))
                    .count();
                top_k_overall.insert(k, 100.0 * hits as f64 / labelled.len() as f64);
            }
            let pairs: Vec<(&str, &str)> = labelled
                .iter()
                .map(|(t, r)| (*t, r.prediction.as_str()))
                .collect();
            top1_classwise = Some(classwise_top1(&pairs)?);
        }

        let mut per_class: BTreeMap<String, ClassStats> = BTreeMap::new();
        let mut confusion: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (truth, r) in &labelled {
            let stats = per_class.entry(truth.to_string()).or_insert(ClassStats {
                images: 0,
                correct: 0,
                eps_calls: 0,
            });
            stats.images += 1;
            stats.correct += u64::from(*truth == r.prediction);
            stats.eps_calls += r.metrics.eps_calls_total;
            *confusion
                .entry((truth.to_string(), r.prediction.clone()))
                .or_insert(0) += 1;
        }

        let total_calls: u64 = images.iter().map(|r| r.metrics.eps_calls_total).sum();
        let mean_calls = total_calls as f64 / n;
        let baseline = (leaf_count * m_final) as f64;
        Ok(EvalReport {
            method: method.to_string(),
            dataset_hash: dataset_hash.to_string(),
            image_count: images.len() as u64,
            leaf_count: leaf_count as u64,
            top_k_overall,
            top1_classwise,
            mean_calls_per_image: mean_calls,
            baseline_calls_per_image: baseline,
            speedup_vs_baseline: speedup(baseline, mean_calls)?,
            mean_surviving_leaves: images
                .iter()
                .map(|r| r.metrics.surviving_leaves as f64)
                .sum::<f64>()
                / n,
            per_class,
            confusion: confusion
                .into_iter()
                .map(|((truth, predicted), count)| ConfusionEntry {
                    truth,
                    predicted,
                    count,
                })
                .collect(),
            images,
        })
    }

    pub fn top1(&self) -> Option<f64> {
        self.top_k_overall.get(&1).copied()
    }

    /// `(truth, prediction)` pairs for labelled images.
    pub fn labelled_pairs(&self) -> Vec<(String, String)> {
        self.images
            .iter()
            .filter_map(|r| r.truth.clone().map(|t| (t, r.prediction.clone())))
            .collect()
    }

    /// One-row summary, header included.
    pub fn summary_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "method,images,top1,top3,top5,top1_classwise,mean_calls_per_image,baseline_calls_per_image,speedup_vs_baseline,mean_surviving_leaves\n\
             {},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
            csv_field(&self.method),
            self.image_count,
            fmt(self.top_k_overall.get(&1).copied()),
            fmt(self.top_k_overall.get(&3).copied()),
            fmt(self.top_k_overall.get(&5).copied()),
            fmt(self.top1_classwise),
            self.mean_calls_per_image,
            self.baseline_calls_per_image,
            self.speedup_vs_baseline,
            self.mean_surviving_leaves,
        )
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth,predicted,count\n");
        for e in &self.confusion {
            let _ = writeln!(out, "{},{},{}", csv_field(&e.truth), csv_field(&e.predicted), e.count);
        }
        out
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,images,correct,eps_calls\n");
        for (label, s) in &self.per_class {
            let _ = writeln!(out, "{},{},{},{}", csv_field(label), s.images, s.correct, s.eps_calls);
        }
        out
    }
}
