use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::{DatasetSpec, ExperimentConfig, Method, ScorerSpec};
use super::dataset::{gen_synthetic, Dataset};
use super::{write_file, HarnessError};
use crate::flat::{classify_flat, FlatConfig};
use crate::hdc::{classify_hdc, HdcConfig, PruneTrace};
use crate::label_tree::LabelTree;
use crate::metrics::{EvalReport, ImageRecord, RunMetrics};
use crate::scoring::{
    write_rows_json, Endpoint, ImageRef, RecordingScorer, RemoteScorer, ReplayScorer, Scorer,
    SyntheticScorer, ENDPOINT_ENV,
};

#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Flat(FlatConfig),
    Hdc(HdcConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Flat(_) => "flat",
            MethodConfig::Hdc(_) => "hdc",
        }
    }

    pub fn m_final(&self) -> usize {
        match self {
            MethodConfig::Flat(c) => c.m_final,
            MethodConfig::Hdc(c) => c.m_final,
        }
    }
}

pub struct RunOutput {
    pub report: EvalReport,
    /// One per image for hdc runs, empty for flat runs.
    pub traces: Vec<PruneTrace>,
    pub elapsed: Duration,
}

pub fn build_scorer(spec: &ScorerSpec, tree: Arc<LabelTree>) -> Result<Box<dyn Scorer>, HarnessError> {
    Ok(match spec {
        ScorerSpec::Synthetic { params } => Box::new(SyntheticScorer::new(tree, params.clone())?),
        ScorerSpec::Replay { matrix_path } => Box::new(ReplayScorer::load(matrix_path)?),
        ScorerSpec::Remote { endpoint } => {
            let text = match std::env::var(ENDPOINT_ENV) {
                Ok(v) if !v.trim().is_empty() => v,
                _ => endpoint.clone().ok_or_else(|| {
                    HarnessError::Config(format!("remote scorer needs an endpoint or {ENDPOINT_ENV}"))
                })?,
            };
            Box::new(RemoteScorer::connect(&Endpoint::parse(&text)?)?)
        }
    })
}

/// Classifies every image on a pool of `workers` threads. Results come back
/// in image order whatever the scheduling.
pub fn classify_dataset(
    tree: &LabelTree,
    images: &[ImageRef],
    scorer: &dyn Scorer,
    method: &MethodConfig,
    workers: Option<usize>,
) -> Result<(Vec<ImageRecord>, Vec<PruneTrace>), HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let results: Vec<(ImageRecord, Option<PruneTrace>)> = pool.install(|| {
        images
            .par_iter()
            .map(|image| {
                let (classification, trace) = match method {
                    MethodConfig::Flat(c) => (classify_flat(tree, image, scorer, c)?, None),
                    MethodConfig::Hdc(c) => {
                        let out = classify_hdc(tree, image, scorer, c)?;
                        (out.classification, Some(out.trace))
                    }
                };
                let record = ImageRecord {
                    image_id: image.image_id.clone(),
                    truth: image.true_class.clone(),
                    prediction: classification.prediction.clone(),
                    top: classification.ranked_labels().into_iter().take(5).collect(),
                    // reports never carry timing; keep records comparable
                    metrics: RunMetrics {
                        wall_clock: None,
                        ..classification.metrics
                    },
                };
                Ok((record, trace))
            })
            .collect::<Result<_, HarnessError>>()
    })?;
    let mut records = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for (record, trace) in results {
        records.push(record);
        traces.extend(trace);
    }
    Ok((records, traces))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let started = Instant::now();
    let tree = Arc::new(LabelTree::load_path(&config.tree_path)?);
    let dataset = match &config.dataset {
        DatasetSpec::Synthetic { per_class, seed } => gen_synthetic(&tree, *per_class, *seed)?,
        DatasetSpec::File { path } => Dataset::load(path)?,
    };
    dataset.check_classes(&tree)?;
    if dataset.images.is_empty() {
        return Err(HarnessError::Config("dataset has no images".into()));
    }
    let method = match config.method {
        Method::Flat => MethodConfig::Flat(config.flat_config()),
        Method::Hdc => MethodConfig::Hdc(config.hdc_config()),
    };
    let scorer = build_scorer(&config.scorer, tree.clone())?;

    let (records, traces) = match &config.record_matrix {
        Some(path) => {
            let recording = RecordingScorer::new(scorer);
            let out = classify_dataset(&tree, &dataset.images, &recording, &method, config.workers)?;
            write_file(path, &write_rows_json(&recording.rows()))?;
            out
        }
        None => classify_dataset(&tree, &dataset.images, &scorer, &method, config.workers)?,
    };

    let report = EvalReport::build(
        method.name(),
        &dataset.content_hash(),
        tree.leaf_count(),
        method.m_final(),
        records,
    )?;
    Ok(RunOutput {
        report,
        traces,
        elapsed: started.elapsed(),
    })
}

fn trace_file_name(image_id: &str) -> String {
    let safe: String = image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Writes `report.json`, the CSV views, `timing.json` and, for hdc runs,
/// one trace per image under `traces/`. Everything except the timing file
/// is a pure function of the configuration.
pub fn write_outputs(dir: &Path, output: &RunOutput) -> Result<(), HarnessError> {
    let report = &output.report;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("report.csv"), &report.summary_csv())?;
    write_file(&dir.join("confusion.csv"), &report.confusion_csv())?;
    write_file(&dir.join("per_class.csv"), &report.per_class_csv())?;
    let timing = serde_json::json!({
        "elapsed_seconds": output.elapsed.as_secs_f64(),
        "images": report.image_count,
    });
    write_file(&dir.join("timing.json"), &format!("{timing:#}\n"))?;
    for trace in &output.traces {
        write_file(
            &dir.join("traces").join(trace_file_name(&trace.image_id)),
            &(trace.to_json() + "\n"),
        )?;
    }
    Ok(())
}
