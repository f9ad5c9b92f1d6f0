use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_score, ScoreError, ScoreRequest, Scorer};

/// One precomputed error: `(image, label, t, noise) → error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub image_id: String,
    pub label: String,
    pub t: u32,
    pub noise_id: u64,
    pub error: f64,
}

type SampleTable = HashMap<(u32, u64), f64>;

/// Scorer backed by a precomputed error matrix.
#[derive(Debug, Clone, Default)]
pub struct ReplayScorer {
    table: HashMap<String, HashMap<String, SampleTable>>,
    len: usize,
}

impl ReplayScorer {
    pub fn from_rows<I: IntoIterator<Item = ReplayRow>>(rows: I) -> Result<Self, ScoreError> {
        let mut scorer = ReplayScorer::default();
        for row in rows {
            check_score(row.error).map_err(|_| {
                ScoreError::Matrix(format!(
                    "error {} for ({}, {}) is not finite and non-negative",
                    row.error, row.image_id, row.label
                ))
            })?;
            let slot = scorer
                .table
                .entry(row.image_id.clone())
                .or_default()
                .entry(row.label.clone())
                .or_default();
            match slot.insert((row.t, row.noise_id), row.error) {
                Some(prev) if prev.to_bits() != row.error.to_bits() => {
                    return Err(ScoreError::Matrix(format!(
                        "conflicting entries for ({}, {}, t={}, noise={})",
                        row.image_id, row.label, row.t, row.noise_id
                    )))
                }
                Some(_) => {}
                None => scorer.len += 1,
            }
        }
        Ok(scorer)
    }

    /// JSON array of rows.
    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self, ScoreError> {
        let rows: Vec<ReplayRow> =
            serde_json::from_reader(reader).map_err(|e| ScoreError::Matrix(e.to_string()))?;
        Self::from_rows(rows)
    }

    /// CSV with header `image_id,label,t,noise_id,error`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, ScoreError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr
            .deserialize::<ReplayRow>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ScoreError::Matrix(e.to_string()))?;
        Self::from_rows(rows)
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv_reader(reader),
            _ => Self::from_json_reader(reader),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, image_id: &str, label: &str, t: u32, noise_id: u64) -> Option<f64> {
        self.table
            .get(image_id)
            .and_then(|by_label| by_label.get(label))
            .and_then(|samples| samples.get(&(t, noise_id)))
            .copied()
    }

    /// Every stored row, sorted by key.
    pub fn rows(&self) -> Vec<ReplayRow> {
        let mut rows: Vec<ReplayRow> = self
            .table
            .iter()
            .flat_map(|(image_id, by_label)| {
                by_label.iter().flat_map(move |(label, samples)| {
                    samples.iter().map(move |(&(t, noise_id), &error)| ReplayRow {
                        image_id: image_id.clone(),
                        label: label.clone(),
                        t,
                        noise_id,
                        error,
                    })
                })
            })
            .collect();
        rows.sort_by(|a, b| {
            (&a.image_id, &a.label, a.t, a.noise_id).cmp(&(&b.image_id, &b.label, b.t, b.noise_id))
        });
        rows
    }
}

impl Scorer for ReplayScorer {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        let sample = request.sample;
        self.get(
            &request.image.image_id,
            &request.prompt.label,
            sample.t,
            sample.noise_id,
        )
        .ok_or_else(|| ScoreError::MissingEntry {
            image_id: request.image.image_id.clone(),
            label: request.prompt.label.clone(),
            t: sample.t,
            noise_id: sample.noise_id,
        })
    }
}

pub fn write_rows_json(rows: &[ReplayRow]) -> String {
    serde_json::to_string_pretty(rows).expect("replay rows serialize")
}
