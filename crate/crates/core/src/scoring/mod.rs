//! Noise-prediction error scorers.
//!
//! A scorer answers one question: for an image, a conditioning prompt and a
//! `(t, noise)` draw, how far is the predicted noise from the true noise?
//! The engine never touches pixels; noising happens behind this trait.

mod remote;
mod replay;
mod synthetic;

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{Endpoint, RemoteScorer, ENDPOINT_ENV, PROTOCOL_VERSION};
pub use replay::{write_rows_json, ReplayRow, ReplayScorer};
pub use synthetic::{AlphaBarSchedule, SyntheticParams, SyntheticScorer};
pub(crate) use synthetic::splitmix64;

pub const DEFAULT_TEMPLATE: &str = "A photo of a {label}";
pub const PLACEHOLDER: &str = "{label}";
pub const DEFAULT_T_MAX: u32 = 1000;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("template {0:?} must contain exactly one {{label}} placeholder")]
    Template(String),
    #[error("no replay entry for image {image_id:?}, label {label:?}, t={t}, noise={noise_id}")]
    MissingEntry {
        image_id: String,
        label: String,
        t: u32,
        noise_id: u64,
    },
    #[error("image {0:?} has no ground-truth class; the synthetic scorer needs one")]
    MissingTruth(String),
    #[error("class {0:?} is not a leaf of the scorer's tree")]
    UnknownClass(String),
    #[error("invalid replay matrix: {0}")]
    Matrix(String),
    #[error("invalid scorer configuration: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server fault: {0}")]
    Fault(String),
    #[error("scorer returned non-finite or negative error {0}")]
    InvalidScore(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_class: Option<String>,
    /// Opaque bytes for scorers that need pixels, base64 in JSON.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "payload_b64"
    )]
    pub payload: Option<Vec<u8>>,
}

impl ImageRef {
    pub fn new(image_id: impl Into<String>, true_class: Option<String>) -> Self {
        ImageRef {
            image_id: image_id.into(),
            true_class,
            payload: None,
        }
    }
}

mod payload_b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| {
            base64::engine::general_purpose::STANDARD
                .decode(t)
                .map_err(serde::de::Error::custom)
        })
        .transpose()
    }
}

/// One `(t, noise)` Monte Carlo draw. The noise tensor is identified by its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplePoint {
    pub t: u32,
    pub noise_id: u64,
}

/// A fixed, seed-reproducible set of draws shared by every candidate label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<SamplePoint>,
    seed: u64,
    t_max: u32,
}

impl SampleSet {
    /// Draws `m` samples with `t` uniform on `[1, t_max]`.
    pub fn build(seed: u64, m: usize, t_max: u32) -> Result<Self, ScoreError> {
        if m == 0 {
            return Err(ScoreError::Config("sample count must be at least 1".into()));
        }
        if t_max == 0 {
            return Err(ScoreError::Config("t_max must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..m)
            .map(|_| SamplePoint {
                t: rng.random_range(1..=t_max),
                noise_id: rng.random(),
            })
            .collect();
        Ok(SampleSet {
            samples,
            seed,
            t_max,
        })
    }

    pub fn samples(&self) -> &[SamplePoint] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SamplePoint> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub template: String,
    pub label: String,
    pub rendered: String,
}

pub fn render_prompt(template: &str, label: &str) -> Result<Prompt, ScoreError> {
    if template.matches(PLACEHOLDER).count() != 1 {
        return Err(ScoreError::Template(template.to_string()));
    }
    Ok(Prompt {
        template: template.to_string(),
        label: label.to_string(),
        rendered: template.replacen(PLACEHOLDER, label, 1),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub image: &'a ImageRef,
    pub prompt: &'a Prompt,
    pub sample: SamplePoint,
}

/// Computes `‖ε − ε_θ(x_t, c)‖²` for one request.
///
/// Implementations must be callable from several worker threads at once.
pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        (**self).score(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        (**self).score(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        (**self).score(request)
    }
}

pub(crate) fn check_score(value: f64) -> Result<f64, ScoreError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ScoreError::InvalidScore(value))
    }
}

/// Identity of a request as seen by a scorer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestKey {
    pub image_id: String,
    pub label: String,
    pub t: u32,
    pub noise_id: u64,
}

impl RequestKey {
    pub fn of(request: &ScoreRequest<'_>) -> Self {
        RequestKey {
            image_id: request.image.image_id.clone(),
            label: request.prompt.label.clone(),
            t: request.sample.t,
            noise_id: request.sample.noise_id,
        }
    }
}

/// Wraps a scorer, counting calls and flagging repeated requests.
pub struct CountingScorer<S> {
    inner: S,
    calls: AtomicU64,
    seen: Mutex<HashSet<RequestKey>>,
    duplicates: Mutex<Vec<RequestKey>>,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicU64::new(0),
            seen: Mutex::new(HashSet::new()),
            duplicates: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn duplicates(&self) -> Vec<RequestKey> {
        self.duplicates.lock().expect("poisoned").clone()
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
        self.seen.lock().expect("poisoned").clear();
        self.duplicates.lock().expect("poisoned").clear();
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let key = RequestKey::of(request);
        if !self.seen.lock().expect("poisoned").insert(key.clone()) {
            self.duplicates.lock().expect("poisoned").push(key);
        }
        self.inner.score(request)
    }
}

/// Wraps a scorer and keeps every answered request, for building replay matrices.
pub struct RecordingScorer<S> {
    inner: S,
    rows: Mutex<Vec<ReplayRow>>,
}

impl<S: Scorer> RecordingScorer<S> {
    pub fn new(inner: S) -> Self {
        RecordingScorer {
            inner,
            rows: Mutex::new(Vec::new()),
        }
    }

    /// Recorded rows, sorted and de-duplicated.
    pub fn rows(&self) -> Vec<ReplayRow> {
        let mut rows = self.rows.lock().expect("poisoned").clone();
        rows.sort_by(|a, b| {
            (&a.image_id, &a.label, a.t, a.noise_id).cmp(&(&b.image_id, &b.label, b.t, b.noise_id))
        });
        rows.dedup_by(|a, b| {
            a.image_id == b.image_id && a.label == b.label && a.t == b.t && a.noise_id == b.noise_id
        });
        rows
    }
}

impl<S: Scorer> Scorer for RecordingScorer<S> {
    fn score(&self, request: &ScoreRequest<'_>) -> Result<f64, ScoreError> {
        let error = self.inner.score(request)?;
        self.rows.lock().expect("poisoned").push(ReplayRow {
            image_id: request.image.image_id.clone(),
            label: request.prompt.label.clone(),
            t: request.sample.t,
            noise_id: request.sample.noise_id,
            error,
        });
        Ok(error)
    }
}
