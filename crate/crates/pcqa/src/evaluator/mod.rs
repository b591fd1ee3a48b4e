//! Rating evaluation: prompt construction, fine-tuning dataset export, and
//! scoring backends (a deterministic mock and an HTTP endpoint client).
//!
//! The scoring contract is chat-completions style: the question plus six
//! projection images go out, the assistant prefill ends right before the
//! rating word, and the backend returns top-k log-probabilities of the next
//! generated token, which are mapped onto the five quality adjectives.

mod endpoint;
mod mock;

pub use endpoint::{score_point_cloud, EndpointConfig, HttpBackend, API_KEY_ENV};
pub use mock::{mock_score, mock_score_with_projections, MockBackend, MockConfig};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{FoldSplit, Manifest};
use crate::rating::{level_text, mos_to_level, LmmEvaluation, RatingError, RatingLevel};

/// Question template; the six slots stand for the cube-face projections in
/// order [+X, -X, +Y, -Y, +Z, -Z].
pub const QUESTION: &str = "How would you rate the quality of the point cloud from the projections? <|img1|><|img2|><|img3|><|img4|><|img5|><|img6|>";

/// Assistant prefill ending just before the rating word.
pub const ANSWER_PREFIX: &str = "The quality of this point cloud is";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expected exactly 6 projection images, got {got}")]
    WrongImageCount { got: usize },
    #[error("missing projection image {0}")]
    MissingProjection(PathBuf),
    #[error("endpoint unreachable after {attempts} attempts: {detail}")]
    EndpointUnreachable { attempts: usize, detail: String },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("no rating adjective among the returned top log-probabilities")]
    NoRatingTokenFound,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

/// The instruction pair sent to (or exported for) the rating model.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPair {
    pub question: String,
    pub answer_prefix: String,
    /// Full answer including the adjective; present for training records.
    pub answer_full: Option<String>,
}

/// Builds the prompt for six projection images.
pub fn build_prompt(image_paths: &[PathBuf]) -> Result<PromptPair, EvalError> {
    if image_paths.len() != 6 {
        return Err(EvalError::WrongImageCount {
            got: image_paths.len(),
        });
    }
    Ok(PromptPair {
        question: QUESTION.to_string(),
        answer_prefix: ANSWER_PREFIX.to_string(),
        answer_full: None,
    })
}

/// The training answer sentence for a level.
pub fn answer_for_level(level: RatingLevel) -> String {
    format!("{} {}.", ANSWER_PREFIX, level_text(level))
}

/// One exported fine-tuning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub cloud_name: String,
    pub images: Vec<String>,
    pub question: String,
    pub answer: String,
    pub mos: f64,
    pub level: RatingLevel,
}

/// Training hyperparameters shipped alongside the exported dataset for
/// external trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftMeta {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub image_size: u32,
}

impl Default for SftMeta {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 2e-5,
            epochs: 2,
            image_size: 448,
        }
    }
}

/// Sidecar path of an exported dataset (`fold0.jsonl` -> `fold0.meta.json`).
pub fn sft_meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

/// Writes one JSONL record per training cloud of the fold, in manifest
/// order, plus the hyperparameter sidecar. Every referenced projection file
/// must exist. Returns the number of records written.
pub fn export_sft_dataset(
    manifest: &Manifest,
    split: &FoldSplit,
    projections_dir: &Path,
    out: &Path,
) -> Result<usize, EvalError> {
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut lines = String::new();
    let mut count = 0;
    for entry in &manifest.entries {
        if !split.is_train(&entry.group_id) {
            continue;
        }
        let image_paths: Vec<PathBuf> = (1..=6)
            .map(|k| projections_dir.join(crate::projection::face_file_name(&entry.cloud_name, k)))
            .collect();
        for p in &image_paths {
            if !p.is_file() {
                return Err(EvalError::MissingProjection(p.clone()));
            }
        }
        let prompt = build_prompt(&image_paths)?;
        let level = mos_to_level(entry.mos, manifest.score_range)?;
        let record = SftRecord {
            cloud_name: entry.cloud_name.clone(),
            images: image_paths
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect(),
            question: prompt.question,
            answer: answer_for_level(level),
            mos: entry.mos,
            level,
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serialization"));
        lines.push('\n');
        count += 1;
    }
    std::fs::write(out, lines)?;
    std::fs::write(
        sft_meta_path(out),
        serde_json::to_string_pretty(&SftMeta::default()).expect("meta serialization"),
    )?;
    Ok(count)
}

/// What a backend needs to score one cloud. The mock uses the name and MOS;
/// the HTTP backend uses the image paths.
#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub cloud_name: String,
    pub mos: f64,
    pub image_paths: Vec<PathBuf>,
}

/// A scoring backend; implementations must be safe to call from multiple
/// worker threads.
pub trait ScoreBackend: Sync {
    fn score(&self, request: &ScoreRequest) -> Result<LmmEvaluation, EvalError>;

    /// Upper bound on concurrent in-flight requests.
    fn max_concurrency(&self) -> usize {
        1
    }
}

/// A batch failure, naming the request that caused the abort.
#[derive(Debug, Error)]
#[error("scoring '{cloud_name}' (request {index}) failed: {source}")]
pub struct BatchScoreError {
    pub index: usize,
    pub cloud_name: String,
    #[source]
    pub source: EvalError,
}

/// Scores every request with at most `backend.max_concurrency()` requests in
/// flight. Results keep request order. The first failing request (by index)
/// aborts the batch; nothing is silently dropped.
pub fn score_batch<B: ScoreBackend>(
    requests: &[ScoreRequest],
    backend: &B,
) -> Result<Vec<LmmEvaluation>, BatchScoreError> {
    let workers = backend.max_concurrency().max(1).min(requests.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<LmmEvaluation, EvalError>>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let outcome = backend.score(&requests[i]);
                if outcome.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let slots = results.into_inner().unwrap();
    // Workers stop pulling new requests once a failure is flagged, so empty
    // slots can only trail a recorded error; an ascending scan therefore
    // surfaces the lowest failing index.
    let mut out = Vec::with_capacity(slots.len());
    for (index, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(Ok(eval)) => out.push(eval),
            Some(Err(source)) => {
                return Err(BatchScoreError {
                    index,
                    cloud_name: requests[index].cloud_name.clone(),
                    source,
                })
            }
            None => {
                return Err(BatchScoreError {
                    index,
                    cloud_name: requests[index].cloud_name.clone(),
                    source: EvalError::MalformedResponse(
                        "scoring aborted before this request was issued".into(),
                    ),
                })
            }
        }
    }
    Ok(out)
}
