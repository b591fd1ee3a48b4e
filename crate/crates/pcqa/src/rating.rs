//! Five-level quality ratings: MOS binning, adjective text, and the softmax
//! over rating-token log-probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("mos {mos} outside declared range [{min}, {max}]")]
    OutOfRange { mos: f64, min: f64, max: f64 },
    #[error("log-probability input contains a non-finite value")]
    NonFiniteLogit,
    #[error("invalid score range: min {min} must be below max {max}")]
    InvalidRange { min: f64, max: f64 },
    #[error("unknown rating adjective '{0}'")]
    UnknownAdjective(String),
}

/// The five text rating levels, ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingLevel {
    Bad,
    Poor,
    Fair,
    Good,
    Excellent,
}

/// All levels in ordinal order (index 0 = bad, ..., index 4 = excellent).
pub const LEVELS: [RatingLevel; 5] = [
    RatingLevel::Bad,
    RatingLevel::Poor,
    RatingLevel::Fair,
    RatingLevel::Good,
    RatingLevel::Excellent,
];

impl RatingLevel {
    /// Zero-based position in [`LEVELS`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based ordinal, bad = 1 through excellent = 5.
    pub fn ordinal(self) -> usize {
        self.index() + 1
    }
}

/// The lowercase adjective exactly as it appears in the answer template.
pub fn level_text(level: RatingLevel) -> &'static str {
    match level {
        RatingLevel::Bad => "bad",
        RatingLevel::Poor => "poor",
        RatingLevel::Fair => "fair",
        RatingLevel::Good => "good",
        RatingLevel::Excellent => "excellent",
    }
}

/// Inverse of [`level_text`], case-insensitive.
pub fn text_to_level(text: &str) -> Result<RatingLevel, RatingError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "bad" => Ok(RatingLevel::Bad),
        "poor" => Ok(RatingLevel::Poor),
        "fair" => Ok(RatingLevel::Fair),
        "good" => Ok(RatingLevel::Good),
        "excellent" => Ok(RatingLevel::Excellent),
        other => Err(RatingError::UnknownAdjective(other.to_string())),
    }
}

/// Declared MOS range of a database; the level intervals split it evenly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosRange {
    pub min: f64,
    pub max: f64,
}

impl MosRange {
    pub fn new(min: f64, max: f64) -> Result<Self, RatingError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(RatingError::InvalidRange { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, mos: f64) -> bool {
        mos >= self.min && mos <= self.max
    }
}

/// Maps a MOS to its rating level by splitting `[min, max]` into five equal
/// intervals, each upper-inclusive. The lower boundary `mos == min`, which
/// every strict lower bound excludes, is assigned bad.
pub fn mos_to_level(mos: f64, range: MosRange) -> Result<RatingLevel, RatingError> {
    if !mos.is_finite() || !range.contains(mos) {
        return Err(RatingError::OutOfRange {
            mos,
            min: range.min,
            max: range.max,
        });
    }
    // mos <= min + i/5 * (max - min)  <=>  5 * (mos - min) <= i * (max - min),
    // rearranged so the interval edges stay exact for exactly-representable
    // boundary values.
    let lhs = 5.0 * (mos - range.min);
    let span = range.max - range.min;
    for (i, level) in LEVELS.iter().enumerate() {
        if lhs <= (i + 1) as f64 * span {
            return Ok(*level);
        }
    }
    Ok(RatingLevel::Excellent)
}

/// LMM evaluation result: the five rating-token log-probabilities and their
/// softmax, in ordinal order (bad .. excellent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmEvaluation {
    pub logprobs: [f64; 5],
    pub probs: [f64; 5],
}

impl LmmEvaluation {
    /// Level with the highest probability (first index on exact ties).
    pub fn argmax(&self) -> RatingLevel {
        let mut best = 0;
        for i in 1..5 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        LEVELS[best]
    }

    /// Expected ordinal under the probability vector, in [1, 5].
    pub fn expected_level(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

/// Softmax over the five log-probabilities, computed with max-subtraction.
pub fn logits_to_probabilities(logprobs: [f64; 5]) -> Result<LmmEvaluation, RatingError> {
    if !logprobs.iter().all(|v| v.is_finite()) {
        return Err(RatingError::NonFiniteLogit);
    }
    let max = logprobs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0; 5];
    let mut sum = 0.0;
    for (p, &l) in probs.iter_mut().zip(&logprobs) {
        *p = (l - max).exp();
        sum += *p;
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(LmmEvaluation { logprobs, probs })
}
