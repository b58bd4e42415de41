//! Turns stored responses into probability distributions over the four
//! quality levels.

mod classification;
mod standard;
mod token;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classification::{parse_classification_table, ParsedPercentages, TABLE_SUM_TOLERANCE};
pub use standard::parse_standard_score;
pub use token::{normalize_score_token, parse_token_score};

/// Tolerance on the sum of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("found {found} of the four score lines")]
    TooFewLines { found: usize },
    #[error("percentage for {score}* is not a number: `{text}`")]
    BadPercentage { score: u8, text: String },
    #[error("percentage for {score}* is outside [0, 100]: {value}")]
    PercentageOutOfRange { score: u8, value: f64 },
    #[error("no score found in response")]
    NoScore,
    #[error("record carries no token log-probabilities")]
    MissingLogprobs,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Probabilities for 1*, 2*, 3* and 4*, nonnegative and summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ScoreDistribution([f64; 4]);

impl ScoreDistribution {
    /// Validates an already-normalized vector.
    pub fn new(p: [f64; 4]) -> Result<Self, ParseError> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ParseError::InvalidDistribution(format!(
                "entries must be finite and nonnegative: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ParseError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(ScoreDistribution(p))
    }

    /// Scales nonnegative weights to sum to one.
    pub fn from_weights(w: [f64; 4]) -> Result<Self, ParseError> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ParseError::InvalidDistribution(format!(
                "weights must be finite and nonnegative: {w:?}"
            )));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(ParseError::InvalidDistribution(
                "weights sum to zero".into(),
            ));
        }
        Ok(ScoreDistribution(w.map(|v| v / total)))
    }

    pub fn point_mass(score: u8) -> Self {
        assert!((1..=4).contains(&score), "score {score} outside 1..=4");
        let mut p = [0.0; 4];
        p[score as usize - 1] = 1.0;
        ScoreDistribution(p)
    }

    /// Probability of `score` (1..=4).
    pub fn p(&self, score: u8) -> f64 {
        self.0[score as usize - 1]
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.0
    }
}

impl TryFrom<[f64; 4]> for ScoreDistribution {
    type Error = ParseError;

    fn try_from(p: [f64; 4]) -> Result<Self, Self::Error> {
        ScoreDistribution::new(p)
    }
}

impl From<ScoreDistribution> for [f64; 4] {
    fn from(d: ScoreDistribution) -> Self {
        d.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_weights_normalizes() {
        let d = ScoreDistribution::from_weights([0.0, 0.1, 0.1, 0.3]).unwrap();
        assert!((d.p(4) - 0.6).abs() < 1e-12);
        assert!((d.p(2) - 0.2).abs() < 1e-12);
        assert_eq!(d.p(1), 0.0);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(ScoreDistribution::new([0.5, 0.5, 0.5, 0.0]).is_err());
        assert!(ScoreDistribution::new([-0.1, 0.5, 0.6, 0.0]).is_err());
        assert!(ScoreDistribution::from_weights([0.0; 4]).is_err());
        assert!(ScoreDistribution::from_weights([f64::NAN, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn serde_validates() {
        let d: ScoreDistribution = serde_json::from_str("[0.0,0.2,0.2,0.6]").unwrap();
        assert_eq!(d.p(4), 0.6);
        assert!(serde_json::from_str::<ScoreDistribution>("[1.0,1.0,0.0,0.0]").is_err());
    }
}
