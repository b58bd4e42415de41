use std::sync::OnceLock;

use regex::Regex;

use super::{ParseError, ScoreDistribution};
use crate::gateway::ResponseRecord;

fn score_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[\s*]*([1-4])[\s*]*$").unwrap())
}

/// Maps a token such as `"3"`, `" 4*"` or `"**2"` to its score. Words,
/// other digits and punctuation-only tokens are not scores.
pub fn normalize_score_token(token: &str) -> Option<u8> {
    score_token()
        .captures(token)
        .map(|c| c[1].parse().expect("regex admits 1-4 only"))
}

/// Finds the first position whose emitted token is a score, then turns the
/// score-like alternatives at that position into a distribution:
/// probabilities are exponentiated logprobs, summed per score, and
/// rescaled to one. Scores absent from the alternatives get zero.
pub fn parse_token_score(record: &ResponseRecord) -> Result<ScoreDistribution, ParseError> {
    if record.token_logprobs.is_empty() {
        return Err(ParseError::MissingLogprobs);
    }
    for position in &record.token_logprobs {
        let Some(chosen) = normalize_score_token(&position.chosen_token) else {
            continue;
        };
        let mut mass = [0.0f64; 4];
        let mut chosen_listed = false;
        for alt in &position.alternatives {
            if let Some(score) = normalize_score_token(&alt.token) {
                mass[score as usize - 1] += alt.logprob.exp();
            }
            chosen_listed |= alt.token == position.chosen_token;
        }
        if !chosen_listed {
            // endpoint reported the emitted token outside its own top-k
            mass[chosen as usize - 1] += position.chosen_logprob.exp();
        }
        return ScoreDistribution::from_weights(mass);
    }
    Err(ParseError::NoScore)
}
