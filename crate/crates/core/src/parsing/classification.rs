use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ParseError, ScoreDistribution};
use crate::gateway::ResponseRecord;

/// Allowed distance, in percentage points, between a table's total and 100.
pub const TABLE_SUM_TOLERANCE: f64 = 1.0;

/// Percentages as stated in a classification table, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPercentages {
    pub raw_pct: [f64; 4],
    pub trailing_commentary: Option<String>,
}

impl ParsedPercentages {
    pub fn sum(&self) -> f64 {
        self.raw_pct.iter().sum()
    }

    /// Whether the stated percentages add up to 100 within tolerance.
    pub fn sums_to_100(&self) -> bool {
        (self.sum() - 100.0).abs() <= TABLE_SUM_TOLERANCE
    }

    /// Percentages scaled by their own total so the result sums to one.
    pub fn to_distribution(&self) -> Result<ScoreDistribution, ParseError> {
        ScoreDistribution::from_weights(self.raw_pct)
    }
}

fn line_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // `1*: 10%`, `- 2* : 30 %`, `**3***: 45%`; the value group is checked later
    RE.get_or_init(|| {
        Regex::new(r"(?m)(?:^|[^0-9.])\**([1-4])\s*\*+\s*:\s*\**\s*([^\n%]*?)\s*%").unwrap()
    })
}

/// Extracts the four `N*: x%` entries from a classification response. The
/// first entry for each level wins; anything after the last entry is kept
/// as commentary.
pub fn parse_classification_table(
    record: &ResponseRecord,
) -> Result<ParsedPercentages, ParseError> {
    parse_table_text(&record.content)
}

pub(crate) fn parse_table_text(text: &str) -> Result<ParsedPercentages, ParseError> {
    let mut values: [Option<f64>; 4] = [None; 4];
    let mut end = 0usize;
    for caps in line_pattern().captures_iter(text) {
        let score: u8 = caps[1].parse().expect("regex admits 1-4 only");
        let slot = &mut values[score as usize - 1];
        if slot.is_some() {
            continue;
        }
        let raw = caps[2].trim().trim_matches('*').trim();
        let value: f64 = raw.parse().map_err(|_| ParseError::BadPercentage {
            score,
            text: raw.to_string(),
        })?;
        if !(0.0..=100.0).contains(&value) {
            return Err(ParseError::PercentageOutOfRange { score, value });
        }
        *slot = Some(value);
        end = end.max(caps.get(0).expect("whole match").end());
    }
    let found = values.iter().filter(|v| v.is_some()).count();
    if found < 4 {
        return Err(ParseError::TooFewLines { found });
    }
    let tail = text[end..].trim();
    Ok(ParsedPercentages {
        raw_pct: values.map(|v| v.expect("all four present")),
        trailing_commentary: (!tail.is_empty()).then(|| tail.to_string()),
    })
}
