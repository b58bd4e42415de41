use std::sync::OnceLock;

use regex::Regex;

use super::ParseError;
use crate::gateway::ResponseRecord;

fn star_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^0-9.])([1-4])\*").unwrap())
}

/// Score from a free-text response: the last `N*` with N in 1..=4, since the
/// verdict normally follows the discussion.
pub fn parse_standard_score(record: &ResponseRecord) -> Result<u8, ParseError> {
    score_from_text(&record.content)
}

pub(crate) fn score_from_text(text: &str) -> Result<u8, ParseError> {
    star_pattern()
        .captures_iter(text)
        .last()
        .map(|c| c[1].parse().expect("regex admits 1-4 only"))
        .ok_or(ParseError::NoScore)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_match() {
        assert_eq!(score_from_text("...discussion... Overall score: 3*"), Ok(3));
    }

    #[test]
    fn last_match_wins() {
        assert_eq!(
            score_from_text("Parts of this reach 2* quality, but overall I give it 3*."),
            Ok(3)
        );
    }

    #[test]
    fn no_digit_asterisk() {
        assert_eq!(
            score_from_text("A solid contribution."),
            Err(ParseError::NoScore)
        );
        assert_eq!(
            score_from_text("Scored 5* and 14*"),
            Err(ParseError::NoScore)
        );
    }

    #[test]
    fn markdown_bold_score() {
        assert_eq!(score_from_text("**Score: 4***"), Ok(4));
    }
}
