mod common;

use common::*;
use starscore::parsing::{parse_classification_table, parse_standard_score, parse_token_score};
use starscore::prompting::Strategy;
use starscore::scoring::{aggregate, score_record, weighted_score, winner, ScoreOptions};

#[test]
fn logprob_excerpt_parses_to_hand_computed_probabilities() {
    let rec = logprob_fixture_record();
    assert_eq!(rec.content, "Score: 3*\n\n");
    assert_eq!(rec.token_logprobs.len(), 5);
    assert!(rec.token_logprobs.iter().all(|p| p.alternatives.len() == 5));

    // exponentiate the digit alternatives at the fourth position and renormalize
    let e3 = (-0.003229052061215043f64).exp();
    let e2 = (-5.753229141235352f64).exp();
    let e4 = (-9.878229141235352f64).exp();
    let total = e2 + e3 + e4;
    assert!((total - 0.999999954).abs() < 1e-9);

    let d = parse_token_score(&rec).unwrap();
    assert_eq!(d.p(1), 0.0);
    assert!((d.p(2) - e2 / total).abs() < 1e-15);
    assert!((d.p(3) - e3 / total).abs() < 1e-15);
    assert!((d.p(4) - e4 / total).abs() < 1e-15);
    assert!((d.p(3) - 0.996776).abs() < 1e-5);
    assert!((d.p(2) - 0.0031725).abs() < 1e-6);
    assert!((d.p(4) - 5.13e-5).abs() < 1e-7);
    let w = weighted_score(&d);
    assert!((w - 2.996878623).abs() < 1e-6, "{w}");
    assert_eq!(winner(&d), 3);
}

#[test]
fn first_position_digit_alternative_is_ignored() {
    // "3" is among the alternatives of the leading "Score" token; it must not
    // be mistaken for the answer
    let rec = logprob_fixture_record();
    let first = &rec.token_logprobs[0];
    assert!(first.alternatives.iter().any(|a| a.token == "3"));
    let d = parse_token_score(&rec).unwrap();
    assert!(d.p(3) > 0.99);
}

#[test]
fn classification_iterations_match_listed_means() {
    let rows = classification_fixture();
    assert_eq!(rows.len(), 5);
    let mut scored = Vec::new();
    for row in &rows {
        let rec = record(
            "t2",
            Strategy::ClassificationTable,
            row.iteration,
            &row.content,
            vec![],
        );
        let table = parse_classification_table(&rec).unwrap();
        assert!(table.sums_to_100());
        let s = score_record(&rec, ScoreOptions::default());
        assert!(s.flags.is_empty(), "{:?}", s.flags);
        assert!((s.weighted_score.unwrap() - row.expected_mean).abs() < 1e-9);
        scored.push(s);
    }
    let mean = aggregate(&scored).unwrap().mean_weighted_score;
    let oracle = rows.iter().map(|r| r.expected_mean).sum::<f64>() / 5.0;
    assert!((mean - oracle).abs() < 1e-9);
    assert!((mean - 2.70).abs() < 1e-9);
}

#[test]
fn standard_responses_match_hand_labels() {
    let rows = standard_fixture();
    assert!(rows.len() >= 20);
    for row in rows {
        let rec = record(&row.id, Strategy::Standard, 1, &row.content, vec![]);
        assert_eq!(
            parse_standard_score(&rec).ok(),
            row.expected,
            "{}: {:?}",
            row.id,
            row.content
        );
    }
}
