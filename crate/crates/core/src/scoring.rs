//! Weighted scores, winners and per-article aggregation.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::ResponseRecord;
use crate::parsing::{
    parse_classification_table, parse_standard_score, parse_token_score, ParseError,
    ScoreDistribution,
};
use crate::prompting::Strategy;

/// Why an iteration was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Table percentages do not add up to 100 within tolerance.
    TableSum,
    /// As `TableSum`, but kept because flagged tables were explicitly allowed.
    TableSumAccepted,
    TooFewLines,
    BadPercentage,
    NoScore,
    MissingLogprobs,
    InvalidDistribution,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::TableSum => "table_sum",
            Flag::TableSumAccepted => "table_sum_accepted",
            Flag::TooFewLines => "too_few_lines",
            Flag::BadPercentage => "bad_percentage",
            Flag::NoScore => "no_score",
            Flag::MissingLogprobs => "missing_logprobs",
            Flag::InvalidDistribution => "invalid_distribution",
        }
    }

    /// Whether an iteration carrying this flag is left out of averages.
    pub fn excludes(self) -> bool {
        !matches!(self, Flag::TableSumAccepted)
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "table_sum" => Flag::TableSum,
            "table_sum_accepted" => Flag::TableSumAccepted,
            "too_few_lines" => Flag::TooFewLines,
            "bad_percentage" => Flag::BadPercentage,
            "no_score" => Flag::NoScore,
            "missing_logprobs" => Flag::MissingLogprobs,
            "invalid_distribution" => Flag::InvalidDistribution,
            other => return Err(format!("unknown flag `{other}`")),
        })
    }
}

impl From<&ParseError> for Flag {
    fn from(e: &ParseError) -> Self {
        match e {
            ParseError::TooFewLines { .. } => Flag::TooFewLines,
            ParseError::BadPercentage { .. } | ParseError::PercentageOutOfRange { .. } => {
                Flag::BadPercentage
            }
            ParseError::NoScore => Flag::NoScore,
            ParseError::MissingLogprobs => Flag::MissingLogprobs,
            ParseError::InvalidDistribution(_) => Flag::InvalidDistribution,
        }
    }
}

/// One parsed iteration. `distribution` is absent when nothing usable could
/// be parsed; `flags` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub article_id: String,
    pub strategy: Strategy,
    pub iteration: u32,
    pub distribution: Option<ScoreDistribution>,
    pub weighted_score: Option<f64>,
    pub winner: Option<u8>,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl ScoredResult {
    pub fn from_distribution(
        article_id: impl Into<String>,
        strategy: Strategy,
        iteration: u32,
        distribution: ScoreDistribution,
        flags: Vec<Flag>,
    ) -> Self {
        ScoredResult {
            article_id: article_id.into(),
            strategy,
            iteration,
            weighted_score: Some(weighted_score(&distribution)),
            winner: Some(winner(&distribution)),
            distribution: Some(distribution),
            flags,
        }
    }

    fn failed(record: &ResponseRecord, flag: Flag) -> Self {
        ScoredResult {
            article_id: record.article_id.clone(),
            strategy: record.strategy,
            iteration: record.iteration,
            distribution: None,
            weighted_score: None,
            winner: None,
            flags: vec![flag],
        }
    }

    /// Usable in averages: has a distribution and no excluding flag.
    pub fn is_usable(&self) -> bool {
        self.distribution.is_some() && !self.flags.iter().any(|f| f.excludes())
    }
}

/// Expected star level, Σ s·p(s).
pub fn weighted_score(d: &ScoreDistribution) -> f64 {
    d.probabilities()
        .iter()
        .zip(1..=4)
        .map(|(p, s)| s as f64 * p)
        .sum()
}

/// Most probable level; ties go to the lower level.
pub fn winner(d: &ScoreDistribution) -> u8 {
    let p = d.probabilities();
    let mut best = 0;
    for s in 1..4 {
        if p[s] > p[best] {
            best = s;
        }
    }
    best as u8 + 1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Keep classification tables whose total misses 100 by more than the
    /// tolerance (normally flagged and excluded).
    pub accept_off_sum_tables: bool,
}

/// Parses one stored response under its strategy's rules.
pub fn score_record(record: &ResponseRecord, options: ScoreOptions) -> ScoredResult {
    let parsed = match record.strategy {
        Strategy::ClassificationTable => parse_classification_table(record).and_then(|table| {
            let mut flags = Vec::new();
            if !table.sums_to_100() {
                flags.push(if options.accept_off_sum_tables {
                    Flag::TableSumAccepted
                } else {
                    Flag::TableSum
                });
            }
            table.to_distribution().map(|d| (d, flags))
        }),
        Strategy::TokenScore => parse_token_score(record).map(|d| (d, Vec::new())),
        Strategy::Standard => {
            parse_standard_score(record).map(|s| (ScoreDistribution::point_mass(s), Vec::new()))
        }
    };
    match parsed {
        Ok((d, flags)) => ScoredResult::from_distribution(
            record.article_id.clone(),
            record.strategy,
            record.iteration,
            d,
            flags,
        ),
        Err(e) => ScoredResult::failed(record, Flag::from(&e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleScore {
    pub article_id: String,
    pub strategy: Strategy,
    pub mean_weighted_score: f64,
    pub mean_winner_score: f64,
    pub n_iterations_used: usize,
    pub n_iterations_flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("no results to aggregate")]
    Empty,
    #[error("results mix articles or strategies")]
    Mixed,
    #[error("article `{article_id}` ({strategy}) has no usable iterations; {flagged} flagged")]
    Unusable {
        article_id: String,
        strategy: Strategy,
        flagged: usize,
    },
}

/// Means of the weighted scores and of the winners over the usable
/// iterations of one article under one strategy.
pub fn aggregate(results: &[ScoredResult]) -> Result<ArticleScore, ScoringError> {
    let first = results.first().ok_or(ScoringError::Empty)?;
    if results
        .iter()
        .any(|r| r.article_id != first.article_id || r.strategy != first.strategy)
    {
        return Err(ScoringError::Mixed);
    }
    let usable: Vec<&ScoredResult> = results.iter().filter(|r| r.is_usable()).collect();
    if usable.is_empty() {
        return Err(ScoringError::Unusable {
            article_id: first.article_id.clone(),
            strategy: first.strategy,
            flagged: results.len(),
        });
    }
    let n = usable.len() as f64;
    let mean_weighted_score = usable
        .iter()
        .map(|r| r.weighted_score.expect("usable results are scored"))
        .sum::<f64>()
        / n;
    let mean_winner_score = usable
        .iter()
        .map(|r| r.winner.expect("usable results are scored") as f64)
        .sum::<f64>()
        / n;
    Ok(ArticleScore {
        article_id: first.article_id.clone(),
        strategy: first.strategy,
        mean_weighted_score,
        mean_winner_score,
        n_iterations_used: usable.len(),
        n_iterations_flagged: results.len() - usable.len(),
    })
}

/// Groups results by (article, strategy) and aggregates each group. Groups
/// with no usable iteration come back as errors alongside the scores.
pub fn aggregate_all(results: &[ScoredResult]) -> (Vec<ArticleScore>, Vec<ScoringError>) {
    let mut groups: std::collections::BTreeMap<(Strategy, &str), Vec<ScoredResult>> =
        std::collections::BTreeMap::new();
    for r in results {
        groups
            .entry((r.strategy, r.article_id.as_str()))
            .or_default()
            .push(r.clone());
    }
    let mut scores = Vec::new();
    let mut errors = Vec::new();
    for group in groups.values() {
        match aggregate(group) {
            Ok(s) => scores.push(s),
            Err(e) => errors.push(e),
        }
    }
    (scores, errors)
}

pub const SCORED_CSV_HEADER: [&str; 10] = [
    "article_id",
    "strategy",
    "iteration",
    "p1",
    "p2",
    "p3",
    "p4",
    "weighted",
    "winner",
    "flags",
];

#[derive(Debug, Error)]
pub enum ScoredTableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_scored_jsonl<W: Write>(mut w: W, results: &[ScoredResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_scored_csv<W: Write>(w: W, results: &[ScoredResult]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SCORED_CSV_HEADER)?;
    for r in results {
        let p = r.distribution.map(|d| d.probabilities());
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
        wtr.write_record([
            r.article_id.clone(),
            r.strategy.to_string(),
            r.iteration.to_string(),
            cell(p.map(|p| p[0])),
            cell(p.map(|p| p[1])),
            cell(p.map(|p| p[2])),
            cell(p.map(|p| p[3])),
            cell(r.weighted_score),
            r.winner.map(|w| w.to_string()).unwrap_or_default(),
            flags.join(";"),
        ])?;
    }
    wtr.flush()
}

pub fn read_scored_jsonl<R: BufRead>(r: R) -> Result<Vec<ScoredResult>, ScoredTableError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result: ScoredResult =
            serde_json::from_str(&line).map_err(|e| ScoredTableError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(check_consistent(result, i + 1)?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct ScoredRow {
    article_id: String,
    strategy: String,
    iteration: u32,
    p1: Option<f64>,
    p2: Option<f64>,
    p3: Option<f64>,
    p4: Option<f64>,
    #[allow(dead_code)]
    weighted: Option<f64>,
    #[allow(dead_code)]
    winner: Option<u8>,
    #[serde(default)]
    flags: String,
}

pub fn read_scored_csv<R: Read>(r: R) -> Result<Vec<ScoredResult>, ScoredTableError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ScoredRow>().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| ScoredTableError::Parse { line, message };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let strategy: Strategy = row.strategy.parse().map_err(parse_err)?;
        let flags = row
            .flags
            .split(';')
            .filter(|s| !s.is_empty())
            .map(Flag::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map_err(parse_err)?;
        let result = match (row.p1, row.p2, row.p3, row.p4) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                let dist =
                    ScoreDistribution::new([a, b, c, d]).map_err(|e| parse_err(e.to_string()))?;
                ScoredResult::from_distribution(
                    row.article_id,
                    strategy,
                    row.iteration,
                    dist,
                    flags,
                )
            }
            (None, None, None, None) => ScoredResult {
                article_id: row.article_id,
                strategy,
                iteration: row.iteration,
                distribution: None,
                weighted_score: None,
                winner: None,
                flags,
            },
            _ => return Err(parse_err("p1..p4 must be all present or all empty".into())),
        };
        out.push(result);
    }
    Ok(out)
}

/// Recomputes derived columns so a hand-edited table cannot disagree with
/// its own distribution.
fn check_consistent(mut r: ScoredResult, line: usize) -> Result<ScoredResult, ScoredTableError> {
    if let Some(d) = r.distribution {
        r.weighted_score = Some(weighted_score(&d));
        r.winner = Some(winner(&d));
    } else if r.weighted_score.is_some() || r.winner.is_some() {
        return Err(ScoredTableError::Parse {
            line,
            message: "weighted/winner present without a distribution".into(),
        });
    }
    Ok(r)
}
