//! Rank correlation against the proxy, internal consistency of the stated
//! probabilities, and profile frequency tables.

mod consistency;
mod evaluate;
mod profiles;
pub mod report;
mod spearman;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, MainPanel, ProxyTable};
use crate::prompting::Strategy;
use crate::scoring::{aggregate_all, ScoredResult, ScoringError};

pub use consistency::{consistency_mad, ConsistencyRow, ConsistencyTable, MadSummary, ProfileKey};
pub use evaluate::{
    evaluate, Measure, OverallSummary, Series, SkippedCell, SpearmanCell, SpearmanReport,
    UnitSummary,
};
pub use profiles::{panels_present, profile_histogram, Profile, ProfileTable};
pub use spearman::{average_ranks, spearman};

/// Number of profiles listed per panel unless asked otherwise.
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 pairs, have {n}")]
    TooFew { n: usize },
    #[error("correlation undefined: one side is constant")]
    Constant,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("scores reference unknown article `{0}`")]
    UnknownArticle(String),
    #[error("no proxy score for department/unit {}", .0.join(", "))]
    MissingProxy(Vec<String>),
    #[error("scored table is empty")]
    EmptyResults,
    #[error("results mix strategies")]
    MixedStrategies,
}

/// An article left out of the evaluation because none of its iterations
/// could be used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub article_id: String,
    pub strategy: Strategy,
    pub flagged_iterations: usize,
}

/// Iteration counts per strategy, with how many carried each flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub strategy: Strategy,
    pub iterations: usize,
    pub usable: usize,
    pub flags: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategies: Vec<Strategy>,
    pub spearman: SpearmanReport,
    pub consistency: Vec<MadSummary>,
    pub profiles: Vec<ProfileTable>,
    pub flag_counts: Vec<FlagCounts>,
    pub exclusions: Vec<Exclusion>,
    pub notes: Vec<String>,
}

/// Strategies whose stated probabilities are checked for consistency and
/// listed as profiles.
pub const PROBABILISTIC_STRATEGIES: [Strategy; 2] =
    [Strategy::ClassificationTable, Strategy::TokenScore];

/// Full evaluation of a scored table: aggregation, correlation, consistency
/// tables overall and per panel, and top-`k` profiles per panel.
pub fn build_report(
    results: &[ScoredResult],
    corpus: &[Article],
    proxy: &ProxyTable,
    top_k: usize,
) -> Result<EvalReport, AnalyticsError> {
    if results.is_empty() {
        return Err(AnalyticsError::EmptyResults);
    }
    let panel_of: HashMap<&str, MainPanel> = corpus
        .iter()
        .map(|a| (a.id.as_str(), a.main_panel))
        .collect();
    if let Some(r) = results
        .iter()
        .find(|r| !panel_of.contains_key(r.article_id.as_str()))
    {
        return Err(AnalyticsError::UnknownArticle(r.article_id.clone()));
    }

    let (scores, unusable) = aggregate_all(results);
    let exclusions = unusable
        .into_iter()
        .filter_map(|e| match e {
            ScoringError::Unusable {
                article_id,
                strategy,
                flagged,
            } => Some(Exclusion {
                article_id,
                strategy,
                flagged_iterations: flagged,
            }),
            _ => None,
        })
        .collect();
    let spearman = evaluate(&scores, corpus, proxy)?;

    let strategies: Vec<Strategy> = results
        .iter()
        .map(|r| r.strategy)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut consistency = Vec::new();
    let mut profiles = Vec::new();
    let mut notes = Vec::new();
    for strategy in PROBABILISTIC_STRATEGIES {
        if !strategies.contains(&strategy) {
            notes.push(format!(
                "no {strategy} results: its consistency and profile tables are absent"
            ));
            continue;
        }
        let subset: Vec<ScoredResult> = results
            .iter()
            .filter(|r| r.strategy == strategy)
            .cloned()
            .collect();
        consistency.push(MadSummary {
            strategy,
            panel: None,
            table: consistency_mad(&subset)?,
        });
        for panel in panels_present(&subset, &panel_of) {
            let in_panel: Vec<ScoredResult> = subset
                .iter()
                .filter(|r| panel_of.get(r.article_id.as_str()) == Some(&panel))
                .cloned()
                .collect();
            consistency.push(MadSummary {
                strategy,
                panel: Some(panel),
                table: consistency_mad(&in_panel)?,
            });
            profiles.push(ProfileTable {
                strategy,
                panel,
                profiles: profile_histogram(&subset, &panel_of, panel, top_k),
            });
        }
    }

    let flag_counts = strategies
        .iter()
        .map(|&strategy| {
            let mut counts = FlagCounts {
                strategy,
                iterations: 0,
                usable: 0,
                flags: BTreeMap::new(),
            };
            for r in results.iter().filter(|r| r.strategy == strategy) {
                counts.iterations += 1;
                counts.usable += usize::from(r.is_usable());
                for f in &r.flags {
                    *counts.flags.entry(f.to_string()).or_insert(0) += 1;
                }
            }
            counts
        })
        .collect();

    Ok(EvalReport {
        strategies,
        spearman,
        consistency,
        profiles,
        flag_counts,
        exclusions,
        notes,
    })
}
