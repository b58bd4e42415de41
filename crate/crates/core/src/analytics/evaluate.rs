use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{spearman, AnalyticsError};
use crate::corpus::{Article, MainPanel, ProxyTable};
use crate::prompting::Strategy;
use crate::scoring::ArticleScore;

/// Which per-article number is correlated: the mean weighted score or the
/// mean winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Weighted,
    Winner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Series {
    pub strategy: Strategy,
    pub measure: Measure,
}

impl Series {
    pub fn label(&self) -> &'static str {
        match (self.strategy, self.measure) {
            (Strategy::ClassificationTable, Measure::Weighted) => "classification percentages",
            (Strategy::ClassificationTable, Measure::Winner) => "classification winners",
            (Strategy::TokenScore, Measure::Weighted) => "probabilities",
            (Strategy::TokenScore, Measure::Winner) => "probability winners",
            (Strategy::Standard, Measure::Weighted) => "standard (weighted)",
            (Strategy::Standard, Measure::Winner) => "standard",
        }
    }

    fn value(&self, score: &ArticleScore) -> f64 {
        match self.measure {
            Measure::Weighted => score.mean_weighted_score,
            Measure::Winner => score.mean_winner_score,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanCell {
    pub series: Series,
    pub unit: u8,
    pub year: i32,
    pub n: usize,
    pub rho: f64,
}

/// A (unit, year) cell, or a unit's pooled cell when `year` is `None`, with
/// no defined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub series: Series,
    pub unit: u8,
    pub year: Option<i32>,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub series: Series,
    pub unit: u8,
    pub panel: MainPanel,
    /// Unweighted mean of the per-year correlations.
    pub mean_rho_over_years: Option<f64>,
    pub years_used: usize,
    /// One correlation over all years of the unit together.
    pub pooled_rho: Option<f64>,
    pub pooled_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub series: Series,
    /// One correlation over every article of every unit.
    pub pooled_rho: Option<f64>,
    pub pooled_n: usize,
    /// Unweighted mean of the units' year-averaged correlations.
    pub mean_unit_rho: Option<f64>,
    pub units_used: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpearmanReport {
    pub cells: Vec<SpearmanCell>,
    pub skipped: Vec<SkippedCell>,
    pub units: Vec<UnitSummary>,
    pub overall: Vec<OverallSummary>,
}

fn correlate(pairs: &[(f64, f64)]) -> Result<f64, AnalyticsError> {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    spearman(&x, &y)
}

/// Correlates article scores with their departments' proxy means, per
/// (unit, year), per unit, and over everything, for every strategy and
/// measure present in `scores`.
pub fn evaluate(
    scores: &[ArticleScore],
    corpus: &[Article],
    proxy: &ProxyTable,
) -> Result<SpearmanReport, AnalyticsError> {
    let articles: HashMap<&str, &Article> = corpus.iter().map(|a| (a.id.as_str(), a)).collect();

    let mut missing = BTreeSet::new();
    for s in scores {
        let a = articles
            .get(s.article_id.as_str())
            .ok_or_else(|| AnalyticsError::UnknownArticle(s.article_id.clone()))?;
        if proxy.get(&a.department_id, a.unit).is_none() {
            missing.insert(format!("({}, {})", a.department_id, a.unit));
        }
    }
    if !missing.is_empty() {
        return Err(AnalyticsError::MissingProxy(missing.into_iter().collect()));
    }

    let strategies: BTreeSet<Strategy> = scores.iter().map(|s| s.strategy).collect();
    let mut report = SpearmanReport::default();
    for strategy in strategies {
        for measure in [Measure::Weighted, Measure::Winner] {
            let series = Series { strategy, measure };
            evaluate_series(series, scores, &articles, proxy, &mut report);
        }
    }
    Ok(report)
}

fn evaluate_series(
    series: Series,
    scores: &[ArticleScore],
    articles: &HashMap<&str, &Article>,
    proxy: &ProxyTable,
    report: &mut SpearmanReport,
) {
    let mut by_cell: BTreeMap<(u8, i32), Vec<(f64, f64)>> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.strategy == series.strategy) {
        let a = articles[s.article_id.as_str()];
        let gold = proxy
            .get(&a.department_id, a.unit)
            .expect("checked by caller");
        by_cell
            .entry((a.unit, a.year))
            .or_default()
            .push((series.value(s), gold));
    }

    // per unit: the per-year correlations and every (score, proxy) pair
    type UnitAcc = (Vec<f64>, Vec<(f64, f64)>);
    let mut per_unit: BTreeMap<u8, UnitAcc> = BTreeMap::new();
    for ((unit, year), pairs) in &by_cell {
        let slot = per_unit.entry(*unit).or_default();
        slot.1.extend_from_slice(pairs);
        match correlate(pairs) {
            Ok(rho) => {
                slot.0.push(rho);
                report.cells.push(SpearmanCell {
                    series,
                    unit: *unit,
                    year: *year,
                    n: pairs.len(),
                    rho,
                });
            }
            Err(e) => report.skipped.push(SkippedCell {
                series,
                unit: *unit,
                year: Some(*year),
                n: pairs.len(),
                reason: e.to_string(),
            }),
        }
    }

    let mut all_pairs = Vec::new();
    let mut unit_rhos = Vec::new();
    for (unit, (year_rhos, pairs)) in per_unit {
        all_pairs.extend_from_slice(&pairs);
        let mean_rho_over_years =
            (!year_rhos.is_empty()).then(|| year_rhos.iter().sum::<f64>() / year_rhos.len() as f64);
        if let Some(m) = mean_rho_over_years {
            unit_rhos.push(m);
        }
        let pooled_rho = match correlate(&pairs) {
            Ok(rho) => Some(rho),
            Err(e) => {
                report.skipped.push(SkippedCell {
                    series,
                    unit,
                    year: None,
                    n: pairs.len(),
                    reason: e.to_string(),
                });
                None
            }
        };
        report.units.push(UnitSummary {
            series,
            unit,
            panel: MainPanel::for_unit(unit).expect("validated unit"),
            mean_rho_over_years,
            years_used: year_rhos.len(),
            pooled_rho,
            pooled_n: pairs.len(),
        });
    }
    report.overall.push(OverallSummary {
        series,
        pooled_rho: correlate(&all_pairs).ok(),
        pooled_n: all_pairs.len(),
        mean_unit_rho: (!unit_rhos.is_empty())
            .then(|| unit_rhos.iter().sum::<f64>() / unit_rhos.len() as f64),
        units_used: unit_rhos.len(),
    });
}
