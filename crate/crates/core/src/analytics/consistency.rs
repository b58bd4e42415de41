use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::corpus::MainPanel;
use crate::parsing::ScoreDistribution;
use crate::prompting::Strategy;
use crate::scoring::ScoredResult;

/// A distribution rounded to whole percentage points, e.g. `10-20-40-30`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProfileKey(pub [u32; 4]);

impl ProfileKey {
    pub fn quantize(d: &ScoreDistribution) -> Self {
        ProfileKey(d.probabilities().map(|p| (p * 100.0).round() as u32))
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Rounding may push the total off 100; more than 2 points is suspect.
    pub fn is_well_formed(&self) -> bool {
        self.total().abs_diff(100) <= 2
    }
}

impl fmt::Display for ProfileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a}-{b}-{c}-{d}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub profile: ProfileKey,
    pub predicted_pct: [f64; 4],
    pub observed_pct: [f64; 4],
    /// Winners of the other iterations, pooled over every occurrence.
    pub tally: [u64; 4],
    /// Sum over the four levels of |predicted - observed|, in points.
    pub mad: f64,
    /// Occurrences of the profile that had at least one other iteration.
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
    /// Mean MAD weighted by occurrences; `None` when no row exists.
    pub weighted_mean: Option<f64>,
    pub unweighted_mean: Option<f64>,
}

/// Compares each stated distribution with what the other iterations of the
/// same article actually chose.
///
/// Every usable iteration is quantized to a profile. For each occurrence,
/// the winners of the remaining usable iterations of that article are
/// tallied against the profile. Tallies are pooled over all occurrences,
/// turned into observed percentages, and compared level by level with the
/// profile's own percentages.
pub fn consistency_mad(results: &[ScoredResult]) -> Result<ConsistencyTable, AnalyticsError> {
    if let Some(first) = results.first() {
        if results.iter().any(|r| r.strategy != first.strategy) {
            return Err(AnalyticsError::MixedStrategies);
        }
    }
    let mut by_article: BTreeMap<&str, Vec<(ProfileKey, u8)>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.is_usable()) {
        let d = r
            .distribution
            .as_ref()
            .expect("usable results have distributions");
        let w = r.winner.expect("usable results have winners");
        by_article
            .entry(r.article_id.as_str())
            .or_default()
            .push((ProfileKey::quantize(d), w));
    }

    let mut pooled: HashMap<ProfileKey, ([u64; 4], u64)> = HashMap::new();
    for iterations in by_article.values() {
        if iterations.len() < 2 {
            continue;
        }
        for (i, (profile, _)) in iterations.iter().enumerate() {
            let entry = pooled.entry(*profile).or_insert(([0; 4], 0));
            entry.1 += 1;
            for (j, (_, winner)) in iterations.iter().enumerate() {
                if i != j {
                    entry.0[*winner as usize - 1] += 1;
                }
            }
        }
    }

    let mut rows: Vec<ConsistencyRow> = pooled
        .into_iter()
        .map(|(profile, (tally, weight))| {
            let total: u64 = tally.iter().sum();
            let observed_pct = tally.map(|t| 100.0 * t as f64 / total as f64);
            // rounding can leave the profile at 99 or 101; rescale so both
            // sides total 100 and the deviation stays within [0, 200]
            let scale = 100.0 / f64::from(profile.total().max(1));
            let predicted_pct = profile.0.map(|v| f64::from(v) * scale);
            let mad = predicted_pct
                .iter()
                .zip(&observed_pct)
                .map(|(p, o)| (p - o).abs())
                .sum::<f64>()
                .min(200.0);
            ConsistencyRow {
                profile,
                predicted_pct,
                observed_pct,
                tally,
                mad,
                weight,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.weight
            .cmp(&a.weight)
            .then_with(|| a.profile.cmp(&b.profile))
    });

    let total_weight: u64 = rows.iter().map(|r| r.weight).sum();
    let weighted_mean = (total_weight > 0)
        .then(|| rows.iter().map(|r| r.mad * r.weight as f64).sum::<f64>() / total_weight as f64);
    let unweighted_mean =
        (!rows.is_empty()).then(|| rows.iter().map(|r| r.mad).sum::<f64>() / rows.len() as f64);
    Ok(ConsistencyTable {
        rows,
        weighted_mean,
        unweighted_mean,
    })
}

/// One strategy's consistency table, overall or for one main panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadSummary {
    pub strategy: Strategy,
    pub panel: Option<MainPanel>,
    pub table: ConsistencyTable,
}
