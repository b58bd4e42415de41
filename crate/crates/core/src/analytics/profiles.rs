use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ProfileKey;
use crate::corpus::MainPanel;
use crate::prompting::Strategy;
use crate::scoring::ScoredResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub quantized: ProfileKey,
    pub count: u64,
    /// Set when rounding moved the total more than 2 points off 100.
    pub off_total: bool,
}

/// The `k` most frequent quantized profiles among usable results for
/// articles in `panel`, by count descending then profile ascending.
pub fn profile_histogram(
    results: &[ScoredResult],
    panel_of: &HashMap<&str, MainPanel>,
    panel: MainPanel,
    k: usize,
) -> Vec<Profile> {
    let mut counts: HashMap<ProfileKey, u64> = HashMap::new();
    for r in results.iter().filter(|r| r.is_usable()) {
        if panel_of.get(r.article_id.as_str()) != Some(&panel) {
            continue;
        }
        let d = r
            .distribution
            .as_ref()
            .expect("usable results have distributions");
        *counts.entry(ProfileKey::quantize(d)).or_insert(0) += 1;
    }
    let mut profiles: Vec<Profile> = counts
        .into_iter()
        .map(|(quantized, count)| Profile {
            quantized,
            count,
            off_total: !quantized.is_well_formed(),
        })
        .collect();
    profiles.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.quantized.cmp(&b.quantized))
    });
    profiles.truncate(k);
    profiles
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub strategy: Strategy,
    pub panel: MainPanel,
    pub profiles: Vec<Profile>,
}

/// Panels that have at least one result.
pub fn panels_present(
    results: &[ScoredResult],
    panel_of: &HashMap<&str, MainPanel>,
) -> Vec<MainPanel> {
    let present: HashSet<MainPanel> = results
        .iter()
        .filter_map(|r| panel_of.get(r.article_id.as_str()).copied())
        .collect();
    MainPanel::ALL
        .into_iter()
        .filter(|p| present.contains(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsing::ScoreDistribution;

    fn result(article: &str, iteration: u32, pct: [u32; 4]) -> ScoredResult {
        ScoredResult::from_distribution(
            article,
            Strategy::ClassificationTable,
            iteration,
            ScoreDistribution::from_weights(pct.map(f64::from)).unwrap(),
            vec![],
        )
    }

    fn panel_map(ids: &[&'static str], panel: MainPanel) -> HashMap<&'static str, MainPanel> {
        ids.iter().map(|id| (*id, panel)).collect()
    }

    #[test]
    fn majority_profile_ranks_first() {
        let mut results = Vec::new();
        for i in 0..6 {
            results.push(result("a", i, [10, 20, 40, 30]));
        }
        results.push(result("a", 7, [0, 10, 60, 30]));
        results.push(result("a", 8, [0, 10, 60, 30]));
        results.push(result("a", 9, [5, 15, 50, 30]));
        results.push(result("a", 10, [10, 10, 40, 40]));
        let top = profile_histogram(&results, &panel_map(&["a"], MainPanel::A), MainPanel::A, 20);
        assert_eq!(top[0].quantized, ProfileKey([10, 20, 40, 30]));
        assert_eq!(top[0].count, 6);
        assert_eq!(top.len(), 4);
    }

    #[test]
    fn ties_are_lexicographic() {
        let results = vec![
            result("a", 1, [10, 20, 40, 30]),
            result("a", 2, [0, 10, 60, 30]),
        ];
        let top = profile_histogram(&results, &panel_map(&["a"], MainPanel::A), MainPanel::A, 5);
        assert_eq!(top[0].quantized, ProfileKey([0, 10, 60, 30]));
        assert_eq!(top[1].quantized, ProfileKey([10, 20, 40, 30]));
    }

    #[test]
    fn truncates_to_k_and_filters_panel() {
        let results = vec![
            result("a", 1, [10, 20, 40, 30]),
            result("a", 2, [0, 10, 60, 30]),
            result("b", 1, [0, 0, 0, 100]),
        ];
        let mut panels = panel_map(&["a"], MainPanel::A);
        panels.insert("b", MainPanel::D);
        assert_eq!(
            profile_histogram(&results, &panels, MainPanel::A, 1).len(),
            1
        );
        let d = profile_histogram(&results, &panels, MainPanel::D, 10);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].quantized, ProfileKey([0, 0, 0, 100]));
        assert!(profile_histogram(&results, &panels, MainPanel::B, 10).is_empty());
    }
}
