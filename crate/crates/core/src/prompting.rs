//! System instructions and user prompts for the three scoring strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, MainPanel};

/// First line of every shipped placeholder instruction file.
pub const PLACEHOLDER_MARKER: &str = "# PLACEHOLDER";

pub const TOKEN_MAX_TOKENS: u32 = 5;
pub const TOKEN_TOP_LOGPROBS: u8 = 5;
pub const STANDARD_MAX_TOKENS: u32 = 1000;
pub const CLASSIFICATION_MAX_TOKENS: u32 = 1000;

const CLASSIFICATION_TEMPLATE: &str = "\
Given the following article, estimate the likelihood (in percentages) that it belongs to each of the four quality categories and then stop. The total should add up to 100%.

Categories:
1*
2*
3*
4*

Respond with a list like:
1*: __%
2*: __%
3*: __%
4*: __%

Article:
{title}
{abstract}";

const TOKEN_TEMPLATE: &str = "\
Score this article, giving your answer as one of 1*, 2*, 3*, or 4* then stop:
{title}
Abstract
{abstract}";

const STANDARD_TEMPLATE: &str = "\
Score this journal article:
{title}
Abstract
{abstract}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no system instructions loaded for main panel {0}")]
    MissingPanel(MainPanel),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} still holds placeholder text; supply real instructions or allow placeholders explicitly")]
    Placeholder(String),
    #[error("instruction file {0} is empty")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ClassificationTable,
    TokenScore,
    Standard,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::ClassificationTable,
        Strategy::TokenScore,
        Strategy::Standard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ClassificationTable => "classification_table",
            Strategy::TokenScore => "token_score",
            Strategy::Standard => "standard",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification_table" | "classification" => Ok(Strategy::ClassificationTable),
            "token_score" | "token" => Ok(Strategy::TokenScore),
            "standard" => Ok(Strategy::Standard),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Everything needed to issue one chat request for one article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub strategy: Strategy,
    pub max_response_tokens: u32,
    pub logprobs_requested: bool,
    pub top_logprobs: u8,
}

/// One system instruction text per main panel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SystemInstructionSet {
    texts: BTreeMap<MainPanel, String>,
}

impl SystemInstructionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, panel: MainPanel, text: impl Into<String>) -> Self {
        self.texts.insert(panel, text.into());
        self
    }

    pub fn insert(&mut self, panel: MainPanel, text: impl Into<String>) {
        self.texts.insert(panel, text.into());
    }

    pub fn get(&self, panel: MainPanel) -> Result<&str, PromptError> {
        self.texts
            .get(&panel)
            .map(String::as_str)
            .ok_or(PromptError::MissingPanel(panel))
    }

    pub fn is_complete(&self) -> bool {
        MainPanel::ALL.iter().all(|p| self.texts.contains_key(p))
    }

    pub fn file_name(panel: MainPanel) -> String {
        format!("panel_{}.txt", panel.letter().to_ascii_lowercase())
    }

    /// Loads `panel_a.txt` .. `panel_d.txt` from `dir`. All four must exist.
    /// Files starting with [`PLACEHOLDER_MARKER`] are refused unless
    /// `allow_placeholders` is set.
    pub fn load_dir(dir: &Path, allow_placeholders: bool) -> Result<Self, PromptError> {
        let mut set = SystemInstructionSet::new();
        for panel in MainPanel::ALL {
            let path = dir.join(Self::file_name(panel));
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if text.trim().is_empty() {
                return Err(PromptError::Empty(path.display().to_string()));
            }
            if text.starts_with(PLACEHOLDER_MARKER) && !allow_placeholders {
                return Err(PromptError::Placeholder(path.display().to_string()));
            }
            set.insert(panel, text.trim_end().to_string());
        }
        Ok(set)
    }
}

fn render(template: &str, article: &Article) -> String {
    // Title first so a literal "{abstract}" inside a title is left alone.
    let (head, tail) = template
        .split_once("{abstract}")
        .expect("templates contain an abstract slot");
    let head = head.replacen("{title}", &article.title, 1);
    format!("{head}{}{tail}", article.abstract_text)
}

pub fn build_classification_prompt(
    article: &Article,
    instructions: &SystemInstructionSet,
) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        system_text: instructions.get(article.main_panel)?.to_string(),
        user_text: render(CLASSIFICATION_TEMPLATE, article),
        strategy: Strategy::ClassificationTable,
        max_response_tokens: CLASSIFICATION_MAX_TOKENS,
        logprobs_requested: false,
        top_logprobs: 0,
    })
}

pub fn build_token_prompt(
    article: &Article,
    instructions: &SystemInstructionSet,
) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        system_text: instructions.get(article.main_panel)?.to_string(),
        user_text: render(TOKEN_TEMPLATE, article),
        strategy: Strategy::TokenScore,
        max_response_tokens: TOKEN_MAX_TOKENS,
        logprobs_requested: true,
        top_logprobs: TOKEN_TOP_LOGPROBS,
    })
}

pub fn build_standard_prompt(
    article: &Article,
    instructions: &SystemInstructionSet,
) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        system_text: instructions.get(article.main_panel)?.to_string(),
        user_text: render(STANDARD_TEMPLATE, article),
        strategy: Strategy::Standard,
        max_response_tokens: STANDARD_MAX_TOKENS,
        logprobs_requested: false,
        top_logprobs: 0,
    })
}

pub fn build_prompt(
    strategy: Strategy,
    article: &Article,
    instructions: &SystemInstructionSet,
) -> Result<PromptBundle, PromptError> {
    match strategy {
        Strategy::ClassificationTable => build_classification_prompt(article, instructions),
        Strategy::TokenScore => build_token_prompt(article, instructions),
        Strategy::Standard => build_standard_prompt(article, instructions),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(panel_unit: u8) -> Article {
        Article {
            id: "a1".into(),
            title: "T".into(),
            abstract_text: "A".into(),
            unit: panel_unit,
            main_panel: MainPanel::for_unit(panel_unit).unwrap(),
            department_id: "U1".into(),
            year: 2019,
        }
    }

    fn abc() -> SystemInstructionSet {
        SystemInstructionSet::new()
            .with(MainPanel::A, "sys A")
            .with(MainPanel::B, "sys B")
            .with(MainPanel::C, "sys C")
    }

    fn full() -> SystemInstructionSet {
        abc().with(MainPanel::D, "sys D")
    }

    #[test]
    fn classification_prompt_contents() {
        let bundle = build_classification_prompt(&article(8), &full()).unwrap();
        assert!(bundle
            .user_text
            .contains("The total should add up to 100%."));
        assert!(bundle.user_text.contains("\nT\nA"));
        assert_eq!(bundle.system_text, "sys B");
        assert_eq!(bundle.strategy, Strategy::ClassificationTable);
        assert!(!bundle.logprobs_requested);
    }

    #[test]
    fn classification_prompt_is_deterministic() {
        let a = build_classification_prompt(&article(8), &full()).unwrap();
        let b = build_classification_prompt(&article(8), &full()).unwrap();
        assert_eq!(a.user_text.as_bytes(), b.user_text.as_bytes());
    }

    #[test]
    fn missing_panel_is_an_error() {
        assert!(matches!(
            build_classification_prompt(&article(30), &abc()),
            Err(PromptError::MissingPanel(MainPanel::D))
        ));
        assert!(matches!(
            build_token_prompt(&article(30), &abc()),
            Err(PromptError::MissingPanel(MainPanel::D))
        ));
        assert!(matches!(
            build_standard_prompt(&article(30), &abc()),
            Err(PromptError::MissingPanel(MainPanel::D))
        ));
    }

    #[test]
    fn token_prompt_requests_logprobs() {
        let bundle = build_token_prompt(&article(2), &full()).unwrap();
        assert_eq!(bundle.max_response_tokens, 5);
        assert!(bundle.logprobs_requested);
        assert_eq!(bundle.top_logprobs, 5);
    }

    #[test]
    fn standard_prompt_shape() {
        let bundle = build_standard_prompt(&article(15), &full()).unwrap();
        assert!(bundle.user_text.starts_with("Score this journal article:"));
        assert_eq!(bundle.max_response_tokens, 1000);
        assert_eq!(
            bundle,
            build_standard_prompt(&article(15), &full()).unwrap()
        );
    }

    #[test]
    fn only_title_and_abstract_reach_the_prompt() {
        let mut a = article(8);
        a.department_id = "SECRET-DEPT".into();
        a.id = "SECRET-ID".into();
        for strategy in Strategy::ALL {
            let bundle = build_prompt(strategy, &a, &full()).unwrap();
            assert!(!bundle.user_text.contains("SECRET"));
            assert!(!bundle.system_text.contains("SECRET"));
        }
    }

    #[test]
    fn placeholder_slots_in_titles_survive() {
        let mut a = article(8);
        a.title = "On {abstract} and {title}".into();
        let bundle = build_token_prompt(&a, &full()).unwrap();
        assert!(bundle
            .user_text
            .contains("On {abstract} and {title}\nAbstract\nA"));
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("token".parse::<Strategy>().unwrap(), Strategy::TokenScore);
        assert_eq!(
            "classification".parse::<Strategy>().unwrap(),
            Strategy::ClassificationTable
        );
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn load_dir_refuses_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        for panel in MainPanel::ALL {
            std::fs::write(
                dir.path().join(SystemInstructionSet::file_name(panel)),
                format!("{PLACEHOLDER_MARKER}\ntext {panel}\n"),
            )
            .unwrap();
        }
        assert!(matches!(
            SystemInstructionSet::load_dir(dir.path(), false),
            Err(PromptError::Placeholder(_))
        ));
        let set = SystemInstructionSet::load_dir(dir.path(), true).unwrap();
        assert!(set.is_complete());
    }

    #[test]
    fn load_dir_requires_all_four() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("panel_a.txt"), "real text").unwrap();
        assert!(matches!(
            SystemInstructionSet::load_dir(dir.path(), false),
            Err(PromptError::Io { .. })
        ));
    }
}
