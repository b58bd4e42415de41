//! Article corpus and departmental proxy scores.
//!
//! Articles arrive as JSONL (one object per line) or CSV with the fixed
//! header `id,title,abstract,unit,main_panel,department_id,year`. The main
//! panel may be omitted; it is always derivable from the unit.

mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{generate_synthetic_corpus, SyntheticCorpus};

/// Highest REF unit of assessment.
pub const MAX_UNIT: u8 = 34;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Validation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: duplicate article id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: duplicate proxy key ({department_id}, {unit})")]
    DuplicateKey {
        line: usize,
        department_id: String,
        unit: u8,
    },
    #[error("synthetic corpus needs at least one unit")]
    EmptyUnits,
    #[error("invalid synthetic corpus request: {0}")]
    InvalidRequest(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Discipline super-group that selects the system instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MainPanel {
    A,
    B,
    C,
    D,
}

impl MainPanel {
    pub const ALL: [MainPanel; 4] = [MainPanel::A, MainPanel::B, MainPanel::C, MainPanel::D];

    /// Fixed unit grouping: A 1-6, B 7-12, C 13-24, D 25-34.
    pub fn for_unit(unit: u8) -> Option<MainPanel> {
        match unit {
            1..=6 => Some(MainPanel::A),
            7..=12 => Some(MainPanel::B),
            13..=24 => Some(MainPanel::C),
            25..=34 => Some(MainPanel::D),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            MainPanel::A => 'A',
            MainPanel::B => 'B',
            MainPanel::C => 'C',
            MainPanel::D => 'D',
        }
    }
}

impl fmt::Display for MainPanel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for MainPanel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(MainPanel::A),
            "B" => Ok(MainPanel::B),
            "C" => Ok(MainPanel::C),
            "D" => Ok(MainPanel::D),
            other => Err(format!("unknown main panel `{other}`")),
        }
    }
}

/// One scorable journal article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub unit: u8,
    pub main_panel: MainPanel,
    pub department_id: String,
    pub year: i32,
}

/// Unvalidated input row; `main_panel` may be absent or blank.
#[derive(Debug, Deserialize)]
struct ArticleRow {
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    unit: i64,
    #[serde(default)]
    main_panel: Option<String>,
    department_id: String,
    year: i32,
}

impl ArticleRow {
    fn validate(self, line: usize) -> Result<Article, CorpusError> {
        let invalid = |field: &'static str, message: String| CorpusError::Validation {
            line,
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id", "must not be empty".into()));
        }
        if self.title.trim().is_empty() {
            return Err(invalid("title", "must not be empty".into()));
        }
        if self.abstract_text.trim().is_empty() {
            return Err(invalid("abstract", "must not be empty".into()));
        }
        if self.department_id.trim().is_empty() {
            return Err(invalid("department_id", "must not be empty".into()));
        }
        let unit = u8::try_from(self.unit)
            .ok()
            .filter(|u| (1..=MAX_UNIT).contains(u))
            .ok_or_else(|| invalid("unit", format!("{} is outside 1..=34", self.unit)))?;
        let derived = MainPanel::for_unit(unit).expect("unit range checked");
        let main_panel = match self.main_panel.as_deref().map(str::trim) {
            None | Some("") => derived,
            Some(text) => {
                let given = MainPanel::from_str(text).map_err(|e| invalid("main_panel", e))?;
                if given != derived {
                    return Err(invalid(
                        "main_panel",
                        format!("unit {unit} belongs to panel {derived}, not {given}"),
                    ));
                }
                given
            }
        };
        Ok(Article {
            id: self.id,
            title: self.title,
            abstract_text: self.abstract_text,
            unit,
            main_panel,
            department_id: self.department_id,
            year: self.year,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from a file extension; anything but `.csv` is treated as JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Article>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file)),
        CorpusFormat::Csv => read_csv(file),
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Article>, CorpusError> {
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ArticleRow = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        push_unique(&mut articles, &mut seen, row.validate(line_no)?, line_no)?;
    }
    Ok(articles)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Article>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (idx, row) in rdr.deserialize::<ArticleRow>().enumerate() {
        // header is line 1
        let fallback_line = idx + 2;
        let row = row.map_err(|e| CorpusError::Parse {
            line: csv_error_line(&e).unwrap_or(fallback_line),
            message: e.to_string(),
        })?;
        push_unique(
            &mut articles,
            &mut seen,
            row.validate(fallback_line)?,
            fallback_line,
        )?;
    }
    Ok(articles)
}

fn csv_error_line(err: &csv::Error) -> Option<usize> {
    err.position().map(|p| p.line() as usize)
}

fn push_unique(
    articles: &mut Vec<Article>,
    seen: &mut HashSet<String>,
    article: Article,
    line: usize,
) -> Result<(), CorpusError> {
    if !seen.insert(article.id.clone()) {
        return Err(CorpusError::DuplicateId {
            line,
            id: article.id,
        });
    }
    articles.push(article);
    Ok(())
}

pub fn write_jsonl<W: Write>(mut writer: W, articles: &[Article]) -> std::io::Result<()> {
    for article in articles {
        serde_json::to_writer(&mut writer, article)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_csv<W: Write>(writer: W, articles: &[Article]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "id",
        "title",
        "abstract",
        "unit",
        "main_panel",
        "department_id",
        "year",
    ])?;
    for a in articles {
        wtr.write_record([
            a.id.as_str(),
            a.title.as_str(),
            a.abstract_text.as_str(),
            &a.unit.to_string(),
            &a.main_panel.to_string(),
            a.department_id.as_str(),
            &a.year.to_string(),
        ])?;
    }
    wtr.flush()
}

pub fn write_corpus(path: &Path, articles: &[Article]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let result = match CorpusFormat::from_path(path) {
        CorpusFormat::Jsonl => write_jsonl(std::io::BufWriter::new(file), articles),
        CorpusFormat::Csv => write_csv(file, articles),
    };
    result.map_err(|e| CorpusError::io(path, e))
}

/// Drops, within each unit, the `fraction` of articles with the shortest
/// abstracts (character count, ties broken by id). Input order is kept.
pub fn drop_short_abstracts(articles: Vec<Article>, fraction: f64) -> Vec<Article> {
    let fraction = fraction.clamp(0.0, 1.0);
    let mut by_unit: BTreeMap<u8, Vec<&Article>> = BTreeMap::new();
    for a in &articles {
        by_unit.entry(a.unit).or_default().push(a);
    }
    let mut dropped: HashSet<String> = HashSet::new();
    for members in by_unit.values_mut() {
        let cut = (members.len() as f64 * fraction).floor() as usize;
        members.sort_by(|a, b| {
            a.abstract_text
                .chars()
                .count()
                .cmp(&b.abstract_text.chars().count())
                .then_with(|| a.id.cmp(&b.id))
        });
        dropped.extend(members.iter().take(cut).map(|a| a.id.clone()));
    }
    articles
        .into_iter()
        .filter(|a| !dropped.contains(&a.id))
        .collect()
}

/// Articles per unit and per main panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub articles: usize,
    pub per_unit: BTreeMap<u8, usize>,
    pub per_panel: BTreeMap<MainPanel, usize>,
}

impl CorpusSummary {
    pub fn of(articles: &[Article]) -> Self {
        let mut per_unit = BTreeMap::new();
        let mut per_panel = BTreeMap::new();
        for a in articles {
            *per_unit.entry(a.unit).or_insert(0) += 1;
            *per_panel.entry(a.main_panel).or_insert(0) += 1;
        }
        CorpusSummary {
            articles: articles.len(),
            per_unit,
            per_panel,
        }
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let units = self.per_unit.len();
        writeln!(
            f,
            "{} article{}, {} unit{}",
            self.articles,
            if self.articles == 1 { "" } else { "s" },
            units,
            if units == 1 { "" } else { "s" }
        )?;
        for (panel, count) in &self.per_panel {
            writeln!(f, "  panel {panel}: {count}")?;
        }
        for (unit, count) in &self.per_unit {
            writeln!(f, "  unit {unit:>2}: {count}")?;
        }
        Ok(())
    }
}

/// Departmental mean quality score, used as the stand-in for article-level
/// expert scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub department_id: String,
    pub unit: u8,
    pub mean_score: f64,
}

/// Proxy scores keyed by `(department_id, unit)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProxyTable {
    scores: BTreeMap<(String, u8), f64>,
}

impl ProxyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts after checking the score range and key uniqueness. `line` is
    /// only used in error messages.
    pub fn insert(&mut self, entry: ProxyScore, line: usize) -> Result<(), CorpusError> {
        if !(1..=MAX_UNIT).contains(&entry.unit) {
            return Err(CorpusError::Validation {
                line,
                field: "unit",
                message: format!("{} is outside 1..=34", entry.unit),
            });
        }
        if !entry.mean_score.is_finite() || !(1.0..=4.0).contains(&entry.mean_score) {
            return Err(CorpusError::Validation {
                line,
                field: "mean",
                message: format!("{} is outside [1, 4]", entry.mean_score),
            });
        }
        let key = (entry.department_id.clone(), entry.unit);
        if self.scores.contains_key(&key) {
            return Err(CorpusError::DuplicateKey {
                line,
                department_id: entry.department_id,
                unit: entry.unit,
            });
        }
        self.scores.insert(key, entry.mean_score);
        Ok(())
    }

    pub fn get(&self, department_id: &str, unit: u8) -> Option<f64> {
        self.scores.get(&(department_id.to_string(), unit)).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ProxyScore> + '_ {
        self.scores.iter().map(|((dept, unit), mean)| ProxyScore {
            department_id: dept.clone(),
            unit: *unit,
            mean_score: *mean,
        })
    }

    pub fn as_map(&self) -> &BTreeMap<(String, u8), f64> {
        &self.scores
    }
}

#[derive(Debug, Deserialize)]
struct ProxyRow {
    dept: String,
    unit: i64,
    mean: f64,
}

pub fn load_proxy_scores(path: &Path) -> Result<ProxyTable, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_proxy_csv(file)
}

pub fn read_proxy_csv<R: Read>(reader: R) -> Result<ProxyTable, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut table = ProxyTable::new();
    for (idx, row) in rdr.deserialize::<ProxyRow>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| CorpusError::Parse {
            line: csv_error_line(&e).unwrap_or(line),
            message: e.to_string(),
        })?;
        let unit = u8::try_from(row.unit).map_err(|_| CorpusError::Validation {
            line,
            field: "unit",
            message: format!("{} is outside 1..=34", row.unit),
        })?;
        table.insert(
            ProxyScore {
                department_id: row.dept,
                unit,
                mean_score: row.mean,
            },
            line,
        )?;
    }
    Ok(table)
}

pub fn write_proxy_csv<W: Write>(writer: W, table: &ProxyTable) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["dept", "unit", "mean"])?;
    for entry in table.iter() {
        wtr.write_record([
            entry.department_id.as_str(),
            &entry.unit.to_string(),
            &entry.mean_score.to_string(),
        ])?;
    }
    wtr.flush()
}

/// Lookup of articles by id.
pub fn index_by_id(articles: &[Article]) -> HashMap<&str, &Article> {
    articles.iter().map(|a| (a.id.as_str(), a)).collect()
}
