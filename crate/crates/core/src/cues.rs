//! Cue lexicons: configuration, compilation, and matching.
//!
//! A lexicon holds three cue categories (person roles, scene elements and
//! negative cues) plus an age recognizer. Entries match either a token's lemma
//! exactly or its case-folded surface form; surface entries exist for
//! misspellings that a lemmatizer leaves untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coref::AgreementFeatures;
use crate::doc::Document;

/// Sanitized demo lexicon shipped with the crate.
pub const DEMO_LEXICON_TOML: &str = include_str!("../data/demo_lexicon.toml");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to parse lexicon config: {0}")]
    Parse(String),
    #[error("failed to read lexicon config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{category} entry #{index}: exactly one of `lemma` or `surface` must be set")]
    LemmaXorSurface { category: Category, index: usize },
    #[error("duplicate entry {entry:?} in category {category}")]
    Duplicate { category: Category, entry: String },
    #[error("entry {entry:?} appears in both {first} and {second}")]
    ConflictingCategory {
        entry: String,
        first: Category,
        second: Category,
    },
    #[error("invalid age config: {0}")]
    InvalidAge(String),
    #[error("lexicon draft is marked review_pending; review it and remove the marker before use")]
    PendingReview,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PersonRole,
    Scene,
    Negative,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::PersonRole, Category::Scene, Category::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::PersonRole => "person_role",
            Category::Scene => "scene",
            Category::Negative => "negative",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryConfig {
    #[serde(default)]
    pub entries: Vec<EntryConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoriesConfig {
    #[serde(default)]
    pub person_role: CategoryConfig,
    #[serde(default)]
    pub scene: CategoryConfig,
    #[serde(default)]
    pub negative: CategoryConfig,
}

impl CategoriesConfig {
    pub fn get(&self, category: Category) -> &CategoryConfig {
        match category {
            Category::PersonRole => &self.person_role,
            Category::Scene => &self.scene,
            Category::Negative => &self.negative,
        }
    }

    pub fn get_mut(&mut self, category: Category) -> &mut CategoryConfig {
        match category {
            Category::PersonRole => &mut self.person_role,
            Category::Scene => &mut self.scene,
            Category::Negative => &mut self.negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgeConfig {
    pub max_flagged_age: u32,
    pub number_words: BTreeMap<String, u32>,
    pub age_lexemes: Vec<String>,
    /// Suffixes accepted after digits in a single token, e.g. `yo` in `15yo`.
    pub age_suffixes: Vec<String>,
    pub allow_edit_distance_1: bool,
}

impl Default for AgeConfig {
    fn default() -> Self {
        const WORDS: [&str; 19] = [
            "one",
            "two",
            "three",
            "four",
            "five",
            "six",
            "seven",
            "eight",
            "nine",
            "ten",
            "eleven",
            "twelve",
            "thirteen",
            "fourteen",
            "fifteen",
            "sixteen",
            "seventeen",
            "eighteen",
            "nineteen",
        ];
        let mut number_words: BTreeMap<String, u32> = WORDS.iter().zip(1..).map(|(w, n)| (w.to_string(), n)).collect();
        for (w, n) in [("twenty", 20), ("thirty", 30), ("forty", 40), ("fifty", 50)] {
            number_words.insert(w.to_string(), n);
        }
        AgeConfig {
            max_flagged_age: 17,
            number_words,
            age_lexemes: vec!["year".into(), "years".into(), "old".into()],
            age_suffixes: vec!["yo".into(), "y.o".into(), "y.o.".into(), "yrs".into(), "yr".into()],
            allow_edit_distance_1: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexiconConfig {
    /// Set on induced drafts; such configs refuse to compile.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub review_pending: bool,
    #[serde(default)]
    pub categories: CategoriesConfig,
    #[serde(default)]
    pub age: AgeConfig,
    #[serde(default)]
    pub agreement: BTreeMap<String, AgreementFeatures>,
}

impl LexiconConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, LexiconError> {
        toml::from_str(s).map_err(|e| LexiconError::Parse(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, LexiconError> {
        serde_json::from_str(s).map_err(|e| LexiconError::Parse(e.to_string()))
    }

    /// Loads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn demo() -> Self {
        Self::from_toml_str(DEMO_LEXICON_TOML).expect("bundled demo lexicon parses")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("lexicon config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Lemma,
    Surface,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub text: String,
    pub kind: MatchKind,
    pub category: Category,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CueHit {
    pub token_index: usize,
    pub matched_entry: String,
    pub category: Category,
    pub match_kind: MatchKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeForm {
    Numeric,
    Verbal,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeHit {
    /// Token range of the number expression, end-exclusive.
    pub token_span: (usize, usize),
    pub parsed_age: u32,
    pub form: AgeForm,
    pub flagged: bool,
}

/// Immutable matcher built from a [`LexiconConfig`].
#[derive(Debug, Clone)]
pub struct CompiledLexicon {
    entries: Vec<LexEntry>,
    by_lemma: HashMap<String, usize>,
    by_surface: HashMap<String, usize>,
    age: AgeConfig,
    age_lexemes: BTreeSet<String>,
    age_suffixes: BTreeSet<String>,
    agreement: BTreeMap<String, AgreementFeatures>,
    warnings: Vec<String>,
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Validates a config and builds the lemma and surface indexes.
pub fn compile_lexicon(config: &LexiconConfig) -> Result<CompiledLexicon, LexiconError> {
    if config.review_pending {
        return Err(LexiconError::PendingReview);
    }
    let age = &config.age;
    if age.max_flagged_age < 1 {
        return Err(LexiconError::InvalidAge("max_flagged_age must be >= 1".into()));
    }
    if let Some((w, _)) = age.number_words.iter().find(|(_, &v)| v < 1) {
        return Err(LexiconError::InvalidAge(format!(
            "number word {w:?} must map to a value >= 1"
        )));
    }

    let mut entries = Vec::new();
    let mut by_lemma = HashMap::new();
    let mut by_surface = HashMap::new();
    let mut warnings = Vec::new();

    for category in Category::ALL {
        let cat = config.categories.get(category);
        if cat.entries.is_empty() {
            tracing::warn!(%category, "lexicon category is empty");
            warnings.push(format!("category {category} is empty"));
        }
        for (index, e) in cat.entries.iter().enumerate() {
            let (text, kind, index_map) = match (&e.lemma, &e.surface) {
                (Some(l), None) => (l.clone(), MatchKind::Lemma, &mut by_lemma),
                (None, Some(s)) => (fold(s), MatchKind::Surface, &mut by_surface),
                _ => return Err(LexiconError::LemmaXorSurface { category, index }),
            };
            if let Some(&prev) = index_map.get(&text) {
                let prev: &LexEntry = &entries[prev];
                return Err(if prev.category == category {
                    LexiconError::Duplicate { category, entry: text }
                } else {
                    LexiconError::ConflictingCategory {
                        entry: text,
                        first: prev.category,
                        second: category,
                    }
                });
            }
            index_map.insert(text.clone(), entries.len());
            entries.push(LexEntry {
                text,
                kind,
                category,
                note: e.note.clone(),
            });
        }
    }

    Ok(CompiledLexicon {
        entries,
        by_lemma,
        by_surface,
        age_lexemes: age.age_lexemes.iter().map(|s| fold(s)).collect(),
        age_suffixes: age.age_suffixes.iter().map(|s| fold(s)).collect(),
        age: age.clone(),
        agreement: config.agreement.clone(),
        warnings,
    })
}

impl CompiledLexicon {
    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn lemma_pattern_count(&self) -> usize {
        self.by_lemma.len()
    }

    pub fn surface_pattern_count(&self) -> usize {
        self.by_surface.len()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn age_config(&self) -> &AgeConfig {
        &self.age
    }

    pub fn agreement(&self) -> &BTreeMap<String, AgreementFeatures> {
        &self.agreement
    }

    fn lookup(&self, lemma: &str, surface: &str) -> Option<(&LexEntry, MatchKind)> {
        if let Some(&i) = self.by_lemma.get(lemma) {
            return Some((&self.entries[i], MatchKind::Lemma));
        }
        self.by_surface
            .get(&fold(surface))
            .map(|&i| (&self.entries[i], MatchKind::Surface))
    }

    fn is_age_lexeme(&self, lemma: &str, surface: &str) -> bool {
        self.age_lexemes.contains(&fold(lemma)) || self.age_lexemes.contains(&fold(surface))
    }

    fn number_word(&self, word: &str) -> Option<u32> {
        if let Some(&v) = self.age.number_words.get(word) {
            return Some(v);
        }
        if !self.age.allow_edit_distance_1 || word.chars().count() < 4 {
            return None;
        }
        // closest word at distance 1; BTreeMap order breaks ties
        self.age
            .number_words
            .iter()
            .find(|(w, _)| within_one_edit(w, word))
            .map(|(_, &v)| v)
    }
}

/// One hit per token whose lemma or folded surface matches an entry, ordered
/// by token index. Lemma matches take precedence.
pub fn match_cues(doc: &Document, lexicon: &CompiledLexicon) -> Vec<CueHit> {
    doc.tokens
        .iter()
        .filter_map(|t| {
            lexicon.lookup(&t.lemma, &t.surface).map(|(entry, kind)| CueHit {
                token_index: t.index,
                matched_entry: entry.text.clone(),
                category: entry.category,
                match_kind: kind,
            })
        })
        .collect()
}

/// Optimal string alignment distance: Levenshtein plus adjacent transposition.
pub fn osa_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = v;
        }
    }
    d[n][m]
}

/// `osa_distance(a, b) <= 1` without building the table.
pub fn within_one_edit(a: &str, b: &str) -> bool {
    if a.is_ascii() && b.is_ascii() {
        return one_edit(a.as_bytes(), b.as_bytes());
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    one_edit(&a, &b)
}

fn one_edit<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if long.len() - short.len() > 1 {
        return false;
    }
    let p = short.iter().zip(long).take_while(|(x, y)| x == y).count();
    if p == short.len() {
        return true;
    }
    if short.len() == long.len() {
        short[p + 1..] == long[p + 1..]
            || (p + 1 < short.len()
                && short[p] == long[p + 1]
                && short[p + 1] == long[p]
                && short[p + 2..] == long[p + 2..])
    } else {
        short[p..] == long[p + 1..]
    }
}

fn split_digits(s: &str) -> Option<(u32, &str)> {
    let digits_end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    if digits_end == 0 || digits_end > 2 {
        return None;
    }
    let value: u32 = s[..digits_end].parse().ok()?;
    (1..=99).contains(&value).then_some((value, &s[digits_end..]))
}

/// Finds numeric, verbal and mixed age expressions.
///
/// Numeric and verbal numbers need an age lexeme within two tokens in the
/// same sentence; mixed tokens such as `15yo` carry their own suffix.
pub fn detect_age_expressions(doc: &Document, lexicon: &CompiledLexicon) -> Vec<AgeHit> {
    let mut hits = Vec::new();
    let max = lexicon.age.max_flagged_age;
    for sentence in &doc.sentences {
        let near_lexeme = |i: usize| {
            let lo = i.saturating_sub(2).max(sentence.start);
            let hi = (i + 3).min(sentence.end);
            (lo..hi).any(|j| j != i && lexicon.is_age_lexeme(&doc.tokens[j].lemma, &doc.tokens[j].surface))
        };
        for t in &doc.tokens[sentence.range()] {
            let surface = fold(&t.surface);
            let parsed = if let Some((value, rest)) = split_digits(&surface) {
                if rest.is_empty() {
                    near_lexeme(t.index).then_some((value, AgeForm::Numeric))
                } else {
                    is_age_suffix(lexicon, rest).then_some((value, AgeForm::Mixed))
                }
            } else if let Some(v) = lexicon
                .number_word(&surface)
                .or_else(|| lexicon.number_word(&fold(&t.lemma)))
            {
                near_lexeme(t.index).then_some((v, AgeForm::Verbal))
            } else if let Some((head, rest)) = surface.split_once('-') {
                // hyphenated compounds such as "fifteen-year-old"
                lexicon
                    .number_word(head)
                    .filter(|_| rest.split('-').any(|p| lexicon.age_lexemes.contains(p)))
                    .map(|v| (v, AgeForm::Verbal))
            } else {
                None
            };
            if let Some((parsed_age, form)) = parsed {
                hits.push(AgeHit {
                    token_span: (t.index, t.index + 1),
                    parsed_age,
                    form,
                    flagged: parsed_age <= max,
                });
            }
        }
    }
    hits
}

fn is_age_suffix(lexicon: &CompiledLexicon, rest: &str) -> bool {
    let rest = rest.trim_start_matches(|c: char| !c.is_alphanumeric());
    if rest.is_empty() {
        return false;
    }
    let known = |s: &str| lexicon.age_suffixes.contains(s) || lexicon.age_lexemes.contains(s);
    if known(rest) || known(&rest.replace('.', "")) {
        return true;
    }
    rest.split(|c: char| !c.is_alphabetic())
        .find(|p| !p.is_empty())
        .is_some_and(known)
}
