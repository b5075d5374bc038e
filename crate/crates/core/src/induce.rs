//! Contrastive lexicon induction from a labeled corpus.
//!
//! TF-IDF statistics are computed per class (tf = raw lemma count over the
//! class, idf = ln(N / (1 + df)) over that class's documents). Candidates are
//! then ranked by the smoothed count ratio between the two classes; the
//! reverse ranking proposes negative cues.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{Category, EntryConfig, LexiconConfig};
use crate::doc::{Document, Label};

#[derive(Debug, Error)]
pub enum InductionError {
    #[error("document {0:?} has no gold_label")]
    MissingLabel(String),
    #[error("class {0} has no documents")]
    EmptyClass(Label),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse gazetteer: {0}")]
    Gazetteer(String),
}

/// Lemma → semantic tag (e.g. `person`).
pub type Gazetteer = BTreeMap<String, String>;

pub fn load_gazetteer(path: &Path) -> Result<Gazetteer, InductionError> {
    let text = std::fs::read_to_string(path).map_err(|source| InductionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| InductionError::Gazetteer(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| InductionError::Gazetteer(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaStats {
    pub tf: u64,
    pub df: u64,
    pub tfidf: f64,
    /// Most frequent POS tag of the lemma in the class.
    pub pos: Option<String>,
    pub semantic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorpusStats {
    pub label: Label,
    pub documents: usize,
    pub lemmas: BTreeMap<String, LemmaStats>,
}

impl ClassCorpusStats {
    pub fn count(&self, lemma: &str) -> u64 {
        self.lemmas.get(lemma).map_or(0, |s| s.tf)
    }

    pub fn tfidf(&self, lemma: &str) -> f64 {
        self.lemmas.get(lemma).map_or(0.0, |s| s.tfidf)
    }
}

fn most_frequent(counts: &BTreeMap<String, u64>) -> Option<String> {
    // BTreeMap iteration makes ties resolve to the smallest key
    counts
        .iter()
        .fold(None::<(&String, u64)>, |best, (k, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((k, v)),
        })
        .map(|(k, _)| k.clone())
}

fn class_stats(label: Label, docs: &[&Document], gazetteer: Option<&Gazetteer>) -> ClassCorpusStats {
    let n = docs.len() as f64;
    let mut tf: BTreeMap<String, u64> = BTreeMap::new();
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    let mut pos: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut sem: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for doc in docs {
        let mut seen = BTreeSet::new();
        for t in &doc.tokens {
            *tf.entry(t.lemma.clone()).or_default() += 1;
            *pos.entry(t.lemma.clone())
                .or_default()
                .entry(t.pos.clone())
                .or_default() += 1;
            if let Some(tag) = &t.semantic {
                *sem.entry(t.lemma.clone()).or_default().entry(tag.clone()).or_default() += 1;
            }
            if seen.insert(t.lemma.as_str()) {
                *df.entry(t.lemma.clone()).or_default() += 1;
            }
        }
    }
    let lemmas = tf
        .into_iter()
        .map(|(lemma, count)| {
            let d = df[&lemma];
            let idf = (n / (1.0 + d as f64)).ln();
            let semantic = sem
                .get(&lemma)
                .and_then(most_frequent)
                .or_else(|| gazetteer.and_then(|g| g.get(&lemma).cloned()));
            let stats = LemmaStats {
                tf: count,
                df: d,
                tfidf: count as f64 * idf,
                pos: pos.get(&lemma).and_then(most_frequent),
                semantic,
            };
            (lemma, stats)
        })
        .collect();
    ClassCorpusStats {
        label,
        documents: docs.len(),
        lemmas,
    }
}

/// Per-class TF-IDF statistics. Both classes must be non-empty.
pub fn tfidf_by_class(
    corpus: &[Document],
    gazetteer: Option<&Gazetteer>,
) -> Result<BTreeMap<Label, ClassCorpusStats>, InductionError> {
    let mut by_class: BTreeMap<Label, Vec<&Document>> = BTreeMap::new();
    for doc in corpus {
        let label = doc
            .metadata
            .gold_label
            .ok_or_else(|| InductionError::MissingLabel(doc.doc_id.clone()))?;
        by_class.entry(label).or_default().push(doc);
    }
    let mut out = BTreeMap::new();
    for label in [Label::Harmful, Label::NonHarmful] {
        let docs = by_class
            .get(&label)
            .filter(|d| !d.is_empty())
            .ok_or(InductionError::EmptyClass(label))?;
        out.insert(label, class_stats(label, docs, gazetteer));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastFilters {
    /// Allowed POS tags; empty allows all.
    pub pos_allow: BTreeSet<String>,
    /// Allowed semantic tags; skipped (with a warning) when no tags exist.
    pub semantic_allow: Option<BTreeSet<String>>,
    pub min_count: u64,
    pub smoothing: f64,
    /// Restrict candidates to the class's top-k lemmas by TF-IDF.
    pub top_k: Option<usize>,
}

impl Default for ContrastFilters {
    fn default() -> Self {
        ContrastFilters {
            pos_allow: ["NOUN".to_string()].into(),
            semantic_allow: Some(["person".to_string()].into()),
            min_count: 1,
            smoothing: 1.0,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lemma: String,
    /// Count in the class the list favors.
    pub count_for: u64,
    /// Count in the opposite class.
    pub count_against: u64,
    pub ratio: f64,
    pub pos: Option<String>,
    pub semantic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    /// Lemmas over-represented in the positive class.
    pub forward: Vec<Candidate>,
    /// Lemmas over-represented in the negative class.
    pub reverse: Vec<Candidate>,
    pub warnings: Vec<String>,
}

fn top_k_set(stats: &ClassCorpusStats, k: usize) -> BTreeSet<&str> {
    let mut all: Vec<(&String, f64)> = stats.lemmas.iter().map(|(l, s)| (l, s.tfidf)).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    all.into_iter().take(k).map(|(l, _)| l.as_str()).collect()
}

fn ranked(
    favored: &ClassCorpusStats,
    other: &ClassCorpusStats,
    filters: &ContrastFilters,
    use_semantic: bool,
) -> Vec<Candidate> {
    let allowed_top = filters.top_k.map(|k| top_k_set(favored, k));
    let alpha = filters.smoothing;
    let mut out: Vec<Candidate> = favored
        .lemmas
        .iter()
        .filter(|(_, s)| s.tf >= filters.min_count)
        .filter(|(l, _)| allowed_top.as_ref().is_none_or(|top| top.contains(l.as_str())))
        .filter_map(|(lemma, s)| {
            let pos = s
                .pos
                .clone()
                .or_else(|| other.lemmas.get(lemma).and_then(|o| o.pos.clone()));
            let semantic = s
                .semantic
                .clone()
                .or_else(|| other.lemmas.get(lemma).and_then(|o| o.semantic.clone()));
            if !filters.pos_allow.is_empty() && !pos.as_ref().is_some_and(|p| filters.pos_allow.contains(p)) {
                return None;
            }
            if use_semantic {
                let allow = filters.semantic_allow.as_ref().expect("checked by caller");
                if !semantic.as_ref().is_some_and(|t| allow.contains(t)) {
                    return None;
                }
            }
            let against = other.count(lemma);
            Some(Candidate {
                lemma: lemma.clone(),
                count_for: s.tf,
                count_against: against,
                ratio: (s.tf as f64 + alpha) / (against as f64 + alpha),
                pos,
                semantic,
            })
        })
        .collect();
    out.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.lemma.cmp(&b.lemma)));
    out
}

/// Ranks lemmas by `(count_pos + α) / (count_neg + α)` and the reverse.
pub fn contrast_rank(pos: &ClassCorpusStats, neg: &ClassCorpusStats, filters: &ContrastFilters) -> RankedCandidates {
    let mut warnings = Vec::new();
    let has_tags = pos
        .lemmas
        .values()
        .chain(neg.lemmas.values())
        .any(|s| s.semantic.is_some());
    let use_semantic = filters.semantic_allow.is_some() && has_tags;
    if filters.semantic_allow.is_some() && !has_tags {
        tracing::warn!("no semantic tags in corpus or gazetteer; semantic filter skipped");
        warnings.push("no semantic tags available; semantic filter skipped".to_string());
    }
    RankedCandidates {
        forward: ranked(pos, neg, filters, use_semantic),
        reverse: ranked(neg, pos, filters, use_semantic),
        warnings,
    }
}

fn entry(c: &Candidate) -> EntryConfig {
    EntryConfig {
        lemma: Some(c.lemma.clone()),
        surface: None,
        note: Some(format!(
            "for={} against={} ratio={:.3}",
            c.count_for, c.count_against, c.ratio
        )),
    }
}

/// Builds the draft lexicon: forward candidates with ratio > 1 as person
/// roles, reverse ones as negative cues. The draft is marked
/// `review_pending` and will not compile until the marker is removed.
pub fn draft_lexicon(ranked: &RankedCandidates) -> LexiconConfig {
    let mut cfg = LexiconConfig {
        review_pending: true,
        ..Default::default()
    };
    cfg.categories.get_mut(Category::PersonRole).entries =
        ranked.forward.iter().filter(|c| c.ratio > 1.0).map(entry).collect();
    cfg.categories.get_mut(Category::Negative).entries =
        ranked.reverse.iter().filter(|c| c.ratio > 1.0).map(entry).collect();
    cfg
}

pub fn export_candidates(ranked: &RankedCandidates, path: &Path) -> Result<(), InductionError> {
    let body = format!(
        "# Induced lexicon draft. Review every entry, then delete `review_pending`.\n{}",
        draft_lexicon(ranked).to_toml_string()
    );
    std::fs::write(path, body).map_err(|source| InductionError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::compile_lexicon;
    use crate::synth::DocBuilder;

    fn doc(id: &str, label: Label, lemmas: &[&str]) -> Document {
        let rows: Vec<_> = lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    *l,
                    *l,
                    if i == 0 { "VERB" } else { "NOUN" },
                    0,
                    if i == 0 { "root" } else { "obj" },
                )
            })
            .collect();
        DocBuilder::new(id).sentence(&rows).label(label).build()
    }

    #[test]
    fn single_document_class_arithmetic() {
        let corpus = vec![
            doc("a", Label::Harmful, &["go", "mama", "mama", "mama"]),
            doc("b", Label::NonHarmful, &["go"]),
        ];
        let stats = tfidf_by_class(&corpus, None).unwrap();
        let h = &stats[&Label::Harmful];
        assert_eq!(h.count("mama"), 3);
        assert_eq!(h.lemmas["mama"].df, 1);
        assert!((h.tfidf("mama") - 3.0 * (0.5f64).ln()).abs() < 1e-12);
        assert_eq!(stats[&Label::NonHarmful].tfidf("mama"), 0.0);
    }

    #[test]
    fn missing_class_is_an_error() {
        let corpus = vec![doc("a", Label::Harmful, &["go"])];
        assert!(matches!(
            tfidf_by_class(&corpus, None),
            Err(InductionError::EmptyClass(Label::NonHarmful))
        ));
        let unlabeled = vec![DocBuilder::new("u")
            .sentence(&[("go", "go", "VERB", 0, "root")])
            .build()];
        assert!(matches!(
            tfidf_by_class(&unlabeled, None),
            Err(InductionError::MissingLabel(_))
        ));
    }

    fn stats_with_counts(label: Label, counts: &[(&str, u64)]) -> ClassCorpusStats {
        ClassCorpusStats {
            label,
            documents: 1,
            lemmas: counts
                .iter()
                .map(|&(l, c)| {
                    (
                        l.to_string(),
                        LemmaStats {
                            tf: c,
                            df: 1,
                            tfidf: 0.0,
                            pos: Some("NOUN".into()),
                            semantic: Some("person".into()),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn smoothed_ratio_orders_zero_denominator_first() {
        let pos = stats_with_counts(Label::Harmful, &[("mother", 303), ("son", 151), ("friend", 20)]);
        let neg = stats_with_counts(
            Label::NonHarmful,
            &[("mother", 4), ("friend", 20), ("wife", 113), ("husband", 71)],
        );
        let r = contrast_rank(&pos, &neg, &ContrastFilters::default());
        let order: Vec<_> = r.forward.iter().map(|c| c.lemma.as_str()).collect();
        assert_eq!(order, vec!["son", "mother", "friend"]);
        assert!((r.forward[0].ratio - 152.0).abs() < 1e-12);
        assert!((r.forward[1].ratio - 60.8).abs() < 1e-12);
        assert_eq!(r.forward[2].ratio, 1.0);
        let rev: Vec<_> = r
            .reverse
            .iter()
            .take(2)
            .map(|c| (c.lemma.as_str(), c.count_for, c.count_against))
            .collect();
        assert_eq!(rev, vec![("wife", 113, 0), ("husband", 71, 0)]);
    }

    #[test]
    fn filters_apply() {
        let mut pos = stats_with_counts(Label::Harmful, &[("a", 5), ("b", 5)]);
        pos.lemmas.get_mut("b").unwrap().pos = Some("VERB".into());
        let neg = stats_with_counts(Label::NonHarmful, &[]);
        let r = contrast_rank(&pos, &neg, &ContrastFilters::default());
        assert_eq!(r.forward.len(), 1);
        let strict = ContrastFilters {
            min_count: 6,
            ..Default::default()
        };
        assert!(contrast_rank(&pos, &neg, &strict).forward.is_empty());
    }

    #[test]
    fn semantic_filter_skipped_without_tags() {
        let mut pos = stats_with_counts(Label::Harmful, &[("a", 5)]);
        pos.lemmas.get_mut("a").unwrap().semantic = None;
        let neg = stats_with_counts(Label::NonHarmful, &[]);
        let r = contrast_rank(&pos, &neg, &ContrastFilters::default());
        assert_eq!(r.forward.len(), 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn export_empty_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = RankedCandidates {
            forward: vec![],
            reverse: vec![],
            warnings: vec![],
        };
        let path = dir.path().join("empty.toml");
        export_candidates(&empty, &path).unwrap();
        let cfg = LexiconConfig::load(&path).unwrap();
        assert!(cfg.review_pending);
        assert!(cfg.categories.person_role.entries.is_empty());

        let pos = stats_with_counts(Label::Harmful, &[("a", 9), ("b", 8), ("c", 7), ("shared", 3)]);
        let neg = stats_with_counts(Label::NonHarmful, &[("d", 9), ("e", 4), ("shared", 3)]);
        let ranked = contrast_rank(&pos, &neg, &ContrastFilters::default());
        let path = dir.path().join("draft.toml");
        export_candidates(&ranked, &path).unwrap();
        let mut cfg = LexiconConfig::load(&path).unwrap();
        assert!(matches!(
            compile_lexicon(&cfg),
            Err(crate::cues::LexiconError::PendingReview)
        ));
        cfg.review_pending = false;
        let lex = compile_lexicon(&cfg).unwrap();
        assert_eq!(lex.lemma_pattern_count(), 5);

        let bad = dir.path().join("missing").join("x.toml");
        assert!(matches!(
            export_candidates(&ranked, &bad),
            Err(InductionError::Io { .. })
        ));
    }
}
