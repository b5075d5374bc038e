//! Sentence scoring and the threshold gate.
//!
//! Any [`SentenceScorer`] can feed the linker: a weighted-lemma logistic
//! scorer, a pass-through for scores precomputed upstream, or an HTTP client
//! for an external model. The linker only ever sees the resulting
//! [`FlaggedSet`].

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::Document;

/// Env var consulted for the remote scorer endpoint.
pub const SCORER_URL_ENV: &str = "CORELINK_SCORER_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("scorer configuration error: {0}")]
    Config(String),
    #[error("remote scorer failed at sentence {sentence_id}: {reason}")]
    Remote { sentence_id: usize, reason: String },
    #[error("invalid scores: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence_id: usize,
    pub probability: f64,
}

pub trait SentenceScorer: Send + Sync {
    /// Stable identifier recorded in explanations.
    fn id(&self) -> String;

    /// Exactly one score per sentence, in sentence order.
    fn score(&self, doc: &Document) -> Result<Vec<SentenceScore>, ScoreError>;
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconScorerConfig {
    pub term_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub bias: f64,
}

/// `logistic(bias + sum of weights of distinct matched lemmas)` per sentence.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    config: LexiconScorerConfig,
}

impl LexiconScorer {
    pub fn new(config: LexiconScorerConfig) -> Result<Self, ScoreError> {
        if config.term_weights.is_empty() {
            return Err(ScoreError::Config("lexicon scorer needs at least one term".into()));
        }
        if let Some((t, _)) = config.term_weights.iter().find(|(_, w)| !w.is_finite()) {
            return Err(ScoreError::Config(format!("weight for {t:?} is not finite")));
        }
        if !config.bias.is_finite() {
            return Err(ScoreError::Config("bias is not finite".into()));
        }
        Ok(LexiconScorer { config })
    }
}

impl SentenceScorer for LexiconScorer {
    fn id(&self) -> String {
        "lexicon".into()
    }

    fn score(&self, doc: &Document) -> Result<Vec<SentenceScore>, ScoreError> {
        Ok(doc
            .sentences
            .iter()
            .map(|s| {
                let matched: BTreeSet<&str> = doc.tokens[s.range()]
                    .iter()
                    .map(|t| t.lemma.as_str())
                    .filter(|l| self.config.term_weights.contains_key(*l))
                    .collect();
                let z = self.config.bias + matched.iter().map(|l| self.config.term_weights[*l]).sum::<f64>();
                SentenceScore {
                    sentence_id: s.id,
                    probability: logistic(z),
                }
            })
            .collect())
    }
}

/// Passes through `sentence_scores` carried by the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrecomputedScorer;

impl SentenceScorer for PrecomputedScorer {
    fn id(&self) -> String {
        "precomputed".into()
    }

    fn score(&self, doc: &Document) -> Result<Vec<SentenceScore>, ScoreError> {
        let scores = doc.sentence_scores.as_ref().ok_or_else(|| {
            ScoreError::Config(format!(
                "document {:?} has no sentence_scores for the precomputed scorer",
                doc.doc_id
            ))
        })?;
        Ok(scores
            .iter()
            .enumerate()
            .map(|(sentence_id, &probability)| SentenceScore {
                sentence_id,
                probability,
            })
            .collect())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct RemoteResponse {
    scores: Vec<f64>,
}

/// Client for an external scoring service speaking
/// `POST {sentences: [..]}` → `{scores: [..]}`.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    url: String,
    agent: ureq::Agent,
}

impl RemoteScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        RemoteScorer { url: url.into(), agent }
    }

    /// Endpoint from `CORELINK_SCORER_URL`, if set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(SCORER_URL_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(|u| Self::new(u, timeout))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Sends one batch of sentences; `first_sentence` is used in error reports.
pub fn remote_score(
    scorer: &RemoteScorer,
    sentences: &[String],
    first_sentence: usize,
) -> Result<Vec<f64>, ScoreError> {
    let fail = |sentence_id: usize, reason: String| ScoreError::Remote { sentence_id, reason };
    let mut response = scorer
        .agent
        .post(&scorer.url)
        .send_json(RemoteRequest { sentences })
        .map_err(|e| fail(first_sentence, e.to_string()))?;
    let body: RemoteResponse = response
        .body_mut()
        .read_json()
        .map_err(|e| fail(first_sentence, format!("bad response body: {e}")))?;
    if body.scores.len() != sentences.len() {
        return Err(fail(
            first_sentence,
            format!(
                "length mismatch: sent {} sentences, got {} scores",
                sentences.len(),
                body.scores.len()
            ),
        ));
    }
    if let Some((i, p)) = body.scores.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(fail(first_sentence + i, format!("score {p} outside [0, 1]")));
    }
    Ok(body.scores)
}

impl SentenceScorer for RemoteScorer {
    fn id(&self) -> String {
        format!("remote:{}", self.url)
    }

    fn score(&self, doc: &Document) -> Result<Vec<SentenceScore>, ScoreError> {
        if doc.sentences.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = (0..doc.sentences.len())
            .map(|i| doc.sentence_text(i).expect("sentence ids are dense"))
            .collect();
        let probs = remote_score(self, &texts, 0)?;
        Ok(probs
            .into_iter()
            .enumerate()
            .map(|(sentence_id, probability)| SentenceScore {
                sentence_id,
                probability,
            })
            .collect())
    }
}

/// Sentences whose probability reaches the threshold, with their token ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSet {
    pub sentence_ids: Vec<usize>,
    pub token_ranges: Vec<Range<usize>>,
    pub threshold: f64,
}

/// Flags every sentence with `probability >= threshold`.
pub fn flag_sentences(scores: &[SentenceScore], doc: &Document, threshold: f64) -> Result<FlaggedSet, ScoreError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ScoreError::Invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    if scores.len() != doc.sentences.len() {
        return Err(ScoreError::Invalid(format!(
            "expected {} scores, got {}",
            doc.sentences.len(),
            scores.len()
        )));
    }
    let mut sentence_ids = Vec::new();
    for (i, s) in scores.iter().enumerate() {
        if s.sentence_id != i {
            return Err(ScoreError::Invalid(format!(
                "score {i} is for sentence {}",
                s.sentence_id
            )));
        }
        if !(0.0..=1.0).contains(&s.probability) {
            return Err(ScoreError::Invalid(format!(
                "probability {} outside [0, 1]",
                s.probability
            )));
        }
        if s.probability >= threshold {
            sentence_ids.push(i);
        }
    }
    let token_ranges = doc
        .sentence_token_ranges(&sentence_ids)
        .expect("ids come from the document");
    Ok(FlaggedSet {
        sentence_ids,
        token_ranges,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DocBuilder;

    fn two_sentences(scores: Option<&[f64]>) -> Document {
        let mut b = DocBuilder::new("d")
            .sentence(&[("X", "x", "NOUN", 1, "nsubj"), ("ran", "run", "VERB", 1, "root")])
            .sentence(&[
                ("Birds", "bird", "NOUN", 1, "nsubj"),
                ("sang", "sing", "VERB", 1, "root"),
            ]);
        if let Some(s) = scores {
            b = b.scores(s);
        }
        b.build()
    }

    #[test]
    fn precomputed_pass_through() {
        let doc = two_sentences(Some(&[0.9, 0.1]));
        let scores = PrecomputedScorer.score(&doc).unwrap();
        assert_eq!(scores.iter().map(|s| s.probability).collect::<Vec<_>>(), vec![0.9, 0.1]);
        assert!(matches!(
            PrecomputedScorer.score(&two_sentences(None)),
            Err(ScoreError::Config(_))
        ));
    }

    #[test]
    fn lexicon_scorer_hand_evaluated() {
        let scorer = LexiconScorer::new(LexiconScorerConfig {
            term_weights: [("x".to_string(), 4.0)].into(),
            bias: -2.0,
        })
        .unwrap();
        let scores = scorer.score(&two_sentences(None)).unwrap();
        // 1 / (1 + e^-2) and 1 / (1 + e^2)
        assert!((scores[0].probability - 0.880_797_077_977_882_4).abs() < 1e-12);
        assert!((scores[1].probability - 0.119_202_922_022_117_6).abs() < 1e-12);
    }

    #[test]
    fn lexicon_scorer_rejects_bad_config() {
        assert!(LexiconScorer::new(LexiconScorerConfig {
            term_weights: BTreeMap::new(),
            bias: 0.0
        })
        .is_err());
        assert!(LexiconScorer::new(LexiconScorerConfig {
            term_weights: [("x".to_string(), f64::NAN)].into(),
            bias: 0.0
        })
        .is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let doc = two_sentences(Some(&[0.5, 0.4999]));
        let scores = PrecomputedScorer.score(&doc).unwrap();
        let flagged = flag_sentences(&scores, &doc, 0.5).unwrap();
        assert_eq!(flagged.sentence_ids, vec![0]);
        assert_eq!(flagged.token_ranges, vec![0..2]);
    }

    #[test]
    fn flagging_examples() {
        let doc = two_sentences(Some(&[0.9, 0.1]));
        let scores = PrecomputedScorer.score(&doc).unwrap();
        assert_eq!(flag_sentences(&scores, &doc, 0.5).unwrap().sentence_ids, vec![0]);

        let doc = two_sentences(Some(&[0.0, 0.0]));
        let scores = PrecomputedScorer.score(&doc).unwrap();
        assert!(flag_sentences(&scores, &doc, 0.5).unwrap().sentence_ids.is_empty());
        assert!(flag_sentences(&scores, &doc, 1.5).is_err());
    }
}
