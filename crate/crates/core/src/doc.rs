//! Annotated document model and span algebra.
//!
//! A [`Document`] is a flat token array partitioned into sentences, with
//! dependency arcs expressed as document-wide token indices and optional
//! coreference chains over token ranges. All ranges are end-exclusive.
//!
//! Documents are built through [`parse_document_json`] or
//! [`crate::conllu::parse_conllu`]; both run the same validation pass, so a
//! `Document` in hand always satisfies the invariants documented on its
//! fields.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Errors produced while ingesting or validating a document.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocError {
    #[error("malformed document JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("malformed CoNLL-U at line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("invalid document: {field}: {message}")]
    Validation { field: String, message: String },
}

impl DocError {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        DocError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Field path of a validation error, if this is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            DocError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Index lookups that fall outside the document.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LookupError {
    #[error("unknown sentence id {0}")]
    UnknownSentence(usize),
    #[error("token index {index} out of range (document has {len} tokens)")]
    TokenOutOfRange { index: usize, len: usize },
}

/// Document-level gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "harmful")]
    Harmful,
    #[serde(rename = "non-harmful")]
    NonHarmful,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Harmful => "harmful",
            Label::NonHarmful => "non-harmful",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown label {0:?} (expected \"harmful\" or \"non-harmful\")")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "harmful" => Ok(Label::Harmful),
            "non-harmful" => Ok(Label::NonHarmful),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 0-based document-wide position.
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    /// Coarse UD part-of-speech tag.
    pub pos: String,
    /// Document-wide index of the dependency head; equals `index` for the root.
    pub head: usize,
    pub deprel: String,
    /// Optional semantic class (e.g. `person`) supplied by the annotator.
    pub semantic: Option<String>,
}

impl Token {
    pub fn is_root(&self) -> bool {
        self.head == self.index
    }

    /// Relation label without its subtype, e.g. `nsubj` for `nsubj:pass`.
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }

    pub fn is_pronoun(&self) -> bool {
        self.pos == "PRON"
    }

    pub fn is_possessive(&self) -> bool {
        self.deprel.ends_with(":poss")
    }

    pub fn is_noun(&self) -> bool {
        self.pos == "NOUN" || self.pos == "PROPN"
    }

    pub fn is_verbal(&self) -> bool {
        self.pos == "VERB" || self.pos == "AUX"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub start: usize,
    pub end: usize,
}

impl Sentence {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }
}

/// Coreference chain identifier. Accepts JSON strings or integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ChainId(pub String);

impl ChainId {
    pub fn new(id: impl Into<String>) -> Self {
        ChainId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ChainId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(i64),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::Str(s) => ChainId(s),
            Raw::Int(i) => ChainId(i.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub chain_id: ChainId,
    pub start: usize,
    pub end: usize,
    pub head_token: usize,
}

impl Mention {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorefChain {
    pub id: ChainId,
    /// Ordered by `(start, end)`, at least two entries.
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub sentences: Vec<Sentence>,
    pub chains: Vec<CorefChain>,
    pub sentence_scores: Option<Vec<f64>>,
    pub metadata: Metadata,
}

/// Mentions by position, chains by first mention, so equal content compares
/// equal whatever order it arrived in.
fn normalize_chains(chains: &mut [CorefChain]) {
    for chain in chains.iter_mut() {
        chain.mentions.sort_by_key(|m| (m.start, m.end));
    }
    chains.sort_by(|a, b| {
        let key = |c: &CorefChain| c.mentions.first().map(|m| (m.start, m.end));
        key(a).cmp(&key(b)).then_with(|| a.id.cmp(&b.id))
    });
}

impl Document {
    /// Validates a document assembled in memory and normalizes chain order.
    pub fn new(
        doc_id: impl Into<String>,
        tokens: Vec<Token>,
        sentences: Vec<Sentence>,
        chains: Vec<CorefChain>,
        sentence_scores: Option<Vec<f64>>,
        metadata: Metadata,
    ) -> Result<Self, DocError> {
        let mut doc = Document {
            doc_id: doc_id.into(),
            tokens,
            sentences,
            chains,
            sentence_scores,
            metadata,
        };
        normalize_chains(&mut doc.chains);
        doc.validate()?;
        Ok(doc)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sentence(&self, id: usize) -> Result<&Sentence, LookupError> {
        self.sentences.get(id).ok_or(LookupError::UnknownSentence(id))
    }

    pub fn sentence_tokens(&self, id: usize) -> Result<&[Token], LookupError> {
        let s = self.sentence(id)?;
        Ok(&self.tokens[s.range()])
    }

    /// Surface text of a sentence, tokens joined by single spaces.
    pub fn sentence_text(&self, id: usize) -> Result<String, LookupError> {
        let tokens = self.sentence_tokens(id)?;
        Ok(tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" "))
    }

    /// Token ranges of the given sentences, in document order.
    pub fn sentence_token_ranges(&self, sentence_ids: &[usize]) -> Result<Vec<Range<usize>>, LookupError> {
        let mut ids = sentence_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|id| self.sentence(id).map(Sentence::range))
            .collect()
    }

    /// The sentence containing `token_index`, found by binary search over
    /// sentence starts.
    pub fn containing_sentence(&self, token_index: usize) -> Result<usize, LookupError> {
        if token_index >= self.tokens.len() {
            return Err(LookupError::TokenOutOfRange {
                index: token_index,
                len: self.tokens.len(),
            });
        }
        // Number of sentences starting at or before the token, minus one.
        let idx = self.sentences.partition_point(|s| s.start <= token_index);
        Ok(idx - 1)
    }

    /// Head of the span `[start, end)`: the last token whose dependency head
    /// lies outside the span, or the last token when every head is internal.
    pub fn infer_span_head(&self, start: usize, end: usize) -> usize {
        (start..end)
            .rev()
            .find(|&i| {
                let t = &self.tokens[i];
                !(start..end).contains(&t.head) || t.is_root()
            })
            .unwrap_or(end - 1)
    }

    fn validate(&self) -> Result<(), DocError> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(DocError::validation(
                    format!("tokens[{i}].index"),
                    "token indices must be dense and increasing",
                ));
            }
        }

        let mut expected_start = 0;
        for (i, s) in self.sentences.iter().enumerate() {
            if s.id != i {
                return Err(DocError::validation(
                    format!("sentences[{i}].id"),
                    "sentence ids must be dense",
                ));
            }
            if s.start != expected_start {
                return Err(DocError::validation(
                    format!("sentences[{i}].start"),
                    "sentences must partition the token range without gaps or overlaps",
                ));
            }
            if s.start >= s.end {
                return Err(DocError::validation(
                    format!("sentences[{i}]"),
                    "empty sentence (start >= end)",
                ));
            }
            if s.end > n {
                return Err(DocError::validation(
                    format!("sentences[{i}].end"),
                    "sentence range out of bounds",
                ));
            }
            expected_start = s.end;
        }
        if expected_start != n {
            return Err(DocError::validation(
                "sentences",
                format!("sentences cover {expected_start} of {n} tokens"),
            ));
        }

        for s in &self.sentences {
            let mut roots = 0;
            for t in &self.tokens[s.range()] {
                if t.head >= n {
                    return Err(DocError::validation(
                        format!("tokens[{}].head", t.index),
                        "head index out of bounds",
                    ));
                }
                if !s.contains(t.head) {
                    return Err(DocError::validation(
                        format!("tokens[{}].head", t.index),
                        "cross-sentence head",
                    ));
                }
                if t.is_root() {
                    roots += 1;
                }
            }
            if roots != 1 {
                return Err(DocError::validation(
                    format!("sentences[{}]", s.id),
                    format!("expected exactly one root, found {roots}"),
                ));
            }
        }

        let mut seen_ids = std::collections::BTreeSet::new();
        for (ci, chain) in self.chains.iter().enumerate() {
            if !seen_ids.insert(&chain.id) {
                return Err(DocError::validation(format!("chains[{ci}].id"), "duplicate chain id"));
            }
            if chain.mentions.len() < 2 {
                return Err(DocError::validation(
                    format!("chains[{ci}].mentions"),
                    "chain needs at least 2 mentions",
                ));
            }
            for (mi, m) in chain.mentions.iter().enumerate() {
                let field = format!("chains[{ci}].mentions[{mi}]");
                if m.chain_id != chain.id {
                    return Err(DocError::validation(field, "mention chain id does not match its chain"));
                }
                if m.start >= m.end || m.end > n {
                    return Err(DocError::validation(field, "mention range out of bounds"));
                }
                if !m.contains(m.head_token) {
                    return Err(DocError::validation(field, "mention head_token outside mention range"));
                }
                let first = self.containing_sentence(m.start).expect("bounds checked");
                let last = self.containing_sentence(m.end - 1).expect("bounds checked");
                if first != last {
                    return Err(DocError::validation(field, "mention crosses a sentence boundary"));
                }
                if mi > 0 {
                    let prev = &chain.mentions[mi - 1];
                    if (prev.start, prev.end) == (m.start, m.end) {
                        return Err(DocError::validation(field, "duplicate mention span in chain"));
                    }
                }
            }
        }

        if let Some(scores) = &self.sentence_scores {
            if scores.len() != self.sentences.len() {
                return Err(DocError::validation(
                    "sentence_scores",
                    format!("expected {} scores, found {}", self.sentences.len(), scores.len()),
                ));
            }
            for (i, p) in scores.iter().enumerate() {
                if !(0.0..=1.0).contains(p) {
                    return Err(DocError::validation(
                        format!("sentence_scores[{i}]"),
                        "score outside [0, 1]",
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON interchange

#[derive(Serialize, Deserialize)]
struct TokenWire {
    surface: String,
    lemma: String,
    pos: String,
    head: usize,
    deprel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semantic: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SentenceWire {
    start: usize,
    end: usize,
}

#[derive(Serialize, Deserialize)]
struct MentionWire {
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_token: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ChainWire {
    id: ChainId,
    mentions: Vec<MentionWire>,
}

#[derive(Serialize, Deserialize)]
struct DocumentWire {
    doc_id: String,
    tokens: Vec<TokenWire>,
    sentences: Vec<SentenceWire>,
    #[serde(default)]
    chains: Vec<ChainWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_scores: Option<Vec<f64>>,
    #[serde(default)]
    metadata: Metadata,
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in input.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(input.len());
        }
        offset += l.len() + 1;
    }
    input.len()
}

/// Parses and validates a document in the JSON interchange format.
pub fn parse_document_json(bytes: &[u8]) -> Result<Document, DocError> {
    let wire: DocumentWire = serde_json::from_slice(bytes).map_err(|e| DocError::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    from_wire(wire)
}

fn from_wire(wire: DocumentWire) -> Result<Document, DocError> {
    let n = wire.tokens.len();
    let tokens = wire
        .tokens
        .into_iter()
        .enumerate()
        .map(|(index, t)| Token {
            index,
            surface: t.surface,
            lemma: t.lemma,
            pos: t.pos,
            head: t.head,
            deprel: t.deprel,
            semantic: t.semantic,
        })
        .collect();
    let sentences = wire
        .sentences
        .into_iter()
        .enumerate()
        .map(|(id, s)| Sentence {
            id,
            start: s.start,
            end: s.end,
        })
        .collect();
    // Validate sentences and heads first so head inference sees a sound tree.
    let mut doc = Document::new(
        wire.doc_id,
        tokens,
        sentences,
        Vec::new(),
        wire.sentence_scores,
        wire.metadata,
    )?;

    let mut chains = Vec::with_capacity(wire.chains.len());
    for (ci, c) in wire.chains.into_iter().enumerate() {
        let mut mentions = Vec::with_capacity(c.mentions.len());
        for (mi, m) in c.mentions.into_iter().enumerate() {
            if m.start >= m.end || m.end > n {
                return Err(DocError::validation(
                    format!("chains[{ci}].mentions[{mi}]"),
                    "mention range out of bounds",
                ));
            }
            let head_token = m.head_token.unwrap_or_else(|| doc.infer_span_head(m.start, m.end));
            mentions.push(Mention {
                chain_id: c.id.clone(),
                start: m.start,
                end: m.end,
                head_token,
            });
        }
        chains.push(CorefChain { id: c.id, mentions });
    }
    normalize_chains(&mut chains);
    doc.chains = chains;
    doc.validate()?;
    Ok(doc)
}

impl Document {
    pub fn to_json_value(&self) -> serde_json::Value {
        let wire = DocumentWire {
            doc_id: self.doc_id.clone(),
            tokens: self
                .tokens
                .iter()
                .map(|t| TokenWire {
                    surface: t.surface.clone(),
                    lemma: t.lemma.clone(),
                    pos: t.pos.clone(),
                    head: t.head,
                    deprel: t.deprel.clone(),
                    semantic: t.semantic.clone(),
                })
                .collect(),
            sentences: self
                .sentences
                .iter()
                .map(|s| SentenceWire {
                    start: s.start,
                    end: s.end,
                })
                .collect(),
            chains: self
                .chains
                .iter()
                .map(|c| ChainWire {
                    id: c.id.clone(),
                    mentions: c
                        .mentions
                        .iter()
                        .map(|m| MentionWire {
                            start: m.start,
                            end: m.end,
                            head_token: Some(m.head_token),
                        })
                        .collect(),
                })
                .collect(),
            sentence_scores: self.sentence_scores.clone(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_value(wire).expect("document wire form is always serializable")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("serializable")
    }
}
