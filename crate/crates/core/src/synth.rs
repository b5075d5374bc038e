//! Synthetic documents: a compact builder, the named demo fixtures, and a
//! random generator for property tests and benchmarks.
//!
//! All fixture text is neutral; the lexicon roles stand in for whatever a
//! deployment's real cue lists contain.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::doc::{ChainId, CorefChain, DocError, Document, Label, Mention, Metadata, Sentence, Token};

/// `(surface, lemma, pos, head, deprel)` with `head` a 0-based index local to
/// the sentence; the root points at itself.
pub type Row<'a> = (&'a str, &'a str, &'a str, usize, &'a str);

#[derive(Debug, Clone)]
pub struct DocBuilder {
    doc_id: String,
    tokens: Vec<Token>,
    sentences: Vec<Sentence>,
    chains: Vec<(String, Vec<(usize, usize)>)>,
    scores: Option<Vec<f64>>,
    metadata: Metadata,
}

impl DocBuilder {
    pub fn new(doc_id: impl Into<String>) -> Self {
        DocBuilder {
            doc_id: doc_id.into(),
            tokens: Vec::new(),
            sentences: Vec::new(),
            chains: Vec::new(),
            scores: None,
            metadata: Metadata::default(),
        }
    }

    pub fn sentence(mut self, rows: &[Row<'_>]) -> Self {
        let start = self.tokens.len();
        for (i, &(surface, lemma, pos, head, deprel)) in rows.iter().enumerate() {
            self.tokens.push(Token {
                index: start + i,
                surface: surface.into(),
                lemma: lemma.into(),
                pos: pos.into(),
                head: start + head,
                deprel: deprel.into(),
                semantic: None,
            });
        }
        self.sentences.push(Sentence {
            id: self.sentences.len(),
            start,
            end: start + rows.len(),
        });
        self
    }

    /// Adds a chain over document-wide, end-exclusive spans; heads are inferred.
    pub fn chain(mut self, id: &str, spans: &[(usize, usize)]) -> Self {
        self.chains.push((id.to_string(), spans.to_vec()));
        self
    }

    pub fn scores(mut self, scores: &[f64]) -> Self {
        self.scores = Some(scores.to_vec());
        self
    }

    pub fn label(mut self, label: Label) -> Self {
        self.metadata.gold_label = Some(label);
        self
    }

    pub fn semantic(mut self, token: usize, tag: &str) -> Self {
        self.tokens[token].semantic = Some(tag.to_string());
        self
    }

    pub fn try_build(self) -> Result<Document, DocError> {
        let bare = Document::new(
            self.doc_id.clone(),
            self.tokens.clone(),
            self.sentences.clone(),
            Vec::new(),
            self.scores.clone(),
            self.metadata.clone(),
        )?;
        let mut chains = Vec::new();
        for (id, spans) in self.chains {
            let chain_id = ChainId::new(id);
            let mut mentions = Vec::new();
            for (start, end) in spans {
                if start >= end || end > bare.len() {
                    return Err(DocError::validation(
                        format!("chain {chain_id}"),
                        "mention range out of bounds",
                    ));
                }
                mentions.push(Mention {
                    chain_id: chain_id.clone(),
                    start,
                    end,
                    head_token: bare.infer_span_head(start, end),
                });
            }
            chains.push(CorefChain { id: chain_id, mentions });
        }
        Document::new(
            self.doc_id,
            self.tokens,
            self.sentences,
            chains,
            self.scores,
            self.metadata,
        )
    }

    pub fn build(self) -> Document {
        self.try_build().expect("fixture document is valid")
    }
}

/// Named demo documents.
pub mod fixtures {
    use super::*;

    /// Two chains reaching one flagged sentence from outside it: a
    /// guardian/teacher chain that is the subject there, and a narrator chain
    /// (carrying the `student` cue) that is the object.
    ///
    /// "My guardian was a P.E. teacher . I was the youngest student in class .
    /// Then he hugged me ."
    pub fn two_chain() -> Document {
        DocBuilder::new("two-chain")
            .sentence(&[
                ("My", "I", "PRON", 1, "nmod:poss"),
                ("guardian", "guardian", "NOUN", 5, "nsubj"),
                ("was", "be", "AUX", 5, "cop"),
                ("a", "a", "DET", 5, "det"),
                ("P.E.", "P.E.", "PROPN", 5, "compound"),
                ("teacher", "teacher", "NOUN", 5, "root"),
                (".", ".", "PUNCT", 5, "punct"),
            ])
            .sentence(&[
                ("I", "I", "PRON", 4, "nsubj"),
                ("was", "be", "AUX", 4, "cop"),
                ("the", "the", "DET", 4, "det"),
                ("youngest", "young", "ADJ", 4, "amod"),
                ("student", "student", "NOUN", 4, "root"),
                ("in", "in", "ADP", 6, "case"),
                ("class", "class", "NOUN", 4, "nmod"),
                (".", ".", "PUNCT", 4, "punct"),
            ])
            .sentence(&[
                ("Then", "then", "ADV", 2, "advmod"),
                ("he", "he", "PRON", 2, "nsubj"),
                ("hugged", "hug", "VERB", 2, "root"),
                ("me", "I", "PRON", 2, "obj"),
                (".", ".", "PUNCT", 2, "punct"),
            ])
            .chain("male", &[(1, 2), (3, 6), (16, 17)])
            .chain("narrator", &[(0, 1), (7, 8), (9, 12), (18, 19)])
            .scores(&[0.12, 0.08, 0.91])
            .label(Label::Harmful)
            .build()
    }

    /// "He touched me . I was `<age>` years old ." with chain {me, I}.
    pub fn age_link(age: &str) -> Document {
        DocBuilder::new(format!("age-link-{age}"))
            .sentence(&[
                ("He", "he", "PRON", 1, "nsubj"),
                ("touched", "touch", "VERB", 1, "root"),
                ("me", "I", "PRON", 1, "obj"),
                (".", ".", "PUNCT", 1, "punct"),
            ])
            .sentence(&[
                ("I", "I", "PRON", 4, "nsubj"),
                ("was", "be", "AUX", 4, "cop"),
                (age, age, "NUM", 3, "nummod"),
                ("years", "year", "NOUN", 4, "obl:npmod"),
                ("old", "old", "ADJ", 4, "root"),
                (".", ".", "PUNCT", 4, "punct"),
            ])
            .chain("narrator", &[(2, 3), (4, 5)])
            .scores(&[0.88, 0.05])
            .build()
    }

    /// One chain carrying both a person-role cue (`teacher`) and a negative
    /// cue (`husband`), subject of the flagged sentence.
    ///
    /// "My husband is a teacher . He hugged me ."
    pub fn negative_rule() -> Document {
        DocBuilder::new("negative-rule")
            .sentence(&[
                ("My", "I", "PRON", 1, "nmod:poss"),
                ("husband", "husband", "NOUN", 4, "nsubj"),
                ("is", "be", "AUX", 4, "cop"),
                ("a", "a", "DET", 4, "det"),
                ("teacher", "teacher", "NOUN", 4, "root"),
                (".", ".", "PUNCT", 4, "punct"),
            ])
            .sentence(&[
                ("He", "he", "PRON", 1, "nsubj"),
                ("hugged", "hug", "VERB", 1, "root"),
                ("me", "I", "PRON", 1, "obj"),
                (".", ".", "PUNCT", 1, "punct"),
            ])
            .chain("spouse", &[(1, 2), (3, 5), (6, 7)])
            .chain("narrator", &[(0, 1), (8, 9)])
            .scores(&[0.2, 0.93])
            .build()
    }

    const ROLES: [&str; 5] = ["teacher", "guardian", "coach", "babysitter", "neighbour"];

    /// Twenty documents in which every cue sits outside the flagged sentences.
    /// The first ten are harmful (a cue-carrying chain is a participant of the
    /// flagged sentence); the last ten are not (the cue-carrying chain never
    /// reaches the flagged sentence).
    pub fn adversarial_corpus() -> Vec<Document> {
        let mut docs = Vec::new();
        for i in 0..10 {
            let role = ROLES[i % ROLES.len()];
            let (pron, pron_lemma) = if i % 2 == 0 { ("he", "he") } else { ("she", "she") };
            docs.push(
                DocBuilder::new(format!("adv-harmful-{i:02}"))
                    .sentence(&[
                        ("The", "the", "DET", 1, "det"),
                        (role, role, "NOUN", 2, "nsubj"),
                        ("arrived", "arrive", "VERB", 2, "root"),
                        ("early", "early", "ADV", 2, "advmod"),
                        (".", ".", "PUNCT", 2, "punct"),
                    ])
                    .sentence(&[
                        ("Later", "later", "ADV", 2, "advmod"),
                        (pron, pron_lemma, "PRON", 2, "nsubj"),
                        ("hugged", "hug", "VERB", 2, "root"),
                        ("me", "I", "PRON", 2, "obj"),
                        (".", ".", "PUNCT", 2, "punct"),
                    ])
                    .chain("actor", &[(0, 2), (6, 7)])
                    .scores(&[0.1, 0.9])
                    .label(Label::Harmful)
                    .build(),
            );
        }
        for i in 0..10 {
            let role = ROLES[i % ROLES.len()];
            docs.push(
                DocBuilder::new(format!("adv-neutral-{i:02}"))
                    .sentence(&[
                        ("The", "the", "DET", 1, "det"),
                        (role, role, "NOUN", 2, "nsubj"),
                        ("arrived", "arrive", "VERB", 2, "root"),
                        ("early", "early", "ADV", 2, "advmod"),
                        (".", ".", "PUNCT", 2, "punct"),
                    ])
                    .sentence(&[
                        ("Everyone", "everyone", "PRON", 1, "nsubj"),
                        ("greeted", "greet", "VERB", 1, "root"),
                        ("them", "they", "PRON", 1, "obj"),
                        (".", ".", "PUNCT", 1, "punct"),
                    ])
                    .sentence(&[
                        ("Then", "then", "ADV", 2, "advmod"),
                        ("we", "we", "PRON", 2, "nsubj"),
                        ("hugged", "hug", "VERB", 2, "root"),
                        (".", ".", "PUNCT", 2, "punct"),
                    ])
                    .chain("actor", &[(0, 2), (7, 8)])
                    .scores(&[0.1, 0.2, 0.9])
                    .label(Label::NonHarmful)
                    .build(),
            );
        }
        docs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RandomDocParams {
    pub max_sentences: usize,
    pub max_tokens: usize,
    pub max_chains: usize,
}

impl Default for RandomDocParams {
    fn default() -> Self {
        RandomDocParams {
            max_sentences: 8,
            max_tokens: 40,
            max_chains: 4,
        }
    }
}

/// Vocabulary drawn on by the random generator; overlaps the demo lexicon so
/// cue, misspelling, negative and age hits all occur.
const WORDS: &[(&str, &str, &str)] = &[
    ("teacher", "teacher", "NOUN"),
    ("guardian", "guardian", "NOUN"),
    ("student", "student", "NOUN"),
    ("coach", "coach", "NOUN"),
    ("Teachr", "teachr", "NOUN"),
    ("backpack", "backpack", "NOUN"),
    ("uniform", "uniform", "NOUN"),
    ("wife", "wife", "NOUN"),
    ("husband", "husband", "NOUN"),
    ("dog", "dog", "NOUN"),
    ("garden", "garden", "NOUN"),
    ("book", "book", "NOUN"),
    ("he", "he", "PRON"),
    ("she", "she", "PRON"),
    ("me", "I", "PRON"),
    ("I", "I", "PRON"),
    ("my", "I", "PRON"),
    ("they", "they", "PRON"),
    ("15", "15", "NUM"),
    ("18", "18", "NUM"),
    ("fifteen", "fifteen", "NUM"),
    ("12yo", "12yo", "ADJ"),
    ("years", "year", "NOUN"),
    ("old", "old", "ADJ"),
    ("the", "the", "DET"),
    ("small", "small", "ADJ"),
    ("quickly", "quickly", "ADV"),
    ("in", "in", "ADP"),
    (".", ".", "PUNCT"),
];

const VERBS: &[(&str, &str, &str)] = &[
    ("saw", "see", "VERB"),
    ("hugged", "hug", "VERB"),
    ("was", "be", "AUX"),
    ("gave", "give", "VERB"),
];

const RELATIONS: &[&str] = &[
    "nsubj",
    "obj",
    "iobj",
    "obl",
    "nsubj:pass",
    "conj",
    "det",
    "amod",
    "nmod:poss",
    "nummod",
    "advmod",
    "case",
    "compound",
    "punct",
];

/// Random valid document: random dependency trees, up to `max_chains` chains
/// of 2–4 mentions, random sentence scores (sometimes exactly 0.5).
pub fn random_document<R: Rng + ?Sized>(rng: &mut R, doc_id: &str, params: &RandomDocParams) -> Document {
    let n_sent = rng.random_range(1..=params.max_sentences.max(1));
    let per_sentence = (params.max_tokens / n_sent).max(1);
    let mut tokens: Vec<Token> = Vec::new();
    let mut sentences = Vec::new();

    for sid in 0..n_sent {
        let len = rng.random_range(1..=per_sentence);
        let start = tokens.len();
        let root = rng.random_range(0..len);
        let verbless = rng.random_bool(0.1);
        for i in 0..len {
            let &(surface, lemma, pos) = if i == root && !verbless {
                VERBS.choose(rng).unwrap()
            } else {
                WORDS.choose(rng).unwrap()
            };
            tokens.push(Token {
                index: start + i,
                surface: surface.into(),
                lemma: lemma.into(),
                pos: pos.into(),
                head: start + root,
                deprel: if i == root {
                    "root".into()
                } else {
                    RELATIONS.choose(rng).unwrap().to_string()
                },
                semantic: None,
            });
        }
        // attach each non-root token to a random already-attached token
        let mut attached = vec![root];
        let mut order: Vec<usize> = (0..len).filter(|&i| i != root).collect();
        for k in (1..order.len()).rev() {
            let j = rng.random_range(0..=k);
            order.swap(j, k);
        }
        for i in order {
            let h = *attached.choose(rng).unwrap();
            tokens[start + i].head = start + h;
            attached.push(i);
        }
        sentences.push(Sentence {
            id: sid,
            start,
            end: start + len,
        });
    }

    let probe = Document::new(
        doc_id,
        tokens.clone(),
        sentences.clone(),
        Vec::new(),
        None,
        Metadata::default(),
    )
    .expect("generated tree is valid");

    let n_chains = rng.random_range(0..=params.max_chains);
    let mut chains = Vec::new();
    for c in 0..n_chains {
        let id = ChainId::new(format!("c{c}"));
        let want = rng.random_range(2..=4);
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for _ in 0..want * 3 {
            if spans.len() == want {
                break;
            }
            let s = &sentences[rng.random_range(0..sentences.len())];
            let start = rng.random_range(s.start..s.end);
            let end = (start + rng.random_range(1..=2)).min(s.end);
            if !spans.contains(&(start, end)) {
                spans.push((start, end));
            }
        }
        if spans.len() < 2 {
            continue;
        }
        spans.sort();
        chains.push(CorefChain {
            mentions: spans
                .into_iter()
                .map(|(start, end)| Mention {
                    chain_id: id.clone(),
                    start,
                    end,
                    head_token: probe.infer_span_head(start, end),
                })
                .collect(),
            id,
        });
    }

    let scores = (0..n_sent)
        .map(|_| match rng.random_range(0..4) {
            0 => 0.5,
            _ => (rng.random_range(0..=100) as f64) / 100.0,
        })
        .collect();

    Document::new(doc_id, tokens, sentences, chains, Some(scores), Metadata::default())
        .expect("generated document is valid")
}
