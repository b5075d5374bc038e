//! Rule-based fallback coreference resolver.
//!
//! Used only when an ingested document carries no chains. Links noun mentions
//! that share a lemma, and links each pronoun to the nearest preceding mention
//! that agrees with it in gender, number and person. Links are merged with a
//! union-find; entities with a single mention are dropped.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::CompiledLexicon;
use crate::doc::{ChainId, CorefChain, Document, Mention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masc,
    Fem,
    Neut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Number {
    Sg,
    Pl,
}

/// Per-lemma agreement features. Unset features agree with anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementFeatures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<u8>,
}

impl AgreementFeatures {
    pub fn agrees_with(&self, other: &AgreementFeatures) -> bool {
        fn compatible<T: PartialEq>(a: Option<T>, b: Option<T>) -> bool {
            match (a, b) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
        }
        compatible(self.gender, other.gender)
            && compatible(self.number, other.number)
            && compatible(self.person, other.person)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverConfig {
    /// Maximum sentence distance between a pronoun and its antecedent.
    pub max_pronoun_distance: usize,
    pub agreement: BTreeMap<String, AgreementFeatures>,
    pub enable_exact_lemma_linking: bool,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            max_pronoun_distance: 3,
            agreement: BTreeMap::new(),
            enable_exact_lemma_linking: true,
        }
    }
}

impl ResolverConfig {
    pub fn from_lexicon(lexicon: &CompiledLexicon) -> Self {
        ResolverConfig {
            agreement: lexicon.agreement().clone(),
            ..Default::default()
        }
    }

    fn features(&self, lemma: &str) -> Option<&AgreementFeatures> {
        self.agreement
            .get(lemma)
            .or_else(|| self.agreement.get(&lemma.to_lowercase()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("max_pronoun_distance must be >= 1")]
    InvalidConfig,
    #[error("token {0} lacks POS or dependency annotation")]
    MissingAnnotations(usize),
    #[error("document already carries coreference chains")]
    ChainsPresent,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MentionKind {
    Noun,
    Pronoun,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    start: usize,
    end: usize,
    head: usize,
    sentence: usize,
    kind: MentionKind,
}

/// Minimal mention spans: pronouns and possessive determiners as single
/// tokens; nouns with their contiguous left determiners, adjectives and
/// compound modifiers.
fn candidate_mentions(doc: &Document) -> Vec<Candidate> {
    let mut out = Vec::new();
    for s in &doc.sentences {
        for t in &doc.tokens[s.range()] {
            if t.is_pronoun() || (t.pos == "DET" && t.is_possessive()) {
                out.push(Candidate {
                    start: t.index,
                    end: t.index + 1,
                    head: t.index,
                    sentence: s.id,
                    kind: MentionKind::Pronoun,
                });
            } else if t.is_noun() && !matches!(t.base_deprel(), "compound" | "flat") {
                let mut start = t.index;
                while start > s.start {
                    let left = &doc.tokens[start - 1];
                    let modifier = left.head == t.index
                        && !left.is_possessive()
                        && (matches!(left.pos.as_str(), "DET" | "ADJ")
                            || matches!(left.base_deprel(), "compound" | "flat"));
                    if !modifier {
                        break;
                    }
                    start -= 1;
                }
                out.push(Candidate {
                    start,
                    end: t.index + 1,
                    head: t.index,
                    sentence: s.id,
                    kind: MentionKind::Noun,
                });
            }
        }
    }
    out
}

/// Builds chains for a document that has none.
pub fn resolve(doc: &Document, config: &ResolverConfig) -> Result<Vec<CorefChain>, ResolveError> {
    if config.max_pronoun_distance < 1 {
        return Err(ResolveError::InvalidConfig);
    }
    if !doc.chains.is_empty() {
        return Err(ResolveError::ChainsPresent);
    }
    if let Some(t) = doc
        .tokens
        .iter()
        .find(|t| t.pos.is_empty() || t.pos == "_" || t.deprel.is_empty() || t.deprel == "_")
    {
        return Err(ResolveError::MissingAnnotations(t.index));
    }

    let mentions = candidate_mentions(doc);
    let mut uf = UnionFind::new(mentions.len());

    if config.enable_exact_lemma_linking {
        let mut first_by_lemma: HashMap<String, usize> = HashMap::new();
        for (i, m) in mentions.iter().enumerate() {
            if m.kind == MentionKind::Noun {
                let lemma = doc.tokens[m.head].lemma.to_lowercase();
                match first_by_lemma.get(&lemma) {
                    Some(&j) => uf.union(i, j),
                    None => {
                        first_by_lemma.insert(lemma, i);
                    }
                }
            }
        }
    }

    for (i, m) in mentions.iter().enumerate() {
        if m.kind != MentionKind::Pronoun {
            continue;
        }
        let Some(own) = config.features(&doc.tokens[m.head].lemma) else {
            continue;
        };
        let antecedent = mentions[..i]
            .iter()
            .enumerate()
            .rev()
            .take_while(|(_, a)| m.sentence - a.sentence <= config.max_pronoun_distance)
            .find(|(_, a)| {
                config
                    .features(&doc.tokens[a.head].lemma)
                    .is_some_and(|f| f.agrees_with(own))
            });
        if let Some((j, _)) = antecedent {
            uf.union(i, j);
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..mentions.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    for g in &mut members {
        g.sort_by_key(|&i| (mentions[i].start, mentions[i].end));
    }
    members.sort_by_key(|g| (mentions[g[0]].start, mentions[g[0]].end));

    Ok(members
        .into_iter()
        .enumerate()
        .map(|(n, g)| {
            let id = ChainId::new(format!("fb{n}"));
            CorefChain {
                mentions: g
                    .into_iter()
                    .map(|i| Mention {
                        chain_id: id.clone(),
                        start: mentions[i].start,
                        end: mentions[i].end,
                        head_token: mentions[i].head,
                    })
                    .collect(),
                id,
            }
        })
        .collect())
}
