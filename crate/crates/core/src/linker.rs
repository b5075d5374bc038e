//! Chain linking and document labeling.
//!
//! A chain becomes evidence when one of its mentions carries a cue (or has an
//! age expression attached) and some token of the chain sits inside a flagged
//! sentence in a participant role. Scene cues skip the participant check and
//! only need the chain to reach the flagged sentence. Negative cues are
//! linked the same way and weaken the score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coref::{self, ResolverConfig};
use crate::cues::{self, AgeHit, Category, CompiledLexicon, CueHit};
use crate::doc::{ChainId, CorefChain, Document, Label};
use crate::scorer::{flag_sentences, FlaggedSet, ScoreError, SentenceScorer};

pub const EXPLANATION_VERSION: u32 = 1;

/// Dependency relations that make a token a participant of its clause.
pub const PARTICIPANT_RELATIONS: [&str; 4] = ["nsubj", "obj", "iobj", "obl"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Coref,
    Baseline,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coref" => Ok(Mode::Coref),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?} (expected coref or baseline)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Coref => "coref",
            Mode::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainsSource {
    Provided,
    Fallback,
}

/// A participant token of a sentence and the relation that qualifies it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Participant {
    pub token_index: usize,
    /// Relation of the qualifying token, e.g. `nsubj` or `obj`.
    pub role: String,
    /// Governor for pronouns and possessives that qualify through the token
    /// they attach to, and for conjuncts of a participant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<usize>,
}

/// Participants of a sentence: tokens whose relation is one of
/// [`PARTICIPANT_RELATIONS`], conjuncts of those, and pronouns or possessives
/// attached to them. Sentences without a verb or auxiliary have none.
pub fn participants(doc: &Document, sentence_id: usize) -> Vec<Participant> {
    let Ok(tokens) = doc.sentence_tokens(sentence_id) else {
        return Vec::new();
    };
    if !tokens.iter().any(|t| t.is_verbal()) {
        return Vec::new();
    }
    let mut roles: BTreeMap<usize, Participant> = BTreeMap::new();
    for t in tokens {
        if PARTICIPANT_RELATIONS.contains(&t.base_deprel()) && !t.is_root() {
            roles.insert(
                t.index,
                Participant {
                    token_index: t.index,
                    role: t.deprel.clone(),
                    via: None,
                },
            );
        }
    }
    // conjuncts inherit the role of their first conjunct
    loop {
        let mut added = false;
        for t in tokens {
            if t.base_deprel() == "conj" && !roles.contains_key(&t.index) {
                if let Some(first) = roles.get(&t.head) {
                    let role = first.role.clone();
                    roles.insert(
                        t.index,
                        Participant {
                            token_index: t.index,
                            role,
                            via: Some(t.head),
                        },
                    );
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    let direct: Vec<(usize, String)> = roles.values().map(|p| (p.token_index, p.role.clone())).collect();
    for (gov, role) in direct {
        for t in tokens {
            if t.head == gov && t.index != gov && (t.is_pronoun() || t.is_possessive()) && !roles.contains_key(&t.index)
            {
                roles.insert(
                    t.index,
                    Participant {
                        token_index: t.index,
                        role: role.clone(),
                        via: Some(gov),
                    },
                );
            }
        }
    }
    roles.into_values().collect()
}

/// Sorted, deduplicated token indices covered by the chain's mentions.
pub fn chain_token_ids(chain: &CorefChain) -> Vec<usize> {
    let set: BTreeSet<usize> = chain.mentions.iter().flat_map(|m| m.range()).collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Cue(CueHit),
    Age(AgeHit),
}

impl Evidence {
    pub fn first_token(&self) -> usize {
        match self {
            Evidence::Cue(c) => c.token_index,
            Evidence::Age(a) => a.token_span.0,
        }
    }

    pub fn token_range(&self) -> (usize, usize) {
        match self {
            Evidence::Cue(c) => (c.token_index, c.token_index + 1),
            Evidence::Age(a) => a.token_span,
        }
    }

    fn needs_participant(&self) -> bool {
        !matches!(
            self,
            Evidence::Cue(CueHit {
                category: Category::Scene,
                ..
            })
        )
    }

    pub fn is_negative(&self) -> bool {
        matches!(
            self,
            Evidence::Cue(CueHit {
                category: Category::Negative,
                ..
            })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantEvidence {
    pub sentence_id: usize,
    pub token_index: usize,
    /// `None` when the link came through a scene cue without a participant.
    pub role: Option<String>,
}

/// A chain (or, for in-sentence hits, a single cue) linked to flagged
/// sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmContextCluster {
    pub chain_id: Option<ChainId>,
    /// Mention ranges of the chain; empty for chainless clusters.
    pub mentions: Vec<(usize, usize)>,
    pub cue_hits: Vec<Evidence>,
    pub linked_sentences: Vec<usize>,
    pub participant_evidence: Vec<ParticipantEvidence>,
}

/// Rational weight applied to negative links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gamma {
    pub num: u64,
    pub den: u64,
}

impl Gamma {
    pub const ZERO: Gamma = Gamma { num: 0, den: 1 };
    pub const ONE: Gamma = Gamma { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self, String> {
        if den == 0 {
            return Err("gamma denominator must be positive".into());
        }
        let g = gcd(num, den);
        Ok(Gamma {
            num: num / g,
            den: den / g,
        })
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::ONE
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts `2`, `1/3` or a decimal such as `0.25`.
impl FromStr for Gamma {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid gamma {s:?}");
        if let Some((n, d)) = s.split_once('/') {
            return Gamma::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            );
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10u64.pow(frac.len() as u32);
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let frac: u64 = if frac.is_empty() {
                0
            } else {
                frac.parse().map_err(|_| bad())?
            };
            return Gamma::new(int * den + frac, den);
        }
        Gamma::new(s.parse().map_err(|_| bad())?, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Policy {
    pub negative_weight: Gamma,
}

/// Score is `floor(|clusters| - gamma * |negative_links|)`, computed exactly;
/// the label is harmful iff the score is at least one.
pub fn decide_label(
    clusters: &[HarmContextCluster],
    negative_links: &[HarmContextCluster],
    policy: &Policy,
) -> (Label, i64) {
    let g = policy.negative_weight;
    let numerator = clusters.len() as i128 * g.den as i128 - negative_links.len() as i128 * g.num as i128;
    let score = numerator.div_euclid(g.den as i128) as i64;
    let label = if score >= 1 { Label::Harmful } else { Label::NonHarmful };
    (label, score)
}

/// Attaches an age expression to a mention when the mention overlaps it,
/// governs it, or is the subject of a clause that governs it.
fn age_attaches(doc: &Document, age: &AgeHit, mention_start: usize, mention_end: usize, mention_head: usize) -> bool {
    let (a0, a1) = age.token_span;
    if a0 < mention_end && mention_start < a1 {
        return true;
    }
    let head = &doc.tokens[mention_head];
    let subject_of = (head.base_deprel() == "nsubj").then_some(head.head);
    let mut cur = a0;
    loop {
        if cur == mention_head || Some(cur) == subject_of {
            return true;
        }
        let next = doc.tokens[cur].head;
        if next == cur {
            return false;
        }
        cur = next;
    }
}

fn chain_evidence(doc: &Document, chain: &CorefChain, cue_hits: &[CueHit], age_hits: &[AgeHit]) -> Vec<Evidence> {
    let mut out: Vec<Evidence> = cue_hits
        .iter()
        .filter(|h| chain.mentions.iter().any(|m| m.contains(h.token_index)))
        .cloned()
        .map(Evidence::Cue)
        .collect();
    out.extend(
        age_hits
            .iter()
            .filter(|a| a.flagged)
            .filter(|a| {
                chain
                    .mentions
                    .iter()
                    .any(|m| age_attaches(doc, a, m.start, m.end, m.head_token))
            })
            .cloned()
            .map(Evidence::Age),
    );
    out.sort_by_key(|e| (e.first_token(), matches!(e, Evidence::Age(_))));
    out
}

struct LinkResult {
    linked: Vec<usize>,
    evidence: Vec<ParticipantEvidence>,
}

fn link_evidence(
    chain_tokens: &[usize],
    hits: &[Evidence],
    flagged: &FlaggedSet,
    participant_index: &BTreeMap<usize, BTreeMap<usize, String>>,
) -> LinkResult {
    let needs_participant = hits.iter().any(Evidence::needs_participant);
    let scene_only_ok = hits.iter().any(|h| !h.needs_participant());
    let mut linked = Vec::new();
    let mut evidence = Vec::new();
    for (&sid, range) in flagged.sentence_ids.iter().zip(&flagged.token_ranges) {
        let lo = chain_tokens.partition_point(|&t| t < range.start);
        let hi = chain_tokens.partition_point(|&t| t < range.end);
        let inside = &chain_tokens[lo..hi];
        if inside.is_empty() {
            continue;
        }
        let roles = &participant_index[&sid];
        let with_role: Vec<ParticipantEvidence> = inside
            .iter()
            .filter_map(|t| {
                roles.get(t).map(|role| ParticipantEvidence {
                    sentence_id: sid,
                    token_index: *t,
                    role: Some(role.clone()),
                })
            })
            .collect();
        if needs_participant && !with_role.is_empty() {
            linked.push(sid);
            evidence.extend(with_role);
        } else if scene_only_ok {
            linked.push(sid);
            if with_role.is_empty() {
                evidence.push(ParticipantEvidence {
                    sentence_id: sid,
                    token_index: inside[0],
                    role: None,
                });
            } else {
                evidence.extend(with_role);
            }
        }
    }
    LinkResult { linked, evidence }
}

/// Links chains carrying cues to flagged sentences. Returns positive
/// clusters and negative links, in chain order.
pub fn link_chains(
    doc: &Document,
    flagged: &FlaggedSet,
    cue_hits: &[CueHit],
    age_hits: &[AgeHit],
    chains: &[CorefChain],
) -> (Vec<HarmContextCluster>, Vec<HarmContextCluster>) {
    let participant_index: BTreeMap<usize, BTreeMap<usize, String>> = flagged
        .sentence_ids
        .iter()
        .map(|&sid| {
            let roles = participants(doc, sid)
                .into_iter()
                .map(|p| (p.token_index, p.role))
                .collect();
            (sid, roles)
        })
        .collect();

    let mut clusters = Vec::new();
    let mut negatives = Vec::new();
    for chain in chains {
        let hits = chain_evidence(doc, chain, cue_hits, age_hits);
        if hits.is_empty() {
            continue;
        }
        let tokens = chain_token_ids(chain);
        let (neg, pos): (Vec<Evidence>, Vec<Evidence>) = hits.into_iter().partition(Evidence::is_negative);
        for (group, out) in [(pos, &mut clusters), (neg, &mut negatives)] {
            if group.is_empty() {
                continue;
            }
            let link = link_evidence(&tokens, &group, flagged, &participant_index);
            if !link.linked.is_empty() {
                out.push(HarmContextCluster {
                    chain_id: Some(chain.id.clone()),
                    mentions: chain.mentions.iter().map(|m| (m.start, m.end)).collect(),
                    cue_hits: group,
                    linked_sentences: link.linked,
                    participant_evidence: link.evidence,
                });
            }
        }
    }
    (clusters, negatives)
}

/// One chainless cluster per hit that lies directly inside a flagged
/// sentence, skipping hits already covered by a chain cluster for the same
/// sentence.
fn direct_hits(
    doc: &Document,
    flagged: &FlaggedSet,
    cue_hits: &[CueHit],
    age_hits: &[AgeHit],
    covered: &[HarmContextCluster],
) -> Vec<HarmContextCluster> {
    let flagged_ids: BTreeSet<usize> = flagged.sentence_ids.iter().copied().collect();
    let mut hits: Vec<Evidence> = cue_hits.iter().cloned().map(Evidence::Cue).collect();
    hits.extend(age_hits.iter().filter(|a| a.flagged).cloned().map(Evidence::Age));
    hits.sort_by_key(|e| (e.first_token(), matches!(e, Evidence::Age(_))));

    let mut out = Vec::new();
    for hit in hits {
        let sid = doc
            .containing_sentence(hit.first_token())
            .expect("hit tokens are in range");
        if !flagged_ids.contains(&sid) {
            continue;
        }
        let already = covered
            .iter()
            .any(|c| c.linked_sentences.contains(&sid) && c.cue_hits.contains(&hit));
        if already {
            continue;
        }
        out.push(HarmContextCluster {
            chain_id: None,
            mentions: Vec::new(),
            participant_evidence: Vec::new(),
            linked_sentences: vec![sid],
            cue_hits: vec![hit],
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSentence {
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub probability: f64,
}

/// Full evidence record behind a document label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationExplanation {
    pub explanation_version: u32,
    pub doc_id: String,
    pub mode: Mode,
    pub label: Label,
    pub score: i64,
    pub threshold: f64,
    pub negative_weight: Gamma,
    pub flagged_sentences: Vec<FlaggedSentence>,
    pub clusters: Vec<HarmContextCluster>,
    pub negative_links: Vec<HarmContextCluster>,
    /// Absent in baseline mode, which does not use chains.
    pub chains_source: Option<ChainsSource>,
    pub scorer_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub mode: Mode,
    pub policy: Policy,
    pub threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            mode: Mode::Coref,
            policy: Policy::default(),
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Scoring(#[from] ScoreError),
    #[error("fallback coreference failed: {0}")]
    Resolve(#[from] coref::ResolveError),
}

/// Clusters are listed by where they touch the flagged text: first linked
/// sentence, then the first participant (or the hit itself when chainless).
fn cluster_order(c: &HarmContextCluster) -> (usize, usize, Option<ChainId>) {
    let anchor = c
        .participant_evidence
        .first()
        .map(|p| p.token_index)
        .or_else(|| c.cue_hits.first().map(Evidence::first_token))
        .unwrap_or(0);
    (
        c.linked_sentences.first().copied().unwrap_or(0),
        anchor,
        c.chain_id.clone(),
    )
}

/// Scores, flags, links and labels one document.
pub fn classify_document(
    doc: &Document,
    scorer: &dyn SentenceScorer,
    lexicon: &CompiledLexicon,
    options: &ClassifyOptions,
) -> Result<ClassificationExplanation, ClassifyError> {
    let scores = scorer.score(doc)?;
    let flagged = flag_sentences(&scores, doc, options.threshold)?;
    let cue_hits = cues::match_cues(doc, lexicon);
    let age_hits = cues::detect_age_expressions(doc, lexicon);

    let (clusters, negative_links, chains_source) = match options.mode {
        Mode::Baseline => {
            let direct = direct_hits(doc, &flagged, &cue_hits, &age_hits, &[]);
            let (neg, pos): (Vec<_>, Vec<_>) = direct.into_iter().partition(|c| c.cue_hits[0].is_negative());
            (pos, neg, None)
        }
        Mode::Coref => {
            let (chains, source) = if doc.chains.is_empty() {
                let resolved = coref::resolve(doc, &ResolverConfig::from_lexicon(lexicon))?;
                (resolved, ChainsSource::Fallback)
            } else {
                (doc.chains.clone(), ChainsSource::Provided)
            };
            let (mut clusters, mut negatives) = link_chains(doc, &flagged, &cue_hits, &age_hits, &chains);
            let covered: Vec<HarmContextCluster> = clusters.iter().chain(&negatives).cloned().collect();
            let direct = direct_hits(doc, &flagged, &cue_hits, &age_hits, &covered);
            for c in direct {
                if c.cue_hits[0].is_negative() {
                    negatives.push(c);
                } else {
                    clusters.push(c);
                }
            }
            (clusters, negatives, Some(source))
        }
    };

    let (mut clusters, mut negative_links) = (clusters, negative_links);
    clusters.sort_by_cached_key(cluster_order);
    negative_links.sort_by_cached_key(cluster_order);

    let (label, score) = decide_label(&clusters, &negative_links, &options.policy);
    let flagged_sentences = flagged
        .sentence_ids
        .iter()
        .zip(&flagged.token_ranges)
        .map(|(&sid, r)| FlaggedSentence {
            sentence_id: sid,
            start: r.start,
            end: r.end,
            probability: scores[sid].probability,
        })
        .collect();

    Ok(ClassificationExplanation {
        explanation_version: EXPLANATION_VERSION,
        doc_id: doc.doc_id.clone(),
        mode: options.mode,
        label,
        score,
        threshold: options.threshold,
        negative_weight: options.policy.negative_weight,
        flagged_sentences,
        clusters,
        negative_links,
        chains_source,
        scorer_id: scorer.id(),
    })
}
