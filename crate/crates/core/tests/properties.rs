use std::collections::BTreeSet;

use corelink_core::cues::{compile_lexicon, detect_age_expressions, match_cues, LexiconConfig};
use corelink_core::doc::{CorefChain, Document, Mention, Metadata, Sentence, Token};
use corelink_core::eval::{confusion, metrics};
use corelink_core::induce::{contrast_rank, tfidf_by_class, ClassCorpusStats, ContrastFilters};
use corelink_core::linker::{classify_document, link_chains, ClassifyOptions, Evidence, Gamma, Mode, Policy};
use corelink_core::scorer::{flag_sentences, LexiconScorer, LexiconScorerConfig, PrecomputedScorer, SentenceScorer};
use corelink_core::synth::{random_document, RandomDocParams};
use corelink_core::{parse_document_json, CompiledLexicon, Label};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn lexicon() -> CompiledLexicon {
    compile_lexicon(&LexiconConfig::demo()).unwrap()
}

fn random_doc(seed: u64) -> Document {
    let mut rng = StdRng::seed_from_u64(seed);
    random_document(&mut rng, &format!("r{seed}"), &RandomDocParams::default())
}

fn options(mode: Mode, gamma: Gamma) -> ClassifyOptions {
    ClassifyOptions {
        mode,
        policy: Policy { negative_weight: gamma },
        threshold: 0.5,
    }
}

// Participant check written as a plain scan, independent of the linker's.
fn is_core(doc: &Document, t: usize) -> bool {
    let tok = &doc.tokens[t];
    if tok.head == t {
        return false;
    }
    let base = tok.deprel.split(':').next().unwrap();
    match base {
        "nsubj" | "obj" | "iobj" | "obl" => true,
        "conj" => is_core(doc, tok.head),
        _ => false,
    }
}

fn is_participant(doc: &Document, sid: usize, t: usize) -> bool {
    let s = doc.sentences[sid];
    if !(s.start..s.end).any(|i| doc.tokens[i].pos == "VERB" || doc.tokens[i].pos == "AUX") {
        return false;
    }
    let tok = &doc.tokens[t];
    is_core(doc, t) || ((tok.pos == "PRON" || tok.deprel.ends_with(":poss")) && tok.head != t && is_core(doc, tok.head))
}

fn in_chain(chain: &CorefChain, t: usize) -> bool {
    chain.mentions.iter().any(|m| m.start <= t && t < m.end)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_documents_round_trip(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let again = parse_document_json(doc.to_json_pretty().as_bytes()).unwrap();
        prop_assert_eq!(&again, &doc);
        for i in 0..doc.len() {
            prop_assert_eq!(doc.sentences.iter().filter(|s| s.contains(i)).count(), 1);
        }
    }

    #[test]
    fn raising_threshold_never_adds_sentences(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let doc = random_doc(seed);
        let scores = PrecomputedScorer.score(&doc).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let low: BTreeSet<usize> = flag_sentences(&scores, &doc, lo).unwrap().sentence_ids.into_iter().collect();
        let high: BTreeSet<usize> = flag_sentences(&scores, &doc, hi).unwrap().sentence_ids.into_iter().collect();
        prop_assert!(high.is_subset(&low));
    }

    #[test]
    fn clusters_are_sound(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let lex = lexicon();
        let ex = classify_document(&doc, &PrecomputedScorer, &lex, &options(Mode::Coref, Gamma::ONE)).unwrap();
        let scores = doc.sentence_scores.as_ref().unwrap();
        for c in ex.clusters.iter().chain(&ex.negative_links) {
            for &sid in &c.linked_sentences {
                prop_assert!(scores[sid] >= 0.5);
            }
            let Some(id) = &c.chain_id else {
                // chainless: the single hit lies in the linked sentence
                let s = doc.sentences[c.linked_sentences[0]];
                prop_assert!(s.contains(c.cue_hits[0].first_token()));
                continue;
            };
            let chain = if ex.chains_source == Some(corelink_core::ChainsSource::Provided) {
                doc.chains.iter().find(|ch| &ch.id == id).unwrap().clone()
            } else {
                corelink_core::resolve(&doc, &corelink_core::ResolverConfig::from_lexicon(&lex))
                    .unwrap()
                    .into_iter()
                    .find(|ch| &ch.id == id)
                    .unwrap()
            };
            for hit in &c.cue_hits {
                if let Evidence::Cue(h) = hit {
                    prop_assert!(in_chain(&chain, h.token_index));
                }
            }
            for p in &c.participant_evidence {
                prop_assert!(in_chain(&chain, p.token_index));
                prop_assert!(doc.sentences[p.sentence_id].contains(p.token_index));
                if p.role.is_some() {
                    prop_assert!(is_participant(&doc, p.sentence_id, p.token_index));
                }
            }
        }
    }

    #[test]
    fn adding_a_chain_never_unflags(seed in any::<u64>(), extra in any::<u64>()) {
        let doc = random_doc(seed);
        prop_assume!(!doc.chains.is_empty());
        let lex = lexicon();
        let before = classify_document(&doc, &PrecomputedScorer, &lex, &options(Mode::Coref, Gamma::ZERO)).unwrap();
        let mut rng = StdRng::seed_from_u64(extra);
        let mut spans = BTreeSet::new();
        while spans.len() < 2 {
            let s = doc.sentences[rand::Rng::random_range(&mut rng, 0..doc.sentences.len())];
            let start = rand::Rng::random_range(&mut rng, s.start..s.end);
            spans.insert((start, start + 1));
        }
        let mut chains = doc.chains.clone();
        let id = corelink_core::ChainId::new("extra");
        chains.push(CorefChain {
            id: id.clone(),
            mentions: spans
                .into_iter()
                .map(|(start, end)| Mention { chain_id: id.clone(), start, end, head_token: start })
                .collect(),
        });
        let bigger = Document::new(doc.doc_id.clone(), doc.tokens.clone(), doc.sentences.clone(), chains, doc.sentence_scores.clone(), Metadata::default()).unwrap();
        let after = classify_document(&bigger, &PrecomputedScorer, &lex, &options(Mode::Coref, Gamma::ZERO)).unwrap();
        if before.label == Label::Harmful {
            prop_assert_eq!(after.label, Label::Harmful);
        }
    }

    #[test]
    fn baseline_is_subset_of_coref(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let lex = lexicon();
        let base = classify_document(&doc, &PrecomputedScorer, &lex, &options(Mode::Baseline, Gamma::ZERO)).unwrap();
        let coref = classify_document(&doc, &PrecomputedScorer, &lex, &options(Mode::Coref, Gamma::ZERO)).unwrap();
        if base.label == Label::Harmful {
            prop_assert_eq!(coref.label, Label::Harmful);
        }
    }

    #[test]
    fn explanations_are_deterministic(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let lex = lexicon();
        let a = classify_document(&doc, &PrecomputedScorer, &lex, &ClassifyOptions::default()).unwrap();
        let b = classify_document(&doc.clone(), &PrecomputedScorer, &lex, &ClassifyOptions::default()).unwrap();
        prop_assert_eq!(corelink_core::render_json(&a), corelink_core::render_json(&b));
    }

    #[test]
    fn matching_is_position_stable(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let shifted = prepend_sentence(&doc);
        let lex = lexicon();
        let a = match_cues(&doc, &lex);
        let b = match_cues(&shifted, &lex);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.token_index + 3, y.token_index);
            prop_assert_eq!(&x.matched_entry, &y.matched_entry);
        }
        let a = detect_age_expressions(&doc, &lex);
        let b = detect_age_expressions(&shifted, &lex);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.token_span.0 + 3, x.token_span.1 + 3), y.token_span);
            prop_assert_eq!(x.parsed_age, y.parsed_age);
        }
    }

    #[test]
    fn metrics_match_definitions(labels in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let to = |b: bool| if b { Label::Harmful } else { Label::NonHarmful };
        let gold: Vec<Label> = labels.iter().map(|p| to(p.0)).collect();
        let pred: Vec<Label> = labels.iter().map(|p| to(p.1)).collect();
        let m = confusion(&gold, &pred).unwrap();
        let met = metrics(&m).unwrap();
        prop_assert_eq!(met.accuracy, (m.tp + m.tn) as f64 / m.total() as f64);
        if let (Some(p), Some(r), Some(f)) = (met.precision, met.recall, met.f1) {
            prop_assert!(p.min(r) - 1e-12 <= f && f <= p.max(r) + 1e-12);
        }
        // relabeling document order changes nothing
        let mut pairs: Vec<_> = gold.iter().copied().zip(pred.iter().copied()).collect();
        pairs.reverse();
        let (g2, p2): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        prop_assert_eq!(confusion(&g2, &p2).unwrap(), m);
    }

    #[test]
    fn contrast_rank_ignores_document_order(seed in any::<u64>()) {
        let mut corpus: Vec<Document> = (0..8)
            .map(|i| {
                let mut d = random_doc(seed.wrapping_add(i));
                d.metadata.gold_label = Some(if i % 2 == 0 { Label::Harmful } else { Label::NonHarmful });
                d
            })
            .collect();
        let filters = ContrastFilters { semantic_allow: None, pos_allow: BTreeSet::new(), ..Default::default() };
        let rank = |c: &[Document]| {
            let s = tfidf_by_class(c, None).unwrap();
            contrast_rank(&s[&Label::Harmful], &s[&Label::NonHarmful], &filters)
        };
        let first = rank(&corpus);
        corpus.shuffle(&mut StdRng::seed_from_u64(seed ^ 0x5eed));
        let second = rank(&corpus);
        prop_assert_eq!(first, second);
    }

    #[test]
    fn contrast_rank_scale_invariant(counts in proptest::collection::vec((0u64..50, 0u64..50), 1..12), k in 1u64..6) {
        let stats = |label: Label, pick: &dyn Fn(&(u64, u64)) -> u64, scale: u64| ClassCorpusStats {
            label,
            documents: 1,
            lemmas: counts
                .iter()
                .enumerate()
                .filter(|(_, c)| pick(c) > 0)
                .map(|(i, c)| (format!("w{i:02}"), corelink_core::induce::LemmaStats { tf: pick(c) * scale, df: 1, tfidf: 0.0, pos: None, semantic: None }))
                .collect(),
        };
        let filters = |alpha: f64| ContrastFilters { pos_allow: BTreeSet::new(), semantic_allow: None, min_count: 0, smoothing: alpha, top_k: None };
        let base = contrast_rank(&stats(Label::Harmful, &|c| c.0, 1), &stats(Label::NonHarmful, &|c| c.1, 1), &filters(1.0));
        let scaled = contrast_rank(&stats(Label::Harmful, &|c| c.0, k), &stats(Label::NonHarmful, &|c| c.1, k), &filters(k as f64));
        let order = |r: &corelink_core::RankedCandidates| r.forward.iter().map(|c| c.lemma.clone()).collect::<Vec<_>>();
        prop_assert_eq!(order(&base), order(&scaled));
    }
}

fn prepend_sentence(doc: &Document) -> Document {
    let shift = 3;
    let mut tokens = vec![
        Token {
            index: 0,
            surface: "It".into(),
            lemma: "it".into(),
            pos: "PRON".into(),
            head: 1,
            deprel: "nsubj".into(),
            semantic: None,
        },
        Token {
            index: 1,
            surface: "rained".into(),
            lemma: "rain".into(),
            pos: "VERB".into(),
            head: 1,
            deprel: "root".into(),
            semantic: None,
        },
        Token {
            index: 2,
            surface: ".".into(),
            lemma: ".".into(),
            pos: "PUNCT".into(),
            head: 1,
            deprel: "punct".into(),
            semantic: None,
        },
    ];
    tokens.extend(doc.tokens.iter().map(|t| Token {
        index: t.index + shift,
        head: t.head + shift,
        ..t.clone()
    }));
    let mut sentences = vec![Sentence {
        id: 0,
        start: 0,
        end: shift,
    }];
    sentences.extend(doc.sentences.iter().map(|s| Sentence {
        id: s.id + 1,
        start: s.start + shift,
        end: s.end + shift,
    }));
    let chains = doc
        .chains
        .iter()
        .map(|c| CorefChain {
            id: c.id.clone(),
            mentions: c
                .mentions
                .iter()
                .map(|m| Mention {
                    start: m.start + shift,
                    end: m.end + shift,
                    head_token: m.head_token + shift,
                    ..m.clone()
                })
                .collect(),
        })
        .collect();
    let scores = doc
        .sentence_scores
        .as_ref()
        .map(|s| std::iter::once(0.0).chain(s.iter().copied()).collect());
    Document::new(
        doc.doc_id.clone(),
        tokens,
        sentences,
        chains,
        scores,
        Metadata::default(),
    )
    .unwrap()
}

#[test]
fn linker_depends_only_on_flagged_set() {
    // a lexicon scorer and precomputed scores that flag the same sentences
    let lex = lexicon();
    for seed in 0..200u64 {
        let mut doc = random_doc(seed);
        let scorer = LexiconScorer::new(LexiconScorerConfig {
            term_weights: [("hug".to_string(), 4.0), ("see".to_string(), 1.0)].into(),
            bias: -1.0,
        })
        .unwrap();
        let lexicon_scores = scorer.score(&doc).unwrap();
        doc.sentence_scores = Some(lexicon_scores.iter().map(|s| s.probability).collect());
        let from_lexicon = flag_sentences(&lexicon_scores, &doc, 0.5).unwrap();
        let from_precomputed = flag_sentences(&PrecomputedScorer.score(&doc).unwrap(), &doc, 0.5).unwrap();
        assert_eq!(from_lexicon, from_precomputed);
        let cues = match_cues(&doc, &lex);
        let ages = detect_age_expressions(&doc, &lex);
        assert_eq!(
            link_chains(&doc, &from_lexicon, &cues, &ages, &doc.chains),
            link_chains(&doc, &from_precomputed, &cues, &ages, &doc.chains)
        );
    }
}
