//! Context-aware content flagging.
//!
//! A sentence scorer flags sentences, a lexicon finds cue tokens, and
//! coreference chains carry cues from anywhere in the document to the
//! participants of flagged sentences. Every label comes with a
//! [`ClassificationExplanation`] listing the evidence behind it.

pub mod conllu;
pub mod coref;
pub mod cues;
pub mod doc;
pub mod eval;
pub mod induce;
pub mod linker;
pub mod report;
pub mod scorer;
pub mod synth;

pub use conllu::parse_conllu;
pub use coref::{resolve, AgreementFeatures, ResolverConfig};
pub use cues::{
    compile_lexicon, detect_age_expressions, match_cues, AgeHit, Category, CompiledLexicon, CueHit, LexiconConfig,
    LexiconError,
};
pub use doc::{parse_document_json, ChainId, CorefChain, DocError, Document, Label, Mention, Sentence, Token};
pub use eval::{compare_runs, confusion, metrics, Comparison, ConfusionMatrix, EvalError, Metrics, NamedRun};
pub use induce::{contrast_rank, export_candidates, tfidf_by_class, ContrastFilters, InductionError, RankedCandidates};
pub use linker::{
    classify_document, link_chains, ChainsSource, ClassificationExplanation, ClassifyError, ClassifyOptions, Evidence,
    Gamma, HarmContextCluster, Mode, Policy,
};
pub use report::{explanation_digest, render_html, render_json, RenderError, RenderTheme};
pub use scorer::{
    flag_sentences, FlaggedSet, LexiconScorer, LexiconScorerConfig, PrecomputedScorer, RemoteScorer, ScoreError,
    SentenceScorer,
};
