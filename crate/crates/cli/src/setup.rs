use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use corelink_core::scorer::SCORER_URL_ENV;
use corelink_core::{
    compile_lexicon, parse_conllu, parse_document_json, CompiledLexicon, Document, LexiconConfig, LexiconScorer,
    LexiconScorerConfig, PrecomputedScorer, RemoteScorer, SentenceScorer,
};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Lexicon,
    Precomputed,
    Remote,
}

/// `--config` file. Only the `[scorer]` table is read.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub scorer: ScorerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSection {
    #[serde(default)]
    pub term_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub bias: f64,
    pub remote: Option<RemoteSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    pub url: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

pub fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The lexicon at `path`, or the bundled demo lexicon.
pub fn load_lexicon(path: Option<&Path>) -> Result<CompiledLexicon> {
    let config = match path {
        Some(p) => LexiconConfig::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => {
            tracing::warn!("no --lexicon given; using the bundled demo lexicon");
            LexiconConfig::demo()
        }
    };
    let lexicon = compile_lexicon(&config)?;
    for w in lexicon.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(lexicon)
}

pub fn build_scorer(kind: ScorerKind, config: &CliConfig) -> Result<Arc<dyn SentenceScorer>> {
    Ok(match kind {
        ScorerKind::Precomputed => Arc::new(PrecomputedScorer),
        ScorerKind::Lexicon => {
            if config.scorer.term_weights.is_empty() {
                bail!("the lexicon scorer needs [scorer.term_weights] in --config");
            }
            Arc::new(LexiconScorer::new(LexiconScorerConfig {
                term_weights: config.scorer.term_weights.clone(),
                bias: config.scorer.bias,
            })?)
        }
        ScorerKind::Remote => {
            let remote = config.scorer.remote.as_ref();
            let timeout = Duration::from_secs(remote.map_or(default_timeout(), |r| r.timeout_secs));
            let url = remote
                .and_then(|r| r.url.clone())
                .or_else(|| std::env::var(SCORER_URL_ENV).ok().filter(|s| !s.is_empty()));
            let Some(url) = url else {
                bail!("the remote scorer needs [scorer.remote] url in --config or {SCORER_URL_ENV}");
            };
            Arc::new(RemoteScorer::new(url, timeout))
        }
    })
}

/// Reads a `.conllu` or JSON document.
pub fn load_document(path: &Path) -> Result<Document> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let is_conllu = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("conllu"));
    let doc = if is_conllu {
        parse_conllu(&bytes)
    } else {
        parse_document_json(&bytes)
    };
    doc.with_context(|| format!("parsing {}", path.display()))
}

/// Every `.json` and `.conllu` file under `dir`, sorted by path.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "json" | "conllu"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_corpus(dir: &Path) -> Result<Vec<Document>> {
    let docs = corpus_files(dir)?
        .iter()
        .map(|p| load_document(p))
        .collect::<Result<Vec<_>>>()?;
    if docs.is_empty() {
        bail!("no .json or .conllu documents under {}", dir.display());
    }
    Ok(docs)
}
