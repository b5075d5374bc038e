mod setup;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use corelink_core::induce::{load_gazetteer, ContrastFilters};
use corelink_core::{
    classify_document, compare_runs, contrast_rank, export_candidates, render_html, render_json, resolve,
    tfidf_by_class, ClassifyOptions, Gamma, Label, Mode, NamedRun, Policy, RenderTheme, ResolverConfig,
};
use corelink_service::{AppState, ServiceConfig, Store};
use setup::ScorerKind;

#[derive(Parser)]
#[command(name = "corelink", version, about = "Coreference-linked contextual cue classifier")]
struct Cli {
    /// Lexicon file (TOML or JSON); the bundled demo lexicon when omitted.
    #[arg(long, global = true, env = "CORELINK_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "precomputed")]
    scorer: ScorerKind,
    #[arg(long, global = true, default_value = "coref")]
    mode: Mode,
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,
    /// Weight of each negative link, as an integer, fraction (`1/2`) or decimal.
    #[arg(long, global = true, default_value = "1")]
    gamma: Gamma,
    /// TOML file with a `[scorer]` table.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify documents and print canonical explanation JSON, one per line.
    Classify {
        #[arg(required = true)]
        docs: Vec<PathBuf>,
        /// Write the explanation here instead of stdout (single document).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a labeled corpus and print the comparison table.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Modes to compare; defaults to `--mode`.
        #[arg(long, value_delimiter = ',')]
        runs: Vec<Mode>,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Propose lexicon entries from a labeled corpus.
    Induce {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        top_k: Option<usize>,
        /// Allowed POS tags; empty allows all.
        #[arg(long, value_delimiter = ',', default_value = "NOUN")]
        pos: Vec<String>,
        /// Allowed semantic tags.
        #[arg(long, value_delimiter = ',', default_value = "person")]
        semantic: Vec<String>,
        #[arg(long)]
        no_semantic_filter: bool,
        #[arg(long, default_value_t = 1.0)]
        smoothing: f64,
    },
    /// Render a highlighted HTML report.
    Render {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_legend: bool,
    },
    /// Run the review service.
    Serve {
        #[arg(long, env = "CORELINK_ADDR", default_value = corelink_service::DEFAULT_ADDR)]
        addr: SocketAddr,
        #[arg(long, env = "CORELINK_DATA_DIR", default_value = "corelink-data")]
        data_dir: PathBuf,
        /// Static review UI to serve under /ui/.
        #[arg(long, env = "CORELINK_UI_DIR")]
        ui_dir: Option<PathBuf>,
    },
    /// Add chains from the fallback resolver and print the document JSON.
    Resolve {
        doc: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop chains already present instead of refusing.
        #[arg(long)]
        replace: bool,
    },
}

fn options(cli: &Cli, mode: Mode) -> ClassifyOptions {
    ClassifyOptions {
        mode,
        policy: Policy {
            negative_weight: cli.gamma,
        },
        threshold: cli.threshold,
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = setup::load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Classify { docs, out } => {
            if out.is_some() && docs.len() != 1 {
                bail!("--out takes a single document");
            }
            let lexicon = setup::load_lexicon(cli.lexicon.as_deref())?;
            let scorer = setup::build_scorer(cli.scorer, &config)?;
            let mut buf = Vec::new();
            for path in docs {
                let doc = setup::load_document(path)?;
                let ex = classify_document(&doc, scorer.as_ref(), &lexicon, &options(&cli, cli.mode))
                    .with_context(|| format!("classifying {}", path.display()))?;
                buf.extend(render_json(&ex));
                buf.push(b'\n');
            }
            write_output(out.as_deref(), &buf)
        }
        Command::Evaluate { corpus, runs, report } => {
            let lexicon = setup::load_lexicon(cli.lexicon.as_deref())?;
            let scorer = setup::build_scorer(cli.scorer, &config)?;
            let docs = setup::load_corpus(corpus)?;
            let gold: Vec<Label> = docs
                .iter()
                .map(|d| {
                    d.metadata
                        .gold_label
                        .with_context(|| format!("{} has no gold_label", d.doc_id))
                })
                .collect::<Result<_>>()?;
            let doc_ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
            let modes = if runs.is_empty() { vec![cli.mode] } else { runs.clone() };
            let mut named = Vec::new();
            let mut predictions: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
            for mode in modes {
                let predicted: Vec<Label> = docs
                    .iter()
                    .map(|d| Ok(classify_document(d, scorer.as_ref(), &lexicon, &options(&cli, mode))?.label))
                    .collect::<Result<_>>()?;
                predictions.insert(
                    mode.to_string(),
                    doc_ids.iter().cloned().zip(predicted.iter().copied()).collect(),
                );
                named.push(NamedRun {
                    name: mode.to_string(),
                    doc_ids: doc_ids.clone(),
                    gold: gold.clone(),
                    predicted,
                });
            }
            let comparison = compare_runs(&named)?;
            print!("{}", comparison.to_text());
            if let Some(path) = report {
                let body = serde_json::json!({"comparison": comparison, "predictions": predictions});
                std::fs::write(path, serde_json::to_string_pretty(&body)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Induce {
            corpus,
            out,
            gazetteer,
            min_count,
            top_k,
            pos,
            semantic,
            no_semantic_filter,
            smoothing,
        } => {
            let docs = setup::load_corpus(corpus)?;
            let gaz = gazetteer.as_deref().map(load_gazetteer).transpose()?;
            let stats = tfidf_by_class(&docs, gaz.as_ref())?;
            let filters = ContrastFilters {
                pos_allow: pos.iter().filter(|p| !p.is_empty()).cloned().collect(),
                semantic_allow: (!no_semantic_filter).then(|| semantic.iter().cloned().collect::<BTreeSet<_>>()),
                min_count: *min_count,
                smoothing: *smoothing,
                top_k: *top_k,
            };
            let ranked = contrast_rank(&stats[&Label::Harmful], &stats[&Label::NonHarmful], &filters);
            for w in &ranked.warnings {
                eprintln!("warning: {w}");
            }
            export_candidates(&ranked, out)?;
            println!("{:<20} {:>8} {:>8} {:>10}", "lemma", "harmful", "other", "ratio");
            for c in ranked.forward.iter().take(20) {
                println!(
                    "{:<20} {:>8} {:>8} {:>10.3}",
                    c.lemma, c.count_for, c.count_against, c.ratio
                );
            }
            eprintln!("draft written to {} (review_pending = true)", out.display());
            Ok(())
        }
        Command::Render { doc, out, no_legend } => {
            let lexicon = setup::load_lexicon(cli.lexicon.as_deref())?;
            let scorer = setup::build_scorer(cli.scorer, &config)?;
            let document = setup::load_document(doc)?;
            let ex = classify_document(&document, scorer.as_ref(), &lexicon, &options(&cli, cli.mode))?;
            let theme = RenderTheme {
                legend: !no_legend,
                ..RenderTheme::default()
            };
            let html = render_html(&document, &ex, &theme)?;
            std::fs::write(out, html).with_context(|| format!("writing {}", out.display()))
        }
        Command::Serve { addr, data_dir, ui_dir } => {
            let lexicon = setup::load_lexicon(cli.lexicon.as_deref())?;
            let scorer = setup::build_scorer(cli.scorer, &config)?;
            let store = Store::open(data_dir)?;
            let state = AppState::new(
                ServiceConfig {
                    lexicon: Arc::new(lexicon),
                    scorer,
                    options: options(&cli, cli.mode),
                    ui_dir: ui_dir.clone(),
                },
                store,
            );
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(corelink_service::serve(*addr, state))?;
            Ok(())
        }
        Command::Resolve { doc, out, replace } => {
            let lexicon = setup::load_lexicon(cli.lexicon.as_deref())?;
            let mut document = setup::load_document(doc)?;
            if *replace {
                document.chains.clear();
            }
            document.chains = resolve(&document, &ResolverConfig::from_lexicon(&lexicon))?;
            let mut json = document.to_json_pretty().into_bytes();
            json.push(b'\n');
            write_output(out.as_deref(), &json)
        }
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
