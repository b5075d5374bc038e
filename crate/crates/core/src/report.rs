//! Highlighted HTML and canonical JSON for explanations.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::doc::Document;
use crate::linker::{ChainsSource, ClassificationExplanation, HarmContextCluster};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("explanation is for {explanation:?}, document is {doc:?}")]
    DocMismatch { doc: String, explanation: String },
    #[error("{what} range {start}..{end} does not fit the document")]
    RangeMismatch {
        what: &'static str,
        start: usize,
        end: usize,
    },
    #[error("invalid theme: {0}")]
    Theme(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub name: String,
    pub css: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderTheme {
    pub flagged_sentence_style: String,
    pub chain_palette: Vec<PaletteEntry>,
    pub cue_style: String,
    pub legend: bool,
}

impl Default for RenderTheme {
    fn default() -> Self {
        let p = |name: &str, css: &str| PaletteEntry {
            name: name.into(),
            css: css.into(),
        };
        RenderTheme {
            flagged_sentence_style: "background-color:#f8b4b4;".into(),
            chain_palette: vec![
                p("yellow", "background-color:#fff176;"),
                p("green", "background-color:#a5d6a7;"),
                p("blue", "background-color:#90caf9;"),
                p("violet", "background-color:#ce93d8;"),
                p("orange", "background-color:#ffcc80;"),
            ],
            cue_style: "font-weight:bold;text-decoration:underline;".into(),
            legend: true,
        }
    }
}

impl RenderTheme {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.chain_palette.is_empty() {
            return Err(RenderError::Theme("chain palette is empty".into()));
        }
        if self.chain_palette.iter().any(|p| p.css == self.flagged_sentence_style) {
            return Err(RenderError::Theme("flagged style reused in chain palette".into()));
        }
        Ok(())
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum MarkKind {
    Sentence,
    Chain { slot: usize, chain: String, negative: bool },
    Cue,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Mark {
    kind: MarkKind,
    start: usize,
    end: usize,
}

impl Mark {
    fn open_tag(&self, theme: &RenderTheme) -> String {
        let range = format!("{}-{}", self.start, self.end);
        match &self.kind {
            MarkKind::Sentence => format!(
                r#"<mark data-kind="sentence" data-range="{range}" style="{}">"#,
                escape(&theme.flagged_sentence_style)
            ),
            MarkKind::Chain { slot, chain, negative } => {
                let p = &theme.chain_palette[slot % theme.chain_palette.len()];
                format!(
                    r#"<mark data-kind="chain" data-chain="{}" data-color="{}" data-negative="{negative}" data-range="{range}" style="{}">"#,
                    escape(chain),
                    escape(&p.name),
                    escape(&p.css)
                )
            }
            MarkKind::Cue => format!(
                r#"<mark data-kind="cue" data-range="{range}" style="{}">"#,
                escape(&theme.cue_style)
            ),
        }
    }
}

struct ChainSlot<'a> {
    slot: usize,
    cluster: &'a HarmContextCluster,
    negative: bool,
}

fn chain_slots(ex: &ClassificationExplanation) -> Vec<ChainSlot<'_>> {
    ex.clusters
        .iter()
        .map(|c| (c, false))
        .chain(ex.negative_links.iter().map(|c| (c, true)))
        .filter(|(c, _)| c.chain_id.is_some())
        .enumerate()
        .map(|(slot, (cluster, negative))| ChainSlot {
            slot,
            cluster,
            negative,
        })
        .collect()
}

fn check_range(what: &'static str, start: usize, end: usize, len: usize) -> Result<(), RenderError> {
    if start < end && end <= len {
        Ok(())
    } else {
        Err(RenderError::RangeMismatch { what, start, end })
    }
}

fn collect_marks(doc: &Document, ex: &ClassificationExplanation) -> Result<Vec<Mark>, RenderError> {
    if doc.doc_id != ex.doc_id {
        return Err(RenderError::DocMismatch {
            doc: doc.doc_id.clone(),
            explanation: ex.doc_id.clone(),
        });
    }
    let n = doc.len();
    let mut marks = Vec::new();
    for f in &ex.flagged_sentences {
        let ok = doc
            .sentence(f.sentence_id)
            .is_ok_and(|s| s.start == f.start && s.end == f.end);
        if !ok {
            return Err(RenderError::RangeMismatch {
                what: "flagged sentence",
                start: f.start,
                end: f.end,
            });
        }
        marks.push(Mark {
            kind: MarkKind::Sentence,
            start: f.start,
            end: f.end,
        });
    }
    for s in chain_slots(ex) {
        let chain = s.cluster.chain_id.as_ref().expect("filtered").to_string();
        for &(start, end) in &s.cluster.mentions {
            check_range("mention", start, end, n)?;
            marks.push(Mark {
                kind: MarkKind::Chain {
                    slot: s.slot,
                    chain: chain.clone(),
                    negative: s.negative,
                },
                start,
                end,
            });
        }
    }
    let mut cues = BTreeSet::new();
    for c in ex.clusters.iter().chain(&ex.negative_links) {
        for e in &c.cue_hits {
            let (start, end) = e.token_range();
            check_range("cue", start, end, n)?;
            cues.insert((start, end));
        }
    }
    marks.extend(cues.into_iter().map(|(start, end)| Mark {
        kind: MarkKind::Cue,
        start,
        end,
    }));
    Ok(marks)
}

fn legend_html(ex: &ClassificationExplanation, theme: &RenderTheme, marks: &[Mark]) -> String {
    let mut items = Vec::new();
    if marks.iter().any(|m| m.kind == MarkKind::Sentence) {
        items.push(format!(
            r#"<li data-legend="sentence"><span style="{}">&nbsp;&nbsp;&nbsp;</span> sentence flagged by the scorer</li>"#,
            escape(&theme.flagged_sentence_style)
        ));
    }
    for s in chain_slots(ex) {
        let p = &theme.chain_palette[s.slot % theme.chain_palette.len()];
        let chain = s.cluster.chain_id.as_ref().expect("filtered");
        let role = if s.negative {
            "negative context chain"
        } else {
            "context chain"
        };
        items.push(format!(
            r#"<li data-legend="chain" data-chain="{}"><span style="{}">&nbsp;&nbsp;&nbsp;</span> {role} {}</li>"#,
            escape(chain.as_str()),
            escape(&p.css),
            escape(chain.as_str())
        ));
    }
    if marks.iter().any(|m| m.kind == MarkKind::Cue) {
        items.push(format!(
            r#"<li data-legend="cue"><span style="{}">cue</span> lexicon or age cue</li>"#,
            escape(&theme.cue_style)
        ));
    }
    if items.is_empty() {
        return String::new();
    }
    format!("<ul class=\"legend\">\n{}\n</ul>\n", items.join("\n"))
}

/// Renders a standalone HTML page. Marks nest sentence, then chain, then
/// cue; each token sits in a `<span data-i>` so highlights can be checked.
pub fn render_html(doc: &Document, ex: &ClassificationExplanation, theme: &RenderTheme) -> Result<String, RenderError> {
    theme.validate()?;
    let mut marks = collect_marks(doc, ex)?;
    marks.sort_by(|a, b| a.kind.cmp(&b.kind).then((a.start, a.end).cmp(&(b.start, b.end))));

    let mut body = String::new();
    let mut open: Vec<&Mark> = Vec::new();
    for (i, tok) in doc.tokens.iter().enumerate() {
        let wanted: Vec<&Mark> = marks.iter().filter(|m| m.start <= i && i < m.end).collect();
        let keep = open.iter().zip(&wanted).take_while(|(a, b)| a == b).count();
        for _ in keep..open.len() {
            body.push_str("</mark>");
        }
        open.truncate(keep);
        if i > 0 {
            body.push_str(if doc.sentences.iter().any(|s| s.start == i) {
                "\n"
            } else {
                " "
            });
        }
        for m in &wanted[keep..] {
            body.push_str(&m.open_tag(theme));
            open.push(m);
        }
        write!(body, r#"<span data-i="{i}">{}</span>"#, escape(&tok.surface)).unwrap();
    }
    for _ in 0..open.len() {
        body.push_str("</mark>");
    }

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    writeln!(html, "<title>corelink: {}</title>", escape(&ex.doc_id)).unwrap();
    html.push_str("</head>\n<body style=\"font-family:sans-serif;max-width:50em;margin:2em auto;line-height:1.8;\">\n");
    writeln!(
        html,
        r#"<header><h1>{}</h1><p data-label="{}">label: <strong>{}</strong>, score {}, mode {}</p>"#,
        escape(&ex.doc_id),
        ex.label,
        ex.label,
        ex.score,
        ex.mode
    )
    .unwrap();
    if ex.chains_source == Some(ChainsSource::Fallback) {
        html.push_str(
            r#"<p data-badge="fallback-coref" style="display:inline-block;padding:0 .5em;border:1px solid #888;">chains from fallback resolver</p>"#,
        );
        html.push('\n');
    }
    html.push_str("</header>\n");
    if theme.legend {
        html.push_str(&legend_html(ex, theme, &marks));
    }
    writeln!(html, "<p class=\"text\" style=\"white-space:pre-wrap;\">{body}</p>").unwrap();
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

/// Canonical JSON: object keys sorted, arrays in explanation order.
pub fn render_json(ex: &ClassificationExplanation) -> Vec<u8> {
    let value = serde_json::to_value(ex).expect("explanation serializes");
    serde_json::to_vec(&value).expect("value serializes")
}

/// Hex SHA-256 of [`render_json`].
pub fn explanation_digest(ex: &ClassificationExplanation) -> String {
    hex::encode(Sha256::digest(render_json(ex)))
}
