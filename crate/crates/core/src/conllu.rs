//! CoNLL-U ingestion.
//!
//! Reads the ten-column format with blank-line sentence boundaries. Heads are
//! sentence-local and 1-based in the file; `0` marks the root. Multiword token
//! ranges (`1-2`) and empty nodes (`1.1`) are skipped.
//!
//! Coreference is read from the MISC column: `Coref=<chain>` on a mention's
//! head token, optionally with `CorefSpan=<start>-<end>` giving the mention's
//! document-wide, end-exclusive token range. Without `CorefSpan` the mention
//! is the head token alone.
//!
//! Document-level comments understood: `# newdoc id = ...`,
//! `# gold_label = ...`, `# source = ...`, and the per-sentence
//! `# sentence_score = ...`.

use std::collections::BTreeMap;

use crate::doc::{ChainId, CorefChain, DocError, Document, Label, Mention, Metadata, Sentence, Token};

struct PendingMention {
    chain: String,
    head: usize,
    span: Option<(usize, usize)>,
    line: usize,
}

/// Parses a CoNLL-U document. `doc_id` defaults to `conllu` when the file has
/// no `# newdoc id` comment.
pub fn parse_conllu(bytes: &[u8]) -> Result<Document, DocError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DocError::Conllu {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;

    let mut doc_id = None;
    let mut metadata = Metadata::default();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut scores: Vec<Option<f64>> = Vec::new();
    let mut pending_score: Option<f64> = None;
    let mut mentions: Vec<PendingMention> = Vec::new();
    // (token index, local head, line) for the sentence being read
    let mut local_heads: Vec<(usize, usize, usize)> = Vec::new();
    let mut sent_start = 0usize;

    let close_sentence = |tokens: &mut Vec<Token>,
                          sentences: &mut Vec<Sentence>,
                          scores: &mut Vec<Option<f64>>,
                          pending_score: &mut Option<f64>,
                          local_heads: &mut Vec<(usize, usize, usize)>,
                          sent_start: &mut usize|
     -> Result<(), DocError> {
        if local_heads.is_empty() {
            return Ok(());
        }
        let len = local_heads.len();
        for &(idx, head, line) in local_heads.iter() {
            tokens[idx].head = if head == 0 {
                idx
            } else if head <= len {
                *sent_start + head - 1
            } else {
                return Err(DocError::Validation {
                    field: format!("tokens[{idx}].head"),
                    message: format!("cross-sentence head (line {line})"),
                });
            };
        }
        let id = sentences.len();
        sentences.push(Sentence {
            id,
            start: *sent_start,
            end: *sent_start + len,
        });
        scores.push(pending_score.take());
        *sent_start += len;
        local_heads.clear();
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            close_sentence(
                &mut tokens,
                &mut sentences,
                &mut scores,
                &mut pending_score,
                &mut local_heads,
                &mut sent_start,
            )?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "newdoc id" => doc_id = Some(value.to_string()),
                    "gold_label" => {
                        metadata.gold_label = Some(value.parse::<Label>().map_err(|e| DocError::Conllu {
                            line: line_no,
                            message: e.to_string(),
                        })?)
                    }
                    "source" => metadata.source = Some(value.to_string()),
                    "sentence_score" => {
                        pending_score = Some(value.parse::<f64>().map_err(|e| DocError::Conllu {
                            line: line_no,
                            message: format!("bad sentence_score: {e}"),
                        })?)
                    }
                    _ => {}
                }
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(DocError::Conllu {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let local_id: usize = cols[0].parse().map_err(|_| DocError::Conllu {
            line: line_no,
            message: format!("bad token id {:?}", cols[0]),
        })?;
        if local_id != local_heads.len() + 1 {
            return Err(DocError::Conllu {
                line: line_no,
                message: format!("token id {local_id} out of sequence"),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| DocError::Conllu {
            line: line_no,
            message: format!("bad head {:?}", cols[6]),
        })?;
        let index = tokens.len();
        local_heads.push((index, head, line_no));

        let mut semantic = None;
        let mut coref = None;
        let mut span = None;
        if cols[9] != "_" {
            for attr in cols[9].split('|') {
                let Some((k, v)) = attr.split_once('=') else { continue };
                match k {
                    "Coref" => coref = Some(v.to_string()),
                    "CorefSpan" => {
                        let parsed = v
                            .split_once('-')
                            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
                        span = Some(parsed.ok_or_else(|| DocError::Validation {
                            field: format!("tokens[{index}].misc.CorefSpan"),
                            message: format!("inconsistent CorefSpan {v:?}"),
                        })?);
                    }
                    "Sem" => semantic = Some(v.to_string()),
                    _ => {}
                }
            }
        }
        match (coref, span) {
            (Some(chain), span) => mentions.push(PendingMention {
                chain,
                head: index,
                span,
                line: line_no,
            }),
            (None, Some(_)) => {
                return Err(DocError::Validation {
                    field: format!("tokens[{index}].misc.CorefSpan"),
                    message: "inconsistent CorefSpan: no Coref attribute on token".into(),
                })
            }
            (None, None) => {}
        }

        tokens.push(Token {
            index,
            surface: cols[1].to_string(),
            lemma: cols[2].to_string(),
            pos: cols[3].to_string(),
            head: index,
            deprel: cols[7].to_string(),
            semantic,
        });
    }
    close_sentence(
        &mut tokens,
        &mut sentences,
        &mut scores,
        &mut pending_score,
        &mut local_heads,
        &mut sent_start,
    )?;

    let sentence_scores = if scores.iter().all(Option::is_none) {
        None
    } else if scores.iter().all(Option::is_some) {
        Some(scores.into_iter().flatten().collect())
    } else {
        return Err(DocError::validation(
            "sentence_scores",
            "sentence_score comment present on some sentences but not all",
        ));
    };

    let mut grouped: BTreeMap<String, Vec<Mention>> = BTreeMap::new();
    for m in mentions {
        let (start, end) = m.span.unwrap_or((m.head, m.head + 1));
        if start >= end || end > tokens.len() || !(start..end).contains(&m.head) {
            return Err(DocError::Validation {
                field: format!("tokens[{}].misc.CorefSpan", m.head),
                message: format!("inconsistent CorefSpan {start}-{end} for head token (line {})", m.line),
            });
        }
        grouped.entry(m.chain.clone()).or_default().push(Mention {
            chain_id: ChainId::new(m.chain),
            start,
            end,
            head_token: m.head,
        });
    }
    let mut chains: Vec<CorefChain> = grouped
        .into_iter()
        .map(|(id, mut mentions)| {
            mentions.sort_by_key(|m| (m.start, m.end));
            CorefChain {
                id: ChainId::new(id),
                mentions,
            }
        })
        .collect();
    chains.sort_by_key(|c| (c.mentions[0].start, c.mentions[0].end));

    Document::new(
        doc_id.unwrap_or_else(|| "conllu".to_string()),
        tokens,
        sentences,
        chains,
        sentence_scores,
        metadata,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, form: &str, lemma: &str, pos: &str, head: usize, rel: &str, misc: &str) -> String {
        format!("{id}\t{form}\t{lemma}\t{pos}\t_\t_\t{head}\t{rel}\t_\t{misc}\n")
    }

    #[test]
    fn no_coref_attributes_yields_no_chains() {
        let mut s = String::from("# newdoc id = plain\n");
        s += &row(1, "Birds", "bird", "NOUN", 2, "nsubj", "_");
        s += &row(2, "sing", "sing", "VERB", 0, "root", "_");
        let doc = parse_conllu(s.as_bytes()).unwrap();
        assert_eq!(doc.doc_id, "plain");
        assert!(doc.chains.is_empty());
        assert_eq!(doc.sentences.len(), 1);
        assert_eq!(doc.tokens[1].head, 1);
        assert_eq!(doc.tokens[0].head, 1);
    }

    #[test]
    fn groups_mentions_by_chain_id() {
        let mut s = String::new();
        s += &row(1, "The", "the", "DET", 2, "det", "_");
        s += &row(2, "teacher", "teacher", "NOUN", 3, "nsubj", "Coref=e1|CorefSpan=0-2");
        s += &row(3, "arrived", "arrive", "VERB", 0, "root", "_");
        s += "\n";
        s += &row(1, "He", "he", "PRON", 2, "nsubj", "Coref=e1");
        s += &row(2, "sat", "sit", "VERB", 0, "root", "SpaceAfter=No");
        let doc = parse_conllu(s.as_bytes()).unwrap();

        // group-by oracle over the MISC column
        let mut expected: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, line) in s.lines().filter(|l| !l.is_empty()).enumerate() {
            if let Some(id) = line
                .split('\t')
                .nth(9)
                .unwrap()
                .split('|')
                .find_map(|a| a.strip_prefix("Coref="))
            {
                expected.entry(id.to_string()).or_default().push(i);
            }
        }
        assert_eq!(doc.chains.len(), expected.len());
        let heads: Vec<usize> = doc.chains[0].mentions.iter().map(|m| m.head_token).collect();
        assert_eq!(heads, expected["e1"]);
        assert_eq!(doc.chains[0].mentions[0].range(), 0..2);
        assert_eq!(doc.chains[0].mentions[1].range(), 3..4);
    }

    #[test]
    fn head_outside_sentence_is_rejected() {
        let mut s = String::new();
        s += &row(1, "Birds", "bird", "NOUN", 5, "nsubj", "_");
        s += &row(2, "sing", "sing", "VERB", 0, "root", "_");
        let err = parse_conllu(s.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("cross-sentence head"), "{err}");
    }

    #[test]
    fn inconsistent_coref_span_is_rejected() {
        let mut s = String::new();
        s += &row(1, "Birds", "bird", "NOUN", 2, "nsubj", "Coref=a|CorefSpan=1-2");
        s += &row(2, "sing", "sing", "VERB", 0, "root", "Coref=a");
        let err = parse_conllu(s.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("inconsistent CorefSpan"), "{err}");

        let mut s = String::new();
        s += &row(1, "Birds", "bird", "NOUN", 2, "nsubj", "CorefSpan=0-1");
        s += &row(2, "sing", "sing", "VERB", 0, "root", "_");
        assert!(parse_conllu(s.as_bytes()).is_err());
    }

    #[test]
    fn skips_multiword_and_empty_nodes() {
        let mut s = String::new();
        s += "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n";
        s += &row(1, "de", "de", "ADP", 2, "case", "_");
        s += &row(2, "el", "el", "DET", 0, "root", "_");
        s += "2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n";
        let doc = parse_conllu(s.as_bytes()).unwrap();
        assert_eq!(doc.len(), 2);
    }
}
