//! Span extraction, exact-match F1, and segmented-text output.

use crate::corpus::CharSequence;
use crate::error::{Error, Result};

use super::data::{SchemeKind, TagScheme};

/// A labeled character span, end-exclusive. BMES spans carry an empty
/// label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Extracts spans from one sentence's tags. Illegal tag bigrams are
/// repaired by splitting at the violation, so any tag sequence yields a
/// consistent segmentation.
pub fn extract_spans(tags: &[String], scheme: &TagScheme) -> Result<Vec<Span>> {
    match scheme.kind() {
        SchemeKind::Bmes => extract_bmes(tags),
        SchemeKind::Bio => extract_bio(tags),
    }
}

fn extract_bmes(tags: &[String]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag.as_str() {
            "B" => {
                if let Some(s) = open.take() {
                    spans.push(Span { start: s, end: i, label: String::new() });
                }
                open = Some(i);
            }
            "M" => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            "E" => {
                let s = open.take().unwrap_or(i);
                spans.push(Span { start: s, end: i + 1, label: String::new() });
            }
            "S" => {
                if let Some(s) = open.take() {
                    spans.push(Span { start: s, end: i, label: String::new() });
                }
                spans.push(Span { start: i, end: i + 1, label: String::new() });
            }
            other => {
                return Err(Error::InvalidTag {
                    tag: other.to_string(),
                    sentence: 0,
                    reason: "not a BMES tag".into(),
                })
            }
        }
    }
    if let Some(s) = open.take() {
        spans.push(Span { start: s, end: tags.len(), label: String::new() });
    }
    Ok(spans)
}

fn extract_bio(tags: &[String]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    let close = |open: &mut Option<(usize, String)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((s, label)) = open.take() {
            spans.push(Span { start: s, end, label });
        }
    };
    for (i, tag) in tags.iter().enumerate() {
        if tag == "O" {
            close(&mut open, i, &mut spans);
        } else if let Some(label) = tag.strip_prefix("B-") {
            close(&mut open, i, &mut spans);
            open = Some((i, label.to_string()));
        } else if let Some(label) = tag.strip_prefix("I-") {
            match &open {
                Some((_, l)) if l == label => {} // continue the span
                _ => {
                    // dangling or mismatched I-X: repair by opening here
                    close(&mut open, i, &mut spans);
                    open = Some((i, label.to_string()));
                }
            }
        } else {
            return Err(Error::InvalidTag {
                tag: tag.clone(),
                sentence: 0,
                reason: "not a BIO tag".into(),
            });
        }
    }
    let n = tags.len();
    close(&mut open, n, &mut spans);
    Ok(spans)
}

/// Exact-match span scores.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

/// Span-level precision/recall/F1 over a corpus of tagged sentences.
/// Empty predictions score zero precision by convention.
pub fn evaluate_f1(
    predictions: &[Vec<String>],
    gold: &[Vec<String>],
    scheme: &TagScheme,
) -> Result<F1Score> {
    if predictions.len() != gold.len() {
        return Err(Error::Config(format!(
            "prediction/gold sentence counts differ: {} vs {}",
            predictions.len(),
            gold.len()
        )));
    }
    let mut n_pred = 0;
    let mut n_gold = 0;
    let mut matched = 0;
    for (idx, (p, g)) in predictions.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::InvalidTag {
                tag: String::new(),
                sentence: idx,
                reason: format!("length mismatch: {} predicted vs {} gold tags", p.len(), g.len()),
            });
        }
        let locate = |e: Error| match e {
            Error::InvalidTag { tag, reason, .. } => Error::InvalidTag {
                tag,
                sentence: idx,
                reason,
            },
            other => other,
        };
        let pred_spans = extract_spans(p, scheme).map_err(locate)?;
        let gold_spans = extract_spans(g, scheme).map_err(locate)?;
        n_pred += pred_spans.len();
        n_gold += gold_spans.len();
        let gold_set: std::collections::HashSet<&Span> = gold_spans.iter().collect();
        matched += pred_spans.iter().filter(|s| gold_set.contains(s)).count();
    }

    let precision = if n_pred == 0 {
        0.0
    } else {
        matched as f64 / n_pred as f64
    };
    let recall = if n_gold == 0 {
        0.0
    } else {
        matched as f64 / n_gold as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
        predicted: n_pred,
        gold: n_gold,
        matched,
    })
}

/// Converts BMES tags into space-separated words, repairing illegal tag
/// bigrams by splitting at the violation.
pub fn segment_text(sentence: &CharSequence, tags: &[String]) -> Result<String> {
    if sentence.len() != tags.len() {
        return Err(Error::Config(format!(
            "segment_text: {} chars but {} tags",
            sentence.len(),
            tags.len()
        )));
    }
    let scheme = TagScheme::bmes();
    let spans = extract_spans(tags, &scheme)?;
    let chars = sentence.chars();
    let words: Vec<String> = spans
        .iter()
        .map(|s| chars[s.start..s.end].iter().collect())
        .collect();
    Ok(words.join(" "))
}
