//! Scoring functions: multiset F1 over names and argument triples, sequence
//! overlap (LCS, exact match), hallucination and relevance rates, and the
//! text-generation metrics (ROUGE-L, BLEU).

use crate::model::{ArgumentValue, FunctionCall, ScalarValue, DUMMY_FUNCTION_NAME};
use std::collections::{BTreeSet, HashMap};
use unicode_normalization::UnicodeNormalization;

/// Multiset intersection size plus the two multiset sizes.
pub fn multiset_counts<T: Eq + std::hash::Hash>(gold: &[T], pred: &[T]) -> (usize, usize, usize) {
    let mut gold_counts: HashMap<&T, usize> = HashMap::new();
    for item in gold {
        *gold_counts.entry(item).or_default() += 1;
    }
    let mut matched = 0;
    for item in pred {
        if let Some(count) = gold_counts.get_mut(item) {
            if *count > 0 {
                *count -= 1;
                matched += 1;
            }
        }
    }
    (matched, pred.len(), gold.len())
}

/// Precision/recall/F1 from matched and total counts.
///
/// Precision is 0 on an empty prediction; recall on an empty gold is 1 when
/// the prediction is also empty, else 0; F1 is 0 when p + r = 0.
pub fn prf_from_counts(matched: usize, pred_total: usize, gold_total: usize) -> (f64, f64, f64) {
    let precision = if pred_total == 0 {
        0.0
    } else {
        matched as f64 / pred_total as f64
    };
    let recall = if gold_total == 0 {
        if pred_total == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        matched as f64 / gold_total as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn call_names(calls: &[FunctionCall]) -> Vec<String> {
    calls.iter().map(|c| c.name.clone()).collect()
}

/// Multiset F1 over function names.
pub fn func_name_scores(gold: &[String], pred: &[String]) -> (f64, f64, f64) {
    let (m, p, g) = multiset_counts(gold, pred);
    prf_from_counts(m, p, g)
}

/// Canonical text form used for value comparison: NFC-normalized, trimmed,
/// lowercased, with numeric strings folded to a canonical numeral so that
/// "1", 1, and 1.0 compare equal.
pub fn canonical_text(text: &str) -> String {
    let normalized: String = text.nfc().collect::<String>().trim().to_lowercase();
    if let Ok(value) = normalized.parse::<f64>() {
        if value.is_finite() {
            return canonical_number(value);
        }
    }
    normalized
}

fn canonical_number(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 9.0e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Canonical string form of an argument value.
pub fn canonical_value(value: &ArgumentValue) -> String {
    match value {
        ArgumentValue::Reference(name) => format!("<ref:{name}>"),
        ArgumentValue::Scalar(ScalarValue::Text(s)) => canonical_text(s),
        ArgumentValue::Scalar(ScalarValue::Number(n)) => match n.as_f64() {
            Some(f) if f.is_finite() => canonical_number(f),
            _ => n.to_string(),
        },
        ArgumentValue::Scalar(ScalarValue::Bool(b)) => b.to_string(),
        ArgumentValue::Scalar(ScalarValue::Null) => "null".to_string(),
        ArgumentValue::List(items) => {
            let inner: Vec<String> = items.iter().map(canonical_value).collect();
            format!("[{}]", inner.join(","))
        }
        ArgumentValue::Map(map) => {
            let inner: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{}:{}", canonical_text(k), canonical_value(v)))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
    }
}

/// Explode calls into (function, parameter, canonical value) triples.
pub fn arg_triples(calls: &[FunctionCall]) -> Vec<(String, String, String)> {
    calls
        .iter()
        .flat_map(|call| {
            call.arguments.iter().map(|(param, value)| {
                (call.name.clone(), param.clone(), canonical_value(value))
            })
        })
        .collect()
}

/// Multiset F1 over argument triples. With `names_only`, values are ignored
/// and only (function, parameter) pairs are matched.
pub fn arg_triple_scores(
    gold: &[FunctionCall],
    pred: &[FunctionCall],
    names_only: bool,
) -> (f64, f64, f64) {
    let strip = |triples: Vec<(String, String, String)>| -> Vec<(String, String, String)> {
        if names_only {
            triples
                .into_iter()
                .map(|(f, p, _)| (f, p, String::new()))
                .collect()
        } else {
            triples
        }
    };
    let gold_triples = strip(arg_triples(gold));
    let pred_triples = strip(arg_triples(pred));
    let (m, p, g) = multiset_counts(&gold_triples, &pred_triples);
    prf_from_counts(m, p, g)
}

/// Longest common subsequence length, shared by the sequence metric and
/// ROUGE-L.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for item_a in a {
        for (j, item_b) in b.iter().enumerate() {
            curr[j + 1] = if item_a == item_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// LCS overlap normalized by gold length. 1 when both sequences are empty;
/// 0 when gold is empty but the prediction is not.
pub fn lcs_score(gold: &[String], pred: &[String]) -> f64 {
    if gold.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    lcs_len(gold, pred) as f64 / gold.len() as f64
}

/// 1 iff the sequences are identical element-wise.
pub fn exact_match(gold: &[String], pred: &[String]) -> f64 {
    if gold == pred {
        1.0
    } else {
        0.0
    }
}

/// True iff any predicted name is outside the library (the reserved `dummy`
/// name is never a hallucination).
pub fn hallucination_flag(pred: &[FunctionCall], library_names: &BTreeSet<String>) -> bool {
    pred.iter()
        .any(|c| c.name != DUMMY_FUNCTION_NAME && !library_names.contains(&c.name))
}

/// Whitespace tokenization after lowercasing, with punctuation stripped from
/// token edges. Tokens that become empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .filter_map(|raw| {
            let token = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!token.is_empty()).then(|| token.to_string())
        })
        .collect()
}

/// ROUGE-L F-measure (beta = 1) over whitespace tokens.
pub fn rouge_l(gold: &str, pred: &str) -> f64 {
    let gold_tokens = tokenize(gold);
    let pred_tokens = tokenize(pred);
    if gold_tokens.is_empty() || pred_tokens.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&gold_tokens, &pred_tokens) as f64;
    let precision = lcs / pred_tokens.len() as f64;
    let recall = lcs / gold_tokens.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

const BLEU_EPS: f64 = 1e-9;

/// Sentence BLEU with uniform 1-4 gram weights, epsilon smoothing on zero
/// n-gram matches, and the standard brevity penalty.
pub fn bleu(gold: &str, pred: &str) -> f64 {
    let gold_tokens = tokenize(gold);
    let pred_tokens = tokenize(pred);
    if pred_tokens.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let pred_grams = ngram_counts(&pred_tokens, n);
        let gold_grams = ngram_counts(&gold_tokens, n);
        let total: usize = pred_grams.values().sum();
        let matched: usize = pred_grams
            .iter()
            .map(|(gram, count)| (*count).min(gold_grams.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if total > 0 && matched > 0 {
            matched as f64 / total as f64
        } else {
            BLEU_EPS
        };
        log_sum += 0.25 * precision.ln();
    }
    let brevity = if pred_tokens.len() < gold_tokens.len() {
        (1.0 - gold_tokens.len() as f64 / pred_tokens.len() as f64).exp()
    } else {
        1.0
    };
    brevity * log_sum.exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}
