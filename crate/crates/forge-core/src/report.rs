//! Per-dataset aggregation and report formatting.

use crate::metrics::{
    arg_triples, call_names, exact_match, hallucination_flag, lcs_score, multiset_counts,
    prf_from_counts, rouge_l,
};
use crate::model::FunctionCall;
use crate::parser::ParseResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One sample paired with its prediction, ready for scoring.
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub sample_id: String,
    pub source_dataset: String,
    pub library_names: BTreeSet<String>,
    pub gold: GoldData,
    pub pred: PredData,
    /// The raw output failed to parse (or was missing) and the prediction
    /// was scored as empty.
    pub parse_failed: bool,
}

#[derive(Debug, Clone)]
pub enum GoldData {
    /// An empty list is the irrelevant-library marker: no call expected.
    Calls(Vec<FunctionCall>),
    Response(String),
}

#[derive(Debug, Clone)]
pub enum PredData {
    Calls(ParseResult),
    Response(String),
}

/// One row of the report. Metrics that do not apply to a dataset's samples
/// stay absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub n: usize,
    pub func_precision: Option<f64>,
    pub func_recall: Option<f64>,
    pub func_f1: Option<f64>,
    pub arg_precision: Option<f64>,
    pub arg_recall: Option<f64>,
    pub arg_f1: Option<f64>,
    pub lcs_score: Option<f64>,
    pub exact_match: Option<f64>,
    pub hallucination_rate: Option<f64>,
    pub relevance_accuracy: Option<f64>,
    pub rouge_l: Option<f64>,
    pub bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-dataset blocks, ordered by dataset name.
    pub datasets: BTreeMap<String, MetricBlock>,
    /// Unweighted mean across datasets.
    pub average: MetricBlock,
    pub parse_failure_rate: f64,
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    name_matched: usize,
    name_pred: usize,
    name_gold: usize,
    triple_matched: usize,
    triple_pred: usize,
    triple_gold: usize,
    call_samples: usize,
    lcs_sum: f64,
    exact_sum: f64,
    halluc_count: usize,
    relevance_total: usize,
    relevance_correct: usize,
    text_samples: usize,
    rouge_sum: f64,
    bleu_sum: f64,
}

impl Accumulator {
    fn add(&mut self, sample: &ScoredSample) {
        self.n += 1;
        match (&sample.gold, &sample.pred) {
            (GoldData::Calls(gold), PredData::Calls(parsed)) => {
                self.call_samples += 1;
                let gold_names = call_names(gold);
                let pred_names = call_names(&parsed.calls);
                let (m, p, g) = multiset_counts(&gold_names, &pred_names);
                self.name_matched += m;
                self.name_pred += p;
                self.name_gold += g;
                let gold_triples = arg_triples(gold);
                let pred_triples = arg_triples(&parsed.calls);
                let (m, p, g) = multiset_counts(&gold_triples, &pred_triples);
                self.triple_matched += m;
                self.triple_pred += p;
                self.triple_gold += g;
                self.lcs_sum += lcs_score(&gold_names, &pred_names);
                self.exact_sum += exact_match(&gold_names, &pred_names);
                if hallucination_flag(&parsed.calls, &sample.library_names) {
                    self.halluc_count += 1;
                }
                if gold.is_empty() {
                    self.relevance_total += 1;
                    if parsed.no_call_flag || parsed.calls.is_empty() {
                        self.relevance_correct += 1;
                    }
                }
            }
            (GoldData::Response(gold), PredData::Response(pred)) => {
                self.text_samples += 1;
                self.rouge_sum += rouge_l(gold, pred);
                self.bleu_sum += crate::metrics::bleu(gold, pred);
            }
            _ => {
                // Mismatched modality cannot be scored; counted in n only.
            }
        }
    }

    fn block(&self) -> MetricBlock {
        let call = self.call_samples > 0;
        let (fp, fr, ff) = prf_from_counts(self.name_matched, self.name_pred, self.name_gold);
        let (ap, ar, af) = prf_from_counts(self.triple_matched, self.triple_pred, self.triple_gold);
        MetricBlock {
            n: self.n,
            func_precision: call.then_some(fp),
            func_recall: call.then_some(fr),
            func_f1: call.then_some(ff),
            arg_precision: call.then_some(ap),
            arg_recall: call.then_some(ar),
            arg_f1: call.then_some(af),
            lcs_score: call.then(|| self.lcs_sum / self.call_samples as f64),
            exact_match: call.then(|| self.exact_sum / self.call_samples as f64),
            hallucination_rate: call.then(|| self.halluc_count as f64 / self.call_samples as f64),
            relevance_accuracy: (self.relevance_total > 0)
                .then(|| self.relevance_correct as f64 / self.relevance_total as f64),
            rouge_l: (self.text_samples > 0).then(|| self.rouge_sum / self.text_samples as f64),
            bleu: (self.text_samples > 0).then(|| self.bleu_sum / self.text_samples as f64),
        }
    }
}

/// Micro-aggregate within each dataset, then take the unweighted mean across
/// datasets for the average row. Sample order never affects the result.
pub fn aggregate(samples: &[ScoredSample]) -> EvalReport {
    let mut groups: BTreeMap<String, Accumulator> = BTreeMap::new();
    for sample in samples {
        groups
            .entry(sample.source_dataset.clone())
            .or_default()
            .add(sample);
    }
    let datasets: BTreeMap<String, MetricBlock> = groups
        .iter()
        .map(|(name, acc)| (name.clone(), acc.block()))
        .collect();
    let average = average_block(&datasets);
    let failures = samples.iter().filter(|s| s.parse_failed).count();
    let parse_failure_rate = if samples.is_empty() {
        0.0
    } else {
        failures as f64 / samples.len() as f64
    };
    EvalReport {
        datasets,
        average,
        parse_failure_rate,
    }
}

fn average_block(datasets: &BTreeMap<String, MetricBlock>) -> MetricBlock {
    fn mean(values: Vec<f64>) -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
    let pick = |f: fn(&MetricBlock) -> Option<f64>| -> Option<f64> {
        mean(datasets.values().filter_map(f).collect())
    };
    MetricBlock {
        n: datasets.values().map(|b| b.n).sum(),
        func_precision: pick(|b| b.func_precision),
        func_recall: pick(|b| b.func_recall),
        func_f1: pick(|b| b.func_f1),
        arg_precision: pick(|b| b.arg_precision),
        arg_recall: pick(|b| b.arg_recall),
        arg_f1: pick(|b| b.arg_f1),
        lcs_score: pick(|b| b.lcs_score),
        exact_match: pick(|b| b.exact_match),
        hallucination_rate: pick(|b| b.hallucination_rate),
        relevance_accuracy: pick(|b| b.relevance_accuracy),
        rouge_l: pick(|b| b.rouge_l),
        bleu: pick(|b| b.bleu),
    }
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "dataset", "n", "func_p", "func_r", "func_f1", "arg_f1", "lcs", "exact", "halluc_rate",
    "relevance", "rouge_l", "bleu",
];

fn row_cells(name: &str, block: &MetricBlock) -> Vec<String> {
    fn fmt(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
    }
    vec![
        name.to_string(),
        block.n.to_string(),
        fmt(block.func_precision),
        fmt(block.func_recall),
        fmt(block.func_f1),
        fmt(block.arg_f1),
        fmt(block.lcs_score),
        fmt(block.exact_match),
        fmt(block.hallucination_rate),
        fmt(block.relevance_accuracy),
        fmt(block.rouge_l),
        fmt(block.bleu),
    ]
}

fn report_rows(report: &EvalReport) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .datasets
        .iter()
        .map(|(name, block)| row_cells(name, block))
        .collect();
    rows.push(row_cells("average", &report.average));
    rows
}

/// Aligned markdown table, column order fixed.
pub fn to_markdown(report: &EvalReport) -> String {
    let header: Vec<String> = REPORT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows = report_rows(report);
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let separator: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let mut out = String::new();
    out.push_str(&render_row(&header));
    out.push('\n');
    out.push_str(&format!("| {} |\n", separator.join(" | ")));
    for row in &rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out.push_str(&format!(
        "\nparse_failure_rate: {:.4}\n",
        report.parse_failure_rate
    ));
    out
}

pub fn to_csv(report: &EvalReport) -> String {
    let mut out = REPORT_COLUMNS.join(",");
    out.push('\n');
    for row in report_rows(report) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Deterministic JSON rendering used for manifest reports.
pub fn to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}
