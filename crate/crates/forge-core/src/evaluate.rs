//! End-to-end scoring: pair samples with raw model outputs, parse, route to
//! the right metric set, and aggregate into a report plus manifest records.

use crate::manifest::{sha256_hex, RawOutputRecord};
use crate::mixture::render_sample_prompt;
use crate::model::Sample;
use crate::parser::{parse_call_sequence, ParseMode, ParseResult};
use crate::report::{aggregate, EvalReport, GoldData, PredData, ScoredSample};
use std::collections::BTreeMap;

/// One raw output to score: the model's text, or the error that stood in for
/// it (failed request, missing prediction).
pub type RawPrediction = Result<String, String>;

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub raw_outputs: Vec<RawOutputRecord>,
    pub scored: Vec<ScoredSample>,
}

/// Wrap a plain id→text map, marking ids without predictions as errors.
pub fn predictions_from_map(
    samples: &[Sample],
    outputs: &BTreeMap<String, String>,
) -> BTreeMap<String, RawPrediction> {
    samples
        .iter()
        .map(|s| {
            let value = match outputs.get(&s.id) {
                Some(text) => Ok(text.clone()),
                None => Err("no prediction for this sample".to_string()),
            };
            (s.id.clone(), value)
        })
        .collect()
}

/// Score every sample against its raw output. Unparseable or missing outputs
/// are scored as empty predictions and counted in the parse failure rate;
/// nothing panics on ragged input. Deterministic given the same inputs.
pub fn evaluate(
    samples: &[Sample],
    predictions: &BTreeMap<String, RawPrediction>,
    mode: ParseMode,
) -> EvalOutcome {
    let mut scored = Vec::with_capacity(samples.len());
    let mut raw_outputs = Vec::with_capacity(samples.len());
    for sample in samples {
        let prediction = predictions
            .get(&sample.id)
            .cloned()
            .unwrap_or_else(|| Err("no prediction for this sample".to_string()));
        let (sample_scored, record) = score_one(sample, prediction, mode);
        scored.push(sample_scored);
        raw_outputs.push(record);
    }
    EvalOutcome {
        report: aggregate(&scored),
        raw_outputs,
        scored,
    }
}

fn score_one(
    sample: &Sample,
    prediction: RawPrediction,
    mode: ParseMode,
) -> (ScoredSample, RawOutputRecord) {
    let prompt_sha256 = render_sample_prompt(sample)
        .map(|p| sha256_hex(p.as_bytes()))
        .unwrap_or_else(|_| sha256_hex(b""));

    let mut record = RawOutputRecord {
        id: sample.id.clone(),
        prompt_sha256,
        output: prediction.as_ref().ok().cloned(),
        error: prediction.as_ref().err().cloned(),
        diagnostics: Vec::new(),
    };

    let is_text_task = sample.gold_response.is_some();
    let (gold, pred, parse_failed) = if is_text_task {
        let gold = GoldData::Response(sample.gold_response.clone().unwrap_or_default());
        match prediction {
            Ok(text) => (gold, PredData::Response(text), false),
            Err(_) => (gold, PredData::Response(String::new()), true),
        }
    } else {
        let gold = GoldData::Calls(sample.gold_calls.clone().unwrap_or_default());
        match prediction {
            Ok(text) => match parse_call_sequence(&text, mode) {
                Ok(parsed) => {
                    record.diagnostics =
                        parsed.diagnostics.iter().map(|d| d.message.clone()).collect();
                    (gold, PredData::Calls(parsed), false)
                }
                Err(e) => {
                    record.diagnostics.push(e.to_string());
                    (gold, PredData::Calls(ParseResult::default()), true)
                }
            },
            Err(_) => (gold, PredData::Calls(ParseResult::default()), true),
        }
    };

    let scored = ScoredSample {
        sample_id: sample.id.clone(),
        source_dataset: sample.source_dataset.clone(),
        library_names: sample.library_names(),
        gold,
        pred,
        parse_failed,
    };
    (scored, record)
}
