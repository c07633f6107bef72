//! Weighted mixture assembly: apportioning a sample budget across tasks and
//! datasets, seeded drawing, and prompt rendering from the per-task templates.

use crate::model::{
    ConversationTurn, FunctionCall, FunctionSpec, Sample, TaskKind, END_OF_TEXT_TAG,
    PARTIAL_CALL_LIST_TAG,
};
use crate::render::{render_call_sequence, to_spaced_json};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const TEMPLATE_NESTED: &str = include_str!("../templates/nested.txt");
const TEMPLATE_CHAINING: &str = include_str!("../templates/chaining.txt");
const TEMPLATE_PARALLEL: &str = include_str!("../templates/parallel.txt");
const TEMPLATE_NEXT_BEST: &str = include_str!("../templates/next_best.txt");
const TEMPLATE_NAME_DETECTION: &str = include_str!("../templates/name_detection.txt");
const TEMPLATE_PARAM_VALUE: &str = include_str!("../templates/param_value.txt");
const TEMPLATE_RESPONSE_GENERATION: &str = include_str!("../templates/response_generation.txt");

/// The stored instruction template for a task.
pub fn template_for(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Nested => TEMPLATE_NESTED,
        TaskKind::Chaining => TEMPLATE_CHAINING,
        TaskKind::Parallel => TEMPLATE_PARALLEL,
        TaskKind::NextBest => TEMPLATE_NEXT_BEST,
        TaskKind::NameDetection => TEMPLATE_NAME_DETECTION,
        TaskKind::ParamValue => TEMPLATE_PARAM_VALUE,
        TaskKind::ResponseGeneration => TEMPLATE_RESPONSE_GENERATION,
    }
}

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("invalid mixture config: {0}")]
    InvalidConfig(String),
    #[error("pool exhausted for ({task}, {dataset}): need {need}, have {have}")]
    PoolExhausted {
        task: TaskKind,
        dataset: String,
        need: u64,
        have: usize,
    },
    #[error("missing placeholder input for {task}: {slot}")]
    MissingPlaceholderInput { task: TaskKind, slot: &'static str },
}

fn serialize_task_display<S: Serializer>(task: &TaskKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(task.display_name())
}

fn deserialize_task_alias<'de, D: Deserializer<'de>>(d: D) -> Result<TaskKind, D::Error> {
    let raw = String::deserialize(d)?;
    raw.parse().map_err(D::Error::custom)
}

/// One row of the weighted configuration: a task, the datasets feeding it
/// with their relative weights, and the task's own weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureEntry {
    #[serde(
        serialize_with = "serialize_task_display",
        deserialize_with = "deserialize_task_alias"
    )]
    pub instruction_name: TaskKind,
    pub datasets: IndexMap<String, u64>,
    pub weight: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub total: u64,
    pub seed: u64,
    pub entries: Vec<MixtureEntry>,
}

/// Which tasks each of the six source datasets supports.
fn known_dataset_tasks(dataset: &str) -> Option<&'static [TaskKind]> {
    use TaskKind::*;
    match dataset {
        "SeqSGD" | "SeqSNIPS" | "SeqATIS" => {
            Some(&[Chaining, Parallel, NextBest, NameDetection, ParamValue])
        }
        "SeqTopV2" => Some(&[Nested, Chaining, NextBest, NameDetection, ParamValue]),
        "SeqMultiWOZ" => Some(&[Chaining, NextBest, NameDetection, ParamValue]),
        "Glaive-V2" => Some(&[Chaining, ResponseGeneration]),
        _ => None,
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.total == 0 {
            return Err(MixtureError::InvalidConfig("total must be >= 1".into()));
        }
        if self.entries.is_empty() {
            return Err(MixtureError::InvalidConfig("no entries".into()));
        }
        for entry in &self.entries {
            if entry.weight == 0 {
                return Err(MixtureError::InvalidConfig(format!(
                    "entry `{}` has zero weight",
                    entry.instruction_name.display_name()
                )));
            }
            if entry.datasets.is_empty() {
                return Err(MixtureError::InvalidConfig(format!(
                    "entry `{}` has no datasets",
                    entry.instruction_name.display_name()
                )));
            }
            for (dataset, weight) in &entry.datasets {
                if *weight == 0 {
                    return Err(MixtureError::InvalidConfig(format!(
                        "dataset `{dataset}` has zero weight"
                    )));
                }
                // The six source datasets have a fixed task mapping; custom
                // dataset names are accepted as-is.
                if let Some(tasks) = known_dataset_tasks(dataset) {
                    if !tasks.contains(&entry.instruction_name) {
                        return Err(MixtureError::InvalidConfig(format!(
                            "dataset `{dataset}` does not provide task `{}`",
                            entry.instruction_name.display_name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` across `weights`.
/// Ties break toward the first-listed entry. Counts always sum to `total`
/// and each count is within 1 of its exact proportional share.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let weight_sum: u128 = weights.iter().map(|&w| w as u128).sum();
    assert!(weight_sum > 0, "weights must not all be zero");
    let mut counts: Vec<u64> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let numerator = total as u128 * w as u128;
        counts.push((numerator / weight_sum) as u64);
        remainders.push((numerator % weight_sum, i));
    }
    let assigned: u64 = counts.iter().sum();
    let leftover = total - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover as usize) {
        counts[i] += 1;
    }
    counts
}

/// Exact per-cell counts for a config: entry weights apportion the total
/// across tasks, dataset weights apportion each task's share.
pub fn allocate(config: &MixtureConfig) -> Result<IndexMap<(TaskKind, String), u64>, MixtureError> {
    config.validate()?;
    let entry_weights: Vec<u64> = config.entries.iter().map(|e| e.weight).collect();
    let task_counts = largest_remainder(config.total, &entry_weights);
    let mut cells = IndexMap::new();
    for (entry, task_count) in config.entries.iter().zip(task_counts) {
        let dataset_weights: Vec<u64> = entry.datasets.values().copied().collect();
        let dataset_counts = largest_remainder(task_count, &dataset_weights);
        for (dataset, count) in entry.datasets.keys().zip(dataset_counts) {
            *cells
                .entry((entry.instruction_name, dataset.clone()))
                .or_insert(0) += count;
        }
    }
    Ok(cells)
}

/// One training row: the rendered prompt and its gold completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub sample_id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub target: String,
}

/// Draw the allocated counts per cell (seeded, without replacement unless
/// `allow_oversample`) and emit training instances in seeded-shuffle order.
/// Deterministic: the same config and pools always produce the same output.
pub fn sample_mixture(
    config: &MixtureConfig,
    pools: &IndexMap<String, Vec<Sample>>,
    allow_oversample: bool,
) -> Result<(Vec<TrainingInstance>, Vec<String>), MixtureError> {
    let cells = allocate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut drawn: Vec<&Sample> = Vec::new();
    let mut diagnostics = Vec::new();

    for ((task, dataset), need) in &cells {
        let pool: Vec<&Sample> = pools
            .get(dataset)
            .map(|samples| samples.iter().filter(|s| s.task == *task).collect())
            .unwrap_or_default();
        if pool.is_empty() {
            return Err(MixtureError::PoolExhausted {
                task: *task,
                dataset: dataset.clone(),
                need: *need,
                have: 0,
            });
        }
        if (pool.len() as u64) < *need {
            if !allow_oversample {
                return Err(MixtureError::PoolExhausted {
                    task: *task,
                    dataset: dataset.clone(),
                    need: *need,
                    have: pool.len(),
                });
            }
            diagnostics.push(format!(
                "oversampling ({}, {dataset}): need {need}, have {}",
                task.id(),
                pool.len()
            ));
            for _ in 0..*need {
                let idx = rand::Rng::gen_range(&mut rng, 0..pool.len());
                drawn.push(pool[idx]);
            }
        } else {
            let picked = rand::seq::index::sample(&mut rng, pool.len(), *need as usize);
            for idx in picked.iter() {
                drawn.push(pool[idx]);
            }
        }
    }

    drawn.shuffle(&mut rng);

    let mut instances = Vec::with_capacity(drawn.len());
    for sample in drawn {
        instances.push(TrainingInstance {
            sample_id: sample.id.clone(),
            task: sample.task,
            prompt: render_sample_prompt(sample)?,
            target: target_text(sample),
        });
    }
    Ok((instances, diagnostics))
}

/// Gold completion text for a sample: the rendered call sequence, the
/// end-of-sequence marker for a terminal next-best sample, or the gold
/// response text.
pub fn target_text(sample: &Sample) -> String {
    if let Some(response) = &sample.gold_response {
        return response.clone();
    }
    let calls = sample.gold_calls.as_deref().unwrap_or_default();
    if sample.task == TaskKind::NextBest && calls.is_empty() {
        return END_OF_TEXT_TAG.to_string();
    }
    render_call_sequence(calls)
}

/// The non-library input to a prompt.
pub enum PromptInput<'a> {
    Query(&'a str),
    QueryWithPartial(&'a str, &'a [FunctionCall]),
    Conversation(&'a [ConversationTurn]),
}

/// Render the instruction prompt for a task. The library block is one
/// compact JSON spec per line; next-best inputs append the partial call list
/// to the query; conversations render with their speaker labels.
pub fn render_prompt(
    task: TaskKind,
    library: &[FunctionSpec],
    input: &PromptInput<'_>,
) -> Result<String, MixtureError> {
    let library_block = library
        .iter()
        .map(to_spaced_json)
        .collect::<Vec<_>>()
        .join("\n");
    let template = template_for(task);

    let body = match (task, input) {
        (TaskKind::ResponseGeneration, PromptInput::Conversation(turns)) => fill(
            template,
            &[
                ("{API_SPEC_INSTRUCTION}", &library_block),
                ("{CONV}", &render_conversation(turns)),
            ],
        ),
        (TaskKind::ResponseGeneration, _) => {
            return Err(MixtureError::MissingPlaceholderInput {
                task,
                slot: "conversation",
            })
        }
        (TaskKind::NextBest, PromptInput::QueryWithPartial(query, partial)) => {
            let query_block = format!(
                "{query}\n{PARTIAL_CALL_LIST_TAG}\n{}",
                render_call_sequence(partial)
            );
            fill(
                template,
                &[
                    ("{API_SPEC_INSTRUCTION}", &library_block),
                    ("{QUERY}", &query_block),
                ],
            )
        }
        (TaskKind::NextBest, _) => {
            return Err(MixtureError::MissingPlaceholderInput {
                task,
                slot: "partial_calls",
            })
        }
        (_, PromptInput::Query(query)) => fill(
            template,
            &[
                ("{API_SPEC_INSTRUCTION}", &library_block),
                ("{QUERY}", query),
            ],
        ),
        (_, _) => {
            return Err(MixtureError::MissingPlaceholderInput {
                task,
                slot: "query",
            })
        }
    };
    Ok(body)
}

/// Render a sample's prompt, picking the input slot from its fields.
pub fn render_sample_prompt(sample: &Sample) -> Result<String, MixtureError> {
    let input = if sample.task == TaskKind::ResponseGeneration {
        match &sample.conversation {
            Some(turns) => PromptInput::Conversation(turns),
            None => {
                return Err(MixtureError::MissingPlaceholderInput {
                    task: sample.task,
                    slot: "conversation",
                })
            }
        }
    } else {
        let query = sample
            .query
            .as_deref()
            .ok_or(MixtureError::MissingPlaceholderInput {
                task: sample.task,
                slot: "query",
            })?;
        if sample.task == TaskKind::NextBest {
            PromptInput::QueryWithPartial(query, sample.partial_calls.as_deref().unwrap_or(&[]))
        } else {
            PromptInput::Query(query)
        }
    };
    render_prompt(sample.task, &sample.library, &input)
}

/// Render a sample's prompt under a character budget. When the full prompt
/// exceeds `max_chars`, parameter descriptions are dropped longest-first
/// (re-rendering after each drop) until the prompt fits or none remain; each
/// drop is recorded. The prompt is returned even if it still exceeds the
/// budget after all drops.
pub fn render_sample_prompt_budgeted(
    sample: &Sample,
    max_chars: usize,
) -> Result<(String, Vec<String>), MixtureError> {
    let mut prompt = render_sample_prompt(sample)?;
    let mut truncations = Vec::new();
    if prompt.chars().count() <= max_chars {
        return Ok((prompt, truncations));
    }
    let mut trimmed = sample.clone();
    while prompt.chars().count() > max_chars {
        let longest = trimmed
            .library
            .iter()
            .enumerate()
            .flat_map(|(fi, spec)| {
                spec.parameters
                    .iter()
                    .enumerate()
                    .map(move |(pi, param)| (param.description.len(), fi, pi))
            })
            .filter(|&(len, ..)| len > 0)
            .max_by_key(|&(len, fi, pi)| (len, std::cmp::Reverse((fi, pi))));
        let Some((len, fi, pi)) = longest else {
            break; // nothing left to drop
        };
        let spec = &mut trimmed.library[fi];
        truncations.push(format!(
            "dropped description of {}.{} ({len} chars)",
            spec.name, spec.parameters[pi].name
        ));
        spec.parameters[pi].description.clear();
        prompt = render_sample_prompt(&trimmed)?;
    }
    Ok((prompt, truncations))
}

/// Conversation turns rendered one per line with speaker labels.
pub fn render_conversation(turns: &[ConversationTurn]) -> String {
    turns
        .iter()
        .map(|turn| match turn {
            ConversationTurn::User(text) => format!("USER: {text}"),
            ConversationTurn::AgentCall(call) => {
                format!("ASSISTANT: {}", render_call_sequence(std::slice::from_ref(call)))
            }
            ConversationTurn::FunctionResponse(raw) => {
                format!("{} {raw}", crate::model::FUNCTION_RESPONSE_TAG)
            }
            ConversationTurn::Assistant(text) => format!("ASSISTANT: {text}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Single-pass placeholder substitution: placeholders are looked up in the
/// template only, never in already-substituted values.
fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = substitutions
            .iter()
            .filter_map(|(key, value)| rest.find(key).map(|pos| (pos, *key, *value)))
            .min_by_key(|&(pos, ..)| pos);
        match next {
            Some((pos, key, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + key.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}
