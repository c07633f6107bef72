//! Dataset ingestion: canonical JSONL passes through; conversation-style and
//! simple query/answer records are unified into canonical samples.

use crate::jsonl::{self, JsonlError};
use crate::model::{
    ConversationTurn, FunctionCall, FunctionSpec, Sample, SchemaViolation, TaskKind,
    FUNCTION_CALL_TAG,
};
use crate::parser::{parse_call_sequence, ParseMode};
use serde::Deserialize;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Canonical,
    GlaiveConv,
    SimpleQa,
}

impl FromStr for IngestFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(IngestFormat::Canonical),
            "glaive_conv" => Ok(IngestFormat::GlaiveConv),
            "simple_qa" => Ok(IngestFormat::SimpleQa),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown ingest format `{0}` (expected canonical, glaive_conv, or simple_qa)")]
    UnknownFormat(String),
    #[error("line {line}: {violation}")]
    Schema {
        line: usize,
        violation: SchemaViolation,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn ingest(path: &Path, format: IngestFormat) -> Result<Vec<Sample>, IngestError> {
    match format {
        IngestFormat::Canonical => Ok(jsonl::read_samples(path)?),
        IngestFormat::GlaiveConv => ingest_lines(path, glaive_conv_samples),
        IngestFormat::SimpleQa => ingest_lines(path, simple_qa_samples),
    }
}

fn ingest_lines(
    path: &Path,
    convert: fn(&str, usize) -> Result<Vec<Sample>, SchemaViolation>,
) -> Result<Vec<Sample>, IngestError> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let converted =
            convert(line, line_no).map_err(|violation| IngestError::Schema {
                line: line_no,
                violation,
            })?;
        for sample in &converted {
            sample
                .validate()
                .map_err(|violation| IngestError::Schema {
                    line: line_no,
                    violation,
                })?;
        }
        samples.extend(converted);
    }
    Ok(samples)
}

#[derive(Deserialize)]
struct GlaiveRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    source_dataset: Option<String>,
    library: Vec<FunctionSpec>,
    chat: Vec<GlaiveTurn>,
}

#[derive(Deserialize)]
struct GlaiveTurn {
    role: String,
    content: String,
}

/// Convert one conversation record into up to two samples: a response
/// generation sample (conversation up to the final assistant text, that text
/// as the gold response) and a chaining sample (the first user query with the
/// embedded call sequence as gold).
fn glaive_conv_samples(line: &str, line_no: usize) -> Result<Vec<Sample>, SchemaViolation> {
    let record: GlaiveRecord = serde_json::from_str(line)
        .map_err(|e| SchemaViolation::new("record", e.to_string()))?;
    let base_id = record.id.unwrap_or_else(|| format!("glaive-{line_no}"));
    let dataset = record.source_dataset.unwrap_or_else(|| "Glaive-V2".into());

    let mut turns: Vec<ConversationTurn> = Vec::new();
    for turn in &record.chat {
        match turn.role.as_str() {
            "user" => turns.push(ConversationTurn::User(turn.content.clone())),
            "function" => turns.push(ConversationTurn::FunctionResponse(turn.content.clone())),
            "assistant" => {
                if turn.content.contains(FUNCTION_CALL_TAG) {
                    let parsed = parse_call_sequence(&turn.content, ParseMode::Lenient)
                        .map_err(|e| SchemaViolation::new("chat", e.to_string()))?;
                    for call in parsed.calls {
                        turns.push(ConversationTurn::AgentCall(call));
                    }
                } else {
                    turns.push(ConversationTurn::Assistant(turn.content.clone()));
                }
            }
            other => {
                return Err(SchemaViolation::new(
                    "chat",
                    format!("unknown role `{other}`"),
                ))
            }
        }
    }

    let mut samples = Vec::new();

    // Response generation: everything before the last assistant text turn is
    // the context; that turn is the gold response.
    let last_assistant = turns
        .iter()
        .rposition(|t| matches!(t, ConversationTurn::Assistant(_)));
    if let Some(pos) = last_assistant {
        if pos > 0 {
            let ConversationTurn::Assistant(response) = &turns[pos] else {
                unreachable!()
            };
            samples.push(Sample {
                id: format!("{base_id}#resp"),
                task: TaskKind::ResponseGeneration,
                source_dataset: dataset.clone(),
                library: record.library.clone(),
                query: None,
                conversation: Some(turns[..pos].to_vec()),
                partial_calls: None,
                gold_calls: None,
                gold_response: Some(response.clone()),
            });
        }
    }

    // Chaining: the embedded call sequence against the first user query.
    let calls: Vec<FunctionCall> = turns
        .iter()
        .filter_map(|t| match t {
            ConversationTurn::AgentCall(call) => Some(call.clone()),
            _ => None,
        })
        .collect();
    let first_query = turns.iter().find_map(|t| match t {
        ConversationTurn::User(text) => Some(text.clone()),
        _ => None,
    });
    if let (false, Some(query)) = (calls.is_empty(), first_query) {
        samples.push(Sample {
            id: format!("{base_id}#chain"),
            task: TaskKind::Chaining,
            source_dataset: dataset,
            library: record.library,
            query: Some(query),
            conversation: None,
            partial_calls: None,
            gold_calls: Some(calls),
            gold_response: None,
        });
    }

    if samples.is_empty() {
        return Err(SchemaViolation::new(
            "chat",
            "record yields neither a response nor a call sequence",
        ));
    }
    Ok(samples)
}

#[derive(Deserialize)]
struct SimpleQaRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    source_dataset: Option<String>,
    query: String,
    functions: Vec<FunctionSpec>,
    answer_calls: Vec<FunctionCall>,
}

fn simple_qa_samples(line: &str, line_no: usize) -> Result<Vec<Sample>, SchemaViolation> {
    let record: SimpleQaRecord = serde_json::from_str(line)
        .map_err(|e| SchemaViolation::new("record", e.to_string()))?;
    Ok(vec![Sample {
        id: record.id.unwrap_or_else(|| format!("qa-{line_no}")),
        task: TaskKind::Chaining,
        source_dataset: record.source_dataset.unwrap_or_else(|| "simple_qa".into()),
        library: record.functions,
        query: Some(record.query),
        conversation: None,
        partial_calls: None,
        gold_calls: Some(record.answer_calls),
        gold_response: None,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArgumentValue;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const RECIPES_RECORD: &str = r#"{"library": [{"name": "search_recipes", "description": "Search recipes by ingredients.", "arguments": {"ingredients": {"description": "Ingredients on hand."}}}], "chat": [{"role": "user", "content": "I have some chicken, broccoli, and cheese. What can I make with these?"}, {"role": "assistant", "content": "<function_call> {\"name\": \"search_recipes\", \"arguments\": {\"ingredients\": [\"chicken\", \"broccoli\", \"cheese\"]}}"}, {"role": "function", "content": "{\"recipes\": [{\"name\": \"Chicken and Broccoli Casserole\"}]}"}, {"role": "assistant", "content": "Here are a couple of recipes you can make with chicken, broccoli, and cheese: ..."}]}"#;

    #[test]
    fn glaive_record_yields_response_and_chaining_samples() {
        let file = write_temp(RECIPES_RECORD);
        let samples = ingest(file.path(), IngestFormat::GlaiveConv).unwrap();
        assert_eq!(samples.len(), 2);

        let resp = &samples[0];
        assert_eq!(resp.task, TaskKind::ResponseGeneration);
        assert!(resp
            .gold_response
            .as_ref()
            .unwrap()
            .starts_with("Here are a couple of recipes"));
        let turns = resp.conversation.as_ref().unwrap();
        assert_eq!(turns.len(), 3);
        assert!(matches!(turns[1], ConversationTurn::AgentCall(_)));

        let chain = &samples[1];
        assert_eq!(chain.task, TaskKind::Chaining);
        let calls = chain.gold_calls.as_ref().unwrap();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].name, "search_recipes");
        assert_eq!(
            calls[0].arguments["ingredients"],
            ArgumentValue::List(vec![
                ArgumentValue::text("chicken"),
                ArgumentValue::text("broccoli"),
                ArgumentValue::text("cheese"),
            ])
        );
        assert!(chain.query.as_ref().unwrap().starts_with("I have some chicken"));
    }

    #[test]
    fn simple_qa_maps_to_chaining() {
        let record = r#"{"id": "q1", "query": "weather in SF", "functions": [{"name": "get_weather", "description": "", "arguments": {"city": {"description": ""}}}], "answer_calls": [{"name": "get_weather", "arguments": {"city": "SF"}}]}"#;
        let file = write_temp(record);
        let samples = ingest(file.path(), IngestFormat::SimpleQa).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].id, "q1");
        assert_eq!(samples[0].task, TaskKind::Chaining);
    }

    #[test]
    fn empty_file_yields_empty_list() {
        let file = write_temp("");
        assert!(ingest(file.path(), IngestFormat::GlaiveConv).unwrap().is_empty());
        assert!(ingest(file.path(), IngestFormat::Canonical).unwrap().is_empty());
    }

    #[test]
    fn schema_violations_carry_line_numbers() {
        let file = write_temp("{\"chat\": []}\n");
        match ingest(file.path(), IngestFormat::GlaiveConv) {
            Err(IngestError::Schema { line: 1, .. }) => {}
            other => panic!("expected line-1 schema error, got {other:?}"),
        }
    }

    #[test]
    fn gold_call_outside_library_is_rejected() {
        let record = r#"{"id": "q1", "query": "q", "functions": [], "answer_calls": [{"name": "ghost", "arguments": {}}]}"#;
        let file = write_temp(record);
        assert!(matches!(
            ingest(file.path(), IngestFormat::SimpleQa),
            Err(IngestError::Schema { .. })
        ));
    }
}
