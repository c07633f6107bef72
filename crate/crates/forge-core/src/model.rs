//! Canonical domain model: function specs, calls, conversations, and samples.

use indexmap::IndexMap;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Tag that introduces each serialized function call in model output.
pub const FUNCTION_CALL_TAG: &str = "<function_call>";
/// Sentinel prefix marking a string argument as a reference to an earlier call's output.
pub const FUNCTION_RESPONSE_TAG: &str = "<function_response>";
/// Emitted by a model when no function in the library is relevant.
pub const NO_FUNCTION_CALL_TAG: &str = "<no_function_call>";
/// End-of-sequence marker; also the gold target for a terminal next-best sample.
pub const END_OF_TEXT_TAG: &str = "<|endoftext|>";
/// Introduces the partial call prefix in next-best prompts.
pub const PARTIAL_CALL_LIST_TAG: &str = "<|partial_function_call_list|>";
/// Introduces the function library block in prompts.
pub const FUNCTION_LIBRARY_TAG: &str = "<|function_call_library|>";
/// Reserved function name for parameter-value pair detection samples; exempt
/// from library membership.
pub const DUMMY_FUNCTION_NAME: &str = "dummy";

#[derive(Debug, Error)]
#[error("schema violation in `{field}`: {reason}")]
pub struct SchemaViolation {
    pub field: String,
    pub reason: String,
}

impl SchemaViolation {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Declared parameter type in a function spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
}

/// One parameter of a library function. Type and required-ness are optional
/// because training prompts omit them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSpec {
    pub name: String,
    pub description: String,
    pub value_type: Option<ValueType>,
    pub required: Option<bool>,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            value_type: None,
            required: None,
        }
    }
}

/// A library entry: a function the model may call.
///
/// Serializes as `{"name": ..., "description": ..., "arguments": {param: {...}}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParameterSpec>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters: Vec::new(),
        }
    }

    pub fn with_param(mut self, param: ParameterSpec) -> Self {
        self.parameters.push(param);
        self
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), SchemaViolation> {
        if self.name.is_empty() {
            return Err(SchemaViolation::new("library", "function name is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if p.name.is_empty() {
                return Err(SchemaViolation::new(
                    "library",
                    format!("empty parameter name in function `{}`", self.name),
                ));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(SchemaViolation::new(
                    "library",
                    format!("duplicate parameter `{}` in function `{}`", p.name, self.name),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamWire {
    #[serde(default)]
    description: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    value_type: Option<ValueType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    required: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct SpecWire {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    arguments: IndexMap<String, ParamWire>,
}

impl Serialize for FunctionSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = SpecWire {
            name: self.name.clone(),
            description: self.description.clone(),
            arguments: self
                .parameters
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        ParamWire {
                            description: p.description.clone(),
                            value_type: p.value_type,
                            required: p.required,
                        },
                    )
                })
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FunctionSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = SpecWire::deserialize(deserializer)?;
        Ok(FunctionSpec {
            name: wire.name,
            description: wire.description,
            parameters: wire
                .arguments
                .into_iter()
                .map(|(name, p)| ParameterSpec {
                    name,
                    description: p.description,
                    value_type: p.value_type,
                    required: p.required,
                })
                .collect(),
        })
    }
}

/// A scalar argument value as it appears in model output JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarValue {
    Text(String),
    Number(serde_json::Number),
    Bool(bool),
    Null,
}

/// An argument value: a scalar, a list, an object, or a reference to an
/// earlier call's output (the `<function_response>` sentinel).
///
/// References inside lists and objects are supported as an extension; the
/// canonical form only shows them at the top level of an argument.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgumentValue {
    Scalar(ScalarValue),
    List(Vec<ArgumentValue>),
    Map(IndexMap<String, ArgumentValue>),
    Reference(String),
}

impl ArgumentValue {
    pub fn text(s: impl Into<String>) -> Self {
        ArgumentValue::Scalar(ScalarValue::Text(s.into()))
    }

    pub fn reference(name: impl Into<String>) -> Self {
        ArgumentValue::Reference(name.into())
    }

    /// Decode from a JSON value. A string starting with the
    /// `<function_response>` sentinel becomes a reference; the remainder after
    /// the sentinel is taken verbatim as the referenced function name.
    pub fn from_json(value: serde_json::Value) -> Self {
        match value {
            serde_json::Value::String(s) => match s.strip_prefix(FUNCTION_RESPONSE_TAG) {
                Some(rest) => ArgumentValue::Reference(rest.to_string()),
                None => ArgumentValue::Scalar(ScalarValue::Text(s)),
            },
            serde_json::Value::Number(n) => ArgumentValue::Scalar(ScalarValue::Number(n)),
            serde_json::Value::Bool(b) => ArgumentValue::Scalar(ScalarValue::Bool(b)),
            serde_json::Value::Null => ArgumentValue::Scalar(ScalarValue::Null),
            serde_json::Value::Array(items) => {
                ArgumentValue::List(items.into_iter().map(Self::from_json).collect())
            }
            serde_json::Value::Object(map) => ArgumentValue::Map(
                map.into_iter()
                    .map(|(k, v)| (k, Self::from_json(v)))
                    .collect(),
            ),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ArgumentValue::Scalar(ScalarValue::Text(s)) => serde_json::Value::String(s.clone()),
            ArgumentValue::Scalar(ScalarValue::Number(n)) => serde_json::Value::Number(n.clone()),
            ArgumentValue::Scalar(ScalarValue::Bool(b)) => serde_json::Value::Bool(*b),
            ArgumentValue::Scalar(ScalarValue::Null) => serde_json::Value::Null,
            ArgumentValue::List(items) => {
                serde_json::Value::Array(items.iter().map(|v| v.to_json()).collect())
            }
            ArgumentValue::Map(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
            ArgumentValue::Reference(name) => {
                serde_json::Value::String(format!("{FUNCTION_RESPONSE_TAG}{name}"))
            }
        }
    }
}

impl Serialize for ArgumentValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ArgumentValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Self::from_json(serde_json::Value::deserialize(
            deserializer,
        )?))
    }
}

/// A concrete invocation: function name plus ordered arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    #[serde(default)]
    pub arguments: IndexMap<String, ArgumentValue>,
}

impl FunctionCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            arguments: IndexMap::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: ArgumentValue) -> Self {
        self.arguments.insert(key.into(), value);
        self
    }

    /// Copy with the argument map emptied (name-only tasks).
    pub fn name_only(&self) -> Self {
        FunctionCall::new(self.name.clone())
    }
}

/// The seven training tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Nested,
    Chaining,
    Parallel,
    NextBest,
    NameDetection,
    ParamValue,
    ResponseGeneration,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Nested,
        TaskKind::Chaining,
        TaskKind::Parallel,
        TaskKind::NextBest,
        TaskKind::NameDetection,
        TaskKind::ParamValue,
        TaskKind::ResponseGeneration,
    ];

    /// Canonical snake_case identifier used in sample JSONL.
    pub fn id(&self) -> &'static str {
        match self {
            TaskKind::Nested => "nested",
            TaskKind::Chaining => "chaining",
            TaskKind::Parallel => "parallel",
            TaskKind::NextBest => "next_best",
            TaskKind::NameDetection => "name_detection",
            TaskKind::ParamValue => "param_value",
            TaskKind::ResponseGeneration => "response_generation",
        }
    }

    /// Human-readable instruction name used in mixture configs.
    pub fn display_name(&self) -> &'static str {
        match self {
            TaskKind::Nested => "Nested Function Calling",
            TaskKind::Chaining => "Function Chaining",
            TaskKind::Parallel => "Parallel Functions",
            TaskKind::NextBest => "Next-Best Function",
            TaskKind::NameDetection => "Function Name Detection",
            TaskKind::ParamValue => "Parameter-Value Pair Detection",
            TaskKind::ResponseGeneration => "Response Generation",
        }
    }

    /// True for tasks whose gold answer is a call sequence.
    pub fn is_call_task(&self) -> bool {
        !matches!(self, TaskKind::ResponseGeneration)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    /// Accepts canonical ids, instruction names, and common short aliases.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_ascii_lowercase();
        let task = match folded.as_str() {
            "nested" | "nested function calling" => TaskKind::Nested,
            "chaining" | "function chaining" => TaskKind::Chaining,
            "parallel" | "parallel functions" => TaskKind::Parallel,
            "next_best" | "nextbest" | "next-best function" | "next-best" => TaskKind::NextBest,
            "name_detection" | "name" | "function name detection" => TaskKind::NameDetection,
            "param_value" | "pv" | "parameter-value pair detection" => TaskKind::ParamValue,
            "response_generation" | "response generation" | "response" => {
                TaskKind::ResponseGeneration
            }
            _ => return Err(format!("unknown task `{s}`")),
        };
        Ok(task)
    }
}

/// One turn of a user/agent conversation.
#[derive(Debug, Clone, PartialEq)]
pub enum ConversationTurn {
    User(String),
    AgentCall(FunctionCall),
    /// Raw JSON text of a function's response.
    FunctionResponse(String),
    Assistant(String),
}

#[derive(Serialize, Deserialize)]
struct TurnWire {
    speaker: String,
    payload: serde_json::Value,
}

impl Serialize for ConversationTurn {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = match self {
            ConversationTurn::User(text) => TurnWire {
                speaker: "USER".into(),
                payload: serde_json::Value::String(text.clone()),
            },
            ConversationTurn::AgentCall(call) => TurnWire {
                speaker: "AGENT_CALL".into(),
                payload: serde_json::to_value(call).map_err(serde::ser::Error::custom)?,
            },
            ConversationTurn::FunctionResponse(raw) => TurnWire {
                speaker: "FUNCTION_RESPONSE".into(),
                payload: serde_json::Value::String(raw.clone()),
            },
            ConversationTurn::Assistant(text) => TurnWire {
                speaker: "ASSISTANT".into(),
                payload: serde_json::Value::String(text.clone()),
            },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConversationTurn {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = TurnWire::deserialize(deserializer)?;
        let text_payload = |v: serde_json::Value, speaker: &str| -> Result<String, D::Error> {
            match v {
                serde_json::Value::String(s) => Ok(s),
                other => Err(D::Error::custom(format!(
                    "{speaker} payload must be a string, got {other}"
                ))),
            }
        };
        match wire.speaker.as_str() {
            "USER" => Ok(ConversationTurn::User(text_payload(wire.payload, "USER")?)),
            "ASSISTANT" => Ok(ConversationTurn::Assistant(text_payload(
                wire.payload,
                "ASSISTANT",
            )?)),
            "FUNCTION_RESPONSE" => Ok(ConversationTurn::FunctionResponse(text_payload(
                wire.payload,
                "FUNCTION_RESPONSE",
            )?)),
            "AGENT_CALL" => {
                let call: FunctionCall =
                    serde_json::from_value(wire.payload).map_err(D::Error::custom)?;
                Ok(ConversationTurn::AgentCall(call))
            }
            other => Err(D::Error::custom(format!("unknown speaker `{other}`"))),
        }
    }
}

/// One gold datum: a query or conversation, its function library, and the
/// gold answer (a call sequence or a response text).
///
/// An empty `gold_calls` list means "no call expected": the irrelevant-library
/// marker for call tasks, or the end-of-sequence target for next-best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub task: TaskKind,
    pub source_dataset: String,
    pub library: Vec<FunctionSpec>,
    pub query: Option<String>,
    pub conversation: Option<Vec<ConversationTurn>>,
    pub partial_calls: Option<Vec<FunctionCall>>,
    pub gold_calls: Option<Vec<FunctionCall>>,
    pub gold_response: Option<String>,
}

impl Sample {
    pub fn validate(&self) -> Result<(), SchemaViolation> {
        if self.id.is_empty() {
            return Err(SchemaViolation::new("id", "sample id is empty"));
        }
        match (&self.gold_calls, &self.gold_response) {
            (Some(_), Some(_)) => {
                return Err(SchemaViolation::new(
                    "gold_calls",
                    "both gold_calls and gold_response present",
                ))
            }
            (None, None) => {
                return Err(SchemaViolation::new(
                    "gold_calls",
                    "neither gold_calls nor gold_response present",
                ))
            }
            _ => {}
        }
        if self.task == TaskKind::ResponseGeneration && self.gold_response.is_none() {
            return Err(SchemaViolation::new(
                "gold_response",
                "response_generation sample without gold_response",
            ));
        }
        if self.task != TaskKind::ResponseGeneration && self.gold_calls.is_none() {
            return Err(SchemaViolation::new(
                "gold_calls",
                format!("{} sample without gold_calls", self.task),
            ));
        }
        match (&self.query, &self.conversation) {
            (Some(_), Some(_)) => {
                return Err(SchemaViolation::new(
                    "query",
                    "both query and conversation present",
                ))
            }
            (None, None) => {
                return Err(SchemaViolation::new(
                    "query",
                    "neither query nor conversation present",
                ))
            }
            _ => {}
        }
        if self.task == TaskKind::ResponseGeneration && self.conversation.is_none() {
            return Err(SchemaViolation::new(
                "conversation",
                "response_generation sample without conversation",
            ));
        }
        if self.partial_calls.is_some() && self.task != TaskKind::NextBest {
            return Err(SchemaViolation::new(
                "partial_calls",
                format!("partial_calls present on {} sample", self.task),
            ));
        }
        for spec in &self.library {
            spec.validate()?;
        }
        if let Some(calls) = &self.gold_calls {
            for call in calls {
                if call.name.is_empty() {
                    return Err(SchemaViolation::new("gold_calls", "empty function name"));
                }
                if call.name != DUMMY_FUNCTION_NAME
                    && !self.library.iter().any(|f| f.name == call.name)
                {
                    return Err(SchemaViolation::new(
                        "gold_calls",
                        format!("gold call `{}` not in library", call.name),
                    ));
                }
            }
        }
        if let Some(turns) = &self.conversation {
            let mut saw_call = false;
            for turn in turns {
                match turn {
                    ConversationTurn::AgentCall(_) => saw_call = true,
                    ConversationTurn::FunctionResponse(_) if !saw_call => {
                        return Err(SchemaViolation::new(
                            "conversation",
                            "FUNCTION_RESPONSE turn with no preceding AGENT_CALL",
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Names of the library functions, for hallucination checks.
    pub fn library_names(&self) -> std::collections::BTreeSet<String> {
        self.library.iter().map(|f| f.name.clone()).collect()
    }

    /// True when the gold answer is "emit no call" (irrelevant library).
    pub fn is_irrelevant_marker(&self) -> bool {
        self.task != TaskKind::NextBest
            && self
                .gold_calls
                .as_ref()
                .map(|c| c.is_empty())
                .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weather_spec() -> FunctionSpec {
        FunctionSpec::new("get_weather", "Gets the weather.")
            .with_param(ParameterSpec::new("city", "The city."))
    }

    fn base_sample() -> Sample {
        Sample {
            id: "s1".into(),
            task: TaskKind::Chaining,
            source_dataset: "test".into(),
            library: vec![weather_spec()],
            query: Some("weather in SF".into()),
            conversation: None,
            partial_calls: None,
            gold_calls: Some(vec![
                FunctionCall::new("get_weather").with_arg("city", ArgumentValue::text("SF"))
            ]),
            gold_response: None,
        }
    }

    #[test]
    fn function_spec_round_trips_in_paper_shape() {
        let spec = FunctionSpec::new("get_weather", "Gets the weather.").with_param(
            ParameterSpec {
                name: "city".into(),
                description: "The city.".into(),
                value_type: Some(ValueType::String),
                required: Some(true),
            },
        );
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "name": "get_weather",
                "description": "Gets the weather.",
                "arguments": {"city": {"description": "The city.", "type": "string", "required": true}}
            })
        );
        let back: FunctionSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn reference_detection_is_exact() {
        let v = ArgumentValue::from_json(serde_json::json!("<function_response>get_location"));
        assert_eq!(v, ArgumentValue::reference("get_location"));
        let s = serde_json::to_value(&v).unwrap();
        assert_eq!(s, serde_json::json!("<function_response>get_location"));
        // No sentinel prefix: stays a plain string.
        let plain = ArgumentValue::from_json(serde_json::json!("get_location"));
        assert_eq!(plain, ArgumentValue::text("get_location"));
    }

    #[test]
    fn sample_requires_exactly_one_gold_field() {
        let mut s = base_sample();
        s.gold_response = Some("hi".into());
        assert!(s.validate().is_err());
        s.gold_calls = None;
        s.gold_response = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn dummy_call_is_exempt_from_library_membership() {
        let mut s = base_sample();
        s.task = TaskKind::ParamValue;
        s.gold_calls = Some(vec![
            FunctionCall::new(DUMMY_FUNCTION_NAME).with_arg("city", ArgumentValue::text("SF"))
        ]);
        s.validate().unwrap();
    }

    #[test]
    fn unknown_gold_call_name_is_rejected() {
        let mut s = base_sample();
        s.gold_calls = Some(vec![FunctionCall::new("get_wether")]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn partial_calls_only_on_next_best() {
        let mut s = base_sample();
        s.partial_calls = Some(vec![]);
        assert!(s.validate().is_err());
        s.task = TaskKind::NextBest;
        s.validate().unwrap();
    }

    #[test]
    fn function_response_needs_preceding_call() {
        let mut s = base_sample();
        s.task = TaskKind::ResponseGeneration;
        s.query = None;
        s.gold_calls = None;
        s.gold_response = Some("hello".into());
        s.conversation = Some(vec![
            ConversationTurn::User("hi".into()),
            ConversationTurn::FunctionResponse("{}".into()),
        ]);
        assert!(s.validate().is_err());
        s.conversation = Some(vec![
            ConversationTurn::User("hi".into()),
            ConversationTurn::AgentCall(FunctionCall::new("get_weather")),
            ConversationTurn::FunctionResponse("{}".into()),
        ]);
        s.validate().unwrap();
    }

    #[test]
    fn task_kind_aliases() {
        assert_eq!("Function Chaining".parse::<TaskKind>().unwrap(), TaskKind::Chaining);
        assert_eq!("nextbest".parse::<TaskKind>().unwrap(), TaskKind::NextBest);
        assert_eq!("pv".parse::<TaskKind>().unwrap(), TaskKind::ParamValue);
        assert!("bogus".parse::<TaskKind>().is_err());
    }
}
