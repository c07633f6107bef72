//! Prediction acquisition: a generic templated HTTP client (any endpoint that
//! accepts a prompt in a JSON body and returns JSON) and an offline
//! predictions-file reader.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

pub const PROMPT_PLACEHOLDER: &str = "{PROMPT}";

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

/// How to reach a model over HTTP. `request_template` is the JSON request
/// body with exactly one `{PROMPT}` placeholder inside a string literal; the
/// prompt is JSON-escaped before substitution. `response_path` is a dot path
/// (object keys and array indices) selecting the generated text from the
/// response document. Header values may reference environment variables as
/// `${VAR}`, which keeps auth tokens out of config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub request_template: String,
    pub response_path: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("environment variable `{0}` referenced in headers is not set")]
    MissingEnvVar(String),
    #[error("failed to build http client: {0}")]
    Client(String),
    #[error("no prediction for sample `{0}`")]
    MissingPrediction(String),
    #[error("predictions file line {line}: {message}")]
    BadPredictionLine { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        let occurrences = self.request_template.matches(PROMPT_PLACEHOLDER).count();
        if occurrences != 1 {
            return Err(PredictError::InvalidConfig(format!(
                "request_template must contain exactly one {PROMPT_PLACEHOLDER}, found {occurrences}"
            )));
        }
        if self.max_in_flight == 0 {
            return Err(PredictError::InvalidConfig(
                "max_in_flight must be >= 1".into(),
            ));
        }
        if self.response_path.is_empty() {
            return Err(PredictError::InvalidConfig("response_path is empty".into()));
        }
        Ok(())
    }

    /// Headers with `${VAR}` references replaced by environment values.
    pub fn resolved_headers(&self) -> Result<BTreeMap<String, String>, PredictError> {
        self.headers
            .iter()
            .map(|(k, v)| Ok((k.clone(), expand_env(v)?)))
            .collect()
    }
}

/// Replace every `${VAR}` in `value` with the environment variable's value.
fn expand_env(value: &str) -> Result<String, PredictError> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = &after[..end];
        let val =
            std::env::var(name).map_err(|_| PredictError::MissingEnvVar(name.to_string()))?;
        out.push_str(&val);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// The prompt substituted into the request template, JSON-escaped so it can
/// sit inside a string literal.
pub fn build_request_body(template: &str, prompt: &str) -> String {
    let escaped = serde_json::to_string(prompt).expect("strings always serialize");
    let inner = &escaped[1..escaped.len() - 1];
    template.replacen(PROMPT_PLACEHOLDER, inner, 1)
}

/// Walk a dot path through a JSON document: object keys by name, array
/// elements by numeric index. The selected value must be a string.
pub fn extract_response_text(document: &serde_json::Value, path: &str) -> Result<String, String> {
    let mut current = document;
    for segment in path.split('.') {
        current = match current {
            serde_json::Value::Object(map) => map
                .get(segment)
                .ok_or_else(|| format!("key `{segment}` not found"))?,
            serde_json::Value::Array(items) => {
                let index: usize = segment
                    .parse()
                    .map_err(|_| format!("`{segment}` is not an array index"))?;
                items
                    .get(index)
                    .ok_or_else(|| format!("index {index} out of bounds"))?
            }
            other => {
                return Err(format!(
                    "cannot descend into {} at `{segment}`",
                    type_name(other)
                ))
            }
        };
    }
    match current {
        serde_json::Value::String(text) => Ok(text.clone()),
        other => Err(format!("value at path is {}, not a string", type_name(other))),
    }
}

fn type_name(value: &serde_json::Value) -> &'static str {
    match value {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "an array",
        serde_json::Value::Object(_) => "an object",
    }
}

/// The outcome of one prediction request: either the extracted text or an
/// error message. Failures never abort the batch.
#[derive(Debug, Clone)]
pub struct PredictionOutcome {
    pub id: String,
    pub result: Result<String, String>,
}

/// Fan prompts out to the endpoint with at most `max_in_flight` concurrent
/// requests, retrying each up to `retries` extra times. Results are keyed by
/// id, so completion order does not matter.
pub async fn predict_with_endpoint(
    config: &EndpointConfig,
    prompts: &[(String, String)],
) -> Result<Vec<PredictionOutcome>, PredictError> {
    use futures::StreamExt;

    config.validate()?;
    let headers = config.resolved_headers()?;
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| PredictError::Client(e.to_string()))?;

    let mut outcomes: Vec<PredictionOutcome> = futures::stream::iter(prompts.iter().map(
        |(id, prompt)| {
            let client = &client;
            let headers = &headers;
            async move {
                let result = request_with_retries(client, config, headers, prompt).await;
                PredictionOutcome {
                    id: id.clone(),
                    result,
                }
            }
        },
    ))
    .buffer_unordered(config.max_in_flight)
    .collect()
    .await;

    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(outcomes)
}

async fn request_with_retries(
    client: &reqwest::Client,
    config: &EndpointConfig,
    headers: &BTreeMap<String, String>,
    prompt: &str,
) -> Result<String, String> {
    let body = build_request_body(&config.request_template, prompt);
    let attempts = config.retries + 1;
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            tokio::time::sleep(Duration::from_millis(100 * (attempt as u64 - 1))).await;
        }
        let mut request = client
            .post(&config.url)
            .header("content-type", "application/json")
            .body(body.clone());
        for (name, value) in headers {
            request = request.header(name, value);
        }
        match request.send().await {
            Ok(response) => {
                let status = response.status();
                if !status.is_success() {
                    last_error = format!("attempt {attempt}: http status {status}");
                    continue;
                }
                let document: serde_json::Value = match response.json().await {
                    Ok(doc) => doc,
                    Err(e) => {
                        last_error = format!("attempt {attempt}: bad response body: {e}");
                        continue;
                    }
                };
                return extract_response_text(&document, &config.response_path)
                    .map_err(|e| format!("attempt {attempt}: {e}"));
            }
            Err(e) => {
                last_error = format!("attempt {attempt}: {e}");
            }
        }
    }
    Err(last_error)
}

/// Offline mode: JSONL of `{"id": ..., "output": ...}` records.
pub fn load_predictions_file(path: &Path) -> Result<BTreeMap<String, String>, PredictError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        output: String,
    }

    let text = std::fs::read_to_string(path)?;
    let mut predictions = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row =
            serde_json::from_str(line).map_err(|e| PredictError::BadPredictionLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        predictions.insert(row.id, row.output);
    }
    Ok(predictions)
}

/// Check that every required id has a prediction.
pub fn require_predictions<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    predictions: &BTreeMap<String, String>,
) -> Result<(), PredictError> {
    for id in ids {
        if !predictions.contains_key(id) {
            return Err(PredictError::MissingPrediction(id.to_string()));
        }
    }
    Ok(())
}
