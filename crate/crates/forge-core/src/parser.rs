//! Parsing of tagged model output into call sequences.
//!
//! Real model output is ragged: truncated JSON, prose around calls, single
//! quotes, trailing commas. The parser is total — any input yields either a
//! `ParseResult` or a typed error, never a panic. Lenient mode (the default)
//! applies one bounded repair pass and records what it fixed; strict mode
//! rejects anything that would need repair.

use crate::model::{
    ArgumentValue, FunctionCall, END_OF_TEXT_TAG, FUNCTION_CALL_TAG, NO_FUNCTION_CALL_TAG,
};
use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Lenient,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// The object needed repair to decode; strict mode fails on these.
    Repair,
    /// Informational; allowed in both modes.
    Info,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub call_index: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseResult {
    pub calls: Vec<FunctionCall>,
    pub no_call_flag: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseResult {
    pub fn repair_count(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.kind == DiagnosticKind::Repair)
            .count()
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed call at index {index}: {reason}")]
    MalformedCall { index: usize, reason: String },
    #[error("output is empty: no call tags, no `<no_function_call>`, and blank after trimming")]
    EmptyOutput,
}

/// Parse raw model output into an ordered call sequence.
pub fn parse_call_sequence(text: &str, mode: ParseMode) -> Result<ParseResult, ParseError> {
    let body = strip_end_of_text(text);

    let tag_positions: Vec<usize> = find_all(body, FUNCTION_CALL_TAG);
    if tag_positions.is_empty() {
        if body.contains(NO_FUNCTION_CALL_TAG) {
            return Ok(ParseResult {
                calls: Vec::new(),
                no_call_flag: true,
                diagnostics: Vec::new(),
            });
        }
        if body.trim().is_empty() {
            return Err(ParseError::EmptyOutput);
        }
        return Ok(ParseResult {
            calls: Vec::new(),
            no_call_flag: false,
            diagnostics: vec![Diagnostic {
                call_index: None,
                kind: DiagnosticKind::Info,
                message: "no function-call tags in non-empty output".into(),
            }],
        });
    }

    let mut result = ParseResult::default();
    for (index, &pos) in tag_positions.iter().enumerate() {
        let seg_start = pos + FUNCTION_CALL_TAG.len();
        let seg_end = tag_positions
            .get(index + 1)
            .copied()
            .unwrap_or(body.len());
        let segment = &body[seg_start..seg_end];

        let obj_start = segment.find('{').ok_or_else(|| ParseError::MalformedCall {
            index,
            reason: "no JSON object after tag".into(),
        })?;
        let after_brace = &segment[obj_start..];
        let obj_text = match balanced_object(after_brace) {
            Some(len) => &after_brace[..len],
            None => {
                if mode == ParseMode::Strict {
                    return Err(ParseError::MalformedCall {
                        index,
                        reason: "unbalanced braces".into(),
                    });
                }
                after_brace
            }
        };

        let value = decode_object(obj_text, mode, index, &mut result.diagnostics)
            .map_err(|reason| ParseError::MalformedCall { index, reason })?;
        let call = call_from_value(value, index, &mut result.diagnostics)
            .map_err(|reason| ParseError::MalformedCall { index, reason })?;
        result.calls.push(call);
    }
    Ok(result)
}

/// Trim whitespace and strip trailing `<|endoftext|>` markers.
pub fn strip_end_of_text(text: &str) -> &str {
    let mut s = text.trim_end();
    while let Some(rest) = s.strip_suffix(END_OF_TEXT_TAG) {
        s = rest.trim_end();
    }
    s
}

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        out.push(from + rel);
        from += rel + needle.len();
    }
    out
}

/// Byte length of the balanced JSON object starting at `{`, honoring strings
/// and escapes. `None` when input ends before the object closes.
fn balanced_object(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    debug_assert_eq!(bytes.first(), Some(&b'{'));
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn decode_object(
    obj_text: &str,
    mode: ParseMode,
    index: usize,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<serde_json::Value, String> {
    match serde_json::from_str::<serde_json::Value>(obj_text) {
        Ok(value) => {
            note_duplicate_keys(obj_text, mode, index, diagnostics)?;
            Ok(value)
        }
        Err(first_err) => {
            if mode == ParseMode::Strict {
                return Err(format!("JSON decode failed: {first_err}"));
            }
            let (repaired, notes) = repair_json_text(obj_text);
            if notes.is_empty() {
                return Err(format!("JSON decode failed: {first_err}"));
            }
            match serde_json::from_str::<serde_json::Value>(&repaired) {
                Ok(value) => {
                    diagnostics.push(Diagnostic {
                        call_index: Some(index),
                        kind: DiagnosticKind::Repair,
                        message: format!("repaired JSON ({})", notes.join(", ")),
                    });
                    note_duplicate_keys(&repaired, mode, index, diagnostics)?;
                    Ok(value)
                }
                Err(second_err) => Err(format!(
                    "JSON decode failed even after repair: {second_err}"
                )),
            }
        }
    }
}

fn note_duplicate_keys(
    valid_json: &str,
    mode: ParseMode,
    index: usize,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<(), String> {
    for key in duplicate_keys(valid_json) {
        if mode == ParseMode::Strict {
            return Err(format!("duplicate key `{key}`"));
        }
        diagnostics.push(Diagnostic {
            call_index: Some(index),
            kind: DiagnosticKind::Repair,
            message: format!("duplicate key `{key}`: last occurrence wins"),
        });
    }
    Ok(())
}

fn call_from_value(
    value: serde_json::Value,
    index: usize,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<FunctionCall, String> {
    let serde_json::Value::Object(mut map) = value else {
        return Err("call is not a JSON object".into());
    };
    let name = match map.remove("name") {
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return Err("\"name\" is not a string".into()),
        None => return Err("missing \"name\" key".into()),
    };
    let arguments: IndexMap<String, ArgumentValue> = match map.remove("arguments") {
        Some(serde_json::Value::Object(args)) => args
            .into_iter()
            .map(|(k, v)| (k, ArgumentValue::from_json(v)))
            .collect(),
        Some(_) => return Err("\"arguments\" is not an object".into()),
        None => {
            diagnostics.push(Diagnostic {
                call_index: Some(index),
                kind: DiagnosticKind::Info,
                message: "missing \"arguments\" key; treated as empty".into(),
            });
            IndexMap::new()
        }
    };
    Ok(FunctionCall { name, arguments })
}

/// One bounded repair pass: single quotes to double quotes, trailing commas
/// removed, unbalanced strings/braces/brackets closed. Returns the repaired
/// text and a note per repair actually applied.
pub fn repair_json_text(text: &str) -> (String, Vec<&'static str>) {
    let mut notes = Vec::new();

    // Pass 1: single quotes -> double quotes (outside double-quoted strings).
    let mut quoted = String::with_capacity(text.len());
    let mut in_dq = false;
    let mut in_sq = false;
    let mut escaped = false;
    let mut converted = false;
    for ch in text.chars() {
        if in_dq {
            quoted.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_dq = false;
            }
        } else if in_sq {
            if escaped {
                quoted.push(ch);
                escaped = false;
            } else if ch == '\\' {
                quoted.push(ch);
                escaped = true;
            } else if ch == '\'' {
                quoted.push('"');
                in_sq = false;
            } else if ch == '"' {
                quoted.push_str("\\\"");
            } else {
                quoted.push(ch);
            }
        } else if ch == '"' {
            in_dq = true;
            quoted.push(ch);
        } else if ch == '\'' {
            in_sq = true;
            converted = true;
            quoted.push('"');
        } else {
            quoted.push(ch);
        }
    }
    if converted {
        notes.push("single quotes converted");
    }

    // Pass 2: drop trailing commas before `}` or `]` (outside strings).
    let bytes = quoted.as_bytes();
    let mut decommad = String::with_capacity(quoted.len());
    let mut in_string = false;
    escaped = false;
    let mut stripped_comma = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            decommad.push(b as char);
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if b == b',' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j >= bytes.len() || bytes[j] == b'}' || bytes[j] == b']' {
                stripped_comma = true;
                i += 1;
                continue;
            }
        }
        if b == b'"' {
            in_string = true;
        }
        // Structural bytes are ASCII; multi-byte UTF-8 only occurs inside
        // strings, which are copied above.
        decommad.push(b as char);
        i += 1;
    }
    if stripped_comma {
        notes.push("trailing comma removed");
    }

    // Pass 3: close unbalanced strings, braces, and brackets.
    let mut stack = Vec::new();
    in_string = false;
    escaped = false;
    for b in decommad.bytes() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.last() == Some(&b) {
                    stack.pop();
                }
            }
            _ => {}
        }
    }
    let mut closed = decommad;
    if in_string {
        closed.push('"');
        notes.push("unterminated string closed");
    }
    if !stack.is_empty() {
        while let Some(c) = stack.pop() {
            closed.push(c as char);
        }
        notes.push("unbalanced braces closed");
    }
    (closed, notes)
}

/// Duplicate object keys anywhere in a syntactically valid JSON text.
pub fn duplicate_keys(valid_json: &str) -> Vec<String> {
    let mut dups = Vec::new();
    let mut scanner = KeyScanner {
        bytes: valid_json.as_bytes(),
        pos: 0,
        dups: &mut dups,
    };
    scanner.skip_ws();
    scanner.value();
    dups
}

struct KeyScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    dups: &'a mut Vec<String>,
}

impl KeyScanner<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().map(|b| b.is_ascii_whitespace()).unwrap_or(false) {
            self.pos += 1;
        }
    }

    fn value(&mut self) {
        match self.peek() {
            Some(b'{') => self.object(),
            Some(b'[') => self.array(),
            Some(b'"') => {
                self.string();
            }
            Some(_) => {
                // number / true / false / null
                while let Some(b) = self.peek() {
                    if b",}] \t\r\n".contains(&b) {
                        break;
                    }
                    self.pos += 1;
                }
            }
            None => {}
        }
    }

    fn object(&mut self) {
        self.pos += 1; // '{'
        let mut seen = std::collections::HashSet::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'}') => {
                    self.pos += 1;
                    return;
                }
                Some(b'"') => {
                    let key = self.string();
                    if !seen.insert(key.clone()) {
                        self.dups.push(key);
                    }
                    self.skip_ws();
                    if self.peek() == Some(b':') {
                        self.pos += 1;
                    }
                    self.skip_ws();
                    self.value();
                    self.skip_ws();
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    }
                }
                _ => return, // defensive; input is valid JSON
            }
        }
    }

    fn array(&mut self) {
        self.pos += 1; // '['
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b']') => {
                    self.pos += 1;
                    return;
                }
                Some(_) => {
                    self.value();
                    self.skip_ws();
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    }
                }
                None => return,
            }
        }
    }

    fn string(&mut self) -> String {
        let start = self.pos + 1;
        self.pos += 1; // opening quote
        let mut escaped = false;
        while let Some(b) = self.peek() {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                let raw = &self.bytes[start..self.pos];
                self.pos += 1;
                return String::from_utf8_lossy(raw).into_owned();
            }
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.bytes[start..]).into_owned()
    }
}
