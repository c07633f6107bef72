//! Single-call validation against a function library.

use crate::model::{ArgumentValue, FunctionCall, FunctionSpec, ScalarValue, ValueType};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub name_ok: bool,
    pub unknown_params: Vec<String>,
    pub missing_required: Vec<String>,
    pub type_mismatches: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.name_ok
            && self.unknown_params.is_empty()
            && self.missing_required.is_empty()
            && self.type_mismatches.is_empty()
    }
}

/// Check a call against the library: known name, known parameters, required
/// parameters present, values compatible with declared types. An unmatched
/// name yields `name_ok = false` with all lists empty.
pub fn validate_call(call: &FunctionCall, library: &[FunctionSpec]) -> ValidationReport {
    let Some(spec) = library.iter().find(|f| f.name == call.name) else {
        return ValidationReport::default();
    };
    let mut report = ValidationReport {
        name_ok: true,
        ..Default::default()
    };
    for (key, value) in &call.arguments {
        match spec.parameter(key) {
            None => report.unknown_params.push(key.clone()),
            Some(param) => {
                if let Some(ty) = param.value_type {
                    if !compatible(value, ty) {
                        report.type_mismatches.push(key.clone());
                    }
                }
            }
        }
    }
    for param in &spec.parameters {
        if param.required == Some(true) && !call.arguments.contains_key(&param.name) {
            report.missing_required.push(param.name.clone());
        }
    }
    report
}

/// Type-compatibility table. References are always compatible; an
/// unspecified declared type never mismatches (callers skip the check).
fn compatible(value: &ArgumentValue, ty: ValueType) -> bool {
    if matches!(value, ArgumentValue::Reference(_)) {
        return true;
    }
    match ty {
        ValueType::String => matches!(value, ArgumentValue::Scalar(_)),
        ValueType::Integer => match value {
            ArgumentValue::Scalar(ScalarValue::Number(n)) => {
                n.is_i64() || n.is_u64() || n.as_f64().map(|f| f.fract() == 0.0).unwrap_or(false)
            }
            ArgumentValue::Scalar(ScalarValue::Text(s)) => {
                let digits = s.strip_prefix('-').unwrap_or(s);
                !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
            }
            _ => false,
        },
        ValueType::Number => match value {
            ArgumentValue::Scalar(ScalarValue::Number(_)) => true,
            ArgumentValue::Scalar(ScalarValue::Text(s)) => s.trim().parse::<f64>().is_ok(),
            _ => false,
        },
        ValueType::Boolean => match value {
            ArgumentValue::Scalar(ScalarValue::Bool(_)) => true,
            ArgumentValue::Scalar(ScalarValue::Text(s)) => {
                s.eq_ignore_ascii_case("true") || s.eq_ignore_ascii_case("false")
            }
            _ => false,
        },
        ValueType::Array => matches!(value, ArgumentValue::List(_)),
        ValueType::Object => matches!(value, ArgumentValue::Map(_)),
    }
}
