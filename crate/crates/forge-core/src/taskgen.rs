//! Derivation of low-level task samples from gold high-level samples: the
//! same data reused in different formats with different targets.

use crate::model::{ArgumentValue, FunctionCall, Sample, TaskKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("sample `{id}` has task {task}, expected a high-level call task")]
    WrongTask { id: String, task: TaskKind },
    #[error("sample `{id}` has an empty gold call sequence")]
    EmptySequence { id: String },
    #[error("call {consumer_index} references `{name}` which no earlier call produces")]
    DanglingReference { consumer_index: usize, name: String },
}

const SOURCE_TASKS: [TaskKind; 3] = [TaskKind::Chaining, TaskKind::Parallel, TaskKind::Nested];

fn require_high_level(sample: &Sample) -> Result<&[FunctionCall], DeriveError> {
    if !SOURCE_TASKS.contains(&sample.task) {
        return Err(DeriveError::WrongTask {
            id: sample.id.clone(),
            task: sample.task,
        });
    }
    Ok(sample
        .gold_calls
        .as_deref()
        .expect("high-level samples carry gold_calls"))
}

/// Re-tag a high-level sample as name detection: every gold call keeps its
/// position but loses its arguments.
pub fn derive_name_detection(sample: &Sample) -> Result<Sample, DeriveError> {
    let calls = require_high_level(sample)?;
    let mut derived = sample.clone();
    derived.id = format!("{}#name", sample.id);
    derived.task = TaskKind::NameDetection;
    derived.gold_calls = Some(calls.iter().map(FunctionCall::name_only).collect());
    Ok(derived)
}

/// Expand a length-n gold sequence into n+1 next-best samples: one per
/// prefix, with the (k+1)-th name as the target, plus a terminal sample
/// whose target is the end-of-sequence marker (empty gold call list).
pub fn derive_next_best(sample: &Sample) -> Result<Vec<Sample>, DeriveError> {
    let calls = require_high_level(sample)?;
    if calls.is_empty() {
        return Err(DeriveError::EmptySequence {
            id: sample.id.clone(),
        });
    }
    let stripped: Vec<FunctionCall> = calls.iter().map(FunctionCall::name_only).collect();
    let mut out = Vec::with_capacity(calls.len() + 1);
    for k in 0..=calls.len() {
        let mut derived = sample.clone();
        derived.id = format!("{}#nb{k}", sample.id);
        derived.task = TaskKind::NextBest;
        derived.partial_calls = Some(stripped[..k].to_vec());
        derived.gold_calls = Some(match stripped.get(k) {
            Some(next) => vec![next.clone()],
            None => Vec::new(), // terminal: target is <|endoftext|>
        });
        out.push(derived);
    }
    Ok(out)
}

/// One parameter-value sample per gold call that carries arguments, each
/// re-housed under the reserved `dummy` function name.
pub fn derive_param_value(sample: &Sample) -> Result<Vec<Sample>, DeriveError> {
    let calls = require_high_level(sample)?;
    let mut out = Vec::new();
    for (i, call) in calls.iter().enumerate() {
        if call.arguments.is_empty() {
            continue;
        }
        let mut derived = sample.clone();
        derived.id = format!("{}#pv{i}", sample.id);
        derived.task = TaskKind::ParamValue;
        derived.gold_calls = Some(vec![FunctionCall {
            name: crate::model::DUMMY_FUNCTION_NAME.into(),
            arguments: call.arguments.clone(),
        }]);
        out.push(derived);
    }
    Ok(out)
}

/// Producer/consumer edges induced by reference arguments: one edge per
/// reference anywhere in a call (including inside lists and objects).
/// A nonempty edge list classifies the sequence as nested.
pub fn nesting_edges(calls: &[FunctionCall]) -> Result<Vec<(usize, String)>, DeriveError> {
    fn collect<'a>(value: &'a ArgumentValue, refs: &mut Vec<&'a str>) {
        match value {
            ArgumentValue::Reference(name) => refs.push(name),
            ArgumentValue::List(items) => items.iter().for_each(|v| collect(v, refs)),
            ArgumentValue::Map(map) => map.values().for_each(|v| collect(v, refs)),
            ArgumentValue::Scalar(_) => {}
        }
    }

    let mut edges = Vec::new();
    for (consumer_index, call) in calls.iter().enumerate() {
        let mut refs = Vec::new();
        for value in call.arguments.values() {
            collect(value, &mut refs);
        }
        for name in refs {
            let produced_earlier = calls[..consumer_index].iter().any(|c| c.name == name);
            if !produced_earlier {
                return Err(DeriveError::DanglingReference {
                    consumer_index,
                    name: name.to_string(),
                });
            }
            edges.push((consumer_index, name.to_string()));
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn hotel_sample() -> Sample {
        let lib = vec![
            FunctionSpec::new("find_hotel", "Find a hotel."),
            FunctionSpec::new("book_hotel", "Book a hotel."),
            FunctionSpec::new("find_restaurant", "Find a restaurant."),
        ];
        Sample {
            id: "hotel".into(),
            task: TaskKind::Chaining,
            source_dataset: "SeqMultiWOZ".into(),
            library: lib,
            query: Some("Find the hotel named autumn house.".into()),
            conversation: None,
            partial_calls: None,
            gold_calls: Some(vec![
                FunctionCall::new("find_hotel").with_arg("name", ArgumentValue::text("autumn house")),
                FunctionCall::new("book_hotel").with_arg("people", ArgumentValue::text("2")),
                FunctionCall::new("find_restaurant"),
            ]),
            gold_response: None,
        }
    }

    #[test]
    fn name_detection_strips_arguments_in_order() {
        let derived = derive_name_detection(&hotel_sample()).unwrap();
        assert_eq!(derived.task, TaskKind::NameDetection);
        assert_eq!(derived.id, "hotel#name");
        let calls = derived.gold_calls.unwrap();
        let names: Vec<&str> = calls.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["find_hotel", "book_hotel", "find_restaurant"]);
        assert!(calls.iter().all(|c| c.arguments.is_empty()));
    }

    #[test]
    fn name_detection_preserves_duplicates() {
        let mut s = hotel_sample();
        s.task = TaskKind::Parallel;
        s.library = vec![FunctionSpec::new("get_weather", "")];
        s.gold_calls = Some(vec![
            FunctionCall::new("get_weather").with_arg("city", ArgumentValue::text("NY")),
            FunctionCall::new("get_weather").with_arg("city", ArgumentValue::text("LA")),
        ]);
        let calls = derive_name_detection(&s).unwrap().gold_calls.unwrap();
        assert_eq!(calls, vec![FunctionCall::new("get_weather"), FunctionCall::new("get_weather")]);
    }

    #[test]
    fn name_detection_is_idempotent_modulo_task_tag() {
        let once = derive_name_detection(&hotel_sample()).unwrap();
        let mut again_input = once.clone();
        again_input.task = TaskKind::Chaining;
        let twice = derive_name_detection(&again_input).unwrap();
        assert_eq!(twice.gold_calls, once.gold_calls);
    }

    #[test]
    fn next_best_enumerates_all_prefixes() {
        let derived = derive_next_best(&hotel_sample()).unwrap();
        assert_eq!(derived.len(), 4);
        for (k, s) in derived.iter().enumerate() {
            assert_eq!(s.task, TaskKind::NextBest);
            assert_eq!(s.id, format!("hotel#nb{k}"));
            assert_eq!(s.partial_calls.as_ref().unwrap().len(), k);
            assert_eq!(s.query, hotel_sample().query);
        }
        assert_eq!(derived[1].partial_calls.as_ref().unwrap()[0], FunctionCall::new("find_hotel"));
        assert_eq!(derived[1].gold_calls.as_ref().unwrap()[0], FunctionCall::new("book_hotel"));
        // Terminal sample: empty gold list stands for the end marker.
        assert!(derived[3].gold_calls.as_ref().unwrap().is_empty());
    }

    #[test]
    fn next_best_rejects_wrong_task_and_empty_sequence() {
        let mut s = hotel_sample();
        s.task = TaskKind::NameDetection;
        assert!(matches!(derive_next_best(&s), Err(DeriveError::WrongTask { .. })));
        let mut s = hotel_sample();
        s.gold_calls = Some(vec![]);
        assert!(matches!(derive_next_best(&s), Err(DeriveError::EmptySequence { .. })));
    }

    #[test]
    fn param_value_skips_argument_free_calls() {
        let derived = derive_param_value(&hotel_sample()).unwrap();
        // find_restaurant has no arguments, so only two samples come out.
        assert_eq!(derived.len(), 2);
        assert_eq!(derived[0].id, "hotel#pv0");
        assert_eq!(derived[1].id, "hotel#pv1");
        let call = &derived[0].gold_calls.as_ref().unwrap()[0];
        assert_eq!(call.name, DUMMY_FUNCTION_NAME);
        assert_eq!(call.arguments["name"], ArgumentValue::text("autumn house"));
    }

    #[test]
    fn param_value_on_argument_free_sample_is_empty() {
        let mut s = hotel_sample();
        s.gold_calls = Some(vec![FunctionCall::new("find_hotel")]);
        assert!(derive_param_value(&s).unwrap().is_empty());
    }

    #[test]
    fn nesting_edges_finds_references() {
        let calls = vec![
            FunctionCall::new("get_location")
                .with_arg("point_on_map", ArgumentValue::text("the Grand Canyon")),
            FunctionCall::new("get_estimated_duration")
                .with_arg("destination", ArgumentValue::reference("get_location")),
        ];
        assert_eq!(nesting_edges(&calls).unwrap(), vec![(1, "get_location".to_string())]);
    }

    #[test]
    fn chaining_without_references_has_no_edges() {
        let calls = vec![
            FunctionCall::new("find_provider").with_arg("city", ArgumentValue::text("SF")),
            FunctionCall::new("get_weather").with_arg("city", ArgumentValue::text("SF")),
        ];
        assert!(nesting_edges(&calls).unwrap().is_empty());
    }

    #[test]
    fn dangling_reference_is_an_error() {
        let calls = vec![FunctionCall::new("f").with_arg("x", ArgumentValue::reference("absent"))];
        assert!(matches!(
            nesting_edges(&calls),
            Err(DeriveError::DanglingReference { consumer_index: 0, .. })
        ));
    }

    #[test]
    fn references_inside_lists_are_found() {
        let calls = vec![
            FunctionCall::new("producer"),
            FunctionCall::new("consumer").with_arg(
                "items",
                ArgumentValue::List(vec![ArgumentValue::reference("producer")]),
            ),
        ];
        assert_eq!(nesting_edges(&calls).unwrap().len(), 1);
    }
}
