//! Rendering of call sequences into the tagged output syntax.

use crate::model::{FunctionCall, FUNCTION_CALL_TAG};
use serde::Serialize;
use std::io;

/// One-line JSON formatter with a space after `:` and `,`, matching the
/// style of the tagged output syntax.
pub struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if !first {
            writer.write_all(b", ")?;
        }
        Ok(())
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if !first {
            writer.write_all(b", ")?;
        }
        Ok(())
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(b": ")
    }
}

/// Serialize a value to single-line JSON with spaced separators.
pub fn to_spaced_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value
        .serialize(&mut ser)
        .expect("serialization to an in-memory buffer cannot fail");
    String::from_utf8(buf).expect("serde_json emits valid UTF-8")
}

/// Render a call sequence as tagged segments:
/// `<function_call> {json} <function_call> {json} ...`
///
/// Key order is `name`, `arguments`; argument order preserves insertion order;
/// references serialize with the `<function_response>` prefix. The empty list
/// renders as the empty string.
pub fn render_call_sequence(calls: &[FunctionCall]) -> String {
    let mut out = String::new();
    for (i, call) in calls.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(FUNCTION_CALL_TAG);
        out.push(' ');
        out.push_str(&to_spaced_json(call));
    }
    out
}
