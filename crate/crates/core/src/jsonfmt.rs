//! JSON rendering with `", "` and `": "` separators.
//!
//! Tool schemas and tool calls embedded in prompts use this layout, which is
//! what Python's `json.dumps` emits by default and what tool-calling chat
//! templates expect.

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use std::io;

#[derive(Debug, Default, Clone, Copy)]
pub struct SpacedFormatter;

impl Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

/// Serializes `value` on one line with spaced separators.
pub fn to_spaced_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, SpacedFormatter);
    value
        .serialize(&mut ser)
        .expect("serializing to memory does not fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn spaced_layout() {
        let v = json!({"name": "f", "arguments": {"a": [1, 2], "b": {}}});
        assert_eq!(
            to_spaced_string(&v),
            r#"{"name": "f", "arguments": {"a": [1, 2], "b": {}}}"#
        );
    }

    #[test]
    fn empty_containers() {
        assert_eq!(to_spaced_string(&json!([])), "[]");
        assert_eq!(to_spaced_string(&json!({})), "{}");
    }
}
