//! Dual rendering of run reports: a flat `key=value` block for humans and
//! shell tools, and a JSON object with the same field names.

use serde::Serialize;
use serde_json::Value;

pub fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize to JSON")
}

/// One `key=value` line per top-level field, in declaration order.
/// Strings are written bare, absent values as `null`, nested values as compact JSON.
pub fn to_key_value<T: Serialize>(report: &T) -> String {
    let value = serde_json::to_value(report).expect("reports serialize to JSON");
    let mut out = String::new();
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                out.push_str(&key);
                out.push('=');
                out.push_str(&render(&v));
                out.push('\n');
            }
        }
        other => {
            out.push_str(&render(&other));
            out.push('\n');
        }
    }
    out
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
