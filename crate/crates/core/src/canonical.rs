//! Canonical JSON rendering used for state hashing and byte-stable result files.
//!
//! Object keys are emitted in sorted order and every float is printed with a
//! fixed number of decimals, so two structurally equal documents always hash
//! to the same digest regardless of map iteration order or float printing
//! quirks.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Decimal places for every non-integral number.
pub const FLOAT_DECIMALS: usize = 12;

pub fn to_canonical_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("state types serialize to JSON")
}

/// Renders `value` as canonical JSON text (compact, sorted keys, fixed floats).
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let mut out = String::new();
    write_value(&to_canonical_value(value), &mut out, None, 0);
    out
}

/// Same as [`to_canonical_string`] but indented two spaces per level.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> String {
    let mut out = String::new();
    write_value(&to_canonical_value(value), &mut out, Some(2), 0);
    out.push('\n');
    out
}

/// Hex SHA-256 of the compact canonical rendering.
pub fn state_hash<T: Serialize>(value: &T) -> String {
    let text = to_canonical_string(value);
    hex_digest(text.as_bytes())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    let s = format!("{:.*}", FLOAT_DECIMALS, x);
    // "-0.000000000000" and "0.000000000000" must hash identically
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        return format!("{:.*}", FLOAT_DECIMALS, 0.0);
    }
    s
}

fn write_value(value: &Value, out: &mut String, indent: Option<usize>, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent, depth + 1);
                write_value(item, out, indent, depth + 1);
            }
            newline(out, indent, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent, depth + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(&map[*key], out, indent, depth + 1);
            }
            newline(out, indent, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, indent: Option<usize>, depth: usize) {
    if let Some(width) = indent {
        out.push('\n');
        out.extend(std::iter::repeat_n(' ', width * depth));
    }
}
