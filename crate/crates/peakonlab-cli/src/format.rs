//! Number formatting shared by every emitted file.
//!
//! Floats use the shortest decimal string that parses back to the same
//! `f64`. Non-finite values are written as `inf`, `-inf` and `nan`, both in
//! CSV cells and as JSON strings (JSON has no literal for them).

use serde_json::{Map, Value};

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Inverse of [`num`]; also accepts `infinity`.
pub fn parse_num(s: &str) -> Option<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

pub fn jf(x: f64) -> Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None => Value::String(num(x)),
    }
}

pub fn jfs(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| jf(x)).collect())
}

/// Reads a number written by [`jf`].
pub fn from_jf(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => parse_num(s),
        _ => None,
    }
}

/// Builds an object from `(key, value)` pairs; keys end up sorted.
pub fn obj<I: IntoIterator<Item = (&'static str, Value)>>(items: I) -> Value {
    let mut m = Map::new();
    for (k, v) in items {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s.into_bytes()
}

/// CSV from a header and rows of preformatted cells.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
