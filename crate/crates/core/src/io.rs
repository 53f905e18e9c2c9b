//! Wire helpers shared by the JSON formats.

use serde::{Deserialize, Deserializer};
use serde_json::Value;

fn value_to_string<E: serde::de::Error>(v: Value) -> Result<String, E> {
    match v {
        Value::String(s) => Ok(s),
        // serde_json prints the shortest round-trip form, so "0.4" stays "0.4"
        Value::Number(n) => Ok(n.to_string()),
        other => Err(E::custom(format!("expected number or numeric string, got {other}"))),
    }
}

/// Accepts `["2/5", 0.3, "0.2"]` and normalizes every entry to a string.
pub fn numeric_strings<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Vec::<Value>::deserialize(d)?.into_iter().map(value_to_string).collect()
}

/// Square-array variant of [`numeric_strings`].
pub fn numeric_string_rows<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<String>>, D::Error> {
    Vec::<Vec<Value>>::deserialize(d)?.into_iter().map(|row| row.into_iter().map(value_to_string).collect()).collect()
}

/// Single-value variant of [`numeric_strings`].
pub fn numeric_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    value_to_string(Value::deserialize(d)?)
}
