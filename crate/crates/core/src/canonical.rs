//! Canonical JSON: lexicographically sorted object keys, no insignificant
//! whitespace, decimal integers. Byte fields serialize as `0x` lowercase hex
//! through their own `Serialize` impls.
//!
//! The canonical text is the hashing input for genesis files, vote subjects
//! and trace integrity, so it must never depend on map iteration order.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::types::Digest;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("input is not in canonical form")]
    NotCanonical,
}

/// Render a JSON value canonically. Keys are sorted here explicitly rather
/// than relying on the map type behind `serde_json::Value`.
pub fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn value_to_canonical(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

pub fn to_canonical<T: Serialize + ?Sized>(v: &T) -> Result<String, CanonicalError> {
    Ok(value_to_canonical(&serde_json::to_value(v)?))
}

/// Digest of the canonical serialization.
pub fn digest_of<T: Serialize + ?Sized>(v: &T) -> Digest {
    // Every type hashed here is built from strings, integers and sequences,
    // so serialization cannot fail.
    let text = to_canonical(v).expect("hashable types serialize infallibly");
    Digest::of(text.as_bytes())
}

/// Parse text that must already be canonical: re-serializing the parsed
/// value has to reproduce the input byte-for-byte.
pub fn parse_canonical<T: DeserializeOwned>(text: &str) -> Result<T, CanonicalError> {
    let value: Value = serde_json::from_str(text)?;
    if value_to_canonical(&value) != text {
        return Err(CanonicalError::NotCanonical);
    }
    Ok(serde_json::from_value(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_compact() {
        let v = json!({"b": 1, "a": [true, null, "x"], "c": {"z": 0, "y": -3}});
        assert_eq!(value_to_canonical(&v), r#"{"a":[true,null,"x"],"b":1,"c":{"y":-3,"z":0}}"#);
    }

    #[test]
    fn rejects_whitespace_and_unsorted() {
        assert!(parse_canonical::<Value>(r#"{"a":1}"#).is_ok());
        assert!(matches!(parse_canonical::<Value>(r#"{"a": 1}"#), Err(CanonicalError::NotCanonical)));
        assert!(matches!(parse_canonical::<Value>(r#"{"b":1,"a":2}"#), Err(CanonicalError::NotCanonical)));
    }

    #[test]
    fn escapes_strings() {
        let v = json!({"k\"": "line\nbreak"});
        let s = value_to_canonical(&v);
        assert_eq!(s, r#"{"k\"":"line\nbreak"}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
