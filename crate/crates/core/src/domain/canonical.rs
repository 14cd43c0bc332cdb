//! Canonical byte encoding.
//!
//! Records are lowered to a JSON value tree and written with object keys in
//! lexicographic (byte) order, no whitespace, and numbers in their shortest
//! round-trip decimal form without trailing zeros (`1.0` is written `1`).
//! Dates serialize as ISO-8601 calendar dates through their serde impls.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::digest::{digest, Digest};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("record cannot be encoded canonically: {0}")]
    Unsupported(String),
    #[error("non-finite number in record")]
    NonFinite,
}

pub fn canonical_encode<T: Serialize + ?Sized>(record: &T) -> Result<Vec<u8>, EncodingError> {
    let value = serde_json::to_value(record).map_err(|e| EncodingError::Unsupported(e.to_string()))?;
    let mut out = Vec::with_capacity(256);
    write_value(&value, &mut out)?;
    Ok(out)
}

/// `digest(canonical_encode(record))`.
pub fn canonical_digest<T: Serialize + ?Sized>(record: &T) -> Result<Digest, EncodingError> {
    Ok(digest(&canonical_encode(record)?))
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), EncodingError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => write_number(n, out)?,
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(&map[key], out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_number(n: &serde_json::Number, out: &mut Vec<u8>) -> Result<(), EncodingError> {
    if let Some(i) = n.as_i64() {
        write!(out, "{i}").expect("write to Vec");
    } else if let Some(u) = n.as_u64() {
        write!(out, "{u}").expect("write to Vec");
    } else {
        write_f64(n.as_f64().ok_or(EncodingError::NonFinite)?, out)?;
    }
    Ok(())
}

/// Writes a finite float in canonical form.
pub fn write_f64(f: f64, out: &mut Vec<u8>) -> Result<(), EncodingError> {
    if !f.is_finite() {
        return Err(EncodingError::NonFinite);
    }
    // Display for f64 is the shortest round-trip form and never pads zeros.
    let f = if f == 0.0 { 0.0 } else { f };
    write!(out, "{f}").expect("write to Vec");
    Ok(())
}

/// Writes a JSON string literal with serde_json's fixed, minimal escaping.
pub fn write_string(s: &str, out: &mut Vec<u8>) {
    serde_json::to_writer(out, s).expect("string encoding");
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashMap};

    use proptest::prelude::*;
    use serde_json::json;

    use super::*;

    #[test]
    fn keys_sorted_without_whitespace() {
        let bytes = canonical_encode(&json!({"b": 1, "a": [true, null, "x"]})).unwrap();
        assert_eq!(bytes, br#"{"a":[true,null,"x"],"b":1}"#);
    }

    #[test]
    fn decimals_have_no_trailing_zeros() {
        let bytes = canonical_encode(&json!([1.0, 0.5, 2.250, -0.0, 100.0, 1e-7])).unwrap();
        assert_eq!(bytes, b"[1,0.5,2.25,0,100,0.0000001]");
    }

    #[test]
    fn dates_are_iso() {
        let d = chrono::NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        assert_eq!(canonical_encode(&d).unwrap(), br#""2020-01-02""#);
    }

    #[test]
    fn non_string_map_keys_are_rejected() {
        let mut m = BTreeMap::new();
        m.insert(vec![1u8], 1);
        assert!(canonical_encode(&m).is_err());
    }

    proptest! {
        #[test]
        fn insertion_order_does_not_change_bytes(
            entries in proptest::collection::vec(("[a-z]{1,6}", -1.0e6f64..1.0e6), 0..12),
            seed in any::<u64>(),
        ) {
            let forward: HashMap<String, f64> = entries.iter().cloned().collect();
            let mut shuffled = entries.clone();
            // rotate + reverse gives a different insertion order for most inputs
            if !shuffled.is_empty() {
                let k = (seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
            }
            shuffled.reverse();
            // later duplicates win in both maps; keep the same winner
            let mut backward: HashMap<String, f64> = HashMap::new();
            for (k, _) in shuffled.iter() {
                backward.insert(k.clone(), forward[k]);
            }
            let a = canonical_encode(&forward).unwrap();
            let b = canonical_encode(&backward).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(canonical_digest(&forward).unwrap(), canonical_digest(&backward).unwrap());
        }

        #[test]
        fn numbers_round_trip(x in any::<f64>().prop_filter("finite", |f| f.is_finite())) {
            let bytes = canonical_encode(&x).unwrap();
            let back: f64 = serde_json::from_slice(&bytes).unwrap();
            prop_assert_eq!(back, if x == 0.0 { 0.0 } else { x });
        }
    }
}
