//! Canonical JSON encoding.
//!
//! Objects are written with lexicographically sorted keys and no
//! insignificant whitespace. Integers are written verbatim; every other
//! number is written in exponent form with 17 significant digits, which
//! round-trips any finite `f64` exactly. Non-finite reals become `null`
//! (serde_json behaviour), which typed deserialization then rejects.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Encode any serializable value canonically.
pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let value = serde_json::to_value(value)?;
    let mut out = Vec::with_capacity(128);
    write_value(&value, &mut out)?;
    Ok(out)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // write_value only emits valid UTF-8
    Ok(String::from_utf8(to_vec(value)?).expect("canonical json is utf-8"))
}

pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Canonicalize an already-parsed JSON value.
pub fn value_to_vec(value: &Value) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<()> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                let f = n
                    .as_f64()
                    .ok_or_else(|| Error::Schema("unrepresentable number".into()))?;
                write_f64(f, out)?;
            }
        }
        Value::String(s) => write_str(s, out),
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
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_str(key, out);
                out.push(b':');
                write_value(&map[key], out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_f64(f: f64, out: &mut Vec<u8>) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::Schema(format!("non-finite number {f}")));
    }
    // -0.0 and 0.0 compare equal but must stay distinguishable bit-for-bit.
    out.extend_from_slice(format!("{f:.16e}").as_bytes());
    Ok(())
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is already minimal and deterministic.
    let escaped = serde_json::to_string(s).expect("string serialization cannot fail");
    out.extend_from_slice(escaped.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": [true, null], "c": {"z": "x", "y": 2}});
        assert_eq!(
            String::from_utf8(value_to_vec(&v).unwrap()).unwrap(),
            r#"{"a":[true,null],"b":1,"c":{"y":2,"z":"x"}}"#
        );
    }

    #[test]
    fn reals_use_seventeen_significant_digits() {
        assert_eq!(to_string(&0.1f64).unwrap(), "1.0000000000000001e-1");
        assert_eq!(to_string(&1.0f64).unwrap(), "1.0000000000000000e0");
        assert_eq!(to_string(&-2.5e-7f64).unwrap(), "-2.4999999999999999e-7");
    }

    #[test]
    fn non_finite_degrades_to_null() {
        // serde_json maps NaN/inf to null; typed schema validation in the
        // store then rejects the record.
        assert_eq!(to_string(&f64::NAN).unwrap(), "null");
        assert!(from_slice::<f64>(&to_vec(&f64::INFINITY).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn reals_round_trip_bit_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let bytes = to_vec(&x).unwrap();
            let back: f64 = from_slice(&bytes).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
            let value: Value = from_slice(&bytes).unwrap();
            prop_assert_eq!(value_to_vec(&value).unwrap(), bytes);
        }

        #[test]
        fn documents_are_fixed_points(
            entries in proptest::collection::btree_map("[a-z]{1,6}", -1.0e6f64..1.0e6, 0..8),
            ints in proptest::collection::vec(any::<i64>(), 0..4),
        ) {
            let doc = json!({"reals": entries, "ints": ints, "s": "q\"uote\n"});
            let once = value_to_vec(&doc).unwrap();
            let reparsed: Value = from_slice(&once).unwrap();
            prop_assert_eq!(value_to_vec(&reparsed).unwrap(), once);
        }
    }
}
