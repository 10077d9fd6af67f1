//! Byte-stable JSON rendering for reports.

use serde::{Serialize, Serializer};
use serde_json::Value;

/// Significant digits kept for every float in a report.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn finite_or_str<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn opt_finite_or_str<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => finite_or_str(v, s),
        None => s.serialize_none(),
    }
}

pub fn vec_finite_or_str<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Wrapped(*x))?;
    }
    seq.end()
}

pub fn vec_opt_finite<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&x.map(Wrapped))?;
    }
    seq.end()
}

struct Wrapped(f64);

impl Serialize for Wrapped {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        finite_or_str(&self.0, s)
    }
}

/// Rounds `v` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v).parse().unwrap_or(v)
}

fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(f) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::Object(map) => map.values_mut().for_each(normalize),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and floats rounded to 12 significant digits.
pub fn to_stable_json(value: &impl Serialize) -> serde_json::Result<String> {
    // serde_json's default map is ordered by key, which gives sorted output
    let mut v = serde_json::to_value(value)?;
    normalize(&mut v);
    let mut out = serde_json::to_string_pretty(&v)?;
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct R {
        #[serde(serialize_with = "finite_or_str")]
        d: f64,
        z: f64,
        a: f64,
    }

    #[test]
    fn stable_rendering() {
        let r = R {
            d: f64::INFINITY,
            z: 1.0 / 3.0,
            a: 2.0,
        };
        let s = to_stable_json(&r).unwrap();
        assert_eq!(s, "{\n  \"a\": 2.0,\n  \"d\": \"inf\",\n  \"z\": 0.333333333333\n}\n");
        assert_eq!(s, to_stable_json(&r).unwrap());
    }
}
