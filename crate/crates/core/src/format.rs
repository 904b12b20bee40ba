//! Decimal rendering of floats at 17 significant digits.
//!
//! Every float written to a CSV or JSON artifact goes through [`sig17`], so a
//! value read back parses to the identical `f64`.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats `x` with 17 significant digits, trailing zeros trimmed.
///
/// Positional notation is used for decimal exponents in `-5..=16`,
/// scientific otherwise. Non-finite values render as `NaN`, `inf`, `-inf`.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-5..=16).contains(&exp) {
        let frac = digits[1..].trim_end_matches('0');
        let frac = if frac.is_empty() { "0" } else { frac };
        return format!("{sign}{}.{frac}e{exp}", &digits[..1]);
    }
    let (int_part, frac_part) = if exp >= 0 {
        let split = (exp + 1) as usize;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{}{}", "0".repeat((-exp - 1) as usize), digits))
    };
    let frac = frac_part.trim_end_matches('0');
    let frac = if frac.is_empty() { "0" } else { frac };
    format!("{sign}{int_part}.{frac}")
}

fn raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { sig17(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("sig17 output is a JSON number")
}

/// `serialize_with` helper for a single float.
pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(*x).serialize(s)
}

/// `serialize_with` helper for an optional float.
pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => raw(*v).serialize(s),
        None => s.serialize_none(),
    }
}

/// `serialize_with` helper for a float sequence.
pub fn ser_vec_f64<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&raw(*x))?;
    }
    seq.end()
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = serde_json::to_string_pretty(value)?;
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_common_values() {
        assert_eq!(sig17(1.0), "1.0");
        assert_eq!(sig17(0.7), "0.69999999999999996");
        assert_eq!(sig17(-2.5), "-2.5");
        assert_eq!(sig17(1234.5), "1234.5");
        assert_eq!(sig17(1e-7), "9.9999999999999995e-8");
        assert_eq!(sig17(3e20), "3.0e20");
        assert_eq!(sig17(0.0), "0.0");
    }

    #[test]
    fn json_helpers_emit_numbers() {
        #[derive(Serialize)]
        struct Probe {
            #[serde(serialize_with = "ser_f64")]
            x: f64,
            #[serde(serialize_with = "ser_vec_f64")]
            v: Vec<f64>,
        }
        let text = serde_json::to_string(&Probe { x: 0.1, v: vec![1.0, 2.25] }).unwrap();
        assert_eq!(text, r#"{"x":0.10000000000000001,"v":[1.0,2.25]}"#);
    }

    proptest! {
        #[test]
        fn round_trips_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let text = sig17(x);
            prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
