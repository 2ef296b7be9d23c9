//! C99-style hexadecimal float text (`-0x1.8p+3`), bit-exact in both directions.

use crate::error::{Error, Result};

const MANT_BITS: u32 = 52;
const MANT_MASK: u64 = (1 << MANT_BITS) - 1;

pub fn encode(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let biased = ((bits >> MANT_BITS) & 0x7ff) as i64;
    let mant = bits & MANT_MASK;
    if biased == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, -1022) } else { (1, biased - 1023) };
    let mut digits = format!("{mant:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() {
        String::new()
    } else {
        format!(".{digits}")
    };
    let esign = if exp >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{esign}{}", exp.abs())
}

pub fn decode(s: &str) -> Result<f64> {
    let bad = || Error::Format(format!("not a hex float: {s:?}"));
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let signed = |v: f64| if neg { -v } else { v };
    match body {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(signed(f64::INFINITY)),
        _ => {}
    }
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (mantissa, exp) = body.split_once(['p', 'P']).ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (lead, frac) = match mantissa.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mantissa, ""),
    };
    if frac.len() > 13 || frac.chars().any(|c| !c.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(&format!("{frac:0<13}"), 16).map_err(|_| bad())?
    };
    let bits = match (lead, exp) {
        ("0", _) if frac_bits == 0 => 0,
        ("0", -1022) => frac_bits,
        ("1", -1022..=1023) => (((exp + 1023) as u64) << MANT_BITS) | frac_bits,
        _ => return Err(bad()),
    };
    Ok(signed(f64::from_bits(bits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encodings() {
        assert_eq!(encode(1.0), "0x1p+0");
        assert_eq!(encode(-12.0), "-0x1.8p+3");
        assert_eq!(encode(0.1), "0x1.999999999999ap-4");
        assert_eq!(encode(-0.0), "-0x0p+0");
        assert_eq!(encode(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(decode("0x1.8p+3").unwrap(), 12.0);
        assert!(decode("1.5").is_err());
        assert!(decode("0x1.8").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            let back = decode(&encode(x)).unwrap();
            if x.is_nan() {
                prop_assert!(back.is_nan());
            } else {
                prop_assert_eq!(back.to_bits(), bits);
            }
        }
    }
}
