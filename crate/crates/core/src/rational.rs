//! Parsing and rendering helpers for exact rationals.
//!
//! Values travel as reduced `p/q` strings (plain `p` when the denominator is
//! one). Reports additionally carry a 6-significant-digit decimal rendering;
//! that rendering is produced with integer arithmetic so it is deterministic
//! across platforms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Parses `p`, `p/q`, or a plain decimal such as `0.25` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, Error> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::bad_input("empty rational"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::bad_input(format!("bad numerator in {s:?}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::bad_input(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::bad_input(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') { -1 } else { 1 };
        let i: BigInt = if int_part.is_empty() || int_part == "-" || int_part == "+" {
            BigInt::zero()
        } else {
            int_part
                .parse()
                .map_err(|_| Error::bad_input(format!("bad decimal in {s:?}")))?
        };
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::bad_input(format!("bad decimal in {s:?}")));
        }
        let f: BigInt = frac_part
            .parse()
            .map_err(|_| Error::bad_input(format!("bad decimal in {s:?}")))?;
        let scale = BigInt::from(10u8).pow(frac_part.len() as u32);
        let abs = BigRational::from(i.abs()) + BigRational::new(f, scale);
        return Ok(if sign < 0 { -abs } else { abs });
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::bad_input(format!("bad rational {s:?}")))?;
    Ok(BigRational::from(n))
}

/// Renders a reduced rational as `p` or `p/q`.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Renders six significant digits, round-half-to-even, using only integer
/// arithmetic. Magnitudes outside `[1e-4, 1e15)` switch to exponent form.
pub fn decimal_6sig(r: &BigRational) -> String {
    if r.is_zero() {
        return "0".to_string();
    }
    let neg = r.is_negative();
    let abs = r.abs();
    // Decimal exponent e with 10^e <= abs < 10^(e+1).
    let mut e: i64 = {
        let num_digits = abs.numer().to_string().len() as i64;
        let den_digits = abs.denom().to_string().len() as i64;
        num_digits - den_digits
    };
    let pow10 = |k: i64| -> BigRational {
        let p = BigInt::from(10u8).pow(k.unsigned_abs() as u32);
        if k >= 0 {
            BigRational::from(p)
        } else {
            BigRational::new(BigInt::one(), p)
        }
    };
    while abs < pow10(e) {
        e -= 1;
    }
    while abs >= pow10(e + 1) {
        e += 1;
    }
    // Scale to a 6-digit integer, rounding half to even.
    let scaled = &abs * pow10(5 - e);
    let floor = scaled.floor().to_integer();
    let frac = &scaled - BigRational::from(floor.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2u8));
    let mut digits = if frac > half || (frac == half && (&floor % 2) == BigInt::one()) {
        floor + 1
    } else {
        floor
    };
    if digits == BigInt::from(1_000_000u32) {
        digits = BigInt::from(100_000u32);
        e += 1;
    }
    let ds = digits.to_string();
    debug_assert_eq!(ds.len(), 6);
    let body = if (-4..15).contains(&e) {
        if e >= 5 {
            // Integer part at least as wide as the six digits.
            let mut out = ds;
            out.push_str(&"0".repeat((e - 5) as usize));
            out
        } else if e >= 0 {
            let (int_part, frac_part) = ds.split_at((e + 1) as usize);
            let frac_trimmed = frac_part.trim_end_matches('0');
            if frac_trimmed.is_empty() {
                int_part.to_string()
            } else {
                format!("{int_part}.{frac_trimmed}")
            }
        } else {
            let zeros = "0".repeat((-e - 1) as usize);
            let frac_trimmed = ds.trim_end_matches('0');
            format!("0.{zeros}{frac_trimmed}")
        }
    } else {
        let (head, tail) = ds.split_at(1);
        let tail_trimmed = tail.trim_end_matches('0');
        if tail_trimmed.is_empty() {
            format!("{head}e{e}")
        } else {
            format!("{head}.{tail_trimmed}e{e}")
        }
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Lossy `f64` view, used only for heuristics and human-facing sorting.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter carrying a rational as a reduced `p/q` string.
pub mod serde_rat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for lists of rationals, element-wise `p/q` strings.
pub mod serde_rat_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings.iter().map(|s| parse_rational(s).map_err(serde::de::Error::custom)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["0", "1", "-3", "2/3", "-7/5", "1000000007/3"] {
            let r = rat(s);
            assert_eq!(format_rational(&r), s.trim_start_matches('+'));
        }
        assert_eq!(rat("0.25"), rat("1/4"));
        assert_eq!(rat("-1.5"), rat("-3/2"));
        assert_eq!(rat("4/6"), rat("2/3"));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_6sig(&rat("0")), "0");
        assert_eq!(decimal_6sig(&rat("1")), "1");
        assert_eq!(decimal_6sig(&rat("5/4")), "1.25");
        assert_eq!(decimal_6sig(&rat("1/3")), "0.333333");
        assert_eq!(decimal_6sig(&rat("2/3")), "0.666667");
        assert_eq!(decimal_6sig(&rat("-2/3")), "-0.666667");
        assert_eq!(decimal_6sig(&rat("1/3126")), "0.000319898");
        assert_eq!(decimal_6sig(&rat("123456789")), "123457000");
        assert_eq!(decimal_6sig(&rat("1/1000000")), "1e-6");
    }
}
