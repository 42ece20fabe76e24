//! Exact arithmetic used throughout the scheduler, oracle and simulator.
//!
//! Every tag, work level, rate, weight and simulation instant is a [`Rat`]
//! (a reduced `i128` fraction). Work levels additionally need a value that
//! compares above every finite number, which is what [`Extended`] provides.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number.
pub type Rat = Ratio<i128>;

/// Integer-valued rational.
pub fn rat(n: i128) -> Rat {
    Rat::from_integer(n)
}

/// `n / d` as a reduced rational. Panics if `d == 0`.
pub fn ratio(n: i128, d: i128) -> Rat {
    Rat::new(n, d)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {input:?} as an exact rational: {reason}")]
pub struct ParseRatError {
    pub input: String,
    pub reason: &'static str,
}

/// Parses integers (`"42"`), fractions (`"5/4"`), decimals (`"1.25"`) and
/// decimal scientific notation (`"2.8e6"`) without going through floats.
pub fn parse_rat(input: &str) -> Result<Rat, ParseRatError> {
    let err = |reason| ParseRatError {
        input: input.to_string(),
        reason,
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err("empty"));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = parse_rat(n)?;
        let d = parse_rat(d)?;
        if d.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| err("bad exponent"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err("unexpected character"));
    }
    if int_part.len() + frac_part.len() > 30 || exponent.unsigned_abs() > 30 {
        return Err(err("too many digits"));
    }
    let all: String = format!("{int_part}{frac_part}");
    let numer: i128 = if all.is_empty() { 0 } else { all.parse().map_err(|_| err("overflow"))? };
    let scale = exponent - frac_part.len() as i32;
    let pow = 10i128.pow(scale.unsigned_abs());
    let mut value = if scale >= 0 {
        rat(numer.checked_mul(pow).ok_or_else(|| err("overflow"))?)
    } else {
        ratio(numer, pow)
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Decimal rendering with `sig` significant digits (plain notation).
pub fn format_decimal(value: &Rat, sig: usize) -> String {
    if value.is_zero() {
        return "0".to_string();
    }
    if value.is_integer() {
        return value.numer().to_string();
    }
    let f = value.to_f64().unwrap_or(f64::NAN);
    let magnitude = f.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).clamp(0, 30) as usize;
    let s = format!("{:.*}", decimals, f);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn to_f64(value: &Rat) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Finite rational or the distinguished infinite value.
///
/// The derived ordering places every `Finite` below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extended {
    Finite(Rat),
    Infinite,
}

impl Extended {
    pub fn zero() -> Self {
        Extended::Finite(Rat::zero())
    }

    pub fn finite(&self) -> Option<Rat> {
        match self {
            Extended::Finite(v) => Some(*v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// Renders `inf` for the infinite value.
    pub fn render(&self, sig: usize) -> String {
        match self {
            Extended::Finite(v) => format_decimal(v, sig),
            Extended::Infinite => "inf".to_string(),
        }
    }
}

impl From<Rat> for Extended {
    fn from(v: Rat) -> Self {
        Extended::Finite(v)
    }
}

impl serde::Serialize for Extended {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_str(&to_plain(v)),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Extended {
    type Err = ParseRatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinite" | "INFINITE" => Ok(Extended::Infinite),
            other => parse_rat(other).map(Extended::Finite),
        }
    }
}

/// Work level of a server: minimum tag over its eligible backlogged users,
/// or infinite when there are none.
pub type WorkLevel = Extended;

/// Serde helpers storing a [`Rat`] as a human-readable string.
pub mod serde_rat {
    use super::{parse_rat, Rat};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_plain(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let raw = NumOrStr::deserialize(d)?;
        raw.into_rat().map_err(de::Error::custom)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum NumOrStr {
        Int(i64),
        Str(String),
    }

    impl NumOrStr {
        pub(crate) fn into_rat(self) -> Result<Rat, super::ParseRatError> {
            match self {
                NumOrStr::Int(i) => Ok(Rat::from_integer(i as i128)),
                NumOrStr::Str(s) => parse_rat(&s),
            }
        }
    }

    pub mod option {
        use super::NumOrStr;
        use crate::rational::Rat;
        use serde::{de, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(value: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
            match value {
                Some(v) => s.serialize_str(&crate::rational::to_plain(v)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
            let raw = Option::<NumOrStr>::deserialize(d)?;
            raw.map(|r| r.into_rat().map_err(de::Error::custom)).transpose()
        }
    }

    pub mod vec {
        use super::NumOrStr;
        use crate::rational::Rat;
        use serde::ser::SerializeSeq;
        use serde::{de, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(values: &[Rat], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(values.len()))?;
            for v in values {
                seq.serialize_element(&crate::rational::to_plain(v))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
            let raw = Vec::<NumOrStr>::deserialize(d)?;
            raw.into_iter()
                .map(|r| r.into_rat().map_err(de::Error::custom))
                .collect()
        }
    }
}

/// Shortest exact textual form: an integer, a terminating decimal, or `n/d`.
pub fn to_plain(value: &Rat) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    let mut d = *value.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d != 1 {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let places = twos.max(fives);
    let scaled = value * rat(10i128.pow(places));
    let n = scaled.to_integer();
    let sign = if n.is_negative() { "-" } else { "" };
    let digits = n.abs().to_string();
    let places = places as usize;
    let padded = format!("{:0>width$}", digits, width = places + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    format!("{sign}{int_part}.{frac_part}")
}

/// Sum helper for iterators of rationals.
pub fn sum<'a>(values: impl IntoIterator<Item = &'a Rat>) -> Rat {
    values.into_iter().fold(Rat::zero(), |acc, v| acc + v)
}

/// `1` as a rational.
pub fn one() -> Rat {
    Rat::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        assert_eq!(parse_rat("42").unwrap(), rat(42));
        assert_eq!(parse_rat("5/4").unwrap(), ratio(5, 4));
        assert_eq!(parse_rat("1.25").unwrap(), ratio(5, 4));
        assert_eq!(parse_rat("-0.5").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rat("2.8e6").unwrap(), rat(2_800_000));
        assert_eq!(parse_rat("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_rat(".5").unwrap(), ratio(1, 2));
        assert!(parse_rat("").is_err());
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("abc").is_err());
    }

    #[test]
    fn plain_rendering_is_exact() {
        assert_eq!(to_plain(&ratio(5, 4)), "1.25");
        assert_eq!(to_plain(&ratio(1, 3)), "1/3");
        assert_eq!(to_plain(&ratio(-1, 8)), "-0.125");
        assert_eq!(to_plain(&ratio(3, 1000)), "0.003");
        assert_eq!(to_plain(&rat(7)), "7");
        for s in ["1.25", "1/3", "-0.125", "0.003", "7"] {
            assert_eq!(to_plain(&parse_rat(s).unwrap()), s);
        }
    }

    #[test]
    fn infinite_orders_above_finite() {
        let big = Extended::Finite(rat(i64::MAX as i128));
        assert!(big < Extended::Infinite);
        assert!(Extended::Finite(rat(1)) < Extended::Finite(rat(2)));
        assert_eq!(
            [Extended::Finite(rat(5)), Extended::Infinite].iter().max(),
            Some(&Extended::Infinite)
        );
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(format_decimal(&ratio(4, 3), 12), "1.33333333333");
        assert_eq!(format_decimal(&rat(25_000_000), 12), "25000000");
        assert_eq!(format_decimal(&ratio(1, 1000), 12), "0.001");
    }
}
