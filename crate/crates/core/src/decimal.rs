// SPDX-License-Identifier: Apache-2.0

//! Exact rationals written and read as decimal strings.
//!
//! Money stays in integer satoshis; ratios (boost factor, BTC price, USD
//! figures, success rates) are `Ratio<i128>` and only rounded when printed.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serializer};
use thiserror::Error;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a decimal number: {0:?}")]
pub struct DecimalError(pub String);

/// Parses `-12`, `0.54`, `8582.00` and the like exactly.
pub fn parse_decimal(text: &str) -> Result<Rational, DecimalError> {
    let err = || DecimalError(text.to_string());
    let s = text.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) || frac_part.len() > 30 {
        return Err(err());
    }
    let int: i128 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| err())? };
    let scale = 10i128.checked_pow(frac_part.len() as u32).ok_or_else(err)?;
    let frac: i128 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| err())? };
    let numer = int.checked_mul(scale).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
    let value = Rational::new(numer, scale);
    Ok(if negative { -value } else { value })
}

/// Rounds to `places` decimals, halves away from zero.
pub fn format_decimal(value: &Rational, places: u32) -> String {
    let scale = 10i128.pow(places);
    let scaled = value * Rational::from_integer(scale);
    let rounded = scaled.abs().round().to_integer();
    let sign = if value.is_negative() && rounded != 0 { "-" } else { "" };
    let int = rounded / scale;
    if places == 0 {
        return format!("{sign}{int}");
    }
    let frac = rounded % scale;
    format!("{sign}{int}.{frac:0width$}", width = places as usize)
}

/// Shortest exact decimal when one exists, otherwise twelve places.
pub fn to_decimal_string(value: &Rational) -> String {
    let mut denom = *value.denom();
    let mut places = 0u32;
    while denom % 10 == 0 {
        denom /= 10;
        places += 1;
    }
    while denom % 2 == 0 || denom % 5 == 0 {
        denom /= if denom % 2 == 0 { 2 } else { 5 };
        places += 1;
    }
    if denom != 1 || places > 30 {
        return format_decimal(value, 12);
    }
    let text = format_decimal(value, places);
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

pub fn from_integer(v: i128) -> Rational {
    Rational::from_integer(v)
}

pub fn is_zero(value: &Rational) -> bool {
    value.is_zero()
}

/// Serde adapter: decimal string on output; string or JSON number on input.
pub mod serde_decimal {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_decimal_string(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            Raw::Float(f) => format!("{f}"),
        };
        parse_decimal(&text).map_err(serde::de::Error::custom)
    }
}
