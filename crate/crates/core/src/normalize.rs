//! Deterministic normalization of statement currency and date strings.
//!
//! Currency strings become integer cents; dates become calendar dates
//! rendered as `YYYY-MM-DD`. Parsing never depends on locale, never rounds,
//! and never panics: every input yields exactly one of [`NormalizedValue`]
//! or [`NormalizeError`].
//!
//! Accepted currency surface: optional surrounding whitespace, one `$`
//! and/or one `USD` token (either may be padded with spaces), no whitespace
//! inside the digits, thousands-separator commas in groups of three,
//! at most two fractional digits, and a negative sign written either as
//! surrounding parentheses or a leading `-`/`−`.
//!
//! Accepted date formats: `MM/DD/YYYY`, `M/D/YYYY`, `Month D, YYYY` with a
//! full English month name, and `YYYY-MM-DD`.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::fields::{CanonicalValue, ValueType};
use crate::money::Cents;

pub const POLICY_VERSION: &str = "normalize-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedValue {
    pub canonical: CanonicalValue,
    pub source_raw: String,
}

impl NormalizedValue {
    pub fn kind(&self) -> ValueType {
        self.canonical.value_type()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeReason {
    Empty,
    MalformedNumber,
    MultipleDecimalPoints,
    UnrecognizedDateFormat,
    InvalidCalendarDate,
}

impl NormalizeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizeReason::Empty => "empty",
            NormalizeReason::MalformedNumber => "malformed_number",
            NormalizeReason::MultipleDecimalPoints => "multiple_decimal_points",
            NormalizeReason::UnrecognizedDateFormat => "unrecognized_date_format",
            NormalizeReason::InvalidCalendarDate => "invalid_calendar_date",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "empty" => NormalizeReason::Empty,
            "malformed_number" => NormalizeReason::MalformedNumber,
            "multiple_decimal_points" => NormalizeReason::MultipleDecimalPoints,
            "unrecognized_date_format" => NormalizeReason::UnrecognizedDateFormat,
            "invalid_calendar_date" => NormalizeReason::InvalidCalendarDate,
            _ => return None,
        })
    }
}

impl fmt::Display for NormalizeReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{reason}: {source_raw:?}")]
pub struct NormalizeError {
    pub reason: NormalizeReason,
    pub source_raw: String,
}

impl NormalizeError {
    fn new(reason: NormalizeReason, raw: &str) -> Self {
        NormalizeError { reason, source_raw: raw.to_string() }
    }
}

pub type NormalizeResult = Result<NormalizedValue, NormalizeError>;

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Amounts beyond this many integer digits are rejected rather than risk
/// overflowing i64 cents.
const MAX_INTEGER_DIGITS: usize = 15;

pub fn normalize_currency(raw: &str) -> NormalizeResult {
    parse_cents(raw)
        .map(|c| NormalizedValue { canonical: CanonicalValue::Amount(c), source_raw: raw.to_string() })
        .map_err(|reason| NormalizeError::new(reason, raw))
}

fn parse_cents(raw: &str) -> Result<Cents, NormalizeReason> {
    use NormalizeReason::*;

    let mut s = raw.trim();
    if s.is_empty() {
        return Err(Empty);
    }

    let mut negative = false;
    if let Some(inner) = s.strip_prefix('(') {
        s = inner.strip_suffix(')').ok_or(MalformedNumber)?.trim();
        negative = true;
    }

    // Drop at most one "USD" token and at most one "$" anywhere in the text.
    let mut body = s.to_string();
    if let Some(pos) = body.find("USD") {
        body.replace_range(pos..pos + 3, " ");
        if body.contains("USD") {
            return Err(MalformedNumber);
        }
    }
    if let Some(pos) = body.find('$') {
        body.replace_range(pos..pos + 1, " ");
        if body.contains('$') {
            return Err(MalformedNumber);
        }
    }
    let body = body.trim();

    let digits = match body.strip_prefix('-').or_else(|| body.strip_prefix('\u{2212}')) {
        Some(rest) => {
            if negative {
                return Err(MalformedNumber);
            }
            negative = true;
            rest.trim_start()
        }
        None => body,
    };
    if digits.is_empty() {
        return Err(MalformedNumber);
    }
    if !digits.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.') {
        return Err(MalformedNumber);
    }
    if digits.matches('.').count() > 1 {
        return Err(MultipleDecimalPoints);
    }

    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if frac_part.contains(',') || frac_part.len() > 2 {
        return Err(MalformedNumber);
    }
    let int_digits = strip_grouping(int_part)?;
    if int_digits.is_empty() && frac_part.is_empty() {
        return Err(MalformedNumber);
    }
    if int_digits.len() > MAX_INTEGER_DIGITS {
        return Err(MalformedNumber);
    }

    let whole: i64 = if int_digits.is_empty() { 0 } else { int_digits.parse().map_err(|_| MalformedNumber)? };
    let frac: i64 = match frac_part.len() {
        0 => 0,
        1 => frac_part.parse::<i64>().map_err(|_| MalformedNumber)? * 10,
        _ => frac_part.parse().map_err(|_| MalformedNumber)?,
    };
    let cents = whole * 100 + frac;
    Ok(Cents(if negative { -cents } else { cents }))
}

/// Validates comma placement (first group of 1 to 3 digits, then groups of exactly
/// three) and returns the bare digit string.
fn strip_grouping(int_part: &str) -> Result<String, NormalizeReason> {
    if !int_part.contains(',') {
        return Ok(int_part.to_string());
    }
    let groups: Vec<&str> = int_part.split(',').collect();
    let first_ok = (1..=3).contains(&groups[0].len());
    let rest_ok = groups[1..].iter().all(|g| g.len() == 3);
    if !first_ok || !rest_ok {
        return Err(NormalizeReason::MalformedNumber);
    }
    Ok(groups.concat())
}

pub fn normalize_date(raw: &str) -> NormalizeResult {
    parse_date(raw)
        .map(|d| NormalizedValue { canonical: CanonicalValue::Date(d), source_raw: raw.to_string() })
        .map_err(|reason| NormalizeError::new(reason, raw))
}

fn parse_date(raw: &str) -> Result<NaiveDate, NormalizeReason> {
    use NormalizeReason::*;

    let s = raw.trim();
    if s.is_empty() {
        return Err(Empty);
    }
    let (year, month, day) =
        parse_iso(s).or_else(|| parse_slash(s)).or_else(|| parse_long(s)).ok_or(UnrecognizedDateFormat)?;
    NaiveDate::from_ymd_opt(year, month, day).ok_or(InvalidCalendarDate)
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_iso(s: &str) -> Option<(i32, u32, u32)> {
    let mut parts = s.split('-');
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || y.len() != 4 || m.len() != 2 || d.len() != 2 {
        return None;
    }
    if !(all_digits(y) && all_digits(m) && all_digits(d)) {
        return None;
    }
    Some((y.parse().ok()?, m.parse().ok()?, d.parse().ok()?))
}

fn parse_slash(s: &str) -> Option<(i32, u32, u32)> {
    let mut parts = s.split('/');
    let (m, d, y) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || !(1..=2).contains(&m.len()) || !(1..=2).contains(&d.len()) || y.len() != 4 {
        return None;
    }
    if !(all_digits(y) && all_digits(m) && all_digits(d)) {
        return None;
    }
    Some((y.parse().ok()?, m.parse().ok()?, d.parse().ok()?))
}

fn parse_long(s: &str) -> Option<(i32, u32, u32)> {
    let (month_day, year) = s.split_once(',')?;
    let year = year.trim_start();
    if year.len() != 4 || !all_digits(year) {
        return None;
    }
    let mut words = month_day.split_whitespace();
    let (name, day) = (words.next()?, words.next()?);
    if words.next().is_some() || !(1..=2).contains(&day.len()) || !all_digits(day) {
        return None;
    }
    // "March5, 2024" and similar squashed forms are not in the registry.
    if !month_day.contains(char::is_whitespace) || month_day.ends_with(char::is_whitespace) {
        return None;
    }
    let month = MONTH_NAMES.iter().position(|m| m.eq_ignore_ascii_case(name))? as u32 + 1;
    Some((year.parse().ok()?, month, day.parse().ok()?))
}

/// Dispatches on the value type; `None` is an `empty` error.
pub fn normalize_field(kind: ValueType, raw: Option<&str>) -> NormalizeResult {
    let Some(raw) = raw else {
        return Err(NormalizeError::new(NormalizeReason::Empty, ""));
    };
    match kind {
        ValueType::Currency => normalize_currency(raw),
        ValueType::Date => normalize_date(raw),
    }
}

/// The canonical text rendering: `1234.56` / `-25.00` or `YYYY-MM-DD`.
pub fn render_canonical(value: &CanonicalValue) -> String {
    value.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use NormalizeReason::*;

    fn cents(raw: &str) -> Result<i64, NormalizeReason> {
        normalize_currency(raw).map(|v| v.canonical.as_amount().unwrap().0).map_err(|e| e.reason)
    }

    fn date(raw: &str) -> Result<String, NormalizeReason> {
        normalize_date(raw).map(|v| v.canonical.to_string()).map_err(|e| e.reason)
    }

    #[test]
    fn currency_examples() {
        assert_eq!(cents("$1,234.56"), Ok(123456));
        assert_eq!(cents("(25.00)"), Ok(-2500));
        assert_eq!(cents("1.234.56"), Err(MultipleDecimalPoints));
        assert_eq!(cents("1234.5"), Ok(123450));
        assert_eq!(cents("  USD 1,234.56 "), Ok(123456));
        assert_eq!(cents("1,234.56 USD"), Ok(123456));
        assert_eq!(cents("-$25"), Ok(-2500));
        assert_eq!(cents("\u{2212}25.00"), Ok(-2500));
        assert_eq!(cents("$ 25.00"), Ok(2500));
        assert_eq!(cents(".5"), Ok(50));
        assert_eq!(cents("- $ 25"), Ok(-2500));
    }

    #[test]
    fn currency_errors() {
        assert_eq!(cents(""), Err(Empty));
        assert_eq!(cents("   "), Err(Empty));
        assert_eq!(cents("12.345"), Err(MalformedNumber));
        assert_eq!(cents("1,23.45"), Err(MalformedNumber));
        assert_eq!(cents("12a.00"), Err(MalformedNumber));
        assert_eq!(cents("$$5"), Err(MalformedNumber));
        assert_eq!(cents("(-5.00)"), Err(MalformedNumber));
        assert_eq!(cents("(5.00"), Err(MalformedNumber));
        assert_eq!(cents("$"), Err(MalformedNumber));
        assert_eq!(cents("."), Err(MalformedNumber));
        assert_eq!(cents("1234567890123456.00"), Err(MalformedNumber));
        assert_eq!(cents("1.234,56"), Err(MalformedNumber));
        assert_eq!(cents("12 34"), Err(MalformedNumber));
        assert_eq!(cents("1 USD 2"), Err(MalformedNumber));
        assert_eq!(cents("25 -"), Err(MalformedNumber));
    }

    #[test]
    fn date_examples() {
        assert_eq!(date("March 5, 2024").as_deref(), Ok("2024-03-05"));
        assert_eq!(date("02/30/2024"), Err(InvalidCalendarDate));
        assert_eq!(date("2024-03-05").as_deref(), Ok("2024-03-05"));
        assert_eq!(date("3/5/2024").as_deref(), Ok("2024-03-05"));
        assert_eq!(date("02/29/2024").as_deref(), Ok("2024-02-29"));
        assert_eq!(date("02/29/2023"), Err(InvalidCalendarDate));
        assert_eq!(date("13/01/2024"), Err(InvalidCalendarDate));
        assert_eq!(date("03/04/05"), Err(UnrecognizedDateFormat));
        assert_eq!(date("Mar 5, 2024"), Err(UnrecognizedDateFormat));
        assert_eq!(date("2024/03/05"), Err(UnrecognizedDateFormat));
        assert_eq!(date("March5, 2024"), Err(UnrecognizedDateFormat));
        assert_eq!(date(""), Err(Empty));
    }

    #[test]
    fn field_dispatch() {
        let v = normalize_field(ValueType::Currency, Some("$25.00")).unwrap();
        assert_eq!(v.canonical, CanonicalValue::Amount(Cents(2500)));
        assert_eq!(normalize_field(ValueType::Date, None).unwrap_err().reason, Empty);
    }

    #[test]
    fn reason_names_round_trip() {
        for r in [Empty, MalformedNumber, MultipleDecimalPoints, UnrecognizedDateFormat, InvalidCalendarDate] {
            assert_eq!(NormalizeReason::parse(r.as_str()), Some(r));
        }
    }
}
