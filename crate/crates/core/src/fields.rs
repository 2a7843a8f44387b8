//! Target fields and their canonical values.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::money::Cents;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    MinimumPayment,
    DueDate,
    StatementBalance,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [FieldKind::MinimumPayment, FieldKind::DueDate, FieldKind::StatementBalance];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::MinimumPayment => "minimum_payment",
            FieldKind::DueDate => "due_date",
            FieldKind::StatementBalance => "statement_balance",
        }
    }

    pub fn value_type(self) -> ValueType {
        match self {
            FieldKind::MinimumPayment | FieldKind::StatementBalance => ValueType::Currency,
            FieldKind::DueDate => ValueType::Date,
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field {0:?}")]
pub struct UnknownField(pub String);

impl FromStr for FieldKind {
    type Err = UnknownField;

    /// Accepts the canonical snake_case names plus the short CLI aliases
    /// `mp`, `dd` and `bal`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minimum_payment" | "mp" => Ok(FieldKind::MinimumPayment),
            "due_date" | "dd" => Ok(FieldKind::DueDate),
            "statement_balance" | "bal" => Ok(FieldKind::StatementBalance),
            other => Err(UnknownField(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Currency,
    Date,
}

/// Declaration of one extraction target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub field_kind: FieldKind,
    pub prompt: String,
    pub value_type: ValueType,
}

impl FieldSpec {
    pub fn new(field_kind: FieldKind, prompt: impl Into<String>) -> Self {
        FieldSpec { field_kind, prompt: prompt.into(), value_type: field_kind.value_type() }
    }

    /// The three statement targets with their auditor prompts.
    pub fn defaults() -> Vec<FieldSpec> {
        vec![
            FieldSpec::new(FieldKind::MinimumPayment, "What is the minimum payment due?"),
            FieldSpec::new(FieldKind::DueDate, "What is the payment due date?"),
            FieldSpec::new(FieldKind::StatementBalance, "What is the statement balance?"),
        ]
    }

    pub fn is_consistent(&self) -> bool {
        self.value_type == self.field_kind.value_type()
    }
}

/// A normalized field value: integer cents or a calendar date.
///
/// Serialized untagged, so amounts appear as integers and dates as
/// `YYYY-MM-DD` strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CanonicalValue {
    Amount(Cents),
    Date(NaiveDate),
}

impl CanonicalValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            CanonicalValue::Amount(_) => ValueType::Currency,
            CanonicalValue::Date(_) => ValueType::Date,
        }
    }

    pub fn as_amount(&self) -> Option<Cents> {
        match *self {
            CanonicalValue::Amount(c) => Some(c),
            CanonicalValue::Date(_) => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match *self {
            CanonicalValue::Date(d) => Some(d),
            CanonicalValue::Amount(_) => None,
        }
    }
}

impl fmt::Display for CanonicalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalValue::Amount(c) => write!(f, "{c}"),
            CanonicalValue::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}
