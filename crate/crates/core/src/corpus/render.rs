//! Text rendering of statements.
//!
//! One template, `standard-v1`, with per-document variation drawn from the
//! variation seed: amount and date display formats, label wording, the
//! label/value separator, label/value line wrapping, optional notice lines,
//! section spacing and the number of transaction lines.

use chrono::{Datelike, NaiveDate};
use rand::Rng;

use super::{uri_for, CorpusError, SourceRecord, StatementDocument};
use crate::fields::{CanonicalValue, FieldKind};
use crate::money::Cents;
use crate::normalize::MONTH_NAMES;

pub const DEFAULT_TEMPLATE: &str = "standard-v1";
pub const TEMPLATE_IDS: &[&str] = &[DEFAULT_TEMPLATE];

const NOTICES: &[&str] = &[
    "Go paperless and manage your account online.",
    "Your rewards summary is available in the mobile app.",
    "Visit meridian.example/help for account assistance.",
];

const MERCHANTS: &[&str] = &[
    "GROCERY MARKET #118",
    "CITY FUEL STATION",
    "CORNER COFFEE HOUSE",
    "ONLINE BOOKSELLER",
    "HARDWARE SUPPLY CO",
    "RIVERSIDE PHARMACY",
    "METRO TRANSIT FARE",
    "GARDEN RESTAURANT",
    "STREAMING SERVICE",
    "SPORTING GOODS OUTLET",
];

const LATE_FEE: Cents = Cents(40_00);

/// Amount display formats: `$1,234.56`, `$1234.56`, `USD 1,234.56`.
pub fn amount_surface_forms(value: Cents) -> [String; 3] {
    [format!("${}", value.to_grouped()), format!("${}", value.to_plain()), format!("USD {}", value.to_grouped())]
}

/// Date display formats: `MM/DD/YYYY`, `Month D, YYYY`, `YYYY-MM-DD`.
pub fn date_surface_forms(date: NaiveDate) -> [String; 3] {
    [
        date.format("%m/%d/%Y").to_string(),
        format!("{} {}, {:04}", MONTH_NAMES[date.month0() as usize], date.day(), date.year()),
        date.format("%Y-%m-%d").to_string(),
    ]
}

/// All distinct template renderings of a canonical value.
pub fn surface_forms(value: &CanonicalValue) -> Vec<String> {
    let mut forms: Vec<String> = match value {
        CanonicalValue::Amount(c) => amount_surface_forms(*c).into(),
        CanonicalValue::Date(d) => date_surface_forms(*d).into(),
    };
    forms.dedup();
    forms
}

fn label_variants(field: FieldKind) -> [&'static str; 2] {
    match field {
        FieldKind::MinimumPayment => ["Minimum Payment Due", "Minimum Amount Due"],
        FieldKind::DueDate => ["Payment Due Date", "Due Date"],
        FieldKind::StatementBalance => ["Statement Balance", "New Balance"],
    }
}

struct Layout {
    amount_format: usize,
    date_format: usize,
    separator: usize,
    labels: [usize; 3],
    wrapped: [bool; 3],
    notices: usize,
    section_gap: [usize; 3],
    transactions: usize,
}

impl Layout {
    fn draw(rng: &mut impl Rng) -> Self {
        Layout {
            amount_format: rng.random_range(0..3),
            date_format: rng.random_range(0..3),
            separator: rng.random_range(0..3),
            labels: [rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2)],
            wrapped: [rng.random_bool(0.15), rng.random_bool(0.15), rng.random_bool(0.15)],
            notices: rng.random_range(0..=2),
            section_gap: [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)],
            transactions: rng.random_range(3..=8),
        }
    }

    fn amount(&self, c: Cents) -> String {
        amount_surface_forms(c)[self.amount_format].clone()
    }

    fn date(&self, d: NaiveDate) -> String {
        date_surface_forms(d)[self.date_format].clone()
    }

    fn labeled(&self, label: &str, value: &str) -> String {
        match self.separator {
            0 => format!("{label}: {value}"),
            1 => format!("{label}:   {value}"),
            _ => format!("{:<28}{value}", format!("{label}:")),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Fixed,
    Decoy,
    Target,
}

/// Renders one statement.
///
/// Each target value appears on exactly one line. Decoy lines (summary
/// amounts, transactions, the late-fee notice) whose text happens to contain
/// a target rendering are dropped.
pub fn render_statement(
    record: &SourceRecord,
    template_id: &str,
    variation_seed: u64,
) -> Result<StatementDocument, CorpusError> {
    if !TEMPLATE_IDS.contains(&template_id) {
        return Err(CorpusError::UnknownTemplate(template_id.to_string()));
    }
    let mut rng = super::rng_for(variation_seed, 0);
    let layout = Layout::draw(&mut rng);
    let mut lines: Vec<(Role, String)> = Vec::new();
    let mut push = |role: Role, text: String| lines.push((role, text));

    push(Role::Fixed, "MERIDIAN BANK CARD SERVICES".into());
    push(Role::Fixed, "Credit Card Statement".into());
    for notice in NOTICES.iter().take(layout.notices) {
        push(Role::Fixed, (*notice).into());
    }
    push(Role::Fixed, String::new());

    let last4 = &record.account_number[record.account_number.len().saturating_sub(4)..];
    push(Role::Fixed, layout.labeled("Account Number", &format!("XXXX XXXX XXXX {last4}")));
    push(Role::Fixed, layout.labeled("Customer ID", &record.customer_id));
    let (start, end) = (record.period.first_day(), record.period.last_day());
    push(Role::Decoy, layout.labeled("Statement Period", &format!("{} - {}", layout.date(start), layout.date(end))));
    push(Role::Decoy, layout.labeled("Closing Date", &layout.date(end)));
    for _ in 0..layout.section_gap[0] {
        push(Role::Fixed, String::new());
    }

    push(Role::Fixed, "ACCOUNT SUMMARY".into());
    let balance = record.statement_balance;
    let decoy_amount = |rng: &mut rand_chacha::ChaCha8Rng, hi: i64| Cents(rng.random_range(0..=hi.max(1)));
    let previous = decoy_amount(&mut rng, balance.0 * 2);
    let payments = decoy_amount(&mut rng, previous.0);
    let purchases = decoy_amount(&mut rng, balance.0);
    let fees = decoy_amount(&mut rng, 39_00);
    let interest = decoy_amount(&mut rng, (balance.0 / 40).max(1));
    push(Role::Decoy, layout.labeled("Previous Total", &layout.amount(previous)));
    push(Role::Decoy, layout.labeled("Payments and Credits", &layout.amount(payments)));
    push(Role::Decoy, layout.labeled("Purchases", &layout.amount(purchases)));
    push(Role::Decoy, layout.labeled("Fees Charged", &layout.amount(fees)));
    push(Role::Decoy, layout.labeled("Interest Charged", &layout.amount(interest)));

    let targets = [
        (FieldKind::StatementBalance, layout.amount(record.statement_balance)),
        (FieldKind::MinimumPayment, layout.amount(record.minimum_payment)),
        (FieldKind::DueDate, layout.date(record.due_date)),
    ];
    for (field, value) in &targets {
        let slot = FieldKind::ALL.iter().position(|f| f == field).expect("known field");
        let label = label_variants(*field)[layout.labels[slot]];
        if layout.wrapped[slot] {
            push(Role::Fixed, format!("{label}:"));
            push(Role::Target, format!("    {value}"));
        } else {
            push(Role::Target, layout.labeled(label, value));
        }
    }

    let limit = Cents((balance.0 / 100_000 + 1 + rng.random_range(0..5)) * 100_000);
    push(Role::Decoy, layout.labeled("Credit Limit", &layout.amount(limit)));
    push(Role::Decoy, layout.labeled("Available Credit", &layout.amount(Cents(limit.0 - balance.0))));
    for _ in 0..layout.section_gap[1] {
        push(Role::Fixed, String::new());
    }

    push(Role::Fixed, "TRANSACTIONS".into());
    for _ in 0..layout.transactions {
        let day = rng.random_range(1..=end.day());
        let merchant = MERCHANTS[rng.random_range(0..MERCHANTS.len())];
        let amount = Cents(rng.random_range(1_00..=450_00));
        push(Role::Decoy, format!("{:02}/{:02}  {merchant:<24}{}", record.period.month(), day, layout.amount(amount)));
    }
    for _ in 0..layout.section_gap[2] {
        push(Role::Fixed, String::new());
    }
    push(
        Role::Decoy,
        format!(
            "Late Payment Warning: If we do not receive your minimum payment by the payment due date, \
             you may have to pay a late fee of up to {}.",
            layout.amount(LATE_FEE)
        ),
    );
    push(Role::Fixed, "Questions? Call 1-800-555-0100.".into());

    let target_texts: Vec<&str> = targets.iter().map(|(_, v)| v.as_str()).collect();
    let lines = lines
        .into_iter()
        .filter(|(role, text)| *role != Role::Decoy || !target_texts.iter().any(|t| text.contains(t)))
        .map(|(_, text)| text)
        .collect();

    let doc_id = record.doc_id();
    Ok(StatementDocument {
        uri: uri_for(&doc_id),
        doc_id,
        customer_id: record.customer_id.clone(),
        lines,
        template_id: Some(template_id.to_string()),
    })
}
