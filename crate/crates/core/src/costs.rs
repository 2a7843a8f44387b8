//! Manual-versus-automated cost model and the baseline comparison table.
//!
//! Money is carried as [`Decimal`] so that every figure is exact to the cent.

use std::fmt::Write as _;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::metrics::{round3, FieldMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub auditors: u32,
    /// Currency per hour.
    pub hourly_rate: Decimal,
    /// Statements sampled per quarter.
    pub sample_size: u64,
    pub minutes_per_statement: Decimal,
    /// Statements per year.
    pub population: u64,
    pub one_time_cost: Decimal,
    pub per_doc_cost: Decimal,
    /// Fixed yearly cost of running the dashboard.
    pub dashboard_overhead: Decimal,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            auditors: 3,
            hourly_rate: Decimal::new(85, 0),
            sample_size: 500,
            minutes_per_statement: Decimal::new(15, 0),
            population: 100_000,
            one_time_cost: Decimal::new(9_000, 0),
            per_doc_cost: Decimal::new(45, 3),
            dashboard_overhead: Decimal::new(500, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("{0} must not be negative")]
    Negative(&'static str),
}

impl CostParams {
    fn validate(&self) -> Result<(), CostError> {
        let checks = [
            ("hourly_rate", self.hourly_rate),
            ("minutes_per_statement", self.minutes_per_statement),
            ("one_time_cost", self.one_time_cost),
            ("per_doc_cost", self.per_doc_cost),
            ("dashboard_overhead", self.dashboard_overhead),
        ];
        match checks.iter().find(|(_, v)| v.is_sign_negative() && !v.is_zero()) {
            Some((name, _)) => Err(CostError::Negative(name)),
            None => Ok(()),
        }
    }

    /// Share of the yearly population covered by one quarterly sample.
    pub fn sample_fraction(&self) -> Option<Decimal> {
        (self.population > 0).then(|| Decimal::from(self.sample_size) / Decimal::from(self.population))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub quarterly_manual: Decimal,
    pub annual_manual: Decimal,
    pub annual_automated: Decimal,
    pub annual_savings: Decimal,
    /// Index `k` is the cumulative position at the end of year `k`; year 0
    /// carries only the one-time cost.
    pub cumulative_by_year: Vec<Decimal>,
    /// Percent; `None` when the manual cost is zero.
    pub recurring_reduction_pct: Option<Decimal>,
    /// `None` when there are no savings to pay the one-time cost back.
    pub payback_months: Option<Decimal>,
    pub one_time_cost: Decimal,
}

pub fn cost_model(params: &CostParams, years: usize) -> Result<CostComparison, CostError> {
    params.validate()?;
    let hours = params.minutes_per_statement / Decimal::from(60);
    let quarterly_manual =
        Decimal::from(params.sample_size) * hours * params.hourly_rate * Decimal::from(params.auditors);
    let annual_manual = quarterly_manual * Decimal::from(4);
    let annual_automated = Decimal::from(params.population) * params.per_doc_cost + params.dashboard_overhead;
    let annual_savings = annual_manual - annual_automated;
    let cumulative_by_year =
        (0..=years).map(|k| annual_savings * Decimal::from(k as u64) - params.one_time_cost).collect();
    let recurring_reduction_pct =
        (!annual_manual.is_zero()).then(|| annual_savings / annual_manual * Decimal::ONE_HUNDRED);
    let payback_months = if params.one_time_cost.is_zero() {
        Some(Decimal::ZERO)
    } else if annual_savings > Decimal::ZERO {
        Some(params.one_time_cost / (annual_savings / Decimal::from(12)))
    } else {
        None
    };
    Ok(CostComparison {
        quarterly_manual: quarterly_manual.normalize(),
        annual_manual: annual_manual.normalize(),
        annual_automated: annual_automated.normalize(),
        annual_savings: annual_savings.normalize(),
        cumulative_by_year,
        recurring_reduction_pct,
        payback_months,
        one_time_cost: params.one_time_cost,
    })
}

/// Rounds half away from zero and pads to exactly `dp` decimals.
pub fn round_display(value: Decimal, dp: u32) -> String {
    let mut rounded = value.round_dp_with_strategy(dp, RoundingStrategy::MidpointAwayFromZero);
    rounded.rescale(dp);
    rounded.to_string()
}

/// `$1,234.56`, `-$9,000.00`.
pub fn format_money(value: Decimal) -> String {
    let rounded = value.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
    let text = round_display(rounded.abs(), 2);
    let (int, frac) = text.split_once('.').unwrap_or((&text, "00"));
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    let sign = if rounded.is_sign_negative() && !rounded.is_zero() { "-" } else { "" };
    format!("{sign}${grouped}.{frac}")
}

impl CostComparison {
    /// Rows of `(year, manual, automated, savings, cumulative)`.
    pub fn rows(&self) -> Vec<(usize, Decimal, Decimal, Decimal, Decimal)> {
        self.cumulative_by_year
            .iter()
            .enumerate()
            .map(|(year, cumulative)| {
                if year == 0 {
                    (0, Decimal::ZERO, self.one_time_cost, -self.one_time_cost, *cumulative)
                } else {
                    (year, self.annual_manual, self.annual_automated, self.annual_savings, *cumulative)
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["year", "manual_cost", "automated_cost", "savings", "cumulative"]).expect("in-memory write");
        for (year, manual, automated, savings, cumulative) in self.rows() {
            let cell = |d: Decimal| round_display(d, 2);
            w.write_record([year.to_string(), cell(manual), cell(automated), cell(savings), cell(cumulative)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}{:>14}{:>16}{:>14}{:>14}",
            "Year", "Manual Cost", "Automated Cost", "Savings", "Cumulative"
        );
        for (year, manual, automated, savings, cumulative) in self.rows() {
            let _ = writeln!(
                out,
                "{:<8}{:>14}{:>16}{:>14}{:>14}",
                format!("Year {year}"),
                format_money(manual),
                format_money(automated),
                format_money(savings),
                format_money(cumulative)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "quarterly manual cost: {}", format_money(self.quarterly_manual));
        let _ = writeln!(out, "annual manual cost: {}", format_money(self.annual_manual));
        let _ = writeln!(out, "annual automated cost: {}", format_money(self.annual_automated));
        match self.recurring_reduction_pct {
            Some(p) => _ = writeln!(out, "recurring cost reduction: {}%", round_display(p, 1)),
            None => _ = writeln!(out, "recurring cost reduction: undefined"),
        }
        match self.payback_months {
            Some(m) => _ = writeln!(out, "payback: {} months", round_display(m, 2)),
            None => _ = writeln!(out, "payback: never"),
        }
        out
    }
}

/// Run figures feeding the automated column of the baseline table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunFigures {
    pub documents_in_population: usize,
    pub documents_processed: usize,
    pub field_metrics: Vec<FieldMetrics>,
    pub mean_confidence: Option<f64>,
    pub runtime_seconds: f64,
    pub exceptions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dimension: String,
    pub manual: String,
    pub automated: String,
}

fn percent(d: Decimal) -> String {
    let p = (d * Decimal::ONE_HUNDRED).round_dp(2).normalize();
    format!("{p}%")
}

pub fn baseline_comparison(run: &RunFigures, params: &CostParams) -> Vec<BaselineRow> {
    let sample = params.sample_fraction().map(percent).unwrap_or_else(|| "n/a".into());
    let full = run.documents_in_population > 0 && run.documents_processed == run.documents_in_population;
    let coverage = if full {
        "Full population (100%)".to_string()
    } else {
        let frac = if run.documents_in_population == 0 {
            Decimal::ZERO
        } else {
            Decimal::from(run.documents_processed as u64) / Decimal::from(run.documents_in_population as u64)
        };
        format!("{} of {} documents ({})", run.documents_processed, run.documents_in_population, percent(frac))
    };
    let accuracy = run
        .field_metrics
        .iter()
        .map(|m| m.f1)
        .reduce(f64::min)
        .map(|f1| format!("{f1:.2} (lowest field-level F1)"))
        .unwrap_or_else(|| "n/a (no ground truth)".into());
    let confidence = match run.mean_confidence {
        Some(c) => format!("Model-generated (avg. {:.3})", round3(c)),
        None => "Model-generated (no extractions)".into(),
    };
    let rows = [
        ("Documents reviewed", format!("Sample-based (e.g., {sample})"), coverage),
        ("Extraction accuracy", "High (manual)".into(), accuracy),
        ("Confidence reporting", "Not available".into(), confidence),
        (
            "Scalability",
            "Limited by human effort".into(),
            format!("{} documents in {:.2} s", run.documents_processed, run.runtime_seconds),
        ),
        ("Review latency", "Periodic (batch audits)".into(), "Per pipeline run".into()),
        ("Sampling risk", "Present".into(), if full { "Eliminated".into() } else { "Present".into() }),
        (
            "Audit effort",
            "High manual effort".into(),
            format!("Focused exception review ({} exceptions)", run.exceptions),
        ),
        ("Explainability", "Human judgment".into(), "Field-level values + confidence".into()),
    ];
    rows.into_iter().map(|(d, m, a)| BaselineRow { dimension: d.to_string(), manual: m, automated: a }).collect()
}

pub fn baseline_text(rows: &[BaselineRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:<32}Automated Approach", "Dimension", "Manual Approach");
    for r in rows {
        let _ = writeln!(out, "{:<22}{:<32}{}", r.dimension, r.manual, r.automated);
    }
    out
}
