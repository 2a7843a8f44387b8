//! Population-level transaction testing for customer statements.
//!
//! The pipeline runs in stages that can also be used on their own:
//!
//! 1. [`corpus`] generates seeded statement populations, source-of-truth
//!    records, discrepancy injections and a small labeled training set.
//! 2. [`extract`] trains an anchor/pattern/position model on the labeled
//!    set and runs it over every staged statement.
//! 3. [`normalize`] canonicalizes extracted currency and date strings.
//! 4. [`reconcile`] compares canonical values against the source of truth
//!    and emits field-level [`reconcile::AuditException`]s.
//! 5. [`store`] persists raw results, flattened rows, the exception ledger
//!    and an append-only audit log.
//! 6. [`metrics`] and [`costs`] report extraction quality, confidence and
//!    the manual-versus-automated cost comparison.
//!
//! [`pipeline`] wires the stages together end to end.

pub mod clock;
pub mod corpus;
pub mod costs;
pub mod extract;
pub mod fields;
pub mod metrics;
pub mod money;
pub mod normalize;
pub mod pipeline;
pub mod reconcile;
pub mod store;

pub use clock::{Clock, FixedClock, SystemClock};
pub use fields::{CanonicalValue, FieldKind, FieldSpec, ValueType};
pub use money::{Cents, YearMonth};
