use chrono::{DateTime, Utc};

/// Source of timestamps. Everything that stamps a record goes through a
/// clock so reproducibility runs can pin time.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    /// 2024-04-01T00:00:00Z, the default pinned instant for reproducible runs.
    pub fn epoch() -> Self {
        FixedClock(DateTime::from_timestamp(1_711_929_600, 0).expect("valid timestamp"))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}
