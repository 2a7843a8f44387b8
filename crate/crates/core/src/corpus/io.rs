//! On-disk forms of generated corpora.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Corpus, SourceRecord};
use crate::fields::{CanonicalValue, FieldKind};
use crate::normalize::normalize_currency;

pub const TRUTH_HEADER: [&str; 6] =
    ["customer_id", "account_number", "minimum_payment", "due_date", "statement_balance", "period"];

/// Per-document statement-side values, i.e. what a perfect extractor
/// should read off each rendered statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub doc_id: String,
    pub customer_id: String,
    pub values: BTreeMap<FieldKind, CanonicalValue>,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_truth_csv(path: &Path, records: &[SourceRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    w.write_record(TRUTH_HEADER).map_err(io::Error::other)?;
    for r in records {
        w.write_record([
            r.customer_id.as_str(),
            r.account_number.as_str(),
            &r.minimum_payment.to_string(),
            &r.due_date.format("%Y-%m-%d").to_string(),
            &r.statement_balance.to_string(),
            &r.period.to_string(),
        ])
        .map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn read_truth_csv(path: &Path) -> io::Result<Vec<SourceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header = r.headers().map_err(io::Error::other)?.clone();
    if header.iter().collect::<Vec<_>>() != TRUTH_HEADER {
        return Err(invalid(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    let amount = |s: &str| {
        normalize_currency(s)
            .ok()
            .and_then(|v| v.canonical.as_amount())
            .ok_or_else(|| invalid(format!("bad amount {s:?}")))
    };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(io::Error::other)?;
        out.push(SourceRecord {
            customer_id: row[0].to_string(),
            account_number: row[1].to_string(),
            minimum_payment: amount(&row[2])?,
            due_date: NaiveDate::parse_from_str(&row[3], "%Y-%m-%d").map_err(|e| invalid(e.to_string()))?,
            statement_balance: amount(&row[4])?,
            period: row[5].parse().map_err(|e: crate::money::ParseYearMonthError| invalid(e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), n + 1)))?);
    }
    Ok(out)
}

/// File layout of a generated corpus under a data directory.
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub root: PathBuf,
}

impl CorpusFiles {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CorpusFiles { root: root.into() }
    }

    pub fn stage_dir(&self) -> PathBuf {
        self.root.join("stage")
    }
    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.csv")
    }
    pub fn labeled(&self) -> PathBuf {
        self.root.join("labeled.jsonl")
    }
    pub fn expected(&self) -> PathBuf {
        self.root.join("expected_exceptions.jsonl")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.jsonl")
    }

    pub fn write(&self, corpus: &Corpus) -> io::Result<()> {
        let stage = self.stage_dir();
        fs::create_dir_all(&stage)?;
        for doc in &corpus.documents {
            fs::write(stage.join(format!("{}.txt", doc.doc_id)), doc.text())?;
        }
        write_truth_csv(&self.truth(), &corpus.truth)?;
        write_jsonl(&self.labeled(), &corpus.labeled)?;
        write_jsonl(&self.expected(), &corpus.expected)?;
        let ground: Vec<GroundTruthRow> = corpus
            .statement_records
            .iter()
            .map(|r| GroundTruthRow {
                doc_id: r.doc_id(),
                customer_id: r.customer_id.clone(),
                values: FieldKind::ALL.iter().map(|f| (*f, r.value(*f))).collect(),
            })
            .collect();
        write_jsonl(&self.ground_truth(), &ground)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_truth, TruthConfig};

    #[test]
    fn truth_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let records = generate_truth(&TruthConfig { size: 25, ..TruthConfig::default() }, 3).unwrap();
        write_truth_csv(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("customer_id,account_number,minimum_payment,due_date,statement_balance,period\n"));
        assert_eq!(read_truth_csv(&path).unwrap(), records);
    }
}
