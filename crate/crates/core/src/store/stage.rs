//! The document stage: a directory of `stmt_<customer_id>[_<YYYY-MM>].txt`
//! statement files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::corpus::{uri_for, StatementDocument};
use crate::money::YearMonth;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedDocument {
    pub doc_id: String,
    pub customer_id: String,
    pub period: Option<YearMonth>,
    pub uri: String,
    pub path: PathBuf,
    /// Set when the file name does not follow the stage convention.
    pub name_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DocumentStage {
    root: PathBuf,
}

/// Splits a stage file stem into customer id and optional period.
pub fn parse_stem(stem: &str) -> Option<(String, Option<YearMonth>)> {
    let rest = stem.strip_prefix("stmt_").filter(|r| !r.is_empty())?;
    if let Some((customer, period)) = rest.rsplit_once('_') {
        if let Ok(p) = period.parse::<YearMonth>() {
            return (!customer.is_empty()).then(|| (customer.to_string(), Some(p)));
        }
    }
    Some((rest.to_string(), None))
}

impl DocumentStage {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DocumentStage { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Enumerates staged statements, sorted by `doc_id`.
    pub fn list(&self) -> io::Result<Vec<StagedDocument>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let path = entry?.path();
            if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let (customer_id, period, name_error) = match parse_stem(&stem) {
                Some((c, p)) => (c, p, None),
                None => {
                    (stem.clone(), None, Some(format!("file name {stem:?} does not follow stmt_<customer_id>.txt")))
                }
            };
            out.push(StagedDocument { uri: uri_for(&stem), doc_id: stem, customer_id, period, path, name_error });
        }
        out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(out)
    }

    /// Reads one statement. Errors are reported as text so that a batch can
    /// record them and move on.
    pub fn load(&self, staged: &StagedDocument) -> Result<StatementDocument, String> {
        if let Some(e) = &staged.name_error {
            return Err(e.clone());
        }
        let bytes = fs::read(&staged.path).map_err(|e| format!("read {}: {e}", staged.uri))?;
        let text = String::from_utf8(bytes).map_err(|_| format!("{} is not valid UTF-8", staged.uri))?;
        let lines: Vec<String> = text.lines().map(str::to_string).collect();
        if lines.is_empty() {
            return Err(format!("{} is empty", staged.uri));
        }
        Ok(StatementDocument {
            doc_id: staged.doc_id.clone(),
            customer_id: staged.customer_id.clone(),
            lines,
            template_id: None,
            uri: staged.uri.clone(),
        })
    }

    pub fn load_by_id(&self, doc_id: &str) -> Result<StatementDocument, String> {
        let path = self.root.join(format!("{doc_id}.txt"));
        if doc_id.contains(['/', '\\']) || doc_id.starts_with('.') || !path.is_file() {
            return Err(format!("no staged statement {doc_id:?}"));
        }
        let (customer_id, period) = parse_stem(doc_id).unwrap_or((doc_id.to_string(), None));
        self.load(&StagedDocument {
            doc_id: doc_id.into(),
            customer_id,
            period,
            uri: uri_for(doc_id),
            path,
            name_error: None,
        })
    }

    pub fn put(&self, doc: &StatementDocument) -> io::Result<()> {
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join(format!("{}.txt", doc.doc_id)), doc.text())
    }

    /// Maps a stage URI (`stage/<file>`) to a local path. Cloud backends
    /// would return a signed URL here instead.
    pub fn resolve_uri(&self, uri: &str) -> Option<PathBuf> {
        let name = uri.strip_prefix("stage/")?;
        (!name.is_empty() && !name.contains(['/', '\\']) && !name.starts_with('.')).then(|| self.root.join(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_conventions() {
        assert_eq!(parse_stem("stmt_C00001"), Some(("C00001".into(), None)));
        assert_eq!(parse_stem("stmt_C00001_2024-03"), Some(("C00001".into(), "2024-03".parse().ok())));
        assert_eq!(parse_stem("stmt_A_B"), Some(("A_B".into(), None)));
        assert_eq!(parse_stem("statement"), None);
        assert_eq!(parse_stem("stmt_"), None);
    }

    #[test]
    fn uri_resolution_stays_in_stage() {
        let stage = DocumentStage::new("/data/stage");
        assert_eq!(stage.resolve_uri("stage/stmt_C1.txt"), Some(PathBuf::from("/data/stage/stmt_C1.txt")));
        assert_eq!(stage.resolve_uri("stage/../secrets"), None);
        assert_eq!(stage.resolve_uri("other/stmt_C1.txt"), None);
    }

    #[test]
    fn lists_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let stage = DocumentStage::new(dir.path());
        fs::write(dir.path().join("stmt_B.txt"), "line one\nline two\n").unwrap();
        fs::write(dir.path().join("stmt_A.txt"), [0xff, 0xfe, 0x00]).unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let listed = stage.list().unwrap();
        assert_eq!(listed.iter().map(|s| s.doc_id.as_str()).collect::<Vec<_>>(), ["stmt_A", "stmt_B"]);
        assert!(stage.load(&listed[0]).unwrap_err().contains("UTF-8"));
        assert_eq!(stage.load(&listed[1]).unwrap().lines, ["line one", "line two"]);
        assert!(DocumentStage::new(dir.path().join("missing")).list().is_err());
    }
}
