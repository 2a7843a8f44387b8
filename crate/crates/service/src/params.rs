use std::str::FromStr;

use assurance_core::reconcile::{ExceptionCategory, ExceptionStatus};
use assurance_core::store::query::{ExceptionQuery, SortKey};
use assurance_core::FieldKind;

fn list<T: FromStr>(value: &str, name: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| format!("invalid {name} {v:?}")))
        .collect()
}

fn number<T: FromStr>(value: &str, name: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid {name} {value:?}"))
}

fn category(value: &str) -> Result<ExceptionCategory, ()> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| ())
}

/// Maps `GET /api/exceptions` query parameters onto a ledger query.
/// List parameters accept comma-separated values and may repeat.
pub fn parse_query(pairs: &[(String, String)]) -> Result<ExceptionQuery, String> {
    let mut q = ExceptionQuery::default();
    for (key, value) in pairs {
        match key.as_str() {
            "status" => q.statuses.extend(list::<ExceptionStatus>(value, "status")?),
            "field" => q.fields.extend(list::<FieldKind>(value, "field")?),
            "category" => {
                for v in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                    q.categories.push(category(v).map_err(|_| format!("invalid category {v:?}"))?);
                }
            }
            "min_materiality" => q.min_materiality = Some(number(value, key)?),
            "min_confidence" => q.min_confidence = Some(number(value, key)?),
            "max_confidence" => q.max_confidence = Some(number(value, key)?),
            "customer_id" | "customer" => q.customer_id = Some(value.clone()),
            "doc_id" => q.doc_id = Some(value.clone()),
            "run_id" => q.run_id = Some(value.clone()),
            "sort" => q.sort = value.parse::<SortKey>()?,
            "order" => {
                q.descending = match value.as_str() {
                    "asc" => false,
                    "desc" => true,
                    other => return Err(format!("invalid order {other:?}; use asc or desc")),
                }
            }
            "page" => q.page = number(value, key)?,
            "page_size" => q.page_size = number(value, key)?,
            other => return Err(format!("unknown parameter {other:?}")),
        }
    }
    for bound in [q.min_confidence, q.max_confidence].into_iter().flatten() {
        if !bound.is_finite() {
            return Err("confidence bounds must be finite".into());
        }
    }
    q.validate().map_err(|e| e.to_string())?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(pairs: &[(&str, &str)]) -> Result<ExceptionQuery, String> {
        parse_query(&pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Vec<_>>())
    }

    #[test]
    fn parses_filters() {
        let q =
            parse(&[("status", "open,confirmed"), ("field", "due_date"), ("min_materiality", "100"), ("order", "asc")])
                .unwrap();
        assert_eq!(q.statuses, vec![ExceptionStatus::Open, ExceptionStatus::Confirmed]);
        assert_eq!(q.fields, vec![FieldKind::DueDate]);
        assert_eq!(q.min_materiality, Some(100));
        assert!(!q.descending);
        assert_eq!(parse(&[]).unwrap(), ExceptionQuery::default());
        assert_eq!(parse(&[("category", "missing")]).unwrap().categories, vec![ExceptionCategory::Missing]);
    }

    #[test]
    fn rejects_malformed_filters() {
        for bad in [
            ("min_confidence", "1.01"),
            ("min_confidence", "NaN"),
            ("status", "closed"),
            ("field", "apr"),
            ("page", "0"),
            ("page_size", "501"),
            ("min_materiality", "-1"),
            ("sort", "banana"),
            ("order", "up"),
            ("colour", "red"),
        ] {
            assert!(parse(&[bad]).is_err(), "{bad:?}");
        }
    }
}
