//! Loading project corpora from CSV or JSON exports.
//!
//! Column names differ between data portals, so a [`FieldMapping`] names the
//! columns holding the id, title and description. Text is cleaned on load;
//! the eligibility filter and de-duplication run as separate steps and
//! their drop counts are folded into one [`IngestReport`].

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Project, ProjectKind};

/// Minimum description length used when none is configured.
pub const DEFAULT_MIN_DESCRIPTION_CHARS: usize = 100;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("invalid field mapping: {0}")]
    InvalidMapping(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub id_column: String,
    pub title_column: String,
    pub description_column: String,
    #[serde(default = "default_kind")]
    pub kind_default: ProjectKind,
    #[serde(default)]
    pub metadata_columns: Vec<String>,
    pub source_name: String,
}

fn default_kind() -> ProjectKind {
    ProjectKind::Activity
}

impl FieldMapping {
    /// Columns `id`, `title`, `description`; kind `activity`.
    pub fn simple(source_name: impl Into<String>) -> Self {
        FieldMapping {
            id_column: "id".into(),
            title_column: "title".into(),
            description_column: "description".into(),
            kind_default: ProjectKind::Activity,
            metadata_columns: Vec::new(),
            source_name: source_name.into(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let cols = [&self.id_column, &self.title_column, &self.description_column];
        if cols.iter().any(|c| c.trim().is_empty()) {
            return Err(IngestError::InvalidMapping("required column names must be non-empty".into()));
        }
        if cols[0] == cols[1] || cols[0] == cols[2] || cols[1] == cols[2] {
            return Err(IngestError::InvalidMapping("id, title and description columns must be distinct".into()));
        }
        if self.source_name.trim().is_empty() {
            return Err(IngestError::InvalidMapping("source_name must be non-empty".into()));
        }
        Ok(())
    }

    fn required(&self) -> [&str; 3] {
        [&self.id_column, &self.title_column, &self.description_column]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped_short: usize,
    pub rows_dropped_duplicate: usize,
    pub rows_dropped_malformed: usize,
}

impl IngestReport {
    pub fn is_consistent(&self) -> bool {
        self.rows_read
            == self.rows_kept + self.rows_dropped_short + self.rows_dropped_duplicate + self.rows_dropped_malformed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    /// `.json` means a JSON array; anything else is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Csv,
        }
    }
}

/// Collapses whitespace runs (including newlines) to one space, drops
/// remaining control characters and trims the ends.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else if ch.is_control() {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

pub fn load_table(path: &Path, mapping: &FieldMapping) -> Result<(Vec<Project>, IngestReport), IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_table(&bytes, TableFormat::from_path(path), mapping)
}

/// Parses an in-memory table. Rows lacking an id or title are counted as
/// malformed rather than failing the load.
pub fn parse_table(
    bytes: &[u8],
    format: TableFormat,
    mapping: &FieldMapping,
) -> Result<(Vec<Project>, IngestReport), IngestError> {
    mapping.validate()?;
    let rows = match format {
        TableFormat::Csv => read_csv_rows(bytes, mapping)?,
        TableFormat::Json => read_json_rows(bytes, mapping)?,
    };

    let mut report = IngestReport::default();
    let mut projects = Vec::new();
    for row in rows {
        report.rows_read += 1;
        match row.and_then(|fields| build_project(fields, mapping)) {
            Some(p) => projects.push(p),
            None => report.rows_dropped_malformed += 1,
        }
    }
    report.rows_kept = projects.len();
    Ok((projects, report))
}

type Row = Option<BTreeMap<String, String>>;

fn read_csv_rows(bytes: &[u8], mapping: &FieldMapping) -> Result<Vec<Row>, IngestError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedFile(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(IngestError::MalformedFile("missing header row".into()));
    }
    check_columns(&headers, mapping)?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let row = match record {
            Ok(record) if record.len() == headers.len() => {
                Some(headers.iter().cloned().zip(record.iter().map(str::to_string)).collect())
            }
            Ok(_) => None,
            // Bad UTF-8 or similar row-level errors: count and move on.
            Err(e) if !matches!(e.kind(), csv::ErrorKind::Io(_)) => None,
            Err(e) => return Err(IngestError::MalformedFile(e.to_string())),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn read_json_rows(bytes: &[u8], mapping: &FieldMapping) -> Result<Vec<Row>, IngestError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedFile(e.to_string()))?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        _ => return Err(IngestError::MalformedFile("expected a JSON array of objects".into())),
    };
    if let Some(first) = items.first() {
        let obj = first
            .as_object()
            .ok_or_else(|| IngestError::MalformedFile("first element is not an object".into()))?;
        let keys: Vec<String> = obj.keys().cloned().collect();
        check_columns(&keys, mapping)?;
    }
    Ok(items
        .into_iter()
        .map(|item| {
            let obj = item.as_object()?;
            let mut row = BTreeMap::new();
            for (k, v) in obj {
                let text = match v {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Bool(_) | serde_json::Value::Number(_) => v.to_string(),
                    // Nested values are not flat fields.
                    _ => return None,
                };
                row.insert(k.clone(), text);
            }
            Some(row)
        })
        .collect())
}

fn check_columns(present: &[String], mapping: &FieldMapping) -> Result<(), IngestError> {
    for col in mapping.required() {
        if !present.iter().any(|h| h == col) {
            return Err(IngestError::MissingColumn(col.to_string()));
        }
    }
    Ok(())
}

fn build_project(mut fields: BTreeMap<String, String>, mapping: &FieldMapping) -> Option<Project> {
    let id = clean_text(fields.get(&mapping.id_column)?);
    let title = clean_text(fields.get(&mapping.title_column)?);
    if id.is_empty() || title.is_empty() {
        return None;
    }
    let description = clean_text(&fields.remove(&mapping.description_column).unwrap_or_default());
    let metadata = mapping
        .metadata_columns
        .iter()
        .filter_map(|col| fields.get(col).map(|v| (col.clone(), clean_text(v))))
        .collect();
    Some(Project {
        id,
        title,
        description,
        source: mapping.source_name.clone(),
        kind: mapping.kind_default,
        metadata,
    })
}

/// Keeps projects whose description is strictly longer than `min_chars`
/// Unicode scalar values. Returns the survivors and the number dropped.
pub fn filter_min_description(projects: Vec<Project>, min_chars: usize) -> (Vec<Project>, usize) {
    let before = projects.len();
    let kept: Vec<Project> = projects
        .into_iter()
        .filter(|p| p.description.chars().count() > min_chars)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Keeps the first project per `(source, id)`, preserving order.
pub fn dedupe(projects: Vec<Project>) -> (Vec<Project>, usize) {
    let before = projects.len();
    let mut seen = HashSet::new();
    let kept: Vec<Project> = projects
        .into_iter()
        .filter(|p| seen.insert((p.source.clone(), p.id.clone())))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Load, de-duplicate and length-filter in one pass, with a complete report.
pub fn ingest_file(
    path: &Path,
    mapping: &FieldMapping,
    min_chars: usize,
) -> Result<(Vec<Project>, IngestReport), IngestError> {
    let (projects, report) = load_table(path, mapping)?;
    Ok(finish(projects, report, min_chars))
}

pub fn ingest_bytes(
    bytes: &[u8],
    format: TableFormat,
    mapping: &FieldMapping,
    min_chars: usize,
) -> Result<(Vec<Project>, IngestReport), IngestError> {
    let (projects, report) = parse_table(bytes, format, mapping)?;
    Ok(finish(projects, report, min_chars))
}

fn finish(projects: Vec<Project>, mut report: IngestReport, min_chars: usize) -> (Vec<Project>, IngestReport) {
    let (projects, dup) = dedupe(projects);
    let (projects, short) = filter_min_description(projects, min_chars);
    report.rows_dropped_duplicate = dup;
    report.rows_dropped_short = short;
    report.rows_kept = projects.len();
    debug_assert!(report.is_consistent());
    (projects, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project(id: &str, description: &str) -> Project {
        Project {
            id: id.into(),
            title: format!("title {id}"),
            description: description.into(),
            source: "paris".into(),
            kind: ProjectKind::Activity,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn three_row_csv() {
        let csv = "id,title,description\n1,A,first\n2,B,second\n3,C,third\n";
        let (projects, report) = parse_table(csv.as_bytes(), TableFormat::Csv, &FieldMapping::simple("s")).unwrap();
        assert_eq!(projects.len(), 3);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_kept, 3);
        assert!(report.is_consistent());
    }

    #[test]
    fn missing_description_column() {
        let csv = "id,title,summary\n1,A,x\n";
        match parse_table(csv.as_bytes(), TableFormat::Csv, &FieldMapping::simple("s")) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "description"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn whitespace_collapse() {
        let csv = "id,title,description\n1,A,\"a\n\n b\"\n";
        let (projects, _) = parse_table(csv.as_bytes(), TableFormat::Csv, &FieldMapping::simple("s")).unwrap();
        assert_eq!(projects[0].description, "a b");
        assert_eq!(clean_text("  x\u{7}y \t z\r\n"), "xy z");
    }

    #[test]
    fn malformed_rows_counted() {
        let csv = "id,title,description\n1,A,ok\n,B,no id\n3,,no title\n4,D\n5,E,fine\n";
        let (projects, report) = parse_table(csv.as_bytes(), TableFormat::Csv, &FieldMapping::simple("s")).unwrap();
        assert_eq!(projects.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["1", "5"]);
        assert_eq!(report.rows_read, 5);
        assert_eq!(report.rows_dropped_malformed, 3);
        assert!(report.is_consistent());
    }

    #[test]
    fn json_array_with_metadata() {
        let json = r#"[{"ref":"a1","name":"Garden","text":"Plant trees","budget":12000,"year":"2019"},
                       {"ref":"a2","name":"Bus","text":"More buses","budget":null}, 5]"#;
        let mapping = FieldMapping {
            id_column: "ref".into(),
            title_column: "name".into(),
            description_column: "text".into(),
            kind_default: ProjectKind::Plan,
            metadata_columns: vec!["budget".into(), "year".into()],
            source_name: "probono".into(),
        };
        let (projects, report) = parse_table(json.as_bytes(), TableFormat::Json, &mapping).unwrap();
        assert_eq!(projects.len(), 2);
        assert_eq!(report.rows_dropped_malformed, 1);
        assert_eq!(projects[0].metadata["budget"], "12000");
        assert_eq!(projects[0].kind, ProjectKind::Plan);
        assert_eq!(projects[1].metadata["budget"], "");
        assert!(!projects[1].metadata.contains_key("year"));
    }

    #[test]
    fn json_errors() {
        let m = FieldMapping::simple("s");
        assert!(matches!(parse_table(b"{}", TableFormat::Json, &m), Err(IngestError::MalformedFile(_))));
        assert!(matches!(parse_table(b"[{", TableFormat::Json, &m), Err(IngestError::MalformedFile(_))));
        assert!(matches!(
            parse_table(br#"[{"id":"1","title":"t"}]"#, TableFormat::Json, &m),
            Err(IngestError::MissingColumn(_))
        ));
        assert_eq!(parse_table(b"[]", TableFormat::Json, &m).unwrap().0.len(), 0);
    }

    #[test]
    fn mapping_validation() {
        let mut m = FieldMapping::simple("s");
        m.title_column = "id".into();
        assert!(matches!(m.validate(), Err(IngestError::InvalidMapping(_))));
        let mut m = FieldMapping::simple("s");
        m.description_column = " ".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn filter_boundary() {
        let (kept, dropped) = filter_min_description(
            vec![project("a", &"x".repeat(101)), project("b", &"x".repeat(100))],
            100,
        );
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a");
        assert_eq!(dropped, 1);
        assert_eq!(filter_min_description(vec![], 100), (vec![], 0));
    }

    #[test]
    fn filter_counts_scalars_not_bytes() {
        let (kept, _) = filter_min_description(vec![project("a", &"é".repeat(100))], 100);
        assert!(kept.is_empty());
        let (kept, _) = filter_min_description(vec![project("a", &"é".repeat(101))], 100);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn dedupe_first_wins() {
        let (kept, dropped) = dedupe(vec![project("1", "first"), project("1", "second"), project("2", "x")]);
        assert_eq!(dropped, 1);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].description, "first");

        let unique = vec![project("1", "a"), project("2", "b")];
        assert_eq!(dedupe(unique.clone()), (unique, 0));
    }

    #[test]
    fn dedupe_is_per_source() {
        let mut other = project("1", "x");
        other.source = "probono".into();
        let (kept, dropped) = dedupe(vec![project("1", "x"), other]);
        assert_eq!((kept.len(), dropped), (2, 0));
    }

    #[test]
    fn ingest_report_folds_all_counters() {
        let long = "y".repeat(120);
        let csv = format!("id,title,description\n1,A,{long}\n1,A,{long}\n2,B,short\n,C,{long}\n");
        let (projects, report) =
            ingest_bytes(csv.as_bytes(), TableFormat::Csv, &FieldMapping::simple("s"), 100).unwrap();
        assert_eq!(projects.len(), 1);
        assert_eq!(
            report,
            IngestReport {
                rows_read: 4,
                rows_kept: 1,
                rows_dropped_short: 1,
                rows_dropped_duplicate: 1,
                rows_dropped_malformed: 1,
            }
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_table(Path::new("/nonexistent/missing.csv"), &FieldMapping::simple("s")).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }
}
