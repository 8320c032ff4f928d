//! Validation of structured-output payloads.

use serde_json::Value;

use crate::model::{Contribution, LikertScore};
use crate::taxonomy::{CellKey, TaxonomyDocument};

use super::{ClassifyError, ErrorKind};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedReply {
    pub contributions: Vec<Contribution>,
    /// One message per dropped entry (unknown labels).
    pub warnings: Vec<String>,
}

/// Removes a surrounding Markdown code fence, which some local models add
/// even when asked for bare JSON.
fn strip_fence(raw: &str) -> &str {
    let s = raw.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses the function-call arguments into contributions.
///
/// Labels go through [`TaxonomyDocument::parse_label`]; entries with an
/// unknown label are dropped with a warning. Repeated (cell, scale) entries
/// keep the highest score. Scores outside 1..=4 are a schema violation.
pub fn parse_reply(raw: &str, taxonomy: &TaxonomyDocument) -> Result<ParsedReply, ClassifyError> {
    let value: Value = serde_json::from_str(strip_fence(raw))
        .map_err(|e| ClassifyError::new(ErrorKind::MalformedOutput, format!("payload is not JSON: {e}"), 1))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ClassifyError::new(ErrorKind::MalformedOutput, "payload is not a JSON object", 1))?;
    let entries = obj
        .get("contributions")
        .ok_or_else(|| violation("missing required field `contributions`"))?
        .as_array()
        .ok_or_else(|| violation("`contributions` is not an array"))?;

    let mut reply = ParsedReply::default();
    for (n, entry) in entries.iter().enumerate() {
        let entry = entry
            .as_object()
            .ok_or_else(|| violation(&format!("contributions[{n}] is not an object")))?;
        let text = |field: &str| -> Result<&str, ClassifyError> {
            entry
                .get(field)
                .and_then(Value::as_str)
                .ok_or_else(|| violation(&format!("contributions[{n}].{field} missing or not a string")))
        };
        let (issue, purpose, scale, rationale) = (text("issue")?, text("purpose")?, text("scale")?, text("rationale")?);
        let score = entry
            .get("score")
            .and_then(|v| v.as_i64().or_else(|| v.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)))
            .ok_or_else(|| violation(&format!("contributions[{n}].score missing or not an integer")))?;
        if !(1..=4).contains(&score) {
            return Err(violation(&format!("contributions[{n}].score = {score} outside 1..=4")));
        }
        if rationale.trim().is_empty() {
            return Err(violation(&format!("contributions[{n}].rationale is empty")));
        }

        let resolved = taxonomy.parse_issue(issue).and_then(|i| {
            let p = taxonomy.parse_purpose(purpose)?;
            let s = taxonomy.parse_scale(scale)?;
            Ok((i, p, s))
        });
        let (issue, purpose, scale) = match resolved {
            Ok(ids) => ids,
            Err(e) => {
                log::warn!("dropping contributions[{n}]: {e}");
                reply.warnings.push(format!("contributions[{n}]: {e}"));
                continue;
            }
        };

        let candidate = Contribution {
            cell: CellKey::new(issue, purpose),
            scale,
            score: LikertScore::new(score).expect("range checked"),
            rationale: rationale.trim().to_string(),
        };
        match reply.contributions.iter_mut().find(|c| c.target() == candidate.target()) {
            Some(existing) if candidate.score > existing.score => *existing = candidate,
            Some(_) => {}
            None => reply.contributions.push(candidate),
        }
    }
    Ok(reply)
}

fn violation(detail: &str) -> ClassifyError {
    ClassifyError::new(ErrorKind::SchemaViolation, detail, 1)
}
