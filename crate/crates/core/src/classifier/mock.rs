//! Deterministic offline backend driven by a keyword table.
//!
//! The description is lowercased and split into alphanumeric words. A rule
//! fires when any word starts with one of its keywords ("trees" matches
//! `tree`, "street" does not). Each fired rule yields one contribution, in
//! table order. The table ships as `assets/mock_keywords.json`.

use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use serde_json::json;

use crate::model::{Assessment, Contribution, LikertScore, Project, Provenance};
use crate::taxonomy::{CellKey, Issue, Purpose, Scale};

use super::backend::{Backend, BackendFailure, BackendKind, CompletionRequest};
use super::prompt::Role;

pub const MOCK_MODEL_ID: &str = "mock-keywords";
const TABLE_JSON: &str = include_str!("../../assets/mock_keywords.json");

#[derive(Debug, Clone, Deserialize)]
pub struct KeywordRule {
    pub keywords: Vec<String>,
    pub issue: Issue,
    pub purpose: Purpose,
    pub scale: Scale,
    pub score: u8,
}

#[derive(Debug, Clone, Deserialize)]
pub struct KeywordTable {
    pub version: String,
    pub rules: Vec<KeywordRule>,
}

pub fn keyword_table() -> &'static KeywordTable {
    static TABLE: OnceLock<KeywordTable> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(TABLE_JSON).expect("bundled mock_keywords.json is valid"))
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Contributions the keyword table assigns to `description`.
pub fn mock_contributions(description: &str) -> Vec<Contribution> {
    let words = words(description);
    keyword_table()
        .rules
        .iter()
        .filter_map(|rule| {
            let hit = rule
                .keywords
                .iter()
                .find(|k| words.iter().any(|w| w.starts_with(k.as_str())))?;
            Some(Contribution {
                cell: CellKey::new(rule.issue, rule.purpose),
                scale: rule.scale,
                score: LikertScore::new(rule.score as i64).expect("table scores are 1..=4"),
                rationale: format!("description mentions \"{hit}\""),
            })
        })
        .collect()
}

/// Keyword-table assessment of `p`, stamped with the Unix epoch so the
/// result is a pure function of the description.
pub fn mock_classify(p: &Project) -> Assessment {
    Assessment {
        project_id: p.id.clone(),
        contributions: mock_contributions(&p.description),
        model_id: MOCK_MODEL_ID.to_string(),
        prompt_version: keyword_table().version.clone(),
        created_at: DateTime::<Utc>::UNIX_EPOCH,
        provenance: Provenance::Mock,
    }
}

/// Backend that answers from the keyword table, producing the same JSON
/// payload a remote model would return through the function call.
#[derive(Debug, Default, Clone)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn model_id(&self) -> &str {
        MOCK_MODEL_ID
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendFailure> {
        let user = request
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| BackendFailure::Status {
                code: 400,
                body: "no user message".into(),
            })?;
        let description = user.content.split_once("\n\n").map_or("", |(_, d)| d);
        let entries: Vec<_> = mock_contributions(description)
            .into_iter()
            .map(|c| {
                json!({
                    "issue": c.cell.issue,
                    "purpose": c.cell.purpose,
                    "scale": c.scale,
                    "score": c.score,
                    "rationale": c.rationale,
                })
            })
            .collect();
        Ok(json!({ "contributions": entries }).to_string())
    }
}
