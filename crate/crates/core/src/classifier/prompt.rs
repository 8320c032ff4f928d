//! Prompt construction and the structured-output schema.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ingestion::clean_text;
use crate::model::Project;
use crate::taxonomy::{Issue, Purpose, Scale, TaxonomyDocument};

use super::{ClassifyError, ErrorKind};

pub const DEFINITIONS_PLACEHOLDER: &str = "{{definitions}}";
pub const DEFAULT_INSTRUCTIONS: &str = include_str!("../../assets/prompt.txt");
pub const FUNCTION_NAME: &str = "record_contributions";
pub const DEFAULT_CHAR_BUDGET: usize = 8_000;

/// The rendered system prompt. `version` is derived from the text itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_text: String,
    pub version: String,
}

impl PromptTemplate {
    /// Substitutes the taxonomy definitions into `instructions`. If the
    /// placeholder is absent the definitions are appended.
    pub fn render(instructions: &str, taxonomy: &TaxonomyDocument) -> Self {
        let definitions = taxonomy.prompt_definitions();
        let system_text = if instructions.contains(DEFINITIONS_PLACEHOLDER) {
            instructions.replace(DEFINITIONS_PLACEHOLDER, definitions.trim_end())
        } else {
            format!("{}\n\n{}", instructions.trim_end(), definitions.trim_end())
        };
        let digest = Sha256::digest(system_text.as_bytes());
        PromptTemplate {
            version: format!("prompt-{}", hex::encode(&digest[..6])),
            system_text,
        }
    }

    pub fn builtin(taxonomy: &TaxonomyDocument) -> Self {
        Self::render(DEFAULT_INSTRUCTIONS, taxonomy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// System message plus a user message of the form `title\n\ndescription`,
/// with the description cut at the tail so that the user message has at
/// most `char_budget + title length` characters.
pub fn build_messages(p: &Project, t: &PromptTemplate, char_budget: usize) -> Result<Vec<Message>, ClassifyError> {
    if p.description.trim().is_empty() {
        return Err(ClassifyError::new(
            ErrorKind::InvalidInput,
            format!("project {} has an empty description", p.id),
            0,
        ));
    }
    let title = clean_text(&p.title);
    let separator = "\n\n";
    let room = char_budget.saturating_sub(separator.chars().count());
    let description: String = p.description.chars().take(room).collect();
    Ok(vec![
        Message {
            role: Role::System,
            content: t.system_text.clone(),
        },
        Message {
            role: Role::User,
            content: format!("{title}{separator}{description}"),
        },
    ])
}

/// JSON schema for the function-call arguments.
pub fn classification_schema() -> Value {
    let ids = |v: Vec<&str>| Value::from(v);
    json!({
        "type": "object",
        "properties": {
            "contributions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "issue": { "type": "string", "enum": ids(Issue::ALL.iter().map(|i| i.id()).collect()) },
                        "purpose": { "type": "string", "enum": ids(Purpose::ALL.iter().map(|p| p.id()).collect()) },
                        "scale": { "type": "string", "enum": ids(Scale::ALL.iter().map(|s| s.id()).collect()) },
                        "score": { "type": "integer", "minimum": 1, "maximum": 4 },
                        "rationale": { "type": "string" }
                    },
                    "required": ["issue", "purpose", "scale", "score", "rationale"],
                    "additionalProperties": false
                }
            }
        },
        "required": ["contributions"],
        "additionalProperties": false
    })
}

/// The `tools` entry advertising [`classification_schema`].
pub fn tool_definition() -> Value {
    json!({
        "type": "function",
        "function": {
            "name": FUNCTION_NAME,
            "description": "Record the scored ISO 37101 contributions of the initiative.",
            "parameters": classification_schema()
        }
    })
}
