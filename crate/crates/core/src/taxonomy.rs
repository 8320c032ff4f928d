//! The ISO 37101 framework: six sustainability purposes, twelve issues and
//! the two impact scales used to score contributions.
//!
//! Canonical orderings are fixed here and shared by every other module:
//! issue-major, purpose-minor for the 72 matrix cells, and
//! scale-major for the 144-component profile vectors.
//!
//! Display labels, aliases and prompt definitions live in a
//! [`TaxonomyDocument`], which can be loaded from `taxonomy.json` so that
//! deployments can tune definition wording without rebuilding.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PURPOSE_COUNT: usize = 6;
pub const ISSUE_COUNT: usize = 12;
pub const SCALE_COUNT: usize = 2;
pub const CELL_COUNT: usize = ISSUE_COUNT * PURPOSE_COUNT;
pub const VECTOR_LEN: usize = SCALE_COUNT * CELL_COUNT;

const BUILTIN_TAXONOMY: &str = include_str!("../assets/taxonomy.json");

#[derive(Error, Debug)]
pub enum TaxonomyError {
    #[error("unknown {kind} label: {text:?}")]
    UnknownLabel { text: String, kind: LabelKind },
    #[error("failed to read taxonomy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse taxonomy JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid taxonomy document: {0}")]
    Invalid(String),
}

/// Which axis a free-text label should be resolved against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Purpose,
    Issue,
    Scale,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Purpose => "purpose",
            LabelKind::Issue => "issue",
            LabelKind::Scale => "scale",
        })
    }
}

macro_rules! axis_enum {
    ($(#[$meta:meta])* $name:ident, $count:expr, [$($variant:ident => $id:literal),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: [$name; $count] = [$($name::$variant),+];

            /// Canonical snake_case identifier.
            pub fn id(self) -> &'static str {
                match self {
                    $($name::$variant => $id),+
                }
            }

            /// Position in the canonical ordering.
            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            pub fn from_id(id: &str) -> Option<Self> {
                Self::ALL.iter().copied().find(|v| v.id() == id)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.id())
            }
        }

        impl FromStr for $name {
            type Err = TaxonomyError;

            /// Exact canonical id only; use [`parse_label`] for lenient matching.
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_id(s).ok_or_else(|| TaxonomyError::UnknownLabel {
                    text: s.to_string(),
                    kind: LabelKind::$name,
                })
            }
        }
    };
}

axis_enum!(
    /// One of the six sustainability purposes.
    Purpose, PURPOSE_COUNT, [
        Attractiveness => "attractiveness",
        Environment => "environment",
        Resilience => "resilience",
        ResourceUse => "resource_use",
        SocialCohesion => "social_cohesion",
        Wellbeing => "wellbeing",
    ]
);

axis_enum!(
    /// One of the twelve issue areas (families of community services).
    Issue, ISSUE_COUNT, [
        Governance => "governance",
        Education => "education",
        Innovation => "innovation",
        Health => "health",
        Culture => "culture",
        LivingTogether => "living_together",
        Economy => "economy",
        LivingWorking => "living_working",
        Safety => "safety",
        Infrastructure => "infrastructure",
        Mobility => "mobility",
        Biodiversity => "biodiversity",
    ]
);

axis_enum!(
    /// Spatial reach of a contribution: the project's own site or
    /// neighbourhood (`local`) versus city-wide or beyond (`global`).
    Scale, SCALE_COUNT, [
        Local => "local",
        Global => "global",
    ]
);

/// One issue x purpose intersection of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub issue: Issue,
    pub purpose: Purpose,
}

impl CellKey {
    pub const fn new(issue: Issue, purpose: Purpose) -> Self {
        CellKey { issue, purpose }
    }

    /// Position in the issue-major, purpose-minor ordering (0..72).
    pub fn index(self) -> usize {
        self.issue.index() * PURPOSE_COUNT + self.purpose.index()
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= CELL_COUNT {
            return None;
        }
        Some(CellKey {
            issue: Issue::ALL[index / PURPOSE_COUNT],
            purpose: Purpose::ALL[index % PURPOSE_COUNT],
        })
    }

    /// Builds a cell from row (issue) and column (purpose) positions.
    pub fn from_indices(issue: usize, purpose: usize) -> Option<Self> {
        Some(CellKey {
            issue: Issue::from_index(issue)?,
            purpose: Purpose::from_index(purpose)?,
        })
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.issue, self.purpose)
    }
}

/// All 72 cells, issue-major then purpose-minor.
pub fn all_cells() -> Vec<CellKey> {
    Issue::ALL
        .iter()
        .flat_map(|&issue| Purpose::ALL.iter().map(move |&purpose| CellKey { issue, purpose }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposeEntry {
    pub id: Purpose,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueEntry {
    pub id: Issue,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub id: Scale,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub definition: String,
}

/// Labels, aliases and definitions for every axis member.
///
/// `version` is the author-declared revision of the definition set. The
/// [`effective_version`](Self::effective_version) appends a content
/// fingerprint, so any edit to the text yields a different version even if
/// the declared revision is left untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub version: String,
    pub purposes: Vec<PurposeEntry>,
    pub issues: Vec<IssueEntry>,
    pub scales: Vec<ScaleEntry>,
}

impl TaxonomyDocument {
    /// The definition set bundled with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TAXONOMY).expect("bundled taxonomy.json is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDocument = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TaxonomyError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Checks member counts, canonical ordering, non-empty text and that no
    /// normalized label or alias resolves to two members of the same axis.
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        fn check<T: Copy + PartialEq + fmt::Display>(
            axis: &str,
            expected: &[T],
            entries: &[(T, &str, &[String], &str)],
        ) -> Result<(), TaxonomyError> {
            if entries.len() != expected.len() {
                return Err(TaxonomyError::Invalid(format!(
                    "{axis}: expected {} entries, found {}",
                    expected.len(),
                    entries.len()
                )));
            }
            let mut seen: Vec<(String, T)> = Vec::new();
            for (&want, (id, label, aliases, definition)) in expected.iter().zip(entries) {
                if *id != want {
                    return Err(TaxonomyError::Invalid(format!(
                        "{axis}: expected {want} in canonical position, found {id}"
                    )));
                }
                if label.trim().is_empty() || definition.trim().is_empty() {
                    return Err(TaxonomyError::Invalid(format!("{axis} {id}: empty label or definition")));
                }
                let names = std::iter::once(id.to_string())
                    .chain(std::iter::once(label.to_string()))
                    .chain(aliases.iter().cloned());
                for name in names {
                    let key = normalize_label(&name);
                    if key.is_empty() {
                        return Err(TaxonomyError::Invalid(format!("{axis} {id}: blank alias")));
                    }
                    match seen.iter().find(|(k, _)| *k == key) {
                        Some((_, owner)) if *owner != *id => {
                            return Err(TaxonomyError::Invalid(format!(
                                "{axis}: {name:?} resolves to both {owner} and {id}"
                            )));
                        }
                        Some(_) => {}
                        None => seen.push((key, *id)),
                    }
                }
            }
            Ok(())
        }

        if self.version.trim().is_empty() {
            return Err(TaxonomyError::Invalid("empty version".into()));
        }
        let purposes: Vec<_> = self
            .purposes
            .iter()
            .map(|e| (e.id, e.label.as_str(), e.aliases.as_slice(), e.definition.as_str()))
            .collect();
        check("purposes", &Purpose::ALL, &purposes)?;
        let issues: Vec<_> = self
            .issues
            .iter()
            .map(|e| (e.id, e.label.as_str(), e.aliases.as_slice(), e.definition.as_str()))
            .collect();
        check("issues", &Issue::ALL, &issues)?;
        let scales: Vec<_> = self
            .scales
            .iter()
            .map(|e| (e.id, e.label.as_str(), e.aliases.as_slice(), e.definition.as_str()))
            .collect();
        check("scales", &Scale::ALL, &scales)?;
        Ok(())
    }

    pub fn purpose(&self, id: Purpose) -> &PurposeEntry {
        &self.purposes[id.index()]
    }

    pub fn issue(&self, id: Issue) -> &IssueEntry {
        &self.issues[id.index()]
    }

    pub fn scale(&self, id: Scale) -> &ScaleEntry {
        &self.scales[id.index()]
    }

    /// First 12 hex digits of a SHA-256 over the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("taxonomy serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..6])
    }

    pub fn effective_version(&self) -> String {
        format!("{}+{}", self.version, self.fingerprint())
    }

    /// Resolves a free-text label against one axis of this document.
    pub fn parse_label(&self, text: &str, kind: LabelKind) -> Result<AxisId, TaxonomyError> {
        let key = normalize_label(text);
        let unknown = || TaxonomyError::UnknownLabel {
            text: text.to_string(),
            kind,
        };
        if key.is_empty() {
            return Err(unknown());
        }
        let matches = |id: &str, label: &str, aliases: &[String]| {
            normalize_label(id) == key
                || normalize_label(label) == key
                || aliases.iter().any(|a| normalize_label(a) == key)
        };
        match kind {
            LabelKind::Purpose => self
                .purposes
                .iter()
                .find(|e| matches(e.id.id(), &e.label, &e.aliases))
                .map(|e| AxisId::Purpose(e.id)),
            LabelKind::Issue => self
                .issues
                .iter()
                .find(|e| matches(e.id.id(), &e.label, &e.aliases))
                .map(|e| AxisId::Issue(e.id)),
            LabelKind::Scale => self
                .scales
                .iter()
                .find(|e| matches(e.id.id(), &e.label, &e.aliases))
                .map(|e| AxisId::Scale(e.id)),
        }
        .ok_or_else(unknown)
    }

    pub fn parse_purpose(&self, text: &str) -> Result<Purpose, TaxonomyError> {
        match self.parse_label(text, LabelKind::Purpose)? {
            AxisId::Purpose(p) => Ok(p),
            _ => unreachable!(),
        }
    }

    pub fn parse_issue(&self, text: &str) -> Result<Issue, TaxonomyError> {
        match self.parse_label(text, LabelKind::Issue)? {
            AxisId::Issue(i) => Ok(i),
            _ => unreachable!(),
        }
    }

    pub fn parse_scale(&self, text: &str) -> Result<Scale, TaxonomyError> {
        match self.parse_label(text, LabelKind::Scale)? {
            AxisId::Scale(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    /// Renders the definitions block embedded in the classifier prompt.
    ///
    /// One line per purpose and issue (18 in total), followed by the scale
    /// explanations. Output depends only on the document contents.
    pub fn prompt_definitions(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ISO 37101 definitions (version {})\n", self.effective_version()));
        out.push_str("\nSustainability purposes:\n");
        for e in &self.purposes {
            out.push_str(&format!("- {} ({}): {}\n", e.id, e.label, e.definition.trim()));
        }
        out.push_str("\nIssues:\n");
        for e in &self.issues {
            out.push_str(&format!("- {} ({}): {}\n", e.id, e.label, e.definition.trim()));
        }
        out.push_str("\nScales:\n");
        for e in &self.scales {
            out.push_str(&format!("* {} ({}): {}\n", e.id, e.label, e.definition.trim()));
        }
        out
    }
}

/// A resolved label on one of the three axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisId {
    Purpose(Purpose),
    Issue(Issue),
    Scale(Scale),
}

/// Lowercases and keeps only alphanumeric characters, so whitespace runs,
/// hyphens, slashes, underscores and punctuation never affect matching.
pub fn normalize_label(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}
