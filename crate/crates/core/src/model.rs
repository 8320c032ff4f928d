//! Projects, scored contributions, assessments and human review records.
//!
//! Everything here is an immutable value type. A review never edits an
//! assessment in place: [`apply_review`] produces a new assessment with
//! `provenance = reviewed` and leaves the original untouched for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{CellKey, Issue, Purpose, Scale, CELL_COUNT, ISSUE_COUNT, PURPOSE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectKind {
    Activity,
    Plan,
}

impl fmt::Display for ProjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectKind::Activity => "activity",
            ProjectKind::Plan => "plan",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub title: String,
    pub description: String,
    pub source: String,
    pub kind: ProjectKind,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("likert score {0} outside 0..=4")]
    ScoreOutOfRange(i64),
    #[error("contribution score must be at least 1")]
    ZeroScore,
    #[error("contribution rationale is empty")]
    EmptyRationale,
    #[error("duplicate contribution at {cell} ({scale})")]
    DuplicateContribution { cell: CellKey, scale: Scale },
    #[error("review mismatch: {0}")]
    ReviewMismatch(String),
}

/// Ordinal intensity of a contribution, 0 (none) to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct LikertScore(u8);

impl LikertScore {
    pub const MAX: u8 = 4;

    pub fn new(value: i64) -> Result<Self, ModelError> {
        if (0..=Self::MAX as i64).contains(&value) {
            Ok(LikertScore(value as u8))
        } else {
            Err(ModelError::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for LikertScore {
    type Error = ModelError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        LikertScore::new(value)
    }
}

impl From<LikertScore> for u8 {
    fn from(score: LikertScore) -> u8 {
        score.0
    }
}

/// A scored position on the matrix at one scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub cell: CellKey,
    pub scale: Scale,
    pub score: LikertScore,
    pub rationale: String,
}

impl Contribution {
    pub fn new(
        issue: Issue,
        purpose: Purpose,
        scale: Scale,
        score: u8,
        rationale: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let c = Contribution {
            cell: CellKey::new(issue, purpose),
            scale,
            score: LikertScore::new(score as i64)?,
            rationale: rationale.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.score.value() == 0 {
            return Err(ModelError::ZeroScore);
        }
        if self.rationale.trim().is_empty() {
            return Err(ModelError::EmptyRationale);
        }
        Ok(())
    }

    pub fn target(&self) -> Target {
        Target {
            cell: self.cell,
            scale: self.scale,
        }
    }
}

/// A (cell, scale) data point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Target {
    pub cell: CellKey,
    pub scale: Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Llm,
    Mock,
    Reviewed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Llm => "llm",
            Provenance::Mock => "mock",
            Provenance::Reviewed => "reviewed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub project_id: String,
    pub contributions: Vec<Contribution>,
    pub model_id: String,
    pub prompt_version: String,
    pub created_at: DateTime<Utc>,
    pub provenance: Provenance,
}

impl Assessment {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for c in &self.contributions {
            c.validate()?;
            if !seen.insert(c.target()) {
                return Err(ModelError::DuplicateContribution {
                    cell: c.cell,
                    scale: c.scale,
                });
            }
        }
        Ok(())
    }

    pub fn contribution(&self, target: Target) -> Option<&Contribution> {
        self.contributions.iter().find(|c| c.target() == target)
    }

    pub fn cells(&self) -> BTreeSet<CellKey> {
        self.contributions.iter().map(|c| c.cell).collect()
    }
}

/// 12 x 6 grid indexed `[issue][purpose]`.
pub type MatrixGrid = [[u8; PURPOSE_COUNT]; ISSUE_COUNT];

/// Collapses both scales into one grid by taking the maximum score.
pub fn matrix_view(a: &Assessment) -> MatrixGrid {
    let mut grid = [[0u8; PURPOSE_COUNT]; ISSUE_COUNT];
    for c in &a.contributions {
        let slot = &mut grid[c.cell.issue.index()][c.cell.purpose.index()];
        *slot = (*slot).max(c.score.value());
    }
    grid
}

/// Number of distinct cells touched at either scale.
pub fn contribution_cell_count(a: &Assessment) -> usize {
    let n = a.cells().len();
    debug_assert!(n <= CELL_COUNT);
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    Unchanged,
    Modified,
    Removed,
    Added,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub target: Target,
    pub action: ReviewAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_score: Option<LikertScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_rationale: Option<String>,
}

impl ReviewDecision {
    pub fn unchanged(target: Target) -> Self {
        ReviewDecision {
            target,
            action: ReviewAction::Unchanged,
            new_score: None,
            new_rationale: None,
        }
    }

    pub fn removed(target: Target) -> Self {
        ReviewDecision {
            action: ReviewAction::Removed,
            ..Self::unchanged(target)
        }
    }

    pub fn modified(target: Target, score: u8, rationale: Option<String>) -> Result<Self, ModelError> {
        Ok(ReviewDecision {
            target,
            action: ReviewAction::Modified,
            new_score: Some(LikertScore::new(score as i64)?),
            new_rationale: rationale,
        })
    }

    pub fn added(target: Target, score: u8, rationale: impl Into<String>) -> Result<Self, ModelError> {
        Ok(ReviewDecision {
            target,
            action: ReviewAction::Added,
            new_score: Some(LikertScore::new(score as i64)?),
            new_rationale: Some(rationale.into()),
        })
    }
}

/// A reviewer's per-datapoint decisions against one assessment.
///
/// `assessment_created_at` pins the exact assessment version reviewed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub project_id: String,
    pub assessment_created_at: DateTime<Utc>,
    pub reviewer: String,
    pub decisions: Vec<ReviewDecision>,
    pub created_at: DateTime<Utc>,
}

impl ReviewRecord {
    /// A review that accepts every data point of `a` as-is.
    pub fn accept_all(a: &Assessment, reviewer: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        ReviewRecord {
            project_id: a.project_id.clone(),
            assessment_created_at: a.created_at,
            reviewer: reviewer.into(),
            decisions: a
                .contributions
                .iter()
                .map(|c| ReviewDecision::unchanged(c.target()))
                .collect(),
            created_at,
        }
    }

    /// Checks this record against the assessment it reviews: every original
    /// data point decided exactly once, `added` only on absent targets, and
    /// `modified`/`added` carrying a score of at least 1.
    pub fn check_against(&self, a: &Assessment) -> Result<(), ModelError> {
        let mismatch = |msg: String| Err(ModelError::ReviewMismatch(msg));
        if self.project_id != a.project_id {
            return mismatch(format!(
                "review targets project {:?} but assessment is for {:?}",
                self.project_id, a.project_id
            ));
        }
        if self.assessment_created_at != a.created_at {
            return mismatch(format!(
                "review targets assessment of {} but current assessment is from {}",
                self.assessment_created_at.to_rfc3339(),
                a.created_at.to_rfc3339()
            ));
        }
        let original: BTreeSet<Target> = a.contributions.iter().map(Contribution::target).collect();
        let mut decided = BTreeSet::new();
        for d in &self.decisions {
            if !decided.insert(d.target) {
                return mismatch(format!("{} ({}) decided more than once", d.target.cell, d.target.scale));
            }
            let present = original.contains(&d.target);
            match d.action {
                ReviewAction::Unchanged | ReviewAction::Removed | ReviewAction::Modified if !present => {
                    return mismatch(format!(
                        "{:?} targets {} ({}) which is not in the assessment",
                        d.action, d.target.cell, d.target.scale
                    ));
                }
                ReviewAction::Added if present => {
                    return mismatch(format!(
                        "added target {} ({}) already exists in the assessment",
                        d.target.cell, d.target.scale
                    ));
                }
                _ => {}
            }
            if matches!(d.action, ReviewAction::Modified | ReviewAction::Added) {
                match d.new_score {
                    Some(s) if s.value() >= 1 => {}
                    _ => {
                        return mismatch(format!(
                            "{:?} decision on {} ({}) needs new_score >= 1",
                            d.action, d.target.cell, d.target.scale
                        ))
                    }
                }
            }
            if d.action == ReviewAction::Added
                && d.new_rationale.as_deref().map_or(true, |r| r.trim().is_empty())
            {
                return mismatch(format!(
                    "added decision on {} ({}) needs a rationale",
                    d.target.cell, d.target.scale
                ));
            }
        }
        if let Some(missing) = original.difference(&decided).next() {
            return mismatch(format!("no decision for {} ({})", missing.cell, missing.scale));
        }
        Ok(())
    }
}

/// Produces the reviewed assessment. The input is not modified.
///
/// Contributions keep the original order; added ones follow in decision order.
pub fn apply_review(a: &Assessment, review: &ReviewRecord) -> Result<Assessment, ModelError> {
    review.check_against(a)?;
    let by_target: BTreeMap<Target, &ReviewDecision> =
        review.decisions.iter().map(|d| (d.target, d)).collect();

    let mut contributions = Vec::with_capacity(a.contributions.len());
    for c in &a.contributions {
        let d = by_target[&c.target()];
        match d.action {
            ReviewAction::Unchanged => contributions.push(c.clone()),
            ReviewAction::Removed => {}
            ReviewAction::Modified => contributions.push(Contribution {
                score: d.new_score.expect("checked"),
                rationale: d.new_rationale.clone().unwrap_or_else(|| c.rationale.clone()),
                ..c.clone()
            }),
            ReviewAction::Added => unreachable!("checked"),
        }
    }
    for d in review.decisions.iter().filter(|d| d.action == ReviewAction::Added) {
        contributions.push(Contribution {
            cell: d.target.cell,
            scale: d.target.scale,
            score: d.new_score.expect("checked"),
            rationale: d.new_rationale.clone().expect("checked"),
        });
    }

    let reviewed = Assessment {
        project_id: a.project_id.clone(),
        contributions,
        model_id: a.model_id.clone(),
        prompt_version: a.prompt_version.clone(),
        created_at: review.created_at.max(a.created_at),
        provenance: Provenance::Reviewed,
    };
    reviewed.validate()?;
    Ok(reviewed)
}
