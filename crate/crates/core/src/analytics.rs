//! Corpus statistics: coverage shares, review agreement and plan/activity gaps.
//!
//! Coverage counts a project once per issue, purpose or cell it touches,
//! whatever the score or scale. All percentages are in `[0, 100]` and are
//! kept at full precision; rounding belongs to the display layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{contribution_cell_count, Assessment, ReviewAction, ReviewRecord};
use crate::taxonomy::{all_cells, CellKey, Issue, Purpose, CELL_COUNT};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("no reviewed data points")]
    NoDatapoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_projects: usize,
    pub per_issue: BTreeMap<Issue, f64>,
    pub per_purpose: BTreeMap<Purpose, f64>,
    /// Share of projects touching each cell, `[issue][purpose]`.
    pub per_cell: BTreeMap<Issue, BTreeMap<Purpose, f64>>,
    pub total_positions: usize,
    pub avg_contributions: f64,
}

impl CoverageReport {
    pub fn zero() -> Self {
        coverage(&[])
    }

    pub fn issue_pct(&self, issue: Issue) -> Result<f64, AnalyticsError> {
        self.require_projects()?;
        Ok(self.per_issue[&issue])
    }

    pub fn purpose_pct(&self, purpose: Purpose) -> Result<f64, AnalyticsError> {
        self.require_projects()?;
        Ok(self.per_purpose[&purpose])
    }

    pub fn cell_pct(&self, cell: CellKey) -> Result<f64, AnalyticsError> {
        self.require_projects()?;
        Ok(self.cell(cell))
    }

    /// Cell share without the empty-corpus check (0.0 on an empty corpus).
    pub fn cell(&self, cell: CellKey) -> f64 {
        self.per_cell[&cell.issue][&cell.purpose]
    }

    fn require_projects(&self) -> Result<(), AnalyticsError> {
        if self.n_projects == 0 {
            Err(AnalyticsError::EmptyCorpus("coverage over zero projects".into()))
        } else {
            Ok(())
        }
    }
}

fn pct(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    }
}

fn cell_counts(assessments: &[Assessment]) -> [usize; CELL_COUNT] {
    let mut counts = [0usize; CELL_COUNT];
    for a in assessments {
        for cell in a.cells() {
            counts[cell.index()] += 1;
        }
    }
    counts
}

pub fn coverage(assessments: &[Assessment]) -> CoverageReport {
    let n = assessments.len();
    let mut issue_counts = [0usize; Issue::ALL.len()];
    let mut purpose_counts = [0usize; Purpose::ALL.len()];
    let mut total_positions = 0;
    for a in assessments {
        let cells = a.cells();
        let mut issues = [false; Issue::ALL.len()];
        let mut purposes = [false; Purpose::ALL.len()];
        for cell in &cells {
            issues[cell.issue.index()] = true;
            purposes[cell.purpose.index()] = true;
        }
        for (count, hit) in issue_counts.iter_mut().zip(issues) {
            *count += hit as usize;
        }
        for (count, hit) in purpose_counts.iter_mut().zip(purposes) {
            *count += hit as usize;
        }
        total_positions += contribution_cell_count(a);
    }
    let cells = cell_counts(assessments);

    let mut per_cell: BTreeMap<Issue, BTreeMap<Purpose, f64>> = BTreeMap::new();
    for cell in all_cells() {
        per_cell
            .entry(cell.issue)
            .or_default()
            .insert(cell.purpose, pct(cells[cell.index()], n));
    }

    CoverageReport {
        n_projects: n,
        per_issue: Issue::ALL.iter().map(|&i| (i, pct(issue_counts[i.index()], n))).collect(),
        per_purpose: Purpose::ALL.iter().map(|&p| (p, pct(purpose_counts[p.index()], n))).collect(),
        per_cell,
        total_positions,
        avg_contributions: if n == 0 { 0.0 } else { total_positions as f64 / n as f64 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub n_datapoints: usize,
    pub n_unchanged: usize,
    pub rate: f64,
}

/// Share of original data points that reviewers left unchanged.
/// `added` decisions are not original data points and are ignored.
pub fn agreement_rate(reviews: &[ReviewRecord]) -> Result<AgreementSummary, AnalyticsError> {
    let (mut n_datapoints, mut n_unchanged) = (0, 0);
    for d in reviews.iter().flat_map(|r| &r.decisions) {
        match d.action {
            ReviewAction::Added => {}
            ReviewAction::Unchanged => {
                n_datapoints += 1;
                n_unchanged += 1;
            }
            ReviewAction::Modified | ReviewAction::Removed => n_datapoints += 1,
        }
    }
    if n_datapoints == 0 {
        return Err(AnalyticsError::NoDatapoints);
    }
    Ok(AgreementSummary {
        n_datapoints,
        n_unchanged,
        rate: n_unchanged as f64 / n_datapoints as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub issue: Issue,
    pub purpose: Purpose,
    pub plan_pct: f64,
    pub activity_pct: f64,
    /// `plan_pct - activity_pct`
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n_plans: usize,
    pub n_activities: usize,
    /// 72 entries in canonical cell order.
    pub per_cell: Vec<GapCell>,
}

impl GapReport {
    pub fn cell(&self, cell: CellKey) -> &GapCell {
        &self.per_cell[cell.index()]
    }
}

/// Per-cell coverage of plans versus activities.
pub fn gap(plans: &[Assessment], activities: &[Assessment]) -> Result<GapReport, AnalyticsError> {
    if plans.is_empty() {
        return Err(AnalyticsError::EmptyCorpus("plans".into()));
    }
    if activities.is_empty() {
        return Err(AnalyticsError::EmptyCorpus("activities".into()));
    }
    let plan_counts = cell_counts(plans);
    let activity_counts = cell_counts(activities);
    let per_cell = all_cells()
        .into_iter()
        .map(|cell| {
            let plan_pct = pct(plan_counts[cell.index()], plans.len());
            let activity_pct = pct(activity_counts[cell.index()], activities.len());
            GapCell {
                issue: cell.issue,
                purpose: cell.purpose,
                plan_pct,
                activity_pct,
                delta: plan_pct - activity_pct,
            }
        })
        .collect();
    Ok(GapReport {
        n_plans: plans.len(),
        n_activities: activities.len(),
        per_cell,
    })
}
