//! Store-backed pipeline operations shared by the CLI and the HTTP service.
//!
//! A [`Workspace`] owns the record store plus the taxonomy and report style,
//! and exposes each pipeline step (ingest, classify, review, analyze, match,
//! report) as one method. Front ends only parse input and serialize output.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AgreementSummary, AnalyticsError, CoverageReport, GapReport};
use crate::classifier::{ClassifyError, Classifier};
use crate::clock::{Clock, SystemClock};
use crate::ingestion::{self, FieldMapping, IngestError, IngestReport, TableFormat};
use crate::matcher::{self, MatchResult, ProfileVector};
use crate::model::{apply_review, Assessment, ModelError, Project, ProjectKind, ReviewRecord};
use crate::reporting::{self, CatalogEntry, HeatmapData, ReportError, ReportStyle};
use crate::store::{Filter, Store, StoreError};
use crate::taxonomy::{all_cells, TaxonomyDocument};

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("{0}")]
    Invalid(String),
}

/// Which stored projects to classify.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Explicit ids; `None` means every project (of `source`, if given).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub requested: usize,
    pub classified: Vec<String>,
    pub failed: Vec<BatchFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub project_id: String,
    pub error: ClassifyError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapMode {
    #[default]
    Coverage,
    Gap,
}

/// Heatmap selection. With both `plans` and `activities` set, plan cells
/// get stars and activity cells get circles; cells are colored by activity
/// coverage, or by the gap in [`HeatmapMode::Gap`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapRequest {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub plans: Option<String>,
    #[serde(default)]
    pub activities: Option<String>,
    #[serde(default)]
    pub mode: HeatmapMode,
}

pub struct Workspace {
    store: Store,
    taxonomy: Arc<TaxonomyDocument>,
    style: ReportStyle,
    min_description_chars: usize,
    clock: Arc<dyn Clock>,
}

impl Workspace {
    pub fn new(store: Store, taxonomy: Arc<TaxonomyDocument>, style: ReportStyle) -> Self {
        Workspace {
            store,
            taxonomy,
            style,
            min_description_chars: ingestion::DEFAULT_MIN_DESCRIPTION_CHARS,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn open(data_dir: &Path, taxonomy: Arc<TaxonomyDocument>, style: ReportStyle) -> Result<Self, PipelineError> {
        Ok(Self::new(Store::open(data_dir)?, taxonomy, style))
    }

    pub fn with_min_description_chars(mut self, min_chars: usize) -> Self {
        self.min_description_chars = min_chars;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock.clone();
        self.store = self.store.with_clock(clock);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn taxonomy(&self) -> &Arc<TaxonomyDocument> {
        &self.taxonomy
    }

    pub fn style(&self) -> &ReportStyle {
        &self.style
    }

    pub fn ingest_file(&mut self, path: &Path, mapping: &FieldMapping) -> Result<IngestReport, PipelineError> {
        let (projects, report) = ingestion::ingest_file(path, mapping, self.min_description_chars)?;
        self.store.put_all(&projects)?;
        Ok(report)
    }

    pub fn ingest_bytes(
        &mut self,
        bytes: &[u8],
        format: TableFormat,
        mapping: &FieldMapping,
    ) -> Result<IngestReport, PipelineError> {
        let (projects, report) = ingestion::ingest_bytes(bytes, format, mapping, self.min_description_chars)?;
        self.store.put_all(&projects)?;
        Ok(report)
    }

    pub fn projects(&self, filter: &Filter) -> Result<Vec<Project>, PipelineError> {
        Ok(self.store.list(filter)?)
    }

    pub fn project(&self, id: &str) -> Result<Project, PipelineError> {
        Ok(self.store.get(id)?)
    }

    pub fn assessment(&self, project_id: &str) -> Result<Assessment, PipelineError> {
        Ok(self.store.get(project_id)?)
    }

    /// Resolves a selection to stored projects, in id order.
    pub fn select(&self, selection: &Selection) -> Result<Vec<Project>, PipelineError> {
        let filter = Filter {
            source: selection.source.clone(),
            ..Filter::default()
        };
        match &selection.ids {
            None => self.projects(&filter),
            Some(ids) => {
                let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
                wanted
                    .into_iter()
                    .map(|id| {
                        let p: Project = self.store.get(id)?;
                        if filter.source.as_ref().is_some_and(|s| *s != p.source) {
                            return Err(PipelineError::Invalid(format!("project {id} is not in source {:?}", p.source)));
                        }
                        Ok(p)
                    })
                    .collect()
            }
        }
    }

    /// Persists batch results: each assessment plus its catalog entry.
    pub fn record_batch(
        &mut self,
        projects: &[Project],
        results: Vec<(String, Result<Assessment, ClassifyError>)>,
    ) -> Result<BatchSummary, PipelineError> {
        let mut summary = BatchSummary {
            requested: results.len(),
            ..BatchSummary::default()
        };
        let mut assessments = Vec::new();
        let mut catalog = Vec::new();
        for (p, (id, result)) in projects.iter().zip(results) {
            debug_assert_eq!(p.id, id);
            match result {
                Ok(a) => {
                    catalog.push(CatalogEntry::new(p, &a));
                    assessments.push(a);
                    summary.classified.push(id);
                }
                Err(error) => summary.failed.push(BatchFailure { project_id: id, error }),
            }
        }
        self.store.put_all(&assessments)?;
        self.store.put_all(&catalog)?;
        Ok(summary)
    }

    pub fn classify(
        &mut self,
        selection: &Selection,
        classifier: &Classifier,
        parallelism: usize,
    ) -> Result<BatchSummary, PipelineError> {
        let projects = self.select(selection)?;
        let results = classifier.classify_batch(&projects, parallelism);
        self.record_batch(&projects, results)
    }

    /// Applies `review` to the current assessment of its project and stores
    /// the review, the reviewed assessment and the refreshed catalog entry.
    pub fn submit_review(&mut self, review: &ReviewRecord) -> Result<Assessment, PipelineError> {
        let current: Assessment = self.store.get(&review.project_id)?;
        let reviewed = apply_review(&current, review)?;
        let project: Project = self.store.get(&review.project_id)?;
        self.store.put(review)?;
        self.store.put(&reviewed)?;
        self.store.put(&CatalogEntry::new(&project, &reviewed))?;
        Ok(reviewed)
    }

    /// An all-`unchanged` review of the current assessment, for editing.
    pub fn review_template(&self, project_id: &str, reviewer: &str) -> Result<ReviewRecord, PipelineError> {
        let a: Assessment = self.store.get(project_id)?;
        Ok(ReviewRecord::accept_all(&a, reviewer, self.clock.now()))
    }

    /// Current assessments of projects in `source` (all when `None`).
    pub fn assessments(&self, source: Option<&str>) -> Result<Vec<Assessment>, PipelineError> {
        let all: Vec<Assessment> = self.store.list(&Filter::default())?;
        let Some(source) = source else { return Ok(all) };
        let ids: BTreeSet<String> = self
            .projects(&Filter {
                source: Some(source.to_string()),
                ..Filter::default()
            })?
            .into_iter()
            .map(|p| p.id)
            .collect();
        Ok(all.into_iter().filter(|a| ids.contains(&a.project_id)).collect())
    }

    pub fn coverage(&self, source: Option<&str>) -> Result<CoverageReport, PipelineError> {
        Ok(analytics::coverage(&self.assessments(source)?))
    }

    pub fn agreement(&self) -> Result<AgreementSummary, PipelineError> {
        let reviews: Vec<ReviewRecord> = self.store.list(&Filter::default())?;
        Ok(analytics::agreement_rate(&reviews)?)
    }

    pub fn gap(&self, plans: &str, activities: &str) -> Result<GapReport, PipelineError> {
        Ok(analytics::gap(&self.assessments(Some(plans))?, &self.assessments(Some(activities))?)?)
    }

    pub fn catalog(&self, kind: Option<ProjectKind>) -> Result<Vec<CatalogEntry>, PipelineError> {
        Ok(self.store.list(&Filter {
            kind,
            ..Filter::default()
        })?)
    }

    pub fn match_needs(&self, needs: &ProfileVector, top_k: Option<usize>) -> Result<Vec<MatchResult>, PipelineError> {
        let catalog: Vec<(String, ProfileVector)> =
            self.catalog(None)?.into_iter().map(|e| (e.project_id, e.vector)).collect();
        Ok(matcher::rank(needs, &catalog, top_k))
    }

    pub fn coverage_csv(&self, source: Option<&str>) -> Result<String, PipelineError> {
        Ok(reporting::coverage_csv(&self.coverage(source)?, &self.style))
    }

    pub fn heatmap_svg(&self, request: &HeatmapRequest) -> Result<String, PipelineError> {
        match (&request.plans, &request.activities) {
            (Some(plans), Some(activities)) => {
                let g = self.gap(plans, activities)?;
                let plan_cells: Vec<_> = all_cells().into_iter().filter(|&c| g.cell(c).plan_pct > 0.0).collect();
                let activity_cells: Vec<_> = all_cells().into_iter().filter(|&c| g.cell(c).activity_pct > 0.0).collect();
                let cov = self.coverage(Some(activities))?;
                let data = match request.mode {
                    HeatmapMode::Coverage => HeatmapData::Coverage(&cov),
                    HeatmapMode::Gap => HeatmapData::Gap(&g),
                };
                Ok(reporting::heatmap_svg(data, &plan_cells, &activity_cells, &self.style, &self.taxonomy)?)
            }
            (None, None) => {
                if request.mode == HeatmapMode::Gap {
                    return Err(PipelineError::Invalid("gap heatmap needs both plans and activities".into()));
                }
                let cov = self.coverage(request.source.as_deref())?;
                Ok(reporting::heatmap_svg(HeatmapData::Coverage(&cov), &[], &[], &self.style, &self.taxonomy)?)
            }
            _ => Err(PipelineError::Invalid("plans and activities must be given together".into())),
        }
    }

    pub fn export_catalog(&self) -> Result<String, PipelineError> {
        let projects = self.projects(&Filter::default())?;
        Ok(reporting::export_catalog(&self.assessments(None)?, &projects)?)
    }
}
