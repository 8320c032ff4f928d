//! Classification and analytics of urban initiatives on the ISO 37101
//! purposes x issues matrix.
//!
//! The pipeline runs ingest → classify → review → analyze → report/match.
//! Shared record types are re-exported at the crate root.

pub mod analytics;
pub mod classifier;
pub mod clock;
pub mod ingestion;
pub mod matcher;
pub mod model;
pub mod pipeline;
pub mod reporting;
pub mod store;
pub mod taxonomy;

pub use analytics::{agreement_rate, coverage, gap, AgreementSummary, CoverageReport, GapCell, GapReport};
pub use classifier::{BackendConfig, BackendKind, ClassifyError, Classifier, PromptTemplate};
pub use ingestion::{FieldMapping, IngestReport};
pub use matcher::{cosine, encode, rank, MatchResult, ProfileVector};
pub use model::{
    apply_review, contribution_cell_count, matrix_view, Assessment, Contribution, LikertScore, Project, ProjectKind,
    Provenance, ReviewAction, ReviewDecision, ReviewRecord, Target,
};
pub use pipeline::{PipelineError, Workspace};
pub use reporting::{CatalogEntry, ReportStyle};
pub use store::{Store, StoreError};
pub use taxonomy::{all_cells, CellKey, Issue, Purpose, Scale, TaxonomyDocument};
