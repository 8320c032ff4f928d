//! LLM classification of project descriptions onto the matrix.
//!
//! A [`Classifier`] renders the prompt, calls a [`Backend`] with the
//! structured-output schema, validates the payload and returns an
//! [`Assessment`]. Results are cached on disk by
//! (model, prompt version, project id, description). Transport failures,
//! 5xx statuses and malformed payloads are retried with exponential
//! backoff and full jitter; 4xx statuses and schema violations are not.

mod backend;
mod cache;
mod mock;
mod prompt;
mod reply;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::model::{Assessment, Project, Provenance};
use crate::taxonomy::TaxonomyDocument;

pub use backend::{
    extract_arguments, request_body, Backend, BackendConfig, BackendFailure, BackendKind, CompletionRequest,
    RemoteBackend,
};
pub use cache::{cache_key, AssessmentCache};
pub use mock::{keyword_table, mock_classify, mock_contributions, KeywordRule, KeywordTable, MockBackend, MOCK_MODEL_ID};
pub use prompt::{
    build_messages, classification_schema, tool_definition, Message, PromptTemplate, Role, DEFAULT_CHAR_BUDGET,
    DEFAULT_INSTRUCTIONS, DEFINITIONS_PLACEHOLDER, FUNCTION_NAME,
};
pub use reply::{parse_reply, ParsedReply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Transport,
    HttpStatus,
    MalformedOutput,
    SchemaViolation,
    ExhaustedRetries,
    /// The project or configuration cannot be classified at all.
    InvalidInput,
}

impl ErrorKind {
    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Transport => "transport",
            ErrorKind::HttpStatus => "http_status",
            ErrorKind::MalformedOutput => "malformed_output",
            ErrorKind::SchemaViolation => "schema_violation",
            ErrorKind::ExhaustedRetries => "exhausted_retries",
            ErrorKind::InvalidInput => "invalid_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyError {
    pub kind: ErrorKind,
    pub detail: String,
    pub attempts: u32,
    /// HTTP status for `http_status` errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl ClassifyError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>, attempts: u32) -> Self {
        ClassifyError {
            kind,
            detail: detail.into(),
            attempts,
            status: None,
        }
    }

    fn retryable(&self) -> bool {
        match self.kind {
            ErrorKind::Transport | ErrorKind::MalformedOutput => true,
            ErrorKind::HttpStatus => self.status.is_some_and(|s| s >= 500),
            _ => false,
        }
    }
}

impl fmt::Display for ClassifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} attempt(s): {}", self.kind.as_str(), self.attempts, self.detail)
    }
}

impl std::error::Error for ClassifyError {}

impl From<BackendFailure> for ClassifyError {
    fn from(f: BackendFailure) -> Self {
        match f {
            BackendFailure::Transport(d) => ClassifyError::new(ErrorKind::Transport, d, 1),
            BackendFailure::Malformed(d) => ClassifyError::new(ErrorKind::MalformedOutput, d, 1),
            BackendFailure::Status { code, body } => ClassifyError {
                status: Some(code),
                ..ClassifyError::new(ErrorKind::HttpStatus, format!("HTTP {code}: {body}"), 1)
            },
        }
    }
}

/// Delay before retry number `retry` (0-based): uniform in
/// `[0, base × 2^retry]`, capped at one minute.
pub fn backoff_delay(base: Duration, retry: u32, rng: &mut impl Rng) -> Duration {
    let cap = Duration::from_secs(60);
    let ceiling = base.saturating_mul(2u32.saturating_pow(retry)).min(cap);
    if ceiling.is_zero() {
        return Duration::ZERO;
    }
    Duration::from_nanos(rng.gen_range(0..=ceiling.as_nanos() as u64))
}

pub struct Classifier {
    backend: Arc<dyn Backend>,
    config: BackendConfig,
    template: PromptTemplate,
    taxonomy: Arc<TaxonomyDocument>,
    cache: Option<AssessmentCache>,
    clock: Arc<dyn Clock>,
}

impl Classifier {
    pub fn new(
        backend: Arc<dyn Backend>,
        config: BackendConfig,
        taxonomy: Arc<TaxonomyDocument>,
        template: PromptTemplate,
    ) -> Result<Self, ClassifyError> {
        config.validate()?;
        let cache = match &config.cache_dir {
            Some(dir) => Some(
                AssessmentCache::open(dir)
                    .map_err(|e| ClassifyError::new(ErrorKind::InvalidInput, format!("cache dir: {e}"), 0))?,
            ),
            None => None,
        };
        Ok(Classifier {
            backend,
            config,
            template,
            taxonomy,
            cache,
            clock: Arc::new(SystemClock),
        })
    }

    /// Builds the backend named by `config.backend_kind`.
    pub fn from_config(
        config: BackendConfig,
        taxonomy: Arc<TaxonomyDocument>,
        template: PromptTemplate,
    ) -> Result<Self, ClassifyError> {
        let backend: Arc<dyn Backend> = match config.backend_kind {
            BackendKind::Mock => Arc::new(MockBackend),
            BackendKind::Remote => Arc::new(RemoteBackend::new(&config)?),
        };
        Self::new(backend, config, taxonomy, template)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache_key_for(&self, p: &Project) -> String {
        cache_key(self.backend.model_id(), &self.template.version, &p.id, &p.description)
    }

    pub fn classify(&self, p: &Project) -> Result<Assessment, ClassifyError> {
        let messages = build_messages(p, &self.template, self.config.char_budget)?;
        let key = self.cache_key_for(p);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            log::debug!("cache hit for {}", p.id);
            return Ok(hit);
        }

        let schema = classification_schema();
        let request = CompletionRequest {
            messages: &messages,
            schema: &schema,
            temperature: self.config.temperature,
        };
        let base = Duration::from_millis(self.config.backoff_base_ms);
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        let reply = loop {
            attempt += 1;
            let outcome = self
                .backend
                .complete(&request)
                .map_err(ClassifyError::from)
                .and_then(|raw| parse_reply(&raw, &self.taxonomy));
            match outcome {
                Ok(reply) => break reply,
                Err(mut e) => {
                    e.attempts = attempt;
                    if !e.retryable() {
                        return Err(e);
                    }
                    if attempt >= max_attempts {
                        return Err(ClassifyError {
                            kind: ErrorKind::ExhaustedRetries,
                            detail: format!("last error {}: {}", e.kind.as_str(), e.detail),
                            attempts: attempt,
                            status: e.status,
                        });
                    }
                    let delay = backoff_delay(base, attempt - 1, &mut rand::thread_rng());
                    log::warn!("{}: attempt {attempt} failed ({}), retrying in {delay:?}", p.id, e.kind.as_str());
                    thread::sleep(delay);
                }
            }
        };
        for w in &reply.warnings {
            log::warn!("{}: {w}", p.id);
        }

        let assessment = Assessment {
            project_id: p.id.clone(),
            contributions: reply.contributions,
            model_id: self.backend.model_id().to_string(),
            prompt_version: self.template.version.clone(),
            created_at: self.clock.now(),
            provenance: match self.backend.kind() {
                BackendKind::Mock => Provenance::Mock,
                BackendKind::Remote => Provenance::Llm,
            },
        };
        debug_assert!(assessment.validate().is_ok());
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&key, &assessment) {
                log::warn!("failed to cache assessment for {}: {e}", p.id);
            }
        }
        Ok(assessment)
    }

    /// Classifies `projects` with at most `parallelism` backend calls in
    /// flight. Output order matches input order and each item carries its
    /// own result. A `parallelism` of 0 is treated as 1.
    pub fn classify_batch(
        &self,
        projects: &[Project],
        parallelism: usize,
    ) -> Vec<(String, Result<Assessment, ClassifyError>)> {
        self.classify_batch_with_progress(projects, parallelism, |_, _| {})
    }

    /// Like [`classify_batch`](Self::classify_batch), calling `progress`
    /// with (index, result) as each item completes.
    pub fn classify_batch_with_progress<F>(
        &self,
        projects: &[Project],
        parallelism: usize,
        progress: F,
    ) -> Vec<(String, Result<Assessment, ClassifyError>)>
    where
        F: Fn(usize, &Result<Assessment, ClassifyError>) + Sync,
    {
        let workers = parallelism.max(1).min(projects.len());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Assessment, ClassifyError>>>> =
            Mutex::new((0..projects.len()).map(|_| None).collect());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(p) = projects.get(i) else { break };
                    let result = self.classify(p);
                    progress(i, &result);
                    slots.lock().expect("result slots poisoned")[i] = Some(result);
                });
            }
        });
        projects
            .iter()
            .zip(slots.into_inner().expect("result slots poisoned"))
            .map(|(p, r)| (p.id.clone(), r.expect("every index visited")))
            .collect()
    }
}
