//! Run configuration, read from a TOML or JSON file.
//!
//! ```toml
//! data_dir = "data"
//! taxonomy_file = "taxonomy.json"   # optional, builtin definitions otherwise
//! prompt_file = "prompt.txt"        # optional, builtin instructions otherwise
//! min_description_chars = 100
//! parallelism = 4
//!
//! [backend]
//! backend_kind = "remote"
//! model_id = "gpt-3.5-turbo"
//! cache_dir = "cache"
//!
//! [mappings.paris]
//! id_column = "id"
//! title_column = "title"
//! description_column = "description"
//! source_name = "paris"
//!
//! [style]
//! decimals = 1
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use isomatrix_core::classifier::{BackendConfig, PromptTemplate};
use isomatrix_core::ingestion::{FieldMapping, DEFAULT_MIN_DESCRIPTION_CHARS};
use isomatrix_core::{ReportStyle, TaxonomyDocument};

use crate::Invalid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub taxonomy_file: Option<PathBuf>,
    pub prompt_file: Option<PathBuf>,
    pub min_description_chars: usize,
    pub parallelism: usize,
    pub backend: BackendConfig,
    pub mappings: BTreeMap<String, FieldMapping>,
    pub style: ReportStyle,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            taxonomy_file: None,
            prompt_file: None,
            min_description_chars: DEFAULT_MIN_DESCRIPTION_CHARS,
            parallelism: 4,
            backend: BackendConfig::mock(),
            mappings: BTreeMap::new(),
            style: ReportStyle::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.taxonomy_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.prompt_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.backend.cache_dir.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for file in [&self.taxonomy_file, &self.prompt_file].into_iter().flatten() {
            if !file.is_file() {
                bail!(Invalid(format!("referenced file {} does not exist", file.display())));
            }
        }
        if self.parallelism == 0 {
            bail!(Invalid("parallelism must be positive".into()));
        }
        for (name, m) in &self.mappings {
            m.validate().map_err(|e| Invalid(format!("mapping {name:?}: {e}")))?;
        }
        self.style.validate().map_err(|e| Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<Arc<TaxonomyDocument>> {
        match &self.taxonomy_file {
            None => Ok(Arc::new(TaxonomyDocument::builtin())),
            Some(p) => Ok(Arc::new(TaxonomyDocument::load(p).map_err(|e| Invalid(format!("{}: {e}", p.display())))?)),
        }
    }

    pub fn template(&self, taxonomy: &TaxonomyDocument) -> Result<PromptTemplate> {
        match &self.prompt_file {
            None => Ok(PromptTemplate::builtin(taxonomy)),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(PromptTemplate::render(&text, taxonomy))
            }
        }
    }
}
