//! TOML run configuration shared by preprocessing and mapping.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, PipelineError};
use crate::ontology::Ontology;
use crate::pipeline::{MappingEngine, RunOptions, StoreBinding, StoreTarget};
use crate::providers::{ChatClient, EmbeddingClient, ProviderConfig};
use crate::retrieval::DEFAULT_K;
use crate::scalar::Scalar;
use crate::store::{EmbeddingStore, StoreRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    /// Store directory. Defaults to `stores/<role>` under the output directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    pub embedder: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoresConfig {
    pub base: StoreConfig,
    #[serde(default)]
    pub auxiliary: Option<StoreConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub ontology: Option<Ontology>,
    pub stores: StoresConfig,
    /// Model used for reranking.
    pub chat: ProviderConfig,
    /// Model used to write negated descriptors. Defaults to `chat`.
    #[serde(default)]
    pub negation_chat: Option<ProviderConfig>,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    /// Parses and validates a config file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Config("k must be >= 1".into()));
        }
        if self.concurrency == 0 {
            return Err(PipelineError::Config("concurrency must be >= 1".into()));
        }
        let providers = [
            ("stores.base.embedder", Some(&self.stores.base.embedder)),
            (
                "stores.auxiliary.embedder",
                self.stores.auxiliary.as_ref().map(|s| &s.embedder),
            ),
            ("chat", Some(&self.chat)),
            ("negation_chat", self.negation_chat.as_ref()),
        ];
        for (name, provider) in providers {
            if let Some(p) = provider {
                p.validate().map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let mut paths: Vec<&mut PathBuf> = self.catalog.iter_mut().collect();
        for store in std::iter::once(&mut self.stores.base).chain(self.stores.auxiliary.as_mut()) {
            paths.extend(store.path.iter_mut());
            paths.extend(store.embedder.script.iter_mut());
        }
        for chat in std::iter::once(&mut self.chat).chain(self.negation_chat.as_mut()) {
            paths.extend(chat.script.iter_mut());
        }
        for p in paths {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn store(&self, role: StoreRole) -> Option<&StoreConfig> {
        match role {
            StoreRole::Base => Some(&self.stores.base),
            StoreRole::Auxiliary => self.stores.auxiliary.as_ref(),
        }
    }

    pub fn roles(&self) -> Vec<StoreRole> {
        let mut roles = vec![StoreRole::Base];
        if self.stores.auxiliary.is_some() {
            roles.push(StoreRole::Auxiliary);
        }
        roles
    }

    /// Where the store for `role` lives, given the output directory used
    /// when it was not configured explicitly.
    pub fn store_dir(&self, role: StoreRole, out_dir: &Path) -> Option<PathBuf> {
        let store = self.store(role)?;
        Some(
            store
                .path
                .clone()
                .unwrap_or_else(|| out_dir.join("stores").join(role.to_string())),
        )
    }

    pub fn embedder(&self, role: StoreRole) -> Result<Option<EmbeddingClient>, PipelineError> {
        self.store(role)
            .map(|s| EmbeddingClient::from_config(&s.embedder, self.seed))
            .transpose()
            .map_err(|e| PipelineError::Config(format!("{role} embedder: {e}")))
    }

    pub fn chat_client(&self) -> Result<ChatClient, PipelineError> {
        ChatClient::from_config(&self.chat).map_err(|e| PipelineError::Config(format!("chat: {e}")))
    }

    pub fn negation_client(&self) -> Result<ChatClient, PipelineError> {
        ChatClient::from_config(self.negation_chat.as_ref().unwrap_or(&self.chat))
            .map_err(|e| PipelineError::Config(format!("negation chat: {e}")))
    }

    /// Stores to build during preprocessing, one per configured embedder.
    pub fn store_targets(&self, out_dir: &Path) -> Result<Vec<StoreTarget>, PipelineError> {
        self.roles()
            .into_iter()
            .map(|role| {
                Ok(StoreTarget {
                    role,
                    embedder: self.embedder(role)?.expect("role is configured"),
                    dir: self.store_dir(role, out_dir).expect("role is configured"),
                })
            })
            .collect()
    }

    /// Loads the stores and connects the clients.
    pub fn build_engine<S: Scalar>(&self, store_root: &Path) -> Result<MappingEngine<S>, PipelineError> {
        let mut bindings = Vec::new();
        for role in self.roles() {
            let dir = self.store_dir(role, store_root).expect("role is configured");
            let store = EmbeddingStore::<S>::load(&dir)?;
            let embedder = self.embedder(role)?.expect("role is configured");
            bindings.push(StoreBinding { store, embedder });
        }
        let mut bindings = bindings.into_iter();
        let base = bindings.next().expect("base store is always configured");
        MappingEngine::new(base, bindings.next(), self.chat_client()?, self.k, self.concurrency)
    }

    pub fn run_options(&self, resume: bool) -> RunOptions {
        RunOptions {
            resume,
            run_id: self.run_id.clone(),
            started_at: self.started_at,
        }
    }
}
