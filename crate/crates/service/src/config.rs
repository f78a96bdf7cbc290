//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pedafeed_core::agents::{AgentSettings, Agents, TemplateSet};
use pedafeed_core::domain::TaskSet;
use pedafeed_core::gateway::{Gateway, ProviderConfig, ProviderKind, TraceLog};
use pedafeed_core::pipeline::Pipeline;
use pedafeed_core::quorum::QuorumConfig;
use pedafeed_core::runner::{Limits, Sandbox};
use pedafeed_core::tasks;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub provider: ProviderConfig,
    pub quorum: QuorumConfig,
    pub limits: Limits,
    pub agents: AgentSettings,
    pub locale: String,
    /// Directory with `<locale>/<template>` files. Only needed for non-English locales.
    pub template_dir: Option<PathBuf>,
    /// Replace messages that never reached the quorum with a generic hint.
    pub strict_validation: bool,
    /// Directory of task JSON files; the shipped tasks when absent.
    pub task_dir: Option<PathBuf>,
    pub storage_path: PathBuf,
    pub listen: SocketAddr,
    pub max_concurrent_sandboxes: usize,
    /// Seed for the per-group corpus order served to raters.
    pub corpus_seed: u64,
    /// Expose validation metadata in feedback responses.
    pub debug: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig {
                kind: ProviderKind::Mock,
                base_url: None,
                api_key_env: "OPENAI_API_KEY".into(),
                timeout_ms: 60_000,
                retry: Default::default(),
                mock_script: None,
            },
            quorum: QuorumConfig::default(),
            limits: Limits::default(),
            agents: AgentSettings::default(),
            locale: "en".into(),
            template_dir: None,
            strict_validation: false,
            task_dir: None,
            storage_path: PathBuf::from("pedafeed-data"),
            listen: "127.0.0.1:8080".parse().expect("valid address"),
            max_concurrent_sandboxes: Sandbox::DEFAULT_MAX_CONCURRENT,
            corpus_seed: 7,
            debug: false,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(vec![e.message().to_string()]))?;
        let problems = config.problems();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(ServiceError::Config(problems))
        }
    }

    /// Every reason this configuration cannot be used.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(e) = self.provider.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.quorum.validate() {
            problems.push(e.to_string());
        }
        if self.limits.per_test_timeout_ms == 0 || self.limits.cpu_ms == 0 {
            problems.push("limits must be positive".into());
        }
        if self.limits.mem_bytes < 16 * 1024 * 1024 {
            problems.push("limits.mem_bytes must be at least 16 MiB".into());
        }
        if self.max_concurrent_sandboxes == 0 {
            problems.push("max_concurrent_sandboxes must be at least 1".into());
        }
        if self.locale != "en" && self.template_dir.is_none() {
            problems.push(format!("locale `{}` needs template_dir", self.locale));
        }
        if self.storage_path.as_os_str().is_empty() {
            problems.push("storage_path must not be empty".into());
        }
        problems
    }

    pub fn templates(&self) -> Result<TemplateSet, ServiceError> {
        match &self.template_dir {
            Some(dir) => TemplateSet::load(dir, &self.locale).map_err(|e| ServiceError::Config(vec![e.to_string()])),
            None => Ok(TemplateSet::english()),
        }
    }

    /// Loads the tasks and drops any that fail their self-check.
    pub async fn tasks(&self, sandbox: &Sandbox) -> Result<TaskSet, ServiceError> {
        let loaded = match &self.task_dir {
            Some(dir) => tasks::load_dir(dir).map_err(|e| ServiceError::Data(e.to_string()))?,
            None => tasks::shipped_tasks(),
        };
        tasks::validated_task_set(loaded, sandbox).await.map_err(|e| ServiceError::Data(e.to_string()))
    }

    pub fn sandbox(&self) -> Sandbox {
        Sandbox::new(self.limits).with_max_concurrent(self.max_concurrent_sandboxes)
    }

    /// Gateway whose call trace is appended to `trace_file` when given.
    pub fn gateway(&self, trace_file: Option<&Path>) -> Result<Gateway, ServiceError> {
        let gateway = Gateway::from_config(&self.provider).map_err(|e| ServiceError::Config(vec![e.to_string()]))?;
        Ok(match trace_file {
            Some(path) => gateway.with_trace(TraceLog::with_file(path).map_err(|e| {
                ServiceError::Data(format!("cannot open trace file {}: {e}", path.display()))
            })?),
            None => gateway,
        })
    }

    pub async fn pipeline(&self, trace_file: Option<&Path>) -> Result<Pipeline, ServiceError> {
        let sandbox = self.sandbox();
        let tasks = self.tasks(&sandbox).await?;
        let agents = Agents::new(Arc::new(self.gateway(trace_file)?), Arc::new(self.templates()?), self.agents.clone());
        Ok(Pipeline::new(Arc::new(tasks), Arc::new(sandbox), agents, self.quorum).strict(self.strict_validation))
    }
}
