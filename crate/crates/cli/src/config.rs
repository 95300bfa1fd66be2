use std::path::{Path, PathBuf};

use framekit::analytics::DEFAULT_ALPHA_TOTAL;
use framekit::classifier::TrainConfig;
use framekit::llm::LlmClientConfig;
use framekit::preprocess::SplitSpec;
use framekit::validate::DEFAULT_LEASE_TTL_SECS;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run can be configured with; each subcommand reads the parts it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub llm: LlmClientConfig,
    pub split: SplitConfig,
    pub classifier: TrainConfig,
    pub analytics: AnalyticsConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub annotations: Vec<PathBuf>,
    pub model: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub enabled: bool,
    pub spec: SplitSpec,
    /// File with one post id per line, forced into test.
    pub pinned_ids_file: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { enabled: false, spec: SplitSpec::new(0.8, 0.1, 0.1, 0), pinned_ids_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub alpha_total: f64,
    pub stopwords: Option<PathBuf>,
    /// Extra `alias \t state` lines for the state matcher.
    pub gazetteer: Option<PathBuf>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig { alpha_total: DEFAULT_ALPHA_TOTAL, stopwords: None, gazetteer: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub lease_ttl_secs: i64,
    pub event_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), lease_ttl_secs: DEFAULT_LEASE_TTL_SECS, event_log: None }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if let Err(e) = self.llm.validate() {
            return usage(e.to_string());
        }
        if let Err(e) = self.classifier.validate() {
            return usage(e.to_string());
        }
        if !(self.analytics.alpha_total.is_finite() && self.analytics.alpha_total > 0.0) {
            return usage("analytics.alpha_total must be positive".into());
        }
        if self.service.lease_ttl_secs <= 0 {
            return usage("service.lease_ttl_secs must be positive".into());
        }
        Ok(())
    }

    /// sha256 over the canonical JSON form, recorded in run manifests.
    pub fn digest(&self) -> String {
        crate::manifest::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
