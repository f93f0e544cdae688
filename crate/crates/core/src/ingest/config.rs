//! TOML run configuration. Every key is optional; missing keys take the
//! defaults below. Command-line flags override file values.
//!
//! ```toml
//! [model]
//! hidden = 128
//! layers = 5
//! epochs = 200
//!
//! [clustering]
//! k = 35
//!
//! [llm]
//! backend = "scripted"
//! script = "llm_script.json"
//!
//! [session]
//! task = "factuality"
//! population = "test"
//!
//! [session.fine_tune]
//! epochs = 50
//!
//! [ingest.periods]
//! "2020" = "train"
//! "2021" = "test"
//!
//! [service]
//! listen = "127.0.0.1:8080"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::files::PeriodMap;
use crate::community::extractor_by_name;
use crate::error::{Error, Result};
use crate::graph::{Split, Task};
use crate::llm::LlmConfig;
use crate::rgcn::{LinkPredConfig, RgcnConfig};
use crate::session::{Schedule, SessionConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(flatten)]
    pub rgcn: RgcnConfig,
    pub epochs: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            rgcn: RgcnConfig::default(),
            epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub k: usize,
    pub m: usize,
    pub communities_per_round: usize,
    pub min_cluster_size: usize,
    pub extractor: String,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let s = SessionConfig::default();
        ClusteringSection {
            k: s.k,
            m: s.m,
            communities_per_round: s.communities_per_round,
            min_cluster_size: s.min_cluster_size,
            extractor: s.extractor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub task: Task,
    /// `train`, `dev`, `test` or `all`.
    pub population: String,
    pub max_tweets: usize,
    pub max_borrowed_negatives: usize,
    pub seed: u64,
    pub interactions: usize,
    pub expansions: usize,
    pub fine_tune: LinkPredConfig,
}

impl Default for SessionSection {
    fn default() -> Self {
        let s = SessionConfig::default();
        SessionSection {
            task: s.task,
            population: "test".into(),
            max_tweets: s.max_tweets,
            max_borrowed_negatives: s.max_borrowed_negatives,
            seed: s.seed,
            interactions: 5,
            expansions: 1,
            fine_tune: s.fine_tune,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Clusters of the graph-only baseline.
    pub graph_only_k: usize,
    /// Users kept per cluster by the graph-only baseline.
    pub graph_only_m: usize,
    /// Seeds of a sweep; empty runs the session seed only.
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            graph_only_k: 35,
            graph_only_m: SessionConfig::default().m,
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub periods: PeriodMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub listen: String,
    /// Static bearer token; requests without it are refused when set.
    pub token: Option<String>,
    /// Where session directories are created.
    pub sessions_dir: String,
    /// Workspace used when a request names none.
    pub workspace: Option<String>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            listen: "127.0.0.1:8080".into(),
            token: None,
            sessions_dir: "sessions".into(),
            workspace: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub model: ModelSection,
    pub clustering: ClusteringSection,
    pub llm: LlmConfig,
    pub session: SessionSection,
    pub eval: EvalSection,
    pub ingest: IngestSection,
    pub service: ServiceSection,
}

pub fn parse_population(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        other => other.parse().map(Some).map_err(Error::InvalidArgument),
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, name: &str) -> Result<AppConfig> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(name, line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<AppConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AppConfig::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.rgcn.validate()?;
        if extractor_by_name(&self.clustering.extractor).is_none() {
            return Err(Error::InvalidArgument(format!(
                "unknown entity extractor `{}`",
                self.clustering.extractor
            )));
        }
        parse_population(&self.session.population)?;
        if self.eval.graph_only_k == 0 || self.eval.graph_only_m == 0 {
            return Err(Error::InvalidArgument("graph_only_k and graph_only_m must be positive".into()));
        }
        self.session_config().validate()
    }

    pub fn session_config(&self) -> SessionConfig {
        let c = &self.clustering;
        let s = &self.session;
        SessionConfig {
            task: s.task,
            k: c.k,
            m: c.m,
            communities_per_round: c.communities_per_round,
            min_cluster_size: c.min_cluster_size,
            population: parse_population(&s.population).unwrap_or(Some(Split::Test)),
            max_tweets: s.max_tweets,
            parallelism: self.llm.parallelism.max(1),
            extractor: c.extractor.clone(),
            max_borrowed_negatives: s.max_borrowed_negatives,
            seed: s.seed,
            fine_tune: s.fine_tune.clone(),
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            interactions: self.session.interactions,
            expansions: self.session.expansions,
        }
    }
}
