//! Effective configuration: flags over the config file over defaults.

use std::path::{Path, PathBuf};

use mediaprof_core::ingest::{parse_population, AppConfig, Workspace};
use mediaprof_core::llm::{build_backend, BackendKind, LlmBackend};
use mediaprof_core::{Error, Result};

use crate::{ModelFlags, SessionFlags};

/// Name of the effective configuration written into session and output
/// directories.
pub const EFFECTIVE_CONFIG: &str = "config.toml";

pub struct Settings {
    pub config: AppConfig,
    /// Relative paths in the config resolve against this directory.
    pub base: PathBuf,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        match path {
            Some(p) => Ok(Settings {
                config: AppConfig::load(p)?,
                base: absolute(p)?.parent().map(Path::to_path_buf).unwrap_or_default(),
            }),
            None => Ok(Settings {
                config: AppConfig::default(),
                base: absolute(Path::new("."))?,
            }),
        }
    }

    /// `--config` when given, else the effective config saved in `dir`.
    pub fn load_saved(path: Option<&Path>, dir: &Path) -> Result<Settings> {
        let saved = dir.join(EFFECTIVE_CONFIG);
        match path {
            None if saved.exists() => Settings::load(Some(&saved)),
            other => Settings::load(other),
        }
    }

    pub fn apply_model(&mut self, f: &ModelFlags) {
        let m = &mut self.config.model;
        if let Some(v) = f.hidden {
            m.rgcn.hidden = v;
        }
        if let Some(v) = f.layers {
            m.rgcn.layers = v;
        }
        if let Some(v) = f.lr {
            m.rgcn.lr = v;
        }
        if let Some(v) = f.epochs {
            m.epochs = v;
        }
        if let Some(v) = f.model_seed {
            m.rgcn.seed = v;
        }
    }

    pub fn apply_session(&mut self, f: &SessionFlags) -> Result<()> {
        let c = &mut self.config;
        if let Some(v) = f.task {
            c.session.task = v;
        }
        if let Some(v) = f.k {
            c.clustering.k = v;
        }
        if let Some(v) = f.m {
            c.clustering.m = v;
        }
        if let Some(v) = f.communities_per_round {
            c.clustering.communities_per_round = v;
        }
        if let Some(v) = &f.population {
            parse_population(v)?;
            c.session.population = v.clone();
        }
        if let Some(v) = f.seed {
            c.session.seed = v;
        }
        if let Some(v) = f.margin {
            c.session.fine_tune.margin = v;
        }
        if let Some(v) = f.fine_tune_epochs {
            c.session.fine_tune.epochs = v;
        }
        if let Some(p) = &f.script {
            c.llm.backend = BackendKind::Scripted;
            c.llm.script = Some(absolute(p)?.display().to_string());
        }
        c.validate()
    }

    pub fn resolve_llm(&mut self, work: &Workspace) -> Result<()> {
        work.resolve_llm(&mut self.config.llm, &self.base)
    }

    pub fn backend(&self) -> Result<Box<dyn LlmBackend>> {
        build_backend(&self.config.llm, &self.base)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(EFFECTIVE_CONFIG);
        std::fs::write(&path, self.config.to_toml()).map_err(|e| Error::io(&path, e))
    }
}
