//! A prepared working directory: the ingested graph, its texts, the trained
//! model and, for synthetic data, the scripted LLM fixture.

use std::path::{Path, PathBuf};

use super::config::ModelSection;
use super::files::{ingest_dir, Dataset, PeriodMap, SOURCES_FILE};
use super::texts::TextStore;
use crate::error::{Error, Result};
use crate::graph::{load_graph, save_graph, HeteroGraph};
use crate::llm::{BackendKind, LlmConfig};
use crate::rgcn::{load_checkpoint, save_checkpoint, train_classification, RgcnConfig, RgcnModel};

pub const WORK_GRAPH_FILE: &str = "graph.snapshot";
pub const WORK_MODEL_FILE: &str = "model.ckpt";
pub const WORK_PROFILES_FILE: &str = "profiles.txt";
pub const WORK_ARTICLES_FILE: &str = "texts.tsv";
/// Scripted LLM fixture written next to synthetic data.
pub const SCRIPT_FILE: &str = "llm_script.json";

pub struct Workspace {
    pub dir: PathBuf,
    pub graph: HeteroGraph,
    pub texts: TextStore,
    pub model: Option<RgcnModel>,
}

impl Workspace {
    /// Opens `dir` as a workspace, or ingests it when it is a raw dataset
    /// directory.
    pub fn open(dir: &Path, periods: &PeriodMap) -> Result<Workspace> {
        if dir.join(WORK_GRAPH_FILE).exists() {
            return Workspace::load(dir);
        }
        if !dir.join(SOURCES_FILE).exists() {
            return Err(Error::Precondition(format!(
                "{} is neither a workspace nor a dataset directory",
                dir.display()
            )));
        }
        let ds = ingest_dir(dir, periods)?;
        Ok(Workspace::from_dataset(dir, ds))
    }

    pub fn from_dataset(dir: &Path, ds: Dataset) -> Workspace {
        Workspace {
            dir: dir.to_path_buf(),
            graph: ds.graph,
            texts: ds.texts,
            model: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Workspace> {
        let graph = load_graph(&dir.join(WORK_GRAPH_FILE))?;
        let texts = TextStore::load(&dir.join(WORK_PROFILES_FILE), &dir.join(WORK_ARTICLES_FILE))?;
        let ckpt = dir.join(WORK_MODEL_FILE);
        let model = if ckpt.exists() {
            Some(load_checkpoint(&ckpt)?)
        } else {
            None
        };
        Ok(Workspace {
            dir: dir.to_path_buf(),
            graph,
            texts,
            model,
        })
    }

    /// Writes everything to `dir` and makes it the workspace directory. A
    /// fixture found in the old directory is carried along.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_graph(&self.graph, &dir.join(WORK_GRAPH_FILE))?;
        self.texts
            .save(&dir.join(WORK_PROFILES_FILE), &dir.join(WORK_ARTICLES_FILE))?;
        if let Some(m) = &self.model {
            save_checkpoint(m, &dir.join(WORK_MODEL_FILE))?;
        }
        let (from, to) = (self.dir.join(SCRIPT_FILE), dir.join(SCRIPT_FILE));
        if from.exists() && from != to {
            std::fs::copy(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
        self.dir = dir.to_path_buf();
        Ok(())
    }

    pub fn model(&self) -> Result<&RgcnModel> {
        self.model.as_ref().ok_or_else(|| {
            Error::Precondition(format!("{} has no trained model", self.dir.display()))
        })
    }

    /// The fixture next to the workspace, if any.
    pub fn script_path(&self) -> Option<PathBuf> {
        Some(self.dir.join(SCRIPT_FILE)).filter(|p| p.exists())
    }

    /// Makes the paths of `llm` absolute against `base`. A scripted backend
    /// without a script falls back to the workspace fixture, so a saved
    /// config stands on its own.
    pub fn resolve_llm(&self, llm: &mut LlmConfig, base: &Path) -> Result<()> {
        if llm.backend == BackendKind::Scripted && llm.script.is_none() {
            llm.script = self.script_path().map(|p| p.display().to_string());
        }
        for p in [&mut llm.script, &mut llm.cache].into_iter().flatten() {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined)
                .map_err(|e| Error::io(&joined, e))?
                .display()
                .to_string();
        }
        Ok(())
    }

    /// Trains a fresh model on the labeled Train sources and returns the
    /// loss trace. The input width always follows the graph.
    pub fn train(&mut self, cfg: &ModelSection) -> Result<Vec<f64>> {
        let mut model = RgcnModel::new(RgcnConfig {
            input_dim: self.graph.feature_dim(),
            ..cfg.rgcn.clone()
        })?;
        let trace = train_classification(&self.graph, &mut model, cfg.epochs)?;
        self.model = Some(model);
        Ok(trace)
    }
}
