//! Ingestion of the documented file formats, synthetic data and configuration.

mod config;
mod files;
mod synth;
mod texts;
mod workspace;

pub use config::{
    parse_population, AppConfig, ClusteringSection, EvalSection, IngestSection, ModelSection,
    ServiceSection, SessionSection,
};
pub use files::{
    ingest, ingest_dir, Dataset, IngestRecordSet, NodeRow, PeriodMap, ARTICLES_FILE, EDGES_FILE,
    LABELS_FILE, PROFILES_FILE, SOURCES_FILE, USERS_FILE,
};
pub use synth::{generate_synthetic, perspective_name, period_event, SyntheticConfig, SyntheticData};
pub use texts::{TextStore, UserText, MAX_PROFILE_TWEETS};
pub use workspace::{
    Workspace, SCRIPT_FILE, WORK_ARTICLES_FILE, WORK_GRAPH_FILE, WORK_MODEL_FILE, WORK_PROFILES_FILE,
};
