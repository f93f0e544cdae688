pub mod error;
pub mod graph;
pub mod community;
pub mod eval;
pub mod ingest;
pub mod llm;
pub mod rgcn;
pub mod session;

pub use error::{Error, Result};
