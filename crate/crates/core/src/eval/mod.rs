//! Metrics, baselines and the community cohesion analysis.

mod baselines;
mod metrics;

pub use baselines::{
    render_sweep, run_graph_only_baseline, run_llm_only_baseline, summarize_sweep, BaselineRun,
    GraphOnlyConfig, SweepRow, SWEEP_HEADER,
};

pub use metrics::{
    adjusted_rand_index, cohesiveness_analysis, compute_metrics, median_cohesion,
    render_cohesion_table, render_report_csv, write_report_csv, ClassMetrics, CohesionRow,
    MetricsReport, SweepSummary, REPORT_HEADER,
};

use crate::error::Result;
use crate::graph::{HeteroGraph, NodeId, Split, Task};
use crate::rgcn::{classify_sources, RgcnModel};

/// Accuracy and macro-F1 of both heads over the labeled sources of `split`.
pub fn evaluate_split(
    g: &HeteroGraph,
    model: &RgcnModel,
    split: Split,
    model_tag: &str,
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    let preds = classify_sources(g, model, Some(split))?;
    let labeled: Vec<_> = preds
        .iter()
        .filter_map(|p| g.label(p.source).map(|l| (p, l)))
        .collect();
    Task::ALL
        .iter()
        .map(|&task| {
            let predicted: Vec<usize> = labeled.iter().map(|(p, _)| p.class(task)).collect();
            let gold: Vec<usize> = labeled.iter().map(|(_, l)| l.class(task)).collect();
            let m = compute_metrics(&predicted, &gold)?;
            Ok(MetricsReport::new(model_tag, task, &m, seed))
        })
        .collect()
}

/// Labeled sources of `split`, for callers that need the gold list.
pub fn labeled_in_split(g: &HeteroGraph, split: Split) -> Vec<usize> {
    g.labels()
        .keys()
        .copied()
        .filter(|&s| g.split(NodeId::source(s)) == Some(split))
        .collect()
}
