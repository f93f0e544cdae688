use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::{majority_label, UserDerivedLabel};
use crate::error::{Error, Result};
use crate::graph::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; 3],
    /// Classes with neither gold nor predicted instances; their F1 counts as 0.
    pub undefined: [bool; 3],
    /// `confusion[gold][predicted]`
    pub confusion: [[usize; 3]; 3],
}

pub fn compute_metrics(predictions: &[usize], gold: &[usize]) -> Result<ClassMetrics> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if let Some(bad) = predictions.iter().chain(gold).find(|&&c| c >= 3) {
        return Err(Error::InvalidArgument(format!("class {bad} outside the 3-point scale")));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (&p, &g) in predictions.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let accuracy = if gold.is_empty() {
        0.0
    } else {
        correct as f64 / gold.len() as f64
    };
    let mut per_class_f1 = [0.0; 3];
    let mut undefined = [false; 3];
    for c in 0..3 {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        if predicted == 0 && actual == 0 {
            undefined[c] = true;
            continue;
        }
        let denom = (predicted + actual) as f64;
        per_class_f1[c] = 2.0 * tp / denom;
    }
    Ok(ClassMetrics {
        accuracy,
        macro_f1: per_class_f1.iter().sum::<f64>() / 3.0,
        per_class_f1,
        undefined,
        confusion,
    })
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_tag: String,
    pub task: Task,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; 3],
    pub undefined_classes: [bool; 3],
    pub users: usize,
    pub sources: usize,
    pub edges: usize,
    pub interactions: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn new(model_tag: &str, task: Task, metrics: &ClassMetrics, seed: u64) -> Self {
        MetricsReport {
            model_tag: model_tag.to_string(),
            task,
            accuracy: metrics.accuracy,
            macro_f1: metrics.macro_f1,
            per_class_f1: metrics.per_class_f1,
            undefined_classes: metrics.undefined,
            users: 0,
            sources: 0,
            edges: 0,
            interactions: 0,
            seed,
        }
    }
}

pub const REPORT_HEADER: &str = "model,task,acc,macro_f1,users;sources,edges,interactions";

pub fn render_report_csv(rows: &[MetricsReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{};{},{},{}",
            r.model_tag.replace(',', " "),
            r.task,
            r.accuracy,
            r.macro_f1,
            r.users,
            r.sources,
            r.edges,
            r.interactions
        );
    }
    out
}

pub fn write_report_csv(rows: &[MetricsReport], path: &Path) -> Result<()> {
    std::fs::write(path, render_report_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("labelings differ in length".into()));
    }
    let n = a.len();
    let pairs = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| pairs(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = row_sum * col_sum / total;
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohesionRow {
    /// `None` when no member has a derivable label.
    pub dominant: Option<usize>,
    pub fraction: Option<f64>,
    pub labeled: usize,
    pub unlabeled: usize,
}

/// Dominant derived label of each community and the share of labeled members
/// carrying it. Members without a label are counted separately.
pub fn cohesiveness_analysis(
    communities: &[Vec<usize>],
    labels: &[UserDerivedLabel],
) -> Result<Vec<CohesionRow>> {
    if communities.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("cohesiveness of an empty community".into()));
    }
    Ok(communities
        .iter()
        .map(|members| {
            let labeled = members.iter().filter(|&&u| labels[u].label.is_some()).count();
            let dominant = majority_label(members, labels);
            let fraction = dominant.map(|d| {
                members.iter().filter(|&&u| labels[u].label == Some(d)).count() as f64 / labeled as f64
            });
            CohesionRow {
                dominant,
                fraction,
                labeled,
                unlabeled: members.len() - labeled,
            }
        })
        .collect())
}

/// Median of the dominant-label fractions; `None` without any defined row.
pub fn median_cohesion(rows: &[CohesionRow]) -> Option<f64> {
    let values: Vec<f64> = rows.iter().filter_map(|r| r.fraction).collect();
    (!values.is_empty()).then(|| SweepSummary::of(&values).median)
}

fn cohesion_cell(task: Task, row: Option<&CohesionRow>) -> String {
    match row {
        Some(CohesionRow {
            dominant: Some(d),
            fraction: Some(f),
            ..
        }) => {
            let name = task.class_name(*d);
            let mut chars = name.chars();
            let cap: String = chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default();
            format!("{cap}, ~{:.0}%", f * 100.0)
        }
        Some(_) => "n/a".into(),
        None => "-".into(),
    }
}

/// Two-column comparison of community cohesion for two runs.
pub fn render_cohesion_table(
    task: Task,
    left: (&str, &[CohesionRow]),
    right: (&str, &[CohesionRow]),
) -> String {
    let mut out = format!("community\t{}\t{}\n", left.0, right.0);
    let n = left.1.len().max(right.1.len());
    for i in 0..n {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            i + 1,
            cohesion_cell(task, left.1.get(i)),
            cohesion_cell(task, right.1.get(i))
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SweepSummary {
    /// Quartiles with linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> SweepSummary {
        assert!(!values.is_empty(), "summary of no values");
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        SweepSummary {
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn constant_prediction_on_balanced_gold() {
        let m = compute_metrics(&[0; 6], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        let expected = (2.0 * (1.0 / 3.0) / (1.0 + 1.0 / 3.0)) / 3.0;
        assert!((m.macro_f1 - expected).abs() < 1e-12);
        assert!((m.macro_f1 - 0.1667).abs() < 1e-4);
    }

    #[test]
    fn undefined_class_is_flagged() {
        let m = compute_metrics(&[0, 1], &[0, 1]).unwrap();
        assert_eq!(m.undefined, [false, false, true]);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(compute_metrics(&[0], &[0, 1]).is_err());
        assert!(compute_metrics(&[3], &[0]).is_err());
    }

    #[test]
    fn ari_identical_and_permuted() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!(ari < 0.0);
    }

    fn labels(classes: &[Option<usize>]) -> Vec<UserDerivedLabel> {
        classes
            .iter()
            .enumerate()
            .map(|(user, &label)| UserDerivedLabel {
                user,
                label,
                counts: [0; 3],
            })
            .collect()
    }

    #[test]
    fn cohesion_examples() {
        let l = labels(&[Some(2), Some(2), Some(2), Some(2), Some(2), Some(1), Some(0), None]);
        let rows = cohesiveness_analysis(&[vec![0, 1, 2], vec![3, 4, 5, 6, 7]], &l).unwrap();
        assert_eq!(rows[0].dominant, Some(2));
        assert_eq!(rows[0].fraction, Some(1.0));
        assert_eq!(rows[1].fraction, Some(0.5));
        assert_eq!(rows[1].unlabeled, 1);
        let table = render_cohesion_table(Task::Bias, ("human", &rows), ("llm", &rows[..1]));
        assert!(table.contains("1\tRight, ~100%\tRight, ~100%"), "{table}");
        assert!(table.contains("2\tRight, ~50%\t-"), "{table}");
    }

    #[test]
    fn sweep_quartiles() {
        let s = SweepSummary::of(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.iqr(), 2.0);
    }

    #[test]
    fn csv_layout() {
        let m = compute_metrics(&[0], &[0]).unwrap();
        let mut r = MetricsReport::new("LLM + Humans", Task::Factuality, &m, 1);
        r.users = 25;
        r.sources = 26;
        r.edges = 367;
        r.interactions = 1;
        let csv = render_report_csv(&[r]);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "LLM + Humans,factuality,1.0000,0.3333,25;26,367,1"
        );
    }
}
