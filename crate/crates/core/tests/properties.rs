use std::collections::BTreeSet;
use std::io::Cursor;

use mediaprof_core::eval::compute_metrics;
use mediaprof_core::graph::read_graph;
use mediaprof_core::ingest::AppConfig;
use mediaprof_core::llm::parse_membership_response;
use mediaprof_core::rgcn::read_checkpoint;
use mediaprof_core::session::read_events;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Accuracy and macro-F1 from precision and recall of a confusion matrix.
fn oracle(pred: &[usize], gold: &[usize]) -> (f64, f64) {
    let n = gold.len();
    let mut m = [[0usize; 3]; 3];
    for i in 0..n {
        m[gold[i]][pred[i]] += 1;
    }
    let acc = if n == 0 {
        0.0
    } else {
        (m[0][0] + m[1][1] + m[2][2]) as f64 / n as f64
    };
    let mut f1 = 0.0;
    for c in 0..3 {
        let tp = m[c][c] as f64;
        let col = (m[0][c] + m[1][c] + m[2][c]) as f64;
        let row = (m[c][0] + m[c][1] + m[c][2]) as f64;
        let precision = if col > 0.0 { tp / col } else { 0.0 };
        let recall = if row > 0.0 { tp / row } else { 0.0 };
        if precision + recall > 0.0 {
            f1 += 2.0 * precision * recall / (precision + recall);
        }
    }
    (acc, f1 / 3.0)
}

#[test]
fn metrics_match_confusion_matrix_oracle_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for case in 0..1000 {
        let n = rng.random_range(0..40);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let got = compute_metrics(&pred, &gold).unwrap();
        let (acc, f1) = oracle(&pred, &gold);
        assert!((got.accuracy - acc).abs() < 1e-12, "case {case}");
        assert!((got.macro_f1 - f1).abs() < 1e-12, "case {case}");
    }
}

proptest! {
    #[test]
    fn membership_parser_partitions_the_query(raw in ".{0,200}", queried in prop::collection::vec(0usize..50, 0..12)) {
        let v = parse_membership_response(&raw, &queried);
        let acc: BTreeSet<usize> = v.accepted.iter().copied().collect();
        let rej: BTreeSet<usize> = v.rejected.iter().copied().collect();
        let all: BTreeSet<usize> = queried.iter().copied().collect();
        prop_assert!(acc.is_disjoint(&rej));
        prop_assert_eq!(acc.union(&rej).copied().collect::<BTreeSet<_>>(), all);
        prop_assert_eq!(v.accepted.len() + v.rejected.len(), acc.len() + rej.len());
    }

    #[test]
    fn membership_parser_reads_generated_answers(
        queried in prop::collection::btree_set(0usize..500, 1..15),
        mask in prop::collection::vec(any::<bool>(), 15),
    ) {
        let queried: Vec<usize> = queried.into_iter().collect();
        let pos: Vec<usize> = queried.iter().enumerate().filter(|(i, _)| mask[*i]).map(|(_, &u)| u).collect();
        let neg: Vec<usize> = queried.iter().enumerate().filter(|(i, _)| !mask[*i]).map(|(_, &u)| u).collect();
        let fmt = |v: &[usize]| v.iter().map(|u| format!("User {u}")).collect::<Vec<_>>().join(", ");
        let raw = format!("Sure.\n{};;;;{}\n", fmt(&pos), fmt(&neg));
        let v = parse_membership_response(&raw, &queried);
        prop_assert_eq!(v.accepted, pos);
        prop_assert_eq!(v.rejected, neg);
    }

    #[test]
    fn graph_reader_never_panics(text in "((node|feat|edge|label|end|#)[ \\t:a-z0-9.,-]{0,30}\n){0,12}") {
        let _ = read_graph(Cursor::new(text.as_bytes()), "fuzz");
    }

    #[test]
    fn event_reader_never_panics(text in "(\\{[ -~]{0,60}\\}?\n){0,6}") {
        let _ = read_events(Cursor::new(text.as_bytes()), "fuzz");
    }

    #[test]
    fn checkpoint_reader_never_panics(mut bytes in prop::collection::vec(any::<u8>(), 0..200), magic in any::<bool>()) {
        if magic && bytes.len() >= 4 {
            bytes[..4].copy_from_slice(b"MPCK");
        }
        let _ = read_checkpoint(Cursor::new(bytes));
    }

    #[test]
    fn config_reader_never_panics(text in "(\\[[a-z.]{0,12}\\]\n|[a-z_]{1,10} = [0-9a-z\"._-]{0,8}\n){0,8}") {
        let _ = AppConfig::from_toml(&text, "fuzz.toml");
    }
}
