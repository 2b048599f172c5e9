// Brute-force confusion recount from a score dump file.

#![allow(dead_code)]

use std::path::Path;

/// (tp, fp, fn, tn) per relation bit, from raw JSON rows.
pub fn recount(path: &Path, threshold: f64) -> [[u64; 4]; 20] {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = [[0u64; 4]; 20];
    for line in text.lines().filter(|l| !l.is_empty()) {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let scores = row["scores"].as_array().unwrap();
        let truth = row["truth"].as_array().unwrap();
        assert_eq!((scores.len(), truth.len()), (20, 20));
        for k in 0..20 {
            let predicted = scores[k].as_f64().unwrap() > threshold;
            let actual = truth[k].as_u64().unwrap() == 1;
            let slot = match (predicted, actual) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            out[k][slot] += 1;
        }
    }
    out
}

pub fn harness_counts(c: &ontorel::eval::ConfusionCounts) -> [[u64; 4]; 20] {
    let mut out = [[0u64; 4]; 20];
    for (k, x) in c.per_kind.iter().enumerate() {
        out[k] = [x.tp, x.fp, x.fn_, x.tn];
    }
    out
}
