// Acceptance suite: one PASS/FAIL line per criterion, then a summary.
//
// Criteria in EXPECTED_FAILURES are measured and reported exactly like the
// others but do not fail the run while they fail; one that starts passing
// fails the run until it is taken off the list. Any other failure exits
// nonzero.
//
//     cargo test -p ontorel-cli --test acceptance

#[path = "../../core/tests/common/gradcheck.rs"]
mod gradcheck;
#[path = "../../core/tests/common/oracle.rs"]
mod oracle;
#[path = "../../core/tests/common/recount.rs"]
mod recount;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ontorel::dataset::{PairDataset, SplitSpec};
use ontorel::eval::{evaluate_at, save_score_dump, Averaging, ConfusionCounts, Evaluation};
use ontorel::inference::{check_consistency, materialize};
use ontorel::model::{train, RelNet, RelNetConfig};
use ontorel::synthetic::make_synthetic;
use ontorel::RelationKind;

const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const LEARN_BUDGET: Duration = Duration::from_secs(60);
const LEARN_MIN_F: f64 = 0.95;
const RECALL_SEEDS: u64 = 5;

/// Not reproduced on the generated ontologies: they are complete and
/// consistent, and validation pairs are related-only like training pairs,
/// so nothing pushes errors towards false positives. Precision and recall
/// end up within noise of each other and P > R on most seeds.
const EXPECTED_FAILURES: &[&str] = &["recall bias (R >= P)"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn ontorel(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ontorel")).args(args).output().unwrap()
}

// ---- inference ----

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for seed in 0..oracle::CORPUS_SIZE {
        let (n, stmts) = oracle::random_ontology(seed);
        let m = materialize(&oracle::stated_matrix(n, &stmts));
        if let Some(d) = oracle::diff(&m, &oracle::saturate(n, &stmts)) {
            mismatches.push(format!("seed {seed}: {d}"));
        }
    }
    let elapsed = start.elapsed();
    let first = mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default();
    outcome(
        mismatches.is_empty() && elapsed < ORACLE_BUDGET,
        format!(
            "{} ontologies, {} mismatching, {:.2} s (limit {} s){first}",
            oracle::CORPUS_SIZE,
            mismatches.len(),
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        ),
    )
}

fn idempotence_monotonicity() -> Outcome {
    let (mut not_idempotent, mut lost) = (0, 0);
    for seed in 0..oracle::CORPUS_SIZE {
        let (n, stmts) = oracle::random_ontology(seed);
        let stated = oracle::stated_matrix(n, &stmts);
        let once = materialize(&stated);
        if materialize(&once) != once {
            not_idempotent += 1;
        }
        if stated.cells().any(|((i, j), mask)| !mask.is_subset(once.get(i, j))) {
            lost += 1;
        }
    }
    outcome(
        not_idempotent == 0 && lost == 0,
        format!(
            "{} ontologies, {not_idempotent} not idempotent, {lost} losing stated facts",
            oracle::CORPUS_SIZE
        ),
    )
}

fn inverse_consistency() -> Outcome {
    let (mut violations, mut cells) = (0, 0);
    for seed in 0..oracle::CORPUS_SIZE {
        let (n, stmts) = oracle::random_ontology(seed);
        let m = materialize(&oracle::stated_matrix(n, &stmts));
        violations += oracle::inverse_violations(&m) + check_consistency(&m).len();
        cells += m.nonzero_cells();
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {cells} nonzero cells"),
    )
}

// ---- training ----

fn gradient_check() -> Outcome {
    let sweep = gradcheck::sweep();
    let (seed, hidden, worst) = sweep
        .iter()
        .max_by(|a, b| a.2.rel_error.total_cmp(&b.2.rel_error))
        .unwrap();
    outcome(
        sweep.iter().all(|(_, _, w)| w.rel_error <= gradcheck::TOLERANCE),
        format!(
            "{} nets, worst relative error {:.2e} (seed {seed}, hidden {hidden:?}, limit {:.0e})",
            sweep.len(),
            worst.rel_error,
            gradcheck::TOLERANCE
        ),
    )
}

struct SyntheticRun {
    validation: PairDataset,
    net: RelNet,
    eval: Evaluation,
    elapsed: Duration,
}

fn synthetic_run(seed: u64) -> SyntheticRun {
    let start = Instant::now();
    let s = make_synthetic(200, 32, seed).unwrap();
    let d = s.split(&SplitSpec::new(0.3, seed)).unwrap();
    let mut cfg = RelNetConfig::new(64, vec![64]);
    cfg.learning_rate = 1e-3;
    cfg.epochs = 200;
    cfg.seed = seed;
    let mut net = RelNet::init(cfg).unwrap();
    train(&mut net, &d.train).unwrap();
    let eval = evaluate_at(&net, &d.validation, "relnet", Averaging::Micro, 0.5).unwrap();
    SyntheticRun {
        validation: d.validation,
        net,
        eval,
        elapsed: start.elapsed(),
    }
}

fn learnability(run: &SyntheticRun) -> Outcome {
    let f = run.eval.report.overall().f1.unwrap_or(0.0);
    outcome(
        f >= LEARN_MIN_F && run.elapsed < LEARN_BUDGET,
        format!(
            "held-out micro-F {f:.4} (min {LEARN_MIN_F}), {:.2} s (limit {} s)",
            run.elapsed.as_secs_f64(),
            LEARN_BUDGET.as_secs()
        ),
    )
}

fn recall_bias(runs: &[SyntheticRun]) -> Outcome {
    let mut parts = Vec::new();
    let mut held = 0;
    let mut pooled = ConfusionCounts::default();
    for (seed, r) in runs.iter().enumerate() {
        let m = r.eval.report.overall();
        let (p, rc) = (m.precision.unwrap_or(0.0), m.recall.unwrap_or(0.0));
        if rc >= p {
            held += 1;
        }
        parts.push(format!("seed {seed} P {p:.4} R {rc:.4}"));
        pooled = pooled.merge(&r.eval.report.counts);
    }
    let m = pooled.micro().metrics();
    outcome(
        held == runs.len(),
        format!(
            "R >= P on {held}/{} seeds [{}]; pooled P {:.4} R {:.4}",
            runs.len(),
            parts.join(", "),
            m.precision.unwrap_or(0.0),
            m.recall.unwrap_or(0.0)
        ),
    )
}

// ---- metrics ----

/// Per-relation (tp, fp, fn, tn) from a report CSV written by `eval`.
fn csv_counts(path: &Path) -> [[u64; 4]; 20] {
    let text = fs::read_to_string(path).unwrap();
    let mut out = [[0u64; 4]; 20];
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if let Ok(k) = cols[2].parse::<RelationKind>() {
            for (slot, col) in out[k as usize].iter_mut().zip(&cols[3..7]) {
                *slot = col.parse().unwrap();
            }
        }
    }
    out
}

fn metrics_recount(runs: &[SyntheticRun], pipeline_dir: &Path) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (mut checked, mut mismatched) = (0, Vec::new());
    for (seed, r) in runs.iter().enumerate() {
        for threshold in [0.3, 0.5, 0.7] {
            let ev = if threshold == 0.5 {
                r.eval.clone()
            } else {
                evaluate_at(&r.net, &r.validation, "relnet", Averaging::Micro, threshold).unwrap()
            };
            let path = dir.path().join(format!("{seed}-{threshold}.jsonl"));
            save_score_dump(&r.validation, &ev.scores, &path).unwrap();
            checked += 1;
            if recount::recount(&path, threshold) != recount::harness_counts(&ev.report.counts) {
                mismatched.push(format!("seed {seed} @ {threshold}"));
            }
        }
    }
    for run in ["a", "b"] {
        let d = pipeline_dir.join(run);
        checked += 1;
        if recount::recount(&d.join("scores.jsonl"), 0.5) != csv_counts(&d.join("report.csv")) {
            mismatched.push(format!("pipeline run {run}"));
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{checked} evaluations recounted, {} mismatching {mismatched:?}",
            mismatched.len()
        ),
    )
}

// ---- CLI ----

fn pipeline_determinism(runs: &Path) -> Outcome {
    let config = runs.join("tiny.toml");
    let ontology = fixture("tiny.nt");
    fs::write(
        &config,
        format!(
            "seed = 0\n[source]\nontology = {:?}\n[embedding]\ndim = 16\n[model]\nhidden_sizes = [16]\nepochs = 50\nbatch_size = 8\n",
            ontology.display().to_string()
        ),
    )
    .unwrap();
    for run in ["a", "b"] {
        let out = runs.join(run);
        let o = ontorel(&[
            "pipeline",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        if !o.status.success() {
            return outcome(
                false,
                format!("run {run} failed: {}", String::from_utf8_lossy(&o.stderr)),
            );
        }
    }
    let listing = |d: &Path| {
        let mut names: Vec<String> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    };
    let names = listing(&runs.join("a"));
    if names != listing(&runs.join("b")) {
        return outcome(false, "runs produced different file sets");
    }
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(runs.join("a").join(n)).unwrap() != fs::read(runs.join("b").join(n)).unwrap())
        .collect();
    let required = [
        "train.jsonl",
        "val.jsonl",
        "model.json",
        "report.csv",
        "report.md",
        "scores.jsonl",
    ];
    let missing: Vec<&&str> = required.iter().filter(|r| !names.iter().any(|n| n == **r)).collect();
    outcome(
        differing.is_empty() && missing.is_empty(),
        format!(
            "{} files compared across two seed-0 runs, {} differing {differing:?}, missing {missing:?}",
            names.len(),
            differing.len()
        ),
    )
}

fn fixture_golden() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_owned();
    let o = ontorel(&[
        "materialize",
        "--ontology",
        fixture("tiny.nt").to_str().unwrap(),
        "--out-index",
        &p("index.tsv"),
        "--out-matrix",
        &p("matrix.tsv"),
        "--out-counts",
        &p("counts.tsv"),
    ]);
    if !o.status.success() {
        return outcome(
            false,
            format!("materialize failed: {}", String::from_utf8_lossy(&o.stderr)),
        );
    }
    let golden = fs::read_to_string(fixture("tiny.counts.tsv")).unwrap();
    let got = fs::read_to_string(p("counts.tsv")).unwrap();
    outcome(
        got == golden,
        if got == golden {
            "counts table identical to the golden file".to_owned()
        } else {
            format!("counts table differs:\n{got}")
        },
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let pipeline_runs = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name, o: Outcome| {
        let status = match (o.pass, EXPECTED_FAILURES.contains(&name)) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (expected)",
        };
        println!("{status}  {name}: {}", o.detail);
        results.push((name, o));
    };

    record("inference oracle equivalence", oracle_equivalence());
    record("fixpoint idempotence and monotonicity", idempotence_monotonicity());
    record("matrix inverse consistency", inverse_consistency());
    record("gradient check", gradient_check());
    let runs: Vec<SyntheticRun> = (0..RECALL_SEEDS).map(synthetic_run).collect();
    record("synthetic learnability", learnability(&runs[0]));
    record("recall bias (R >= P)", recall_bias(&runs));
    let determinism = pipeline_determinism(pipeline_runs.path());
    record("metrics correctness", metrics_recount(&runs, pipeline_runs.path()));
    record("pipeline determinism", determinism);
    record("fixture golden", fixture_golden());

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    let unexpected: Vec<&str> = failed
        .iter()
        .copied()
        .filter(|n| !EXPECTED_FAILURES.contains(n))
        .collect();
    let fixed: Vec<&str> = EXPECTED_FAILURES
        .iter()
        .copied()
        .filter(|n| !failed.contains(n))
        .collect();
    println!(
        "\nacceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
    }
    let expected: Vec<&str> = failed
        .iter()
        .copied()
        .filter(|n| EXPECTED_FAILURES.contains(n))
        .collect();
    if !expected.is_empty() {
        println!("expected failures: {}", expected.join(", "));
    }
    if !fixed.is_empty() {
        println!("now passing, remove from EXPECTED_FAILURES: {}", fixed.join(", "));
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
}
