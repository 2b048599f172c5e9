//! Thresholded precision/recall/F-score evaluation.
//!
//! A (pair, relation) instance is predicted positive when its score is
//! strictly above the threshold (0.5 by default). Overall figures are
//! micro-averaged over all instances unless macro averaging is requested.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::PairDataset;
use crate::error::{Error, Result};
use crate::model::RelNet;
use crate::relation::{RelationKind, RelationMask, NUM_RELATIONS};

pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Metrics { precision, recall, f1 }
    }
}

/// Undefined ratios are `None`, never zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub per_kind: [Confusion; NUM_RELATIONS],
}

impl ConfusionCounts {
    pub fn add(&mut self, score: &[f64; NUM_RELATIONS], truth: RelationMask, threshold: f64) {
        for (k, c) in self.per_kind.iter_mut().enumerate() {
            let predicted = score[k] > threshold;
            let actual = truth.bits() >> k & 1 == 1;
            match (predicted, actual) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }

    pub fn merge(mut self, other: &ConfusionCounts) -> Self {
        for (a, b) in self.per_kind.iter_mut().zip(&other.per_kind) {
            a.add(b);
        }
        self
    }

    pub fn micro(&self) -> Confusion {
        let mut all = Confusion::default();
        for c in &self.per_kind {
            all.add(c);
        }
        all
    }

    pub fn get(&self, kind: RelationKind) -> Confusion {
        self.per_kind[kind.bit()]
    }

    pub fn from_scores(scores: &[[f64; NUM_RELATIONS]], truths: &[RelationMask], threshold: f64) -> Self {
        let mut c = ConfusionCounts::default();
        for (s, &t) in scores.iter().zip(truths) {
            c.add(s, t, threshold);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    /// Unweighted mean over the per-kind rows that are reported.
    Macro,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub source: String,
    pub target: String,
    pub pairs: usize,
    pub counts: ConfusionCounts,
    pub averaging: Averaging,
}

impl MetricsReport {
    /// Per-kind rows, skipping kinds with neither true nor predicted
    /// positives.
    pub fn per_kind(&self) -> Vec<(RelationKind, Confusion, Metrics)> {
        RelationKind::ALL
            .iter()
            .map(|&k| (k, self.counts.get(k)))
            .filter(|(_, c)| c.tp + c.fp + c.fn_ > 0)
            .map(|(k, c)| (k, c, c.metrics()))
            .collect()
    }

    pub fn overall(&self) -> Metrics {
        match self.averaging {
            Averaging::Micro => self.counts.micro().metrics(),
            Averaging::Macro => {
                let rows = self.per_kind();
                let mean = |f: fn(&Metrics) -> Option<f64>| {
                    let vals: Vec<f64> = rows.iter().filter_map(|(_, _, m)| f(m)).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                };
                Metrics {
                    precision: mean(|m| m.precision),
                    recall: mean(|m| m.recall),
                    f1: mean(|m| m.f1),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub scores: Vec<[f64; NUM_RELATIONS]>,
}

pub fn evaluate(net: &RelNet, ds: &PairDataset, source: &str, averaging: Averaging) -> Result<Evaluation> {
    evaluate_at(net, ds, source, averaging, THRESHOLD)
}

pub fn evaluate_at(
    net: &RelNet,
    ds: &PairDataset,
    source: &str,
    averaging: Averaging,
    threshold: f64,
) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Invalid(format!("validation set {} is empty", ds.source)));
    }
    check_dims(source, net, ds)?;
    let scores = net.predict(ds)?;
    // scoring above is the parallel part; counting is cheap
    let mut counts = ConfusionCounts::default();
    for (s, e) in scores.iter().zip(&ds.examples) {
        counts.add(s, e.target, threshold);
    }
    Ok(Evaluation {
        report: MetricsReport {
            source: source.to_owned(),
            target: ds.source.clone(),
            pairs: ds.len(),
            counts,
            averaging,
        },
        scores,
    })
}

fn check_dims(source: &str, net: &RelNet, ds: &PairDataset) -> Result<()> {
    if net.input_dim() != ds.input_dim() {
        return Err(Error::Shape(format!(
            "model {source} expects input length {}, validation set {} has {}",
            net.input_dim(),
            ds.source,
            ds.input_dim()
        )));
    }
    Ok(())
}

/// Every model on every validation set; `result[i][j]` is model i on set j.
pub fn cross_evaluate(
    models: &[(String, RelNet)],
    valsets: &[PairDataset],
    averaging: Averaging,
) -> Result<Vec<Vec<Evaluation>>> {
    for (tag, net) in models {
        for ds in valsets {
            check_dims(tag, net, ds)?;
        }
    }
    models
        .iter()
        .map(|(tag, net)| valsets.iter().map(|ds| evaluate(net, ds, tag, averaging)).collect())
        .collect()
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "–".into())
}

pub const CSV_HEADER: &str = "source,target,relation,tp,fp,fn,tn,precision,recall,f1";

/// One `ALL` row and one row per relation kind for each report. Undefined
/// ratios are empty cells.
pub fn reports_to_csv(reports: &[&MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let all_label = match r.averaging {
            Averaging::Micro => "ALL",
            Averaging::Macro => "ALL(macro)",
        };
        let rows =
            std::iter::once((all_label, r.counts.micro(), r.overall())).chain(RelationKind::ALL.iter().map(|&k| {
                let c = r.counts.get(k);
                (k.code(), c, c.metrics())
            }));
        for (label, c, m) in rows {
            let _ = writeln!(
                out,
                "{},{},{label},{},{},{},{},{},{},{}",
                csv_field(&r.source),
                csv_field(&r.target),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                fmt_ratio(m.precision),
                fmt_ratio(m.recall),
                fmt_ratio(m.f1)
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn bold_best(cells: &[Option<f64>]) -> Vec<String> {
    let best = cells.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let bold = cells.len() > 1;
    cells
        .iter()
        .map(|&c| match c {
            Some(v) if bold && format!("{:.2}", v * 100.0) == format!("{:.2}", best * 100.0) => {
                format!("**{}**", fmt_pct(c))
            }
            _ => fmt_pct(c),
        })
        .collect()
}

/// Markdown summary: an overall table with one P/R/F row group per
/// validation set and one column per model (best per row in bold), then a
/// per-relation table for each report.
pub fn reports_to_markdown(reports: &[&MetricsReport]) -> String {
    let sources: Vec<&str> = dedup_in_order(reports.iter().map(|r| r.source.as_str()));
    let targets: Vec<&str> = dedup_in_order(reports.iter().map(|r| r.target.as_str()));
    let find = |s: &str, t: &str| reports.iter().find(|r| r.source == s && r.target == t);

    let mut out = String::new();
    let _ = writeln!(out, "| Validation set | | {} |", sources.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---:|".repeat(sources.len()));
    for t in &targets {
        for (name, pick) in [
            ("P", (|m: Metrics| m.precision) as fn(Metrics) -> Option<f64>),
            ("R", |m: Metrics| m.recall),
            ("F", |m: Metrics| m.f1),
        ] {
            let cells: Vec<Option<f64>> = sources
                .iter()
                .map(|s| find(s, t).and_then(|r| pick(r.overall())))
                .collect();
            let label = if name == "P" { *t } else { "" };
            let _ = writeln!(out, "| {label} | {name} | {} |", bold_best(&cells).join(" | "));
        }
    }

    for r in reports {
        let _ = writeln!(out);
        let _ = writeln!(out, "#### {} on {}", r.source, r.target);
        let _ = writeln!(out);
        let _ = writeln!(out, "| Relation | P | R | F |");
        let _ = writeln!(out, "|---|---:|---:|---:|");
        let overall = r.overall();
        let label = match r.averaging {
            Averaging::Micro => "ALL",
            Averaging::Macro => "ALL (macro)",
        };
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {} |",
            fmt_pct(overall.precision),
            fmt_pct(overall.recall),
            fmt_pct(overall.f1)
        );
        for (k, _, m) in r.per_kind() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                k.code(),
                fmt_pct(m.precision),
                fmt_pct(m.recall),
                fmt_pct(m.f1)
            );
        }
    }
    out
}

fn dedup_in_order<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn emit_report(reports: &[&MetricsReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => reports_to_csv(reports),
        ReportFormat::Markdown => reports_to_markdown(reports),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row of a score dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub src: String,
    pub dst: String,
    pub scores: Vec<f64>,
    pub truth: Vec<u8>,
}

pub fn write_score_dump(ds: &PairDataset, scores: &[[f64; NUM_RELATIONS]], mut out: impl Write) -> std::io::Result<()> {
    for (e, s) in ds.examples.iter().zip(scores) {
        let row = ScoreRow {
            src: e.src.to_string(),
            dst: e.dst.to_string(),
            scores: s.to_vec(),
            truth: e.target.to_target().iter().map(|&t| t as u8).collect(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_score_dump(ds: &PairDataset, scores: &[[f64; NUM_RELATIONS]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_score_dump(ds, scores, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_score_dump(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let row: ScoreRow =
                serde_json::from_str(l).map_err(|e| Error::format(&file, format!("row {}: {e}", n + 1)))?;
            if row.scores.len() != NUM_RELATIONS || row.truth.len() != NUM_RELATIONS {
                return Err(Error::format(
                    &file,
                    format!("row {}: expected 20 scores and 20 bits", n + 1),
                ));
            }
            Ok(row)
        })
        .collect()
}
