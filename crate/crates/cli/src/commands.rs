//! The individual subcommands. Each `*_stage` function describes a stage for
//! the manifest machinery and each `do_*` function does the work, so the
//! pipeline can reuse both with its own file layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ontorel::dataset::{build_split, PairDataset, SplitSpec};
use ontorel::embedding::{self, EmbeddingTable};
use ontorel::eval::{self, Averaging, Evaluation, MetricsReport, ReportFormat};
use ontorel::inference;
use ontorel::model::{self, RelNet, RelNetConfig};
use ontorel::ntriples::{ingest_file, IngestOptions};
use ontorel::store::{EntityIndex, Ontology, RelationMatrix};
use serde_json::json;

use crate::manifest::{manifest_path_for, Stage};
use crate::{
    BuildDatasetArgs, CliError, CliResult, CountsArgs, CrossEvalArgs, EvalArgs, MaterializeArgs, PseudoEmbedArgs,
    RenderTextArgs, TrainArgs,
};

const MAX_REPORTED_PARSE_ERRORS: usize = 10;

/// Runs `body` unless the stage is up to date; returns whether it ran.
pub fn run_stage(stage: &Stage, force: bool, body: impl FnOnce() -> CliResult) -> CliResult<bool> {
    if !force && stage.up_to_date()? {
        eprintln!("{}: up to date, skipped", stage.name);
        return Ok(false);
    }
    for (_, out) in &stage.outputs {
        ensure_parent(out)?;
    }
    ensure_parent(&stage.manifest_path)?;
    body()?;
    stage.write_manifest()?;
    Ok(true)
}

fn ensure_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}

/// How a dataset file refers to its embedding file: the bare file name when
/// both sit in one directory, otherwise an absolute path.
pub fn embedding_ref(dataset: &Path, embeddings: &Path) -> CliResult<String> {
    let canon = |p: &Path| p.canonicalize().map_err(|e| CliError::io(p, e));
    let emb = canon(embeddings)?;
    let dataset_dir = match dataset.parent() {
        Some(d) if !d.as_os_str().is_empty() => canon(d)?,
        _ => canon(Path::new("."))?,
    };
    if emb.parent() == Some(dataset_dir.as_path()) {
        Ok(emb.file_name().unwrap().to_string_lossy().into_owned())
    } else {
        Ok(emb.display().to_string())
    }
}

/// The embedding file a dataset uses: `override_path` if given, else the one
/// named in its manifest, relative to the dataset's directory.
pub fn resolve_embeddings(dataset: &Path, override_path: Option<&Path>) -> CliResult<PathBuf> {
    if let Some(p) = override_path {
        return Ok(p.to_path_buf());
    }
    let manifest = PairDataset::read_manifest(dataset)?;
    let named = PathBuf::from(&manifest.embedding_file);
    if named.is_absolute() {
        Ok(named)
    } else {
        Ok(dataset.parent().unwrap_or(Path::new("")).join(named))
    }
}

// ---- materialize ----

pub fn materialize_stage<'a>(
    ontology: &Path,
    index: &Path,
    matrix: &Path,
    counts: &Path,
    error_cap: usize,
    manifest_path: PathBuf,
) -> Stage<'a> {
    Stage {
        name: "materialize",
        config: json!({ "error_cap": error_cap }),
        inputs: vec![("ontology", ontology.to_path_buf())],
        outputs: vec![
            ("index", index.to_path_buf()),
            ("matrix", matrix.to_path_buf()),
            ("counts", counts.to_path_buf()),
        ],
        manifest_path,
    }
}

pub fn do_materialize(ontology: &Path, index: &Path, matrix: &Path, counts: &Path, error_cap: usize) -> CliResult {
    let ingested = ingest_file(ontology, &IngestOptions { error_cap })?;
    let s = &ingested.summary;
    for e in s.errors.iter().take(MAX_REPORTED_PARSE_ERRORS) {
        eprintln!("warning: {}: {e}", ontology.display());
    }
    if s.errors.len() > MAX_REPORTED_PARSE_ERRORS {
        eprintln!(
            "warning: {} more malformed lines",
            s.errors.len() - MAX_REPORTED_PARSE_ERRORS
        );
    }
    let ont = Ontology::from_ingested(&ingested);
    if ont.index.is_empty() {
        eprintln!(
            "warning: {} holds no entities; writing an empty matrix",
            ontology.display()
        );
    }
    let saturated = inference::materialize(&ont.matrix);
    ont.index.write(index)?;
    saturated.write(matrix, true)?;
    write_file(counts, saturated.counts_table())?;
    eprintln!(
        "materialize: {} statements, {} malformed, {} blank-node relation statements, {} entities, {} related pairs",
        s.statements,
        s.errors.len(),
        s.blank_node_statements,
        ont.index.len(),
        saturated.nonzero_cells()
    );
    Ok(())
}

pub fn materialize(a: &MaterializeArgs) -> CliResult {
    let counts = a
        .out_counts
        .clone()
        .unwrap_or_else(|| a.out_matrix.with_extension("counts.tsv"));
    let stage = materialize_stage(
        &a.ontology,
        &a.out_index,
        &a.out_matrix,
        &counts,
        a.error_cap,
        manifest_path_for(&a.out_matrix),
    );
    run_stage(&stage, a.common.force, || {
        do_materialize(&a.ontology, &a.out_index, &a.out_matrix, &counts, a.error_cap)
    })?;
    Ok(())
}

pub fn counts(a: &CountsArgs) -> CliResult {
    let (matrix, materialized) = RelationMatrix::read(&a.matrix)?;
    if !materialized {
        eprintln!(
            "warning: {} is not materialized; counting stated relations only",
            a.matrix.display()
        );
    }
    let table = matrix.counts_table();
    match &a.out {
        Some(out) => {
            ensure_parent(out)?;
            write_file(out, table)
        }
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

// ---- texts and embeddings ----

pub fn render_text_stage<'a>(index: &Path, out: &Path, manifest_path: PathBuf) -> Stage<'a> {
    Stage {
        name: "render-text",
        config: json!({}),
        inputs: vec![("index", index.to_path_buf())],
        outputs: vec![("texts", out.to_path_buf())],
        manifest_path,
    }
}

pub fn do_render_text(index: &Path, out: &Path) -> CliResult {
    let index = EntityIndex::read(index)?;
    let texts = embedding::render_all(&index)?;
    let mut buf = Vec::new();
    embedding::write_texts(&texts, &mut buf).map_err(|e| CliError::io(out, e))?;
    write_file(out, buf)
}

pub fn render_text(a: &RenderTextArgs) -> CliResult {
    let stage = render_text_stage(&a.index, &a.out, manifest_path_for(&a.out));
    run_stage(&stage, a.common.force, || do_render_text(&a.index, &a.out))?;
    Ok(())
}

pub fn pseudo_embed_stage<'a>(texts: &Path, dim: usize, seed: u64, out: &Path, manifest_path: PathBuf) -> Stage<'a> {
    Stage {
        name: "pseudo-embed",
        config: json!({ "provider": "pseudo", "dim": dim, "seed": seed }),
        inputs: vec![("texts", texts.to_path_buf())],
        outputs: vec![("embeddings", out.to_path_buf())],
        manifest_path,
    }
}

pub fn do_pseudo_embed(texts: &Path, dim: usize, seed: u64, out: &Path) -> CliResult {
    let texts = embedding::read_texts(texts)?;
    let table = embedding::pseudo_embed(&texts, dim, seed)?;
    table.write(out)?;
    Ok(())
}

pub fn pseudo_embed(a: &PseudoEmbedArgs) -> CliResult {
    let stage = pseudo_embed_stage(&a.texts, a.dim, a.seed, &a.out, manifest_path_for(&a.out));
    run_stage(&stage, a.common.force, || {
        do_pseudo_embed(&a.texts, a.dim, a.seed, &a.out)
    })?;
    Ok(())
}

// ---- datasets ----

pub struct DatasetPaths<'p> {
    pub index: &'p Path,
    pub matrix: &'p Path,
    pub embeddings: &'p Path,
    pub train: &'p Path,
    pub validation: &'p Path,
}

pub fn build_dataset_stage<'a>(p: &DatasetPaths, spec: &SplitSpec, source: &str, manifest_path: PathBuf) -> Stage<'a> {
    Stage {
        name: "build-dataset",
        config: json!({
            "val_fraction": spec.val_fraction,
            "seed": spec.seed,
            "cap": spec.cap,
            "source": source,
        }),
        inputs: vec![
            ("index", p.index.to_path_buf()),
            ("matrix", p.matrix.to_path_buf()),
            ("embeddings", p.embeddings.to_path_buf()),
        ],
        outputs: vec![
            ("train", p.train.to_path_buf()),
            ("validation", p.validation.to_path_buf()),
        ],
        manifest_path,
    }
}

pub fn do_build_dataset(p: &DatasetPaths, spec: &SplitSpec, source: &str) -> CliResult {
    spec.validate()?;
    let index = EntityIndex::read(p.index)?;
    let (mut matrix, materialized) = RelationMatrix::read(p.matrix)?;
    if matrix.n() > index.len() {
        return Err(CliError::config(format!(
            "matrix {} has {} entities, index {} only {}",
            p.matrix.display(),
            matrix.n(),
            p.index.display(),
            index.len()
        )));
    }
    if !materialized {
        eprintln!(
            "warning: {} is not materialized; saturating it first",
            p.matrix.display()
        );
        inference::materialize_in_place(&mut matrix);
    }
    let embeddings = EmbeddingTable::load(p.embeddings)?;
    let split = build_split(&matrix, &embeddings, &index, spec, source)?;
    for (ds, path) in [(&split.train, p.train), (&split.validation, p.validation)] {
        ds.write(path, &embedding_ref(path, p.embeddings)?, spec.seed)?;
    }
    eprintln!(
        "build-dataset: {} train entities / {} pairs, {} validation entities / {} pairs",
        split.split.train.len(),
        split.train.len(),
        split.split.validation.len(),
        split.validation.len()
    );
    Ok(())
}

pub fn build_dataset(a: &BuildDatasetArgs) -> CliResult {
    let spec = SplitSpec {
        val_fraction: a.val_fraction,
        seed: a.seed,
        cap: a.cap,
    };
    let source = a.source.clone().unwrap_or_else(|| file_stem(&a.index));
    let paths = DatasetPaths {
        index: &a.index,
        matrix: &a.matrix,
        embeddings: &a.embeddings,
        train: &a.out_train,
        validation: &a.out_val,
    };
    let stage = build_dataset_stage(&paths, &spec, &source, manifest_path_for(&a.out_train));
    run_stage(&stage, a.common.force, || do_build_dataset(&paths, &spec, &source))?;
    Ok(())
}

pub fn load_dataset(path: &Path, embeddings: &Path) -> CliResult<PairDataset> {
    let table = EmbeddingTable::load(embeddings)?;
    Ok(PairDataset::load(path, &table)?.0)
}

// ---- training ----

pub fn train_stage<'a>(
    dataset: &Path,
    embeddings: &Path,
    config: &RelNetConfig,
    out: &Path,
    loss_trace: Option<&Path>,
    manifest_path: PathBuf,
) -> Stage<'a> {
    let mut outputs = vec![("model", out.to_path_buf())];
    if let Some(t) = loss_trace {
        outputs.push(("loss_trace", t.to_path_buf()));
    }
    Stage {
        name: "train",
        config: serde_json::to_value(config).expect("config serializes"),
        inputs: vec![
            ("train", dataset.to_path_buf()),
            ("embeddings", embeddings.to_path_buf()),
        ],
        outputs,
        manifest_path,
    }
}

/// The network config for a dataset: `input_dim` comes from the dataset
/// manifest, everything else from `template`.
pub fn resolve_net_config(dataset: &Path, template: &RelNetConfig) -> CliResult<RelNetConfig> {
    let manifest = PairDataset::read_manifest(dataset)?;
    let cfg = RelNetConfig {
        input_dim: 2 * manifest.dim,
        ..template.clone()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn do_train(
    dataset: &Path,
    embeddings: &Path,
    config: &RelNetConfig,
    out: &Path,
    loss_trace: Option<&Path>,
) -> CliResult {
    let ds = load_dataset(dataset, embeddings)?;
    let mut net = RelNet::init(config.clone())?;
    let report = model::train(&mut net, &ds)?;
    net.save(out)?;
    if let Some(path) = loss_trace {
        let mut text = String::from("epoch\tloss\n");
        for (i, l) in report.losses.iter().enumerate() {
            writeln!(text, "{}\t{l}", i + 1).unwrap();
        }
        write_file(path, text)?;
    }
    match report.losses.last() {
        Some(l) => eprintln!(
            "train: {} examples, {} epochs, final loss {l:.6}",
            ds.len(),
            report.losses.len()
        ),
        None => eprintln!("train: 0 epochs requested; wrote the initial network"),
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult {
    let embeddings = resolve_embeddings(&a.train, a.embeddings.as_deref())?;
    let mut template = RelNetConfig::new(0, a.hidden.clone());
    template.learning_rate = a.learning_rate;
    template.epochs = a.epochs;
    template.batch_size = a.batch_size;
    template.seed = a.seed;
    let config = resolve_net_config(&a.train, &template)?;
    let stage = train_stage(
        &a.train,
        &embeddings,
        &config,
        &a.out,
        a.loss_trace.as_deref(),
        manifest_path_for(&a.out),
    );
    run_stage(&stage, a.common.force, || {
        do_train(&a.train, &embeddings, &config, &a.out, a.loss_trace.as_deref())
    })?;
    Ok(())
}

// ---- evaluation ----

pub struct EvalOutputs {
    pub csv: PathBuf,
    pub markdown: PathBuf,
    pub scores: PathBuf,
}

impl EvalOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        EvalOutputs {
            csv: dir.join("report.csv"),
            markdown: dir.join("report.md"),
            scores: dir.join("scores.jsonl"),
        }
    }
}

pub fn eval_stage<'a>(
    model: &Path,
    dataset: &Path,
    embeddings: &Path,
    tag: &str,
    averaging: Averaging,
    out: &EvalOutputs,
    manifest_path: PathBuf,
) -> Stage<'a> {
    Stage {
        name: "eval",
        config: json!({ "tag": tag, "averaging": averaging, "threshold": 0.5 }),
        inputs: vec![
            ("model", model.to_path_buf()),
            ("dataset", dataset.to_path_buf()),
            ("embeddings", embeddings.to_path_buf()),
        ],
        outputs: vec![
            ("csv", out.csv.clone()),
            ("markdown", out.markdown.clone()),
            ("scores", out.scores.clone()),
        ],
        manifest_path,
    }
}

fn summary_line(r: &MetricsReport) -> String {
    let m = r.overall();
    let f = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
    format!(
        "{} on {} ({} pairs): P={} R={} F={}",
        r.source,
        r.target,
        r.pairs,
        f(m.precision),
        f(m.recall),
        f(m.f1)
    )
}

pub fn do_eval(
    model: &Path,
    dataset: &Path,
    embeddings: &Path,
    tag: &str,
    averaging: Averaging,
    out: &EvalOutputs,
) -> CliResult<Evaluation> {
    let net = RelNet::load(model)?;
    let ds = load_dataset(dataset, embeddings)?;
    let ev = eval::evaluate(&net, &ds, tag, averaging)?;
    eval::emit_report(&[&ev.report], ReportFormat::Csv, &out.csv)?;
    eval::emit_report(&[&ev.report], ReportFormat::Markdown, &out.markdown)?;
    eval::save_score_dump(&ds, &ev.scores, &out.scores)?;
    println!("{}", summary_line(&ev.report));
    Ok(ev)
}

fn averaging(macro_average: bool) -> Averaging {
    if macro_average {
        Averaging::Macro
    } else {
        Averaging::Micro
    }
}

pub fn eval(a: &EvalArgs) -> CliResult {
    let embeddings = resolve_embeddings(&a.dataset, a.embeddings.as_deref())?;
    let tag = a.tag.clone().unwrap_or_else(|| file_stem(&a.model));
    let out = EvalOutputs::in_dir(&a.out);
    let avg = averaging(a.macro_average);
    let stage = eval_stage(
        &a.model,
        &a.dataset,
        &embeddings,
        &tag,
        avg,
        &out,
        a.out.join("eval.manifest.json"),
    );
    run_stage(&stage, a.common.force, || {
        do_eval(&a.model, &a.dataset, &embeddings, &tag, avg, &out).map(drop)
    })?;
    Ok(())
}

/// `tag=path`, or a bare path tagged with its file stem.
pub fn parse_model_spec(spec: &str) -> CliResult<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((tag, path)) if !tag.is_empty() && !path.is_empty() => Ok((tag.to_owned(), PathBuf::from(path))),
        Some(_) => Err(CliError::config(format!("bad model spec {spec:?}; expected tag=path"))),
        None => {
            let path = PathBuf::from(spec);
            Ok((file_stem(&path), path))
        }
    }
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Precision, recall and F-score matrices, one block each: rows are models,
/// columns are validation sets.
pub fn cross_matrix_csv(grid: &[Vec<Evaluation>]) -> String {
    let targets: Vec<&str> = grid
        .first()
        .map(|row| row.iter().map(|e| e.report.target.as_str()).collect())
        .unwrap_or_default();
    let mut out = String::from("metric,model");
    for t in &targets {
        write!(out, ",{t}").unwrap();
    }
    out.push('\n');
    type Pick = fn(&eval::Metrics) -> Option<f64>;
    let metrics: [(&str, Pick); 3] = [
        ("precision", |m| m.precision),
        ("recall", |m| m.recall),
        ("f1", |m| m.f1),
    ];
    for (name, get) in metrics {
        for row in grid {
            write!(out, "{name},{}", row[0].report.source).unwrap();
            for e in row {
                let v = get(&e.report.overall()).map(|v| format!("{v:.6}")).unwrap_or_default();
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn cross_eval(a: &CrossEvalArgs) -> CliResult {
    let models: Vec<(String, PathBuf)> = a.models.iter().map(|s| parse_model_spec(s)).collect::<CliResult<_>>()?;
    let emb_paths: Vec<PathBuf> = a
        .valsets
        .iter()
        .map(|v| resolve_embeddings(v, None))
        .collect::<CliResult<_>>()?;
    let avg = averaging(a.macro_average);

    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    for (tag, path) in &models {
        inputs.push((format!("model:{tag}"), path.clone()));
    }
    for (i, (v, e)) in a.valsets.iter().zip(&emb_paths).enumerate() {
        inputs.push((format!("valset:{i}"), v.clone()));
        inputs.push((format!("embeddings:{i}"), e.clone()));
    }
    let role_names: Vec<String> = inputs.iter().map(|(r, _)| r.clone()).collect();
    let stage = Stage {
        name: "cross-eval",
        config: json!({
            "models": models.iter().map(|(t, _)| t).collect::<Vec<_>>(),
            "averaging": avg,
            "threshold": 0.5,
        }),
        inputs: role_names
            .iter()
            .map(String::as_str)
            .zip(inputs.iter().map(|(_, p)| p.clone()))
            .collect(),
        outputs: vec![
            ("reports_csv", a.out.join("reports.csv")),
            ("reports_md", a.out.join("reports.md")),
            ("matrix", a.out.join("matrix.csv")),
        ],
        manifest_path: a.out.join("cross-eval.manifest.json"),
    };
    run_stage(&stage, a.common.force, || {
        let nets: Vec<(String, RelNet)> = models
            .iter()
            .map(|(tag, path)| Ok((tag.clone(), RelNet::load(path)?)))
            .collect::<CliResult<_>>()?;
        let mut tables: HashMap<&Path, EmbeddingTable> = HashMap::new();
        let mut valsets = Vec::new();
        for (v, e) in a.valsets.iter().zip(&emb_paths) {
            if !tables.contains_key(e.as_path()) {
                tables.insert(e, EmbeddingTable::load(e)?);
            }
            valsets.push(PairDataset::load(v, &tables[e.as_path()])?.0);
        }
        let grid = eval::cross_evaluate(&nets, &valsets, avg)?;
        let reports: Vec<&MetricsReport> = grid.iter().flatten().map(|e| &e.report).collect();
        eval::emit_report(&reports, ReportFormat::Csv, a.out.join("reports.csv"))?;
        eval::emit_report(&reports, ReportFormat::Markdown, a.out.join("reports.md"))?;
        write_file(&a.out.join("matrix.csv"), cross_matrix_csv(&grid))?;
        let dumps = a.out.join("scores");
        fs::create_dir_all(&dumps).map_err(|e| CliError::io(&dumps, e))?;
        for (row, (tag, _)) in grid.iter().zip(&models) {
            for (j, (e, ds)) in row.iter().zip(&valsets).enumerate() {
                let name = format!("{}__{j}-{}.jsonl", safe_name(tag), safe_name(&ds.source));
                eval::save_score_dump(ds, &e.scores, dumps.join(name))?;
            }
        }
        for r in &reports {
            println!("{}", summary_line(r));
        }
        Ok(())
    })?;
    Ok(())
}
