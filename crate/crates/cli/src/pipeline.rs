//! End-to-end run: source → embeddings → datasets → checkpoint → report,
//! all inside one output directory. Each stage keeps its own manifest there
//! and is skipped when it is up to date.

use std::fs;
use std::path::{Path, PathBuf};

use ontorel::dataset::SplitSpec;
use ontorel::model::RelNetConfig;
use ontorel::synthetic::make_synthetic;
use serde_json::json;

use crate::commands::{self, DatasetPaths, EvalOutputs};
use crate::config::{PipelineConfig, Provider};
use crate::manifest::Stage;
use crate::{CliError, CliResult, PipelineArgs};

/// File names inside the output directory.
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn manifest(&self, stage: &str) -> PathBuf {
        self.file(&format!("{stage}.manifest.json"))
    }
}

fn named(stage: &str, r: CliResult<bool>) -> CliResult<bool> {
    r.map_err(|e| e.context(format!("stage {stage} failed")))
}

pub fn run(a: &PipelineArgs) -> CliResult {
    let mut cfg = PipelineConfig::load(&a.config)?;
    cfg.apply_overrides(a);
    cfg.validate()?;
    run_config(&cfg, a.common.force)
}

pub fn run_config(cfg: &PipelineConfig, force: bool) -> CliResult {
    let l = Layout {
        dir: cfg.out_dir.clone(),
    };
    fs::create_dir_all(&l.dir).map_err(|e| CliError::io(&l.dir, e))?;
    write_resolved_config(cfg, &l)?;

    let (index, matrix, counts, embeddings) = (
        l.file("index.tsv"),
        l.file("matrix.tsv"),
        l.file("counts.tsv"),
        l.file("embeddings.jsonl"),
    );

    if let Some(ontology) = &cfg.source.ontology {
        let stage = commands::materialize_stage(
            ontology,
            &index,
            &matrix,
            &counts,
            cfg.source.error_cap,
            l.manifest("materialize"),
        );
        named(
            "materialize",
            commands::run_stage(&stage, force, || {
                commands::do_materialize(ontology, &index, &matrix, &counts, cfg.source.error_cap)
            }),
        )?;
        match cfg.embedding.provider {
            Provider::Pseudo => {
                let texts = l.file("texts.jsonl");
                let stage = commands::render_text_stage(&index, &texts, l.manifest("render-text"));
                named(
                    "render-text",
                    commands::run_stage(&stage, force, || commands::do_render_text(&index, &texts)),
                )?;
                let (dim, seed) = (cfg.embedding.dim, cfg.seed);
                let stage = commands::pseudo_embed_stage(&texts, dim, seed, &embeddings, l.manifest("embed"));
                named(
                    "embed",
                    commands::run_stage(&stage, force, || {
                        commands::do_pseudo_embed(&texts, dim, seed, &embeddings)
                    }),
                )?;
            }
            Provider::File => {
                let src = cfg.embedding.file.as_ref().expect("validated");
                let stage = Stage {
                    name: "embed",
                    config: json!({ "provider": "file" }),
                    inputs: vec![("embeddings", src.clone())],
                    outputs: vec![("embeddings", embeddings.clone())],
                    manifest_path: l.manifest("embed"),
                };
                named(
                    "embed",
                    commands::run_stage(&stage, force, || {
                        fs::copy(src, &embeddings).map(drop).map_err(|e| CliError::io(src, e))
                    }),
                )?;
            }
        }
    } else {
        let syn = cfg.source.synthetic.as_ref().expect("validated");
        let ontology = l.file("ontology.nt");
        let stage = Stage {
            name: "synthesize",
            config: json!({ "entities": syn.entities, "dim": syn.dim, "seed": cfg.seed }),
            inputs: vec![],
            outputs: vec![
                ("ontology", ontology.clone()),
                ("index", index.clone()),
                ("matrix", matrix.clone()),
                ("counts", counts.clone()),
                ("embeddings", embeddings.clone()),
            ],
            manifest_path: l.manifest("synthesize"),
        };
        named(
            "synthesize",
            commands::run_stage(&stage, force, || {
                let s = make_synthetic(syn.entities, syn.dim, cfg.seed)?;
                write(&ontology, s.to_ntriples())?;
                s.index.write(&index)?;
                s.matrix.write(&matrix, true)?;
                write(&counts, s.matrix.counts_table())?;
                s.embeddings.write(&embeddings)?;
                Ok(())
            }),
        )?;
    }

    let (train, validation) = (l.file("train.jsonl"), l.file("val.jsonl"));
    let spec = SplitSpec {
        val_fraction: cfg.split.val_fraction,
        seed: cfg.seed,
        cap: cfg.split.cap,
    };
    let source = cfg.source_tag();
    let paths = DatasetPaths {
        index: &index,
        matrix: &matrix,
        embeddings: &embeddings,
        train: &train,
        validation: &validation,
    };
    let stage = commands::build_dataset_stage(&paths, &spec, &source, l.manifest("build-dataset"));
    named(
        "build-dataset",
        commands::run_stage(&stage, force, || commands::do_build_dataset(&paths, &spec, &source)),
    )?;

    let (model, loss) = (l.file("model.json"), l.file("loss.tsv"));
    let template = RelNetConfig {
        learning_rate: cfg.model.learning_rate,
        epochs: cfg.model.epochs,
        batch_size: cfg.model.batch_size,
        seed: cfg.seed,
        ..RelNetConfig::new(0, cfg.model.hidden_sizes.clone())
    };
    let net_config = commands::resolve_net_config(&train, &template).map_err(|e| e.context("stage train failed"))?;
    let stage = commands::train_stage(
        &train,
        &embeddings,
        &net_config,
        &model,
        Some(&loss),
        l.manifest("train"),
    );
    named(
        "train",
        commands::run_stage(&stage, force, || {
            commands::do_train(&train, &embeddings, &net_config, &model, Some(&loss))
        }),
    )?;

    let out = EvalOutputs::in_dir(&l.dir);
    let tag = format!("relnet-{source}");
    let avg = cfg.eval.averaging;
    let stage = commands::eval_stage(&model, &validation, &embeddings, &tag, avg, &out, l.manifest("eval"));
    named(
        "eval",
        commands::run_stage(&stage, force, || {
            commands::do_eval(&model, &validation, &embeddings, &tag, avg, &out).map(drop)
        }),
    )?;
    Ok(())
}

fn write(path: &Path, text: String) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The effective configuration after defaults and flags, minus the output
/// directory so runs in different places record the same thing.
fn write_resolved_config(cfg: &PipelineConfig, l: &Layout) -> CliResult {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    value.as_object_mut().unwrap().remove("out_dir");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    write(&l.file("pipeline.json"), text)
}
