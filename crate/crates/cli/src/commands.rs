//! The sequential orchestrators behind each subcommand.
//!
//! Every command resolves its configuration first and logs it in full to
//! stderr, so a run can always be reproduced from its log. Artifact files
//! live in the configured output directory under fixed names:
//! `segmented.jsonl` (ingest), `train/dev/test.jsonl` (generate),
//! `vocab.json` (vocab), `checkpoint.json` and `history.jsonl` (train),
//! `report.csv` (evaluate).

use std::fs;
use std::path::{Path, PathBuf};

use incongruity::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
use incongruity::corpus::{
    corpus_stats, filter_articles, format_stats_table, load_corpus, segment_corpus,
    write_segmented, SegmentedArticle,
};
use incongruity::evaluation::{evaluate, format_report, write_report_csv, ReportRow};
use incongruity::graph::{build_graph, NewsGraph};
use incongruity::model::ModelParams;
use incongruity::synthgen::{
    build_split, partition_corpus, read_samples, write_samples, DatasetSplit, LabeledSample,
    PartitionedCorpus,
};
use incongruity::textenc::{build_vocab, load_embeddings, random_embeddings, EmbeddingTable, Vocabulary};
use incongruity::training::{train, write_history, TrainedModel};

use crate::config::RunConfig;
use crate::error::{stage, CliError, Result};

/// Artifact file names, in pipeline order.
pub const SEGMENTED_FILE: &str = "segmented.jsonl";
pub const DATASET_FILES: [&str; 3] = ["train.jsonl", "dev.jsonl", "test.jsonl"];
pub const VOCAB_FILE: &str = "vocab.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_FILE: &str = "report.csv";

/// Echo the fully resolved configuration so every run is reproducible from
/// its log alone.
pub fn log_config(config: &RunConfig) {
    eprintln!("resolved configuration:");
    for line in config.to_toml().lines() {
        eprintln!("  {line}");
    }
}

fn ensure_output_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.output_dir).map_err(|e| {
        CliError::data(format!(
            "cannot create output directory {}: {e}",
            config.output_dir.display()
        ))
    })
}

/// Load, clean, segment and filter the raw corpus.
fn ingest_articles(config: &RunConfig) -> Result<Vec<SegmentedArticle>> {
    let path = config.corpus_path()?;
    let raw = load_corpus(path)?;
    let segmented = segment_corpus(&raw, &config.data.segment);
    let kept = filter_articles(segmented, &config.data.segment);
    eprintln!(
        "ingest: {} raw articles, {} kept after cleaning and length filters",
        raw.len(),
        kept.len()
    );
    if kept.is_empty() {
        return Err(CliError::data(format!(
            "no usable articles in {} after filtering",
            path.display()
        )));
    }
    Ok(kept)
}

/// `ingest`: clean and segment the corpus, report its shape, and write the
/// segmented articles for inspection.
pub fn cmd_ingest(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let articles = ingest_articles(config)?;
    let stats = corpus_stats(&articles)?;
    println!("{}", format_stats_table(&[("corpus".to_string(), stats)]));
    let out = config.artifact(SEGMENTED_FILE);
    write_segmented(&out, &articles)?;
    eprintln!("ingest: wrote {}", out.display());
    Ok(())
}

fn partition_articles(
    config: &RunConfig,
    articles: Vec<SegmentedArticle>,
) -> Result<PartitionedCorpus> {
    let partitioned = partition_corpus(articles, config.data.partition, config.seed)?;
    eprintln!(
        "partition: train {} / dev {} / test {} / pool {}",
        partitioned.train.len(),
        partitioned.dev.len(),
        partitioned.test.len(),
        partitioned.pool.len()
    );
    Ok(partitioned)
}

fn synthesize(config: &RunConfig, partitioned: &PartitionedCorpus) -> Result<DatasetSplit> {
    build_split(
        partitioned,
        config.data.incongruent_fraction,
        &config.data.gen_types,
        config.seed,
    )
    .map_err(CliError::from)
}

fn write_datasets(config: &RunConfig, split: &DatasetSplit) -> Result<()> {
    for (name, samples) in DATASET_FILES
        .iter()
        .zip([&split.train, &split.dev, &split.test])
    {
        let path = config.artifact(name);
        write_samples(&path, samples)?;
        let incongruent = samples.iter().filter(|s| s.doc_label == 1).count();
        eprintln!(
            "generate: wrote {} ({} samples, {} incongruent)",
            path.display(),
            samples.len(),
            incongruent
        );
    }
    Ok(())
}

/// `generate`: partition the corpus and synthesize the labeled splits.
pub fn cmd_generate(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let articles = ingest_articles(config)?;
    let partitioned = partition_articles(config, articles)?;
    let split = synthesize(config, &partitioned)?;
    write_datasets(config, &split)
}

fn read_dataset(config: &RunConfig, name: &str) -> Result<Vec<LabeledSample>> {
    let path = config.artifact(name);
    read_samples(&path).map_err(|e| {
        CliError::data(format!("{e}; run `generate` first to produce {}", path.display()))
    })
}

fn build_vocabulary(config: &RunConfig, train: &[LabeledSample]) -> Vocabulary {
    let vocab = build_vocab(train, config.data.min_count);
    eprintln!(
        "vocab: {} entries (min count {}, training split only)",
        vocab.len(),
        config.data.min_count
    );
    vocab
}

fn build_embeddings(config: &RunConfig, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let table = match &config.embeddings {
        Some(path) => {
            let table = load_embeddings(path, vocab, config.model.embed_dim, config.seed)?;
            eprintln!(
                "embeddings: {} covers {} of the vocabulary",
                path.display(),
                table.coverage_percent()
            );
            table
        }
        None => {
            eprintln!("embeddings: no file configured, using seeded random vectors");
            random_embeddings(vocab, config.model.embed_dim, config.seed)
        }
    };
    Ok(table)
}

fn write_vocabulary(config: &RunConfig, vocab: &Vocabulary) -> Result<()> {
    let path = config.artifact(VOCAB_FILE);
    let json = serde_json::to_string_pretty(vocab).expect("vocabulary serializes");
    fs::write(&path, json).map_err(|e| CliError::data(format!("write {}: {e}", path.display())))?;
    eprintln!("vocab: wrote {}", path.display());
    Ok(())
}

/// `vocab`: build the vocabulary from the generated training split, write
/// it, and report embedding coverage.
pub fn cmd_vocab(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let train = read_dataset(config, DATASET_FILES[0])?;
    let vocab = build_vocabulary(config, &train);
    build_embeddings(config, &vocab)?;
    write_vocabulary(config, &vocab)?;
    println!("vocabulary size {}", vocab.len());
    Ok(())
}

fn graphs_for(
    samples: &[LabeledSample],
    vocab: &Vocabulary,
    token_cap: usize,
) -> Result<Vec<NewsGraph>> {
    samples
        .iter()
        .map(|s| build_graph(s, vocab, token_cap).map_err(CliError::from))
        .collect()
}

fn train_model(
    config: &RunConfig,
    train_set: &[LabeledSample],
    dev_set: &[LabeledSample],
    vocab: &Vocabulary,
) -> Result<(TrainedModel, EmbeddingTable)> {
    let embeddings = build_embeddings(config, vocab)?;
    let train_graphs = graphs_for(train_set, vocab, config.model.token_cap)?;
    let dev_graphs = graphs_for(dev_set, vocab, config.model.token_cap)?;
    let params = ModelParams::init(&config.model, config.seed)?;
    eprintln!("train: {} parameters", params.count_params());

    let trained = train(
        &train_graphs,
        &dev_graphs,
        params,
        &embeddings,
        &config.model,
        &config.training,
    )?;
    for s in &trained.history.epochs {
        eprintln!(
            "epoch {:>2}  lr {:>7.0e}  loss {:.4} (doc {:.4}, edge {:.4})  \
             dev loss {:.4}  dev acc doc {:.4} para {:.4}  {:.1}s",
            s.epoch,
            s.lr,
            s.train_loss,
            s.train_doc_loss,
            s.train_edge_loss,
            s.val_loss,
            s.val_doc_acc,
            s.val_para_acc,
            s.seconds
        );
    }
    eprintln!(
        "train: best dev document accuracy {:.4} at epoch {}",
        trained.best_dev_acc, trained.best_epoch
    );
    Ok((trained, embeddings))
}

fn save_trained(
    config: &RunConfig,
    trained: &TrainedModel,
    vocab: Vocabulary,
    embeddings: EmbeddingTable,
) -> Result<()> {
    let state = TrainState {
        epochs_run: trained.history.epochs.len(),
        best_epoch: trained.best_epoch,
        best_dev_acc: trained.best_dev_acc,
    };
    let checkpoint = Checkpoint::new(
        config.model.clone(),
        vocab,
        embeddings,
        trained.params.clone(),
        state,
    );
    let ckpt_path = config.artifact(CHECKPOINT_FILE);
    save_checkpoint(&ckpt_path, &checkpoint)?;
    let history_path = config.artifact(HISTORY_FILE);
    write_history(&history_path, &trained.history)?;
    eprintln!("train: wrote {} and {}", ckpt_path.display(), history_path.display());
    Ok(())
}

/// `train`: fit the model on the generated splits and save a checkpoint.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let train_set = read_dataset(config, DATASET_FILES[0])?;
    let dev_set = read_dataset(config, DATASET_FILES[1])?;
    let vocab = build_vocabulary(config, &train_set);
    let (trained, embeddings) = train_model(config, &train_set, &dev_set, &vocab)?;
    save_trained(config, &trained, vocab, embeddings)
}

/// One labeled dataset to score: its display name and its samples.
struct EvalSet {
    name: String,
    samples: Vec<LabeledSample>,
}

fn evaluate_sets(config: &RunConfig, checkpoint: &Checkpoint, sets: &[EvalSet], out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    let mut auc_lines = Vec::new();
    for set in sets {
        let graphs = graphs_for(&set.samples, &checkpoint.vocab, checkpoint.config.token_cap)?;
        let metrics = evaluate(
            &checkpoint.params,
            &checkpoint.embeddings,
            &graphs,
            &checkpoint.config,
            config.training.batch_size,
        )?;
        auc_lines.push(format!("auc({}) = {:.4}", set.name, metrics.auc));
        rows.push(ReportRow::new(set.name.clone(), set.samples.len(), &metrics));
    }
    print!("{}", format_report(&rows));
    for line in auc_lines {
        println!("{line}");
    }
    write_report_csv(out, &rows)?;
    eprintln!("evaluate: wrote {}", out.display());
    Ok(())
}

/// `evaluate`: score labeled datasets with a trained checkpoint, print the
/// metrics table, and write it as CSV.
///
/// With no explicit `--data` paths the generated dev and test splits in the
/// output directory are used (whichever exist); explicit paths are reported
/// under their file stems.
pub fn cmd_evaluate(
    config: &RunConfig,
    checkpoint_path: Option<&Path>,
    data: &[PathBuf],
    out: Option<&Path>,
) -> Result<()> {
    ensure_output_dir(config)?;
    let ckpt_path = checkpoint_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.artifact(CHECKPOINT_FILE));
    let checkpoint = load_checkpoint(&ckpt_path)?;

    let mut sets = Vec::new();
    if data.is_empty() {
        for name in &DATASET_FILES[1..] {
            let path = config.artifact(name);
            if path.exists() {
                sets.push(EvalSet {
                    name: name.trim_end_matches(".jsonl").to_string(),
                    samples: read_samples(&path)?,
                });
            }
        }
        if sets.is_empty() {
            return Err(CliError::data(format!(
                "no datasets to evaluate: pass --data or generate splits in {}",
                config.output_dir.display()
            )));
        }
    } else {
        for path in data {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            sets.push(EvalSet { name, samples: read_samples(path)? });
        }
    }

    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.artifact(REPORT_FILE));
    evaluate_sets(config, &checkpoint, &sets, &out)
}

/// `pipeline`: ingest → partition → generate → vocab → train → evaluate,
/// leaving every artifact in the output directory. Any stage error aborts
/// the run with the stage name in the message.
pub fn cmd_pipeline(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let articles = stage("ingest", ingest_articles(config))?;
    let stats = stage("ingest", corpus_stats(&articles).map_err(CliError::from))?;
    println!("{}", format_stats_table(&[("corpus".to_string(), stats)]));

    let partitioned = stage("partition", partition_articles(config, articles))?;
    let split = stage("generate", synthesize(config, &partitioned))?;
    stage("generate", write_datasets(config, &split))?;

    let vocab = build_vocabulary(config, &split.train);
    stage("vocab", write_vocabulary(config, &vocab))?;

    let (trained, embeddings) =
        stage("train", train_model(config, &split.train, &split.dev, &vocab))?;
    stage("train", save_trained(config, &trained, vocab, embeddings))?;

    let checkpoint = stage(
        "evaluate",
        load_checkpoint(config.artifact(CHECKPOINT_FILE)).map_err(CliError::from),
    )?;
    let sets = vec![
        EvalSet { name: "dev".into(), samples: split.dev },
        EvalSet { name: "test".into(), samples: split.test },
    ];
    stage(
        "evaluate",
        evaluate_sets(config, &checkpoint, &sets, &config.artifact(REPORT_FILE)),
    )?;
    eprintln!("pipeline: complete, artifacts in {}", config.output_dir.display());
    Ok(())
}
