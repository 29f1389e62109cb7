//! `kgctx` command-line interface.
//!
//! ```bash
//! kgctx synth --kind typed --out data/typed
//! kgctx run-typing --config data/typed/config.json --mode kg
//! kgctx report --input out/entity_typing/report.json
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kgctx::combiner::FeatureMode;
use kgctx::harness::{
    self, ContextSource, DataConfig, ExperimentConfig, KgSource, RunReport, Task,
};
use kgctx::kg_store::{write_rejections, LoadOptions, SplitPaths, TripleStore};
use kgctx::kge::{train, EmbeddingTable, ModelKind, TrainConfig, VectorFile};
use kgctx::synthetic;

#[derive(Parser)]
#[command(
    name = "kgctx",
    version,
    about = "KG and contextual embedding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs a single feature mode instead of the configured list.
    #[arg(long)]
    mode: Option<FeatureMode>,
    /// Output directory; defaults to the config's, then `out/<task>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TriplesArgs {
    /// Directory with train.txt and optional valid.txt / test.txt.
    #[arg(long, required_unless_present = "train")]
    triples_dir: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
}

impl TriplesArgs {
    fn load(&self) -> Result<TripleStore> {
        let paths = DataConfig {
            triples_dir: self.triples_dir.clone(),
            train: self.train.clone(),
            ..Default::default()
        }
        .split_paths()?;
        load_store(&paths)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Typed KG with metadata, for entity typing.
    Typed,
    /// 50-entity next/prev cycle, for link prediction.
    Cycle,
    /// Keyword sentences in FB-NYT format, for relation prediction.
    Keywords,
    /// Uniform random triples.
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a small synthetic dataset and a matching config.json.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parses the KG and metadata, builds description mentions and filters FB-NYT.
    PrepareData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains KG embeddings and writes entities.vec, relations.vec and training_log.json.
    TrainKge {
        #[command(flatten)]
        triples: TriplesArgs,
        /// Training config (JSON); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Allow lock-free parallel updates (results vary run to run).
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aligns external vector files with the KG vocabulary and re-exports them.
    ImportEmbeddings {
        #[command(flatten)]
        triples: TriplesArgs,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        relations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    RunTyping(RunArgs),
    RunRelations(RunArgs),
    RunLinkpred(RunArgs),
    /// Renders a report.json as a Markdown table.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Writes to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth { kind, out, seed } => synth(kind, &out, seed),
        Command::PrepareData { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let summary = harness::prepare_data(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::TrainKge {
            triples,
            config,
            model,
            dim,
            epochs,
            lr,
            seed,
            parallel,
            out,
        } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(&p).with_context(|| p.display().to_string())?,
                )?,
                None => TrainConfig::default(),
            };
            cfg.model = model.unwrap_or(cfg.model);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.learning_rate = lr.unwrap_or(cfg.learning_rate);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.deterministic &= !parallel;
            train_kge(&triples.load()?, &cfg, &out)
        }
        Command::ImportEmbeddings {
            triples,
            model,
            entities,
            relations,
            out,
        } => {
            let store = triples.load()?;
            let ent = VectorFile::read(&entities)?;
            let rel = relations.as_deref().map(VectorFile::read).transpose()?;
            let (table, rejections) = EmbeddingTable::import(
                model,
                &ent,
                rel.as_ref(),
                store.entities(),
                store.relations(),
            )?;
            table.export(
                store.entities(),
                store.relations(),
                &out.join("entities.vec"),
                &out.join("relations.vec"),
            )?;
            write_rejections(&out.join("rejected_vectors.tsv"), &rejections)?;
            let summary = serde_json::json!({
                "model": model,
                "dim": table.dim(),
                "entities": table.num_entities(),
                "relations": table.num_relations(),
                "rejected_rows": rejections.len(),
            });
            write(
                &out.join("import_summary.json"),
                &serde_json::to_string_pretty(&summary)?,
            )
        }
        Command::RunTyping(args) => run(Task::EntityTyping, args),
        Command::RunRelations(args) => run(Task::RelationPrediction, args),
        Command::RunLinkpred(args) => run(Task::LinkPrediction, args),
        Command::Report { input, out } => {
            let text =
                std::fs::read_to_string(&input).with_context(|| input.display().to_string())?;
            let md = RunReport::from_json(&text)?.to_markdown();
            match out {
                Some(p) => write(&p, &md),
                None => {
                    print!("{md}");
                    Ok(())
                }
            }
        }
    }
}

fn load_store(paths: &SplitPaths) -> Result<TripleStore> {
    let (store, rejections) = TripleStore::load(paths, &LoadOptions::default())?;
    if !rejections.is_empty() {
        log::warn!("{} triple lines rejected", rejections.len());
    }
    Ok(store)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

fn write_timing(dir: &Path, started: Instant) -> Result<()> {
    let timing = serde_json::json!({ "wall_clock_seconds": started.elapsed().as_secs_f64() });
    write(
        &dir.join("timing.json"),
        &serde_json::to_string_pretty(&timing)?,
    )
}

fn train_kge(store: &TripleStore, cfg: &TrainConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let outcome = train(store, cfg)?;
    outcome.table.export(
        store.entities(),
        store.relations(),
        &out.join("entities.vec"),
        &out.join("relations.vec"),
    )?;
    let log = serde_json::json!({ "config": cfg, "epochs": outcome.epochs });
    write(
        &out.join("training_log.json"),
        &serde_json::to_string_pretty(&log)?,
    )?;
    write_timing(out, started)
}

fn run(task: Task, args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.task != task {
        bail!(
            "{} declares task {}, expected {}",
            args.config.display(),
            config.task.as_str(),
            task.as_str()
        );
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode {
        config.feature_modes = vec![mode];
    }
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(task.as_str()));
    let report = match task {
        Task::EntityTyping => harness::run_entity_typing(&config)?,
        Task::RelationPrediction => harness::run_relation_prediction(&config)?,
        Task::LinkPrediction => harness::run_link_prediction(&config)?,
    };
    report.write(&out)?;
    write_timing(&out, started)?;
    print!("{}", report.to_markdown());
    Ok(())
}

/// KG training settings that fit the small synthetic graphs.
fn synth_training() -> TrainConfig {
    TrainConfig {
        dim: 16,
        epochs: 200,
        learning_rate: 0.2,
        batch_size: 16,
        negatives_per_positive: 20,
        l2_weight: 0.0,
        ..Default::default()
    }
}

fn synth(kind: SynthKind, out: &Path, seed: u64) -> Result<()> {
    let mut config = ExperimentConfig {
        seed,
        kg: KgSource::Train(synth_training()),
        data: DataConfig {
            triples_dir: Some(out.to_path_buf()),
            ..Default::default()
        },
        ..Default::default()
    };
    match kind {
        SynthKind::Typed => {
            let kg = synthetic::typed_kg(8, 25, seed)?;
            synthetic::write_splits(&kg.store, out)?;
            write(&out.join("labels.tsv"), &kg.labels)?;
            write(&out.join("types.tsv"), &kg.types)?;
            write(&out.join("descriptions.tsv"), &kg.descriptions)?;
            config.task = Task::EntityTyping;
            config.data.labels = Some(out.join("labels.tsv"));
            config.data.types = Some(out.join("types.tsv"));
            config.data.descriptions = Some(out.join("descriptions.tsv"));
        }
        SynthKind::Cycle => {
            synthetic::write_splits(&synthetic::inverse_cycle(50)?, out)?;
            config.task = Task::LinkPrediction;
        }
        SynthKind::Keywords => {
            let (store, text) =
                synthetic::keyword_corpus(40, 400, synthetic::KEYWORDS.len(), seed)?;
            synthetic::write_splits(&store, out)?;
            write(&out.join("fbnyt.tsv"), &text)?;
            config.task = Task::RelationPrediction;
            config.data.fbnyt = Some(out.join("fbnyt.tsv"));
        }
        SynthKind::Random => {
            synthetic::write_splits(&synthetic::random_kg(200, 5, 2000, 200, seed)?, out)?;
            config.task = Task::LinkPrediction;
        }
    }
    config.contextual = ContextSource::Pseudo { dim: 64 };
    config.output_dir = Some(out.join("out"));
    write(
        &out.join("config.json"),
        &serde_json::to_string_pretty(&config)?,
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
