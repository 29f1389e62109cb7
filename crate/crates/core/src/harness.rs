//! Config-driven experiments.
//!
//! Every classification experiment follows the same three steps: build
//! features for each sample, fit a logistic-regression head on the training
//! part, and score the ranked predictions on the test part. All feature
//! modes go through [`evaluate_mode`]; the mode only changes which
//! [`FeatureExtractor`] is handed in.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{fit, FitConfig, LogRegMode};
use crate::combiner::{
    ContextProvider, ContextualStore, FeatureExtractor, FeatureMode, PseudoContextual,
    DEFAULT_CONTEXT_DIM,
};
use crate::corpus::{
    filter_fbnyt, parse_fbnyt, prepare_descriptions, write_drops, write_mentions,
    write_relation_samples, ContextualMention, CorpusStats, DescriptionCorpus, RelationSample,
};
use crate::kg_store::{
    write_rejections, EntityCatalog, LoadOptions, SplitPaths, StoreStats, TripleStore, Vocabulary,
    TEST,
};
use crate::kge::{train, EmbeddingTable, EpochLog, ModelKind, TrainConfig, VectorFile};
use crate::metrics::{rank_all, EvalRecord, Metric, MetricReport, Protocol};
use crate::util::{fnv1a, write_all};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    EntityTyping,
    RelationPrediction,
    LinkPrediction,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::EntityTyping => "entity_typing",
            Task::RelationPrediction => "relation_prediction",
            Task::LinkPrediction => "link_prediction",
        }
    }

    pub fn default_metrics(&self) -> Vec<Metric> {
        match self {
            Task::EntityTyping => vec![Metric::MapAt(10), Metric::PrecisionAt(10), Metric::Mrr],
            Task::RelationPrediction => vec![Metric::Mrr, Metric::MapAt(1), Metric::PrecisionAt(1)],
            Task::LinkPrediction => vec![
                Metric::Mrr,
                Metric::HitsAt(1),
                Metric::HitsAt(3),
                Metric::HitsAt(10),
            ],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `train.txt`, `valid.txt`, `test.txt`.
    pub triples_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub fbnyt: Option<PathBuf>,
}

impl DataConfig {
    pub fn split_paths(&self) -> Result<SplitPaths> {
        let mut paths = match &self.triples_dir {
            Some(dir) => SplitPaths::in_dir(dir),
            None => SplitPaths {
                train: self.train.clone().ok_or_else(|| {
                    Error::Config("data.train or data.triples_dir is required".into())
                })?,
                valid: None,
                test: None,
            },
        };
        if let Some(t) = &self.train {
            paths.train = t.clone();
        }
        if self.valid.is_some() {
            paths.valid = self.valid.clone();
        }
        if self.test.is_some() {
            paths.test = self.test.clone();
        }
        Ok(paths)
    }

    fn check_exists(&self) -> Result<()> {
        let explicit = [
            &self.triples_dir,
            &self.train,
            &self.valid,
            &self.test,
            &self.labels,
            &self.types,
            &self.descriptions,
            &self.fbnyt,
        ];
        for p in explicit.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Where KG vectors come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum KgSource {
    Train(TrainConfig),
    Import {
        model: ModelKind,
        entities: PathBuf,
        relations: Option<PathBuf>,
    },
}

impl Default for KgSource {
    fn default() -> Self {
        KgSource::Train(TrainConfig::default())
    }
}

/// Where contextual vectors come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextSource {
    /// Feature-hashing stand-in, seeded by the experiment seed.
    Pseudo {
        dim: usize,
    },
    File {
        path: PathBuf,
    },
}

impl Default for ContextSource {
    fn default() -> Self {
        ContextSource::Pseudo {
            dim: DEFAULT_CONTEXT_DIM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub feature_modes: Vec<FeatureMode>,
    /// Seeds KG training, the classifier and the pseudo-contextual encoder.
    pub seed: u64,
    pub data: DataConfig,
    pub kg: KgSource,
    /// Models compared by link prediction; the `kg` training config supplies
    /// everything but the model kind.
    pub link_models: Vec<ModelKind>,
    pub contextual: ContextSource,
    pub classifier: FitConfig,
    /// Empty means the task's defaults.
    pub metrics: Vec<Metric>,
    pub max_gap: usize,
    /// L2-normalize contextual and KG parts before concatenation.
    pub normalize_parts: bool,
    /// Type labels with fewer training occurrences are pruned (≤ 1 disables pruning).
    pub min_type_count: usize,
    /// Percent of entities (by symbol hash) held out for typing.
    pub typing_test_percent: u64,
    /// Percent of FB-NYT samples (by content hash) held out when no split column is given.
    pub relation_test_percent: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::EntityTyping,
            feature_modes: FeatureMode::ALL.to_vec(),
            seed: 0,
            data: DataConfig::default(),
            kg: KgSource::default(),
            link_models: ModelKind::ALL.to_vec(),
            contextual: ContextSource::default(),
            classifier: FitConfig::default(),
            metrics: Vec::new(),
            max_gap: 1,
            normalize_parts: false,
            min_type_count: 5,
            typing_test_percent: 10,
            relation_test_percent: 20,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn metrics(&self) -> Vec<Metric> {
        if self.metrics.is_empty() {
            self.task.default_metrics()
        } else {
            self.metrics.clone()
        }
    }

    /// Propagates the top-level seed into nested configs.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.classifier.seed = c.seed;
        if let KgSource::Train(t) = &mut c.kg {
            t.seed = c.seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_modes.is_empty() && self.task != Task::LinkPrediction {
            return Err(Error::Config("feature_modes is empty".into()));
        }
        if self.typing_test_percent > 100 || self.relation_test_percent > 100 {
            return Err(Error::Config(
                "test percentages must be within 0..=100".into(),
            ));
        }
        if let KgSource::Train(t) = &self.kg {
            t.validate()?;
        }
        if let ContextSource::Pseudo { dim: 0 } = self.contextual {
            return Err(Error::Config("contextual dim must be positive".into()));
        }
        self.data.check_exists()
    }
}

/// Per-mode outcome of one experiment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModeReport {
    pub metrics: MetricReport,
    /// Candidate samples before any skipping.
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Reason → count. `n_samples = n_train + n_test + Σ skipped`.
    pub skipped: BTreeMap<String, usize>,
    pub n_labels: usize,
    pub feature_dim: usize,
}

impl ModeReport {
    fn skip(&mut self, reason: &str) {
        *self.skipped.entry(reason.to_string()).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub dataset: BTreeMap<String, usize>,
    pub modes: BTreeMap<String, ModeReport>,
    /// Per-epoch KG training loss, keyed by model.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub training: BTreeMap<String, Vec<EpochLog>>,
    pub versions: BTreeMap<String, String>,
}

impl RunReport {
    fn new(config: &ExperimentConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("kgctx".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            task: config.task,
            seed: config.seed,
            config: config.clone(),
            dataset: BTreeMap::new(),
            modes: BTreeMap::new(),
            training: BTreeMap::new(),
            versions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Markdown table: typing and relation tables list one row per feature
    /// mode; link prediction one row per model and protocol.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.task.as_str());
        let fmt_mean = |m: &ModeReport, name: &str| {
            m.metrics
                .metrics
                .get(name)
                .map_or("n/a".to_string(), |s| format!("{:.3}", s.mean))
        };
        let fmt_pm = |m: &ModeReport, name: &str| {
            m.metrics.metrics.get(name).map_or("n/a".to_string(), |s| {
                format!("{:.3} ± {:.3}", s.mean, s.std)
            })
        };
        fn row_name(mode: &str) -> &str {
            match mode {
                "contextual" => "Contextual Embeddings (1)",
                "kg" => "KG Embeddings (2)",
                "concat" => "Concatenation (1) + (2)",
                other => other,
            }
        }
        let ordered: Vec<(&String, &ModeReport)> = {
            let mut v: Vec<_> = self.modes.iter().collect();
            let rank = |k: &str| {
                ["contextual", "kg", "concat"]
                    .iter()
                    .position(|m| *m == k)
                    .unwrap_or(3)
            };
            v.sort_by_key(|(k, _)| (rank(k), k.to_string()));
            v
        };
        match self.task {
            Task::EntityTyping => {
                out.push_str("| Model | MAP@k=10 | Precision@k=10 (mean ± std) |\n|---|---|---|\n");
                for (mode, m) in ordered {
                    out.push_str(&format!(
                        "| {} | {} | {} |\n",
                        row_name(mode),
                        fmt_mean(m, "map@10"),
                        fmt_pm(m, "precision@10")
                    ));
                }
            }
            Task::RelationPrediction => {
                out.push_str("| Model | MRR | Precision (MAP@k=1) |\n|---|---|---|\n");
                for (mode, m) in ordered {
                    out.push_str(&format!(
                        "| {} | {} | {} |\n",
                        row_name(mode),
                        fmt_mean(m, "mrr"),
                        fmt_mean(m, "map@1")
                    ));
                }
            }
            Task::LinkPrediction => {
                out.push_str("| Model | Protocol | MRR | Hits@10 |\n|---|---|---|---|\n");
                for (key, m) in ordered {
                    let (model, protocol) = key.split_once('/').unwrap_or((key, ""));
                    out.push_str(&format!(
                        "| {model} | {protocol} | {} | {} |\n",
                        fmt_mean(m, "mrr"),
                        fmt_mean(m, "hits@10")
                    ));
                }
            }
        }
        out
    }

    /// `report.json`, `report.md`, and one per-sample CSV per mode.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_all(&dir.join("report.json"), &self.to_json())?;
        write_all(&dir.join("report.md"), &self.to_markdown())?;
        for (mode, m) in &self.modes {
            let file = format!("samples_{}.csv", mode.replace('/', "_"));
            m.metrics.write_csv(&dir.join(file))?;
        }
        Ok(())
    }
}

/// One classification sample: the mentions whose features are concatenated
/// and the gold label ids.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub mentions: Vec<&'a ContextualMention>,
    pub gold: BTreeSet<usize>,
    pub test: bool,
}

/// Shared evaluation path for every feature mode.
pub fn evaluate_mode(
    features: &FeatureExtractor<'_>,
    samples: &[Sample<'_>],
    labels: &Vocabulary,
    head: LogRegMode,
    fit_cfg: &FitConfig,
    metrics: &[Metric],
    pre_skipped: &BTreeMap<String, usize>,
) -> Result<ModeReport> {
    features.validate()?;
    let mut report = ModeReport {
        n_samples: samples.len() + pre_skipped.values().sum::<usize>(),
        skipped: pre_skipped.clone(),
        ..Default::default()
    };
    let build = |s: &Sample<'_>| -> Result<Vec<f64>> {
        let mut v = Vec::new();
        for m in &s.mentions {
            v.extend(features.features(m)?);
        }
        Ok(v)
    };
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        match build(s) {
            Ok(x) if s.test => test.push((x, &s.gold)),
            Ok(x) => {
                train_x.push(x);
                train_y.push(s.gold.clone());
            }
            Err(Error::MissingFeature(_)) => report.skip("missing_feature"),
            Err(e) => return Err(e),
        }
    }
    let model = fit(&train_x, &train_y, labels, head, fit_cfg)?;
    report.feature_dim = model.n_features;
    report.n_labels = model.n_labels();
    // Training samples whose labels were all pruned (multinomial drops them).
    report.n_train = train_x.len();
    let mut records = Vec::new();
    for (x, gold) in test {
        let gold: BTreeSet<usize> = gold
            .iter()
            .filter_map(|&l| labels.symbol(l).and_then(|s| model.label_vocab.get(s)))
            .collect();
        if gold.is_empty() {
            report.skip("no_gold_after_pruning");
            continue;
        }
        records.push(EvalRecord::new(model.predict_ranked(&x)?, gold));
    }
    report.n_test = records.len();
    report.metrics = MetricReport::from_records(&records, metrics)?;
    Ok(report)
}

/// Inputs shared by all modes of one experiment.
pub struct Resources<'a> {
    pub kg: Option<&'a EmbeddingTable>,
    pub context: Option<&'a dyn ContextProvider>,
}

fn extractor<'a>(
    mode: FeatureMode,
    res: &Resources<'a>,
    entities: &'a Vocabulary,
    config: &ExperimentConfig,
) -> FeatureExtractor<'a> {
    FeatureExtractor::new(mode, res.kg, res.context, entities)
        .with_normalized_parts(config.normalize_parts)
}

fn is_test_bucket(key: &str, percent: u64) -> bool {
    fnv1a(key.as_bytes()) % 100 < percent
}

/// Entity typing over prepared description mentions: one-vs-rest head,
/// entity-level 90/10 split by symbol hash.
pub fn run_entity_typing_with(
    config: &ExperimentConfig,
    store: &TripleStore,
    catalog: &EntityCatalog,
    mentions: &[ContextualMention],
    res: &Resources<'_>,
) -> Result<RunReport> {
    let config = config.seeded();
    let mut report = RunReport::new(&config);
    let mut pre_skipped = BTreeMap::new();
    let mut samples = Vec::new();
    for m in mentions {
        let gold = catalog.types_of(m.entity);
        if gold.is_empty() {
            *pre_skipped.entry("no_types".to_string()).or_insert(0) += 1;
            continue;
        }
        let symbol = store.entities().symbol(m.entity).unwrap_or_default();
        samples.push(Sample {
            mentions: vec![m],
            gold: gold.clone(),
            test: is_test_bucket(symbol, config.typing_test_percent),
        });
    }
    report.dataset.insert("mentions".into(), mentions.len());
    report
        .dataset
        .insert("types".into(), catalog.type_vocab().len());
    report
        .dataset
        .insert("train".into(), samples.iter().filter(|s| !s.test).count());
    report
        .dataset
        .insert("test".into(), samples.iter().filter(|s| s.test).count());
    let fit_cfg = FitConfig {
        min_label_count: config.min_type_count,
        ..config.classifier.clone()
    };
    for &mode in &config.feature_modes {
        let fx = extractor(mode, res, store.entities(), &config);
        let m = evaluate_mode(
            &fx,
            &samples,
            catalog.type_vocab(),
            LogRegMode::OneVsRest,
            &fit_cfg,
            &config.metrics(),
            &pre_skipped,
        )?;
        log::info!("typing/{mode}: {:?}", m.metrics.mean("map@10"));
        report.modes.insert(mode.to_string(), m);
    }
    Ok(report)
}

/// Relation prediction over filtered FB-NYT samples: features of the subject
/// mention followed by the object mention, multinomial head.
pub fn run_relation_prediction_with(
    config: &ExperimentConfig,
    store: &TripleStore,
    samples: &[RelationSample],
    res: &Resources<'_>,
) -> Result<RunReport> {
    let config = config.seeded();
    let mut report = RunReport::new(&config);
    // Labels: relations occurring in the corpus, in relation-id order.
    let used: BTreeSet<usize> = samples.iter().map(|s| s.relation).collect();
    let labels: Vocabulary = used
        .iter()
        .map(|&r| store.relations().symbol(r).unwrap_or_default())
        .collect();
    let items: Vec<Sample<'_>> = samples
        .iter()
        .map(|s| {
            let symbol = store.relations().symbol(s.relation).unwrap_or_default();
            let test = match s.split.as_deref() {
                Some(split) => split == TEST,
                None => {
                    let key = format!(
                        "{}\t{}\t{}",
                        s.subject.key(store.entities()),
                        s.object.key(store.entities()),
                        s.subject.sentence.joined()
                    );
                    is_test_bucket(&key, config.relation_test_percent)
                }
            };
            Sample {
                mentions: vec![&s.subject, &s.object],
                gold: [labels.get(symbol).expect("label from corpus")].into(),
                test,
            }
        })
        .collect();
    report.dataset.insert("samples".into(), samples.len());
    report.dataset.insert("relations".into(), labels.len());
    report
        .dataset
        .insert("train".into(), items.iter().filter(|s| !s.test).count());
    report
        .dataset
        .insert("test".into(), items.iter().filter(|s| s.test).count());
    for &mode in &config.feature_modes {
        let fx = extractor(mode, res, store.entities(), &config);
        let m = evaluate_mode(
            &fx,
            &items,
            &labels,
            LogRegMode::Multinomial,
            &config.classifier,
            &config.metrics(),
            &BTreeMap::new(),
        )?;
        log::info!("relations/{mode}: {:?}", m.metrics.mean("mrr"));
        report.modes.insert(mode.to_string(), m);
    }
    Ok(report)
}

/// Raw and filtered ranking of both sides of every test triple.
pub fn link_prediction_report(
    table: &EmbeddingTable,
    store: &TripleStore,
    metrics: &[Metric],
) -> Result<BTreeMap<Protocol, ModeReport>> {
    let test = store.split(TEST);
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let mut out = BTreeMap::new();
    for protocol in [Protocol::Raw, Protocol::Filtered] {
        let ranks = rank_all(table, test, protocol, store);
        out.insert(
            protocol,
            ModeReport {
                metrics: MetricReport::from_ranks(&ranks, metrics)?,
                n_samples: ranks.len(),
                n_test: ranks.len(),
                feature_dim: table.dim(),
                ..Default::default()
            },
        );
    }
    Ok(out)
}

/// Trains (or imports) one table per configured model and ranks the test split.
pub fn run_link_prediction_with(
    config: &ExperimentConfig,
    store: &TripleStore,
) -> Result<RunReport> {
    let config = config.seeded();
    let mut report = RunReport::new(&config);
    report.dataset = dataset_counts(&store.stats(None));
    let models: Vec<ModelKind> = match &config.kg {
        KgSource::Import { model, .. } => vec![*model],
        KgSource::Train(_) => config.link_models.clone(),
    };
    for model in models {
        let (table, log) = resolve_kg(&config, store, Some(model))?;
        if let Some(log) = log {
            report.training.insert(model.to_string(), log);
        }
        for (protocol, m) in link_prediction_report(&table, store, &config.metrics())? {
            report
                .modes
                .insert(format!("{model}/{}", protocol.as_str()), m);
        }
    }
    Ok(report)
}

fn dataset_counts(stats: &StoreStats) -> BTreeMap<String, usize> {
    let mut d = BTreeMap::new();
    d.insert("entities".into(), stats.entities);
    d.insert("relations".into(), stats.relations);
    for (k, v) in &stats.split_sizes {
        d.insert(format!("{k}_triples"), *v);
    }
    d
}

/// Loads or trains KG vectors aligned to `store`. `model` overrides the
/// configured training model.
pub fn resolve_kg(
    config: &ExperimentConfig,
    store: &TripleStore,
    model: Option<ModelKind>,
) -> Result<(EmbeddingTable, Option<Vec<EpochLog>>)> {
    match &config.kg {
        KgSource::Train(t) => {
            let mut t = t.clone();
            t.seed = config.seed;
            if let Some(m) = model {
                t.model = m;
            }
            let out = train(store, &t)?;
            Ok((out.table, Some(out.epochs)))
        }
        KgSource::Import {
            model,
            entities,
            relations,
        } => {
            let ent = VectorFile::read(entities)?;
            let rel = relations.as_deref().map(VectorFile::read).transpose()?;
            let (table, rejections) = EmbeddingTable::import(
                *model,
                &ent,
                rel.as_ref(),
                store.entities(),
                store.relations(),
            )?;
            if !rejections.is_empty() {
                log::warn!("{} vector rows named unknown symbols", rejections.len());
            }
            Ok((table, None))
        }
    }
}

pub fn resolve_context(config: &ExperimentConfig) -> Result<Box<dyn ContextProvider>> {
    Ok(match &config.contextual {
        ContextSource::Pseudo { dim } => Box::new(PseudoContextual {
            dim: *dim,
            seed: config.seed,
        }),
        ContextSource::File { path } => Box::new(ContextualStore::load(path)?),
    })
}

/// Parsed triples plus optional metadata.
pub struct LoadedData {
    pub store: TripleStore,
    pub catalog: EntityCatalog,
}

pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    let (store, rejections) =
        TripleStore::load(&config.data.split_paths()?, &LoadOptions::default())?;
    if !rejections.is_empty() {
        log::warn!("{} triple lines rejected", rejections.len());
    }
    let d = &config.data;
    let (catalog, rej) = EntityCatalog::load(
        d.labels.as_deref(),
        d.types.as_deref(),
        d.descriptions.as_deref(),
        store.entities(),
    )?;
    if rej.total() > 0 {
        log::warn!("{} metadata lines rejected", rej.total());
    }
    Ok(LoadedData { store, catalog })
}

fn needs(config: &ExperimentConfig) -> (bool, bool) {
    let ctx = config.feature_modes.iter().any(FeatureMode::needs_context);
    let kg = config.feature_modes.iter().any(FeatureMode::needs_kg);
    (ctx, kg)
}

pub fn run_entity_typing(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let config = config.seeded();
    let data = load_data(&config)?;
    let corpus = prepare_descriptions(data.store.num_entities(), &data.catalog, config.max_gap);
    let (need_ctx, need_kg) = needs(&config);
    let context = need_ctx.then(|| resolve_context(&config)).transpose()?;
    let kg = need_kg
        .then(|| resolve_kg(&config, &data.store, None))
        .transpose()?;
    let res = Resources {
        kg: kg.as_ref().map(|(t, _)| t),
        context: context.as_deref(),
    };
    let mut report =
        run_entity_typing_with(&config, &data.store, &data.catalog, &corpus.mentions, &res)?;
    report
        .dataset
        .insert("dropped_entities".into(), corpus.drops.len());
    if let Some((t, Some(log))) = &kg {
        report.training.insert(t.kind().to_string(), log.clone());
    }
    Ok(report)
}

pub fn run_relation_prediction(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let config = config.seeded();
    let data = load_data(&config)?;
    let path = config
        .data
        .fbnyt
        .as_ref()
        .ok_or_else(|| Error::Config("data.fbnyt is required".into()))?;
    let filtered = filter_fbnyt(&parse_fbnyt(path)?, &data.store);
    let (need_ctx, need_kg) = needs(&config);
    let context = need_ctx.then(|| resolve_context(&config)).transpose()?;
    let kg = need_kg
        .then(|| resolve_kg(&config, &data.store, None))
        .transpose()?;
    let res = Resources {
        kg: kg.as_ref().map(|(t, _)| t),
        context: context.as_deref(),
    };
    let mut report = run_relation_prediction_with(&config, &data.store, &filtered.samples, &res)?;
    report
        .dataset
        .insert("dropped_records".into(), filtered.drops.len());
    if let Some((t, Some(log))) = &kg {
        report.training.insert(t.kind().to_string(), log.clone());
    }
    Ok(report)
}

pub fn run_link_prediction(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let data = load_data(config)?;
    run_link_prediction_with(config, &data.store)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub store: StoreStats,
    pub mentions: usize,
    pub dropped_entities: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbnyt_before: Option<CorpusStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbnyt_after: Option<CorpusStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbnyt_dropped: Option<BTreeMap<String, usize>>,
}

fn count_reasons(drops: &[crate::corpus::DropRecord]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for d in drops {
        *m.entry(d.reason.as_str().to_string()).or_insert(0) += 1;
    }
    m
}

/// Runs both text pipelines and writes their outputs into `out`:
/// `mentions.tsv`, `mention_drops.tsv`, `relation_samples.tsv`,
/// `fbnyt_drops.tsv`, rejection reports and `summary.json`.
pub fn prepare_data(config: &ExperimentConfig, out: &Path) -> Result<PrepareSummary> {
    config.data.check_exists()?;
    let (store, triple_rej) =
        TripleStore::load(&config.data.split_paths()?, &LoadOptions::default())?;
    let d = &config.data;
    let (catalog, meta_rej) = EntityCatalog::load(
        d.labels.as_deref(),
        d.types.as_deref(),
        d.descriptions.as_deref(),
        store.entities(),
    )?;
    write_rejections(&out.join("rejected_triples.tsv"), &triple_rej)?;
    write_rejections(&out.join("rejected_labels.tsv"), &meta_rej.labels)?;
    write_rejections(&out.join("rejected_types.tsv"), &meta_rej.types)?;
    write_rejections(
        &out.join("rejected_descriptions.tsv"),
        &meta_rej.descriptions,
    )?;

    let DescriptionCorpus { mentions, drops } =
        prepare_descriptions(store.num_entities(), &catalog, config.max_gap);
    write_mentions(&out.join("mentions.tsv"), &mentions, store.entities())?;
    write_drops(&out.join("mention_drops.tsv"), &drops, |e| {
        store.entities().symbol(e).unwrap_or_default().to_string()
    })?;
    let mut summary = PrepareSummary {
        store: store.stats(Some(&catalog)),
        mentions: mentions.len(),
        dropped_entities: count_reasons(&drops),
        fbnyt_before: None,
        fbnyt_after: None,
        fbnyt_dropped: None,
    };
    if let Some(path) = &d.fbnyt {
        let filtered = filter_fbnyt(&parse_fbnyt(path)?, &store);
        write_relation_samples(&out.join("relation_samples.tsv"), &filtered.samples, &store)?;
        write_drops(&out.join("fbnyt_drops.tsv"), &filtered.drops, |i| {
            i.to_string()
        })?;
        summary.fbnyt_before = Some(filtered.before);
        summary.fbnyt_after = Some(filtered.after);
        summary.fbnyt_dropped = Some(count_reasons(&filtered.drops));
    }
    write_all(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
