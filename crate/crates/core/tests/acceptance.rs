//! Acceptance checks. Runs as a plain binary and prints one line per
//! criterion; exits non-zero if any criterion fails.
//!
//! Criterion 8(a) needs the FB15K triples. Point `KGCTX_FB15K_DIR` at a
//! directory holding train.txt / valid.txt / test.txt to run it; without
//! it the line reads NOT RUN and does not count as a pass.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use kgctx::classifier::LogRegMode;
use kgctx::combiner::{ContextProvider, FeatureExtractor, FeatureMode, PseudoContextual};
use kgctx::corpus::{
    filter_fbnyt, parse_fbnyt_str, prepare_descriptions, select_context, DropReason,
};
use kgctx::harness::{
    prepare_data, run_entity_typing, run_entity_typing_with, run_link_prediction,
    run_link_prediction_with, run_relation_prediction, run_relation_prediction_with, DataConfig,
    ExperimentConfig, KgSource, Resources, RunReport, Task,
};
use kgctx::kg_store::{EntityCatalog, MetadataSources, Triple, Vocabulary};
use kgctx::kge::{score_vectors, train, EmbeddingTable, ModelKind, Norm, TrainConfig, VectorFile};
use kgctx::metrics::{
    ap_at_k, hits_at_k, map_at_k, mean_reciprocal_rank, mrr, precision_at_n, rr, tie_aware_rank,
    EvalRecord, Metric, RankedPrediction,
};
use kgctx::synthetic::{
    direction_pairs, inverse_cycle, keyword_corpus, random_kg, typed_kg, write_splits,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
    let took = start.elapsed();
    let time = match limit {
        Some(l) => format!("{:.2}s, limit {}s", took.as_secs_f64(), l.as_secs()),
        None => format!("{:.2}s", took.as_secs_f64()),
    };
    match result {
        Ok(d) if limit.is_none_or(|l| took < l) => Outcome::Pass(format!("{d} [{time}]")),
        Ok(d) => Outcome::Fail(format!("{d} [{time}: too slow]")),
        Err(d) => Outcome::Fail(format!("{d} [{time}]")),
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn synth_training(model: ModelKind) -> TrainConfig {
    TrainConfig {
        model,
        dim: 16,
        epochs: 200,
        learning_rate: 0.2,
        batch_size: 16,
        negatives_per_positive: 20,
        l2_weight: 0.0,
        ..Default::default()
    }
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut records = Vec::new();
    let mut oracle_aps: BTreeMap<usize, Vec<Q>> = BTreeMap::new();
    let mut oracle_rrs = Vec::new();
    let mut first_ranks = Vec::new();
    for _ in 0..1000 {
        let (ranking, gold) = random_instance(&mut rng);
        let rec = EvalRecord::new(
            RankedPrediction::from_order(ranking.clone()),
            gold.iter().copied(),
        );
        for cut in 1..=20 {
            worst = worst.max(
                (precision_at_n(&rec, cut) - q_to_f64(oracle_precision(&ranking, &gold, cut)))
                    .abs(),
            );
            let ap = oracle_ap(&ranking, &gold, cut);
            worst = worst.max((ap_at_k(&rec, cut) - q_to_f64(ap)).abs());
            oracle_aps.entry(cut).or_default().push(ap);
            let first = ranking.iter().position(|l| gold.contains(l)).map(|p| p + 1);
            let hit = f64::from(u8::from(first.is_some_and(|r| r <= cut)));
            worst = worst.max((Metric::HitsAt(cut).of_record(&rec) - hit).abs());
        }
        let r = oracle_rr(&ranking, &gold);
        worst = worst.max((rr(&rec) - q_to_f64(r)).abs());
        oracle_rrs.push(r);
        if let Some(p) = ranking.iter().position(|l| gold.contains(l)) {
            first_ranks.push(p + 1);
        }
        records.push(rec);
    }
    let n = Q::from_integer(records.len() as i64);
    for (cut, aps) in &oracle_aps {
        let exact = aps.iter().copied().sum::<Q>() / n;
        worst = worst.max((map_at_k(&records, *cut).unwrap() - q_to_f64(exact)).abs());
        let hits = first_ranks.iter().filter(|&&r| r <= *cut).count();
        let exact_hits = Q::new(hits as i64, first_ranks.len() as i64);
        worst = worst.max((hits_at_k(&first_ranks, *cut).unwrap() - q_to_f64(exact_hits)).abs());
    }
    let exact_mrr = oracle_rrs.iter().copied().sum::<Q>() / n;
    worst = worst.max((mrr(&records).unwrap() - q_to_f64(exact_mrr)).abs());
    ensure(
        worst <= 1e-12,
        format!("1000 instances, cut-offs 1..20, max |diff| {worst:.1e} (tol 1e-12)"),
    )
}

fn worked_values() -> Check {
    let (a, b, c, x, y) = (0, 1, 2, 3, 4);
    let p = precision_at_n(
        &EvalRecord::new(RankedPrediction::from_order(vec![a, x, b, y, c]), [a, b, c]),
        5,
    );
    let ap = ap_at_k(
        &EvalRecord::new(RankedPrediction::from_order(vec![a, x, b]), [a, b]),
        3,
    );
    let m = mean_reciprocal_rank(&[1, 2, 4]).unwrap();
    let h = hits_at_k(&[1, 5, 11], 10).unwrap();
    let want = [
        (p, 3.0 / 5.0),
        (ap, 5.0 / 6.0),
        (m, 7.0 / 12.0),
        (h, 2.0 / 3.0),
    ];
    let worst = want
        .iter()
        .map(|(got, exact)| (got - exact).abs())
        .fold(0.0, f64::max);
    ensure(
        worst <= 1e-12,
        format!("precision {p:.4}, AP {ap:.4}, MRR {m:.4}, hits@10 {h:.4}; max |diff| from 3/5, 5/6, 7/12, 2/3 is {worst:.1e}"),
    )
}

fn gradient_checks() -> Check {
    const INSTANCES: usize = 20;
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in [
        ModelKind::TransE { norm: Norm::L2 },
        ModelKind::TransE { norm: Norm::L1 },
        ModelKind::DistMult,
        ModelKind::ComplEx,
    ] {
        for _ in 0..INSTANCES {
            let (table, cfg, units) = kge_instance(kind, &mut rng);
            let e = kge_gradient_error(&table, &cfg, &units);
            let w = worst.entry(kind.name().to_string()).or_default();
            *w = w.max(e);
        }
    }
    for mode in [LogRegMode::Multinomial, LogRegMode::OneVsRest] {
        for _ in 0..INSTANCES {
            let (model, x, y) = logreg_instance(mode, &mut rng);
            for l2 in [0.0, 0.1] {
                let e = logreg_gradient_error(&model, &x, &y, l2);
                let w = worst.entry(format!("{mode:?}").to_lowercase()).or_default();
                *w = w.max(e);
            }
        }
    }
    let summary: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    ensure(
        worst.values().all(|&v| v <= FD_REL_TOL),
        format!(
            "{INSTANCES} instances each, eps {FD_EPS:e}, worst rel. error: {}",
            summary.join(", ")
        ),
    )
}

fn algebraic_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut v = |d: usize| -> Vec<f64> { (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    let mut symmetric = true;
    let mut reduces = true;
    for _ in 0..200 {
        let (h, r, t) = (v(8), v(8), v(8));
        symmetric &= score_vectors(ModelKind::DistMult, &h, &r, &t)
            == score_vectors(ModelKind::DistMult, &t, &r, &h);
        // Interleaved layout: real parts at even positions, imaginary parts zero.
        let widen = |x: &[f64]| -> Vec<f64> { x.iter().flat_map(|&a| [a, 0.0]).collect() };
        let complex = score_vectors(ModelKind::ComplEx, &widen(&h), &widen(&r), &widen(&t));
        reduces &= complex == score_vectors(ModelKind::DistMult, &h, &r, &t);
    }
    let (one, i) = ([1.0, 0.0], [0.0, 1.0]);
    let forward = score_vectors(ModelKind::ComplEx, &one, &i, &i);
    let backward = score_vectors(ModelKind::ComplEx, &i, &i, &one);
    let zero = [0.0, 0.0];
    let tail = [3.0, 4.0];
    let l2 = score_vectors(ModelKind::TransE { norm: Norm::L2 }, &zero, &zero, &tail);
    let l1 = score_vectors(ModelKind::TransE { norm: Norm::L1 }, &zero, &zero, &tail);
    let on_target = score_vectors(
        ModelKind::TransE { norm: Norm::L2 },
        &[1.0, 2.0],
        &[2.0, 2.0],
        &[3.0, 4.0],
    );
    ensure(
        symmetric && reduces && forward == 1.0 && backward == -1.0 && l2 == -5.0 && l1 == -7.0 && on_target == 0.0,
        format!(
            "distmult symmetric {symmetric}, complex==distmult at zero imag {reduces}, witness ({forward}, {backward}), \
             transe zero translation L2 {l2} L1 {l1}, exact translation {on_target}"
        ),
    )
}

fn synthetic_link_prediction() -> Check {
    let store = inverse_cycle(50).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        task: Task::LinkPrediction,
        kg: KgSource::Train(synth_training(ModelKind::ComplEx)),
        link_models: vec![ModelKind::ComplEx],
        ..Default::default()
    };
    let report = run_link_prediction_with(&cfg, &store).map_err(|e| e.to_string())?;
    let complex_h1 = report.modes["complex/filtered"]
        .metrics
        .mean("hits@1")
        .unwrap();

    let distmult = train(&store, &synth_training(ModelKind::DistMult))
        .map_err(|e| e.to_string())?
        .table;
    let pairs = direction_pairs(&store, 0);
    let ranks: Vec<usize> = pairs
        .iter()
        .map(|&(a, b)| {
            let forward = distmult.score(&Triple::new(a, 0, b));
            let backward = distmult.score(&Triple::new(b, 0, a));
            tie_aware_rank(forward, std::iter::once(backward))
        })
        .collect();
    let distmult_h1 = hits_at_k(&ranks, 1).map_err(|e| e.to_string())?;
    ensure(
        complex_h1 >= 0.95 && distmult_h1 <= 0.5,
        format!(
            "complex filtered hits@1 {complex_h1:.3} (>= 0.95); distmult direction hits@1 {distmult_h1:.3} over {} pairs (<= 0.5)",
            pairs.len()
        ),
    )
}

fn one_entity_catalog(lex: &str, desc: &str) -> EntityCatalog {
    let vocab: Vocabulary = ["/m/x"].into_iter().collect();
    let labels = format!("/m/x\t{lex}\n");
    let descriptions = format!("/m/x\t{desc}\n");
    EntityCatalog::from_sources(
        MetadataSources {
            labels: &labels,
            types: "",
            descriptions: &descriptions,
        },
        &vocab,
    )
    .0
}

const ACTOR_GB: &str =
    "An actor is a person portraying a character in a dramatic or comic production; \
                        she or he performs in: film, television, theatre, or radio etc.";
const EMILY_BLUNT: &str = "Emily Olivia Leah Blunt is an English actress. She has appeared in The Devil Wears Prada, \
                           The Young Victoria, The Adjustment Bureau, and Looper. She has been nominated etc.";
const E1_MUSIC: &str = "E1 Music, the primary subsidiary of Entertainment One LP, is an independent record label in \
                        the United States. It is widely regarded as the most successful independent record label in \
                        the United States, having garnered the most Billboard hits of any independently-owned music \
                        label in history etc.";

fn corpus_fixtures() -> Check {
    let actor = select_context(0, &one_entity_catalog("Actor-GB", ACTOR_GB), 1);
    let actor_ok = matches!(&actor, Err(d) if d.reason == DropReason::MentionNotFound);
    let blunt = select_context(0, &one_entity_catalog("Emily Blunt", EMILY_BLUNT), 1);
    let blunt_ok = matches!(&blunt, Err(d) if d.reason == DropReason::GapExceeded);
    let e1 = select_context(0, &one_entity_catalog("E1 Music", E1_MUSIC), 1);
    let (e1_ok, e1_head) = match &e1 {
        Ok(m) => (
            m.head_token() == "Music"
                && m.span.start == 0
                && m.span.end == 1
                && m.sentence.tokens[2] == ",",
            m.head_token().to_string(),
        ),
        Err(d) => (false, d.reason.as_str().to_string()),
    };

    let n = 1000;
    let (_, catalog) = fuzz_catalog(n, 42);
    let corpus = prepare_descriptions(n, &catalog, 1);
    let mut seen = vec![0u8; n];
    corpus.mentions.iter().for_each(|m| seen[m.entity] += 1);
    corpus.drops.iter().for_each(|d| seen[d.item] += 1);
    let partition = seen.iter().all(|&c| c == 1);
    ensure(
        actor_ok && blunt_ok && e1_ok && partition,
        format!(
            "Actor-GB dropped {actor_ok}, Emily Blunt gap_exceeded {blunt_ok}, E1 Music head {e1_head:?} {e1_ok}; \
             partition over {n} entities {partition} ({} accepted, {} dropped)",
            corpus.mentions.len(),
            corpus.drops.len()
        ),
    )
}

fn concatenation_identity() -> Check {
    let catalog = one_entity_catalog("E1 Music", E1_MUSIC);
    let mention = select_context(0, &catalog, 1).map_err(|d| d.reason.as_str().to_string())?;
    let entities: Vocabulary = ["/m/x"].into_iter().collect();
    let table = EmbeddingTable::random(
        ModelKind::ComplEx,
        400,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .map_err(|e| e.to_string())?;
    let ctx = PseudoContextual { dim: 512, seed: 3 };
    let key = mention.key(&entities);
    let ctx_vec = ctx.context_vector(&key, &mention).unwrap().into_owned();
    let extractor = |mode| {
        FeatureExtractor::new(
            mode,
            Some(&table),
            Some(&ctx as &dyn ContextProvider),
            &entities,
        )
    };
    let concat = extractor(FeatureMode::Concat)
        .features(&mention)
        .map_err(|e| e.to_string())?;
    let alone_ctx = extractor(FeatureMode::Contextual)
        .features(&mention)
        .map_err(|e| e.to_string())?;
    let alone_kg = extractor(FeatureMode::Kg)
        .features(&mention)
        .map_err(|e| e.to_string())?;
    let d_out = extractor(FeatureMode::Concat).output_dim();
    let identical = concat[..512] == ctx_vec[..]
        && concat[512..] == *table.entity(0)
        && alone_ctx == ctx_vec
        && alone_kg == table.entity(0);
    ensure(
        identical && d_out == 912 && concat.len() == 912,
        format!("slices element-exact {identical}; d_out {d_out} for 512 + 400"),
    )
}

fn fb15k_ordering(dir: &Path) -> Check {
    let cfg = ExperimentConfig {
        task: Task::LinkPrediction,
        data: DataConfig {
            triples_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_link_prediction(&cfg).map_err(|e| e.to_string())?;
    let h10 = |m: &str| {
        report.modes[&format!("{m}/raw")]
            .metrics
            .mean("hits@10")
            .unwrap()
    };
    let (c, d, t) = (h10("complex"), h10("distmult"), h10("transe"));
    ensure(
        c >= d && d > t,
        format!("raw hits@10 complex {c:.3}, distmult {d:.3}, transe {t:.3} (want complex >= distmult > transe)"),
    )
}

fn synthetic_tasks() -> Check {
    let kg = typed_kg(8, 25, 0).map_err(|e| e.to_string())?;
    let corpus = prepare_descriptions(kg.store.num_entities(), &kg.catalog, 1);
    let table = train(&kg.store, &synth_training(ModelKind::ComplEx))
        .map_err(|e| e.to_string())?
        .table;
    let ctx = PseudoContextual { dim: 64, seed: 0 };
    let res = Resources {
        kg: Some(&table),
        context: Some(&ctx),
    };
    let typing = run_entity_typing_with(
        &ExperimentConfig::default(),
        &kg.store,
        &kg.catalog,
        &corpus.mentions,
        &res,
    )
    .map_err(|e| e.to_string())?;
    let map10 = typing.modes["kg"].metrics.mean("map@10").unwrap();

    let (store, text) = keyword_corpus(40, 400, 4, 3).map_err(|e| e.to_string())?;
    let filtered = filter_fbnyt(&parse_fbnyt_str(&text).map_err(|e| e.to_string())?, &store);
    let table = train(&store, &synth_training(ModelKind::ComplEx))
        .map_err(|e| e.to_string())?
        .table;
    let ctx = PseudoContextual { dim: 512, seed: 0 };
    let res = Resources {
        kg: Some(&table),
        context: Some(&ctx),
    };
    let cfg = ExperimentConfig {
        task: Task::RelationPrediction,
        ..Default::default()
    };
    let relations = run_relation_prediction_with(&cfg, &store, &filtered.samples, &res)
        .map_err(|e| e.to_string())?;
    let rel_mrr = relations.modes["contextual"].metrics.mean("mrr").unwrap();
    ensure(
        map10 >= 0.95 && rel_mrr >= 0.95,
        format!("typing (kg features) MAP@10 {map10:.3} (>= 0.95); relations (contextual) MRR {rel_mrr:.3} (>= 0.95)"),
    )
}

fn random_embedding_mrr() -> Check {
    let n = 300;
    let store = random_kg(n, 4, 2000, 2000, 12).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        task: Task::LinkPrediction,
        kg: KgSource::Train(TrainConfig {
            dim: 32,
            epochs: 0,
            ..Default::default()
        }),
        link_models: vec![ModelKind::ComplEx],
        ..Default::default()
    };
    let report = run_link_prediction_with(&cfg, &store).map_err(|e| e.to_string())?;
    let raw = &report.modes["complex/raw"];
    let observed = raw.metrics.mean("mrr").unwrap();
    let h: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let h2: f64 = (1..=n).map(|r| 1.0 / (r * r) as f64).sum();
    let mean = h / n as f64;
    let sd = (h2 / n as f64 - mean * mean).sqrt() / (raw.n_test as f64).sqrt();
    let z = (observed - mean) / sd;
    ensure(
        z.abs() <= 3.0,
        format!(
            "raw MRR {observed:.5} vs H(n)/n {mean:.5} over {} ranks, z = {z:.2} (|z| <= 3)",
            raw.n_test
        ),
    )
}

fn dir_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

type StepResult = std::result::Result<(), Box<dyn std::error::Error>>;

/// Runs `step` into two fresh directories and compares every file written.
fn twice(
    root: &Path,
    name: &str,
    step: impl Fn(&Path) -> StepResult,
) -> std::result::Result<usize, String> {
    let a = root.join(format!("{name}-a"));
    let b = root.join(format!("{name}-b"));
    step(&a).map_err(|e| format!("{name}: {e}"))?;
    step(&b).map_err(|e| format!("{name}: {e}"))?;
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    if fa.is_empty() || fa != fb {
        let differing: BTreeSet<_> = fa
            .keys()
            .chain(fb.keys())
            .filter(|k| fa.get(*k) != fb.get(*k))
            .collect();
        return Err(format!("{name}: outputs differ in {differing:?}"));
    }
    Ok(fa.len())
}

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = root.path();
    let data = root.join("data");
    let kg = typed_kg(4, 15, 2).map_err(|e| e.to_string())?;
    write_splits(&kg.store, &data).map_err(|e| e.to_string())?;
    let (kw_store, kw_text) = keyword_corpus(40, 200, 4, 5).map_err(|e| e.to_string())?;
    let kw_dir = root.join("keywords");
    write_splits(&kw_store, &kw_dir).map_err(|e| e.to_string())?;
    for (file, text) in [
        (data.join("labels.tsv"), &kg.labels),
        (data.join("types.tsv"), &kg.types),
        (data.join("descriptions.tsv"), &kg.descriptions),
        (kw_dir.join("fbnyt.tsv"), &kw_text),
    ] {
        std::fs::write(file, text).map_err(|e| e.to_string())?;
    }
    let training = TrainConfig {
        epochs: 20,
        ..synth_training(ModelKind::ComplEx)
    };
    let typing = ExperimentConfig {
        seed: 5,
        data: DataConfig {
            triples_dir: Some(data.clone()),
            labels: Some(data.join("labels.tsv")),
            types: Some(data.join("types.tsv")),
            descriptions: Some(data.join("descriptions.tsv")),
            fbnyt: Some(kw_dir.join("fbnyt.tsv")),
            ..Default::default()
        },
        kg: KgSource::Train(training.clone()),
        min_type_count: 1,
        ..Default::default()
    };
    let relations = ExperimentConfig {
        task: Task::RelationPrediction,
        data: DataConfig {
            triples_dir: Some(kw_dir.clone()),
            fbnyt: Some(kw_dir.join("fbnyt.tsv")),
            ..Default::default()
        },
        ..typing.clone()
    };
    let cycle_dir = root.join("cycle");
    write_splits(&inverse_cycle(50).map_err(|e| e.to_string())?, &cycle_dir)
        .map_err(|e| e.to_string())?;
    let linkpred = ExperimentConfig {
        task: Task::LinkPrediction,
        data: DataConfig {
            triples_dir: Some(cycle_dir),
            ..Default::default()
        },
        ..typing.clone()
    };
    let store = kg.store.clone();
    let vectors = root.join("vectors");
    train(&store, &training)
        .and_then(|o| {
            o.table.export(
                store.entities(),
                store.relations(),
                &vectors.join("e.vec"),
                &vectors.join("r.vec"),
            )
        })
        .map_err(|e| e.to_string())?;

    let mut files = 0;
    files += twice(root, "prepare-data", |out| {
        Ok(prepare_data(&typing, out).map(|_| ())?)
    })?;
    files += twice(root, "train-kge", |out| {
        let outcome = train(&store, &training)?;
        outcome.table.export(
            store.entities(),
            store.relations(),
            &out.join("entities.vec"),
            &out.join("relations.vec"),
        )?;
        let log = serde_json::json!({ "config": training, "epochs": outcome.epochs });
        std::fs::create_dir_all(out)?;
        std::fs::write(
            out.join("training_log.json"),
            serde_json::to_string_pretty(&log).unwrap(),
        )?;
        Ok(())
    })?;
    files += twice(root, "import-embeddings", |out| {
        let ent = VectorFile::read(&vectors.join("e.vec"))?;
        let rel = VectorFile::read(&vectors.join("r.vec"))?;
        let (table, _) = EmbeddingTable::import(
            ModelKind::ComplEx,
            &ent,
            Some(&rel),
            store.entities(),
            store.relations(),
        )?;
        Ok(table.export(
            store.entities(),
            store.relations(),
            &out.join("entities.vec"),
            &out.join("relations.vec"),
        )?)
    })?;
    files += twice(root, "run-typing", |out| {
        Ok(run_entity_typing(&typing)?.write(out)?)
    })?;
    files += twice(root, "run-relations", |out| {
        Ok(run_relation_prediction(&relations)?.write(out)?)
    })?;
    files += twice(root, "run-linkpred", |out| {
        Ok(run_link_prediction(&linkpred)?.write(out)?)
    })?;
    files += twice(root, "report", |out| {
        let text = std::fs::read_to_string(root.join("run-typing-a/report.json"))?;
        std::fs::create_dir_all(out)?;
        std::fs::write(
            out.join("report.md"),
            RunReport::from_json(&text)?.to_markdown(),
        )?;
        Ok(())
    })?;
    Ok(format!(
        "7 library entry points run twice, {files} output files byte-identical"
    ))
}

fn main() {
    let fb15k = std::env::var_os("KGCTX_FB15K_DIR").map(PathBuf::from);
    let rows: Vec<(&str, Outcome)> = vec![
        (
            "1 metric oracle equivalence",
            timed(Some(Duration::from_secs(5)), metric_oracle),
        ),
        ("2 worked metric values", timed(None, worked_values)),
        (
            "3 gradient checks",
            timed(Some(Duration::from_secs(30)), gradient_checks),
        ),
        (
            "4 algebraic model properties",
            timed(None, algebraic_properties),
        ),
        (
            "5 synthetic link prediction",
            timed(Some(Duration::from_secs(120)), synthetic_link_prediction),
        ),
        ("6 corpus pipeline fixtures", timed(None, corpus_fixtures)),
        (
            "7 concatenation identity",
            timed(None, concatenation_identity),
        ),
        (
            "8a FB15K model ordering",
            match fb15k {
                Some(dir) => timed(None, || fb15k_ordering(&dir)),
                None => {
                    Outcome::NotRun("KGCTX_FB15K_DIR not set; full FB15K run not executed".into())
                }
            },
        ),
        (
            "8b synthetic typing / relation runs",
            timed(None, synthetic_tasks),
        ),
        ("8c random-embedding MRR", timed(None, random_embedding_mrr)),
        ("9 determinism", timed(None, determinism)),
    ];
    let mut failed = 0;
    for (name, outcome) in &rows {
        match outcome {
            Outcome::Pass(d) => println!("PASS    criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL    criterion {name}: {d}");
            }
            Outcome::NotRun(d) => println!("NOT RUN criterion {name}: {d}"),
        }
    }
    let not_run = rows
        .iter()
        .filter(|(_, o)| matches!(o, Outcome::NotRun(_)))
        .count();
    println!(
        "acceptance: {} passed, {failed} failed, {not_run} not run",
        rows.len() - failed - not_run
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
