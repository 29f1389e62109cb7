//! Helpers shared by the integration tests: exact metric oracles, finite
//! difference gradient checks, and random instance generators.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write;

use kgctx::classifier::{objective, LogRegMode, LogRegModel};
use kgctx::kg_store::{EntityCatalog, MetadataSources, Triple, Vocabulary};
use kgctx::kge::{
    batch_gradient, batch_loss, EmbeddingTable, LossConfig, ModelKind, Norm, TrainingUnit,
};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Q = Ratio<i64>;

pub fn q_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Hits in the first `n` slots over `n`; slots past the end count as misses.
pub fn oracle_precision(ranking: &[usize], gold: &BTreeSet<usize>, n: usize) -> Q {
    let hits = ranking.iter().take(n).filter(|l| gold.contains(l)).count();
    Q::new(hits as i64, n as i64)
}

pub fn oracle_ap(ranking: &[usize], gold: &BTreeSet<usize>, k: usize) -> Q {
    let mut total = Q::from_integer(0);
    for i in 1..=k.min(ranking.len()) {
        if gold.contains(&ranking[i - 1]) {
            total += oracle_precision(ranking, gold, i);
        }
    }
    total / Q::from_integer(gold.len() as i64)
}

pub fn oracle_rr(ranking: &[usize], gold: &BTreeSet<usize>) -> Q {
    match ranking.iter().position(|l| gold.contains(l)) {
        Some(p) => Q::new(1, p as i64 + 1),
        None => Q::from_integer(0),
    }
}

/// Textbook average precision: mean over gold labels of the precision at
/// each gold label's position.
pub fn classic_ap(ranking: &[usize], gold: &BTreeSet<usize>) -> Q {
    let mut sum = Q::from_integer(0);
    let mut found = 0i64;
    for (pos, l) in ranking.iter().enumerate() {
        if gold.contains(l) {
            found += 1;
            sum += Q::new(found, pos as i64 + 1);
        }
    }
    sum / Q::from_integer(gold.len() as i64)
}

/// Random ranking over up to 20 labels (sometimes truncated) with 1 to 5 gold labels.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<usize>, BTreeSet<usize>) {
    let n = rng.gen_range(1..=20);
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.shuffle(rng);
    let m = rng.gen_range(1..=n.min(5));
    let gold: BTreeSet<usize> = ranking.choose_multiple(rng, m).copied().collect();
    if rng.gen_bool(0.2) {
        ranking.truncate(rng.gen_range(1..=n));
    }
    (ranking, gold)
}

/// Exact rank by sorting all candidate scores: 1 + strictly better, plus half
/// the ties (rounded up).
pub fn sort_oracle_rank(true_score: f64, mut candidates: Vec<f64>) -> usize {
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let better = candidates.iter().take_while(|&&s| s > true_score).count();
    let tied = candidates.iter().filter(|&&s| s == true_score).count();
    better + 1 + (tied + 1) / 2
}

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Relative error. The 1e-6 floor keeps exact-zero gradients from being
/// judged against the ~1e-11 roundoff of a central difference.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between the analytic KGE gradient and central differences.
pub fn kge_gradient_error(table: &EmbeddingTable, cfg: &LossConfig, units: &[TrainingUnit]) -> f64 {
    let (_, grad) = batch_gradient(table, cfg, units);
    let (ge, gr) = grad.dense(table);
    let mut worst: f64 = 0.0;
    let mut probe = table.clone();
    let n_ent = ge.len();
    for i in 0..n_ent + gr.len() {
        let orig = param(&probe, i);
        set_param(&mut probe, i, orig + FD_EPS);
        let plus = batch_loss(&probe, cfg, units);
        set_param(&mut probe, i, orig - FD_EPS);
        let minus = batch_loss(&probe, cfg, units);
        set_param(&mut probe, i, orig);
        let numeric = (plus - minus) / (2.0 * FD_EPS);
        let analytic = if i < n_ent { ge[i] } else { gr[i - n_ent] };
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Parameter `i` counting entity cells first, then relation cells.
pub fn param(t: &EmbeddingTable, i: usize) -> f64 {
    let (e, r) = t.params();
    if i < e.len() {
        e[i]
    } else {
        r[i - e.len()]
    }
}

pub fn set_param(t: &mut EmbeddingTable, i: usize, v: f64) {
    let (e, r) = t.params_mut();
    if i < e.len() {
        e[i] = v;
    } else {
        r[i - e.len()] = v;
    }
}

/// Random small KGE instance. For TransE it is redrawn until every hinge and
/// every L1 coordinate sits away from its kink, where central differences
/// are meaningless.
pub fn kge_instance(
    kind: ModelKind,
    rng: &mut impl Rng,
) -> (EmbeddingTable, LossConfig, Vec<TrainingUnit>) {
    let (ne, nr, dim) = (6, 2, 4);
    loop {
        let mut table = EmbeddingTable::random(kind, dim, ne, nr, rng).unwrap();
        // Spread values beyond the tiny init range so losses are not all saturated alike.
        let (e, r) = table.params_mut();
        e.iter_mut()
            .chain(r.iter_mut())
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let cfg = LossConfig {
            kind,
            margin: 1.0,
            l2_weight: 0.05,
        };
        let triple = |rng: &mut dyn rand::RngCore| {
            Triple::new(
                rng.gen_range(0..ne),
                rng.gen_range(0..nr),
                rng.gen_range(0..ne),
            )
        };
        let units: Vec<TrainingUnit> = (0..3)
            .map(|_| TrainingUnit {
                positive: triple(rng),
                negatives: (0..2).map(|_| triple(rng)).collect(),
            })
            .collect();
        if kind.is_transe() && !transe_smooth(&table, &cfg, &units) {
            continue;
        }
        return (table, cfg, units);
    }
}

fn transe_smooth(table: &EmbeddingTable, cfg: &LossConfig, units: &[TrainingUnit]) -> bool {
    let gap = 1e-3;
    let all = units
        .iter()
        .flat_map(|u| std::iter::once(&u.positive).chain(&u.negatives));
    for t in all {
        let (h, r, o) = (
            table.entity(t.subject),
            table.relation(t.relation),
            table.entity(t.object),
        );
        let diff: Vec<f64> = (0..h.len()).map(|i| h[i] + r[i] - o[i]).collect();
        let kinked = match table.kind() {
            ModelKind::TransE { norm: Norm::L1 } => diff.iter().any(|d| d.abs() < gap),
            _ => diff.iter().map(|d| d * d).sum::<f64>() < gap,
        };
        if kinked {
            return false;
        }
    }
    units.iter().all(|u| {
        let pos = table.score(&u.positive);
        u.negatives
            .iter()
            .all(|n| (cfg.margin + table.score(n) - pos).abs() > gap)
    })
}

pub fn labels(n: usize) -> Vocabulary {
    (0..n).map(|i| format!("L{i}")).collect()
}

/// Random model and data for a logistic-regression gradient check.
pub fn logreg_instance(
    mode: LogRegMode,
    rng: &mut impl Rng,
) -> (LogRegModel, Vec<Vec<f64>>, Vec<BTreeSet<usize>>) {
    let (k, d, n) = (4, 3, 7);
    let model = LogRegModel {
        mode,
        n_features: d,
        weights: (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        biases: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        label_vocab: labels(k),
        standardizer: None,
    };
    let x = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let y = (0..n)
        .map(|_| match mode {
            LogRegMode::Multinomial => [rng.gen_range(0..k)].into(),
            LogRegMode::OneVsRest => (0..k).filter(|_| rng.gen_bool(0.4)).collect(),
        })
        .collect();
    (model, x, y)
}

pub fn logreg_gradient_error(
    model: &LogRegModel,
    x: &[Vec<f64>],
    y: &[BTreeSet<usize>],
    l2: f64,
) -> f64 {
    let g = model.loss_gradient(x, y, l2);
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    let nw = model.weights.len();
    for i in 0..nw + model.biases.len() {
        let orig = if i < nw {
            probe.weights[i]
        } else {
            probe.biases[i - nw]
        };
        let mut at = |v: f64| {
            if i < nw {
                probe.weights[i] = v;
            } else {
                probe.biases[i - nw] = v;
            }
            objective(&probe, x, y, l2)
        };
        let numeric = (at(orig + FD_EPS) - at(orig - FD_EPS)) / (2.0 * FD_EPS);
        at(orig);
        let analytic = if i < nw {
            g.weights[i]
        } else {
            g.biases[i - nw]
        };
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

const WORDS: [&str; 12] = [
    "river", "stone", "Blue", "North", "band", "city", "the", "of", "and", "Music", "Park", "Hall",
];

/// Random catalog: some entities lack descriptions, some names appear
/// verbatim, some interrupted, some never.
pub fn fuzz_catalog(n: usize, seed: u64) -> (Vocabulary, EntityCatalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vocabulary = (0..n).map(|i| format!("/m/{i:04}")).collect();
    let (mut labels, mut descs) = (String::new(), String::new());
    let pick = |rng: &mut ChaCha8Rng| WORDS[rng.gen_range(0..WORDS.len())];
    for (_, sym) in vocab.iter() {
        let name: Vec<&str> = (0..rng.gen_range(1..4)).map(|_| pick(&mut rng)).collect();
        if rng.gen_bool(0.9) {
            writeln!(labels, "{sym}\t{}", name.join(" ")).unwrap();
        }
        match rng.gen_range(0..5) {
            0 => {}
            1 => writeln!(descs, "{sym}\t   ").unwrap(),
            _ => {
                let mut words: Vec<String> = (0..rng.gen_range(0..8))
                    .map(|_| pick(&mut rng).to_string())
                    .collect();
                let at = rng.gen_range(0..=words.len());
                let mut inserted: Vec<String> = Vec::new();
                for w in &name {
                    inserted.push(w.to_string());
                    if rng.gen_bool(0.3) {
                        inserted.push(pick(&mut rng).to_string());
                    }
                }
                if rng.gen_bool(0.7) {
                    words.splice(at..at, inserted);
                }
                writeln!(
                    descs,
                    "{sym}\t{}. Another {} here.",
                    words.join(" "),
                    pick(&mut rng)
                )
                .unwrap();
            }
        }
    }
    let (catalog, rej) = EntityCatalog::from_sources(
        MetadataSources {
            labels: &labels,
            types: "",
            descriptions: &descs,
        },
        &vocab,
    );
    assert_eq!(rej.total(), 0);
    (vocab, catalog)
}
