//! Ranking metrics.
//!
//! For a ranked label list and a gold set of size `m`:
//!
//! - `Precision@n = |top-n ∩ gold| / n`
//! - `AP@k = (1/m) Σ_{i ≤ k, label_i ∈ gold} Precision@i` (normalized by `m`
//!   even when `k < m`, so AP@k is capped at `k/m` there)
//! - `RR = 1/R` with `R` the 1-based rank of the first gold label, 0 if none is ranked
//! - MAP@k and MRR are the means over samples; Hits@k is the fraction of ranks `≤ k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg_store::{Triple, TripleStore};
use crate::kge::EmbeddingTable;
use crate::util::{create, mean_std};
use crate::{Error, Result};

/// Labels by descending score, ties by ascending label id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub labels: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedPrediction {
    /// Ranks label ids `0..scores.len()`.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut labels: Vec<usize> = (0..scores.len()).collect();
        labels.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let scores = labels.iter().map(|&l| scores[l]).collect();
        Self { labels, scores }
    }

    /// Builds a prediction from an explicit order; scores descend by position.
    pub fn from_order(labels: Vec<usize>) -> Self {
        let n = labels.len();
        let scores = (0..n).map(|i| (n - i) as f64).collect();
        Self { labels, scores }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub prediction: RankedPrediction,
    pub gold: BTreeSet<usize>,
}

impl EvalRecord {
    pub fn new(prediction: RankedPrediction, gold: impl IntoIterator<Item = usize>) -> Self {
        Self {
            prediction,
            gold: gold.into_iter().collect(),
        }
    }
}

fn hits_in_top(rec: &EvalRecord, n: usize) -> usize {
    rec.prediction
        .labels
        .iter()
        .take(n)
        .filter(|l| rec.gold.contains(l))
        .count()
}

/// # Panics
/// If `n == 0`.
pub fn precision_at_n(rec: &EvalRecord, n: usize) -> f64 {
    assert!(n >= 1, "precision cut-off must be at least 1");
    hits_in_top(rec, n) as f64 / n as f64
}

/// # Panics
/// If `k == 0`.
pub fn ap_at_k(rec: &EvalRecord, k: usize) -> f64 {
    assert!(k >= 1, "AP cut-off must be at least 1");
    if rec.gold.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, label) in rec.prediction.labels.iter().take(k).enumerate() {
        if rec.gold.contains(label) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / rec.gold.len() as f64
}

/// 1-based rank of the first gold label, if any gold label is ranked.
pub fn first_gold_rank(rec: &EvalRecord) -> Option<usize> {
    rec.prediction
        .labels
        .iter()
        .position(|l| rec.gold.contains(l))
        .map(|p| p + 1)
}

pub fn rr(rec: &EvalRecord) -> f64 {
    first_gold_rank(rec).map_or(0.0, |r| 1.0 / r as f64)
}

fn mean_of(records: &[EvalRecord], f: impl Fn(&EvalRecord) -> f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    Ok(records.iter().map(f).sum::<f64>() / records.len() as f64)
}

pub fn map_at_k(records: &[EvalRecord], k: usize) -> Result<f64> {
    mean_of(records, |r| ap_at_k(r, k))
}

pub fn mrr(records: &[EvalRecord]) -> Result<f64> {
    mean_of(records, rr)
}

pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

pub fn mean_reciprocal_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Subject,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Raw,
    Filtered,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Raw => "raw",
            Protocol::Filtered => "filtered",
        }
    }
}

/// Rank of `true_score` among itself and `others`: strictly better
/// candidates first, then the tied group, with the true item placed at the
/// group's mean position rounded up.
pub fn tie_aware_rank(true_score: f64, others: impl Iterator<Item = f64>) -> usize {
    let (mut better, mut tied) = (0usize, 0usize);
    for s in others {
        if s > true_score {
            better += 1;
        } else if s == true_score {
            tied += 1;
        }
    }
    better + 1 + tied.div_ceil(2)
}

/// 1-based rank of the true entity of `t` among all replacements of `side`.
pub fn rank_entity(
    table: &EmbeddingTable,
    t: &Triple,
    side: Side,
    protocol: Protocol,
    store: &TripleStore,
) -> usize {
    let (truth, known) = match side {
        Side::Subject => (t.subject, store.known_subjects(t.object, t.relation)),
        Side::Object => (t.object, store.known_objects(t.subject, t.relation)),
    };
    let replace = |e: usize| match side {
        Side::Subject => Triple::new(e, t.relation, t.object),
        Side::Object => Triple::new(t.subject, t.relation, e),
    };
    let true_score = table.score(t);
    let others = (0..table.num_entities())
        .filter(|&e| e != truth)
        .filter(|e| protocol == Protocol::Raw || !known.contains(e))
        .map(|e| table.score(&replace(e)));
    tie_aware_rank(true_score, others)
}

/// Subject-side and object-side ranks for every triple, in input order.
pub fn rank_all(
    table: &EmbeddingTable,
    triples: &[Triple],
    protocol: Protocol,
    store: &TripleStore,
) -> Vec<usize> {
    triples
        .par_iter()
        .flat_map_iter(|t| {
            [Side::Subject, Side::Object]
                .into_iter()
                .map(move |side| rank_entity(table, t, side, protocol, store))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    PrecisionAt(usize),
    MapAt(usize),
    Mrr,
    HitsAt(usize),
}

impl Metric {
    fn check(self) -> Result<Self> {
        match self {
            Metric::PrecisionAt(0) | Metric::MapAt(0) | Metric::HitsAt(0) => Err(Error::Config(
                format!("cut-off of {self} must be at least 1"),
            )),
            m => Ok(m),
        }
    }

    /// Per-record value. Hits@k on a label ranking asks whether the first
    /// gold label sits within the top k.
    pub fn of_record(&self, rec: &EvalRecord) -> f64 {
        match *self {
            Metric::PrecisionAt(n) => precision_at_n(rec, n),
            Metric::MapAt(k) => ap_at_k(rec, k),
            Metric::Mrr => rr(rec),
            Metric::HitsAt(k) => f64::from(u8::from(first_gold_rank(rec).is_some_and(|r| r <= k))),
        }
    }

    /// Per-rank value for entity ranking. Precision/MAP have no meaning there.
    pub fn of_rank(&self, rank: usize) -> Option<f64> {
        match *self {
            Metric::Mrr => Some(1.0 / rank as f64),
            Metric::HitsAt(k) => Some(f64::from(u8::from(rank <= k))),
            Metric::PrecisionAt(_) | Metric::MapAt(_) => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::PrecisionAt(n) => write!(f, "precision@{n}"),
            Metric::MapAt(k) => write!(f, "map@{k}"),
            Metric::Mrr => write!(f, "mrr"),
            Metric::HitsAt(k) => write!(f, "hits@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, k) = match lower.split_once('@') {
            Some((name, k)) => {
                let k = k
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad cut-off in `{s}`")))?;
                (name.to_string(), Some(k))
            }
            None => (lower, None),
        };
        let metric = match (name.as_str(), k) {
            ("precision" | "p", Some(k)) => Metric::PrecisionAt(k),
            ("map", Some(k)) => Metric::MapAt(k),
            ("mrr", None) => Metric::Mrr,
            ("hits", Some(k)) => Metric::HitsAt(k),
            _ => return Err(Error::Config(format!("unknown metric `{s}`"))),
        };
        metric.check()
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("metric values"));
        }
        let (mean, std) = mean_std(&values);
        Ok(Self {
            mean,
            std,
            n: values.len(),
            values,
        })
    }
}

/// Metric name → summary, with per-sample values kept for dumps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl MetricReport {
    pub fn from_records(records: &[EvalRecord], metrics: &[Metric]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("evaluation records"));
        }
        let mut report = Self::default();
        for m in metrics {
            let values = records.iter().map(|r| m.of_record(r)).collect();
            report
                .metrics
                .insert(m.to_string(), MetricSummary::from_values(values)?);
        }
        Ok(report)
    }

    /// Only rank-based metrics (MRR, Hits@k) are reported.
    pub fn from_ranks(ranks: &[usize], metrics: &[Metric]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Empty("rank list"));
        }
        let mut report = Self::default();
        for m in metrics {
            let values: Option<Vec<f64>> = ranks.iter().map(|&r| m.of_rank(r)).collect();
            if let Some(values) = values {
                report
                    .metrics
                    .insert(m.to_string(), MetricSummary::from_values(values)?);
            }
        }
        Ok(report)
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.mean)
    }

    /// One row per sample, one column per metric.
    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self.metrics.keys().collect();
        let mut out = String::from("sample");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        let rows = self
            .metrics
            .values()
            .map(|s| s.values.len())
            .max()
            .unwrap_or(0);
        for i in 0..rows {
            out.push_str(&i.to_string());
            for n in &names {
                out.push(',');
                if let Some(v) = self.metrics[*n].values.get(i) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        w.write_all(self.to_csv().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}
