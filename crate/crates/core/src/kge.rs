//! Shallow knowledge-graph embedding models.
//!
//! Scores (higher is more plausible):
//!
//! | model    | score                                   |
//! |----------|-----------------------------------------|
//! | TransE   | `-‖h + r - t‖` (L1 or L2)               |
//! | DistMult | `Σ h_i r_i t_i`                         |
//! | ComplEx  | `Re(Σ h_i r_i conj(t_i))`               |
//!
//! ComplEx vectors are stored interleaved: cell `2i` is the real part and
//! `2i + 1` the imaginary part of complex coordinate `i`.
//!
//! TransE trains on the margin ranking loss `Σ max(0, margin + s(neg) - s(pos))`.
//! DistMult and ComplEx train on the logistic loss `softplus(-y·s)` plus
//! `l2_weight · ‖·‖²` on every embedding row a training triple touches.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg_store::{Rejection, Triple, TripleStore, Vocabulary, TRAIN};
use crate::util::create;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TransE { norm: Norm },
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::TransE { norm: Norm::L2 },
        ModelKind::DistMult,
        ModelKind::ComplEx,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TransE { norm: Norm::L1 } => "transe-l1",
            ModelKind::TransE { norm: Norm::L2 } => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        }
    }

    pub fn is_transe(&self) -> bool {
        matches!(self, ModelKind::TransE { .. })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" | "transe-l2" => Ok(ModelKind::TransE { norm: Norm::L2 }),
            "transe-l1" => Ok(ModelKind::TransE { norm: Norm::L1 }),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Score of `(h, r, t)` given raw row slices.
pub fn score_vectors(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE { norm } => {
            let diffs = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            match norm {
                Norm::L1 => -diffs.map(f64::abs).sum::<f64>(),
                Norm::L2 => -diffs.map(|d| d * d).sum::<f64>().sqrt(),
            }
        }
        // Bitwise symmetric in h and t.
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| r * (h * t)).sum(),
        ModelKind::ComplEx => h
            .chunks_exact(2)
            .zip(r.chunks_exact(2))
            .zip(t.chunks_exact(2))
            .map(|((h, r), t)| {
                let (a, b, c, d, e, f) = (h[0], h[1], r[0], r[1], t[0], t[1]);
                c * (a * e + b * f) + d * (a * f - b * e)
            })
            .sum(),
    }
}

/// Adds `coef · ∂score/∂(h, r, t)` into the three gradient buffers.
pub fn score_gradient(
    kind: ModelKind,
    (h, r, t): (&[f64], &[f64], &[f64]),
    coef: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match kind {
        ModelKind::TransE { norm } => {
            let d: Vec<f64> = h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| h + r - t)
                .collect();
            let dir: Vec<f64> = match norm {
                Norm::L1 => d
                    .iter()
                    .map(|x| if *x == 0.0 { 0.0 } else { x.signum() })
                    .collect(),
                Norm::L2 => {
                    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n == 0.0 {
                        vec![0.0; d.len()]
                    } else {
                        d.iter().map(|x| x / n).collect()
                    }
                }
            };
            for i in 0..d.len() {
                gh[i] -= coef * dir[i];
                gr[i] -= coef * dir[i];
                gt[i] += coef * dir[i];
            }
        }
        ModelKind::DistMult => {
            for i in 0..h.len() {
                gh[i] += coef * r[i] * t[i];
                gr[i] += coef * h[i] * t[i];
                gt[i] += coef * h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            for i in (0..h.len()).step_by(2) {
                let (a, b, c, d, e, f) = (h[i], h[i + 1], r[i], r[i + 1], t[i], t[i + 1]);
                gh[i] += coef * (c * e + d * f);
                gh[i + 1] += coef * (c * f - d * e);
                gr[i] += coef * (a * e + b * f);
                gr[i + 1] += coef * (a * f - b * e);
                gt[i] += coef * (a * c - b * d);
                gt[i + 1] += coef * (a * d + b * c);
            }
        }
    }
}

/// Dense entity and relation vectors for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: ModelKind,
    dim: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(
        kind: ModelKind,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
    ) -> Result<Self> {
        check_dim(kind, dim)?;
        Ok(Self {
            kind,
            dim,
            entities: vec![0.0; n_entities * dim],
            relations: vec![0.0; n_relations * dim],
        })
    }

    /// Uniform in `[-0.6/√d, 0.6/√d]`, entities first, then relations.
    pub fn random(
        kind: ModelKind,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut table = Self::zeros(kind, dim, n_entities, n_relations)?;
        let bound = 0.6 / (dim as f64).sqrt();
        for v in table.entities.iter_mut().chain(table.relations.iter_mut()) {
            *v = rng.gen_range(-bound..=bound);
        }
        Ok(table)
    }

    pub fn from_rows(
        kind: ModelKind,
        dim: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        check_dim(kind, dim)?;
        if !entities.len().is_multiple_of(dim) || !relations.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: entities.len() % dim + relations.len() % dim,
            });
        }
        Ok(Self {
            kind,
            dim,
            entities,
            relations,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn entity(&self, id: usize) -> &[f64] {
        &self.entities[id * self.dim..(id + 1) * self.dim]
    }

    pub fn relation(&self, id: usize) -> &[f64] {
        &self.relations[id * self.dim..(id + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.entities[id * self.dim..(id + 1) * self.dim]
    }

    pub fn relation_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.relations[id * self.dim..(id + 1) * self.dim]
    }

    /// Flat parameter views: entity block then relation block.
    pub fn params(&self) -> (&[f64], &[f64]) {
        (&self.entities, &self.relations)
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entities, &mut self.relations)
    }

    /// Copy of an entity row (interleaved layout for ComplEx).
    pub fn lookup(&self, entity: usize) -> Result<Vec<f64>> {
        if entity >= self.num_entities() {
            return Err(Error::OutOfRange {
                kind: "entity",
                id: entity,
                size: self.num_entities(),
            });
        }
        Ok(self.entity(entity).to_vec())
    }

    pub fn score(&self, t: &Triple) -> f64 {
        score_vectors(
            self.kind,
            self.entity(t.subject),
            self.relation(t.relation),
            self.entity(t.object),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.entities
            .iter()
            .chain(&self.relations)
            .all(|v| v.is_finite())
    }

    /// Rescales every entity row to unit L2 norm (zero rows stay zero).
    pub fn normalize_entities(&mut self) {
        for row in self.entities.chunks_exact_mut(self.dim) {
            normalize(row);
        }
    }

    /// Writes entity and relation vector files.
    pub fn export(
        &self,
        entities: &Vocabulary,
        relations: &Vocabulary,
        entity_path: &Path,
        relation_path: &Path,
    ) -> Result<()> {
        write_vector_file(
            entity_path,
            self.dim,
            (0..self.num_entities())
                .map(|i| (entities.symbol(i).unwrap_or_default(), self.entity(i))),
        )?;
        write_vector_file(
            relation_path,
            self.dim,
            (0..self.num_relations())
                .map(|i| (relations.symbol(i).unwrap_or_default(), self.relation(i))),
        )
    }

    /// Builds a table aligned to the given vocabularies. Rows with unknown
    /// symbols are reported; every vocabulary entity must have a row. A missing
    /// relation file leaves relation vectors at zero.
    pub fn import(
        kind: ModelKind,
        entity_file: &VectorFile,
        relation_file: Option<&VectorFile>,
        entities: &Vocabulary,
        relations: &Vocabulary,
    ) -> Result<(Self, Vec<Rejection>)> {
        let dim = entity_file.dim;
        let mut table = Self::zeros(kind, dim, entities.len(), relations.len())?;
        let mut rejections = Vec::new();
        let mut seen = vec![false; entities.len()];
        for (line, (symbol, row)) in entity_file.numbered_rows() {
            match entities.get(symbol) {
                Some(id) => {
                    table.entity_mut(id).copy_from_slice(row);
                    seen[id] = true;
                }
                None => rejections.push(Rejection {
                    line,
                    reason: format!("unknown entity {symbol}"),
                    raw: symbol.to_string(),
                }),
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let count = seen.iter().filter(|s| !**s).count();
            return Err(Error::Config(format!(
                "{count} entities have no vector (first: {})",
                entities.symbol(missing).unwrap_or_default()
            )));
        }
        if let Some(rel) = relation_file {
            if rel.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rel.dim,
                });
            }
            for (line, (symbol, row)) in rel.numbered_rows() {
                match relations.get(symbol) {
                    Some(id) => table.relation_mut(id).copy_from_slice(row),
                    None => rejections.push(Rejection {
                        line,
                        reason: format!("unknown relation {symbol}"),
                        raw: symbol.to_string(),
                    }),
                }
            }
        }
        Ok((table, rejections))
    }
}

fn check_dim(kind: ModelKind, dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    if kind == ModelKind::ComplEx && !dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "ComplEx needs an even dimension, got {dim}"
        )));
    }
    Ok(())
}

pub(crate) fn normalize(row: &mut [f64]) {
    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        row.iter_mut().for_each(|v| *v /= n);
    }
}

/// Contents of a vector file: optional `#dim <d>` header, then one row per
/// symbol: `symbol \t v1 \t ... \t vd`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
    lines: Vec<usize>,
}

impl VectorFile {
    pub fn new(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Self {
        let lines = (1..=rows.len()).collect();
        Self { dim, rows, lines }
    }

    pub fn parse_str(text: &str, source: &str) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        let mut keys = HashSet::new();
        let err = |line: usize, message: String| Error::Format {
            path: source.to_string(),
            line,
            message,
        };
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#dim") {
                let d = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| err(line_no, format!("bad header `{line}`")))?;
                if !rows.is_empty() || dim.is_some() {
                    return Err(err(line_no, "header must come first".into()));
                }
                dim = Some(d);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let symbol = cols.next().unwrap_or_default().to_string();
            let values = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(line_no, format!("bad number: {e}")))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err(line_no, "non-finite value".into()));
            }
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(err(
                    line_no,
                    format!("expected {expected} values, found {}", values.len()),
                ));
            }
            if !keys.insert(symbol.clone()) {
                return Err(Error::DuplicateKey(symbol));
            }
            rows.push((symbol, values));
            lines.push(line_no);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            rows,
            lines,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    fn numbered_rows(&self) -> impl Iterator<Item = (usize, (&str, &[f64]))> {
        self.lines
            .iter()
            .copied()
            .zip(self.rows.iter().map(|(s, v)| (s.as_str(), v.as_slice())))
    }
}

/// Floats use the shortest representation that parses back to the same bits.
pub fn write_vector_file<'a>(
    path: &Path,
    dim: usize,
    rows: impl Iterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "#dim {dim}").map_err(io)?;
    for (symbol, row) in rows {
        w.write_all(symbol.as_bytes()).map_err(io)?;
        for v in row {
            write!(w, "\t{v}").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    CorruptSubject,
    CorruptObject,
    UniformBoth,
}

const MAX_RESAMPLES: usize = 10;

/// Replaces one side of `t` with an entity drawn uniformly from the other
/// `n - 1`, redrawing up to ten times while the corruption is a known fact.
/// With a single entity there is nothing to corrupt and `t` comes back.
pub fn negative_sample(
    t: &Triple,
    store: &TripleStore,
    rng: &mut impl Rng,
    mode: CorruptionMode,
) -> Triple {
    let n = store.num_entities();
    let mut candidate = *t;
    if n < 2 {
        return candidate;
    }
    let corrupt_subject = match mode {
        CorruptionMode::CorruptSubject => true,
        CorruptionMode::CorruptObject => false,
        CorruptionMode::UniformBoth => rng.gen_bool(0.5),
    };
    let current = if corrupt_subject { t.subject } else { t.object };
    for _ in 0..=MAX_RESAMPLES {
        let mut e = rng.gen_range(0..n - 1);
        if e >= current {
            e += 1;
        }
        candidate = if corrupt_subject {
            Triple::new(e, t.relation, t.object)
        } else {
            Triple::new(t.subject, t.relation, e)
        };
        if !store.is_known(&candidate) {
            break;
        }
    }
    candidate
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    /// TransE only.
    pub margin: f64,
    /// DistMult / ComplEx only.
    pub l2_weight: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub corruption: CorruptionMode,
    /// Draw fresh negatives every epoch; when false they are drawn once and reused,
    /// which makes the objective fixed across epochs.
    pub resample_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::ComplEx,
            dim: 400,
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 128,
            negatives_per_positive: 10,
            margin: 1.0,
            l2_weight: 1e-3,
            seed: 0,
            deterministic: true,
            corruption: CorruptionMode::UniformBoth,
            resample_negatives: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.model, self.dim)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.l2_weight >= 0.0) {
            return bad("learning_rate and l2_weight must be non-negative");
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            kind: self.model,
            margin: self.margin,
            l2_weight: self.l2_weight,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub kind: ModelKind,
    pub margin: f64,
    pub l2_weight: f64,
}

/// A positive triple and the negatives it is contrasted with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingUnit {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

/// Sparse gradient keyed by row id.
#[derive(Debug, Default, Clone)]
pub struct Gradient {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
}

trait RowSource {
    fn entity_row(&self, id: usize) -> Cow<'_, [f64]>;
    fn relation_row(&self, id: usize) -> Cow<'_, [f64]>;
}

impl RowSource for EmbeddingTable {
    fn entity_row(&self, id: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.entity(id))
    }

    fn relation_row(&self, id: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.relation(id))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Gradient {
    fn add_triple<S: RowSource>(
        &mut self,
        src: &S,
        kind: ModelKind,
        t: &Triple,
        coef: f64,
        dim: usize,
    ) {
        let h = src.entity_row(t.subject);
        let r = src.relation_row(t.relation);
        let o = src.entity_row(t.object);
        let mut gh = vec![0.0; dim];
        let mut gr = vec![0.0; dim];
        let mut go = vec![0.0; dim];
        score_gradient(kind, (&h, &r, &o), coef, &mut gh, &mut gr, &mut go);
        self.add_entity(t.subject, &gh);
        self.add_relation(t.relation, &gr);
        self.add_entity(t.object, &go);
    }

    fn add_l2<S: RowSource>(&mut self, src: &S, t: &Triple, coef: f64) {
        let scaled = |row: &[f64]| row.iter().map(|v| 2.0 * coef * v).collect::<Vec<_>>();
        self.add_entity(t.subject, &scaled(&src.entity_row(t.subject)));
        self.add_relation(t.relation, &scaled(&src.relation_row(t.relation)));
        self.add_entity(t.object, &scaled(&src.entity_row(t.object)));
    }

    fn add_entity(&mut self, id: usize, g: &[f64]) {
        add_into(
            self.entities
                .entry(id)
                .or_insert_with(|| vec![0.0; g.len()]),
            g,
        );
    }

    fn add_relation(&mut self, id: usize, g: &[f64]) {
        add_into(
            self.relations
                .entry(id)
                .or_insert_with(|| vec![0.0; g.len()]),
            g,
        );
    }

    /// Dense copy laid out like [`EmbeddingTable::params`].
    pub fn dense(&self, table: &EmbeddingTable) -> (Vec<f64>, Vec<f64>) {
        let d = table.dim();
        let mut ent = vec![0.0; table.num_entities() * d];
        let mut rel = vec![0.0; table.num_relations() * d];
        for (id, g) in &self.entities {
            ent[id * d..(id + 1) * d].copy_from_slice(g);
        }
        for (id, g) in &self.relations {
            rel[id * d..(id + 1) * d].copy_from_slice(g);
        }
        (ent, rel)
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

fn unit_loss<S: RowSource>(
    src: &S,
    cfg: &LossConfig,
    unit: &TrainingUnit,
    scale: f64,
    dim: usize,
    grad: Option<&mut Gradient>,
) -> f64 {
    let score = |t: &Triple| {
        score_vectors(
            cfg.kind,
            &src.entity_row(t.subject),
            &src.relation_row(t.relation),
            &src.entity_row(t.object),
        )
    };
    let sq = |t: &Triple| {
        [
            src.entity_row(t.subject),
            src.relation_row(t.relation),
            src.entity_row(t.object),
        ]
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
    };
    let pos = score(&unit.positive);
    let mut loss = 0.0;
    match cfg.kind {
        ModelKind::TransE { .. } => {
            let mut grad = grad;
            for neg in &unit.negatives {
                let s_neg = score(neg);
                let hinge = cfg.margin + s_neg - pos;
                if hinge > 0.0 {
                    loss += hinge;
                    if let Some(g) = grad.as_deref_mut() {
                        g.add_triple(src, cfg.kind, neg, scale, dim);
                        g.add_triple(src, cfg.kind, &unit.positive, -scale, dim);
                    }
                }
            }
        }
        ModelKind::DistMult | ModelKind::ComplEx => {
            loss += softplus(-pos) + cfg.l2_weight * sq(&unit.positive);
            let negs: Vec<f64> = unit.negatives.iter().map(score).collect();
            for (neg, s) in unit.negatives.iter().zip(&negs) {
                loss += softplus(*s) + cfg.l2_weight * sq(neg);
            }
            if let Some(g) = grad {
                g.add_triple(src, cfg.kind, &unit.positive, -scale * sigmoid(-pos), dim);
                g.add_l2(src, &unit.positive, scale * cfg.l2_weight);
                for (neg, s) in unit.negatives.iter().zip(&negs) {
                    g.add_triple(src, cfg.kind, neg, scale * sigmoid(*s), dim);
                    g.add_l2(src, neg, scale * cfg.l2_weight);
                }
            }
        }
    }
    loss * scale
}

/// Mean loss over the units of a batch.
pub fn batch_loss(table: &EmbeddingTable, cfg: &LossConfig, batch: &[TrainingUnit]) -> f64 {
    let scale = 1.0 / batch.len().max(1) as f64;
    batch
        .iter()
        .map(|u| unit_loss(table, cfg, u, scale, table.dim(), None))
        .sum()
}

/// Mean loss over the batch and its analytic gradient.
pub fn batch_gradient(
    table: &EmbeddingTable,
    cfg: &LossConfig,
    batch: &[TrainingUnit],
) -> (f64, Gradient) {
    gradient_from(table, cfg, batch, table.dim())
}

fn gradient_from<S: RowSource>(
    src: &S,
    cfg: &LossConfig,
    batch: &[TrainingUnit],
    dim: usize,
) -> (f64, Gradient) {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = Gradient::default();
    let loss = batch
        .iter()
        .map(|u| unit_loss(src, cfg, u, scale, dim, Some(&mut grad)))
        .sum();
    (loss, grad)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub epochs: Vec<EpochLog>,
}

/// Trains on the `train` split of `store`.
///
/// Parameters start from [`EmbeddingTable::random`] seeded with
/// `config.seed`; TransE entity rows are then scaled to unit length, and
/// again after every epoch.
pub fn train(store: &TripleStore, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let positives = store.split(TRAIN);
    if positives.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut table = EmbeddingTable::random(
        config.model,
        config.dim,
        store.num_entities(),
        store.num_relations(),
        &mut rng,
    )?;
    if config.model.is_transe() {
        table.normalize_entities();
    }
    let draw = |t: &Triple, rng: &mut ChaCha8Rng| TrainingUnit {
        positive: *t,
        negatives: (0..config.negatives_per_positive)
            .map(|_| negative_sample(t, store, rng, config.corruption))
            .collect(),
    };
    let fixed: Option<Vec<TrainingUnit>> =
        (!config.resample_negatives).then(|| positives.iter().map(|t| draw(t, &mut rng)).collect());
    let loss_cfg = config.loss();
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        let total = if config.deterministic {
            let mut total = 0.0;
            for (b, ids) in batches.iter().enumerate() {
                let units: Vec<TrainingUnit> = ids
                    .iter()
                    .map(|&i| match &fixed {
                        Some(f) => f[i].clone(),
                        None => draw(&positives[i], &mut rng),
                    })
                    .collect();
                let (loss, grad) = batch_gradient(&table, &loss_cfg, &units);
                apply(&mut table, &grad, config.learning_rate);
                if !loss.is_finite() || !rows_finite(&table, &grad) {
                    return Err(Error::NonFinite { epoch, batch: b });
                }
                total += loss * units.len() as f64;
            }
            total
        } else {
            let epoch_seed = rng.gen::<u64>();
            hogwild_epoch(
                &mut table,
                store,
                config,
                &batches,
                positives,
                fixed.as_deref(),
                epoch,
                epoch_seed,
            )?
        };
        // A zero step moves nothing, so there is nothing to project back.
        if config.model.is_transe() && config.learning_rate != 0.0 {
            table.normalize_entities();
        }
        let mean_loss = total / positives.len() as f64;
        if epoch + 1 == config.epochs {
            log::info!("{} epoch {epoch}: mean loss {mean_loss:.6}", config.model);
        } else {
            log::debug!("{} epoch {epoch}: mean loss {mean_loss:.6}", config.model);
        }
        log.push(EpochLog { epoch, mean_loss });
    }
    Ok(TrainOutcome { table, epochs: log })
}

fn apply(table: &mut EmbeddingTable, grad: &Gradient, lr: f64) {
    for (id, g) in &grad.entities {
        table
            .entity_mut(*id)
            .iter_mut()
            .zip(g)
            .for_each(|(p, g)| *p -= lr * g);
    }
    for (id, g) in &grad.relations {
        table
            .relation_mut(*id)
            .iter_mut()
            .zip(g)
            .for_each(|(p, g)| *p -= lr * g);
    }
}

fn rows_finite(table: &EmbeddingTable, grad: &Gradient) -> bool {
    grad.entities
        .keys()
        .all(|&id| table.entity(id).iter().all(|v| v.is_finite()))
        && grad
            .relations
            .keys()
            .all(|&id| table.relation(id).iter().all(|v| v.is_finite()))
}

/// Parameters shared between training threads; reads and writes are
/// individually atomic but rows are not locked (last write wins).
struct SharedParams {
    dim: usize,
    entities: Vec<AtomicU64>,
    relations: Vec<AtomicU64>,
}

impl SharedParams {
    fn from_table(table: &EmbeddingTable) -> Self {
        let conv = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        Self {
            dim: table.dim,
            entities: conv(&table.entities),
            relations: conv(&table.relations),
        }
    }

    fn load(cells: &[AtomicU64], id: usize, dim: usize) -> Vec<f64> {
        cells[id * dim..(id + 1) * dim]
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }

    fn update(cells: &[AtomicU64], id: usize, dim: usize, g: &[f64], lr: f64) -> bool {
        let mut finite = true;
        for (c, g) in cells[id * dim..(id + 1) * dim].iter().zip(g) {
            let v = f64::from_bits(c.load(Ordering::Relaxed)) - lr * g;
            finite &= v.is_finite();
            c.store(v.to_bits(), Ordering::Relaxed);
        }
        finite
    }

    fn write_back(&self, table: &mut EmbeddingTable) {
        for (dst, src) in table.entities.iter_mut().zip(&self.entities) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
        for (dst, src) in table.relations.iter_mut().zip(&self.relations) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
    }
}

impl RowSource for SharedParams {
    fn entity_row(&self, id: usize) -> Cow<'_, [f64]> {
        Cow::Owned(Self::load(&self.entities, id, self.dim))
    }

    fn relation_row(&self, id: usize) -> Cow<'_, [f64]> {
        Cow::Owned(Self::load(&self.relations, id, self.dim))
    }
}

#[allow(clippy::too_many_arguments)]
fn hogwild_epoch(
    table: &mut EmbeddingTable,
    store: &TripleStore,
    config: &TrainConfig,
    batches: &[&[usize]],
    positives: &[Triple],
    fixed: Option<&[TrainingUnit]>,
    epoch: usize,
    epoch_seed: u64,
) -> Result<f64> {
    let shared = SharedParams::from_table(table);
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(batches.len().max(1));
    let loss_cfg = config.loss();
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let shared = &shared;
                let loss_cfg = &loss_cfg;
                scope.spawn(move || -> Result<f64> {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        epoch_seed ^ (w as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    );
                    let mut total = 0.0;
                    for (b, ids) in batches.iter().enumerate().skip(w).step_by(threads) {
                        let units: Vec<TrainingUnit> = ids
                            .iter()
                            .map(|&i| match fixed {
                                Some(f) => f[i].clone(),
                                None => TrainingUnit {
                                    positive: positives[i],
                                    negatives: (0..config.negatives_per_positive)
                                        .map(|_| {
                                            negative_sample(
                                                &positives[i],
                                                store,
                                                &mut rng,
                                                config.corruption,
                                            )
                                        })
                                        .collect(),
                                },
                            })
                            .collect();
                        let (loss, grad) = gradient_from(shared, loss_cfg, &units, shared.dim);
                        let mut finite = loss.is_finite();
                        for (id, g) in &grad.entities {
                            finite &= SharedParams::update(
                                &shared.entities,
                                *id,
                                shared.dim,
                                g,
                                config.learning_rate,
                            );
                        }
                        for (id, g) in &grad.relations {
                            finite &= SharedParams::update(
                                &shared.relations,
                                *id,
                                shared.dim,
                                g,
                                config.learning_rate,
                            );
                        }
                        if !finite {
                            return Err(Error::NonFinite { epoch, batch: b });
                        }
                        total += loss * units.len() as f64;
                    }
                    Ok(total)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    shared.write_back(table);
    results.into_iter().sum()
}
