//! Logistic-regression task heads.
//!
//! `Multinomial` fits softmax cross-entropy (one gold label per sample);
//! `OneVsRest` fits an independent binary logistic loss per label. Both add
//! `l2 · ‖W‖²` (biases unpenalized) and train by full-batch gradient descent,
//! with the L2 term applied as an exact proximal shrink so large penalties
//! stay stable.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg_store::Vocabulary;
use crate::metrics::RankedPrediction;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogRegMode {
    Multinomial,
    OneVsRest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Labels seen fewer times in training are dropped from the label set (≤ 1 keeps all).
    pub min_label_count: usize,
    /// z-score features using training statistics.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-4,
            seed: 0,
            min_label_count: 1,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>], d: usize) -> Self {
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for row in x {
            var.iter_mut()
                .zip(row)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let std = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub mode: LogRegMode,
    pub n_features: usize,
    /// Row-major `n_labels × n_features`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Labels the model predicts; ids index `weights` rows.
    pub label_vocab: Vocabulary,
    pub standardizer: Option<Standardizer>,
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

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss value and gradients of the objective at the current parameters.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LogRegModel {
    pub fn n_labels(&self) -> usize {
        self.biases.len()
    }

    fn row(&self, label: usize) -> &[f64] {
        &self.weights[label * self.n_features..(label + 1) * self.n_features]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        }
    }

    fn logits_raw(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_labels())
            .map(|l| dot(self.row(l), x) + self.biases[l])
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_raw(&self.prepare(x)))
    }

    /// Softmax probabilities (multinomial) or per-label sigmoids (one-vs-rest).
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        Ok(match self.mode {
            LogRegMode::Multinomial => softmax(&z),
            LogRegMode::OneVsRest => z.into_iter().map(sigmoid).collect(),
        })
    }

    /// Every label, best first; ties by ascending label id.
    pub fn predict_ranked(&self, x: &[f64]) -> Result<RankedPrediction> {
        let z = self.logits(x)?;
        // Order on logits: both link functions are monotone, and logits keep
        // distinctions that saturated probabilities lose.
        let order = RankedPrediction::from_scores(&z).labels;
        let scores = match self.mode {
            LogRegMode::Multinomial => softmax(&z),
            LogRegMode::OneVsRest => z.iter().copied().map(sigmoid).collect(),
        };
        let ranked_scores = order.iter().map(|&l| scores[l]).collect();
        Ok(RankedPrediction {
            labels: order,
            scores: ranked_scores,
        })
    }

    /// Objective (mean data loss + `l2·‖W‖²`) and its gradient on
    /// already-prepared features; `targets` are label ids of this model.
    pub fn loss_gradient(
        &self,
        x: &[Vec<f64>],
        targets: &[BTreeSet<usize>],
        l2: f64,
    ) -> LossGradient {
        let n = x.len() as f64;
        let k = self.n_labels();
        let d = self.n_features;
        // Per-sample dLoss/dlogit and loss, computed in parallel, collected in order.
        let per_sample: Vec<(f64, Vec<f64>)> = x
            .par_iter()
            .zip(targets.par_iter())
            .map(|(xi, yi)| {
                let z = self.logits_raw(xi);
                match self.mode {
                    LogRegMode::Multinomial => {
                        let p = softmax(&z);
                        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                        let gold = *yi.iter().next().expect("multinomial target");
                        let mut g = p;
                        g[gold] -= 1.0;
                        (lse - z[gold], g)
                    }
                    LogRegMode::OneVsRest => {
                        let mut loss = 0.0;
                        let g = z
                            .iter()
                            .enumerate()
                            .map(|(l, &zl)| {
                                let y = yi.contains(&l);
                                loss += if y { softplus(-zl) } else { softplus(zl) };
                                sigmoid(zl) - f64::from(u8::from(y))
                            })
                            .collect();
                        (loss, g)
                    }
                }
            })
            .collect();
        let data_loss: f64 = per_sample.iter().map(|(l, _)| l).sum::<f64>() / n;
        let penalty = l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let rows: Vec<(Vec<f64>, f64)> = (0..k)
            .into_par_iter()
            .map(|l| {
                let mut gw = vec![0.0; d];
                let mut gb = 0.0;
                for (xi, (_, g)) in x.iter().zip(&per_sample) {
                    let c = g[l] / n;
                    gb += c;
                    gw.iter_mut().zip(xi).for_each(|(a, v)| *a += c * v);
                }
                (gw, gb)
            })
            .collect();
        let mut weights = Vec::with_capacity(k * d);
        let mut biases = Vec::with_capacity(k);
        for (l, (gw, gb)) in rows.into_iter().enumerate() {
            weights.extend(gw.iter().zip(self.row(l)).map(|(g, w)| g + 2.0 * l2 * w));
            biases.push(gb);
        }
        LossGradient {
            loss: data_loss + penalty,
            weights,
            biases,
        }
    }

    /// Writes a JSON header line followed by little-endian f64 blocks:
    /// weights, biases, then standardizer mean and std when present.
    pub fn save(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = ModelHeader {
            mode: self.mode,
            n_features: self.n_features,
            n_labels: self.n_labels(),
            labels: self.label_vocab.symbols().to_vec(),
            standardized: self.standardizer.is_some(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        let mut block = |vals: &[f64]| -> std::io::Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        block(&self.weights)?;
        block(&self.biases)?;
        if let Some(s) = &self.standardizer {
            block(&s.mean)?;
            block(&s.std)?;
        }
        Ok(())
    }

    pub fn load(r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::io("<model>", e))?;
        let header: ModelHeader = serde_json::from_str(line.trim_end())?;
        let mut read_block = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)
                .map_err(|e| Error::io("<model>", e))?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let weights = read_block(header.n_labels * header.n_features)?;
        let biases = read_block(header.n_labels)?;
        let standardizer = if header.standardized {
            Some(Standardizer {
                mean: read_block(header.n_features)?,
                std: read_block(header.n_features)?,
            })
        } else {
            None
        };
        if header.labels.len() != header.n_labels {
            return Err(Error::Config("label count does not match header".into()));
        }
        Ok(Self {
            mode: header.mode,
            n_features: header.n_features,
            weights,
            biases,
            label_vocab: header.labels.iter().collect(),
            standardizer,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    mode: LogRegMode,
    n_features: usize,
    n_labels: usize,
    labels: Vec<String>,
    standardized: bool,
}

/// Fits a model. `y` holds label ids of `labels`; the model's label set is
/// `labels` minus those pruned by `min_label_count`, so labels absent from
/// training still get a (trained-down) row.
pub fn fit(
    x: &[Vec<f64>],
    y: &[BTreeSet<usize>],
    labels: &Vocabulary,
    mode: LogRegMode,
    cfg: &FitConfig,
) -> Result<LogRegModel> {
    if x.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "{} samples but {} label sets",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if mode == LogRegMode::Multinomial {
        if let Some(i) = y.iter().position(|s| s.len() != 1) {
            return Err(Error::Config(format!(
                "multinomial sample {i} has {} labels, expected exactly 1",
                y[i].len()
            )));
        }
    }
    if let Some(&bad) = y.iter().flatten().find(|&&l| l >= labels.len()) {
        return Err(Error::OutOfRange {
            kind: "label",
            id: bad,
            size: labels.len(),
        });
    }

    let mut counts = vec![0usize; labels.len()];
    y.iter().flatten().for_each(|&l| counts[l] += 1);
    let mut remap = vec![None; labels.len()];
    let mut label_vocab = Vocabulary::new();
    for (id, symbol) in labels.iter() {
        if cfg.min_label_count <= 1 || counts[id] >= cfg.min_label_count {
            remap[id] = Some(label_vocab.get_or_insert(symbol));
        }
    }
    if label_vocab.is_empty() {
        return Err(Error::Empty("label set after pruning"));
    }

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut targets: Vec<BTreeSet<usize>> = Vec::with_capacity(x.len());
    for (xi, yi) in x.iter().zip(y) {
        let t: BTreeSet<usize> = yi.iter().filter_map(|&l| remap[l]).collect();
        // A multinomial sample whose label was pruned has nothing to learn from.
        if mode == LogRegMode::Multinomial && t.is_empty() {
            continue;
        }
        xs.push(xi.clone());
        targets.push(t);
    }
    if xs.is_empty() {
        return Err(Error::Empty("training set after pruning"));
    }
    let standardizer = cfg.standardize.then(|| Standardizer::fit(&xs, d));
    if let Some(s) = &standardizer {
        xs = xs.iter().map(|r| s.apply(r)).collect();
    }

    let k = label_vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1e-3 / (d.max(1) as f64).sqrt();
    let mut model = LogRegModel {
        mode,
        n_features: d,
        weights: (0..k * d).map(|_| rng.gen_range(-scale..=scale)).collect(),
        biases: vec![0.0; k],
        label_vocab,
        standardizer: None,
    };
    let lr = cfg.learning_rate;
    let shrink = 1.0 / (1.0 + 2.0 * lr * cfg.l2);
    for epoch in 0..cfg.epochs {
        // Data-term gradient only; the penalty is handled by the proximal shrink.
        let g = model.loss_gradient(&xs, &targets, 0.0);
        if !g.loss.is_finite() {
            return Err(Error::NonFinite { epoch, batch: 0 });
        }
        model
            .weights
            .iter_mut()
            .zip(&g.weights)
            .for_each(|(w, gw)| *w = (*w - lr * gw) * shrink);
        model
            .biases
            .iter_mut()
            .zip(&g.biases)
            .for_each(|(b, gb)| *b -= lr * gb);
    }
    model.standardizer = standardizer;
    Ok(model)
}

/// Full objective of `model` on raw (unprepared) features, for monitoring.
pub fn objective(model: &LogRegModel, x: &[Vec<f64>], targets: &[BTreeSet<usize>], l2: f64) -> f64 {
    let prepared: Vec<Vec<f64>> = x.iter().map(|r| model.prepare(r)).collect();
    model.loss_gradient(&prepared, targets, l2).loss
}
