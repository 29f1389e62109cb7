//! Per-mention feature vectors from contextual vectors, KG vectors, or their
//! concatenation (contextual part first).

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ContextualMention;
use crate::kg_store::Vocabulary;
use crate::kge::{normalize, EmbeddingTable, VectorFile};
use crate::util::fnv1a;
use crate::{Error, Result};

/// Default width of contextual vectors.
pub const DEFAULT_CONTEXT_DIM: usize = 512;
/// Tokens on each side of the head word seen by [`pseudo_contextual`].
pub const CONTEXT_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Contextual,
    Kg,
    Concat,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [
        FeatureMode::Contextual,
        FeatureMode::Kg,
        FeatureMode::Concat,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::Contextual => "contextual",
            FeatureMode::Kg => "kg",
            FeatureMode::Concat => "concat",
        }
    }

    pub fn needs_context(&self) -> bool {
        matches!(self, FeatureMode::Contextual | FeatureMode::Concat)
    }

    pub fn needs_kg(&self) -> bool {
        matches!(self, FeatureMode::Kg | FeatureMode::Concat)
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "contextual" => Ok(FeatureMode::Contextual),
            "kg" => Ok(FeatureMode::Kg),
            "concat" => Ok(FeatureMode::Concat),
            other => Err(Error::Config(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// Source of contextual vectors for mentions.
pub trait ContextProvider: Sync {
    fn dim(&self) -> usize;
    fn context_vector(&self, key: &str, mention: &ContextualMention) -> Option<Cow<'_, [f64]>>;
}

/// Precomputed contextual vectors keyed by `<entity-symbol>#<mention-id>`.
#[derive(Debug, Clone, Default)]
pub struct ContextualStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl ContextualStore {
    pub fn from_vector_file(file: VectorFile) -> Self {
        Self {
            dim: file.dim,
            vectors: file.rows.into_iter().collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        VectorFile::read(path).map(Self::from_vector_file)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }
}

impl ContextProvider for ContextualStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn context_vector(&self, key: &str, _: &ContextualMention) -> Option<Cow<'_, [f64]>> {
        self.get(key).map(Cow::Borrowed)
    }
}

/// Deterministic stand-in for a neural contextual encoder.
#[derive(Debug, Clone, Copy)]
pub struct PseudoContextual {
    pub dim: usize,
    pub seed: u64,
}

impl ContextProvider for PseudoContextual {
    fn dim(&self) -> usize {
        self.dim
    }

    fn context_vector(&self, _: &str, mention: &ContextualMention) -> Option<Cow<'_, [f64]>> {
        Some(Cow::Owned(pseudo_contextual(mention, self.dim, self.seed)))
    }
}

fn hashed(seed: u64, salt: &[u8], token: &str, d: usize) -> (usize, f64) {
    let mut bytes = Vec::with_capacity(8 + salt.len() + token.len());
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(salt);
    bytes.extend_from_slice(token.as_bytes());
    let h = fnv1a(&bytes);
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    ((h % d as u64) as usize, sign)
}

/// Signed feature hashing of the lowercased tokens within ±5 of the head,
/// plus the head token under a separate salt at weight 2, L2-normalized.
///
/// # Panics
/// If `d == 0`.
pub fn pseudo_contextual(mention: &ContextualMention, d: usize, seed: u64) -> Vec<f64> {
    assert!(d >= 1, "contextual dimension must be positive");
    let tokens = &mention.sentence.tokens;
    let mut v = vec![0.0; d];
    if tokens.is_empty() {
        return v;
    }
    let head = mention.head_index.min(tokens.len() - 1);
    let lo = head.saturating_sub(CONTEXT_WINDOW);
    let hi = (head + CONTEXT_WINDOW).min(tokens.len() - 1);
    for token in &tokens[lo..=hi] {
        let (bucket, sign) = hashed(seed, b"ctx:", &token.to_lowercase(), d);
        v[bucket] += sign;
    }
    let (bucket, sign) = hashed(seed, b"head:", &tokens[head].to_lowercase(), d);
    v[bucket] += 2.0 * sign;
    normalize(&mut v);
    v
}

/// Builds features for one mode. The task layer only ever calls
/// [`FeatureExtractor::features`].
#[derive(Clone, Copy)]
pub struct FeatureExtractor<'a> {
    pub mode: FeatureMode,
    /// L2-normalize each part before concatenating (also applied in single-source modes).
    pub normalize_parts: bool,
    pub kg: Option<&'a EmbeddingTable>,
    pub context: Option<&'a dyn ContextProvider>,
    pub entities: &'a Vocabulary,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        mode: FeatureMode,
        kg: Option<&'a EmbeddingTable>,
        context: Option<&'a dyn ContextProvider>,
        entities: &'a Vocabulary,
    ) -> Self {
        Self {
            mode,
            normalize_parts: false,
            kg,
            context,
            entities,
        }
    }

    pub fn with_normalized_parts(mut self, on: bool) -> Self {
        self.normalize_parts = on;
        self
    }

    fn context_dim(&self) -> usize {
        self.context.map_or(0, |c| c.dim())
    }

    fn kg_dim(&self) -> usize {
        self.kg.map_or(0, |k| k.dim())
    }

    pub fn output_dim(&self) -> usize {
        match self.mode {
            FeatureMode::Contextual => self.context_dim(),
            FeatureMode::Kg => self.kg_dim(),
            FeatureMode::Concat => self.context_dim() + self.kg_dim(),
        }
    }

    /// Checks that the sources the mode needs are configured.
    pub fn validate(&self) -> Result<()> {
        if self.mode.needs_context() && self.context.is_none() {
            return Err(Error::Config(format!(
                "mode {} needs contextual vectors",
                self.mode
            )));
        }
        if self.mode.needs_kg() && self.kg.is_none() {
            return Err(Error::Config(format!(
                "mode {} needs KG embeddings",
                self.mode
            )));
        }
        Ok(())
    }

    pub fn features(&self, mention: &ContextualMention) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.output_dim());
        if self.mode.needs_context() {
            let key = mention.key(self.entities);
            let ctx = self
                .context
                .ok_or_else(|| Error::MissingFeature(key.clone()))?;
            let v = ctx
                .context_vector(&key, mention)
                .ok_or(Error::MissingFeature(key))?;
            self.push_part(&mut out, &v);
        }
        if self.mode.needs_kg() {
            let table = self
                .kg
                .ok_or_else(|| Error::Config("no KG embeddings".into()))?;
            let v = table.lookup(mention.entity)?;
            self.push_part(&mut out, &v);
        }
        Ok(out)
    }

    fn push_part(&self, out: &mut Vec<f64>, part: &[f64]) {
        let start = out.len();
        out.extend_from_slice(part);
        if self.normalize_parts {
            normalize(&mut out[start..]);
        }
    }
}
