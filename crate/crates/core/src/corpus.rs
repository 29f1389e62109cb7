//! Text-side data preparation.
//!
//! Entity descriptions are reduced to one context sentence per entity:
//!
//! 1. tokenize the entity lexicalization,
//! 2. pick the head word (the lexicalization token occurring most often in the description),
//! 3. split the description into sentences,
//! 4. keep sentences where the lexicalization matches, allowing up to `max_gap`
//!    interrupting tokens in total (a middle name, say),
//! 5. take the first such sentence, anchoring the mention at the head word.
//!
//! FB-NYT distant-supervision records are filtered down to the entities and
//! relations of a [`TripleStore`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg_store::{EntityCatalog, TripleStore, Vocabulary};
use crate::util::create;
use crate::{Error, Result};

/// Characters detached from token edges. Anything that is not a letter or digit.
fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn is_punct_token(token: &str) -> bool {
    token.chars().all(is_punct)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    /// Byte offset of each token into the source string.
    pub offsets: Vec<usize>,
}

impl TokenizedText {
    /// Pre-split tokens; offsets are those of the space-joined string.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut out = Self::default();
        let mut offset = 0;
        for t in tokens {
            out.push(t.as_ref(), offset);
            offset += t.as_ref().len() + 1;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    fn push(&mut self, token: &str, offset: usize) {
        self.tokens.push(token.to_string());
        self.offsets.push(offset);
    }
}

/// Whitespace split, then leading and trailing punctuation characters become
/// tokens of their own. Casing is preserved.
pub fn tokenize(text: &str) -> TokenizedText {
    tokenize_at(text, 0)
}

fn tokenize_at(text: &str, base: usize) -> TokenizedText {
    let mut out = TokenizedText::default();
    let mut chunk_start = None;
    let bytes_end = text.len();
    let flush = |out: &mut TokenizedText, start: usize, end: usize| {
        let chunk = &text[start..end];
        let core_start = chunk
            .char_indices()
            .find(|(_, c)| !is_punct(*c))
            .map(|(i, _)| i);
        let Some(core_start) = core_start else {
            for (i, c) in chunk.char_indices() {
                out.push(&chunk[i..i + c.len_utf8()], base + start + i);
            }
            return;
        };
        let core_end = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| !is_punct(*c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        for (i, c) in chunk[..core_start].char_indices() {
            out.push(&chunk[i..i + c.len_utf8()], base + start + i);
        }
        out.push(&chunk[core_start..core_end], base + start + core_start);
        for (i, c) in chunk[core_end..].char_indices() {
            let at = core_end + i;
            out.push(&chunk[at..at + c.len_utf8()], base + start + at);
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                flush(&mut out, s, i);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        flush(&mut out, s, bytes_end);
    }
    out
}

/// Rule-based splitter: a sentence ends at `.`, `!` or `?` followed by
/// whitespace and an uppercase letter, or by the end of the text. The
/// terminator stays with its sentence. Abbreviations such as "Mr. Smith"
/// are split; that is a known limitation of the rule.
pub fn split_sentences(text: &str) -> Vec<TokenizedText> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let rest = &chars[k + 1..];
        let boundary = match rest.first() {
            None => true,
            Some((_, n)) if n.is_whitespace() => rest
                .iter()
                .find(|(_, ch)| !ch.is_whitespace())
                .is_none_or(|(_, ch)| ch.is_uppercase()),
            Some(_) => false,
        };
        if boundary {
            let sentence = tokenize_at(&text[start..end], start);
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = end;
        }
    }
    if start < text.len() {
        let tail = tokenize_at(&text[start..], start);
        if !tail.is_empty() {
            sentences.push(tail);
        }
    }
    sentences
}

/// Position in `lexicalization` of the token occurring most often
/// (case-insensitively) in `description`. Ties go to the earliest position;
/// punctuation-only tokens are never chosen. `None` when every count is zero.
pub fn select_head_word(
    lexicalization: &TokenizedText,
    description: &TokenizedText,
) -> Option<usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in &description.tokens {
        *counts.entry(t.to_lowercase()).or_insert(0) += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (pos, token) in lexicalization.tokens.iter().enumerate() {
        if is_punct_token(token) {
            continue;
        }
        let c = counts.get(&token.to_lowercase()).copied().unwrap_or(0);
        if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
            best = Some((pos, c));
        }
    }
    best.map(|(pos, _)| pos)
}

/// Inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionMatch {
    pub span: Span,
    /// Sentence position of each lexicalization token.
    pub positions: Vec<usize>,
}

/// Earliest span in which the lexicalization tokens occur in order
/// (case-insensitively), with at most `max_gap` interrupting tokens in total.
pub fn find_mention(
    sentence: &TokenizedText,
    lexicalization: &TokenizedText,
    max_gap: usize,
) -> Option<MentionMatch> {
    if lexicalization.is_empty() {
        return None;
    }
    let sent: Vec<String> = sentence.tokens.iter().map(|t| t.to_lowercase()).collect();
    let lex: Vec<String> = lexicalization
        .tokens
        .iter()
        .map(|t| t.to_lowercase())
        .collect();
    'start: for s in 0..sent.len() {
        if sent[s] != lex[0] {
            continue;
        }
        let mut positions = vec![s];
        let mut gaps = 0usize;
        let mut prev = s;
        for want in &lex[1..] {
            // Earliest next occurrence minimizes the span end, hence the gap count.
            let budget = max_gap - gaps;
            let limit = (prev + 1).saturating_add(budget).min(sent.len() - 1);
            let found = (prev + 1..=limit).find(|&p| &sent[p] == want);
            match found {
                Some(p) => {
                    gaps += p - prev - 1;
                    positions.push(p);
                    prev = p;
                }
                None => continue 'start,
            }
        }
        return Some(MentionMatch {
            span: Span::new(s, prev),
            positions,
        });
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    Description,
    Fbnyt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualMention {
    pub entity: usize,
    /// Disambiguates several mentions of one entity (0 for description mentions,
    /// the record index for FB-NYT).
    pub mention_id: usize,
    pub sentence: Arc<TokenizedText>,
    pub head_index: usize,
    pub span: Span,
    pub source: MentionSource,
}

impl ContextualMention {
    pub fn head_token(&self) -> &str {
        &self.sentence.tokens[self.head_index]
    }

    /// `<entity-symbol>#<mention-id>`
    pub fn key(&self, entities: &Vocabulary) -> String {
        mention_key(
            entities.symbol(self.entity).unwrap_or_default(),
            self.mention_id,
        )
    }
}

pub fn mention_key(entity_symbol: &str, mention_id: usize) -> String {
    format!("{entity_symbol}#{mention_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoDescription,
    MentionNotFound,
    GapExceeded,
    OovEntity,
    OovRelation,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NoDescription => "no_description",
            DropReason::MentionNotFound => "mention_not_found",
            DropReason::GapExceeded => "gap_exceeded",
            DropReason::OovEntity => "oov_entity",
            DropReason::OovRelation => "oov_relation",
        }
    }
}

/// An input item (entity id or FB-NYT record index) that produced no output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropRecord {
    pub item: usize,
    pub reason: DropReason,
}

/// Picks the context sentence for one entity.
pub fn select_context(
    entity: usize,
    catalog: &EntityCatalog,
    max_gap: usize,
) -> std::result::Result<ContextualMention, DropRecord> {
    let drop = |reason| DropRecord {
        item: entity,
        reason,
    };
    let info = match catalog.get(entity) {
        Some(info) if !info.description.trim().is_empty() => info,
        _ => return Err(drop(DropReason::NoDescription)),
    };
    let lex = tokenize(&info.lexicalization);
    if lex.is_empty() {
        return Err(drop(DropReason::MentionNotFound));
    }
    let head = select_head_word(&lex, &tokenize(&info.description))
        .ok_or(drop(DropReason::MentionNotFound))?;
    let sentences = split_sentences(&info.description);
    for sentence in &sentences {
        if let Some(m) = find_mention(sentence, &lex, max_gap) {
            return Ok(ContextualMention {
                entity,
                mention_id: 0,
                head_index: m.positions[head],
                span: m.span,
                sentence: Arc::new(sentence.clone()),
                source: MentionSource::Description,
            });
        }
    }
    let gapped = sentences
        .iter()
        .any(|s| find_mention(s, &lex, usize::MAX).is_some());
    Err(drop(if gapped {
        DropReason::GapExceeded
    } else {
        DropReason::MentionNotFound
    }))
}

#[derive(Debug, Default)]
pub struct DescriptionCorpus {
    pub mentions: Vec<ContextualMention>,
    pub drops: Vec<DropRecord>,
}

/// Runs [`select_context`] over every entity id, in id order.
pub fn prepare_descriptions(
    n_entities: usize,
    catalog: &EntityCatalog,
    max_gap: usize,
) -> DescriptionCorpus {
    let results: Vec<_> = (0..n_entities)
        .into_par_iter()
        .map(|e| select_context(e, catalog, max_gap))
        .collect();
    let mut corpus = DescriptionCorpus::default();
    for r in results {
        match r {
            Ok(m) => corpus.mentions.push(m),
            Err(d) => corpus.drops.push(d),
        }
    }
    corpus
}

/// One line of the FB-NYT input: subject-mid, object-mid, relation,
/// subject-span, object-span, sentence, and an optional split column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub subject: String,
    pub object: String,
    pub relation: String,
    pub subject_span: Span,
    pub object_span: Span,
    pub sentence: Arc<TokenizedText>,
    pub split: Option<String>,
}

fn parse_span(s: &str) -> Option<Span> {
    let (a, b) = s.trim().split_once(':')?;
    let span = Span::new(a.parse().ok()?, b.parse().ok()?);
    (span.start <= span.end).then_some(span)
}

pub fn parse_fbnyt_str(text: &str) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (index, line) in text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .enumerate()
    {
        let bad = |message: String| Error::Record { index, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 && cols.len() != 7 {
            return Err(bad(format!(
                "expected 6 or 7 columns, found {}",
                cols.len()
            )));
        }
        let subject_span =
            parse_span(cols[3]).ok_or_else(|| bad(format!("bad subject span `{}`", cols[3])))?;
        let object_span =
            parse_span(cols[4]).ok_or_else(|| bad(format!("bad object span `{}`", cols[4])))?;
        let sentence = tokenize(cols[5]);
        for span in [subject_span, object_span] {
            if span.end >= sentence.len() {
                return Err(bad(format!(
                    "span {span} outside sentence of {} tokens",
                    sentence.len()
                )));
            }
        }
        if subject_span.overlaps(&object_span) {
            return Err(bad(format!(
                "spans {subject_span} and {object_span} overlap"
            )));
        }
        let split = cols
            .get(6)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        out.push(RawRecord {
            subject: cols[0].trim().to_string(),
            object: cols[1].trim().to_string(),
            relation: cols[2].trim().to_string(),
            subject_span,
            object_span,
            sentence: Arc::new(sentence),
            split,
        });
    }
    Ok(out)
}

pub fn parse_fbnyt(path: &Path) -> Result<Vec<RawRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fbnyt_str(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSample {
    /// Index of the source record.
    pub index: usize,
    pub subject: ContextualMention,
    pub object: ContextualMention,
    pub relation: usize,
    pub split: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub entities: usize,
    pub relations: usize,
    pub samples: usize,
}

impl CorpusStats {
    fn of<'a>(records: impl Iterator<Item = &'a RawRecord>) -> Self {
        let mut sentences = BTreeSet::new();
        let mut entities = BTreeSet::new();
        let mut relations = BTreeSet::new();
        let mut samples = 0;
        for r in records {
            sentences.insert(r.sentence.joined());
            entities.insert(r.subject.as_str());
            entities.insert(r.object.as_str());
            relations.insert(r.relation.as_str());
            samples += 1;
        }
        Self {
            sentences: sentences.len(),
            entities: entities.len(),
            relations: relations.len(),
            samples,
        }
    }
}

#[derive(Debug, Default)]
pub struct FilteredFbnyt {
    pub samples: Vec<RelationSample>,
    pub drops: Vec<DropRecord>,
    pub before: CorpusStats,
    pub after: CorpusStats,
}

/// Keeps records whose two entities and relation all exist in `store`.
/// Mention heads are the last token of each span.
pub fn filter_fbnyt(records: &[RawRecord], store: &TripleStore) -> FilteredFbnyt {
    let mut out = FilteredFbnyt {
        before: CorpusStats::of(records.iter()),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for (index, r) in records.iter().enumerate() {
        let subject = store.entities().get(&r.subject);
        let object = store.entities().get(&r.object);
        let relation = store.relations().get(&r.relation);
        let (subject, object) = match (subject, object) {
            (Some(s), Some(o)) => (s, o),
            _ => {
                out.drops.push(DropRecord {
                    item: index,
                    reason: DropReason::OovEntity,
                });
                continue;
            }
        };
        let Some(relation) = relation else {
            out.drops.push(DropRecord {
                item: index,
                reason: DropReason::OovRelation,
            });
            continue;
        };
        let mention = |entity, span: Span| ContextualMention {
            entity,
            mention_id: index,
            sentence: Arc::clone(&r.sentence),
            head_index: span.end,
            span,
            source: MentionSource::Fbnyt,
        };
        out.samples.push(RelationSample {
            index,
            subject: mention(subject, r.subject_span),
            object: mention(object, r.object_span),
            relation,
            split: r.split.clone(),
        });
        kept.push(r);
    }
    out.after = CorpusStats::of(kept.into_iter());
    out
}

fn mention_columns(m: &ContextualMention, entities: &Vocabulary) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        entities.symbol(m.entity).unwrap_or_default(),
        m.head_index,
        m.span.start,
        m.span.end
    )
}

/// TSV: entity-symbol, head_index, span_start, span_end, space-joined tokens.
pub fn write_mentions(
    path: &Path,
    mentions: &[ContextualMention],
    entities: &Vocabulary,
) -> Result<()> {
    let mut w = create(path)?;
    for m in mentions {
        writeln!(
            w,
            "{}\t{}",
            mention_columns(m, entities),
            m.sentence.joined()
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// TSV: subject mention columns, object mention columns, relation, split, tokens.
pub fn write_relation_samples(
    path: &Path,
    samples: &[RelationSample],
    store: &TripleStore,
) -> Result<()> {
    let mut w = create(path)?;
    for s in samples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            mention_columns(&s.subject, store.entities()),
            mention_columns(&s.object, store.entities()),
            store.relations().symbol(s.relation).unwrap_or_default(),
            s.split.as_deref().unwrap_or(""),
            s.subject.sentence.joined()
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// TSV: item label, reason.
pub fn write_drops(
    path: &Path,
    drops: &[DropRecord],
    label: impl Fn(usize) -> String,
) -> Result<()> {
    let mut w = create(path)?;
    for d in drops {
        writeln!(w, "{}\t{}", label(d.item), d.reason.as_str()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
