//! Parsing, indexing and serving of knowledge-graph datasets.
//!
//! Triples are read from tab-separated files (`subject \t relation \t object`)
//! and mapped to dense integer ids through [`Vocabulary`]. Entity metadata
//! (labels, types, descriptions) lives in an [`EntityCatalog`] keyed by the
//! same entity ids.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::util::{create, read_lines};
use crate::{Error, Result};

pub const TRAIN: &str = "train";
pub const VALID: &str = "valid";
pub const TEST: &str = "test";

/// Ordered set of unique symbols with dense ids in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `symbol`, inserting it if unseen.
    pub fn get_or_insert(&mut self, symbol: &str) -> usize {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len();
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.as_str()))
    }
}

impl<S: AsRef<str>> FromIterator<S> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut vocab = Vocabulary::new();
        for s in iter {
            vocab.get_or_insert(s.as_ref());
        }
        vocab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

impl Triple {
    pub fn new(subject: usize, relation: usize, object: usize) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

/// A skipped input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

/// Writes rejections as TSV: line-number, reason, raw-line.
pub fn write_rejections(path: &Path, rejections: &[Rejection]) -> Result<()> {
    let mut w = create(path)?;
    for r in rejections {
        writeln!(w, "{}\t{}\t{}", r.line, r.reason, r.raw).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Default)]
pub struct ParsedTriples {
    pub triples: Vec<Triple>,
    pub rejections: Vec<Rejection>,
}

fn lines_of(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses triples from TSV text. When `extend` is false, lines naming
/// symbols outside the vocabularies are rejected instead of growing them.
pub fn parse_triples_str(
    text: &str,
    source: &str,
    entities: &mut Vocabulary,
    relations: &mut Vocabulary,
    extend: bool,
) -> Result<ParsedTriples> {
    let mut out = ParsedTriples::default();
    for (line_no, line) in lines_of(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (s, r, o) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if extend {
            let subject = entities.get_or_insert(s);
            let relation = relations.get_or_insert(r);
            let object = entities.get_or_insert(o);
            out.triples.push(Triple::new(subject, relation, object));
            continue;
        }
        match (entities.get(s), relations.get(r), entities.get(o)) {
            (Some(subject), Some(relation), Some(object)) => {
                out.triples.push(Triple::new(subject, relation, object))
            }
            (subject, relation, _) => {
                let reason = if relation.is_none() {
                    format!("unknown relation {r}")
                } else if subject.is_none() {
                    format!("unknown entity {s}")
                } else {
                    format!("unknown entity {o}")
                };
                out.rejections.push(Rejection {
                    line: line_no,
                    reason,
                    raw: line.to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn parse_triples(
    path: &Path,
    entities: &mut Vocabulary,
    relations: &mut Vocabulary,
    extend: bool,
) -> Result<ParsedTriples> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples_str(
        &text,
        &path.display().to_string(),
        entities,
        relations,
        extend,
    )
}

/// Paths of the three standard splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl SplitPaths {
    /// `train.txt`, `valid.txt`, `test.txt` inside `dir`; missing eval files are skipped.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            train: dir.join("train.txt"),
            valid: opt("valid.txt"),
            test: opt("test.txt"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Let valid/test introduce new symbols (true reproduces the standard FB15K counts).
    pub extend_on_eval: bool,
    /// Splits whose union forms the known-fact set used for filtered ranking.
    pub known_splits: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            extend_on_eval: true,
            known_splits: vec![TRAIN.into(), VALID.into(), TEST.into()],
        }
    }
}

/// Indexed triples with named splits.
#[derive(Debug, Clone)]
pub struct TripleStore {
    entities: Vocabulary,
    relations: Vocabulary,
    splits: BTreeMap<String, Vec<Triple>>,
    known: HashSet<Triple>,
    objects_of: HashMap<(usize, usize), BTreeSet<usize>>,
    subjects_of: HashMap<(usize, usize), BTreeSet<usize>>,
}

static EMPTY: BTreeSet<usize> = BTreeSet::new();

impl TripleStore {
    /// Builds a store, validating every id and indexing the `known_splits`.
    pub fn new(
        entities: Vocabulary,
        relations: Vocabulary,
        splits: BTreeMap<String, Vec<Triple>>,
        known_splits: &[String],
    ) -> Result<Self> {
        for triples in splits.values() {
            for t in triples {
                check_range("entity", t.subject, entities.len())?;
                check_range("relation", t.relation, relations.len())?;
                check_range("entity", t.object, entities.len())?;
            }
        }
        let mut store = Self {
            entities,
            relations,
            splits,
            known: HashSet::new(),
            objects_of: HashMap::new(),
            subjects_of: HashMap::new(),
        };
        for name in known_splits {
            let Some(triples) = store.splits.get(name) else {
                continue;
            };
            for t in triples {
                store.known.insert(*t);
                store
                    .objects_of
                    .entry((t.subject, t.relation))
                    .or_default()
                    .insert(t.object);
                store
                    .subjects_of
                    .entry((t.object, t.relation))
                    .or_default()
                    .insert(t.subject);
            }
        }
        Ok(store)
    }

    /// Convenience constructor: a single `train` split that is also the known-fact set.
    pub fn from_train(
        entities: Vocabulary,
        relations: Vocabulary,
        train: Vec<Triple>,
    ) -> Result<Self> {
        let mut splits = BTreeMap::new();
        splits.insert(TRAIN.to_string(), train);
        Self::new(entities, relations, splits, &[TRAIN.to_string()])
    }

    /// Loads train/valid/test in that order; vocabulary ids follow first occurrence.
    pub fn load(paths: &SplitPaths, options: &LoadOptions) -> Result<(Self, Vec<Rejection>)> {
        let mut entities = Vocabulary::new();
        let mut relations = Vocabulary::new();
        let mut splits = BTreeMap::new();
        let mut rejections = Vec::new();
        let train = parse_triples(&paths.train, &mut entities, &mut relations, true)?;
        splits.insert(TRAIN.to_string(), train.triples);
        for (name, path) in [(VALID, &paths.valid), (TEST, &paths.test)] {
            let Some(path) = path else { continue };
            let parsed =
                parse_triples(path, &mut entities, &mut relations, options.extend_on_eval)?;
            rejections.extend(parsed.rejections);
            splits.insert(name.to_string(), parsed.triples);
        }
        let store = Self::new(entities, relations, splits, &options.known_splits)?;
        Ok((store, rejections))
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Triples of a split; empty if the split does not exist.
    pub fn split(&self, name: &str) -> &[Triple] {
        self.splits.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }

    pub fn is_known(&self, t: &Triple) -> bool {
        self.known.contains(t)
    }

    pub fn known_objects(&self, subject: usize, relation: usize) -> &BTreeSet<usize> {
        self.objects_of.get(&(subject, relation)).unwrap_or(&EMPTY)
    }

    pub fn known_subjects(&self, object: usize, relation: usize) -> &BTreeSet<usize> {
        self.subjects_of.get(&(object, relation)).unwrap_or(&EMPTY)
    }

    pub fn relation_counts(&self, split: &str) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for t in self.split(split) {
            *counts.entry(t.relation).or_insert(0) += 1;
        }
        counts
    }

    pub fn symbols_of(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entities.symbol(t.subject).unwrap_or_default(),
            self.relations.symbol(t.relation).unwrap_or_default(),
            self.entities.symbol(t.object).unwrap_or_default(),
        )
    }

    /// Serializes a split back to the TSV input format.
    pub fn split_to_tsv(&self, name: &str) -> String {
        let mut out = String::new();
        for t in self.split(name) {
            let (s, r, o) = self.symbols_of(t);
            out.push_str(s);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(o);
            out.push('\n');
        }
        out
    }

    pub fn stats(&self, catalog: Option<&EntityCatalog>) -> StoreStats {
        StoreStats {
            entities: self.num_entities(),
            relations: self.num_relations(),
            types: catalog.map(|c| c.type_vocab().len()).unwrap_or(0),
            split_sizes: self
                .splits
                .iter()
                .map(|(k, v)| (k.clone(), v.len()))
                .collect(),
        }
    }
}

fn check_range(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id >= size {
        return Err(Error::OutOfRange { kind, id, size });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub entities: usize,
    pub relations: usize,
    pub types: usize,
    pub split_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityInfo {
    pub lexicalization: String,
    pub description: String,
    pub types: BTreeSet<usize>,
}

/// Per-entity lexicalization, description and type labels.
#[derive(Debug, Clone, Default)]
pub struct EntityCatalog {
    entries: Vec<EntityInfo>,
    type_vocab: Vocabulary,
}

/// Raw contents of the three metadata files. Any may be empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetadataSources<'a> {
    pub labels: &'a str,
    pub types: &'a str,
    pub descriptions: &'a str,
}

#[derive(Debug, Default)]
pub struct MetadataRejections {
    pub labels: Vec<Rejection>,
    pub types: Vec<Rejection>,
    pub descriptions: Vec<Rejection>,
}

impl MetadataRejections {
    pub fn total(&self) -> usize {
        self.labels.len() + self.types.len() + self.descriptions.len()
    }
}

impl EntityCatalog {
    pub fn from_sources(
        sources: MetadataSources<'_>,
        entities: &Vocabulary,
    ) -> (Self, MetadataRejections) {
        let mut catalog = EntityCatalog {
            entries: vec![EntityInfo::default(); entities.len()],
            type_vocab: Vocabulary::new(),
        };
        let mut rejected = MetadataRejections::default();

        // Split the first column off; returns None (and records) for unknown symbols.
        fn keyed<'l>(
            line_no: usize,
            line: &'l str,
            entities: &Vocabulary,
            sink: &mut Vec<Rejection>,
        ) -> Option<(usize, &'l str)> {
            let (symbol, rest) = line.split_once('\t').unwrap_or((line, ""));
            match entities.get(symbol.trim()) {
                Some(id) => Some((id, rest)),
                None => {
                    sink.push(Rejection {
                        line: line_no,
                        reason: format!("unknown entity {}", symbol.trim()),
                        raw: line.to_string(),
                    });
                    None
                }
            }
        }

        for (n, line) in lines_of(sources.labels) {
            if let Some((id, rest)) = keyed(n, line, entities, &mut rejected.labels) {
                catalog.entries[id].lexicalization = rest.trim().to_string();
            }
        }
        for (n, line) in lines_of(sources.types) {
            if let Some((id, rest)) = keyed(n, line, entities, &mut rejected.types) {
                for ty in rest.split_whitespace() {
                    let tid = catalog.type_vocab.get_or_insert(ty);
                    catalog.entries[id].types.insert(tid);
                }
            }
        }
        for (n, line) in lines_of(sources.descriptions) {
            if let Some((id, rest)) = keyed(n, line, entities, &mut rejected.descriptions) {
                catalog.entries[id].description = rest.trim().to_string();
            }
        }
        (catalog, rejected)
    }

    /// Reads whichever metadata files are given.
    pub fn load(
        labels: Option<&Path>,
        types: Option<&Path>,
        descriptions: Option<&Path>,
        entities: &Vocabulary,
    ) -> Result<(Self, MetadataRejections)> {
        let read = |p: Option<&Path>| -> Result<String> {
            match p {
                Some(p) => Ok(read_lines(p)?.join("\n")),
                None => Ok(String::new()),
            }
        };
        let (labels, types, descriptions) = (read(labels)?, read(types)?, read(descriptions)?);
        Ok(Self::from_sources(
            MetadataSources {
                labels: &labels,
                types: &types,
                descriptions: &descriptions,
            },
            entities,
        ))
    }

    pub fn get(&self, entity: usize) -> Option<&EntityInfo> {
        self.entries.get(entity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn type_vocab(&self) -> &Vocabulary {
        &self.type_vocab
    }

    pub fn types_of(&self, entity: usize) -> &BTreeSet<usize> {
        self.entries.get(entity).map(|e| &e.types).unwrap_or(&EMPTY)
    }
}
