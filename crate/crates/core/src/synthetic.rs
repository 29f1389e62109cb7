//! Small deterministic datasets with known answers.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg_store::{
    EntityCatalog, MetadataSources, Triple, TripleStore, Vocabulary, TEST, TRAIN,
};
use crate::util::write_all;
use crate::Result;

fn entity_vocab(n: usize) -> Vocabulary {
    (0..n).map(|i| format!("/synth/e{i}")).collect()
}

fn store(
    entities: Vocabulary,
    relations: Vocabulary,
    train: Vec<Triple>,
    test: Vec<Triple>,
) -> Result<TripleStore> {
    let mut splits = BTreeMap::new();
    splits.insert(TRAIN.to_string(), train);
    splits.insert(TEST.to_string(), test);
    TripleStore::new(
        entities,
        relations,
        splits,
        &[TRAIN.to_string(), TEST.to_string()],
    )
}

/// `n` entities on a cycle with relation `next` (`i → i+1`) and its inverse
/// `prev` (`i+1 → i`). Every tenth `next` and every tenth `prev` triple
/// (offset 3 and 7) is held out; its inverse always stays in training.
pub fn inverse_cycle(n: usize) -> Result<TripleStore> {
    let relations: Vocabulary = ["next", "prev"].into_iter().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let next = Triple::new(i, 0, j);
        let prev = Triple::new(j, 1, i);
        if i % 10 == 3 {
            test.push(next)
        } else {
            train.push(next)
        }
        if i % 10 == 7 {
            test.push(prev)
        } else {
            train.push(prev)
        }
    }
    store(entity_vocab(n), relations, train, test)
}

/// Pairs `(a, b)` with `(a, r, b)` in training and `(b, r, a)` unknown: the
/// direction-discrimination probes for an asymmetric relation.
pub fn direction_pairs(store: &TripleStore, relation: usize) -> Vec<(usize, usize)> {
    store
        .split(TRAIN)
        .iter()
        .filter(|t| t.relation == relation)
        .filter(|t| !store.is_known(&Triple::new(t.object, relation, t.subject)))
        .map(|t| (t.subject, t.object))
        .collect()
}

/// A store of uniformly random triples (no self loops), `n_test` of them held out.
pub fn random_kg(
    n_entities: usize,
    n_relations: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<TripleStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut triples = Vec::new();
    while triples.len() < n_train + n_test {
        let s = rng.gen_range(0..n_entities);
        let o = rng.gen_range(0..n_entities);
        let t = Triple::new(s, rng.gen_range(0..n_relations), o);
        if s != o && seen.insert(t) {
            triples.push(t);
        }
    }
    let test = triples.split_off(n_train);
    let relations: Vocabulary = (0..n_relations).map(|r| format!("/synth/r{r}")).collect();
    store(entity_vocab(n_entities), relations, triples, test)
}

const NAMES: [&str; 12] = [
    "Arden", "Bellamy", "Corvin", "Dalton", "Ellery", "Fenwick", "Garrick", "Hollis", "Ingram",
    "Jasper", "Kendrick", "Lowell",
];

const FILLERS: [&str; 16] = [
    "yesterday",
    "reportedly",
    "in",
    "the",
    "city",
    "officials",
    "said",
    "that",
    "according",
    "to",
    "sources",
    "last",
    "year",
    "quietly",
    "again",
    "finally",
];

/// Typed KG: `groups` hub entities, two region entities, and
/// `members_per_group` members per hub. Each member has
/// `(member, member_of, hub)`, `(member, based_in, region<g % 2>)` and a few
/// random `knows` edges inside its group. A member's types are
/// `/type/group<g>` and `/type/region<g % 2>`, so each type is read off one
/// outgoing edge. Hubs and regions carry no types or descriptions. Member
/// descriptions mention the member name but say nothing about the group.
pub struct TypedKg {
    pub store: TripleStore,
    pub catalog: EntityCatalog,
    /// Metadata file contents the catalog was parsed from.
    pub labels: String,
    pub types: String,
    pub descriptions: String,
}

pub fn typed_kg(groups: usize, members_per_group: usize, seed: u64) -> Result<TypedKg> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hubs = groups + 2;
    let n = hubs + groups * members_per_group;
    let entities = entity_vocab(n);
    let relations: Vocabulary = ["member_of", "knows", "based_in"].into_iter().collect();
    let group_of = |m: usize| (m - hubs) / members_per_group;
    let mut train = Vec::new();
    for m in hubs..n {
        let g = group_of(m);
        train.push(Triple::new(m, 0, g));
        train.push(Triple::new(m, 2, groups + g % 2));
        for _ in 0..2 {
            let peer = hubs + g * members_per_group + rng.gen_range(0..members_per_group);
            if peer != m {
                train.push(Triple::new(m, 1, peer));
            }
        }
    }
    train.sort();
    train.dedup();
    let mut labels = String::new();
    let mut types = String::new();
    let mut descriptions = String::new();
    for (id, symbol) in entities.iter() {
        let name = format!("{}{}", NAMES[id % NAMES.len()], id);
        writeln!(labels, "{symbol}\t{name}").unwrap();
        if id >= hubs {
            let g = group_of(id);
            writeln!(types, "{symbol}\t/type/group{g} /type/region{}", g % 2).unwrap();
            let filler = FILLERS.choose(&mut rng).unwrap();
            writeln!(
                descriptions,
                "{symbol}\t{name} is an entity in the synthetic graph. It appears {filler} in records."
            )
            .unwrap();
        }
    }
    let (catalog, _) = EntityCatalog::from_sources(
        MetadataSources {
            labels: &labels,
            types: &types,
            descriptions: &descriptions,
        },
        &entities,
    );
    Ok(TypedKg {
        store: store(entities, relations, train, Vec::new())?,
        catalog,
        labels,
        types,
        descriptions,
    })
}

pub const KEYWORDS: [(&str, &str); 4] = [
    ("/synth/founded", "founded"),
    ("/synth/married", "married"),
    ("/synth/acquired", "acquired"),
    ("/synth/visited", "visited"),
];

/// Keyword-driven relation corpus in FB-NYT line format. Each sentence reads
/// `<fillers> <Subject> <keyword> <Object> <fillers> .`, and the relation is
/// the one whose keyword appears. Returns the store (entities and relations
/// of the corpus, one triple per line) and the TSV text.
pub fn keyword_corpus(
    n_entities: usize,
    n_samples: usize,
    n_relations: usize,
    seed: u64,
) -> Result<(TripleStore, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = entity_vocab(n_entities);
    let relations: Vocabulary = KEYWORDS[..n_relations].iter().map(|(r, _)| *r).collect();
    let mut text = String::new();
    let mut triples = Vec::new();
    for _ in 0..n_samples {
        let s = rng.gen_range(0..n_entities);
        let mut o = rng.gen_range(0..n_entities);
        if o == s {
            o = (o + 1) % n_entities;
        }
        let r = rng.gen_range(0..n_relations);
        let lead: Vec<&str> = (0..rng.gen_range(0..4))
            .map(|_| *FILLERS.choose(&mut rng).unwrap())
            .collect();
        let tail: Vec<&str> = (0..rng.gen_range(0..4))
            .map(|_| *FILLERS.choose(&mut rng).unwrap())
            .collect();
        let name = |e: usize| format!("{}{}", NAMES[e % NAMES.len()], e);
        let mut words: Vec<String> = lead.iter().map(|w| w.to_string()).collect();
        let s_pos = words.len();
        words.push(name(s));
        words.push(KEYWORDS[r].1.to_string());
        let o_pos = words.len();
        words.push(name(o));
        words.extend(tail.iter().map(|w| w.to_string()));
        words.push(".".into());
        writeln!(
            text,
            "{}\t{}\t{}\t{s_pos}:{s_pos}\t{o_pos}:{o_pos}\t{}",
            entities.symbol(s).unwrap(),
            entities.symbol(o).unwrap(),
            KEYWORDS[r].0,
            words.join(" ")
        )
        .unwrap();
        triples.push(Triple::new(s, r, o));
    }
    triples.sort();
    triples.dedup();
    Ok((store(entities, relations, triples, Vec::new())?, text))
}

/// Writes every non-empty split of `store` as `<split>.txt` under `dir`.
pub fn write_splits(store: &TripleStore, dir: &Path) -> Result<()> {
    for name in store.split_names() {
        if !store.split(name).is_empty() {
            write_all(&dir.join(format!("{name}.txt")), &store.split_to_tsv(name))?;
        }
    }
    Ok(())
}
