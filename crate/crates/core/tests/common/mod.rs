//! Shared test support: store builders and independent oracles that read
//! the record files directly instead of going through the index.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use sia_core::fixture::{self, RandomSite, SUBJECT_TERMS};
use sia_core::query::QuerySpec;
use sia_core::{KindTag, Place, RecordDraft, ReferenceData, Role, Store};

/// The fields a query can see, read straight from a record file.
#[derive(Debug, Clone)]
pub struct Scanned {
    pub id: String,
    pub kind: String,
    pub author: String,
    pub capture_date: Option<String>,
    pub keywords: Vec<String>,
    pub places: Vec<String>,
    pub periods: Vec<String>,
    pub archived: bool,
}

fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    n.children().find(|c| c.has_tag_name(name))
}

fn texts(n: roxmltree::Node<'_, '_>, container: &str) -> Vec<String> {
    child(n, container)
        .map(|c| {
            c.children()
                .filter(|x| x.is_element())
                .map(|x| x.text().unwrap_or("").to_string())
                .collect()
        })
        .unwrap_or_default()
}

pub fn scan_record_files(records_dir: &Path) -> Vec<Scanned> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(records_dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.starts_with('.') || !name.ends_with(".xml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let root = doc.root_element();
        let audit = child(root, "audit").unwrap();
        out.push(Scanned {
            id: root.attribute("id").unwrap().to_string(),
            kind: root.attribute("kind").unwrap().to_string(),
            author: child(root, "author").and_then(|a| a.text()).unwrap_or("").to_string(),
            capture_date: child(root, "capture-date").and_then(|d| d.text()).map(str::to_string),
            keywords: texts(root, "subject"),
            places: texts(root, "places"),
            periods: texts(root, "periods"),
            archived: child(audit, "archived").is_some(),
        });
    }
    out
}

fn descendants(roots: &BTreeSet<String>, places: &[Place]) -> BTreeSet<String> {
    let mut set = roots.clone();
    loop {
        let n = set.len();
        for p in places {
            if p.parent_id.as_ref().is_some_and(|x| set.contains(x)) {
                set.insert(p.id.clone());
            }
        }
        if set.len() == n {
            return set;
        }
    }
}

fn deterministic(a: &Scanned, b: &Scanned) -> Ordering {
    // ISO dates sort lexically; absent dates go last
    a.kind
        .cmp(&b.kind)
        .then_with(|| match (&a.capture_date, &b.capture_date) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.id.cmp(&b.id))
}

/// Brute-force filter and sort over scanned files.
pub fn oracle_search(spec: &QuerySpec, records: &[Scanned], reference: &ReferenceData) -> Vec<String> {
    let places = descendants(&spec.place_ids, &reference.places);
    let mut hits: Vec<&Scanned> = records
        .iter()
        .filter(|r| spec.include_archived || !r.archived)
        .filter(|r| spec.kinds.is_empty() || spec.kinds.iter().any(|k| k.as_str() == r.kind))
        .filter(|r| spec.place_ids.is_empty() || r.places.iter().any(|p| places.contains(p)))
        .filter(|r| match spec.epoch_interval {
            None => true,
            Some((lo, hi)) => r.periods.iter().any(|id| {
                let p = reference.period(id).unwrap();
                (lo..=hi).any(|y| y >= p.start_year && y <= p.end_year)
            }),
        })
        .filter(|r| spec.keywords.is_empty() || r.keywords.iter().any(|k| spec.keywords.contains(k)))
        .filter(|r| spec.author.as_ref().is_none_or(|a| &r.author == a))
        .collect();
    hits.sort_by(|a, b| deterministic(a, b));
    hits.into_iter().map(|r| r.id.clone()).collect()
}

/// Scores every other live record and sorts.
pub fn oracle_related(id: &str, records: &[Scanned]) -> Vec<(String, u32)> {
    let me = records.iter().find(|r| r.id == id).unwrap();
    let shared = |a: &[String], b: &[String]| a.iter().filter(|x| b.contains(x)).count() as u32;
    let mut scored: Vec<(&Scanned, u32)> = records
        .iter()
        .filter(|r| r.id != id && !r.archived)
        .map(|r| {
            let s = 2 * shared(&me.places, &r.places) + 2 * shared(&me.periods, &r.periods) + shared(&me.keywords, &r.keywords);
            (r, s)
        })
        .filter(|(_, s)| *s > 0)
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| sb.cmp(sa).then_with(|| deterministic(a, b)));
    scored.into_iter().map(|(r, s)| (r.id.clone(), s)).collect()
}

pub fn random_spec<R: Rng>(rng: &mut R, reference: &ReferenceData) -> QuerySpec {
    let mut spec = QuerySpec::default();
    if rng.random_bool(0.4) {
        for _ in 0..rng.random_range(1..3) {
            spec.kinds.insert(*KindTag::ALL.choose(rng).unwrap());
        }
    }
    if rng.random_bool(0.5) {
        for _ in 0..rng.random_range(1..3) {
            spec.place_ids.insert(reference.places.choose(rng).unwrap().id.clone());
        }
    }
    if rng.random_bool(0.5) {
        let lo = rng.random_range(850..1750);
        spec.epoch_interval = Some((lo, lo + rng.random_range(0..150)));
    }
    if rng.random_bool(0.4) {
        for _ in 0..rng.random_range(1..3) {
            spec.keywords.insert(SUBJECT_TERMS.choose(rng).unwrap().to_string());
        }
    }
    if rng.random_bool(0.2) {
        spec.author = Some(fixture::AUTHORS.choose(rng).unwrap().to_string());
    }
    spec.include_archived = rng.random_bool(0.2);
    spec
}

/// A fresh store over a random site.
pub fn random_store<R: Rng>(root: &Path, rng: &mut R, n_places: usize, n_periods: usize) -> (Store, RandomSite) {
    let site = fixture::random_site(rng, n_places, n_periods);
    let store = Store::create(root, &site.schema, &site.reference).unwrap();
    (store, site)
}

pub fn ingest_random<R: Rng>(store: &Store, site: &RandomSite, rng: &mut R, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| store.ingest(fixture::random_draft(rng, site), Role::Expert).unwrap().id.clone())
        .collect()
}

/// The castle fixture, assets ingested through `media/`.
pub fn castle_store(root: &Path) -> Store {
    let site = fixture::castle_site();
    let store = Store::create(root.join("store"), &site.schema, &site.reference).unwrap();
    let src = root.join("src");
    std::fs::create_dir_all(&src).unwrap();
    for e in &site.entries {
        let path = src.join(&e.file_name);
        std::fs::write(&path, &e.bytes).unwrap();
        let draft: RecordDraft = e.draft.clone();
        store.ingest_asset(draft, &path, Role::Expert).unwrap();
    }
    store
}

/// Multiset of (path, value) leaf pairs of a record's attributes, legacy
/// values included under their recorded path.
pub fn value_multiset(r: &sia_core::DocumentRecord) -> BTreeMap<(String, String), usize> {
    let mut m = BTreeMap::new();
    for pair in r.attributes.leaf_pairs(r.kind.tag) {
        *m.entry(pair).or_default() += 1;
    }
    for l in &r.attributes.legacy {
        *m.entry((l.path.clone(), l.value.clone())).or_default() += 1;
    }
    m
}
