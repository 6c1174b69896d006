//! Tabular projection of the record files.
//!
//! One row per record plus three link tables. The index is a cache: it can
//! always be rebuilt from `records/` and must then compare equal to the
//! incrementally maintained one.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{DocumentRecord, KindTag, PlanSubkind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexRow {
    pub id: String,
    pub kind: KindTag,
    pub plan_subkind: Option<PlanSubkind>,
    pub title: String,
    pub author: String,
    pub capture_date: Option<NaiveDate>,
    pub schema_version: u32,
    pub archived: bool,
    /// Asset link for image-bearing kinds.
    pub thumbnail: Option<String>,
}

impl IndexRow {
    pub fn from_record(r: &DocumentRecord) -> Self {
        IndexRow {
            id: r.id.clone(),
            kind: r.kind.tag,
            plan_subkind: r.kind.plan_subkind,
            title: r.title.clone(),
            author: r.author.clone(),
            capture_date: r.capture_date,
            schema_version: r.schema_version,
            archived: r.is_archived(),
            thumbnail: r
                .kind
                .tag
                .is_image_bearing()
                .then(|| r.content.href.clone()),
        }
    }
}

/// Link table of (record id, target id) pairs.
pub type LinkTable = BTreeSet<(String, String)>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexSnapshot {
    pub rows: BTreeMap<String, IndexRow>,
    pub record_places: LinkTable,
    pub record_periods: LinkTable,
    pub record_keywords: LinkTable,
}

fn targets_of<'a>(table: &'a LinkTable, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    table
        .range((id.to_string(), String::new())..)
        .take_while(move |(rec, _)| rec == id)
        .map(|(_, target)| target.as_str())
}

fn records_linked_to<'a>(table: &'a LinkTable, targets: &'a BTreeSet<String>) -> BTreeSet<&'a str> {
    table
        .iter()
        .filter(|(_, t)| targets.contains(t))
        .map(|(r, _)| r.as_str())
        .collect()
}

impl IndexSnapshot {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a DocumentRecord>) -> Self {
        let mut index = IndexSnapshot::default();
        for r in records {
            index.upsert(r);
        }
        index
    }

    /// Replaces every row and link of `record.id` with the record's current
    /// projection.
    pub fn upsert(&mut self, record: &DocumentRecord) {
        self.remove(&record.id);
        self.rows
            .insert(record.id.clone(), IndexRow::from_record(record));
        for p in &record.place_refs {
            self.record_places.insert((record.id.clone(), p.clone()));
        }
        for p in &record.period_refs {
            self.record_periods.insert((record.id.clone(), p.clone()));
        }
        for k in &record.subject_keywords {
            self.record_keywords.insert((record.id.clone(), k.clone()));
        }
    }

    pub fn remove(&mut self, id: &str) {
        if self.rows.remove(id).is_none() {
            return;
        }
        for table in [
            &mut self.record_places,
            &mut self.record_periods,
            &mut self.record_keywords,
        ] {
            let stale: Vec<(String, String)> = targets_of(table, id)
                .map(|t| (id.to_string(), t.to_string()))
                .collect();
            for key in stale {
                table.remove(&key);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn places_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        targets_of(&self.record_places, id)
    }

    pub fn periods_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        targets_of(&self.record_periods, id)
    }

    pub fn keywords_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        targets_of(&self.record_keywords, id)
    }

    pub fn records_with_places<'a>(&'a self, places: &'a BTreeSet<String>) -> BTreeSet<&'a str> {
        records_linked_to(&self.record_places, places)
    }

    pub fn records_with_periods<'a>(&'a self, periods: &'a BTreeSet<String>) -> BTreeSet<&'a str> {
        records_linked_to(&self.record_periods, periods)
    }

    pub fn records_with_keywords<'a>(&'a self, keywords: &'a BTreeSet<String>) -> BTreeSet<&'a str> {
        records_linked_to(&self.record_keywords, keywords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::random_record;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn incremental_equals_bulk() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut records: Vec<DocumentRecord> = (0..40).map(|i| random_record(&mut rng, i)).collect();
        let mut live = IndexSnapshot::default();
        for r in &records {
            live.upsert(r);
        }
        // rewrite some, re-upsert
        for r in records.iter_mut().step_by(3) {
            r.place_refs.reverse();
            r.place_refs.pop();
            r.subject_keywords.clear();
            live.upsert(r);
        }
        assert_eq!(live, IndexSnapshot::from_records(&records));
        live.remove(&records[0].id);
        assert_eq!(live, IndexSnapshot::from_records(&records[1..]));
    }
}
