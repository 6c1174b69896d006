//! Document inquiry: faceted search, browsing by history or place, and
//! relatedness navigation from a given document.
//!
//! Facets combine with AND; the values selected within one facet combine
//! with OR. Places expand to their descendants and the epoch criterion
//! matches records with at least one period overlapping the interval.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SiaError};
use crate::index::{IndexRow, IndexSnapshot};
use crate::model::{KindTag, ReferenceData, AUTHOR_FACET, SUBJECT_FACET};
use crate::validate::{period_overlaps, place_descendants};

pub const DEFAULT_LIMIT: usize = 50;
pub const MAX_LIMIT: usize = 500;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct QuerySpec {
    pub kinds: BTreeSet<KindTag>,
    pub place_ids: BTreeSet<String>,
    pub epoch_interval: Option<(i32, i32)>,
    pub keywords: BTreeSet<String>,
    pub author: Option<String>,
    pub include_archived: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultItem {
    pub id: String,
    pub kind: KindTag,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultPage {
    pub total: usize,
    pub items: Vec<ResultItem>,
    pub offset: usize,
    pub limit: usize,
}

impl ResultPage {
    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.id.as_str()).collect()
    }
}

/// Pagination window; the limit is clamped to [`MAX_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page {
            offset: 0,
            limit: DEFAULT_LIMIT,
        }
    }
}

impl Page {
    pub fn new(offset: usize, limit: usize) -> Self {
        Page {
            offset,
            limit: limit.min(MAX_LIMIT),
        }
    }

    pub fn all() -> Self {
        Page::new(0, MAX_LIMIT)
    }
}

/// Relatedness weights per shared link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatednessWeights {
    pub place: u32,
    pub period: u32,
    pub keyword: u32,
}

impl Default for RelatednessWeights {
    fn default() -> Self {
        RelatednessWeights {
            place: 2,
            period: 2,
            keyword: 1,
        }
    }
}

/// Deterministic result order: kind tag, capture date ascending with
/// undated records last, then id.
pub fn standard_order(a: &IndexRow, b: &IndexRow) -> std::cmp::Ordering {
    a.kind
        .as_str()
        .cmp(b.kind.as_str())
        .then_with(|| a.capture_date.is_none().cmp(&b.capture_date.is_none()))
        .then_with(|| a.capture_date.cmp(&b.capture_date))
        .then_with(|| a.id.cmp(&b.id))
}

fn item(row: &IndexRow, score: Option<u32>) -> ResultItem {
    ResultItem {
        id: row.id.clone(),
        kind: row.kind,
        title: row.title.clone(),
        thumbnail: row.thumbnail.clone(),
        score,
    }
}

fn paginate(rows: Vec<(&IndexRow, Option<u32>)>, page: Page) -> ResultPage {
    let page = Page::new(page.offset, page.limit);
    ResultPage {
        total: rows.len(),
        items: rows
            .into_iter()
            .skip(page.offset)
            .take(page.limit)
            .map(|(r, s)| item(r, s))
            .collect(),
        offset: page.offset,
        limit: page.limit,
    }
}

/// Terms of the author facet: the `author` vocabulary when the site defines
/// one, otherwise the distinct authors found in the index.
pub fn author_terms(index: &IndexSnapshot, reference: &ReferenceData) -> Vec<String> {
    match reference.vocabulary(AUTHOR_FACET) {
        Some(v) => v.terms.clone(),
        None => index
            .rows
            .values()
            .map(|r| r.author.clone())
            .filter(|a| !a.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    }
}

/// Every selectable facet: the vocabularies, plus derived `author`, `kinds`,
/// `places` and `periods` lists for populating selection forms.
pub fn list_facets(index: &IndexSnapshot, reference: &ReferenceData) -> BTreeMap<String, Vec<String>> {
    let mut facets: BTreeMap<String, Vec<String>> = reference
        .vocabularies
        .iter()
        .map(|v| (v.facet_name.clone(), v.terms.clone()))
        .collect();
    facets.insert(AUTHOR_FACET.into(), author_terms(index, reference));
    let present: BTreeSet<KindTag> = index.rows.values().filter(|r| !r.archived).map(|r| r.kind).collect();
    facets.insert(
        "kinds".into(),
        KindTag::ALL
            .into_iter()
            .filter(|k| present.contains(k))
            .map(|k| k.as_str().to_string())
            .collect(),
    );
    facets.insert("places".into(), reference.places.iter().map(|p| p.id.clone()).collect());
    facets.insert("periods".into(), reference.periods.iter().map(|p| p.id.clone()).collect());
    facets.entry(SUBJECT_FACET.into()).or_default();
    facets
}

pub fn validate_spec(spec: &QuerySpec, index: &IndexSnapshot, reference: &ReferenceData) -> Result<()> {
    if let Some((lo, hi)) = spec.epoch_interval {
        if lo > hi {
            return Err(SiaError::InvalidSpec(format!("epoch interval {lo}..{hi} is reversed")));
        }
    }
    for p in &spec.place_ids {
        if reference.place(p).is_none() {
            return Err(SiaError::InvalidSpec(format!("unknown place '{p}'")));
        }
    }
    let subject = reference.vocabulary(SUBJECT_FACET);
    for k in &spec.keywords {
        if !subject.is_some_and(|v| v.contains(k)) {
            return Err(SiaError::InvalidSpec(format!("unknown subject term '{k}'")));
        }
    }
    if let Some(a) = &spec.author {
        if !author_terms(index, reference).contains(a) {
            return Err(SiaError::InvalidSpec(format!("unknown author '{a}'")));
        }
    }
    Ok(())
}

/// Rows matching `spec`, in standard order.
fn matching_rows<'a>(
    spec: &QuerySpec,
    index: &'a IndexSnapshot,
    reference: &ReferenceData,
) -> Result<Vec<&'a IndexRow>> {
    validate_spec(spec, index, reference)?;

    let place_hits = if spec.place_ids.is_empty() {
        None
    } else {
        let mut expanded = BTreeSet::new();
        for p in &spec.place_ids {
            expanded.extend(place_descendants(p, &reference.places)?);
        }
        Some(
            index
                .records_with_places(&expanded)
                .into_iter()
                .map(str::to_string)
                .collect::<BTreeSet<String>>(),
        )
    };
    let epoch_hits = match spec.epoch_interval {
        None => None,
        Some((lo, hi)) => {
            let mut overlapping = BTreeSet::new();
            for p in &reference.periods {
                if period_overlaps(p, lo, hi)? {
                    overlapping.insert(p.id.clone());
                }
            }
            Some(
                index
                    .records_with_periods(&overlapping)
                    .into_iter()
                    .map(str::to_string)
                    .collect::<BTreeSet<String>>(),
            )
        }
    };
    let keyword_hits = (!spec.keywords.is_empty()).then(|| index.records_with_keywords(&spec.keywords));

    let mut rows: Vec<&IndexRow> = index
        .rows
        .values()
        .filter(|r| spec.include_archived || !r.archived)
        .filter(|r| spec.kinds.is_empty() || spec.kinds.contains(&r.kind))
        .filter(|r| spec.author.as_ref().is_none_or(|a| &r.author == a))
        .filter(|r| place_hits.as_ref().is_none_or(|s| s.contains(&r.id)))
        .filter(|r| epoch_hits.as_ref().is_none_or(|s| s.contains(&r.id)))
        .filter(|r| keyword_hits.as_ref().is_none_or(|s| s.contains(r.id.as_str())))
        .collect();
    rows.sort_by(|a, b| standard_order(a, b));
    Ok(rows)
}

pub fn search(
    spec: &QuerySpec,
    page: Page,
    index: &IndexSnapshot,
    reference: &ReferenceData,
) -> Result<ResultPage> {
    let rows = matching_rows(spec, index, reference)?;
    Ok(paginate(rows.into_iter().map(|r| (r, None)).collect(), page))
}

/// Records referencing `period_id`, restricted to the period's own interval.
pub fn browse_by_history(
    period_id: &str,
    page: Page,
    index: &IndexSnapshot,
    reference: &ReferenceData,
) -> Result<ResultPage> {
    let period = reference
        .period(period_id)
        .ok_or_else(|| SiaError::UnknownPeriod(period_id.to_string()))?;
    let spec = QuerySpec {
        epoch_interval: Some((period.start_year, period.end_year)),
        ..QuerySpec::default()
    };
    let rows = matching_rows(&spec, index, reference)?
        .into_iter()
        .filter(|r| index.periods_of(&r.id).any(|p| p == period_id))
        .map(|r| (r, None))
        .collect();
    Ok(paginate(rows, page))
}

/// Records linked to `place_id` or any of its descendants.
pub fn browse_by_place(
    place_id: &str,
    page: Page,
    index: &IndexSnapshot,
    reference: &ReferenceData,
) -> Result<ResultPage> {
    if reference.place(place_id).is_none() {
        return Err(SiaError::UnknownPlace(place_id.to_string()));
    }
    let spec = QuerySpec {
        place_ids: BTreeSet::from([place_id.to_string()]),
        ..QuerySpec::default()
    };
    search(&spec, page, index, reference)
}

/// Other non-archived records ranked by shared places, periods and
/// keywords. Records sharing nothing are left out.
pub fn related_documents(
    record_id: &str,
    limit: usize,
    weights: RelatednessWeights,
    index: &IndexSnapshot,
) -> Result<ResultPage> {
    if !index.rows.contains_key(record_id) {
        return Err(SiaError::NotFound(record_id.to_string()));
    }
    let places: BTreeSet<&str> = index.places_of(record_id).collect();
    let periods: BTreeSet<&str> = index.periods_of(record_id).collect();
    let keywords: BTreeSet<&str> = index.keywords_of(record_id).collect();

    let mut scores: BTreeMap<&str, u32> = BTreeMap::new();
    let mut add = |table: &'_ crate::index::LinkTable, mine: &BTreeSet<&str>, w: u32| {
        for (rec, target) in table.iter() {
            if rec != record_id && mine.contains(target.as_str()) {
                *scores.entry(index.rows.get_key_value(rec).unwrap().0.as_str()).or_default() += w;
            }
        }
    };
    add(&index.record_places, &places, weights.place);
    add(&index.record_periods, &periods, weights.period);
    add(&index.record_keywords, &keywords, weights.keyword);

    let mut ranked: Vec<(&IndexRow, u32)> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0)
        .map(|(id, s)| (&index.rows[id], s))
        .filter(|(r, _)| !r.archived)
        .collect();
    ranked.sort_by(|a, b| Reverse(a.1).cmp(&Reverse(b.1)).then_with(|| standard_order(a.0, b.0)));
    Ok(paginate(
        ranked.into_iter().map(|(r, s)| (r, Some(s))).collect(),
        Page::new(0, limit),
    ))
}
