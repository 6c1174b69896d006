//! Record, reference-data and schema validation.
//!
//! Violations are data: every check runs and the full list comes back in a
//! fixed field order, so the same input always yields the same list.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SiaError};
use crate::model::{
    AttrEntry, AttrValue, AttributeNode, DocumentRecord, KindTag, MetadataSchema, Period, Place,
    ValueType, Vocabulary, SUBJECT_FACET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    NonEmptyRequired,
    SchemaVersionMismatch,
    PlanSubkind,
    InvalidIdentifier,
    InvalidChecksum,
    UnknownVocabularyTerm,
    UnknownFacet,
    UnresolvedPlace,
    UnresolvedPeriod,
    DuplicateReference,
    NonFinite,
    UnknownAttribute,
    DuplicateAttribute,
    NotRepeatable,
    RequiredMissing,
    TypeMismatch,
    InvalidCharacter,
    InvalidInterval,
    ParentCycle,
    InvalidFootprint,
    DuplicateId,
    InvalidSchemaNode,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::NonEmptyRequired => "non-empty-required",
            Rule::SchemaVersionMismatch => "schema-version-mismatch",
            Rule::PlanSubkind => "plan-subkind",
            Rule::InvalidIdentifier => "invalid-identifier",
            Rule::InvalidChecksum => "invalid-checksum",
            Rule::UnknownVocabularyTerm => "unknown-vocabulary-term",
            Rule::UnknownFacet => "unknown-facet",
            Rule::UnresolvedPlace => "unresolved-place",
            Rule::UnresolvedPeriod => "unresolved-period",
            Rule::DuplicateReference => "duplicate-reference",
            Rule::NonFinite => "non-finite",
            Rule::UnknownAttribute => "unknown-attribute",
            Rule::DuplicateAttribute => "duplicate-attribute",
            Rule::NotRepeatable => "not-repeatable",
            Rule::RequiredMissing => "required-missing",
            Rule::TypeMismatch => "type-mismatch",
            Rule::InvalidCharacter => "invalid-character",
            Rule::InvalidInterval => "invalid-interval",
            Rule::ParentCycle => "parent-cycle",
            Rule::InvalidFootprint => "invalid-footprint",
            Rule::DuplicateId => "duplicate-id",
            Rule::InvalidSchemaNode => "invalid-schema-node",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken rule, located by a field path such as `content.href` or
/// `attributes/photo/camera/lens`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, rule: Rule, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.path, self.message, self.rule)
    }
}

/// Lowercase URL-safe slug: `[a-z0-9]+(-[a-z0-9]+)*`.
pub fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && s.split('-')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
}

/// Characters XML 1.0 can carry in text and attribute values.
pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

fn check_chars(path: &str, value: &str, out: &mut Vec<Violation>) {
    if let Some(c) = value.chars().find(|c| !is_xml_char(*c)) {
        out.push(Violation::new(
            path,
            Rule::InvalidCharacter,
            format!("character U+{:04X} cannot be stored", c as u32),
        ));
    }
}

fn check_refs(
    field: &str,
    refs: &[String],
    known: &HashSet<&str>,
    unresolved: Rule,
    out: &mut Vec<Violation>,
) {
    let mut seen = HashSet::new();
    for (i, r) in refs.iter().enumerate() {
        let path = format!("{field}[{i}]");
        if !seen.insert(r.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateReference, format!("'{r}' listed twice")));
        }
        if !known.contains(r.as_str()) {
            out.push(Violation::new(&path, unresolved, format!("'{r}' does not exist")));
        }
    }
}

/// Checks `record` against the schema, vocabularies and reference entities.
/// Returns an empty list iff the record is valid.
pub fn validate_record(
    record: &DocumentRecord,
    schema: &MetadataSchema,
    vocabularies: &[Vocabulary],
    periods: &[Period],
    places: &[Place],
) -> Vec<Violation> {
    let mut out = Vec::new();

    if record.schema_version != schema.version {
        out.push(Violation::new(
            "schemaVersion",
            Rule::SchemaVersionMismatch,
            format!(
                "record is at v{} but validated against v{}",
                record.schema_version, schema.version
            ),
        ));
    }
    if !is_slug(&record.id) {
        out.push(Violation::new("id", Rule::InvalidIdentifier, "identifier must be a lowercase slug"));
    }
    match (record.kind.tag, record.kind.plan_subkind) {
        (KindTag::RasterPlan, None) => out.push(Violation::new(
            "kind.planSubkind",
            Rule::PlanSubkind,
            "raster plans need a plan subkind",
        )),
        (tag, Some(_)) if tag != KindTag::RasterPlan => out.push(Violation::new(
            "kind.planSubkind",
            Rule::PlanSubkind,
            "only raster plans carry a plan subkind",
        )),
        _ => {}
    }

    if record.title.trim().is_empty() {
        out.push(Violation::new("title", Rule::NonEmptyRequired, "title must not be empty"));
    }
    check_chars("title", &record.title, &mut out);
    check_chars("author", &record.author, &mut out);
    check_chars("provenance", &record.provenance, &mut out);

    if record.content.href.is_empty() {
        out.push(Violation::new("content.href", Rule::NonEmptyRequired, "href must not be empty"));
    }
    check_chars("content.href", &record.content.href, &mut out);
    if record.content.media_format.is_empty() {
        out.push(Violation::new(
            "content.format",
            Rule::NonEmptyRequired,
            "media format must not be empty",
        ));
    }
    check_chars("content.format", &record.content.media_format, &mut out);
    if !record
        .content
        .checksum
        .bytes()
        .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        out.push(Violation::new(
            "content.checksum",
            Rule::InvalidChecksum,
            "checksum must be lowercase hex",
        ));
    }

    let subject = vocabularies.iter().find(|v| v.facet_name == SUBJECT_FACET);
    let mut seen = HashSet::new();
    for (i, kw) in record.subject_keywords.iter().enumerate() {
        let path = format!("subjectKeywords[{i}]");
        if !seen.insert(kw.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateReference, format!("'{kw}' listed twice")));
        }
        if !subject.is_some_and(|v| v.contains(kw)) {
            out.push(Violation::new(
                &path,
                Rule::UnknownVocabularyTerm,
                format!("'{kw}' is not a term of the subject facet"),
            ));
        }
    }

    let place_ids: HashSet<&str> = places.iter().map(|p| p.id.as_str()).collect();
    check_refs("placeRefs", &record.place_refs, &place_ids, Rule::UnresolvedPlace, &mut out);
    let period_ids: HashSet<&str> = periods.iter().map(|p| p.id.as_str()).collect();
    check_refs("periodRefs", &record.period_refs, &period_ids, Rule::UnresolvedPeriod, &mut out);

    if let Some(c) = record.coordinates {
        if !(c.x.is_finite() && c.y.is_finite() && c.z.is_finite()) {
            out.push(Violation::new("coordinates", Rule::NonFinite, "coordinates must be finite"));
        }
    }

    let kind = record.kind.tag;
    validate_entries(
        &format!("attributes/{kind}"),
        schema.nodes_for(kind),
        &record.attributes.entries,
        vocabularies,
        &mut out,
    );
    for (i, legacy) in record.attributes.legacy.iter().enumerate() {
        check_chars(&format!("attributes/legacy[{i}]"), &legacy.value, &mut out);
    }

    out
}

fn validate_entries(
    prefix: &str,
    nodes: &[AttributeNode],
    entries: &[AttrEntry],
    vocabularies: &[Vocabulary],
    out: &mut Vec<Violation>,
) {
    let mut seen = HashSet::new();
    for entry in entries {
        let path = format!("{prefix}/{}", entry.name);
        if !seen.insert(entry.name.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateAttribute, "node appears more than once"));
            continue;
        }
        let Some(node) = nodes.iter().find(|n| n.name == entry.name) else {
            out.push(Violation::new(&path, Rule::UnknownAttribute, "node is not in the schema"));
            continue;
        };
        if entry.values.len() > 1 && !node.repeatable {
            out.push(Violation::new(
                &path,
                Rule::NotRepeatable,
                format!("{} values for a single-valued node", entry.values.len()),
            ));
        }
        if entry.values.is_empty() && node.required {
            out.push(Violation::new(&path, Rule::RequiredMissing, "required node has no value"));
        }
        for value in &entry.values {
            match (value, &node.value_type) {
                (AttrValue::Group(children), ValueType::Group) => {
                    validate_entries(&path, &node.children, children, vocabularies, out)
                }
                (AttrValue::Group(_), t) => out.push(Violation::new(
                    &path,
                    Rule::TypeMismatch,
                    format!("expected a {} value, found a group", t.name()),
                )),
                (AttrValue::Leaf(_), ValueType::Group) => out.push(Violation::new(
                    &path,
                    Rule::TypeMismatch,
                    "expected a group, found a value",
                )),
                (AttrValue::Leaf(v), t) => {
                    check_chars(&path, v, out);
                    let vocab = match t {
                        ValueType::Enum(facet) => {
                            let found = vocabularies.iter().find(|voc| &voc.facet_name == facet);
                            if found.is_none() {
                                out.push(Violation::new(
                                    &path,
                                    Rule::UnknownFacet,
                                    format!("facet '{facet}' does not exist"),
                                ));
                                continue;
                            }
                            found
                        }
                        _ => None,
                    };
                    if !t.accepts(v, vocab) {
                        let rule = if matches!(t, ValueType::Enum(_)) {
                            Rule::UnknownVocabularyTerm
                        } else {
                            Rule::TypeMismatch
                        };
                        out.push(Violation::new(
                            &path,
                            rule,
                            format!("'{v}' is not a valid {} value", t.name()),
                        ));
                    }
                }
            }
        }
    }
    for node in nodes.iter().filter(|n| n.required) {
        if !seen.contains(node.name.as_str()) {
            out.push(Violation::new(
                format!("{prefix}/{}", node.name),
                Rule::RequiredMissing,
                "required node has no value",
            ));
        }
    }
}

/// Whether the period intersects the closed year interval `[lo, hi]`.
pub fn period_overlaps(period: &Period, lo: i32, hi: i32) -> Result<bool> {
    if lo > hi {
        return Err(SiaError::InvalidInterval { lo, hi });
    }
    Ok(period.start_year.max(lo) <= period.end_year.min(hi))
}

/// `place_id` together with all of its transitive children.
pub fn place_descendants(place_id: &str, places: &[Place]) -> Result<BTreeSet<String>> {
    if !places.iter().any(|p| p.id == place_id) {
        return Err(SiaError::UnknownPlace(place_id.to_string()));
    }
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in places {
        if let Some(parent) = &p.parent_id {
            children.entry(parent.as_str()).or_default().push(p.id.as_str());
        }
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![place_id];
    while let Some(id) = stack.pop() {
        if out.insert(id.to_string()) {
            if let Some(kids) = children.get(id) {
                stack.extend(kids.iter().copied());
            }
        }
    }
    Ok(out)
}

pub fn validate_periods(periods: &[Period]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for p in periods {
        let path = format!("periods/{}", p.id);
        if !is_slug(&p.id) {
            out.push(Violation::new(&path, Rule::InvalidIdentifier, "identifier must be a lowercase slug"));
        }
        if !seen.insert(p.id.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateId, "period id used twice"));
        }
        if p.label.trim().is_empty() {
            out.push(Violation::new(&path, Rule::NonEmptyRequired, "label must not be empty"));
        }
        if p.start_year > p.end_year {
            out.push(Violation::new(
                &path,
                Rule::InvalidInterval,
                format!("start {} is after end {}", p.start_year, p.end_year),
            ));
        }
        check_chars(&path, &p.label, &mut out);
        check_chars(&path, &p.description, &mut out);
    }
    out
}

pub fn validate_places(places: &[Place]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let by_id: BTreeMap<&str, &Place> = places.iter().map(|p| (p.id.as_str(), p)).collect();
    for p in places {
        let path = format!("places/{}", p.id);
        if !is_slug(&p.id) {
            out.push(Violation::new(&path, Rule::InvalidIdentifier, "identifier must be a lowercase slug"));
        }
        if !seen.insert(p.id.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateId, "place id used twice"));
        }
        if p.name.trim().is_empty() {
            out.push(Violation::new(&path, Rule::NonEmptyRequired, "name must not be empty"));
        }
        check_chars(&path, &p.name, &mut out);
        check_chars(&path, &p.description, &mut out);
        if let Some(parent) = &p.parent_id {
            if !by_id.contains_key(parent.as_str()) {
                out.push(Violation::new(
                    &path,
                    Rule::UnresolvedPlace,
                    format!("parent '{parent}' does not exist"),
                ));
            } else {
                // walk up; a forest reaches a root within |places| steps
                let mut cursor = Some(parent.as_str());
                let mut steps = 0;
                while let Some(id) = cursor {
                    if id == p.id || steps > places.len() {
                        out.push(Violation::new(&path, Rule::ParentCycle, "parent links form a cycle"));
                        break;
                    }
                    steps += 1;
                    cursor = by_id.get(id).and_then(|q| q.parent_id.as_deref());
                }
            }
        }
        if let Some(fp) = &p.footprint {
            if fp.len() < 3 {
                out.push(Violation::new(&path, Rule::InvalidFootprint, "footprint needs at least 3 vertices"));
            } else if (0..fp.len()).any(|i| fp[i] == fp[(i + 1) % fp.len()]) {
                out.push(Violation::new(
                    &path,
                    Rule::InvalidFootprint,
                    "footprint repeats a vertex consecutively",
                ));
            }
            if fp.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
                out.push(Violation::new(&path, Rule::NonFinite, "footprint vertices must be finite"));
            }
        }
    }
    out
}

pub fn validate_vocabularies(vocabularies: &[Vocabulary]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut facets = HashSet::new();
    for v in vocabularies {
        let path = format!("vocabularies/{}", v.facet_name);
        if v.facet_name.is_empty() {
            out.push(Violation::new(&path, Rule::NonEmptyRequired, "facet name must not be empty"));
        }
        if !facets.insert(v.facet_name.as_str()) {
            out.push(Violation::new(&path, Rule::DuplicateId, "facet defined twice"));
        }
        let mut terms = HashSet::new();
        for t in &v.terms {
            if t.is_empty() {
                out.push(Violation::new(&path, Rule::NonEmptyRequired, "terms must not be empty"));
            }
            if !terms.insert(t.as_str()) {
                out.push(Violation::new(&path, Rule::DuplicateId, format!("term '{t}' listed twice")));
            }
            check_chars(&path, t, &mut out);
        }
    }
    out
}

/// Structural checks on a metadata schema: unique sibling names, enum facets
/// that exist, non-empty groups and childless leaves.
pub fn validate_schema(schema: &MetadataSchema, vocabularies: &[Vocabulary]) -> Vec<Violation> {
    fn walk(prefix: &str, nodes: &[AttributeNode], vocabularies: &[Vocabulary], out: &mut Vec<Violation>) {
        let mut seen = HashSet::new();
        for node in nodes {
            let path = format!("{prefix}/{}", node.name);
            if !is_node_name(&node.name) {
                out.push(Violation::new(&path, Rule::InvalidSchemaNode, "node names must be non-empty and contain no '/'"));
            }
            if !seen.insert(node.name.as_str()) {
                out.push(Violation::new(&path, Rule::DuplicateAttribute, "sibling name used twice"));
            }
            match &node.value_type {
                ValueType::Group if node.children.is_empty() => out.push(Violation::new(
                    &path,
                    Rule::InvalidSchemaNode,
                    "group nodes need at least one child",
                )),
                ValueType::Group => walk(&path, &node.children, vocabularies, out),
                other => {
                    if !node.children.is_empty() {
                        out.push(Violation::new(&path, Rule::InvalidSchemaNode, "only group nodes have children"));
                    }
                    if let ValueType::Enum(facet) = other {
                        if !vocabularies.iter().any(|v| &v.facet_name == facet) {
                            out.push(Violation::new(
                                &path,
                                Rule::UnknownFacet,
                                format!("facet '{facet}' does not exist"),
                            ));
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    if schema.version < 1 {
        out.push(Violation::new("version", Rule::InvalidSchemaNode, "schema versions start at 1"));
    }
    for (kind, nodes) in &schema.per_kind {
        walk(kind.as_str(), nodes, vocabularies, &mut out);
    }
    out
}

pub(crate) fn is_node_name(name: &str) -> bool {
    !name.is_empty() && !name.contains('/') && name.chars().all(is_xml_char) && name.trim() == name
}
