//! Domain entities: periods, places, documents, vocabularies and metadata schemas.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::SiaError;

/// Facet holding the closed list of subject keywords.
pub const SUBJECT_FACET: &str = "subject";
/// Facet holding author names, when the site defines one.
pub const AUTHOR_FACET: &str = "author";

/// A named time interval of the site's history. Years use astronomical
/// numbering (year 0 exists, negative years are BCE).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Period {
    pub id: String,
    pub label: String,
    pub start_year: i32,
    pub end_year: i32,
    #[serde(default)]
    pub description: String,
}

/// A site-local (x, y) vertex in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

/// A named spatial subdivision of the site. Places form a forest through
/// `parent_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Place {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub footprint: Option<Vec<Point2>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KindTag {
    #[serde(rename = "photo")]
    Photo,
    #[serde(rename = "drawing")]
    Drawing,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "rasterPlan")]
    RasterPlan,
    #[serde(rename = "vectorPlan")]
    VectorPlan,
    #[serde(rename = "model3d")]
    Model3d,
}

impl KindTag {
    pub const ALL: [KindTag; 6] = [
        KindTag::Photo,
        KindTag::Drawing,
        KindTag::Text,
        KindTag::RasterPlan,
        KindTag::VectorPlan,
        KindTag::Model3d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KindTag::Photo => "photo",
            KindTag::Drawing => "drawing",
            KindTag::Text => "text",
            KindTag::RasterPlan => "rasterPlan",
            KindTag::VectorPlan => "vectorPlan",
            KindTag::Model3d => "model3d",
        }
    }

    /// Kinds whose content is a raster image that can be shown as a thumbnail
    /// or stacked in a photo-montage.
    pub fn is_image_bearing(self) -> bool {
        matches!(self, KindTag::Photo | KindTag::Drawing | KindTag::RasterPlan)
    }
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KindTag {
    type Err = SiaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KindTag::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SiaError::InvalidValue(format!("unknown document kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PlanSubkind {
    Axonometry,
    Map,
    Section,
    Plan,
    Elevation,
    ExcavationProfile,
    ExcavationPlan,
}

impl PlanSubkind {
    pub const ALL: [PlanSubkind; 7] = [
        PlanSubkind::Axonometry,
        PlanSubkind::Map,
        PlanSubkind::Section,
        PlanSubkind::Plan,
        PlanSubkind::Elevation,
        PlanSubkind::ExcavationProfile,
        PlanSubkind::ExcavationPlan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlanSubkind::Axonometry => "axonometry",
            PlanSubkind::Map => "map",
            PlanSubkind::Section => "section",
            PlanSubkind::Plan => "plan",
            PlanSubkind::Elevation => "elevation",
            PlanSubkind::ExcavationProfile => "excavationProfile",
            PlanSubkind::ExcavationPlan => "excavationPlan",
        }
    }
}

impl FromStr for PlanSubkind {
    type Err = SiaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlanSubkind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SiaError::InvalidValue(format!("unknown plan subkind '{s}'")))
    }
}

/// Document kind. `plan_subkind` is present exactly when `tag` is
/// [`KindTag::RasterPlan`]; [`crate::validate::validate_record`] reports
/// anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentKind {
    pub tag: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_subkind: Option<PlanSubkind>,
}

impl DocumentKind {
    pub fn new(tag: KindTag) -> Self {
        DocumentKind {
            tag,
            plan_subkind: None,
        }
    }

    pub fn raster_plan(subkind: PlanSubkind) -> Self {
        DocumentKind {
            tag: KindTag::RasterPlan,
            plan_subkind: Some(subkind),
        }
    }
}

impl From<KindTag> for DocumentKind {
    fn from(tag: KindTag) -> Self {
        DocumentKind::new(tag)
    }
}

/// Reference to the binary asset a record describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContentRef {
    pub href: String,
    pub media_format: String,
    pub checksum: String,
    pub byte_size: u64,
}

/// Site-local Cartesian coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// One value of an attribute entry: a leaf in lexical form, or a nested group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AttrValue {
    Leaf(String),
    Group(Vec<AttrEntry>),
}

/// All values recorded for one schema node at one level of the tree.
/// Non-repeatable nodes carry exactly one value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrEntry {
    pub name: String,
    pub values: Vec<AttrValue>,
}

impl AttrEntry {
    pub fn leaf(name: impl Into<String>, value: impl Into<String>) -> Self {
        AttrEntry {
            name: name.into(),
            values: vec![AttrValue::Leaf(value.into())],
        }
    }

    pub fn group(name: impl Into<String>, children: Vec<AttrEntry>) -> Self {
        AttrEntry {
            name: name.into(),
            values: vec![AttrValue::Group(children)],
        }
    }
}

/// A value quarantined by a schema migration because its node was removed or
/// the value could not be converted to the node's new type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LegacyValue {
    /// Full path (`kind/node/...`) the value lived at when it was archived.
    pub path: String,
    /// Schema version the value was archived from.
    pub from_version: u32,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeValues {
    pub entries: Vec<AttrEntry>,
    #[serde(default)]
    pub legacy: Vec<LegacyValue>,
}

impl AttributeValues {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.legacy.is_empty()
    }

    /// Every (path, leaf value) pair, with paths rooted at `kind`.
    pub fn leaf_pairs(&self, kind: KindTag) -> Vec<(String, String)> {
        fn walk(prefix: &str, entries: &[AttrEntry], out: &mut Vec<(String, String)>) {
            for entry in entries {
                let path = format!("{prefix}/{}", entry.name);
                for value in &entry.values {
                    match value {
                        AttrValue::Leaf(v) => out.push((path.clone(), v.clone())),
                        AttrValue::Group(children) => walk(&path, children, out),
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(kind.as_str(), &self.entries, &mut out);
        out
    }
}

/// Change-tracking timestamps. `archived` marks a soft-deleted record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    #[serde(default)]
    pub archived: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentRecord {
    pub id: String,
    pub kind: DocumentKind,
    pub title: String,
    pub author: String,
    pub provenance: String,
    pub subject_keywords: Vec<String>,
    pub capture_date: Option<NaiveDate>,
    pub place_refs: Vec<String>,
    pub period_refs: Vec<String>,
    pub coordinates: Option<Coordinates>,
    pub content: ContentRef,
    pub attributes: AttributeValues,
    pub schema_version: u32,
    pub audit: Audit,
}

impl DocumentRecord {
    pub fn is_archived(&self) -> bool {
        self.audit.archived.is_some()
    }
}

/// A record as submitted for ingest: everything but the identifier,
/// timestamps and schema version, which the store assigns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordDraft {
    pub kind: DocumentKind,
    pub title: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub subject_keywords: Vec<String>,
    #[serde(default)]
    pub capture_date: Option<NaiveDate>,
    #[serde(default)]
    pub place_refs: Vec<String>,
    #[serde(default)]
    pub period_refs: Vec<String>,
    #[serde(default)]
    pub coordinates: Option<Coordinates>,
    pub content: ContentRef,
    #[serde(default)]
    pub attributes: AttributeValues,
}

impl RecordDraft {
    pub fn into_record(
        self,
        id: String,
        schema_version: u32,
        now: DateTime<Utc>,
    ) -> DocumentRecord {
        DocumentRecord {
            id,
            kind: self.kind,
            title: self.title,
            author: self.author,
            provenance: self.provenance,
            subject_keywords: self.subject_keywords,
            capture_date: self.capture_date,
            place_refs: self.place_refs,
            period_refs: self.period_refs,
            coordinates: self.coordinates,
            content: self.content,
            attributes: self.attributes,
            schema_version,
            audit: Audit {
                created: now,
                updated: now,
                archived: None,
            },
        }
    }
}

impl From<&DocumentRecord> for RecordDraft {
    fn from(r: &DocumentRecord) -> Self {
        RecordDraft {
            kind: r.kind,
            title: r.title.clone(),
            author: r.author.clone(),
            provenance: r.provenance.clone(),
            subject_keywords: r.subject_keywords.clone(),
            capture_date: r.capture_date,
            place_refs: r.place_refs.clone(),
            period_refs: r.period_refs.clone(),
            coordinates: r.coordinates,
            content: r.content.clone(),
            attributes: r.attributes.clone(),
        }
    }
}

/// Partial update of a record. Absent fields are left untouched; the
/// double-`Option` fields distinguish "leave" from "clear".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RecordPatch {
    pub kind: Option<DocumentKind>,
    pub title: Option<String>,
    pub author: Option<String>,
    pub provenance: Option<String>,
    pub subject_keywords: Option<Vec<String>>,
    #[serde(with = "double_option")]
    pub capture_date: Option<Option<NaiveDate>>,
    pub place_refs: Option<Vec<String>>,
    pub period_refs: Option<Vec<String>>,
    #[serde(with = "double_option")]
    pub coordinates: Option<Option<Coordinates>>,
    pub content: Option<ContentRef>,
    pub attributes: Option<AttributeValues>,
}

impl RecordPatch {
    pub fn apply_to(self, record: &mut DocumentRecord) {
        if let Some(v) = self.kind {
            record.kind = v;
        }
        if let Some(v) = self.title {
            record.title = v;
        }
        if let Some(v) = self.author {
            record.author = v;
        }
        if let Some(v) = self.provenance {
            record.provenance = v;
        }
        if let Some(v) = self.subject_keywords {
            record.subject_keywords = v;
        }
        if let Some(v) = self.capture_date {
            record.capture_date = v;
        }
        if let Some(v) = self.place_refs {
            record.place_refs = v;
        }
        if let Some(v) = self.period_refs {
            record.period_refs = v;
        }
        if let Some(v) = self.coordinates {
            record.coordinates = v;
        }
        if let Some(v) = self.content {
            record.content = v;
        }
        if let Some(v) = self.attributes {
            record.attributes = v;
        }
    }
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(
        value: &Option<Option<T>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        match value {
            None => s.serialize_none(),
            Some(inner) => inner.serialize(s),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

/// A closed list of terms users pick from when describing or querying records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Vocabulary {
    pub facet_name: String,
    pub terms: Vec<String>,
}

impl Vocabulary {
    pub fn new(facet_name: impl Into<String>, terms: &[&str]) -> Self {
        Vocabulary {
            facet_name: facet_name.into(),
            terms: terms.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.iter().any(|t| t == term)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type", content = "facet")]
pub enum ValueType {
    Text,
    Integer,
    Decimal,
    Date,
    Enum(String),
    Group,
}

impl ValueType {
    pub fn name(&self) -> &'static str {
        match self {
            ValueType::Text => "text",
            ValueType::Integer => "integer",
            ValueType::Decimal => "decimal",
            ValueType::Date => "date",
            ValueType::Enum(_) => "enum",
            ValueType::Group => "group",
        }
    }

    pub fn is_group(&self) -> bool {
        matches!(self, ValueType::Group)
    }

    /// Whether `lexical` is a valid value of this leaf type. Enum membership
    /// is checked against `vocab` when given; without it only non-emptiness
    /// is required.
    pub fn accepts(&self, lexical: &str, vocab: Option<&Vocabulary>) -> bool {
        match self {
            ValueType::Text => true,
            ValueType::Integer => lexical.parse::<i64>().is_ok(),
            ValueType::Decimal => {
                !lexical.is_empty()
                    && lexical
                        .chars()
                        .all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
                    && lexical.parse::<f64>().is_ok_and(f64::is_finite)
            }
            ValueType::Date => NaiveDate::parse_from_str(lexical, "%Y-%m-%d").is_ok(),
            ValueType::Enum(_) => match vocab {
                Some(v) => v.contains(lexical),
                None => !lexical.is_empty(),
            },
            ValueType::Group => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeNode {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub repeatable: bool,
    #[serde(default)]
    pub children: Vec<AttributeNode>,
}

impl AttributeNode {
    pub fn leaf(name: impl Into<String>, value_type: ValueType) -> Self {
        AttributeNode {
            name: name.into(),
            value_type,
            required: false,
            repeatable: false,
            children: Vec::new(),
        }
    }

    pub fn group(name: impl Into<String>, children: Vec<AttributeNode>) -> Self {
        AttributeNode {
            name: name.into(),
            value_type: ValueType::Group,
            required: false,
            repeatable: false,
            children,
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn repeatable(mut self) -> Self {
        self.repeatable = true;
        self
    }
}

/// Versioned description of the per-kind attribute tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetadataSchema {
    pub version: u32,
    pub per_kind: BTreeMap<KindTag, Vec<AttributeNode>>,
}

impl MetadataSchema {
    pub fn empty(version: u32) -> Self {
        MetadataSchema {
            version,
            per_kind: BTreeMap::new(),
        }
    }

    pub fn nodes_for(&self, kind: KindTag) -> &[AttributeNode] {
        self.per_kind.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The temporal, spatial and vocabulary reference entities records link to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub periods: Vec<Period>,
    pub places: Vec<Place>,
    pub vocabularies: Vec<Vocabulary>,
}

impl ReferenceData {
    pub fn period(&self, id: &str) -> Option<&Period> {
        self.periods.iter().find(|p| p.id == id)
    }

    pub fn place(&self, id: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id)
    }

    pub fn vocabulary(&self, facet: &str) -> Option<&Vocabulary> {
        self.vocabularies.iter().find(|v| v.facet_name == facet)
    }
}

/// Who is acting. Visitors may read; only experts may change the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Visitor,
    Expert,
}

impl Role {
    pub fn require_expert(self) -> Result<(), SiaError> {
        match self {
            Role::Expert => Ok(()),
            Role::Visitor => Err(SiaError::PermissionDenied),
        }
    }
}
