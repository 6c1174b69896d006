//! The record file format.
//!
//! ```text
//! <record id=".." kind=".." [planSubkind=".."] schemaVersion="..">
//!   title, author, provenance, capture-date?, subject/keyword*, places/ref*,
//!   periods/ref*, coordinates?, content, attributes, audit
//! </record>
//! ```
//!
//! Manifest entries share the body layout, minus the identifier, schema
//! version and audit block.

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use roxmltree::Node;

use super::{attr, elements, err_at, parse_attr, text_of, XmlWriter};
use crate::error::{Result, SiaError};
use crate::model::{
    AttrEntry, AttrValue, AttributeValues, Audit, ContentRef, Coordinates, DocumentKind,
    DocumentRecord, KindTag, LegacyValue, PlanSubkind, RecordDraft,
};

const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn parse_timestamp(node: Node<'_, '_>) -> Result<DateTime<Utc>> {
    let raw = text_of(node)?;
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| err_at(node, format!("invalid timestamp '{raw}': {e}")))
}

pub(crate) fn kind_attrs(kind: &DocumentKind, attrs: &mut Vec<(&'static str, String)>) {
    attrs.push(("kind", kind.tag.as_str().to_string()));
    if let Some(sub) = kind.plan_subkind {
        attrs.push(("planSubkind", sub.as_str().to_string()));
    }
}

pub(crate) fn parse_kind(node: Node<'_, '_>) -> Result<DocumentKind> {
    let tag: KindTag = attr(node, "kind")?
        .parse()
        .map_err(|e: SiaError| err_at(node, e.to_string()))?;
    let plan_subkind = match node.attribute("planSubkind") {
        Some(raw) => Some(
            raw.parse::<PlanSubkind>()
                .map_err(|e| err_at(node, e.to_string()))?,
        ),
        None => None,
    };
    Ok(DocumentKind { tag, plan_subkind })
}

/// Canonical bytes of a record file.
pub fn export_record(record: &DocumentRecord) -> String {
    let mut w = XmlWriter::with_declaration();
    let mut attrs = vec![("id", record.id.clone())];
    kind_attrs(&record.kind, &mut attrs);
    attrs.push(("schemaVersion", record.schema_version.to_string()));
    w.open("record", &attrs);
    write_body(&mut w, &RecordDraft::from(record));
    w.open("audit", &[]);
    w.leaf("created", &[], &format_timestamp(&record.audit.created));
    w.leaf("updated", &[], &format_timestamp(&record.audit.updated));
    if let Some(archived) = &record.audit.archived {
        w.leaf("archived", &[], &format_timestamp(archived));
    }
    w.close("audit");
    w.close("record");
    w.finish()
}

pub(crate) fn write_body(w: &mut XmlWriter, d: &RecordDraft) {
    w.leaf("title", &[], &d.title);
    w.leaf("author", &[], &d.author);
    w.leaf("provenance", &[], &d.provenance);
    if let Some(date) = d.capture_date {
        w.leaf("capture-date", &[], &date.format(DATE_FORMAT).to_string());
    }
    w.container("subject", &[], |w| {
        for kw in &d.subject_keywords {
            w.leaf("keyword", &[], kw);
        }
    });
    w.container("places", &[], |w| {
        for r in &d.place_refs {
            w.leaf("ref", &[], r);
        }
    });
    w.container("periods", &[], |w| {
        for r in &d.period_refs {
            w.leaf("ref", &[], r);
        }
    });
    if let Some(c) = d.coordinates {
        w.empty(
            "coordinates",
            &[("x", c.x.to_string()), ("y", c.y.to_string()), ("z", c.z.to_string())],
        );
    }
    w.empty(
        "content",
        &[
            ("href", d.content.href.clone()),
            ("format", d.content.media_format.clone()),
            ("checksum", d.content.checksum.clone()),
            ("size", d.content.byte_size.to_string()),
        ],
    );
    w.container("attributes", &[], |w| {
        write_entries(w, &d.attributes.entries);
        if !d.attributes.legacy.is_empty() {
            w.open("legacy", &[]);
            for l in &d.attributes.legacy {
                w.leaf(
                    "value",
                    &[("path", l.path.clone()), ("from-version", l.from_version.to_string())],
                    &l.value,
                );
            }
            w.close("legacy");
        }
    });
}

fn write_entries(w: &mut XmlWriter, entries: &[AttrEntry]) {
    for entry in entries {
        for value in &entry.values {
            match value {
                AttrValue::Leaf(v) => w.leaf("attr", &[("name", entry.name.clone())], v),
                AttrValue::Group(children) => {
                    w.container("group", &[("name", entry.name.clone())], |w| {
                        write_entries(w, children)
                    })
                }
            }
        }
    }
}

/// Parses a record file. Does not check the schema version against the
/// store; see [`crate::store::Store::import_xml`].
pub fn parse_record(bytes: &[u8]) -> Result<DocumentRecord> {
    let text = super::as_utf8(bytes)?;
    let doc = super::parse_document(text)?;
    let root = doc.root_element();
    super::expect_name(root, "record")?;
    let id = attr(root, "id")?.to_string();
    let kind = parse_kind(root)?;
    let schema_version: u32 = parse_attr(root, "schemaVersion")?;
    let children = elements(root)?;
    let mut cursor = Cursor::new(root, &children);
    let body = parse_body(&mut cursor, kind)?;
    let audit_node = cursor.expect("audit")?;
    cursor.finish()?;

    let audit_children = elements(audit_node)?;
    let mut ac = Cursor::new(audit_node, &audit_children);
    let created = parse_timestamp(ac.expect("created")?)?;
    let updated = parse_timestamp(ac.expect("updated")?)?;
    let archived = match ac.optional("archived") {
        Some(n) => Some(parse_timestamp(n)?),
        None => None,
    };
    ac.finish()?;

    let mut record = body.into_record(id, schema_version, created);
    record.audit = Audit {
        created,
        updated,
        archived,
    };
    Ok(record)
}

/// Walks a fixed-order child list.
pub(crate) struct Cursor<'n, 'a, 'i> {
    parent: Node<'a, 'i>,
    nodes: &'n [Node<'a, 'i>],
    pos: usize,
}

impl<'n, 'a, 'i> Cursor<'n, 'a, 'i> {
    pub(crate) fn new(parent: Node<'a, 'i>, nodes: &'n [Node<'a, 'i>]) -> Self {
        Cursor { parent, nodes, pos: 0 }
    }

    pub(crate) fn optional(&mut self, name: &str) -> Option<Node<'a, 'i>> {
        let n = self.nodes.get(self.pos)?;
        if n.tag_name().name() == name {
            self.pos += 1;
            Some(*n)
        } else {
            None
        }
    }

    pub(crate) fn expect(&mut self, name: &str) -> Result<Node<'a, 'i>> {
        match self.nodes.get(self.pos) {
            Some(n) if n.tag_name().name() == name => {
                self.pos += 1;
                Ok(*n)
            }
            Some(n) => Err(err_at(
                *n,
                format!("expected <{name}>, found <{}>", n.tag_name().name()),
            )),
            None => Err(err_at(
                self.parent,
                format!("<{}> is missing <{name}>", self.parent.tag_name().name()),
            )),
        }
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.nodes.get(self.pos) {
            Some(n) => Err(err_at(
                *n,
                format!("unexpected <{}>", n.tag_name().name()),
            )),
            None => Ok(()),
        }
    }
}

fn text_list(node: Node<'_, '_>, child: &str) -> Result<Vec<String>> {
    elements(node)?
        .into_iter()
        .map(|n| {
            super::expect_name(n, child)?;
            text_of(n)
        })
        .collect()
}

pub(crate) fn parse_body(cursor: &mut Cursor<'_, '_, '_>, kind: DocumentKind) -> Result<RecordDraft> {
    let title = text_of(cursor.expect("title")?)?;
    let author = text_of(cursor.expect("author")?)?;
    let provenance = text_of(cursor.expect("provenance")?)?;
    let capture_date = match cursor.optional("capture-date") {
        Some(n) => {
            let raw = text_of(n)?;
            Some(
                NaiveDate::parse_from_str(raw.trim(), DATE_FORMAT)
                    .map_err(|e| err_at(n, format!("invalid date '{raw}': {e}")))?,
            )
        }
        None => None,
    };
    let subject_keywords = text_list(cursor.expect("subject")?, "keyword")?;
    let place_refs = text_list(cursor.expect("places")?, "ref")?;
    let period_refs = text_list(cursor.expect("periods")?, "ref")?;
    let coordinates = match cursor.optional("coordinates") {
        Some(n) => Some(Coordinates {
            x: parse_attr(n, "x")?,
            y: parse_attr(n, "y")?,
            z: parse_attr(n, "z")?,
        }),
        None => None,
    };
    let content_node = cursor.expect("content")?;
    if let Some(child) = elements(content_node)?.first() {
        return Err(err_at(*child, "<content> takes no children"));
    }
    let content = ContentRef {
        href: attr(content_node, "href")?.to_string(),
        media_format: attr(content_node, "format")?.to_string(),
        checksum: content_node.attribute("checksum").unwrap_or("").to_string(),
        byte_size: match content_node.attribute("size") {
            Some(_) => parse_attr(content_node, "size")?,
            None => 0,
        },
    };
    let attributes = parse_attributes(cursor.expect("attributes")?)?;
    Ok(RecordDraft {
        kind,
        title,
        author,
        provenance,
        subject_keywords,
        capture_date,
        place_refs,
        period_refs,
        coordinates,
        content,
        attributes,
    })
}

fn parse_attributes(node: Node<'_, '_>) -> Result<AttributeValues> {
    let children = elements(node)?;
    let (body, legacy_node) = match children.split_last() {
        Some((last, rest)) if last.tag_name().name() == "legacy" => (rest, Some(*last)),
        _ => (children.as_slice(), None),
    };
    let entries = parse_entries(body)?;
    let mut legacy = Vec::new();
    if let Some(ln) = legacy_node {
        for v in elements(ln)? {
            super::expect_name(v, "value")?;
            legacy.push(LegacyValue {
                path: attr(v, "path")?.to_string(),
                from_version: parse_attr(v, "from-version")?,
                value: text_of(v)?,
            });
        }
    }
    Ok(AttributeValues { entries, legacy })
}

fn parse_entries(nodes: &[Node<'_, '_>]) -> Result<Vec<AttrEntry>> {
    let mut entries: Vec<AttrEntry> = Vec::new();
    for n in nodes {
        let name = attr(*n, "name")?.to_string();
        let value = match n.tag_name().name() {
            "attr" => AttrValue::Leaf(text_of(*n)?),
            "group" => AttrValue::Group(parse_entries(&elements(*n)?)?),
            other => return Err(err_at(*n, format!("unexpected <{other}> in attributes"))),
        };
        // consecutive elements with one name are the values of one entry
        match entries.last_mut() {
            Some(last) if last.name == name => last.values.push(value),
            _ => entries.push(AttrEntry {
                name,
                values: vec![value],
            }),
        }
    }
    Ok(entries)
}
