//! Schema documents (`schema/vN.xml`).

use std::collections::BTreeMap;

use roxmltree::Node;

use super::{attr, elements, err_at, expect_name, parse_attr, XmlWriter};
use crate::error::{Result, SiaError};
use crate::model::{AttributeNode, KindTag, MetadataSchema, ValueType};

pub fn export_schema(schema: &MetadataSchema) -> String {
    let mut w = XmlWriter::with_declaration();
    w.container("schema", &[("version", schema.version.to_string())], |w| {
        for (kind, nodes) in &schema.per_kind {
            w.container("kind", &[("tag", kind.as_str().to_string())], |w| {
                write_nodes(w, nodes)
            });
        }
    });
    w.finish()
}

fn write_nodes(w: &mut XmlWriter, nodes: &[AttributeNode]) {
    for node in nodes {
        let mut attrs = vec![
            ("name", node.name.clone()),
            ("type", node.value_type.name().to_string()),
            ("required", node.required.to_string()),
            ("repeatable", node.repeatable.to_string()),
        ];
        if let ValueType::Enum(facet) = &node.value_type {
            attrs.push(("facet", facet.clone()));
        }
        w.container("node", &attrs, |w| write_nodes(w, &node.children));
    }
}

pub fn parse_schema(bytes: &[u8]) -> Result<MetadataSchema> {
    let text = super::as_utf8(bytes)?;
    let doc = super::parse_document(text)?;
    let root = doc.root_element();
    expect_name(root, "schema")?;
    let version: u32 = parse_attr(root, "version")?;
    let mut per_kind = BTreeMap::new();
    for kn in elements(root)? {
        expect_name(kn, "kind")?;
        let tag: KindTag = attr(kn, "tag")?
            .parse()
            .map_err(|e: SiaError| err_at(kn, e.to_string()))?;
        if per_kind.insert(tag, parse_nodes(kn)?).is_some() {
            return Err(err_at(kn, format!("kind '{tag}' declared twice")));
        }
    }
    Ok(MetadataSchema { version, per_kind })
}

fn parse_nodes(parent: Node<'_, '_>) -> Result<Vec<AttributeNode>> {
    elements(parent)?
        .into_iter()
        .map(|n| {
            expect_name(n, "node")?;
            let value_type = match attr(n, "type")? {
                "text" => ValueType::Text,
                "integer" => ValueType::Integer,
                "decimal" => ValueType::Decimal,
                "date" => ValueType::Date,
                "group" => ValueType::Group,
                "enum" => ValueType::Enum(attr(n, "facet")?.to_string()),
                other => return Err(err_at(n, format!("unknown value type '{other}'"))),
            };
            Ok(AttributeNode {
                name: attr(n, "name")?.to_string(),
                value_type,
                required: parse_attr(n, "required")?,
                repeatable: parse_attr(n, "repeatable")?,
                children: parse_nodes(n)?,
            })
        })
        .collect()
}
