//! Schema revisions and record migration.
//!
//! A delta is applied change by change to the active schema. Records follow
//! the same sequence; values that no longer have a home are moved to the
//! record's legacy block under the path they had in the source version, so
//! nothing is ever dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SiaError};
use crate::model::{
    AttrEntry, AttrValue, AttributeNode, DocumentRecord, KindTag, LegacyValue, MetadataSchema,
    ValueType, Vocabulary,
};
use crate::validate::{is_node_name, validate_schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "op")]
pub enum SchemaChange {
    /// `path` names the new node, e.g. `photo/camera/lens`.
    #[serde(rename_all = "camelCase")]
    AddNode {
        path: String,
        node: AttributeNode,
        #[serde(default)]
        default: Option<String>,
    },
    RemoveNode { path: String },
    #[serde(rename_all = "camelCase")]
    RenameNode { path: String, new_name: String },
    /// `default` fills required nodes whose values could not be converted.
    #[serde(rename_all = "camelCase")]
    RetypeNode {
        path: String,
        new_type: ValueType,
        #[serde(default)]
        default: Option<String>,
    },
}

impl SchemaChange {
    pub fn path(&self) -> &str {
        match self {
            SchemaChange::AddNode { path, .. }
            | SchemaChange::RemoveNode { path }
            | SchemaChange::RenameNode { path, .. }
            | SchemaChange::RetypeNode { path, .. } => path,
        }
    }
}

pub type SchemaDelta = Vec<SchemaChange>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordAction {
    FillEmpty,
    MoveValue,
    RetypeOrLegacy,
    ArchiveToLegacy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MigrationPlan {
    pub from_version: u32,
    pub to_version: u32,
    pub delta: SchemaDelta,
    /// One action per change, same order.
    pub record_actions: Vec<RecordAction>,
    /// Schema the delta produces.
    pub target: MetadataSchema,
}

struct NodePath {
    kind: KindTag,
    names: Vec<String>,
}

fn parse_path(path: &str) -> Result<NodePath> {
    let mut parts = path.split('/');
    let kind = parts
        .next()
        .unwrap_or("")
        .parse::<KindTag>()
        .map_err(|_| SiaError::InvalidDelta(format!("path '{path}' does not start with a document kind")))?;
    let names: Vec<String> = parts.map(str::to_string).collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(SiaError::InvalidDelta(format!("path '{path}' names no node")));
    }
    Ok(NodePath { kind, names })
}

/// Sibling list that holds the node `names.last()`.
fn siblings_mut<'a>(
    schema: &'a mut MetadataSchema,
    path: &NodePath,
    full: &str,
) -> Result<&'a mut Vec<AttributeNode>> {
    let mut level = schema.per_kind.entry(path.kind).or_default();
    for name in &path.names[..path.names.len() - 1] {
        let node = level
            .iter_mut()
            .find(|n| &n.name == name)
            .ok_or_else(|| SiaError::InvalidDelta(format!("path '{full}' does not resolve")))?;
        if !node.value_type.is_group() {
            return Err(SiaError::InvalidDelta(format!("'{name}' in '{full}' is not a group")));
        }
        level = &mut node.children;
    }
    Ok(level)
}

fn node_mut<'a>(schema: &'a mut MetadataSchema, path: &NodePath, full: &str) -> Result<&'a mut AttributeNode> {
    let last = path.names.last().expect("non-empty path");
    siblings_mut(schema, path, full)?
        .iter_mut()
        .find(|n| &n.name == last)
        .ok_or_else(|| SiaError::InvalidDelta(format!("path '{full}' does not resolve")))
}

fn node_at<'a>(schema: &'a MetadataSchema, path: &NodePath) -> Option<&'a AttributeNode> {
    let mut level = schema.nodes_for(path.kind);
    let mut found = None;
    for name in &path.names {
        let node = level.iter().find(|n| &n.name == name)?;
        level = &node.children;
        found = Some(node);
    }
    found
}

fn check_default(
    default: &Option<String>,
    value_type: &ValueType,
    vocabularies: &[Vocabulary],
    path: &str,
) -> Result<()> {
    if let Some(d) = default {
        let vocab = match value_type {
            ValueType::Enum(f) => vocabularies.iter().find(|v| &v.facet_name == f),
            _ => None,
        };
        if value_type.is_group() || !value_type.accepts(d, vocab) {
            return Err(SiaError::InvalidDelta(format!(
                "default '{d}' for '{path}' is not a valid {}",
                value_type.name()
            )));
        }
    }
    Ok(())
}

/// Whether every value of type `from` is also a valid `to`.
pub fn retype_is_lossless(from: &ValueType, to: &ValueType) -> bool {
    from == to
        || *to == ValueType::Text
        || matches!((from, to), (ValueType::Integer, ValueType::Decimal))
}

/// Applies one change to `schema` in place and reports the record action it
/// implies. The version number is left alone.
pub fn apply_change(
    schema: &mut MetadataSchema,
    change: &SchemaChange,
    vocabularies: &[Vocabulary],
) -> Result<RecordAction> {
    let full = change.path();
    let path = parse_path(full)?;
    let last = path.names.last().expect("non-empty path").clone();
    match change {
        SchemaChange::AddNode { node, default, .. } => {
            if !is_node_name(&last) {
                return Err(SiaError::InvalidDelta(format!("'{last}' is not a valid node name")));
            }
            if node.required && node.value_type.is_group() {
                return Err(SiaError::InvalidDelta(format!(
                    "required group '{full}' cannot be added to existing records"
                )));
            }
            check_default(default, &node.value_type, vocabularies, full)?;
            let siblings = siblings_mut(schema, &path, full)?;
            if siblings.iter().any(|n| n.name == last) {
                return Err(SiaError::InvalidDelta(format!("'{full}' already exists")));
            }
            let mut node = node.clone();
            node.name = last;
            siblings.push(node);
            Ok(RecordAction::FillEmpty)
        }
        SchemaChange::RemoveNode { .. } => {
            let siblings = siblings_mut(schema, &path, full)?;
            let before = siblings.len();
            siblings.retain(|n| n.name != last);
            if siblings.len() == before {
                return Err(SiaError::InvalidDelta(format!("path '{full}' does not resolve")));
            }
            if siblings.is_empty() && path.names.len() == 1 {
                schema.per_kind.remove(&path.kind);
            }
            Ok(RecordAction::ArchiveToLegacy)
        }
        SchemaChange::RenameNode { new_name, .. } => {
            if !is_node_name(new_name) {
                return Err(SiaError::InvalidDelta(format!("'{new_name}' is not a valid node name")));
            }
            let siblings = siblings_mut(schema, &path, full)?;
            if *new_name != last && siblings.iter().any(|n| &n.name == new_name) {
                return Err(SiaError::InvalidDelta(format!(
                    "'{new_name}' already exists next to '{full}'"
                )));
            }
            let node = siblings
                .iter_mut()
                .find(|n| n.name == last)
                .ok_or_else(|| SiaError::InvalidDelta(format!("path '{full}' does not resolve")))?;
            node.name = new_name.clone();
            Ok(RecordAction::MoveValue)
        }
        SchemaChange::RetypeNode { new_type, default, .. } => {
            let node = node_mut(schema, &path, full)?;
            if node.value_type.is_group() || new_type.is_group() {
                return Err(SiaError::InvalidDelta(format!(
                    "'{full}' cannot be retyped to or from a group"
                )));
            }
            check_default(default, new_type, vocabularies, full)?;
            let action = if retype_is_lossless(&node.value_type, new_type) {
                RecordAction::MoveValue
            } else {
                RecordAction::RetypeOrLegacy
            };
            node.value_type = new_type.clone();
            Ok(action)
        }
    }
}

/// Describes the migration `delta` implies for schemas at `current.version`.
/// Nothing is persisted.
pub fn propose_schema(
    current: &MetadataSchema,
    delta: &[SchemaChange],
    vocabularies: &[Vocabulary],
) -> Result<MigrationPlan> {
    if delta.is_empty() {
        return Err(SiaError::InvalidDelta("delta has no changes".into()));
    }
    let mut target = current.clone();
    let mut record_actions = Vec::with_capacity(delta.len());
    for change in delta {
        record_actions.push(apply_change(&mut target, change, vocabularies)?);
    }
    target.version = current.version + 1;
    let violations = validate_schema(&target, vocabularies);
    if let Some(v) = violations.first() {
        return Err(SiaError::InvalidDelta(format!("{}: {}", v.path, v.message)));
    }
    Ok(MigrationPlan {
        from_version: current.version,
        to_version: target.version,
        delta: delta.to_vec(),
        record_actions,
        target,
    })
}

/// Required added leaves must declare a default.
pub fn check_defaults(plan: &MigrationPlan) -> Result<()> {
    for change in &plan.delta {
        if let SchemaChange::AddNode {
            path,
            node,
            default: None,
        } = change
        {
            if node.required {
                return Err(SiaError::DefaultMissing(path.clone()));
            }
        }
    }
    Ok(())
}

// Working copy of an attribute tree where every leaf remembers the path it
// had in the source version.

enum WValue {
    Leaf { value: String, origin: String },
    Group(Vec<WEntry>),
}

struct WEntry {
    name: String,
    values: Vec<WValue>,
}

fn to_work(prefix: &str, entries: &[AttrEntry]) -> Vec<WEntry> {
    entries
        .iter()
        .map(|e| {
            let path = format!("{prefix}/{}", e.name);
            WEntry {
                name: e.name.clone(),
                values: e
                    .values
                    .iter()
                    .map(|v| match v {
                        AttrValue::Leaf(s) => WValue::Leaf {
                            value: s.clone(),
                            origin: path.clone(),
                        },
                        AttrValue::Group(children) => WValue::Group(to_work(&path, children)),
                    })
                    .collect(),
            }
        })
        .collect()
}

fn from_work(entries: Vec<WEntry>) -> Vec<AttrEntry> {
    entries
        .into_iter()
        .map(|e| AttrEntry {
            name: e.name,
            values: e
                .values
                .into_iter()
                .map(|v| match v {
                    WValue::Leaf { value, .. } => AttrValue::Leaf(value),
                    WValue::Group(children) => AttrValue::Group(from_work(children)),
                })
                .collect(),
        })
        .collect()
}

/// Calls `f` on every sibling list reached by following `parents` from the
/// root.
fn each_level(entries: &mut Vec<WEntry>, parents: &[String], f: &mut dyn FnMut(&mut Vec<WEntry>) -> Result<()>) -> Result<()> {
    let Some((head, rest)) = parents.split_first() else {
        return f(entries);
    };
    for entry in entries.iter_mut().filter(|e| &e.name == head) {
        for value in &mut entry.values {
            if let WValue::Group(children) = value {
                each_level(children, rest, f)?;
            }
        }
    }
    Ok(())
}

fn archive(values: Vec<WValue>, from_version: u32, legacy: &mut Vec<LegacyValue>) {
    for v in values {
        match v {
            WValue::Leaf { value, origin } => legacy.push(LegacyValue {
                path: origin,
                from_version,
                value,
            }),
            WValue::Group(children) => {
                for e in children {
                    archive(e.values, from_version, legacy);
                }
            }
        }
    }
}

/// Rewrites `record` for `plan.target`. The caller validates the result.
pub fn migrate_record(
    record: &DocumentRecord,
    plan: &MigrationPlan,
    vocabularies: &[Vocabulary],
) -> Result<DocumentRecord> {
    let kind = record.kind.tag;
    let mut tree = to_work(kind.as_str(), &record.attributes.entries);
    let mut legacy = Vec::new();
    let from = plan.from_version;

    for change in &plan.delta {
        let path = parse_path(change.path())?;
        if path.kind != kind {
            continue;
        }
        let (last, parents) = path.names.split_last().expect("non-empty path");
        match change {
            SchemaChange::AddNode { node, default, .. } => {
                if !node.required {
                    continue;
                }
                let default = default
                    .clone()
                    .ok_or_else(|| SiaError::DefaultMissing(change.path().to_string()))?;
                each_level(&mut tree, parents, &mut |level| {
                    if !level.iter().any(|e| &e.name == last) {
                        level.push(WEntry {
                            name: last.clone(),
                            values: vec![WValue::Leaf {
                                value: default.clone(),
                                origin: String::new(),
                            }],
                        });
                    }
                    Ok(())
                })?;
            }
            SchemaChange::RemoveNode { .. } => {
                each_level(&mut tree, parents, &mut |level| {
                    let (gone, kept): (Vec<WEntry>, Vec<WEntry>) =
                        std::mem::take(level).into_iter().partition(|e| &e.name == last);
                    *level = kept;
                    for e in gone {
                        archive(e.values, from, &mut legacy);
                    }
                    Ok(())
                })?;
            }
            SchemaChange::RenameNode { new_name, .. } => {
                each_level(&mut tree, parents, &mut |level| {
                    for e in level.iter_mut().filter(|e| &e.name == last) {
                        e.name = new_name.clone();
                    }
                    Ok(())
                })?;
            }
            SchemaChange::RetypeNode { new_type, default, .. } => {
                let vocab = match new_type {
                    ValueType::Enum(f) => vocabularies.iter().find(|v| &v.facet_name == f),
                    _ => None,
                };
                let required = node_at(&plan.target, &path).is_some_and(|n| n.required);
                each_level(&mut tree, parents, &mut |level| {
                    let Some(pos) = level.iter().position(|e| &e.name == last) else {
                        return Ok(());
                    };
                    let (keep, drop): (Vec<WValue>, Vec<WValue>) = std::mem::take(&mut level[pos].values)
                        .into_iter()
                        .partition(|v| matches!(v, WValue::Leaf { value, .. } if new_type.accepts(value, vocab)));
                    archive(drop, from, &mut legacy);
                    if !keep.is_empty() {
                        level[pos].values = keep;
                        return Ok(());
                    }
                    if !required {
                        level.remove(pos);
                        return Ok(());
                    }
                    let d = default
                        .clone()
                        .ok_or_else(|| SiaError::DefaultMissing(change.path().to_string()))?;
                    level[pos].values = vec![WValue::Leaf {
                        value: d,
                        origin: String::new(),
                    }];
                    Ok(())
                })?;
            }
        }
    }

    let mut out = record.clone();
    out.attributes.entries = from_work(tree);
    out.attributes.legacy.extend(legacy);
    out.schema_version = plan.to_version;
    Ok(out)
}
