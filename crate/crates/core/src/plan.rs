//! Layered 2D documents: synthesis plans built from vector plans, and
//! photo-montages stacking raster images. Serialized as SVG where every
//! layer and every element copied from a source plan carries
//! `data-record-id`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SiaError};
use crate::model::{DocumentRecord, KindTag, ReferenceData};
use crate::scene::{CompositionRequest, CompositionWarning, Rgb};
use crate::xml::{escape_attr, XmlWriter};

pub const SVG_NS: &str = "http://www.w3.org/2000/svg";
pub const XLINK_NS: &str = "http://www.w3.org/1999/xlink";
pub const RECORD_ATTR: &str = "data-record-id";

/// Fallback extent for vector plans declaring neither a viewBox nor a size.
const DEFAULT_EXTENT: ViewBox = ViewBox {
    x: 0.0,
    y: 0.0,
    width: 100.0,
    height: 100.0,
};

/// Montage canvas; images are fitted into it preserving aspect ratio.
pub const MONTAGE_CANVAS: ViewBox = ViewBox {
    x: 0.0,
    y: 0.0,
    width: 1024.0,
    height: 768.0,
};

/// Resolves the bytes of a record's asset.
pub trait AssetSource {
    fn read_asset(&self, record: &DocumentRecord) -> Result<Vec<u8>>;
}

impl<F> AssetSource for F
where
    F: Fn(&DocumentRecord) -> Result<Vec<u8>>,
{
    fn read_asset(&self, record: &DocumentRecord) -> Result<Vec<u8>> {
        self(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBox {
    fn union(&self, other: &ViewBox) -> ViewBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        let right = (self.x + self.width).max(other.x + other.width);
        let bottom = (self.y + self.height).max(other.y + other.height);
        ViewBox {
            x,
            y,
            width: right - x,
            height: bottom - y,
        }
    }

    fn with_margin(&self, fraction: f64) -> ViewBox {
        let dx = self.width * fraction;
        let dy = self.height * fraction;
        ViewBox {
            x: self.x - dx,
            y: self.y - dy,
            width: self.width + 2.0 * dx,
            height: self.height + 2.0 * dy,
        }
    }
}

impl std::fmt::Display for ViewBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {} {}", self.x, self.y, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "mode")]
pub enum LayerContent {
    /// Source SVG document, inlined at serialization.
    VectorInline { svg: String },
    /// Raster image referenced by link.
    RasterEmbed { href: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanLayer {
    pub period_id: Option<String>,
    pub place_id: Option<String>,
    pub source_record_id: String,
    pub content: LayerContent,
    pub color_override: Option<Rgb>,
    pub opacity: f64,
}

impl PlanLayer {
    pub fn element_id(&self) -> String {
        format!(
            "layer-{}-{}-{}",
            self.period_id.as_deref().unwrap_or("none"),
            self.place_id.as_deref().unwrap_or("none"),
            self.source_record_id
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LegendEntry {
    pub period_id: String,
    pub label: String,
    pub color: Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PlanKind {
    Synthesis,
    Montage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanDocument {
    pub kind: PlanKind,
    /// Bottom to top.
    pub layers: Vec<PlanLayer>,
    pub canvas: ViewBox,
    pub legend: Vec<LegendEntry>,
    pub warnings: Vec<CompositionWarning>,
}

impl PlanDocument {
    pub fn source_record_ids(&self) -> std::collections::BTreeSet<String> {
        self.layers.iter().map(|l| l.source_record_id.clone()).collect()
    }
}

fn parse_numbers(s: &str) -> Option<Vec<f64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

fn parse_length(s: &str) -> Option<f64> {
    let trimmed = s.trim().trim_end_matches("px");
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

fn parse_source<'a>(record_id: &str, text: &'a str) -> Result<roxmltree::Document<'a>> {
    let malformed = |reason: String| SiaError::MalformedSourceVector {
        record: record_id.to_string(),
        reason,
    };
    let opts = roxmltree::ParsingOptions {
        allow_dtd: false,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(text, opts).map_err(|e| malformed(e.to_string()))?;
    let root = doc.root_element();
    let ns = root.tag_name().namespace();
    if ns.is_some_and(|ns| ns != SVG_NS) {
        return Err(malformed(format!("root element is in namespace '{}'", ns.unwrap_or(""))));
    }
    Ok(doc)
}

/// Extent of a source plan in site units.
fn source_extent(record_id: &str, svg: &str) -> Result<ViewBox> {
    let doc = parse_source(record_id, svg)?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Ok(DEFAULT_EXTENT);
    }
    if let Some(vb) = root.attribute("viewBox") {
        return match parse_numbers(vb).as_deref() {
            Some([x, y, w, h]) if *w > 0.0 && *h > 0.0 => Ok(ViewBox {
                x: *x,
                y: *y,
                width: *w,
                height: *h,
            }),
            _ => Err(SiaError::MalformedSourceVector {
                record: record_id.to_string(),
                reason: format!("invalid viewBox '{vb}'"),
            }),
        };
    }
    match (
        root.attribute("width").and_then(parse_length),
        root.attribute("height").and_then(parse_length),
    ) {
        (Some(width), Some(height)) => Ok(ViewBox {
            x: 0.0,
            y: 0.0,
            width,
            height,
        }),
        _ => Ok(DEFAULT_EXTENT),
    }
}

/// Synthesis plan: one tinted layer per matching vector plan, for every
/// (place, period) pair of the request.
pub fn compose_plan<'a>(
    req: &CompositionRequest,
    reference: &ReferenceData,
    records: impl IntoIterator<Item = &'a DocumentRecord>,
    assets: &dyn AssetSource,
) -> Result<PlanDocument> {
    req.validate(reference)?;
    let palette = req.resolved_palette(reference);
    let plans: Vec<&DocumentRecord> = records
        .into_iter()
        .filter(|r| r.kind.tag == KindTag::VectorPlan && !r.is_archived())
        .collect();

    let mut layers = Vec::new();
    let mut warnings = Vec::new();
    let mut canvas: Option<ViewBox> = None;
    for period in &req.period_ids {
        for place in &req.place_ids {
            let mut matched: Vec<&DocumentRecord> = plans
                .iter()
                .copied()
                .filter(|r| r.place_refs.contains(place) && r.period_refs.contains(period))
                .collect();
            matched.sort_by(|a, b| a.id.cmp(&b.id));
            if matched.is_empty() {
                warnings.push(CompositionWarning {
                    place_id: place.clone(),
                    period_id: period.clone(),
                    reason: CompositionWarning::NO_PLAN.into(),
                });
            }
            for r in matched {
                let bytes = assets.read_asset(r)?;
                let svg = String::from_utf8(bytes).map_err(|_| SiaError::MalformedSourceVector {
                    record: r.id.clone(),
                    reason: "asset is not UTF-8".into(),
                })?;
                let extent = source_extent(&r.id, &svg)?;
                canvas = Some(match canvas {
                    Some(c) => c.union(&extent),
                    None => extent,
                });
                layers.push(PlanLayer {
                    period_id: Some(period.clone()),
                    place_id: Some(place.clone()),
                    source_record_id: r.id.clone(),
                    content: LayerContent::VectorInline { svg },
                    color_override: Some(palette[period]),
                    opacity: 1.0,
                });
            }
        }
    }
    let Some(canvas) = canvas else {
        return Err(SiaError::EmptyComposition(warnings));
    };
    let legend = req
        .periods_chronological(reference)
        .into_iter()
        .filter(|p| layers.iter().any(|l| l.period_id.as_deref() == Some(p.as_str())))
        .map(|p| LegendEntry {
            label: reference.period(&p).map(|x| x.label.clone()).unwrap_or_default(),
            color: palette[&p],
            period_id: p,
        })
        .collect();
    Ok(PlanDocument {
        kind: PlanKind::Synthesis,
        layers,
        canvas: canvas.with_margin(0.05),
        legend,
        warnings,
    })
}

/// Stacks image records over a base image. Layers keep request order.
pub fn compose_photomontage(
    base_id: &str,
    overlays: &[(String, f64)],
    records: &BTreeMap<String, std::sync::Arc<DocumentRecord>>,
) -> Result<PlanDocument> {
    let lookup = |id: &str| -> Result<&DocumentRecord> {
        let r = records
            .get(id)
            .ok_or_else(|| SiaError::NotFound(id.to_string()))?;
        if !r.kind.tag.is_image_bearing() {
            return Err(SiaError::NotAnImage(id.to_string()));
        }
        Ok(r)
    };
    let layer = |r: &DocumentRecord, opacity: f64| PlanLayer {
        period_id: r.period_refs.first().cloned(),
        place_id: r.place_refs.first().cloned(),
        source_record_id: r.id.clone(),
        content: LayerContent::RasterEmbed {
            href: r.content.href.clone(),
        },
        color_override: None,
        opacity,
    };
    let base = lookup(base_id)?;
    let mut layers = vec![layer(base, 1.0)];
    for (id, opacity) in overlays {
        let r = lookup(id)?;
        if !(0.0..=1.0).contains(opacity) {
            return Err(SiaError::InvalidOpacity(*opacity));
        }
        layers.push(layer(r, *opacity));
    }
    Ok(PlanDocument {
        kind: PlanKind::Montage,
        layers,
        canvas: MONTAGE_CANVAS,
        legend: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Source text of each top-level drawable of a vector plan. Every element in
/// it is annotated with the record id; the top one also receives the
/// namespace declarations inherited from ancestors.
fn inline_drawables(record_id: &str, svg: &str) -> Result<Vec<String>> {
    let doc = parse_source(record_id, svg)?;
    let root = doc.root_element();
    let tops: Vec<roxmltree::Node<'_, '_>> = if root.tag_name().name() == "svg" {
        root.children().filter(|n| n.is_element()).collect()
    } else {
        vec![root]
    };
    let mut out = Vec::with_capacity(tops.len());
    for node in tops {
        let range = node.range();
        let base = range.start;
        let source = &svg[range.clone()];

        // namespaces in scope at the parent are lost when the node moves;
        // redeclare those the node does not declare itself
        let top_tag = &source[..source.find('>').unwrap_or(source.len())];
        let mut decls = String::new();
        if let Some(parent) = node.parent_element() {
            for ns in parent.namespaces() {
                let uri = ns.uri();
                let decl = match ns.name() {
                    Some("xml") => continue,
                    Some("xlink") if uri == XLINK_NS => continue,
                    None if uri == SVG_NS => continue,
                    Some(p) => format!("xmlns:{p}="),
                    None => "xmlns=".to_string(),
                };
                if !top_tag.contains(&decl) {
                    decls.push_str(&format!(" {decl}\"{}\"", escape_attr(uri)));
                }
            }
        }

        // every element of the fragment gets the annotation, replacing any
        // it already had; edits are (start, end, insertion) relative to the node
        let annotation = format!(" {RECORD_ATTR}=\"{}\"", escape_attr(record_id));
        let mut edits: Vec<(usize, usize, String)> = Vec::new();
        for el in node.descendants().filter(|n| n.is_element()) {
            let at = el.range().start - base;
            let name_len = source[at + 1..]
                .find(|c: char| c.is_whitespace() || c == '>' || c == '/')
                .unwrap_or(source.len() - at - 1);
            let mut insertion = annotation.clone();
            if el == node {
                insertion.push_str(&decls);
            }
            edits.push((at + 1 + name_len, at + 1 + name_len, insertion));
            for a in el.attributes().filter(|a| a.namespace().is_none() && a.name() == RECORD_ATTR) {
                let r = a.range();
                edits.push((r.start - base, r.end - base, String::new()));
            }
        }
        edits.sort_by_key(|e| std::cmp::Reverse(e.0));
        let mut text = source.to_string();
        for (from, to, insertion) in edits {
            text.replace_range(from..to, &insertion);
        }
        out.push(text);
    }
    Ok(out)
}

fn fmt_opacity(o: f64) -> String {
    o.to_string()
}

/// SVG bytes for a plan document.
pub fn serialize_svg(doc: &PlanDocument) -> Result<String> {
    let mut w = XmlWriter::with_declaration();
    w.open(
        "svg",
        &[
            ("xmlns", SVG_NS.into()),
            ("xmlns:xlink", XLINK_NS.into()),
            ("viewBox", doc.canvas.to_string()),
        ],
    );
    for layer in &doc.layers {
        let mut attrs = vec![
            ("id", layer.element_id()),
            (RECORD_ATTR, layer.source_record_id.clone()),
            ("class", "layer".to_string()),
        ];
        if let Some(c) = layer.color_override {
            attrs.push(("fill", c.hex()));
            attrs.push(("stroke", c.hex()));
        }
        if layer.opacity < 1.0 {
            attrs.push(("opacity", fmt_opacity(layer.opacity)));
        }
        match &layer.content {
            LayerContent::VectorInline { svg } => {
                let drawables = inline_drawables(&layer.source_record_id, svg)?;
                w.container("g", &attrs, |w| {
                    for d in &drawables {
                        w.raw_fragment(d);
                    }
                });
            }
            LayerContent::RasterEmbed { href } => {
                w.open("g", &attrs);
                w.empty(
                    "image",
                    &[
                        (RECORD_ATTR, layer.source_record_id.clone()),
                        ("href", href.clone()),
                        ("x", doc.canvas.x.to_string()),
                        ("y", doc.canvas.y.to_string()),
                        ("width", doc.canvas.width.to_string()),
                        ("height", doc.canvas.height.to_string()),
                        ("preserveAspectRatio", "xMidYMid meet".into()),
                    ],
                );
                w.close("g");
            }
        }
    }
    w.container("g", &[("id", "legend".into()), ("class", "legend".into())], |w| {
        let size = (doc.canvas.height * 0.04).max(f64::MIN_POSITIVE);
        for (i, entry) in doc.legend.iter().enumerate() {
            let y = doc.canvas.y + size * (0.5 + 1.5 * i as f64);
            let x = doc.canvas.x + size * 0.5;
            w.open("g", &[("data-period-id", entry.period_id.clone())]);
            w.empty(
                "rect",
                &[
                    ("x", x.to_string()),
                    ("y", y.to_string()),
                    ("width", size.to_string()),
                    ("height", size.to_string()),
                    ("fill", entry.color.hex()),
                ],
            );
            w.leaf(
                "text",
                &[
                    ("x", (x + size * 1.5).to_string()),
                    ("y", (y + size * 0.8).to_string()),
                    ("font-size", (size * 0.8).to_string()),
                ],
                &entry.label,
            );
            w.close("g");
        }
    });
    w.close("svg");
    Ok(w.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawables_are_annotated_and_namespaces_carried() {
        let src = r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:ink="urn:ink" viewBox="0 0 10 10">
  <path d="M0 0" data-record-id="stale" ink:label="a"/>
  <g><text>two
lines</text></g>
</svg>"#;
        let parts = inline_drawables("r1", src).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(
            parts[0],
            r#"<path data-record-id="r1" xmlns:ink="urn:ink" d="M0 0"  ink:label="a"/>"#
        );
        assert_eq!(
            parts[1],
            "<g data-record-id=\"r1\" xmlns:ink=\"urn:ink\"><text data-record-id=\"r1\">two\nlines</text></g>"
        );
    }

    #[test]
    fn extent_from_viewbox_or_size() {
        let vb = source_extent("r", r#"<svg viewBox="1,2 30 40"/>"#).unwrap();
        assert_eq!(vb, ViewBox { x: 1.0, y: 2.0, width: 30.0, height: 40.0 });
        let sz = source_extent("r", r#"<svg width="50px" height="20"/>"#).unwrap();
        assert_eq!(sz, ViewBox { x: 0.0, y: 0.0, width: 50.0, height: 20.0 });
        assert!(matches!(
            source_extent("r", "<svg viewBox='0 0 0'/>"),
            Err(SiaError::MalformedSourceVector { .. })
        ));
        assert!(matches!(
            source_extent("r", "<svg><g></svg>"),
            Err(SiaError::MalformedSourceVector { .. })
        ));
    }
}
