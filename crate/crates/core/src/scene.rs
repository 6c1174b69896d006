//! On-the-fly 3D composition: gather the 3D models of the selected places
//! and periods into one scene, color each group by period, emit X3D.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SiaError};
use crate::model::{ContentRef, DocumentRecord, KindTag, ReferenceData};
use crate::xml::XmlWriter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb { r, g, b }
    }

    pub fn in_range(&self) -> bool {
        [self.r, self.g, self.b].iter().all(|c| (0.0..=1.0).contains(c))
    }

    /// `#rrggbb` form.
    pub fn hex(&self) -> String {
        let byte = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        format!("#{:02x}{:02x}{:02x}", byte(self.r), byte(self.g), byte(self.b))
    }
}

impl fmt::Display for Rgb {
    /// Space-separated triple, as used by X3D color fields.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.r, self.g, self.b)
    }
}

pub const YELLOW: Rgb = Rgb::new(1.0, 0.9, 0.0);
pub const PINK: Rgb = Rgb::new(1.0, 0.6, 0.75);

/// Period colors, assigned in order and cycled.
pub const PALETTE: [Rgb; 12] = [
    YELLOW,
    PINK,
    Rgb::new(0.2, 0.4, 1.0),
    Rgb::new(0.2, 0.75, 0.3),
    Rgb::new(1.0, 0.5, 0.0),
    Rgb::new(0.6, 0.3, 0.8),
    Rgb::new(0.0, 0.8, 0.85),
    Rgb::new(0.85, 0.1, 0.1),
    Rgb::new(0.5, 0.55, 0.1),
    Rgb::new(0.55, 0.35, 0.15),
    Rgb::new(0.0, 0.5, 0.5),
    Rgb::new(0.5, 0.5, 0.5),
];

/// Colors for `period_ids` in the given order, cycling through [`PALETTE`].
pub fn default_palette<S: AsRef<str>>(period_ids: &[S]) -> BTreeMap<String, Rgb> {
    let mut out = BTreeMap::new();
    for (i, id) in period_ids.iter().enumerate() {
        out.entry(id.as_ref().to_string())
            .or_insert(PALETTE[i % PALETTE.len()]);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompositionRequest {
    pub place_ids: BTreeSet<String>,
    pub period_ids: BTreeSet<String>,
    #[serde(default)]
    pub palette: Option<BTreeMap<String, Rgb>>,
}

impl CompositionRequest {
    pub fn new<P: AsRef<str>, Q: AsRef<str>>(places: &[P], periods: &[Q]) -> Self {
        CompositionRequest {
            place_ids: places.iter().map(|p| p.as_ref().to_string()).collect(),
            period_ids: periods.iter().map(|p| p.as_ref().to_string()).collect(),
            palette: None,
        }
    }

    pub fn validate(&self, reference: &ReferenceData) -> Result<()> {
        if self.place_ids.is_empty() || self.period_ids.is_empty() {
            return Err(SiaError::InvalidRequest(
                "select at least one place and one period".into(),
            ));
        }
        if let Some(p) = self.place_ids.iter().find(|p| reference.place(p).is_none()) {
            return Err(SiaError::InvalidRequest(format!("unknown place '{p}'")));
        }
        if let Some(p) = self.period_ids.iter().find(|p| reference.period(p).is_none()) {
            return Err(SiaError::InvalidRequest(format!("unknown period '{p}'")));
        }
        if let Some((id, c)) = self
            .palette
            .iter()
            .flatten()
            .find(|(_, c)| !c.in_range())
        {
            return Err(SiaError::InvalidRequest(format!(
                "palette color for '{id}' outside [0,1]: {c}"
            )));
        }
        Ok(())
    }

    /// Requested periods in chronological order.
    pub fn periods_chronological(&self, reference: &ReferenceData) -> Vec<String> {
        let mut periods: Vec<_> = self
            .period_ids
            .iter()
            .filter_map(|id| reference.period(id))
            .collect();
        periods.sort_by(|a, b| {
            (a.start_year, a.end_year, &a.id).cmp(&(b.start_year, b.end_year, &b.id))
        });
        periods.into_iter().map(|p| p.id.clone()).collect()
    }

    /// Effective palette: explicit entries win, the rest come from the
    /// default palette over the requested periods in chronological order.
    pub fn resolved_palette(&self, reference: &ReferenceData) -> BTreeMap<String, Rgb> {
        let mut palette = default_palette(&self.periods_chronological(reference));
        if let Some(explicit) = &self.palette {
            for (id, c) in explicit {
                if let Some(slot) = palette.get_mut(id) {
                    *slot = *c;
                }
            }
        }
        palette
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompositionWarning {
    pub place_id: String,
    pub period_id: String,
    pub reason: String,
}

impl CompositionWarning {
    pub const NO_MODEL: &'static str = "no-model";
    pub const NO_PLAN: &'static str = "no-plan";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneGroup {
    pub place_id: String,
    pub period_id: String,
    pub source_record_id: String,
    pub geometry_ref: ContentRef,
    pub color_override: Rgb,
}

impl SceneGroup {
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.place_id, self.period_id, self.source_record_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    fn point(p: [f64; 3]) -> Self {
        Bounds { min: p, max: p }
    }

    fn include(&mut self, p: [f64; 3]) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scene {
    pub groups: Vec<SceneGroup>,
    pub warnings: Vec<CompositionWarning>,
    /// Box around the models' recorded coordinates and their places'
    /// footprints, if any are known.
    pub bounds: Option<Bounds>,
}

fn grow(bounds: &mut Option<Bounds>, p: [f64; 3]) {
    match bounds {
        Some(b) => b.include(p),
        None => *bounds = Some(Bounds::point(p)),
    }
}

/// Builds the scene for every (place, period) pair of the request.
pub fn compose_model<'a>(
    req: &CompositionRequest,
    reference: &ReferenceData,
    records: impl IntoIterator<Item = &'a DocumentRecord>,
) -> Result<Scene> {
    req.validate(reference)?;
    let palette = req.resolved_palette(reference);
    let models: Vec<&DocumentRecord> = records
        .into_iter()
        .filter(|r| r.kind.tag == KindTag::Model3d && !r.is_archived())
        .collect();

    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    let mut bounds = None;
    for place in &req.place_ids {
        for period in &req.period_ids {
            let mut matched: Vec<&DocumentRecord> = models
                .iter()
                .copied()
                .filter(|r| r.place_refs.contains(place) && r.period_refs.contains(period))
                .collect();
            matched.sort_by(|a, b| a.id.cmp(&b.id));
            if matched.is_empty() {
                warnings.push(CompositionWarning {
                    place_id: place.clone(),
                    period_id: period.clone(),
                    reason: CompositionWarning::NO_MODEL.into(),
                });
                continue;
            }
            if let Some(fp) = reference.place(place).and_then(|p| p.footprint.as_ref()) {
                for v in fp {
                    grow(&mut bounds, [v.x, v.y, 0.0]);
                }
            }
            for r in matched {
                if let Some(c) = r.coordinates {
                    grow(&mut bounds, [c.x, c.y, c.z]);
                }
                groups.push(SceneGroup {
                    place_id: place.clone(),
                    period_id: period.clone(),
                    source_record_id: r.id.clone(),
                    geometry_ref: r.content.clone(),
                    color_override: palette[period],
                });
            }
        }
    }
    if groups.is_empty() {
        return Err(SiaError::EmptyComposition(warnings));
    }
    Ok(Scene {
        groups,
        warnings,
        bounds,
    })
}

fn mf_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// X3D document: one named `Group` per scene group, each holding the
/// source record id as metadata, an `Inline` of the model and a `Material`
/// carrying the period color.
pub fn serialize_x3d(scene: &Scene) -> String {
    let mut groups: Vec<&SceneGroup> = scene.groups.iter().collect();
    groups.sort_by(|a, b| {
        (&a.place_id, &a.period_id, &a.source_record_id).cmp(&(&b.place_id, &b.period_id, &b.source_record_id))
    });

    let mut w = XmlWriter::with_declaration();
    w.open("X3D", &[("profile", "Interchange".into()), ("version", "3.3".into())]);
    w.open("head", &[]);
    w.empty("meta", &[("name", "generator".into()), ("content", "sia-core".into())]);
    for warn in &scene.warnings {
        w.empty(
            "meta",
            &[
                ("name", "warning".into()),
                ("content", format!("{}/{}: {}", warn.place_id, warn.period_id, warn.reason)),
            ],
        );
    }
    w.close("head");
    w.open("Scene", &[]);
    if let Some(b) = scene.bounds {
        let center: Vec<String> = (0..3).map(|i| ((b.min[i] + b.max[i]) / 2.0).to_string()).collect();
        let size: Vec<String> = (0..3).map(|i| (b.max[i] - b.min[i]).to_string()).collect();
        w.empty(
            "WorldInfo",
            &[("info", format!("{} {}", mf_string(&format!("bboxCenter {}", center.join(" "))), mf_string(&format!("bboxSize {}", size.join(" ")))))],
        );
    }
    for g in groups {
        w.open("Group", &[("DEF", g.name())]);
        w.empty(
            "MetadataString",
            &[
                ("containerField", "metadata".into()),
                ("name", "sourceRecordId".into()),
                ("value", mf_string(&g.source_record_id)),
            ],
        );
        w.empty("Inline", &[("url", mf_string(&g.geometry_ref.href))]);
        w.open("Shape", &[]);
        w.open("Appearance", &[]);
        w.empty("Material", &[("diffuseColor", g.color_override.to_string())]);
        w.close("Appearance");
        w.close("Shape");
        w.close("Group");
    }
    w.close("Scene");
    w.close("X3D");
    w.finish()
}
