//! Synthetic data: a small medieval castle site and random record
//! generators for property and acceptance tests.

use chrono::{DateTime, NaiveDate, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::model::*;

const TEXT_POOL: &[&str] = &[
    "Chapel", "south", "wall", "<Tour & Porte>", "\"quoted\"", "l'aile", "Nordtor", "Burg",
    "château", "Ægidius", "1100", "  padded  ", "tab\there", "line\nbreak", "cr\rlf", "Ω≈ç",
    "🏰", "a>b", "&amp;", "]]>",
];

fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    (0..n)
        .map(|_| *TEXT_POOL.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_slug<R: Rng>(rng: &mut R, prefix: &str) -> String {
    format!("{prefix}-{}", rng.random_range(0..1000u32))
}

fn random_kind<R: Rng>(rng: &mut R) -> DocumentKind {
    let tag = *KindTag::ALL.choose(rng).unwrap();
    if tag == KindTag::RasterPlan {
        DocumentKind::raster_plan(*PlanSubkind::ALL.choose(rng).unwrap())
    } else {
        DocumentKind::new(tag)
    }
}

fn random_timestamp<R: Rng>(rng: &mut R) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(rng.random_range(0..4_102_444_800_000i64)).unwrap()
}

fn random_float<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1000..1000) as f64,
        1 => rng.random_range(-1.0e3..1.0e3),
        2 => rng.random_range(-1.0e-6..1.0e-6),
        _ => rng.random::<f64>() * 1e12,
    }
}

fn random_entries<R: Rng>(rng: &mut R, depth: usize) -> Vec<AttrEntry> {
    let n = rng.random_range(0..4);
    (0..n)
        .map(|i| {
            let values = (0..rng.random_range(1..3))
                .map(|_| {
                    if depth > 0 && rng.random_bool(0.3) {
                        AttrValue::Group(random_entries(rng, depth - 1))
                    } else {
                        AttrValue::Leaf(random_text(rng, 3))
                    }
                })
                .collect();
            AttrEntry {
                name: format!("node-{depth}-{i}"),
                values,
            }
        })
        .collect()
}

/// A structurally arbitrary record (not necessarily valid against any
/// schema) exercising escaping, optional fields and nested attributes.
pub fn random_record<R: Rng>(rng: &mut R, n: usize) -> DocumentRecord {
    let created = random_timestamp(rng);
    DocumentRecord {
        id: format!("rec-{n}"),
        kind: random_kind(rng),
        title: random_text(rng, 5),
        author: random_text(rng, 2),
        provenance: random_text(rng, 4),
        subject_keywords: (0..rng.random_range(0..4)).map(|i| format!("{}{i}", random_text(rng, 1))).collect(),
        capture_date: rng
            .random_bool(0.7)
            .then(|| NaiveDate::from_num_days_from_ce_opt(rng.random_range(1..3_000_000)).unwrap()),
        place_refs: (0..rng.random_range(0..3)).map(|_| random_slug(rng, "place")).collect(),
        period_refs: (0..rng.random_range(0..3)).map(|_| random_slug(rng, "period")).collect(),
        coordinates: rng.random_bool(0.5).then(|| Coordinates {
            x: random_float(rng),
            y: random_float(rng),
            z: random_float(rng),
        }),
        content: ContentRef {
            href: format!("{}/{}", random_slug(rng, "dir"), random_text(rng, 2)),
            media_format: random_text(rng, 1),
            checksum: (0..rng.random_range(0..64)).map(|_| *b"0123456789abcdef".choose(rng).unwrap() as char).collect(),
            byte_size: rng.random(),
        },
        attributes: AttributeValues {
            entries: random_entries(rng, 2),
            legacy: (0..rng.random_range(0..3))
                .map(|_| LegacyValue {
                    path: format!("photo/{}", random_slug(rng, "old")),
                    from_version: rng.random_range(1..9),
                    value: random_text(rng, 2),
                })
                .collect(),
        },
        schema_version: rng.random_range(1..20),
        audit: Audit {
            created,
            updated: random_timestamp(rng),
            archived: rng.random_bool(0.2).then(|| random_timestamp(rng)),
        },
    }
}

/// Reference data and schema of a random but self-consistent site.
#[derive(Debug, Clone)]
pub struct RandomSite {
    pub reference: ReferenceData,
    pub schema: MetadataSchema,
}

pub const SUBJECT_TERMS: &[&str] = &[
    "chapel", "hall", "yard", "keep", "tower", "gate", "wall", "moat", "kitchen", "cellar",
];
pub const AUTHORS: &[&str] = &["Schmit", "Weber", "Hoffmann", "Klein", "Conservator"];
pub const MATERIALS: &[&str] = &["stone", "wood", "brick", "lime"];

/// Random site with a place forest of `n_places` nodes and `n_periods`
/// periods scattered between 900 and 1700.
pub fn random_site<R: Rng>(rng: &mut R, n_places: usize, n_periods: usize) -> RandomSite {
    let mut places: Vec<Place> = Vec::with_capacity(n_places);
    for i in 0..n_places {
        let parent_id = (i > 0 && rng.random_bool(0.7))
            .then(|| places[rng.random_range(0..i)].id.clone());
        places.push(Place {
            id: format!("place-{i}"),
            name: format!("Place {i}"),
            parent_id,
            description: String::new(),
            footprint: None,
        });
    }
    let periods = (0..n_periods)
        .map(|i| {
            let start = rng.random_range(900..1700);
            let len = rng.random_range(0..120);
            Period {
                id: format!("period-{i}"),
                label: format!("Phase {i}"),
                start_year: start,
                end_year: start + len,
                description: String::new(),
            }
        })
        .collect();
    let reference = ReferenceData {
        periods,
        places,
        vocabularies: vec![
            Vocabulary::new(SUBJECT_FACET, SUBJECT_TERMS),
            Vocabulary::new(AUTHOR_FACET, AUTHORS),
            Vocabulary::new("material", MATERIALS),
        ],
    };
    RandomSite {
        reference,
        schema: sample_schema(1),
    }
}

/// A modest schema: photos carry emulsion, film type, exposure count and a
/// camera group; drawings carry a material and a scale.
pub fn sample_schema(version: u32) -> MetadataSchema {
    let mut schema = MetadataSchema::empty(version);
    schema.per_kind.insert(
        KindTag::Photo,
        vec![
            AttributeNode::leaf("emulsion", ValueType::Text),
            AttributeNode::leaf("film-type", ValueType::Text),
            AttributeNode::leaf("exposures", ValueType::Text),
            AttributeNode::group(
                "camera",
                vec![
                    AttributeNode::leaf("model", ValueType::Text),
                    AttributeNode::leaf("lens", ValueType::Text).repeatable(),
                ],
            ),
        ],
    );
    schema.per_kind.insert(
        KindTag::Drawing,
        vec![
            AttributeNode::leaf("material", ValueType::Enum("material".into())).repeatable(),
            AttributeNode::leaf("scale", ValueType::Decimal),
        ],
    );
    schema
}

fn pick_distinct<R: Rng>(rng: &mut R, pool: &[String], max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max.min(pool.len()));
    pool.choose_multiple(rng, n).cloned().collect()
}

fn random_attributes<R: Rng>(rng: &mut R, kind: KindTag) -> AttributeValues {
    let mut entries = Vec::new();
    match kind {
        KindTag::Photo => {
            if rng.random_bool(0.7) {
                entries.push(AttrEntry::leaf("emulsion", *["ilford", "kodak", "agfa"].choose(rng).unwrap()));
            }
            if rng.random_bool(0.6) {
                entries.push(AttrEntry::leaf("film-type", *["b/w", "colour", "slide"].choose(rng).unwrap()));
            }
            if rng.random_bool(0.6) {
                let v = if rng.random_bool(0.15) {
                    "n/a".to_string()
                } else {
                    rng.random_range(1..72).to_string()
                };
                entries.push(AttrEntry::leaf("exposures", v));
            }
            if rng.random_bool(0.5) {
                let mut cam = vec![AttrEntry::leaf("model", "Linhof")];
                let lenses: Vec<AttrValue> = (0..rng.random_range(1..3))
                    .map(|i| AttrValue::Leaf(format!("{}mm", 35 + 15 * i)))
                    .collect();
                cam.push(AttrEntry {
                    name: "lens".into(),
                    values: lenses,
                });
                entries.push(AttrEntry::group("camera", cam));
            }
        }
        KindTag::Drawing => {
            if rng.random_bool(0.5) {
                let n = rng.random_range(1..3);
                entries.push(AttrEntry {
                    name: "material".into(),
                    values: MATERIALS
                        .choose_multiple(rng, n)
                        .map(|m| AttrValue::Leaf(m.to_string()))
                        .collect(),
                });
            }
            if rng.random_bool(0.5) {
                entries.push(AttrEntry::leaf("scale", format!("{}", rng.random_range(1..200) as f64 / 4.0)));
            }
        }
        _ => {}
    }
    AttributeValues {
        entries,
        legacy: Vec::new(),
    }
}

/// A draft that validates against `site`.
pub fn random_draft<R: Rng>(rng: &mut R, site: &RandomSite) -> RecordDraft {
    let kind = random_kind(rng);
    let places: Vec<String> = site.reference.places.iter().map(|p| p.id.clone()).collect();
    let periods: Vec<String> = site.reference.periods.iter().map(|p| p.id.clone()).collect();
    let subjects: Vec<String> = SUBJECT_TERMS.iter().map(|s| s.to_string()).collect();
    RecordDraft {
        kind,
        title: format!("{} {}", kind.tag, rng.random_range(0..10_000)),
        author: AUTHORS.choose(rng).unwrap().to_string(),
        provenance: "Castle archive".into(),
        subject_keywords: pick_distinct(rng, &subjects, 3),
        capture_date: rng
            .random_bool(0.7)
            .then(|| NaiveDate::from_ymd_opt(rng.random_range(1950..2008), rng.random_range(1..13), rng.random_range(1..29)).unwrap()),
        place_refs: pick_distinct(rng, &places, 2),
        period_refs: pick_distinct(rng, &periods, 2),
        coordinates: rng.random_bool(0.5).then(|| Coordinates {
            x: rng.random_range(0..400) as f64 / 4.0,
            y: rng.random_range(0..400) as f64 / 4.0,
            z: rng.random_range(0..40) as f64 / 4.0,
        }),
        content: ContentRef {
            href: format!("remote/{}.bin", rng.random_range(0..100_000)),
            media_format: "image".into(),
            checksum: String::new(),
            byte_size: 0,
        },
        attributes: random_attributes(rng, kind.tag),
    }
}

/// One fixture document with its asset bytes.
#[derive(Debug, Clone)]
pub struct FixtureEntry {
    pub draft: RecordDraft,
    pub file_name: String,
    pub bytes: Vec<u8>,
}

/// The synthetic castle site: three places under a castle root, three
/// historical phases, per-(place, phase) 3D models and vector plans, and
/// photographs.
#[derive(Debug, Clone)]
pub struct CastleSite {
    pub reference: ReferenceData,
    pub schema: MetadataSchema,
    pub entries: Vec<FixtureEntry>,
}

pub const CASTLE_PARTS: [&str; 3] = ["yard", "chapel", "hall"];
pub const CASTLE_PHASES: [(&str, i32); 2] = [("1100", 1100), ("1150", 1150)];

fn model_x3d(place: &str, phase: &str) -> Vec<u8> {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<X3D profile=\"Interchange\" version=\"3.3\">\n  <Scene>\n    <Shape DEF=\"{place}-{phase}\">\n      <Box size=\"4 3 2\"/>\n    </Shape>\n  </Scene>\n</X3D>\n"
    )
    .into_bytes()
}

fn plan_svg(offset: u32, phase: &str) -> Vec<u8> {
    let x = offset * 20;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x} 0 20 15\">\n  <rect height=\"15\" width=\"20\" x=\"{x}\" y=\"0\"/>\n  <path d=\"M{x} 0 L{} 15\" id=\"wall-{phase}\"/>\n</svg>\n",
        x + 20
    )
    .into_bytes()
}

fn checksum(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn entry(
    kind: DocumentKind,
    title: String,
    place: &str,
    period: &str,
    file_name: String,
    format: &str,
    bytes: Vec<u8>,
    subject: &str,
) -> FixtureEntry {
    FixtureEntry {
        draft: RecordDraft {
            kind,
            title,
            author: "Survey team".into(),
            provenance: "Castle conservators".into(),
            subject_keywords: vec![subject.to_string()],
            capture_date: NaiveDate::from_ymd_opt(2006, 6, 1),
            place_refs: vec![place.to_string()],
            period_refs: vec![period.to_string()],
            coordinates: None,
            content: ContentRef {
                href: file_name.clone(),
                media_format: format.into(),
                checksum: checksum(&bytes),
                byte_size: bytes.len() as u64,
            },
            attributes: AttributeValues::default(),
        },
        file_name,
        bytes,
    }
}

pub fn castle_site() -> CastleSite {
    let mut places = vec![Place {
        id: "castle".into(),
        name: "Castle".into(),
        parent_id: None,
        description: "Medieval castle".into(),
        footprint: Some(vec![
            Point2 { x: 0.0, y: 0.0 },
            Point2 { x: 60.0, y: 0.0 },
            Point2 { x: 60.0, y: 15.0 },
            Point2 { x: 0.0, y: 15.0 },
        ]),
    }];
    for (i, part) in CASTLE_PARTS.iter().enumerate() {
        let x0 = 20.0 * i as f64;
        places.push(Place {
            id: part.to_string(),
            name: part[..1].to_uppercase() + &part[1..],
            parent_id: Some("castle".into()),
            description: String::new(),
            footprint: Some(vec![
                Point2 { x: x0, y: 0.0 },
                Point2 { x: x0 + 20.0, y: 0.0 },
                Point2 { x: x0 + 20.0, y: 15.0 },
                Point2 { x: x0, y: 15.0 },
            ]),
        });
    }
    let mut periods: Vec<Period> = CASTLE_PHASES
        .iter()
        .map(|(id, year)| Period {
            id: id.to_string(),
            label: format!("Year {year}"),
            start_year: *year,
            end_year: *year,
            description: String::new(),
        })
        .collect();
    periods.push(Period {
        id: "today".into(),
        label: "Present day".into(),
        start_year: 1950,
        end_year: 2007,
        description: String::new(),
    });
    let reference = ReferenceData {
        periods,
        places,
        vocabularies: vec![
            Vocabulary::new(SUBJECT_FACET, &["chapel", "hall", "yard"]),
            Vocabulary::new("material", MATERIALS),
        ],
    };

    let mut entries = Vec::new();
    for (i, part) in CASTLE_PARTS.iter().enumerate() {
        for (phase, _) in CASTLE_PHASES {
            entries.push(entry(
                DocumentKind::new(KindTag::Model3d),
                format!("{part} model {phase}"),
                part,
                phase,
                format!("{part}-{phase}.x3d"),
                "scene",
                model_x3d(part, phase),
                part,
            ));
            entries.push(entry(
                DocumentKind::new(KindTag::VectorPlan),
                format!("{part} plan {phase}"),
                part,
                phase,
                format!("{part}-{phase}.svg"),
                "vector-plan",
                plan_svg(i as u32, phase),
                part,
            ));
        }
        entries.push(entry(
            DocumentKind::new(KindTag::Photo),
            format!("{part} today"),
            part,
            "today",
            format!("{part}-today.jpg"),
            "image",
            format!("JPEG {part}").into_bytes(),
            part,
        ));
    }
    entries.push(entry(
        DocumentKind::raster_plan(PlanSubkind::Section),
        "chapel section 1150".into(),
        "chapel",
        "1150",
        "chapel-section.png".into(),
        "image",
        b"PNG section".to_vec(),
        "chapel",
    ));
    entries.push(entry(
        DocumentKind::new(KindTag::Text),
        "chapel excavation report".into(),
        "chapel",
        "1100",
        "chapel-report.txt".into(),
        "text",
        b"Excavation report".to_vec(),
        "chapel",
    ));

    CastleSite {
        reference,
        schema: MetadataSchema::empty(1),
        entries,
    }
}
