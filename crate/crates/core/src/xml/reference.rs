//! Reference data document (`schema/reference.xml`): periods, places and
//! vocabularies. The same element shapes appear in ingest manifests.

use roxmltree::Node;

use super::{attr, elements, err_at, expect_name, parse_attr, text_of, XmlWriter};
use crate::error::Result;
use crate::model::{Period, Place, Point2, ReferenceData, Vocabulary};

pub fn export_reference(data: &ReferenceData) -> String {
    let mut w = XmlWriter::with_declaration();
    w.container("reference", &[], |w| {
        w.container("periods", &[], |w| {
            for p in &data.periods {
                write_period(w, p);
            }
        });
        w.container("places", &[], |w| {
            for p in &data.places {
                write_place(w, p);
            }
        });
        w.container("vocabularies", &[], |w| {
            for v in &data.vocabularies {
                write_vocabulary(w, v);
            }
        });
    });
    w.finish()
}

pub(crate) fn write_period(w: &mut XmlWriter, p: &Period) {
    w.leaf(
        "period",
        &[
            ("id", p.id.clone()),
            ("label", p.label.clone()),
            ("start", p.start_year.to_string()),
            ("end", p.end_year.to_string()),
        ],
        &p.description,
    );
}

pub(crate) fn write_place(w: &mut XmlWriter, p: &Place) {
    let mut attrs = vec![("id", p.id.clone()), ("name", p.name.clone())];
    if let Some(parent) = &p.parent_id {
        attrs.push(("parent", parent.clone()));
    }
    w.container("place", &attrs, |w| {
        if !p.description.is_empty() {
            w.leaf("description", &[], &p.description);
        }
        if let Some(fp) = &p.footprint {
            w.container("footprint", &[], |w| {
                for v in fp {
                    w.empty("vertex", &[("x", v.x.to_string()), ("y", v.y.to_string())]);
                }
            });
        }
    });
}

pub(crate) fn write_vocabulary(w: &mut XmlWriter, v: &Vocabulary) {
    w.container("vocabulary", &[("facet", v.facet_name.clone())], |w| {
        for t in &v.terms {
            w.leaf("term", &[], t);
        }
    });
}

pub fn parse_reference(bytes: &[u8]) -> Result<ReferenceData> {
    let text = super::as_utf8(bytes)?;
    let doc = super::parse_document(text)?;
    let root = doc.root_element();
    expect_name(root, "reference")?;
    let mut data = ReferenceData::default();
    for section in elements(root)? {
        match section.tag_name().name() {
            "periods" => {
                for n in elements(section)? {
                    data.periods.push(parse_period(n)?);
                }
            }
            "places" => {
                for n in elements(section)? {
                    data.places.push(parse_place(n)?);
                }
            }
            "vocabularies" => {
                for n in elements(section)? {
                    data.vocabularies.push(parse_vocabulary(n)?);
                }
            }
            other => return Err(err_at(section, format!("unexpected <{other}>"))),
        }
    }
    Ok(data)
}

pub(crate) fn parse_period(n: Node<'_, '_>) -> Result<Period> {
    expect_name(n, "period")?;
    Ok(Period {
        id: attr(n, "id")?.to_string(),
        label: attr(n, "label")?.to_string(),
        start_year: parse_attr(n, "start")?,
        end_year: parse_attr(n, "end")?,
        description: text_of(n)?,
    })
}

pub(crate) fn parse_place(n: Node<'_, '_>) -> Result<Place> {
    expect_name(n, "place")?;
    let mut place = Place {
        id: attr(n, "id")?.to_string(),
        name: attr(n, "name")?.to_string(),
        parent_id: n.attribute("parent").map(str::to_string),
        description: String::new(),
        footprint: None,
    };
    for child in elements(n)? {
        match child.tag_name().name() {
            "description" => place.description = text_of(child)?,
            "footprint" => {
                let mut vertices = Vec::new();
                for v in elements(child)? {
                    expect_name(v, "vertex")?;
                    vertices.push(Point2 {
                        x: parse_attr(v, "x")?,
                        y: parse_attr(v, "y")?,
                    });
                }
                place.footprint = Some(vertices);
            }
            other => return Err(err_at(child, format!("unexpected <{other}> in place"))),
        }
    }
    Ok(place)
}

pub(crate) fn parse_vocabulary(n: Node<'_, '_>) -> Result<Vocabulary> {
    expect_name(n, "vocabulary")?;
    let mut terms = Vec::new();
    for t in elements(n)? {
        expect_name(t, "term")?;
        terms.push(text_of(t)?);
    }
    Ok(Vocabulary {
        facet_name: attr(n, "facet")?.to_string(),
        terms,
    })
}
