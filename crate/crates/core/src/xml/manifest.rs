//! Batch ingest manifests.
//!
//! ```xml
//! <manifest>
//!   <period id="1100" label="Romanesque" start="1100" end="1149"/>
//!   <place id="chapel" name="Chapel" parent="castle"/>
//!   <vocabulary facet="subject"><term>facade</term></vocabulary>
//!   <entry kind="photo">
//!     <!-- title ... attributes, as in a record file -->
//!   </entry>
//! </manifest>
//! ```
//!
//! Reference declarations come first. Entry content hrefs are relative to
//! the manifest's directory.

use super::record::{kind_attrs, parse_body, parse_kind, write_body, Cursor};
use super::reference::{parse_period, parse_place, parse_vocabulary, write_period, write_place, write_vocabulary};
use super::{elements, err_at, expect_name, XmlWriter};
use crate::error::Result;
use crate::model::{RecordDraft, ReferenceData};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    /// Entities the entries rely on, merged into the store before ingest.
    pub reference: ReferenceData,
    pub entries: Vec<RecordDraft>,
}

pub fn export_manifest(m: &Manifest) -> String {
    let mut w = XmlWriter::with_declaration();
    w.container("manifest", &[], |w| {
        for p in &m.reference.periods {
            write_period(w, p);
        }
        for p in &m.reference.places {
            write_place(w, p);
        }
        for v in &m.reference.vocabularies {
            write_vocabulary(w, v);
        }
        for d in &m.entries {
            let mut attrs = Vec::new();
            kind_attrs(&d.kind, &mut attrs);
            w.open("entry", &attrs);
            write_body(w, d);
            w.close("entry");
        }
    });
    w.finish()
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let text = super::as_utf8(bytes)?;
    let doc = super::parse_document(text)?;
    let root = doc.root_element();
    expect_name(root, "manifest")?;
    let mut m = Manifest::default();
    for n in elements(root)? {
        let name = n.tag_name().name();
        if name != "entry" && !m.entries.is_empty() {
            return Err(err_at(n, format!("<{name}> must come before the first <entry>")));
        }
        match name {
            "period" => m.reference.periods.push(parse_period(n)?),
            "place" => m.reference.places.push(parse_place(n)?),
            "vocabulary" => m.reference.vocabularies.push(parse_vocabulary(n)?),
            "entry" => {
                let kind = parse_kind(n)?;
                let children = elements(n)?;
                let mut cursor = Cursor::new(n, &children);
                let draft = parse_body(&mut cursor, kind)?;
                cursor.finish()?;
                m.entries.push(draft);
            }
            other => return Err(err_at(n, format!("unexpected <{other}>"))),
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::castle_site;

    #[test]
    fn manifest_round_trip() {
        let site = castle_site();
        let m = Manifest {
            reference: site.reference.clone(),
            entries: site.entries.iter().map(|e| e.draft.clone()).collect(),
        };
        let text = export_manifest(&m);
        let back = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(export_manifest(&back), text);
    }

    #[test]
    fn declarations_after_entries_are_rejected() {
        let text = r#"<manifest>
  <entry kind="text"><title>t</title><author/><provenance/><subject/><places/><periods/><content href="a.txt" format="text/plain"/><attributes/></entry>
  <period id="p" label="P" start="1" end="2"/>
</manifest>"#;
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("before the first"), "{err}");
    }
}
