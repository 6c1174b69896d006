//! Human-readable XHTML view of a record: a metadata table plus, for
//! image-bearing kinds, a thumbnail linking to the original asset.

use crate::model::{DocumentRecord, ReferenceData};
use crate::xml::record::format_timestamp;
use crate::xml::XmlWriter;

#[derive(Debug, Clone, Default)]
pub struct HtmlOptions {
    /// Link target for the original asset; defaults to `content.href`.
    pub asset_url: Option<String>,
    /// Stylesheet to reference instead of the built-in one.
    pub stylesheet: Option<String>,
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}th,td{border:1px solid #bbb;padding:.25em .5em;text-align:left;vertical-align:top}img.thumbnail{max-width:320px;max-height:320px}";

pub fn render_html_view(record: &DocumentRecord, reference: &ReferenceData, opts: &HtmlOptions) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("Identifier".into(), record.id.clone()),
        ("Kind".into(), record.kind.tag.as_str().into()),
    ];
    if let Some(sub) = record.kind.plan_subkind {
        rows.push(("Plan type".into(), sub.as_str().into()));
    }
    rows.extend([
        ("Title".into(), record.title.clone()),
        ("Author".into(), record.author.clone()),
        ("Provenance".into(), record.provenance.clone()),
        (
            "Capture date".into(),
            record.capture_date.map(|d| d.to_string()).unwrap_or_default(),
        ),
        ("Subject".into(), record.subject_keywords.join(", ")),
        (
            "Places".into(),
            record
                .place_refs
                .iter()
                .map(|id| reference.place(id).map_or(id.clone(), |p| format!("{} ({id})", p.name)))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        (
            "Periods".into(),
            record
                .period_refs
                .iter()
                .map(|id| {
                    reference.period(id).map_or(id.clone(), |p| {
                        format!("{} ({}–{})", p.label, p.start_year, p.end_year)
                    })
                })
                .collect::<Vec<_>>()
                .join(", "),
        ),
    ]);
    if let Some(c) = record.coordinates {
        rows.push(("Coordinates".into(), format!("{} {} {}", c.x, c.y, c.z)));
    }
    rows.extend([
        ("Asset".into(), record.content.href.clone()),
        ("Format".into(), record.content.media_format.clone()),
        ("Checksum".into(), record.content.checksum.clone()),
        ("Size".into(), format!("{} bytes", record.content.byte_size)),
    ]);
    for (path, value) in record.attributes.leaf_pairs(record.kind.tag) {
        let shown = path.split_once('/').map_or(path.as_str(), |(_, rest)| rest).to_string();
        rows.push((shown, value));
    }
    for l in &record.attributes.legacy {
        rows.push((format!("{} (legacy, v{})", l.path, l.from_version), l.value.clone()));
    }
    rows.extend([
        ("Schema version".into(), record.schema_version.to_string()),
        ("Created".into(), format_timestamp(&record.audit.created)),
        ("Updated".into(), format_timestamp(&record.audit.updated)),
    ]);
    if let Some(a) = record.audit.archived {
        rows.push(("Archived".into(), format_timestamp(&a)));
    }

    let mut w = XmlWriter::new();
    w.raw_lines("<!DOCTYPE html>");
    w.open(
        "html",
        &[("xmlns", "http://www.w3.org/1999/xhtml".into()), ("lang", "en".into())],
    );
    w.open("head", &[]);
    w.empty("meta", &[("charset", "utf-8".into())]);
    w.leaf("title", &[], &record.title);
    match &opts.stylesheet {
        Some(href) => w.empty("link", &[("rel", "stylesheet".into()), ("href", href.clone())]),
        None => w.leaf("style", &[], STYLE),
    }
    w.close("head");
    w.open("body", &[("data-record-id", record.id.clone())]);
    w.leaf("h1", &[], &record.title);
    if record.kind.tag.is_image_bearing() {
        let url = opts.asset_url.clone().unwrap_or_else(|| record.content.href.clone());
        w.open("p", &[]);
        w.open("a", &[("class", "original".into()), ("href", url.clone())]);
        w.empty(
            "img",
            &[
                ("class", "thumbnail".into()),
                ("src", url),
                ("alt", record.title.clone()),
            ],
        );
        w.close("a");
        w.close("p");
    }
    w.open("table", &[("class", "metadata".into())]);
    for (k, v) in &rows {
        w.open("tr", &[]);
        w.leaf("th", &[], k);
        w.leaf("td", &[], v);
        w.close("tr");
    }
    w.close("table");
    w.close("body");
    w.close("html");
    w.finish()
}
