//! Canonical XML documents: records, schemas, reference data and manifests.
//!
//! Every document this crate writes goes through [`XmlWriter`]: UTF-8, LF
//! line endings, two-space indentation, attributes in alphabetical order,
//! empty elements self-closed, trailing newline.

pub mod manifest;
pub mod record;
pub mod reference;
pub mod schema;

use roxmltree::{Document, Node};

use crate::error::{Result, SiaError};

pub(crate) const DECLARATION: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

pub fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

/// Indenting writer producing the canonical layout.
#[derive(Debug, Default)]
pub struct XmlWriter {
    buf: String,
    depth: usize,
}

impl XmlWriter {
    pub fn new() -> Self {
        XmlWriter::default()
    }

    pub fn with_declaration() -> Self {
        XmlWriter {
            buf: DECLARATION.to_string(),
            depth: 0,
        }
    }

    fn start_tag(&mut self, name: &str, attrs: &[(&str, String)]) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push('<');
        self.buf.push_str(name);
        let mut sorted: Vec<&(&str, String)> = attrs.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for (k, v) in sorted {
            self.buf.push(' ');
            self.buf.push_str(k);
            self.buf.push_str("=\"");
            self.buf.push_str(&escape_attr(v));
            self.buf.push('"');
        }
    }

    pub fn open(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.start_tag(name, attrs);
        self.buf.push_str(">\n");
        self.depth += 1;
    }

    pub fn close(&mut self, name: &str) {
        self.depth -= 1;
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str("</");
        self.buf.push_str(name);
        self.buf.push_str(">\n");
    }

    pub fn empty(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.start_tag(name, attrs);
        self.buf.push_str("/>\n");
    }

    /// Element holding only text; self-closed when the text is empty.
    pub fn leaf(&mut self, name: &str, attrs: &[(&str, String)], text: &str) {
        if text.is_empty() {
            return self.empty(name, attrs);
        }
        self.start_tag(name, attrs);
        self.buf.push('>');
        self.buf.push_str(&escape_text(text));
        self.buf.push_str("</");
        self.buf.push_str(name);
        self.buf.push_str(">\n");
    }

    /// Writes pre-serialized markup lines at the current indentation.
    pub fn raw_lines(&mut self, markup: &str) {
        for line in markup.lines() {
            for _ in 0..self.depth {
                self.buf.push_str("  ");
            }
            self.buf.push_str(line);
            self.buf.push('\n');
        }
    }

    /// Writes one pre-serialized element verbatim. Only the first line is
    /// indented since inner line breaks may be significant text.
    pub fn raw_fragment(&mut self, markup: &str) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(markup);
        self.buf.push('\n');
    }

    /// Container element whose children are written by `body`; self-closed
    /// when `body` writes nothing.
    pub fn container(&mut self, name: &str, attrs: &[(&str, String)], body: impl FnOnce(&mut XmlWriter)) {
        let mark = self.buf.len();
        self.open(name, attrs);
        let inner = self.buf.len();
        body(self);
        if self.buf.len() == inner {
            self.buf.truncate(mark);
            self.depth -= 1;
            self.empty(name, attrs);
        } else {
            self.close(name);
        }
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub(crate) fn parse_document(text: &str) -> Result<Document<'_>> {
    let opts = roxmltree::ParsingOptions {
        allow_dtd: false,
        ..Default::default()
    };
    Document::parse_with_options(text, opts).map_err(|e| match e {
        // reported without a position; point at the end of the input
        roxmltree::Error::UnexpectedEndOfStream => {
            let line = text.matches('\n').count() as u32 + 1;
            let column = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32 + 1;
            SiaError::Parse {
                line,
                column,
                message: e.to_string(),
            }
        }
        e => e.into(),
    })
}

pub(crate) fn as_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| SiaError::Parse {
        line: 1,
        column: 1,
        message: format!("document is not UTF-8: {e}"),
    })
}

pub(crate) fn err_at(node: Node<'_, '_>, message: impl Into<String>) -> SiaError {
    SiaError::parse_at(node.document(), node.range().start, message)
}

/// Element children of a container; non-whitespace text is an error.
pub(crate) fn elements<'a, 'i>(node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(err_at(
                child,
                format!("unexpected text inside <{}>", node.tag_name().name()),
            ));
        }
    }
    Ok(out)
}

/// Text content of a leaf element; nested elements are an error.
pub(crate) fn text_of(node: Node<'_, '_>) -> Result<String> {
    let mut out = String::new();
    for child in node.children() {
        if child.is_element() {
            return Err(err_at(
                child,
                format!("<{}> may only contain text", node.tag_name().name()),
            ));
        }
        if let Some(t) = child.text() {
            out.push_str(t);
        }
    }
    Ok(out)
}

pub(crate) fn attr<'a>(node: Node<'a, '_>, name: &str) -> Result<&'a str> {
    node.attribute(name).ok_or_else(|| {
        err_at(
            node,
            format!("<{}> is missing attribute '{name}'", node.tag_name().name()),
        )
    })
}

pub(crate) fn parse_attr<T: std::str::FromStr>(node: Node<'_, '_>, name: &str) -> Result<T> {
    let raw = attr(node, name)?;
    raw.parse().map_err(|_| {
        err_at(
            node,
            format!("attribute '{name}' has invalid value '{raw}'"),
        )
    })
}

pub(crate) fn expect_name(node: Node<'_, '_>, name: &str) -> Result<()> {
    if node.tag_name().name() == name {
        Ok(())
    } else {
        Err(err_at(
            node,
            format!("expected <{name}>, found <{}>", node.tag_name().name()),
        ))
    }
}

/// Parses `s` as a strict, namespace-aware XML document and reports whether
/// it is well-formed.
pub fn is_well_formed(s: &str) -> bool {
    Document::parse(s).is_ok()
}
