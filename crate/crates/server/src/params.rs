//! URL encoding of a [`QuerySpec`] for `GET /records`.
//!
//! Parameters: `kind`, `place`, `keyword` (repeatable or comma-separated),
//! `from` and `to` (epoch years, both or neither), `author`, `archived`,
//! `offset`, `limit`.

use sia_core::query::{Page, QuerySpec, DEFAULT_LIMIT};
use sia_core::KindTag;

use crate::error::ApiError;

fn bad(msg: String) -> ApiError {
    ApiError::BadRequest(msg)
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ApiError> {
    v.parse().map_err(|_| bad(format!("'{key}' must be a number, got '{v}'")))
}

pub fn parse_search(raw: &str) -> Result<(QuerySpec, Page), ApiError> {
    let mut spec = QuerySpec::default();
    let mut page = Page {
        offset: 0,
        limit: DEFAULT_LIMIT,
    };
    let (mut from, mut to) = (None, None);
    for (key, value) in form_urlencoded::parse(raw.as_bytes()) {
        let items = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
        match key.as_ref() {
            "kind" => {
                for k in items() {
                    spec.kinds
                        .insert(k.parse::<KindTag>().map_err(|_| bad(format!("unknown kind '{k}'")))?);
                }
            }
            "place" => spec.place_ids.extend(items().map(str::to_string)),
            "keyword" => spec.keywords.extend(items().map(str::to_string)),
            "author" => spec.author = Some(value.to_string()),
            "from" => from = Some(number::<i32>("from", &value)?),
            "to" => to = Some(number::<i32>("to", &value)?),
            "archived" => {
                spec.include_archived = match value.as_ref() {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(bad(format!("'archived' must be true or false, got '{other}'"))),
                }
            }
            "offset" => page.offset = number("offset", &value)?,
            "limit" => page.limit = number("limit", &value)?,
            other => return Err(bad(format!("unknown query parameter '{other}'"))),
        }
    }
    spec.epoch_interval = match (from, to) {
        (None, None) => None,
        (Some(a), Some(b)) => Some((a, b)),
        (Some(a), None) => Some((a, a)),
        (None, Some(b)) => Some((b, b)),
    };
    Ok((spec, page))
}

pub fn encode_search(spec: &QuerySpec, page: Page) -> String {
    let mut s = form_urlencoded::Serializer::new(String::new());
    for k in &spec.kinds {
        s.append_pair("kind", k.as_str());
    }
    for p in &spec.place_ids {
        s.append_pair("place", p);
    }
    for k in &spec.keywords {
        s.append_pair("keyword", k);
    }
    if let Some(a) = &spec.author {
        s.append_pair("author", a);
    }
    if let Some((lo, hi)) = spec.epoch_interval {
        s.append_pair("from", &lo.to_string());
        s.append_pair("to", &hi.to_string());
    }
    if spec.include_archived {
        s.append_pair("archived", "true");
    }
    s.append_pair("offset", &page.offset.to_string());
    s.append_pair("limit", &page.limit.to_string());
    s.finish()
}
