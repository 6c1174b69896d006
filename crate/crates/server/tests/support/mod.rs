#![allow(dead_code)]

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use sia_core::Store;
use sia_server::auth::{hash_password, Account, Auth};
use sia_server::{router, AppState};

pub struct TestApp {
    pub state: AppState,
    pub router: Router,
    pub expert: String,
    pub visitor: String,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub fn accounts() -> Auth {
    Auth::new(vec![
        Account {
            id: "expert".into(),
            role: sia_core::Role::Expert,
            password_sha256: hash_password("trowel"),
        },
        Account {
            id: "guest".into(),
            role: sia_core::Role::Visitor,
            password_sha256: hash_password("guest"),
        },
    ])
}

impl TestApp {
    pub fn new(store: Store) -> Self {
        let state = AppState::new(store, accounts());
        let expert = state.auth.login("expert", "trowel").unwrap().token;
        let visitor = state.auth.login("guest", "guest").unwrap().token;
        TestApp {
            router: router(state.clone()),
            state,
            expert,
            visitor,
        }
    }

    pub async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<&Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, headers, body }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, None, None).await
    }
}

/// Every mutating route, with a plausible body.
pub fn mutating_requests(record_id: &str, plan: &Value) -> Vec<(Method, String, Option<Value>)> {
    let draft = serde_json::json!({
        "kind": {"tag": "text"},
        "title": "Visitor note",
        "author": "Anon",
        "provenance": "web",
        "subjectKeywords": [],
        "placeRefs": [],
        "periodRefs": [],
        "content": {"href": "x.txt", "mediaFormat": "text", "checksum": "", "byteSize": 0},
        "attributes": {"entries": [], "legacy": []}
    });
    vec![
        (Method::POST, "/records".into(), Some(draft)),
        (Method::PATCH, format!("/records/{record_id}"), Some(serde_json::json!({"title": "defaced"}))),
        (Method::POST, format!("/records/{record_id}/archive"), None),
        (
            Method::POST,
            "/periods".into(),
            Some(serde_json::json!({"id": "1200", "label": "1200", "startYear": 1200, "endYear": 1200, "description": ""})),
        ),
        (
            Method::POST,
            "/places".into(),
            Some(serde_json::json!({"id": "keep", "name": "Keep", "parentId": "castle", "description": ""})),
        ),
        (Method::POST, "/vocabularies/subject/terms".into(), Some(serde_json::json!({"term": "keep"}))),
        (Method::GET, "/schema".into(), None),
        (
            Method::POST,
            "/schema".into(),
            Some(serde_json::json!({"delta": [{"op": "removeNode", "path": "photo/emulsion"}]})),
        ),
        (Method::POST, "/schema/migrations".into(), Some(plan.clone())),
        (Method::POST, "/index/rebuild".into(), None),
    ]
}
