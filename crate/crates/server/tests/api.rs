#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::collections::BTreeSet;

use axum::http::{Method, StatusCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sia_core::fixture::random_draft;
use sia_core::query::{Page, ResultPage};
use sia_core::DocumentRecord;
use sia_server::params::encode_search;
use sia_server::{SVG_TYPE, WARNINGS_HEADER, X3D_TYPE};

use common::*;
use support::*;

fn castle_app(dir: &std::path::Path) -> TestApp {
    TestApp::new(castle_store(dir))
}

fn random_app(dir: &std::path::Path, seed: u64, n: usize) -> (TestApp, sia_core::fixture::RandomSite) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (store, site) = random_store(dir, &mut rng, 8, 4);
    ingest_random(&store, &site, &mut rng, n);
    (TestApp::new(store), site)
}

#[tokio::test]
async fn ingest_then_read_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (app, site) = random_app(dir.path(), 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let draft = random_draft(&mut rng, &site);
        let r = app
            .call(Method::POST, "/records", Some(&app.expert), Some(&serde_json::to_value(&draft).unwrap()))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        let created: DocumentRecord = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(r.headers["location"], format!("/records/{}", created.id).as_str());
        let got = app.get(&format!("/records/{}", created.id)).await;
        let back: DocumentRecord = serde_json::from_slice(&got.body).unwrap();
        assert_eq!(back, *app.state.store.read(&created.id).unwrap());

        let xml = app.get(&format!("/records/{}/xml", created.id)).await;
        assert!(xml.headers["content-type"].to_str().unwrap().starts_with("application/xml"));
        assert_eq!(xml.text(), app.state.store.export_xml(&created.id).unwrap());
    }
}

#[tokio::test]
async fn anonymous_and_visitor_writes_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let app = castle_app(dir.path());
    let id = app.state.store.snapshot().records.keys().next().unwrap().clone();
    let before = app.state.store.rebuild_index().unwrap();
    let plan = serde_json::to_value(app.state.store.propose_schema(&[sia_core::evolution::SchemaChange::AddNode {
        path: "photo/lens".into(),
        node: sia_core::AttributeNode::leaf("lens", sia_core::ValueType::Text),
        default: None,
    }]).unwrap())
    .unwrap();
    for (method, uri, body) in mutating_requests(&id, &plan) {
        let r = app.call(method.clone(), &uri, None, body.as_ref()).await;
        assert_eq!(r.status, StatusCode::UNAUTHORIZED, "{method} {uri}");
        assert_eq!(r.json()["error"], "unauthorized");
        let r = app.call(method.clone(), &uri, Some("not-a-token"), body.as_ref()).await;
        assert_eq!(r.status, StatusCode::UNAUTHORIZED, "{method} {uri}");
        let r = app.call(method.clone(), &uri, Some(&app.visitor), body.as_ref()).await;
        assert_eq!(r.status, StatusCode::FORBIDDEN, "{method} {uri}");
    }
    assert_eq!(app.state.store.rebuild_index().unwrap(), before);
    assert_eq!(app.state.store.snapshot().schema.version, 1);
}

#[tokio::test]
async fn random_op_sequences_only_mutate_with_expert_token() {
    let dir = tempfile::tempdir().unwrap();
    let (app, site) = random_app(dir.path(), 3, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..60 {
        let ids: Vec<String> = app.state.store.snapshot().records.keys().cloned().collect();
        let id = &ids[rng.random_range(0..ids.len())];
        let (method, uri, body) = match rng.random_range(0..3) {
            0 => (Method::POST, "/records".to_string(), Some(serde_json::to_value(random_draft(&mut rng, &site)).unwrap())),
            1 => (Method::PATCH, format!("/records/{id}"), Some(json!({"title": format!("t{}", rng.random_range(0..1000))}))),
            _ => (Method::POST, format!("/records/{id}/archive"), None),
        };
        let token = match rng.random_range(0..3) {
            0 => None,
            1 => Some(app.visitor.clone()),
            _ => Some(app.expert.clone()),
        };
        let before = app.state.store.rebuild_index().unwrap();
        let r = app.call(method, &uri, token.as_deref(), body.as_ref()).await;
        let after = app.state.store.rebuild_index().unwrap();
        if token.as_deref() == Some(app.expert.as_str()) {
            assert!(r.status.is_success(), "{}", r.text());
        } else {
            assert!(matches!(r.status, StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN));
            assert_eq!(before, after);
        }
    }
}

#[tokio::test]
async fn http_search_equals_store_search() {
    let dir = tempfile::tempdir().unwrap();
    let (app, site) = random_app(dir.path(), 5, 120);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..60 {
        let spec = random_spec(&mut rng, &site.reference);
        let page = Page::new(rng.random_range(0..10), rng.random_range(1..40));
        let r = app.get(&format!("/records?{}", encode_search(&spec, page))).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        let got: ResultPage = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(got, app.state.store.search(&spec, page).unwrap());
    }
    let r = app.get("/records?place=atlantis").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "invalid-spec");
    assert_eq!(app.get("/records?colour=red").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn get_endpoints_are_safe_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let app = castle_app(dir.path());
    let before = app.state.store.rebuild_index().unwrap();
    let snap = app.state.store.snapshot();
    let id = snap.records.values().find(|r| r.title == "yard today").unwrap().id.clone();
    let uris = [
        "/".to_string(),
        "/help".into(),
        "/facets".into(),
        "/records".into(),
        "/records?kind=photo&from=1950&to=2000".into(),
        format!("/records/{id}"),
        format!("/records/{id}/xml"),
        format!("/records/{id}/view"),
        format!("/records/{id}/related"),
        format!("/media/{id}"),
        "/browse/history/1100".into(),
        "/browse/places/castle".into(),
        "/periods".into(),
        "/places".into(),
    ];
    for uri in &uris {
        let a = app.get(uri).await;
        let b = app.get(uri).await;
        assert_eq!(a.status, StatusCode::OK, "{uri}: {}", a.text());
        assert_eq!(a.body, b.body, "{uri}");
    }
    assert_eq!(app.state.store.rebuild_index().unwrap(), before);
}

#[tokio::test]
async fn media_and_html_view() {
    let dir = tempfile::tempdir().unwrap();
    let app = castle_app(dir.path());
    let snap = app.state.store.snapshot();
    let photo = snap.records.values().find(|r| r.title == "hall today").unwrap();
    let m = app.get(&format!("/media/{}", photo.id)).await;
    assert_eq!(m.headers["content-type"], "image/jpeg");
    assert_eq!(&m.body[..], b"JPEG hall");

    let v = app.get(&format!("/records/{}/view", photo.id)).await;
    assert!(v.headers["content-type"].to_str().unwrap().starts_with("text/html"));
    assert!(v.text().contains(&format!("href=\"/media/{}\"", photo.id)));

    assert_eq!(app.get("/media/nothing").await.status, StatusCode::NOT_FOUND);
    assert_eq!(app.get("/records/nothing").await.json()["error"], "not-found");
}

#[tokio::test]
async fn castle_model_composition() {
    let dir = tempfile::tempdir().unwrap();
    let app = castle_app(dir.path());
    let body = json!({"placeIds": ["yard", "chapel", "hall"], "periodIds": ["1100", "1150"]});
    let r = app.call(Method::POST, "/compose/model", None, Some(&body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.headers["content-type"], X3D_TYPE);
    assert_eq!(r.headers[WARNINGS_HEADER], "[]");
    let text = r.text();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let colours: BTreeSet<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("Material"))
        .map(|n| n.attribute("diffuseColor").unwrap())
        .collect();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("Group")).count(), 6);
    assert_eq!(colours.len(), 2);

    let none = json!({"placeIds": ["castle"], "periodIds": ["today"]});
    let r = app.call(Method::POST, "/compose/model", None, Some(&none)).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["warnings"].as_array().unwrap().len(), 1);

    let bad = json!({"placeIds": [], "periodIds": ["1100"]});
    let r = app.call(Method::POST, "/compose/model", None, Some(&bad)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = app.call(Method::POST, "/compose/model", None, Some(&json!({"placeIds": 3}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "bad-request");
}

#[tokio::test]
async fn plan_and_montage_compositions() {
    let dir = tempfile::tempdir().unwrap();
    let app = castle_app(dir.path());
    let body = json!({"placeIds": ["yard", "hall"], "periodIds": ["1150"]});
    let r = app.call(Method::POST, "/compose/plan", None, Some(&body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.headers["content-type"], SVG_TYPE);
    let text = r.text();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("layer")).count(), 2);

    let snap = app.state.store.snapshot();
    let photo = |t: &str| snap.records.values().find(|r| r.title == t).unwrap().id.clone();
    let body = json!({"baseId": photo("yard today"), "overlays": [{"id": photo("hall today"), "opacity": 0.4}]});
    let r = app.call(Method::POST, "/compose/montage", None, Some(&body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let text = r.text();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let hrefs: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("image"))
        .filter_map(|n| n.attribute("href"))
        .collect();
    assert_eq!(hrefs, [format!("/media/{}", photo("yard today")), format!("/media/{}", photo("hall today"))]);
    for h in hrefs {
        assert_eq!(app.get(h).await.status, StatusCode::OK);
    }
}

#[tokio::test]
async fn expert_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = random_app(dir.path(), 7, 30);
    let t = Some(app.expert.as_str());
    let id = app.state.store.snapshot().records.keys().next().unwrap().clone();

    let r = app.call(Method::PATCH, &format!("/records/{id}"), t, Some(&json!({"placeRefs": ["atlantis"]}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let body = r.json();
    assert_eq!(body["error"], "validation-failed");
    assert_eq!(body["violations"][0]["rule"], "unresolved-place");

    let r = app.call(Method::POST, &format!("/records/{id}/archive"), t, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.json()["audit"]["archived"].is_string());

    let r = app.call(Method::POST, "/vocabularies/subject/terms", t, Some(&json!({"term": "keep"}))).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert!(app.get("/facets").await.json()["subject"].as_array().unwrap().contains(&json!("keep")));

    let delta = json!({"delta": [{"op": "renameNode", "path": "photo/film-type", "newName": "film"}]});
    let r = app.call(Method::POST, "/schema", t, Some(&delta)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let plan: Value = r.json();
    assert_eq!(plan["toVersion"], 2);
    let r = app.call(Method::POST, "/schema/migrations", t, Some(&plan)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let r = app.call(Method::POST, "/schema/migrations", t, Some(&plan)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "stale-plan");
    let s = app.call(Method::GET, "/schema", t, None).await.json();
    assert_eq!(s["version"], 2);
    assert_eq!(s["versions"], json!([1, 2]));

    let r = app.call(Method::POST, "/index/rebuild", t, None).await;
    assert_eq!(r.json()["records"], 30);

    let r = app.call(Method::POST, "/auth/logout", t, None).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let r = app.call(Method::POST, "/index/rebuild", t, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn login_issues_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = random_app(dir.path(), 8, 1);
    let r = app
        .call(Method::POST, "/auth/login", None, Some(&json!({"account": "expert", "password": "trowel"})))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let s = r.json();
    assert_eq!(s["role"], "expert");
    assert_eq!(s["token"].as_str().unwrap().len(), 64);
    let r = app
        .call(Method::POST, "/auth/login", None, Some(&json!({"account": "expert", "password": "spade"})))
        .await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
}
