mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sia_core::fixture::{self, random_draft};
use sia_core::html::HtmlOptions;
use sia_core::index::IndexSnapshot;
use sia_core::query::{Page, QuerySpec};
use sia_core::validate::Rule;
use sia_core::xml::record::parse_record;
use sia_core::{FaultPoint, KindTag, RecordPatch, Role, SiaError, Store};

use common::*;

#[test]
fn ingest_then_read_returns_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (store, site) = random_store(dir.path(), &mut rng, 8, 4);
    let draft = random_draft(&mut rng, &site);
    let r = store.ingest(draft.clone(), Role::Expert).unwrap();
    assert_eq!(*store.read(&r.id).unwrap(), *r);
    assert_eq!(r.schema_version, 1);
    assert_eq!(r.audit.created, r.audit.updated);
    assert_eq!(r.audit.created.timestamp_subsec_nanos() % 1_000_000, 0);

    // same title gets a suffixed id
    let again = store.ingest(draft, Role::Expert).unwrap();
    assert_eq!(again.id, format!("{}-2", r.id));

    assert!(matches!(store.read("missing"), Err(SiaError::NotFound(_))));
}

#[test]
fn invalid_draft_leaves_store_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (store, site) = random_store(dir.path(), &mut rng, 8, 4);
    ingest_random(&store, &site, &mut rng, 5);
    let before = store.snapshot();
    let mut draft = random_draft(&mut rng, &site);
    draft.place_refs = vec!["atlantis".into()];
    match store.ingest(draft, Role::Expert) {
        Err(SiaError::ValidationFailed(v)) => assert_eq!(v[0].rule, Rule::UnresolvedPlace),
        other => panic!("{other:?}"),
    }
    assert_eq!(store.snapshot().index, before.index);
    assert_eq!(std::fs::read_dir(store.layout().records_dir()).unwrap().count(), 5);
}

#[test]
fn visitors_cannot_write() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let id = ingest_random(&store, &site, &mut rng, 1).remove(0);
    let d = random_draft(&mut rng, &site);
    assert!(matches!(store.ingest(d, Role::Visitor), Err(SiaError::PermissionDenied)));
    assert!(matches!(store.update(&id, RecordPatch::default(), Role::Visitor), Err(SiaError::PermissionDenied)));
    assert!(matches!(store.archive(&id, Role::Visitor), Err(SiaError::PermissionDenied)));
    assert!(matches!(store.add_vocabulary_term("subject", "x", Role::Visitor), Err(SiaError::PermissionDenied)));
}

#[test]
fn update_refreshes_timestamp_and_keeps_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let id = ingest_random(&store, &site, &mut rng, 1).remove(0);
    std::thread::sleep(std::time::Duration::from_millis(3));
    let patch = RecordPatch {
        title: Some("South elevation".into()),
        ..Default::default()
    };
    let r = store.update(&id, patch, Role::Expert).unwrap();
    assert_eq!(r.id, id);
    assert_eq!(r.title, "South elevation");
    assert!(r.audit.updated > r.audit.created);

    let bad = RecordPatch {
        subject_keywords: Some(vec!["unicorn".into()]),
        ..Default::default()
    };
    assert!(matches!(store.update(&id, bad, Role::Expert), Err(SiaError::ValidationFailed(_))));
    assert_eq!(store.read(&id).unwrap().title, "South elevation");

    let clear = serde_json::from_str::<RecordPatch>(r#"{"captureDate": null}"#).unwrap();
    assert!(store.update(&id, clear, Role::Expert).unwrap().capture_date.is_none());
}

#[test]
fn archive_hides_from_default_queries() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let ids = ingest_random(&store, &site, &mut rng, 10);
    store.archive(&ids[3], Role::Expert).unwrap();
    let all = store.search(&QuerySpec::default(), Page::default()).unwrap();
    assert_eq!(all.total, 9);
    assert!(!all.ids().contains(&ids[3].as_str()));
    let with = QuerySpec {
        include_archived: true,
        ..Default::default()
    };
    assert_eq!(store.search(&with, Page::default()).unwrap().total, 10);
    assert!(store.layout().record_file(&ids[3]).exists());
}

#[test]
fn random_operations_keep_index_equal_to_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (store, site) = random_store(dir.path(), &mut rng, 10, 5);
    let mut ids = ingest_random(&store, &site, &mut rng, 20);
    for _ in 0..100 {
        match rng.random_range(0..3) {
            0 => ids.extend(ingest_random(&store, &site, &mut rng, 1)),
            1 => {
                let id = &ids[rng.random_range(0..ids.len())];
                let d = random_draft(&mut rng, &site);
                let patch = RecordPatch {
                    place_refs: Some(d.place_refs),
                    subject_keywords: Some(d.subject_keywords),
                    ..Default::default()
                };
                store.update(id, patch, Role::Expert).unwrap();
            }
            _ => {
                store.archive(&ids[rng.random_range(0..ids.len())], Role::Expert).unwrap();
            }
        }
    }
    let live = (*store.snapshot().index).clone();
    assert_eq!(store.rebuild_index().unwrap(), live);
    drop(store);
    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(*reopened.snapshot().index, live);
}

#[test]
fn empty_store_rebuilds_to_empty_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (store, _) = random_store(dir.path(), &mut rng, 2, 2);
    assert_eq!(store.rebuild_index().unwrap(), IndexSnapshot::default());
}

#[test]
fn corrupt_file_aborts_rebuild_and_keeps_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let ids = ingest_random(&store, &site, &mut rng, 4);
    let before = store.snapshot().index.clone();
    let persisted = std::fs::read(store.layout().index_file()).unwrap();
    let victim = store.layout().record_file(&ids[1]);
    std::fs::write(&victim, "<record id=").unwrap();
    match store.rebuild_index() {
        Err(SiaError::CorruptRecordFile { path, .. }) => assert_eq!(path, victim),
        other => panic!("{other:?}"),
    }
    assert_eq!(store.snapshot().index, before);
    assert_eq!(std::fs::read(store.layout().index_file()).unwrap(), persisted);
    drop(store);
    assert!(matches!(Store::open(dir.path()), Err(SiaError::CorruptRecordFile { .. })));
}

#[test]
fn stale_persisted_index_is_rebuilt_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    ingest_random(&store, &site, &mut rng, 6);
    let expected = (*store.snapshot().index).clone();
    let index_file = store.layout().index_file();
    drop(store);
    std::fs::write(&index_file, "{\"format\":1,\"index\":{}}").unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(*store.snapshot().index, expected);
    assert!(std::fs::read_to_string(&index_file).unwrap().contains("rows"));
}

#[test]
fn second_writer_is_locked_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    ingest_random(&store, &site, &mut rng, 2);
    assert!(matches!(Store::open(dir.path()), Err(SiaError::Locked(_))));
    let ro = Store::open_read_only(dir.path()).unwrap();
    assert_eq!(ro.snapshot().index, store.snapshot().index);
    assert!(matches!(
        ro.ingest(random_draft(&mut rng, &site), Role::Expert),
        Err(SiaError::Storage(_))
    ));
    drop(store);
    Store::open(dir.path()).unwrap();
}

#[test]
fn import_checks_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let id = ingest_random(&store, &site, &mut rng, 1).remove(0);
    let xml = store.export_xml(&id).unwrap();
    assert_eq!(store.import_xml(xml.as_bytes()).unwrap(), *store.read(&id).unwrap());
    let future = xml.replace("schemaVersion=\"1\"", "schemaVersion=\"99\"");
    assert!(matches!(store.import_xml(future.as_bytes()), Err(SiaError::SchemaVersionUnknown(99))));
    assert!(matches!(store.import_xml(&xml.as_bytes()[..40]), Err(SiaError::Parse { .. })));
}

#[test]
fn every_fault_point_leaves_old_or_new_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (store, site) = random_store(dir.path(), &mut rng, 6, 3);
    let ids = ingest_random(&store, &site, &mut rng, 5);
    drop(store);
    for point in FaultPoint::ALL {
        let store = Store::open(dir.path()).unwrap();
        let old = store.snapshot();
        store.inject_fault(point);
        let patch = RecordPatch {
            title: Some(format!("after {point:?}")),
            ..Default::default()
        };
        assert!(matches!(store.update(&ids[0], patch, Role::Expert), Err(SiaError::Storage(_))));
        // poisoned until reopened
        assert!(store.ingest(random_draft(&mut rng, &site), Role::Expert).is_err());
        drop(store);

        let store = Store::open(dir.path()).unwrap();
        let snap = store.snapshot();
        let title = &snap.record(&ids[0]).unwrap().title;
        assert!(title == &old.record(&ids[0]).unwrap().title || title == &format!("after {point:?}"));
        assert_eq!(store.rebuild_index().unwrap(), *snap.index);
        let leftovers = std::fs::read_dir(store.layout().records_dir())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_str().unwrap().starts_with('.'))
            .count();
        assert_eq!(leftovers, 0);
    }
}

#[test]
fn concurrent_reads_never_see_torn_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (store, site) = random_store(dir.path(), &mut rng, 6, 3);
    let ids = ingest_random(&store, &site, &mut rng, 10);
    let store = Arc::new(store);
    let done = Arc::new(AtomicBool::new(false));
    let readers: Vec<_> = (0..4)
        .map(|t| {
            let store = store.clone();
            let done = done.clone();
            let ids = ids.clone();
            std::thread::spawn(move || {
                let mut reads = 0usize;
                while !done.load(Ordering::Relaxed) {
                    let id = &ids[(reads + t) % ids.len()];
                    let xml = store.export_xml(id).unwrap();
                    let parsed = parse_record(xml.as_bytes()).unwrap();
                    assert!(parsed.title.starts_with("rev ") || parsed.title.contains(' '));
                    // the file on disk is always complete too
                    let on_disk = std::fs::read(store.layout().record_file(id)).unwrap();
                    parse_record(&on_disk).unwrap();
                    let snap = store.snapshot();
                    assert_eq!(snap.index.len(), snap.records.len());
                    reads += 1;
                }
                reads
            })
        })
        .collect();
    for i in 0..150 {
        let patch = RecordPatch {
            title: Some(format!("rev {i}")),
            ..Default::default()
        };
        store.update(&ids[i % ids.len()], patch, Role::Expert).unwrap();
        if i % 10 == 0 {
            store.ingest(random_draft(&mut rng, &site), Role::Expert).unwrap();
        }
    }
    done.store(true, Ordering::Relaxed);
    for r in readers {
        assert!(r.join().unwrap() > 0);
    }
}

#[test]
fn html_view_escapes_and_links_thumbnail() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    let mut draft = random_draft(&mut rng, &site);
    draft.kind = KindTag::Photo.into();
    draft.attributes = Default::default();
    draft.title = "<Tour & Porte>".into();
    draft.author = "\"Q\" & co".into();
    let photo = store.ingest(draft.clone(), Role::Expert).unwrap();
    let html = store.render_html_view(&photo.id, &HtmlOptions::default()).unwrap();
    let opts = || roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(&html, opts()).unwrap();
    let a = doc.descendants().find(|n| n.has_tag_name("a")).unwrap();
    assert_eq!(a.attribute("href"), Some(photo.content.href.as_str()));
    assert!(a.children().any(|n| n.has_tag_name("img")));
    let cells: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("td")).filter_map(|n| n.text()).collect();
    assert!(cells.contains(&"<Tour & Porte>"));
    assert!(cells.contains(&"\"Q\" & co"));
    assert!(cells.contains(&photo.provenance.as_str()));

    draft.kind = KindTag::Text.into();
    let text = store.ingest(draft, Role::Expert).unwrap();
    let html = store.render_html_view(&text.id, &HtmlOptions::default()).unwrap();
    let doc = roxmltree::Document::parse_with_options(&html, opts()).unwrap();
    assert!(!doc.descendants().any(|n| n.has_tag_name("img")));
    assert!(doc.descendants().any(|n| n.has_tag_name("table")));
}

#[test]
fn asset_ingest_copies_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let store = castle_store(dir.path());
    let snap = store.snapshot();
    assert_eq!(snap.records.len(), fixture::castle_site().entries.len());
    for r in snap.records.values() {
        let bytes = std::fs::read(store.layout().media_dir().join(&r.content.href)).unwrap();
        assert_eq!(sia_core::store::sha256_hex(&bytes), r.content.checksum);
        assert_eq!(bytes.len() as u64, r.content.byte_size);
    }

    // a draft whose checksum disagrees with the stored asset is refused
    let r = snap.records.values().next().unwrap();
    let mut draft = sia_core::RecordDraft::from(r.as_ref());
    draft.content.checksum = "00".repeat(32);
    match store.ingest(draft, Role::Expert) {
        Err(SiaError::ValidationFailed(v)) => assert_eq!(v[0].rule, Rule::InvalidChecksum),
        other => panic!("{other:?}"),
    }

    // failed ingest removes the copied asset again
    let src = dir.path().join("extra.jpg");
    std::fs::write(&src, b"extra").unwrap();
    let mut bad = sia_core::RecordDraft::from(r.as_ref());
    bad.place_refs = vec!["nowhere".into()];
    let media_before = std::fs::read_dir(store.layout().media_dir()).unwrap().count();
    assert!(store.ingest_asset(bad, &src, Role::Expert).is_err());
    assert_eq!(std::fs::read_dir(store.layout().media_dir()).unwrap().count(), media_before);
}

#[test]
fn reference_edits_show_in_facets() {
    let dir = tempfile::tempdir().unwrap();
    let store = castle_store(dir.path());
    assert_eq!(store.list_facets()["subject"], ["chapel", "hall", "yard"]);
    store.add_vocabulary_term("subject", "keep", Role::Expert).unwrap();
    assert_eq!(store.list_facets()["subject"], ["chapel", "hall", "yard", "keep"]);
    let mut p = store.snapshot().reference.period("1100").unwrap().clone();
    p.end_year = 1099;
    assert!(matches!(store.put_period(p, Role::Expert), Err(SiaError::ValidationFailed(_))));
    drop(store);
    let store = Store::open(dir.path().join("store")).unwrap();
    assert!(store.list_facets()["subject"].contains(&"keep".to_string()));
}

#[test]
fn merge_reference_adds_children_with_parents_in_one_change() {
    let dir = tempfile::tempdir().unwrap();
    let site = fixture::castle_site();
    let store = Store::create(dir.path(), &site.schema, &Default::default()).unwrap();
    assert!(matches!(
        store.merge_reference(&site.reference, Role::Visitor),
        Err(SiaError::PermissionDenied)
    ));
    store.merge_reference(&site.reference, Role::Expert).unwrap();
    store.merge_reference(&site.reference, Role::Expert).unwrap();
    assert_eq!(*store.snapshot().reference, site.reference);
    drop(store);
    assert_eq!(*Store::open(dir.path()).unwrap().snapshot().reference, site.reference);

    let store = Store::open(dir.path()).unwrap();
    let mut orphan = site.reference.clone();
    orphan.places[1].parent_id = Some("nowhere".into());
    assert!(matches!(
        store.merge_reference(&orphan, Role::Expert),
        Err(SiaError::ValidationFailed(_))
    ));
    assert_eq!(*store.snapshot().reference, site.reference);
}
