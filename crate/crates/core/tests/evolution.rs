mod common;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sia_core::evolution::{SchemaChange, SchemaDelta};
use sia_core::{AttributeNode, DocumentRecord, KindTag, Role, SiaError, ValueType};

use common::*;

fn four_changes() -> SchemaDelta {
    vec![
        SchemaChange::AddNode {
            path: "photo/notes".into(),
            node: AttributeNode::leaf("notes", ValueType::Text),
            default: None,
        },
        SchemaChange::RenameNode {
            path: "photo/film-type".into(),
            new_name: "film".into(),
        },
        SchemaChange::RetypeNode {
            path: "photo/exposures".into(),
            new_type: ValueType::Integer,
            default: None,
        },
        SchemaChange::RemoveNode {
            path: "photo/emulsion".into(),
        },
    ]
}

/// Expected (path, value) multiset after the four changes, computed from the
/// pre-migration record alone.
fn expected_after(r: &DocumentRecord) -> BTreeMap<(String, String), usize> {
    let mut m = BTreeMap::new();
    for ((path, value), n) in value_multiset(r) {
        let path = if path == "photo/film-type" { "photo/film".to_string() } else { path };
        *m.entry((path, value)).or_default() += n;
    }
    m
}

fn exposures_ok(v: &str) -> bool {
    v.parse::<i64>().is_ok()
}

#[test]
fn four_change_delta_preserves_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (store, site) = random_store(dir.path(), &mut rng, 6, 3);
    ingest_random(&store, &site, &mut rng, 200);
    let before = store.snapshot();

    let plan = store.propose_schema(&four_changes()).unwrap();
    assert_eq!((plan.from_version, plan.to_version), (1, 2));
    store.apply_migration(&plan, Role::Expert).unwrap();
    let after = store.snapshot();
    assert_eq!(after.schema.version, 2);

    for (id, old) in &before.records {
        let new = after.record(id).unwrap();
        assert_eq!(new.schema_version, 2);
        assert_eq!(new.audit, old.audit);
        assert!(after.validate(new).is_empty(), "{id}");
        assert_eq!(value_multiset(new), expected_after(old), "{id}");

        if old.kind.tag != KindTag::Photo {
            assert_eq!(new.attributes, old.attributes);
            continue;
        }
        let mut want_legacy: Vec<(String, String)> = old
            .attributes
            .leaf_pairs(KindTag::Photo)
            .into_iter()
            .filter(|(p, v)| p == "photo/emulsion" || (p == "photo/exposures" && !exposures_ok(v)))
            .collect();
        want_legacy.sort();
        let mut got_legacy: Vec<(String, String)> =
            new.attributes.legacy.iter().map(|l| (l.path.clone(), l.value.clone())).collect();
        got_legacy.sort();
        assert_eq!(got_legacy, want_legacy, "{id}");
        assert!(new.attributes.legacy.iter().all(|l| l.from_version == 1));
    }

    // on disk too
    drop(store);
    let reopened = sia_core::Store::open(dir.path()).unwrap();
    assert_eq!(reopened.snapshot().records, after.records);
    assert_eq!(reopened.schema_version(1).unwrap(), *before.schema);
}

#[test]
fn replaying_a_plan_is_stale() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    ingest_random(&store, &site, &mut rng, 10);
    let plan = store.propose_schema(&four_changes()).unwrap();
    store.apply_migration(&plan, Role::Expert).unwrap();
    assert!(matches!(
        store.apply_migration(&plan, Role::Expert),
        Err(SiaError::StalePlan { plan: 1, active: 2 })
    ));
    assert!(matches!(store.apply_migration(&plan, Role::Visitor), Err(SiaError::PermissionDenied)));
}

#[test]
fn required_add_needs_a_default() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    ingest_random(&store, &site, &mut rng, 20);
    let add = |default: Option<&str>| {
        vec![SchemaChange::AddNode {
            path: "drawing/sheet".into(),
            node: AttributeNode::leaf("sheet", ValueType::Integer).required(),
            default: default.map(str::to_string),
        }]
    };
    let plan = store.propose_schema(&add(None)).unwrap();
    assert!(matches!(store.apply_migration(&plan, Role::Expert), Err(SiaError::DefaultMissing(_))));
    assert_eq!(store.snapshot().schema.version, 1);
    assert!(matches!(store.propose_schema(&add(Some("A4"))), Err(SiaError::InvalidDelta(_))));

    let plan = store.propose_schema(&add(Some("1"))).unwrap();
    store.apply_migration(&plan, Role::Expert).unwrap();
    for r in store.snapshot().records.values().filter(|r| r.kind.tag == KindTag::Drawing) {
        assert!(r.attributes.leaf_pairs(KindTag::Drawing).contains(&("drawing/sheet".into(), "1".into())));
    }
}

#[test]
fn one_batch_equals_change_by_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let site = sia_core::fixture::random_site(&mut rng, 5, 3);
    let drafts: Vec<_> = (0..60).map(|_| sia_core::fixture::random_draft(&mut rng, &site)).collect();
    let stores = [a.path(), b.path()].map(|p| {
        let s = sia_core::Store::create(p, &site.schema, &site.reference).unwrap();
        for d in &drafts {
            s.ingest(d.clone(), Role::Expert).unwrap();
        }
        s
    });
    let batch = stores[0].propose_schema(&four_changes()).unwrap();
    stores[0].apply_migration(&batch, Role::Expert).unwrap();
    for change in four_changes() {
        let plan = stores[1].propose_schema(&[change]).unwrap();
        stores[1].apply_migration(&plan, Role::Expert).unwrap();
    }
    let (x, y) = (stores[0].snapshot(), stores[1].snapshot());
    assert_eq!(x.schema.per_kind, y.schema.per_kind);
    assert_eq!(x.records.len(), y.records.len());
    for (id, r) in &x.records {
        let s = y.record(id).unwrap();
        assert_eq!(r.attributes.entries, s.attributes.entries, "{id}");
        assert_eq!(value_multiset(r), value_multiset(s), "{id}");
    }
}

#[test]
fn invalid_deltas_leave_the_store_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let (store, site) = random_store(dir.path(), &mut rng, 4, 2);
    ingest_random(&store, &site, &mut rng, 10);
    let bad: Vec<SchemaDelta> = vec![
        vec![],
        vec![SchemaChange::RemoveNode { path: "photo/nothing".into() }],
        vec![SchemaChange::RenameNode {
            path: "photo/emulsion".into(),
            new_name: "exposures".into(),
        }],
        vec![SchemaChange::RetypeNode {
            path: "photo/camera".into(),
            new_type: ValueType::Text,
            default: None,
        }],
        vec![SchemaChange::RemoveNode { path: "castle/emulsion".into() }],
    ];
    for delta in bad {
        assert!(matches!(store.propose_schema(&delta), Err(SiaError::InvalidDelta(_))), "{delta:?}");
    }
    assert_eq!(store.snapshot().schema.version, 1);
    let files: Vec<_> = std::fs::read_dir(store.layout().schema_dir()).unwrap().collect();
    assert_eq!(files.len(), 2);
}
