use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sia_core::validate::{period_overlaps, place_descendants, validate_periods, validate_places, Rule};
use sia_core::{Period, Place, Point2, SiaError};

fn period(start: i32, end: i32) -> Period {
    Period {
        id: "p".into(),
        label: "P".into(),
        start_year: start,
        end_year: end,
        description: String::new(),
    }
}

/// Year-by-year enumeration: do the two closed intervals share a year?
fn overlaps_by_enumeration(a: (i32, i32), b: (i32, i32)) -> bool {
    (a.0..=a.1).any(|y| (b.0..=b.1).contains(&y))
}

#[test]
fn period_overlap_matches_year_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let s = rng.random_range(-300..300);
        let p = (s, s + rng.random_range(0..80));
        let lo = rng.random_range(-300..300);
        let q = (lo, lo + rng.random_range(0..80));
        assert_eq!(
            period_overlaps(&period(p.0, p.1), q.0, q.1).unwrap(),
            overlaps_by_enumeration(p, q),
            "{p:?} vs {q:?}"
        );
    }
}

#[test]
fn period_overlap_edges() {
    let p = period(1100, 1150);
    assert!(period_overlaps(&p, 1150, 1200).unwrap());
    assert!(period_overlaps(&p, 1000, 1100).unwrap());
    assert!(!period_overlaps(&p, 1151, 1200).unwrap());
    assert!(period_overlaps(&period(-50, 0), 0, 0).unwrap());
    assert!(matches!(
        period_overlaps(&p, 1200, 1100),
        Err(SiaError::InvalidInterval { lo: 1200, hi: 1100 })
    ));
}

fn forest(rng: &mut ChaCha8Rng, n: usize) -> Vec<Place> {
    (0..n)
        .map(|i| Place {
            id: format!("p{i}"),
            name: format!("Place {i}"),
            parent_id: (i > 0 && rng.random_bool(0.8)).then(|| format!("p{}", rng.random_range(0..i))),
            description: String::new(),
            footprint: None,
        })
        .collect()
}

/// Least fixpoint of "x is in the set if x = root or x's parent is".
fn descendants_by_fixpoint(root: &str, places: &[Place]) -> BTreeSet<String> {
    let mut set = BTreeSet::from([root.to_string()]);
    loop {
        let before = set.len();
        for p in places {
            if p.parent_id.as_ref().is_some_and(|parent| set.contains(parent)) {
                set.insert(p.id.clone());
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

proptest! {
    #[test]
    fn descendants_match_fixpoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let places = forest(&mut rng, 50);
        prop_assert!(validate_places(&places).is_empty());
        for p in &places {
            prop_assert_eq!(place_descendants(&p.id, &places).unwrap(), descendants_by_fixpoint(&p.id, &places));
        }
    }
}

#[test]
fn unknown_place_has_no_descendants() {
    assert!(matches!(place_descendants("nowhere", &[]), Err(SiaError::UnknownPlace(_))));
}

#[test]
fn cycles_and_bad_footprints_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut places = forest(&mut rng, 6);
    places[0].parent_id = Some("p5".into());
    places[5].parent_id = Some("p0".into());
    assert!(validate_places(&places).iter().any(|v| v.rule == Rule::ParentCycle));

    let mut square = forest(&mut rng, 1);
    square[0].footprint = Some(vec![Point2 { x: 0.0, y: 0.0 }, Point2 { x: 1.0, y: 0.0 }]);
    assert!(validate_places(&square).iter().any(|v| v.rule == Rule::InvalidFootprint));

    assert!(validate_periods(&[period(10, 5)]).iter().any(|v| v.rule == Rule::InvalidInterval));
}
