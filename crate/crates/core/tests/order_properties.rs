use std::cmp::Ordering;

use proptest::prelude::*;
use pvseq::sequence::{lex_compare, PvSequence, Relation, SequenceIndex, SequenceSpace};

fn small_space() -> impl Strategy<Value = SequenceSpace> {
    (1usize..=5, 1u32..=4).prop_map(|(n, m)| SequenceSpace::new(n, m).unwrap())
}

fn space_and_sequence() -> impl Strategy<Value = (SequenceSpace, PvSequence)> {
    small_space().prop_flat_map(|space| {
        let m = space.m();
        (
            Just(space),
            prop::collection::vec(0..=m, space.n()).prop_map(PvSequence::new),
        )
    })
}

fn space_and_pair() -> impl Strategy<Value = (SequenceSpace, PvSequence, PvSequence)> {
    small_space().prop_flat_map(|space| {
        let m = space.m();
        let seq = prop::collection::vec(0..=m, space.n()).prop_map(PvSequence::new);
        (Just(space), seq.clone(), seq)
    })
}

proptest! {
    #[test]
    fn rank_round_trips((space, v) in space_and_sequence()) {
        let r = space.rank(&v).unwrap();
        prop_assert_eq!(space.unrank(r).unwrap(), v);
    }

    #[test]
    fn rank_order_is_lex_order((space, u, v) in space_and_pair()) {
        let by_rank = space.rank(&u).unwrap().cmp(&space.rank(&v).unwrap());
        prop_assert_eq!(by_rank, lex_compare(&u, &v).unwrap());
    }

    #[test]
    fn operations_increase_lex_order((space, u) in space_and_sequence()) {
        for relation in Relation::ALL {
            for (_, v) in space.images(relation, &u).unwrap() {
                prop_assert_eq!(lex_compare(&u, &v).unwrap(), Ordering::Less);
            }
        }
    }

    #[test]
    fn order_implies_lex_order((space, u, v) in space_and_pair()) {
        for relation in Relation::ALL {
            if space.leq(relation, &u, &v).unwrap() {
                prop_assert_ne!(lex_compare(&u, &v).unwrap(), Ordering::Greater);
            }
        }
    }

    #[test]
    fn reflexive_with_zero_bottom_and_max_top((space, u, v) in space_and_pair()) {
        for relation in Relation::ALL {
            prop_assert!(space.leq(relation, &u, &u).unwrap());
            prop_assert!(space.leq(relation, &space.zero(), &v).unwrap());
            prop_assert!(space.leq(relation, &v, &space.max_element()).unwrap());
        }
    }
}

#[test]
fn antisymmetry_on_small_spaces() {
    for (n, m) in [(1, 6), (2, 3), (2, 6), (3, 2), (4, 2), (4, 3), (5, 1), (8, 1)] {
        let space = SequenceSpace::new(n, m).unwrap();
        assert!(space.cardinality() <= 256);
        let all: Vec<PvSequence> = space.iter().collect();
        for relation in Relation::ALL {
            for (i, u) in all.iter().enumerate() {
                for v in &all[i + 1..] {
                    let both = space.leq(relation, u, v).unwrap() && space.leq(relation, v, u).unwrap();
                    assert!(!both, "{relation}: {u} and {v} precede each other");
                }
            }
        }
    }
}

#[test]
fn exhaustive_rank_round_trip() {
    for (n, m) in [(4, 9), (6, 3), (13, 1), (2, 99)] {
        let space = SequenceSpace::new(n, m).unwrap();
        assert!(space.cardinality() <= 10_000);
        for (i, v) in space.iter().enumerate() {
            assert_eq!(space.rank(&v).unwrap(), SequenceIndex(i));
            assert_eq!(space.unrank(SequenceIndex(i)).unwrap(), v);
        }
    }
}
