//! Property tests for the symbolic layer and word-indexed operations.

use nct_core::ifs::SystemSpec;
use nct_core::symbolic::{cylinder_mass, BernoulliWeights, TailedWord, Word};
use proptest::prelude::*;

fn word_strategy(n_maps: usize, max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(1..=n_maps as u8, 0..=max_len)
        .prop_map(move |syms| Word::new(&syms, n_maps).unwrap())
}

proptest! {
    #[test]
    fn word_serialization_round_trips(
        n_maps in 2usize..30,
        syms in prop::collection::vec(1u8..=20, 0..12),
    ) {
        let syms: Vec<u8> = syms.into_iter().map(|s| 1 + (s - 1) % n_maps as u8).collect();
        let w = Word::new(&syms, n_maps).unwrap();
        let text = w.display(n_maps);
        let back = Word::parse(&text, n_maps).unwrap();
        prop_assert_eq!(w, back);
    }

    #[test]
    fn tailed_word_round_trips_and_shifts(
        prefix in prop::collection::vec(1u8..=4, 0..6),
        tail in prop::collection::vec(1u8..=4, 1..4),
        k in 0usize..12,
    ) {
        let w = TailedWord::new(
            Word::new(&prefix, 4).unwrap(),
            Word::new(&tail, 4).unwrap(),
        ).unwrap();
        let back = TailedWord::parse(&w.display(4), 4).unwrap();
        prop_assert_eq!(&back, &w);
        // symbol(k) of the shifted word equals symbol(k+1) of the original.
        prop_assert_eq!(w.shift().symbol(k), w.symbol(k + 1));
    }

    #[test]
    fn cylinder_mass_is_multiplicative(
        u in word_strategy(3, 8),
        v in word_strategy(3, 8),
    ) {
        let p = BernoulliWeights::new(vec![0.5, 0.3, 0.2]).unwrap();
        let joint = cylinder_mass(&p, &u.concat(&v));
        let split = cylinder_mass(&p, &u) * cylinder_mass(&p, &v);
        prop_assert!((joint - split).abs() <= 1e-15 * (1.0 + split.abs()));
    }

    #[test]
    fn composition_is_a_cocycle(
        u in word_strategy(2, 6),
        v in word_strategy(2, 6),
        px in 0.0f64..1.0,
        py in 0.0f64..1.0,
    ) {
        let spec = SystemSpec::preset("affine-test").unwrap();
        let direct = spec.compose(&u.concat(&v), (px, py)).unwrap();
        let inner = spec.compose(&v, (px, py)).unwrap();
        let nested = spec.compose(&u, inner).unwrap();
        prop_assert!((direct.0 - nested.0).abs() <= 1e-12);
        prop_assert!((direct.1 - nested.1).abs() <= 1e-12);
    }

    #[test]
    fn reversal_is_an_involution(w in word_strategy(5, 16)) {
        prop_assert_eq!(w.reversed().reversed(), w);
    }
}
