use proptest::prelude::*;

use relmem::comparator::{ComparatorModel, HeadMode};
use relmem::data::cifar::{encode_cifar10, parse_cifar10};
use relmem::eval::characterize;
use relmem::DenseArray;

fn rows(n: usize, width: usize, vals: &[f32]) -> DenseArray<f32> {
    DenseArray::new(vec![n, width], vals[..n * width].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antisymmetric_head_is_exactly_skew(
        width in 1usize..10,
        hidden in 0usize..8,
        seed in any::<u64>(),
        vals in prop::collection::vec(-5.0f32..5.0, 80),
    ) {
        let m = ComparatorModel::new(HeadMode::Antisymmetric, width, hidden, seed).unwrap();
        let n = 80 / (2 * width);
        let a = rows(n, width, &vals);
        let b = rows(n, width, &vals[n * width..]);
        let ab = m.relate(&a, &b).unwrap();
        let ba = m.relate(&b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert!((x + y).abs() <= 1e-6);
            prop_assert!(x.abs() <= 1.0);
        }
    }

    #[test]
    fn dead_zone_only_grows_with_gamma(
        scores in prop::collection::vec(-1.0f64..1.0, 1..8),
        g1 in 0.0f64..1.0,
        g2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = characterize(&scores, lo);
        let b = characterize(&scores, hi);
        for (x, y) in a.iter().zip(&b) {
            // a tighter zone can only turn a sign into zero, never flip it
            prop_assert!(*y == 0 || y == x);
        }
    }

    #[test]
    fn cifar_records_round_trip(labels in prop::collection::vec(0u8..10, 1..4), fill in any::<u8>()) {
        let mut bytes = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            bytes.push(l);
            bytes.extend((0..3072).map(|p| (p as u8).wrapping_mul(fill).wrapping_add(i as u8)));
        }
        let ds = parse_cifar10(&bytes).unwrap();
        prop_assert_eq!(ds.len(), labels.len());
        prop_assert_eq!(encode_cifar10(&ds).unwrap(), bytes);
    }
}
