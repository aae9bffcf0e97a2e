use proptest::prelude::*;
use zsflow::flow::FlowModel;
use zsflow::numcore::Matrix;
use zsflow::pipeline::{harmonic_mean, per_class_accuracy};
use zsflow::rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_round_trips(seed in 0u64..10_000, d_v in 2usize..9, layers in 1usize..5, rows in 1usize..6) {
        let mut r = rng::seeded(seed);
        let flow = FlowModel::<f64>::init(d_v, 3, layers, 8, Some(5.0), &mut r).unwrap();
        let x = Matrix::from_fn(rows, d_v, |_, _| rng::normal::<f64, _>(&mut r));
        let c = Matrix::from_fn(rows, 3, |_, _| rng::normal::<f64, _>(&mut r));
        let (z, _) = flow.forward(&x, &c).unwrap();
        prop_assert!(flow.generate(&z, &c).unwrap().max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn serialized_flow_is_identical(seed in 0u64..10_000) {
        let mut r = rng::seeded(seed);
        let flow = FlowModel::<f64>::init(4, 2, 2, 6, Some(5.0), &mut r).unwrap();
        let back = FlowModel::<f64>::from_json_str(&flow.to_json_string()).unwrap();
        prop_assert_eq!(back.params(), flow.params());
    }

    #[test]
    fn per_class_accuracy_is_bounded(pairs in prop::collection::vec((0usize..4, 0usize..4), 4..60)) {
        let mut labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        labels[..4].copy_from_slice(&[0, 1, 2, 3]);
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let (per, mean) = per_class_accuracy(&preds, &labels, &[0, 1, 2, 3]).unwrap();
        prop_assert!(per.iter().all(|a| (0.0..=1.0).contains(a)));
        prop_assert!((0.0..=1.0).contains(&mean));
    }

    #[test]
    fn harmonic_mean_lies_between_min_and_mean(s in 0.01f64..1.0, u in 0.01f64..1.0) {
        let h = harmonic_mean(s, u);
        prop_assert!(h >= s.min(u) - 1e-12 && h <= (s + u) / 2.0 + 1e-12);
    }
}
