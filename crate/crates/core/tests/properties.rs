use ergolab::group_kernel::{Defect, FiniteTable, FolnerFamily, GroupModel};
use ergolab::harness::config::ExperimentConfig;
use ergolab::harness::generate::{generate_example, ExampleKind};
use ergolab::harness::report::{fmt15, round15};
use ergolab::matrix_core::{norming_state, operator_norm, state_eval};
use ergolab::sample;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coords() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-50i64..50, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heisenberg_is_a_group(a in coords(), b in coords(), c in coords()) {
        let h = GroupModel::heisenberg();
        let (a, b, c) = (h.element(a).unwrap(), h.element(b).unwrap(), h.element(c).unwrap());
        let left = h.multiply(&h.multiply(&a, &b).unwrap(), &c).unwrap();
        let right = h.multiply(&a, &h.multiply(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        let inv = h.inverse(&a).unwrap();
        prop_assert_eq!(h.multiply(&a, &inv).unwrap(), h.identity());
        prop_assert_eq!(h.multiply(&h.identity(), &a).unwrap(), a);
    }

    #[test]
    fn zd_defects_match_the_closed_form(k in 1u64..40, dim in 1usize..4) {
        let f = FolnerFamily::new(GroupModel::zd(dim));
        let g = f.model().generators()[0].clone();
        prop_assert_eq!(f.defect(k, &g).unwrap(), Defect::new(2, k));
    }

    #[test]
    fn cyclic_folner_set_is_invariant(n in 2usize..12, k in 1u64..5) {
        let table = FiniteTable::cyclic(n);
        let model = GroupModel::finite(table, &[1], vec![]).unwrap();
        let f = FolnerFamily::new(model);
        prop_assert_eq!(f.size(k).unwrap(), n as u64);
        prop_assert_eq!(f.max_generator_defect(k).unwrap(), 0.into());
    }

    #[test]
    fn norming_state_attains_the_norm(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sig = ergolab::matrix_core::Signature(vec![n, 1 + n / 2]);
        let x = sample::positive(&mut rng, &sig);
        let s = norming_state(&x).unwrap();
        prop_assert!((state_eval(&s, &x).unwrap().re - operator_norm(&x)).abs() <= 1e-10);
    }

    #[test]
    fn rounding_is_stable(x in -1e6f64..1e6) {
        let r = round15(x);
        prop_assert_eq!(round15(r), r);
        prop_assert_eq!(fmt15(x).parse::<f64>().unwrap(), r);
    }

    #[test]
    fn generated_configs_round_trip(seed in 0u64..1000, dim in 1usize..7, kind in 0usize..4) {
        let cfg = generate_example(ExampleKind::ALL[kind], seed, dim).unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert!(back.build().is_ok());
    }
}
