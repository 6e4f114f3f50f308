use heatalloc_core::metrics::{allocation_errors, fractions, global_indicators};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..1e4, n),
            prop::collection::vec(0.01f64..1e4, n),
        )
    })
}

proptest! {
    #[test]
    fn fractions_sum_to_hundred(x in prop::collection::vec(0.0f64..1e6, 2..50)) {
        prop_assume!(x.iter().sum::<f64>() > 0.0);
        let f = fractions(&x).unwrap();
        prop_assert!((f.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
    }

    #[test]
    fn errors_sum_to_zero((x, r) in pair()) {
        let e = allocation_errors(&fractions(&x).unwrap(), &fractions(&r).unwrap()).unwrap();
        prop_assert!(e.iter().sum::<f64>().abs() <= 1e-9);
    }

    #[test]
    fn indicators_are_scale_invariant((x, r) in pair(), c in 1e-3f64..1e3, d in 1e-3f64..1e3) {
        let ind = |x: &[f64], r: &[f64]| {
            let f = fractions(x).unwrap();
            let fr = fractions(r).unwrap();
            global_indicators(&allocation_errors(&f, &fr).unwrap(), &fr, None).unwrap()
        };
        let a = ind(&x, &r);
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let rs: Vec<f64> = r.iter().map(|v| v * d).collect();
        let b = ind(&xs, &rs);
        for (u, v) in [(a.sigma, b.sigma), (a.max, b.max), (a.min, b.min), (a.mape, b.mape)] {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }

    #[test]
    fn self_baseline_is_neutral((x, r) in pair()) {
        let fr = fractions(&r).unwrap();
        let e = allocation_errors(&fractions(&x).unwrap(), &fr).unwrap();
        let g = global_indicators(&e, &fr, Some(&e)).unwrap();
        prop_assert_eq!(g.delta_e_hca, Some(0.0));
        prop_assert_eq!(g.p_l, Some(0.0));
    }
}
