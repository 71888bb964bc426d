use proptest::prelude::*;

use hproj_core::curves::{constant, integrate_hplanar, line_deviation};
use hproj_core::geometry::{hermitize, inverse_metric, jtensor_contract};
use hproj_core::hproj::HSolution;
use hproj_core::prolongation::{Curve, Prolongation, ProlongedState, TransportConfig};
use hproj_core::{ChartPoint, ComplexMatrix, Jet, KahlerModel, ModelDescriptor, TensorValue};

fn coords(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 4)
}

fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 0.05)
}

fn fs() -> KahlerModel {
    KahlerModel::fubini_study(2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raise_then_lower_is_identity(x in coords(2.0), t in prop::collection::vec(-1.0f64..1.0, 16)) {
        let m = fs();
        let g = m.metric_value(&ChartPoint::new("affine0", x)).unwrap();
        let ginv = inverse_metric(&g).unwrap();
        let t = TensorValue::covariant2(4, t).unwrap();
        let back = t.raise(0, &ginv).unwrap().lower(0, &g).unwrap();
        prop_assert!(back.sub(&t).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn hermitize_is_an_idempotent_projection(t in prop::collection::vec(-1.0f64..1.0, 16)) {
        let j = fs().j_value();
        let t = TensorValue::covariant2(4, t).unwrap();
        let h = hermitize(&t, &j).unwrap();
        let hh = hermitize(&h, &j).unwrap();
        prop_assert!(hh.sub(&h).unwrap().max_abs() < 1e-14);
        prop_assert!(h.sub(&h.permute(&[1, 0]).unwrap()).unwrap().max_abs() < 1e-14);
        // J-invariant: T + J*T = 2T
        let jj = jtensor_contract(&h, &j).unwrap();
        prop_assert!(jj.sub(&h.scale(2.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn metric_is_j_invariant(x in coords(3.0), v in nonzero_vec(), w in nonzero_vec()) {
        let m = fs();
        let g = m.metric_value(&ChartPoint::new("affine0", x)).unwrap();
        let j = m.j_value();
        let apply = |u: &[f64]| -> Vec<f64> { (0..4).map(|i| (0..4).map(|k| j.get(&[i, k]) * u[k]).sum()).collect() };
        let ip = |a: &[f64], b: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..4 { for k in 0..4 { s += a[i] * g.get(&[i, k]) * b[k]; } }
            s
        };
        prop_assert!((ip(&apply(&v), &apply(&w)) - ip(&v, &w)).abs() < 1e-12);
        prop_assert!(ip(&v, &apply(&v)).abs() < 1e-12);
    }

    #[test]
    fn jet_product_rule(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x = Jet::seed(&[a, b], 3);
        let f = &x[0] * &x[1] + x[0].sin();
        let h = (&x[1] * &x[1]).add_scalar(1.0);
        let p = &f * &h;
        for idx in [vec![0], vec![1], vec![0, 1], vec![1, 1]] {
            let lhs = p.derivative(&idx).unwrap();
            let rhs = match idx.as_slice() {
                [k] => f.derivative(&[*k]).unwrap() * h.value() + f.value() * h.derivative(&[*k]).unwrap(),
                [k, l] => f.derivative(&[*k, *l]).unwrap() * h.value()
                    + f.derivative(&[*k]).unwrap() * h.derivative(&[*l]).unwrap()
                    + f.derivative(&[*l]).unwrap() * h.derivative(&[*k]).unwrap()
                    + f.value() * h.derivative(&[*k, *l]).unwrap(),
                _ => unreachable!(),
            };
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn jet_inverse_functions(a in 0.1f64..5.0) {
        let x = Jet::seed(&[a], 4);
        let y = x[0].ln().exp();
        let z = &x[0].recip() * &x[0];
        for k in 0..=4 {
            let idx = vec![0; k];
            let want = match k { 0 => a, 1 => 1.0, _ => 0.0 };
            prop_assert!((y.derivative(&idx).unwrap() - want).abs() < 1e-9 * (1.0 + a.powi(4)));
            let want = if k == 0 { 1.0 } else { 0.0 };
            prop_assert!((z.derivative(&idx).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_matrix_json_round_trip(d in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 9)) {
        let m = ComplexMatrix::new(3, d).unwrap();
        let s = serde_json::to_string(&m.to_rows()).unwrap();
        let back = ComplexMatrix::from_json_str(&s).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn descriptor_json_round_trip(n in 1usize..4, w in 0.1f64..4.0) {
        let d = ModelDescriptor::Product {
            factors: vec![ModelDescriptor::FubiniStudy { n }, ModelDescriptor::Flat { n: 1, signs: None }],
            weights: vec![w, 1.0],
        };
        let s = serde_json::to_string(&d).unwrap();
        let back: ModelDescriptor = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn transport_is_path_independent(mid in coords(0.6), end in coords(0.6)) {
        let m = fs();
        let g = m.default_metric_field();
        let pb = KahlerModel::pullback(2, ComplexMatrix::diagonal(&[2.0, 1.0, 0.5])).unwrap();
        let sol = HSolution::from_pair(g.clone(), pb.default_metric_field()).with_fitted_mu(g, -0.25);
        let p = ChartPoint::new("affine0", vec![0.0; 4]);
        let seeds = Jet::seed(&p.coords, 2);
        let s0 = ProlongedState {
            point: p.clone(),
            a: (sol.a)(&seeds).unwrap().values().into_comps(),
            lambda: (sol.lambda)(&seeds).unwrap().values().into_comps(),
            mu: sol.mu.as_ref().unwrap()(&seeds).unwrap().value(),
        };
        let pr = Prolongation::new(&m, "affine0", -0.25).unwrap();
        let cfg = TransportConfig::default();
        let direct = pr.transport(&s0, &Curve::segment(&p.coords, &end), &cfg).unwrap();
        let bent = pr.transport(&s0, &Curve::polyline(&[p.coords.clone(), mid, end]), &cfg).unwrap();
        let d = direct.to_vec().iter().zip(bent.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-8, "{}", d);
    }

    #[test]
    fn fs_hplanar_curves_stay_on_lines(
        x in coords(0.8), v in nonzero_vec(), al in -1.0f64..1.0, be in -2.0f64..2.0,
    ) {
        let m = fs();
        let x0 = ChartPoint::new("affine0", x);
        let c = integrate_hplanar(&m, &x0, &v, &constant(al), &constant(be), 0.5, 1e-3).unwrap();
        prop_assert!(line_deviation(&m, &c, &x0, &v).unwrap() < 1e-6);
    }
}
