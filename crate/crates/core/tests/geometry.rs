use hproj_core::geometry::*;
use hproj_core::models::{ComplexMatrix, KahlerModel, ModelDescriptor};
use hproj_core::{ChartPoint, Jet};

fn three_factor_product() -> KahlerModel {
    KahlerModel::product(
        vec![
            ModelDescriptor::Flat { n: 1, signs: None },
            ModelDescriptor::FubiniStudy { n: 2 },
            ModelDescriptor::Flat { n: 1, signs: None },
        ],
        vec![1.0, 2.0, 0.5],
    )
    .unwrap()
}

#[test]
fn christoffel_values_agree_with_jets() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let p = ChartPoint::new("affine0", vec![0.3, -0.7, 0.2, 0.5]);
    let g = fs.metric_jet(&p, 1).unwrap().jet;
    let exact = christoffel(&g).unwrap().values();
    let fast = christoffel_values(&g).unwrap();
    assert!(exact.sub(&fast).unwrap().max_abs() < 1e-14);
}

#[test]
fn models_are_kahler() {
    for m in [KahlerModel::flat(2).unwrap(), KahlerModel::fubini_study(2).unwrap(), three_factor_product()] {
        let pts = m.sample_points(11, 20, 1.0);
        let rep = verify_kahler(&m.default_metric_field(), &m.j_field(), &pts).unwrap();
        assert!(rep.passes(1e-8), "{}: {rep:?}", m.label());
    }
}

#[test]
fn non_kahler_metric_is_detected() {
    // a conformal factor that depends on x1 only is not Kähler in complex dimension 2
    let g: hproj_core::TensorField = std::sync::Arc::new(|x: &[Jet]| {
        let f = (&x[0] * &x[0]).scale(0.5).add_scalar(1.0);
        Ok(hproj_core::TensorValue::from_fn(
            vec![hproj_core::Slot::Lower, hproj_core::Slot::Lower],
            4,
            |i| if i[0] == i[1] { f.clone() } else { Jet::zero() },
        ))
    });
    let fs = KahlerModel::flat(2).unwrap();
    let pts = vec![ChartPoint::new("affine", vec![0.5, 0.1, 0.2, 0.3])];
    let rep = verify_kahler(&g, &fs.j_field(), &pts).unwrap();
    assert!(rep.j_squared < 1e-14 && rep.compatibility < 1e-14);
    assert!(rep.nabla_j > 1e-3 && rep.d_omega > 1e-3);
}

#[test]
fn fs_curvature_is_the_model_tensor() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let j = fs.j_value();
    for p in fs.sample_points(5, 20, 1.2) {
        let gj = fs.metric_jet(&p, 2).unwrap().jet;
        let r = riemann(&gj).unwrap().values();
        let g = gj.values();
        let k = model_curvature_tensor(&g, &j);
        // R + 4 B K with B = -1/4
        let d = r.sub(&k).unwrap().max_abs();
        assert!(d < 1e-10, "{d}");
        let v = [0.3, -0.1, 0.8, 0.4];
        assert!((holomorphic_sectional_curvature(&r, &g, &j, &v) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn fs_is_einstein() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let p = ChartPoint::new("affine0", vec![0.4, 0.1, -0.3, 0.2]);
    let gj = fs.metric_jet(&p, 2).unwrap().jet;
    let ric = ricci(&riemann(&gj).unwrap().values()).unwrap();
    // holomorphic curvature 1 in complex dimension n: Ric = (n + 1)/2 g
    let d = ric.sub(&gj.values().scale(1.5)).unwrap().max_abs();
    assert!(d < 1e-10, "{d}");
}

#[test]
fn pullback_by_nonunitary_matrix_has_same_curvature_type() {
    let m = KahlerModel::pullback(2, ComplexMatrix::diagonal(&[2.0, 1.0, 1.0])).unwrap();
    let p = ChartPoint::new("affine0", vec![0.1, 0.3, -0.2, 0.1]);
    let gj = m.metric_jet(&p, 2).unwrap().jet;
    let r = riemann(&gj).unwrap().values();
    let k = model_curvature_tensor(&gj.values(), &m.j_value());
    assert!(r.sub(&k).unwrap().max_abs() < 1e-10);
}

#[test]
fn product_curvature_splits() {
    let m = three_factor_product();
    let p = m.sample_points(2, 1, 0.5).remove(0);
    let gj = m.metric_jet(&p, 2).unwrap().jet;
    let r = riemann(&gj).unwrap().values();
    let g = gj.values();
    // mixed planes between factors are flat
    let mut x = vec![0.0; 8];
    let mut y = vec![0.0; 8];
    x[2] = 1.0;
    y[6] = 1.0;
    assert!(sectional_curvature(&r, &g, &x, &y).abs() < 1e-12);
    // holomorphic curvature of the weight-2 FS factor is 1/2
    assert!((holomorphic_sectional_curvature(&r, &g, &m.j_value(), &x) - 0.5).abs() < 1e-10);
}

#[test]
fn flat_torus_has_zero_curvature() {
    let m = KahlerModel::flat_torus(2, vec![1.0, 2.0, 1.5, 3.0]).unwrap();
    let p = m.sample_points(1, 1, 0.5).remove(0);
    let gj = m.metric_jet(&p, 2).unwrap().jet;
    assert_eq!(riemann(&gj).unwrap().values().max_abs(), 0.0);
}
