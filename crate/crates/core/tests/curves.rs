use std::sync::Arc;

use hproj_core::curves::*;
use hproj_core::{ChartPoint, ComplexMatrix, Error, KahlerModel};

fn rotation() -> VectorFieldFn {
    // z1 -> e^{it} z1 in the first affine chart
    Arc::new(|p: &ChartPoint| {
        let x = &p.coords;
        Ok(vec![-x[1], x[0], 0.0, 0.0])
    })
}

#[test]
fn flat_geodesic_is_a_straight_line() {
    let m = KahlerModel::flat(2).unwrap();
    let x0 = ChartPoint::new("affine", vec![0.1, 0.2, -0.3, 0.4]);
    let v0 = [1.0, -0.5, 0.25, 2.0];
    let c = integrate_hplanar(&m, &x0, &v0, &constant(0.0), &constant(0.0), 2.0, 1e-3).unwrap();
    assert!(line_deviation(&m, &c, &x0, &v0).unwrap() < 1e-10);
    let end = &c.last_point().coords;
    for i in 0..4 {
        assert!((end[i] - x0.coords[i] - 2.0 * v0[i]).abs() < 1e-10);
    }
}

#[test]
fn flat_hplanar_stays_in_complex_line() {
    let m = KahlerModel::flat(2).unwrap();
    let x0 = ChartPoint::new("affine", vec![0.0; 4]);
    let v0 = [1.0, 0.0, 0.5, 0.5];
    let c = integrate_hplanar(&m, &x0, &v0, &polynomial(vec![0.1, -0.2]), &constant(1.3), 3.0, 1e-3).unwrap();
    assert!(line_deviation(&m, &c, &x0, &v0).unwrap() < 1e-8);
    assert!(hplanarity_defects(&m, &c).unwrap().iter().all(|d| *d < 1e-12));
}

#[test]
fn fubini_study_hplanar_curves_lie_on_lines() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.3, -0.2, 0.1, 0.4]);
    let v0 = [0.7, 0.1, -0.4, 0.9];
    let c = integrate_hplanar(&fs, &x0, &v0, &constant(0.2), &constant(-0.8), 2.0, 1e-3).unwrap();
    let d = line_deviation(&fs, &c, &x0, &v0).unwrap();
    assert!(d < 1e-6, "{d}");
    let w = hplanarity_defects(&fs, &c).unwrap().into_iter().fold(0.0, f64::max);
    assert!(w < 1e-6, "{w}");
}

#[test]
fn pullback_hplanar_curves_lie_on_lines() {
    let a = ComplexMatrix::new(3, vec![
        (1.0, 0.0), (0.2, 0.1), (0.0, 0.0),
        (0.0, 0.0), (1.5, 0.0), (0.3, -0.2),
        (0.1, 0.0), (0.0, 0.0), (0.8, 0.0),
    ])
    .unwrap();
    let m = KahlerModel::pullback(2, a).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.1, 0.1, -0.2, 0.3]);
    let v0 = [0.5, -0.3, 0.2, 0.6];
    let c = integrate_hplanar(&m, &x0, &v0, &constant(0.0), &constant(0.5), 1.5, 1e-3).unwrap();
    assert!(line_deviation(&m, &c, &x0, &v0).unwrap() < 1e-6);
}

#[test]
fn forced_curve_leaves_the_line() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.0; 4]);
    let v0 = [1.0, 0.0, 0.0, 0.0];
    let f: Forcing = Arc::new(|_, _, _| vec![0.0, 0.0, 0.5, 0.0]);
    let c = integrate_forced(&fs, &x0, &v0, &constant(0.0), &constant(0.0), Some(&f), 1.0, 1e-3).unwrap();
    assert!(line_deviation(&fs, &c, &x0, &v0).unwrap() > 1e-3);
    assert!(hplanarity_defects(&fs, &c).unwrap().iter().skip(1).all(|d| *d > 1e-3));
}

#[test]
fn reparametrization_preserves_hplanarity() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.2, 0.0, -0.1, 0.3]);
    let v0 = [0.4, 0.3, -0.2, 0.5];
    let c = integrate_hplanar(&fs, &x0, &v0, &constant(0.1), &constant(0.6), 1.0, 1e-3).unwrap();
    let r = reparametrization_invariance_check(&fs, &c, 1e-6).unwrap();
    assert!(r.pass && r.original_defect < 1e-6 && r.reparametrized_defect < 1e-6, "{r:?}");

    let f: Forcing = Arc::new(|_, _, _| vec![0.0, 0.0, 0.0, 1.0]);
    let c = integrate_forced(&fs, &x0, &[1.0, 0.0, 0.0, 0.0], &constant(0.0), &constant(0.0), Some(&f), 1.0, 1e-3)
        .unwrap();
    let r = reparametrization_invariance_check(&fs, &c, 1e-6).unwrap();
    assert!(r.pass && r.original_defect > 1e-6 && r.reparametrized_defect > 1e-6, "{r:?}");
}

#[test]
fn geodesics_conserve_energy_and_killing_integrals() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.3, 0.1, -0.2, 0.2]);
    let v0 = [0.5, -0.6, 0.3, 0.1];
    let c = integrate_hplanar(&fs, &x0, &v0, &constant(0.0), &constant(0.0), 2.0, 1e-3).unwrap();
    assert!(energy_drift(&fs, &c).unwrap() < 1e-8);
    assert!(killing_integral_drift(&fs, &c, &rotation()).unwrap() < 1e-7);
}

#[test]
fn rk4_has_fourth_order_convergence() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.1, 0.2, 0.0, -0.1]);
    let v0 = [1.0, 0.3, -0.5, 0.2];
    let r = step_halving_ratio(&fs, &x0, &v0, &constant(0.3), &constant(0.9), 1.0, 0.05).unwrap();
    assert!((12.0..=20.0).contains(&r), "{r}");
}

#[test]
fn integration_switches_charts_near_infinity() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let x0 = ChartPoint::new("affine0", vec![0.0; 4]);
    let v0 = [1.0, 0.0, 0.0, 0.0];
    let c = integrate_hplanar(&fs, &x0, &v0, &constant(0.0), &constant(0.0), 4.0, 1e-3).unwrap();
    // closed geodesic through the hyperplane at infinity and back
    assert!(c.points.iter().any(|p| p.chart != "affine0"));
    assert_eq!(c.last_point().chart, "affine0");
    assert!(line_deviation(&fs, &c, &x0, &v0).unwrap() < 1e-6);
    assert!(energy_drift(&fs, &c).unwrap() < 1e-8);
}

#[test]
fn product_line_deviation_is_unsupported() {
    let m = KahlerModel::product(
        vec![
            hproj_core::ModelDescriptor::Flat { n: 1, signs: None },
            hproj_core::ModelDescriptor::Flat { n: 1, signs: None },
        ],
        vec![1.0, 2.0],
    );
    let m = m.unwrap();
    let x0 = m.sample_points(1, 1, 0.1).remove(0);
    let v0 = [1.0, 0.0, 0.0, 1.0];
    let c = integrate_hplanar(&m, &x0, &v0, &constant(0.0), &constant(0.0), 0.1, 1e-2).unwrap();
    assert!(matches!(line_deviation(&m, &c, &x0, &v0), Err(Error::UnsupportedModel(_))));
}

#[test]
fn csv_export_has_one_row_per_sample() {
    let m = KahlerModel::flat(2).unwrap();
    let x0 = ChartPoint::new("affine", vec![0.0; 4]);
    let v0 = [1.0, 0.0, 0.0, 0.0];
    let c = integrate_hplanar(&m, &x0, &v0, &constant(0.0), &constant(1.0), 0.1, 1e-2).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &m, &c, &x0, &v0).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), c.len() + 1);
    assert!(text.starts_with("t,chart,x0,x1,x2,x3,v0,v1,v2,v3,defect,deviation"));
}

#[test]
fn rejects_bad_input() {
    let m = KahlerModel::flat(2).unwrap();
    let x0 = ChartPoint::new("affine", vec![0.0; 4]);
    let z = constant(0.0);
    assert!(integrate_hplanar(&m, &x0, &[0.0; 4], &z, &z, 1.0, 1e-2).is_err());
    assert!(integrate_hplanar(&m, &x0, &[1.0, 0.0, 0.0, 0.0], &z, &z, 1.0, 0.0).is_err());
}
