use hproj_core::hproj::HSolution;
use hproj_core::models::{ComplexMatrix, KahlerModel};
use hproj_core::prolongation::{extended_residual, Curve, Prolongation, ProlongedState, TransportConfig};
use hproj_core::spectral::*;
use hproj_core::{ChartPoint, Jet, TensorField, TensorValue};

const B: f64 = -0.25;

/// The pair solution, rescaled to the `B = -1` metric `g/4`.
fn fs_pair(d: &[f64]) -> (KahlerModel, TensorField, TensorField, HSolution) {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let pb = KahlerModel::pullback(2, ComplexMatrix::diagonal(d)).unwrap();
    let g = fs.default_metric_field();
    let sol = HSolution::from_pair(g.clone(), pb.default_metric_field()).with_fitted_mu(g.clone(), B);
    let (gn, soln) = normalize_b(g, &sol, B).unwrap();
    (fs.clone(), gn, fs.j_field(), soln)
}

fn gval(g: &TensorField, p: &ChartPoint) -> TensorValue<f64> {
    g(&Jet::seed(&p.coords, 0)).unwrap().values()
}

fn p0() -> ChartPoint {
    ChartPoint::new("affine0", vec![0.3, -0.2, 0.4, 0.1])
}

#[test]
fn identity_and_zero_operators() {
    let (fs, g, _, _) = fs_pair(&[2.0, 1.0, 1.0]);
    let p = p0();
    let gv = gval(&g, &p);
    let jv = fs.j_value();
    let zero = TensorValue::covector(vec![0.0; 4]);
    let l = ExtendedOperator::from_values(p.clone(), &gv, &jv, &gv, &zero, 1.0).unwrap();
    let id = ExtendedOperator::identity(p.clone(), 6);
    assert!(l.matrix.iter().zip(&id.matrix).all(|(a, b)| (a - b).abs() < 1e-14));
    let z = ExtendedOperator::from_values(p, &gv, &jv, &gv.scale(0.0), &zero, 0.0).unwrap();
    assert!(z.matrix.iter().all(|v| *v == 0.0));
}

#[test]
fn operator_is_self_adjoint_and_complex() {
    let (_, g, j, sol) = fs_pair(&[2.0, 1.0, 1.0]);
    let p = p0();
    let l = ExtendedOperator::build(&g, &j, &sol, &p).unwrap();
    let gv = gval(&g, &p);
    let jv = gval(&j, &p);
    assert!(l.get(0, 2).abs() + l.get(0, 3).abs() > 1e-3, "lambda vanishes");
    assert!(l.self_adjoint_residual(&gv) < 1e-10);
    assert!(l.j_commutation_residual(&jv, J2) < 1e-10);
    let flipped = [[0.0, -1.0], [1.0, 0.0]];
    assert!(l.j_commutation_residual(&jv, flipped) > 1e-3);
}

#[test]
fn product_with_identity_is_neutral() {
    let (_, g, j, sol) = fs_pair(&[2.0, 1.0, 1.0]);
    let p = p0();
    let l = ExtendedOperator::build(&g, &j, &sol, &p).unwrap();
    let gv = gval(&g, &p);
    let r = l_product(&l, &ExtendedOperator::identity(p, 6), &gv, 1e-8).unwrap();
    assert!(r.closes);
    let d = r.operator.matrix.iter().zip(&l.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-14);
    let t = l.triple(&gv);
    assert_eq!(r.triple.mu, t.mu);
}

#[test]
fn powers_satisfy_closure_and_solve_the_system() {
    let (fs, g, j, sol) = fs_pair(&[2.0, 1.0, 1.0]);
    let p = p0();
    let gv = gval(&g, &p);
    let l = ExtendedOperator::build(&g, &j, &sol, &p).unwrap();
    let mut lk = l.clone();
    for _ in 0..2 {
        let r = l_product(&l, &lk, &gv, 1e-8).unwrap();
        assert!(r.commutation_residual < 1e-8, "{}", r.commutation_residual);
        assert!(r.orthogonality_residual < 1e-8, "{}", r.orthogonality_residual);
        assert!(r.closes);
        lk = r.operator;
    }
    for coeffs in [vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]] {
        let ps = polynomial_solution(g.clone(), j.clone(), &sol, coeffs).unwrap();
        for q in fs.sample_points(21, 4, 0.8) {
            let r = extended_residual(&g, &j, &ps, -1.0, &q).unwrap();
            assert!(r.max() < 1e-5, "{r:?}");
        }
    }
}

#[test]
fn minimal_polynomial_examples() {
    let p = p0();
    let id = ExtendedOperator::identity(p.clone(), 6);
    let mp = minimal_poly(&id, CLUSTER_TOL);
    assert_eq!(mp.coeffs, vec![-1.0, 1.0]);
    let mut proj = ExtendedOperator::identity(p, 6);
    for k in 0..3 {
        proj.matrix[k * 6 + k] = 0.0;
    }
    let mp = minimal_poly(&proj, CLUSTER_TOL);
    assert_eq!(mp.degree(), 2);
    assert!((mp.coeffs[0]).abs() < 1e-12 && (mp.coeffs[1] + 1.0).abs() < 1e-12);
}

#[test]
fn minimal_polynomial_is_constant() {
    let (_, g, j, sol) = fs_pair(&[2.0, 1.0, 0.5]);
    let l1 = ExtendedOperator::build(&g, &j, &sol, &p0()).unwrap();
    let l2 = ExtendedOperator::build(&g, &j, &sol, &ChartPoint::new("affine0", vec![-0.7, 0.2, 0.1, 0.9]))
        .unwrap();
    let (m1, m2) = (minimal_poly(&l1, CLUSTER_TOL), minimal_poly(&l2, CLUSTER_TOL));
    assert!(m1.distance(&m2) < 1e-5, "{:?} vs {:?}", m1.coeffs, m2.coeffs);
    assert!(!m1.defective);
}

#[test]
fn eigenvalues_are_constant_along_transport() {
    let (fs, g, j, sol) = fs_pair(&[2.0, 1.0, 0.5]);
    let mut pr = Prolongation::new(&fs, "affine0", -1.0).unwrap();
    pr.g = g.clone();
    let p = p0();
    let seeds = Jet::seed(&p.coords, 2);
    let s0 = ProlongedState {
        point: p.clone(),
        a: (sol.a)(&seeds).unwrap().values().into_comps(),
        lambda: (sol.lambda)(&seeds).unwrap().values().into_comps(),
        mu: sol.mu.as_ref().unwrap()(&seeds).unwrap().value(),
    };
    let s1 = pr
        .transport(&s0, &Curve::segment(&p.coords, &[-0.4, 0.5, 0.0, -0.3]), &TransportConfig::default())
        .unwrap();
    let l0 = ExtendedOperator::from_state(&gval(&g, &p), &gval(&j, &p), &s0).unwrap();
    let l1 = ExtendedOperator::from_state(&gval(&g, &s1.point), &gval(&j, &s1.point), &s1).unwrap();
    for (a, b) in l0.spectrum().iter().zip(l1.spectrum()) {
        assert!((a.0 - b.0).abs() < 1e-5 && (a.1 - b.1).abs() < 1e-5, "{a:?} {b:?}");
    }
}

#[test]
fn identity_has_no_projector() {
    let id = ExtendedOperator::identity(p0(), 6);
    assert!(matches!(
        make_projector(&id, ClusterChoice::Largest, CLUSTER_TOL),
        Err(hproj_core::Error::NoProjector(_))
    ));
}

#[test]
fn projector_is_its_own_projector() {
    let mut proj = ExtendedOperator::identity(p0(), 6);
    for k in 0..2 {
        proj.matrix[k * 6 + k] = 0.0;
    }
    let p = make_projector(&proj, ClusterChoice::Largest, CLUSTER_TOL).unwrap();
    let d = p.operator.matrix.iter().zip(&proj.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12);
}

fn normalized_projector() -> (KahlerModel, TensorField, TensorField, HSolution, Projector) {
    let (fs, gn, j, soln) = fs_pair(&[2.0, 1.0, 1.0]);
    let mu = soln.mu.clone().unwrap();
    let mu_max = fs
        .sample_points(9, 20, 1.5)
        .iter()
        .map(|q| mu(&Jet::seed(&q.coords, 2)).unwrap().value())
        .fold(f64::NEG_INFINITY, f64::max);
    let l = ExtendedOperator::build(&gn, &j, &soln, &p0()).unwrap();
    let proj = make_projector(&l, ClusterChoice::AtLeast(mu_max), CLUSTER_TOL).unwrap();
    let ps = polynomial_solution(gn.clone(), j.clone(), &soln, proj.polynomial.clone()).unwrap();
    (fs, gn, j, ps, proj)
}

#[test]
fn projector_on_fs_pair() {
    let (_, _, _, _, proj) = normalized_projector();
    assert!(proj.idempotency < 1e-8, "{}", proj.idempotency);
}

#[test]
fn projector_eigenstructure_and_hessian() {
    let (_fs, gn, j, ps, _) = normalized_projector();
    let p = p0();
    let rep = eigenstructure_report(&gn, &j, &ps, &p, 1e-6).unwrap();
    assert_eq!(rep.case, ProjectorCase::Interior, "{rep:?}");
    assert!(rep.matches_case, "{rep:?}");
    assert!(rep.lambda_span_angle.unwrap() < 1e-4);
    let h = hessian_mu_check(&gn, &ps, &p).unwrap();
    assert!(h < 1e-5, "hessian residual {h}");
}

#[test]
fn hessian_of_trivial_triple_vanishes() {
    let fs = KahlerModel::fubini_study(2).unwrap();
    let g = fs.default_metric_field();
    let sol = HSolution::from_a(g.clone(), g.clone()).with_mu(std::sync::Arc::new(|_: &[Jet]| Ok(Jet::constant(1.0))));
    assert!(hessian_mu_check(&g, &sol, &p0()).unwrap() < 1e-12);
}
