//! Scenario implementations. Each returns a report; the caller decides the exit code.

use std::sync::Arc;

use hproj_core::curves::{
    energy_drift, hplanarity_defects, integrate_batch, integrate_hplanar, killing_integral_drift, line_deviation,
    seeded_runs, step_halving_ratio, write_csv, VectorFieldFn,
};
use hproj_core::geometry::{
    holomorphic_sectional_curvature, inverse_metric, j_bar, riemann, verify_kahler, KahlerReport,
};
use hproj_core::hproj::{c_identity_check, hpr_residual, killing_residual, HSolution};
use hproj_core::prolongation::{
    constant_curvature_tensor, degree_of_mobility, distance_modulo_trivial, estimate_b, extended_residual,
    kernel_residuals, laplace_identity_residual, tanno_residual, tanno_to_extended, Prolongation, TransportConfig,
};
use hproj_core::spectral::{
    eigenstructure_report, hessian_mu_check, l_product, make_projector, minimal_poly, normalize_b,
    polynomial_solution, ClusterChoice, ExtendedOperator, OperatorDump, ProjectorCase, CLUSTER_TOL, J2,
};
use hproj_core::{ChartPoint, ComplexMatrix, Jet, KahlerModel, ModelDescriptor, TensorField, TensorValue};

use crate::report::{Check, Report};
use crate::{CliError, Scenario, Settings};

/// Sectional-curvature scale used when no `--B` is given for a projective model.
const FS_B: f64 = -0.25;

pub fn run_scenario(s: &Settings) -> Result<Report, CliError> {
    match s.scenario {
        Scenario::ReportMerge => merge(s),
        sc => {
            let model = KahlerModel::from_descriptor(&s.model)?;
            let mut r = Report::new(sc.name(), Some(s.model.clone()), s.seed);
            match sc {
                Scenario::VerifyKahler => kahler(s, &model, &mut r)?,
                Scenario::Curvature => curvature(s, &model, &mut r)?,
                Scenario::HprCheck => hpr_check(s, &model, &mut r)?,
                Scenario::Mobility => mobility(s, &model, &mut r)?,
                Scenario::Spectral => spectral(s, &model, &mut r)?,
                Scenario::Tanno => tanno(s, &model, &mut r)?,
                Scenario::Hplanar => hplanar(s, &model, &mut r)?,
                Scenario::ReportMerge => unreachable!(),
            }
            Ok(r)
        }
    }
}

fn merge(s: &Settings) -> Result<Report, CliError> {
    let reports = s
        .inputs
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Report::from_json_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report::merge(&reports))
}

fn default_b(model: &KahlerModel) -> f64 {
    if model.projective_matrix().is_some() {
        FS_B
    } else {
        0.0
    }
}

fn kahler(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let tol = s.tol_or(1e-8);
    let base = model.sample_points(s.seed, s.samples_or(20), 1.0);
    let mut total: Option<KahlerReport> = None;
    let mut per_chart = Vec::new();
    for c in model.charts() {
        let pts: Vec<ChartPoint> = base
            .iter()
            .filter(|p| c.domain.contains(&p.coords))
            .map(|p| ChartPoint::new(c.name.clone(), p.coords.clone()))
            .collect();
        let rep = verify_kahler(&model.metric_field(&c.name)?, &model.j_field(), &pts)?;
        if let Some(t) = total.as_mut() {
            t.points += rep.points;
            t.j_squared = t.j_squared.max(rep.j_squared);
            t.compatibility = t.compatibility.max(rep.compatibility);
            t.nabla_j = t.nabla_j.max(rep.nabla_j);
            t.d_omega = t.d_omega.max(rep.d_omega);
        } else {
            total = Some(rep.clone());
        }
        per_chart.push((c.name.clone(), rep));
    }
    let t = total.ok_or_else(|| CliError::Failure("model has no charts".into()))?;
    r.checks.push(Check::below("j-squared", t.j_squared, tol));
    r.checks.push(Check::below("compatibility", t.compatibility, tol));
    r.checks.push(Check::below("nabla-j", t.nabla_j, tol));
    r.checks.push(Check::below("d-omega", t.d_omega, tol));
    r.detail("points", t.points);
    r.detail("charts", per_chart);
    Ok(())
}

fn curvature(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let b = s.b.unwrap_or_else(|| default_b(model));
    let g = model.default_metric_field();
    let j = model.j_field();
    let jv = model.j_value();
    let mut worst: f64 = 0.0;
    let (mut hmin, mut hmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut v = vec![0.0; model.dim()];
    v[0] = 1.0;
    for p in model.sample_points(s.seed, s.samples_or(20), 1.0) {
        worst = worst.max(constant_curvature_tensor(&g, &j, b, &p)?.max_abs());
        let gj = g(&Jet::seed(&p.coords, 2))?;
        let h = holomorphic_sectional_curvature(&riemann(&gj)?.values(), &gj.values(), &jv, &v);
        hmin = hmin.min(h);
        hmax = hmax.max(h);
    }
    r.checks.push(Check::below("curvature-r-plus-4bk", worst, s.tol_or(1e-7)));
    r.detail("B", b);
    r.detail("holomorphic-curvature-range", [hmin, hmax]);
    Ok(())
}

/// Default comparison matrix `diag(2, 1, ..., 1)`.
fn default_pair_matrix(n: usize) -> ComplexMatrix {
    let mut d = vec![1.0; n + 1];
    d[0] = 2.0;
    ComplexMatrix::diagonal(&d)
}

/// A second, independent comparison matrix for the commutator identity.
fn second_pair_matrix(n: usize) -> ComplexMatrix {
    let mut data = vec![(0.0, 0.0); (n + 1) * (n + 1)];
    for i in 0..=n {
        data[i * (n + 1) + i] = (1.0 + 0.25 * i as f64, 0.0);
    }
    data[1] = (0.3, 0.2);
    data[n * (n + 1)] = (0.1, 0.0);
    ComplexMatrix::new(n + 1, data).expect("square")
}

struct Pair {
    g: TensorField,
    j: TensorField,
    sol: HSolution,
}

fn pair_with(model: &KahlerModel, a: &ComplexMatrix, b: f64) -> Result<Pair, CliError> {
    let a0 = model
        .projective_matrix()
        .ok_or_else(|| CliError::Usage("this scenario needs an fs or pullback model".into()))?;
    let n = model.n();
    if a.size() != n + 1 {
        return Err(CliError::Usage(format!("matrix must be {0}x{0}", n + 1)));
    }
    let bar = KahlerModel::pullback(n, a0.mul(a))?;
    let g = model.default_metric_field();
    let sol = HSolution::from_pair(g.clone(), bar.default_metric_field()).with_fitted_mu(g.clone(), b);
    Ok(Pair { g, j: model.j_field(), sol })
}

fn pair(s: &Settings, model: &KahlerModel, b: f64) -> Result<Pair, CliError> {
    let a = s.a.clone().unwrap_or_else(|| default_pair_matrix(model.n()));
    pair_with(model, &a, b)
}

/// `λ̄^i = g^{ij} λ_α J^α_j`, valid in the default chart.
fn lambda_bar_field(model: &KahlerModel, p: &Pair) -> VectorFieldFn {
    let chart = model.default_chart().name.clone();
    let (g, j, lambda) = (p.g.clone(), p.j.clone(), p.sol.lambda.clone());
    Arc::new(move |x: &ChartPoint| {
        if x.chart != chart {
            return Err(hproj_core::Error::OutOfDomain(format!("field defined on {chart} only")));
        }
        let seeds = Jet::seed(&x.coords, 1);
        let ginv = inverse_metric(&g(&seeds)?.values())?;
        let lb = j_bar(&lambda(&seeds)?, &j(&seeds)?).values();
        let m = x.coords.len();
        Ok((0..m).map(|i| (0..m).map(|k| ginv.get(&[i, k]) * lb.get(&[k])).sum()).collect())
    })
}

fn hpr_check(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let b = s.b.unwrap_or_else(|| default_b(model));
    let p = pair(s, model, b)?;
    let pts = model.sample_points(s.seed, s.samples_or(20), 1.0);
    let (mut hpr, mut kill, mut ext, mut lmin) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    let mut bs = Vec::new();
    for (i, x) in pts.iter().enumerate() {
        hpr = hpr.max(hpr_residual(&p.g, &p.j, &p.sol, x)?);
        kill = kill.max(killing_residual(&p.g, &p.j, &p.sol, x)?);
        ext = ext.max(extended_residual(&p.g, &p.j, &p.sol, b, x)?.max());
        let l = (p.sol.lambda)(&Jet::seed(&x.coords, 1))?.values();
        lmin = lmin.min(l.comps().iter().map(|v| v * v).sum::<f64>().sqrt());
        if i < 10 {
            bs.push(estimate_b(&p.g, &p.sol, x)?.b);
        }
    }
    let bmean = bs.iter().sum::<f64>() / bs.len() as f64;
    let spread = bs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - bs.iter().cloned().fold(f64::INFINITY, f64::min);
    r.checks.push(Check::below("hpr-residual", hpr, s.tol_or(1e-7)));
    r.checks.push(Check::above("lambda-min-norm", lmin, 1e-6));
    r.checks.push(Check::below("killing-residual", kill, s.tol_or(1e-7)));
    r.checks.push(Check::below("extended-residual", ext, s.tol_or(1e-7)));
    r.checks.push(Check::below("b-estimate-error", (bmean - b).abs(), s.tol_or(1e-4)));
    r.checks.push(Check::below("b-estimate-spread", spread, s.tol_or(1e-4)));

    // Killing integral along geodesics
    let field = lambda_bar_field(model, &p);
    let runs = seeded_runs(model, s.seed ^ 0x9e37, 5, 0.5, 1.0, s.step);
    let mut drift: f64 = 0.0;
    for run in &runs {
        let v: Vec<f64> = run.v0.iter().map(|x| 0.5 * x).collect();
        let zero = hproj_core::curves::constant(0.0);
        let c = integrate_hplanar(model, &run.x0, &v, &zero, &zero, 1.0, s.step)?;
        drift = drift.max(killing_integral_drift(model, &c, &field)?);
    }
    r.checks.push(Check::below("killing-integral-drift", drift, s.tol_or(1e-7)));

    let q = pair_with(model, &second_pair_matrix(model.n()), b)?;
    let mut cmax: f64 = 0.0;
    let mut violated = false;
    for x in pts.iter().take(10) {
        let c = c_identity_check(&p.g, &p.sol, &q.sol, x)?;
        cmax = cmax.max(c.c_max).max(c.endpoint_residual);
        violated |= c.hypothesis_violated;
    }
    r.checks.push(Check::below("c-identity", cmax, s.tol_or(1e-6)));
    r.detail("B", b);
    r.detail("B-estimates", bs);
    r.detail("c-identity-hypothesis-violated", violated);
    Ok(())
}

fn mobility(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let mut cfg = s.mobility.clone();
    if s.b.is_some() {
        cfg.b = s.b;
    }
    cfg.seed = s.seed;
    cfg.step = s.step;
    let x0 = model.sample_points(s.seed, 1, 0.2).remove(0);
    let rep = degree_of_mobility(model, &x0, &cfg)?;
    let pr = Prolongation::new(model, &x0.chart, rep.b)?;
    let fresh: Vec<Vec<f64>> = model
        .sample_points(s.seed.wrapping_add(1), s.samples_or(10), 0.3)
        .into_iter()
        .map(|p| p.coords)
        .collect();
    let res = kernel_residuals(&pr, &rep.basis, &fresh, 1e-2, &TransportConfig::default())?;
    let worst = res.iter().cloned().fold(0.0, f64::max);
    r.checks.push(Check::below("kernel-residual", worst, s.tol_or(1e-5)));
    r.checks.push(Check::below(
        "trivial-solution-in-kernel",
        rep.trivial_solution_defect,
        s.tol_or(1e-8),
    ));
    if matches!(s.model, ModelDescriptor::FlatTorus { .. }) {
        let lmax = rep
            .basis
            .iter()
            .flat_map(|b| b.lambda.iter().chain(std::iter::once(&b.mu)))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        r.checks.push(Check::below("lambda-max", lmax, s.tol_or(1e-8)));
    }
    r.detail("label", &rep.label);
    r.detail("B", rep.b);
    r.detail("dimension", rep.dimension);
    r.detail("fiber-dimension", rep.fiber_dim);
    r.detail("rank", rep.rank);
    r.detail("batches", rep.batch_names.iter().zip(&rep.batch_ranks).collect::<Vec<_>>());
    r.detail("singular-values", &rep.singular_values);
    r.detail("sweep", &rep.sweep);
    r.detail("basis", &rep.basis);
    r.detail("kernel-residuals", res);
    Ok(())
}

fn spectral(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let b = s.b.unwrap_or_else(|| default_b(model));
    let p = pair(s, model, b)?;
    let (gn, soln) = normalize_b(p.g.clone(), &p.sol, b)?;
    let j = p.j.clone();
    let gval = |x: &ChartPoint| -> Result<TensorValue<f64>, CliError> { Ok(gn(&Jet::seed(&x.coords, 0))?.values()) };
    let pts = model.sample_points(s.seed, s.samples_or(10), 0.8);
    let x0 = &pts[0];
    let l = ExtendedOperator::build(&gn, &j, &soln, x0)?;
    let gv = gval(x0)?;
    let jv = model.j_value();
    let sym = l.self_adjoint_residual(&gv).max(l.j_commutation_residual(&jv, J2));
    r.checks.push(Check::below("operator-structure", sym, s.tol_or(1e-8)));

    let sq = l_product(&l, &l, &gv, s.tol_or(1e-8))?;
    r.checks.push(Check::below(
        "product-conditions",
        sq.commutation_residual.max(sq.orthogonality_residual),
        s.tol_or(1e-8),
    ));
    let ps = polynomial_solution(gn.clone(), j.clone(), &soln, vec![0.0, 0.0, 1.0])?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(extended_residual(&gn, &j, &ps, -1.0, x)?.max());
    }
    r.checks.push(Check::below("square-extended-residual", worst, s.tol_or(1e-5)));

    let mp0 = minimal_poly(&l, CLUSTER_TOL);
    let mut mpd: f64 = 0.0;
    for x in pts.iter().skip(1) {
        mpd = mpd.max(mp0.distance(&minimal_poly(&ExtendedOperator::build(&gn, &j, &soln, x)?, CLUSTER_TOL)));
    }
    r.checks.push(Check::below("minimal-polynomial-constancy", mpd, s.tol_or(1e-5)));

    let mu = soln.mu.clone().ok_or_else(|| CliError::Failure("solution has no mu".into()))?;
    let mut mu_max = f64::NEG_INFINITY;
    for x in model.sample_points(s.seed.wrapping_add(2), 20, 1.5) {
        mu_max = mu_max.max(mu(&Jet::seed(&x.coords, 2))?.value());
    }
    r.detail("B", b);
    r.detail("operator", OperatorDump::new(&l, CLUSTER_TOL));
    r.detail("minimal-polynomial-defective", mp0.defective);
    let proj = match make_projector(&l, ClusterChoice::AtLeast(mu_max), CLUSTER_TOL) {
        Ok(pj) => pj,
        Err(e) => {
            r.detail("projector-error", e.to_string());
            r.checks.push(Check::above("projector-available", 0.0, 1.0));
            return Ok(());
        }
    };
    r.checks.push(Check::below("projector-idempotency", proj.idempotency, s.tol_or(1e-8)));
    let pj = polynomial_solution(gn.clone(), j.clone(), &soln, proj.polynomial.clone())?;
    let pmu = pj.mu.clone().expect("polynomial solutions carry mu");
    let interior = model
        .sample_points(s.seed.wrapping_add(3), 50, 1.0)
        .into_iter()
        .find(|x| {
            pmu(&Jet::seed(&x.coords, 2))
                .map(|m| m.value() > 1e-3 && m.value() < 1.0 - 1e-3)
                .unwrap_or(false)
        });
    r.detail("projector-polynomial", &proj.polynomial);
    let Some(xi) = interior else {
        r.detail("eigenstructure", "no sample point with 0 < mu < 1");
        return Ok(());
    };
    let es = eigenstructure_report(&gn, &j, &pj, &xi, CLUSTER_TOL)?;
    let ok = es.case == ProjectorCase::Interior && es.matches_case;
    r.checks.push(Check::below("eigenstructure-multiplicities", if ok { 0.0 } else { 1.0 }, 0.5));
    r.checks.push(Check::below(
        "lambda-eigenspace-angle",
        es.lambda_span_angle.unwrap_or(f64::INFINITY),
        s.tol_or(1e-4),
    ));
    r.checks.push(Check::below("hessian-mu", hessian_mu_check(&gn, &pj, &xi)?, s.tol_or(1e-5)));
    r.detail("eigenstructure-point", &xi);
    r.detail("eigenstructure", &es);
    Ok(())
}

fn tanno(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let b = s.b.unwrap_or_else(|| default_b(model));
    let kappa = s.kappa.unwrap_or(b);
    let p = pair(s, model, b)?;
    let f = p.sol.lambda_scalar.clone();
    let ext = tanno_to_extended(p.g.clone(), f.clone(), kappa)?;
    let (mut t, mut lap, mut rt) = (0.0f64, 0.0f64, 0.0f64);
    for x in model.sample_points(s.seed, s.samples_or(10), 1.0) {
        t = t.max(tanno_residual(&p.g, &p.j, &f, kappa, &x)?);
        lap = lap.max(laplace_identity_residual(&p.g, &f, kappa, &x)?);
        rt = rt.max(distance_modulo_trivial(&p.g, &ext, &p.sol, kappa, &x)?.1);
    }
    r.checks.push(Check::below("tanno-residual", t, s.tol_or(1e-5)));
    r.checks.push(Check::below("laplace-identity", lap, s.tol_or(1e-5)));
    r.checks.push(Check::below("round-trip-modulo-trivial", rt, s.tol_or(1e-6)));
    r.detail("kappa", kappa);
    Ok(())
}

fn hplanar(s: &Settings, model: &KahlerModel, r: &mut Report) -> Result<(), CliError> {
    let radius = if model.projective_matrix().is_some() { 0.8 } else { 1.0 };
    let runs = seeded_runs(model, s.seed, s.samples_or(10), radius, 1.0, s.step);
    let curves = integrate_batch(model, &runs)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut defect: f64 = 0.0;
    let mut dev: Option<f64> = Some(0.0);
    for (run, c) in runs.iter().zip(&curves) {
        defect = defect.max(hplanarity_defects(model, c)?.into_iter().fold(0.0, f64::max));
        dev = match (dev, line_deviation(model, c, &run.x0, &run.v0)) {
            (Some(d), Ok(v)) => Some(d.max(v)),
            (_, Err(hproj_core::Error::UnsupportedModel(_))) | (None, _) => None,
            (_, Err(e)) => return Err(e.into()),
        };
    }
    r.checks.push(Check::below("hplanarity-defect", defect, s.tol_or(1e-6)));
    match dev {
        Some(d) => r.checks.push(Check::below("line-deviation", d, s.tol_or(1e-6))),
        None => r.detail("line-deviation", "not available for this model"),
    }
    let zero = hproj_core::curves::constant(0.0);
    let first = &runs[0];
    let geo = integrate_hplanar(model, &first.x0, &first.v0, &zero, &zero, 1.0, s.step)?;
    r.checks.push(Check::below("geodesic-energy-drift", energy_drift(model, &geo)?, s.tol_or(1e-8)));
    let ratio = step_halving_ratio(model, &first.x0, &first.v0, &first.alpha, &first.beta, 1.0, 0.05)?;
    // RK4 halves the error 16-fold; accept [12, 20]
    r.checks.push(Check::below("rk4-ratio-offset", (ratio - 16.0).abs(), 4.0));
    r.detail("rk4-ratio", ratio);
    r.detail(
        "runs",
        runs.iter()
            .map(|u| serde_json::json!({"x0": u.x0, "v0": u.v0, "alpha-beta": u.constants}))
            .collect::<Vec<_>>(),
    );
    if let Some(path) = &s.csv {
        let file = std::fs::File::create(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        write_csv(file, model, &curves[0], &first.x0, &first.v0)?;
        r.artifacts.push(path.display().to_string());
    }
    Ok(())
}
