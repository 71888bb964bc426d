//! Fourth-order central differences, used to cross-check jet derivatives.

use crate::error::{Error, Result};
use crate::geometry::TensorField;
use crate::jet::Jet;
use crate::tensor::{Slot, TensorValue};

pub const DEFAULT_STEP: f64 = 1e-4;

const STENCIL: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];

fn shifted(x: &[f64], k: usize, d: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] += d;
    y
}

/// Partial derivative of `f` at `x` along the coordinate indices `idx` (at most two).
pub fn partial<F>(f: &F, x: &[f64], idx: &[usize], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    match idx {
        [] => f(x),
        [k] => {
            let mut acc = 0.0;
            for (o, w) in STENCIL {
                acc += w * f(&shifted(x, *k, o * h))?;
            }
            Ok(acc / (12.0 * h))
        }
        [k, l] if k == l => {
            let c = f(x)?;
            let mut acc = -30.0 * c;
            for (o, w) in [(-2.0, -1.0), (-1.0, 16.0), (1.0, 16.0), (2.0, -1.0)] {
                acc += w * f(&shifted(x, *k, o * h))?;
            }
            Ok(acc / (12.0 * h * h))
        }
        [k, l] => {
            let mut acc = 0.0;
            for (o, w) in STENCIL {
                acc += w * partial(f, &shifted(x, *k, o * h), &[*l], h)?;
            }
            Ok(acc / (12.0 * h))
        }
        _ => Err(Error::FiniteDifferenceOrder(idx.len())),
    }
}

/// `∂_k T` for every component of a tensor field, derivative index appended last.
pub fn tensor_partials(field: &TensorField, x: &[f64], h: f64) -> Result<TensorValue<f64>> {
    let eval = |y: &[f64]| -> Result<TensorValue<f64>> { Ok(field(&Jet::seed(y, 0))?.values()) };
    let base = eval(x)?;
    let m = x.len();
    let mut variance = base.variance().to_vec();
    variance.push(Slot::Lower);
    let mut out = TensorValue::<f64>::zeros(variance, m);
    let ncomp = base.comps().len();
    for k in 0..m {
        let mut acc = vec![0.0; ncomp];
        for (o, w) in STENCIL {
            let t = eval(&shifted(x, k, o * h))?;
            for (a, v) in acc.iter_mut().zip(t.comps()) {
                *a += w * v;
            }
        }
        for (c, a) in acc.iter().enumerate() {
            out.comps_mut()[c * m + k] = a / (12.0 * h);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ChartPoint;
    use crate::geometry::MetricJet;
    use crate::models::KahlerModel;

    #[test]
    fn matches_jets_on_fubini_study() {
        let fs = KahlerModel::fubini_study(2).unwrap();
        let field = fs.default_metric_field();
        let p = ChartPoint::new("affine0", vec![0.3, -0.1, 0.2, 0.5]);
        let mj = MetricJet::evaluate(&field, &p, 2).unwrap();
        let dg = mj.dg().unwrap();
        let fd = tensor_partials(&field, &p.coords, DEFAULT_STEP).unwrap();
        assert!(dg.sub(&fd).unwrap().max_abs() < 1e-6);

        let d2 = mj.d2g().unwrap();
        for k in 0..4 {
            for l in 0..4 {
                let f = |y: &[f64]| -> Result<f64> { Ok(field(&Jet::seed(y, 0))?.get(&[0, 1]).value()) };
                let v = partial(&f, &p.coords, &[k, l], DEFAULT_STEP).unwrap();
                assert!((v - d2.get(&[0, 1, k, l])).abs() < 1e-6, "{k}{l}");
            }
        }
    }

    #[test]
    fn third_order_is_rejected() {
        let f = |y: &[f64]| -> Result<f64> { Ok(y[0]) };
        assert_eq!(
            partial(&f, &[0.0], &[0, 0, 0], 1e-3),
            Err(Error::FiniteDifferenceOrder(3))
        );
    }
}
