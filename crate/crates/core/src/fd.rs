//! Central finite differences in the metric direction, with one Richardson
//! refinement. These drive both the independent verification oracles and the
//! finite-difference operators of the Ricci module.

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, SymTensorField2, TensorField};

/// Values that can be linearly combined, so one differencing routine serves
/// scalars and every field type.
pub trait Linear: Sized {
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self;
}

impl Linear for f64 {
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        a * x + b * y
    }
}

impl Linear for ScalarField {
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let vals = x
            .values()
            .iter()
            .zip(y.values())
            .map(|(u, v)| a * u + b * v)
            .collect();
        ScalarField::from_values(*x.grid(), vals).expect("same grid")
    }
}

impl Linear for TensorField {
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        TensorField::linear_comb(a, x, b, y)
    }
}

impl Linear for SymTensorField2 {
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        SymTensorField2::linear_comb(a, x, b, y)
    }
}

/// Step size for a direction `m` relative to the metric scale.
pub fn directional_step(g: &MetricField, m: &SymTensorField2, eps_rel: f64) -> f64 {
    let scale = g.sym().max_abs().max(1e-12);
    let dir = m.max_abs().max(1e-12);
    eps_rel * scale / dir
}

/// Central difference `(f(g + eps m) - f(g - eps m)) / (2 eps)`.
///
/// If a probe leaves the positive cone the step is halved, up to a limit.
pub fn central<T: Linear>(
    g: &MetricField,
    m: &SymTensorField2,
    eps: f64,
    f: &impl Fn(&MetricField) -> Result<T>,
) -> Result<T> {
    let mut eps = eps;
    for _ in 0..40 {
        let plus = MetricField::new(SymTensorField2::linear_comb(1.0, g.sym(), eps, m));
        let minus = MetricField::new(SymTensorField2::linear_comb(1.0, g.sym(), -eps, m));
        if let (Ok(gp), Ok(gm)) = (plus, minus) {
            // A probe that degenerates inside the evaluation also backs off.
            match (f(&gp), f(&gm)) {
                (Ok(fp), Ok(fm)) => {
                    return Ok(T::lin(0.5 / eps, &fp, -0.5 / eps, &fm));
                }
                (Err(Error::NotSpd { .. }), _)
                | (Err(Error::NearSingular { .. }), _)
                | (_, Err(Error::NotSpd { .. }))
                | (_, Err(Error::NearSingular { .. })) => {}
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        eps *= 0.5;
    }
    Err(Error::ProbeLeftCone)
}

/// Richardson-refined central difference: combines steps `eps` and `eps/2`
/// to cancel the leading quadratic error, `(4 D(eps/2) - D(eps)) / 3`.
pub fn richardson<T: Linear>(
    g: &MetricField,
    m: &SymTensorField2,
    eps: f64,
    f: &impl Fn(&MetricField) -> Result<T>,
) -> Result<T> {
    let coarse = central(g, m, eps, f)?;
    let fine = central(g, m, 0.5 * eps, f)?;
    Ok(T::lin(4.0 / 3.0, &fine, -1.0 / 3.0, &coarse))
}

/// Observed convergence order from two error samples under mesh doubling.
/// Errors at the round-off floor count as converged.
pub fn observed_order(err_coarse: f64, err_fine: f64) -> f64 {
    if err_fine < 1e-12 && err_coarse < 1e-12 {
        return f64::INFINITY;
    }
    (err_coarse / err_fine.max(1e-300)).log2()
}
