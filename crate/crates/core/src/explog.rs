//! Riemannian exponential map of the weighted metrics and its local inverse.
//!
//! The exponential map integrates the geodesic flow to unit time. The
//! logarithm solves the shooting problem `exp(g0, u) = g1` by Gauss-Newton:
//! the linearized step comes from a small GMRES solve whose Jacobian-vector
//! products are central finite differences of the exponential map itself, and
//! a damped line search guards each update. Near the base point the Jacobian
//! is a small perturbation of the identity, which is what makes the shooting
//! iteration robust on the scales used here.

use crate::error::{Error, Result};
use crate::field::{MetricField, SymTensorField2};
use crate::geodesic::{integrate_geodesic, HaltReason, IntegrateOptions, Scheme};
use crate::operator::OperatorSpec;

/// Options for the exponential map: the time grid of the underlying
/// integrator (`t_final` is fixed to one).
#[derive(Clone, Copy, Debug)]
pub struct ExpMapOptions {
    pub dt: f64,
    pub scheme: Scheme,
    pub spd_floor: f64,
}

impl Default for ExpMapOptions {
    fn default() -> Self {
        ExpMapOptions {
            dt: 1e-3,
            scheme: Scheme::Rk4,
            spd_floor: 1e-6,
        }
    }
}

/// Endpoint `g(1)` of the geodesic with initial velocity `u0`.
///
/// Reaching the boundary of the positive cone before `t = 1` is an error for
/// the exponential map (the point has no image).
pub fn exp_map(
    op: &OperatorSpec,
    g0: &MetricField,
    u0: &SymTensorField2,
    options: &ExpMapOptions,
) -> Result<MetricField> {
    let opts = IntegrateOptions {
        dt: options.dt,
        t_final: 1.0,
        scheme: options.scheme,
        spd_floor: options.spd_floor,
        snapshot_target: 1,
        ..Default::default()
    };
    let traj = integrate_geodesic(op, g0, u0, &opts)?;
    if traj.halt != HaltReason::Completed {
        return Err(Error::BoundaryReached {
            t: traj.final_state().t,
        });
    }
    Ok(traj.final_state().g.clone())
}

/// Convergence report of the shooting iteration.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LogMapReport {
    pub iterations: usize,
    pub final_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LogMapOptions {
    pub exp: ExpMapOptions,
    /// Converged when the mismatch falls below `tol_rel * |g1 - g0|` in the
    /// flat reference norm.
    pub tol_rel: f64,
    pub max_iterations: usize,
    /// Finite-difference step for the Jacobian-vector products.
    pub jvp_eps: f64,
    /// Krylov subspace dimension of the inner solve.
    pub gmres_dim: usize,
    /// Relative inner tolerance (inexact Newton forcing term).
    pub gmres_tol: f64,
}

impl Default for LogMapOptions {
    fn default() -> Self {
        LogMapOptions {
            exp: ExpMapOptions::default(),
            tol_rel: 1e-8,
            max_iterations: 50,
            jvp_eps: 1e-5,
            gmres_dim: 8,
            gmres_tol: 0.05,
        }
    }
}

/// Initial velocity `u` with `exp(g0, u) = g1`, for `g1` in the shooting
/// region around `g0`. Returns the velocity and a convergence report.
pub fn log_map(
    op: &OperatorSpec,
    g0: &MetricField,
    g1: &MetricField,
    options: &LogMapOptions,
) -> Result<(SymTensorField2, LogMapReport)> {
    let target_scale = (g1.sym() - g0.sym()).flat_norm();
    if target_scale == 0.0 {
        return Ok((
            SymTensorField2::zeros(*g0.grid()),
            LogMapReport {
                iterations: 0,
                final_residual: 0.0,
            },
        ));
    }
    let tol = options.tol_rel * target_scale;

    // Mismatch of the shot. Boundary events and solver blow-ups surface as
    // None so the line search can back off: both mean the trial velocity
    // left the basin the shooting iteration works in.
    let shoot = |u: &SymTensorField2| -> Result<Option<SymTensorField2>> {
        match exp_map(op, g0, u, &options.exp) {
            Ok(end) => Ok(Some(end.sym() - g1.sym())),
            Err(Error::BoundaryReached { .. })
            | Err(Error::CgDidNotConverge { .. })
            | Err(Error::NonFinite(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut u = g1.sym() - g0.sym();
    let mut residual = match shoot(&u)? {
        Some(r) => r,
        None => {
            // Even the linear guess leaves the cone; start from zero.
            u = SymTensorField2::zeros(*g0.grid());
            shoot(&u)?.expect("zero velocity stays at g0")
        }
    };
    let mut res_norm = residual.flat_norm();

    for it in 0..options.max_iterations {
        if res_norm <= tol {
            return Ok((
                u,
                LogMapReport {
                    iterations: it,
                    final_residual: res_norm,
                },
            ));
        }

        // Jacobian-vector product by central differences of the shot.
        let u_scale = u.flat_norm().max(target_scale);
        let jvp = |v: &SymTensorField2| -> Result<SymTensorField2> {
            let vn = v.flat_norm().max(1e-300);
            let eps = options.jvp_eps * u_scale.max(1.0) / vn;
            let up = SymTensorField2::linear_comb(1.0, &u, eps, v);
            let um = SymTensorField2::linear_comb(1.0, &u, -eps, v);
            match (shoot(&up)?, shoot(&um)?) {
                (Some(fp), Some(fm)) => {
                    Ok(SymTensorField2::linear_comb(0.5 / eps, &fp, -0.5 / eps, &fm))
                }
                // A probe left the cone: fall back to the identity model.
                _ => Ok(v.clone()),
            }
        };

        let step = gmres(&jvp, &residual, options.gmres_dim, options.gmres_tol)?;

        // Damped line search on the mismatch norm, halving up to 20 times.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = SymTensorField2::linear_comb(1.0, &u, -alpha, &step);
            if let Some(r) = shoot(&trial)? {
                let n = r.flat_norm();
                if n < res_norm {
                    u = trial;
                    residual = r;
                    res_norm = n;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::LogMapDidNotConverge {
                iterations: it + 1,
                residual: res_norm / target_scale,
            });
        }
    }
    if res_norm <= tol {
        return Ok((
            u,
            LogMapReport {
                iterations: options.max_iterations,
                final_residual: res_norm,
            },
        ));
    }
    Err(Error::LogMapDidNotConverge {
        iterations: options.max_iterations,
        residual: res_norm / target_scale,
    })
}

/// Restarted-free GMRES(m) in the flat inner product for the square shooting
/// system `J step = residual`; small dense Arnoldi with Givens rotations.
fn gmres(
    apply: &impl Fn(&SymTensorField2) -> Result<SymTensorField2>,
    rhs: &SymTensorField2,
    m: usize,
    rel_tol: f64,
) -> Result<SymTensorField2> {
    let beta = rhs.flat_norm();
    if beta == 0.0 {
        return Ok(rhs.clone());
    }
    let mut basis = vec![rhs.scale(1.0 / beta)];
    let mut hess = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut gvec = vec![0.0; m + 1];
    gvec[0] = beta;

    let mut used = 0;
    for j in 0..m {
        let mut w = apply(&basis[j])?;
        for (i, v) in basis.iter().enumerate() {
            let hij = w.flat_inner(v);
            hess[i * m + j] = hij;
            w = SymTensorField2::linear_comb(1.0, &w, -hij, v);
        }
        let hnext = w.flat_norm();
        // Apply accumulated rotations to the new column.
        for i in 0..j {
            let t = cs[i] * hess[i * m + j] + sn[i] * hess[(i + 1) * m + j];
            hess[(i + 1) * m + j] = -sn[i] * hess[i * m + j] + cs[i] * hess[(i + 1) * m + j];
            hess[i * m + j] = t;
        }
        let denom = (hess[j * m + j] * hess[j * m + j] + hnext * hnext).sqrt();
        if denom == 0.0 {
            used = j;
            break;
        }
        cs[j] = hess[j * m + j] / denom;
        sn[j] = hnext / denom;
        hess[j * m + j] = denom;
        gvec[j + 1] = -sn[j] * gvec[j];
        gvec[j] *= cs[j];
        used = j + 1;
        if gvec[j + 1].abs() / beta <= rel_tol || hnext == 0.0 {
            break;
        }
        basis.push(w.scale(1.0 / hnext));
    }

    // Back substitution for the least-squares coefficients.
    let mut y = vec![0.0; used];
    for i in (0..used).rev() {
        let mut acc = gvec[i];
        for k in i + 1..used {
            acc -= hess[i * m + k] * y[k];
        }
        y[i] = acc / hess[i * m + i];
    }
    let mut step = SymTensorField2::zeros(*rhs.grid());
    for (i, coeff) in y.iter().enumerate() {
        step = SymTensorField2::linear_comb(1.0, &step, *coeff, &basis[i]);
    }
    Ok(step)
}
