//! Geodesics of the operator-weighted metrics, integrated as the first-order
//! flow of the momentum pair `(g, h = P_g g_t)`:
//!
//! ```text
//! g_t = P_g^-1 h
//! h_t = 1/2 ((D_(g,.) P) u)*(u) + 1/4 g Tr(g^-1 h g^-1 u)
//!       + 1/2 (u g^-1 h + h g^-1 u) - 1/2 Tr(g^-1 u) h,      u = P_g^-1 h
//! ```
//!
//! together with the conserved monitors: the kinetic energy `G^P(g_t, g_t)`
//! and the momentum density `(nabla* h) vol(g)`, which is constant in time
//! because the metrics are diffeomorphism invariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, SymTensorField2, TensorField};
use crate::geometry::Geometry;
use crate::grid::Grid;
use crate::operator::OperatorSpec;

/// One point of the flow: the metric, the momentum `h = P_g g_t`, the time.
#[derive(Clone, Debug)]
pub struct GeodesicState {
    pub g: MetricField,
    pub h: SymTensorField2,
    pub t: f64,
}

/// Conserved-quantity record, one per accepted step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub energy: f64,
    /// Sup-norm drift of the momentum density relative to its initial size
    /// (absolute when the initial momentum vanishes).
    pub momentum_drift: f64,
    /// Smallest metric eigenvalue over the grid, relative to its initial value.
    pub spd_margin: f64,
    pub step_size: f64,
}

/// Why the integrator stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    /// The metric approached the boundary of the positive cone. Expected:
    /// the space of metrics is geodesically incomplete.
    SpdFloor,
    NonFinite,
}

/// Time-integration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Rk4Adaptive,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Halt when min-eigenvalue(g) falls below this fraction of its start.
    pub spd_floor: f64,
    /// Local error target for the adaptive scheme.
    pub local_error_tol: f64,
    /// Store roughly this many state snapshots (monitors are kept per step).
    pub snapshot_target: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::Rk4,
            spd_floor: 1e-6,
            local_error_tol: 1e-8,
            snapshot_target: 100,
        }
    }
}

/// The computed flow: thinned states, per-step monitors, and the halt status.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    pub monitors: Vec<MonitorRecord>,
    pub halt: HaltReason,
    pub op: OperatorSpec,
    pub grid: Grid,
    pub options: IntegrateOptions,
}

impl Trajectory {
    pub fn boundary_reached(&self) -> bool {
        self.halt != HaltReason::Completed
    }

    pub fn final_state(&self) -> &GeodesicState {
        self.states.last().expect("at least the initial state")
    }
}

/// The metric gradient in the first argument of the defining pairing:
/// `D_(g,m) G^P(h, k) = G^P(K(h, m), k)`.
pub fn gradient_k(
    op: &OperatorSpec,
    geom: &Geometry,
    h: &SymTensorField2,
    m: &SymTensorField2,
) -> Result<SymTensorField2> {
    let ph = op.apply(geom, h)?;
    let mut inner = op.derivative(geom, m, h)?;
    inner = &inner - &geom.sym_pair(m, &ph);
    let tr = geom.trace_inv(m);
    inner = &inner + &ph.mul_scalar_field(&tr.map(|v| 0.5 * v));
    op.solve(geom, &inner)
}

/// The metric gradient in the second argument:
/// `D_(g,m) G^P(h, k) = G^P(m, H(h, k))`.
pub fn gradient_h(
    op: &OperatorSpec,
    geom: &Geometry,
    h: &SymTensorField2,
    k: &SymTensorField2,
) -> Result<SymTensorField2> {
    let ph = op.apply(geom, h)?;
    let mut inner = op.derivative_adjoint(geom, h, k)?;
    inner = &inner - &geom.sym_pair(&ph, k);
    let s = geom.inner02(&ph, k);
    inner = &inner + &geom.g_sym().mul_scalar_field(&s.map(|v| 0.5 * v));
    op.solve(geom, &inner)
}

/// Right-hand side of the first-order system; `u_guess` warm-starts the
/// operator solve and the returned `u = P^-1 h` can seed the next stage.
fn flow_field_inner(
    op: &OperatorSpec,
    geom: &Geometry,
    h: &SymTensorField2,
    u_guess: Option<&SymTensorField2>,
) -> Result<(SymTensorField2, SymTensorField2)> {
    let u = op.solve_with_guess(geom, h, u_guess)?;
    let adj = op.derivative_adjoint(geom, &u, &u)?;
    let s1 = geom.inner02(h, &u);
    let s2 = geom.trace_inv(&u);
    let mut dh = adj.scale(0.5);
    dh = &dh + &geom.g_sym().mul_scalar_field(&s1.map(|v| 0.25 * v));
    dh = &dh + &geom.sym_pair(&u, h).scale(0.5);
    dh = &dh - &h.mul_scalar_field(&s2.map(|v| 0.5 * v));
    Ok((u, dh))
}

/// The autonomous vector field `(g, h) -> (X1, X2)` driving the geodesic flow.
pub fn flow_field(
    op: &OperatorSpec,
    state: &GeodesicState,
) -> Result<(SymTensorField2, SymTensorField2)> {
    let geom = Geometry::new(&state.g)?;
    flow_field_inner(op, &geom, &state.h, None)
}

/// Kinetic energy `G^P(g_t, g_t) = integral g(h, P^-1 h) vol`.
pub fn energy(op: &OperatorSpec, state: &GeodesicState) -> Result<f64> {
    let geom = Geometry::new(&state.g)?;
    let u = op.solve(&geom, &state.h)?;
    Ok(geom.integrated_inner_sym(&state.h, &u))
}

/// The momentum density `(nabla* h) vol(g)`: a one-form paired with the
/// volume density, constant in time along geodesics.
#[derive(Clone, Debug)]
pub struct CovectorDensityField {
    pub covector: TensorField,
    pub density: ScalarField,
}

impl CovectorDensityField {
    /// Components of the product `mu_a = (nabla* h)_a vol`.
    pub fn weighted(&self) -> TensorField {
        self.covector.mul_scalar_field(&self.density)
    }

    pub fn max_abs(&self) -> f64 {
        self.weighted().max_abs()
    }
}

pub fn momentum_density(op: &OperatorSpec, state: &GeodesicState) -> Result<CovectorDensityField> {
    let _ = op;
    let geom = Geometry::new(&state.g)?;
    let div = geom.nabla_star(&state.h.to_full())?;
    Ok(CovectorDensityField {
        covector: div,
        density: geom.volume_density().clone(),
    })
}

struct StepOutput {
    g: SymTensorField2,
    h: SymTensorField2,
    u_last: SymTensorField2,
}

/// One classical RK4 step; errors out if any stage leaves the positive cone.
/// The geometry of the departure state is shared with the caller's monitors.
fn rk4_step(
    op: &OperatorSpec,
    geom1: &Geometry,
    g: &SymTensorField2,
    h: &SymTensorField2,
    dt: f64,
    u_seed: Option<&SymTensorField2>,
) -> Result<StepOutput> {
    let stage_geom = |gs: &SymTensorField2| -> Result<Geometry> {
        let m = MetricField::new(gs.clone())?;
        Geometry::new(&m)
    };
    let (k1g, k1h) = flow_field_inner(op, geom1, h, u_seed)?;

    let g2 = SymTensorField2::linear_comb(1.0, g, 0.5 * dt, &k1g);
    let h2 = SymTensorField2::linear_comb(1.0, h, 0.5 * dt, &k1h);
    let geom2 = stage_geom(&g2)?;
    let (k2g, k2h) = flow_field_inner(op, &geom2, &h2, Some(&k1g))?;

    let g3 = SymTensorField2::linear_comb(1.0, g, 0.5 * dt, &k2g);
    let h3 = SymTensorField2::linear_comb(1.0, h, 0.5 * dt, &k2h);
    let geom3 = stage_geom(&g3)?;
    let (k3g, k3h) = flow_field_inner(op, &geom3, &h3, Some(&k2g))?;

    let g4 = SymTensorField2::linear_comb(1.0, g, dt, &k3g);
    let h4 = SymTensorField2::linear_comb(1.0, h, dt, &k3h);
    let geom4 = stage_geom(&g4)?;
    let (k4g, k4h) = flow_field_inner(op, &geom4, &h4, Some(&k3g))?;

    let combine = |y: &SymTensorField2,
                   k1: &SymTensorField2,
                   k2: &SymTensorField2,
                   k3: &SymTensorField2,
                   k4: &SymTensorField2| {
        let mut acc = SymTensorField2::linear_comb(1.0, k1, 2.0, k2);
        acc = SymTensorField2::linear_comb(1.0, &acc, 2.0, k3);
        acc = SymTensorField2::linear_comb(1.0, &acc, 1.0, k4);
        SymTensorField2::linear_comb(1.0, y, dt / 6.0, &acc)
    };
    let g_new = combine(g, &k1g, &k2g, &k3g, &k4g);
    let h_new = combine(h, &k1h, &k2h, &k3h, &k4h);
    if !g_new.is_finite() || !h_new.is_finite() {
        return Err(Error::NonFinite("rk4 step"));
    }
    Ok(StepOutput {
        g: g_new,
        h: h_new,
        u_last: k4g,
    })
}

/// Integrates the geodesic with initial velocity `u0`, so `h(0) = P_g0 u0`.
///
/// Hitting the SPD floor is a reported boundary event, not a failure: the
/// space of metrics is open and geodesics genuinely leave it in finite time.
pub fn integrate_geodesic(
    op: &OperatorSpec,
    g0: &MetricField,
    u0: &SymTensorField2,
    options: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(options.dt > 0.0) || !(options.t_final >= 0.0) {
        return Err(Error::NonFinite("integration options"));
    }
    let geom0 = Geometry::new(g0)?;
    let h0 = op.apply(&geom0, u0)?;
    let min_eig0 = g0.min_eigenvalue();

    let total_steps = (options.t_final / options.dt).ceil() as usize;
    let snap_stride = (total_steps / options.snapshot_target.max(1)).max(1);

    let mu0 = {
        let div = geom0.nabla_star(&h0.to_full())?;
        div.mul_scalar_field(geom0.volume_density())
    };
    let mu0_norm = mu0.max_abs();
    // Floor for the relative drift denominator, tied to the field scale.
    let mu_floor = 1e-12 * h0.max_abs().max(1e-300);

    let mut monitors = Vec::with_capacity(total_steps + 1);
    let mut states = Vec::new();

    let monitor = |geom: &Geometry,
                   g: &MetricField,
                   h: &SymTensorField2,
                   t: f64,
                   dt: f64,
                   u_seed: Option<&SymTensorField2>|
     -> Result<MonitorRecord> {
        let u = op.solve_with_guess(geom, h, u_seed)?;
        let energy = geom.integrated_inner_sym(h, &u);
        let mu = geom
            .nabla_star(&h.to_full())?
            .mul_scalar_field(geom.volume_density());
        let drift = (&mu - &mu0).max_abs() / mu0_norm.max(mu_floor);
        let margin = g.min_eigenvalue() / min_eig0;
        if !energy.is_finite() {
            return Err(Error::NonFinite("energy monitor"));
        }
        Ok(MonitorRecord {
            t,
            energy,
            momentum_drift: drift,
            spd_margin: margin,
            step_size: dt,
        })
    };

    let mut g = g0.clone();
    let mut h = h0.clone();
    let mut geom = Geometry::new(&g)?;
    let mut t = 0.0;
    let mut dt = options.dt;
    let mut u_seed: Option<SymTensorField2> = None;
    let mut halt = HaltReason::Completed;
    let mut step_index = 0usize;

    monitors.push(monitor(&geom, &g, &h, 0.0, dt, None)?);
    states.push(GeodesicState {
        g: g.clone(),
        h: h.clone(),
        t: 0.0,
    });

    while t < options.t_final - 1e-14 {
        let dt_step = dt.min(options.t_final - t);
        let attempt = match options.scheme {
            Scheme::Rk4 => rk4_step(op, &geom, g.sym(), &h, dt_step, u_seed.as_ref()),
            Scheme::Rk4Adaptive => {
                // Step doubling: one full step vs two half steps.
                match (
                    rk4_step(op, &geom, g.sym(), &h, dt_step, u_seed.as_ref()),
                    rk4_step(op, &geom, g.sym(), &h, 0.5 * dt_step, u_seed.as_ref()),
                ) {
                    (Ok(full), Ok(half1)) => {
                        let geom_half = MetricField::new(half1.g.clone())
                            .and_then(|m| Geometry::new(&m));
                        match geom_half.and_then(|gh| {
                            rk4_step(op, &gh, &half1.g, &half1.h, 0.5 * dt_step, Some(&half1.u_last))
                        }) {
                            Ok(half2) => {
                                let err = (&full.g - &half2.g)
                                    .max_abs()
                                    .max((&full.h - &half2.h).max_abs())
                                    / 15.0;
                                if err > options.local_error_tol && dt_step > 1e-12 {
                                    dt = (0.5 * dt_step).max(1e-12);
                                    continue;
                                }
                                if err < 0.02 * options.local_error_tol {
                                    dt = (2.0 * dt_step).min(100.0 * options.dt);
                                }
                                Ok(half2)
                            }
                            Err(e) => Err(e),
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            }
        };

        let step = match attempt {
            Ok(s) => s,
            Err(Error::NotSpd { .. }) | Err(Error::NearSingular { .. }) => {
                halt = HaltReason::SpdFloor;
                break;
            }
            Err(Error::NonFinite(_)) => {
                halt = HaltReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };

        let g_new = match MetricField::new(step.g) {
            Ok(m) => m,
            Err(_) => {
                halt = HaltReason::SpdFloor;
                break;
            }
        };
        if g_new.min_eigenvalue() / min_eig0 < options.spd_floor {
            halt = HaltReason::SpdFloor;
            break;
        }

        g = g_new;
        h = step.h;
        t += dt_step;
        step_index += 1;
        u_seed = Some(step.u_last);
        geom = Geometry::new(&g)?;

        monitors.push(monitor(&geom, &g, &h, t, dt_step, u_seed.as_ref())?);
        if step_index % snap_stride == 0 || t >= options.t_final - 1e-14 {
            states.push(GeodesicState {
                g: g.clone(),
                h: h.clone(),
                t,
            });
        }
    }

    if states.last().map(|s| s.t) != Some(t) {
        states.push(GeodesicState {
            g: g.clone(),
            h: h.clone(),
            t,
        });
    }

    Ok(Trajectory {
        states,
        monitors,
        halt,
        op: op.clone(),
        grid: *g0.grid(),
        options: *options,
    })
}

/// Path length: composite trapezoid of `sqrt(energy)` over the monitors.
pub fn path_length(trajectory: &Trajectory) -> f64 {
    let m = &trajectory.monitors;
    if m.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for w in m.windows(2) {
        let speed0 = w[0].energy.max(0.0).sqrt();
        let speed1 = w[1].energy.max(0.0).sqrt();
        acc += 0.5 * (speed0 + speed1) * (w[1].t - w[0].t);
    }
    acc
}
