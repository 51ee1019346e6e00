//! The operator families behind the weak Riemannian metrics
//! `G^P_g(h, k) = integral of g(P_g h, k) vol(g)`:
//!
//! * `identity` — `P h = h`, the plain `L^2` metric;
//! * `conformal` — `P h = Phi(Vol(g)) h`, weighting by total volume;
//! * `curvature` — `P h = Phi(Scal(g)) h`, weighting by scalar curvature;
//! * `sobolev` — `P h = (1 + Delta)^p h` with the Bochner Laplacian.
//!
//! Each family exposes application, inversion, the directional derivative in
//! the metric, and the adjoint of that derivative, which together feed the
//! geodesic equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{integrate_density, ScalarField, Slot, SymTensorField2, TensorField};
use crate::geometry::Geometry;

/// A positive scalar weight function with its derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiFunction {
    /// `Phi(u) = u^k` (positive arguments).
    Power { k: f64 },
    /// `Phi(u) = a + b exp(u)`.
    AffineExp { a: f64, b: f64 },
    /// `Phi(u) = c_0 + c_1 u + ...`.
    Polynomial { coeffs: Vec<f64> },
}

impl PhiFunction {
    pub fn value(&self, u: f64) -> f64 {
        match self {
            PhiFunction::Power { k } => u.powf(*k),
            PhiFunction::AffineExp { a, b } => a + b * u.exp(),
            PhiFunction::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            PhiFunction::Power { k } => k * u.powf(k - 1.0),
            PhiFunction::AffineExp { b, .. } => b * u.exp(),
            PhiFunction::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for i in (1..coeffs.len()).rev() {
                    acc = acc * u + i as f64 * coeffs[i];
                }
                acc
            }
        }
    }

    /// Polynomial growth bound `Phi(u) <= C (1 + |u|^(2k))`, when one exists.
    /// Drives the finiteness criterion `n > 8k` of the curvature-family
    /// shrinking length.
    pub fn poly_bound(&self) -> Option<(f64, f64)> {
        match self {
            PhiFunction::Power { k } if *k >= 0.0 => Some((1.0, 0.5 * k)),
            PhiFunction::Power { .. } => None,
            PhiFunction::AffineExp { a, b } => {
                if *b == 0.0 {
                    Some((a.abs().max(1e-300), 0.0))
                } else {
                    None
                }
            }
            PhiFunction::Polynomial { coeffs } => {
                let deg = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
                let c: f64 = coeffs.iter().map(|c| c.abs()).sum();
                Some((c.max(1e-300), 0.5 * deg as f64))
            }
        }
    }
}

/// Adjoint form for the curvature-weighted family. The derivative weight can
/// either be pulled inside the second-order operators (the variant consistent
/// with integration by parts when the weight varies) or kept outside them.
/// The pairing checks arbitrate; `ProductRule` is the one that satisfies them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureAdjointForm {
    #[default]
    ProductRule,
    LiteralDisplay,
}

/// Which operator family, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OperatorFamily {
    Identity,
    Conformal { phi: PhiFunction },
    Curvature { phi: PhiFunction },
    Sobolev { p: u32 },
}

/// Iterative solver options for the Sobolev family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cg_tol: 1e-10,
            cg_max_iter: 20_000,
        }
    }
}

fn is_default_solver(s: &SolverOptions) -> bool {
    *s == SolverOptions::default()
}

fn is_default_adjoint(f: &CurvatureAdjointForm) -> bool {
    *f == CurvatureAdjointForm::default()
}

/// A fully specified inner-product operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    #[serde(flatten)]
    pub family: OperatorFamily,
    #[serde(default, skip_serializing_if = "is_default_solver")]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "is_default_adjoint")]
    pub curvature_adjoint: CurvatureAdjointForm,
}

impl OperatorSpec {
    pub fn new(family: OperatorFamily) -> Self {
        OperatorSpec {
            family,
            solver: SolverOptions::default(),
            curvature_adjoint: CurvatureAdjointForm::default(),
        }
    }

    pub fn identity() -> Self {
        Self::new(OperatorFamily::Identity)
    }

    pub fn conformal(phi: PhiFunction) -> Self {
        Self::new(OperatorFamily::Conformal { phi })
    }

    pub fn curvature_weighted(phi: PhiFunction) -> Self {
        Self::new(OperatorFamily::Curvature { phi })
    }

    pub fn sobolev(p: u32) -> Self {
        Self::new(OperatorFamily::Sobolev { p })
    }

    pub fn with_adjoint_form(mut self, form: CurvatureAdjointForm) -> Self {
        self.curvature_adjoint = form;
        self
    }

    /// Positive pointwise weight for the scalar families.
    fn scalar_weight(&self, geom: &Geometry) -> Option<ScalarField> {
        match &self.family {
            OperatorFamily::Conformal { phi } => {
                let w = phi.value(geom.total_volume());
                Some(ScalarField::from_fn(*geom.grid(), |_, _| w))
            }
            OperatorFamily::Curvature { phi } => {
                Some(geom.curvature().scal.map(|u| phi.value(u)))
            }
            _ => None,
        }
    }

    /// `P_g h`.
    pub fn apply(&self, geom: &Geometry, h: &SymTensorField2) -> Result<SymTensorField2> {
        match &self.family {
            OperatorFamily::Identity => Ok(h.clone()),
            OperatorFamily::Conformal { .. } | OperatorFamily::Curvature { .. } => {
                let w = self.scalar_weight(geom).expect("scalar family weight");
                Ok(h.mul_scalar_field(&w))
            }
            OperatorFamily::Sobolev { p } => {
                let mut full = h.to_full();
                for _ in 0..*p {
                    full = &full + &geom.bochner_laplacian(&full);
                }
                SymTensorField2::from_full(&full)
            }
        }
    }

    /// Solves `P_g h = k` for `h`.
    pub fn solve(&self, geom: &Geometry, k: &SymTensorField2) -> Result<SymTensorField2> {
        self.solve_with_guess(geom, k, None)
    }

    /// Same, warm-started from `guess` when available (the integrator reuses
    /// the previous stage's solution).
    pub fn solve_with_guess(
        &self,
        geom: &Geometry,
        k: &SymTensorField2,
        guess: Option<&SymTensorField2>,
    ) -> Result<SymTensorField2> {
        match &self.family {
            OperatorFamily::Identity => Ok(k.clone()),
            OperatorFamily::Conformal { .. } | OperatorFamily::Curvature { .. } => {
                let w = self.scalar_weight(geom).expect("scalar family weight");
                let min = w.values().iter().cloned().fold(f64::INFINITY, f64::min);
                if !(min > 0.0) {
                    return Err(Error::NonPositiveWeight(min));
                }
                Ok(k.mul_scalar_field(&w.map(|v| 1.0 / v)))
            }
            OperatorFamily::Sobolev { p } => self.cg_solve(geom, k, *p, guess),
        }
    }

    /// Conjugate gradients on `(1 + Delta)^p` in the integrated inner product.
    /// The operator has spectrum bounded below by one; discretization makes it
    /// only approximately self-adjoint, so the true residual is monitored and
    /// the loop restarts if it stalls.
    fn cg_solve(
        &self,
        geom: &Geometry,
        k: &SymTensorField2,
        p: u32,
        guess: Option<&SymTensorField2>,
    ) -> Result<SymTensorField2> {
        let apply = |x: &SymTensorField2| -> Result<SymTensorField2> {
            let mut full = x.to_full();
            for _ in 0..p {
                full = &full + &geom.bochner_laplacian(&full);
            }
            SymTensorField2::from_full(&full)
        };
        let ip = |a: &SymTensorField2, b: &SymTensorField2| geom.integrated_inner_sym(a, b);

        let bnorm = ip(k, k).sqrt();
        if bnorm == 0.0 {
            return Ok(SymTensorField2::zeros(*k.grid()));
        }
        let tol = self.solver.cg_tol;
        let mut x = guess.cloned().unwrap_or_else(|| k.clone());
        let mut r = k - &apply(&x)?;
        let mut rho = ip(&r, &r);
        if rho.sqrt() / bnorm <= tol {
            return Ok(x);
        }
        let mut d = r.clone();
        let mut best = rho.sqrt();
        let mut since_best = 0usize;
        for it in 0..self.solver.cg_max_iter {
            let ad = apply(&d)?;
            let alpha = rho / ip(&d, &ad);
            if !alpha.is_finite() {
                return Err(Error::CgDidNotConverge {
                    residual: rho.sqrt() / bnorm,
                    iterations: it,
                });
            }
            x = SymTensorField2::linear_comb(1.0, &x, alpha, &d);
            r = SymTensorField2::linear_comb(1.0, &r, -alpha, &ad);
            if it % 50 == 49 {
                // Refresh the recurrence residual with the true one.
                r = k - &apply(&x)?;
            }
            let rho_next = ip(&r, &r);
            let res = rho_next.sqrt();
            if res / bnorm <= tol {
                let true_r = k - &apply(&x)?;
                if ip(&true_r, &true_r).sqrt() / bnorm <= 2.0 * tol {
                    return Ok(x);
                }
                r = true_r;
            }
            if res < best {
                best = res;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 80 {
                    r = k - &apply(&x)?;
                    d = r.clone();
                    rho = ip(&r, &r);
                    since_best = 0;
                    continue;
                }
            }
            let beta = rho_next / rho;
            rho = rho_next;
            d = SymTensorField2::linear_comb(1.0, &r, beta, &d);
        }
        Err(Error::CgDidNotConverge {
            residual: rho.sqrt() / bnorm,
            iterations: self.solver.cg_max_iter,
        })
    }

    /// Directional derivative `(D_(g,m) P) h` of the operator in the metric.
    pub fn derivative(
        &self,
        geom: &Geometry,
        m: &SymTensorField2,
        h: &SymTensorField2,
    ) -> Result<SymTensorField2> {
        match &self.family {
            OperatorFamily::Identity => Ok(SymTensorField2::zeros(*geom.grid())),
            OperatorFamily::Conformal { phi } => {
                let dvol = integrate_density(&geom.d_volume_density(m));
                let c = phi.derivative(geom.total_volume()) * dvol;
                Ok(h.scale(c))
            }
            OperatorFamily::Curvature { phi } => {
                let dphi = geom.curvature().scal.map(|u| phi.derivative(u));
                let dscal = geom.d_scal(m)?;
                Ok(h.mul_scalar_field(&dphi.mul_field(&dscal)))
            }
            OperatorFamily::Sobolev { p } => {
                // sum over i of (1+Delta)^(i-1) (D Delta) (1+Delta)^(p-i) h
                let powers = laplacian_powers(geom, h, *p);
                let mut acc = TensorField::zeros(*geom.grid(), vec![Slot::Lower, Slot::Lower]);
                for i in 1..=*p {
                    let mut term = geom.d_laplacian(m, &powers[(*p - i) as usize])?;
                    for _ in 0..(i - 1) {
                        term = &term + &geom.bochner_laplacian(&term);
                    }
                    acc = &acc + &term;
                }
                SymTensorField2::from_full(&acc)
            }
        }
    }

    /// The adjoint `(D_(g,.) P h)*(k)`, defined by the pairing
    /// `integral g((D_(g,m) P) h, k) vol = integral g(m, (D_(g,.) P h)*(k)) vol`.
    pub fn derivative_adjoint(
        &self,
        geom: &Geometry,
        h: &SymTensorField2,
        k: &SymTensorField2,
    ) -> Result<SymTensorField2> {
        match &self.family {
            OperatorFamily::Identity => Ok(SymTensorField2::zeros(*geom.grid())),
            OperatorFamily::Conformal { phi } => {
                let hk =
                    integrate_density(&geom.inner02(h, k).mul_field(geom.volume_density()));
                let c = 0.5 * phi.derivative(geom.total_volume()) * hk;
                Ok(geom.g_sym().scale(c))
            }
            OperatorFamily::Curvature { phi } => {
                let s = geom.inner02(h, k);
                let dphi = geom.curvature().scal.map(|u| phi.derivative(u));
                match self.curvature_adjoint {
                    CurvatureAdjointForm::ProductRule => {
                        curvature_adjoint_core(geom, &dphi.mul_field(&s), None)
                    }
                    CurvatureAdjointForm::LiteralDisplay => {
                        curvature_adjoint_core(geom, &s, Some(&dphi))
                    }
                }
            }
            OperatorFamily::Sobolev { p } => {
                let pow_h = laplacian_powers(geom, h, *p);
                let pow_k = laplacian_powers(geom, k, *p);
                let mut acc = SymTensorField2::zeros(*geom.grid());
                for i in 1..=*p as usize {
                    let a = &pow_h[*p as usize - i];
                    let b = &pow_k[i - 1];
                    acc = &acc + &d_laplacian_adjoint(geom, a, b)?;
                }
                Ok(acc)
            }
        }
    }

    /// The weak metric `G^P_g(h, k)`.
    pub fn gp_inner(
        &self,
        geom: &Geometry,
        h: &SymTensorField2,
        k: &SymTensorField2,
    ) -> Result<f64> {
        let ph = self.apply(geom, h)?;
        Ok(geom.integrated_inner_sym(&ph, k))
    }

    /// Pseudo-differential order `2p` of the family.
    pub fn order(&self) -> u32 {
        match &self.family {
            OperatorFamily::Sobolev { p } => 2 * p,
            _ => 0,
        }
    }
}

/// Powers `(1 + Delta)^j h` for `j = 0..=p`, as full tensors.
fn laplacian_powers(geom: &Geometry, h: &SymTensorField2, p: u32) -> Vec<TensorField> {
    let mut powers = Vec::with_capacity(p as usize + 1);
    powers.push(h.to_full());
    for j in 0..p as usize {
        let next = &powers[j] + &geom.bochner_laplacian(&powers[j]);
        powers.push(next);
    }
    powers
}

/// `g Delta(w) + nabla^2 w - w Ricci`, symmetrized, optionally multiplied by
/// an outer weight afterwards (the literal-display variant).
fn curvature_adjoint_core(
    geom: &Geometry,
    w: &ScalarField,
    outer: Option<&ScalarField>,
) -> Result<SymTensorField2> {
    let grid = *geom.grid();
    let wt = TensorField::from_planes(grid, vec![], w.values().to_vec())?;
    let lap_w = geom.bochner_laplacian(&wt).to_scalar()?;
    let hess_w = geom.covariant_derivative(&geom.covariant_derivative(&wt));
    let hess_sym = SymTensorField2::from_full(&hess_w)?;
    let ricci = geom.curvature().ricci.clone();
    let mut out = &geom.g_sym().mul_scalar_field(&lap_w) + &hess_sym;
    out = &out - &ricci.mul_scalar_field(w);
    if let Some(factor) = outer {
        out = out.mul_scalar_field(factor);
    }
    Ok(out)
}

/// Adjoint of `m -> (D_(g,m) Delta) a` paired against `b`: a transposed
/// second-derivative contraction plus two symbol adjoints.
fn d_laplacian_adjoint(
    geom: &Geometry,
    a: &TensorField,
    b: &TensorField,
) -> Result<SymTensorField2> {
    let grid = *geom.grid();
    let n = grid.dim();
    let npts = grid.len();

    let na = geom.covariant_derivative(a);
    let w2 = geom.covariant_derivative(&na);
    let nb = geom.covariant_derivative(b);

    // Term 1: (nabla^2 a)_{pq, cd} (b raised)^{cd}, symmetrized in (p, q);
    // the pairing against symmetric directions only sees the symmetric part.
    let mut term1 = SymTensorField2::zeros(grid);
    for p in 0..npts {
        let gi = geom.inv_at(p);
        let bm = match n {
            1 => [b.plane(0)[p], 0.0, 0.0, 0.0],
            _ => [
                b.plane(0)[p],
                b.plane(1)[p],
                b.plane(2)[p],
                b.plane(3)[p],
            ],
        };
        let mut braised = [0.0f64; 4];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for x in 0..n {
                    for y in 0..n {
                        acc += gi[i * 2 + x] * bm[x * 2 + y] * gi[y * 2 + j];
                    }
                }
                braised[i * 2 + j] = acc;
            }
        }
        let mut t = [0.0f64; 4];
        for pp in 0..n {
            for q in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    for dd in 0..n {
                        let comp = ((pp * n + q) * n + c) * n + dd;
                        acc += w2.plane(comp)[p] * braised[c * 2 + dd];
                    }
                }
                t[pp * 2 + q] = acc;
            }
        }
        let sym = [t[0], 0.5 * (t[1] + t[2]), 0.5 * (t[1] + t[2]), t[3]];
        term1.set_at(p, &sym);
    }

    // Term 2: -(symbol adjoint of the rank-3 variation on nabla a) against g (x) b.
    let gb = outer_g_tensor(geom, b);
    let term2 = geom.n_adjoint(&na, &gb)?;

    // Term 3: +(symbol adjoint of the rank-2 variation on a) against nabla b.
    let term3 = geom.n_adjoint(a, &nb)?;

    Ok(&(&term1 - &term2) + &term3)
}

/// The `(0,4)` tensor `g (x) b`.
fn outer_g_tensor(geom: &Geometry, b: &TensorField) -> TensorField {
    let grid = *geom.grid();
    let n = grid.dim();
    let npts = grid.len();
    let mut out = TensorField::zeros(grid, vec![Slot::Lower; 4]);
    let mut idx = [0usize; 4];
    for comp in 0..out.ncomp() {
        crate::field::decode_multi(comp, n, &mut idx);
        let bcomp = idx[2] * n + idx[3];
        let (a0, a1) = (idx[0], idx[1]);
        let opl = out.plane_mut(comp);
        for p in 0..npts {
            let gm = geom.g_at(p);
            opl[p] = gm[a0 * 2 + a1] * b.plane(bcomp)[p];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use crate::field::MetricField;
    use crate::grid::Grid;
    use crate::synth;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn pairing_gap(
        op: &OperatorSpec,
        geom: &Geometry,
        m: &SymTensorField2,
        h: &SymTensorField2,
        k: &SymTensorField2,
    ) -> (f64, f64) {
        let dp = op.derivative(geom, m, h).unwrap();
        let lhs = geom.integrated_inner_sym(&dp, k);
        let adj = op.derivative_adjoint(geom, h, k).unwrap();
        let rhs = geom.integrated_inner_sym(m, &adj);
        let cs = geom.integrated_inner_sym(&dp, &dp).sqrt()
            * geom.integrated_inner_sym(k, k).sqrt();
        ((lhs - rhs).abs(), cs.max(1e-300))
    }

    #[test]
    fn identity_family_is_the_identity() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let (g, h) = synth::random_smooth_fields(&grid, 5, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let op = OperatorSpec::identity();
        assert_eq!(op.apply(&geom, &h).unwrap(), h);
        assert_eq!(op.solve(&geom, &h).unwrap(), h);
        assert_eq!(op.derivative(&geom, &h, &h).unwrap().max_abs(), 0.0);
        assert_eq!(op.derivative_adjoint(&geom, &h, &h).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn conformal_scales_by_phi_of_volume() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let g = MetricField::flat(grid);
        let geom = Geometry::new(&g).unwrap();
        let op = OperatorSpec::conformal(PhiFunction::Power { k: 1.0 });
        let h = synth::random_sym(&grid, 6, 0.3, 2).unwrap();
        let ph = op.apply(&geom, &h).unwrap();
        let vol = TAU * TAU;
        for (a, b) in ph.comps().iter().zip(h.comps()) {
            assert_relative_eq!(*a, vol * b, max_relative = 1e-12, epsilon = 1e-12);
        }
        let back = op.solve(&geom, &ph).unwrap();
        for (a, b) in back.comps().iter().zip(h.comps()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sobolev_eigenfunction_and_round_trip() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let g = MetricField::flat(grid);
        let geom = Geometry::new(&g).unwrap();
        let op = OperatorSpec::sobolev(1);
        // sin(x) dx (x) dx is an eigenfunction of the flat Laplacian with
        // eigenvalue one, so (1 + Delta) doubles it.
        let h = SymTensorField2::from_fn(grid, |c, x, _| if c == 0 { x.sin() } else { 0.0 });
        let ph = op.apply(&geom, &h).unwrap();
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            let x = grid.coords(p)[0];
            worst = worst.max((ph.plane(0)[p] - 2.0 * x.sin()).abs());
            worst = worst.max(ph.plane(1)[p].abs());
            worst = worst.max(ph.plane(2)[p].abs());
        }
        assert!(worst <= 1e-4, "{worst:.3e}");

        let back = op.solve(&geom, &ph).unwrap();
        let diff = &back - &h;
        assert!(diff.max_abs() <= 1e-9, "round trip {:.3e}", diff.max_abs());
    }

    #[test]
    fn sobolev_round_trip_on_random_metric() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let (g, h) = synth::random_smooth_fields(&grid, 8, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        for p in [1u32, 2] {
            let op = OperatorSpec::sobolev(p);
            let ph = op.apply(&geom, &h).unwrap();
            let back = op.solve(&geom, &ph).unwrap();
            let rel = (&back - &h).max_abs() / h.max_abs();
            assert!(rel <= 1e-9, "p = {p}: round trip {rel:.3e}");
        }
    }

    #[test]
    fn sobolev_is_self_adjoint_with_spectrum_at_least_one() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let (g, h) = synth::random_smooth_fields(&grid, 9, 0.2, 2).unwrap();
        let k = synth::random_sym(&grid, 10, 0.3, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let op = OperatorSpec::sobolev(1);
        let a = op.gp_inner(&geom, &h, &k).unwrap();
        let b = op.gp_inner(&geom, &k, &h).unwrap();
        // Discrete self-adjointness of the Laplacian holds as a convergence
        // statement; this is the 32x32 tier.
        assert!((a - b).abs() / a.abs().max(b.abs()) <= 1e-3, "gap {:.3e}", (a - b).abs() / a.abs().max(b.abs()));
        let hh = op.gp_inner(&geom, &h, &h).unwrap();
        let l2 = geom.integrated_inner_sym(&h, &h);
        assert!(hh >= l2 * (1.0 - 1e-6), "{hh} < {l2}");
    }

    #[test]
    fn curvature_family_weights_pointwise() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let phi_field = ScalarField::from_fn(grid, |x, y| 0.1 * x.sin() * y.cos());
        let g = synth::conformal_metric(&phi_field).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let phi = PhiFunction::AffineExp { a: 1.0, b: 0.1 };
        let op = OperatorSpec::curvature_weighted(phi.clone());
        let h = synth::random_sym(&grid, 11, 0.3, 2).unwrap();
        let ph = op.apply(&geom, &h).unwrap();
        let scal = &geom.curvature().scal;
        for p in (0..grid.len()).step_by(17) {
            let w = phi.value(scal.values()[p]);
            assert_relative_eq!(ph.plane(0)[p], w * h.plane(0)[p], epsilon = 1e-13);
        }
        let back = op.solve(&geom, &ph).unwrap();
        assert!((&back - &h).max_abs() <= 1e-12);
    }

    #[test]
    fn operator_derivative_matches_finite_differences() {
        // The conformal and Sobolev derivatives are discretely exact; the
        // curvature family inherits the scalar-curvature variation's
        // discretization error and is gated at its 32x32 tier.
        let cases = vec![
            (OperatorSpec::conformal(PhiFunction::Power { k: 2.0 }), 16usize, 1e-6),
            (OperatorSpec::sobolev(1), 16, 1e-3),
            (OperatorSpec::sobolev(2), 16, 1e-3),
            (
                OperatorSpec::curvature_weighted(PhiFunction::AffineExp { a: 1.0, b: 0.1 }),
                32,
                1e-3,
            ),
        ];
        for (op, npts, tol) in cases {
            let grid = Grid::square(2, npts, TAU).unwrap();
            let (g, m) = synth::random_smooth_fields(&grid, 12, 0.05, 2).unwrap();
            let h = synth::random_sym(&grid, 13, 0.3, 2).unwrap();
            let geom = Geometry::new(&g).unwrap();
            let eps = fd::directional_step(&g, &m, 1e-5);
            let formula = op.derivative(&geom, &m, &h).unwrap();
            let h2 = h.clone();
            let op2 = op.clone();
            let oracle = fd::richardson(&g, &m, eps, &|gp: &MetricField| {
                op2.apply(&Geometry::new(gp)?, &h2)
            })
            .unwrap();
            let rel = (&formula - &oracle).max_abs()
                / formula.max_abs().max(oracle.max_abs()).max(1e-300);
            assert!(rel <= tol, "{:?}: rel err {rel:.3e}", op.family);
        }
    }

    #[test]
    fn derivative_adjoint_pairing_identity_and_conformal() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let (g, m) = synth::random_smooth_fields(&grid, 14, 0.2, 2).unwrap();
        let h = synth::random_sym(&grid, 15, 0.3, 2).unwrap();
        let k = synth::random_sym(&grid, 16, 0.3, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();

        // Identity: both sides vanish identically.
        let op = OperatorSpec::identity();
        let (gap, _) = pairing_gap(&op, &geom, &m, &h, &k);
        assert_eq!(gap, 0.0);

        // Conformal: both sides reduce to the same quadratures; round-off only.
        let op = OperatorSpec::conformal(PhiFunction::Power { k: 1.5 });
        let dp = op.derivative(&geom, &m, &h).unwrap();
        let lhs = geom.integrated_inner_sym(&dp, &k);
        let adj = op.derivative_adjoint(&geom, &h, &k).unwrap();
        let rhs = geom.integrated_inner_sym(&m, &adj);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
    }

    #[test]
    fn derivative_adjoint_pairing_sobolev_and_curvature() {
        for family in ["sobolev", "curvature"] {
            let mut gaps = Vec::new();
            for &npts in &[16usize, 32] {
                let grid = Grid::square(2, npts, TAU).unwrap();
                let (g, m) = synth::random_smooth_fields(&grid, 17, 0.2, 2).unwrap();
                let h = synth::random_sym(&grid, 18, 0.3, 2).unwrap();
                let k = synth::random_sym(&grid, 19, 0.3, 2).unwrap();
                let geom = Geometry::new(&g).unwrap();
                let op = match family {
                    "sobolev" => OperatorSpec::sobolev(1),
                    _ => OperatorSpec::curvature_weighted(PhiFunction::AffineExp {
                        a: 1.0,
                        b: 0.1,
                    }),
                };
                let (gap, cs) = pairing_gap(&op, &geom, &m, &h, &k);
                gaps.push(gap / cs);
            }
            assert!(gaps[1] <= 1e-3, "{family}: rel gap {:.3e}", gaps[1]);
            assert!(
                gaps[0] / gaps[1] >= 4.0,
                "{family}: no convergence {gaps:?}"
            );
        }
    }

    #[test]
    fn literal_display_adjoint_fails_on_varying_curvature() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let (g, m) = synth::random_smooth_fields(&grid, 17, 0.2, 2).unwrap();
        let h = synth::random_sym(&grid, 18, 0.3, 2).unwrap();
        let k = synth::random_sym(&grid, 19, 0.3, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let phi = PhiFunction::AffineExp { a: 1.0, b: 0.1 };
        let product = OperatorSpec::curvature_weighted(phi.clone());
        let literal = OperatorSpec::curvature_weighted(phi)
            .with_adjoint_form(CurvatureAdjointForm::LiteralDisplay);
        let (gap_p, cs) = pairing_gap(&product, &geom, &m, &h, &k);
        let (gap_l, _) = pairing_gap(&literal, &geom, &m, &h, &k);
        assert!(gap_p / cs <= 1e-3);
        assert!(
            gap_l / cs > 10.0 * (gap_p / cs).max(1e-6),
            "literal {:.3e} vs product {:.3e}",
            gap_l / cs,
            gap_p / cs
        );
    }

    #[test]
    fn gp_inner_reproduces_n_times_volume() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let g = MetricField::flat(grid);
        let geom = Geometry::new(&g).unwrap();
        let d = SymTensorField2::identity(grid);
        let op = OperatorSpec::identity();
        assert_relative_eq!(
            op.gp_inner(&geom, &d, &d).unwrap(),
            8.0 * std::f64::consts::PI.powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scalar_families_commute_with_pure_scaling() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let g = MetricField::flat(grid).scale(1.7).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let d = SymTensorField2::identity(grid);
        for op in [
            OperatorSpec::identity(),
            OperatorSpec::conformal(PhiFunction::Power { k: 2.0 }),
        ] {
            let pd = op.apply(&geom, &d).unwrap();
            let c = pd.plane(0)[0];
            let mut worst = 0.0f64;
            for p in 0..grid.len() {
                worst = worst.max((pd.plane(0)[p] - c).abs());
                worst = worst.max(pd.plane(1)[p].abs());
                worst = worst.max((pd.plane(2)[p] - c).abs());
            }
            assert!(worst <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn solve_rejects_nonpositive_weights() {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let g = MetricField::flat(grid);
        let geom = Geometry::new(&g).unwrap();
        // A weight that is negative at zero curvature.
        let op = OperatorSpec::curvature_weighted(PhiFunction::Polynomial {
            coeffs: vec![-1.0],
        });
        let k = SymTensorField2::identity(grid);
        assert!(matches!(
            op.solve(&geom, &k),
            Err(crate::error::Error::NonPositiveWeight(_))
        ));
    }

    #[test]
    fn operator_spec_wire_format() {
        let cases = [
            (r#"{"family":"identity"}"#, OperatorSpec::identity()),
            (r#"{"family":"sobolev","p":1}"#, OperatorSpec::sobolev(1)),
            (
                r#"{"family":"conformal","phi":{"kind":"power","k":1.0}}"#,
                OperatorSpec::conformal(PhiFunction::Power { k: 1.0 }),
            ),
            (
                r#"{"family":"curvature","phi":{"kind":"affine_exp","a":1.0,"b":0.1}}"#,
                OperatorSpec::curvature_weighted(PhiFunction::AffineExp { a: 1.0, b: 0.1 }),
            ),
        ];
        for (json, expected) in cases {
            let parsed: OperatorSpec = serde_json::from_str(json).unwrap();
            assert_eq!(parsed, expected);
            let round: OperatorSpec =
                serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
            assert_eq!(round, expected);
        }
    }

    #[test]
    fn phi_functions_evaluate_and_bound() {
        let p = PhiFunction::Power { k: 2.0 };
        assert_relative_eq!(p.value(3.0), 9.0);
        assert_relative_eq!(p.derivative(3.0), 6.0);
        assert_eq!(p.poly_bound(), Some((1.0, 1.0)));

        let a = PhiFunction::AffineExp { a: 1.0, b: 0.5 };
        assert_relative_eq!(a.value(0.0), 1.5);
        assert_relative_eq!(a.derivative(0.0), 0.5);
        assert_eq!(a.poly_bound(), None);

        let q = PhiFunction::Polynomial {
            coeffs: vec![1.0, 0.0, 1.0],
        };
        assert_relative_eq!(q.value(2.0), 5.0);
        assert_relative_eq!(q.derivative(2.0), 4.0);
        let (c, k) = q.poly_bound().unwrap();
        assert_relative_eq!(c, 2.0);
        assert_relative_eq!(k, 1.0);
    }
}
