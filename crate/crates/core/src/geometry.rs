//! Metric geometry on the grid: inverse, volume density, Christoffel symbols,
//! covariant derivative, its adjoint, the Bochner Laplacian, curvature, and the
//! metric inner products on tensor fields.
//!
//! A [`Geometry`] caches everything derived from one metric; all operations
//! here are pure functions of immutable fields. Traces contract the first two
//! slots, and the slot added by the covariant derivative is always prepended.

use std::cell::OnceCell;

use crate::error::{Error, Result};
use crate::field::{
    decode_multi, encode_multi, integrate_density, MetricField, ScalarField, Slot,
    SymTensorField2, TensorField, VectorField,
};
use crate::grid::{plane_derivative, Grid};

/// Levi-Civita connection coefficients, `n^3` values per point indexed as
/// `Gamma^i_{jk}` with flat component `(i n + j) n + k`; symmetric in `(j, k)`.
#[derive(Clone, Debug)]
pub struct ChristoffelField {
    grid: Grid,
    comps: Vec<f64>,
}

impl ChristoffelField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn plane(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let n = self.grid.dim();
        let npts = self.grid.len();
        let comp = (i * n + j) * n + k;
        &self.comps[comp * npts..(comp + 1) * npts]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Riemann, Ricci and scalar curvature of one metric.
#[derive(Clone, Debug)]
pub struct Curvature {
    /// `(1,3)` curvature tensor, slots `[Upper d, Lower a, Lower b, Lower c]`
    /// storing the component of `R(e_a, e_b) e_c` along `e_d`.
    pub riemann: TensorField,
    /// Symmetrized Ricci tensor.
    pub ricci: SymTensorField2,
    /// Scalar curvature.
    pub scal: ScalarField,
}

/// A metric together with the derived quantities every operator needs.
pub struct Geometry {
    g: MetricField,
    /// Pointwise inverse metric, `n^2` planes indexed `i n + j`.
    inv: Vec<f64>,
    vol: ScalarField,
    total_volume: f64,
    gamma: OnceCell<ChristoffelField>,
    curv: OnceCell<Curvature>,
}

impl Geometry {
    pub fn new(g: &MetricField) -> Result<Self> {
        let grid = *g.grid();
        let n = grid.dim();
        let npts = grid.len();
        let mut inv = vec![0.0; n * n * npts];
        let mut vol = vec![0.0; npts];
        for p in 0..npts {
            let m = g.sym().mat_at(p);
            match n {
                1 => {
                    inv[p] = 1.0 / m[0];
                    vol[p] = m[0].sqrt();
                }
                _ => {
                    let det = m[0] * m[3] - m[1] * m[2];
                    let tr = m[0] + m[3];
                    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
                    let (lo, hi) = (0.5 * tr - disc, 0.5 * tr + disc);
                    if lo <= 0.0 || hi / lo > 1e12 {
                        return Err(Error::NearSingular {
                            point: p,
                            cond: hi / lo.max(f64::MIN_POSITIVE),
                        });
                    }
                    inv[p] = m[3] / det;
                    inv[npts + p] = -m[1] / det;
                    inv[2 * npts + p] = -m[2] / det;
                    inv[3 * npts + p] = m[0] / det;
                    vol[p] = det.sqrt();
                }
            }
        }
        let vol = ScalarField::from_values(grid, vol)?;
        let total_volume = integrate_density(&vol);
        Ok(Geometry {
            g: g.clone(),
            inv,
            vol,
            total_volume,
            gamma: OnceCell::new(),
            curv: OnceCell::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn metric(&self) -> &MetricField {
        &self.g
    }

    /// Metric as a symmetric field (for terms like `g * scalar`).
    pub fn g_sym(&self) -> &SymTensorField2 {
        self.g.sym()
    }

    /// Volume density `sqrt(det g)` per point.
    pub fn volume_density(&self) -> &ScalarField {
        &self.vol
    }

    /// Total volume of the torus under this metric.
    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    /// Inverse metric at point `p` as `[i*2+j]` (index 0 only in 1-d).
    pub fn inv_at(&self, p: usize) -> [f64; 4] {
        let npts = self.grid().len();
        match self.grid().dim() {
            1 => [self.inv[p], 0.0, 0.0, 0.0],
            _ => [
                self.inv[p],
                self.inv[npts + p],
                self.inv[2 * npts + p],
                self.inv[3 * npts + p],
            ],
        }
    }

    /// Metric at point `p` as `[i*2+j]`.
    pub fn g_at(&self, p: usize) -> [f64; 4] {
        self.g.sym().mat_at(p)
    }

    /// The pointwise inverse as a `(2,0)` tensor field.
    pub fn metric_inverse(&self) -> TensorField {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let mut t = TensorField::zeros(grid, vec![Slot::Upper, Slot::Upper]);
        for c in 0..n * n {
            t.plane_mut(c)
                .copy_from_slice(&self.inv[c * npts..(c + 1) * npts]);
        }
        t
    }

    /// Levi-Civita Christoffel symbols (cached).
    pub fn christoffel(&self) -> &ChristoffelField {
        self.gamma.get_or_init(|| self.compute_christoffel())
    }

    fn compute_christoffel(&self) -> ChristoffelField {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        // dg[axis][sym comp] = derivative planes of the metric components.
        let nsym = self.g.sym().ncomp();
        let mut dg = vec![Vec::new(); n * nsym];
        for a in 0..n {
            for c in 0..nsym {
                dg[a * nsym + c] = plane_derivative(&grid, self.g.sym().plane(c), a);
            }
        }
        let sym_idx = |b: usize, c: usize| -> usize {
            if n == 1 {
                0
            } else {
                match (b.min(c), b.max(c)) {
                    (0, 0) => 0,
                    (0, 1) => 1,
                    _ => 2,
                }
            }
        };
        let dgv = |a: usize, b: usize, c: usize, p: usize| dg[a * nsym + sym_idx(b, c)][p];
        let mut comps = vec![0.0; n * n * n * npts];
        for p in 0..npts {
            let gi = self.inv_at(p);
            for i in 0..n {
                for j in 0..n {
                    for k in j..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += gi[i * 2 + l]
                                * (dgv(j, l, k, p) + dgv(k, l, j, p) - dgv(l, j, k, p));
                        }
                        let v = 0.5 * acc;
                        comps[((i * n + j) * n + k) * npts + p] = v;
                        if k != j {
                            comps[((i * n + k) * n + j) * npts + p] = v;
                        }
                    }
                }
            }
        }
        ChristoffelField { grid, comps }
    }

    /// Riemann, Ricci and scalar curvature (cached).
    pub fn curvature(&self) -> &Curvature {
        self.curv.get_or_init(|| self.compute_curvature())
    }

    fn compute_curvature(&self) -> Curvature {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let gamma = self.christoffel();
        // dG[a][(i,j,k)] = partial_a Gamma^i_{jk}
        let ncg = n * n * n;
        let mut dgamma = vec![Vec::new(); n * ncg];
        for a in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let comp = (i * n + j) * n + k;
                        dgamma[a * ncg + comp] = plane_derivative(&grid, gamma.plane(i, j, k), a);
                    }
                }
            }
        }
        let dgv = |a: usize, i: usize, j: usize, k: usize, p: usize| {
            dgamma[a * ncg + (i * n + j) * n + k][p]
        };
        let gv = |i: usize, j: usize, k: usize, p: usize| gamma.plane(i, j, k)[p];

        let mut riemann = TensorField::zeros(
            grid,
            vec![Slot::Upper, Slot::Lower, Slot::Lower, Slot::Lower],
        );
        let mut ricci = SymTensorField2::zeros(grid);
        let mut scal = ScalarField::zeros(grid);
        let mut idx = [0usize; 4];
        for comp in 0..riemann.ncomp() {
            decode_multi(comp, n, &mut idx);
            let (d, a, b, c) = (idx[0], idx[1], idx[2], idx[3]);
            let plane = riemann.plane_mut(comp);
            for p in 0..npts {
                let mut v = dgv(a, d, b, c, p) - dgv(b, d, a, c, p);
                for m in 0..n {
                    v += gv(m, b, c, p) * gv(d, a, m, p) - gv(m, a, c, p) * gv(d, b, m, p);
                }
                plane[p] = v;
            }
        }
        // Ricci_{bc} = R^m_{m b c}; symmetrize the numerical output.
        for p in 0..npts {
            let mut r = [0.0f64; 4];
            for b in 0..n {
                for c in 0..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        let comp = encode_multi(&[m, m, b, c], n);
                        acc += riemann.plane(comp)[p];
                    }
                    r[b * 2 + c] = acc;
                }
            }
            let sym = [r[0], 0.5 * (r[1] + r[2]), 0.5 * (r[1] + r[2]), r[3]];
            ricci.set_at(p, &sym);
            let gi = self.inv_at(p);
            let mut s = 0.0;
            for b in 0..n {
                for c in 0..n {
                    s += gi[b * 2 + c] * sym[b * 2 + c];
                }
            }
            scal.values_mut()[p] = s;
        }
        Curvature {
            riemann,
            ricci,
            scal,
        }
    }

    /// Covariant derivative; the new covariant slot is prepended as slot 0.
    pub fn covariant_derivative(&self, t: &TensorField) -> TensorField {
        let mut out = partial_prepended(t);
        add_connection_terms(&mut out, self.christoffel(), t);
        out
    }

    /// `nabla* B = -Tr^g(nabla B)`, the adjoint of the covariant derivative.
    /// Requires the first slot of `B` to be covariant.
    pub fn nabla_star(&self, b: &TensorField) -> Result<TensorField> {
        if b.rank() == 0 || b.slots()[0] != Slot::Lower {
            return Err(Error::SlotMismatch(
                "nabla_star needs a leading covariant slot".to_string(),
            ));
        }
        let w = self.covariant_derivative(b);
        Ok(self.trace_g(&w)?.scale(-1.0))
    }

    /// Bochner Laplacian `Delta = nabla* nabla`, rank preserving.
    pub fn bochner_laplacian(&self, t: &TensorField) -> TensorField {
        let w = self.covariant_derivative(t);
        let w2 = self.covariant_derivative(&w);
        self.trace_g(&w2).expect("slots by construction").scale(-1.0)
    }

    /// Trace over the first two slots, one contravariant and one covariant.
    pub fn trace_first_two(&self, t: &TensorField) -> Result<TensorField> {
        trace_first_two(t)
    }

    /// Metric trace `Tr^g` over two leading covariant slots.
    pub fn trace_g(&self, t: &TensorField) -> Result<TensorField> {
        if t.rank() < 2 || t.slots()[0] != Slot::Lower || t.slots()[1] != Slot::Lower {
            return Err(Error::SlotMismatch(
                "trace_g needs two leading covariant slots".to_string(),
            ));
        }
        let grid = *t.grid();
        let n = grid.dim();
        let npts = grid.len();
        let out_slots = t.slots()[2..].to_vec();
        let mut out = TensorField::zeros(grid, out_slots);
        let rest = out.ncomp();
        for r in 0..rest {
            let opl = out.plane_mut(r);
            for a in 0..n {
                for b in 0..n {
                    let tcomp = (a * n + b) * rest + r;
                    let tpl = t.plane(tcomp);
                    let gplane = &self.inv[(a * n + b) * npts..(a * n + b + 1) * npts];
                    match n {
                        1 => {
                            for p in 0..npts {
                                opl[p] += self.inv[p] * tpl[p];
                            }
                        }
                        _ => {
                            for p in 0..npts {
                                opl[p] += gplane[p] * tpl[p];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pointwise full contraction of two tensor fields with the same slot
    /// signature, one copy of `g` or `g^-1` per slot.
    pub fn pointwise_inner(&self, a: &TensorField, b: &TensorField) -> Result<ScalarField> {
        if a.slots() != b.slots() {
            return Err(Error::SlotMismatch(format!(
                "{:?} vs {:?}",
                a.slots(),
                b.slots()
            )));
        }
        if a.grid() != b.grid() || a.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let grid = *a.grid();
        let n = grid.dim();
        let npts = grid.len();
        let k = a.rank();
        let ncomp = a.ncomp();
        let mut out = ScalarField::zeros(grid);
        let mut bv = vec![0.0; ncomp];
        let mut tmp = vec![0.0; ncomp];
        for p in 0..npts {
            let gm = self.g_at(p);
            let gi = self.inv_at(p);
            for (c, v) in bv.iter_mut().enumerate() {
                *v = b.plane(c)[p];
            }
            for s in 0..k {
                let m = match a.slots()[s] {
                    Slot::Upper => &gm,
                    Slot::Lower => &gi,
                };
                let stride = n.pow((k - 1 - s) as u32);
                for c in 0..ncomp {
                    let i_s = (c / stride) % n;
                    let base = c - i_s * stride;
                    let mut acc = 0.0;
                    for bb in 0..n {
                        acc += m[i_s * 2 + bb] * bv[base + bb * stride];
                    }
                    tmp[c] = acc;
                }
                std::mem::swap(&mut bv, &mut tmp);
            }
            let mut dot = 0.0;
            for (c, v) in bv.iter().enumerate() {
                dot += a.plane(c)[p] * v;
            }
            out.values_mut()[p] = dot;
        }
        Ok(out)
    }

    /// The integrated metric on tensor fields:
    /// `gtilde(a, b) = integral of g(a, b) vol(g)`.
    pub fn integrated_inner(&self, a: &TensorField, b: &TensorField) -> Result<f64> {
        let inner = self.pointwise_inner(a, b)?;
        Ok(integrate_density(&inner.mul_field(&self.vol)))
    }

    /// `gtilde`-norm of a tensor field.
    pub fn norm(&self, a: &TensorField) -> Result<f64> {
        Ok(self.integrated_inner(a, a)?.max(0.0).sqrt())
    }

    /// Integrated inner product of two symmetric fields.
    pub fn integrated_inner_sym(&self, a: &SymTensorField2, b: &SymTensorField2) -> f64 {
        let inner = self.inner02(a, b);
        integrate_density(&inner.mul_field(&self.vol))
    }

    /// Pointwise `g(a, b) = Tr(g^-1 a g^-1 b)` for symmetric fields.
    pub fn inner02(&self, a: &SymTensorField2, b: &SymTensorField2) -> ScalarField {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let mut out = ScalarField::zeros(grid);
        for p in 0..npts {
            let gi = self.inv_at(p);
            let am = a.mat_at(p);
            let bm = b.mat_at(p);
            // Tr(gi a gi b)
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            acc += gi[i * 2 + j] * am[j * 2 + k] * gi[k * 2 + l] * bm[l * 2 + i];
                        }
                    }
                }
            }
            out.values_mut()[p] = acc;
        }
        out
    }

    /// Pointwise `Tr(g^-1 m)`.
    pub fn trace_inv(&self, m: &SymTensorField2) -> ScalarField {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let mut out = ScalarField::zeros(grid);
        for p in 0..npts {
            let gi = self.inv_at(p);
            let mm = m.mat_at(p);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += gi[i * 2 + j] * mm[j * 2 + i];
                }
            }
            out.values_mut()[p] = acc;
        }
        out
    }

    /// Pointwise symmetric product `a g^-1 b + b g^-1 a`.
    pub fn sym_pair(&self, a: &SymTensorField2, b: &SymTensorField2) -> SymTensorField2 {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let mut out = SymTensorField2::zeros(grid);
        for p in 0..npts {
            let gi = self.inv_at(p);
            let am = a.mat_at(p);
            let bm = b.mat_at(p);
            let mut r = [0.0f64; 4];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            acc += am[i * 2 + k] * gi[k * 2 + l] * bm[l * 2 + j]
                                + bm[i * 2 + k] * gi[k * 2 + l] * am[l * 2 + j];
                        }
                    }
                    r[i * 2 + j] = acc;
                }
            }
            out.set_at(p, &r);
        }
        out
    }

    /// Fundamental vector field of the diffeomorphism action:
    /// the Lie derivative `L_X g = 2 Sym nabla (g(X))`.
    pub fn fundamental_vector_field(&self, x: &VectorField) -> SymTensorField2 {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        // Lower the vector with g.
        let mut omega = TensorField::zeros(grid, vec![Slot::Lower]);
        for a in 0..n {
            let opl = omega.plane_mut(a);
            for p in 0..npts {
                let gm = self.g_at(p);
                let mut acc = 0.0;
                for b in 0..n {
                    acc += gm[a * 2 + b] * x.as_tensor().plane(b)[p];
                }
                opl[p] = acc;
            }
        }
        let w = self.covariant_derivative(&omega);
        // 2 Sym(w) = w + w^T
        SymTensorField2::from_full(&w).expect("(0,2) by construction").scale(2.0)
    }
}

/// Trace over slots 0 and 1, which must be one contravariant and one
/// covariant (in either order). Needs no metric.
pub fn trace_first_two(t: &TensorField) -> Result<TensorField> {
    if t.rank() < 2 {
        return Err(Error::SlotMismatch("need at least two slots".to_string()));
    }
    let (s0, s1) = (t.slots()[0], t.slots()[1]);
    if s0 == s1 {
        return Err(Error::SlotMismatch(
            "trace needs one contravariant and one covariant slot".to_string(),
        ));
    }
    let grid = *t.grid();
    let n = grid.dim();
    let npts = grid.len();
    let out_slots = t.slots()[2..].to_vec();
    let mut out = TensorField::zeros(grid, out_slots);
    let rest = out.ncomp();
    for r in 0..rest {
        let opl = out.plane_mut(r);
        for i in 0..n {
            let tcomp = (i * n + i) * rest + r;
            let tpl = t.plane(tcomp);
            for p in 0..npts {
                opl[p] += tpl[p];
            }
        }
    }
    Ok(out)
}

/// Raw coordinate partials with the derivative slot prepended (no connection).
pub(crate) fn partial_prepended(t: &TensorField) -> TensorField {
    let grid = *t.grid();
    let n = grid.dim();
    let npts = grid.len();
    let mut out_slots = Vec::with_capacity(t.rank() + 1);
    out_slots.push(Slot::Lower);
    out_slots.extend_from_slice(t.slots());
    let mut out = TensorField::zeros(grid, out_slots);
    for j in 0..n {
        for comp in 0..t.ncomp() {
            let ocomp = j * t.ncomp() + comp;
            crate::grid::plane_derivative_into(&grid, t.plane(comp), j, out.plane_mut(ocomp));
        }
    }
    let _ = npts;
    out
}

/// Adds the connection correction terms of a covariant derivative to `out`,
/// using `gamma` as the (possibly varied) connection coefficients.
pub(crate) fn add_connection_terms(
    out: &mut TensorField,
    gamma: &ChristoffelField,
    t: &TensorField,
) {
    let grid = *t.grid();
    let n = grid.dim();
    let npts = grid.len();
    let k = t.rank();
    let mut oidx = vec![0usize; k + 1];
    let mut tidx = vec![0usize; k];
    for ocomp in 0..out.ncomp() {
        decode_multi(ocomp, n, &mut oidx);
        let j = oidx[0];
        for m in 0..k {
            let a_m = oidx[1 + m];
            for b in 0..n {
                tidx.copy_from_slice(&oidx[1..]);
                tidx[m] = b;
                let tcomp = encode_multi(&tidx, n);
                let (gpl, sign) = match t.slots()[m] {
                    Slot::Upper => (gamma.plane(a_m, j, b), 1.0),
                    Slot::Lower => (gamma.plane(b, j, a_m), -1.0),
                };
                let tpl = t.plane(tcomp);
                let opl = out.plane_mut(ocomp);
                if sign > 0.0 {
                    for p in 0..npts {
                        opl[p] += gpl[p] * tpl[p];
                    }
                } else {
                    for p in 0..npts {
                        opl[p] -= gpl[p] * tpl[p];
                    }
                }
            }
        }
    }
}

/// Connection coefficients of the varied metric, `D Gamma` in direction `m`:
/// `dGamma^i_{jk} = 1/2 g^{il} (nabla_j m_{kl} + nabla_k m_{jl} - nabla_l m_{jk})`.
pub(crate) fn d_christoffel(geom: &Geometry, m: &SymTensorField2) -> ChristoffelField {
    let grid = *geom.grid();
    let n = grid.dim();
    let npts = grid.len();
    let nm = geom.covariant_derivative(&m.to_full());
    let nmv = |a: usize, b: usize, c: usize, p: usize| {
        nm.plane(encode_multi(&[a, b, c], n))[p]
    };
    let mut comps = vec![0.0; n * n * n * npts];
    for p in 0..npts {
        let gi = geom.inv_at(p);
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += gi[i * 2 + l]
                            * (nmv(j, k, l, p) + nmv(k, j, l, p) - nmv(l, j, k, p));
                    }
                    let v = 0.5 * acc;
                    comps[((i * n + j) * n + k) * npts + p] = v;
                    if k != j {
                        comps[((i * n + k) * n + j) * npts + p] = v;
                    }
                }
            }
        }
    }
    ChristoffelField { grid, comps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn flat_geom(n: usize, pts: usize, len: f64) -> Geometry {
        let grid = Grid::square(n, pts, len).unwrap();
        Geometry::new(&MetricField::flat(grid)).unwrap()
    }

    #[test]
    fn inverse_of_flat_is_flat_and_diagonal_inverts() {
        let geom = flat_geom(2, 8, 1.0);
        let gi = geom.inv_at(3);
        assert_eq!(gi, [1.0, 0.0, 0.0, 1.0]);

        let grid = Grid::square(2, 8, 1.0).unwrap();
        let diag = MetricField::new(SymTensorField2::constant(grid, &[4.0, 0.0, 1.0])).unwrap();
        let geom = Geometry::new(&diag).unwrap();
        let gi = geom.inv_at(0);
        let expected = [0.25f64, 0.0, 0.0, 1.0];
        for (a, b) in gi.iter().zip(expected.iter()) {
            assert_eq!(f64::abs(*a), f64::abs(*b));
        }
    }

    #[test]
    fn inverse_residual_is_tiny_on_random_metrics() {
        let grid = Grid::square(2, 16, 1.0).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 11, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            let m = g.sym().mat_at(p);
            let gi = geom.inv_at(p);
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for k in 0..2 {
                        acc += m[i * 2 + k] * gi[k * 2 + j];
                    }
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((acc - target).abs());
                }
            }
        }
        assert!(worst <= 1e-13, "residual {worst:.3e}");
    }

    #[test]
    fn near_singular_metrics_are_reported_with_location() {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let mut sym = SymTensorField2::identity(grid);
        sym.plane_mut(2)[13] = 1e-13;
        let g = MetricField::new(sym).unwrap();
        match Geometry::new(&g) {
            Err(crate::error::Error::NearSingular { point, .. }) => assert_eq!(point, 13),
            Err(other) => panic!("expected a near-singular report, got {other:?}"),
            Ok(_) => panic!("expected a near-singular report, got a geometry"),
        }
    }

    #[test]
    fn volume_of_flat_torus() {
        let geom = flat_geom(2, 16, TAU);
        assert_relative_eq!(geom.total_volume(), TAU * TAU, max_relative = 1e-13);
        assert!(geom.volume_density().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn volume_scales_linearly_in_two_dimensions() {
        let grid = Grid::square(2, 8, TAU).unwrap();
        let g = MetricField::flat(grid).scale(1.7).unwrap();
        let geom = Geometry::new(&g).unwrap();
        assert_relative_eq!(geom.total_volume(), 1.7 * TAU * TAU, max_relative = 1e-13);
    }

    #[test]
    fn conformal_volume_matches_direct_quadrature() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let phi = ScalarField::from_fn(grid, |x, y| 0.1 * x.sin() * y.sin());
        let g = synth::conformal_metric(&phi).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let direct = integrate_density(&phi.map(|v| (2.0 * v).exp()));
        assert_relative_eq!(geom.total_volume(), direct, max_relative = 1e-10);
    }

    #[test]
    fn flat_christoffel_vanishes() {
        let geom = flat_geom(2, 8, 1.0);
        assert_eq!(geom.christoffel().max_abs(), 0.0);
    }

    #[test]
    fn conformal_christoffel_matches_closed_form() {
        let grid = Grid::square(2, 64, TAU).unwrap();
        let phi = ScalarField::from_fn(grid, |x, y| 0.2 * x.sin() + 0.1 * (y.cos()));
        let g = synth::conformal_metric(&phi).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let gamma = geom.christoffel();
        let d0 = phi.derivative(0).unwrap();
        let d1 = phi.derivative(1).unwrap();
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            worst = worst.max((gamma.plane(0, 0, 0)[p] - d0.values()[p]).abs());
            worst = worst.max((gamma.plane(0, 1, 1)[p] + d0.values()[p]).abs());
            worst = worst.max((gamma.plane(0, 0, 1)[p] - d1.values()[p]).abs());
            worst = worst.max((gamma.plane(1, 0, 0)[p] + d1.values()[p]).abs());
            worst = worst.max((gamma.plane(1, 1, 1)[p] - d1.values()[p]).abs());
            worst = worst.max((gamma.plane(1, 0, 1)[p] - d0.values()[p]).abs());
        }
        // The comparison pits the exact conformal Christoffels against the
        // discretized ones built from stencil derivatives of exp(2 phi).
        assert!(worst <= 2e-5, "worst deviation {worst:.3e}");
    }

    #[test]
    fn metric_compatibility_is_discretely_exact() {
        let grid = Grid::square(2, 16, 1.0).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 3, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let nabla_g = geom.covariant_derivative(&g.sym().to_full());
        // The connection is built from the same stencil derivatives, so the
        // cancellation is algebraic, far below any discretization scale.
        assert!(nabla_g.max_abs() <= 1e-13, "{:.3e}", nabla_g.max_abs());
    }

    #[test]
    fn flat_covariant_derivative_reduces_to_partials() {
        let grid = Grid::square(1, 64, TAU).unwrap();
        let geom = Geometry::new(&MetricField::flat(grid)).unwrap();
        let t = TensorField::from_fn(grid, vec![Slot::Lower, Slot::Lower], |_, x, _| x.sin());
        let w = geom.covariant_derivative(&t);
        let d = t.partial_derivative(0).unwrap();
        for p in 0..grid.len() {
            assert_eq!(w.plane(0)[p], d.plane(0)[p]);
        }
    }

    #[test]
    fn hessian_of_function_is_symmetric() {
        let grid = Grid::square(2, 64, TAU).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 21, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let f = TensorField::from_fn(grid, vec![], |_, x, y| (x + 0.3).sin() * (y).cos());
        let hess = geom.covariant_derivative(&geom.covariant_derivative(&f));
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            worst = worst.max((hess.plane(1)[p] - hess.plane(2)[p]).abs());
        }
        assert!(worst <= 1e-6, "antisymmetric part {worst:.3e}");
    }

    #[test]
    fn nabla_star_constant_on_flat_vanishes() {
        let geom = flat_geom(2, 8, 1.0);
        let b = TensorField::from_fn(*geom.grid(), vec![Slot::Lower], |idx, _, _| {
            1.5 + idx[0] as f64
        });
        let out = geom.nabla_star(&b).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn nabla_star_divergence_on_circle() {
        let grid = Grid::square(1, 64, TAU).unwrap();
        let geom = Geometry::new(&MetricField::flat(grid)).unwrap();
        let b = TensorField::from_fn(grid, vec![Slot::Lower], |_, x, _| x.sin());
        let out = geom.nabla_star(&b).unwrap().to_scalar().unwrap();
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            let x = grid.coords(p)[0];
            worst = worst.max((out.values()[p] + x.cos()).abs());
        }
        assert!(worst <= 1e-5, "{worst:.3e}");
    }

    #[test]
    fn nabla_star_is_adjoint_of_nabla() {
        // <nabla B, C> = <B, nabla* C> as integrated pairings, converging
        // under refinement.
        let mut gaps = Vec::new();
        for &npts in &[16usize, 32] {
            let grid = Grid::square(2, npts, TAU).unwrap();
            let (g, _) = synth::random_smooth_fields(&grid, 9, 0.2, 2).unwrap();
            let geom = Geometry::new(&g).unwrap();
            let b = synth::random_tensor(&grid, vec![Slot::Lower], 31, 0.3, 2).unwrap();
            let c = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], 32, 0.3, 2)
                .unwrap();
            let lhs = geom
                .integrated_inner(&geom.covariant_derivative(&b), &c)
                .unwrap();
            let rhs = geom
                .integrated_inner(&b, &geom.nabla_star(&c).unwrap())
                .unwrap();
            gaps.push((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
        }
        assert!(gaps[1] <= 1e-4, "relative gap {:.3e}", gaps[1]);
        assert!(
            gaps[0] / gaps[1] >= 4.0,
            "expected >= 4x improvement: {gaps:?}"
        );
    }

    #[test]
    fn laplacian_eigenfunction_on_flat_torus() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let geom = Geometry::new(&MetricField::flat(grid)).unwrap();
        let h = TensorField::from_fn(grid, vec![Slot::Lower, Slot::Lower], |idx, x, _| {
            if idx == [0, 0] {
                x.sin()
            } else {
                0.0
            }
        });
        let lap = geom.bochner_laplacian(&h);
        let mut worst = 0.0f64;
        for p in 0..grid.len() {
            let x = grid.coords(p)[0];
            worst = worst.max((lap.plane(0)[p] - x.sin()).abs());
            worst = worst.max(lap.plane(1)[p].abs());
            worst = worst.max(lap.plane(3)[p].abs());
        }
        assert!(worst <= 1e-4, "{worst:.3e}");

        let constant = TensorField::from_fn(grid, vec![Slot::Lower, Slot::Lower], |_, _, _| 2.0);
        assert_eq!(geom.bochner_laplacian(&constant).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_is_self_adjoint_and_nonnegative() {
        let grid = Grid::square(2, 32, TAU).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 17, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let h = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], 41, 0.3, 2).unwrap();
        let k = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], 42, 0.3, 2).unwrap();
        let lh = geom.bochner_laplacian(&h);
        let lk = geom.bochner_laplacian(&k);
        let a = geom.integrated_inner(&lh, &k).unwrap();
        let b = geom.integrated_inner(&h, &lk).unwrap();
        assert!(
            (a - b).abs() / a.abs().max(b.abs()) <= 1e-4,
            "self-adjointness gap {:.3e}",
            (a - b).abs() / a.abs().max(b.abs())
        );
        let quad = geom.integrated_inner(&lh, &h).unwrap();
        assert!(quad >= -1e-8, "quadratic form {quad:.3e}");
    }

    #[test]
    fn traces_contract_first_slots() {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let diag = MetricField::new(SymTensorField2::constant(grid, &[4.0, 0.0, 1.0])).unwrap();
        let geom = Geometry::new(&diag).unwrap();

        // Tr^g(g) = n
        let tg = geom.trace_g(&diag.sym().to_full()).unwrap().to_scalar().unwrap();
        assert!(tg.values().iter().all(|&v| (v - 2.0).abs() < 1e-14));

        // Tr of the identity (1,1) tensor = n
        let id = TensorField::from_fn(grid, vec![Slot::Upper, Slot::Lower], |idx, _, _| {
            if idx[0] == idx[1] {
                1.0
            } else {
                0.0
            }
        });
        let tr = trace_first_two(&id).unwrap().to_scalar().unwrap();
        assert!(tr.values().iter().all(|&v| (v - 2.0).abs() < 1e-14));

        // Tr^g(dx (x) dx) with g = diag(4, 1) is 1/4.
        let dxdx = TensorField::from_fn(grid, vec![Slot::Lower, Slot::Lower], |idx, _, _| {
            if idx == [0, 0] {
                1.0
            } else {
                0.0
            }
        });
        let t = geom.trace_g(&dxdx).unwrap().to_scalar().unwrap();
        assert!(t.values().iter().all(|&v| (v - 0.25).abs() < 1e-14));

        // Slot-type mismatch is rejected.
        assert!(trace_first_two(&dxdx).is_err());
        assert!(geom.trace_g(&id).is_err());
    }

    #[test]
    fn pointwise_inner_matches_hand_contractions() {
        let grid = Grid::square(2, 8, TAU).unwrap();
        let diag = MetricField::new(SymTensorField2::constant(grid, &[4.0, 0.0, 1.0])).unwrap();
        let geom = Geometry::new(&diag).unwrap();

        // g(g, g) = n everywhere.
        let gg = geom
            .pointwise_inner(&diag.sym().to_full(), &diag.sym().to_full())
            .unwrap();
        assert!(gg.values().iter().all(|&v| (v - 2.0).abs() < 1e-14));

        // dx (x) dx against itself under diag(4,1): 1/16.
        let dxdx = TensorField::from_fn(grid, vec![Slot::Lower, Slot::Lower], |idx, _, _| {
            if idx == [0, 0] {
                1.0
            } else {
                0.0
            }
        });
        let v = geom.pointwise_inner(&dxdx, &dxdx).unwrap();
        assert!(v.values().iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-14));

        // Symmetry on random fields.
        let (g, _) = synth::random_smooth_fields(&grid, 23, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let h = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], 51, 0.3, 2).unwrap();
        let k = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], 52, 0.3, 2).unwrap();
        let hk = geom.pointwise_inner(&h, &k).unwrap();
        let kh = geom.pointwise_inner(&k, &h).unwrap();
        for p in 0..grid.len() {
            assert!((hk.values()[p] - kh.values()[p]).abs() <= 1e-13);
        }
    }

    #[test]
    fn integrated_inner_reproduces_n_times_volume() {
        let grid = Grid::square(2, 16, TAU).unwrap();
        let geom = Geometry::new(&MetricField::flat(grid)).unwrap();
        let d = SymTensorField2::identity(grid);
        let val = geom.integrated_inner_sym(&d, &d);
        assert_relative_eq!(val, 8.0 * std::f64::consts::PI.powi(2), max_relative = 1e-12);

        // Positive definiteness and bilinearity.
        let h = synth::random_sym(&grid, 61, 0.3, 2).unwrap();
        assert!(geom.integrated_inner_sym(&h, &h) > 0.0);
        let k = synth::random_sym(&grid, 62, 0.3, 2).unwrap();
        let lin = geom.integrated_inner_sym(&SymTensorField2::linear_comb(2.0, &h, -3.0, &k), &k);
        let direct =
            2.0 * geom.integrated_inner_sym(&h, &k) - 3.0 * geom.integrated_inner_sym(&k, &k);
        assert_relative_eq!(lin, direct, max_relative = 1e-12);
    }

    #[test]
    fn flat_curvature_vanishes() {
        let geom = flat_geom(2, 16, 1.0);
        let c = geom.curvature();
        assert_eq!(c.riemann.max_abs(), 0.0);
        assert_eq!(c.ricci.max_abs(), 0.0);
        assert_eq!(c.scal.max_abs(), 0.0);
    }

    #[test]
    fn conformal_scalar_curvature_matches_closed_form() {
        let grid = Grid::square(2, 64, TAU).unwrap();
        let phi = ScalarField::from_fn(grid, |x, y| 0.1 * x.sin() * y.sin());
        let g = synth::conformal_metric(&phi).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let scal = &geom.curvature().scal;
        // Scal = -2 exp(-2 phi) (d^2/dx^2 + d^2/dy^2) phi for conformally flat
        // metrics on a 2-torus; the flat Laplacian is evaluated analytically.
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for p in 0..grid.len() {
            let [x, y] = grid.coords(p);
            let lap0 = -2.0 * 0.1 * x.sin() * y.sin();
            let exact = -2.0 * (-2.0 * phi.values()[p]).exp() * lap0;
            worst = worst.max((scal.values()[p] - exact).abs());
            scale = scale.max(exact.abs());
        }
        assert!(worst / scale <= 1e-4, "rel error {:.3e}", worst / scale);
    }

    #[test]
    fn gauss_bonnet_integral_vanishes_on_torus() {
        let grid = Grid::square(2, 64, TAU).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 13, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let total = integrate_density(&geom.curvature().scal.mul_field(geom.volume_density()));
        let scale = geom.curvature().scal.max_abs() * geom.total_volume();
        assert!(
            total.abs() <= 1e-6 * scale.max(1.0),
            "integral {total:.3e} vs scale {scale:.3e}"
        );
    }

    #[test]
    fn curvature_is_translation_equivariant_bitwise() {
        let grid = Grid::square(2, 16, 1.0).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, 29, 0.2, 2).unwrap();
        // Shift the metric by one cell along axis 0.
        let mut shifted = SymTensorField2::zeros(grid);
        for c in 0..3 {
            for p in 0..grid.len() {
                shifted.plane_mut(c)[grid.shifted(p, 0, 1)] = g.sym().plane(c)[p];
            }
        }
        let shifted = MetricField::new(shifted).unwrap();
        let scal_a = Geometry::new(&g).unwrap().curvature().scal.clone();
        let scal_b = Geometry::new(&shifted).unwrap().curvature().scal.clone();
        for p in 0..grid.len() {
            assert_eq!(scal_a.values()[p], scal_b.values()[grid.shifted(p, 0, 1)]);
        }

        // The scalar-curvature variation is equivariant as well.
        let (_, m) = synth::random_smooth_fields(&grid, 30, 0.2, 2).unwrap();
        let mut m_shift = SymTensorField2::zeros(grid);
        for c in 0..3 {
            for p in 0..grid.len() {
                m_shift.plane_mut(c)[grid.shifted(p, 0, 1)] = m.plane(c)[p];
            }
        }
        let ds_a = Geometry::new(&g).unwrap().d_scal(&m).unwrap();
        let ds_b = Geometry::new(&shifted).unwrap().d_scal(&m_shift).unwrap();
        for p in 0..grid.len() {
            assert_eq!(ds_a.values()[p], ds_b.values()[grid.shifted(p, 0, 1)]);
        }
    }

    #[test]
    fn fundamental_vector_field_of_killing_field_vanishes() {
        let geom = flat_geom(2, 16, 1.0);
        let x = VectorField::from_fn(*geom.grid(), |i, _, _| if i == 0 { 1.0 } else { 0.0 });
        let zeta = geom.fundamental_vector_field(&x);
        assert_eq!(zeta.max_abs(), 0.0);

        let zero = VectorField::from_fn(*geom.grid(), |_, _, _| 0.0);
        assert_eq!(geom.fundamental_vector_field(&zero).max_abs(), 0.0);
    }
}
