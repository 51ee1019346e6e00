//! First-variation formulas in the metric direction: volume density, scalar
//! curvature, the covariant-derivative variation `N` with its total symbol,
//! the Laplacian variation, and the pointwise-assembled adjoint of the symbol
//! map used by the Sobolev-family adjoint.

use crate::error::{Error, Result};
use crate::field::{
    decode_multi, encode_multi, ScalarField, Slot, SymTensorField2, TensorField,
};
use crate::geometry::{add_connection_terms, d_christoffel, Geometry};

impl Geometry {
    /// `D vol = 1/2 Tr(g^-1 m) vol(g)`.
    pub fn d_volume_density(&self, m: &SymTensorField2) -> ScalarField {
        self.trace_inv(m)
            .map(|v| 0.5 * v)
            .mul_field(self.volume_density())
    }

    /// `D Scal = Delta(Tr(g^-1 m)) + nabla*(nabla*(m)) - g(Ricci, m)`.
    pub fn d_scal(&self, m: &SymTensorField2) -> Result<ScalarField> {
        let tr = self.trace_inv(m);
        let tr_t = TensorField::from_planes(*self.grid(), vec![], tr.values().to_vec())?;
        let lap_tr = self.bochner_laplacian(&tr_t).to_scalar()?;
        let div1 = self.nabla_star(&m.to_full())?;
        let div2 = self.nabla_star(&div1)?.to_scalar()?;
        let ric_m = self.inner02(&self.curvature().ricci.clone(), m);
        let vals = lap_tr
            .values()
            .iter()
            .zip(div2.values())
            .zip(ric_m.values())
            .map(|((a, b), c)| a + b - c)
            .collect();
        ScalarField::from_values(*self.grid(), vals)
    }

    /// The variation of the covariant derivative, `N(m)` applied to `t`.
    /// Tensorial: the connection-correction terms with the varied Christoffel
    /// symbols; the derivative slot is prepended.
    pub fn n_apply(&self, m: &SymTensorField2, t: &TensorField) -> TensorField {
        let dgamma = d_christoffel(self, m);
        let mut out_slots = Vec::with_capacity(t.rank() + 1);
        out_slots.push(Slot::Lower);
        out_slots.extend_from_slice(t.slots());
        let mut out = TensorField::zeros(*self.grid(), out_slots);
        add_connection_terms(&mut out, &dgamma, t);
        out
    }

    /// Variation of the Bochner Laplacian:
    /// `D Delta h = Tr(g^-1 m g^-1 nabla^2 h) - Tr^g(N(m) nabla h) - Tr^g(nabla(N(m) h))`.
    pub fn d_laplacian(
        &self,
        m: &SymTensorField2,
        h: &TensorField,
    ) -> Result<TensorField> {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();

        let nh = self.covariant_derivative(h);
        let w2 = self.covariant_derivative(&nh);

        // Term 1: contract the two derivative slots of nabla^2 h with the
        // both-indices-raised direction m.
        let mut term1 = TensorField::zeros(grid, h.slots().to_vec());
        let rest = term1.ncomp();
        for p in 0..npts {
            let gi = self.inv_at(p);
            let mm = m.mat_at(p);
            // m with both indices raised: g^-1 m g^-1.
            let mut mup = [0.0f64; 4];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            acc += gi[i * 2 + a] * mm[a * 2 + b] * gi[b * 2 + j];
                        }
                    }
                    mup[i * 2 + j] = acc;
                }
            }
            for r in 0..rest {
                let mut acc = 0.0;
                for l in 0..n {
                    for i in 0..n {
                        acc += mup[l * 2 + i] * w2.plane((l * n + i) * rest + r)[p];
                    }
                }
                term1.plane_mut(r)[p] = acc;
            }
        }

        let term2 = self.trace_g(&self.n_apply(m, &nh))?;
        let term3 = self.trace_g(&self.covariant_derivative(&self.n_apply(m, h)))?;

        Ok(TensorField::linear_comb(
            1.0,
            &term1,
            -1.0,
            &(&term2 + &term3),
        ))
    }

    /// Total symbol of `N` on fully covariant tensors:
    /// `sigma(N^0_q)(mt)(h)` where `mt` is a `(0,3)` tensor symmetric in its
    /// last two slots. Satisfies `N(m) h = sigma(N^0_q)(nabla m)(h)`.
    pub fn sigma_n_apply(&self, mt: &TensorField, h: &TensorField) -> Result<TensorField> {
        check_sigma_args(mt, h)?;
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let q = h.rank();
        let mut out_slots = vec![Slot::Lower];
        out_slots.extend_from_slice(h.slots());
        let mut out = TensorField::zeros(grid, out_slots);

        let n3 = n * n * n;
        let tables = SigmaTables::new(n, q);
        let mut mtv = vec![0.0; n3];
        let mut s = vec![0.0; n3];
        let mut hv = vec![0.0; h.ncomp()];
        let mut outv = vec![0.0; out.ncomp()];
        for p in 0..npts {
            for (c, v) in mtv.iter_mut().enumerate() {
                *v = mt.plane(c)[p];
            }
            for (c, v) in hv.iter_mut().enumerate() {
                *v = h.plane(c)[p];
            }
            let gi = self.inv_at(p);
            sigma_alternating_sum(&mtv, n, &mut s);
            sigma_pointwise(&s, &hv, &gi, n, &tables, &mut outv);
            for (c, v) in outv.iter().enumerate() {
                out.plane_mut(c)[p] = *v;
            }
        }
        Ok(out)
    }

    /// Adjoint of the variation of the covariant derivative:
    /// `(N^0_q(.) h)*(k) = nabla*((sigma(N^0_q)(.) h)* k)`, with the pointwise
    /// adjoint of the symbol map assembled per grid point over the
    /// `n * n(n+1)/2`-dimensional space of symbol directions, and the result
    /// symmetrized.
    pub fn n_adjoint(
        &self,
        h: &TensorField,
        k: &TensorField,
    ) -> Result<SymTensorField2> {
        let grid = *self.grid();
        let n = grid.dim();
        let npts = grid.len();
        let q = h.rank();
        if h.slots().iter().any(|s| *s != Slot::Lower)
            || k.slots().iter().any(|s| *s != Slot::Lower)
            || k.rank() != q + 1
        {
            return Err(Error::SlotMismatch(
                "n_adjoint needs covariant h of rank q and k of rank q+1".to_string(),
            ));
        }

        let basis = symbol_basis(n);
        let d1 = basis.len();
        let n3 = n * n * n;
        let nck = k.ncomp();
        let tables = SigmaTables::new(n, q);
        // The alternating cyclic sum of each basis element is constant.
        let basis_sums: Vec<Vec<f64>> = basis
            .iter()
            .map(|e| {
                let mut sum = vec![0.0; n3];
                sigma_alternating_sum(e, n, &mut sum);
                sum
            })
            .collect();

        let mut star = TensorField::zeros(grid, vec![Slot::Lower, Slot::Lower, Slot::Lower]);
        let mut hv = vec![0.0; h.ncomp()];
        let mut kraised = vec![0.0; nck];
        let mut sigma_out = vec![0.0; nck];
        let mut gram = vec![0.0; d1 * d1];
        let mut scratch = vec![0.0; d1 * d1];
        let mut z = vec![0.0; d1];
        let mut basis_raised = vec![vec![0.0; n3]; d1];

        for p in 0..npts {
            let gi = self.inv_at(p);
            for (c, v) in hv.iter_mut().enumerate() {
                *v = h.plane(c)[p];
            }
            // Raise all slots of k once per point.
            for (c, v) in kraised.iter_mut().enumerate() {
                *v = k.plane(c)[p];
            }
            raise_all_slots(&mut kraised, &gi, n, q + 1);

            // z_alpha = < sigma(E_alpha) h, k >_{g}, via raised k.
            for (alpha, sum) in basis_sums.iter().enumerate() {
                sigma_pointwise(sum, &hv, &gi, n, &tables, &mut sigma_out);
                let mut acc = 0.0;
                for c in 0..nck {
                    acc += sigma_out[c] * kraised[c];
                }
                z[alpha] = acc;
            }

            // Gram matrix of the basis under the (0,3) inner product.
            for (alpha, e) in basis.iter().enumerate() {
                basis_raised[alpha].copy_from_slice(e);
                raise_all_slots(&mut basis_raised[alpha], &gi, n, 3);
            }
            for alpha in 0..d1 {
                for beta in alpha..d1 {
                    let mut acc = 0.0;
                    for c in 0..n3 {
                        acc += basis[alpha][c] * basis_raised[beta][c];
                    }
                    gram[alpha * d1 + beta] = acc;
                    gram[beta * d1 + alpha] = acc;
                }
            }
            scratch.copy_from_slice(&gram);
            solve_small(&mut scratch, &mut z);

            // (sigma(.) h)* k at this point, as a (0,3) tensor.
            for c in 0..n3 {
                let mut acc = 0.0;
                for alpha in 0..d1 {
                    acc += z[alpha] * basis[alpha][c];
                }
                star.plane_mut(c)[p] = acc;
            }
        }

        let div = self.nabla_star(&star)?;
        SymTensorField2::from_full(&div)
    }
}

fn check_sigma_args(mt: &TensorField, h: &TensorField) -> Result<()> {
    if mt.slots() != [Slot::Lower, Slot::Lower, Slot::Lower] {
        return Err(Error::SlotMismatch(
            "symbol direction must be a (0,3) tensor".to_string(),
        ));
    }
    if h.slots().iter().any(|s| *s != Slot::Lower) {
        return Err(Error::SlotMismatch(
            "sigma acts on fully covariant tensors".to_string(),
        ));
    }
    Ok(())
}

/// The cyclic alternating sum of the symbol formula:
/// `S_abc = mt_abc - mt_cab + mt_bca`. The direction of the cyclic
/// permutation is pinned by the identity `N(m) h = sigma(nabla m)(h)`.
fn sigma_alternating_sum(mt: &[f64], n: usize, out: &mut [f64]) {
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out[(a * n + b) * n + c] = mt[(a * n + b) * n + c] - mt[(c * n + a) * n + b]
                    + mt[(b * n + c) * n + a];
            }
        }
    }
}

/// Index tables for the pointwise symbol evaluation, fixed per (n, q):
/// for each output component and each inner (slot, replacement) pair, the
/// pair base `(a n + A_j) n` into the alternating sum and the component of
/// `h` with slot `j` replaced by `d`.
struct SigmaTables {
    /// `entries[ocomp]` = list of `(s_base, d, h_comp)`.
    entries: Vec<Vec<(usize, usize, usize)>>,
}

impl SigmaTables {
    fn new(n: usize, q: usize) -> Self {
        let ncomp = n.pow(q as u32 + 1);
        let mut oidx = vec![0usize; q + 1];
        let mut hidx = vec![0usize; q];
        let mut entries = Vec::with_capacity(ncomp);
        for ocomp in 0..ncomp {
            decode_multi(ocomp, n, &mut oidx);
            let a = oidx[0];
            let mut list = Vec::with_capacity(q * n);
            for j in 0..q {
                let aj = oidx[1 + j];
                for d in 0..n {
                    hidx.copy_from_slice(&oidx[1..]);
                    hidx[j] = d;
                    list.push(((a * n + aj) * n, d, encode_multi(&hidx, n)));
                }
            }
            entries.push(list);
        }
        SigmaTables { entries }
    }
}

/// Evaluates the symbol at one point:
/// `out_(a,A) = -1/2 sum_j sum_d g^{dc} S_{a, A_j, c} h_{A: j -> d}`.
fn sigma_pointwise(s: &[f64], hv: &[f64], gi: &[f64; 4], n: usize, tables: &SigmaTables, out: &mut [f64]) {
    for (ocomp, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &(s_base, d, h_comp) in &tables.entries[ocomp] {
            let mut v = 0.0;
            for c in 0..n {
                v += gi[d * 2 + c] * s[s_base + c];
            }
            acc += v * hv[h_comp];
        }
        *o = -0.5 * acc;
    }
}

/// Basis of the symbol-direction space `T* (x) S^2 T*`: for each first index
/// `a` and unordered pair `b <= c`, the tensor `e_a (x) (e_b (x) e_c + e_c (x) e_b)`
/// (diagonal pairs unsymmetrized).
fn symbol_basis(n: usize) -> Vec<Vec<f64>> {
    let n3 = n * n * n;
    let mut basis = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in b..n {
                let mut e = vec![0.0; n3];
                if b == c {
                    e[(a * n + b) * n + c] = 1.0;
                } else {
                    e[(a * n + b) * n + c] = 1.0;
                    e[(a * n + c) * n + b] = 1.0;
                }
                basis.push(e);
            }
        }
    }
    basis
}

/// Raises every slot of a fully covariant local tensor with `g^-1`.
fn raise_all_slots(vals: &mut [f64], gi: &[f64; 4], n: usize, k: usize) {
    let ncomp = vals.len();
    let mut tmp = vec![0.0; ncomp];
    for s in 0..k {
        let stride = n.pow((k - 1 - s) as u32);
        for c in 0..ncomp {
            let i_s = (c / stride) % n;
            let base = c - i_s * stride;
            let mut acc = 0.0;
            for b in 0..n {
                acc += gi[i_s * 2 + b] * vals[base + b * stride];
            }
            tmp[c] = acc;
        }
        vals.copy_from_slice(&tmp);
    }
}

/// Gaussian elimination with partial pivoting for the tiny Gram systems.
/// Destroys `a` and solves into `x` in place.
fn solve_small(a: &mut [f64], x: &mut [f64]) {
    let d = x.len();
    for col in 0..d {
        let mut piv = col;
        for row in col + 1..d {
            if a[row * d + col].abs() > a[piv * d + col].abs() {
                piv = row;
            }
        }
        if piv != col {
            for c in 0..d {
                a.swap(col * d + c, piv * d + c);
            }
            x.swap(col, piv);
        }
        let diag = a[col * d + col];
        for row in col + 1..d {
            let f = a[row * d + col] / diag;
            if f != 0.0 {
                for c in col..d {
                    a[row * d + c] -= f * a[col * d + c];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..d).rev() {
        let mut acc = x[col];
        for c in col + 1..d {
            acc -= a[col * d + c] * x[c];
        }
        x[col] = acc / a[col * d + col];
    }
}
