//! The Ricci vector field as a candidate gradient field: the operator
//! `Q(h) = D_(g,h)(P Ricci)`, its discrete-exact adjoint, and the curl test
//!
//! ```text
//! h G^P(Ricci, k) - k G^P(Ricci, h)
//!   = integral g(Q(h) - Q*(h) + (P Ricci) Tr(g^-1 h) / 2
//!               - g g(P Ricci, h) / 2, k) vol,
//! ```
//!
//! whose vanishing for all directions characterizes when the Ricci field is a
//! gradient of the weighted metric.
//!
//! `Q` is evaluated by Richardson-refined central differences in the metric —
//! the one derivative the calculus modules do not provide in closed form —
//! which keeps this module an independent check on everything upstream.
//! Its adjoint is assembled densely so that the pairing
//! `<Q h, k> = <h, Q* k>` is exact up to round-off, confining the comparison
//! error to `Q` itself.

use crate::error::{Error, Result};
use crate::fd;
use crate::field::{sym_comp_count, MetricField, SymTensorField2};
use crate::geometry::Geometry;
use crate::operator::OperatorSpec;

/// Largest point count accepted by the dense assembly (a 24 x 24 grid).
pub const ASSEMBLY_POINT_LIMIT: usize = 576;

/// `P_g Ricci_g` at one metric.
fn p_ricci(op: &OperatorSpec, g: &MetricField) -> Result<SymTensorField2> {
    let geom = Geometry::new(g)?;
    let ricci = geom.curvature().ricci.clone();
    op.apply(&geom, &ricci)
}

/// `Q(h) = D_(g,h)(P_g Ricci_g)` by Richardson-refined central differences.
pub fn q_apply(op: &OperatorSpec, g: &MetricField, h: &SymTensorField2) -> Result<SymTensorField2> {
    let eps = fd::directional_step(g, h, 1e-5);
    fd::richardson(g, h, eps, &|gp: &MetricField| p_ricci(op, gp))
}

/// Dense assembly of `Q` in the independent-component basis, weighted by the
/// discrete integrated inner product, so the adjoint is exact by construction.
pub struct AssembledQ {
    grid: crate::grid::Grid,
    dim: usize,
    /// Column-major dense matrix: `matrix[col * dim + row]`.
    matrix: Vec<f64>,
    /// Per-point Gram blocks of the weighted inner product, `nsym x nsym`.
    gram: Vec<f64>,
    nsym: usize,
}

impl AssembledQ {
    pub fn new(op: &OperatorSpec, g: &MetricField) -> Result<Self> {
        let grid = *g.grid();
        let npts = grid.len();
        if npts > ASSEMBLY_POINT_LIMIT {
            return Err(Error::GridTooLargeForAssembly {
                points: npts,
                limit: ASSEMBLY_POINT_LIMIT,
            });
        }
        let nsym = sym_comp_count(grid.dim());
        let dim = nsym * npts;

        let mut matrix = vec![0.0; dim * dim];
        for col in 0..dim {
            let mut basis = SymTensorField2::zeros(grid);
            let (c, p) = (col / npts, col % npts);
            basis.plane_mut(c)[p] = 1.0;
            let image = q_apply(op, g, &basis)?;
            for row_c in 0..nsym {
                let plane = image.plane(row_c);
                let dst = &mut matrix[col * dim + row_c * npts..col * dim + (row_c + 1) * npts];
                dst.copy_from_slice(plane);
            }
        }

        // Gram blocks: B_x[c][c'] = cell vol(x) <E_c, E_c'>_{g(x)}.
        let geom = Geometry::new(g)?;
        let cell = grid.cell_volume();
        let mut gram = vec![0.0; npts * nsym * nsym];
        let basis_mats: Vec<[f64; 4]> = match grid.dim() {
            1 => vec![[1.0, 0.0, 0.0, 0.0]],
            _ => vec![
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
        };
        let n = grid.dim();
        for p in 0..npts {
            let gi = geom.inv_at(p);
            let w = cell * geom.volume_density().values()[p];
            for (a, ea) in basis_mats.iter().enumerate() {
                for (b, eb) in basis_mats.iter().enumerate() {
                    // Tr(g^-1 ea g^-1 eb)
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            for x in 0..n {
                                for y in 0..n {
                                    acc += gi[i * 2 + j]
                                        * ea[j * 2 + x]
                                        * gi[x * 2 + y]
                                        * eb[y * 2 + i];
                                }
                            }
                        }
                    }
                    gram[(p * nsym + a) * nsym + b] = w * acc;
                }
            }
        }

        Ok(AssembledQ {
            grid,
            dim,
            matrix,
            gram,
            nsym,
        })
    }

    fn to_coords(&self, h: &SymTensorField2) -> Vec<f64> {
        let npts = self.grid.len();
        let mut x = vec![0.0; self.dim];
        for c in 0..self.nsym {
            x[c * npts..(c + 1) * npts].copy_from_slice(h.plane(c));
        }
        x
    }

    fn field_from_coords(&self, x: &[f64]) -> SymTensorField2 {
        let npts = self.grid.len();
        let mut out = SymTensorField2::zeros(self.grid);
        for c in 0..self.nsym {
            out.plane_mut(c).copy_from_slice(&x[c * npts..(c + 1) * npts]);
        }
        out
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for (col, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                let column = &self.matrix[col * self.dim..(col + 1) * self.dim];
                for (yr, &m) in y.iter_mut().zip(column) {
                    *yr += m * xc;
                }
            }
        }
        y
    }

    fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for (row, yr) in y.iter_mut().enumerate() {
            let column = &self.matrix[row * self.dim..(row + 1) * self.dim];
            let mut acc = 0.0;
            for (m, xv) in column.iter().zip(x) {
                acc += m * xv;
            }
            *yr = acc;
        }
        y
    }

    /// Weighted inner product matrix applied pointwise.
    fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        let npts = self.grid.len();
        let mut y = vec![0.0; self.dim];
        for p in 0..npts {
            for a in 0..self.nsym {
                let mut acc = 0.0;
                for b in 0..self.nsym {
                    acc += self.gram[(p * self.nsym + a) * self.nsym + b] * x[b * npts + p];
                }
                y[a * npts + p] = acc;
            }
        }
        y
    }

    fn gram_solve(&self, x: &[f64]) -> Vec<f64> {
        let npts = self.grid.len();
        let mut y = vec![0.0; self.dim];
        for p in 0..npts {
            // Solve the small SPD block.
            let d = self.nsym;
            let mut a = vec![0.0; d * d];
            a.copy_from_slice(&self.gram[p * d * d..(p + 1) * d * d]);
            let mut rhs = vec![0.0; d];
            for c in 0..d {
                rhs[c] = x[c * npts + p];
            }
            // Gaussian elimination with partial pivoting.
            for col in 0..d {
                let mut piv = col;
                for row in col + 1..d {
                    if a[row * d + col].abs() > a[piv * d + col].abs() {
                        piv = row;
                    }
                }
                if piv != col {
                    for cc in 0..d {
                        a.swap(col * d + cc, piv * d + cc);
                    }
                    rhs.swap(col, piv);
                }
                let diag = a[col * d + col];
                for row in col + 1..d {
                    let fct = a[row * d + col] / diag;
                    if fct != 0.0 {
                        for cc in col..d {
                            a[row * d + cc] -= fct * a[col * d + cc];
                        }
                        rhs[row] -= fct * rhs[col];
                    }
                }
            }
            for col in (0..d).rev() {
                let mut acc = rhs[col];
                for cc in col + 1..d {
                    acc -= a[col * d + cc] * rhs[cc];
                }
                rhs[col] = acc / a[col * d + col];
            }
            for c in 0..d {
                y[c * npts + p] = rhs[c];
            }
        }
        y
    }

    /// The assembled operator applied to a field.
    pub fn apply(&self, h: &SymTensorField2) -> SymTensorField2 {
        self.field_from_coords(&self.matvec(&self.to_coords(h)))
    }

    /// The discrete-exact adjoint `Q* = G^-1 Q^T G` in the weighted inner
    /// product.
    pub fn apply_adjoint(&self, k: &SymTensorField2) -> SymTensorField2 {
        let v = self.gram_apply(&self.to_coords(k));
        let w = self.matvec_transpose(&v);
        self.field_from_coords(&self.gram_solve(&w))
    }
}

/// Adjoint of `Q` on one field, assembling the operator first. Prefer
/// [`AssembledQ`] when several applications share a base metric.
pub fn q_adjoint(
    op: &OperatorSpec,
    g: &MetricField,
    k: &SymTensorField2,
) -> Result<SymTensorField2> {
    Ok(AssembledQ::new(op, g)?.apply_adjoint(k))
}

/// Both sides of the curl identity. The left side differentiates the weak
/// metric against the Ricci field in two directions; the right side evaluates
/// the displayed integrand with the finite-difference `Q` and the assembled
/// adjoint. Their agreement validates the whole derivative chain.
pub fn curl_residual(
    op: &OperatorSpec,
    g: &MetricField,
    h: &SymTensorField2,
    k: &SymTensorField2,
) -> Result<(f64, f64)> {
    // Left side: antisymmetrized directional derivatives of G^P(Ricci, .).
    let pair = |dir: &SymTensorField2, other: &SymTensorField2| -> Result<f64> {
        let eps = fd::directional_step(g, dir, 1e-5);
        fd::richardson(g, dir, eps, &|gp: &MetricField| {
            let geom = Geometry::new(gp)?;
            let ricci = geom.curvature().ricci.clone();
            op.gp_inner(&geom, &ricci, other)
        })
    };
    let lhs = pair(h, k)? - pair(k, h)?;

    // Right side: the displayed integrand.
    let geom = Geometry::new(g)?;
    let pric = op.apply(&geom, &geom.curvature().ricci.clone())?;
    let assembled = AssembledQ::new(op, g)?;
    let qh = q_apply(op, g, h)?;
    let qsh = assembled.apply_adjoint(h);
    let tr_h = geom.trace_inv(h);
    let pr_h = geom.inner02(&pric, h);
    let mut integrand = &qh - &qsh;
    integrand = &integrand + &pric.mul_scalar_field(&tr_h.map(|v| 0.5 * v));
    integrand = &integrand - &geom.g_sym().mul_scalar_field(&pr_h.map(|v| 0.5 * v));
    let rhs = geom.integrated_inner_sym(&integrand, k);
    Ok((lhs, rhs))
}

/// Norm of the gradient-condition defect
/// `2 (Q(h) - Q*(h)) + (P Ricci) Tr(g^-1 h) - g g(P Ricci, h)`;
/// zero exactly when the Ricci field is locally a gradient of `G^P`.
pub fn gradient_condition_residual(
    op: &OperatorSpec,
    g: &MetricField,
    h: &SymTensorField2,
) -> Result<f64> {
    let geom = Geometry::new(g)?;
    let pric = op.apply(&geom, &geom.curvature().ricci.clone())?;
    let assembled = AssembledQ::new(op, g)?;
    let qh = q_apply(op, g, h)?;
    let qsh = assembled.apply_adjoint(h);
    let tr_h = geom.trace_inv(h);
    let pr_h = geom.inner02(&pric, h);
    let mut defect = (&qh - &qsh).scale(2.0);
    defect = &defect + &pric.mul_scalar_field(&tr_h);
    defect = &defect - &geom.g_sym().mul_scalar_field(&pr_h);
    Ok(geom.integrated_inner_sym(&defect, &defect).max(0.0).sqrt())
}
