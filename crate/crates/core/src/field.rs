//! Field storage: scalar, tensor, symmetric two-tensor and metric fields.
//!
//! Components are stored plane-major: one contiguous `Vec` slice of grid
//! values per tensor component, with the grid itself row-major and the last
//! axis fastest. Tensor components are ordered with slot 0 slowest, so the
//! flat component index of a multi-index `(a_0, ..., a_{k-1})` is
//! `sum a_i * n^(k-1-i)`. The derivative slot added by the covariant
//! derivative is always prepended as slot 0.

use crate::error::{Error, Result};
use crate::grid::{plane_derivative, Grid};

/// Variance of one tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Contravariant (vector-like) slot.
    Upper,
    /// Covariant (one-form-like) slot.
    Lower,
}

/// A real-valued function sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f(x, y)` at every lattice point (`y = 0` on 1-d grids).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|p| {
                let c = grid.coords(p);
                f(c[0], c[1])
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Componentwise fourth-order central difference along `axis`.
    pub fn derivative(&self, axis: usize) -> Result<ScalarField> {
        self.grid.check_axis(axis)?;
        Ok(ScalarField {
            grid: self.grid,
            values: plane_derivative(&self.grid, &self.values, axis),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product of two scalar fields.
    pub fn mul_field(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// Rectangle-rule quadrature: `sum_x s(x) * prod_i h_i`.
///
/// Summation order is the fixed storage order, so results are bit-reproducible.
pub fn integrate_density(s: &ScalarField) -> f64 {
    let cell = s.grid.cell_volume();
    s.values.iter().sum::<f64>() * cell
}

/// A general tensor field with an explicit ordered slot signature.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    slots: Vec<Slot>,
    /// Plane-major storage: `data[comp * npoints + p]`.
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: Grid, slots: Vec<Slot>) -> Self {
        let ncomp = grid.dim().pow(slots.len() as u32);
        TensorField {
            grid,
            slots,
            data: vec![0.0; ncomp * grid.len()],
        }
    }

    pub fn from_planes(grid: Grid, slots: Vec<Slot>, data: Vec<f64>) -> Result<Self> {
        let ncomp = grid.dim().pow(slots.len() as u32);
        if data.len() != ncomp * grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(TensorField { grid, slots, data })
    }

    /// Builds a tensor field by sampling `f(multi_index, x, y)`.
    pub fn from_fn(
        grid: Grid,
        slots: Vec<Slot>,
        f: impl Fn(&[usize], f64, f64) -> f64,
    ) -> Self {
        let mut t = TensorField::zeros(grid, slots);
        let n = grid.dim();
        let k = t.slots.len();
        let mut idx = vec![0usize; k];
        for comp in 0..t.ncomp() {
            decode_multi(comp, n, &mut idx);
            for p in 0..grid.len() {
                let c = grid.coords(p);
                t.data[comp * grid.len() + p] = f(&idx, c[0], c[1]);
            }
        }
        t
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    /// Number of contravariant slots.
    pub fn rank_upper(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Upper).count()
    }

    /// Number of covariant slots.
    pub fn rank_lower(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Lower).count()
    }

    pub fn ncomp(&self) -> usize {
        self.grid.dim().pow(self.slots.len() as u32)
    }

    pub fn plane(&self, comp: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[comp * n..(comp + 1) * n]
    }

    pub fn plane_mut(&mut self, comp: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[comp * n..(comp + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat component index of a slot multi-index, slot 0 slowest.
    pub fn comp_index(&self, idx: &[usize]) -> usize {
        encode_multi(idx, self.grid.dim())
    }

    /// Componentwise fourth-order central difference along `axis`.
    /// The slot signature is unchanged; this is the raw coordinate partial.
    pub fn partial_derivative(&self, axis: usize) -> Result<TensorField> {
        self.grid.check_axis(axis)?;
        let npts = self.grid.len();
        let mut data = vec![0.0; self.data.len()];
        for comp in 0..self.ncomp() {
            let d = plane_derivative(&self.grid, self.plane(comp), axis);
            data[comp * npts..(comp + 1) * npts].copy_from_slice(&d);
        }
        Ok(TensorField {
            grid: self.grid,
            slots: self.slots.clone(),
            data,
        })
    }

    /// Scalar view of a rank-0 tensor.
    pub fn to_scalar(&self) -> Result<ScalarField> {
        if !self.slots.is_empty() {
            return Err(Error::SlotMismatch(format!(
                "expected rank 0, got {} slots",
                self.slots.len()
            )));
        }
        ScalarField::from_values(self.grid, self.data.clone())
    }

    pub fn linear_comb(a: f64, x: &TensorField, b: f64, y: &TensorField) -> TensorField {
        debug_assert_eq!(x.slots, y.slots);
        debug_assert_eq!(x.grid, y.grid);
        TensorField {
            grid: x.grid,
            slots: x.slots.clone(),
            data: x
                .data
                .iter()
                .zip(&y.data)
                .map(|(u, v)| a * u + b * v)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> TensorField {
        TensorField {
            grid: self.grid,
            slots: self.slots.clone(),
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// Pointwise multiply every component by a scalar field.
    pub fn mul_scalar_field(&self, s: &ScalarField) -> TensorField {
        debug_assert_eq!(self.grid, *s.grid());
        let npts = self.grid.len();
        let mut data = self.data.clone();
        for comp in 0..self.ncomp() {
            for p in 0..npts {
                data[comp * npts + p] *= s.values()[p];
            }
        }
        TensorField {
            grid: self.grid,
            slots: self.slots.clone(),
            data,
        }
    }
}

pub(crate) fn encode_multi(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &a| acc * n + a)
}

pub(crate) fn decode_multi(mut comp: usize, n: usize, idx: &mut [usize]) {
    for slot in (0..idx.len()).rev() {
        idx[slot] = comp % n;
        comp /= n;
    }
}

impl std::ops::Add for &TensorField {
    type Output = TensorField;
    fn add(self, rhs: &TensorField) -> TensorField {
        TensorField::linear_comb(1.0, self, 1.0, rhs)
    }
}

impl std::ops::Sub for &TensorField {
    type Output = TensorField;
    fn sub(self, rhs: &TensorField) -> TensorField {
        TensorField::linear_comb(1.0, self, -1.0, rhs)
    }
}

/// A symmetric `(0,2)`-tensor field, stored as independent components:
/// `[g_00]` in one dimension, `[g_00, g_01, g_11]` in two.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField2 {
    grid: Grid,
    comps: Vec<f64>,
}

/// Number of independent symmetric components, `n (n + 1) / 2`.
pub fn sym_comp_count(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl SymTensorField2 {
    pub fn zeros(grid: Grid) -> Self {
        SymTensorField2 {
            grid,
            comps: vec![0.0; sym_comp_count(grid.dim()) * grid.len()],
        }
    }

    pub fn from_comps(grid: Grid, comps: Vec<f64>) -> Result<Self> {
        if comps.len() != sym_comp_count(grid.dim()) * grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(SymTensorField2 { grid, comps })
    }

    /// Builds from a per-point function of the independent component index
    /// (0 -> 00, 1 -> 01, 2 -> 11) and the coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let nc = sym_comp_count(grid.dim());
        let npts = grid.len();
        let mut comps = vec![0.0; nc * npts];
        for c in 0..nc {
            for p in 0..npts {
                let xy = grid.coords(p);
                comps[c * npts + p] = f(c, xy[0], xy[1]);
            }
        }
        SymTensorField2 { grid, comps }
    }

    /// Constant field with the given independent components.
    pub fn constant(grid: Grid, m: &[f64]) -> Self {
        let nc = sym_comp_count(grid.dim());
        assert_eq!(m.len(), nc);
        let npts = grid.len();
        let mut comps = vec![0.0; nc * npts];
        for c in 0..nc {
            comps[c * npts..(c + 1) * npts].fill(m[c]);
        }
        SymTensorField2 { grid, comps }
    }

    /// The flat reference metric `delta` (identity matrix at every point).
    pub fn identity(grid: Grid) -> Self {
        match grid.dim() {
            1 => SymTensorField2::constant(grid, &[1.0]),
            _ => SymTensorField2::constant(grid, &[1.0, 0.0, 1.0]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        sym_comp_count(self.grid.dim())
    }

    pub fn plane(&self, comp: usize) -> &[f64] {
        let n = self.grid.len();
        &self.comps[comp * n..(comp + 1) * n]
    }

    pub fn plane_mut(&mut self, comp: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.comps[comp * n..(comp + 1) * n]
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    /// The full 2x2 matrix at point `p` as `[m00, m01, m10, m11]`
    /// (`[m00, 0, 0, 0]` in one dimension).
    pub fn mat_at(&self, p: usize) -> [f64; 4] {
        let npts = self.grid.len();
        match self.grid.dim() {
            1 => [self.comps[p], 0.0, 0.0, 0.0],
            _ => {
                let a = self.comps[p];
                let b = self.comps[npts + p];
                let c = self.comps[2 * npts + p];
                [a, b, b, c]
            }
        }
    }

    pub fn set_at(&mut self, p: usize, m: &[f64; 4]) {
        let npts = self.grid.len();
        match self.grid.dim() {
            1 => self.comps[p] = m[0],
            _ => {
                self.comps[p] = m[0];
                self.comps[npts + p] = 0.5 * (m[1] + m[2]);
                self.comps[2 * npts + p] = m[3];
            }
        }
    }

    /// Expands to a full `(0,2)` tensor field with slots `[Lower, Lower]`.
    pub fn to_full(&self) -> TensorField {
        let grid = self.grid;
        let mut t = TensorField::zeros(grid, vec![Slot::Lower, Slot::Lower]);
        let npts = grid.len();
        match grid.dim() {
            1 => t.plane_mut(0).copy_from_slice(self.plane(0)),
            _ => {
                for p in 0..npts {
                    let m = self.mat_at(p);
                    t.plane_mut(0)[p] = m[0];
                    t.plane_mut(1)[p] = m[1];
                    t.plane_mut(2)[p] = m[2];
                    t.plane_mut(3)[p] = m[3];
                }
            }
        }
        t
    }

    /// Symmetrizes a full `(0,2)` tensor field back to independent components.
    pub fn from_full(t: &TensorField) -> Result<Self> {
        if t.slots() != [Slot::Lower, Slot::Lower] {
            return Err(Error::SlotMismatch(
                "expected a (0,2) tensor field".to_string(),
            ));
        }
        let grid = *t.grid();
        let npts = grid.len();
        let mut out = SymTensorField2::zeros(grid);
        match grid.dim() {
            1 => out.plane_mut(0).copy_from_slice(t.plane(0)),
            _ => {
                for p in 0..npts {
                    out.plane_mut(0)[p] = t.plane(0)[p];
                    out.plane_mut(1)[p] = 0.5 * (t.plane(1)[p] + t.plane(2)[p]);
                    out.plane_mut(2)[p] = t.plane(3)[p];
                }
            }
        }
        Ok(out)
    }

    /// Minimum eigenvalue of the symmetric matrix over the whole grid.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let npts = self.grid.len();
        let mut min = f64::INFINITY;
        let mut arg = 0;
        for p in 0..npts {
            let e = match self.grid.dim() {
                1 => self.comps[p],
                _ => {
                    let a = self.comps[p];
                    let b = self.comps[npts + p];
                    let c = self.comps[2 * npts + p];
                    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
                }
            };
            if e < min {
                min = e;
                arg = p;
            }
        }
        (min, arg)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|v| v.is_finite())
    }

    pub fn linear_comb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        debug_assert_eq!(x.grid, y.grid);
        SymTensorField2 {
            grid: x.grid,
            comps: x
                .comps
                .iter()
                .zip(&y.comps)
                .map(|(u, v)| a * u + b * v)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        SymTensorField2 {
            grid: self.grid,
            comps: self.comps.iter().map(|v| a * v).collect(),
        }
    }

    /// Pointwise multiply by a scalar field.
    pub fn mul_scalar_field(&self, s: &ScalarField) -> Self {
        debug_assert_eq!(self.grid, *s.grid());
        let npts = self.grid.len();
        let mut comps = self.comps.clone();
        for c in 0..self.ncomp() {
            for p in 0..npts {
                comps[c * npts + p] *= s.values()[p];
            }
        }
        SymTensorField2 {
            grid: self.grid,
            comps,
        }
    }

    /// Flat (reference-metric) inner product `sum_p w(p) <a, b>_delta(p)` with
    /// cell-volume weight; the off-diagonal component counts twice.
    pub fn flat_inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let npts = self.grid.len();
        let cell = self.grid.cell_volume();
        let mut acc = 0.0;
        match self.grid.dim() {
            1 => {
                for p in 0..npts {
                    acc += self.comps[p] * other.comps[p];
                }
            }
            _ => {
                for p in 0..npts {
                    acc += self.comps[p] * other.comps[p]
                        + 2.0 * self.comps[npts + p] * other.comps[npts + p]
                        + self.comps[2 * npts + p] * other.comps[2 * npts + p];
                }
            }
        }
        acc * cell
    }

    pub fn flat_norm(&self) -> f64 {
        self.flat_inner(self).sqrt()
    }
}

impl std::ops::Add for &SymTensorField2 {
    type Output = SymTensorField2;
    fn add(self, rhs: &SymTensorField2) -> SymTensorField2 {
        SymTensorField2::linear_comb(1.0, self, 1.0, rhs)
    }
}

impl std::ops::Sub for &SymTensorField2 {
    type Output = SymTensorField2;
    fn sub(self, rhs: &SymTensorField2) -> SymTensorField2 {
        SymTensorField2::linear_comb(1.0, self, -1.0, rhs)
    }
}

/// A pointwise symmetric positive-definite metric field, a point of the
/// manifold of Riemannian metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    sym: SymTensorField2,
    min_eig: f64,
}

impl MetricField {
    /// Validates pointwise positive-definiteness.
    pub fn new(sym: SymTensorField2) -> Result<Self> {
        if !sym.is_finite() {
            return Err(Error::NonFinite("metric field"));
        }
        let (min_eig, arg) = sym.min_eigenvalue();
        if !(min_eig > 0.0) {
            return Err(Error::NotSpd {
                point: arg,
                min_eig,
            });
        }
        Ok(MetricField { sym, min_eig })
    }

    /// The flat metric `delta`.
    pub fn flat(grid: Grid) -> Self {
        MetricField {
            sym: SymTensorField2::identity(grid),
            min_eig: 1.0,
        }
    }

    pub fn sym(&self) -> &SymTensorField2 {
        &self.sym
    }

    pub fn into_sym(self) -> SymTensorField2 {
        self.sym
    }

    pub fn grid(&self) -> &Grid {
        self.sym.grid()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn scale(&self, r: f64) -> Result<Self> {
        MetricField::new(self.sym.scale(r))
    }
}

/// A vector field, a `(1,0)` tensor field.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField(TensorField);

impl VectorField {
    pub fn new(t: TensorField) -> Result<Self> {
        if t.slots() != [Slot::Upper] {
            return Err(Error::SlotMismatch(
                "expected a (1,0) tensor field".to_string(),
            ));
        }
        Ok(VectorField(t))
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        VectorField(TensorField::from_fn(grid, vec![Slot::Upper], |idx, x, y| {
            f(idx[0], x, y)
        }))
    }

    pub fn as_tensor(&self) -> &TensorField {
        &self.0
    }
}
