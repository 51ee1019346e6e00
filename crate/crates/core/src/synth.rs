//! Deterministic synthetic fields: seeded trigonometric metrics, tangent
//! vectors and general tensor fields used by tests, verification suites and
//! the CLI generators.
//!
//! Fields are sums of low Fourier modes with coefficients drawn from a
//! counter-based generator, so the same seed reproduces the same *continuum*
//! function on every grid resolution. That property is what makes the
//! refinement studies in the verification suites meaningful.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, Slot, SymTensorField2, TensorField};
use crate::grid::Grid;

/// One trigonometric mode: `amp * cos(2 pi (k . x / L) + phase)`.
#[derive(Clone, Debug)]
struct Mode {
    k: [usize; 2],
    amp: f64,
    phase: f64,
}

fn draw_modes(rng: &mut ChaCha8Rng, dim: usize, max_mode: usize, amplitude: f64) -> Vec<Mode> {
    let mut modes = Vec::new();
    let k1_range = if dim == 2 { max_mode } else { 0 };
    for k0 in 0..=max_mode {
        for k1 in 0..=k1_range {
            if k0 == 0 && k1 == 0 {
                continue;
            }
            modes.push(Mode {
                k: [k0, k1],
                amp: rng.random_range(-1.0..1.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            });
        }
    }
    let total: f64 = modes.iter().map(|m| m.amp.abs()).sum();
    if total > 0.0 {
        let scale = amplitude / total;
        for m in &mut modes {
            m.amp *= scale;
        }
    }
    modes
}

fn eval_modes(modes: &[Mode], grid: &Grid, x: f64, y: f64) -> f64 {
    let l0 = grid.lengths()[0];
    let l1 = if grid.dim() == 2 { grid.lengths()[1] } else { 1.0 };
    modes
        .iter()
        .map(|m| {
            let theta = std::f64::consts::TAU * (m.k[0] as f64 * x / l0 + m.k[1] as f64 * y / l1)
                + m.phase;
            m.amp * theta.cos()
        })
        .sum()
}

fn check_mode_args(grid: &Grid, amplitude: f64, max_mode: usize) -> Result<()> {
    if !(0.0..=0.5).contains(&amplitude) {
        return Err(Error::BadAmplitude(amplitude));
    }
    for &n in grid.shape() {
        if max_mode > n / 4 {
            return Err(Error::BadMaxMode {
                max_mode,
                limit: n / 4,
            });
        }
    }
    Ok(())
}

/// Seeded smooth random metric and tangent vector.
///
/// The metric is `delta` plus a symmetric trigonometric perturbation with
/// modes up to `max_mode` and sup-norm at most `amplitude`; the tangent
/// vector is an independent zero-mean perturbation of the same kind. If the
/// perturbed metric dips below the SPD margin 0.1 the perturbation is damped
/// until the margin holds.
pub fn random_smooth_fields(
    grid: &Grid,
    seed: u64,
    amplitude: f64,
    max_mode: usize,
) -> Result<(MetricField, SymTensorField2)> {
    check_mode_args(grid, amplitude, max_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nsym = crate::field::sym_comp_count(grid.dim());
    let g_modes: Vec<Vec<Mode>> = (0..nsym)
        .map(|_| draw_modes(&mut rng, grid.dim(), max_mode, amplitude))
        .collect();
    let h_modes: Vec<Vec<Mode>> = (0..nsym)
        .map(|_| draw_modes(&mut rng, grid.dim(), max_mode, amplitude))
        .collect();

    let delta = SymTensorField2::identity(*grid);
    let pert = |modes: &[Vec<Mode>]| {
        SymTensorField2::from_fn(*grid, |c, x, y| eval_modes(&modes[c], grid, x, y))
    };
    let mut g_pert = pert(&g_modes);
    let h = pert(&h_modes);

    // Damp the perturbation until the metric clears the SPD margin.
    let mut attempts = 0;
    let g = loop {
        let candidate = &delta + &g_pert;
        let (min_eig, _) = candidate.min_eigenvalue();
        if min_eig > 0.1 {
            break MetricField::new(candidate)?;
        }
        attempts += 1;
        if attempts > 60 {
            return Err(Error::RandomMetricNotSpd { min_eig });
        }
        g_pert = g_pert.scale(0.5);
    };
    Ok((g, h))
}

/// Seeded zero-mean symmetric trigonometric field.
pub fn random_sym(grid: &Grid, seed: u64, amplitude: f64, max_mode: usize) -> Result<SymTensorField2> {
    check_mode_args(grid, amplitude, max_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nsym = crate::field::sym_comp_count(grid.dim());
    let modes: Vec<Vec<Mode>> = (0..nsym)
        .map(|_| draw_modes(&mut rng, grid.dim(), max_mode, amplitude))
        .collect();
    Ok(SymTensorField2::from_fn(*grid, |c, x, y| {
        eval_modes(&modes[c], grid, x, y)
    }))
}

/// Seeded zero-mean scalar trigonometric field.
pub fn random_scalar(grid: &Grid, seed: u64, amplitude: f64, max_mode: usize) -> Result<ScalarField> {
    check_mode_args(grid, amplitude, max_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = draw_modes(&mut rng, grid.dim(), max_mode, amplitude);
    Ok(ScalarField::from_fn(*grid, |x, y| {
        eval_modes(&modes, grid, x, y)
    }))
}

/// Seeded zero-mean tensor field with the given slot signature.
pub fn random_tensor(
    grid: &Grid,
    slots: Vec<Slot>,
    seed: u64,
    amplitude: f64,
    max_mode: usize,
) -> Result<TensorField> {
    check_mode_args(grid, amplitude, max_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncomp = grid.dim().pow(slots.len() as u32);
    let modes: Vec<Vec<Mode>> = (0..ncomp)
        .map(|_| draw_modes(&mut rng, grid.dim(), max_mode, amplitude))
        .collect();
    let n = grid.dim();
    Ok(TensorField::from_fn(*grid, slots, |idx, x, y| {
        let comp = crate::field::encode_multi(idx, n);
        eval_modes(&modes[comp], grid, x, y)
    }))
}

/// Conformally flat metric `exp(2 phi) delta`.
pub fn conformal_metric(phi: &ScalarField) -> Result<MetricField> {
    let grid = *phi.grid();
    let npts = grid.len();
    let mut sym = SymTensorField2::zeros(grid);
    for p in 0..npts {
        let w = (2.0 * phi.values()[p]).exp();
        match grid.dim() {
            1 => sym.plane_mut(0)[p] = w,
            _ => {
                sym.plane_mut(0)[p] = w;
                sym.plane_mut(2)[p] = w;
            }
        }
    }
    MetricField::new(sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_fields_are_deterministic() {
        let grid = Grid::new(2, &[16, 16], &[1.0, 1.0]).unwrap();
        let (g1, h1) = random_smooth_fields(&grid, 42, 0.2, 2).unwrap();
        let (g2, h2) = random_smooth_fields(&grid, 42, 0.2, 2).unwrap();
        assert_eq!(g1.sym().comps(), g2.sym().comps());
        assert_eq!(h1.comps(), h2.comps());
        let (g3, _) = random_smooth_fields(&grid, 43, 0.2, 2).unwrap();
        assert_ne!(g1.sym().comps(), g3.sym().comps());
    }

    #[test]
    fn zero_amplitude_gives_flat_metric_and_zero_velocity() {
        let grid = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let (g, h) = random_smooth_fields(&grid, 1, 0.0, 2).unwrap();
        assert_eq!(g.sym(), &SymTensorField2::identity(grid));
        assert!(h.comps().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_metric_keeps_spd_margin() {
        let grid = Grid::new(2, &[16, 16], &[1.0, 1.0]).unwrap();
        let (g, _) = random_smooth_fields(&grid, 7, 0.2, 2).unwrap();
        assert!(g.min_eigenvalue() > 0.1);
    }

    #[test]
    fn rejects_out_of_range_arguments() {
        let grid = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        assert!(random_smooth_fields(&grid, 1, 0.7, 2).is_err());
        assert!(random_smooth_fields(&grid, 1, 0.2, 3).is_err());
    }

    #[test]
    fn same_seed_samples_same_continuum_function_on_finer_grids() {
        let coarse = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let fine = Grid::new(2, &[16, 16], &[1.0, 1.0]).unwrap();
        let (gc, _) = random_smooth_fields(&coarse, 5, 0.2, 2).unwrap();
        let (gf, _) = random_smooth_fields(&fine, 5, 0.2, 2).unwrap();
        // Every coarse point appears at even fine indices with the same value.
        for i0 in 0..8 {
            for i1 in 0..8 {
                let pc = coarse.index(i0, i1);
                let pf = fine.index(2 * i0, 2 * i1);
                for c in 0..3 {
                    assert!((gc.sym().plane(c)[pc] - gf.sym().plane(c)[pf]).abs() < 1e-15);
                }
            }
        }
    }
}
