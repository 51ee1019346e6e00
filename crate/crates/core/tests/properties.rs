//! Property tests for the structural invariants of the field layer and the
//! pointwise algebra: exact cancellations, symmetry, bilinearity.

use metman::field::{integrate_density, ScalarField, Slot, SymTensorField2};
use metman::geometry::Geometry;
use metman::{synth, Grid};
use proptest::prelude::*;

fn grids() -> impl Strategy<Value = Grid> {
    (prop_oneof![Just(1usize), Just(2usize)], 4usize..=8, 0.5f64..4.0).prop_map(
        |(dim, half, len)| {
            let n = 2 * half;
            Grid::square(dim, n, len).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derivative_of_constants_is_exactly_zero(grid in grids(), c in -10.0f64..10.0) {
        let f = ScalarField::from_fn(grid, |_, _| c);
        for axis in 0..grid.dim() {
            let df = f.derivative(axis).unwrap();
            prop_assert!(df.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn quadrature_of_a_derivative_vanishes(grid in grids(), seed in 0u64..1000) {
        let f = synth::random_scalar(&grid, seed, 0.4, 2).unwrap();
        for axis in 0..grid.dim() {
            let df = f.derivative(axis).unwrap();
            prop_assert!(integrate_density(&df).abs() <= 1e-12);
        }
    }

    #[test]
    fn pointwise_inner_is_symmetric_and_bilinear(
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let (g, _) = synth::random_smooth_fields(&grid, seed, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        let h = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], seed + 1, 0.5, 2).unwrap();
        let k = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], seed + 2, 0.5, 2).unwrap();
        let l = synth::random_tensor(&grid, vec![Slot::Lower, Slot::Lower], seed + 3, 0.5, 2).unwrap();

        let hk = geom.pointwise_inner(&h, &k).unwrap();
        let kh = geom.pointwise_inner(&k, &h).unwrap();
        for p in 0..grid.len() {
            prop_assert!((hk.values()[p] - kh.values()[p]).abs() <= 1e-12);
        }

        use metman::field::TensorField;
        let combo = TensorField::linear_comb(a, &h, b, &l);
        let lhs = geom.pointwise_inner(&combo, &k).unwrap();
        let rhs_h = geom.pointwise_inner(&h, &k).unwrap();
        let rhs_l = geom.pointwise_inner(&l, &k).unwrap();
        for p in 0..grid.len() {
            let rhs = a * rhs_h.values()[p] + b * rhs_l.values()[p];
            prop_assert!((lhs.values()[p] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn symmetric_fields_round_trip_through_full_tensors(seed in 0u64..1000) {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let s = synth::random_sym(&grid, seed, 0.5, 2).unwrap();
        let back = SymTensorField2::from_full(&s.to_full()).unwrap();
        prop_assert_eq!(s, back);
    }

    #[test]
    fn integrated_inner_is_positive_definite(seed in 0u64..1000) {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let (g, h) = synth::random_smooth_fields(&grid, seed, 0.2, 2).unwrap();
        let geom = Geometry::new(&g).unwrap();
        if h.max_abs() > 0.0 {
            prop_assert!(geom.integrated_inner_sym(&h, &h) > 0.0);
        }
    }

    #[test]
    fn random_fields_are_pure_functions_of_their_arguments(
        seed in 0u64..500, half in 4usize..=8,
    ) {
        let grid = Grid::square(2, 2 * half, 1.0).unwrap();
        let (g1, h1) = synth::random_smooth_fields(&grid, seed, 0.2, 2).unwrap();
        let (g2, h2) = synth::random_smooth_fields(&grid, seed, 0.2, 2).unwrap();
        prop_assert_eq!(g1.sym().comps(), g2.sym().comps());
        prop_assert_eq!(h1.comps(), h2.comps());
    }
}
