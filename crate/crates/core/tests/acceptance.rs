//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured value against its pinned tolerance.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use metman::checks::{self, Check};
use metman::explog::{exp_map, log_map, ExpMapOptions, LogMapOptions};
use metman::field::{integrate_density, MetricField, ScalarField, SymTensorField2};
use metman::geodesic::{integrate_geodesic, IntegrateOptions};
use metman::geometry::Geometry;
use metman::operator::{OperatorSpec, PhiFunction};
use metman::ricci;
use metman::synth;
use metman::Grid;

/// The criteria carry wall-clock budgets, so they must not share the
/// machine: each test holds this lock while it runs and times itself only
/// after acquiring it.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: &str, checks: &[Check], started: Instant) {
    let all = checks::all_pass(checks);
    println!(
        "criterion {criterion}: {} ({} checks, {:.1}s)",
        if all { "PASS" } else { "FAIL" },
        checks.len(),
        started.elapsed().as_secs_f64()
    );
    for c in checks {
        println!("  {}", checks::format_check(c));
    }
    assert!(all, "criterion {criterion} failed");
}

#[test]
fn c1_variational_formulas_match_finite_differences() {
    let _guard = serial();
    let t0 = Instant::now();
    let list = checks::variational_suite(32, 42).unwrap();
    report("1 (variational suite)", &list, t0);
    assert!(t0.elapsed().as_secs() < 60, "runtime budget exceeded");
}

#[test]
fn c2_adjoint_pairings_hold_at_their_tiers() {
    let _guard = serial();
    let t0 = Instant::now();
    let list = checks::adjoint_suite(32, 42).unwrap();
    report("2 (adjoint suite)", &list, t0);
    assert!(t0.elapsed().as_secs() < 120, "runtime budget exceeded");
}

#[test]
fn c3_closed_form_scaling_geodesics() {
    let _guard = serial();
    let t0 = Instant::now();
    let all = checks::scaling_suite(42).unwrap();
    // The radial-dynamics subset belongs to this criterion.
    let list: Vec<Check> = all
        .into_iter()
        .filter(|c| {
            c.name.contains("field integrator")
                || c.name.contains("radial dynamics")
                || c.name.contains("interpolates")
        })
        .collect();
    assert_eq!(list.len(), 4);
    report("3 (closed-form scaling geodesics)", &list, t0);
    assert!(t0.elapsed().as_secs() < 60, "runtime budget exceeded");
}

#[test]
fn c4_incompleteness_lengths() {
    let _guard = serial();
    let t0 = Instant::now();
    let all = checks::scaling_suite(42).unwrap();
    let list: Vec<Check> = all
        .into_iter()
        .filter(|c| c.name.contains("shrinking") || c.name.contains("totally geodesic"))
        .collect();
    assert!(list.len() >= 6);
    report("4 (incompleteness lengths)", &list, t0);
    assert!(t0.elapsed().as_secs() < 60, "runtime budget exceeded");
}

#[test]
fn c5_conservation_along_geodesics() {
    let _guard = serial();
    let t0 = Instant::now();
    let list = checks::conservation_suite(32, 42).unwrap();
    report("5 (conservation suite)", &list, t0);
    assert!(t0.elapsed().as_secs() < 180, "runtime budget exceeded");
}

#[test]
fn c6_exp_log_round_trips() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut list = Vec::new();

    // Exact radial endpoint of the plain metric.
    {
        let grid = Grid::square(2, 8, 1.0).unwrap();
        let g0 = MetricField::flat(grid);
        let d = SymTensorField2::identity(grid);
        let out = exp_map(
            &OperatorSpec::identity(),
            &g0,
            &d,
            &ExpMapOptions::default(),
        )
        .unwrap();
        let dev = (out.sym() - &d.scale(2.25)).max_abs();
        list.push(Check::upper(
            "exp of the unit radial velocity lands on 2.25 delta",
            dev,
            1e-8,
        ));
    }

    // Ten seeded round trips per family, velocities of relative size 0.15.
    // The torus of circumference 2 pi keeps the Sobolev momentum equation
    // comfortably inside the explicit scheme's stability region.
    for (family, op, grid_n, dt) in [
        ("identity", OperatorSpec::identity(), 8usize, 0.01),
        (
            "conformal",
            OperatorSpec::conformal(PhiFunction::Power { k: 1.0 }),
            8,
            0.01,
        ),
        ("sobolev p=1", OperatorSpec::sobolev(1), 12, 0.05),
    ] {
        let grid = Grid::square(2, grid_n, std::f64::consts::TAU).unwrap();
        let mut worst = 0.0f64;
        for seed in 0..10u64 {
            let (g0, u_raw) = synth::random_smooth_fields(&grid, 100 + seed, 0.2, 2).unwrap();
            let u = u_raw.scale(0.15 / u_raw.max_abs().max(1e-300));
            let opts = LogMapOptions {
                exp: ExpMapOptions {
                    dt,
                    ..Default::default()
                },
                ..Default::default()
            };
            let g1 = exp_map(&op, &g0, &u, &opts.exp).unwrap();
            let (u_rec, _) = log_map(&op, &g0, &g1, &opts).unwrap();
            worst = worst.max((&u_rec - &u).max_abs() / u.max_abs());
        }
        list.push(Check::upper(
            format!("log(exp(u)) = u over 10 seeds, {family} family"),
            worst,
            1e-6,
        ));
    }

    report("6 (exponential/log round trips)", &list, t0);
    assert!(t0.elapsed().as_secs() < 300, "runtime budget exceeded");
}

#[test]
fn c7_curvature_correctness() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut list = Vec::new();
    let grid = Grid::square(2, 64, std::f64::consts::TAU).unwrap();
    let phi = ScalarField::from_fn(grid, |x, y| 0.1 * x.sin() * y.sin());
    let g = synth::conformal_metric(&phi).unwrap();
    let geom = Geometry::new(&g).unwrap();
    let scal = geom.curvature().scal.clone();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for p in 0..grid.len() {
        let [x, y] = grid.coords(p);
        let lap0 = -2.0 * 0.1 * x.sin() * y.sin();
        let exact = -2.0 * (-2.0 * phi.values()[p]).exp() * lap0;
        worst = worst.max((scal.values()[p] - exact).abs());
        scale = scale.max(exact.abs());
    }
    list.push(Check::upper(
        "conformal scalar curvature matches -2 exp(-2 phi) lap(phi) (64^2)",
        worst / scale,
        1e-4,
    ));
    let total = integrate_density(&scal.mul_field(geom.volume_density()));
    list.push(Check::upper(
        "total curvature of the torus vanishes (64^2)",
        total.abs(),
        1e-6,
    ));
    report("7 (curvature correctness)", &list, t0);
    assert!(t0.elapsed().as_secs() < 30, "runtime budget exceeded");
}

#[test]
fn c8_ricci_curl_identity_and_gradient_condition() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut list = Vec::new();

    // Two-path curl agreement on seeded non-flat metrics, 16 x 16.
    let grid = Grid::square(2, 16, std::f64::consts::TAU).unwrap();
    let (g, h) = synth::random_smooth_fields(&grid, 42, 0.15, 2).unwrap();
    let k = synth::random_sym(&grid, 43, 0.2, 2).unwrap();
    for (label, op) in [
        ("identity", OperatorSpec::identity()),
        ("sobolev p=1", OperatorSpec::sobolev(1)),
    ] {
        let (lhs, rhs) = ricci::curl_residual(&op, &g, &h, &k).unwrap();
        list.push(Check::upper(
            format!("curl identity two-path agreement, {label} (16^2)"),
            (lhs - rhs).abs() / lhs.abs().max(1e-12),
            1e-2,
        ));
    }

    // Dimension one: the defect vanishes for every family.
    {
        let circle = Grid::square(1, 32, 1.0).unwrap();
        let (g1, h1) = synth::random_smooth_fields(&circle, 44, 0.2, 2).unwrap();
        let mut worst = 0.0f64;
        for op in [
            OperatorSpec::identity(),
            OperatorSpec::conformal(PhiFunction::Power { k: 1.0 }),
            OperatorSpec::sobolev(1),
            OperatorSpec::curvature_weighted(PhiFunction::AffineExp { a: 1.0, b: 0.1 }),
        ] {
            worst = worst.max(ricci::gradient_condition_residual(&op, &g1, &h1).unwrap());
        }
        list.push(Check::upper(
            "gradient condition holds on the circle, all families",
            worst,
            1e-10,
        ));
    }

    // And is strictly violated on curved two-tori for the plain metric.
    {
        let res = ricci::gradient_condition_residual(&OperatorSpec::identity(), &g, &h).unwrap();
        list.push(Check::lower(
            "gradient condition strictly violated on a curved 2-torus",
            res,
            1e-6,
        ));
    }

    report("8 (curl identity and gradient condition)", &list, t0);
    assert!(t0.elapsed().as_secs() < 300, "runtime budget exceeded");
}

#[test]
fn c9_pointwise_decoupling_of_the_plain_metric() {
    let _guard = serial();
    let t0 = Instant::now();
    let grid = Grid::square(2, 8, 1.0).unwrap();
    let g = MetricField::flat(grid);
    let op = OperatorSpec::identity();
    let base_u = SymTensorField2::constant(grid, &[0.4, 0.0, -0.2]);
    let mut bumped = base_u.clone();
    let site = grid.index(2, 6);
    bumped.plane_mut(0)[site] += 0.3;
    let opts = IntegrateOptions {
        dt: 0.005,
        t_final: 1.0,
        ..Default::default()
    };
    let a = integrate_geodesic(&op, &g, &base_u, &opts).unwrap();
    let b = integrate_geodesic(&op, &g, &bumped, &opts).unwrap();
    let (ga, gb) = (a.final_state().g.sym(), b.final_state().g.sym());
    let mut off_site = 0.0f64;
    let mut on_site = 0.0f64;
    for c in 0..3 {
        for p in 0..grid.len() {
            let d = (ga.plane(c)[p] - gb.plane(c)[p]).abs();
            if p == site {
                on_site = on_site.max(d);
            } else {
                off_site = off_site.max(d);
            }
        }
    }
    let list = vec![
        Check::upper(
            "single-site velocity bump leaves every other point unchanged",
            off_site,
            1e-13,
        ),
        Check::lower("the bumped site itself moves", on_site, 1e-3),
    ];
    report("9 (pointwise decoupling)", &list, t0);
    assert!(t0.elapsed().as_secs() < 10, "runtime budget exceeded");
}
