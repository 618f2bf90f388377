use kfp_core::exponents::{self, TRIVIAL_ROOT};
use kfp_core::kfp_solver::{
    apply_wall_bc, build_grid, kolmogorov_kernel, run_diagnostic, DiagnosticMode, GridSpec,
    InitialData, SolveConfig, Solver, SolverOptions, Stepping, WallKind,
};
use kfp_core::profiles::boundary_trace;
use kfp_core::KfpError;
use proptest::prelude::*;

fn options(dt: f64, wall: WallKind) -> SolverOptions {
    SolverOptions {
        dt,
        rho_cut: 0.0,
        stepping: Stepping::Implicit,
        wall,
    }
}

fn kernel_error(n: usize, dt: f64) -> f64 {
    let (x_max, v_max, center) = (13.0, 6.0, 6.5);
    let grid = GridSpec::uniform(1.0, x_max, v_max, n, n / 2)
        .build()
        .unwrap();
    let solver = Solver::new(grid, options(dt, WallKind::Sealed)).unwrap();
    let mut state = solver.state_from_fn(|x, v| kolmogorov_kernel(center, 0.0, 1.0, x, v));
    for _ in 0..(1.0 / dt).round() as usize {
        solver.advance(&mut state).unwrap();
    }
    let exact = solver.state_from_fn(|x, v| kolmogorov_kernel(center, 0.0, 2.0, x, v));
    solver.grid().l1_distance(&state.density, &exact.density)
}

#[test]
fn kernel_error_is_first_order() {
    let coarse = kernel_error(64, 8e-3);
    let fine = kernel_error(128, 4e-3);
    println!("L1 error {coarse:.4} -> {fine:.4}");
    let ratio = fine / coarse;
    assert!((0.35..=0.65).contains(&ratio), "{ratio}");
}

#[test]
fn sealed_wall_conserves_mass() {
    for (grid, stepping) in [
        (
            build_grid(0.3, 6.0, 6.0, 48, 40).unwrap(),
            Stepping::Implicit,
        ),
        (
            GridSpec::uniform(0.3, 6.0, 6.0, 48, 40).build().unwrap(),
            Stepping::ExplicitTransport,
        ),
    ] {
        let solver = Solver::new(
            grid.clone(),
            SolverOptions {
                stepping,
                ..options(1e-4, WallKind::Sealed)
            },
        )
        .unwrap();
        let mut state = solver.initial_state(&InitialData::default()).unwrap();
        for _ in 0..20 {
            let before = state.total_mass(&grid);
            solver.advance(&mut state).unwrap();
            // the blob is far from x_max, so nothing flows out either
            assert!((state.total_mass(&grid) - before).abs() < 1e-12);
        }
    }
}

#[test]
fn transport_vanishes_on_x_constant_data() {
    let grid = GridSpec::uniform(1.0, 4.0, 6.0, 40, 40).build().unwrap();
    let solver = Solver::new(
        grid.clone(),
        SolverOptions {
            stepping: Stepping::ExplicitTransport,
            ..options(1e-3, WallKind::Sealed)
        },
    )
    .unwrap();
    let before = solver.state_from_fn(|_, v| (-v * v / 2.0).exp()).density;
    let mut after = before.clone();
    solver.transport_step(&mut after);
    for i in 1..grid.n_x() - 1 {
        for j in 0..grid.n_v() {
            let k = grid.index(i, j);
            assert_eq!(after[k].to_bits(), before[k].to_bits());
        }
    }
}

#[test]
fn explicit_step_rejects_cfl_violation() {
    let grid = GridSpec::uniform(0.5, 4.0, 4.0, 40, 40).build().unwrap();
    let err = Solver::new(
        grid,
        SolverOptions {
            stepping: Stepping::ExplicitTransport,
            ..options(1.0, WallKind::Inelastic)
        },
    )
    .unwrap_err();
    assert!(
        matches!(err, KfpError::Config { ref field, .. } if field == "dt"),
        "{err}"
    );
}

#[test]
fn wall_ghosts_match_trivial_profile() {
    for r in [0.1, 0.5, 0.9] {
        let grid = build_grid(r, 4.0, 4.0, 40, 48).unwrap();
        let column: Vec<f64> = grid
            .v_nodes()
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    boundary_trace(TRIVIAL_ROOT, v).unwrap()
                } else {
                    0.0
                }
            })
            .collect();
        let ghosts = apply_wall_bc(&grid, &column);
        for (j, &v) in grid.v_nodes().iter().enumerate() {
            if v > 0.0 {
                let exact = boundary_trace(TRIVIAL_ROOT, v).unwrap();
                assert!((ghosts[j] / exact - 1.0).abs() < 1e-12, "r={r} v={v}");
            }
        }
    }
}

#[test]
fn ledger_identity_holds_with_excision() {
    let mut cfg = SolveConfig::new(0.1, DiagnosticMode::Trapping);
    cfg.n_x = 60;
    cfg.n_v = 40;
    cfg.x_max = 4.0;
    cfg.v_max = 5.0;
    cfg.dt = 1e-2;
    cfg.t_end = 0.5;
    cfg.samples = 10;
    let run = run_diagnostic(&cfg).unwrap();
    assert!(run.excised_cells > 0);
    for s in &run.samples {
        assert!(s.ledger_gap.abs() < 1e-10, "{}", s.ledger_gap);
        assert!(
            s.total_mass + s.m <= 1.0 + 1e-12,
            "outflow at x_max can only remove mass"
        );
    }
    assert!(run.samples.windows(2).all(|w| w[1].m >= w[0].m - 1e-14));
}

#[test]
fn mode_must_match_restitution() {
    let err = run_diagnostic(&SolveConfig::new(0.5, DiagnosticMode::Trapping)).unwrap_err();
    assert!(matches!(err, KfpError::Config { .. }), "{err}");
    let err = run_diagnostic(&SolveConfig::new(0.1, DiagnosticMode::Supercritical)).unwrap_err();
    assert!(matches!(err, KfpError::Config { .. }), "{err}");
}

#[test]
fn kappa_matches_exponent_module() {
    let mut cfg = SolveConfig::new(0.1, DiagnosticMode::Nontrapping);
    cfg.n_x = 40;
    cfg.n_v = 32;
    cfg.t_end = 0.02;
    cfg.dt = 1e-2;
    let run = run_diagnostic(&cfg).unwrap();
    assert_eq!(run.kappa, exponents::kappa(0.1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn density_stays_nonnegative(
        r in 0.05f64..1.0,
        cx in 0.05f64..2.0,
        cv in -2.0f64..2.0,
        sx in 0.01f64..0.3,
        sv in 0.1f64..1.0,
        dt in 1e-3f64..5e-2,
    ) {
        let grid = build_grid(r, 4.0, 5.0, 36, 36).unwrap();
        let solver = Solver::new(grid, SolverOptions { rho_cut: 1e-6, ..options(dt, WallKind::Inelastic) }).unwrap();
        let data = InitialData::Gaussian { center: [cx, cv], covariance: [[sx * sx, 0.0], [0.0, sv * sv]] };
        let mut state = solver.initial_state(&data).unwrap();
        for _ in 0..10 {
            solver.advance(&mut state).unwrap();
            prop_assert!(state.density.iter().all(|&p| p >= 0.0));
        }
    }
}
