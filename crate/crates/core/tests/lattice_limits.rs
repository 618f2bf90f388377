use kfp_core::lattice_toy::{compare_with_reference, diffusive_limit, LatticeConfig, WallRule};

const X0: f64 = 1.0;
const T: f64 = 0.5;

#[test]
fn dirichlet_and_neumann_limits() {
    for rule in [WallRule::Trapping, WallRule::Nontrapping { lambda: 1.0 }] {
        let (coarse, _, _) = compare_with_reference(0.01, rule, X0, T).unwrap();
        let (fine, _, _) = compare_with_reference(0.005, rule, X0, T).unwrap();
        println!("{}: {} -> {}", rule.name(), coarse.l1_gap, fine.l1_gap);
        assert!(coarse.l1_gap < 0.02);
        assert!(fine.l1_gap < coarse.l1_gap);
    }
}

#[test]
fn partial_mode_wall_equilibrium() {
    let mu = 1.0;
    let rule = WallRule::Partial { mu };
    let (coarse, snap, _) = compare_with_reference(0.01, rule, X0, T).unwrap();
    let (fine, _, _) = compare_with_reference(0.005, rule, X0, T).unwrap();
    let u0 = snap.boundary_density();
    println!(
        "partial: m_h={} U(0)/(2μ)={} m_ref={} gaps {} -> {}",
        snap.m_h,
        u0 / (2.0 * mu),
        coarse.m_ref,
        coarse.l1_gap,
        fine.l1_gap
    );
    assert!((snap.m_h - u0 / (2.0 * mu)).abs() < 0.05 * snap.m_h);
    assert!(fine.l1_gap < coarse.l1_gap);
}

#[test]
fn trapped_mass_decreases_with_escape_probability() {
    let mut prev = f64::INFINITY;
    for lambda in [0.0, 0.25, 0.5, 1.0] {
        let rule = if lambda == 0.0 {
            WallRule::Trapping
        } else {
            WallRule::Nontrapping { lambda }
        };
        let cfg = LatticeConfig::point_mass(0.01, rule, X0).unwrap();
        let snap = diffusive_limit(&cfg, T).unwrap();
        assert!((snap.total_mass() - 1.0).abs() < 1e-10);
        assert!(snap.m_h <= prev);
        prev = snap.m_h;
    }
}
