use cpwloss::fieldsolve::{
    build_mesh, build_mesh_direct, build_mesh_with, solve_potential, solve_potential_with, AxisKey, Cell,
    Grading, Layout, Mesh, Side, SolverOptions, Symmetry,
};
use cpwloss::geometry::{reference_presets, CpwStack, Deposition, Length, MaterialRole, RegionId, Treatment};
use cpwloss::participation::{
    budget_from_solution, bulk_participation, thin_layer_participation, thin_layer_participation_with, BudgetRegion,
    ThinLayerOptions,
};
use cpwloss::EPSILON_0;

fn bare_stack() -> CpwStack {
    let mut stack = reference_presets(Deposition::T400, Treatment::Reference);
    stack.layer_ma_top = Length(0.0);
    stack.layer_ma_side = Length(0.0);
    stack.layer_sa = Length(0.0);
    stack
}

/// Complete elliptic integral of the first kind via the arithmetic-geometric mean.
fn elliptic_k(k: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - k * k).sqrt());
    while (a - b).abs() > 1e-15 * a {
        let next = (0.5 * (a + b), (a * b).sqrt());
        a = next.0;
        b = next.1;
    }
    std::f64::consts::PI / (2.0 * a)
}

fn conformal_capacitance(stack: &CpwStack) -> f64 {
    let w = stack.trace_width.0;
    let k = w / (w + 2.0 * stack.gap.0);
    let kp = (1.0 - k * k).sqrt();
    let eps_r = stack.material(MaterialRole::Substrate).relative_permittivity;
    2.0 * EPSILON_0 * (eps_r + 1.0) * elliptic_k(k) / elliptic_k(kp)
}

#[test]
fn elliptic_integral_reference_values() {
    assert!((elliptic_k(0.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    // K(1/sqrt 2) = Gamma(1/4)^2 / (4 sqrt(pi))
    assert!((elliptic_k(0.5f64.sqrt()) - 1.854_074_677_301_372).abs() < 1e-13);
}

#[test]
fn cpw_capacitance_matches_conformal_mapping() {
    let stack = bare_stack();
    let sol = solve_potential(&build_mesh(&stack, 3).unwrap()).unwrap();
    let exact = conformal_capacitance(&stack);
    let rel = sol.capacitance() / exact - 1.0;
    assert!(rel.abs() < 0.02, "{} vs {exact}: {rel}", sol.capacitance());
}

#[test]
fn parallel_plate_potential_is_linear() {
    let (d, width, eps) = (2e-6, 5e-6, 11.9);
    let region = move |_x: f64, _y: f64| {
        Some(Cell {
            region: RegionId::Substrate,
            permittivity: eps,
        })
    };
    let layout = Layout {
        x_keys: vec![AxisKey { at: 0.0, refine: false }, AxisKey { at: width, refine: false }],
        y_keys: vec![AxisKey { at: 0.0, refine: true }, AxisKey { at: d, refine: true }],
        conductors: vec![],
        sides: [Side::Neumann, Side::Neumann, Side::Dirichlet(0.0), Side::Dirichlet(1.0)],
        region_at: &region,
        mirror_factor: 1.0,
    };
    let grading = Grading {
        h_min: d / 100.0,
        growth: 1.2,
        h_max: d / 10.0,
    };
    let mesh = Mesh::from_layout(&layout, &grading).unwrap();
    let sol = solve_potential(&mesh).unwrap();
    for i in [0, mesh.nx() / 3, mesh.nx() - 1] {
        for j in 0..mesh.ny() {
            let expect = mesh.ys[j] / d;
            assert!((sol.potential[mesh.node(i, j)] - expect).abs() <= 1e-3 * expect.max(1e-3));
        }
    }
    assert!((sol.capacitance() / (EPSILON_0 * eps * width / d) - 1.0).abs() < 1e-3);
}

#[test]
fn bulk_participations_sum_to_one() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let sol = solve_potential(&build_mesh(&stack, 1).unwrap()).unwrap();
    let sum = bulk_participation(&sol, RegionId::Substrate).unwrap() + bulk_participation(&sol, RegionId::Air).unwrap();
    assert!((sum - 1.0).abs() < 1e-3);
}

#[test]
fn voltage_scaling_leaves_participations_unchanged() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let mesh = build_mesh(&stack, 1).unwrap();
    let unit = budget_from_solution(&stack, &solve_potential(&mesh).unwrap()).unwrap();
    let options = SolverOptions {
        excitation: 37.5,
        ..SolverOptions::default()
    };
    let scaled = budget_from_solution(&stack, &solve_potential_with(&mesh, &options).unwrap()).unwrap();
    for region in BudgetRegion::TABLE_ORDER {
        let (a, b) = (unit.budget.participation(region), scaled.budget.participation(region));
        assert!((a - b).abs() <= 1e-10 * a.abs(), "{region}: {a} vs {b}");
    }
}

#[test]
fn mirrored_half_matches_full_domain() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let half = solve_potential(&build_mesh_with(&stack, 1, Symmetry::Half).unwrap()).unwrap();
    let full = solve_potential(&build_mesh_with(&stack, 1, Symmetry::Full).unwrap()).unwrap();
    assert!((half.capacitance() / full.capacitance() - 1.0).abs() < 1e-3);
    let a = budget_from_solution(&stack, &half).unwrap();
    let b = budget_from_solution(&stack, &full).unwrap();
    for region in BudgetRegion::TABLE_ORDER {
        let (x, y) = (a.budget.participation(region), b.budget.participation(region));
        assert!((x / y - 1.0).abs() < 1e-2, "{region}: {x} vs {y}");
    }
}

#[test]
fn enlarging_the_box_changes_little() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let mut big = stack.clone();
    big.domain_halfwidth = Length(2.0 * stack.domain_halfwidth.0);
    big.domain_height_air = Length(2.0 * stack.domain_height_air.0);
    big.domain_depth_substrate = Length(2.0 * stack.domain_depth_substrate.0);
    let a = solve_potential(&build_mesh(&stack, 1).unwrap()).unwrap();
    let b = solve_potential(&build_mesh(&big, 1).unwrap()).unwrap();
    assert!((a.capacitance() / b.capacitance() - 1.0).abs() < 5e-3);
    let pa = budget_from_solution(&stack, &a).unwrap();
    let pb = budget_from_solution(&big, &b).unwrap();
    for region in [BudgetRegion::MetalAir, BudgetRegion::SubstrateAir] {
        let (x, y) = (pa.budget.participation(region), pb.budget.participation(region));
        assert!((x / y - 1.0).abs() < 5e-3, "{region}: {x} vs {y}");
    }
}

#[test]
fn thin_layer_participation_scales_with_thickness() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let sol = solve_potential(&build_mesh(&stack, 2).unwrap()).unwrap();
    let raw = ThinLayerOptions { corner_cutoff: 0.0 };
    for region in [RegionId::MetalAirTop, RegionId::MetalAirSide, RegionId::SubstrateAir] {
        // without corner treatment the rule is exactly linear
        let one = thin_layer_participation_with(&sol, region, Length::nm(2.0), 10.0, &raw).unwrap();
        let two = thin_layer_participation_with(&sol, region, Length::nm(4.0), 10.0, &raw).unwrap();
        assert!((two / (2.0 * one) - 1.0).abs() < 1e-12);
        // the corner cap grows with the layer, so doubling gives slightly less than double
        let one = thin_layer_participation(&sol, region, Length::nm(2.0), 10.0).unwrap();
        let two = thin_layer_participation(&sol, region, Length::nm(4.0), 10.0).unwrap();
        assert!(two / one > 1.7 && two / one <= 2.0 + 1e-12, "{region}: {}", two / one);
        assert_eq!(thin_layer_participation(&sol, region, Length(0.0), 10.0).unwrap(), 0.0);
    }
}

#[test]
fn refinement_converges() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let coarse = budget_from_solution(&stack, &solve_potential(&build_mesh(&stack, 2).unwrap()).unwrap()).unwrap();
    let fine = budget_from_solution(&stack, &solve_potential(&build_mesh(&stack, 3).unwrap()).unwrap()).unwrap();
    for region in [BudgetRegion::Substrate, BudgetRegion::MetalAir, BudgetRegion::SubstrateAir] {
        let (x, y) = (coarse.budget.participation(region), fine.budget.participation(region));
        assert!((x / y - 1.0).abs() < 0.01, "{region}: {x} vs {y}");
    }
}

#[test]
fn resolved_oxide_agrees_with_thin_layer_rule() {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let direct = solve_potential(&build_mesh_direct(&stack, 2).unwrap()).unwrap();
    let p_direct = direct.energy(RegionId::SubstrateAir) / direct.total_energy;
    let thin = budget_from_solution(&stack, &solve_potential(&build_mesh(&stack, 2).unwrap()).unwrap()).unwrap();
    let p_thin = thin.budget.participation(BudgetRegion::SubstrateAir);
    assert!((p_direct / p_thin - 1.0).abs() < 0.15, "{p_direct} vs {p_thin}");
}
