//! Mesh refinement study for the 400C reference stack: thin-layer
//! participations next to those of a mesh that resolves the oxide layers.
//!
//! cargo run --release -p cpwloss --example convergence -- 4

use std::time::Instant;

use cpwloss::fieldsolve::{build_mesh_direct, solve_potential};
use cpwloss::geometry::{reference_presets, Deposition, RegionId, Treatment};
use cpwloss::participation::{simulate, BudgetRegion};

fn main() -> cpwloss::Result<()> {
    let max_level: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    println!(
        "{:>5} {:>9} {:>8} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "level", "cells", "p_sub", "p_MA", "p_SA", "p_SA res", "total", "time"
    );
    for level in 1..=max_level {
        let start = Instant::now();
        let thin = simulate(&stack, level)?;
        let resolved = solve_potential(&build_mesh_direct(&stack, level)?)?;
        let p_sa_resolved = resolved.energy(RegionId::SubstrateAir) / resolved.total_energy;
        let b = &thin.budget;
        println!(
            "{:>5} {:>9} {:>8.5} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>7.2}s",
            level,
            thin.cells,
            b.participation(BudgetRegion::Substrate),
            b.participation(BudgetRegion::MetalAir),
            b.participation(BudgetRegion::SubstrateAir),
            p_sa_resolved,
            b.total_f_tan_delta,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
