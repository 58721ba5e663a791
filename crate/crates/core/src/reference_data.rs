//! Tabulated comparison targets: per-preset loss budgets and measured chip
//! means of `F tan d0`.

use serde::Serialize;

use crate::geometry::{Deposition, Treatment};
use crate::participation::BudgetRegion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub region: BudgetRegion,
    pub participation: f64,
    pub loss_tangent: f64,
    /// Printed `F_i tan d` cell.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetTable {
    pub deposition: Deposition,
    pub treatment: Treatment,
    pub rows: [TableRow; 4],
    pub total: f64,
}

impl BudgetTable {
    pub fn participations(&self) -> Vec<(BudgetRegion, f64)> {
        self.rows.iter().map(|r| (r.region, r.participation)).collect()
    }

    pub fn loss_tangents(&self) -> Vec<(BudgetRegion, f64)> {
        self.rows.iter().map(|r| (r.region, r.loss_tangent)).collect()
    }

    pub fn row(&self, region: BudgetRegion) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.region == region)
    }
}

const fn row(region: BudgetRegion, participation: f64, loss_tangent: f64, contribution: f64) -> TableRow {
    TableRow {
        region,
        participation,
        loss_tangent,
        contribution,
    }
}

const fn table(
    deposition: Deposition,
    treatment: Treatment,
    metal_air: (f64, f64),
    substrate_air: (f64, f64, f64),
    total: f64,
) -> BudgetTable {
    BudgetTable {
        deposition,
        treatment,
        rows: [
            row(BudgetRegion::Substrate, 0.911, 1.3e-7, 1.18e-7),
            row(BudgetRegion::Air, 0.088, 0.0, 0.0),
            row(BudgetRegion::MetalAir, metal_air.0, 0.01, metal_air.1),
            row(BudgetRegion::SubstrateAir, substrate_air.0, substrate_air.1, substrate_air.2),
        ],
        total,
    }
}

/// The six tabulated budgets, reference presets first.
pub fn budget_tables() -> [BudgetTable; 6] {
    use Deposition::*;
    use Treatment::*;
    [
        table(T400, Reference, (1.87e-5, 1.87e-7), (3.7e-4, 1.7e-3, 6.28e-7), 9.34e-7),
        table(T450, Reference, (1.83e-5, 1.83e-7), (3.7e-4, 1.7e-3, 6.29e-7), 9.30e-7),
        table(T500, Reference, (1.95e-5, 1.95e-7), (3.94e-4, 1.7e-3, 6.69e-7), 9.83e-7),
        table(T400, HfTreated, (1.53e-5, 1.53e-7), (0.0, 0.0, 0.0), 2.72e-7),
        table(T450, HfTreated, (1.53e-5, 1.53e-7), (0.0, 0.0, 0.0), 2.72e-7),
        table(T500, HfTreated, (1.66e-5, 1.66e-7), (0.0, 0.0, 0.0), 2.85e-7),
    ]
}

pub fn budget_table(deposition: Deposition, treatment: Treatment) -> BudgetTable {
    budget_tables()
        .into_iter()
        .find(|t| t.deposition == deposition && t.treatment == treatment)
        .expect("every preset has a table")
}

/// Measured weighted mean of `F tan d0` for one chip class, with the quoted
/// spread, next to the simulated total listed for the same class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredMean {
    pub deposition: Deposition,
    pub treatment: Treatment,
    pub holder: &'static str,
    pub mean: f64,
    pub spread: f64,
    pub simulated: f64,
}

/// Deposition, four (mean, spread) pairs, simulated (reference, HF).
type ClassRow = (Deposition, [(f64, f64); 4], (f64, f64));

pub fn measured_means() -> Vec<MeasuredMean> {
    use Deposition::*;
    use Treatment::*;
    let rows: [ClassRow; 3] = [
        (T400, [(1.06, 0.48), (0.40, 0.09), (1.04, 0.34), (0.44, 0.15)], (0.93, 0.27)),
        (T450, [(1.06, 0.23), (0.40, 0.14), (1.13, 0.30), (0.28, 0.10)], (0.93, 0.27)),
        (T500, [(1.14, 0.21), (0.35, 0.09), (1.13, 0.20), (0.36, 0.07)], (0.98, 0.29)),
    ];
    let mut out = Vec::new();
    for (dep, cells, (sim_ref, sim_hf)) in rows {
        for (k, (mean, spread)) in cells.into_iter().enumerate() {
            let (holder, treatment, simulated) = match k {
                0 => ("A", Reference, sim_ref),
                1 => ("A", HfTreated, sim_hf),
                2 => ("B", Reference, sim_ref),
                _ => ("B", HfTreated, sim_hf),
            };
            out.push(MeasuredMean {
                deposition: dep,
                treatment,
                holder,
                mean: mean * 1e-6,
                spread: spread * 1e-6,
                simulated: simulated * 1e-6,
            });
        }
    }
    out
}
