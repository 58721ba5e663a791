//! Participation ratios and TLS loss budgets.
//!
//! Bulk participations come straight from the meshed region energies. Thin
//! interface layers are not meshed: their energy is reconstructed from the
//! host-side field on the interface contour, using continuity of the
//! tangential field and of the normal displacement across the layer.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsolve::{boundary_fields, build_mesh, solve_potential, BoundarySample, FieldSolution, Mesh};
use crate::geometry::{CpwStack, Length, MaterialRole, RegionId};
use crate::EPSILON_0;

/// Rows of a loss budget. Metal-air top and side layers share one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRegion {
    Substrate,
    Air,
    MetalAir,
    SubstrateAir,
    MetalSubstrate,
}

impl BudgetRegion {
    pub const TABLE_ORDER: [BudgetRegion; 4] = [
        BudgetRegion::Substrate,
        BudgetRegion::Air,
        BudgetRegion::MetalAir,
        BudgetRegion::SubstrateAir,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BudgetRegion::Substrate => "Silicon substrate",
            BudgetRegion::Air => "Air",
            BudgetRegion::MetalAir => "Metal-Air",
            BudgetRegion::SubstrateAir => "Substrate-Air",
            BudgetRegion::MetalSubstrate => "Metal-Substrate",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            BudgetRegion::Substrate => "substrate",
            BudgetRegion::Air => "air",
            BudgetRegion::MetalAir => "metal_air",
            BudgetRegion::SubstrateAir => "substrate_air",
            BudgetRegion::MetalSubstrate => "metal_substrate",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        let k = key.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Some(match k.as_str() {
            "substrate" | "si" | "silicon_substrate" => BudgetRegion::Substrate,
            "air" => BudgetRegion::Air,
            "metal_air" | "ma" => BudgetRegion::MetalAir,
            "substrate_air" | "sa" => BudgetRegion::SubstrateAir,
            "metal_substrate" | "ms" => BudgetRegion::MetalSubstrate,
            _ => return None,
        })
    }

    pub fn of(region: RegionId) -> Self {
        match region {
            RegionId::Substrate => BudgetRegion::Substrate,
            RegionId::Air => BudgetRegion::Air,
            RegionId::MetalAirTop | RegionId::MetalAirSide => BudgetRegion::MetalAir,
            RegionId::SubstrateAir => BudgetRegion::SubstrateAir,
            RegionId::MetalSubstrate => BudgetRegion::MetalSubstrate,
        }
    }
}

impl fmt::Display for BudgetRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub region: BudgetRegion,
    pub participation: f64,
    pub loss_tangent: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationBudget {
    pub entries: Vec<BudgetEntry>,
    pub total_f_tan_delta: f64,
}

impl ParticipationBudget {
    pub fn entry(&self, region: BudgetRegion) -> Option<&BudgetEntry> {
        self.entries.iter().find(|e| e.region == region)
    }

    pub fn participation(&self, region: BudgetRegion) -> f64 {
        self.entry(region).map_or(0.0, |e| e.participation)
    }

    pub fn contribution(&self, region: BudgetRegion) -> f64 {
        self.entry(region).map_or(0.0, |e| e.contribution)
    }

    fn recompute(&mut self) {
        for e in &mut self.entries {
            e.contribution = e.participation * e.loss_tangent;
        }
        self.total_f_tan_delta = self.entries.iter().map(|e| e.contribution).sum();
    }

    /// Aligned text table: region, F_i, tan delta, F_i tan delta, total.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:>16} {:>10} {:>14}",
            title, "Participation F_i", "tan d", "F_i tan d"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<20} {:>16} {:>10} {:>14}",
                e.region.label(),
                sig3(e.participation),
                sig3(e.loss_tangent),
                sig3(e.contribution)
            );
        }
        let _ = writeln!(s, "{:<20} {:>16} {:>10} {:>14}", "Total loss", "", "", sig3(self.total_f_tan_delta));
        s
    }
}

/// Scientific notation with three significant figures (`0` stays `0`).
pub fn sig3(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Energy fraction of a meshed bulk region.
pub fn bulk_participation(solution: &FieldSolution, region: RegionId) -> Result<f64> {
    if region.is_interface() {
        return Err(Error::NotBulk(region));
    }
    if !solution.region_energy.contains_key(&region) {
        return Err(Error::NotBulk(region));
    }
    Ok(solution.energy(region) / solution.total_energy)
}

/// How the thin-layer rule treats the neighbourhood of contour corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinLayerOptions {
    /// Within `corner_cutoff * thickness` of a corner the layer energy density
    /// is held at its value at that distance. Zero integrates the raw
    /// host-side field up to the corner.
    pub corner_cutoff: f64,
}

impl Default for ThinLayerOptions {
    fn default() -> Self {
        Self { corner_cutoff: 0.5 }
    }
}

/// Energy fraction of a thin layer of thickness `thickness` and relative
/// permittivity `eps_layer` lying on the contour of `layer_region`.
///
/// Per unit contour length the layer stores
/// `(eps0 t / 2) [eps_layer |E_par|^2 + (eps_host^2 / eps_layer) |E_norm|^2]`,
/// with fields taken on the host side. At metal corners and at the
/// metal/substrate/air junction the host field is nearly non-integrable along
/// the contour, while the real layer cannot come closer than about its own
/// thickness; the density is therefore capped inside half a layer thickness
/// of each corner (see [`ThinLayerOptions`]).
pub fn thin_layer_participation(
    solution: &FieldSolution,
    layer_region: RegionId,
    thickness: Length,
    eps_layer: f64,
) -> Result<f64> {
    thin_layer_participation_with(
        solution,
        layer_region,
        thickness,
        eps_layer,
        &ThinLayerOptions::default(),
    )
}

pub fn thin_layer_participation_with(
    solution: &FieldSolution,
    layer_region: RegionId,
    thickness: Length,
    eps_layer: f64,
    options: &ThinLayerOptions,
) -> Result<f64> {
    if !(thickness.0 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "layer thickness must be >= 0, got {thickness}"
        )));
    }
    if !(eps_layer > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "layer permittivity must be > 0, got {eps_layer}"
        )));
    }
    let samples = boundary_fields(solution, layer_region)?;
    if thickness.0 == 0.0 {
        return Ok(0.0);
    }
    let density = |s: &BoundarySample| {
        let eh = s.host_permittivity;
        eps_layer * s.e_parallel.powi(2) + eh * eh / eps_layer * s.e_normal.powi(2)
    };
    let cutoff = options.corner_cutoff * thickness.0;
    let corners = if cutoff > 0.0 {
        contour_corners(&solution.mesh)
    } else {
        Vec::new()
    };
    let nearest = |p: (f64, f64)| {
        corners
            .iter()
            .map(|c| (c.0 - p.0).hypot(c.1 - p.1))
            .zip(corners.iter())
            .min_by(|a, b| a.0.total_cmp(&b.0))
    };

    let mut integral = 0.0;
    for sample in &samples {
        let value = match nearest(sample.midpoint) {
            Some((r, corner)) if r < cutoff => {
                capped_density(&samples, sample, *corner, cutoff, &density).unwrap_or(density(sample))
            }
            _ => density(sample),
        };
        integral += value * sample.dl;
    }
    let energy = 0.5 * EPSILON_0 * thickness.0 * integral * solution.mesh.mirror_factor;
    Ok(energy / solution.total_energy)
}

/// Density at distance `cutoff` from `corner` along the straight run that
/// holds `sample`, interpolated log-log between the bracketing samples.
fn capped_density(
    samples: &[BoundarySample],
    sample: &BoundarySample,
    corner: (f64, f64),
    cutoff: f64,
    density: &dyn Fn(&BoundarySample) -> f64,
) -> Option<f64> {
    let horizontal = (sample.midpoint.1 - corner.1).abs() < (sample.midpoint.0 - corner.0).abs();
    let along = |s: &BoundarySample| {
        if horizontal {
            s.midpoint.0 - corner.0
        } else {
            s.midpoint.1 - corner.1
        }
    };
    let on_run = |s: &BoundarySample| {
        let same_line = if horizontal {
            s.midpoint.1 == sample.midpoint.1
        } else {
            s.midpoint.0 == sample.midpoint.0
        };
        same_line && along(s).signum() == along(sample).signum()
    };
    let mut inner: Option<&BoundarySample> = None;
    let mut outer: Option<&BoundarySample> = None;
    for s in samples.iter().filter(|s| on_run(s)) {
        let d = along(s).abs();
        if d < cutoff {
            if inner.is_none_or(|b| d > along(b).abs()) {
                inner = Some(s);
            }
        } else if outer.is_none_or(|b| d < along(b).abs()) {
            outer = Some(s);
        }
    }
    let outer = outer?;
    let (r1, f1) = (along(outer).abs(), density(outer));
    let Some(inner) = inner else { return Some(f1) };
    let (r0, f0) = (along(inner).abs(), density(inner));
    if !(f0 > 0.0 && f1 > 0.0 && r0 > 0.0 && r1 > r0) {
        return Some(f1);
    }
    let w = (cutoff.ln() - r0.ln()) / (r1.ln() - r0.ln());
    Some((f0.ln() + w * (f1.ln() - f0.ln())).exp())
}

/// Points where an interface contour turns, changes type or ends inside the
/// domain. Contour ends on the outer boundary (symmetry plane, far box) are
/// not corners.
pub fn contour_corners(mesh: &Mesh) -> Vec<(f64, f64)> {
    let mut incident: BTreeMap<(u64, u64), Vec<(RegionId, bool)>> = BTreeMap::new();
    for seg in &mesh.segments {
        let horizontal = seg.start.1 == seg.end.1;
        for p in [seg.start, seg.end] {
            incident
                .entry((p.0.to_bits(), p.1.to_bits()))
                .or_default()
                .push((seg.region, horizontal));
        }
    }
    let (x0, x1) = (mesh.xs[0], mesh.xs[mesh.xs.len() - 1]);
    let (y0, y1) = (mesh.ys[0], mesh.ys[mesh.ys.len() - 1]);
    incident
        .into_iter()
        .filter_map(|((xb, yb), segs)| {
            let p = (f64::from_bits(xb), f64::from_bits(yb));
            if p.0 == x0 || p.0 == x1 || p.1 == y0 || p.1 == y1 {
                return None;
            }
            let straight = segs.len() == 2 && segs[0] == segs[1];
            (!straight).then_some(p)
        })
        .collect()
}

/// Combine participations with loss tangents. Air needs no tangent.
pub fn loss_budget(
    participations: &[(BudgetRegion, f64)],
    loss_tangents: &[(BudgetRegion, f64)],
) -> Result<ParticipationBudget> {
    let mut entries = Vec::with_capacity(participations.len());
    for &(region, p) in participations {
        let tan = match loss_tangents.iter().find(|(r, _)| *r == region) {
            Some(&(_, t)) => t,
            None if region == BudgetRegion::Air => 0.0,
            None => return Err(Error::MissingLossTangent(region.label().to_string())),
        };
        if !(p >= 0.0) || !(tan >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{}: participation and loss tangent must be >= 0",
                region.label()
            )));
        }
        entries.push(BudgetEntry {
            region,
            participation: p,
            loss_tangent: tan,
            contribution: 0.0,
        });
    }
    let mut budget = ParticipationBudget {
        entries,
        total_f_tan_delta: 0.0,
    };
    budget.recompute();
    Ok(budget)
}

/// Metal-air participation scaled by `ma_scale`; substrate-air removed unless
/// `keep_substrate_air` is set.
pub fn apply_hf_scaling(
    reference: &ParticipationBudget,
    ma_scale: f64,
    keep_substrate_air: bool,
) -> Result<ParticipationBudget> {
    if !(ma_scale > 0.0 && ma_scale <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "metal-air scale must lie in (0, 1], got {ma_scale}"
        )));
    }
    for needed in [BudgetRegion::MetalAir, BudgetRegion::SubstrateAir] {
        if reference.entry(needed).is_none() {
            return Err(Error::MissingCounterpart(format!(
                "reference budget has no {} entry",
                needed.label()
            )));
        }
    }
    let mut out = reference.clone();
    for e in &mut out.entries {
        match e.region {
            BudgetRegion::MetalAir => e.participation *= ma_scale,
            BudgetRegion::SubstrateAir if !keep_substrate_air => {
                e.participation = 0.0;
                e.loss_tangent = 0.0;
            }
            _ => {}
        }
    }
    out.recompute();
    Ok(out)
}

/// Percentage of the total loss carried by each region.
pub fn budget_shares(budget: &ParticipationBudget) -> Result<Vec<(BudgetRegion, f64)>> {
    let total: f64 = budget.entries.iter().map(|e| e.contribution).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    Ok(budget
        .entries
        .iter()
        .map(|e| (e.region, 100.0 * e.contribution / total))
        .collect())
}

/// Solver output plus the budget built from it.
#[derive(Debug, Clone, Serialize)]
pub struct SimulatedBudget {
    pub budget: ParticipationBudget,
    pub p_metal_air_top: f64,
    pub p_metal_air_side: f64,
    /// Sum of all participations including thin layers.
    pub participation_sum: f64,
    pub capacitance: f64,
    pub cells: usize,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Budget of a solved stack. The stack's `ma_scale` multiplies the metal-air
/// row; a zero substrate-air thickness drops that row's loss.
pub fn budget_from_solution(stack: &CpwStack, solution: &FieldSolution) -> Result<SimulatedBudget> {
    let p_sub = bulk_participation(solution, RegionId::Substrate)?;
    let p_air = bulk_participation(solution, RegionId::Air)?;
    let eps_ma = stack.material(MaterialRole::MaOxide).relative_permittivity;
    let eps_sa = stack.material(MaterialRole::SaOxide).relative_permittivity;
    let p_top = thin_layer_participation(solution, RegionId::MetalAirTop, stack.layer_ma_top, eps_ma)?;
    let p_side = thin_layer_participation(solution, RegionId::MetalAirSide, stack.layer_ma_side, eps_ma)?;
    let p_sa = thin_layer_participation(solution, RegionId::SubstrateAir, stack.layer_sa, eps_sa)?;
    let p_ma = (p_top + p_side) * stack.ma_scale;

    let sa_tan = if stack.layer_sa.0 > 0.0 {
        stack.material(MaterialRole::SaOxide).loss_tangent
    } else {
        0.0
    };
    let budget = loss_budget(
        &[
            (BudgetRegion::Substrate, p_sub),
            (BudgetRegion::Air, p_air),
            (BudgetRegion::MetalAir, p_ma),
            (BudgetRegion::SubstrateAir, p_sa),
        ],
        &[
            (BudgetRegion::Substrate, stack.material(MaterialRole::Substrate).loss_tangent),
            (BudgetRegion::MetalAir, stack.material(MaterialRole::MaOxide).loss_tangent),
            (BudgetRegion::SubstrateAir, sa_tan),
        ],
    )?;
    Ok(SimulatedBudget {
        participation_sum: p_sub + p_air + p_ma + p_sa,
        budget,
        p_metal_air_top: p_top * stack.ma_scale,
        p_metal_air_side: p_side * stack.ma_scale,
        capacitance: solution.capacitance(),
        cells: solution.mesh.cell_count(),
        iterations: solution.iterations,
        relative_residual: solution.relative_residual,
    })
}

/// Mesh, solve and budget a stack in one call.
pub fn simulate(stack: &CpwStack, refinement_level: u32) -> Result<SimulatedBudget> {
    let mesh = build_mesh(stack, refinement_level)?;
    let solution = solve_potential(&mesh)?;
    budget_from_solution(stack, &solution)
}
