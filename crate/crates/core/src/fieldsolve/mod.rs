//! 2D electrostatics of the CPW cross-section.
//!
//! The cross-section is meshed with a graded tensor-product grid whose
//! rectangles are split into linear triangles. For right triangles the P1
//! stiffness matrix reduces to a five-point stencil, solved here with
//! incomplete-Cholesky preconditioned conjugate gradients. Conductors are
//! perfect equipotentials; the far box is grounded.

mod mesh;
mod solver;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

pub use mesh::{
    build_mesh, build_mesh_direct, build_mesh_with, graded_axis, AxisKey, BoundarySegment, Cell, Conductor, Grading,
    Half, Layout, Mesh, Side, Symmetry,
};

use crate::error::{Error, Result};
use crate::geometry::RegionId;
use crate::EPSILON_0;
use solver::FivePoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target of the reduced linear system.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Potential of the conductors marked at 1 in the mesh (volts).
    pub excitation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200_000,
            excitation: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mesh: Mesh,
    /// Node potentials (V).
    pub potential: Vec<f64>,
    /// Field (V/m) on the lower and upper triangle of each cell.
    pub cell_fields: Vec<[(f64, f64); 2]>,
    /// Electric energy per unit length (J/m) of the full structure, per region.
    pub region_energy: BTreeMap<RegionId, f64>,
    pub total_energy: f64,
    pub excitation: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Host-side field on one interface segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    /// Arc length at the segment midpoint along the concatenated contour.
    pub s: f64,
    pub dl: f64,
    pub midpoint: (f64, f64),
    pub e_parallel: f64,
    pub e_normal: f64,
    /// Relative permittivity of the host medium.
    pub host_permittivity: f64,
}

fn assemble(mesh: &Mesh) -> FivePoint {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let n = nx * ny;
    let mut a = FivePoint {
        nx,
        diag: vec![0.0; n],
        east: vec![0.0; n],
        north: vec![0.0; n],
        free: mesh.fixed.iter().map(|f| f.is_none()).collect(),
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let Some(cell) = mesh.cells[mesh.cell_index(i, j)] else {
                continue;
            };
            let hx = mesh.xs[i + 1] - mesh.xs[i];
            let hy = mesh.ys[j + 1] - mesh.ys[j];
            let cx = 0.5 * cell.permittivity * hy / hx;
            let cy = 0.5 * cell.permittivity * hx / hy;
            let (bl, br, tl, tr) = (
                mesh.node(i, j),
                mesh.node(i + 1, j),
                mesh.node(i, j + 1),
                mesh.node(i + 1, j + 1),
            );
            a.east[bl] += cx;
            a.east[tl] += cx;
            a.north[bl] += cy;
            a.north[br] += cy;
            for k in [bl, br, tl, tr] {
                a.diag[k] += cx + cy;
            }
        }
    }
    a
}

/// Field on the two triangles of cell `(i, j)`.
fn triangle_fields(mesh: &Mesh, phi: &[f64], i: usize, j: usize) -> [(f64, f64); 2] {
    let hx = mesh.xs[i + 1] - mesh.xs[i];
    let hy = mesh.ys[j + 1] - mesh.ys[j];
    let bl = phi[mesh.node(i, j)];
    let br = phi[mesh.node(i + 1, j)];
    let tl = phi[mesh.node(i, j + 1)];
    let tr = phi[mesh.node(i + 1, j + 1)];
    [
        (-(br - bl) / hx, -(tr - br) / hy),
        (-(tr - tl) / hx, -(tl - bl) / hy),
    ]
}

pub fn solve_potential(mesh: &Mesh) -> Result<FieldSolution> {
    solve_potential_with(mesh, &SolverOptions::default())
}

pub fn solve_potential_with(mesh: &Mesh, options: &SolverOptions) -> Result<FieldSolution> {
    let a = assemble(mesh);
    let (nx, n) = (mesh.nx(), mesh.nx() * mesh.ny());
    let v = options.excitation;
    let mut potential: Vec<f64> = mesh.fixed.iter().map(|f| f.unwrap_or(0.0) * v).collect();

    // move Dirichlet couplings to the right-hand side
    let mut b = vec![0.0; n];
    for k in 0..n {
        if !a.free[k] {
            continue;
        }
        let i = k % nx;
        let mut acc = 0.0;
        if i + 1 < nx && !a.free[k + 1] {
            acc += a.east[k] * potential[k + 1];
        }
        if i > 0 && !a.free[k - 1] {
            acc += a.east[k - 1] * potential[k - 1];
        }
        if k + nx < n && !a.free[k + nx] {
            acc += a.north[k] * potential[k + nx];
        }
        if k >= nx && !a.free[k - nx] {
            acc += a.north[k - nx] * potential[k - nx];
        }
        b[k] = acc;
    }

    let mut x = vec![0.0; n];
    let stats = solver::pcg(&a, &b, &mut x, options.tolerance, options.max_iterations)?;
    for k in 0..n {
        if a.free[k] {
            potential[k] = x[k];
        }
    }

    let mut cell_fields = vec![[(0.0, 0.0); 2]; mesh.cells.len()];
    let mut region_energy: BTreeMap<RegionId, f64> = BTreeMap::new();
    for j in 0..mesh.ny() - 1 {
        for i in 0..nx - 1 {
            let c = mesh.cell_index(i, j);
            let Some(cell) = mesh.cells[c] else { continue };
            let fields = triangle_fields(mesh, &potential, i, j);
            cell_fields[c] = fields;
            let area = 0.5 * (mesh.xs[i + 1] - mesh.xs[i]) * (mesh.ys[j + 1] - mesh.ys[j]);
            let e2: f64 = fields.iter().map(|(ex, ey)| ex * ex + ey * ey).sum();
            let w = 0.5 * EPSILON_0 * cell.permittivity * e2 * area * mesh.mirror_factor;
            *region_energy.entry(cell.region).or_insert(0.0) += w;
        }
    }
    let total_energy = region_energy.values().sum();

    Ok(FieldSolution {
        mesh: mesh.clone(),
        potential,
        cell_fields,
        region_energy,
        total_energy,
        excitation: v,
        iterations: stats.iterations,
        relative_residual: stats.relative_residual,
    })
}

impl FieldSolution {
    pub fn energy(&self, region: RegionId) -> f64 {
        self.region_energy.get(&region).copied().unwrap_or(0.0)
    }

    /// Capacitance per unit length (F/m) of the excited conductor.
    pub fn capacitance(&self) -> f64 {
        2.0 * self.total_energy / (self.excitation * self.excitation)
    }

    /// Potential at an arbitrary point by linear interpolation on the triangle containing it.
    pub fn potential_at(&self, x: f64, y: f64) -> Option<f64> {
        let m = &self.mesh;
        let i = locate(&m.xs, x)?;
        let j = locate(&m.ys, y)?;
        let u = (x - m.xs[i]) / (m.xs[i + 1] - m.xs[i]);
        let v = (y - m.ys[j]) / (m.ys[j + 1] - m.ys[j]);
        let p = |a, b| self.potential[m.node(i + a, j + b)];
        Some(if v <= u {
            // lower triangle: bl + u (br - bl) + v (tr - br)
            p(0, 0) + u * (p(1, 0) - p(0, 0)) + v * (p(1, 1) - p(1, 0))
        } else {
            p(0, 0) + v * (p(0, 1) - p(0, 0)) + u * (p(1, 1) - p(0, 1))
        })
    }

    /// Write `x,y,potential` for every node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,potential")?;
        let m = &self.mesh;
        for j in 0..m.ny() {
            for i in 0..m.nx() {
                writeln!(out, "{:.9e},{:.9e},{:.9e}", m.xs[i], m.ys[j], self.potential[m.node(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes             {}", self.potential.len());
        let _ = writeln!(s, "cells             {}", self.mesh.cell_count());
        let _ = writeln!(s, "cg iterations     {}", self.iterations);
        let _ = writeln!(s, "relative residual {:.3e}", self.relative_residual);
        for (region, w) in &self.region_energy {
            let _ = writeln!(s, "energy {:<18} {:.6e} J/m", region.label(), w);
        }
        let _ = writeln!(s, "energy total             {:.6e} J/m", self.total_energy);
        let _ = writeln!(s, "capacitance              {:.6e} F/m", self.capacitance());
        s
    }
}

fn locate(axis: &[f64], v: f64) -> Option<usize> {
    if v < axis[0] || v > axis[axis.len() - 1] {
        return None;
    }
    let k = axis.partition_point(|&a| a <= v);
    Some(k.saturating_sub(1).min(axis.len() - 2))
}

/// Host-side field samples along an interface contour.
pub fn boundary_fields(solution: &FieldSolution, region: RegionId) -> Result<Vec<BoundarySample>> {
    if !region.is_interface() {
        return Err(Error::NotInterface(region));
    }
    let mesh = &solution.mesh;
    let mut s = 0.0;
    let mut out = Vec::new();
    for seg in mesh.segments.iter().filter(|seg| seg.region == region) {
        let dl = seg.length();
        let tangent = ((seg.end.0 - seg.start.0) / dl, (seg.end.1 - seg.start.1) / dl);
        let (ex, ey) = solution.cell_fields[seg.host_cell][match seg.host_half {
            Half::Lower => 0,
            Half::Upper => 1,
        }];
        let host = mesh.cells[seg.host_cell].expect("host cell is dielectric");
        out.push(BoundarySample {
            s: s + 0.5 * dl,
            dl,
            midpoint: (0.5 * (seg.start.0 + seg.end.0), 0.5 * (seg.start.1 + seg.end.1)),
            e_parallel: ex * tangent.0 + ey * tangent.1,
            e_normal: ex * seg.normal.0 + ey * seg.normal.1,
            host_permittivity: host.permittivity,
        });
        s += dl;
    }
    if out.is_empty() {
        return Err(Error::MissingSamples(region));
    }
    Ok(out)
}
