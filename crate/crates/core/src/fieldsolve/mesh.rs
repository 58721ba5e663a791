use crate::error::{Error, Result};
use crate::geometry::{CpwStack, MaterialRole, RegionId};

/// Local mesh-size rule: cells start at `h_min` on refined lines and grow
/// linearly with distance at rate `growth - 1`, capped at `h_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grading {
    pub h_min: f64,
    pub growth: f64,
    pub h_max: f64,
}

impl Grading {
    /// Grading for a refinement level (1 = coarsest) and a characteristic
    /// lateral size of the conductor footprint.
    pub fn for_level(level: u32, footprint: f64) -> Self {
        let level = level.max(1) as f64;
        Self {
            h_min: 2.5e-5 * footprint / 2f64.powf(level - 1.0),
            growth: 1.0 + 0.3 / level,
            h_max: footprint / (4.0 * level),
        }
    }

    fn size(&self, d: f64) -> f64 {
        (self.h_min + (self.growth - 1.0) * d).min(self.h_max)
    }
}

/// Breakpoints of an axis. `refine` marks lines where the grading restarts.
#[derive(Debug, Clone, Copy)]
pub struct AxisKey {
    pub at: f64,
    pub refine: bool,
}

/// Graded axis through `keys` (sorted, deduplicated, first and last are the
/// domain ends). Every key is reproduced exactly as a grid line.
pub fn graded_axis(keys: &[AxisKey], grading: &Grading) -> Result<Vec<f64>> {
    if keys.len() < 2 {
        return Err(Error::Mesh("axis needs at least two breakpoints".into()));
    }
    let mut out = vec![keys[0].at];
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = b.at - a.at;
        if !(len > 0.0) {
            return Err(Error::Mesh(format!(
                "degenerate interval [{:e}, {:e}]",
                a.at, b.at
            )));
        }
        let h = |x: f64| {
            let da = if a.refine { x - a.at } else { f64::INFINITY };
            let db = if b.refine { b.at - x } else { f64::INFINITY };
            grading.size(da.min(db))
        };
        // stretched coordinate s(x) = integral of 1/h, inverted by bisection
        let s_of = |x: f64| stretched(x - a.at, len, a.refine, b.refine, grading);
        let total = s_of(b.at);
        let n = total.ceil().max(1.0) as usize;
        for k in 1..n {
            let target = total * k as f64 / n as f64;
            let (mut lo, mut hi) = (a.at, b.at);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if s_of(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-6 * h(mid) {
                    break;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out.push(b.at);
    }
    Ok(out)
}

/// Integral of 1/h from the left end over a distance `x` of an interval of
/// length `len`, with grading active from the left and/or right end.
fn stretched(x: f64, len: f64, left: bool, right: bool, g: &Grading) -> f64 {
    let rate = g.growth - 1.0;
    // one-sided integral of 1/min(h_min + rate*d, h_max) from 0 to d
    let one_sided = |d: f64| -> f64 {
        let d_cap = (g.h_max - g.h_min) / rate;
        if d <= d_cap {
            ((g.h_min + rate * d) / g.h_min).ln() / rate
        } else {
            (g.h_max / g.h_min).ln() / rate + (d - d_cap) / g.h_max
        }
    };
    match (left, right) {
        (false, false) => x / g.h_max,
        (true, false) => one_sided(x),
        (false, true) => one_sided(len) - one_sided(len - x),
        (true, true) => {
            let mid = 0.5 * len;
            if x <= mid {
                one_sided(x)
            } else {
                2.0 * one_sided(mid) - one_sided(len - x)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub region: RegionId,
    pub permittivity: f64,
}

/// One of the two right triangles a grid rectangle is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    /// (bottom-left, bottom-right, top-right); owns the bottom and right edges.
    Lower,
    /// (bottom-left, top-right, top-left); owns the top and left edges.
    Upper,
}

/// Grid edge on an interface, with the host-side triangle that samples it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySegment {
    pub region: RegionId,
    pub start: (f64, f64),
    pub end: (f64, f64),
    /// Unit normal pointing into the host.
    pub normal: (f64, f64),
    pub host_cell: usize,
    pub host_half: Half,
}

impl BoundarySegment {
    pub fn length(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Side {
    Dirichlet(f64),
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductor {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// Potential as a fraction of the excitation voltage.
    pub potential: f64,
}

impl Conductor {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Generic rectilinear problem description.
pub struct Layout<'a> {
    pub x_keys: Vec<AxisKey>,
    pub y_keys: Vec<AxisKey>,
    pub conductors: Vec<Conductor>,
    /// left, right, bottom, top
    pub sides: [Side; 4],
    /// Dielectric at a cell centre; `None` inside metal.
    pub region_at: &'a dyn Fn(f64, f64) -> Option<Cell>,
    /// Energies are multiplied by this (2 for a mirrored half domain).
    pub mirror_factor: f64,
}

/// Tensor-product grid whose rectangles are each split into two P1 triangles.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major `(ny-1) x (nx-1)`; `None` for cells inside metal.
    pub cells: Vec<Option<Cell>>,
    /// Dirichlet data per node, as a fraction of the excitation voltage.
    pub fixed: Vec<Option<f64>>,
    pub segments: Vec<BoundarySegment>,
    pub mirror_factor: f64,
}

impl Mesh {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.xs.len() + i
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * (self.xs.len() - 1) + i
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        let w = self.xs.len() - 1;
        (c % w, c / w)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.cell_count()
    }

    /// Smallest cell edge in the mesh.
    pub fn min_spacing(&self) -> f64 {
        let mut h = f64::INFINITY;
        for v in [&self.xs, &self.ys] {
            for w in v.windows(2) {
                h = h.min(w[1] - w[0]);
            }
        }
        h
    }

    /// Cells whose centre lies within `radius` of `point`.
    pub fn cells_near(&self, point: (f64, f64), radius: f64) -> usize {
        let mut n = 0;
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.is_none() {
                continue;
            }
            let (i, j) = self.cell_ij(c);
            let cx = 0.5 * (self.xs[i] + self.xs[i + 1]);
            let cy = 0.5 * (self.ys[j] + self.ys[j + 1]);
            if (cx - point.0).hypot(cy - point.1) <= radius {
                n += 1;
            }
        }
        n
    }

    pub fn from_layout(layout: &Layout<'_>, grading: &Grading) -> Result<Mesh> {
        let xs = graded_axis(&layout.x_keys, grading)?;
        let ys = graded_axis(&layout.y_keys, grading)?;
        let (nx, ny) = (xs.len(), ys.len());
        if nx < 2 || ny < 2 {
            return Err(Error::Mesh("empty grid".into()));
        }

        let mut cells = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let cx = 0.5 * (xs[i] + xs[i + 1]);
                let cy = 0.5 * (ys[j] + ys[j + 1]);
                let inside_metal = layout.conductors.iter().any(|c| c.contains(cx, cy));
                cells.push(if inside_metal {
                    None
                } else {
                    (layout.region_at)(cx, cy)
                });
            }
        }

        let mut fixed = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (xs[i], ys[j]);
                let mut value = None;
                for (side, on) in layout.sides.iter().zip([i == 0, i == nx - 1, j == 0, j == ny - 1]) {
                    if let (true, Side::Dirichlet(v)) = (on, side) {
                        value = Some(*v);
                    }
                }
                for c in &layout.conductors {
                    if c.contains(x, y) {
                        value = Some(c.potential);
                    }
                }
                fixed[j * nx + i] = value;
            }
        }

        let mut mesh = Mesh {
            xs,
            ys,
            cells,
            fixed,
            segments: Vec::new(),
            mirror_factor: layout.mirror_factor,
        };
        mesh.segments = mesh.find_interfaces();
        mesh.check()?;
        Ok(mesh)
    }

    fn check(&self) -> Result<()> {
        let (nx, ny) = (self.nx(), self.ny());
        if self.cell_count() == 0 {
            return Err(Error::Mesh("no dielectric cells".into()));
        }
        // every free node must touch a dielectric cell
        for j in 0..ny {
            for i in 0..nx {
                if self.fixed[self.node(i, j)].is_some() {
                    continue;
                }
                let touches = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().any(|&(di, dj)| {
                    let (ci, cj) = (i as isize - di, j as isize - dj);
                    ci >= 0
                        && cj >= 0
                        && (ci as usize) < nx - 1
                        && (cj as usize) < ny - 1
                        && self.cells[self.cell_index(ci as usize, cj as usize)].is_some()
                });
                if !touches {
                    return Err(Error::Mesh(format!(
                        "node ({:e}, {:e}) is isolated",
                        self.xs[i], self.ys[j]
                    )));
                }
            }
        }
        if self.fixed.iter().all(|f| f.is_none()) {
            return Err(Error::Mesh("no Dirichlet data".into()));
        }
        Ok(())
    }

    fn find_interfaces(&self) -> Vec<BoundarySegment> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = Vec::new();
        let region = |i: usize, j: usize| self.cells[self.cell_index(i, j)].map(|c| c.region);
        // host side: air for metal-air and substrate-air, substrate for metal-substrate
        let classify = |a: Option<RegionId>, b: Option<RegionId>| -> Option<(RegionId, bool)> {
            use RegionId::*;
            match (a, b) {
                (None, Some(Air)) => Some((MetalAirTop, false)),
                (Some(Air), None) => Some((MetalAirTop, true)),
                (None, Some(Substrate)) => Some((MetalSubstrate, false)),
                (Some(Substrate), None) => Some((MetalSubstrate, true)),
                (Some(Substrate), Some(Air)) => Some((SubstrateAir, false)),
                (Some(Air), Some(Substrate)) => Some((SubstrateAir, true)),
                _ => None,
            }
        };
        // horizontal edges: cell below (i, j-1) vs above (i, j)
        for j in 1..ny - 1 {
            for i in 0..nx - 1 {
                let (below, above) = (region(i, j - 1), region(i, j));
                if let Some((r, host_is_below)) = classify(below, above) {
                    let (host_cell, host_half, normal) = if host_is_below {
                        (self.cell_index(i, j - 1), Half::Upper, (0.0, -1.0))
                    } else {
                        (self.cell_index(i, j), Half::Lower, (0.0, 1.0))
                    };
                    out.push(BoundarySegment {
                        region: r,
                        start: (self.xs[i], self.ys[j]),
                        end: (self.xs[i + 1], self.ys[j]),
                        normal,
                        host_cell,
                        host_half,
                    });
                }
            }
        }
        // vertical edges: cell left (i-1, j) vs right (i, j)
        for j in 0..ny - 1 {
            for i in 1..nx - 1 {
                let (left, right) = (region(i - 1, j), region(i, j));
                if let Some((mut r, host_is_left)) = classify(left, right) {
                    if r == RegionId::MetalAirTop {
                        r = RegionId::MetalAirSide;
                    }
                    let (host_cell, host_half, normal) = if host_is_left {
                        (self.cell_index(i - 1, j), Half::Lower, (-1.0, 0.0))
                    } else {
                        (self.cell_index(i, j), Half::Upper, (1.0, 0.0))
                    };
                    out.push(BoundarySegment {
                        region: r,
                        start: (self.xs[i], self.ys[j]),
                        end: (self.xs[i], self.ys[j + 1]),
                        normal,
                        host_cell,
                        host_half,
                    });
                }
            }
        }
        out
    }
}

/// Whether to mesh the full cross-section or the half domain `x >= 0` with a
/// zero-normal-derivative condition on the symmetry plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    #[default]
    Half,
    Full,
}

/// Mesh the CPW cross-section. Thin interface layers are not meshed.
pub fn build_mesh(stack: &CpwStack, refinement_level: u32) -> Result<Mesh> {
    build_mesh_with(stack, refinement_level, Symmetry::Half)
}

pub fn build_mesh_with(stack: &CpwStack, refinement_level: u32, symmetry: Symmetry) -> Result<Mesh> {
    if refinement_level == 0 {
        return Err(Error::Mesh("refinement level must be >= 1".into()));
    }
    stack.validate().map_err(|e| Error::Mesh(e.to_string()))?;
    let half_w = 0.5 * stack.trace_width.0;
    let gap = stack.gap.0;
    let t = stack.metal_thickness.0;
    let trench = stack.trench_depth.0;
    let big_l = stack.domain_halfwidth.0;
    let h_air = stack.domain_height_air.0;
    let d_sub = stack.domain_depth_substrate.0;
    let edge = half_w + gap;
    if gap <= 0.0 || edge >= big_l {
        return Err(Error::Mesh("gap must be positive and inside the domain".into()));
    }
    let grading = Grading::for_level(refinement_level, stack.trace_width.0 + 2.0 * gap);

    let refined = |at| AxisKey { at, refine: true };
    let plain = |at| AxisKey { at, refine: false };
    let mut x_keys = match symmetry {
        Symmetry::Half => vec![plain(0.0), refined(half_w), refined(edge), plain(big_l)],
        Symmetry::Full => vec![
            plain(-big_l),
            refined(-edge),
            refined(-half_w),
            refined(half_w),
            refined(edge),
            plain(big_l),
        ],
    };
    x_keys.dedup_by(|a, b| a.at == b.at);
    let mut y_keys = vec![plain(-d_sub)];
    if trench > 0.0 {
        y_keys.push(refined(-trench));
    }
    y_keys.extend([refined(0.0), refined(t), plain(h_air)]);

    let mut conductors = vec![Conductor {
        x0: if symmetry == Symmetry::Half { 0.0 } else { -half_w },
        x1: half_w,
        y0: 0.0,
        y1: t,
        potential: 1.0,
    }];
    conductors.push(Conductor {
        x0: edge,
        x1: big_l,
        y0: 0.0,
        y1: t,
        potential: 0.0,
    });
    if symmetry == Symmetry::Full {
        conductors.push(Conductor {
            x0: -big_l,
            x1: -edge,
            y0: 0.0,
            y1: t,
            potential: 0.0,
        });
    }

    let eps_sub = stack.material(MaterialRole::Substrate).relative_permittivity;
    let eps_air = stack.material(MaterialRole::Air).relative_permittivity;
    let region_at = move |x: f64, y: f64| {
        let in_trench = trench > 0.0 && y > -trench && x.abs() > half_w && x.abs() < edge;
        Some(if y < 0.0 && !in_trench {
            Cell {
                region: RegionId::Substrate,
                permittivity: eps_sub,
            }
        } else {
            Cell {
                region: RegionId::Air,
                permittivity: eps_air,
            }
        })
    };
    let layout = Layout {
        x_keys,
        y_keys,
        conductors,
        sides: [
            match symmetry {
                Symmetry::Half => Side::Neumann,
                Symmetry::Full => Side::Dirichlet(0.0),
            },
            Side::Dirichlet(0.0),
            Side::Dirichlet(0.0),
            Side::Dirichlet(0.0),
        ],
        region_at: &region_at,
        mirror_factor: match symmetry {
            Symmetry::Half => 2.0,
            Symmetry::Full => 1.0,
        },
    };
    Mesh::from_layout(&layout, &grading)
}

/// Mesh with the interface oxides resolved as explicit dielectric cells.
///
/// Used to cross-check the thin-layer rule. Layer cells carry the interface
/// region labels, so their energy fraction is the participation directly.
/// Only untrenched stacks are supported.
pub fn build_mesh_direct(stack: &CpwStack, refinement_level: u32) -> Result<Mesh> {
    if refinement_level == 0 {
        return Err(Error::Mesh("refinement level must be >= 1".into()));
    }
    stack.validate().map_err(|e| Error::Mesh(e.to_string()))?;
    if stack.trench_depth.0 > 0.0 {
        return Err(Error::Mesh("direct layer meshing needs trench_depth = 0".into()));
    }
    let half_w = 0.5 * stack.trace_width.0;
    let gap = stack.gap.0;
    let t = stack.metal_thickness.0;
    let edge = half_w + gap;
    let big_l = stack.domain_halfwidth.0;
    let t_top = stack.layer_ma_top.0;
    let t_side = stack.layer_ma_side.0;
    let t_sa = stack.layer_sa.0;
    if gap <= 2.0 * t_side {
        return Err(Error::Mesh("side layers close the gap".into()));
    }
    let grading = Grading::for_level(refinement_level, stack.trace_width.0 + 2.0 * gap);
    let refined = |at| AxisKey { at, refine: true };
    let plain = |at| AxisKey { at, refine: false };

    let mut xs = vec![plain(0.0), refined(half_w), refined(edge), plain(big_l)];
    if t_side > 0.0 {
        xs.push(refined(half_w + t_side));
        xs.push(refined(edge - t_side));
    }
    let mut ys = vec![plain(-stack.domain_depth_substrate.0), refined(0.0), refined(t), plain(stack.domain_height_air.0)];
    if t_top > 0.0 {
        ys.push(refined(t + t_top));
    }
    if t_sa > 0.0 {
        ys.push(refined(t_sa));
    }
    for keys in [&mut xs, &mut ys] {
        keys.sort_by(|a, b| a.at.total_cmp(&b.at));
        keys.dedup_by(|a, b| a.at == b.at);
    }

    let eps = |role| stack.material(role).relative_permittivity;
    let (eps_sub, eps_air, eps_ma, eps_sa) = (
        eps(MaterialRole::Substrate),
        eps(MaterialRole::Air),
        eps(MaterialRole::MaOxide),
        eps(MaterialRole::SaOxide),
    );
    let region_at = move |x: f64, y: f64| {
        let cell = |region, permittivity| Some(Cell { region, permittivity });
        let over_metal = x < half_w + t_side || x > edge - t_side;
        let beside_metal = (x > half_w && x < half_w + t_side) || (x > edge - t_side && x < edge);
        if y < 0.0 {
            cell(RegionId::Substrate, eps_sub)
        } else if y > t && y < t + t_top && over_metal {
            cell(RegionId::MetalAirTop, eps_ma)
        } else if y < t && beside_metal {
            cell(RegionId::MetalAirSide, eps_ma)
        } else if y < t_sa && x > half_w && x < edge {
            cell(RegionId::SubstrateAir, eps_sa)
        } else {
            cell(RegionId::Air, eps_air)
        }
    };
    let layout = Layout {
        x_keys: xs,
        y_keys: ys,
        conductors: vec![
            Conductor { x0: 0.0, x1: half_w, y0: 0.0, y1: t, potential: 1.0 },
            Conductor { x0: edge, x1: big_l, y0: 0.0, y1: t, potential: 0.0 },
        ],
        sides: [Side::Neumann, Side::Dirichlet(0.0), Side::Dirichlet(0.0), Side::Dirichlet(0.0)],
        region_at: &region_at,
        mirror_factor: 2.0,
    };
    Mesh::from_layout(&layout, &grading)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_hits_keys_and_grades() {
        let g = Grading {
            h_min: 1e-9,
            growth: 1.2,
            h_max: 1e-6,
        };
        let keys = [
            AxisKey { at: 0.0, refine: false },
            AxisKey { at: 5e-6, refine: true },
            AxisKey { at: 9.5e-6, refine: true },
            AxisKey { at: 100e-6, refine: false },
        ];
        let xs = graded_axis(&keys, &g).unwrap();
        for k in &keys {
            assert!(xs.contains(&k.at));
        }
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let at = xs.iter().position(|&x| x == 5e-6).unwrap();
        assert!(xs[at + 1] - xs[at] < 2e-9);
        assert!(xs[at] - xs[at - 1] < 2e-9);
        let max = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max <= 1.01e-6);
    }

    #[test]
    fn degenerate_interval() {
        let g = Grading::for_level(1, 1e-5);
        let keys = [AxisKey { at: 1.0, refine: false }, AxisKey { at: 1.0, refine: true }];
        assert!(graded_axis(&keys, &g).is_err());
    }

    #[test]
    fn zero_gap_fails() {
        let stack = CpwStack {
            gap: crate::geometry::Length(0.0),
            ..CpwStack::default()
        };
        assert!(matches!(build_mesh(&stack, 1), Err(Error::Mesh(_))));
    }

    #[test]
    fn default_mesh_size_and_grading() {
        let stack = CpwStack::default();
        let m1 = build_mesh(&stack, 1).unwrap();
        assert!(m1.cell_count() >= 10_000, "{} cells", m1.cell_count());
        assert!(m1.min_spacing() <= stack.trace_width.0 / 50.0);
        let m2 = build_mesh(&stack, 2).unwrap();
        let corner = (0.5 * stack.trace_width.0, 0.0);
        let r = stack.gap.0 / 4.0;
        assert!(m2.cells_near(corner, r) >= 2 * m1.cells_near(corner, r));
        // interface contours present
        for region in [RegionId::MetalAirTop, RegionId::MetalAirSide, RegionId::SubstrateAir, RegionId::MetalSubstrate] {
            assert!(m1.segments.iter().any(|s| s.region == region), "{region:?}");
        }
    }

    #[test]
    fn trench_creates_wall_segments() {
        let stack = CpwStack {
            trench_depth: crate::geometry::Length::nm(200.0),
            ..CpwStack::default()
        };
        let m = build_mesh(&stack, 1).unwrap();
        let sa: f64 = m
            .segments
            .iter()
            .filter(|s| s.region == RegionId::SubstrateAir)
            .map(|s| s.length())
            .sum();
        // gap floor plus two walls
        assert!((sa - (stack.gap.0 + 2.0 * 200e-9)).abs() < 1e-12, "{sa}");
    }
}
