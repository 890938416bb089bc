//! Cell-centered meshes of a box domain plus a truncated exterior band,
//! balls, parabolic cylinders and space-time cutoff functions.
//!
//! Nodes are stored interior-first: indices `0..interior_count()` lie in the
//! domain, the remaining ones in the exterior band.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Coordinates of a node. One-dimensional meshes leave the second slot at 0.
pub type Point = [f64; 2];

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct Mesh {
    dim: usize,
    h: f64,
    extents: Vec<(f64, f64)>,
    r_ext: f64,
    center: Point,
    coords: Vec<Point>,
    measures: Vec<f64>,
    n_interior: usize,
}

/// Discretizes the box `extents` with cell-centered spacing `h` and surrounds
/// it by exterior cells whose centers lie within `r_ext` of the box center.
pub fn build_mesh(dim: usize, extents: &[(f64, f64)], h: f64, r_ext: f64) -> Result<Mesh> {
    if dim != 1 && dim != 2 {
        return Err(invalid("n", format!("dimension must be 1 or 2, got {dim}")));
    }
    if extents.len() != dim {
        return Err(invalid(
            "extents",
            format!("expected {dim} intervals, got {}", extents.len()),
        ));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", format!("spacing must be positive, got {h}")));
    }
    let mut counts = [1usize; 2];
    let mut center = [0.0; 2];
    let mut half_diag_sq = 0.0;
    for (axis, &(lo, hi)) in extents.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("extents", format!("empty interval ({lo}, {hi})")));
        }
        let len = hi - lo;
        let cells = (len / h).round();
        if cells < 1.0 || (cells * h - len).abs() > 1e-9 * len {
            return Err(invalid(
                "h",
                format!("spacing {h} does not divide the extent {len}"),
            ));
        }
        counts[axis] = cells as usize;
        center[axis] = 0.5 * (lo + hi);
        half_diag_sq += 0.25 * len * len;
    }
    let radius = half_diag_sq.sqrt();
    if !(r_ext >= radius * (1.0 - 1e-12)) || !r_ext.is_finite() {
        return Err(invalid(
            "r_ext",
            format!("exterior radius {r_ext} is smaller than the domain radius {radius}"),
        ));
    }

    // Number of extra cells per side needed to reach r_ext from each face.
    let mut pad = [0i64; 2];
    for (axis, &(lo, hi)) in extents.iter().enumerate() {
        let half = 0.5 * (hi - lo);
        pad[axis] = (((r_ext - half) / h) - 1e-9).ceil().max(0.0) as i64;
    }

    let axis_range = |axis: usize| -> std::ops::Range<i64> {
        if axis < dim {
            -pad[axis]..counts[axis] as i64 + pad[axis]
        } else {
            0..1
        }
    };
    let coord = |axis: usize, i: i64| -> f64 {
        if axis < dim {
            extents[axis].0 + (i as f64 + 0.5) * h
        } else {
            0.0
        }
    };

    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    for j in axis_range(1) {
        for i in axis_range(0) {
            let p = [coord(0, i), coord(1, j)];
            let inside = (0..counts[0] as i64).contains(&i)
                && (dim == 1 || (0..counts[1] as i64).contains(&j));
            if inside {
                interior.push(p);
            } else if distance(&p, &center) < r_ext {
                exterior.push(p);
            }
        }
    }
    let n_interior = interior.len();
    let mut coords = interior;
    coords.extend(exterior);
    let cell = h.powi(dim as i32);
    let measures = vec![cell; coords.len()];
    Ok(Mesh {
        dim,
        h,
        extents: extents.to_vec(),
        r_ext,
        center,
        coords,
        measures,
        n_interior,
    })
}

impl Mesh {
    /// Builds a mesh from explicit nodes. Interior nodes are moved to the
    /// front, preserving relative order.
    pub fn from_nodes(
        dim: usize,
        coords: Vec<Point>,
        measures: Vec<f64>,
        interior: Vec<bool>,
        h: f64,
    ) -> Result<Mesh> {
        if dim != 1 && dim != 2 {
            return Err(invalid("n", format!("dimension must be 1 or 2, got {dim}")));
        }
        if coords.len() != measures.len() || coords.len() != interior.len() {
            return Err(invalid("nodes", "coordinate, measure and mask lengths differ"));
        }
        if coords.is_empty() {
            return Err(Error::Empty("node set"));
        }
        if measures.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(invalid("measures", "cell measures must be positive"));
        }
        let mut order: Vec<usize> = (0..coords.len()).filter(|&i| interior[i]).collect();
        let n_interior = order.len();
        order.extend((0..coords.len()).filter(|&i| !interior[i]));

        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &i in &order[..n_interior] {
            for a in 0..dim {
                lo[a] = lo[a].min(coords[i][a] - 0.5 * h);
                hi[a] = hi[a].max(coords[i][a] + 0.5 * h);
            }
        }
        let extents: Vec<(f64, f64)> = if n_interior > 0 {
            (0..dim).map(|a| (lo[a], hi[a])).collect()
        } else {
            vec![(0.0, 0.0); dim]
        };
        let center = [
            0.5 * (extents[0].0 + extents[0].1),
            if dim == 2 { 0.5 * (extents[1].0 + extents[1].1) } else { 0.0 },
        ];
        let r_ext = order
            .iter()
            .map(|&i| distance(&coords[i], &center) + 0.5 * h * (dim as f64).sqrt())
            .fold(0.0, f64::max);
        Ok(Mesh {
            dim,
            h,
            extents,
            r_ext,
            center,
            coords: order.iter().map(|&i| coords[i]).collect(),
            measures: order.iter().map(|&i| measures[i]).collect(),
            n_interior,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn r_ext(&self) -> f64 {
        self.r_ext
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn interior_count(&self) -> usize {
        self.n_interior
    }

    pub fn is_interior(&self, i: usize) -> bool {
        i < self.n_interior
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn volume(&self) -> f64 {
        self.measures.iter().sum()
    }

    /// Half-diagonal of the domain box.
    pub fn domain_radius(&self) -> f64 {
        self.extents
            .iter()
            .map(|(lo, hi)| 0.25 * (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Radius of a ball around the box center fully covered by mesh cells.
    pub fn covered_radius(&self) -> f64 {
        self.r_ext - 0.5 * self.h * (self.dim as f64).sqrt()
    }

    /// Indices of nodes with `|x - center| < r`.
    pub fn ball(&self, center: &Point, r: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| distance(&self.coords[i], center) < r)
            .collect()
    }

    /// Whether the closed ball lies inside the domain box.
    pub fn domain_contains_ball(&self, center: &Point, r: f64) -> bool {
        self.extents
            .iter()
            .enumerate()
            .all(|(a, &(lo, hi))| center[a] - r >= lo - 1e-12 && center[a] + r <= hi + 1e-12)
    }

    /// Whether the ball lies inside the meshed region.
    pub fn mesh_contains_ball(&self, center: &Point, r: f64) -> bool {
        distance(center, &self.center) + r <= self.r_ext + 1e-12
    }

    /// Checks the structural invariants: positive measures summing to the
    /// meshed volume and an exterior band enclosing the domain.
    pub fn check_invariants(&self) -> bool {
        if self.measures.iter().any(|&m| !(m > 0.0)) {
            return false;
        }
        let cell = self.h.powi(self.dim as i32);
        let expected = cell * self.len() as f64;
        if (self.volume() - expected).abs() > 1e-12 * expected {
            return false;
        }
        // Every interior node sees at least r_ext - radius - h of exterior.
        let slack = self.r_ext - self.domain_radius() - self.h;
        self.coords[..self.n_interior]
            .iter()
            .all(|x| self.r_ext - distance(x, &self.center) >= slack)
    }
}

/// Parabolic cylinder `B_r(x0) x (t_end - duration, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cylinder {
    pub center: Point,
    pub radius: f64,
    pub t_end: f64,
    pub duration: f64,
}

impl Cylinder {
    pub fn new(center: Point, radius: f64, t_end: f64, duration: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        if !(duration > 0.0) {
            return Err(invalid("duration", format!("must be positive, got {duration}")));
        }
        Ok(Cylinder {
            center,
            radius,
            t_end,
            duration,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_end - self.duration
    }

    /// `lambda Q`: radius scaled by `lambda`, duration by `lambda^(sp)`.
    pub fn scale(&self, lambda: f64, s: f64, p: f64) -> Result<Cylinder> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Cylinder {
            center: self.center,
            radius: lambda * self.radius,
            t_end: self.t_end,
            duration: lambda.powf(s * p) * self.duration,
        })
    }
}

/// Free function form of [`Cylinder::scale`].
pub fn scale_cylinder(q: &Cylinder, lambda: f64, s: f64, p: f64) -> Result<Cylinder> {
    q.scale(lambda, s, p)
}

/// Max of `|d/dtau (3 tau^2 - 2 tau^3)|` on `[0, 1]`.
pub const CUTOFF_SHAPE_CONSTANT: f64 = 1.5;

#[inline]
fn smoothstep(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[inline]
fn smoothstep_slope(tau: f64) -> f64 {
    if (0.0..=1.0).contains(&tau) {
        6.0 * tau * (1.0 - tau)
    } else {
        0.0
    }
}

/// Product cutoff `phi(x, t) = psi(x) zeta(t)` built from C^1 cubic ramps:
/// `psi` is 1 on `B_{r_in}` and 0 outside `B_{r_out}`, `zeta` is 0 before
/// `t_out` and 1 after `t_in`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSpec {
    pub center: Point,
    pub r_in: f64,
    pub r_out: f64,
    pub t_out: f64,
    pub t_in: f64,
}

pub fn build_cutoff(r_in: f64, r_out: f64, t_out: f64, t_in: f64, center: Point) -> Result<CutoffSpec> {
    if !(r_in > 0.0 && r_in < r_out) {
        return Err(invalid(
            "r_in",
            format!("need 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"),
        ));
    }
    if !(t_out < t_in) {
        return Err(invalid(
            "t_in",
            format!("need t_out < t_in, got t_out = {t_out}, t_in = {t_in}"),
        ));
    }
    Ok(CutoffSpec {
        center,
        r_in,
        r_out,
        t_out,
        t_in,
    })
}

impl CutoffSpec {
    pub fn psi(&self, x: &Point) -> f64 {
        let rho = distance(x, &self.center);
        1.0 - smoothstep((rho - self.r_in) / (self.r_out - self.r_in))
    }

    pub fn zeta(&self, t: f64) -> f64 {
        smoothstep((t - self.t_out) / (self.t_in - self.t_out))
    }

    pub fn phi(&self, x: &Point, t: f64) -> f64 {
        self.psi(x) * self.zeta(t)
    }

    pub fn grad_psi_norm(&self, x: &Point) -> f64 {
        let w = self.r_out - self.r_in;
        smoothstep_slope((distance(x, &self.center) - self.r_in) / w) / w
    }

    pub fn dzeta(&self, t: f64) -> f64 {
        let w = self.t_in - self.t_out;
        smoothstep_slope((t - self.t_out) / w) / w
    }

    /// `d/dt phi^p = p psi^p zeta^(p-1) zeta'`, nonnegative since zeta increases.
    pub fn dt_phi_pow(&self, x: &Point, t: f64, p: f64) -> f64 {
        let z = self.zeta(t);
        if z <= 0.0 {
            return 0.0;
        }
        p * self.psi(x).powf(p) * z.powf(p - 1.0) * self.dzeta(t)
    }

    /// Whether the spatial support lies strictly inside `B_r(center)`.
    pub fn support_within(&self, center: &Point, r: f64) -> bool {
        distance(&self.center, center) + self.r_out <= r + 1e-12
    }

    /// Checks `0 <= phi <= 1` and the gradient / time-derivative bounds at
    /// every mesh node and every given time.
    pub fn check_bounds(&self, mesh: &Mesh, times: &[f64]) -> bool {
        let gmax = CUTOFF_SHAPE_CONSTANT / (self.r_out - self.r_in);
        let tmax = CUTOFF_SHAPE_CONSTANT / (self.t_in - self.t_out);
        let tol = 1e-12;
        mesh.coords().iter().all(|x| {
            self.grad_psi_norm(x) <= gmax * (1.0 + tol)
                && times.iter().all(|&t| {
                    let v = self.phi(x, t);
                    (0.0..=1.0).contains(&v) && self.dzeta(t) <= tmax * (1.0 + tol)
                })
        })
    }
}
