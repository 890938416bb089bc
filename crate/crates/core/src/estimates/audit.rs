//! Finiteness audit for the quantities that control `tail_inf` on the
//! whole problem: the weighted exterior data integral
//!
//! ```text
//! sup_t int |g|^(p-1) / (1 + |x - x0|^(n+sp)) dx,
//! ```
//!
//! its growth as the exterior band is doubled, the interior `L^p` mass
//! `sup_t int_Omega |u|^p`, and the localized `sup_t int_{B_{r/2}} |u|^p psi^p`.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::{build_cutoff, build_mesh, distance, Mesh, Point};
use crate::kernel::Kernel;
use crate::solver::{ProblemSpec, Trajectory};

/// Relative change under the last band doubling above which the exterior
/// integral is flagged as not converging.
pub const GROWTH_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub x0: Point,
    /// Band radii `R, 2R, 4R`.
    pub radii: Vec<f64>,
    /// Exterior data integral at each radius.
    pub exterior_integral: Vec<f64>,
    /// `|I(4R) - I(2R)| / I(2R)`.
    pub relative_growth: f64,
    pub flagged: bool,
    /// `sup_t sum_{interior} |u|^p m`.
    pub interior_mass: f64,
    /// `sup_t sum_{B_{r/2}} |u|^p psi^p m`.
    pub local_mass: f64,
    pub all_finite: bool,
}

fn exterior_integral(mesh: &Mesh, spec: &ProblemSpec, times: &[f64], x0: &Point) -> f64 {
    let (p, sp) = (spec.p(), spec.kernel.s() * spec.p());
    let n = mesh.dim() as f64;
    let n0 = mesh.interior_count();
    let x = &mesh.coords()[n0..];
    let m = &mesh.measures()[n0..];
    times
        .iter()
        .map(|&t| {
            x.iter()
                .zip(m)
                .map(|(y, w)| {
                    let g = spec.exterior.eval(y, t).abs();
                    g.powf(p - 1.0) / (1.0 + distance(y, x0).powf(n + sp)) * w
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn tail_finiteness_audit(traj: &Trajectory, spec: &ProblemSpec) -> Result<AuditReport> {
    let mesh = &spec.mesh;
    let x0 = mesh.center();
    let times = traj.times();
    let p = spec.p();

    let radii: Vec<f64> = (0..3).map(|k| mesh.r_ext() * f64::from(1 << k)).collect();
    let mut exterior = Vec::with_capacity(3);
    for (k, &r) in radii.iter().enumerate() {
        let value = if k == 0 {
            exterior_integral(mesh, spec, &times, &x0)
        } else {
            let bigger = build_mesh(mesh.dim(), mesh.extents(), mesh.h(), r)?;
            exterior_integral(&bigger, spec, &times, &x0)
        };
        exterior.push(value);
    }
    let relative_growth = if exterior[1] > 0.0 {
        (exterior[2] - exterior[1]).abs() / exterior[1]
    } else {
        0.0
    };

    let n0 = mesh.interior_count();
    let m = mesh.measures();
    let interior_mass = traj
        .fields
        .iter()
        .map(|f| (0..n0).map(|i| f.values[i].abs().powf(p) * m[i]).sum::<f64>())
        .fold(0.0, f64::max);

    let inradius = mesh
        .extents()
        .iter()
        .map(|(a, b)| 0.5 * (b - a))
        .fold(f64::INFINITY, f64::min);
    let r = 0.5 * inradius;
    let cut = build_cutoff(0.25 * r, 0.5 * r, 0.0, 1.0, x0)?;
    let local = mesh.ball(&x0, 0.5 * r);
    let local_mass = traj
        .fields
        .iter()
        .map(|f| {
            local
                .iter()
                .map(|&i| (f.values[i].abs() * cut.psi(&mesh.coords()[i])).powf(p) * m[i])
                .sum::<f64>()
        })
        .fold(0.0, f64::max);

    let all_finite = exterior.iter().all(|v| v.is_finite()) && interior_mass.is_finite() && local_mass.is_finite();
    Ok(AuditReport {
        x0,
        radii,
        exterior_integral: exterior,
        relative_growth,
        flagged: relative_growth > GROWTH_THRESHOLD,
        interior_mass,
        local_mass,
        all_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::solver::{solve, StepConfig};

    fn run(ext: &str, init: &str, r_ext: f64) -> AuditReport {
        let mesh = build_mesh(1, &[(-1.0, 1.0)], 0.1, r_ext).unwrap();
        let kernel = KernelSpec::canonical_kernel(0.5, 3.0).unwrap();
        let spec = ProblemSpec::new(mesh, kernel, ext.parse().unwrap(), init.parse().unwrap(), 0.04, 0.02).unwrap();
        let traj = solve(&spec, &StepConfig::default()).unwrap();
        tail_finiteness_audit(&traj, &spec).unwrap()
    }

    #[test]
    fn zero_data_audit() {
        let r = run("zero", "zero", 4.0);
        assert!(r.exterior_integral.iter().all(|&v| v == 0.0));
        assert_eq!((r.interior_mass, r.local_mass), (0.0, 0.0));
        assert!(!r.flagged);
    }

    #[test]
    fn bounded_data_stabilizes_and_growth_is_flagged() {
        let bounded = run("const(1)", "zero", 16.0);
        assert!(!bounded.flagged, "{bounded:?}");
        // |g|^(p-1) ~ |x|^sp makes the integrand ~ 1/|x|.
        let growing = run("power(1, 0.75)", "zero", 4.0);
        assert!(growing.flagged, "{growing:?}");
        let d1 = growing.exterior_integral[1] - growing.exterior_integral[0];
        let d2 = growing.exterior_integral[2] - growing.exterior_integral[1];
        // Logarithmic growth: equal increments per doubling, 2 ln 2 in 1-D.
        assert!((d2 / d1 - 1.0).abs() < 0.1, "{d1} {d2}");
        assert!((d2 - 2.0 * 2f64.ln()).abs() < 0.1 * d2);
    }
}
