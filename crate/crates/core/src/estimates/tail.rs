//! Parabolic tails
//!
//! ```text
//! tail(v; x0, r, t1 - T1, t1)^(p-1)
//!     = r^sp / T1  int_{t1-T1}^{t1} int_{|x - x0| >= r} |v|^(p-1) / |x - x0|^(n+sp) dx dt
//! tail_inf(v; ...)^(p-1)
//!     = r^sp  sup_t  int_{|x - x0| >= r} |v|^(p-1) / |x - x0|^(n+sp) dx
//! ```

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{distance, Cylinder, Mesh};
use crate::operator::PowerLaw;
use crate::solver::Trajectory;

/// `int_{|y - c| > r} |x - y|^-(n + sp) dy` for `|x - c| = a < r`.
///
/// In polar coordinates about `x` the ray in direction `theta` leaves the
/// ball at `rho(theta) = -a cos(theta) + sqrt(r^2 - a^2 sin^2(theta))`, so
/// the integral is `(1/sp) int rho^-sp` over the unit sphere: two points for
/// `n = 1`, a periodic trapezoid rule for `n = 2`.
pub fn ball_complement_mass(dim: usize, sp: f64, a: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) || !(0.0..r).contains(&a) {
        return Err(invalid("a", format!("need 0 <= a < r, got a = {a}, r = {r}")));
    }
    if !(sp > 0.0) {
        return Err(invalid("sp", "must be positive"));
    }
    match dim {
        1 => Ok(((r - a).powf(-sp) + (r + a).powf(-sp)) / sp),
        2 => {
            let rho = |th: f64| -a * th.cos() + (r * r - (a * th.sin()).powi(2)).sqrt();
            let rule = |k: usize| {
                let step = 2.0 * PI / k as f64;
                step * (0..k).map(|j| rho(j as f64 * step).powf(-sp)).sum::<f64>()
            };
            let mut k = 64;
            let mut prev = rule(k);
            while k < 1 << 20 {
                k *= 2;
                let cur = rule(k);
                if (cur - prev).abs() <= 1e-14 * cur {
                    return Ok(cur / sp);
                }
                prev = cur;
            }
            Ok(prev / sp)
        }
        _ => Err(invalid("dim", format!("must be 1 or 2, got {dim}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TailVariant {
    Average,
    Supremum,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEstimate {
    pub variant: TailVariant,
    pub cylinder: Cylinder,
    /// Discrete tail over the meshed nodes.
    pub value: f64,
    /// `value^(p-1)`.
    pub raw: f64,
    /// Contribution of everything beyond the meshed band, bounded with
    /// `|v| <= exterior_max` there; in the units of `raw`.
    pub raw_remainder: f64,
    /// `total - value`.
    pub remainder: f64,
    /// `(raw + raw_remainder)^(1/(p-1))`, an upper bound certificate.
    pub total: f64,
    pub exterior_max: f64,
}

/// `sum_{|x_j - x0| >= r} |v_j|^(p-1) |x_j - x0|^-(n+sp) m_j`.
fn exterior_sum(mesh: &Mesh, values: &[f64], x0: &[f64; 2], r: f64, sp: f64, law: &PowerLaw) -> f64 {
    let n = mesh.dim() as f64;
    mesh.coords()
        .iter()
        .zip(values)
        .zip(mesh.measures())
        .filter_map(|((x, v), m)| {
            let rho = distance(x, x0);
            (rho >= r && *v != 0.0).then(|| law.abs_pow(*v) / v.abs() * rho.powf(-(n + sp)) * m)
        })
        .sum()
}

pub fn tail(
    traj: &Trajectory,
    mesh: &Mesh,
    s: f64,
    p: f64,
    q: &Cylinder,
    variant: TailVariant,
) -> Result<TailEstimate> {
    let law = PowerLaw::new(p)?;
    if !mesh.mesh_contains_ball(&q.center, q.radius) {
        return Err(Error::Coverage(format!(
            "ball of radius {} exceeds the meshed region",
            q.radius
        )));
    }
    let (a, b) = (q.t_start(), q.t_end);
    if !traj.covers(a, b) {
        return Err(Error::Coverage(format!("time window ({a}, {b}) not covered by the trajectory")));
    }
    let weights = traj.window_weights(a, b);
    if weights.is_empty() {
        return Err(Error::Empty("time window"));
    }
    let sp = s * p;
    let r = q.radius;
    let n0 = mesh.interior_count();
    let scale = r.powf(sp);
    let sums: Vec<f64> = weights
        .iter()
        .map(|&(k, _)| exterior_sum(mesh, &traj.fields[k].values, &q.center, r, sp, &law))
        .collect();
    let raw = match variant {
        TailVariant::Average => {
            scale / q.duration * weights.iter().zip(&sums).map(|((_, w), s)| w * s).sum::<f64>()
        }
        TailVariant::Supremum => scale * sums.iter().cloned().fold(0.0, f64::max),
    };
    let exterior_max = weights
        .iter()
        .flat_map(|&(k, _)| traj.fields[k].values[n0..].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let raw_remainder = if exterior_max > 0.0 {
        let far = ball_complement_mass(
            mesh.dim(),
            sp,
            distance(&q.center, &mesh.center()),
            mesh.covered_radius(),
        )?;
        scale * exterior_max.powf(p - 1.0) * far
    } else {
        0.0
    };
    let value = raw.powf(1.0 / (p - 1.0));
    let total = (raw + raw_remainder).powf(1.0 / (p - 1.0));
    Ok(TailEstimate {
        variant,
        cylinder: *q,
        value,
        raw,
        raw_remainder,
        remainder: total - value,
        total,
        exterior_max,
    })
}

/// `d = tail_inf(u_+; x0, sigma r, t0 - T0, t0) + (r^sp / T0)^(1/(p-2))`.
pub fn offset_d(traj: &Trajectory, mesh: &Mesh, q: &Cylinder, sigma: f64, s: f64, p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(invalid("p", format!("offset needs p > 2, got {p}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(invalid("sigma", format!("must lie in (0, 1), got {sigma}")));
    }
    let plus = traj.map(crate::operator::positive_part);
    let inner = Cylinder::new(q.center, sigma * q.radius, q.t_end, q.duration)?;
    let t = tail(&plus, mesh, s, p, &inner, TailVariant::Supremum)?;
    Ok(t.value + (q.radius.powf(s * p) / q.duration).powf(1.0 / (p - 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_mesh;
    use crate::operator::Field;

    fn constant_traj(mesh: &Mesh, c: f64, times: &[f64]) -> Trajectory {
        Trajectory {
            fields: times.iter().map(|&t| Field::constant(mesh, c, t)).collect(),
            stats: Vec::new(),
        }
    }

    #[test]
    fn complement_mass_closed_forms() {
        let m = ball_complement_mass(1, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(m, 2.0);
        let m = ball_complement_mass(2, 0.5, 0.0, 2.0).unwrap();
        assert!((m - 2.0 * PI * 2f64.powf(-0.5) / 0.5).abs() < 1e-13 * m);
        assert!(ball_complement_mass(2, 0.5, 2.0, 2.0).is_err());
        // Grows as the point approaches the sphere.
        let near = ball_complement_mass(2, 1.0, 0.9, 1.0).unwrap();
        let far = ball_complement_mass(2, 1.0, 0.5, 1.0).unwrap();
        assert!(near > far);
    }

    #[test]
    fn complement_mass_matches_brute_force_in_2d() {
        // Annulus sum on a fine polar grid around the off-centre point.
        let (sp, a, r) = (1.2, 0.4, 1.0);
        let exact = ball_complement_mass(2, sp, a, r).unwrap();
        let mut brute = 0.0;
        let nt = 4000;
        for j in 0..nt {
            let th = (j as f64 + 0.5) * 2.0 * PI / nt as f64;
            let rho = -a * th.cos() + (r * r - (a * th.sin()).powi(2)).sqrt();
            brute += rho.powf(-sp) / sp * 2.0 * PI / nt as f64;
        }
        assert!((exact - brute).abs() < 1e-8 * exact);
    }

    #[test]
    fn zero_and_compactly_supported_data() {
        let mesh = build_mesh(1, &[(-1.0, 1.0)], 0.05, 3.0).unwrap();
        let q = Cylinder::new([0.0, 0.0], 0.5, 0.1, 0.1).unwrap();
        let z = constant_traj(&mesh, 0.0, &[0.0, 0.05, 0.1]);
        for v in [TailVariant::Average, TailVariant::Supremum] {
            let t = tail(&z, &mesh, 0.5, 3.0, &q, v).unwrap();
            assert_eq!((t.value, t.remainder), (0.0, 0.0));
        }
        let inside = z.map(|f| {
            let vals = mesh.coords().iter().map(|x| if x[0].abs() < 0.4 { 1.0 } else { 0.0 }).collect();
            Field::new(vals, f.time)
        });
        assert_eq!(tail(&inside, &mesh, 0.5, 3.0, &q, TailVariant::Average).unwrap().value, 0.0);
    }

    #[test]
    fn coverage_errors() {
        let mesh = build_mesh(1, &[(-1.0, 1.0)], 0.1, 2.0).unwrap();
        let z = constant_traj(&mesh, 1.0, &[0.0, 0.1]);
        let big = Cylinder::new([0.0, 0.0], 2.5, 0.1, 0.1).unwrap();
        assert!(matches!(tail(&z, &mesh, 0.5, 2.0, &big, TailVariant::Average), Err(Error::Coverage(_))));
        let late = Cylinder::new([0.0, 0.0], 0.5, 0.3, 0.1).unwrap();
        assert!(tail(&z, &mesh, 0.5, 2.0, &late, TailVariant::Average).is_err());
    }

    #[test]
    fn offset_examples() {
        let mesh = build_mesh(1, &[(-2.0, 2.0)], 0.1, 4.0).unwrap();
        let z = constant_traj(&mesh, 0.0, &[0.0, 1.0, 2.0]);
        // r^sp = T0
        let q = Cylinder::new([0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
        assert_eq!(offset_d(&z, &mesh, &q, 0.5, 0.5, 3.0).unwrap(), 1.0);
        let q = Cylinder::new([0.0, 0.0], 1.0, 2.0, 2.0).unwrap();
        let d = offset_d(&z, &mesh, &q, 0.5, 0.5, 4.0).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(offset_d(&z, &mesh, &q, 0.5, 0.5, 2.0).is_err());
    }
}
