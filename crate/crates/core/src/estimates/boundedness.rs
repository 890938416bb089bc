//! Empirical constant of the local sup bound
//!
//! ```text
//! sup_{sigma Q} u <= C (1 - sigma)^-alpha [ (R^sp / T0)^(1/(p-2))
//!                    + (T0 / R^sp) tail_inf^(p-1)(u_+; x0, rho, t0 - T0, t0)
//!                    + (T0 / R^sp) (sup_t avg_{B_R} u)^(p-1) ]
//! ```
//!
//! for `Q = B_R(x0) x (t0 - T0, t0)`. The tail radius `rho` is reported for
//! both `sigma R` and `R`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::Cylinder;
use crate::kernel::Kernel;
use crate::operator::{negative_part, positive_part};
use crate::solver::{ProblemSpec, Trajectory};

use super::tail::{tail, TailVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundednessMode {
    NonnegSubsolution,
    UnsignedSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremTerms {
    /// `sup_{sigma Q}` of the checked function.
    pub lhs: f64,
    /// `(R^sp / T0)^(1/(p-2))`.
    pub scale_term: f64,
    /// `(T0 / R^sp) tail_inf^(p-1)` with tail radius `sigma R`.
    pub tail_term: f64,
    /// Same with tail radius `R`.
    pub tail_term_full_radius: f64,
    /// `(T0 / R^sp) (sup_t avg_{B_R} u)^(p-1)`.
    pub average_term: f64,
    pub alpha: f64,
    /// `(1 - sigma)^-alpha`.
    pub prefactor: f64,
    pub rhs: f64,
    pub rhs_full_radius: f64,
    /// `lhs / rhs`.
    pub c_emp: f64,
    pub c_emp_full_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub mode: BoundednessMode,
    pub cylinder: Cylinder,
    pub sigma: f64,
    pub terms: TheoremTerms,
    /// Unsigned mode: the checks on `u_+` and `u_-` (in that order).
    pub parts: Vec<TheoremTerms>,
}

fn validate(spec: &ProblemSpec, traj: &Trajectory, q: &Cylinder, sigma: f64) -> Result<()> {
    let p = spec.p();
    if !(p > 2.0) {
        return Err(invalid("p", format!("sup bound needs p > 2, got {p}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(invalid("sigma", format!("must lie in (0, 1), got {sigma}")));
    }
    let double = q.scale(2.0, spec.kernel.s(), p)?;
    if !spec.mesh.domain_contains_ball(&double.center, double.radius) {
        return Err(Error::Coverage("2Q leaves the domain".into()));
    }
    if !traj.covers(double.t_start(), double.t_end) {
        return Err(Error::Coverage("2Q is not covered by the trajectory".into()));
    }
    Ok(())
}

/// Theorem terms for a nonnegative trajectory `w`, with the tail taken from
/// `tail_source`.
pub fn theorem_terms(
    w: &Trajectory,
    tail_source: &Trajectory,
    spec: &ProblemSpec,
    q: &Cylinder,
    sigma: f64,
) -> Result<TheoremTerms> {
    validate(spec, w, q, sigma)?;
    let mesh = &spec.mesh;
    let (s, p) = (spec.kernel.s(), spec.p());
    let sp = s * p;
    let n = mesh.dim() as f64;
    let (r, t0, big_t) = (q.radius, q.t_end, q.duration);

    let inner = q.scale(sigma, s, p)?;
    let inner_nodes = mesh.ball(&q.center, inner.radius);
    if inner_nodes.is_empty() {
        return Err(Error::Empty("sigma ball"));
    }
    let lhs = w
        .fields
        .iter()
        .filter(|f| f.time > inner.t_start() && f.time <= t0)
        .flat_map(|f| inner_nodes.iter().map(move |&i| f.values[i]))
        .fold(0.0f64, f64::max);

    let ball = mesh.ball(&q.center, r);
    let vol: f64 = ball.iter().map(|&i| mesh.measures()[i]).sum();
    let sup_avg = w
        .fields
        .iter()
        .filter(|f| f.time > q.t_start() && f.time <= t0)
        .map(|f| ball.iter().map(|&i| f.values[i] * mesh.measures()[i]).sum::<f64>() / vol)
        .fold(0.0f64, f64::max);

    let tail_at = |rho: f64| -> Result<f64> {
        let c = Cylinder::new(q.center, rho, t0, big_t)?;
        Ok(tail(tail_source, mesh, s, p, &c, TailVariant::Supremum)?.raw)
    };
    let ratio = big_t / r.powf(sp);
    let scale_term = (1.0 / ratio).powf(1.0 / (p - 2.0));
    let tail_term = ratio * tail_at(sigma * r)?;
    let tail_term_full_radius = ratio * tail_at(r)?;
    let average_term = ratio * sup_avg.powf(p - 1.0);
    let alpha = (n + sp) * (n + sp + s * n) / sp;
    let prefactor = (1.0 - sigma).powf(-alpha);
    let rhs = prefactor * (scale_term + tail_term + average_term);
    let rhs_full_radius = prefactor * (scale_term + tail_term_full_radius + average_term);
    Ok(TheoremTerms {
        lhs,
        scale_term,
        tail_term,
        tail_term_full_radius,
        average_term,
        alpha,
        prefactor,
        rhs,
        rhs_full_radius,
        c_emp: lhs / rhs,
        c_emp_full_radius: lhs / rhs_full_radius,
    })
}

/// In nonnegative mode the check runs on `u_+`. In unsigned mode it runs
/// on `u_+` and `u_-` with the tail of `|u|`, and reports the larger
/// values of the two.
pub fn boundedness_check(
    traj: &Trajectory,
    spec: &ProblemSpec,
    q: &Cylinder,
    sigma: f64,
    mode: BoundednessMode,
) -> Result<BoundednessReport> {
    let plus = traj.map(positive_part);
    let (terms, parts) = match mode {
        BoundednessMode::NonnegSubsolution => (theorem_terms(&plus, &plus, spec, q, sigma)?, Vec::new()),
        BoundednessMode::UnsignedSolution => {
            let abs = traj.map(|f| f.map(f64::abs));
            let minus = traj.map(negative_part);
            let a = theorem_terms(&plus, &abs, spec, q, sigma)?;
            let b = theorem_terms(&minus, &abs, spec, q, sigma)?;
            let mx = |f: fn(&TheoremTerms) -> f64| f(&a).max(f(&b));
            let combined = TheoremTerms {
                lhs: mx(|t| t.lhs),
                scale_term: a.scale_term,
                tail_term: a.tail_term,
                tail_term_full_radius: a.tail_term_full_radius,
                average_term: mx(|t| t.average_term),
                alpha: a.alpha,
                prefactor: a.prefactor,
                rhs: mx(|t| t.rhs),
                rhs_full_radius: mx(|t| t.rhs_full_radius),
                c_emp: mx(|t| t.c_emp),
                c_emp_full_radius: mx(|t| t.c_emp_full_radius),
            };
            (combined, vec![a, b])
        }
    };
    Ok(BoundednessReport {
        mode,
        cylinder: *q,
        sigma,
        terms,
        parts,
    })
}
