//! Backward Euler for `du/dt + Lu = 0` in the interior with prescribed
//! exterior values. Each step minimizes the strictly convex functional
//!
//! ```text
//! F(x) = sum_i m_i (x_i - u_i)^2 / (2 dt) + E(x + g) / 2
//! ```
//!
//! over interior values `x`; its critical points are exactly the solutions of
//! `(x_i - u_i) / dt + (L(x + g))_i = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::ScalarFn;
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_cutoff, Cylinder, Mesh};
use crate::kernel::{Kernel, KernelSpec};
use crate::operator::{apply_l, Field, OperatorApplyPlan, PowerLaw};

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub mesh: Mesh,
    pub kernel: KernelSpec,
    /// Exterior data `g(x, t)`.
    pub exterior: ScalarFn,
    /// Initial data `u0(x)` on the interior.
    pub initial: ScalarFn,
    pub horizon: f64,
    pub dt: f64,
}

impl ProblemSpec {
    pub fn new(
        mesh: Mesh,
        kernel: KernelSpec,
        exterior: ScalarFn,
        initial: ScalarFn,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let spec = ProblemSpec {
            mesh,
            kernel,
            exterior,
            initial,
            horizon,
            dt,
        };
        if !spec.initial_field().is_finite() {
            return Err(invalid("initial", "initial or exterior data not finite on the mesh"));
        }
        Ok(spec)
    }

    pub fn p(&self) -> f64 {
        self.kernel.p()
    }

    /// Number of steps, `ceil(T / dt)` up to round-off in the quotient.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Snapshot times `0, dt, 2 dt, ..., T`.
    pub fn times(&self) -> Vec<f64> {
        let k = self.steps();
        (0..=k)
            .map(|j| if j == k { self.horizon } else { j as f64 * self.dt })
            .collect()
    }

    pub fn exterior_values(&self, t: f64) -> Vec<f64> {
        let n0 = self.mesh.interior_count();
        self.mesh.coords()[n0..]
            .iter()
            .map(|x| self.exterior.eval(x, t))
            .collect()
    }

    /// `u0` on the interior joined with `g(0)` on the exterior.
    pub fn initial_field(&self) -> Field {
        let n0 = self.mesh.interior_count();
        let mut values: Vec<f64> = self.mesh.coords()[..n0]
            .iter()
            .map(|x| self.initial.eval(x, 0.0))
            .collect();
        values.extend(self.exterior_values(0.0));
        Field::new(values, 0.0)
    }

    /// Interior values taken from `values`, exterior from `g(0)`.
    pub fn field_with_interior(&self, values: &[f64]) -> Result<Field> {
        let n0 = self.mesh.interior_count();
        if values.len() < n0 {
            return Err(Error::MeshMismatch {
                expected: n0,
                found: values.len(),
            });
        }
        let mut v = values[..n0].to_vec();
        v.extend(self.exterior_values(0.0));
        Ok(Field::new(v, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepConfig {
    /// Max-norm tolerance on `(x - u) / dt + Lx`.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    pub initial_step: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            tol: 1e-8,
            max_iter: 100,
            shrink: 0.5,
            initial_step: 1.0,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(invalid("shrink", format!("must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.initial_step > 0.0) {
            return Err(invalid("initial_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub time: f64,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub fields: Vec<Field>,
    /// One entry per step; `stats[k]` belongs to `fields[k + 1]`.
    pub stats: Vec<StepStats>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.time).collect()
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("trajectory has at least the initial field")
    }

    /// `(k, |(t_{k-1}, t_k] ∩ (a, b)|)` for every snapshot `k >= 1` with a
    /// positive overlap. Sums to `b - a` when the window is covered.
    pub fn window_weights(&self, a: f64, b: f64) -> Vec<(usize, f64)> {
        (1..self.fields.len())
            .filter_map(|k| {
                let lo = self.fields[k - 1].time.max(a);
                let hi = self.fields[k].time.min(b);
                (hi > lo).then_some((k, hi - lo))
            })
            .collect()
    }

    /// Applies `f` to every snapshot, keeping the statistics.
    pub fn map(&self, f: impl Fn(&Field) -> Field) -> Trajectory {
        Trajectory {
            fields: self.fields.iter().map(f).collect(),
            stats: self.stats.clone(),
        }
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let t = self.times();
        !t.is_empty() && t[0] <= a + 1e-12 && *t.last().unwrap() >= b - 1e-12
    }

    pub fn check_invariants(&self, spec: &ProblemSpec) -> bool {
        let n0 = spec.mesh.interior_count();
        self.fields.windows(2).all(|w| w[1].time > w[0].time)
            && self.fields.iter().all(|f| {
                f.len() == spec.mesh.len() && f.values[n0..] == spec.exterior_values(f.time)[..]
            })
    }
}

/// Reuses the weight plan across steps unless the kernel depends on time.
struct PlanCache<'a> {
    spec: &'a ProblemSpec,
    plan: Option<OperatorApplyPlan>,
}

impl<'a> PlanCache<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        PlanCache { spec, plan: None }
    }

    fn at(&mut self, t: f64) -> &OperatorApplyPlan {
        let stale = match &self.plan {
            None => true,
            Some(p) => self.spec.kernel.is_time_dependent() && p.time() != t,
        };
        if stale {
            self.plan = Some(OperatorApplyPlan::new(&self.spec.mesh, &self.spec.kernel, t));
        }
        self.plan.as_ref().unwrap()
    }
}

struct StepProblem<'a> {
    plan: &'a OperatorApplyPlan,
    law: PowerLaw,
    m: &'a [f64],
    prev: &'a [f64],
    n0: usize,
    dt: f64,
}

impl StepProblem<'_> {
    fn objective(&self, v: &[f64]) -> f64 {
        let quad: f64 = (0..self.n0)
            .map(|i| self.m[i] * (v[i] - self.prev[i]).powi(2))
            .sum::<f64>()
            / (2.0 * self.dt);
        let law = self.law;
        quad + self.plan.reduce(|i, j, w| law.abs_pow(v[i] - v[j]) * w) / law.p()
    }

    /// Unweighted residual on interior nodes.
    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let lw = self.plan.accumulate(|i, j, w| self.law.phi(v[i] - v[j]) * w, true);
        (0..self.n0)
            .map(|i| (v[i] - self.prev[i]) / self.dt + lw[i] / self.m[i])
            .collect()
    }

    fn hessian_diag(&self, v: &[f64]) -> Vec<f64> {
        let d = self.plan.accumulate_symmetric(|i, j, w| self.law.dphi(v[i] - v[j]) * w, true);
        (0..self.n0).map(|i| self.m[i] / self.dt + d[i]).collect()
    }

    fn hessian_apply(&self, v: &[f64], d: &[f64]) -> Vec<f64> {
        let n0 = self.n0;
        let dd = |k: usize| if k < n0 { d[k] } else { 0.0 };
        let out = self
            .plan
            .accumulate(|i, j, w| self.law.dphi(v[i] - v[j]) * w * (dd(i) - dd(j)), true);
        (0..n0).map(|i| self.m[i] * d[i] / self.dt + out[i]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |s, v| s.max(v.abs()))
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
fn pcg(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], diag: &[f64], rtol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let target = rtol * dot(b, b).sqrt();
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= target {
            return (x, it);
        }
        let hd = apply(&d);
        let curv = dot(&d, &hd);
        if !(curv > 0.0) {
            return (x, it);
        }
        let alpha = rz / curv;
        for k in 0..n {
            x[k] += alpha * d[k];
            r[k] -= alpha * hd[k];
        }
        z = r.iter().zip(diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            d[k] = z[k] + beta * d[k];
        }
    }
    (x, max_iter)
}

/// Newton-CG with Armijo backtracking on the step functional.
fn minimize(
    prob: &StepProblem<'_>,
    mut v: Vec<f64>,
    cfg: &StepConfig,
    t_next: f64,
) -> Result<(Vec<f64>, StepStats)> {
    let n0 = prob.n0;
    let not_finite = || Error::NotFinite { time: t_next };
    let mut res = prob.residual(&v);
    let mut rmax = max_abs(&res);
    let mut cg_total = 0;
    for iter in 0..cfg.max_iter {
        if !rmax.is_finite() {
            return Err(not_finite());
        }
        if rmax <= cfg.tol {
            return Ok((v, stats(t_next, iter, cg_total, rmax)));
        }
        let grad: Vec<f64> = (0..n0).map(|i| prob.m[i] * res[i]).collect();
        let diag = prob.hessian_diag(&v);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let forcing = rmax.sqrt().clamp(1e-10, 0.1);
        let cg_cap = (n0 + 10).min(2000);
        let (dir, cg_it) = pcg(|d| prob.hessian_apply(&v, d), &rhs, &diag, forcing, cg_cap);
        cg_total += cg_it;
        let slope = dot(&grad, &dir);
        if !slope.is_finite() {
            return Err(not_finite());
        }

        let f0 = prob.objective(&v);
        let trial = |alpha: f64| {
            let mut w = v.clone();
            for i in 0..n0 {
                w[i] += alpha * dir[i];
            }
            w
        };
        // Once the predicted decrease of F drops to its round-off level the
        // sufficient-decrease test is noise; backtrack on the residual instead.
        let noise = 1e-13 * (f0.abs() + 1.0);
        let mut alpha = cfg.initial_step;
        let mut accepted = None;
        if -slope * alpha > noise {
            for _ in 0..60 {
                let w = trial(alpha);
                let f = prob.objective(&w);
                if !f.is_finite() {
                    return Err(not_finite());
                }
                if f <= f0 + 1e-4 * alpha * slope {
                    accepted = Some(w);
                    break;
                }
                alpha *= cfg.shrink;
            }
        }
        if accepted.is_none() {
            alpha = cfg.initial_step;
            for _ in 0..30 {
                let w = trial(alpha);
                if max_abs(&prob.residual(&w)) < rmax {
                    accepted = Some(w);
                    break;
                }
                alpha *= cfg.shrink;
            }
        }
        let Some(w) = accepted else {
            return Err(Error::NonConvergence {
                time: t_next,
                iterations: iter + 1,
                residual: rmax,
            });
        };
        v = w;
        res = prob.residual(&v);
        rmax = max_abs(&res);
    }
    if rmax <= cfg.tol {
        return Ok((v, stats(t_next, cfg.max_iter, cg_total, rmax)));
    }
    Err(Error::NonConvergence {
        time: t_next,
        iterations: cfg.max_iter,
        residual: rmax,
    })
}

fn stats(time: f64, iterations: usize, cg_iterations: usize, residual: f64) -> StepStats {
    StepStats {
        time,
        iterations,
        cg_iterations,
        residual,
        energy: f64::NAN,
    }
}

fn step_with_plan(
    plan: &OperatorApplyPlan,
    spec: &ProblemSpec,
    u_prev: &Field,
    t_next: f64,
    cfg: &StepConfig,
    init: Option<&[f64]>,
) -> Result<(Field, StepStats)> {
    u_prev.check_mesh(&spec.mesh)?;
    if !u_prev.is_finite() {
        return Err(Error::NotFinite { time: u_prev.time });
    }
    let dt = t_next - u_prev.time;
    if !(dt > 0.0) {
        return Err(invalid("t_next", format!("must exceed the previous time {}", u_prev.time)));
    }
    let n0 = spec.mesh.interior_count();
    let law = PowerLaw::new(spec.p())?;
    let prob = StepProblem {
        plan,
        law,
        m: spec.mesh.measures(),
        prev: &u_prev.values,
        n0,
        dt,
    };
    let mut v = match init {
        Some(x) if x.len() >= n0 => x[..n0].to_vec(),
        Some(x) => {
            return Err(Error::MeshMismatch {
                expected: n0,
                found: x.len(),
            })
        }
        None => u_prev.values[..n0].to_vec(),
    };
    v.extend(spec.exterior_values(t_next));
    let (v, mut st) = minimize(&prob, v, cfg, t_next)?;
    let field = Field::new(v, t_next);
    st.energy = crate::operator::energy(plan, &field, spec.p())?;
    Ok((field, st))
}

/// One backward Euler step from `u_prev` (at `u_prev.time`) to `t_next`.
pub fn step_implicit(u_prev: &Field, t_next: f64, spec: &ProblemSpec, cfg: &StepConfig) -> Result<Field> {
    cfg.validate()?;
    let plan = OperatorApplyPlan::new(&spec.mesh, &spec.kernel, t_next);
    step_with_plan(&plan, spec, u_prev, t_next, cfg, None).map(|(f, _)| f)
}

/// Same as [`step_implicit`] with an explicit starting point for the
/// minimizer (interior values) and the step statistics.
pub fn step_implicit_from(
    u_prev: &Field,
    t_next: f64,
    spec: &ProblemSpec,
    cfg: &StepConfig,
    init: &[f64],
) -> Result<(Field, StepStats)> {
    cfg.validate()?;
    let plan = OperatorApplyPlan::new(&spec.mesh, &spec.kernel, t_next);
    step_with_plan(&plan, spec, u_prev, t_next, cfg, Some(init))
}

pub fn solve(spec: &ProblemSpec, cfg: &StepConfig) -> Result<Trajectory> {
    solve_from(spec, cfg, spec.initial_field())
}

/// Solves from an arbitrary initial field; its exterior values are replaced
/// by `g(0)`.
pub fn solve_from(spec: &ProblemSpec, cfg: &StepConfig, initial: Field) -> Result<Trajectory> {
    cfg.validate()?;
    initial.check_mesh(&spec.mesh)?;
    let mut u = spec.field_with_interior(&initial.values)?;
    let mut cache = PlanCache::new(spec);
    let mut fields = vec![u.clone()];
    let mut all_stats = Vec::new();
    for &t in &spec.times()[1..] {
        let plan = cache.at(t);
        let (next, st) = step_with_plan(plan, spec, &u, t, cfg, None)?;
        all_stats.push(st);
        fields.push(next.clone());
        u = next;
    }
    Ok(Trajectory {
        fields,
        stats: all_stats,
    })
}

/// Forward Euler, `u^k = u^{k-1} - dt L u^{k-1}` on the interior. Only
/// stable for small `dt`; used to cross-check the implicit scheme.
pub fn solve_explicit(spec: &ProblemSpec) -> Result<Trajectory> {
    let n0 = spec.mesh.interior_count();
    let mut cache = PlanCache::new(spec);
    let mut u = spec.initial_field();
    let mut fields = vec![u.clone()];
    let times = spec.times();
    for w in times.windows(2) {
        let lu = apply_l(cache.at(w[0]), &u, spec.p())?;
        let dt = w[1] - w[0];
        let mut next: Vec<f64> = (0..n0).map(|i| u.values[i] - dt * lu.values[i]).collect();
        next.extend(spec.exterior_values(w[1]));
        u = Field::new(next, w[1]);
        if !u.is_finite() {
            return Err(Error::NotFinite { time: w[1] });
        }
        fields.push(u.clone());
    }
    Ok(Trajectory {
        fields,
        stats: Vec::new(),
    })
}

/// `sum_{i in interior} m_i (a_i - b_i)^2`.
pub fn interior_l2_sq(mesh: &Mesh, a: &Field, b: &Field) -> f64 {
    let n0 = mesh.interior_count();
    (0..n0)
        .map(|i| mesh.measures()[i] * (a.values[i] - b.values[i]).powi(2))
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub pass: bool,
    /// `sum m_i (u_i - v_i)^2` at every snapshot.
    pub distances: Vec<f64>,
    /// Absolute per-step allowance in the (unsquared) norm from inexact
    /// solves: `2 dt tol sqrt(|Omega|)`.
    pub solve_slack: f64,
    /// Largest `||e_k|| - ||e_{k-1}||` observed (negative when contracting).
    pub max_growth: f64,
}

/// Solves from two initial fields with shared data and checks that the
/// interior L2 distance never grows (relative slack 1e-10 plus the
/// allowance certified by the residual tolerance).
pub fn l2_contraction_check(spec: &ProblemSpec, a: &Field, b: &Field, cfg: &StepConfig) -> Result<ContractionReport> {
    let (ta, tb) = rayon::join(|| solve_from(spec, cfg, a.clone()), || solve_from(spec, cfg, b.clone()));
    let (ta, tb) = (ta?, tb?);
    let distances: Vec<f64> = ta
        .fields
        .iter()
        .zip(&tb.fields)
        .map(|(x, y)| interior_l2_sq(&spec.mesh, x, y))
        .collect();
    let volume: f64 = spec.mesh.measures()[..spec.mesh.interior_count()].iter().sum();
    let times = ta.times();
    let mut pass = true;
    let mut max_growth = f64::NEG_INFINITY;
    let mut worst_slack: f64 = 0.0;
    for k in 1..distances.len() {
        let (prev, cur) = (distances[k - 1].sqrt(), distances[k].sqrt());
        let slack = 2.0 * (times[k] - times[k - 1]) * cfg.tol * volume.sqrt();
        worst_slack = worst_slack.max(slack);
        max_growth = max_growth.max(cur - prev);
        if cur > prev * (1.0 + 1e-10) + slack {
            pass = false;
        }
    }
    Ok(ContractionReport {
        pass,
        distances,
        solve_slack: worst_slack,
        max_growth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    PositivePart,
    NegativePart,
}

impl Transform {
    pub fn apply(&self, u: &Field) -> Field {
        match self {
            Transform::Identity => u.clone(),
            Transform::PositivePart => crate::operator::positive_part(u),
            Transform::NegativePart => crate::operator::negative_part(u),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionReport {
    pub transform: Transform,
    /// Largest normalized pairing over the basis.
    pub residual: f64,
    /// Largest absolute normalized pairing.
    pub max_abs: f64,
    pub basis_size: usize,
    pub pairings: Vec<f64>,
}

/// Cylinder spanning the whole run over the largest ball centred in the
/// domain box.
pub fn default_test_cylinder(spec: &ProblemSpec) -> Result<Cylinder> {
    let half = spec
        .mesh
        .extents()
        .iter()
        .map(|(a, b)| 0.5 * (b - a))
        .fold(f64::INFINITY, f64::min);
    Cylinder::new(spec.mesh.center(), half, spec.horizon, spec.horizon)
}

/// Piecewise-linear window profile: ramps over the first and last quarter
/// of `[a, b]`, 1 in between.
fn trapezoid(t: f64, a: f64, b: f64) -> f64 {
    let ramp = 0.25 * (b - a);
    ((t - a) / ramp).min((b - t) / ramp).clamp(0.0, 1.0)
}

/// Weak-form pairing of the transformed trajectory `w` against a fixed
/// nonnegative test basis: per test function `eta`,
///
/// ```text
/// sum_k dt_k sum_{i interior} m_i eta_i^k [ (w_i^k - w_i^{k-1}) / dt_k + (L w^k)_i ]
/// ```
///
/// divided by `sum_k dt_k sum_i m_i eta_i^k`. Each cylinder contributes
/// 3 radii x 3 time windows. A subsolution has every pairing `<= 0` up to
/// the solve tolerance.
pub fn subsolution_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    transform: Transform,
    cylinders: &[Cylinder],
) -> Result<SubsolutionReport> {
    if traj.len() < 2 {
        return Err(Error::Empty("trajectory"));
    }
    let default;
    let cylinders = if cylinders.is_empty() {
        default = [default_test_cylinder(spec)?];
        &default[..]
    } else {
        cylinders
    };
    let mesh = &spec.mesh;
    let n0 = mesh.interior_count();
    let m = mesh.measures();
    let x = mesh.coords();

    // (psi values on interior nodes, time window)
    let mut basis = Vec::new();
    for q in cylinders {
        for frac in [1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let r_out = frac * q.radius;
            let cut = build_cutoff(0.5 * r_out, r_out, 0.0, 1.0, q.center)?;
            let psi: Vec<f64> = x[..n0].iter().map(|y| cut.psi(y)).collect();
            let third = q.duration / 3.0;
            for w in 0..3 {
                let a = q.t_start() + w as f64 * third;
                basis.push((psi.clone(), a, a + third));
            }
        }
    }

    let mut cache = PlanCache::new(spec);
    let mut num = vec![0.0; basis.len()];
    let mut den = vec![0.0; basis.len()];
    let mut prev = transform.apply(&traj.fields[0]);
    for k in 1..traj.len() {
        let cur = transform.apply(&traj.fields[k]);
        let (t0, t1) = (prev.time, cur.time);
        let dt = t1 - t0;
        let lw = apply_l(cache.at(t1), &cur, spec.p())?;
        let bracket: Vec<f64> = (0..n0)
            .map(|i| (cur.values[i] - prev.values[i]) / dt + lw.values[i])
            .collect();
        let contrib: Vec<(f64, f64)> = basis
            .par_iter()
            .map(|(psi, a, b)| {
                let z = trapezoid(t1, *a, *b);
                if z == 0.0 {
                    return (0.0, 0.0);
                }
                let mut acc = 0.0;
                let mut mass = 0.0;
                for i in 0..n0 {
                    let eta = psi[i] * z * m[i];
                    acc += eta * bracket[i];
                    mass += eta;
                }
                (dt * acc, dt * mass)
            })
            .collect();
        for (b, (a, d)) in contrib.into_iter().enumerate() {
            num[b] += a;
            den[b] += d;
        }
        prev = cur;
    }
    let pairings: Vec<f64> = num
        .iter()
        .zip(&den)
        .filter(|(_, d)| **d > 0.0)
        .map(|(a, d)| a / d)
        .collect();
    if pairings.is_empty() {
        return Err(Error::Empty("test basis support"));
    }
    Ok(SubsolutionReport {
        transform,
        residual: pairings.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_abs: max_abs(&pairings),
        basis_size: pairings.len(),
        pairings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_mesh;
    use crate::kernel::KernelForm;

    fn spec_1d(p: f64, initial: &str, exterior: &str, h: f64) -> ProblemSpec {
        let mesh = build_mesh(1, &[(-1.0, 1.0)], h, 2.0).unwrap();
        let kernel = KernelSpec::canonical_kernel(0.5, p).unwrap();
        ProblemSpec::new(mesh, kernel, exterior.parse().unwrap(), initial.parse().unwrap(), 0.05, 0.01).unwrap()
    }

    #[test]
    fn step_counts() {
        let mut s = spec_1d(2.0, "zero", "zero", 0.25);
        s.horizon = 0.2;
        assert_eq!(s.steps(), 20);
        s.horizon = 0.205;
        assert_eq!(s.steps(), 21);
        assert_eq!(*s.times().last().unwrap(), 0.205);
    }

    #[test]
    fn zero_and_constant_data_are_stationary() {
        let cfg = StepConfig::default();
        let z = spec_1d(3.0, "zero", "zero", 0.1);
        let traj = solve(&z, &cfg).unwrap();
        assert_eq!(traj.len(), z.steps() + 1);
        assert!(traj.fields.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));

        let c = spec_1d(3.0, "const(0.7)", "const(0.7)", 0.1);
        let traj = solve(&c, &cfg).unwrap();
        assert!(traj.fields.iter().all(|f| f.values.iter().all(|&v| (v - 0.7).abs() < 1e-12)));
        assert!(traj.check_invariants(&c));
    }

    #[test]
    fn residual_contract_is_met() {
        let cfg = StepConfig::default();
        for p in [2.0, 3.0, 4.0, 2.5] {
            let s = spec_1d(p, "bump(1, 0.2, 0.6) + bump(-0.5, -0.5, 0.3)", "wave(0.2, 2, 5)", 0.05);
            let traj = solve(&s, &cfg).unwrap();
            assert!(traj.stats.iter().all(|st| st.residual <= cfg.tol));
            assert!(traj.check_invariants(&s));
        }
    }

    #[test]
    fn step_rejects_bad_time_and_config() {
        let s = spec_1d(3.0, "zero", "zero", 0.25);
        let u = s.initial_field();
        assert!(step_implicit(&u, 0.0, &s, &StepConfig::default()).is_err());
        let bad = StepConfig {
            tol: 0.0,
            ..StepConfig::default()
        };
        assert!(step_implicit(&u, 0.1, &s, &bad).is_err());
    }

    #[test]
    fn exhausted_iterations_report_best_residual() {
        let s = spec_1d(4.0, "bump(3, 0, 0.8)", "zero", 0.05);
        let cfg = StepConfig {
            max_iter: 1,
            tol: 1e-14,
            ..StepConfig::default()
        };
        match step_implicit(&s.initial_field(), 0.01, &s, &cfg) {
            Err(Error::NonConvergence { time, residual, .. }) => {
                assert_eq!(time, 0.01);
                assert!(residual > 0.0 && residual.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_dependent_kernel_steps() {
        let mesh = build_mesh(1, &[(-1.0, 1.0)], 0.1, 2.0).unwrap();
        let kernel = KernelSpec::new(0.5, 3.0, 2.0, KernelForm::Modulated { seed: 3 }).unwrap();
        let s = ProblemSpec::new(mesh, kernel, ScalarFn::zero(), "bump(1, 0, 0.7)".parse().unwrap(), 0.03, 0.01)
            .unwrap();
        let traj = solve(&s, &StepConfig::default()).unwrap();
        assert!(traj.stats.iter().all(|st| st.residual <= 1e-8));
    }

    #[test]
    fn window_weights_partition_the_window() {
        let s = spec_1d(2.0, "zero", "zero", 0.5);
        let traj = solve(&s, &StepConfig::default()).unwrap();
        let w = traj.window_weights(0.013, 0.042);
        let total: f64 = w.iter().map(|(_, v)| v).sum();
        assert!((total - 0.029).abs() < 1e-15);
        assert_eq!(w.first().unwrap().0, 2);
        assert_eq!(w.last().unwrap().0, 5);
    }

    #[test]
    fn identity_pairing_is_residual_sized() {
        let cfg = StepConfig::default();
        let s = spec_1d(3.0, "bump(1, 0.3, 0.5) + bump(-1, -0.4, 0.5)", "zero", 0.05);
        let traj = solve(&s, &cfg).unwrap();
        let id = subsolution_residual(&traj, &s, Transform::Identity, &[]).unwrap();
        assert_eq!(id.basis_size, 9);
        assert!(id.max_abs <= cfg.tol * 9.0, "{id:?}");
        for t in [Transform::PositivePart, Transform::NegativePart] {
            let r = subsolution_residual(&traj, &s, t, &[]).unwrap();
            assert!(r.residual <= 10.0 * cfg.tol, "{r:?}");
        }
    }
}
