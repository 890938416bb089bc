//! Seeded randomized property suites for the discrete operator: algebraic
//! identities, monotonicity, coercivity, the operator bound and the
//! truncation inequalities for the seminorm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::ScalarFn;
use crate::error::{invalid, Result};
use crate::geometry::{build_mesh, Mesh};
use crate::kernel::{KernelForm, KernelSpec};
use crate::operator::{
    apply_l, dual_pairing, energy, positive_part, seminorm, seminorm_all, truncate, Field, OperatorApplyPlan,
};
use crate::solver::{l2_contraction_check, ProblemSpec, StepConfig};

fn kernel_for(s: f64, p: f64, lambda: f64, seed: u64) -> Result<KernelSpec> {
    if lambda == 1.0 {
        KernelSpec::canonical_kernel(s, p)
    } else {
        KernelSpec::new(s, p, lambda, KernelForm::Modulated { seed })
    }
}

fn values(n: usize, rng: &mut ChaCha8Rng, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    (0..n).map(|i| if keep(i) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect()
}

fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |d, (x, y)| d.max((x - y).abs())) / scale
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgebraReport {
    pub seed: u64,
    pub fields: usize,
    pub max_nodes: usize,
    /// `max |L c|` over constant fields.
    pub constant_residual: f64,
    /// `max_i |L(cu) - c^(p-1) Lu| / max |c^(p-1) Lu|`.
    pub homogeneity_error: f64,
    /// `max |sum_i m_i (Lu)_i| / max(1, sum_i m_i |Lu|_i)` on meshes
    /// without an exterior band: absolute for unit-scale sums, relative
    /// when the sum of magnitudes exceeds 1.
    pub antisymmetry_sum: f64,
    /// Relative max-norm gap between finite differences of the energy and
    /// `2 m Lu` on sampled interior coordinates.
    pub gradient_error: f64,
    pub pass: bool,
}

/// Fourth-order central difference of the energy in coordinate `i`.
fn energy_partial(plan: &OperatorApplyPlan, u: &Field, p: f64, i: usize, step: f64) -> Result<f64> {
    let mut v = u.clone();
    let mut at = |d: f64| -> Result<f64> {
        v.values[i] = u.values[i] + d;
        energy(plan, &v, p)
    };
    let (f2, f1, b1, b2) = (at(2.0 * step)?, at(step)?, at(-step)?, at(-2.0 * step)?);
    Ok((8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * step))
}

/// Checks on `fields` random fields (meshes of at most 512 nodes, alternating
/// one and two dimensions): constants are annihilated, `L` is
/// `(p-1)`-homogeneous, pair contributions cancel in `sum m Lu` without an
/// exterior, and the energy gradient is `2 m Lu`.
pub fn operator_algebra_suite(seed: u64, fields: usize) -> Result<AlgebraReport> {
    if fields == 0 {
        return Err(invalid("fields", "need at least one field"));
    }
    let ps = [2.0, 2.5, 3.0, 4.0];
    let ss = [0.3, 0.5, 0.8];
    let results: Vec<Result<[f64; 5]>> = (0..fields)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let p = ps[k % ps.len()];
            let s = ss[k % ss.len()];
            let lambda = if k % 2 == 0 { 1.0 } else { 2.0 };
            let kernel = kernel_for(s, p, lambda, seed ^ k as u64)?;
            let (mesh, closed) = if k % 2 == 0 {
                (
                    build_mesh(1, &[(-1.0, 1.0)], 1.0 / 64.0, 3.0)?,
                    build_mesh(1, &[(-1.0, 1.0)], 1.0 / 128.0, 1.0)?,
                )
            } else {
                (
                    build_mesh(2, &[(-1.0, 1.0), (-1.0, 1.0)], 0.125, 1.5)?,
                    build_mesh(2, &[(-1.0, 1.0), (-1.0, 1.0)], 0.125, 2f64.sqrt())?,
                )
            };
            let t = rng.random_range(0.0..1.0);
            let plan = OperatorApplyPlan::new(&mesh, &kernel, t);
            let u = Field::new(values(mesh.len(), &mut rng, |_| true), t);

            let c = rng.random_range(-3.0..3.0);
            let lc = apply_l(&plan, &Field::constant(&mesh, c, t), p)?;
            let constant = lc.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

            let lu = apply_l(&plan, &u, p)?;
            let scale = rng.random_range(0.1..4.0);
            let lsu = apply_l(&plan, &u.map(|v| scale * v), p)?;
            let expect: Vec<f64> = lu.values.iter().map(|v| scale.powf(p - 1.0) * v).collect();
            let homog = rel_max_diff(&lsu.values, &expect);

            let cplan = OperatorApplyPlan::new(&closed, &kernel, t);
            let w = Field::new(values(closed.len(), &mut rng, |_| true), t);
            let lw = apply_l(&cplan, &w, p)?;
            let weighted: Vec<f64> = lw.values.iter().zip(closed.measures()).map(|(v, m)| v * m).collect();
            let anti = weighted.iter().sum::<f64>().abs() / weighted.iter().map(|v| v.abs()).sum::<f64>().max(1.0);

            let n0 = mesh.interior_count();
            let picks: Vec<usize> = (0..32).map(|_| rng.random_range(0..n0)).collect();
            let mut fd = Vec::with_capacity(picks.len());
            let mut exact = Vec::with_capacity(picks.len());
            for &i in &picks {
                fd.push(energy_partial(&plan, &u, p, i, 2e-5)?);
                exact.push(2.0 * mesh.measures()[i] * lu.values[i]);
            }
            let grad = rel_max_diff(&fd, &exact);
            Ok([constant, homog, anti, grad, mesh.len() as f64])
        })
        .collect();
    let mut worst = [0.0f64; 5];
    for r in results {
        let r = r?;
        for (w, v) in worst.iter_mut().zip(r) {
            *w = w.max(v);
        }
    }
    let [constant_residual, homogeneity_error, antisymmetry_sum, gradient_error, nodes] = worst;
    Ok(AlgebraReport {
        seed,
        fields,
        max_nodes: nodes as usize,
        constant_residual,
        homogeneity_error,
        antisymmetry_sum,
        gradient_error,
        pass: constant_residual == 0.0
            && homogeneity_error <= 1e-12
            && antisymmetry_sum <= 1e-12
            && gradient_error <= 1e-8,
    })
}

/// Lower constant `1 / (2^(p+1) lambda)` in the coercivity bound.
pub fn coercivity_lower_constant(p: f64, lambda: f64) -> f64 {
    1.0 / (2f64.powf(p + 1.0) * lambda)
}

/// Smallest `C` such that, pair by pair,
/// `phi(a + b) a kappa >= c |a|^p - C |b|^p` for every `kappa` in
/// `[1/lambda, lambda]`, with `c` the lower constant. By homogeneity this
/// is a one-dimensional maximization at `b = 1`, done on a grid with
/// golden-section polishing around the best cell.
pub fn pointwise_coercivity_constant(p: f64, lambda: f64) -> f64 {
    let c = coercivity_lower_constant(p, lambda);
    let need = |a: f64| {
        let t = a + 1.0;
        let pair = t.abs().powf(p - 2.0) * t * a;
        let kappa = if pair >= 0.0 { 1.0 / lambda } else { lambda };
        c * a.abs().powf(p) - kappa * pair
    };
    // Beyond |a| = 8 the pair term dominates for every p >= 2, lambda <= 4.
    let n = 160_000;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / n as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=n {
        let a = lo + k as f64 * h;
        let v = need(a);
        if v > best.0 {
            best = (v, a);
        }
    }
    let (mut x0, mut x1) = (best.1 - h, best.1 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (a, b) = (x1 - g * (x1 - x0), x0 + g * (x1 - x0));
        if need(a) > need(b) {
            x1 = b;
        } else {
            x0 = a;
        }
    }
    best.0.max(need(0.5 * (x0 + x1))).max(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityOutcome {
    pub p: f64,
    pub lambda: f64,
    pub pairs: usize,
    pub lower_constant: f64,
    /// Pointwise constant used in the check.
    pub upper_constant: f64,
    /// Largest `(c [w]^p - <L(w+g), w>) / [g]^p` seen.
    pub fitted_constant: f64,
    pub violations: usize,
    /// Largest `[L(u+g), v]` ratio against `2^(p-1) lambda ([u]^(p-1) + [g]^(p-1)) [v]`.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WellposednessReport {
    pub seed: u64,
    pub monotonicity_pairs: usize,
    /// Smallest `sum_interior m (Lu - Lv)(u - v)` seen.
    pub monotonicity_min: f64,
    pub coercivity: Vec<CoercivityOutcome>,
    pub contraction_runs: usize,
    pub contraction_failures: usize,
    /// Largest `||e_k|| - ||e_(k-1)||` over all runs.
    pub contraction_max_growth: f64,
    pub pass: bool,
}

fn small_mesh(k: usize) -> Result<Mesh> {
    if k % 3 == 2 {
        build_mesh(2, &[(-1.0, 1.0), (-1.0, 1.0)], 0.25, 2.0)
    } else {
        build_mesh(1, &[(-1.0, 1.0)], 0.05, 2.5)
    }
}

fn coercivity_case(seed: u64, p: f64, lambda: f64, pairs: usize) -> Result<CoercivityOutcome> {
    let s = 0.5;
    let c_low = coercivity_lower_constant(p, lambda);
    let c_up = pointwise_coercivity_constant(p, lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fitted = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut bound_ratio: f64 = 0.0;
    for k in 0..pairs {
        let mesh = small_mesh(k)?;
        let kernel = kernel_for(s, p, lambda, seed.wrapping_add(k as u64))?;
        let t = rng.random_range(0.0..1.0);
        let plan = OperatorApplyPlan::new(&mesh, &kernel, t);
        let n0 = mesh.interior_count();
        let amp_w = 10f64.powf(rng.random_range(-1.0..1.0));
        // Every fifth pair has g = 0.
        let amp_g = if k % 5 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-1.0..1.0)) };
        let w = Field::new(values(mesh.len(), &mut rng, |i| i < n0).iter().map(|v| amp_w * v).collect(), t);
        let g = Field::new(values(mesh.len(), &mut rng, |i| i >= n0).iter().map(|v| amp_g * v).collect(), t);
        let wg = Field::new(w.values.iter().zip(&g.values).map(|(a, b)| a + b).collect(), t);

        let pairing = dual_pairing(&plan, &wg, &w, p)?;
        let semi_w = seminorm_all(&mesh, &w, s, p)?;
        let semi_g = seminorm_all(&mesh, &g, s, p)?;
        let lower = c_low * semi_w - c_up * semi_g;
        let scale = pairing.abs().max(c_low * semi_w).max(c_up * semi_g).max(f64::MIN_POSITIVE);
        if pairing < lower - 1e-12 * scale {
            violations += 1;
        }
        if semi_g > 0.0 {
            fitted = fitted.max((c_low * semi_w - pairing) / semi_g);
        }

        let v = Field::new(values(mesh.len(), &mut rng, |i| i < n0), t);
        let u = Field::new(values(mesh.len(), &mut rng, |i| i < n0), t);
        let ug = Field::new(u.values.iter().zip(&g.values).map(|(a, b)| a + b).collect(), t);
        let norm = |f: &Field| -> Result<f64> { Ok(seminorm_all(&mesh, f, s, p)?.powf(1.0 / p)) };
        let (nu, ng, nv) = (norm(&u)?, norm(&g)?, norm(&v)?);
        let denom = 2f64.powf(p - 1.0) * lambda * (nu.powf(p - 1.0) + ng.powf(p - 1.0)) * nv;
        if denom > 0.0 {
            bound_ratio = bound_ratio.max(dual_pairing(&plan, &ug, &v, p)?.abs() / denom);
        }
    }
    Ok(CoercivityOutcome {
        p,
        lambda,
        pairs,
        lower_constant: c_low,
        upper_constant: c_up,
        fitted_constant: fitted,
        violations,
        bound_ratio,
    })
}

/// Monotonicity on `pairs` random pairs agreeing outside the domain,
/// coercivity and the operator bound on `pairs` random `(w, g)` pairs for
/// each `p` in `{2, 3, 4}` and `lambda` in `{1, 2}`, and `runs` paired
/// solver runs for the L2 contraction.
pub fn wellposedness_suite(seed: u64, pairs: usize, runs: usize) -> Result<WellposednessReport> {
    if pairs == 0 {
        return Err(invalid("pairs", "need at least one pair"));
    }
    let mono: Vec<Result<f64>> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(k as u64));
            let mesh = small_mesh(k)?;
            let p = [2.0, 2.5, 3.0, 4.0][k % 4];
            let kernel = kernel_for(0.5, p, [1.0, 2.0][k % 2], seed ^ k as u64)?;
            let plan = OperatorApplyPlan::new(&mesh, &kernel, 0.3);
            let n0 = mesh.interior_count();
            let ext = values(mesh.len(), &mut rng, |i| i >= n0);
            let mut u = values(mesh.len(), &mut rng, |i| i < n0);
            let mut v = values(mesh.len(), &mut rng, |i| i < n0);
            u[n0..].copy_from_slice(&ext[n0..]);
            v[n0..].copy_from_slice(&ext[n0..]);
            let (u, v) = (Field::new(u, 0.3), Field::new(v, 0.3));
            let (lu, lv) = (apply_l(&plan, &u, p)?, apply_l(&plan, &v, p)?);
            Ok((0..n0)
                .map(|i| mesh.measures()[i] * (lu.values[i] - lv.values[i]) * (u.values[i] - v.values[i]))
                .sum())
        })
        .collect();
    let monotonicity_min = mono.into_iter().collect::<Result<Vec<f64>>>()?.into_iter().fold(f64::INFINITY, f64::min);

    let cases: Vec<(f64, f64)> = [2.0, 3.0, 4.0]
        .iter()
        .flat_map(|&p| [1.0, 2.0].map(move |l| (p, l)))
        .collect();
    let coercivity = cases
        .par_iter()
        .enumerate()
        .map(|(k, &(p, l))| coercivity_case(seed.wrapping_add(1000 * k as u64 + 7), p, l, pairs))
        .collect::<Result<Vec<_>>>()?;

    let contraction = (0..runs)
        .into_par_iter()
        .map(|k| -> Result<(bool, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5000 + k as u64));
            let mesh = build_mesh(1, &[(-1.0, 1.0)], 0.05, 2.0)?;
            let p = [2.0, 3.0, 4.0][k % 3];
            let kernel = kernel_for(0.5, p, [1.0, 2.0][k % 2], seed ^ (k as u64 + 11))?;
            let bump = |rng: &mut ChaCha8Rng| {
                ScalarFn::bump(rng.random_range(-1.5..1.5), [rng.random_range(-0.5..0.5), 0.0], rng.random_range(0.3..0.8))
            };
            let g = ScalarFn::bump(rng.random_range(-0.5..0.5), [1.5, 0.0], 0.5);
            let spec = ProblemSpec::new(mesh, kernel, g, bump(&mut rng), 0.1, 0.01)?;
            let a = spec.initial_field();
            let other = bump(&mut rng);
            let b = Field::new(
                spec.mesh.coords().iter().map(|x| other.eval(x, 0.0)).collect(),
                0.0,
            );
            let r = l2_contraction_check(&spec, &a, &b, &StepConfig::default())?;
            Ok((r.pass, r.max_growth))
        })
        .collect::<Result<Vec<_>>>()?;
    let contraction_failures = contraction.iter().filter(|(ok, _)| !ok).count();
    let contraction_max_growth = contraction.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);

    let pass = monotonicity_min >= -1e-10
        && coercivity
            .iter()
            .all(|c| c.violations == 0 && c.fitted_constant <= c.upper_constant && c.bound_ratio <= 1.0)
        && contraction_failures == 0;
    Ok(WellposednessReport {
        seed,
        monotonicity_pairs: pairs,
        monotonicity_min,
        coercivity,
        contraction_runs: runs,
        contraction_failures,
        contraction_max_growth,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub seed: u64,
    pub fields: usize,
    pub positive_part_violations: usize,
    pub truncation_violations: usize,
    /// Largest `semi(T u) / semi(u) - 1` seen (either truncation).
    pub worst_excess: f64,
    pub pass: bool,
}

/// `[u_+] <= [u]` and `[min(u, m)] <= [u]` on random fields, random
/// levels and random regions (whole mesh or a ball).
pub fn truncation_suite(seed: u64, fields: usize) -> Result<TruncationReport> {
    if fields == 0 {
        return Err(invalid("fields", "need at least one field"));
    }
    let meshes = [
        build_mesh(1, &[(-1.0, 1.0)], 0.1, 2.0)?,
        build_mesh(2, &[(-1.0, 1.0), (-1.0, 1.0)], 0.4, 1.8)?,
    ];
    let out: Vec<Result<(bool, bool, f64)>> = (0..fields)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mesh = &meshes[k % 2];
            let s = rng.random_range(0.05..0.95);
            let p = rng.random_range(2.0..6.0);
            let amp = 10f64.powf(rng.random_range(-2.0..2.0));
            let shift = rng.random_range(-0.5..0.5) * amp;
            let u = Field::new(values(mesh.len(), &mut rng, |_| true).iter().map(|v| amp * v + shift).collect(), 0.0);
            let region: Vec<usize> = if rng.random_range(0..2) == 0 {
                (0..mesh.len()).collect()
            } else {
                let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let r = rng.random_range(0.5..1.5);
                let b = mesh.ball(&c, r);
                if b.len() < 2 { (0..mesh.len()).collect() } else { b }
            };
            let level = shift + amp * rng.random_range(-1.0..1.0);
            let base = seminorm(mesh, &u, &region, s, p)?;
            let plus = seminorm(mesh, &positive_part(&u), &region, s, p)?;
            let trunc = seminorm(mesh, &truncate(&u, level), &region, s, p)?;
            let lim = base * (1.0 + 1e-12);
            let excess = (plus.max(trunc) / base - 1.0).max(-1.0);
            Ok((plus > lim, trunc > lim, excess))
        })
        .collect();
    let mut report = TruncationReport {
        seed,
        fields,
        positive_part_violations: 0,
        truncation_violations: 0,
        worst_excess: -1.0,
        pass: false,
    };
    for r in out {
        let (a, b, e) = r?;
        report.positive_part_violations += a as usize;
        report.truncation_violations += b as usize;
        report.worst_excess = report.worst_excess.max(e);
    }
    report.pass = report.positive_part_violations == 0 && report.truncation_violations == 0;
    Ok(report)
}
