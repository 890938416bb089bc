//! Randomized checks of the elementary inequalities used in the energy
//! estimates:
//!
//! * `a^(p-1) - b^(p-1) <= |a - b|^(p-2) (a - b)` for `0 <= a < b`;
//! * `alpha^s + beta^s <= (alpha + beta)^s` for `s >= 1`, `alpha, beta > 0`;
//! * `b^p <= a^p + c eps a^p + (1 + c eps) eps^(1-p) |a - b|^p` for
//!   `a, b` in `[0, 1]`, `eps` in `(0, 1]`, with the smallest `c = c_p`
//!   found by grid search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};

const REL_TOL: f64 = 1e-12;

/// `(lhs, rhs)` of the first inequality.
pub fn aleb(a: f64, b: f64, p: f64) -> (f64, f64) {
    let phi = |t: f64| t.abs().powf(p - 2.0) * t;
    (phi(a) - phi(b), phi(a - b))
}

pub fn alphabeta(alpha: f64, beta: f64, s: f64) -> (f64, f64) {
    (alpha.powf(s) + beta.powf(s), (alpha + beta).powf(s))
}

pub fn dkp(a: f64, b: f64, eps: f64, p: f64, c: f64) -> (f64, f64) {
    let jump = (a - b).abs().powf(p);
    let ap = a.powf(p);
    (b.powf(p), ap + c * eps * ap + (1.0 + c * eps) * eps.powf(1.0 - p) * jump)
}

/// Smallest `c` making the third inequality hold at `(a, b, eps)`.
fn required_c(a: f64, b: f64, eps: f64, p: f64) -> f64 {
    let jump = (a - b).abs().powf(p);
    let ap = a.powf(p);
    let num = b.powf(p) - ap - eps.powf(1.0 - p) * jump;
    let den = eps * ap + eps.powf(2.0 - p) * jump;
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DkpConstant {
    pub p: f64,
    pub c_p: f64,
    /// `1 / (4 c_p)`.
    pub delta: f64,
    /// Maximizing `(a, b, eps)`.
    pub argmax: [f64; 3],
}

/// Grid search over `a, b` in `[0, 1]` and `eps` in `(0, 1]` (both ends of
/// the `eps` range included), followed by local refinement.
pub fn dkp_constant(p: f64) -> Result<DkpConstant> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid("p", format!("must be >= 2, got {p}")));
    }
    let ga = 200;
    let ge = 200;
    let (mut best, mut arg) = (0..=ga)
        .into_par_iter()
        .map(|ia| {
            let a = ia as f64 / ga as f64;
            let mut best = (f64::NEG_INFINITY, [0.0; 3]);
            for ib in 0..=ga {
                let b = ib as f64 / ga as f64;
                for ie in 1..=ge {
                    let e = ie as f64 / ge as f64;
                    let c = required_c(a, b, e, p);
                    if c > best.0 {
                        best = (c, [a, b, e]);
                    }
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, [0.0; 3]), |x, y| if y.0 > x.0 { y } else { x });

    let mut step = [1.0 / ga as f64, 1.0 / ga as f64, 1.0 / ge as f64];
    for _ in 0..6 {
        let centre = arg;
        for da in -10..=10 {
            for db in -10..=10 {
                for de in -10..=10 {
                    let a = (centre[0] + da as f64 * step[0] / 10.0).clamp(0.0, 1.0);
                    let b = (centre[1] + db as f64 * step[1] / 10.0).clamp(0.0, 1.0);
                    let e = (centre[2] + de as f64 * step[2] / 10.0).clamp(1e-6, 1.0);
                    let c = required_c(a, b, e, p);
                    if c > best {
                        best = c;
                        arg = [a, b, e];
                    }
                }
            }
        }
        for s in step.iter_mut() {
            *s /= 10.0;
        }
    }
    let c_p = best.max(0.0);
    Ok(DkpConstant {
        p,
        c_p,
        delta: 1.0 / (4.0 * c_p),
        argmax: arg,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityOutcome {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest `(lhs - rhs) / max(1, |lhs|, |rhs|)` seen.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub seed: u64,
    pub outcomes: Vec<InequalityOutcome>,
    pub constants: Vec<DkpConstant>,
    pub c_p_nondecreasing: bool,
    pub pass: bool,
}

struct Tally {
    name: String,
    trials: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Tally {
            name: name.into(),
            trials: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, (lhs, rhs): (f64, f64)) {
        self.trials += 1;
        let margin = (lhs - rhs) / 1f64.max(lhs.abs()).max(rhs.abs());
        self.worst = self.worst.max(margin);
        if !(margin <= REL_TOL) {
            self.violations += 1;
        }
    }

    fn finish(self) -> InequalityOutcome {
        InequalityOutcome {
            name: self.name,
            trials: self.trials,
            violations: self.violations,
            worst_margin: self.worst,
        }
    }
}

/// Draws from `[0, 1]` with extra mass on the endpoints.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..20) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random(),
    }
}

pub const DEFAULT_PS: [f64; 4] = [2.0, 2.5, 3.0, 4.0];

pub fn inequality_suite(seed: u64, trials: usize) -> Result<InequalityReport> {
    inequality_suite_with(seed, trials, &DEFAULT_PS, None)
}

/// `c_override` replaces every searched `c_p` in the third check.
pub fn inequality_suite_with(seed: u64, trials: usize, ps: &[f64], c_override: Option<f64>) -> Result<InequalityReport> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if ps.is_empty() {
        return Err(invalid("ps", "need at least one exponent"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut t1 = Tally::new("aleb");
    for _ in 0..trials {
        let p = rng.random_range(2.0..8.0);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let a = if rng.random_range(0..10) == 0 { 0.0 } else { scale * rng.random::<f64>() };
        let b = a + scale * rng.random_range(1e-6..1.0);
        t1.record(aleb(a, b, p));
    }

    let mut t2 = Tally::new("alphabeta");
    for _ in 0..trials {
        let s = if rng.random_range(0..10) == 0 { 1.0 } else { rng.random_range(1.0..6.0) };
        let alpha = rng.random_range(1e-3..10.0);
        let beta = rng.random_range(1e-3..10.0);
        t2.record(alphabeta(alpha, beta, s));
    }

    let constants = ps.iter().map(|&p| dkp_constant(p)).collect::<Result<Vec<_>>>()?;
    let mut t3 = Tally::new("dkp");
    for k in 0..trials {
        let cst = &constants[k % constants.len()];
        let c = c_override.unwrap_or(cst.c_p);
        let a = unit(&mut rng);
        let b = unit(&mut rng);
        let eps = if rng.random_range(0..20) == 0 { 1.0 } else { rng.random_range(1e-3..=1.0) };
        t3.record(dkp(a, b, eps, cst.p, c));
    }

    let mut sorted: Vec<&DkpConstant> = constants.iter().collect();
    sorted.sort_by(|x, y| x.p.total_cmp(&y.p));
    let c_p_nondecreasing = sorted.windows(2).all(|w| w[1].c_p >= w[0].c_p);
    let outcomes = vec![t1.finish(), t2.finish(), t3.finish()];
    let pass = c_p_nondecreasing && outcomes.iter().all(|o| o.violations == 0);
    Ok(InequalityReport {
        seed,
        outcomes,
        constants,
        c_p_nondecreasing,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_examples() {
        assert_eq!(aleb(0.0, 1.0, 3.0), (-1.0, -1.0));
        assert_eq!(aleb(1.0, 2.0, 3.0), (-3.0, -1.0));
        assert_eq!(alphabeta(1.0, 1.0, 2.0), (2.0, 4.0));
    }

    #[test]
    fn searched_constant_matches_closed_form() {
        for p in DEFAULT_PS {
            let c = dkp_constant(p).unwrap();
            let closed = 2f64.powf(p - 1.0) - 1.0;
            assert!((c.c_p - closed).abs() < 1e-9 * closed, "p = {p}: {c:?}");
            assert!((c.delta - 0.25 / closed).abs() < 1e-9);
        }
    }

    #[test]
    fn small_suite_passes_and_override_can_fail() {
        let r = inequality_suite(7, 2000).unwrap();
        assert!(r.pass, "{r:?}");
        let bad = inequality_suite_with(7, 2000, &[3.0], Some(0.5)).unwrap();
        assert!(bad.outcomes[2].violations > 0);
        assert!(inequality_suite(1, 0).is_err());
    }
}
