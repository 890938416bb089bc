//! Verification checks dispatched by `fplap verify`.

use std::path::Path;

use anyhow::{bail, Context};
use fplap_core::estimates::{
    boundedness_check, caccioppoli_report, inequality_suite, moser_ladder_exact, offset_d, tail,
    tail_finiteness_audit, BoundednessMode, TailVariant,
};
use fplap_core::properties::{operator_algebra_suite, truncation_suite, wellposedness_suite};
use fplap_core::{
    build_cutoff, io, l2_contraction_check, Kernel, solve, subsolution_residual, validate_ellipticity, Cylinder, ProblemSpec,
    Trajectory, Transform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{RunConfig, CHECKS};

pub struct Outcome {
    pub pass: bool,
    pub payload: Value,
}

struct Level {
    level: usize,
    spec: ProblemSpec,
    traj: Trajectory,
}

/// Shared state for one `verify` invocation: solved (or loaded) runs per
/// refinement level.
pub struct Runner {
    cfg: RunConfig,
    seed: u64,
    levels: Vec<usize>,
    solved: Vec<Level>,
}

impl Runner {
    pub fn new(cfg: RunConfig, seed: u64, levels: Vec<usize>, trajectory: Option<&Path>) -> anyhow::Result<Self> {
        let mut ctx = Runner {
            cfg,
            seed,
            levels,
            solved: Vec::new(),
        };
        if let Some(dir) = trajectory {
            let spec = ctx.cfg.problem(1)?;
            let traj = io::read_trajectory(dir).with_context(|| format!("loading trajectory from {}", dir.display()))?;
            let expected = spec.times();
            if traj.times() != expected || traj.fields.iter().any(|f| f.check_mesh(&spec.mesh).is_err()) {
                bail!("trajectory in {} does not match the configured mesh and time grid", dir.display());
            }
            ctx.solved.push(Level { level: 1, spec, traj });
        }
        Ok(ctx)
    }

    fn runs(&mut self) -> anyhow::Result<&[Level]> {
        for &level in &self.levels {
            if self.solved.iter().any(|l| l.level == level) {
                continue;
            }
            let spec = self.cfg.problem(level)?;
            let traj = solve(&spec, &self.cfg.step_config()).with_context(|| format!("solving refinement level {level}"))?;
            self.solved.push(Level { level, spec, traj });
        }
        self.solved.sort_by_key(|l| l.level);
        let wanted = self.levels.clone();
        self.solved.retain(|l| wanted.contains(&l.level));
        Ok(&self.solved)
    }

    pub fn run(&mut self, name: &str) -> anyhow::Result<Outcome> {
        match name {
            "algebra" => self.algebra(),
            "audit" => self.audit(),
            "boundedness" => self.boundedness(),
            "caccioppoli" => self.caccioppoli(),
            "contraction" => self.contraction(),
            "ellipticity" => self.ellipticity(),
            "inequalities" => self.inequalities(),
            "ladder" => self.ladder(),
            "subsolution" => self.subsolution(),
            "tail" => self.tail(),
            "truncation" => self.truncation(),
            "wellposedness" => self.wellposedness(),
            other => bail!("unknown check `{other}`; available: {}", CHECKS.join(", ")),
        }
    }

    fn algebra(&mut self) -> anyhow::Result<Outcome> {
        let r = operator_algebra_suite(self.seed, self.cfg.verify.fields)?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn wellposedness(&mut self) -> anyhow::Result<Outcome> {
        let r = wellposedness_suite(self.seed, 100, 10)?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn truncation(&mut self) -> anyhow::Result<Outcome> {
        let r = truncation_suite(self.seed, self.cfg.verify.fields)?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn inequalities(&mut self) -> anyhow::Result<Outcome> {
        let r = inequality_suite(self.seed, self.cfg.verify.trials)?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn ladder(&mut self) -> anyhow::Result<Outcome> {
        let l = &self.cfg.verify.ladder;
        let n = l.n.unwrap_or(self.cfg.mesh.n as f64);
        if n.fract() != 0.0 || n < 1.0 {
            bail!("verify.ladder.n: dimension must be a positive integer, got {n}");
        }
        let (s, p) = (l.s.unwrap_or(self.cfg.kernel.s), l.p.unwrap_or(self.cfg.kernel.p));
        let (ladder, exact) = moser_ladder_exact(n as usize, s, p, l.xi0, l.steps)?;
        Ok(Outcome {
            pass: exact,
            payload: json!({ "exact_identities": exact, "ladder": ladder }),
        })
    }

    fn ellipticity(&mut self) -> anyhow::Result<Outcome> {
        let kernel = self.cfg.kernel_spec()?;
        let mesh = self.cfg.mesh_with(self.cfg.mesh.h)?;
        let r = validate_ellipticity(&kernel, &mesh, self.cfg.verify.samples, self.cfg.problem.horizon, self.seed)?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn contraction(&mut self) -> anyhow::Result<Outcome> {
        let spec = self.cfg.problem(1)?;
        let a = spec.initial_field();
        let n0 = spec.mesh.interior_count();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let other: Vec<f64> = a.values[..n0].iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let b = spec.field_with_interior(&other)?;
        let r = l2_contraction_check(&spec, &a, &b, &self.cfg.step_config())?;
        Ok(Outcome {
            pass: r.pass,
            payload: serde_json::to_value(r)?,
        })
    }

    fn audit(&mut self) -> anyhow::Result<Outcome> {
        let mut out = Vec::new();
        let mut pass = true;
        for run in self.runs()? {
            let r = tail_finiteness_audit(&run.traj, &run.spec)?;
            pass &= r.all_finite;
            out.push(json!({ "level": run.level, "report": r }));
        }
        Ok(Outcome {
            pass,
            payload: json!({ "levels": out }),
        })
    }

    fn tail(&mut self) -> anyhow::Result<Outcome> {
        let cylinders = self.cfg.cylinders()?;
        let mut out = Vec::new();
        let mut pass = true;
        for run in self.runs()? {
            let (s, p) = (run.spec.kernel.s(), run.spec.p());
            for (ci, q) in cylinders.iter().enumerate() {
                let avg = tail(&run.traj, &run.spec.mesh, s, p, q, TailVariant::Average)?;
                let sup = tail(&run.traj, &run.spec.mesh, s, p, q, TailVariant::Supremum)?;
                pass &= avg.total.is_finite() && sup.total.is_finite() && sup.value >= avg.value * (1.0 - 1e-12);
                out.push(json!({ "level": run.level, "cylinder": ci, "average": avg, "supremum": sup }));
            }
        }
        Ok(Outcome {
            pass,
            payload: json!({ "cases": out }),
        })
    }

    fn caccioppoli(&mut self) -> anyhow::Result<Outcome> {
        let cylinders = self.cfg.cylinders()?;
        let xis = self.cfg.verify.xis.clone();
        let mut out = Vec::new();
        let mut pass = true;
        // C_emp per (cylinder, xi) across levels.
        let mut by_case: Vec<Vec<f64>> = vec![Vec::new(); cylinders.len() * xis.len()];
        for run in self.runs()? {
            let (s, p) = (run.spec.kernel.s(), run.spec.p());
            for (ci, q) in cylinders.iter().enumerate() {
                let cut = default_cutoff(q)?;
                let d = offset_d(&run.traj, &run.spec.mesh, q, 0.5, s, p)?;
                for (xi_i, &xi) in xis.iter().enumerate() {
                    let r = caccioppoli_report(&run.traj, &run.spec, q, &cut, xi, d)?;
                    pass &= r.c_emp.is_finite() && r.c_emp >= 0.0;
                    by_case[ci * xis.len() + xi_i].push(r.c_emp);
                    out.push(json!({ "level": run.level, "cylinder": ci, "report": r }));
                }
            }
        }
        Ok(Outcome {
            pass,
            payload: json!({ "cases": out, "refinement_ratio": by_case.iter().map(|c| spread(c)).collect::<Vec<_>>() }),
        })
    }

    fn boundedness(&mut self) -> anyhow::Result<Outcome> {
        let cylinders = self.cfg.cylinders()?;
        let sigmas = self.cfg.verify.sigmas.clone();
        let mut out = Vec::new();
        let mut pass = true;
        let mut by_case: Vec<Vec<f64>> = vec![Vec::new(); cylinders.len() * sigmas.len()];
        for run in self.runs()? {
            for (ci, q) in cylinders.iter().enumerate() {
                for (si, &sigma) in sigmas.iter().enumerate() {
                    let nonneg = boundedness_check(&run.traj, &run.spec, q, sigma, BoundednessMode::NonnegSubsolution)?;
                    let unsigned = boundedness_check(&run.traj, &run.spec, q, sigma, BoundednessMode::UnsignedSolution)?;
                    let c = nonneg.terms.c_emp.max(unsigned.terms.c_emp);
                    pass &= c.is_finite();
                    by_case[ci * sigmas.len() + si].push(c);
                    out.push(json!({ "level": run.level, "cylinder": ci, "nonneg": nonneg, "unsigned": unsigned }));
                }
            }
        }
        Ok(Outcome {
            pass,
            payload: json!({ "cases": out, "refinement_ratio": by_case.iter().map(|c| spread(c)).collect::<Vec<_>>() }),
        })
    }

    fn subsolution(&mut self) -> anyhow::Result<Outcome> {
        let limit = 10.0 * self.cfg.solver.tol;
        let mut out = Vec::new();
        let mut pass = true;
        for run in self.runs()? {
            for t in [Transform::Identity, Transform::PositivePart, Transform::NegativePart] {
                // Estimate cylinders are usually too thin for a test basis; use the
                // whole-run default.
                let r = subsolution_residual(&run.traj, &run.spec, t, &[])?;
                pass &= match t {
                    Transform::Identity => r.max_abs <= limit,
                    _ => r.residual <= limit,
                };
                out.push(json!({ "level": run.level, "report": r }));
            }
        }
        Ok(Outcome {
            pass,
            payload: json!({ "limit": limit, "cases": out }),
        })
    }
}

/// Plateau on half the radius and the later half of the time span,
/// support within `0.8 r`.
fn default_cutoff(q: &Cylinder) -> anyhow::Result<fplap_core::CutoffSpec> {
    let t0 = q.t_start();
    Ok(build_cutoff(0.5 * q.radius, 0.8 * q.radius, t0 + 0.25 * q.duration, t0 + 0.5 * q.duration, q.center)?)
}

fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::NAN
    }
}
