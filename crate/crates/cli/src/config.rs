//! Run configuration: one TOML file drives solve, verify and bench.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fplap_core::{build_mesh, Cylinder, KernelForm, KernelSpec, Mesh, ProblemSpec, ScalarFn, StepConfig};
use serde::Deserialize;

pub const CHECKS: [&str; 12] = [
    "algebra",
    "audit",
    "boundedness",
    "caccioppoli",
    "contraction",
    "ellipticity",
    "inequalities",
    "ladder",
    "subsolution",
    "tail",
    "truncation",
    "wellposedness",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub kernel: KernelSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    /// One `[lo, hi]` pair per axis.
    pub extents: Vec<[f64; 2]>,
    pub h: f64,
    pub r_ext: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FormName {
    Canonical,
    Scaled,
    Modulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub s: f64,
    pub p: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "canonical")]
    pub form: FormName,
    /// Constant factor for `form = "scaled"`.
    pub factor: Option<f64>,
    /// Modulation seed for `form = "modulated"`.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default)]
    pub exterior: ScalarFn,
    #[serde(default)]
    pub initial: ScalarFn,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub shrink: f64,
    pub initial_step: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = StepConfig::default();
        SolverSection {
            tol: d.tol,
            max_iter: d.max_iter,
            shrink: d.shrink,
            initial_step: d.initial_step,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSection {
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_end: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSection {
    pub n: Option<f64>,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub xi0: f64,
    pub steps: usize,
}

impl Default for LadderSection {
    fn default() -> Self {
        LadderSection {
            n: None,
            s: None,
            p: None,
            xi0: 2.0,
            steps: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub checks: Vec<String>,
    pub cylinders: Vec<CylinderSection>,
    pub sigmas: Vec<f64>,
    pub xis: Vec<f64>,
    /// Level `l` halves both `h` and `dt` `l - 1` times.
    pub refine: Vec<usize>,
    pub seed: u64,
    /// Trials for the inequality suite.
    pub trials: usize,
    /// Random fields for the algebra and truncation suites.
    pub fields: usize,
    pub samples: usize,
    pub ladder: LadderSection,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            checks: Vec::new(),
            cylinders: Vec::new(),
            sigmas: vec![0.5],
            xis: vec![1.0],
            refine: vec![1],
            seed: 0,
            trials: 100_000,
            fields: 50,
            samples: 10_000,
            ladder: LadderSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Mesh widths of the sweep; the rest of the mesh comes from `[mesh]`.
    pub h: Vec<f64>,
    pub reps: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { h: Vec::new(), reps: 3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}

fn canonical() -> FormName {
    FormName::Canonical
}

fn point(v: &[f64], what: &str) -> anyhow::Result<[f64; 2]> {
    match v {
        [x] => Ok([*x, 0.0]),
        [x, y] => Ok([*x, *y]),
        _ => bail!("{what}: expected 1 or 2 coordinates, got {}", v.len()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        for name in &self.verify.checks {
            if !CHECKS.contains(&name.as_str()) {
                bail!("verify.checks: unknown check `{name}`; available: {}", CHECKS.join(", "));
            }
        }
        if self.verify.refine.contains(&0) {
            bail!("verify.refine: levels must be >= 1");
        }
        if self.mesh.extents.len() != self.mesh.n {
            bail!("mesh.extents: need {} ranges for n = {}", self.mesh.n, self.mesh.n);
        }
        // Surface kernel and step errors at load time.
        self.kernel_spec()?;
        self.step_config().validate()?;
        Ok(())
    }

    pub fn kernel_spec(&self) -> anyhow::Result<KernelSpec> {
        let k = &self.kernel;
        let form = match k.form {
            FormName::Canonical => KernelForm::Canonical,
            FormName::Scaled => KernelForm::Scaled {
                factor: k.factor.context("kernel.factor: required for form = \"scaled\"")?,
            },
            FormName::Modulated => KernelForm::Modulated { seed: k.seed },
        };
        Ok(KernelSpec::new(k.s, k.p, k.lambda, form)?)
    }

    pub fn step_config(&self) -> StepConfig {
        let s = &self.solver;
        StepConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            shrink: s.shrink,
            initial_step: s.initial_step,
        }
    }

    pub fn mesh_with(&self, h: f64) -> anyhow::Result<Mesh> {
        let extents: Vec<(f64, f64)> = self.mesh.extents.iter().map(|[a, b]| (*a, *b)).collect();
        Ok(build_mesh(self.mesh.n, &extents, h, self.mesh.r_ext)?)
    }

    /// Problem at refinement `level` (1 = as configured).
    pub fn problem(&self, level: usize) -> anyhow::Result<ProblemSpec> {
        let f = 0.5f64.powi(level as i32 - 1);
        let mesh = self.mesh_with(self.mesh.h * f)?;
        let p = &self.problem;
        Ok(ProblemSpec::new(
            mesh,
            self.kernel_spec()?,
            p.exterior.clone(),
            p.initial.clone(),
            p.horizon,
            p.dt * f,
        )?)
    }

    /// Configured cylinders, or one centred in the domain with half its
    /// inradius spanning the whole run.
    pub fn cylinders(&self) -> anyhow::Result<Vec<Cylinder>> {
        if self.verify.cylinders.is_empty() {
            let half = self.mesh.extents.iter().map(|[a, b]| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
            let c: Vec<f64> = self.mesh.extents.iter().map(|[a, b]| 0.5 * (a + b)).collect();
            let h = self.problem.horizon;
            return Ok(vec![Cylinder::new(point(&c, "mesh.extents")?, 0.5 * half, h, h)?]);
        }
        self.verify
            .cylinders
            .iter()
            .map(|c| Ok(Cylinder::new(point(&c.center, "verify.cylinders.center")?, c.radius, c.t_end, c.duration)?))
            .collect()
    }
}
