//! Kernels comparable to `|x - y|^-(n + sp)` with ellipticity constant
//! `lambda`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{distance, Mesh, Point};

/// Anything usable as a jump kernel `K(x, y, t)` on a mesh of dimension `dim`.
pub trait Kernel: Sync {
    fn s(&self) -> f64;
    fn p(&self) -> f64;
    fn lambda(&self) -> f64;
    fn is_time_dependent(&self) -> bool;

    /// Modulation factor `a(x, y, t) = K(x, y, t) |x - y|^(n + sp)`.
    fn modulation(&self, x: &Point, y: &Point, t: f64) -> f64;

    /// Kernel value for `x != y`; no diagonal check.
    #[inline]
    fn value(&self, dim: usize, x: &Point, y: &Point, t: f64) -> f64 {
        self.modulation(x, y, t) * canonical(dim, self.s() * self.p(), distance(x, y))
    }
}

/// `r^-(n + sp)`.
#[inline]
pub fn canonical(dim: usize, sp: f64, r: f64) -> f64 {
    r.powf(-(dim as f64 + sp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum KernelForm {
    /// `|x - y|^-(n + sp)`.
    Canonical,
    /// Constant factor times the canonical kernel.
    Scaled { factor: f64 },
    /// Smooth symmetric time-dependent modulation in `[1/lambda, lambda]`.
    Modulated { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    s: f64,
    p: f64,
    lambda: f64,
    form: KernelForm,
    #[serde(skip)]
    waves: Waves,
}

/// Frequencies and phase of the modulation, drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Waves {
    sum_freq: f64,
    time_freq: f64,
    phase: f64,
    dist_freq: f64,
}

impl KernelSpec {
    pub fn new(s: f64, p: f64, lambda: f64, form: KernelForm) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return Err(invalid("p", format!("must be >= 2, got {p}")));
        }
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be >= 1, got {lambda}")));
        }
        let waves = match form {
            KernelForm::Canonical => Waves::default(),
            KernelForm::Scaled { factor } => {
                if !(factor >= 1.0 / lambda && factor <= lambda) {
                    return Err(invalid(
                        "factor",
                        format!("{factor} lies outside [1/lambda, lambda] for lambda = {lambda}"),
                    ));
                }
                Waves::default()
            }
            KernelForm::Modulated { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Waves {
                    sum_freq: rng.random_range(1.0..4.0),
                    time_freq: rng.random_range(2.0..8.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    dist_freq: rng.random_range(0.5..3.0),
                }
            }
        };
        Ok(KernelSpec {
            s,
            p,
            lambda,
            form,
            waves,
        })
    }

    pub fn canonical_kernel(s: f64, p: f64) -> Result<Self> {
        Self::new(s, p, 1.0, KernelForm::Canonical)
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// `K(x, y, t)`; errors on the diagonal.
    pub fn eval(&self, dim: usize, x: &Point, y: &Point, t: f64) -> Result<f64> {
        if distance(x, y) == 0.0 {
            return Err(Error::Diagonal);
        }
        Ok(self.value(dim, x, y, t))
    }
}

impl Kernel for KernelSpec {
    fn s(&self) -> f64 {
        self.s
    }

    fn p(&self) -> f64 {
        self.p
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn is_time_dependent(&self) -> bool {
        matches!(self.form, KernelForm::Modulated { .. }) && self.lambda > 1.0
    }

    #[inline]
    fn modulation(&self, x: &Point, y: &Point, t: f64) -> f64 {
        match self.form {
            KernelForm::Canonical => 1.0,
            KernelForm::Scaled { factor } => factor,
            KernelForm::Modulated { .. } => {
                let q = (self.lambda - 1.0) / (self.lambda + 1.0);
                let w = &self.waves;
                // x + y and |x - y| are exactly symmetric under the swap.
                let sum = (x[0] + y[0]) + (x[1] + y[1]);
                let m = (w.sum_freq * sum + w.time_freq * t + w.phase).sin()
                    * (w.dist_freq * distance(x, y)).cos();
                (1.0 + q * m).clamp(1.0 / self.lambda, self.lambda)
            }
        }
    }
}

/// Free function form of [`KernelSpec::eval`].
pub fn eval_kernel(spec: &KernelSpec, dim: usize, x: &Point, y: &Point, t: f64) -> Result<f64> {
    spec.eval(dim, x, y, t)
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Ratio farthest (in log scale) from 1.
    pub worst_ratio: f64,
    pub worst_x: Point,
    pub worst_y: Point,
    pub worst_t: f64,
}

/// Samples random node pairs and times in `[0, t_max]` and checks
/// `1/lambda <= K |x - y|^(n + sp) <= lambda`.
pub fn validate_ellipticity<K: Kernel + ?Sized>(
    kernel: &K,
    mesh: &Mesh,
    samples: usize,
    t_max: f64,
    seed: u64,
) -> Result<EllipticityReport> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    if mesh.len() < 2 {
        return Err(Error::Empty("node pair set"));
    }
    let dim = mesh.dim();
    let sp = kernel.s() * kernel.p();
    let lambda = kernel.lambda();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EllipticityReport {
        pass: true,
        samples,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        worst_ratio: 1.0,
        worst_x: [0.0; 2],
        worst_y: [0.0; 2],
        worst_t: 0.0,
    };
    let coords = mesh.coords();
    let mut taken = 0;
    while taken < samples {
        let i = rng.random_range(0..mesh.len());
        let j = rng.random_range(0..mesh.len());
        if i == j {
            continue;
        }
        taken += 1;
        let t = rng.random_range(0.0..=t_max.max(0.0));
        let (x, y) = (&coords[i], &coords[j]);
        let ratio = kernel.value(dim, x, y, t) / canonical(dim, sp, distance(x, y));
        report.min_ratio = report.min_ratio.min(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
        if ratio.ln().abs() > report.worst_ratio.ln().abs() {
            report.worst_ratio = ratio;
            report.worst_x = *x;
            report.worst_y = *y;
            report.worst_t = t;
        }
        if !(ratio >= 1.0 / lambda && ratio <= lambda) {
            report.pass = false;
        }
    }
    Ok(report)
}
