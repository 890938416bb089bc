//! Discrete nonlocal operator
//!
//! ```text
//! (Lu)_i = sum_{j != i} |u_i - u_j|^(p-2) (u_i - u_j) K(x_i, x_j, t) m_j
//! ```
//!
//! together with the associated energy, Gagliardo-type seminorms and the
//! tiled O(N^2) summation machinery they share.

use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{distance, Mesh};
use crate::kernel::{canonical, Kernel};

/// Node values at one time. Interior values come first, matching [`Mesh`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub time: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Field { time, values }
    }

    pub fn constant(mesh: &Mesh, c: f64, time: f64) -> Self {
        Field::new(vec![c; mesh.len()], time)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.values.iter().map(|&v| f(v)).collect(), self.time)
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.len() != mesh.len() {
            return Err(Error::MeshMismatch {
                expected: mesh.len(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// `min{u, level}`.
pub fn truncate(u: &Field, level: f64) -> Field {
    u.map(|v| v.min(level))
}

pub fn positive_part(u: &Field) -> Field {
    u.map(|v| v.max(0.0))
}

/// `u_- = (-u)_+`.
pub fn negative_part(u: &Field) -> Field {
    u.map(|v| (-v).max(0.0))
}

/// The power nonlinearity `tau -> |tau|^(p-2) tau` and its relatives, with
/// fast paths for integer exponents.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    p: f64,
    int_exp: Option<i32>,
}

impl PowerLaw {
    pub fn new(p: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(invalid("p", format!("must be >= 2, got {p}")));
        }
        let int_exp = (p.fract() == 0.0 && p <= 64.0).then_some(p as i32);
        Ok(PowerLaw { p, int_exp })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|tau|^(p-2)`.
    #[inline(always)]
    fn weight(&self, tau: f64) -> f64 {
        match self.int_exp {
            Some(2) => 1.0,
            Some(k) => tau.abs().powi(k - 2),
            None => tau.abs().powf(self.p - 2.0),
        }
    }

    #[inline(always)]
    pub fn phi(&self, tau: f64) -> f64 {
        self.weight(tau) * tau
    }

    #[inline(always)]
    pub fn dphi(&self, tau: f64) -> f64 {
        (self.p - 1.0) * self.weight(tau)
    }

    #[inline(always)]
    pub fn abs_pow(&self, tau: f64) -> f64 {
        self.weight(tau) * tau * tau
    }
}

const TILE: usize = 64;
const MAX_CHUNKS: usize = 16;

/// Pairwise weights `W_ij = K(x_i, x_j, t) m_i m_j` for `i < j`, stored as
/// dense `TILE x TILE` blocks of the upper triangle.
///
/// Row block `I` owns the tiles `(I, J)` for `J >= I`, laid out one after
/// another. Summations scatter each pair's contribution to both endpoints,
/// so every pair is visited once.
#[derive(Debug, Clone)]
pub struct OperatorApplyPlan {
    n: usize,
    n_blocks: usize,
    strip_offsets: Vec<usize>,
    weights: Vec<f64>,
    inv_measures: Vec<f64>,
    chunks: Vec<Range<usize>>,
    time: f64,
}

impl OperatorApplyPlan {
    pub fn new<K: Kernel + ?Sized>(mesh: &Mesh, kernel: &K, time: f64) -> Self {
        let n = mesh.len();
        let dim = mesh.dim();
        let n_blocks = n.div_ceil(TILE);
        let coords = mesh.coords();
        let m = mesh.measures();

        let strips: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|bi| {
                let rows = block(bi, n);
                let mut strip = Vec::with_capacity(rows.len() * (n - rows.start));
                for bj in bi..n_blocks {
                    let cols = block(bj, n);
                    for i in rows.clone() {
                        for j in cols.clone() {
                            strip.push(if j > i {
                                kernel.value(dim, &coords[i], &coords[j], time) * m[i] * m[j]
                            } else {
                                0.0
                            });
                        }
                    }
                }
                strip
            })
            .collect();

        let mut strip_offsets = Vec::with_capacity(n_blocks + 1);
        let mut total = 0;
        for s in &strips {
            strip_offsets.push(total);
            total += s.len();
        }
        strip_offsets.push(total);
        let weights = strips.concat();

        OperatorApplyPlan {
            n,
            n_blocks,
            strip_offsets,
            weights,
            inv_measures: m.iter().map(|&v| 1.0 / v).collect(),
            chunks: balanced_chunks(n, n_blocks),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `W_ij` for any ordered pair; zero on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let (bi, bj) = (i / TILE, j / TILE);
        let rows = block(bi, self.n);
        let mut offset = self.strip_offsets[bi];
        for b in bi..bj {
            offset += rows.len() * block(b, self.n).len();
        }
        let cols = block(bj, self.n);
        self.weights[offset + (i - rows.start) * cols.len() + (j - cols.start)]
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n {
            return Err(Error::MeshMismatch {
                expected: self.n,
                found: u.len(),
            });
        }
        Ok(())
    }

    /// `out_i = sum_{j != i} flux(i, j, W_ij)` for an antisymmetric flux
    /// (`flux(j, i) = -flux(i, j)`), evaluating each pair once.
    pub fn accumulate<F>(&self, flux: F, parallel: bool) -> Vec<f64>
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        self.scatter::<F, true>(flux, parallel)
    }

    /// Same as [`accumulate`](Self::accumulate) for a symmetric flux.
    pub fn accumulate_symmetric<F>(&self, flux: F, parallel: bool) -> Vec<f64>
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        self.scatter::<F, false>(flux, parallel)
    }

    fn scatter<F, const ANTI: bool>(&self, flux: F, parallel: bool) -> Vec<f64>
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        let run_chunk = |chunk: &Range<usize>| -> Vec<f64> {
            let mut local = vec![0.0; self.n];
            for bi in chunk.clone() {
                self.scatter_strip::<F, ANTI>(bi, &flux, &mut local);
            }
            local
        };
        let partials: Vec<Vec<f64>> = if parallel {
            self.chunks.par_iter().map(run_chunk).collect()
        } else {
            self.chunks.iter().map(run_chunk).collect()
        };
        // Fixed reduction order keeps the result independent of scheduling.
        let mut out = vec![0.0; self.n];
        for part in partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }

    #[inline]
    fn scatter_strip<F, const ANTI: bool>(&self, bi: usize, flux: &F, out: &mut [f64])
    where
        F: Fn(usize, usize, f64) -> f64,
    {
        let rows = block(bi, self.n);
        let mut offset = self.strip_offsets[bi];
        for bj in bi..self.n_blocks {
            let cols = block(bj, self.n);
            let width = cols.len();
            for (r, i) in rows.clone().enumerate() {
                let tile_row = &self.weights[offset + r * width..offset + (r + 1) * width];
                let first = if bj == bi { i + 1 - cols.start } else { 0 };
                let mut acc = 0.0;
                for (c, &w) in tile_row.iter().enumerate().skip(first) {
                    let j = cols.start + c;
                    let f = flux(i, j, w);
                    acc += f;
                    if ANTI {
                        out[j] -= f;
                    } else {
                        out[j] += f;
                    }
                }
                out[i] += acc;
            }
            offset += rows.len() * width;
        }
    }

    /// `sum_{i < j} term(i, j, W_ij)`.
    pub fn reduce<F>(&self, term: F) -> f64
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        let partials: Vec<f64> = self
            .chunks
            .par_iter()
            .map(|chunk| {
                let mut total = 0.0;
                for bi in chunk.clone() {
                    let rows = block(bi, self.n);
                    let mut offset = self.strip_offsets[bi];
                    for bj in bi..self.n_blocks {
                        let cols = block(bj, self.n);
                        let width = cols.len();
                        for (r, i) in rows.clone().enumerate() {
                            let tile_row =
                                &self.weights[offset + r * width..offset + (r + 1) * width];
                            let first = if bj == bi { i + 1 - cols.start } else { 0 };
                            for (c, &w) in tile_row.iter().enumerate().skip(first) {
                                total += term(i, cols.start + c, w);
                            }
                        }
                        offset += rows.len() * width;
                    }
                }
                total
            })
            .collect();
        partials.into_iter().sum()
    }

    /// `m_i (Lu)_i` on every node.
    pub fn weighted_apply(&self, u: &[f64], law: PowerLaw, parallel: bool) -> Result<Vec<f64>> {
        self.check(u)?;
        Ok(self.accumulate(|i, j, w| law.phi(u[i] - u[j]) * w, parallel))
    }

    pub fn inv_measures(&self) -> &[f64] {
        &self.inv_measures
    }
}

fn block(b: usize, n: usize) -> Range<usize> {
    b * TILE..((b + 1) * TILE).min(n)
}

/// Contiguous row-block ranges with roughly equal pair counts.
fn balanced_chunks(n: usize, n_blocks: usize) -> Vec<Range<usize>> {
    if n_blocks == 0 {
        return Vec::new();
    }
    let k = n_blocks.min(MAX_CHUNKS);
    let work = |b: usize| (n - block(b, n).start) as f64;
    let total: f64 = (0..n_blocks).map(work).sum();
    let mut chunks = Vec::with_capacity(k);
    let mut start = 0;
    let mut acc = 0.0;
    for b in 0..n_blocks {
        acc += work(b);
        let target = total * (chunks.len() + 1) as f64 / k as f64;
        if acc >= target && chunks.len() + 1 < k {
            chunks.push(start..b + 1);
            start = b + 1;
        }
    }
    chunks.push(start..n_blocks);
    chunks.retain(|c| !c.is_empty());
    chunks
}

/// `Lu` on every node; only interior entries are the operator of the
/// Dirichlet-type problem, exterior entries use the same formula.
pub fn apply_l(plan: &OperatorApplyPlan, u: &Field, p: f64) -> Result<Field> {
    let law = PowerLaw::new(p)?;
    let mut out = plan.weighted_apply(&u.values, law, true)?;
    for (o, inv) in out.iter_mut().zip(plan.inv_measures()) {
        *o *= inv;
    }
    Ok(Field::new(out, u.time))
}

/// Direct double loop evaluating the kernel for every ordered pair.
pub fn apply_l_naive<K: Kernel + ?Sized>(mesh: &Mesh, kernel: &K, u: &Field, p: f64, t: f64) -> Result<Field> {
    u.check_mesh(mesh)?;
    let law = PowerLaw::new(p)?;
    let (x, m, dim) = (mesh.coords(), mesh.measures(), mesh.dim());
    let out = (0..mesh.len())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..mesh.len() {
                if j != i {
                    acc += law.phi(u.values[i] - u.values[j]) * kernel.value(dim, &x[i], &x[j], t) * m[j];
                }
            }
            acc
        })
        .collect();
    Ok(Field::new(out, u.time))
}

/// `E(u) = (1/p) sum_{i != j} |u_i - u_j|^p W_ij` over ordered pairs.
pub fn energy(plan: &OperatorApplyPlan, u: &Field, p: f64) -> Result<f64> {
    let law = PowerLaw::new(p)?;
    plan.check(&u.values)?;
    let v = &u.values;
    Ok(2.0 / p * plan.reduce(|i, j, w| law.abs_pow(v[i] - v[j]) * w))
}

/// `<Lu, v> = sum_{i, j} |du|^(p-2) du (v_i - v_j) W_ij` over ordered pairs.
pub fn dual_pairing(plan: &OperatorApplyPlan, u: &Field, v: &Field, p: f64) -> Result<f64> {
    let law = PowerLaw::new(p)?;
    plan.check(&u.values)?;
    plan.check(&v.values)?;
    let (a, b) = (&u.values, &v.values);
    Ok(2.0 * plan.reduce(|i, j, w| law.phi(a[i] - a[j]) * (b[i] - b[j]) * w))
}

/// Discrete Gagliardo seminorm (no p-th root)
/// `sum_{i != j in region} |u_i - u_j|^p |x_i - x_j|^-(n + sp) m_i m_j`.
pub fn seminorm(mesh: &Mesh, u: &Field, region: &[usize], s: f64, p: f64) -> Result<f64> {
    u.check_mesh(mesh)?;
    if region.is_empty() {
        return Err(Error::Empty("region"));
    }
    let law = PowerLaw::new(p)?;
    let (x, m, dim) = (mesh.coords(), mesh.measures(), mesh.dim());
    let sp = s * p;
    let rows: Vec<f64> = region
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut acc = 0.0;
            for &j in &region[a + 1..] {
                let du = u.values[i] - u.values[j];
                if du != 0.0 {
                    acc += law.abs_pow(du) * canonical(dim, sp, distance(&x[i], &x[j])) * m[i] * m[j];
                }
            }
            acc
        })
        .collect();
    Ok(2.0 * rows.into_iter().sum::<f64>())
}

/// Seminorm over every mesh node.
pub fn seminorm_all(mesh: &Mesh, u: &Field, s: f64, p: f64) -> Result<f64> {
    let all: Vec<usize> = (0..mesh.len()).collect();
    seminorm(mesh, u, &all, s, p)
}

/// `||u||_{L^q}^p / [u]_{W^{s,p}}` for `u` vanishing on the exterior.
pub fn sobolev_ratio(mesh: &Mesh, u: &Field, q: f64, s: f64, p: f64) -> Result<f64> {
    u.check_mesh(mesh)?;
    let n = mesh.dim() as f64;
    if !q.is_finite() {
        return Err(invalid("q", "exponent must be finite"));
    }
    if q < p {
        return Err(invalid("q", format!("need q >= p = {p}, got {q}")));
    }
    if s * p < n {
        let critical = n * p / (n - s * p);
        if q > critical * (1.0 + 1e-12) {
            return Err(invalid("q", format!("exceeds the critical exponent {critical}")));
        }
    }
    if u.values[mesh.interior_count()..].iter().any(|&v| v != 0.0) {
        return Err(invalid("u", "must vanish on exterior nodes"));
    }
    let lq: f64 = u
        .values
        .iter()
        .zip(mesh.measures())
        .map(|(v, m)| v.abs().powf(q) * m)
        .sum::<f64>()
        .powf(1.0 / q);
    if lq == 0.0 {
        return Ok(0.0);
    }
    let semi = seminorm_all(mesh, u, s, p)?;
    Ok(lq.powf(p) / semi)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub nodes: usize,
    pub repetitions: usize,
    pub naive_secs: f64,
    pub tiled_serial_secs: f64,
    pub tiled_secs: f64,
    pub speedup: f64,
    pub serial_speedup: f64,
    pub max_rel_diff: f64,
    pub agree: bool,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |d, (x, y)| d.max((x - y).abs())) / scale
}

/// Times naive and tiled application of `L` (median over `repetitions`)
/// and cross-checks the results to 1e-12 relative.
pub fn benchmark_apply<K: Kernel + ?Sized>(
    plan: &OperatorApplyPlan,
    mesh: &Mesh,
    kernel: &K,
    u: &Field,
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(invalid("repetitions", "need at least one repetition"));
    }
    let p = kernel.p();
    let law = PowerLaw::new(p)?;
    let t = plan.time();
    let mut naive_t = Vec::new();
    let mut serial_t = Vec::new();
    let mut tiled_t = Vec::new();
    let mut naive = None;
    let mut tiled = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let a = apply_l_naive(mesh, kernel, u, p, t)?;
        naive_t.push(start.elapsed().as_secs_f64());
        naive = Some(a);

        let start = Instant::now();
        let mut b = plan.weighted_apply(&u.values, law, false)?;
        for (o, inv) in b.iter_mut().zip(plan.inv_measures()) {
            *o *= inv;
        }
        serial_t.push(start.elapsed().as_secs_f64());
        std::hint::black_box(&b);

        let start = Instant::now();
        let c = apply_l(plan, u, p)?;
        tiled_t.push(start.elapsed().as_secs_f64());
        tiled = Some(c);
    }
    let (naive, tiled) = (naive.unwrap(), tiled.unwrap());
    let diff = max_rel_diff(&tiled.values, &naive.values);
    let (naive_secs, tiled_serial_secs, tiled_secs) = (median(naive_t), median(serial_t), median(tiled_t));
    Ok(BenchReport {
        nodes: mesh.len(),
        repetitions,
        naive_secs,
        tiled_serial_secs,
        tiled_secs,
        speedup: naive_secs / tiled_secs,
        serial_speedup: naive_secs / tiled_serial_secs,
        max_rel_diff: diff,
        agree: diff <= 1e-12,
    })
}

/// Least-squares slope of `log(time)` against `log(size)`.
pub fn loglog_slope(sizes: &[f64], times: &[f64]) -> Result<f64> {
    if sizes.len() != times.len() || sizes.len() < 2 {
        return Err(invalid("sizes", "need at least two (size, time) points"));
    }
    let xs: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
