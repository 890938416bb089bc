#![allow(dead_code)]

use fplap_core::{build_mesh, Field, KernelForm, KernelSpec, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn line(h: f64, r_ext: f64) -> Mesh {
    build_mesh(1, &[(-1.0, 1.0)], h, r_ext).unwrap()
}

pub fn square(h: f64, r_ext: f64) -> Mesh {
    build_mesh(2, &[(-1.0, 1.0), (-1.0, 1.0)], h, r_ext).unwrap()
}

pub fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    Field::new((0..mesh.len()).map(|_| rng.random_range(-amp..amp)).collect(), 0.0)
}

/// Random values on the interior, zero outside.
pub fn random_interior(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    let n0 = mesh.interior_count();
    Field::new(
        (0..mesh.len()).map(|i| if i < n0 { rng.random_range(-amp..amp) } else { 0.0 }).collect(),
        0.0,
    )
}

/// Random values on the exterior, zero inside.
pub fn random_exterior(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    let n0 = mesh.interior_count();
    Field::new(
        (0..mesh.len()).map(|i| if i >= n0 { rng.random_range(-amp..amp) } else { 0.0 }).collect(),
        0.0,
    )
}

/// Canonical for `lambda == 1`, seeded modulation otherwise.
pub fn kernel(s: f64, p: f64, lambda: f64, seed: u64) -> KernelSpec {
    if lambda == 1.0 {
        KernelSpec::canonical_kernel(s, p).unwrap()
    } else {
        KernelSpec::new(s, p, lambda, KernelForm::Modulated { seed }).unwrap()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
