mod common;

use common::*;
use fplap_core::kernel::canonical;
use fplap_core::operator::seminorm_all;
use fplap_core::properties::{coercivity_lower_constant, pointwise_coercivity_constant};
use fplap_core::{
    apply_l, apply_l_naive, build_cutoff, dual_pairing, energy, eval_kernel, positive_part, scale_cylinder, seminorm,
    sobolev_ratio, truncate, Cylinder, Field, Kernel, KernelForm, KernelSpec, OperatorApplyPlan,
};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn constants_are_annihilated(seed in any::<u64>(), c in -5.0f64..5.0, p in 2.0f64..5.0) {
        let mesh = line(0.1, 2.0);
        let k = kernel(0.5, p, 2.0, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.4);
        let lu = apply_l(&plan, &Field::constant(&mesh, c, 0.4), p).unwrap();
        prop_assert!(lu.values.iter().all(|&v| v == 0.0));
        prop_assert_eq!(energy(&plan, &Field::constant(&mesh, c, 0.4), p).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), c in 0.05f64..5.0, p in 2.0f64..5.0) {
        let mesh = square(0.25, 2.0);
        let k = kernel(0.4, p, 1.0, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.0);
        let u = random_field(&mesh, &mut rng(seed), 1.0);
        let a = apply_l(&plan, &u.map(|v| c * v), p).unwrap();
        let b = apply_l(&plan, &u, p).unwrap();
        let scale = max_abs(&b.values) * c.powf(p - 1.0);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - c.powf(p - 1.0) * y).abs() <= 1e-12 * scale);
        }
        let ea = energy(&plan, &u.map(|v| c * v), p).unwrap();
        let eb = energy(&plan, &u, p).unwrap();
        prop_assert!(rel_close(ea, c.powf(p) * eb, 1e-12));
    }

    #[test]
    fn tiled_equals_naive(seed in any::<u64>(), p in 2.0f64..4.0, lambda in 1.0f64..3.0) {
        let mesh = line(0.025, 2.0);
        let k = kernel(0.6, p, lambda, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.7);
        let u = random_field(&mesh, &mut rng(seed), 2.0);
        let a = apply_l(&plan, &u, p).unwrap();
        let b = apply_l_naive(&mesh, &k, &u, p, 0.7).unwrap();
        let scale = max_abs(&b.values);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    /// The pairing runs over ordered pairs, so it equals `2 sum_i m_i (Lu)_i v_i`.
    #[test]
    fn pairing_is_weighted_sum(seed in any::<u64>(), p in 2.0f64..4.0) {
        let mesh = line(0.05, 2.0);
        let k = kernel(0.5, p, 1.5, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.1);
        let mut r = rng(seed);
        let (u, v) = (random_field(&mesh, &mut r, 1.0), random_field(&mesh, &mut r, 1.0));
        let lu = apply_l(&plan, &u, p).unwrap();
        let direct: f64 = (0..mesh.len()).map(|i| mesh.measures()[i] * lu.values[i] * v.values[i]).sum();
        let magnitude: f64 = (0..mesh.len()).map(|i| (mesh.measures()[i] * lu.values[i] * v.values[i]).abs()).sum();
        let paired = dual_pairing(&plan, &u, &v, p).unwrap();
        prop_assert!((paired - 2.0 * direct).abs() <= 2e-12 * magnitude.max(1.0), "{paired} {direct} {magnitude}");
    }

    #[test]
    fn monotone_for_shared_exterior(seed in any::<u64>(), p in 2.0f64..5.0, lambda in 1.0f64..3.0) {
        let mesh = line(0.05, 2.5);
        let k = kernel(0.5, p, lambda, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.2);
        let mut r = rng(seed);
        let g = random_exterior(&mesh, &mut r, 1.0);
        let add = |w: Field| Field::new(w.values.iter().zip(&g.values).map(|(a, b)| a + b).collect(), 0.2);
        let u = add(random_interior(&mesh, &mut r, 1.0));
        let v = add(random_interior(&mesh, &mut r, 1.0));
        let (lu, lv) = (apply_l(&plan, &u, p).unwrap(), apply_l(&plan, &v, p).unwrap());
        let gap: f64 = (0..mesh.interior_count())
            .map(|i| mesh.measures()[i] * (lu.values[i] - lv.values[i]) * (u.values[i] - v.values[i]))
            .sum();
        prop_assert!(gap >= -1e-10);
    }

    /// Pair-by-pair form of the coercivity bound, checked directly on a 2-D
    /// grid of `(a, b)` (no homogeneity reduction) with both extreme
    /// kernel values.
    #[test]
    fn coercivity_pointwise(a in -6.0f64..6.0, b in -3.0f64..3.0, p in prop::sample::select(vec![2.0, 3.0, 4.0]), lambda in prop::sample::select(vec![1.0, 2.0])) {
        let c = coercivity_lower_constant(p, lambda);
        let big_c = pointwise_coercivity_constant(p, lambda);
        let phi = |t: f64| t.abs().powf(p - 2.0) * t;
        for kappa in [1.0 / lambda, lambda] {
            let lhs = phi(a + b) * a * kappa;
            let rhs = c * a.abs().powf(p) - big_c * b.abs().powf(p);
            prop_assert!(lhs >= rhs - 1e-12 * lhs.abs().max(rhs.abs()).max(1.0), "a={a} b={b} kappa={kappa}");
        }
    }

    #[test]
    fn coercivity_on_fields(seed in any::<u64>(), p in prop::sample::select(vec![2.0, 3.0, 4.0]), lambda in prop::sample::select(vec![1.0, 2.0])) {
        let mesh = line(0.05, 2.0);
        let s = 0.5;
        let k = kernel(s, p, lambda, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.0);
        let mut r = rng(seed);
        let w = random_interior(&mesh, &mut r, 1.0);
        let g = random_exterior(&mesh, &mut r, 0.5);
        let wg = Field::new(w.values.iter().zip(&g.values).map(|(a, b)| a + b).collect(), 0.0);
        let pairing = dual_pairing(&plan, &wg, &w, p).unwrap();
        let sw = seminorm_all(&mesh, &w, s, p).unwrap();
        let sg = seminorm_all(&mesh, &g, s, p).unwrap();
        let lower = coercivity_lower_constant(p, lambda) * sw - pointwise_coercivity_constant(p, lambda) * sg;
        prop_assert!(pairing >= lower - 1e-12 * pairing.abs().max(1.0));
        // Without exterior data the explicit constant alone suffices.
        let pw = dual_pairing(&plan, &w, &w, p).unwrap();
        prop_assert!(pw >= coercivity_lower_constant(p, lambda) * sw);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), p in prop::sample::select(vec![2.0, 3.0, 4.0])) {
        let mesh = line(0.1, 2.0);
        let k = kernel(0.5, p, 2.0, seed);
        let plan = OperatorApplyPlan::new(&mesh, &k, 0.0);
        let u = random_field(&mesh, &mut rng(seed), 1.0);
        let lu = apply_l(&plan, &u, p).unwrap();
        let step = 1e-4;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..mesh.interior_count() {
            let e = |d: f64| {
                let mut v = u.clone();
                v.values[i] += d;
                energy(&plan, &v, p).unwrap()
            };
            let fd = (8.0 * (e(step) - e(-step)) - (e(2.0 * step) - e(-2.0 * step))) / (12.0 * step);
            let g = 2.0 * mesh.measures()[i] * lu.values[i];
            worst = worst.max((fd - g).abs());
            scale = scale.max(g.abs());
        }
        prop_assert!(worst <= 1e-8 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn truncation_never_increases_seminorm(seed in any::<u64>(), s in 0.05f64..0.95, p in 2.0f64..6.0, level in -1.0f64..1.0) {
        let mesh = line(0.1, 2.0);
        let u = random_field(&mesh, &mut rng(seed), 1.0);
        let region: Vec<usize> = (0..mesh.len()).collect();
        let base = seminorm(&mesh, &u, &region, s, p).unwrap();
        prop_assert!(seminorm(&mesh, &positive_part(&u), &region, s, p).unwrap() <= base * (1.0 + 1e-12));
        prop_assert!(seminorm(&mesh, &truncate(&u, level), &region, s, p).unwrap() <= base * (1.0 + 1e-12));
    }

    #[test]
    fn kernel_symmetry(seed in any::<u64>(), x in prop::array::uniform2(-3.0f64..3.0), y in prop::array::uniform2(-3.0f64..3.0), t in 0.0f64..5.0) {
        prop_assume!(x != y);
        let c = KernelSpec::canonical_kernel(0.5, 3.0).unwrap();
        prop_assert_eq!(eval_kernel(&c, 2, &x, &y, t).unwrap(), eval_kernel(&c, 2, &y, &x, t).unwrap());
        let m = KernelSpec::new(0.5, 3.0, 2.0, KernelForm::Modulated { seed }).unwrap();
        let (a, b) = (m.eval(2, &x, &y, t).unwrap(), m.eval(2, &y, &x, t).unwrap());
        prop_assert!(rel_close(a, b, 1e-14));
    }

    #[test]
    fn canonical_kernel_scaling(r in 0.01f64..10.0, c in 0.1f64..10.0, s in 0.05f64..0.95, p in 2.0f64..5.0, dim in 1usize..=2) {
        let sp = s * p;
        let expect = c.powf(-(dim as f64 + sp)) * canonical(dim, sp, r);
        prop_assert!(rel_close(canonical(dim, sp, c * r), expect, 1e-12));
    }

    #[test]
    fn cylinder_scale_composition(a in 0.1f64..4.0, b in 0.1f64..4.0, r in 0.1f64..3.0, t in -1.0f64..1.0, d in 0.1f64..2.0, s in 0.1f64..0.9, p in 2.0f64..5.0) {
        let q = Cylinder::new([0.3, -0.2], r, t, d).unwrap();
        let two = scale_cylinder(&scale_cylinder(&q, a, s, p).unwrap(), b, s, p).unwrap();
        let one = scale_cylinder(&q, a * b, s, p).unwrap();
        prop_assert!(rel_close(two.radius, one.radius, 2.5e-16));
        prop_assert!(rel_close(two.duration, one.duration, 1e-12));
        prop_assert_eq!(two.t_end, one.t_end);
        prop_assert_eq!(two.center, one.center);
    }

    #[test]
    fn dyadic_scale_composition_is_exact(i in -4i32..4, j in -4i32..4, r in 0.1f64..3.0) {
        let (a, b) = (2f64.powi(i), 2f64.powi(j));
        let q = Cylinder::new([0.0, 0.0], r, 0.5, 0.25).unwrap();
        let two = scale_cylinder(&scale_cylinder(&q, a, 0.5, 3.0).unwrap(), b, 0.5, 3.0).unwrap();
        prop_assert_eq!(two.radius, scale_cylinder(&q, a * b, 0.5, 3.0).unwrap().radius);
    }

    #[test]
    fn cutoff_bounds_on_mesh(r_in in 0.1f64..0.5, gap in 0.05f64..0.5, t_out in 0.0f64..0.5, dt in 0.05f64..0.5) {
        let mesh = square(0.05, 2.0);
        let cut = build_cutoff(r_in, r_in + gap, t_out, t_out + dt, [0.1, 0.0]).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        prop_assert!(cut.check_bounds(&mesh, &times));
    }
}

#[test]
fn modulated_kernel_sandwich() {
    let mesh = square(0.1, 2.0);
    for seed in 0..5 {
        let k = KernelSpec::new(0.5, 3.0, 2.0, KernelForm::Modulated { seed }).unwrap();
        let rep = fplap_core::validate_ellipticity(&k, &mesh, 2000, 3.0, seed).unwrap();
        assert!(rep.pass && rep.min_ratio >= 0.5 && rep.max_ratio <= 2.0, "{rep:?}");
        assert!(rep.max_ratio > 1.0 && rep.min_ratio < 1.0);
    }
}

/// A kernel that breaks the sandwich on one pair.
struct Spiked;

impl Kernel for Spiked {
    fn s(&self) -> f64 {
        0.5
    }
    fn p(&self) -> f64 {
        2.0
    }
    fn lambda(&self) -> f64 {
        2.0
    }
    fn is_time_dependent(&self) -> bool {
        false
    }
    fn modulation(&self, x: &[f64; 2], y: &[f64; 2], _t: f64) -> f64 {
        if x[0] > 0.9 || y[0] > 0.9 {
            3.0
        } else {
            1.0
        }
    }
}

#[test]
fn sandwich_violation_is_located() {
    let mesh = line(0.1, 1.0);
    let rep = fplap_core::validate_ellipticity(&Spiked, &mesh, 5000, 1.0, 9).unwrap();
    assert!(!rep.pass);
    assert_eq!(rep.worst_ratio, 3.0);
    assert!(rep.worst_x[0] > 0.9 || rep.worst_y[0] > 0.9);
}

#[test]
fn two_node_toy_oracle() {
    let mesh = fplap_core::Mesh::from_nodes(1, vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 1.0], vec![true, true], 1.0)
        .unwrap();
    let k = KernelSpec::canonical_kernel(0.5, 2.0).unwrap();
    let plan = OperatorApplyPlan::new(&mesh, &k, 0.0);
    let u = Field::new(vec![0.0, 1.0], 0.0);
    assert_eq!(apply_l(&plan, &u, 2.0).unwrap().values, vec![-1.0, 1.0]);
    assert_eq!(energy(&plan, &u, 2.0).unwrap(), 1.0);
    assert_eq!(seminorm(&mesh, &u, &[0, 1], 0.5, 2.0).unwrap(), 2.0);
}

#[test]
fn sobolev_ratio_bump_is_stable_under_refinement() {
    let bump = fplap_core::ScalarFn::bump(1.0, [0.0, 0.0], 0.6);
    let ratio = |h: f64| {
        let mesh = square(h, 2f64.sqrt());
        let n0 = mesh.interior_count();
        let u = Field::new(
            mesh.coords().iter().enumerate().map(|(i, x)| if i < n0 { bump.eval(x, 0.0) } else { 0.0 }).collect(),
            0.0,
        );
        sobolev_ratio(&mesh, &u, 2.0, 0.5, 2.0).unwrap()
    };
    let (a, b) = (ratio(0.1), ratio(0.05));
    assert!(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite());
    assert!(a / b < 2.0 && b / a < 2.0, "{a} vs {b}");
}

#[test]
fn sobolev_ratio_bounded_on_random_fields() {
    let mesh = line(0.05, 1.0);
    let mut worst: f64 = 0.0;
    let mut r = rng(17);
    for _ in 0..200 {
        let u = random_interior(&mesh, &mut r, 1.0);
        worst = worst.max(sobolev_ratio(&mesh, &u, 2.0, 0.3, 2.0).unwrap());
    }
    // Random fields are rough, so the ratio stays far below the bump's.
    assert!(worst.is_finite() && worst > 0.0);
    let zero = Field::constant(&mesh, 0.0, 0.0);
    assert_eq!(sobolev_ratio(&mesh, &zero, 2.0, 0.3, 2.0).unwrap(), 0.0);
}
