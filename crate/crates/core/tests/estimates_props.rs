mod common;

use common::*;
use fplap_core::estimates::{
    ball_complement_mass, caccioppoli_report, moser_ladder, offset_d, tail, tail_finiteness_audit, TailVariant,
};
use fplap_core::{build_cutoff, solve, Cylinder, Field, KernelSpec, ProblemSpec, ScalarFn, StepConfig, Trajectory};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn snapshots(mesh: &fplap_core::Mesh, times: &[f64], f: impl Fn(&[f64; 2], f64) -> f64) -> Trajectory {
    Trajectory {
        fields: times
            .iter()
            .map(|&t| Field::new(mesh.coords().iter().map(|x| f(x, t)).collect(), t))
            .collect(),
        stats: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn tail_scales_linearly(seed in any::<u64>(), c in 0.05f64..20.0, p in 2.0f64..5.0, r in 0.2f64..0.9) {
        let mesh = line(0.05, 3.0);
        let times: Vec<f64> = (0..=5).map(|k| 0.1 * k as f64).collect();
        let mut g = rng(seed);
        let base = Trajectory {
            fields: times.iter().map(|&t| Field { time: t, ..random_field(&mesh, &mut g, 1.0) }).collect(),
            stats: Vec::new(),
        };
        let scaled = base.map(|f| f.map(|v| c * v));
        let q = Cylinder::new([0.1, 0.0], r, 0.5, 0.3).unwrap();
        for variant in [TailVariant::Average, TailVariant::Supremum] {
            let a = tail(&base, &mesh, 0.5, p, &q, variant).unwrap();
            let b = tail(&scaled, &mesh, 0.5, p, &q, variant).unwrap();
            prop_assert!(rel_close(b.value, c * a.value, 1e-12));
            prop_assert!(rel_close(b.total, c * a.total, 1e-12));
        }
    }

    #[test]
    fn supremum_tail_dominates_average(seed in any::<u64>(), p in 2.0f64..5.0, r in 0.2f64..0.9, dur in 0.05f64..0.5) {
        let mesh = line(0.05, 3.0);
        let times: Vec<f64> = (0..=10).map(|k| 0.05 * k as f64).collect();
        let mut g = rng(seed);
        let traj = Trajectory {
            fields: times.iter().map(|&t| Field { time: t, ..random_field(&mesh, &mut g, 1.0) }).collect(),
            stats: Vec::new(),
        };
        let q = Cylinder::new([0.0, 0.0], r, 0.5, dur).unwrap();
        let avg = tail(&traj, &mesh, 0.5, p, &q, TailVariant::Average).unwrap();
        let sup = tail(&traj, &mesh, 0.5, p, &q, TailVariant::Supremum).unwrap();
        prop_assert!(sup.value >= avg.value * (1.0 - 1e-14));
        prop_assert!(avg.remainder >= 0.0 && sup.remainder >= 0.0);
    }

    /// Exact rational identities on random rational tuples.
    #[test]
    fn ladder_identities_are_exact(n in 1i64..4, s_num in 1i64..20, p_num in 8i64..40, xi_num in 4i64..40, steps in 1usize..12) {
        let q = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
        let (n, s, p, xi0) = (q(n, 1), q(s_num, 21), q(p_num, 4), q(xi_num, 4));
        prop_assume!(s.clone() * p.clone() < n);
        let lad = moser_ladder(n, s, p, xi0, steps).unwrap();
        prop_assert!(lad.identities_hold());
        prop_assert!(lad.kappa_in_range());
    }

    #[test]
    fn complement_mass_is_monotone(a in 0.0f64..1.0, r1 in 1.5f64..10.0, dr in 0.1f64..10.0, sp in 0.1f64..3.0, dim in 1usize..=2) {
        let near = ball_complement_mass(dim, sp, a, r1).unwrap();
        let far = ball_complement_mass(dim, sp, a, r1 + dr).unwrap();
        prop_assert!(far < near && far > 0.0);
    }
}

#[test]
fn centred_complement_mass_matches_closed_forms() {
    // n = 1: 2 r^-sp / sp; n = 2: 2 pi r^-sp / sp.
    for (r, sp) in [(1.0, 1.0), (2.5, 0.6), (7.0, 2.2)] {
        let one = ball_complement_mass(1, sp, 0.0, r).unwrap();
        assert!(rel_close(one, 2.0 * r.powf(-sp) / sp, 1e-14));
        let two = ball_complement_mass(2, sp, 0.0, r).unwrap();
        assert!(rel_close(two, std::f64::consts::TAU * r.powf(-sp) / sp, 1e-12));
    }
    // Off-centre in 2-D against a fine polar quadrature.
    let (a, r, sp) = (0.7, 2.0, 1.3);
    let k = 20_000;
    let mut acc = 0.0;
    for j in 0..k {
        let th = (j as f64 + 0.5) / k as f64 * std::f64::consts::TAU;
        // Distance from the offset point to the circle of radius r along th.
        let rho = -a * th.cos() + (r * r - a * a * th.sin().powi(2)).sqrt();
        acc += rho.powf(-sp) / sp;
    }
    acc *= std::f64::consts::TAU / k as f64;
    assert!(rel_close(ball_complement_mass(2, sp, a, r).unwrap(), acc, 1e-9));
}

#[test]
fn offset_examples() {
    let mesh = line(0.05, 2.0);
    let times = [0.0, 1.0, 2.0];
    let zero = snapshots(&mesh, &times, |_, _| 0.0);
    // r = 1, s = 0.5, p = 4, T0 = 2.
    let q = Cylinder::new([0.0, 0.0], 1.0, 2.0, 2.0).unwrap();
    let d = offset_d(&zero, &mesh, &q, 0.5, 0.5, 4.0).unwrap();
    assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    // r^sp = T0 gives d = 1.
    let q1 = Cylinder::new([0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
    assert_eq!(offset_d(&zero, &mesh, &q1, 0.5, 0.5, 3.0).unwrap(), 1.0);
    assert!(offset_d(&zero, &mesh, &q1, 0.5, 0.5, 2.0).is_err());
}

#[test]
fn wider_plateau_raises_cutoff_terms() {
    let mesh = line(0.04, 3.0);
    let k = KernelSpec::canonical_kernel(0.5, 3.0).unwrap();
    let spec = ProblemSpec::new(mesh, k, ScalarFn::zero(), "bump(1, 0.1, 0.6)".parse().unwrap(), 0.2, 0.02).unwrap();
    let traj = solve(&spec, &StepConfig::default()).unwrap();
    let q = Cylinder::new([0.0, 0.0], 0.5, 0.2, 0.2).unwrap();
    let d = 0.5;
    let mut last = 0.0;
    for r_in in [0.1, 0.2, 0.3, 0.35] {
        let cut = build_cutoff(r_in, 0.45, 0.0, 0.1, [0.0, 0.0]).unwrap();
        let rep = caccioppoli_report(&traj, &spec, &q, &cut, 1.0, d).unwrap();
        let grow = rep.r1 + rep.r4;
        assert!(grow > last, "r_in = {r_in}: {grow} <= {last}");
        last = grow;
    }
}

#[test]
fn audit_flags_growing_data() {
    let mesh = line(0.1, 4.0);
    let k = KernelSpec::canonical_kernel(0.5, 3.0).unwrap();
    // |x|^(sp/(p-1)) makes |g|^(p-1) / |x|^(n+sp) decay like 1/|x|.
    let growing = ScalarFn::from_terms(vec![fplap_core::Term::Power { coef: 1.0, exp: 0.75 }]);
    let spec = ProblemSpec::new(mesh.clone(), k, growing, ScalarFn::zero(), 0.02, 0.01).unwrap();
    let traj = solve(&spec, &StepConfig::default()).unwrap();
    let rep = tail_finiteness_audit(&traj, &spec).unwrap();
    assert!(rep.flagged && rep.all_finite, "{rep:?}");

    let bounded = ProblemSpec::new(mesh, k, ScalarFn::constant(1.0), ScalarFn::zero(), 0.02, 0.01).unwrap();
    let traj = solve(&bounded, &StepConfig::default()).unwrap();
    let rep = tail_finiteness_audit(&traj, &bounded).unwrap();
    assert!(!rep.flagged, "{rep:?}");
}
