//! Fixtures shared by the criterion benchmarks.

use fplap_core::{build_mesh, Field, KernelSpec, Mesh, OperatorApplyPlan};

pub struct Fixture {
    pub mesh: Mesh,
    pub kernel: KernelSpec,
    pub plan: OperatorApplyPlan,
    pub u: Field,
}

/// 1-D mesh on `(-1, 1)` with `R_ext = 2`, so `N = 4 / h`, and a smooth
/// sign-changing field.
pub fn line_fixture(h: f64, p: f64) -> Fixture {
    let mesh = build_mesh(1, &[(-1.0, 1.0)], h, 2.0).expect("valid mesh");
    let kernel = KernelSpec::canonical_kernel(0.5, p).expect("valid kernel");
    let plan = OperatorApplyPlan::new(&mesh, &kernel, 0.0);
    let u = Field::new(mesh.coords().iter().map(|x| (3.0 * x[0]).sin() * (-x[0] * x[0]).exp()).collect(), 0.0);
    Fixture { mesh, kernel, plan, u }
}
