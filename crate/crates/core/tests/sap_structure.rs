use bkap_core::gpc::{assemble_tensors, legendre_basis, AssemblyOptions};
use bkap_core::grid::{build_mesh, PhaseGrids};
use bkap_core::kinetic_ap::ApConfig;
use bkap_core::physics::VelocityField;
use bkap_core::problems::{build_inputs, DopingSpec, InitialSpec, KernelSpec};
use bkap_core::sg_solver::{sg_relax_j, SgContext};
use bkap_core::Species;
use nalgebra::{DMatrix, DVector};

const K: usize = 4;

/// At ε = 1e-8 the odd relaxation returns `ĵ* = -H⁻¹ D`, where the drift `D` is
/// recovered from the same update at ε = 1/2 as `D = -(ε² I + Δt H) ĵ / (Δt (1 - ε²))`.
#[test]
fn small_epsilon_odd_update_is_minus_h_inverse_drift() {
    let beta = 0.9;
    let grids = PhaseGrids::new(build_mesh(10, 0.0, 1.0).unwrap(), 8, beta).unwrap();
    let inputs = build_inputs(
        KernelSpec::Affine { a: 2.0, b: 1.0 },
        DopingSpec::Profile { amplitude: 0.5 },
        InitialSpec::Maxwellian,
        beta,
    )
    .unwrap();
    let tensors = assemble_tensors(&legendre_basis(K).unwrap(), &inputs, &grids, AssemblyOptions::default()).unwrap();
    let dt = 2e-6;
    let ctx = |eps: f64| SgContext::new(grids.clone(), tensors.clone(), ApConfig::new(eps, dt, beta, 0.002, (0.0, 5.0))).unwrap();
    let n_x = grids.n_x();
    let r: Vec<[VelocityField; 2]> = (0..K)
        .map(|k| {
            [0, 1].map(|s| {
                let g = &grids.velocity[s];
                VelocityField::from_fn(n_x, g.n_nodes, |i, m| {
                    let x = grids.mesh.centers[i];
                    g.maxwellian[m] * (1.0 + 0.3 * (k as f64 + 1.0) * (3.0 * x + k as f64).sin()) / (k + 1) as f64
                })
            })
        })
        .collect();
    let j: Vec<[VelocityField; 2]> = (0..K)
        .map(|_| [0, 1].map(|s| VelocityField::zeros(n_x, grids.velocity[s].n_nodes)))
        .collect();
    let e: Vec<Vec<f64>> = (0..K).map(|k| grids.mesh.centers.iter().map(|x| (k as f64 + 1.0) * (1.0 - x)).collect()).collect();

    let half = 0.5;
    let j_half = sg_relax_j(&ctx(half), &r, &j, &e);
    let tiny = 1e-8;
    let j_tiny = sg_relax_j(&ctx(tiny), &r, &j, &e);

    let mut worst: f64 = 0.0;
    for s in Species::BOTH {
        let si = s.index();
        for i in 0..n_x {
            for m in 0..grids.velocity[si].n_nodes {
                let h = DMatrix::from_row_slice(K, K, tensors.h_block(s, i, m));
                let jh = DVector::from_fn(K, |k, _| j_half[k][si].get(i, m));
                let lhs = DMatrix::identity(K, K) * (half * half) + &h * dt;
                let drift = -(lhs * jh) / (dt * (1.0 - half * half));
                let expected = -h.clone().lu().solve(&drift).unwrap();
                let got = DVector::from_fn(K, |k, _| j_tiny[k][si].get(i, m));
                let rel = (&got - &expected).norm() / expected.norm().max(1e-300);
                if expected.norm() > 1e-12 {
                    worst = worst.max(rel);
                }
            }
        }
    }
    assert!(worst <= 1e-6, "relative error {worst}");
}
