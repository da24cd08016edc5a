use bkap_core::grid::{build_mesh, PhaseGrids};
use bkap_core::kinetic_ap::{reconstruct, theta_coefficients, ParityState};
use bkap_core::physics::{SampleOperators, VelocityField};
use bkap_core::problems::{build_inputs, DopingSpec, InitialSpec, KernelSpec};
use bkap_core::Species;
use proptest::prelude::*;

const N_X: usize = 4;
const N_V: usize = 8;

fn grids(beta: f64) -> PhaseGrids {
    PhaseGrids::new(build_mesh(N_X, 0.0, 1.0).unwrap(), N_V, beta).unwrap()
}

fn field(values: &[f64]) -> VelocityField {
    VelocityField::from_fn(N_X, N_V, |i, m| values[i * N_V + m])
}

fn cells() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..2.0_f64, N_X * N_V)
}

fn odd_cells() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0_f64, N_X * N_V)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn parity_sources_match_projected_direct_operator(
        r1 in cells(), r2 in cells(), j1 in odd_cells(), j2 in odd_cells(),
        log_eps in -3.0..0.0_f64, z in -1.0..1.0_f64, beta in 0.5..1.5_f64,
    ) {
        let eps = 10f64.powf(log_eps);
        let g = grids(beta);
        let inputs = build_inputs(
            KernelSpec::Affine { a: 2.0, b: 1.0 },
            DopingSpec::Profile { amplitude: 0.5 },
            InitialSpec::Maxwellian,
            beta,
        ).unwrap();
        let ops = SampleOperators::new(&inputs, &g, z).unwrap();
        let mut state = ParityState {
            r: [field(&r1), field(&r2)],
            j: [field(&j1), field(&j2)],
            time: 0.0,
        };
        // even parts even in v, odd parts odd
        for s in 0..2 {
            let grid = &g.velocity[s];
            for i in 0..N_X {
                for m in 0..N_V {
                    let mr = grid.reflect[m];
                    if m < mr {
                        let v = state.j[s].get(i, m);
                        state.j[s].set(i, mr, -v);
                        let e = state.r[s].get(i, m);
                        state.r[s].set(i, mr, e);
                    }
                }
            }
        }
        let f = reconstruct(&state, eps);
        let (i_n, i_p) = ops.apply_i_direct(&g, &f[0], &f[1]);
        let src = ops.apply_parity_sources(&g, [&state.r[0], &state.r[1]], [&state.j[0], &state.j[1]], eps);
        for (s, direct) in [(0, &i_n), (1, &i_p)] {
            let grid = &g.velocity[s];
            for i in 0..N_X {
                for m in 0..N_V {
                    let mr = grid.reflect[m];
                    let plus = 0.5 * (direct.get(i, m) + direct.get(i, mr));
                    let minus = 0.5 * (direct.get(i, m) - direct.get(i, mr)) / eps;
                    let scale = 1.0 + plus.abs();
                    prop_assert!((src.plus[s].get(i, m) - plus).abs() <= 1e-10 * scale);
                    prop_assert!((src.minus[s].get(i, m) - minus).abs() * eps <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn theta_coefficients_interpolate_between_regimes(
        log_eps in -6.0..1.0_f64, dt in 1e-7..1e-2_f64, eta in 0.1..10.0_f64, lambda in 0.1..10.0_f64,
    ) {
        let eps = 10f64.powf(log_eps);
        let (t1, t2, t3) = theta_coefficients(eps, dt, eta, lambda);
        prop_assert!(t1 > 0.0 && t1 <= 1.0 / eta * (1.0 + 1e-12));
        prop_assert!(t2 > 0.0 && t2 <= 1.0);
        prop_assert!(t3 >= 0.0 && t3 <= 1.0 / lambda * (1.0 + 1e-12));
        prop_assert!(t2 + lambda * t3 <= 1.0 + 1e-12);
        if eps >= 1.0 {
            prop_assert!(t3.abs() <= 1e-15 * dt / (eps * eps));
        }
        let (s1, s2, s3) = theta_coefficients(eps * 1e-4, dt, eta, lambda);
        if eps < 1e-3 {
            prop_assert!((s1 * eta - 1.0).abs() < 1e-6);
            prop_assert!(s2 < 1e-6);
            prop_assert!((s3 * lambda - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn collision_operator_conserves_density(
        r in cells(), z in -1.0..1.0_f64, beta in 0.5..1.5_f64, a in 1.5..3.0_f64, b in -1.0..1.0_f64,
    ) {
        let g = grids(beta);
        let inputs = build_inputs(
            KernelSpec::Affine { a, b },
            DopingSpec::Uniform(1.0),
            InitialSpec::Maxwellian,
            beta,
        ).unwrap();
        let ops = SampleOperators::new(&inputs, &g, z).unwrap();
        for s in Species::BOTH {
            let grid = g.species(s);
            let q = ops.apply_q(s, grid, &field(&r));
            let mass = q.density(grid);
            let reference = field(&r).density(grid);
            for (qm, rm) in mass.iter().zip(&reference) {
                prop_assert!(qm.abs() <= 1e-12 * (1.0 + a) * rm.abs().max(1.0));
            }
        }
    }
}
