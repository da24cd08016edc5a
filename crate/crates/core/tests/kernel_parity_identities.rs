use bkap_core::grid::hermite_rule;
use bkap_core::physics::RandomKernel;
use proptest::prelude::*;

const N_V: usize = 12;

fn kernels() -> Vec<(&'static str, RandomKernel)> {
    vec![
        ("constant", RandomKernel::constant(2.0)),
        ("affine", RandomKernel::affine_in_z(2.0, 1.0)),
        ("gaussian exchange", RandomKernel::gaussian_exchange()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// `2∫σ(v,w) r(w) dw = ∫σ(v,w) f dw + ∫σ(-v,w) f dw` and
    /// `∫σ(v,w) j(w) dw = (∫σ(v,w) f dw - ∫σ(-v,w) f dw)/(2ε)` on the quadrature rule.
    #[test]
    fn even_odd_kernel_identities(
        f in prop::collection::vec(0.0..3.0_f64, N_V),
        log_eps in -6.0..0.0_f64, z in -1.0..1.0_f64, x in 0.0..1.0_f64, beta in 0.5..1.5_f64,
    ) {
        let eps = 10f64.powf(log_eps);
        let grid = hermite_rule(N_V, beta).unwrap();
        let r: Vec<f64> = (0..N_V).map(|n| 0.5 * (f[n] + f[grid.reflect[n]])).collect();
        let j: Vec<f64> = (0..N_V).map(|n| 0.5 * (f[n] - f[grid.reflect[n]]) / eps).collect();
        for (name, k) in kernels() {
            for m in grid.first_positive()..N_V {
                let v = grid.nodes[m];
                let int = |g: &dyn Fn(usize) -> f64, vv: f64| -> f64 {
                    (0..N_V).map(|n| grid.weights[n] * k.eval(x, vv, grid.nodes[n], z) * g(n)).sum()
                };
                let sf_plus = int(&|n| f[n], v);
                let sf_minus = int(&|n| f[n], -v);
                let scale = 1.0 + sf_plus.abs() + sf_minus.abs();
                let lhs1 = 2.0 * int(&|n| r[n], v);
                prop_assert!((lhs1 - sf_plus - sf_minus).abs() <= 1e-12 * scale, "{name}");
                let lhs2 = int(&|n| j[n], v);
                prop_assert!((lhs2 - (sf_plus - sf_minus) / (2.0 * eps)).abs() * eps <= 1e-12 * scale, "{name}");
            }
        }
    }

    /// For kernels invariant under `w -> -w` the odd part integrates to zero.
    #[test]
    fn odd_part_vanishes_for_rotation_invariant_kernels(
        j in prop::collection::vec(-3.0..3.0_f64, N_V), z in -1.0..1.0_f64, beta in 0.5..1.5_f64,
    ) {
        let grid = hermite_rule(N_V, beta).unwrap();
        let odd: Vec<f64> = (0..N_V).map(|n| 0.5 * (j[n] - j[grid.reflect[n]])).collect();
        for k in [RandomKernel::constant(2.0), RandomKernel::affine_in_z(2.0, 1.0)] {
            for m in 0..N_V {
                let s: f64 = (0..N_V).map(|n| grid.weights[n] * k.eval(0.3, grid.nodes[m], grid.nodes[n], z) * odd[n]).sum();
                prop_assert!(s.abs() <= 1e-12);
            }
        }
    }
}
