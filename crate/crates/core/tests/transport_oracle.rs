use std::f64::consts::PI;

use bkap_core::grid::{build_mesh, PhaseGrids};
use bkap_core::kinetic_ap::{boundary_fill, transport_species, ApConfig, Boundary, Limiter, TransportCoefficients};
use bkap_core::physics::VelocityField;
use bkap_core::Species;

fn setup(n_cells: usize, limiter: Limiter) -> (PhaseGrids, ApConfig) {
    let grids = PhaseGrids::new(build_mesh(n_cells, 0.0, 1.0).unwrap(), 8, 1.0).unwrap();
    let mut cfg = ApConfig::new(1.0, 0.2 / n_cells as f64 / 3.0, 1.0, 0.002, (0.0, 0.0));
    cfg.limiter = limiter;
    cfg.boundary = Boundary::Periodic;
    (grids, cfg)
}

/// One upwind step of a Fourier mode `cos(2πx)` with `j = 0` versus the exact
/// discrete symbol `1 - τ (1 - e^{-iκΔx})` applied to both Riemann invariants.
#[test]
fn first_order_matches_von_neumann_symbol() {
    let n = 32;
    let (grids, cfg) = setup(n, Limiter::FirstOrder);
    let grid = &grids.velocity[0];
    let x = &grids.mesh.centers;
    let dx = grids.mesh.dx;
    let r = VelocityField::from_fn(n, grid.n_nodes, |i, _| (2.0 * PI * x[i]).cos());
    let j = VelocityField::zeros(n, grid.n_nodes);
    let (re, je) = boundary_fill(&r, &j, grid, Boundary::Periodic, 1.0);
    let zero = VelocityField::zeros(n, grid.n_nodes);
    let coeff = TransportCoefficients::new(Species::Electron, &cfg, dx);
    let (r1, j1) = transport_species(grid, &re, &je, coeff, &zero, &zero);
    let kdx = 2.0 * PI * dx;
    for m in 0..grid.n_nodes {
        let tau = (grid.nodes[m].abs() * cfg.dt / dx).abs();
        // u moves right with symbol g, w moves left with the conjugate symbol
        let (gr, gi) = (1.0 - tau * (1.0 - kdx.cos()), -tau * kdx.sin());
        for i in 0..n {
            let th = 2.0 * PI * x[i];
            let u = gr * th.cos() - gi * th.sin();
            let w = gr * th.cos() + gi * th.sin();
            let sgn = grid.nodes[m].signum();
            assert!((r1.get(i, m) - 0.5 * (u + w)).abs() < 1e-13);
            assert!((j1.get(i, m) - sgn * 0.5 * (u - w)).abs() < 1e-13);
        }
    }
}

/// The limited reconstruction converges at better than first order in space to exact
/// translation of a smooth periodic profile.
#[test]
fn minmod_translation_converges() {
    let mut errors = Vec::new();
    for n in [50, 100, 200] {
        let (grids, mut cfg) = setup(n, Limiter::Minmod);
        // forward Euler in time: dt ~ dx² isolates the spatial order
        cfg.dt = 0.5 / (n * n) as f64;
        let grid = &grids.velocity[0];
        let x = grids.mesh.centers.clone();
        let dx = grids.mesh.dx;
        let m = grid.n_nodes - 1;
        let speed = grid.nodes[m];
        let steps = (0.1 / (speed * cfg.dt)).round() as usize;
        let mut r = VelocityField::from_fn(n, grid.n_nodes, |i, _| (2.0 * PI * x[i]).sin());
        let mut j = VelocityField::zeros(n, grid.n_nodes);
        let zero = VelocityField::zeros(n, grid.n_nodes);
        let coeff = TransportCoefficients::new(Species::Electron, &cfg, dx);
        // start on the right-moving invariant so the profile translates without splitting
        for i in 0..n {
            for k in 0..grid.n_nodes {
                let v = r.get(i, k);
                j.set(i, k, grid.nodes[k].signum() * v);
            }
        }
        for _ in 0..steps {
            let (re, je) = boundary_fill(&r, &j, grid, Boundary::Periodic, 1.0);
            let out = transport_species(grid, &re, &je, coeff, &zero, &zero);
            r = out.0;
            j = out.1;
        }
        let t = steps as f64 * cfg.dt * speed;
        let err: f64 = (0..n)
            .map(|i| {
                // cell average of the translated sine
                let exact = ((2.0 * PI * (x[i] - t)).sin()) * (PI * dx).sin() / (PI * dx);
                (r.get(i, m) + j.get(i, m) - 2.0 * exact).abs() * 0.5
            })
            .sum::<f64>()
            * dx;
        errors.push(err);
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.3, "observed order {order} from {errors:?}");
    }
}
