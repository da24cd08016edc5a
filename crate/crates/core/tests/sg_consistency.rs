use bkap_core::gpc::{assemble_tensors, legendre_basis, AssemblyOptions};
use bkap_core::grid::{build_mesh, PhaseGrids};
use bkap_core::kinetic_ap::{ApConfig, ApSolver, Limiter};
use bkap_core::physics::RandomInputs;
use bkap_core::problems::{build_inputs, DopingSpec, InitialSpec, KernelSpec};
use bkap_core::sg_solver::SgSolver;
use bkap_core::uq_harness::{convergence_study_k, quadrature_stats, run_collocation, shared_penalty};

const BETA: f64 = 0.9;

fn grids(n_cells: usize, n_v: usize) -> PhaseGrids {
    PhaseGrids::new(build_mesh(n_cells, 0.0, 1.0).unwrap(), n_v, BETA).unwrap()
}

fn deterministic_inputs() -> RandomInputs {
    build_inputs(KernelSpec::Constant(2.0), DopingSpec::Profile { amplitude: 0.0 }, InitialSpec::Maxwellian, BETA).unwrap()
}

fn random_inputs() -> RandomInputs {
    build_inputs(
        KernelSpec::Affine { a: 2.0, b: 1.0 },
        DopingSpec::Profile { amplitude: 0.5 },
        InitialSpec::Maxwellian,
        BETA,
    )
    .unwrap()
}

fn config(dt: f64) -> ApConfig {
    ApConfig::new(1e-3, dt, BETA, 0.002, (0.0, 5.0))
}

fn sg(grids: &PhaseGrids, inputs: &RandomInputs, cfg: &ApConfig, k: usize) -> SgSolver {
    let basis = legendre_basis(k).unwrap();
    let tensors = assemble_tensors(&basis, inputs, grids, AssemblyOptions::default()).unwrap();
    SgSolver::new(grids.clone(), inputs, tensors, cfg.clone()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_mode_tracks_deterministic_solver_for_100_steps() {
    let g = grids(40, 12);
    let inputs = deterministic_inputs();
    let cfg = config(2e-6);
    let mut det = ApSolver::new(g.clone(), &inputs, 0.0, cfg.clone()).unwrap();
    let mut gal = sg(&g, &inputs, &cfg, 1);
    det.advance(100, |_| {}).unwrap();
    gal.advance(100).unwrap();
    for s in 0..2 {
        let dr = max_diff(&det.state.r[s].data, &gal.state.r[0][s].data);
        let dj = max_diff(&det.state.j[s].data, &gal.state.j[0][s].data);
        let dj_scale = det.state.j[s].max_abs().max(1.0);
        assert!(dr < 1e-10, "species {s}: r differs by {dr}");
        assert!(dj < 1e-8 * dj_scale, "species {s}: j differs by {dj}");
        let drho = max_diff(&det.macro_state.rho[s], &gal.macro_state.rho[0][s]);
        assert!(drho < 1e-10, "species {s}: rho differs by {drho}");
    }
}

#[test]
fn z_free_inputs_never_excite_higher_modes() {
    let g = grids(20, 8);
    let inputs = deterministic_inputs();
    let cfg = config(5e-6);
    let mut gal = sg(&g, &inputs, &cfg, 3);
    for _ in 0..10 {
        gal.advance(100).unwrap();
        assert!(gal.state.higher_mode_max() <= 1e-12, "{}", gal.state.higher_mode_max());
    }
}

#[test]
fn deterministic_inputs_give_vanishing_study_errors() {
    let g = grids(20, 8);
    let inputs = deterministic_inputs();
    let cfg = config(5e-6);
    let reference = run_collocation(&g, &inputs, &cfg, 4, 50).unwrap();
    let study = convergence_study_k(&g, &inputs, &cfg, &[1, 2, 3], &reference, 50).unwrap();
    for series in &study.series {
        for e in &series.values {
            assert!(*e <= 1e-12, "{} {}: {e}", series.quantity, series.statistic);
        }
    }
}

/// With the unlimited first-order transport the whole step is polynomial in the
/// modes, so the Galerkin error against a converged collocation reference decays
/// spectrally in K.
#[test]
fn first_order_galerkin_converges_spectrally() {
    let g = grids(20, 8);
    let inputs = random_inputs();
    let mut cfg = config(1e-5);
    cfg.limiter = Limiter::FirstOrder;
    cfg.eta = Some(shared_penalty(&inputs, &g, &[16]).unwrap());
    let n = 200;
    let reference = run_collocation(&g, &inputs, &cfg, 16, n).unwrap();
    let ks = [1, 2, 3, 4, 5];
    let study = convergence_study_k(&g, &inputs, &cfg, &ks, &reference, n).unwrap();
    for series in &study.series {
        let v = &series.values;
        for w in v.windows(2) {
            assert!(w[1] < w[0], "{} {}: {v:?}", series.quantity, series.statistic);
        }
        assert!(v[4] < 1e-3 * v[0], "{} {}: {v:?}", series.quantity, series.statistic);
    }
}

#[test]
fn quadrature_statistics_of_affine_samples() {
    let quad = bkap_core::gpc::z_quadrature(6).unwrap();
    let (a, b) = (1.3, -0.4);
    let samples: Vec<[Vec<f64>; 4]> = quad
        .nodes
        .iter()
        .map(|&z| std::array::from_fn(|q| vec![a * (q + 1) as f64 + b * z; 3]))
        .collect();
    let stats = quadrature_stats(&samples, &quad.weights, 0.0);
    for q in 0..4 {
        for i in 0..3 {
            assert!((stats.mean[q][i] - a * (q + 1) as f64).abs() < 1e-14);
            assert!((stats.sd[q][i] - b.abs() / 3f64.sqrt()).abs() < 1e-14);
        }
    }
}
