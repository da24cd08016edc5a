//! Bipolar drift-diffusion-Poisson solver (deterministic and Galerkin-projected), the
//! `ε → 0` limit of the kinetic system.
//!
//! Densities obey `∂_t n = ∂_x J_n + R`, `∂_t p = ∂_x J_p + R` with
//! `J_n = μ_n (∂_x n + n E)`, `J_p = μ_p (∂_x p - p E)` and `R = A - n p B`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, SolverError};
use crate::gpc::SpectralTensors;
use crate::grid::{PhaseGrids, SpatialMesh, VelocityGrid};
use crate::kinetic_ap::poisson_solve;
use crate::physics::{collision_table, exchange_table, RandomInputs};
use crate::Species;

#[derive(Debug, Clone, PartialEq)]
pub struct DdState {
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub e_field: Vec<f64>,
    pub time: f64,
}

/// `A(x) = ∬ σ_I M_n(v) dw dv`, `B(x) = ∬ σ_I M_n(v) M_p(w)² dw dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecombinationCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RecombinationCoeffs {
    /// `R(n, p) = A - n p B` in cell `i`.
    pub fn rate(&self, i: usize, n: f64, p: f64) -> f64 {
        self.a[i] - n * p * self.b[i]
    }
}

pub fn recombination_coeffs(inputs: &RandomInputs, grids: &PhaseGrids, z: f64) -> Result<RecombinationCoeffs> {
    let [ge, gh] = &grids.velocity;
    let table = exchange_table(&inputs.sigma_i, ge, gh, &grids.mesh.centers, z)?;
    let nh = gh.n_nodes;
    let mut a = Vec::with_capacity(grids.n_x());
    let mut b = Vec::with_capacity(grids.n_x());
    for i in 0..grids.n_x() {
        let t = table.at(i);
        let (mut ai, mut bi) = (0.0, 0.0);
        for m in 0..ge.n_nodes {
            let outer = ge.weights[m] * ge.maxwellian[m];
            for n in 0..nh {
                let s = outer * gh.weights[n] * t[m * nh + n];
                ai += s;
                bi += s * gh.maxwellian[n] * gh.maxwellian[n];
            }
        }
        a.push(ai);
        b.push(bi);
    }
    Ok(RecombinationCoeffs { a, b })
}

/// Low-field mobility from the discrete collision operator: solves `Q h = s v M` with
/// `∑ W h = 0` and returns `-∑ W s v h`.
pub fn mobility_from_table(table: &[f64], grid: &VelocityGrid, s: f64) -> Result<f64> {
    let n = grid.n_nodes;
    let lambda: Vec<f64> = (0..n)
        .map(|m| (0..n).map(|k| grid.weights[k] * table[m * n + k] * grid.maxwellian[k]).sum())
        .collect();
    // (Q - M Wᵀ) h = s v M enforces ∑ W h = 0 because ∑ W Q h = 0 and ∑ W M = 1
    let mat = DMatrix::from_fn(n, n, |m, k| {
        let mut q = grid.maxwellian[m] * grid.weights[k] * table[m * n + k];
        if m == k {
            q -= lambda[m];
        }
        q - grid.maxwellian[m] * grid.weights[k]
    });
    let rhs = DVector::from_fn(n, |m, _| s * grid.nodes[m] * grid.maxwellian[m]);
    let h = mat.lu().solve(&rhs).ok_or_else(|| SolverError::Singular {
        context: "mobility solve".into(),
    })?;
    Ok(-(0..n).map(|m| grid.weights[m] * s * grid.nodes[m] * h[m]).sum::<f64>())
}

/// Per-cell mobilities `(μ_{0,n}, μ_{0,p})` at sample `z`. Velocity-independent
/// kernels use the closed form `1/σ_1`, `β/σ_2`.
pub fn mobilities(inputs: &RandomInputs, grids: &PhaseGrids, z: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut out = [Vec::new(), Vec::new()];
    for sp in Species::BOTH {
        let kernel = inputs.collision_kernel(sp);
        let grid = grids.species(sp);
        let s = sp.transport_scale(grids.beta);
        let name = if sp == Species::Electron { "sigma1" } else { "sigma2" };
        let mu: Vec<f64> = if kernel.v_independent {
            grids
                .mesh
                .centers
                .iter()
                .map(|&x| {
                    let sigma = kernel.eval(x, 0.0, 0.0, z);
                    if sigma > 0.0 {
                        Ok(s * s / (sp.maxwellian_beta(grids.beta) * sigma))
                    } else {
                        Err(SolverError::InvalidKernel {
                            name,
                            reason: format!("value {sigma} is not positive"),
                        })
                    }
                })
                .collect::<Result<_>>()?
        } else {
            let table = collision_table(kernel, name, grid, &grids.mesh.centers, z)?;
            if table.shared() {
                vec![mobility_from_table(table.at(0), grid, s)?; grids.n_x()]
            } else {
                (0..grids.n_x())
                    .map(|i| mobility_from_table(table.at(i), grid, s))
                    .collect::<Result<_>>()?
            }
        };
        out[sp.index()] = mu;
    }
    let [n, p] = out;
    Ok((n, p))
}

/// Numerical-solve mobilities regardless of the kernel flags (used to cross-check
/// the closed form).
pub fn mobilities_numerical(inputs: &RandomInputs, grids: &PhaseGrids, z: f64) -> Result<(f64, f64)> {
    let x = grids.mesh.centers[0];
    let mut out = [0.0; 2];
    for sp in Species::BOTH {
        let grid = grids.species(sp);
        let name = if sp == Species::Electron { "sigma1" } else { "sigma2" };
        let table = collision_table(inputs.collision_kernel(sp), name, grid, &[x], z)?;
        out[sp.index()] = mobility_from_table(table.at(0), grid, sp.transport_scale(grids.beta))?;
    }
    Ok((out[0], out[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdConfig {
    pub dt: f64,
    pub gamma: f64,
    pub phi_bc_left: f64,
    pub phi_bc_right: f64,
    /// Dirichlet face densities.
    pub boundary_density: f64,
}

impl DdConfig {
    pub fn new(dt: f64, gamma: f64, phi_bc: (f64, f64)) -> Self {
        Self {
            dt,
            gamma,
            phi_bc_left: phi_bc.0,
            phi_bc_right: phi_bc.1,
            boundary_density: 1.0,
        }
    }

    fn phi_bc(&self) -> (f64, f64) {
        (self.phi_bc_left, self.phi_bc_right)
    }
}

/// Face fields `E_{i+1/2} = -(Φ_{i+1} - Φ_i)/Δx` for faces `0..=n` (boundary faces use
/// the Dirichlet potential half a cell away).
pub fn face_field(mesh: &SpatialMesh, phi: &[f64], phi_bc: (f64, f64)) -> Vec<f64> {
    let n = mesh.n_cells;
    let dx = mesh.dx;
    let mut e = Vec::with_capacity(n + 1);
    e.push(-(phi[0] - phi_bc.0) / (0.5 * dx));
    for i in 0..n - 1 {
        e.push(-(phi[i + 1] - phi[i]) / dx);
    }
    e.push(-(phi_bc.1 - phi[n - 1]) / (0.5 * dx));
    e
}

/// Face fluxes `μ (∂_x c + sign c E)` with ghost densities fixing the face value.
fn face_fluxes(mesh: &SpatialMesh, c: &[f64], mu: &[f64], e_face: &[f64], sign: f64, boundary: f64) -> Vec<f64> {
    let n = mesh.n_cells;
    let dx = mesh.dx;
    let mut flux = Vec::with_capacity(n + 1);
    for f in 0..=n {
        let (cl, cr, ml, mr) = if f == 0 {
            (2.0 * boundary - c[0], c[0], mu[0], mu[0])
        } else if f == n {
            (c[n - 1], 2.0 * boundary - c[n - 1], mu[n - 1], mu[n - 1])
        } else {
            (c[f - 1], c[f], mu[f - 1], mu[f])
        };
        let mu_f = 0.5 * (ml + mr);
        flux.push(mu_f * ((cr - cl) / dx + sign * 0.5 * (cl + cr) * e_face[f]));
    }
    flux
}

pub fn check_diffusive_cfl(mu_max: f64, dt: f64, dx: f64) -> Result<()> {
    let number = mu_max * dt / (dx * dx);
    if number > 0.5 {
        return Err(SolverError::Cfl {
            species: "drift-diffusion",
            tau: number,
            limit: 0.5,
        });
    }
    Ok(())
}

/// Deterministic drift-diffusion data at one sample.
#[derive(Debug, Clone)]
pub struct DdProblem {
    pub mesh: SpatialMesh,
    pub coeffs: RecombinationCoeffs,
    pub mu: [Vec<f64>; 2],
    pub doping: Vec<f64>,
    pub cfg: DdConfig,
}

impl DdProblem {
    pub fn new(inputs: &RandomInputs, grids: &PhaseGrids, z: f64, cfg: DdConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", cfg.dt)));
        }
        let coeffs = recombination_coeffs(inputs, grids, z)?;
        let (mu_n, mu_p) = mobilities(inputs, grids, z)?;
        let mu_max = mu_n.iter().chain(&mu_p).fold(0.0_f64, |a, b| a.max(*b));
        check_diffusive_cfl(mu_max, cfg.dt, grids.mesh.dx)?;
        let doping = grids.mesh.centers.iter().map(|&x| inputs.doping.eval(x, z)).collect();
        Ok(Self {
            mesh: grids.mesh.clone(),
            coeffs,
            mu: [mu_n, mu_p],
            doping,
            cfg,
        })
    }

    /// State with the given densities and the matching potential.
    pub fn state(&self, n: Vec<f64>, p: Vec<f64>) -> Result<DdState> {
        let (phi, e_field) = poisson_solve(&self.mesh, &n, &p, &self.doping, self.cfg.gamma, self.cfg.phi_bc())?;
        Ok(DdState {
            n,
            p,
            phi,
            e_field,
            time: 0.0,
        })
    }
}

/// One forward-Euler step; the potential of `state` must be current.
pub fn dd_step(state: &DdState, problem: &DdProblem) -> Result<DdState> {
    let mesh = &problem.mesh;
    let cfg = &problem.cfg;
    let e_face = face_field(mesh, &state.phi, cfg.phi_bc());
    let jn = face_fluxes(mesh, &state.n, &problem.mu[0], &e_face, 1.0, cfg.boundary_density);
    let jp = face_fluxes(mesh, &state.p, &problem.mu[1], &e_face, -1.0, cfg.boundary_density);
    let dt = cfg.dt;
    let nc = mesh.n_cells;
    let mut n = Vec::with_capacity(nc);
    let mut p = Vec::with_capacity(nc);
    for i in 0..nc {
        let r = problem.coeffs.rate(i, state.n[i], state.p[i]);
        n.push(state.n[i] + dt * ((jn[i + 1] - jn[i]) / mesh.dx + r));
        p.push(state.p[i] + dt * ((jp[i + 1] - jp[i]) / mesh.dx + r));
    }
    if n.iter().chain(&p).any(|x| !x.is_finite()) {
        return Err(SolverError::NonFinite("drift-diffusion densities"));
    }
    let (phi, e_field) = poisson_solve(mesh, &n, &p, &problem.doping, cfg.gamma, cfg.phi_bc())?;
    Ok(DdState {
        n,
        p,
        phi,
        e_field,
        time: state.time + dt,
    })
}

/// Runs `n_steps` deterministic steps.
pub fn dd_run(problem: &DdProblem, mut state: DdState, n_steps: usize) -> Result<DdState> {
    for _ in 0..n_steps {
        state = dd_step(&state, problem)?;
    }
    Ok(state)
}

/// Galerkin coefficients of the densities and potential: `rho[k][species][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinDdState {
    pub rho: Vec<[Vec<f64>; 2]>,
    pub phi: Vec<Vec<f64>>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinDdConfig {
    pub dt: f64,
    pub gamma: f64,
    pub phi_bc_left: f64,
    pub phi_bc_right: f64,
}

/// Per-mode Poisson: the mean mode carries the boundary potential, the others vanish
/// on the boundary.
pub fn galerkin_potential(
    mesh: &SpatialMesh,
    rho: &[[Vec<f64>; 2]],
    tensors: &SpectralTensors,
    gamma: f64,
    phi_bc: (f64, f64),
) -> Result<Vec<Vec<f64>>> {
    (0..rho.len())
        .map(|k| {
            let bc = if k == 0 { phi_bc } else { (0.0, 0.0) };
            let doping: Vec<f64> = (0..mesh.n_cells).map(|i| tensors.doping[i][k]).collect();
            poisson_solve(mesh, &rho[k][0], &rho[k][1], &doping, gamma, bc).map(|(phi, _)| phi)
        })
        .collect()
}

pub fn galerkin_initial(
    mesh: &SpatialMesh,
    rho: Vec<[Vec<f64>; 2]>,
    tensors: &SpectralTensors,
    cfg: &GalerkinDdConfig,
) -> Result<GalerkinDdState> {
    let phi = galerkin_potential(mesh, &rho, tensors, cfg.gamma, (cfg.phi_bc_left, cfg.phi_bc_right))?;
    Ok(GalerkinDdState { rho, phi, time: 0.0 })
}

/// One forward-Euler step of the Galerkin-projected drift-diffusion system.
pub fn dd_galerkin_step(
    state: &GalerkinDdState,
    tensors: &SpectralTensors,
    mesh: &SpatialMesh,
    cfg: &GalerkinDdConfig,
) -> Result<GalerkinDdState> {
    let k_modes = tensors.k;
    let nc = mesh.n_cells;
    let dx = mesh.dx;
    let phi_bc = (cfg.phi_bc_left, cfg.phi_bc_right);
    let e_face: Vec<Vec<f64>> = (0..k_modes)
        .map(|k| {
            let bc = if k == 0 { phi_bc } else { (0.0, 0.0) };
            face_field(mesh, &state.phi[k], bc)
        })
        .collect();
    let mut next: Vec<[Vec<f64>; 2]> = state.rho.clone();
    let mut ghost = vec![0.0; k_modes];
    let mut left = vec![0.0; k_modes];
    let mut right = vec![0.0; k_modes];
    let mut ef = vec![0.0; k_modes];
    let mut inner = vec![0.0; k_modes];
    for sp in Species::BOTH {
        let s = sp.index();
        let sign = if sp == Species::Electron { 1.0 } else { -1.0 };
        let mut flux = vec![vec![0.0; k_modes]; nc + 1];
        for (f, flux_f) in flux.iter_mut().enumerate() {
            for k in 0..k_modes {
                let boundary = if k == 0 { 1.0 } else { 0.0 };
                ef[k] = e_face[k][f];
                if f == 0 {
                    ghost[k] = 2.0 * boundary - state.rho[k][s][0];
                    left[k] = ghost[k];
                    right[k] = state.rho[k][s][0];
                } else if f == nc {
                    ghost[k] = 2.0 * boundary - state.rho[k][s][nc - 1];
                    left[k] = state.rho[k][s][nc - 1];
                    right[k] = ghost[k];
                } else {
                    left[k] = state.rho[k][s][f - 1];
                    right[k] = state.rho[k][s][f];
                }
            }
            let (cl, cr) = (f.saturating_sub(1).min(nc - 1), f.min(nc - 1));
            // ∂_x ρ̂_l + sign (Ê ⊛ ρ̂)_l at the face
            for l in 0..k_modes {
                let mut drift = 0.0;
                for m in 0..k_modes {
                    for n in 0..k_modes {
                        drift += ef[m] * 0.5 * (left[n] + right[n]) * tensors.g[(m * k_modes + n) * k_modes + l];
                    }
                }
                inner[l] = (right[l] - left[l]) / dx + sign * drift;
            }
            let ml = &tensors.mobility[s][cl];
            let mr = &tensors.mobility[s][cr];
            for k in 0..k_modes {
                flux_f[k] = (0..k_modes)
                    .map(|l| 0.5 * (ml[k * k_modes + l] + mr[k * k_modes + l]) * inner[l])
                    .sum();
            }
        }
        for i in 0..nc {
            let rec = galerkin_recombination(state, tensors, i);
            for k in 0..k_modes {
                next[k][s][i] = state.rho[k][s][i] + cfg.dt * ((flux[i + 1][k] - flux[i][k]) / dx + rec[k]);
            }
        }
    }
    if next.iter().flat_map(|m| m.iter()).flatten().any(|x| !x.is_finite()) {
        return Err(SolverError::NonFinite("Galerkin drift-diffusion densities"));
    }
    let phi = galerkin_potential(mesh, &next, tensors, cfg.gamma, phi_bc)?;
    Ok(GalerkinDdState {
        rho: next,
        phi,
        time: state.time + cfg.dt,
    })
}

/// `R_k = A_k - ∑_{m,n} ρ̂1_m ρ̂2_n B_{mnk}` in cell `i`.
pub fn galerkin_recombination(state: &GalerkinDdState, tensors: &SpectralTensors, i: usize) -> Vec<f64> {
    let k_modes = tensors.k;
    let b = &tensors.rec_b[i];
    (0..k_modes)
        .map(|k| {
            let mut acc = tensors.rec_a[i][k];
            for m in 0..k_modes {
                let r1 = state.rho[m][0][i];
                for n in 0..k_modes {
                    acc -= r1 * state.rho[n][1][i] * b[(m * k_modes + n) * k_modes + k];
                }
            }
            acc
        })
        .collect()
}

/// Largest eigenvalue over cells of the Galerkin mobility matrices, for the
/// diffusive CFL check.
pub fn galerkin_mobility_bound(tensors: &SpectralTensors) -> f64 {
    let k = tensors.k;
    let mut bound = 0.0_f64;
    for s in 0..2 {
        for m in &tensors.mobility[s] {
            let mat = DMatrix::from_row_slice(k, k, m);
            let top = mat.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            bound = bound.max(top);
        }
    }
    bound
}

pub fn dd_galerkin_run(
    state: GalerkinDdState,
    tensors: &SpectralTensors,
    mesh: &SpatialMesh,
    cfg: &GalerkinDdConfig,
    n_steps: usize,
) -> Result<GalerkinDdState> {
    check_diffusive_cfl(galerkin_mobility_bound(tensors), cfg.dt, mesh.dx)?;
    let mut s = state;
    for _ in 0..n_steps {
        s = dd_galerkin_step(&s, tensors, mesh, cfg)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;
    use crate::physics::{Doping, InitialData, RandomKernel};
    use std::f64::consts::PI;

    fn inputs() -> RandomInputs {
        RandomInputs {
            sigma1: RandomKernel::constant(2.0),
            sigma2: RandomKernel::constant(2.0),
            sigma_i: RandomKernel::gaussian_exchange(),
            doping: Doping::uniform(1.0),
            initial: InitialData::scaled_maxwellian(0.9, |_| 1.0, true),
        }
    }

    #[test]
    fn gaussian_exchange_coefficient_a_is_one() {
        let grids = PhaseGrids::new(build_mesh(4, 0.0, 1.0).unwrap(), 32, 0.9).unwrap();
        let c = recombination_coeffs(&inputs(), &grids, 0.0).unwrap();
        for a in &c.a {
            assert!((a - 1.0).abs() < 1e-10, "{a}");
        }
        assert_eq!(c.rate(0, 0.0, 3.0), c.a[0]);
        assert_eq!(c.rate(0, 3.0, 0.0), c.a[0]);
    }

    #[test]
    fn scaled_gaussian_exchange_coefficient_b() {
        let grids = PhaseGrids::new(build_mesh(4, 0.0, 1.0).unwrap(), 32, 0.9).unwrap();
        let mut inp = inputs();
        inp.sigma_i = RandomKernel::new(|_, v, w, _| 0.7 * (-(v - w) * (v - w)).exp() / PI.sqrt(), true, true);
        let c = recombination_coeffs(&inp, &grids, 0.0).unwrap();
        // Gaussian convolutions: ∫ σ_I M_n dv = 0.7 e^{-w²/3}/√(3π), then against M_p²
        let beta = 0.9;
        let exact = 0.7 * beta / (2.0 * PI) / (3.0 * PI).sqrt() * (PI / (beta + 1.0 / 3.0)).sqrt();
        assert!((c.a[0] - 0.7).abs() < 1e-10, "{}", c.a[0]);
        assert!((c.b[0] - exact).abs() < 1e-10, "{} {exact}", c.b[0]);
    }


    #[test]
    fn mobility_closed_form_and_solve_agree() {
        let grids = PhaseGrids::new(build_mesh(4, 0.0, 1.0).unwrap(), 20, 0.9).unwrap();
        let (mn, mp) = mobilities(&inputs(), &grids, 0.0).unwrap();
        assert!((mn[0] - 0.5).abs() < 1e-14);
        assert!((mp[0] - 0.45).abs() < 1e-14);
        let (nn, np) = mobilities_numerical(&inputs(), &grids, 0.0).unwrap();
        assert!((nn - 0.5).abs() < 1e-8);
        assert!((np - 0.45).abs() < 1e-8);
        let mut inp = inputs();
        inp.sigma1 = RandomKernel::affine_in_z(2.0, 0.5);
        let (mn, _) = mobilities(&inp, &grids, -1.0).unwrap();
        assert!((mn[0] - 1.0 / 1.5).abs() < 1e-14);
    }

    #[test]
    fn heat_equation_decay() {
        let mesh = build_mesh(200, 0.0, 1.0).unwrap();
        let grids = PhaseGrids::new(mesh.clone(), 8, 0.9).unwrap();
        let mut inp = inputs();
        inp.sigma_i = RandomKernel::constant(1e-300);
        let mut cfg = DdConfig::new(2e-6, 1.0, (0.0, 0.0));
        cfg.boundary_density = 0.0;
        let mut problem = DdProblem::new(&inp, &grids, 0.0, cfg).unwrap();
        problem.coeffs.a.iter_mut().for_each(|a| *a = 0.0);
        problem.coeffs.b.iter_mut().for_each(|b| *b = 0.0);
        let n0: Vec<f64> = mesh.centers.iter().map(|x| (PI * x).sin()).collect();
        // equal densities and zero doping keep the potential and field at zero
        problem.doping = vec![0.0; 200];
        let state = problem.state(n0.clone(), n0.clone()).unwrap();
        let steps = 5000;
        let out = dd_run(&problem, state, steps).unwrap();
        let t = steps as f64 * 2e-6;
        let mid = 100;
        let expected = (-0.5 * PI * PI * t).exp();
        let ratio = out.n[mid] / n0[mid];
        assert!((ratio - expected).abs() / expected < 0.02);
        let expected_p = (-0.45 * PI * PI * t).exp();
        assert!((out.p[mid] / n0[mid] - expected_p).abs() / expected_p < 0.02);
    }

    #[test]
    fn diffusive_cfl_is_checked() {
        let grids = PhaseGrids::new(build_mesh(200, 0.0, 1.0).unwrap(), 8, 0.9).unwrap();
        let cfg = DdConfig::new(1e-3, 1.0, (0.0, 0.0));
        assert!(matches!(
            DdProblem::new(&inputs(), &grids, 0.0, cfg),
            Err(SolverError::Cfl { .. })
        ));
    }
}
