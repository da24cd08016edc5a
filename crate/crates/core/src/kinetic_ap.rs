//! Deterministic asymptotic-preserving solver on the even/odd parity formulation:
//! BGK-penalized relaxation, Poisson refresh, and a limited second-order upwind
//! transport step, combined by first-order splitting.

use crate::error::{invalid, Result, SolverError};
use crate::grid::{centered_difference, one_sided_difference, PhaseGrids, SpatialMesh, VelocityGrid};
use crate::linalg::solve_tridiagonal;
use crate::physics::{RandomInputs, SampleOperators, SourceRows, VelocityField};
use crate::Species;

/// Ghost layers on each side of the mesh.
pub const GHOSTS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ParityState {
    pub r: [VelocityField; 2],
    pub j: [VelocityField; 2],
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub rho: [Vec<f64>; 2],
    /// `u_i = ∫ j_i v dv`.
    pub u: [Vec<f64>; 2],
    pub phi: Vec<f64>,
    pub e_field: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Maxwellian inflow with unit density at both ends.
    EquilibriumInflow,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    SelfConsistent,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limiter {
    Minmod,
    /// Zero slopes: first-order upwind, linear in the data.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub phi_bc_left: f64,
    pub phi_bc_right: f64,
    pub gamma: f64,
    pub beta: f64,
    /// BGK penalty per species; `None` selects `1.05 max λ_i`.
    pub eta: Option<[f64; 2]>,
    pub limiter: Limiter,
    pub boundary: Boundary,
    pub field: FieldMode,
    /// Switches the generation-recombination sources on or off.
    pub sources: bool,
}

impl ApConfig {
    pub fn new(epsilon: f64, dt: f64, beta: f64, gamma: f64, phi_bc: (f64, f64)) -> Self {
        Self {
            epsilon,
            dt,
            phi_bc_left: phi_bc.0,
            phi_bc_right: phi_bc.1,
            gamma,
            beta,
            eta: None,
            limiter: Limiter::Minmod,
            boundary: Boundary::EquilibriumInflow,
            field: FieldMode::SelfConsistent,
            sources: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("gamma", self.gamma),
            ("beta", self.beta),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {value}")));
            }
        }
        if !self.phi_bc_left.is_finite() || !self.phi_bc_right.is_finite() {
            return Err(invalid("phi_bc", "boundary potential must be finite"));
        }
        Ok(())
    }
}

/// `φ = min(1, 1/ε²)`.
pub fn phi_control(epsilon: f64) -> f64 {
    (1.0 / (epsilon * epsilon)).min(1.0)
}

/// Relaxation coefficients `θ_1 = Δt/(ε² + ηΔt)`, `θ_2 = ε²/(ε² + λΔt)` and
/// `θ_3 = Δt(1 - ε²φ)/(ε² + λΔt)`.
#[inline]
pub fn theta_coefficients(epsilon: f64, dt: f64, eta: f64, lambda: f64) -> (f64, f64, f64) {
    let eps2 = epsilon * epsilon;
    let phi = phi_control(epsilon);
    let denom = eps2 + lambda * dt;
    (dt / (eps2 + eta * dt), eps2 / denom, dt * (1.0 - eps2 * phi) / denom)
}

/// Minmod limiter function `ψ(θ) = max(0, min(1, θ))`.
#[inline]
pub fn minmod_psi(theta: f64) -> f64 {
    theta.min(1.0).max(0.0)
}

/// Limited slope `(forward difference) ψ(backward/forward)`, with a vanishing
/// denominator mapped to `θ = 0`.
#[inline]
pub fn limited_difference(backward: f64, forward: f64) -> f64 {
    let theta = if forward == 0.0 { 0.0 } else { backward / forward };
    forward * minmod_psi(theta)
}

/// Splits distributions into even and odd parities.
pub fn decompose(grids: &PhaseGrids, f: [&VelocityField; 2], epsilon: f64) -> ParityState {
    let mut r = [f[0].clone(), f[1].clone()];
    let mut j = [f[0].clone(), f[1].clone()];
    for s in 0..2 {
        let refl = &grids.velocity[s].reflect;
        for i in 0..f[s].n_x {
            let row = f[s].row(i);
            for (m, &mr) in refl.iter().enumerate() {
                r[s].set(i, m, 0.5 * (row[m] + row[mr]));
                j[s].set(i, m, (row[m] - row[mr]) / (2.0 * epsilon));
            }
        }
    }
    ParityState { r, j, time: 0.0 }
}

/// `f = r + ε j` at every node (the parities carry the sign of `v`).
pub fn reconstruct(state: &ParityState, epsilon: f64) -> [VelocityField; 2] {
    let build = |s: usize| {
        let mut f = state.r[s].clone();
        for (x, j) in f.data.iter_mut().zip(&state.j[s].data) {
            *x += epsilon * j;
        }
        f
    };
    [build(0), build(1)]
}

/// Initial parity state from the closure at sample `z`.
pub fn initial_state(grids: &PhaseGrids, inputs: &RandomInputs, z: f64, epsilon: f64) -> ParityState {
    let f = Species::BOTH.map(|s| {
        let g = grids.species(s);
        VelocityField::from_fn(grids.n_x(), g.n_nodes, |i, m| {
            inputs.initial.eval(s, grids.mesh.centers[i], g.nodes[m], z)
        })
    });
    decompose(grids, [&f[0], &f[1]], epsilon)
}

/// Solves `γ Φ'' = ρ_1 - ρ_2 - C` on cell centers with Dirichlet data at the
/// domain faces; returns `(Φ, E = -Φ')`.
pub fn poisson_solve(
    mesh: &SpatialMesh,
    rho1: &[f64],
    rho2: &[f64],
    doping: &[f64],
    gamma: f64,
    phi_bc: (f64, f64),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let n = mesh.n_cells;
    let h2 = mesh.dx * mesh.dx;
    let c = gamma / h2;
    let lower = vec![c; n];
    let upper = vec![c; n];
    let mut diag = vec![-2.0 * c; n];
    let mut rhs: Vec<f64> = (0..n).map(|i| rho1[i] - rho2[i] - doping[i]).collect();
    // ghost Φ_{-1} = 2Φ_L - Φ_0, Φ_n = 2Φ_R - Φ_{n-1}
    diag[0] -= c;
    diag[n - 1] -= c;
    rhs[0] -= 2.0 * c * phi_bc.0;
    rhs[n - 1] -= 2.0 * c * phi_bc.1;
    let phi = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let e_field = one_sided_difference(&phi, mesh.dx).into_iter().map(|d| -d).collect();
    Ok((phi, e_field))
}

/// Max-norm residual of the discrete Poisson system.
pub fn poisson_residual(
    mesh: &SpatialMesh,
    phi: &[f64],
    rho1: &[f64],
    rho2: &[f64],
    doping: &[f64],
    gamma: f64,
    phi_bc: (f64, f64),
) -> f64 {
    let n = mesh.n_cells;
    let h2 = mesh.dx * mesh.dx;
    (0..n)
        .map(|i| {
            let left = if i == 0 { 2.0 * phi_bc.0 - phi[0] } else { phi[i - 1] };
            let right = if i == n - 1 { 2.0 * phi_bc.1 - phi[n - 1] } else { phi[i + 1] };
            let lap = gamma * (left - 2.0 * phi[i] + right) / h2;
            (lap - (rho1[i] - rho2[i] - doping[i])).abs()
        })
        .fold(0.0, f64::max)
}

/// Parity fields extended by [`GHOSTS`] cells on each side (row `i + GHOSTS` holds
/// interior cell `i`).
///
/// Inflow boundaries set `r_ghost = 2 ρ_b M - r_mirror` so the face value of `r` is
/// the inflow Maxwellian, and copy `j` from the mirrored interior cell.
pub fn boundary_fill(
    r: &VelocityField,
    j: &VelocityField,
    grid: &VelocityGrid,
    boundary: Boundary,
    inflow_density: f64,
) -> (VelocityField, VelocityField) {
    let n_x = r.n_x;
    let n_v = r.n_v;
    let mut re = VelocityField::zeros(n_x + 2 * GHOSTS, n_v);
    let mut je = VelocityField::zeros(n_x + 2 * GHOSTS, n_v);
    for i in 0..n_x {
        re.row_mut(i + GHOSTS).copy_from_slice(r.row(i));
        je.row_mut(i + GHOSTS).copy_from_slice(j.row(i));
    }
    for g in 0..GHOSTS {
        let (left, right) = (GHOSTS - 1 - g, n_x + GHOSTS + g);
        match boundary {
            Boundary::Periodic => {
                let (src_l, src_r) = (n_x - 1 - g, g);
                re.row_mut(left).copy_from_slice(r.row(src_l));
                je.row_mut(left).copy_from_slice(j.row(src_l));
                re.row_mut(right).copy_from_slice(r.row(src_r));
                je.row_mut(right).copy_from_slice(j.row(src_r));
            }
            Boundary::EquilibriumInflow => {
                let (src_l, src_r) = (g, n_x - 1 - g);
                for m in 0..n_v {
                    let face = 2.0 * inflow_density * grid.maxwellian[m];
                    re.set(left, m, face - r.get(src_l, m));
                    re.set(right, m, face - r.get(src_r, m));
                    je.set(left, m, j.get(src_l, m));
                    je.set(right, m, j.get(src_r, m));
                }
            }
        }
    }
    (re, je)
}

/// Density and momentum moments of the parity state.
pub fn moments(grids: &PhaseGrids, state: &ParityState) -> ([Vec<f64>; 2], [Vec<f64>; 2]) {
    let rho = [0, 1].map(|s| state.r[s].density(&grids.velocity[s]));
    let u = [0, 1].map(|s| {
        let g = &grids.velocity[s];
        (0..state.j[s].n_x)
            .map(|i| {
                state.j[s]
                    .row(i)
                    .iter()
                    .zip(&g.nodes)
                    .zip(&g.weights)
                    .map(|((j, v), w)| j * v * w)
                    .sum()
            })
            .collect()
    });
    (rho, u)
}

/// Recomputes the macroscopic state, solving Poisson unless the field is switched off.
pub fn macro_state(grids: &PhaseGrids, state: &ParityState, doping: &[f64], cfg: &ApConfig) -> Result<MacroState> {
    let (rho, u) = moments(grids, state);
    let (phi, e_field) = match cfg.field {
        FieldMode::SelfConsistent => poisson_solve(
            &grids.mesh,
            &rho[0],
            &rho[1],
            doping,
            cfg.gamma,
            (cfg.phi_bc_left, cfg.phi_bc_right),
        )?,
        FieldMode::Zero => (vec![0.0; grids.n_x()], vec![0.0; grids.n_x()]),
    };
    Ok(MacroState { rho, u, phi, e_field })
}

/// CFL number `τ = √φ s_i max|v| Δt/Δx` of one species.
pub fn cfl_number(grids: &PhaseGrids, species: Species, cfg: &ApConfig) -> f64 {
    let s = species.transport_scale(cfg.beta);
    phi_control(cfg.epsilon).sqrt() * s * grids.species(species).max_speed() * cfg.dt / grids.mesh.dx
}

pub fn check_cfl(grids: &PhaseGrids, cfg: &ApConfig) -> Result<()> {
    for s in Species::BOTH {
        let tau = cfl_number(grids, s, cfg);
        if tau > 1.0 {
            return Err(SolverError::Cfl {
                species: s.name(),
                tau,
                limit: 1.0,
            });
        }
    }
    Ok(())
}

/// BGK penalties: the configured values (validated against `max λ_i`) or the default.
pub fn resolve_eta(cfg: &ApConfig, max_lambda: [f64; 2]) -> Result<[f64; 2]> {
    match cfg.eta {
        Some(eta) => {
            for s in 0..2 {
                if !(eta[s] > max_lambda[s]) {
                    return Err(invalid(
                        "eta",
                        format!("eta[{s}] = {} must exceed max lambda = {}", eta[s], max_lambda[s]),
                    ));
                }
            }
            Ok(eta)
        }
        None => Ok(max_lambda.map(|l| 1.05 * l)),
    }
}

/// Step 1: `r* = r + θ_1 Q(r)`.
pub fn relax_r(
    grids: &PhaseGrids,
    ops: &SampleOperators,
    r: &[VelocityField; 2],
    epsilon: f64,
    dt: f64,
    eta: [f64; 2],
) -> [VelocityField; 2] {
    Species::BOTH.map(|s| {
        let k = s.index();
        let theta1 = dt / (epsilon * epsilon + eta[k] * dt);
        let q = ops.apply_q(s, &grids.velocity[k], &r[k]);
        let mut out = r[k].clone();
        for (x, dq) in out.data.iter_mut().zip(&q.data) {
            *x += theta1 * dq;
        }
        out
    })
}

/// `s_i v ∂_x r ∓ E ∂_v r` for one species, with ghost-filled `∂_x`.
pub fn drift_term(
    grid: &VelocityGrid,
    mesh: &SpatialMesh,
    species: Species,
    beta: f64,
    r: &VelocityField,
    r_ghosted: &VelocityField,
    e_field: &[f64],
) -> VelocityField {
    let s = species.transport_scale(beta);
    let sign = species.field_sign();
    let (n_x, n_v) = (r.n_x, r.n_v);
    let mut out = VelocityField::zeros(n_x, n_v);
    let mut dv = vec![0.0; n_v];
    let mut column = vec![0.0; n_x + 2 * GHOSTS];
    for m in 0..n_v {
        for (i, c) in column.iter_mut().enumerate() {
            *c = r_ghosted.get(i, m);
        }
        let dx = centered_difference(&column, GHOSTS, mesh.dx);
        for i in 0..n_x {
            out.set(i, m, s * grid.nodes[m] * dx[i]);
        }
    }
    for i in 0..n_x {
        grid.differentiate(r.row(i), &mut dv);
        for m in 0..n_v {
            let v = out.get(i, m) + sign * e_field[i] * dv[m];
            out.set(i, m, v);
        }
    }
    out
}

/// Step 2: `j* = θ_2 j - θ_3 (s_i v ∂_x r* ∓ E* ∂_v r*)`.
#[allow(clippy::too_many_arguments)]
pub fn relax_j(
    grids: &PhaseGrids,
    ops: &SampleOperators,
    r_star: &[VelocityField; 2],
    j: &[VelocityField; 2],
    e_field: &[f64],
    cfg: &ApConfig,
    eta: [f64; 2],
    inflow_density: f64,
) -> [VelocityField; 2] {
    Species::BOTH.map(|s| {
        let k = s.index();
        let grid = &grids.velocity[k];
        let (re, _) = boundary_fill(&r_star[k], &j[k], grid, cfg.boundary, inflow_density);
        let drift = drift_term(grid, &grids.mesh, s, cfg.beta, &r_star[k], &re, e_field);
        let mut out = j[k].clone();
        for i in 0..out.n_x {
            for m in 0..out.n_v {
                let lambda = ops.lambda[k].get(i, m);
                let (_, t2, t3) = theta_coefficients(cfg.epsilon, cfg.dt, eta[k], lambda);
                out.set(i, m, t2 * j[k].get(i, m) - t3 * drift.get(i, m));
            }
        }
        out
    })
}

/// Steps 1 and 2 combined, with `E*` supplied by the caller (Step 1.1).
pub fn relaxation_step(
    grids: &PhaseGrids,
    ops: &SampleOperators,
    state: &ParityState,
    e_field: &[f64],
    cfg: &ApConfig,
    eta: [f64; 2],
) -> ParityState {
    let r = relax_r(grids, ops, &state.r, cfg.epsilon, cfg.dt, eta);
    let j = relax_j(grids, ops, &r, &state.j, e_field, cfg, eta, 1.0);
    ParityState {
        r,
        j,
        time: state.time,
    }
}

/// Geometry of the transport update for one species.
#[derive(Debug, Clone, Copy)]
pub struct TransportCoefficients {
    pub sqrt_phi: f64,
    /// `s_i Δt/Δx`; multiplied by `√φ v` this gives `τ`.
    pub scaled_ratio: f64,
    pub dx: f64,
    pub dt: f64,
    pub limiter: Limiter,
}

impl TransportCoefficients {
    pub fn new(species: Species, cfg: &ApConfig, dx: f64) -> Self {
        Self {
            sqrt_phi: phi_control(cfg.epsilon).sqrt(),
            scaled_ratio: species.transport_scale(cfg.beta) * cfg.dt / dx,
            dx,
            dt: cfg.dt,
            limiter: cfg.limiter,
        }
    }
}

/// Limited upwind update of one species' `(r, j)` along the Riemann invariants
/// `r ± j/√φ` at the positive nodes, mirrored to the negative nodes. `rate_r`,
/// `rate_j` are added as `Δt · rate` (force and source terms).
pub fn transport_species(
    grid: &VelocityGrid,
    re: &VelocityField,
    je: &VelocityField,
    coeff: TransportCoefficients,
    rate_r: &VelocityField,
    rate_j: &VelocityField,
) -> (VelocityField, VelocityField) {
    let n_x = re.n_x - 2 * GHOSTS;
    let n_v = re.n_v;
    let mut r_new = VelocityField::zeros(n_x, n_v);
    let mut j_new = VelocityField::zeros(n_x, n_v);
    let inv_sqrt_phi = 1.0 / coeff.sqrt_phi;
    let ne = n_x + 2 * GHOSTS;
    let mut u = vec![0.0; ne];
    let mut w = vec![0.0; ne];
    let mut su = vec![0.0; ne];
    let mut sw = vec![0.0; ne];
    for m in grid.first_positive()..n_v {
        let tau = coeff.sqrt_phi * grid.nodes[m] * coeff.scaled_ratio;
        for c in 0..ne {
            let (r, j) = (re.get(c, m), je.get(c, m));
            u[c] = r + inv_sqrt_phi * j;
            w[c] = r - inv_sqrt_phi * j;
        }
        if coeff.limiter == Limiter::Minmod {
            for c in 1..ne - 1 {
                su[c] = limited_difference(u[c] - u[c - 1], u[c + 1] - u[c]) / coeff.dx;
                sw[c] = limited_difference(w[c] - w[c - 1], w[c + 1] - w[c]) / coeff.dx;
            }
        }
        let mr = grid.reflect[m];
        for i in 0..n_x {
            let c = i + GHOSTS;
            let u_face_r = u[c] + 0.5 * coeff.dx * su[c];
            let u_face_l = u[c - 1] + 0.5 * coeff.dx * su[c - 1];
            let w_face_r = w[c + 1] - 0.5 * coeff.dx * sw[c + 1];
            let w_face_l = w[c] - 0.5 * coeff.dx * sw[c];
            let u1 = u[c] - tau * (u_face_r - u_face_l);
            let w1 = w[c] + tau * (w_face_r - w_face_l);
            let r = 0.5 * (u1 + w1) + coeff.dt * rate_r.get(i, m);
            let j = 0.5 * coeff.sqrt_phi * (u1 - w1) + coeff.dt * rate_j.get(i, m);
            r_new.set(i, m, r);
            j_new.set(i, m, j);
            r_new.set(i, mr, r);
            j_new.set(i, mr, -j);
        }
    }
    (r_new, j_new)
}

/// Force terms `∓ E ∂_v j` (for `r`) and `∓ φ E ∂_v r` (for `j`) moved to the
/// right-hand side, i.e. `+E ∂_v j` for electrons and `-E ∂_v j` for holes.
pub fn force_rates(
    grid: &VelocityGrid,
    species: Species,
    r: &VelocityField,
    j: &VelocityField,
    e_field: &[f64],
    phi: f64,
) -> (VelocityField, VelocityField) {
    let sign = -species.field_sign();
    let (n_x, n_v) = (r.n_x, r.n_v);
    let mut fr = VelocityField::zeros(n_x, n_v);
    let mut fj = VelocityField::zeros(n_x, n_v);
    let mut dv = vec![0.0; n_v];
    for i in 0..n_x {
        let e = sign * e_field[i];
        grid.differentiate(j.row(i), &mut dv);
        for (o, d) in fr.row_mut(i).iter_mut().zip(&dv) {
            *o = e * d;
        }
        grid.differentiate(r.row(i), &mut dv);
        for (o, d) in fj.row_mut(i).iter_mut().zip(&dv) {
            *o = phi * e * d;
        }
    }
    (fr, fj)
}

/// Step 3 on the post-relaxation state.
pub fn transport_step(
    grids: &PhaseGrids,
    ops: &SampleOperators,
    state: &ParityState,
    e_field: &[f64],
    cfg: &ApConfig,
) -> Result<ParityState> {
    check_cfl(grids, cfg)?;
    let phi = phi_control(cfg.epsilon);
    let sources = if cfg.sources {
        Some(ops.apply_parity_sources(grids, [&state.r[0], &state.r[1]], [&state.j[0], &state.j[1]], cfg.epsilon))
    } else {
        None
    };
    let mut r_out = state.r.clone();
    let mut j_out = state.j.clone();
    for s in Species::BOTH {
        let k = s.index();
        let grid = &grids.velocity[k];
        let (mut rate_r, mut rate_j) = force_rates(grid, s, &state.r[k], &state.j[k], e_field, phi);
        if let Some(src) = &sources {
            for (a, b) in rate_r.data.iter_mut().zip(&src.plus[k].data) {
                *a += b;
            }
            for (a, b) in rate_j.data.iter_mut().zip(&src.minus[k].data) {
                *a += b;
            }
        }
        let (re, je) = boundary_fill(&state.r[k], &state.j[k], grid, cfg.boundary, 1.0);
        let coeff = TransportCoefficients::new(s, cfg, grids.mesh.dx);
        let (r, j) = transport_species(grid, &re, &je, coeff, &rate_r, &rate_j);
        r_out[k] = r;
        j_out[k] = j;
    }
    Ok(ParityState {
        r: r_out,
        j: j_out,
        time: state.time + cfg.dt,
    })
}

/// One full split step. `macro_state` must hold the field of the current state
/// (it is the Step 1.1 field, since the relaxation keeps densities).
pub fn step(
    grids: &PhaseGrids,
    ops: &SampleOperators,
    state: &ParityState,
    macro_in: &MacroState,
    cfg: &ApConfig,
    eta: [f64; 2],
) -> Result<(ParityState, MacroState)> {
    let relaxed = relaxation_step(grids, ops, state, &macro_in.e_field, cfg, eta);
    let next = transport_step(grids, ops, &relaxed, &macro_in.e_field, cfg)?;
    if !next.r.iter().chain(next.j.iter()).all(VelocityField::all_finite) {
        return Err(SolverError::NonFinite("kinetic state"));
    }
    let m = macro_state(grids, &next, &ops.doping, cfg)?;
    Ok((next, m))
}

/// Deterministic solver instance at one sample of the random inputs.
#[derive(Debug, Clone)]
pub struct ApSolver {
    pub grids: PhaseGrids,
    pub ops: SampleOperators,
    pub cfg: ApConfig,
    pub eta: [f64; 2],
    pub state: ParityState,
    pub macro_state: MacroState,
}

impl ApSolver {
    pub fn new(grids: PhaseGrids, inputs: &RandomInputs, z: f64, cfg: ApConfig) -> Result<Self> {
        let state = initial_state(&grids, inputs, z, cfg.epsilon);
        Self::with_state(grids, inputs, z, cfg, state)
    }

    pub fn with_state(grids: PhaseGrids, inputs: &RandomInputs, z: f64, cfg: ApConfig, state: ParityState) -> Result<Self> {
        cfg.validate()?;
        if (grids.beta - cfg.beta).abs() > 0.0 {
            return Err(SolverError::MeshMismatch(format!(
                "velocity grids built for beta = {} but config has beta = {}",
                grids.beta, cfg.beta
            )));
        }
        check_cfl(&grids, &cfg)?;
        let ops = SampleOperators::new(inputs, &grids, z)?;
        let eta = resolve_eta(&cfg, [ops.max_lambda(Species::Electron), ops.max_lambda(Species::Hole)])?;
        let macro_state = macro_state(&grids, &state, &ops.doping, &cfg)?;
        Ok(Self {
            grids,
            ops,
            cfg,
            eta,
            state,
            macro_state,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let (s, m) = step(&self.grids, &self.ops, &self.state, &self.macro_state, &self.cfg, self.eta)?;
        self.state = s;
        self.macro_state = m;
        Ok(())
    }

    /// Advances `n_steps` steps, calling `observe` after each one.
    pub fn advance(&mut self, n_steps: usize, mut observe: impl FnMut(&Self)) -> Result<()> {
        for _ in 0..n_steps {
            self.step()?;
            observe(self);
        }
        Ok(())
    }

    pub fn distribution(&self) -> [VelocityField; 2] {
        reconstruct(&self.state, self.cfg.epsilon)
    }
}

/// Number of steps of size `dt` to reach `t_final` (rounded to the nearest integer).
pub fn step_count(t_final: f64, dt: f64) -> usize {
    (t_final / dt).round().max(0.0) as usize
}

/// Source-row scratch sized for the grids.
pub fn source_rows(grids: &PhaseGrids) -> SourceRows {
    SourceRows::new(grids.velocity[0].n_nodes, grids.velocity[1].n_nodes)
}
