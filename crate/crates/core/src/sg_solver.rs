//! Stochastic Galerkin AP solver: the parity system projected on the gPC basis, with
//! mode-coupled odd-parity relaxation, per-mode Poisson and Galerkin sources.

use crate::error::{Result, SolverError};
use crate::gpc::{ModalExchange, ModalKernel, SpectralTensors};
use crate::grid::{centered_difference, PhaseGrids};
use crate::kinetic_ap::{
    boundary_fill, check_cfl, decompose, moments, phi_control, poisson_solve, resolve_eta, transport_species,
    ApConfig, FieldMode, TransportCoefficients, GHOSTS,
};
use crate::linalg::invert;
use crate::physics::{RandomInputs, VelocityField};
use crate::Species;

/// Mode coefficients of the parity fields: `r[k][species]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcState {
    pub r: Vec<[VelocityField; 2]>,
    pub j: Vec<[VelocityField; 2]>,
    pub time: f64,
}

impl GpcState {
    pub fn n_modes(&self) -> usize {
        self.r.len()
    }

    /// Largest coefficient magnitude among modes `k ≥ 1`.
    pub fn higher_mode_max(&self) -> f64 {
        self.r[1..]
            .iter()
            .chain(&self.j[1..])
            .flat_map(|f| f.iter().map(VelocityField::max_abs))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpcMacro {
    /// `rho[k][species][x]`.
    pub rho: Vec<[Vec<f64>; 2]>,
    pub u: Vec<[Vec<f64>; 2]>,
    pub phi: Vec<Vec<f64>>,
    pub e_field: Vec<Vec<f64>>,
}

/// Four families of Galerkin sources, indexed `[k][species]`.
#[derive(Debug, Clone)]
pub struct GpcSources {
    pub plus: Vec<[VelocityField; 2]>,
    pub minus: Vec<[VelocityField; 2]>,
}

/// Immutable pieces of an SG run.
#[derive(Debug, Clone)]
pub struct SgContext {
    pub grids: PhaseGrids,
    pub tensors: SpectralTensors,
    pub cfg: ApConfig,
    pub eta: [f64; 2],
    /// `(ε² I + Δt H_i)^{-1}` per `(x, v)`, row-major `K × K` blocks.
    pub relax_inverse: [Vec<f64>; 2],
    /// Nonzero entries `(m, n, k, G_{mnk})` of the triple-product tensor.
    pub g_sparse: Vec<(usize, usize, usize, f64)>,
    /// Modal collision tables reordered to `[(a K + k) n_v + b] K + l`.
    collision_rows: [Vec<Vec<f64>>; 2],
    /// Deterministic exchange tables transposed to `[hole][electron]`.
    exchange_transposed: Vec<Vec<f64>>,
}

impl SgContext {
    pub fn new(grids: PhaseGrids, tensors: SpectralTensors, cfg: ApConfig) -> Result<Self> {
        cfg.validate()?;
        check_cfl(&grids, &cfg)?;
        let eta = resolve_eta(&cfg, tensors.lambda_max)?;
        let relax_inverse = relax_inverse(&tensors, &cfg)?;
        let k = tensors.k;
        let mut g_sparse = Vec::new();
        for m in 0..k {
            for n in 0..k {
                for l in 0..k {
                    let g = tensors.g_at(m, n, l);
                    if g.abs() > 1e-14 {
                        g_sparse.push((m, n, l, g));
                    }
                }
            }
        }
        let collision_rows = [0, 1].map(|s| match &tensors.collision[s] {
            ModalKernel::Deterministic(_) => Vec::new(),
            ModalKernel::Modal { tables, n_cols } => tables.iter().map(|t| reorder_modal(t, *n_cols, k)).collect(),
        });
        let exchange_transposed = match &tensors.exchange {
            ModalExchange::Deterministic(t) => {
                let cells = if t.shared() { 1 } else { tensors.n_x };
                (0..cells)
                    .map(|i| {
                        let tb = t.at(i);
                        let (ne, nh) = (t.n_rows, t.n_cols);
                        let mut out = vec![0.0; ne * nh];
                        for a in 0..ne {
                            for b in 0..nh {
                                out[b * ne + a] = tb[a * nh + b];
                            }
                        }
                        out
                    })
                    .collect()
            }
            ModalExchange::Modal { .. } => Vec::new(),
        };
        Ok(Self {
            g_sparse,
            exchange_transposed,
            collision_rows,
            grids,
            tensors,
            cfg,
            eta,
            relax_inverse,
        })
    }

    pub fn k(&self) -> usize {
        self.tensors.k
    }

    fn inverse_block(&self, s: usize, cell: usize, m: usize) -> &[f64] {
        let kk = self.k() * self.k();
        let idx = (cell * self.tensors.n_v[s] + m) * kk;
        &self.relax_inverse[s][idx..idx + kk]
    }
}

fn reorder_modal(table: &[f64], n: usize, k: usize) -> Vec<f64> {
    let kk = k * k;
    let mut out = vec![0.0; table.len()];
    for a in 0..n {
        for b in 0..n {
            for kr in 0..k {
                for l in 0..k {
                    out[((a * k + kr) * n + b) * k + l] = table[(a * n + b) * kk + kr * k + l];
                }
            }
        }
    }
    out
}

fn relax_inverse(tensors: &SpectralTensors, cfg: &ApConfig) -> Result<[Vec<f64>; 2]> {
    let k = tensors.k;
    let eps2 = cfg.epsilon * cfg.epsilon;
    let mut out = [Vec::new(), Vec::new()];
    for s in 0..2 {
        let mut inv = Vec::with_capacity(tensors.h[s].len());
        for block in tensors.h[s].chunks(k * k) {
            let mut a: Vec<f64> = block.iter().map(|h| cfg.dt * h).collect();
            for d in 0..k {
                a[d * k + d] += eps2;
            }
            inv.extend(invert(&a, k, "SG odd-parity relaxation")?);
        }
        out[s] = inv;
    }
    Ok(out)
}

/// Projects the initial closure onto the basis by z-quadrature.
pub fn project_initial(grids: &PhaseGrids, inputs: &RandomInputs, tensors: &SpectralTensors, epsilon: f64) -> GpcState {
    let k_modes = tensors.k;
    let zero = || [0, 1].map(|s| VelocityField::zeros(grids.n_x(), grids.velocity[s].n_nodes));
    let mut r: Vec<[VelocityField; 2]> = (0..k_modes).map(|_| zero()).collect();
    let mut j: Vec<[VelocityField; 2]> = (0..k_modes).map(|_| zero()).collect();
    for (q, &z) in tensors.quad.nodes.iter().enumerate() {
        let f = Species::BOTH.map(|s| {
            let g = grids.species(s);
            VelocityField::from_fn(grids.n_x(), g.n_nodes, |i, m| {
                inputs.initial.eval(s, grids.mesh.centers[i], g.nodes[m], z)
            })
        });
        let st = decompose(grids, [&f[0], &f[1]], epsilon);
        for k in 0..k_modes {
            let c = tensors.quad.weights[q] * tensors.psi[q][k];
            for s in 0..2 {
                for (o, x) in r[k][s].data.iter_mut().zip(&st.r[s].data) {
                    *o += c * x;
                }
                for (o, x) in j[k][s].data.iter_mut().zip(&st.j[s].data) {
                    *o += c * x;
                }
            }
        }
    }
    GpcState { r, j, time: 0.0 }
}

/// Deterministic state placed in mode 0.
pub fn embed_deterministic(state: &crate::kinetic_ap::ParityState, k_modes: usize) -> GpcState {
    let zero = |f: &VelocityField| VelocityField::zeros(f.n_x, f.n_v);
    let mut r = vec![state.r.clone()];
    let mut j = vec![state.j.clone()];
    for _ in 1..k_modes {
        r.push([zero(&state.r[0]), zero(&state.r[1])]);
        j.push([zero(&state.j[0]), zero(&state.j[1])]);
    }
    GpcState { r, j, time: state.time }
}

/// Per-mode Poisson solve; mode 0 carries the boundary potential.
pub fn sg_poisson(ctx: &SgContext, rho: &[[Vec<f64>; 2]]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n_x = ctx.grids.n_x();
    let mut phi = Vec::with_capacity(rho.len());
    let mut e = Vec::with_capacity(rho.len());
    for (k, rk) in rho.iter().enumerate() {
        if ctx.cfg.field == FieldMode::Zero {
            phi.push(vec![0.0; n_x]);
            e.push(vec![0.0; n_x]);
            continue;
        }
        let bc = if k == 0 {
            (ctx.cfg.phi_bc_left, ctx.cfg.phi_bc_right)
        } else {
            (0.0, 0.0)
        };
        let doping: Vec<f64> = (0..n_x).map(|i| ctx.tensors.doping[i][k]).collect();
        let (p, ek) = poisson_solve(&ctx.grids.mesh, &rk[0], &rk[1], &doping, ctx.cfg.gamma, bc)?;
        phi.push(p);
        e.push(ek);
    }
    Ok((phi, e))
}

pub fn sg_macro(ctx: &SgContext, state: &GpcState) -> Result<GpcMacro> {
    let mut rho = Vec::with_capacity(state.n_modes());
    let mut u = Vec::with_capacity(state.n_modes());
    for k in 0..state.n_modes() {
        let ps = crate::kinetic_ap::ParityState {
            r: state.r[k].clone(),
            j: state.j[k].clone(),
            time: state.time,
        };
        let (rk, uk) = moments(&ctx.grids, &ps);
        rho.push(rk);
        u.push(uk);
    }
    let (phi, e_field) = sg_poisson(ctx, &rho)?;
    Ok(GpcMacro { rho, u, phi, e_field })
}

/// `E_g[n K + k] = ∑_m Ê_m(x) G_{mnk}` in one cell.
fn field_contraction(ctx: &SgContext, e_field: &[Vec<f64>], cell: usize, out: &mut [f64]) {
    let k = ctx.k();
    out.iter_mut().for_each(|x| *x = 0.0);
    for &(m, n, l, g) in &ctx.g_sparse {
        out[n * k + l] += e_field[m][cell] * g;
    }
}

/// Galerkin collision operator `(Q_i)_k` applied to all modes in one cell.
fn apply_q_modes(ctx: &SgContext, s: usize, cell: usize, rows: &[&[f64]], out: &mut [Vec<f64>]) {
    let t = &ctx.tensors;
    let grid = &ctx.grids.velocity[s];
    let n = grid.n_nodes;
    let k_modes = t.k;
    match &t.collision[s] {
        ModalKernel::Deterministic(_) => {
            let species = Species::BOTH[s];
            for k in 0..k_modes {
                t.samples[0].apply_q_row(species, grid, cell, rows[k], &mut out[k]);
            }
        }
        ModalKernel::Modal { .. } => {
            let tables = &ctx.collision_rows[s];
            let table = if tables.len() == 1 { &tables[0] } else { &tables[cell] };
            let stride = n * k_modes;
            let mut wr = vec![0.0; stride];
            for (b, w) in grid.weights.iter().enumerate() {
                for l in 0..k_modes {
                    wr[b * k_modes + l] = w * rows[l][b];
                }
            }
            let mut gain = vec![0.0; k_modes];
            for a in 0..n {
                for (k, g) in gain.iter_mut().enumerate() {
                    let row = &table[(a * k_modes + k) * stride..(a * k_modes + k + 1) * stride];
                    *g = row.iter().zip(&wr).map(|(x, y)| x * y).sum();
                }
                let h = t.h_block(Species::BOTH[s], cell, a);
                for k in 0..k_modes {
                    let loss: f64 = (0..k_modes).map(|l| h[k * k_modes + l] * rows[l][a]).sum();
                    out[k][a] = grid.maxwellian[a] * gain[k] - loss;
                }
            }
        }
    }
}

/// Relaxation of the even parities: `r̂* = r̂ + θ_1 Q(r̂)` mode by mode.
pub fn sg_relax_r(ctx: &SgContext, state: &GpcState) -> Vec<[VelocityField; 2]> {
    let k_modes = ctx.k();
    let mut out = state.r.clone();
    for s in 0..2 {
        let n = ctx.grids.velocity[s].n_nodes;
        let theta1 = ctx.cfg.dt / (ctx.cfg.epsilon * ctx.cfg.epsilon + ctx.eta[s] * ctx.cfg.dt);
        let mut q = vec![vec![0.0; n]; k_modes];
        for i in 0..ctx.grids.n_x() {
            let rows: Vec<&[f64]> = (0..k_modes).map(|k| state.r[k][s].row(i)).collect();
            apply_q_modes(ctx, s, i, &rows, &mut q);
            for k in 0..k_modes {
                for (o, d) in out[k][s].row_mut(i).iter_mut().zip(&q[k]) {
                    *o += theta1 * d;
                }
            }
        }
    }
    out
}

/// `s_i v ∂_x r̂_k ∓ (Ê ⊛ ∂_v r̂)_k` for all modes of one species.
fn sg_drift(ctx: &SgContext, s: usize, r: &[[VelocityField; 2]], j: &[[VelocityField; 2]], e_field: &[Vec<f64>]) -> Vec<VelocityField> {
    let k_modes = ctx.k();
    let species = Species::BOTH[s];
    let grid = &ctx.grids.velocity[s];
    let (n_x, n_v) = (ctx.grids.n_x(), grid.n_nodes);
    let scale = species.transport_scale(ctx.cfg.beta);
    let sign = species.field_sign();
    let mut out: Vec<VelocityField> = (0..k_modes).map(|_| VelocityField::zeros(n_x, n_v)).collect();
    let mut column = vec![0.0; n_x + 2 * GHOSTS];
    for k in 0..k_modes {
        let inflow = if k == 0 { 1.0 } else { 0.0 };
        let (re, _) = boundary_fill(&r[k][s], &j[k][s], grid, ctx.cfg.boundary, inflow);
        for m in 0..n_v {
            for (c, x) in column.iter_mut().enumerate() {
                *x = re.get(c, m);
            }
            let dx = centered_difference(&column, GHOSTS, ctx.grids.mesh.dx);
            for i in 0..n_x {
                out[k].set(i, m, scale * grid.nodes[m] * dx[i]);
            }
        }
    }
    let mut eg = vec![0.0; k_modes * k_modes];
    let mut dv: Vec<Vec<f64>> = vec![vec![0.0; n_v]; k_modes];
    for i in 0..n_x {
        field_contraction(ctx, e_field, i, &mut eg);
        for n in 0..k_modes {
            grid.differentiate(r[n][s].row(i), &mut dv[n]);
        }
        for k in 0..k_modes {
            let row = out[k].row_mut(i);
            for n in 0..k_modes {
                let c = sign * eg[n * k_modes + k];
                if c != 0.0 {
                    for (o, d) in row.iter_mut().zip(&dv[n]) {
                        *o += c * d;
                    }
                }
            }
        }
    }
    out
}

/// Odd-parity relaxation `(ε² I + Δt H_i) ĵ* = ε² ĵ - Δt(1 - ε²φ)(s_i v ∂_x r̂* ∓ Ê ⊛ ∂_v r̂*)`.
pub fn sg_relax_j(ctx: &SgContext, r_star: &[[VelocityField; 2]], j: &[[VelocityField; 2]], e_field: &[Vec<f64>]) -> Vec<[VelocityField; 2]> {
    let k_modes = ctx.k();
    let eps2 = ctx.cfg.epsilon * ctx.cfg.epsilon;
    let factor = ctx.cfg.dt * (1.0 - eps2 * phi_control(ctx.cfg.epsilon));
    let mut out = j.to_vec();
    let mut rhs = vec![0.0; k_modes];
    for s in 0..2 {
        let drift = sg_drift(ctx, s, r_star, j, e_field);
        let n_v = ctx.grids.velocity[s].n_nodes;
        for i in 0..ctx.grids.n_x() {
            for m in 0..n_v {
                for k in 0..k_modes {
                    rhs[k] = eps2 * j[k][s].get(i, m) - factor * drift[k].get(i, m);
                }
                let inv = ctx.inverse_block(s, i, m);
                for k in 0..k_modes {
                    let v: f64 = (0..k_modes).map(|l| inv[k * k_modes + l] * rhs[l]).sum();
                    out[k][s].set(i, m, v);
                }
            }
        }
    }
    out
}

/// Relaxation (Steps 1, 1.1, 2) with the Galerkin field `e_field`.
pub fn sg_relaxation_step(ctx: &SgContext, state: &GpcState, e_field: &[Vec<f64>]) -> GpcState {
    let r = sg_relax_r(ctx, state);
    let j = sg_relax_j(ctx, &r, &state.j, e_field);
    GpcState { r, j, time: state.time }
}

/// Galerkin projections of the four parity sources.
pub fn sg_sources(ctx: &SgContext, state: &GpcState) -> GpcSources {
    let t = &ctx.tensors;
    let k_modes = t.k;
    let [ge, gh] = &ctx.grids.velocity;
    let (ne, nh) = (ge.n_nodes, gh.n_nodes);
    let n_x = ctx.grids.n_x();
    let eps = ctx.cfg.epsilon;
    let eps2 = eps * eps;
    let zero = || [VelocityField::zeros(n_x, ne), VelocityField::zeros(n_x, nh)];
    let mut plus: Vec<[VelocityField; 2]> = (0..k_modes).map(|_| zero()).collect();
    let mut minus: Vec<[VelocityField; 2]> = (0..k_modes).map(|_| zero()).collect();
    for k in 0..k_modes {
        plus[k][0] = t.ja[k].clone();
        plus[k][1] = t.jc[k].clone();
        minus[k][0] = t.jb[k].clone();
        minus[k][1] = t.jd[k].clone();
        for x in minus[k].iter_mut().flat_map(|f| f.data.iter_mut()) {
            *x /= eps;
        }
    }
    let mut p = vec![0.0; k_modes];
    let mut q = vec![0.0; k_modes];
    for i in 0..n_x {
        let r1: Vec<&[f64]> = (0..k_modes).map(|k| state.r[k][0].row(i)).collect();
        let j1: Vec<&[f64]> = (0..k_modes).map(|k| state.j[k][0].row(i)).collect();
        let r2: Vec<&[f64]> = (0..k_modes).map(|k| state.r[k][1].row(i)).collect();
        let j2: Vec<&[f64]> = (0..k_modes).map(|k| state.j[k][1].row(i)).collect();
        match &t.exchange {
            ModalExchange::Deterministic(table) => {
                let tb = table.at(i);
                let tt = &ctx.exchange_transposed[if ctx.exchange_transposed.len() == 1 { 0 } else { i }];
                // electrons: â_n, b̂_n; holes: ĉ_n, d̂_n
                let wr2: Vec<Vec<f64>> = (0..k_modes)
                    .map(|n| (0..nh).map(|w| gh.weights[w] * gh.maxwellian[w] * r2[n][w]).collect())
                    .collect();
                let wj2: Vec<Vec<f64>> = (0..k_modes)
                    .map(|n| (0..nh).map(|w| gh.weights[w] * gh.maxwellian[w] * j2[n][w]).collect())
                    .collect();
                let wr1: Vec<Vec<f64>> = (0..k_modes)
                    .map(|n| (0..ne).map(|w| ge.weights[w] * r1[n][w]).collect())
                    .collect();
                let wj1: Vec<Vec<f64>> = (0..k_modes)
                    .map(|n| (0..ne).map(|w| ge.weights[w] * j1[n][w]).collect())
                    .collect();
                let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
                let mut a = vec![0.0; k_modes];
                let mut b = vec![0.0; k_modes];
                for m in 0..ne {
                    let row = &tb[m * nh..(m + 1) * nh];
                    for n in 0..k_modes {
                        a[n] = dot(row, &wr2[n]);
                        b[n] = dot(row, &wj2[n]);
                    }
                    p.iter_mut().for_each(|x| *x = 0.0);
                    q.iter_mut().for_each(|x| *x = 0.0);
                    for &(mm, n, k, g) in &ctx.g_sparse {
                        p[k] += g * (r1[mm][m] * a[n] + eps2 * j1[mm][m] * b[n]);
                        q[k] += g * (r1[mm][m] * b[n] + j1[mm][m] * a[n]);
                    }
                    for k in 0..k_modes {
                        plus[k][0].row_mut(i)[m] -= p[k];
                        minus[k][0].row_mut(i)[m] -= q[k];
                    }
                }
                let mut c = vec![0.0; k_modes];
                let mut d = vec![0.0; k_modes];
                for m in 0..nh {
                    let col = &tt[m * ne..(m + 1) * ne];
                    for n in 0..k_modes {
                        c[n] = dot(col, &wr1[n]);
                        d[n] = dot(col, &wj1[n]);
                    }
                    let m2 = gh.maxwellian[m];
                    p.iter_mut().for_each(|x| *x = 0.0);
                    q.iter_mut().for_each(|x| *x = 0.0);
                    for &(mm, n, k, g) in &ctx.g_sparse {
                        p[k] += g * (r2[mm][m] * c[n] + eps2 * j2[mm][m] * d[n]);
                        q[k] += g * (r2[mm][m] * d[n] + j2[mm][m] * c[n]);
                    }
                    for k in 0..k_modes {
                        plus[k][1].row_mut(i)[m] -= m2 * p[k];
                        minus[k][1].row_mut(i)[m] -= m2 * q[k];
                    }
                }
            }
            ModalExchange::Modal { tables, .. } => {
                let table = if tables.len() == 1 { &tables[0] } else { &tables[i] };
                let k3 = k_modes * k_modes * k_modes;
                let idx = |m: usize, n: usize, k: usize| (m * k_modes + n) * k_modes + k;
                for m in 0..ne {
                    // pa[mm][k] = ∑_n ∑_w W M_2 r̂2_n(w) F_{mm n k}(v, w); pb with ĵ2
                    let mut pa = vec![0.0; k_modes * k_modes];
                    let mut pb = vec![0.0; k_modes * k_modes];
                    for w in 0..nh {
                        let block = &table[(m * nh + w) * k3..(m * nh + w + 1) * k3];
                        let c = gh.weights[w] * gh.maxwellian[w];
                        for mm in 0..k_modes {
                            for n in 0..k_modes {
                                let (ra, rb) = (c * r2[n][w], c * j2[n][w]);
                                for k in 0..k_modes {
                                    let f = block[idx(mm, n, k)];
                                    pa[mm * k_modes + k] += ra * f;
                                    pb[mm * k_modes + k] += rb * f;
                                }
                            }
                        }
                    }
                    for k in 0..k_modes {
                        let (mut p, mut q) = (0.0, 0.0);
                        for mm in 0..k_modes {
                            let (a, b) = (pa[mm * k_modes + k], pb[mm * k_modes + k]);
                            p += r1[mm][m] * a + eps2 * j1[mm][m] * b;
                            q += r1[mm][m] * b + j1[mm][m] * a;
                        }
                        let pv = plus[k][0].get(i, m) - p;
                        plus[k][0].set(i, m, pv);
                        let qv = minus[k][0].get(i, m) - q;
                        minus[k][0].set(i, m, qv);
                    }
                }
                for m in 0..nh {
                    let mut pc = vec![0.0; k_modes * k_modes];
                    let mut pd = vec![0.0; k_modes * k_modes];
                    for w in 0..ne {
                        let block = &table[(w * nh + m) * k3..(w * nh + m + 1) * k3];
                        let c = ge.weights[w];
                        for mm in 0..k_modes {
                            for n in 0..k_modes {
                                let (rc, rd) = (c * r1[n][w], c * j1[n][w]);
                                for k in 0..k_modes {
                                    let f = block[idx(n, mm, k)];
                                    pc[mm * k_modes + k] += rc * f;
                                    pd[mm * k_modes + k] += rd * f;
                                }
                            }
                        }
                    }
                    let m2 = gh.maxwellian[m];
                    for k in 0..k_modes {
                        let (mut p, mut q) = (0.0, 0.0);
                        for mm in 0..k_modes {
                            let (c, d) = (pc[mm * k_modes + k], pd[mm * k_modes + k]);
                            p += r2[mm][m] * c + eps2 * j2[mm][m] * d;
                            q += r2[mm][m] * d + j2[mm][m] * c;
                        }
                        let pv = plus[k][1].get(i, m) - m2 * p;
                        plus[k][1].set(i, m, pv);
                        let qv = minus[k][1].get(i, m) - m2 * q;
                        minus[k][1].set(i, m, qv);
                    }
                }
            }
        }
    }
    GpcSources { plus, minus }
}

/// Mode-wise limited upwind transport with Galerkin force terms and sources.
pub fn sg_transport_step(ctx: &SgContext, state: &GpcState, e_field: &[Vec<f64>]) -> Result<GpcState> {
    check_cfl(&ctx.grids, &ctx.cfg)?;
    let k_modes = ctx.k();
    let phi = phi_control(ctx.cfg.epsilon);
    let sources = if ctx.cfg.sources { Some(sg_sources(ctx, state)) } else { None };
    let mut r_out = state.r.clone();
    let mut j_out = state.j.clone();
    let n_x = ctx.grids.n_x();
    let mut eg = vec![0.0; k_modes * k_modes];
    for species in Species::BOTH {
        let s = species.index();
        let grid = &ctx.grids.velocity[s];
        let n_v = grid.n_nodes;
        let sign = -species.field_sign();
        let mut rate_r: Vec<VelocityField> = (0..k_modes).map(|_| VelocityField::zeros(n_x, n_v)).collect();
        let mut rate_j = rate_r.clone();
        let mut dj: Vec<Vec<f64>> = vec![vec![0.0; n_v]; k_modes];
        let mut dr: Vec<Vec<f64>> = vec![vec![0.0; n_v]; k_modes];
        for i in 0..n_x {
            field_contraction(ctx, e_field, i, &mut eg);
            for n in 0..k_modes {
                grid.differentiate(state.j[n][s].row(i), &mut dj[n]);
                grid.differentiate(state.r[n][s].row(i), &mut dr[n]);
            }
            for k in 0..k_modes {
                for n in 0..k_modes {
                    let c = sign * eg[n * k_modes + k];
                    if c == 0.0 {
                        continue;
                    }
                    for (o, d) in rate_r[k].row_mut(i).iter_mut().zip(&dj[n]) {
                        *o += c * d;
                    }
                    for (o, d) in rate_j[k].row_mut(i).iter_mut().zip(&dr[n]) {
                        *o += phi * c * d;
                    }
                }
            }
        }
        let coeff = TransportCoefficients::new(species, &ctx.cfg, ctx.grids.mesh.dx);
        for k in 0..k_modes {
            if let Some(src) = &sources {
                for (a, b) in rate_r[k].data.iter_mut().zip(&src.plus[k][s].data) {
                    *a += b;
                }
                for (a, b) in rate_j[k].data.iter_mut().zip(&src.minus[k][s].data) {
                    *a += b;
                }
            }
            let inflow = if k == 0 { 1.0 } else { 0.0 };
            let (re, je) = boundary_fill(&state.r[k][s], &state.j[k][s], grid, ctx.cfg.boundary, inflow);
            let (r, j) = transport_species(grid, &re, &je, coeff, &rate_r[k], &rate_j[k]);
            r_out[k][s] = r;
            j_out[k][s] = j;
        }
    }
    Ok(GpcState {
        r: r_out,
        j: j_out,
        time: state.time + ctx.cfg.dt,
    })
}

/// One SG step; `macro_in` must hold the current Galerkin field.
pub fn sg_step(ctx: &SgContext, state: &GpcState, macro_in: &GpcMacro) -> Result<(GpcState, GpcMacro)> {
    let relaxed = sg_relaxation_step(ctx, state, &macro_in.e_field);
    let next = sg_transport_step(ctx, &relaxed, &macro_in.e_field)?;
    if !next.r.iter().chain(&next.j).flatten().all(VelocityField::all_finite) {
        return Err(SolverError::NonFinite("stochastic Galerkin state"));
    }
    let m = sg_macro(ctx, &next)?;
    Ok((next, m))
}

/// Stochastic Galerkin solver instance.
#[derive(Debug, Clone)]
pub struct SgSolver {
    pub ctx: SgContext,
    pub state: GpcState,
    pub macro_state: GpcMacro,
}

impl SgSolver {
    pub fn new(grids: PhaseGrids, inputs: &RandomInputs, tensors: SpectralTensors, cfg: ApConfig) -> Result<Self> {
        let state = project_initial(&grids, inputs, &tensors, cfg.epsilon);
        Self::with_state(grids, tensors, cfg, state)
    }

    pub fn with_state(grids: PhaseGrids, tensors: SpectralTensors, cfg: ApConfig, state: GpcState) -> Result<Self> {
        let ctx = SgContext::new(grids, tensors, cfg)?;
        let macro_state = sg_macro(&ctx, &state)?;
        Ok(Self { ctx, state, macro_state })
    }

    pub fn step(&mut self) -> Result<()> {
        let (s, m) = sg_step(&self.ctx, &self.state, &self.macro_state)?;
        self.state = s;
        self.macro_state = m;
        Ok(())
    }

    pub fn advance(&mut self, n_steps: usize) -> Result<()> {
        for _ in 0..n_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Mean and standard deviation of a modal quantity `q[k][x]`.
    pub fn stats(modes: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
        let n_x = modes[0].len();
        let mut mean = Vec::with_capacity(n_x);
        let mut sd = Vec::with_capacity(n_x);
        for i in 0..n_x {
            let coeffs: Vec<f64> = modes.iter().map(|m| m[i]).collect();
            let (a, b) = crate::gpc::mean_sd(&coeffs);
            mean.push(a);
            sd.push(b);
        }
        (mean, sd)
    }
}
