//! Maxwellians, random-parameterized kernels, the collision operators `Q_i`, the
//! generation-recombination operators `I_n`, `I_p` and their parity projections.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result, SolverError};
use crate::grid::{PhaseGrids, VelocityGrid};
use crate::Species;

/// Normalized Maxwellian of the species (one velocity dimension).
pub fn maxwellian(v: f64, species: Species, beta: f64) -> f64 {
    let b = species.maxwellian_beta(beta);
    (b / (2.0 * PI)).sqrt() * (-0.5 * b * v * v).exp()
}

type KernelFn = dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync;
type DopingFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
type InitialFn = dyn Fn(Species, f64, f64, f64) -> f64 + Send + Sync;

/// A kernel `σ(x, v, w, z)` together with flags describing which arguments it
/// ignores. The flags only enable fast paths; they must be truthful.
#[derive(Clone)]
pub struct RandomKernel {
    f: Arc<KernelFn>,
    pub z_independent: bool,
    pub x_independent: bool,
    /// Set when the kernel does not depend on `(v, w)`.
    pub v_independent: bool,
}

impl RandomKernel {
    pub fn new(
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        z_independent: bool,
        x_independent: bool,
    ) -> Self {
        Self {
            f: Arc::new(f),
            z_independent,
            x_independent,
            v_independent: false,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            f: Arc::new(move |_, _, _, _| c),
            z_independent: true,
            x_independent: true,
            v_independent: true,
        }
    }

    /// `a + b z`, independent of `x`, `v` and `w`.
    pub fn affine_in_z(a: f64, b: f64) -> Self {
        Self {
            f: Arc::new(move |_, _, _, z| a + b * z),
            z_independent: b == 0.0,
            x_independent: true,
            v_independent: true,
        }
    }

    /// `π^{-1/2} exp(-(v - w)²)`.
    pub fn gaussian_exchange() -> Self {
        Self::new(|_, v, w, _| (-(v - w) * (v - w)).exp() / PI.sqrt(), true, true)
    }

    #[inline]
    pub fn eval(&self, x: f64, v: f64, w: f64, z: f64) -> f64 {
        (self.f)(x, v, w, z)
    }
}

impl fmt::Debug for RandomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomKernel")
            .field("z_independent", &self.z_independent)
            .field("x_independent", &self.x_independent)
            .field("v_independent", &self.v_independent)
            .finish_non_exhaustive()
    }
}

/// Doping profile parameters `c(x) = 1 - (1 - m)[tanh((x - x1)/s) - tanh((x - x2)/s)]`,
/// optionally multiplied by `(1 + amplitude z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopingParams {
    pub s: f64,
    pub m: f64,
    pub x1: f64,
    pub x2: f64,
    pub random_amplitude: f64,
}

impl Default for DopingParams {
    fn default() -> Self {
        Self {
            s: 0.02,
            m: (1.0 - 0.001) / 2.0,
            x1: 0.3,
            x2: 0.7,
            random_amplitude: 0.0,
        }
    }
}

pub fn doping_profile(x: f64, z: f64, params: &DopingParams) -> f64 {
    let base = 1.0
        - (1.0 - params.m) * (((x - params.x1) / params.s).tanh() - ((x - params.x2) / params.s).tanh());
    base * (1.0 + params.random_amplitude * z)
}

#[derive(Clone)]
pub struct Doping {
    f: Arc<DopingFn>,
    pub z_independent: bool,
}

impl Doping {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, z_independent: bool) -> Self {
        Self {
            f: Arc::new(f),
            z_independent,
        }
    }

    pub fn profile(params: DopingParams) -> Self {
        Self::new(move |x, z| doping_profile(x, z, &params), params.random_amplitude == 0.0)
    }

    pub fn uniform(c: f64) -> Self {
        Self::new(move |_, _| c, true)
    }

    #[inline]
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        (self.f)(x, z)
    }
}

impl fmt::Debug for Doping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Doping")
            .field("z_independent", &self.z_independent)
            .finish_non_exhaustive()
    }
}

/// Initial distribution `f_i(x, v, z)`.
#[derive(Clone)]
pub struct InitialData {
    f: Arc<InitialFn>,
    pub z_independent: bool,
}

impl InitialData {
    pub fn new(
        f: impl Fn(Species, f64, f64, f64) -> f64 + Send + Sync + 'static,
        z_independent: bool,
    ) -> Self {
        Self {
            f: Arc::new(f),
            z_independent,
        }
    }

    /// `f_i = ρ(z) M_i(v)` with the species Maxwellian for mass ratio `beta`.
    pub fn scaled_maxwellian(beta: f64, rho: impl Fn(f64) -> f64 + Send + Sync + 'static, z_independent: bool) -> Self {
        Self::new(move |s, _, v, z| rho(z) * maxwellian(v, s, beta), z_independent)
    }

    #[inline]
    pub fn eval(&self, species: Species, x: f64, v: f64, z: f64) -> f64 {
        (self.f)(species, x, v, z)
    }
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialData")
            .field("z_independent", &self.z_independent)
            .finish_non_exhaustive()
    }
}

/// All possibly random model inputs. `sigma_i(x, v, w, z)` takes the electron
/// velocity first and the hole velocity second.
#[derive(Debug, Clone)]
pub struct RandomInputs {
    pub sigma1: RandomKernel,
    pub sigma2: RandomKernel,
    pub sigma_i: RandomKernel,
    pub doping: Doping,
    pub initial: InitialData,
}

impl RandomInputs {
    pub fn collision_kernel(&self, species: Species) -> &RandomKernel {
        match species {
            Species::Electron => &self.sigma1,
            Species::Hole => &self.sigma2,
        }
    }

    /// True when every closure ignores `z`.
    pub fn deterministic(&self) -> bool {
        self.sigma1.z_independent
            && self.sigma2.z_independent
            && self.sigma_i.z_independent
            && self.doping.z_independent
            && self.initial.z_independent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciesParams {
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SpeciesParams {
    pub fn new(beta: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        for (name, value) in [("beta", beta), ("gamma", gamma), ("epsilon", epsilon)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {value}")));
            }
        }
        Ok(Self { beta, gamma, epsilon })
    }
}

/// A field sampled on `(x-cell, v-node)`, stored row-major by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub n_x: usize,
    pub n_v: usize,
    pub data: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(n_x: usize, n_v: usize) -> Self {
        Self {
            n_x,
            n_v,
            data: vec![0.0; n_x * n_v],
        }
    }

    pub fn from_fn(n_x: usize, n_v: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_x * n_v);
        for i in 0..n_x {
            for m in 0..n_v {
                data.push(f(i, m));
            }
        }
        Self { n_x, n_v, data }
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.data[i * self.n_v + m]
    }

    #[inline]
    pub fn set(&mut self, i: usize, m: usize, value: f64) {
        self.data[i * self.n_v + m] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_v..(i + 1) * self.n_v]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_v..(i + 1) * self.n_v]
    }

    /// Velocity integral per cell.
    pub fn density(&self, grid: &VelocityGrid) -> Vec<f64> {
        (0..self.n_x).map(|i| grid.integrate(self.row(i))).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Kernel values sampled on velocity node pairs, one table per cell or a single
/// shared table when the kernel ignores `x`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub n_rows: usize,
    pub n_cols: usize,
    tables: Vec<Vec<f64>>,
}

impl KernelTable {
    #[inline]
    pub fn at(&self, cell: usize) -> &[f64] {
        if self.tables.len() == 1 {
            &self.tables[0]
        } else {
            &self.tables[cell]
        }
    }

    pub fn shared(&self) -> bool {
        self.tables.len() == 1
    }
}

fn check_kernel_value(name: &'static str, value: f64, x: f64, v: f64, w: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(SolverError::InvalidKernel {
            name,
            reason: format!("value {value} at x={x}, v={v}, w={w} is not strictly positive"),
        });
    }
    Ok(())
}

/// Builds `σ(x, v_m, v_n, z)` on one species grid from the upper triangle and mirrors
/// it so the table is exactly symmetric. The closure's symmetry is checked.
pub fn collision_table(
    kernel: &RandomKernel,
    name: &'static str,
    grid: &VelocityGrid,
    centers: &[f64],
    z: f64,
) -> Result<KernelTable> {
    let n = grid.n_nodes;
    let cells: Vec<f64> = if kernel.x_independent {
        vec![centers[0]]
    } else {
        centers.to_vec()
    };
    let mut tables = Vec::with_capacity(cells.len());
    for &x in &cells {
        let mut t = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let (va, vb) = (grid.nodes[a], grid.nodes[b]);
                let s = kernel.eval(x, va, vb, z);
                check_kernel_value(name, s, x, va, vb)?;
                if b != a {
                    let s_t = kernel.eval(x, vb, va, z);
                    if (s - s_t).abs() > 1e-12 * s.abs().max(1.0) {
                        return Err(SolverError::InvalidKernel {
                            name,
                            reason: format!("not symmetric at v={va}, w={vb}: {s} vs {s_t}"),
                        });
                    }
                }
                t[a * n + b] = s;
                t[b * n + a] = s;
            }
        }
        tables.push(t);
    }
    Ok(KernelTable {
        n_rows: n,
        n_cols: n,
        tables,
    })
}

/// Builds `σ_I(x, v_m, w_n, z)` with `v` on the electron grid and `w` on the hole
/// grid, checking positivity and rotational invariance.
pub fn exchange_table(
    kernel: &RandomKernel,
    electrons: &VelocityGrid,
    holes: &VelocityGrid,
    centers: &[f64],
    z: f64,
) -> Result<KernelTable> {
    let (ne, nh) = (electrons.n_nodes, holes.n_nodes);
    let cells: Vec<f64> = if kernel.x_independent {
        vec![centers[0]]
    } else {
        centers.to_vec()
    };
    let mut tables = Vec::with_capacity(cells.len());
    for &x in &cells {
        let mut t = vec![0.0; ne * nh];
        for a in 0..ne {
            for b in 0..nh {
                let (v, w) = (electrons.nodes[a], holes.nodes[b]);
                let s = kernel.eval(x, v, w, z);
                check_kernel_value("sigma_i", s, x, v, w)?;
                t[a * nh + b] = s;
            }
        }
        for a in 0..ne {
            for b in 0..nh {
                let s = t[a * nh + b];
                let s_r = t[electrons.reflect[a] * nh + holes.reflect[b]];
                if (s - s_r).abs() > 1e-12 * s.abs().max(1.0) {
                    return Err(SolverError::InvalidKernel {
                        name: "sigma_i",
                        reason: format!(
                            "not invariant under (v, w) -> (-v, -w) at v={}, w={}",
                            electrons.nodes[a], holes.nodes[b]
                        ),
                    });
                }
            }
        }
        tables.push(t);
    }
    Ok(KernelTable {
        n_rows: ne,
        n_cols: nh,
        tables,
    })
}

/// Parity-projected generation-recombination sources.
#[derive(Debug, Clone)]
pub struct ParitySources {
    pub plus: [VelocityField; 2],
    pub minus: [VelocityField; 2],
}

/// Operators of the model evaluated at one sample `z`: kernel tables, collision
/// frequencies and the generation terms of the parity sources.
#[derive(Debug, Clone)]
pub struct SampleOperators {
    pub z: f64,
    pub collision: [KernelTable; 2],
    pub exchange: KernelTable,
    /// `λ_i(x, v)` per species.
    pub lambda: [VelocityField; 2],
    /// Even and odd parts of the generation term `∫ σ_I M_n`, per species; the odd
    /// part is not yet divided by `ε`.
    pub gen_even: [VelocityField; 2],
    pub gen_odd: [VelocityField; 2],
    pub doping: Vec<f64>,
}

impl SampleOperators {
    pub fn new(inputs: &RandomInputs, grids: &PhaseGrids, z: f64) -> Result<Self> {
        let centers = &grids.mesh.centers;
        let n_x = grids.n_x();
        let [ge, gh] = &grids.velocity;
        let collision = [
            collision_table(&inputs.sigma1, "sigma1", ge, centers, z)?,
            collision_table(&inputs.sigma2, "sigma2", gh, centers, z)?,
        ];
        let exchange = exchange_table(&inputs.sigma_i, ge, gh, centers, z)?;
        let lambda = [
            frequency_field(&collision[0], ge, n_x),
            frequency_field(&collision[1], gh, n_x),
        ];
        for (s, l) in Species::BOTH.iter().zip(&lambda) {
            if l.data.iter().any(|x| !(*x > 0.0)) {
                return Err(SolverError::InvalidKernel {
                    name: if *s == Species::Electron { "sigma1" } else { "sigma2" },
                    reason: "collision frequency is not positive".into(),
                });
            }
        }
        let (ne, nh) = (ge.n_nodes, gh.n_nodes);
        let mut gen_even = [VelocityField::zeros(n_x, ne), VelocityField::zeros(n_x, nh)];
        let mut gen_odd = [VelocityField::zeros(n_x, ne), VelocityField::zeros(n_x, nh)];
        for i in 0..n_x {
            let t = exchange.at(i);
            for m in 0..ne {
                let mr = ge.reflect[m];
                let (mut e, mut o) = (0.0, 0.0);
                for n in 0..nh {
                    let (a, b) = (t[m * nh + n], t[mr * nh + n]);
                    e += gh.weights[n] * (a + b);
                    o += gh.weights[n] * (a - b);
                }
                gen_even[0].set(i, m, 0.5 * e * ge.maxwellian[m]);
                gen_odd[0].set(i, m, 0.5 * o * ge.maxwellian[m]);
            }
            for m in 0..nh {
                let mr = gh.reflect[m];
                let (mut e, mut o) = (0.0, 0.0);
                for n in 0..ne {
                    let (a, b) = (t[n * nh + m], t[n * nh + mr]);
                    let wm = ge.weights[n] * ge.maxwellian[n];
                    e += wm * (a + b);
                    o += wm * (a - b);
                }
                gen_even[1].set(i, m, 0.5 * e);
                gen_odd[1].set(i, m, 0.5 * o);
            }
        }
        let doping = centers.iter().map(|&x| inputs.doping.eval(x, z)).collect();
        Ok(Self {
            z,
            collision,
            exchange,
            lambda,
            gen_even,
            gen_odd,
            doping,
        })
    }

    pub fn max_lambda(&self, species: Species) -> f64 {
        self.lambda[species.index()].max_abs()
    }

    /// `Q_i(r)(v) = M_i(v) ∑_w W σ_i(v, w) r(w) - λ_i(v) r(v)`.
    pub fn apply_q(&self, species: Species, grid: &VelocityGrid, r: &VelocityField) -> VelocityField {
        let mut out = VelocityField::zeros(r.n_x, r.n_v);
        let mut buf = vec![0.0; r.n_v];
        for i in 0..r.n_x {
            self.apply_q_row(species, grid, i, r.row(i), &mut buf);
            out.row_mut(i).copy_from_slice(&buf);
        }
        out
    }

    /// Collision operator on one cell's velocity profile.
    pub fn apply_q_row(&self, species: Species, grid: &VelocityGrid, cell: usize, r: &[f64], out: &mut [f64]) {
        let n = grid.n_nodes;
        let t = self.collision[species.index()].at(cell);
        let lambda = self.lambda[species.index()].row(cell);
        for m in 0..n {
            let row = &t[m * n..(m + 1) * n];
            let gain: f64 = row.iter().zip(&grid.weights).zip(r).map(|((s, w), x)| s * w * x).sum();
            out[m] = grid.maxwellian[m] * gain - lambda[m] * r[m];
        }
    }

    /// `I_n` on the electron grid and `I_p` on the hole grid, evaluated directly
    /// from the distributions.
    pub fn apply_i_direct(&self, grids: &PhaseGrids, f1: &VelocityField, f2: &VelocityField) -> (VelocityField, VelocityField) {
        let [ge, gh] = &grids.velocity;
        let (ne, nh) = (ge.n_nodes, gh.n_nodes);
        let mut i_n = VelocityField::zeros(f1.n_x, ne);
        let mut i_p = VelocityField::zeros(f2.n_x, nh);
        for i in 0..f1.n_x {
            let t = self.exchange.at(i);
            let (r1, r2) = (f1.row(i), f2.row(i));
            for m in 0..ne {
                let mut acc = 0.0;
                for n in 0..nh {
                    acc += gh.weights[n] * t[m * nh + n] * (ge.maxwellian[m] - gh.maxwellian[n] * r1[m] * r2[n]);
                }
                i_n.set(i, m, acc);
            }
            for m in 0..nh {
                let mut acc = 0.0;
                for n in 0..ne {
                    acc += ge.weights[n] * t[n * nh + m] * (ge.maxwellian[n] - gh.maxwellian[m] * r1[n] * r2[m]);
                }
                i_p.set(i, m, acc);
            }
        }
        (i_n, i_p)
    }

    /// Even/odd projections of `I_n`, `I_p` in terms of the parity fields:
    /// `plus = (I(v) + I(-v))/2`, `minus = (I(v) - I(-v))/(2ε)`.
    pub fn apply_parity_sources(
        &self,
        grids: &PhaseGrids,
        r: [&VelocityField; 2],
        j: [&VelocityField; 2],
        epsilon: f64,
    ) -> ParitySources {
        let n_x = r[0].n_x;
        let (ne, nh) = (grids.velocity[0].n_nodes, grids.velocity[1].n_nodes);
        let mut out = ParitySources {
            plus: [VelocityField::zeros(n_x, ne), VelocityField::zeros(n_x, nh)],
            minus: [VelocityField::zeros(n_x, ne), VelocityField::zeros(n_x, nh)],
        };
        let mut rows = SourceRows::new(ne, nh);
        for i in 0..n_x {
            self.parity_source_row(grids, i, [r[0].row(i), r[1].row(i)], [j[0].row(i), j[1].row(i)], epsilon, &mut rows);
            out.plus[0].row_mut(i).copy_from_slice(&rows.plus[0]);
            out.plus[1].row_mut(i).copy_from_slice(&rows.plus[1]);
            out.minus[0].row_mut(i).copy_from_slice(&rows.minus[0]);
            out.minus[1].row_mut(i).copy_from_slice(&rows.minus[1]);
        }
        out
    }

    /// Parity sources for one cell.
    pub fn parity_source_row(
        &self,
        grids: &PhaseGrids,
        cell: usize,
        r: [&[f64]; 2],
        j: [&[f64]; 2],
        epsilon: f64,
        out: &mut SourceRows,
    ) {
        let [ge, gh] = &grids.velocity;
        let (ne, nh) = (ge.n_nodes, gh.n_nodes);
        let t = self.exchange.at(cell);
        let eps2 = epsilon * epsilon;
        for m in 0..ne {
            let (mut a, mut b) = (0.0, 0.0);
            for n in 0..nh {
                let wm = gh.weights[n] * t[m * nh + n] * gh.maxwellian[n];
                a += wm * r[1][n];
                b += wm * j[1][n];
            }
            out.plus[0][m] = self.gen_even[0].get(cell, m) - r[0][m] * a - eps2 * j[0][m] * b;
            out.minus[0][m] = self.gen_odd[0].get(cell, m) / epsilon - r[0][m] * b - j[0][m] * a;
        }
        for m in 0..nh {
            let (mut c, mut d) = (0.0, 0.0);
            for n in 0..ne {
                let w = ge.weights[n] * t[n * nh + m];
                c += w * r[0][n];
                d += w * j[0][n];
            }
            let m2 = gh.maxwellian[m];
            out.plus[1][m] = self.gen_even[1].get(cell, m) - m2 * (r[1][m] * c + eps2 * j[1][m] * d);
            out.minus[1][m] = self.gen_odd[1].get(cell, m) / epsilon - m2 * (r[1][m] * d + j[1][m] * c);
        }
    }
}

/// Scratch rows for [`SampleOperators::parity_source_row`].
#[derive(Debug, Clone)]
pub struct SourceRows {
    pub plus: [Vec<f64>; 2],
    pub minus: [Vec<f64>; 2],
}

impl SourceRows {
    pub fn new(ne: usize, nh: usize) -> Self {
        Self {
            plus: [vec![0.0; ne], vec![0.0; nh]],
            minus: [vec![0.0; ne], vec![0.0; nh]],
        }
    }
}

/// `λ(x, v) = ∑_w W σ(v, w) M(w)` from a collision table.
fn frequency_field(table: &KernelTable, grid: &VelocityGrid, n_x: usize) -> VelocityField {
    let n = grid.n_nodes;
    let mut out = VelocityField::zeros(n_x, n);
    for i in 0..n_x {
        let t = table.at(i);
        for m in 0..n {
            let l: f64 = (0..n).map(|k| grid.weights[k] * t[m * n + k] * grid.maxwellian[k]).sum();
            out.set(i, m, l);
        }
    }
    out
}

/// Collision frequency `λ_i(x, v)` for one sample.
pub fn collision_frequency(inputs: &RandomInputs, species: Species, grids: &PhaseGrids, z: f64) -> Result<VelocityField> {
    let grid = grids.species(species);
    let name = match species {
        Species::Electron => "sigma1",
        Species::Hole => "sigma2",
    };
    let table = collision_table(inputs.collision_kernel(species), name, grid, &grids.mesh.centers, z)?;
    let l = frequency_field(&table, grid, grids.n_x());
    if l.data.iter().any(|x| !(*x > 0.0)) {
        return Err(SolverError::InvalidKernel {
            name,
            reason: "collision frequency is not positive".into(),
        });
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;

    fn grids(n_x: usize, n_v: usize, beta: f64) -> PhaseGrids {
        PhaseGrids::new(build_mesh(n_x, 0.0, 1.0).unwrap(), n_v, beta).unwrap()
    }

    fn reference_inputs() -> RandomInputs {
        RandomInputs {
            sigma1: RandomKernel::constant(2.0),
            sigma2: RandomKernel::constant(2.0),
            sigma_i: RandomKernel::gaussian_exchange(),
            doping: Doping::profile(DopingParams::default()),
            initial: InitialData::scaled_maxwellian(0.9, |_| 1.0, true),
        }
    }

    #[test]
    fn maxwellian_values() {
        assert!((maxwellian(0.0, Species::Electron, 0.9) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((maxwellian(0.0, Species::Hole, 0.9) - (0.9 / (2.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((maxwellian(0.0, Species::Hole, 0.9) - 0.37846).abs() < 1e-5);
    }

    #[test]
    fn doping_values() {
        let p = DopingParams::default();
        assert!((doping_profile(0.0, 0.0, &p) - 1.0).abs() < 1e-12);
        let mid = doping_profile(0.5, 0.0, &p);
        let exact = 1.0 - (1.0 - p.m) * (10.0_f64.tanh() - (-10.0_f64).tanh());
        assert_eq!(mid, exact);
        assert!((mid + 0.001).abs() < 1e-8);
        let random = DopingParams {
            random_amplitude: 0.5,
            ..p
        };
        assert_eq!(doping_profile(0.4, 0.0, &random), doping_profile(0.4, 0.0, &p));
        assert!((doping_profile(0.0, 1.0, &random) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_kernel_frequency() {
        let g = grids(4, 20, 0.9);
        let mut inputs = reference_inputs();
        for s in Species::BOTH {
            let l = collision_frequency(&inputs, s, &g, 0.3).unwrap();
            assert!(l.data.iter().all(|x| (x - 2.0).abs() < 1e-12));
        }
        inputs.sigma1 = RandomKernel::affine_in_z(2.0, 0.5);
        let l = collision_frequency(&inputs, Species::Electron, &g, 1.0).unwrap();
        assert!(l.data.iter().all(|x| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn quartic_kernel_frequency() {
        let g = grids(4, 20, 0.9);
        let mut inputs = reference_inputs();
        inputs.sigma1 = RandomKernel::new(|_, v, w, _| 2.0 + v * v * w * w, true, true);
        let l = collision_frequency(&inputs, Species::Electron, &g, 0.0).unwrap();
        for (m, v) in g.velocity[0].nodes.iter().enumerate() {
            assert!((l.get(0, m) - (2.0 + v * v)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let g = grids(4, 8, 0.9);
        let mut inputs = reference_inputs();
        inputs.sigma1 = RandomKernel::new(|_, v, _, _| 2.0 + v, true, true);
        assert!(matches!(
            SampleOperators::new(&inputs, &g, 0.0),
            Err(SolverError::InvalidKernel { .. })
        ));
        let mut inputs = reference_inputs();
        inputs.sigma2 = RandomKernel::constant(-1.0);
        assert!(SampleOperators::new(&inputs, &g, 0.0).is_err());
        let mut inputs = reference_inputs();
        inputs.sigma_i = RandomKernel::new(|_, v, w, _| (-(v - w) * (v - w)).exp() * (1.5 + 0.5 * v.tanh()), true, true);
        assert!(SampleOperators::new(&inputs, &g, 0.0).is_err());
    }

    #[test]
    fn q_closed_form_for_constant_kernel() {
        let g = grids(4, 16, 0.9);
        let ops = SampleOperators::new(&reference_inputs(), &g, 0.0).unwrap();
        for s in Species::BOTH {
            let vg = g.species(s);
            let r = VelocityField::from_fn(3, 16, |i, m| (1.0 + i as f64) * (0.3 + vg.nodes[m].sin().powi(2)) * vg.maxwellian[m].sqrt());
            let q = ops.apply_q(s, vg, &r);
            let rho = r.density(vg);
            for i in 0..3 {
                for m in 0..16 {
                    let exact = 2.0 * (rho[i] * vg.maxwellian[m] - r.get(i, m));
                    assert!((q.get(i, m) - exact).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn i_direct_generation_is_maxwellian() {
        let g = grids(4, 20, 0.9);
        let ops = SampleOperators::new(&reference_inputs(), &g, 0.0).unwrap();
        let zero = [VelocityField::zeros(4, 20), VelocityField::zeros(4, 20)];
        let (i_n, _) = ops.apply_i_direct(&g, &zero[0], &zero[1]);
        for m in 0..20 {
            let exact = g.velocity[0].maxwellian[m];
            // the shifted Gaussian is resolved to ~1e-9 by the 20-node hole rule
            assert!((i_n.get(0, m) - exact).abs() < 1e-8, "{m} {}", i_n.get(0, m) - exact);
        }
    }

    #[test]
    fn exchange_integrals_agree_between_species() {
        let g = grids(4, 20, 0.9);
        let ops = SampleOperators::new(&reference_inputs(), &g, 0.0).unwrap();
        let f1 = VelocityField::from_fn(4, 20, |i, m| (1.0 + 0.2 * i as f64) * g.velocity[0].maxwellian[m]);
        let f2 = VelocityField::from_fn(4, 20, |i, m| (0.7 - 0.1 * i as f64) * g.velocity[1].maxwellian[m]);
        let (i_n, i_p) = ops.apply_i_direct(&g, &f1, &f2);
        let a = i_n.density(&g.velocity[0]);
        let b = i_p.density(&g.velocity[1]);
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_generation_vanishes_for_even_kernel_difference() {
        let g = grids(4, 20, 0.9);
        let ops = SampleOperators::new(&reference_inputs(), &g, 0.0).unwrap();
        let scale = ops.gen_even[0].max_abs();
        assert!(ops.gen_odd[0].max_abs() < 1e-8 * scale);
    }
}
