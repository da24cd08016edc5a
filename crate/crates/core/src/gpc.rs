//! Orthonormal Legendre chaos in one uniform random variable `z ∈ [-1, 1]`,
//! Gauss-Legendre quadrature and assembly of the z-integrated spectral tensors.
//!
//! Modes are indexed from 0 in code; mode 0 is the constant `ψ = 1`.

use crate::drift_diffusion::{mobilities, recombination_coeffs};
use crate::error::{invalid, Result};
use crate::grid::PhaseGrids;
use crate::physics::{KernelTable, RandomInputs, SampleOperators, VelocityField};
use crate::Species;

/// Orthonormal Legendre basis with respect to `π(z) = 1/2` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpcBasis {
    pub k: usize,
}

pub fn legendre_basis(k: usize) -> Result<GpcBasis> {
    if k == 0 {
        return Err(invalid("K", "need at least one basis function"));
    }
    Ok(GpcBasis { k })
}

impl GpcBasis {
    /// Degree of the highest basis polynomial.
    pub fn degree(&self) -> usize {
        self.k - 1
    }

    /// Values `ψ_0(z), …, ψ_{K-1}(z)` from the normalized three-term recurrence
    /// `z ψ_n = a_{n+1} ψ_{n+1} + a_n ψ_{n-1}`, `a_n = n/√(4n² - 1)`.
    pub fn eval_all(&self, z: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        out[0] = 1.0;
        if self.k > 1 {
            out[1] = 3.0_f64.sqrt() * z;
        }
        for n in 1..self.k.saturating_sub(1) {
            let a_n = recurrence_coefficient(n);
            let a_next = recurrence_coefficient(n + 1);
            out[n + 1] = (z * out[n] - a_n * out[n - 1]) / a_next;
        }
        out
    }

    pub fn eval(&self, index: usize, z: f64) -> f64 {
        GpcBasis { k: index + 1 }.eval_all(z)[index]
    }
}

fn recurrence_coefficient(n: usize) -> f64 {
    let nf = n as f64;
    nf / (4.0 * nf * nf - 1.0).sqrt()
}

/// Gauss-Legendre rule with weights normalized to the density `π = 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn z_quadrature(n_nodes: usize) -> Result<ZQuadrature> {
    if n_nodes == 0 {
        return Err(invalid("n_colloc", "need at least one quadrature node"));
    }
    let n = n_nodes;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(ZQuadrature { nodes, weights })
}

/// `ĝ_k = ∫ g ψ_k π dz` by quadrature.
pub fn project(basis: &GpcBasis, quad: &ZQuadrature, g: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; basis.k];
    for (z, w) in quad.nodes.iter().zip(&quad.weights) {
        let gz = g(*z);
        for (o, p) in out.iter_mut().zip(basis.eval_all(*z)) {
            *o += w * gz * p;
        }
    }
    out
}

pub fn evaluate(basis: &GpcBasis, coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().zip(basis.eval_all(z)).map(|(c, p)| c * p).sum()
}

/// Mean and standard deviation `(ĝ_0, √(∑_{k≥1} ĝ_k²))`.
pub fn mean_sd(coeffs: &[f64]) -> (f64, f64) {
    let var: f64 = coeffs.iter().skip(1).map(|c| c * c).sum();
    (coeffs[0], var.sqrt())
}

/// Galerkin form of a velocity kernel: either the deterministic table (the modal
/// matrix is `σ δ_{kn}`) or one `K × K` matrix per node pair.
#[derive(Debug, Clone)]
pub enum ModalKernel {
    Deterministic(KernelTable),
    /// `tables[cell][(a * n_cols + b) * K² + k K + n]`; a single shared cell when
    /// the kernel ignores `x`.
    Modal { tables: Vec<Vec<f64>>, n_cols: usize },
}

/// Galerkin form of `σ_I`: deterministic table (with `F = σ_I G`) or the full
/// `F_{mnk}` per node pair.
#[derive(Debug, Clone)]
pub enum ModalExchange {
    Deterministic(KernelTable),
    Modal { tables: Vec<Vec<f64>>, n_cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Use the factored forms for z-independent kernels.
    pub fast_paths: bool,
    /// Minimum z-quadrature size.
    pub min_nodes: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            fast_paths: true,
            min_nodes: 16,
        }
    }
}

/// All z-integrated tensors needed by the stochastic Galerkin solvers.
#[derive(Debug, Clone)]
pub struct SpectralTensors {
    pub k: usize,
    pub basis: GpcBasis,
    pub quad: ZQuadrature,
    /// `psi[q][k] = ψ_k(z_q)`.
    pub psi: Vec<Vec<f64>>,
    /// Operators at each quadrature node.
    pub samples: Vec<SampleOperators>,
    /// `G_{mnk}` at `(m K + n) K + k`.
    pub g: Vec<f64>,
    pub collision: [ModalKernel; 2],
    pub exchange: ModalExchange,
    /// `H_i` per `(x, v)`: index `(i n_v + m) K² + k K + l`.
    pub h: [Vec<f64>; 2],
    /// `S_i = ∫ λ_i^{-1} ψ_k ψ_l π dz`, same layout as `h`.
    pub s: [Vec<f64>; 2],
    /// `J^a`, `J^b` (electron even/odd generation) and `J^c`, `J^d` (holes), one field
    /// per mode; the odd parts are not divided by `ε`.
    pub ja: Vec<VelocityField>,
    pub jb: Vec<VelocityField>,
    pub jc: Vec<VelocityField>,
    pub jd: Vec<VelocityField>,
    /// `L_k(x)`: `doping[x][k]`.
    pub doping: Vec<Vec<f64>>,
    /// Galerkin matrices of the low-field mobilities: `mobility[s][x][k K + l]`.
    pub mobility: [Vec<Vec<f64>>; 2],
    /// Recombination modes `A_k(x)` and `B_{mnk}(x)`.
    pub rec_a: Vec<Vec<f64>>,
    pub rec_b: Vec<Vec<f64>>,
    /// `max λ_i` over cells, velocities and quadrature nodes.
    pub lambda_max: [f64; 2],
    pub n_x: usize,
    pub n_v: [usize; 2],
}

impl SpectralTensors {
    #[inline]
    pub fn g_at(&self, m: usize, n: usize, k: usize) -> f64 {
        self.g[(m * self.k + n) * self.k + k]
    }

    /// `(B_i)_{kn}(x, v_a, v_b)`.
    pub fn b_entry(&self, species: Species, cell: usize, a: usize, b: usize, k: usize, n: usize) -> f64 {
        match &self.collision[species.index()] {
            ModalKernel::Deterministic(t) => {
                if k == n {
                    t.at(cell)[a * t.n_cols + b]
                } else {
                    0.0
                }
            }
            ModalKernel::Modal { tables, n_cols } => {
                let t = if tables.len() == 1 { &tables[0] } else { &tables[cell] };
                t[(a * n_cols + b) * self.k * self.k + k * self.k + n]
            }
        }
    }

    /// `F_{mnk}(x, v_a, w_b)`.
    pub fn f_entry(&self, cell: usize, a: usize, b: usize, m: usize, n: usize, k: usize) -> f64 {
        match &self.exchange {
            ModalExchange::Deterministic(t) => t.at(cell)[a * t.n_cols + b] * self.g_at(m, n, k),
            ModalExchange::Modal { tables, n_cols } => {
                let t = if tables.len() == 1 { &tables[0] } else { &tables[cell] };
                let kk = self.k;
                t[(a * n_cols + b) * kk * kk * kk + (m * kk + n) * kk + k]
            }
        }
    }

    /// `D_k(x, v_a, w_b) = ∫ σ_I ψ_k π dz`.
    pub fn d_entry(&self, cell: usize, a: usize, b: usize, k: usize) -> f64 {
        self.samples
            .iter()
            .zip(&self.quad.weights)
            .zip(&self.psi)
            .map(|((ops, w), p)| {
                let t = &ops.exchange;
                w * t.at(cell)[a * t.n_cols + b] * p[k]
            })
            .sum()
    }

    /// `K × K` block of `H_i` at `(x, v)`.
    pub fn h_block(&self, species: Species, cell: usize, m: usize) -> &[f64] {
        let kk = self.k * self.k;
        let idx = (cell * self.n_v[species.index()] + m) * kk;
        &self.h[species.index()][idx..idx + kk]
    }

    pub fn s_block(&self, species: Species, cell: usize, m: usize) -> &[f64] {
        let kk = self.k * self.k;
        let idx = (cell * self.n_v[species.index()] + m) * kk;
        &self.s[species.index()][idx..idx + kk]
    }
}

/// Assembles every tensor by z-quadrature with `max(min_nodes, 2K)` nodes.
pub fn assemble_tensors(
    basis: &GpcBasis,
    inputs: &RandomInputs,
    grids: &PhaseGrids,
    options: AssemblyOptions,
) -> Result<SpectralTensors> {
    let kb = basis.k;
    let quad = z_quadrature(options.min_nodes.max(2 * kb))?;
    let psi: Vec<Vec<f64>> = quad.nodes.iter().map(|&z| basis.eval_all(z)).collect();
    let samples: Vec<SampleOperators> = quad
        .nodes
        .iter()
        .map(|&z| SampleOperators::new(inputs, grids, z))
        .collect::<Result<_>>()?;
    let n_x = grids.n_x();
    let n_v = [grids.velocity[0].n_nodes, grids.velocity[1].n_nodes];
    let kk = kb * kb;

    let mut g = vec![0.0; kb * kk];
    for (w, p) in quad.weights.iter().zip(&psi) {
        for m in 0..kb {
            for n in 0..kb {
                for k in 0..kb {
                    g[(m * kb + n) * kb + k] += w * p[m] * p[n] * p[k];
                }
            }
        }
    }

    let collision = [0, 1].map(|s| {
        let kernel = if s == 0 { &inputs.sigma1 } else { &inputs.sigma2 };
        if options.fast_paths && kernel.z_independent {
            ModalKernel::Deterministic(samples[0].collision[s].clone())
        } else {
            let n = n_v[s];
            let cells = if samples[0].collision[s].shared() { 1 } else { n_x };
            let tables = (0..cells)
                .map(|cell| {
                    let mut t = vec![0.0; n * n * kk];
                    for (q, ops) in samples.iter().enumerate() {
                        let src = ops.collision[s].at(cell);
                        let (w, p) = (quad.weights[q], &psi[q]);
                        for ab in 0..n * n {
                            let sv = w * src[ab];
                            let block = &mut t[ab * kk..(ab + 1) * kk];
                            for k in 0..kb {
                                for l in 0..kb {
                                    block[k * kb + l] += sv * p[k] * p[l];
                                }
                            }
                        }
                    }
                    t
                })
                .collect();
            ModalKernel::Modal { tables, n_cols: n }
        }
    });

    let exchange = if options.fast_paths && inputs.sigma_i.z_independent {
        ModalExchange::Deterministic(samples[0].exchange.clone())
    } else {
        let (ne, nh) = (n_v[0], n_v[1]);
        let cells = if samples[0].exchange.shared() { 1 } else { n_x };
        let k3 = kk * kb;
        let tables = (0..cells)
            .map(|cell| {
                let mut t = vec![0.0; ne * nh * k3];
                for (q, ops) in samples.iter().enumerate() {
                    let src = ops.exchange.at(cell);
                    let (w, p) = (quad.weights[q], &psi[q]);
                    for ab in 0..ne * nh {
                        let sv = w * src[ab];
                        let block = &mut t[ab * k3..(ab + 1) * k3];
                        for m in 0..kb {
                            for n in 0..kb {
                                let pmn = sv * p[m] * p[n];
                                for k in 0..kb {
                                    block[(m * kb + n) * kb + k] += pmn * p[k];
                                }
                            }
                        }
                    }
                }
                t
            })
            .collect();
        ModalExchange::Modal { tables, n_cols: nh }
    };

    // H_i and S_i per (x, v) from the frequencies at each node
    let mut h = [vec![0.0; n_x * n_v[0] * kk], vec![0.0; n_x * n_v[1] * kk]];
    let mut s_mat = h.clone();
    let mut lambda_max = [0.0_f64; 2];
    for sp in 0..2 {
        let deterministic = options.fast_paths && matches!(collision[sp], ModalKernel::Deterministic(_));
        for (q, ops) in samples.iter().enumerate() {
            lambda_max[sp] = lambda_max[sp].max(ops.lambda[sp].max_abs());
            if deterministic && q > 0 {
                continue;
            }
            let (w, p) = (quad.weights[q], &psi[q]);
            for i in 0..n_x {
                for m in 0..n_v[sp] {
                    let lam = ops.lambda[sp].get(i, m);
                    let base = (i * n_v[sp] + m) * kk;
                    if deterministic {
                        for k in 0..kb {
                            h[sp][base + k * kb + k] = lam;
                            s_mat[sp][base + k * kb + k] = 1.0 / lam;
                        }
                    } else {
                        for k in 0..kb {
                            for l in 0..kb {
                                let pp = w * p[k] * p[l];
                                h[sp][base + k * kb + l] += pp * lam;
                                s_mat[sp][base + k * kb + l] += pp / lam;
                            }
                        }
                    }
                }
            }
        }
    }

    let project_fields = |pick: &dyn Fn(&SampleOperators) -> &VelocityField, n: usize| -> Vec<VelocityField> {
        (0..kb)
            .map(|k| {
                let mut out = VelocityField::zeros(n_x, n);
                for (q, ops) in samples.iter().enumerate() {
                    let c = quad.weights[q] * psi[q][k];
                    for (o, x) in out.data.iter_mut().zip(&pick(ops).data) {
                        *o += c * x;
                    }
                }
                out
            })
            .collect()
    };
    let ja = project_fields(&|o| &o.gen_even[0], n_v[0]);
    let jb = project_fields(&|o| &o.gen_odd[0], n_v[0]);
    let jc = project_fields(&|o| &o.gen_even[1], n_v[1]);
    let jd = project_fields(&|o| &o.gen_odd[1], n_v[1]);

    let mut doping = vec![vec![0.0; kb]; n_x];
    let mut mobility = [vec![vec![0.0; kk]; n_x], vec![vec![0.0; kk]; n_x]];
    let mut rec_a = vec![vec![0.0; kb]; n_x];
    let mut rec_b = vec![vec![0.0; kb * kk]; n_x];
    for (q, ops) in samples.iter().enumerate() {
        let z = quad.nodes[q];
        let (w, p) = (quad.weights[q], &psi[q]);
        let (mu_n, mu_p) = mobilities(inputs, grids, z)?;
        let rec = recombination_coeffs(inputs, grids, z)?;
        for i in 0..n_x {
            for k in 0..kb {
                doping[i][k] += w * ops.doping[i] * p[k];
                rec_a[i][k] += w * rec.a[i] * p[k];
                for l in 0..kb {
                    let pp = w * p[k] * p[l];
                    mobility[0][i][k * kb + l] += pp * mu_n[i];
                    mobility[1][i][k * kb + l] += pp * mu_p[i];
                    for n in 0..kb {
                        rec_b[i][(k * kb + l) * kb + n] += pp * p[n] * rec.b[i];
                    }
                }
            }
        }
    }

    Ok(SpectralTensors {
        k: kb,
        basis: *basis,
        quad,
        psi,
        samples,
        g,
        collision,
        exchange,
        h,
        s: s_mat,
        ja,
        jb,
        jc,
        jd,
        doping,
        mobility,
        rec_a,
        rec_b,
        lambda_max,
        n_x,
        n_v,
    })
}
