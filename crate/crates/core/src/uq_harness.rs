//! Stochastic collocation driver, statistics, error functionals, the gPC-order
//! convergence study and the field-free sensitivity-decay experiment.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result, SolverError};
use crate::gpc::{assemble_tensors, legendre_basis, mean_sd, z_quadrature, AssemblyOptions};
use crate::grid::PhaseGrids;
use crate::kinetic_ap::{decompose, moments, reconstruct, ApConfig, ApSolver, Boundary, FieldMode, ParityState};
use crate::physics::{RandomInputs, SampleOperators, VelocityField};
use crate::sg_solver::SgSolver;
use crate::Species;

/// Macroscopic quantities reported by the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Rho1,
    Rho2,
    U1,
    U2,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Rho1, Quantity::Rho2, Quantity::U1, Quantity::U2];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Rho1 => "rho1",
            Quantity::Rho2 => "rho2",
            Quantity::U1 => "u1",
            Quantity::U2 => "u2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Mean and standard deviation profiles of `ρ_1, ρ_2, u_1, u_2`, in [`Quantity`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsField {
    pub mean: [Vec<f64>; 4],
    pub sd: [Vec<f64>; 4],
    pub time: f64,
}

impl StatsField {
    pub fn mean_of(&self, q: Quantity) -> &[f64] {
        &self.mean[q.index()]
    }

    pub fn sd_of(&self, q: Quantity) -> &[f64] {
        &self.sd[q.index()]
    }

    pub fn n_x(&self) -> usize {
        self.mean[0].len()
    }
}

/// One error curve of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySeries {
    pub quantity: String,
    pub statistic: String,
    pub values: Vec<f64>,
}

/// A parameter sweep: strictly increasing `parameters` and one or more error series.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub parameter: String,
    pub parameters: Vec<f64>,
    pub series: Vec<StudySeries>,
    pub norm: String,
    pub time: f64,
    pub n_cells: usize,
    pub n_v: usize,
}

impl StudyResult {
    pub fn series(&self, quantity: &str, statistic: &str) -> Option<&StudySeries> {
        self.series
            .iter()
            .find(|s| s.quantity == quantity && s.statistic == statistic)
    }
}

/// Worker count: `BKAP_THREADS` if set and positive, otherwise the available cores.
pub fn worker_count() -> usize {
    std::env::var("BKAP_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Applies `f` to every item on up to [`worker_count`] scoped threads, preserving order.
pub fn parallel_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    let workers = worker_count().min(n).max(1);
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every job stores a result"))
        .collect()
}

fn quantities(grids: &PhaseGrids, state: &ParityState) -> [Vec<f64>; 4] {
    let (rho, u) = moments(grids, state);
    let [r1, r2] = rho;
    let [u1, u2] = u;
    [r1, r2, u1, u2]
}

/// Quadrature statistics from per-node samples `samples[q][quantity][x]`.
pub fn quadrature_stats(samples: &[[Vec<f64>; 4]], weights: &[f64], time: f64) -> StatsField {
    let n_x = samples[0][0].len();
    let mut mean: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n_x]);
    for (s, w) in samples.iter().zip(weights) {
        for q in 0..4 {
            for i in 0..n_x {
                mean[q][i] += w * s[q][i];
            }
        }
    }
    // centered second pass: identical samples give exactly zero spread
    let mut var: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n_x]);
    for (s, w) in samples.iter().zip(weights) {
        for q in 0..4 {
            for i in 0..n_x {
                let d = s[q][i] - mean[q][i];
                var[q][i] += w * d * d;
            }
        }
    }
    let sd = std::array::from_fn(|q| var[q].iter().map(|v| v.max(0.0).sqrt()).collect());
    StatsField { mean, sd, time }
}

/// Runs the deterministic AP solver at each of `n_nodes` Gauss-Legendre nodes for
/// `n_steps` steps and forms quadrature statistics.
pub fn run_collocation(
    grids: &PhaseGrids,
    inputs: &RandomInputs,
    cfg: &ApConfig,
    n_nodes: usize,
    n_steps: usize,
) -> Result<StatsField> {
    let quad = z_quadrature(n_nodes)?;
    let jobs: Vec<(usize, f64)> = quad.nodes.iter().copied().enumerate().collect();
    let results = parallel_map(jobs, |_, &(node, z)| {
        let run = || -> Result<[Vec<f64>; 4]> {
            let mut solver = ApSolver::new(grids.clone(), inputs, z, cfg.clone())?;
            solver.advance(n_steps, |_| {})?;
            Ok(quantities(grids, &solver.state))
        };
        run().map_err(|e| SolverError::Collocation {
            node,
            z,
            source: Box::new(e),
        })
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(quadrature_stats(&samples, &quad.weights, n_steps as f64 * cfg.dt))
}

/// Mean (mode 0) and standard deviation (higher modes) of an SG solution.
pub fn sg_statistics(solver: &SgSolver) -> StatsField {
    let m = &solver.macro_state;
    let k = m.rho.len();
    let field = |q: usize, mode: usize| -> &[f64] {
        match q {
            0 | 1 => &m.rho[mode][q],
            _ => &m.u[mode][q - 2],
        }
    };
    let n_x = m.rho[0][0].len();
    let mut mean: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n_x));
    let mut sd: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n_x));
    let mut coeffs = vec![0.0; k];
    for q in 0..4 {
        for i in 0..n_x {
            for (mode, c) in coeffs.iter_mut().enumerate() {
                *c = field(q, mode)[i];
            }
            let (a, b) = mean_sd(&coeffs);
            mean[q].push(a);
            sd[q].push(b);
        }
    }
    StatsField {
        mean,
        sd,
        time: solver.state.time,
    }
}

/// Runs the SG solver with `k` basis functions for `n_steps` steps.
pub fn run_sg(
    grids: &PhaseGrids,
    inputs: &RandomInputs,
    cfg: &ApConfig,
    k: usize,
    n_steps: usize,
    options: AssemblyOptions,
) -> Result<StatsField> {
    let basis = legendre_basis(k)?;
    let tensors = assemble_tensors(&basis, inputs, grids, options)?;
    let mut solver = SgSolver::new(grids.clone(), inputs, tensors, cfg.clone())?;
    solver.advance(n_steps)?;
    Ok(sg_statistics(&solver))
}

/// BGK penalties shared by all collocation nodes and SG runs: `1.05 max λ_i` over the
/// Gauss-Legendre rules of every size in `node_counts` and the endpoints `z = ±1`.
pub fn shared_penalty(inputs: &RandomInputs, grids: &PhaseGrids, node_counts: &[usize]) -> Result<[f64; 2]> {
    let mut zs = vec![-1.0, 1.0];
    for &n in node_counts {
        zs.extend(z_quadrature(n)?.nodes);
    }
    let mut lam = [0.0_f64; 2];
    for z in zs {
        let ops = SampleOperators::new(inputs, grids, z)?;
        for s in Species::BOTH {
            lam[s.index()] = lam[s.index()].max(ops.max_lambda(s));
        }
    }
    Ok(lam.map(|l| 1.05 * l))
}

/// `∑_{l,m} |f_i - ρ_i M_i| Δx w_m` per species.
pub fn equilibrium_distance(grids: &PhaseGrids, f: &[VelocityField; 2]) -> [f64; 2] {
    let dx = grids.mesh.dx;
    [0, 1].map(|s| {
        let g = &grids.velocity[s];
        let rho = f[s].density(g);
        let mut total = 0.0;
        for (i, r) in rho.iter().enumerate() {
            for (m, fv) in f[s].row(i).iter().enumerate() {
                total += (fv - r * g.maxwellian[m]).abs() * g.weights[m];
            }
        }
        total * dx
    })
}

pub fn equilibrium_distance_parity(grids: &PhaseGrids, state: &ParityState, epsilon: f64) -> [f64; 2] {
    equilibrium_distance(grids, &reconstruct(state, epsilon))
}

/// Discrete `L²(x)` norm `(∑ |a - b|² Δx)^{1/2}`.
pub fn l2_difference(a: &[f64], b: &[f64], dx: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SolverError::MeshMismatch(format!("{} vs {} cells", a.len(), b.len())));
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * dx).sqrt())
}

/// `(E_mean, E_std)` per quantity.
pub fn error_mean_sd(sg: &StatsField, reference: &StatsField, dx: f64) -> Result<[(f64, f64); 4]> {
    if sg.n_x() != reference.n_x() {
        return Err(SolverError::MeshMismatch(format!(
            "statistics on {} and {} cells",
            sg.n_x(),
            reference.n_x()
        )));
    }
    let mut out = [(0.0, 0.0); 4];
    for q in 0..4 {
        out[q] = (
            l2_difference(&sg.mean[q], &reference.mean[q], dx)?,
            l2_difference(&sg.sd[q], &reference.sd[q], dx)?,
        );
    }
    Ok(out)
}

/// SG errors against `reference` for each order in `k_list` (strictly increasing).
pub fn convergence_study_k(
    grids: &PhaseGrids,
    inputs: &RandomInputs,
    cfg: &ApConfig,
    k_list: &[usize],
    reference: &StatsField,
    n_steps: usize,
) -> Result<StudyResult> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("K", "orders must be non-empty and strictly increasing"));
    }
    let runs = parallel_map(k_list.to_vec(), |_, &k| {
        run_sg(grids, inputs, cfg, k, n_steps, AssemblyOptions::default())
    });
    let mut series: Vec<StudySeries> = Vec::new();
    for q in [Quantity::Rho1, Quantity::Rho2] {
        for stat in ["mean", "sd"] {
            series.push(StudySeries {
                quantity: q.name().into(),
                statistic: stat.into(),
                values: Vec::with_capacity(k_list.len()),
            });
        }
    }
    for run in runs {
        let stats = run?;
        let errs = error_mean_sd(&stats, reference, grids.mesh.dx)?;
        for (idx, q) in [Quantity::Rho1, Quantity::Rho2].into_iter().enumerate() {
            series[2 * idx].values.push(errs[q.index()].0);
            series[2 * idx + 1].values.push(errs[q.index()].1);
        }
    }
    Ok(StudyResult {
        parameter: "K".into(),
        parameters: k_list.iter().map(|&k| k as f64).collect(),
        series,
        norm: "L2(x)".into(),
        time: n_steps as f64 * cfg.dt,
        n_cells: grids.n_x(),
        n_v: grids.n_v(),
    })
}

/// Setup of the field-free sensitivity-decay experiment.
#[derive(Debug, Clone)]
pub struct DecayConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Number of recorded outputs after `t = 0`.
    pub n_outputs: usize,
    pub n_colloc: usize,
    /// Relative perturbation size: `f_i = M_i (1 + amplitude h_i)` with `|h_i| ≤ 1`.
    pub amplitude: f64,
    pub seed: u64,
    /// Leading fraction of the record excluded from the fit.
    pub transient_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct DecayResult {
    /// Parameters are output times; one series `("f-f_ref", "sup_z")`.
    pub study: StudyResult,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub nonmonotone_fraction: f64,
    pub warnings: Vec<String>,
}

/// Smooth random perturbation with zero spatial mean, bounded by one in magnitude.
#[derive(Debug, Clone)]
pub struct Perturbation {
    /// Per species and Fourier mode: `(a, θ, b, θ', c)`.
    coeffs: [Vec<[f64; 5]>; 2],
}

impl Perturbation {
    pub const MODES: usize = 3;

    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = [0, 1].map(|_| {
            (0..Self::MODES)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect()
        });
        Self { coeffs }
    }

    /// `h_i(x, v, z)`, scaled so that `|h_i| ≤ 1` for `|v| ≤ 4`.
    pub fn eval(&self, species: Species, x: f64, v: f64, z: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let scale = 1.0 / (Self::MODES as f64 * 2.0 * 1.5 * (1.0 + 4.0));
        self.coeffs[species.index()]
            .iter()
            .enumerate()
            .map(|(p, c)| {
                let k = tau * (p + 1) as f64;
                let even = c[0] * (k * x + c[1]).cos();
                let odd = c[2] * v * (k * x + c[3]).sin();
                (even + odd) * (1.0 + 0.5 * c[4] * z)
            })
            .sum::<f64>()
            * scale
    }
}

/// Least-squares line through `(t, log y)`: `(slope, intercept, R²)`.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    let sty: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_tot: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = t
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// `‖f - g‖_{L²(x, v)}` summed over both species.
fn l2_xv(grids: &PhaseGrids, f: &[VelocityField; 2], g: &[VelocityField; 2]) -> f64 {
    let mut total = 0.0;
    for s in 0..2 {
        let w = &grids.velocity[s].weights;
        for i in 0..f[s].n_x {
            for (m, (a, b)) in f[s].row(i).iter().zip(g[s].row(i)).enumerate() {
                total += (a - b) * (a - b) * w[m];
            }
        }
    }
    (total * grids.mesh.dx).sqrt()
}

/// Field-free evolution of a small random perturbation on a periodic domain.
///
/// At each collocation node the perturbed run is compared with the unperturbed run
/// from `f_i = M_i`, and the supremum over nodes of `‖f - f_ref‖_{L²(x,v)}` is
/// recorded. A log-linear fit over the post-transient window gives the decay rate.
pub fn sensitivity_decay_experiment(grids: &PhaseGrids, inputs: &RandomInputs, cfg: &DecayConfig) -> Result<DecayResult> {
    if grids.beta != 1.0 {
        return Err(invalid("beta", "the decay experiment uses equal masses (beta = 1)"));
    }
    if cfg.n_outputs < 3 || cfg.n_steps < cfg.n_outputs {
        return Err(invalid("n_outputs", "need at least 3 outputs and no more outputs than steps"));
    }
    if !(0.0..1.0).contains(&cfg.transient_fraction) {
        return Err(invalid("transient_fraction", "must lie in [0, 1)"));
    }
    let mut warnings = Vec::new();
    if cfg.amplitude >= 0.5 {
        warnings.push(format!(
            "perturbation amplitude {} is not small; the perturbative decay estimate may not apply",
            cfg.amplitude
        ));
    }
    let mut ap = ApConfig::new(cfg.epsilon, cfg.dt, 1.0, 1.0, (0.0, 0.0));
    ap.boundary = Boundary::Periodic;
    ap.field = FieldMode::Zero;
    let perturbation = Perturbation::random(cfg.seed);
    let quad = z_quadrature(cfg.n_colloc)?;
    let every = cfg.n_steps / cfg.n_outputs;
    let jobs: Vec<(usize, f64)> = quad.nodes.iter().copied().enumerate().collect();
    let records = parallel_map(jobs, |_, &(node, z)| {
        let run = || -> Result<Vec<(f64, f64)>> {
            let f0 = Species::BOTH.map(|s| {
                let g = grids.species(s);
                VelocityField::from_fn(grids.n_x(), g.n_nodes, |i, m| {
                    let h = perturbation.eval(s, grids.mesh.centers[i], g.nodes[m], z);
                    g.maxwellian[m] * (1.0 + cfg.amplitude * h)
                })
            });
            let fr = Species::BOTH.map(|s| {
                let g = grids.species(s);
                VelocityField::from_fn(grids.n_x(), g.n_nodes, |_, m| g.maxwellian[m])
            });
            let s0 = decompose(grids, [&f0[0], &f0[1]], cfg.epsilon);
            let sr = decompose(grids, [&fr[0], &fr[1]], cfg.epsilon);
            let mut pert = ApSolver::with_state(grids.clone(), inputs, z, ap.clone(), s0)?;
            let mut refr = ApSolver::with_state(grids.clone(), inputs, z, ap.clone(), sr)?;
            let mut out = vec![(0.0, l2_xv(grids, &pert.distribution(), &refr.distribution()))];
            for o in 1..=cfg.n_outputs {
                pert.advance(every, |_| {})?;
                refr.advance(every, |_| {})?;
                out.push((o as f64 * every as f64 * cfg.dt, l2_xv(grids, &pert.distribution(), &refr.distribution())));
            }
            Ok(out)
        };
        run().map_err(|e| SolverError::Collocation {
            node,
            z,
            source: Box::new(e),
        })
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = records[0].iter().map(|p| p.0).collect();
    let norms: Vec<f64> = (0..times.len())
        .map(|o| records.iter().map(|r| r[o].1).fold(0.0, f64::max))
        .collect();
    let start = ((cfg.transient_fraction * times.len() as f64).ceil() as usize).min(times.len() - 2);
    let window_t = &times[start..];
    let window_y = &norms[start..];
    let (slope, intercept, r_squared) = if window_y.iter().all(|&y| y > 0.0) {
        log_linear_fit(window_t, window_y)
    } else {
        (0.0, f64::NEG_INFINITY, 1.0)
    };
    let increases = window_y.windows(2).filter(|w| w[1] > w[0]).count();
    let nonmonotone_fraction = increases as f64 / (window_y.len() - 1) as f64;
    Ok(DecayResult {
        study: StudyResult {
            parameter: "time".into(),
            parameters: times,
            series: vec![StudySeries {
                quantity: "f-f_ref".into(),
                statistic: "sup_z".into(),
                values: norms,
            }],
            norm: "L2(x,v)".into(),
            time: cfg.n_outputs as f64 * every as f64 * cfg.dt,
            n_cells: grids.n_x(),
            n_v: grids.n_v(),
        },
        slope,
        intercept,
        r_squared,
        nonmonotone_fraction,
        warnings,
    })
}
