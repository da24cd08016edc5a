//! Spatial mesh, per-species Gauss-Hermite velocity grids and discrete derivative
//! operators in `x` and `v`.

use std::f64::consts::PI;

use crate::error::{invalid, Result, SolverError};
use crate::Species;

/// Uniform cell-centered mesh on `[x_left, x_right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    pub n_cells: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub dx: f64,
    pub centers: Vec<f64>,
}

/// Builds the cell-centered mesh; cell `i` is centered at `x_left + (i + 1/2) dx`.
pub fn build_mesh(n_cells: usize, x_left: f64, x_right: f64) -> Result<SpatialMesh> {
    if n_cells < 4 {
        return Err(invalid("n_cells", format!("need at least 4 cells, got {n_cells}")));
    }
    if !(x_right > x_left) || !x_left.is_finite() || !x_right.is_finite() {
        return Err(invalid(
            "x_right",
            format!("domain [{x_left}, {x_right}] is empty or inverted"),
        ));
    }
    let dx = (x_right - x_left) / n_cells as f64;
    let centers = (0..n_cells).map(|i| x_left + (i as f64 + 0.5) * dx).collect();
    Ok(SpatialMesh {
        n_cells,
        x_left,
        x_right,
        dx,
        centers,
    })
}

/// Gauss-Hermite velocity nodes adapted to one species' Maxwellian.
///
/// `weights` integrate plain `∫ g(v) dv`: the Gaussian weight and the Jacobian of the
/// change of variables are folded in, so the rule is exact for
/// `g = p(v) exp(-β v² / 2)` with `deg p ≤ 2 n_nodes - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub n_nodes: usize,
    /// Ascending, exactly symmetric about zero.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub species_beta: f64,
    /// Normalized species Maxwellian sampled at the nodes.
    pub maxwellian: Vec<f64>,
    /// `reflect[m]` is the index of `-nodes[m]`.
    pub reflect: Vec<usize>,
    /// Row-major `n × n` velocity differentiation matrix (see [`velocity_derivative`]).
    pub d_dv: Vec<f64>,
}

impl VelocityGrid {
    /// Index of the first strictly positive node.
    pub fn first_positive(&self) -> usize {
        self.n_nodes / 2
    }

    /// `∑_m w_m g_m`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, g)| w * g).sum()
    }

    /// Applies `∂_v` to one velocity profile.
    pub fn differentiate(&self, values: &[f64], out: &mut [f64]) {
        crate::linalg::mat_vec(&self.d_dv, values, out);
    }

    pub fn max_speed(&self) -> f64 {
        self.nodes.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Nodes `u` and plain (Gaussian-free) weights `W` with `∑ W g(u) ≈ ∫ g(u) du`, exact
/// for `g = p(u) e^{-u²}`, `deg p ≤ 2n - 1`. Nodes are returned in ascending order.
fn gauss_hermite_plain(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut desc = vec![0.0; n];
    let mut wdesc = vec![0.0; n];
    let half = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * desc[0],
            3 => 1.91 * z - 0.91 * desc[1],
            _ => 2.0 * z - desc[i - 2],
        };
        let mut deriv = 0.0;
        for _ in 0..100 {
            // Normalized Hermite functions φ_k(z) = p_k(z) e^{-z²/2}; the Newton ratio
            // φ_n / φ_n' is unaffected by the common Gaussian factor.
            let mut p1 = pim4 * (-0.5 * z * z).exp();
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            // d/dz of the polynomial part, carried with the same Gaussian factor
            deriv = (2.0 * n as f64).sqrt() * p2;
            let step = p1 / deriv;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        desc[i] = z;
        desc[n - 1 - i] = -z;
        // w_gauss = 2 / p_n'(z)^2 and W = w_gauss e^{z²}; with the Hermite-function
        // recurrence, deriv already carries e^{-z²/2}.
        let w = 2.0 / (deriv * deriv);
        wdesc[i] = w;
        wdesc[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        desc[n / 2] = 0.0;
    }
    desc.reverse();
    wdesc.reverse();
    (desc, wdesc)
}

/// Builds the species velocity grid with `n_nodes` Gauss-Hermite points for the
/// Maxwellian `exp(-β v²/2)`.
pub fn hermite_rule(n_nodes: usize, beta: f64) -> Result<VelocityGrid> {
    if n_nodes < 8 || n_nodes % 2 == 1 {
        return Err(invalid(
            "n_v",
            format!("velocity node count must be even and >= 8, got {n_nodes}"),
        ));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    let (u, wu) = gauss_hermite_plain(n_nodes);
    let scale = (2.0 / beta).sqrt();
    let mut nodes: Vec<f64> = u.iter().map(|x| x * scale).collect();
    let mut weights: Vec<f64> = wu.iter().map(|w| w * scale).collect();
    // enforce bit-exact mirror symmetry
    for m in 0..n_nodes / 2 {
        let p = n_nodes - 1 - m;
        let v = 0.5 * (nodes[p] - nodes[m]);
        nodes[m] = -v;
        nodes[p] = v;
        let w = 0.5 * (weights[p] + weights[m]);
        weights[m] = w;
        weights[p] = w;
    }
    let norm = (beta / (2.0 * PI)).sqrt();
    let maxwellian = nodes.iter().map(|v| norm * (-0.5 * beta * v * v).exp()).collect();
    let d_dv = velocity_derivative(&nodes, beta);
    let mut grid = VelocityGrid {
        n_nodes,
        nodes,
        weights,
        species_beta: beta,
        maxwellian,
        reflect: Vec::new(),
        d_dv,
    };
    grid.reflect = reflect_index(&grid)?;
    Ok(grid)
}

/// Permutation `p` with `nodes[p[m]] = -nodes[m]`.
pub fn reflect_index(grid: &VelocityGrid) -> Result<Vec<usize>> {
    let nodes = &grid.nodes;
    let mut perm = Vec::with_capacity(nodes.len());
    for (m, &v) in nodes.iter().enumerate() {
        let partner = nodes
            .iter()
            .position(|&w| (w + v).abs() <= 1e-12 * v.abs().max(1.0))
            .ok_or(SolverError::AsymmetricGrid { index: m, value: v })?;
        perm.push(partner);
    }
    Ok(perm)
}

/// Velocity differentiation matrix for the species with Maxwellian exponent `beta`.
///
/// Values are interpolated as `g(v) = p(v) exp(-β v²/2)` with `p` the Lagrange
/// polynomial through `g_m / exp(-β v_m²/2)`, and differentiated exactly:
/// `g' = (p' - β v p) exp(-β v²/2)`. The operator is exact on the space the
/// quadrature resolves and conserves `∑ w_m (D g)_m = 0`.
pub fn velocity_derivative(nodes: &[f64], beta: f64) -> Vec<f64> {
    let n = nodes.len();
    // barycentric weights
    let mut bary = vec![1.0; n];
    for i in 0..n {
        for k in 0..n {
            if k != i {
                bary[i] /= nodes[i] - nodes[k];
            }
        }
    }
    let mut plain = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let d = bary[j] / bary[i] / (nodes[i] - nodes[j]);
                plain[i * n + j] = d;
                diag -= d;
            }
        }
        plain[i * n + i] = diag;
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // exp(-β v_i²/2) / exp(-β v_j²/2)
            let ratio = (-0.5 * beta * (nodes[i] * nodes[i] - nodes[j] * nodes[j])).exp();
            out[i * n + j] = ratio * plain[i * n + j];
        }
        out[i * n + i] -= beta * nodes[i];
    }
    out
}

/// Centered first derivative of a field stored with `ghosts` extra cells on each side.
/// Returns values for the interior cells only.
pub fn centered_difference(extended: &[f64], ghosts: usize, dx: f64) -> Vec<f64> {
    assert!(ghosts >= 1);
    let n = extended.len() - 2 * ghosts;
    (0..n)
        .map(|i| {
            let c = i + ghosts;
            (extended[c + 1] - extended[c - 1]) / (2.0 * dx)
        })
        .collect()
}

/// Centered first derivative in the interior with second-order one-sided
/// differences in the first and last cell.
pub fn one_sided_difference(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3);
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dx);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * dx);
    }
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dx);
    out
}

/// Mesh plus one velocity grid per species.
#[derive(Debug, Clone)]
pub struct PhaseGrids {
    pub mesh: SpatialMesh,
    pub velocity: [VelocityGrid; 2],
    pub beta: f64,
}

impl PhaseGrids {
    pub fn new(mesh: SpatialMesh, n_v: usize, beta: f64) -> Result<Self> {
        let electron = hermite_rule(n_v, 1.0)?;
        let hole = hermite_rule(n_v, beta)?;
        Ok(Self {
            mesh,
            velocity: [electron, hole],
            beta,
        })
    }

    pub fn species(&self, s: Species) -> &VelocityGrid {
        &self.velocity[s.index()]
    }

    pub fn n_x(&self) -> usize {
        self.mesh.n_cells
    }

    pub fn n_v(&self) -> usize {
        self.velocity[0].n_nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_layout() {
        let m = build_mesh(100, 0.0, 1.0).unwrap();
        assert!((m.dx - 0.01).abs() < 1e-15);
        assert!((m.centers[0] - 0.005).abs() < 1e-15);
        let m4 = build_mesh(4, 0.0, 1.0).unwrap();
        assert_eq!(m4.centers, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(build_mesh(3, 0.0, 1.0).is_err());
        assert!(build_mesh(10, 1.0, 0.0).is_err());
    }

    #[test]
    fn hermite_rejects_bad_sizes() {
        assert!(hermite_rule(7, 1.0).is_err());
        assert!(hermite_rule(9, 1.0).is_err());
        assert!(hermite_rule(6, 1.0).is_err());
        assert!(hermite_rule(8, -1.0).is_err());
    }

    #[test]
    fn maxwellian_moments() {
        for n in [8, 16, 20, 32] {
            let g = hermite_rule(n, 1.0).unwrap();
            let m0 = g.integrate(&g.maxwellian);
            assert!((m0 - 1.0).abs() < 1e-12, "n={n}: {m0}");
            let v2: Vec<f64> = g.nodes.iter().zip(&g.maxwellian).map(|(v, m)| v * v * m).collect();
            assert!((g.integrate(&v2) - 1.0).abs() < 1e-10);
        }
        let h = hermite_rule(20, 0.9).unwrap();
        let v2: Vec<f64> = h.nodes.iter().zip(&h.maxwellian).map(|(v, m)| v * v * m).collect();
        assert!((h.integrate(&v2) - 1.0 / 0.9).abs() < 1e-10);
    }

    #[test]
    fn gaussian_moments_up_to_fourth() {
        for beta in [1.0, 0.9, 0.5] {
            let g = hermite_rule(20, beta).unwrap();
            let var = 1.0 / beta;
            let exact = [1.0, 0.0, var, 0.0, 3.0 * var * var];
            for (k, e) in exact.iter().enumerate() {
                let vals: Vec<f64> = g
                    .nodes
                    .iter()
                    .zip(&g.maxwellian)
                    .map(|(v, m)| v.powi(k as i32) * m)
                    .collect();
                assert!((g.integrate(&vals) - e).abs() < 1e-10, "beta={beta} k={k}");
            }
        }
    }

    #[test]
    fn reflection_is_an_involution() {
        for n in [8, 10, 20, 32, 48] {
            let g = hermite_rule(n, 0.9).unwrap();
            for m in 0..n {
                assert_eq!(g.nodes[g.reflect[m]], -g.nodes[m]);
                assert_eq!(g.reflect[g.reflect[m]], m);
            }
        }
        let toy = VelocityGrid {
            n_nodes: 4,
            nodes: vec![-2.0, -1.0, 1.0, 2.0],
            weights: vec![1.0; 4],
            species_beta: 1.0,
            maxwellian: vec![0.0; 4],
            reflect: vec![],
            d_dv: vec![],
        };
        assert_eq!(reflect_index(&toy).unwrap(), vec![3, 2, 1, 0]);
        let bad = VelocityGrid {
            nodes: vec![-2.0, -1.0, 1.0, 2.5],
            ..toy
        };
        assert!(matches!(reflect_index(&bad), Err(SolverError::AsymmetricGrid { .. })));
    }

    #[test]
    fn velocity_derivative_is_exact_on_resolved_space() {
        let g = hermite_rule(20, 1.0).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|v| v * (-0.5 * v * v).exp()).collect();
        let mut df = vec![0.0; 20];
        g.differentiate(&f, &mut df);
        for (m, v) in g.nodes.iter().enumerate() {
            let exact = (1.0 - v * v) * (-0.5 * v * v).exp();
            assert!((df[m] - exact).abs() <= 1e-10, "node {m}");
            if m > 0 && m < 19 {
                assert!((df[m] - exact).abs() <= 1e-6 * exact.abs().max(1e-300) + 1e-12);
            }
        }
    }

    #[test]
    fn velocity_derivative_conserves_mass() {
        for beta in [1.0, 0.9] {
            let g = hermite_rule(20, beta).unwrap();
            let n = g.n_nodes;
            for j in 0..n {
                // column j of W^T D, scaled by the size of the unit vector's mass
                let col: f64 = (0..n).map(|i| g.weights[i] * g.d_dv[i * n + j]).sum();
                assert!(col.abs() <= 1e-9 * g.weights[j].max(1.0), "beta={beta} j={j}: {col}");
            }
        }
    }

    #[test]
    fn spatial_differences_reproduce_linear_slope() {
        let m = build_mesh(10, 0.0, 1.0).unwrap();
        let lin: Vec<f64> = m.centers.iter().map(|x| 3.0 * x - 1.0).collect();
        for d in one_sided_difference(&lin, m.dx) {
            assert!((d - 3.0).abs() < 1e-12);
        }
        let mut ext = vec![3.0 * (-1.5 * m.dx) - 1.0, 3.0 * (-0.5 * m.dx) - 1.0];
        ext.extend(&lin);
        ext.push(3.0 * (1.0 + 0.5 * m.dx) - 1.0);
        ext.push(3.0 * (1.0 + 1.5 * m.dx) - 1.0);
        for d in centered_difference(&ext, 2, m.dx) {
            assert!((d - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = hermite_rule(20, 0.9).unwrap();
        let b = hermite_rule(20, 0.9).unwrap();
        assert_eq!(a, b);
    }
}
