//! Solvers for the bipolar semiconductor Boltzmann-Poisson system in the diffusive
//! scaling.
//!
//! The crate provides
//! - a deterministic asymptotic-preserving (AP) kinetic solver built on the even/odd
//!   parity formulation ([`kinetic_ap`]),
//! - the limiting bipolar drift-diffusion-Poisson solver and its Galerkin projection
//!   ([`drift_diffusion`]),
//! - a generalized polynomial chaos stochastic Galerkin solver for random inputs
//!   ([`gpc`], [`sg_solver`]),
//! - a stochastic collocation harness with error functionals and convergence studies
//!   ([`uq_harness`]).
//!
//! Velocity space is one dimensional and discretized with a Gauss-Hermite rule per
//! species; the spatial domain is a uniform cell-centered mesh.

pub mod drift_diffusion;
pub mod error;
pub mod gpc;
pub mod grid;
pub mod kinetic_ap;
pub mod linalg;
pub mod physics;
pub mod problems;
pub mod sg_solver;
pub mod uq_harness;

pub use error::{Result, SolverError};

/// Carrier species. Electrons are species 1 in the parity equations, holes species 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    Electron,
    Hole,
}

impl Species {
    pub const BOTH: [Species; 2] = [Species::Electron, Species::Hole];

    pub fn index(self) -> usize {
        match self {
            Species::Electron => 0,
            Species::Hole => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::Electron => "electron",
            Species::Hole => "hole",
        }
    }

    /// Sign of the field term `∓ E ∂_v` as it appears on the left-hand side of the
    /// parity system: `-1` for electrons, `+1` for holes.
    pub fn field_sign(self) -> f64 {
        match self {
            Species::Electron => -1.0,
            Species::Hole => 1.0,
        }
    }

    /// Effective-mass exponent of the species Maxwellian (1 for electrons, β for holes).
    pub fn maxwellian_beta(self, beta: f64) -> f64 {
        match self {
            Species::Electron => 1.0,
            Species::Hole => beta,
        }
    }

    /// Transport scaling `s_i` (1 for electrons, β for holes).
    pub fn transport_scale(self, beta: f64) -> f64 {
        self.maxwellian_beta(beta)
    }
}
