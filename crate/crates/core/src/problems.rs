//! Named numerical experiments and the closed set of input closures they use.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Result, SolverError};
use crate::physics::{Doping, DopingParams, InitialData, RandomInputs, RandomKernel};

/// Collision kernel `σ_1 = σ_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Constant(f64),
    /// `a + b z`.
    Affine { a: f64, b: f64 },
}

/// Doping `c(x) (1 + amplitude z)` with the channel profile, or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DopingSpec {
    Profile { amplitude: f64 },
    Uniform(f64),
}

/// Initial data `ρ(z) M_i(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    /// `ρ ≡ 1`.
    Maxwellian,
    /// `ρ(z) = sin(π (z + 1) / 2)`.
    Sine,
}

fn parse_number(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| invalid_owned(field, format!("cannot parse number from {s:?}")))
}

fn invalid_owned(field: &str, reason: String) -> SolverError {
    SolverError::InvalidParameter {
        name: field.to_string(),
        reason,
    }
}

impl FromStr for KernelSpec {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "constant" => Ok(Self::Constant(parse_number("kernel", args)?)),
            "affine" => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| invalid_owned("kernel", format!("affine kernel needs `a,b`, got {args:?}")))?;
                Ok(Self::Affine {
                    a: parse_number("kernel", a)?,
                    b: parse_number("kernel", b)?,
                })
            }
            other => Err(invalid_owned("kernel", format!("unknown kernel kind {other:?}"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant:{c:?}"),
            Self::Affine { a, b } => write!(f, "affine:{a:?},{b:?}"),
        }
    }
}

impl FromStr for DopingSpec {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "profile" => Ok(Self::Profile {
                amplitude: if args.trim().is_empty() { 0.0 } else { parse_number("doping", args)? },
            }),
            "uniform" => Ok(Self::Uniform(parse_number("doping", args)?)),
            other => Err(invalid_owned("doping", format!("unknown doping kind {other:?}"))),
        }
    }
}

impl fmt::Display for DopingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Profile { amplitude } => write!(f, "profile:{amplitude:?}"),
            Self::Uniform(c) => write!(f, "uniform:{c:?}"),
        }
    }
}

impl FromStr for InitialSpec {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "maxwellian" => Ok(Self::Maxwellian),
            "sine" => Ok(Self::Sine),
            other => Err(invalid_owned("initial", format!("unknown initial data {other:?}"))),
        }
    }
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Maxwellian => "maxwellian",
            Self::Sine => "sine",
        })
    }
}

impl KernelSpec {
    pub fn build(self) -> Result<RandomKernel> {
        match self {
            Self::Constant(c) if c > 0.0 => Ok(RandomKernel::constant(c)),
            Self::Affine { a, b } if a - b.abs() > 0.0 => Ok(RandomKernel::affine_in_z(a, b)),
            _ => Err(invalid("kernel", "collision kernel must stay positive for z in [-1, 1]")),
        }
    }
}

impl DopingSpec {
    pub fn build(self) -> Doping {
        match self {
            Self::Profile { amplitude } => Doping::profile(DopingParams {
                random_amplitude: amplitude,
                ..DopingParams::default()
            }),
            Self::Uniform(c) => Doping::uniform(c),
        }
    }
}

impl InitialSpec {
    pub fn build(self, beta: f64) -> InitialData {
        match self {
            Self::Maxwellian => InitialData::scaled_maxwellian(beta, |_| 1.0, true),
            Self::Sine => InitialData::scaled_maxwellian(beta, |z| (0.5 * PI * (z + 1.0)).sin(), false),
        }
    }
}

/// Assembles the random inputs; `σ_I` is always the Gaussian exchange kernel.
pub fn build_inputs(kernel: KernelSpec, doping: DopingSpec, initial: InitialSpec, beta: f64) -> Result<RandomInputs> {
    let sigma = kernel.build()?;
    Ok(RandomInputs {
        sigma1: sigma.clone(),
        sigma2: sigma,
        sigma_i: RandomKernel::gaussian_exchange(),
        doping: doping.build(),
        initial: initial.build(beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Test1a,
    Test1b,
    Test2a,
    Test2b,
    Test2c,
    Test2d,
    Decay,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Test1a,
        Preset::Test1b,
        Preset::Test2a,
        Preset::Test2b,
        Preset::Test2c,
        Preset::Test2d,
        Preset::Decay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Test1a => "test1a",
            Preset::Test1b => "test1b",
            Preset::Test2a => "test2a",
            Preset::Test2b => "test2b",
            Preset::Test2c => "test2c",
            Preset::Test2d => "test2d",
            Preset::Decay => "decay",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Test1a => "deterministic relaxation to local equilibrium, L1 distance over time",
            Preset::Test1b => "deterministic AP limit against the drift-diffusion reference",
            Preset::Test2a => "random doping and collision kernel, SG vs collocation",
            Preset::Test2b => "random collision kernel, SG vs collocation",
            Preset::Test2c => "random initial data, SG vs collocation",
            Preset::Test2d => "spectral convergence in the gPC order",
            Preset::Decay => "field-free sensitivity decay toward the global Maxwellian",
        }
    }

    pub fn setup(self) -> ProblemSetup {
        let base = ProblemSetup {
            epsilon: 1e-3,
            n_cells: 100,
            n_v: 20,
            dt: 2e-6,
            t_final: 0.2,
            k: 4,
            n_colloc: 16,
            beta: 0.9,
            gamma: 0.002,
            phi_bc: (0.0, 5.0),
            kernel: KernelSpec::Constant(2.0),
            doping: DopingSpec::Profile { amplitude: 0.0 },
            initial: InitialSpec::Maxwellian,
            seed: 0,
        };
        match self {
            Preset::Test1a => base,
            Preset::Test1b => ProblemSetup { epsilon: 1e-5, ..base },
            Preset::Test2a => ProblemSetup {
                t_final: 0.1,
                kernel: KernelSpec::Affine { a: 2.0, b: 1.0 },
                doping: DopingSpec::Profile { amplitude: 0.5 },
                ..base
            },
            Preset::Test2b => ProblemSetup {
                t_final: 0.1,
                n_v: 16,
                kernel: KernelSpec::Affine { a: 2.0, b: 0.5 },
                ..base
            },
            Preset::Test2c => ProblemSetup {
                t_final: 0.1,
                initial: InitialSpec::Sine,
                ..base
            },
            Preset::Test2d => ProblemSetup {
                t_final: 0.005,
                k: 5,
                kernel: KernelSpec::Affine { a: 2.0, b: 1.0 },
                doping: DopingSpec::Profile { amplitude: 0.5 },
                ..base
            },
            Preset::Decay => ProblemSetup {
                epsilon: 1e-2,
                n_cells: 40,
                n_v: 16,
                dt: 1e-4,
                t_final: 0.5,
                k: 1,
                n_colloc: 4,
                beta: 1.0,
                phi_bc: (0.0, 0.0),
                kernel: KernelSpec::Affine { a: 2.0, b: 1.0 },
                doping: DopingSpec::Uniform(1.0),
                seed: 20_240_601,
                ..base
            },
        }
    }
}

impl FromStr for Preset {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| invalid_owned("experiment", format!("unknown preset {s:?}")))
    }
}

/// Fully resolved physical and numerical parameters of one experiment on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSetup {
    pub epsilon: f64,
    pub n_cells: usize,
    pub n_v: usize,
    pub dt: f64,
    pub t_final: f64,
    /// gPC order (number of basis functions).
    pub k: usize,
    pub n_colloc: usize,
    pub beta: f64,
    pub gamma: f64,
    pub phi_bc: (f64, f64),
    pub kernel: KernelSpec,
    pub doping: DopingSpec,
    pub initial: InitialSpec,
    pub seed: u64,
}

impl ProblemSetup {
    pub fn inputs(&self) -> Result<RandomInputs> {
        build_inputs(self.kernel, self.doping, self.initial, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid_owned(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.n_cells < 4 {
            return Err(invalid("n_cells", "need at least 4 cells"));
        }
        if self.n_v < 8 || self.n_v % 2 != 0 {
            return Err(invalid("n_v", "need an even number of velocity nodes, at least 8"));
        }
        if self.k == 0 {
            return Err(invalid("K", "gPC order must be at least 1"));
        }
        if self.n_colloc == 0 {
            return Err(invalid("n_colloc", "need at least one collocation node"));
        }
        if !(self.phi_bc.0.is_finite() && self.phi_bc.1.is_finite()) {
            return Err(invalid("phi_bc", "boundary potentials must be finite"));
        }
        self.kernel.build()?;
        Ok(())
    }
}
