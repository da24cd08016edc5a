//! Experiment dispatch and CSV/manifest artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use bkap_core::drift_diffusion::{dd_run, DdConfig, DdProblem};
use bkap_core::grid::{build_mesh, PhaseGrids};
use bkap_core::kinetic_ap::{step_count, ApConfig, ApSolver};
use bkap_core::physics::RandomInputs;
use bkap_core::problems::Preset;
use bkap_core::uq_harness::{
    convergence_study_k, equilibrium_distance, error_mean_sd, run_collocation, run_sg,
    sensitivity_decay_experiment, shared_penalty, DecayConfig, Quantity, StatsField, StudyResult,
};
use bkap_core::gpc::AssemblyOptions;
use bkap_core::{SolverError, Species};
use thiserror::Error;

use crate::config::{emit_config, ConfigError, Experiment, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(#[from] SolverError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Files written by a run and scalar results recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, f64)>,
}

/// Full-precision scientific notation used in every artifact.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.17e}")
}

/// Tracks created files so a failed run can remove its partial output.
struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn writer(&mut self, name: &str, header: &[&str]) -> Result<csv::Writer<fs::File>, RunError> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)?;
        w.write_record(header)?;
        Ok(w)
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
    }
}

fn write_time_series(art: &mut Artifacts, name: &str, rows: &[(f64, &str, f64)]) -> Result<(), RunError> {
    let mut w = art.writer(name, &["time", "species", "value"])?;
    for (t, s, v) in rows {
        w.write_record([fmt_value(*t), s.to_string(), fmt_value(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_profiles(art: &mut Artifacts, name: &str, x: &[f64], rows: &[(&str, &str, &[f64])]) -> Result<(), RunError> {
    let mut w = art.writer(name, &["x", "quantity", "statistic", "value"])?;
    for (q, stat, values) in rows {
        for (xi, v) in x.iter().zip(values.iter()) {
            w.write_record([fmt_value(*xi), q.to_string(), stat.to_string(), fmt_value(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn stats_rows(stats: &StatsField) -> Vec<(&'static str, &'static str, &[f64])> {
    let mut rows = Vec::new();
    for q in Quantity::ALL {
        rows.push((q.name(), "mean", stats.mean_of(q)));
        rows.push((q.name(), "sd", stats.sd_of(q)));
    }
    rows
}

fn write_study(art: &mut Artifacts, name: &str, study: &StudyResult) -> Result<(), RunError> {
    let mut w = art.writer(name, &[study.parameter.as_str(), "quantity", "statistic", "error"])?;
    for s in &study.series {
        for (p, e) in study.parameters.iter().zip(&s.values) {
            w.write_record([format!("{p}"), s.quantity.clone(), s.statistic.clone(), fmt_value(*e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn grids_for(cfg: &RunConfig, n_cells: usize, n_v: usize) -> Result<PhaseGrids, SolverError> {
    PhaseGrids::new(build_mesh(n_cells, 0.0, 1.0)?, n_v, cfg.setup.beta)
}

fn ap_config(cfg: &RunConfig) -> ApConfig {
    let s = &cfg.setup;
    ApConfig::new(s.epsilon, s.dt, s.beta, s.gamma, s.phi_bc)
}

/// Relative discrete `L²` difference `‖a - b‖ / ‖b‖`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn run_test1a(cfg: &RunConfig, inputs: &RandomInputs, art: &mut Artifacts, report: &mut RunReport) -> Result<(), RunError> {
    let grids = grids_for(cfg, cfg.setup.n_cells, cfg.setup.n_v)?;
    let mut solver = ApSolver::new(grids.clone(), inputs, 0.0, ap_config(cfg))?;
    let n = step_count(cfg.setup.t_final, cfg.setup.dt);
    let mut rows: Vec<(f64, &str, f64)> = Vec::with_capacity(2 * n + 2);
    let mut record = |s: &ApSolver| {
        let d = equilibrium_distance(&s.grids, &s.distribution());
        for sp in Species::BOTH {
            rows.push((s.state.time, sp.name(), d[sp.index()]));
        }
    };
    record(&solver);
    solver.advance(n, &mut record)?;
    let last = &rows[rows.len() - 2..];
    report.summary.push(("distance_electron".into(), last[0].2));
    report.summary.push(("distance_hole".into(), last[1].2));
    write_time_series(art, "distance.csv", &rows)?;
    let m = &solver.macro_state;
    write_profiles(
        art,
        "profiles.csv",
        &grids.mesh.centers,
        &[
            ("rho1", "value", &m.rho[0]),
            ("rho2", "value", &m.rho[1]),
            ("u1", "value", &m.u[0]),
            ("u2", "value", &m.u[1]),
            ("phi", "value", &m.phi),
            ("E", "value", &m.e_field),
        ],
    )
}

fn run_test1b(cfg: &RunConfig, inputs: &RandomInputs, art: &mut Artifacts, report: &mut RunReport) -> Result<(), RunError> {
    let s = &cfg.setup;
    let grids = grids_for(cfg, s.n_cells, s.n_v)?;
    let n = step_count(s.t_final, s.dt);
    let mut solver = ApSolver::new(grids.clone(), inputs, 0.0, ap_config(cfg))?;
    solver.advance(n, |_| {})?;
    let problem = DdProblem::new(inputs, &grids, 0.0, DdConfig::new(s.dt, s.gamma, s.phi_bc))?;
    let start = problem.state(vec![1.0; s.n_cells], vec![1.0; s.n_cells])?;
    let dd = dd_run(&problem, start, n)?;
    let m = &solver.macro_state;
    for (name, k, d) in [("rel_l2_rho1", &m.rho[0], &dd.n), ("rel_l2_rho2", &m.rho[1], &dd.p)] {
        report.summary.push((name.into(), relative_l2(k, d)));
    }
    write_profiles(
        art,
        "kinetic_profiles.csv",
        &grids.mesh.centers,
        &[("rho1", "value", &m.rho[0]), ("rho2", "value", &m.rho[1]), ("phi", "value", &m.phi)],
    )?;
    write_profiles(
        art,
        "dd_profiles.csv",
        &grids.mesh.centers,
        &[("rho1", "value", &dd.n), ("rho2", "value", &dd.p), ("phi", "value", &dd.phi)],
    )
}

fn run_sg_vs_sc(cfg: &RunConfig, inputs: &RandomInputs, art: &mut Artifacts, report: &mut RunReport) -> Result<(), RunError> {
    let s = &cfg.setup;
    let grids = grids_for(cfg, s.n_cells, s.n_v)?;
    let n = step_count(s.t_final, s.dt);
    let mut ap = ap_config(cfg);
    ap.eta = Some(shared_penalty(inputs, &grids, &[s.n_colloc, 16.max(2 * s.k)])?);
    let reference = run_collocation(&grids, inputs, &ap, s.n_colloc, n)?;
    let sg = run_sg(&grids, inputs, &ap, s.k, n, AssemblyOptions::default())?;
    let errs = error_mean_sd(&sg, &reference, grids.mesh.dx)?;
    write_profiles(art, "sg_profiles.csv", &grids.mesh.centers, &stats_rows(&sg))?;
    write_profiles(art, "sc_profiles.csv", &grids.mesh.centers, &stats_rows(&reference))?;
    let mut w = art.writer("errors.csv", &["K", "quantity", "statistic", "error"])?;
    for q in Quantity::ALL {
        let (em, es) = errs[q.index()];
        w.write_record([s.k.to_string(), q.name().into(), "mean".into(), fmt_value(em)])?;
        w.write_record([s.k.to_string(), q.name().into(), "sd".into(), fmt_value(es)])?;
        report.summary.push((format!("e_mean_{}", q.name()), em));
        report.summary.push((format!("e_std_{}", q.name()), es));
    }
    w.flush()?;
    Ok(())
}

fn run_test2d(cfg: &RunConfig, inputs: &RandomInputs, art: &mut Artifacts, report: &mut RunReport) -> Result<(), RunError> {
    let s = &cfg.setup;
    let grids = grids_for(cfg, s.n_cells, s.n_v)?;
    let n = step_count(s.t_final, s.dt);
    let mut ap = ap_config(cfg);
    ap.eta = Some(shared_penalty(inputs, &grids, &[s.n_colloc, 16.max(2 * s.k)])?);
    let reference = run_collocation(&grids, inputs, &ap, s.n_colloc, n)?;
    let ks: Vec<usize> = (1..=s.k).collect();
    let study = convergence_study_k(&grids, inputs, &ap, &ks, &reference, n)?;
    for series in &study.series {
        if let Some(last) = series.values.last() {
            report
                .summary
                .push((format!("e_{}_{}_k{}", series.statistic, series.quantity, s.k), *last));
        }
    }
    write_profiles(art, "sc_profiles.csv", &grids.mesh.centers, &stats_rows(&reference))?;
    write_study(art, "convergence.csv", &study)
}

fn run_decay(cfg: &RunConfig, inputs: &RandomInputs, art: &mut Artifacts, report: &mut RunReport) -> Result<(), RunError> {
    let s = &cfg.setup;
    let grids = grids_for(cfg, s.n_cells, s.n_v)?;
    let dc = DecayConfig {
        epsilon: s.epsilon,
        dt: s.dt,
        n_steps: step_count(s.t_final, s.dt),
        n_outputs: cfg.decay_outputs,
        n_colloc: s.n_colloc,
        amplitude: cfg.decay_amplitude,
        seed: s.seed,
        transient_fraction: 0.1,
    };
    let r = sensitivity_decay_experiment(&grids, inputs, &dc)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let rows: Vec<(f64, &str, f64)> = r
        .study
        .parameters
        .iter()
        .zip(&r.study.series[0].values)
        .map(|(t, v)| (*t, "both", *v))
        .collect();
    write_time_series(art, "decay.csv", &rows)?;
    report.summary.push(("slope".into(), r.slope));
    report.summary.push(("r_squared".into(), r.r_squared));
    report.summary.push(("nonmonotone_fraction".into(), r.nonmonotone_fraction));
    Ok(())
}

/// Runs the configured experiment and writes its artifacts plus `manifest.txt`.
/// On failure every file written by this run is removed.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let inputs = cfg.setup.inputs()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    let mut report = RunReport::default();
    let outcome = (|| -> Result<(), RunError> {
        match cfg.experiment {
            Experiment::Preset(Preset::Test1a) => run_test1a(cfg, &inputs, &mut art, &mut report)?,
            Experiment::Preset(Preset::Test1b) => run_test1b(cfg, &inputs, &mut art, &mut report)?,
            Experiment::Preset(Preset::Test2a | Preset::Test2b | Preset::Test2c) | Experiment::Custom => {
                run_sg_vs_sc(cfg, &inputs, &mut art, &mut report)?
            }
            Experiment::Preset(Preset::Test2d) => run_test2d(cfg, &inputs, &mut art, &mut report)?,
            Experiment::Preset(Preset::Decay) => run_decay(cfg, &inputs, &mut art, &mut report)?,
        }
        let mut manifest = emit_config(cfg);
        for (k, v) in &report.summary {
            manifest.push_str(&format!("# result.{k} = {}\n", fmt_value(*v)));
        }
        let path = art.dir.join("manifest.txt");
        art.files.push(path.clone());
        fs::write(&path, manifest)?;
        Ok(())
    })();
    match outcome {
        Ok(()) => {
            report.files = art.files.clone();
            Ok(report)
        }
        Err(e) => {
            art.cleanup();
            Err(e)
        }
    }
}
