use std::fs;
use std::process::Command;

use bkap_cli::config::{emit_config, parse_config_str, Experiment, RunConfig};
use bkap_cli::runner::run;
use bkap_core::problems::{DopingSpec, KernelSpec, Preset};
use proptest::prelude::*;

fn bkap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bkap"))
}

fn tiny(preset: Preset, dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::from_experiment(Experiment::Preset(preset));
    c.setup.n_cells = 20;
    c.setup.n_v = 8;
    c.setup.t_final = 20.0 * c.setup.dt;
    c.setup.n_colloc = 4;
    c.setup.k = c.setup.k.min(3);
    c.output_dir = dir.to_path_buf();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emitted_config_parses_back(
        preset in prop::sample::select(Preset::ALL.to_vec()),
        eps in 1e-6..1.0_f64, dt in 1e-8..1e-3_f64, beta in 0.3..2.0_f64,
        a in 1.0..4.0_f64, frac in -0.9..0.9_f64, amp in 0.0..0.9_f64,
        n_cells in 4usize..400, k in 1usize..8, seed in any::<u64>(),
    ) {
        let mut c = RunConfig::from_experiment(Experiment::Preset(preset));
        c.setup.epsilon = eps;
        c.setup.dt = dt;
        c.setup.beta = beta;
        c.setup.kernel = KernelSpec::Affine { a, b: frac * a };
        c.setup.doping = DopingSpec::Profile { amplitude: amp };
        c.setup.n_cells = n_cells;
        c.setup.k = k;
        c.setup.seed = seed;
        let back = parse_config_str(&emit_config(&c), &[]).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn reruns_are_byte_identical() {
    for preset in [Preset::Test1a, Preset::Test2a, Preset::Decay] {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut c1 = tiny(preset, d1.path());
        if preset == Preset::Decay {
            c1.setup.t_final = 200.0 * c1.setup.dt;
            c1.decay_outputs = 10;
        }
        let mut c2 = c1.clone();
        c2.output_dir = d2.path().to_path_buf();
        let r1 = run(&c1).unwrap();
        let r2 = run(&c2).unwrap();
        assert_eq!(r1.files.len(), r2.files.len());
        for (a, b) in r1.files.iter().zip(&r2.files) {
            assert_eq!(a.file_name(), b.file_name());
            let (ta, tb) = (fs::read_to_string(a).unwrap(), fs::read_to_string(b).unwrap());
            if a.file_name().unwrap() == "manifest.txt" {
                // only the output directory line differs
                let strip = |t: &str| t.lines().filter(|l| !l.starts_with("output.dir")).collect::<Vec<_>>().join("\n");
                assert_eq!(strip(&ta), strip(&tb));
            } else {
                assert_eq!(ta, tb, "{}", a.display());
            }
        }
    }
}

#[test]
fn manifest_reproduces_the_run_configuration() {
    let d = tempfile::tempdir().unwrap();
    let c = tiny(Preset::Test2c, d.path());
    run(&c).unwrap();
    let text = fs::read_to_string(d.path().join("manifest.txt")).unwrap();
    assert!(text.contains("# result.e_mean_rho1"));
    assert_eq!(parse_config_str(&text, &[]).unwrap(), c);
}

#[test]
fn csv_schemas() {
    let d = tempfile::tempdir().unwrap();
    run(&tiny(Preset::Test1a, d.path())).unwrap();
    let dist = fs::read_to_string(d.path().join("distance.csv")).unwrap();
    assert!(dist.starts_with("time,species,value\n"));
    assert_eq!(dist.lines().count(), 1 + 2 * 21);
    let prof = fs::read_to_string(d.path().join("profiles.csv")).unwrap();
    assert!(prof.starts_with("x,quantity,statistic,value\n"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("run");
    let ok = bkap()
        .args(["run", "--preset", "test1a", "--set", "solver.t_final=1e-5", "--set", "grid.n_cells=20"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("distance.csv").exists());

    let bad = bkap().args(["run", "--preset", "test1a", "--set", "solver.dt=-1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("dt"));

    let unknown = bkap().args(["validate", "--preset", "test1a", "--set", "grid.cells=3"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    // a time step far beyond the transport CFL bound is a solver failure
    let cfl_dir = d.path().join("cfl");
    let cfl = bkap()
        .args(["run", "--preset", "test1a", "--set", "solver.dt=0.01", "--set", "solver.t_final=0.02"])
        .arg("--out")
        .arg(&cfl_dir)
        .output()
        .unwrap();
    assert_eq!(cfl.status.code(), Some(3), "{}", String::from_utf8_lossy(&cfl.stderr));
    assert!(!cfl_dir.join("distance.csv").exists());

    let listed = bkap().arg("list-presets").output().unwrap();
    assert_eq!(listed.status.code(), Some(0));
    let text = String::from_utf8_lossy(&listed.stdout);
    for p in Preset::ALL {
        assert!(text.contains(p.name()));
    }

    let cfg_file = d.path().join("c.conf");
    fs::write(&cfg_file, "experiment = test2b\nuq.k = 2\n").unwrap();
    let v = bkap().arg("validate").arg("--config").arg(&cfg_file).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains("uq.k = 2"));
}
