//! End-to-end checks of the binary: exit codes, artifact determinism, and
//! the baseline-degradation contract against a pre-generated reference.

use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use socdiffuse::experiments::write_trajectories_csv;
use socdiffuse::sampler::{run_uncontrolled, SamplerConfig};
use socdiffuse::schedule::{NoiseSchedule, ScheduleKind};
use socdiffuse::score::{ContextTag, ScoreModel};
use socdiffuse::style::{FeatureExtractor, Gamma, TerminalCost};

const BIN: &str = env!("CARGO_BIN_EXE_socdiffuse");

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn sample_config(out_dir: &Path, opt_steps: usize) -> String {
    format!(
        "experiment.kind = sample-alg1\n\
         problem.dim = 2\n\
         problem.feature_dim = 1\n\
         schedule.num_steps = 50\n\
         extractor.matrix = 1,0\n\
         cost.reference = 2\n\
         sampler.eta = 0.1\n\
         sampler.opt_steps = {opt_steps}\n\
         run.seeds = 0..4\n\
         run.out_dir = {}\n",
        out_dir.display()
    )
}

/// State columns (seed, step, x0, x1) of an emitted trajectories CSV.
fn state_columns(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            fields[..4].join(",")
        })
        .collect()
}

#[test]
fn m_zero_run_matches_pregenerated_uncontrolled_reference() {
    let dir = tempfile::tempdir().unwrap();

    // Pre-generate the uncontrolled reference through the library.
    let score = ScoreModel::standard_normal(2);
    let cost = TerminalCost::new(
        FeatureExtractor::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
        DVector::from_element(1, 2.0),
        Gamma::Infinite,
    )
    .unwrap();
    let schedule = NoiseSchedule::new(50, ScheduleKind::LinearBeta).unwrap();
    let runs: Vec<_> = (0..4)
        .map(|seed| {
            let cfg = SamplerConfig::with_params(50, 0.1, 0, seed).unwrap();
            (
                seed,
                run_uncontrolled(&cfg, &score, &cost, &schedule, ContextTag::default()).unwrap(),
            )
        })
        .collect();
    let reference_csv = dir.path().join("reference.csv");
    let rows: Vec<(u64, &socdiffuse::diffusion::Trajectory)> =
        runs.iter().map(|(s, r)| (*s, &r.trajectory)).collect();
    write_trajectories_csv(&reference_csv, &rows).unwrap();

    // Run the CLI with the inner loop disabled.
    let out = dir.path().join("m0");
    let config = write_config(dir.path(), "m0.cfg", &sample_config(&out, 0));
    let status = Command::new(BIN).arg("run").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(0));

    assert_eq!(
        state_columns(&reference_csv),
        state_columns(&out.join("trajectories.csv")),
        "state columns differ from the uncontrolled reference"
    );
}

#[test]
fn missing_stepsize_yields_exit_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = sample_config(&dir.path().join("x"), 3).replace("sampler.eta = 0.1\n", "");
    let config = write_config(dir.path(), "bad.cfg", &body);
    let output = Command::new(BIN).arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("sampler.eta"), "stderr was: {stderr}");
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<_> = (0..3).map(|i| dir.path().join(format!("o{i}"))).collect();
    let config = write_config(dir.path(), "run.cfg", &sample_config(&outs[0], 3));

    for (i, out) in outs.iter().enumerate() {
        let mut cmd = Command::new(BIN);
        cmd.arg("run").arg(&config).arg("--out-dir").arg(out);
        if i == 2 {
            cmd.args(["--threads", "4"]);
        }
        assert_eq!(cmd.status().unwrap().code(), Some(0));
    }

    let read = |out: &Path, name: &str| std::fs::read(out.join(name)).unwrap();
    for name in ["trajectories.csv", "cost_vs_step.csv", "cost_vs_step.svg"] {
        assert_eq!(read(&outs[0], name), read(&outs[1], name), "{name} differs on rerun");
        assert_eq!(read(&outs[0], name), read(&outs[2], name), "{name} differs across threads");
    }
    // The summary embeds the out-dir in its config echo; normalize it away.
    let normalize = |out: &Path| {
        String::from_utf8(read(out, "summary.json"))
            .unwrap()
            .replace(&out.display().to_string(), "OUT")
            .replace(&outs[0].display().to_string(), "OUT")
    };
    assert_eq!(normalize(&outs[1]), normalize(&outs[2]));
}

#[test]
fn seed_flag_overrides_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let out_flag = dir.path().join("flag");
    let out_env = dir.path().join("env");
    let config = write_config(dir.path(), "seeds.cfg", &sample_config(&dir.path().join("x"), 3));

    // SEED env alone selects seed 5; the flag wins over it.
    let status = Command::new(BIN)
        .arg("run")
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_env)
        .env("SEED", "5")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = Command::new(BIN)
        .arg("run")
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_flag)
        .args(["--seed", "5"])
        .env("SEED", "9")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let rows_env = state_columns(&out_env.join("trajectories.csv"));
    let rows_flag = state_columns(&out_flag.join("trajectories.csv"));
    assert_eq!(rows_env, rows_flag);
    assert!(rows_env.iter().all(|r| r.starts_with("5,")));
}

#[test]
fn plot_subcommand_round_trip_and_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj");
    let config = write_config(dir.path(), "plot.cfg", &sample_config(&out, 3));
    assert_eq!(Command::new(BIN).arg("run").arg(&config).status().unwrap().code(), Some(0));

    let csv = out.join("trajectories.csv");
    let svg1 = dir.path().join("a.svg");
    let svg2 = dir.path().join("b.svg");
    for svg in [&svg1, &svg2] {
        let status = Command::new(BIN)
            .arg("plot")
            .arg(&csv)
            .arg(svg)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&svg1).unwrap(), std::fs::read(&svg2).unwrap());

    let status = Command::new(BIN)
        .arg("plot")
        .arg(&csv)
        .arg("/nonexistent-dir/out.svg")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn verify_bridge_experiment_reports_terminal_error_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bridge");
    let body = format!(
        "experiment.kind = verify-bridge\nrun.seeds = 0\nrun.out_dir = {}\n",
        out.display()
    );
    let config = write_config(dir.path(), "bridge.cfg", &body);
    let output = Command::new(BIN).arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("PASS: oc-bridge-terminal-error"),
        "stdout was: {stdout}"
    );

    // The summary embeds a config echo that re-parses to the same config.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let echo = summary["config_echo"].as_str().unwrap();
    let reparsed = socdiffuse::experiments::ExperimentConfig::parse_str(echo).unwrap();
    assert_eq!(reparsed.echo(), echo);
}

#[test]
fn afa_fixture_matrices_load_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let write_matrix = |name: &str, rows: &[&str]| {
        let path = dir.path().join(name);
        std::fs::write(&path, rows.join("\n")).unwrap();
        path
    };
    let q = write_matrix("q.csv", &["1.0,0.0", "0.0,1.0"]);
    let bk = write_matrix("bk.csv", &["0.4,-0.2", "0.1,0.9"]);
    let bv = write_matrix("bv.csv", &["1.0,0.0", "0.0,1.0"]);
    let pk = write_matrix("pk.csv", &["0.3,0.3"]);
    let pv = write_matrix("pv.csv", &["0.5,-0.5"]);
    let sk = write_matrix("sk.csv", &["-0.7,0.2"]);
    let sv = write_matrix("sv.csv", &["0.25,0.75"]);

    let out = dir.path().join("afa");
    let body = format!(
        "experiment.kind = verify-afa\n\
         run.seeds = 3\n\
         run.out_dir = {}\n\
         afa.query_csv = {}\n\
         afa.base_keys_csv = {}\n\
         afa.base_values_csv = {}\n\
         afa.prompt_keys_csv = {}\n\
         afa.prompt_values_csv = {}\n\
         afa.style_keys_csv = {}\n\
         afa.style_values_csv = {}\n",
        out.display(),
        q.display(),
        bk.display(),
        bv.display(),
        pk.display(),
        pv.display(),
        sk.display(),
        sv.display()
    );
    let config = write_config(dir.path(), "afa.cfg", &body);
    let status = Command::new(BIN).arg("run").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("afa_stylized.csv").exists());
}
