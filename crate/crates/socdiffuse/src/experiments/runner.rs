//! Experiment dispatch: sampling benchmarks and single-topic verification
//! runs, with artifact emission.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::afa::{afa_stylize, AttentionBranch, QueryBlock};
use crate::error::{Error, Result};
use crate::sampler::{run_algorithm1, run_algorithm2, run_uncontrolled, SamplerConfig, SamplerRun};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::score::{ContextTag, ScoreModel};
use crate::style::{FeatureExtractor, Gamma, TerminalCost};

use super::artifacts::{emit_plot_data, load_matrix_csv, write_trajectories_csv};
use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{CheckResult, RunReport, SeedCost};
use super::suites;

/// Which controlled sampler a batch runs; the baseline is always attached.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SamplerChoice {
    Algorithm1,
    Algorithm2,
}

/// The Gaussian-prior / linear-feature benchmark every sampler check uses:
/// standard-normal prior in 2-D, feature = first coordinate, target 2.
pub(crate) fn benchmark_problem() -> Result<(ScoreModel, TerminalCost, NoiseSchedule)> {
    let score = ScoreModel::standard_normal(2);
    let cost = TerminalCost::new(
        FeatureExtractor::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
        DVector::from_element(1, 2.0),
        Gamma::Infinite,
    )?;
    let schedule = NoiseSchedule::new(50, ScheduleKind::LinearBeta)?;
    Ok((score, cost, schedule))
}

/// Run one controlled sampler plus its uncontrolled baseline for every seed.
/// Seeds dispatch to a bounded worker pool; results are sorted by seed, so
/// the output is independent of the thread count.
pub(crate) fn run_seed_batch(
    seeds: &[u64],
    threads: usize,
    choice: SamplerChoice,
    base: &SamplerConfig,
    score: &ScoreModel,
    cost: &TerminalCost,
    schedule: &NoiseSchedule,
) -> Result<Vec<(u64, SamplerRun, SamplerRun)>> {
    let ctx = ContextTag::default();
    let run_one = |seed: u64| -> Result<(u64, SamplerRun, SamplerRun)> {
        let cfg = base.clone().with_seed(seed);
        let controlled = match choice {
            SamplerChoice::Algorithm1 => run_algorithm1(&cfg, score, cost, schedule, ctx)?,
            SamplerChoice::Algorithm2 => run_algorithm2(&cfg, score, cost, schedule, ctx)?,
        };
        let baseline = run_uncontrolled(&cfg, score, cost, schedule, ctx)?;
        Ok((seed, controlled, baseline))
    };

    let mut results = if threads <= 1 {
        seeds.iter().map(|s| run_one(*s)).collect::<Result<Vec<_>>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|s| run_one(*s)).collect::<Result<Vec<_>>>())?
    };
    results.sort_by_key(|(seed, _, _)| *seed);
    Ok(results)
}

/// Execute the configured experiment and write its artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(&config.out_dir)?;
    let mut report = RunReport::new(config.kind.as_str(), config.echo());
    let seed = config.seeds[0];

    match config.kind {
        ExperimentKind::SampleAlg1 | ExperimentKind::SampleAlg2 => {
            run_sampling(config, &mut report)?
        }
        ExperimentKind::VerifyBridge => report.checks = suites::bridge_checks()?,
        ExperimentKind::VerifyLq => report.checks = suites::lq_checks(seed)?,
        ExperimentKind::VerifyProp2 => report.checks = suites::prop2_checks()?,
        ExperimentKind::VerifyHjb => report.checks = suites::hjb_checks()?,
        ExperimentKind::VerifyAfa => {
            report.checks = suites::afa_checks(seed)?;
            run_afa_fixture(config, &mut report)?;
        }
        ExperimentKind::SweepGamma => run_gamma_sweep(config, &mut report)?,
    }

    let summary_path = config.out_dir.join("summary.json");
    report.artifacts.push(summary_path.display().to_string());
    report.wall_clock = started.elapsed();
    std::fs::write(&summary_path, report.to_json())?;
    Ok(report)
}

fn run_sampling(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let score = config.score_model()?;
    let extractor = config.extractor()?;
    let cost = TerminalCost::new(extractor, config.reference()?, config.gamma)?;
    let schedule = NoiseSchedule::new(config.num_steps, config.schedule_kind)?;

    let eta = config
        .eta
        .ok_or_else(|| Error::Config("missing required field sampler.eta".into()))?;
    let opt_steps = config
        .opt_steps
        .ok_or_else(|| Error::Config("missing required field sampler.opt_steps".into()))?;
    let mut base = SamplerConfig::with_params(config.num_steps, eta, opt_steps, 0)
        .map_err(|e| Error::Config(e.to_string()))?
        .with_gradient_mode(config.gradient_mode)
        .with_proximal_init(config.proximal_init);
    let choice = match config.kind {
        ExperimentKind::SampleAlg2 => {
            let lambda = config
                .lambda
                .ok_or_else(|| Error::Config("missing required field sampler.lambda".into()))?;
            base = base
                .with_proximal_strength(lambda)
                .map_err(|e| Error::Config(e.to_string()))?;
            SamplerChoice::Algorithm2
        }
        _ => SamplerChoice::Algorithm1,
    };

    let results = run_seed_batch(
        &config.seeds,
        config.threads,
        choice,
        &base,
        &score,
        &cost,
        &schedule,
    )?;

    // Artifacts: per-seed trajectories and the mean cost-per-step curves.
    let rows: Vec<(u64, &crate::diffusion::Trajectory)> =
        results.iter().map(|(s, run, _)| (*s, &run.trajectory)).collect();
    let csv_path = config.out_dir.join("trajectories.csv");
    write_trajectories_csv(&csv_path, &rows)?;
    report.artifacts.push(csv_path.display().to_string());

    let steps = schedule.num_steps() + 1;
    let mean_curve = |pick_baseline: bool| -> Vec<f64> {
        (0..steps)
            .map(|i| {
                results
                    .iter()
                    .map(|(_, run, base)| {
                        let t = if pick_baseline { &base.trajectory } else { &run.trajectory };
                        t.costs[i]
                    })
                    .sum::<f64>()
                    / results.len() as f64
            })
            .collect()
    };
    let svg_path = config.out_dir.join("cost_vs_step.svg");
    emit_plot_data(
        &[
            ("controlled".to_string(), mean_curve(false)),
            ("uncontrolled".to_string(), mean_curve(true)),
        ],
        &svg_path,
    )?;
    report.artifacts.push(svg_path.display().to_string());
    report
        .artifacts
        .push(svg_path.with_extension("csv").display().to_string());

    for (seed, run, baseline) in &results {
        report.seed_costs.push(SeedCost {
            seed: *seed,
            terminal_cost: run.terminal_cost(),
            baseline_cost: Some(baseline.terminal_cost()),
        });
    }

    let finite = report
        .seed_costs
        .iter()
        .all(|s| s.terminal_cost.is_finite() && s.baseline_cost.unwrap_or(0.0).is_finite());
    report.checks.push(CheckResult::holds("sampling-costs-finite", finite));

    let mean_controlled: f64 =
        report.seed_costs.iter().map(|s| s.terminal_cost).sum::<f64>() / results.len() as f64;
    let mean_baseline: f64 = report
        .seed_costs
        .iter()
        .map(|s| s.baseline_cost.unwrap_or(f64::NAN))
        .sum::<f64>()
        / results.len() as f64;
    // The controller must never hurt on average; equality holds for M = 0.
    report.checks.push(CheckResult::less_than(
        "sampling-mean-cost-ratio",
        mean_controlled / mean_baseline.max(1e-300),
        1.0 + 1e-9,
    ));
    Ok(())
}

fn run_gamma_sweep(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let (gammas, gaps, slope_check) = suites::gamma_sweep_series()?;
    report.checks.push(slope_check);

    let csv_path = config.out_dir.join("gamma_sweep.csv");
    let mut csv = String::from("gamma,controller_gap\n");
    for (g, gap) in gammas.iter().zip(&gaps) {
        csv.push_str(&format!(
            "{},{}\n",
            super::artifacts::format_f64(*g),
            super::artifacts::format_f64(*gap)
        ));
    }
    std::fs::write(&csv_path, csv)?;
    report.artifacts.push(csv_path.display().to_string());

    let svg_path = config.out_dir.join("gamma_sweep.svg");
    emit_plot_data(
        &[("log10 controller gap".to_string(), gaps.iter().map(|g| g.log10()).collect())],
        &svg_path,
    )?;
    report.artifacts.push(svg_path.display().to_string());
    Ok(())
}

/// Optional CSV fixtures for the attention verification: when the six fixture
/// keys are present, the stylization aggregate is recomputed from files and
/// checked against a dense softmax reference.
fn run_afa_fixture(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let keys = [
        "afa.query_csv",
        "afa.base_keys_csv",
        "afa.base_values_csv",
        "afa.prompt_keys_csv",
        "afa.prompt_values_csv",
        "afa.style_keys_csv",
        "afa.style_values_csv",
    ];
    if keys.iter().any(|k| config.raw(k).is_none()) {
        return Ok(());
    }
    let load = |key: &str| -> Result<DMatrix<f64>> {
        load_matrix_csv(Path::new(config.raw(key).expect("checked present")))
    };
    let q = QueryBlock::new(load("afa.query_csv")?)?;
    let base = AttentionBranch::new(load("afa.base_keys_csv")?, load("afa.base_values_csv")?)?;
    let prompt = AttentionBranch::new(load("afa.prompt_keys_csv")?, load("afa.prompt_values_csv")?)?;
    let style = AttentionBranch::new(load("afa.style_keys_csv")?, load("afa.style_values_csv")?)?;
    let scale = 1.0 / (q.width() as f64).sqrt();
    let out = afa_stylize(&q, &base, &prompt, &style, scale, 1)?;

    let out_path = config.out_dir.join("afa_stylized.csv");
    let mut csv = String::new();
    for i in 0..out.nrows() {
        let row: Vec<String> = (0..out.ncols())
            .map(|j| super::artifacts::format_f64(out[(i, j)]))
            .collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(&out_path, csv)?;
    report.artifacts.push(out_path.display().to_string());
    report
        .checks
        .push(CheckResult::holds("afa-fixture-loaded", out.iter().all(|v| v.is_finite())));
    Ok(())
}
