//! Built-in verification suites binding every closed form to its oracle.
//!
//! Each suite returns named checks with measured values; the CLI `verify`
//! subcommand writes them as deterministic JSON/CSV artifacts. Randomized
//! checks derive all draws from the suite seed.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::afa::{afa_compose, afa_stylize, attention, concat_tokens, AttentionBranch, QueryBlock};
use crate::control::{
    bridge_controller, bridge_value_function, control_time_from_step, hjb_residual,
    modulated_solution, shooting_bvp_solve, simulate_controlled, solve_terminal_state_prop2,
    style_controller, DriftMode, LqInstance, ValueFunction,
};
use crate::diffusion::{
    ddim_step, flow_posterior_mean, reverse_drift, tweedie_posterior_mean, ReverseDriftMode,
    SdeCoefficients, State,
};
use crate::error::{Error, Result};
use crate::sampler::{
    optimize_control_step, proximal_x0_solve, run_algorithm1, run_algorithm2, run_uncontrolled,
    GradientMode, SamplerConfig,
};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::score::{ContextTag, MixtureComponent, NoiseLevel, ScoreModel};
use crate::style::{FeatureExtractor, Gamma, TerminalCost};

use super::report::{CheckResult, RunReport};
use super::runner::{benchmark_problem, run_seed_batch, SamplerChoice};

pub const SUITE_NAMES: [&str; 6] = [
    "diffusion-core",
    "style-features",
    "optimal-control",
    "soc-sampler",
    "afa",
    "all",
];

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Run the named suite and write its report artifacts under `out_dir`.
pub fn verify_suite(name: &str, seed: u64, out_dir: &Path) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let checks = suite_checks(name, seed)?;

    let mut report = RunReport::new(
        format!("verify-{name}"),
        format!("suite = {name}\nseed = {seed}\n"),
    );
    report.checks = checks;
    report.wall_clock = started.elapsed();

    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("verify_{name}_report.json"));
    std::fs::write(&json_path, report.to_json())?;
    let csv_path = out_dir.join(format!("verify_{name}_checks.csv"));
    let mut csv = String::from("name,measured,comparison,threshold,passed\n");
    for c in &report.checks {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name,
            super::artifacts::format_f64(c.measured),
            c.comparison.replace(',', ";"),
            super::artifacts::format_f64(c.threshold),
            c.passed
        ));
    }
    std::fs::write(&csv_path, csv)?;
    report.artifacts = vec![
        json_path.display().to_string(),
        csv_path.display().to_string(),
    ];
    Ok(report)
}

fn suite_checks(name: &str, seed: u64) -> Result<Vec<CheckResult>> {
    Ok(match name {
        "diffusion-core" => diffusion_checks(seed)?,
        "style-features" => style_checks(seed)?,
        "optimal-control" => optimal_control_checks(seed)?,
        "soc-sampler" => sampler_checks(seed)?,
        "afa" => afa_checks(seed)?,
        "all" => {
            let mut all = Vec::new();
            for suite in &SUITE_NAMES[..5] {
                all.extend(suite_checks(suite, seed)?);
            }
            all
        }
        other => {
            return Err(Error::Config(format!(
                "unknown suite \"{other}\"; known suites: {}",
                SUITE_NAMES.join(", ")
            )))
        }
    })
}

fn ctx() -> ContextTag {
    ContextTag::default()
}

fn spec_mixture_1d() -> ScoreModel {
    ScoreModel::mixture(vec![
        MixtureComponent {
            weight: 0.5,
            mean: DVector::from_element(1, -2.0),
            var: 0.25,
        },
        MixtureComponent {
            weight: 0.5,
            mean: DVector::from_element(1, 2.0),
            var: 0.25,
        },
    ])
    .expect("valid mixture")
}

/// Simpson-rule posterior mean `E[X0 | X = x]` for a one-dimensional mixture
/// prior under the corruption `x = a x0 + b eps`. Independent of the Tweedie
/// code path.
pub(crate) fn quadrature_posterior_mean_1d(
    components: &[(f64, f64, f64)], // (weight, mean, var)
    level: NoiseLevel,
    x: f64,
) -> f64 {
    let (a, b) = (level.data_scale, level.noise_scale);
    let lo = -12.0;
    let hi = 12.0;
    let n = 40_000; // even
    let h = (hi - lo) / n as f64;
    let density = |x0: f64| -> f64 {
        let prior: f64 = components
            .iter()
            .map(|(w, m, v)| {
                w * (-(x0 - m) * (x0 - m) / (2.0 * v)).exp()
                    / (2.0 * std::f64::consts::PI * v).sqrt()
            })
            .sum();
        let lik = (-(x - a * x0) * (x - a * x0) / (2.0 * b * b)).exp();
        prior * lik
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let x0 = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = density(x0);
        num += w * f * x0;
        den += w * f;
    }
    num / den
}

pub(crate) fn diffusion_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // Cumulative-product oracle for the linear-beta schedule.
    let sched1000 = NoiseSchedule::new(1000, ScheduleKind::LinearBeta)?;
    let mut prod = 1.0f64;
    for i in 0..1000 {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
    }
    checks.push(CheckResult::less_than(
        "schedule-cumprod-oracle",
        (sched1000.alpha_bar(1000) - prod).abs(),
        1e-12,
    ));

    // Score consistency: finite differences of the log density.
    let models = [
        ScoreModel::IsotropicGaussian {
            mean: DVector::from_vec(vec![0.25, -0.5]),
            var: 0.7,
        },
        ScoreModel::mixture(vec![
            MixtureComponent {
                weight: 0.4,
                mean: DVector::from_vec(vec![-1.0, 0.5]),
                var: 0.4,
            },
            MixtureComponent {
                weight: 0.6,
                mean: DVector::from_vec(vec![1.0, -0.5]),
                var: 0.6,
            },
        ])?,
    ];
    let mut worst_rel: f64 = 0.0;
    for model in &models {
        for _ in 0..500 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let level = NoiseLevel::vp(rng.gen_range(0.05..1.0));
            let s = model.score(&x, level, ctx())?;
            for j in 0..2 {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (model.log_density(&xp, level, ctx())?
                    - model.log_density(&xm, level, ctx())?)
                    / (2.0 * h);
                worst_rel = worst_rel.max((fd - s[j]).abs() / s[j].abs().max(1.0));
            }
        }
    }
    checks.push(CheckResult::less_than("score-consistency-fd", worst_rel, 1e-5));

    // Tweedie exactness on Gaussians at every alpha_bar of a schedule.
    let sched = NoiseSchedule::new(50, ScheduleKind::LinearBeta)?;
    let mu = DVector::from_vec(vec![0.7, -1.1]);
    let var = 0.6;
    let gaussian = ScoreModel::IsotropicGaussian { mean: mu.clone(), var };
    let x = DVector::from_vec(vec![1.3, 0.2]);
    let mut worst = 0.0f64;
    for t in 0..=50 {
        let ab = sched.alpha_bar(t);
        let m = tweedie_posterior_mean(&x, t, &gaussian, &sched, ctx())?;
        let gain = ab.sqrt() * var / (ab * var + 1.0 - ab);
        let expected = &mu + (&x - &mu * ab.sqrt()) * gain;
        worst = worst.max((m - expected).norm());
    }
    checks.push(CheckResult::less_than("tweedie-gaussian-exact", worst, 1e-10));

    // Mixture posterior mean against Simpson quadrature.
    let mixture = spec_mixture_1d();
    let sched_half = NoiseSchedule::from_alpha_bar(vec![1.0, 0.5])?;
    let tw =
        tweedie_posterior_mean(&DVector::from_element(1, 0.3), 1, &mixture, &sched_half, ctx())?;
    let oracle = quadrature_posterior_mean_1d(
        &[(0.5, -2.0, 0.25), (0.5, 2.0, 0.25)],
        NoiseLevel::vp(0.5),
        0.3,
    );
    checks.push(CheckResult::less_than(
        "tweedie-mixture-quadrature",
        (tw[0] - oracle).abs(),
        1e-6,
    ));

    // Flow-clock drift identity at 100 random points.
    let sde = SdeCoefficients::ou();
    let mixture2 = ScoreModel::mixture(vec![
        MixtureComponent {
            weight: 0.5,
            mean: DVector::from_vec(vec![-2.0, 0.0]),
            var: 0.25,
        },
        MixtureComponent {
            weight: 0.5,
            mean: DVector::from_vec(vec![2.0, 0.0]),
            var: 0.25,
        },
    ])?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
        let t = rng.gen_range(0.05..0.95);
        let drift = reverse_drift(&x, t, &mixture2, ReverseDriftMode::FlowRemark, &sde, ctx())?;
        let pm = flow_posterior_mean(&x, t, &mixture2, ctx())?;
        worst = worst.max((drift - (pm - &x) / (1.0 - t)).norm());
    }
    checks.push(CheckResult::less_than("flow-drift-identity", worst, 1e-12));

    // DDIM determinism, bit for bit.
    let xa = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
    let xb = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
    let s1 = ddim_step(&xa, &xb, 30, 12, &sched)?;
    let s2 = ddim_step(&xa, &xb, 30, 12, &sched)?;
    checks.push(CheckResult::holds(
        "ddim-determinism",
        s1.values
            .iter()
            .zip(s2.values.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
    ));

    // Marginal preservation of the uncontrolled reverse SDE.
    let unit = ScoreModel::standard_normal(1);
    let n = 100_000;
    let steps = 100;
    let dt = 1.0 / steps as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let mut x = DVector::from_element(1, rng.sample::<f64, _>(rand_distr::StandardNormal));
        for k in 0..steps {
            let t = 1.0 - k as f64 * dt;
            let drift = reverse_drift(&x, t, &unit, ReverseDriftMode::Sde, &sde, ctx())?;
            let xi: f64 = rng.sample(rand_distr::StandardNormal);
            x = &x - drift * dt
                + DVector::from_element(1, std::f64::consts::SQRT_2 * dt.sqrt() * xi);
        }
        sum += x[0];
        sum_sq += x[0] * x[0];
    }
    let mean = sum / n as f64;
    let variance = sum_sq / n as f64 - mean * mean;
    checks.push(CheckResult::less_than(
        "reverse-sde-marginal-mean",
        mean.abs(),
        3.0 / (n as f64).sqrt(),
    ));
    checks.push(CheckResult::less_than(
        "reverse-sde-marginal-variance",
        (variance - 1.0).abs(),
        3.0 * (2.0 / n as f64).sqrt() + dt,
    ));

    Ok(checks)
}

pub(crate) fn style_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let a = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
    let linear = TerminalCost::new(
        FeatureExtractor::Linear(a.clone()),
        DVector::from_vec(vec![0.3, -0.6]),
        Gamma::Infinite,
    )?;
    let quadratic = TerminalCost::new(
        FeatureExtractor::Quadratic { dim: 3 },
        DVector::from_vec(vec![0.5, 0.25, 1.0]),
        Gamma::Infinite,
    )?;

    for (name, cost, tol) in [
        ("style-gradient-linear", &linear, 1e-6),
        ("style-gradient-quadratic", &quadratic, 1e-4),
    ] {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let g = cost.grad(&x)?;
            for j in 0..3 {
                let h = 1e-5 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (cost.cost(&xp)? - cost.cost(&xm)?) / (2.0 * h);
                worst = worst.max((g[j] - fd).abs() / fd.abs().max(1.0));
            }
        }
        checks.push(CheckResult::less_than(name, worst, tol));
    }

    // Convexity along random lines (linear extractor).
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let y = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let mix = &x * lambda + &y * (1.0 - lambda);
        let lhs = linear.cost(&mix)?;
        let rhs = lambda * linear.cost(&x)? + (1.0 - lambda) * linear.cost(&y)?;
        worst = worst.max(lhs - rhs);
    }
    checks.push(CheckResult::less_than("style-convexity-lines", worst, 1e-10));

    // Scale covariance: cost(cA, c ref) = c^2 cost(A, ref).
    let c = 2.75;
    let scaled = TerminalCost::new(
        FeatureExtractor::Linear(&a * c),
        linear.reference() * c,
        Gamma::Infinite,
    )?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let lhs = scaled.cost(&x)?;
        let rhs = c * c * linear.cost(&x)?;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    checks.push(CheckResult::less_than("style-scale-covariance", worst, 1e-12));

    Ok(checks)
}

/// Bridge controller: terminal error at dt = 1e-3 and the O(dt) scaling of
/// the terminal error.
pub(crate) fn bridge_checks() -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let x1 = DVector::zeros(2);
    let x0 = DVector::from_vec(vec![1.0, -1.0]);
    let dts = [1e-2, 1e-3, 1e-4];
    let mut errors = Vec::new();
    for dt in dts {
        let traj = simulate_controlled(
            |x, t| bridge_controller(x, t, &x1, Gamma::Infinite),
            &x0,
            0.0,
            dt,
            DriftMode::PureControl,
            None,
            None,
        )?;
        errors.push((traj.terminal_state().values.clone() - &x1).norm());
    }
    checks.push(CheckResult::less_than("oc-bridge-terminal-error", errors[1], 1e-2));
    checks.push(CheckResult::within(
        "oc-bridge-dt-slope",
        log_log_slope(&dts, &errors),
        1.0,
        0.15,
    ));
    Ok(checks)
}

/// Controller gaps `||u_gamma - u_inf||` over `gamma = 10^1 .. 10^6`, with
/// the fitted log-log slope check (expected -1).
pub(crate) fn gamma_sweep_series() -> Result<(Vec<f64>, Vec<f64>, CheckResult)> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let y1 = DVector::from_vec(vec![1.0, -1.0]);
    let x = DVector::from_vec(vec![0.3, 0.7]);
    let t = 0.25;
    let u_inf = style_controller(&x, t, &a, &y1, Gamma::Infinite)?;
    let gammas: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let gaps: Vec<f64> = gammas
        .iter()
        .map(|g| style_controller(&x, t, &a, &y1, Gamma::Finite(*g)).map(|u| (u - &u_inf).norm()))
        .collect::<Result<_>>()?;
    let check = CheckResult::within(
        "oc-gamma-sweep-slope",
        log_log_slope(&gammas, &gaps),
        -1.0,
        0.1,
    );
    Ok((gammas, gaps, check))
}

/// Style-controller checks: reduction to the bridge, gamma convergence,
/// shooting agreement, costate constancy, wide-extractor terminal
/// satisfaction and its O(dt) scaling.
pub(crate) fn lq_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let identity = DMatrix::identity(2, 2);
    let y1 = DVector::from_vec(vec![0.4, -0.2]);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let t = rng.gen_range(0.0..0.95);
        for gamma in [Gamma::Infinite, Gamma::Finite(7.5)] {
            let s = style_controller(&x, t, &identity, &y1, gamma)?;
            let b = bridge_controller(&x, t, &y1, gamma)?;
            worst = worst.max((s - b).norm());
        }
    }
    checks.push(CheckResult::less_than("oc-reduction-identity", worst, 1e-12));

    let (_, _, slope_check) = gamma_sweep_series()?;
    checks.push(slope_check);

    // Shooting oracle against the pure-control closed form (invertible A).
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let ys = DVector::from_vec(vec![1.0, -1.0]);
    let inst = LqInstance::new(
        a.clone(),
        ys.clone(),
        DVector::from_vec(vec![1.0, -1.0]),
        0.0,
        Gamma::Finite(5.0),
        DriftMode::PureControl,
    )?;
    let sol = shooting_bvp_solve(&inst, 100)?;
    let mut worst = 0.0f64;
    for (i, t) in sol.times().iter().enumerate() {
        if *t >= 1.0 {
            continue;
        }
        let closed = style_controller(&sol.states()[i], *t, &a, &ys, inst.gamma)?;
        let shot = -&sol.costates()[i];
        worst = worst.max((closed - &shot).norm() / shot.norm().max(1e-9));
    }
    checks.push(CheckResult::less_than("oc-style-shooting-agreement", worst, 1e-6));

    // Costate constancy along the pure-control shooting solution.
    let p0 = sol.costates()[0].clone();
    let mut worst = 0.0f64;
    for p in sol.costates() {
        worst = worst.max((p - &p0).norm());
    }
    checks.push(CheckResult::less_than("oc-costate-constancy", worst, 1e-8));

    // Hard-constraint terminal satisfaction with a wide extractor (k=1, d=4).
    let wide = DMatrix::from_row_slice(1, 4, &[1.0, -0.5, 0.25, 2.0]);
    let y_wide = DVector::from_element(1, 1.5);
    let x0_wide = DVector::from_vec(vec![0.1, -0.3, 0.8, -0.2]);
    let dts = [1e-2, 1e-3, 1e-4];
    let mut feature_errors = Vec::new();
    for dt in dts {
        let traj = simulate_controlled(
            |x, t| style_controller(x, t, &wide, &y_wide, Gamma::Infinite),
            &x0_wide,
            0.0,
            dt,
            DriftMode::PureControl,
            None,
            None,
        )?;
        feature_errors.push((&wide * &traj.terminal_state().values - &y_wide).norm());
    }
    checks.push(CheckResult::less_than(
        "oc-wide-pseudoinverse-terminal",
        feature_errors[1],
        1e-2,
    ));
    checks.push(CheckResult::within(
        "oc-terminal-satisfaction-slope",
        log_log_slope(&dts, &feature_errors),
        1.0,
        0.15,
    ));

    checks.push(CheckResult::holds(
        "oc-clock-conversion",
        control_time_from_step(0, 50) == 1.0 && control_time_from_step(50, 50) == 0.0,
    ));

    Ok(checks)
}

/// Drift-modulated closed form against the shooting oracle, scalar and 2-D,
/// plus the pinned scalar terminal value.
pub(crate) fn prop2_checks() -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let scalar = LqInstance::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        DVector::from_element(1, 1.0),
        0.0,
        Gamma::Finite(1.0),
        DriftMode::StatePlusControl,
    )?;
    let planar = LqInstance::new(
        DMatrix::from_row_slice(1, 2, &[1.0, -0.5]),
        DVector::from_element(1, 0.4),
        DVector::from_vec(vec![0.8, 0.3]),
        0.0,
        Gamma::Finite(2.0),
        DriftMode::StatePlusControl,
    )?;
    for (name, inst) in [
        ("oc-prop2-shooting-scalar", &scalar),
        ("oc-prop2-shooting-2d", &planar),
    ] {
        let sol = shooting_bvp_solve(inst, 100)?;
        let mut worst = 0.0f64;
        for (i, t) in sol.times().iter().enumerate() {
            let (x_t, p_t, _) = modulated_solution(inst, *t)?;
            worst = worst.max((&sol.states()[i] - &x_t).norm() / x_t.norm().max(1e-9));
            worst = worst.max((&sol.costates()[i] - &p_t).norm() / p_t.norm().max(1e-9));
        }
        checks.push(CheckResult::less_than(name, worst, 1e-6));
    }
    let x1_scalar = solve_terminal_state_prop2(&scalar)?;
    checks.push(CheckResult::less_than(
        "oc-prop2-terminal-value",
        (x1_scalar[0] - 1.0 / 1.0f64.cosh()).abs(),
        1e-9,
    ));
    Ok(checks)
}

/// HJB residual of the bridge value function on a 20x20x10 grid, plus the
/// additively perturbed case whose residual is exactly one.
pub(crate) fn hjb_checks() -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let v = bridge_value_function(DVector::from_vec(vec![0.5, -0.5]));
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            for k in 0..10 {
                let x = DVector::from_vec(vec![
                    -2.0 + 4.0 * i as f64 / 19.0,
                    -2.0 + 4.0 * j as f64 / 19.0,
                ]);
                let t = 0.9 * k as f64 / 9.0;
                worst = worst.max(hjb_residual(&v, &x, t, DriftMode::PureControl)?.abs());
            }
        }
    }
    checks.push(CheckResult::less_than("oc-hjb-bridge-grid", worst, 1e-8));

    let x1p = DVector::from_vec(vec![0.5, -0.5]);
    let (x1a, x1b) = (x1p.clone(), x1p.clone());
    let perturbed = ValueFunction::new(move |x: &DVector<f64>, t: f64| {
        (&x1p - x).norm_squared() / (2.0 * (1.0 - t)) + t
    })
    .with_gradient(move |x, t| (x - &x1a) / (1.0 - t))
    .with_time_derivative(move |x, t| {
        (&x1b - x).norm_squared() / (2.0 * (1.0 - t) * (1.0 - t)) + 1.0
    });
    let r = hjb_residual(
        &perturbed,
        &DVector::from_vec(vec![1.0, 0.3]),
        0.4,
        DriftMode::PureControl,
    )?;
    checks.push(CheckResult::within("oc-hjb-perturbed", r, 1.0, 1e-8));
    Ok(checks)
}

pub(crate) fn optimal_control_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut checks = bridge_checks()?;
    checks.extend(lq_checks(seed)?);
    checks.extend(prop2_checks()?);
    checks.extend(hjb_checks()?);
    Ok(checks)
}

pub(crate) fn sampler_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let (score, cost, schedule) = benchmark_problem()?;
    let seeds: Vec<u64> = (0..200).collect();
    let ctx0 = ctx();

    let base1 = SamplerConfig::new(50, 0)?;
    let base2 = SamplerConfig::new(50, 0)?.with_proximal_strength(1.0)?;
    let alg1 = run_seed_batch(&seeds, 1, SamplerChoice::Algorithm1, &base1, &score, &cost, &schedule)?;
    let alg2 = run_seed_batch(&seeds, 1, SamplerChoice::Algorithm2, &base2, &score, &cost, &schedule)?;

    let n = seeds.len() as f64;
    let mean1 = alg1.iter().map(|r| r.1.terminal_cost()).sum::<f64>() / n;
    let mean2 = alg2.iter().map(|r| r.1.terminal_cost()).sum::<f64>() / n;
    let mean_base = alg1.iter().map(|r| r.2.terminal_cost()).sum::<f64>() / n;

    checks.push(CheckResult::less_than(
        "sampler-alg1-cost-improvement",
        mean1 / mean_base,
        0.2,
    ));
    checks.push(CheckResult::less_than(
        "sampler-alg2-cost-improvement",
        mean2 / mean_base,
        0.2,
    ));
    checks.push(CheckResult::less_than(
        "sampler-paired-ratio",
        mean2 / mean1.max(1e-300),
        2.0,
    ));

    // Feature mean of the controlled terminal states.
    let a_row = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let feature_mean = alg1
        .iter()
        .map(|r| (&a_row * &r.1.trajectory.terminal_state().values)[0])
        .sum::<f64>()
        / alg1.len() as f64;
    checks.push(CheckResult::within(
        "sampler-alg1-feature-mean",
        feature_mean,
        2.0,
        0.1,
    ));

    // Controller reset and the structural gradient-free guarantee.
    checks.push(CheckResult::holds(
        "sampler-controller-reset",
        alg1.iter()
            .all(|r| r.1.step_logs.iter().all(|l| l.control_init_norm == 0.0)),
    ));
    checks.push(CheckResult::holds(
        "sampler-alg2-grad-free",
        alg2.iter().all(|r| r.1.score_gradient_evals == 0),
    ));

    // Determinism: rerun of seed 0 is bit-identical.
    let cfg = SamplerConfig::new(50, 0)?;
    let r1 = run_algorithm1(&cfg, &score, &cost, &schedule, ctx0)?;
    let r2 = run_algorithm1(&cfg, &score, &cost, &schedule, ctx0)?;
    let identical = r1
        .trajectory
        .states
        .iter()
        .zip(&r2.trajectory.states)
        .all(|(a, b)| {
            a.values
                .iter()
                .zip(b.values.iter())
                .all(|(u, v)| u.to_bits() == v.to_bits())
        });
    checks.push(CheckResult::holds("sampler-determinism", identical));

    // Degradations to the uncontrolled baseline.
    let cfg_m0 = SamplerConfig::with_params(50, 0.1, 0, 3)?;
    let a_run = run_algorithm1(&cfg_m0, &score, &cost, &schedule, ctx0)?;
    let b_run = run_uncontrolled(&cfg_m0, &score, &cost, &schedule, ctx0)?;
    let bitwise = a_run
        .trajectory
        .states
        .iter()
        .zip(&b_run.trajectory.states)
        .all(|(x, y)| {
            x.values
                .iter()
                .zip(y.values.iter())
                .all(|(u, v)| u.to_bits() == v.to_bits())
        });
    checks.push(CheckResult::holds("sampler-m0-degradation", bitwise));

    let cfg_lambda = SamplerConfig::with_params(50, 0.1, 1, 3)?.with_proximal_strength(1e8)?;
    let prox = run_algorithm2(&cfg_lambda, &score, &cost, &schedule, ctx0)?;
    let plain = run_uncontrolled(&cfg_lambda, &score, &cost, &schedule, ctx0)?;
    let max_dev = prox
        .trajectory
        .states
        .iter()
        .zip(&plain.trajectory.states)
        .map(|(x, y)| (&x.values - &y.values).norm())
        .fold(0.0f64, f64::max);
    checks.push(CheckResult::less_than("sampler-lambda-degradation", max_dev, 1e-4));

    // Proximal solve against the ridge oracle.
    let cfg_ridge = SamplerConfig::with_params(50, 0.05, 500, 3)?.with_proximal_strength(1.0)?;
    let x0_bar = DVector::from_vec(vec![0.3, 1.1]);
    let solved = proximal_x0_solve(&x0_bar, &cost, &cfg_ridge)?;
    let lhs = a_row.transpose() * &a_row + DMatrix::identity(2, 2);
    let rhs = a_row.transpose() * DVector::from_element(1, 2.0) + &x0_bar;
    let ridge = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearSolve("ridge oracle".into()))?;
    checks.push(CheckResult::less_than(
        "sampler-proximal-ridge-oracle",
        (solved - ridge).norm(),
        1e-6,
    ));

    // Gradient-mode equivalence on the benchmark problem.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = State::new(
            DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            rng.gen_range(1..=50),
        )?;
        let cfg_a = SamplerConfig::with_params(50, 0.1, 1, 0)?;
        let cfg_f = cfg_a
            .clone()
            .with_gradient_mode(GradientMode::FiniteDifference);
        let ua = optimize_control_step(&x, &score, &cost, &schedule, &cfg_a, ctx0)?;
        let uf = optimize_control_step(&x, &score, &cost, &schedule, &cfg_f, ctx0)?;
        worst = worst.max((&ua.control - &uf.control).norm() / ua.control.norm().max(1.0));
    }
    checks.push(CheckResult::less_than(
        "sampler-gradient-mode-equivalence",
        worst,
        1e-4,
    ));

    // Reference at the prior-mean features: controlled beats uncontrolled on
    // at least 95% of seeds.
    let neutral_cost = TerminalCost::new(
        FeatureExtractor::Linear(a_row.clone()),
        DVector::zeros(1),
        Gamma::Infinite,
    )?;
    let neutral = run_seed_batch(
        &seeds,
        1,
        SamplerChoice::Algorithm1,
        &base1,
        &score,
        &neutral_cost,
        &schedule,
    )?;
    let improved = neutral
        .iter()
        .filter(|r| r.1.terminal_cost() <= r.2.terminal_cost())
        .count();
    checks.push(CheckResult::holds(
        "sampler-prior-reference-improvement",
        improved as f64 >= 0.95 * seeds.len() as f64,
    ));

    Ok(checks)
}

pub(crate) fn afa_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let random_branch = |rng: &mut ChaCha8Rng, tokens: usize, n_q: usize, n_h: usize| {
        AttentionBranch::new(
            DMatrix::from_fn(tokens, n_q, |_, _| rng.gen_range(-1.5..1.5)),
            DMatrix::from_fn(tokens, n_h, |_, _| rng.gen_range(-1.5..1.5)),
        )
    };

    // Brute-force softmax oracle on 100 random instances, plus row sums,
    // hull membership and permutation invariance measured alongside.
    let mut worst_oracle = 0.0f64;
    let mut worst_rowsum = 0.0f64;
    let mut worst_hull = 0.0f64;
    let mut worst_perm = 0.0f64;
    for _ in 0..100 {
        let tokens = rng.gen_range(2..6);
        let n_q = rng.gen_range(1..4);
        let n_h = rng.gen_range(1..4);
        let q = QueryBlock::new(DMatrix::from_fn(3, n_q, |_, _| rng.gen_range(-2.0..2.0)))?;
        let branch = random_branch(&mut rng, tokens, n_q, n_h)?;
        let scale = 1.0 / (n_q as f64).sqrt();
        let ours = attention(&q, &branch.keys, &branch.values, scale)?;

        // Dense reference: naive exponentials, no max subtraction.
        let mut reference = DMatrix::zeros(3, n_h);
        let mut rowsums = vec![0.0; 3];
        for i in 0..3 {
            let mut weights = vec![0.0; tokens];
            for (j, w) in weights.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in 0..n_q {
                    dot += q.0[(i, c)] * branch.keys[(j, c)];
                }
                *w = (dot * scale).exp();
            }
            let total: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                rowsums[i] += w / total;
                for c in 0..n_h {
                    reference[(i, c)] += w / total * branch.values[(j, c)];
                }
            }
        }
        worst_oracle = worst_oracle.max((&ours - &reference).abs().max());
        for s in rowsums {
            worst_rowsum = worst_rowsum.max((s - 1.0).abs());
        }
        for c in 0..n_h {
            let lo = branch.values.column(c).min();
            let hi = branch.values.column(c).max();
            for i in 0..3 {
                worst_hull = worst_hull.max((lo - ours[(i, c)]).max(ours[(i, c)] - hi));
            }
        }

        // Joint permutation of key/value rows.
        let mut perm: Vec<usize> = (0..tokens).collect();
        perm.reverse();
        let mut keys = DMatrix::zeros(tokens, n_q);
        let mut values = DMatrix::zeros(tokens, n_h);
        for (dst, src) in perm.iter().enumerate() {
            keys.set_row(dst, &branch.keys.row(*src));
            values.set_row(dst, &branch.values.row(*src));
        }
        let permuted = attention(&q, &keys, &values, scale)?;
        worst_perm = worst_perm.max((&ours - permuted).abs().max());
    }
    checks.push(CheckResult::less_than("afa-oracle-agreement", worst_oracle, 1e-12));
    checks.push(CheckResult::less_than("afa-row-stochastic", worst_rowsum, 1e-12));
    checks.push(CheckResult::less_than("afa-convex-hull", worst_hull, 1e-12));
    checks.push(CheckResult::less_than("afa-token-permutation", worst_perm, 1e-12));

    // Branch-count bookkeeping: the aggregates equal the plain means of
    // exactly 3 and exactly 4 attention outputs.
    let base = random_branch(&mut rng, 3, 2, 2)?;
    let prompt = random_branch(&mut rng, 2, 2, 2)?;
    let style = random_branch(&mut rng, 2, 2, 2)?;
    let content = random_branch(&mut rng, 2, 2, 2)?;
    let q = QueryBlock::new(DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)))?;
    let scale = 1.0 / 2f64.sqrt();
    let att = |branches: &[&AttentionBranch]| -> Result<DMatrix<f64>> {
        let joined = concat_tokens(branches)?;
        attention(&q, &joined.keys, &joined.values, scale)
    };
    let stylize = afa_stylize(&q, &base, &prompt, &style, scale, 1)?;
    let manual3 =
        (att(&[&base, &prompt])? + att(&[&base, &style])? + att(&[&base, &prompt, &style])?) / 3.0;
    checks.push(CheckResult::less_than(
        "afa-stylize-three-branches",
        (stylize - manual3).abs().max(),
        1e-14,
    ));
    let compose = afa_compose(&q, &base, &prompt, &style, &content, scale, 1)?;
    let manual4 = (att(&[&base, &prompt])?
        + att(&[&base, &style])?
        + att(&[&base, &content])?
        + att(&[&base, &style, &content])?)
        / 4.0;
    checks.push(CheckResult::less_than(
        "afa-compose-four-branches",
        (compose - manual4).abs().max(),
        1e-14,
    ));

    // Duplicating part of a branch must change the weights.
    let partial = AttentionBranch::new(
        base.keys.rows(0, 1).into_owned(),
        base.values.rows(0, 1).into_owned(),
    )?;
    let single = att(&[&base])?;
    let skewed = att(&[&base, &partial])?;
    checks.push(CheckResult::holds(
        "afa-duplicate-token-shift",
        (single - skewed).abs().max() > 1e-9,
    ));

    Ok(checks)
}
