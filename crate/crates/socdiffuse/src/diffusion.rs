//! Forward sampling paths, posterior-mean estimators, DDIM stepping and
//! reverse drifts.
//!
//! Two clocks coexist deliberately. Sampling works on the discrete schedule
//! index `t in {0..T}` (variance-preserving, `alpha_bar_t`); the flow-path
//! formulas work on continuous `t in [0, 1]` with data weight `t`. Conversion
//! to the control module's clock happens in exactly one place,
//! [`crate::control::control_time_from_step`].

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::score::{ContextTag, NoiseLevel, ScoreModel};

/// A state of the reverse process at a discrete schedule index.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub values: DVector<f64>,
    pub time_index: usize,
}

impl State {
    pub fn new(values: DVector<f64>, time_index: usize) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite state at time index {time_index}"
            )));
        }
        Ok(Self { values, time_index })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A completed run: states with strictly decreasing time indices, the control
/// applied at each step, and one terminal-cost reading per state (zeros when
/// no cost was attached).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub controls: Vec<DVector<f64>>,
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<State>, controls: Vec<DVector<f64>>, costs: Vec<f64>) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::invalid(format!(
                "trajectory with {} states needs {} controls, got {}",
                states.len(),
                states.len() - 1,
                controls.len()
            )));
        }
        if costs.len() != states.len() {
            return Err(Error::invalid("trajectory needs one cost entry per state"));
        }
        for pair in states.windows(2) {
            if pair[1].time_index >= pair[0].time_index {
                return Err(Error::invalid("trajectory time indices must strictly decrease"));
            }
        }
        Ok(Self { states, controls, costs })
    }

    pub fn terminal_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

type DriftFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
type VolatilityFn = dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync;

/// Drift and volatility of the forward SDE; defaults to the
/// Ornstein-Uhlenbeck pair `f = -x`, `g = sqrt(2)`.
#[derive(Clone)]
pub struct SdeCoefficients {
    drift: Arc<DriftFn>,
    volatility: Arc<VolatilityFn>,
}

impl SdeCoefficients {
    pub fn new(
        drift: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        volatility: impl Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Arc::new(drift),
            volatility: Arc::new(volatility),
        }
    }

    pub fn ou() -> Self {
        Self::new(|x, _| -x, |_, _| std::f64::consts::SQRT_2)
    }

    pub fn drift(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.drift)(x, t)
    }

    /// Volatility must be non-negative; violations surface as errors at use sites.
    pub fn volatility(&self, x: &DVector<f64>, t: f64) -> f64 {
        (self.volatility)(x, t)
    }
}

impl Default for SdeCoefficients {
    fn default() -> Self {
        Self::ou()
    }
}

impl std::fmt::Debug for SdeCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SdeCoefficients {..}")
    }
}

/// Drift selector for [`reverse_drift`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReverseDriftMode {
    /// `f - g^2 * score`
    Sde,
    /// `f - g^2/2 * score`
    ProbabilityFlow,
    /// `t/(1-t)^2 * x + t^2/(1-t)^2 * score(x, 1-t)` on the flow clock.
    FlowRemark,
}

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise`.
pub fn forward_marginal_sample(
    x0: &DVector<f64>,
    t: usize,
    noise: &DVector<f64>,
    schedule: &NoiseSchedule,
) -> Result<State> {
    if noise.len() != x0.len() {
        return Err(Error::invalid(format!(
            "noise dimension {} does not match state dimension {}",
            noise.len(),
            x0.len()
        )));
    }
    if t > schedule.num_steps() {
        return Err(Error::invalid(format!(
            "time index {t} exceeds schedule length {}",
            schedule.num_steps()
        )));
    }
    let ab = schedule.alpha_bar(t);
    State::new(x0 * ab.sqrt() + noise * (1.0 - ab).sqrt(), t)
}

/// Straight-line path `t * x0 + (1 - t) * noise` for `t in [0, 1]`.
pub fn flow_path_sample(x0: &DVector<f64>, t: f64, noise: &DVector<f64>) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("flow time {t} outside [0, 1]")));
    }
    if noise.len() != x0.len() {
        return Err(Error::invalid("noise dimension mismatch"));
    }
    Ok(x0 * t + noise * (1.0 - t))
}

/// Posterior mean of the clean state under the variance-preserving schedule:
/// `x / sqrt(ab) + (1 - ab)/sqrt(ab) * score(x)` with `ab = alpha_bar_t`.
pub fn tweedie_posterior_mean(
    x: &DVector<f64>,
    t: usize,
    score: &ScoreModel,
    schedule: &NoiseSchedule,
    ctx: ContextTag,
) -> Result<DVector<f64>> {
    let ab = schedule.alpha_bar(t);
    let s = score.score(x, NoiseLevel::vp(ab), ctx)?;
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical(format!(
            "score returned non-finite values at time index {t}"
        )));
    }
    let root = ab.sqrt();
    Ok(x / root + s * ((1.0 - ab) / root))
}

/// Posterior mean of the terminal state on the flow clock:
/// `x/(1-t) + t^2/(1-t) * score(x, 1-t)`, defined for `t < 1`.
pub fn flow_posterior_mean(
    x: &DVector<f64>,
    t: f64,
    score: &ScoreModel,
    ctx: ContextTag,
) -> Result<DVector<f64>> {
    if t >= 1.0 {
        return Err(Error::SingularTime { t });
    }
    let s = score.score(x, NoiseLevel::flow(1.0 - t), ctx)?;
    Ok(x / (1.0 - t) + s * (t * t / (1.0 - t)))
}

/// Deterministic DDIM update from index `t` to `t_prev < t` given the clean
/// estimate `x0_hat`.
pub fn ddim_step(
    x_t: &DVector<f64>,
    x0_hat: &DVector<f64>,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Result<State> {
    if t_prev >= t {
        return Err(Error::invalid(format!(
            "DDIM target index {t_prev} must precede current index {t}"
        )));
    }
    if t > schedule.num_steps() {
        return Err(Error::invalid(format!(
            "time index {t} exceeds schedule length {}",
            schedule.num_steps()
        )));
    }
    if x0_hat.len() != x_t.len() {
        return Err(Error::invalid("clean estimate dimension mismatch"));
    }
    let ab_t = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let eps_hat = if ab_t < 1.0 {
        (x_t - x0_hat * ab_t.sqrt()) / (1.0 - ab_t).sqrt()
    } else if x_t == x0_hat {
        DVector::zeros(x_t.len())
    } else {
        return Err(Error::SingularDenoise { step: t });
    };
    State::new(x0_hat * ab_prev.sqrt() + eps_hat * (1.0 - ab_prev).sqrt(), t_prev)
}

/// Reverse drift in the selected convention. The `sde` and `probability-flow`
/// modes evaluate the score at the Ornstein-Uhlenbeck marginal matching the
/// default coefficients; `flow-remark` evaluates it on the flow path at time
/// `1 - t`.
pub fn reverse_drift(
    x: &DVector<f64>,
    t: f64,
    score: &ScoreModel,
    mode: ReverseDriftMode,
    sde: &SdeCoefficients,
    ctx: ContextTag,
) -> Result<DVector<f64>> {
    match mode {
        ReverseDriftMode::Sde | ReverseDriftMode::ProbabilityFlow => {
            let g = sde.volatility(x, t);
            if g < 0.0 || g.is_nan() {
                return Err(Error::invalid(format!("volatility g = {g} must be non-negative")));
            }
            let s = score.score(x, NoiseLevel::ou(t), ctx)?;
            let factor = match mode {
                ReverseDriftMode::Sde => g * g,
                _ => 0.5 * g * g,
            };
            Ok(sde.drift(x, t) - s * factor)
        }
        ReverseDriftMode::FlowRemark => {
            if t >= 1.0 {
                return Err(Error::SingularTime { t });
            }
            let s = score.score(x, NoiseLevel::flow(1.0 - t), ctx)?;
            let denom = (1.0 - t) * (1.0 - t);
            Ok(x * (t / denom) + s * (t * t / denom))
        }
    }
}
