//! Discrete noise schedules: the cumulative signal level `alpha_bar_t` over
//! `T` steps, with the usual linear-beta and cosine families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and last beta of the linear schedule.
pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;

/// Offset `s` of the cosine schedule.
const COSINE_OFFSET: f64 = 0.008;
/// Per-step beta clamp keeping `alpha_bar` strictly positive for the cosine family.
const COSINE_MAX_BETA: f64 = 0.999;

/// Schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    LinearBeta,
    Cosine,
    /// Externally supplied `alpha_bar` values (testing and tabulated runs).
    Custom,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleKind::LinearBeta => write!(f, "linear-beta"),
            ScheduleKind::Cosine => write!(f, "cosine"),
            ScheduleKind::Custom => write!(f, "custom"),
        }
    }
}

/// Signal levels `alpha_bar_t` for `t = 0..=T`, with `alpha_bar_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Build a schedule of the named family with `num_steps >= 1`.
    ///
    /// Linear-beta runs betas linearly from 1e-4 to 0.02; cosine follows the
    /// squared-cosine profile with per-step betas clamped at 0.999 so every
    /// `alpha_bar_t` stays strictly positive.
    pub fn new(num_steps: usize, kind: ScheduleKind) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let alpha_bar = match kind {
            ScheduleKind::LinearBeta => {
                let mut seq = Vec::with_capacity(num_steps + 1);
                seq.push(1.0);
                let mut prod = 1.0;
                for beta in linear_betas(num_steps) {
                    prod *= 1.0 - beta;
                    seq.push(prod);
                }
                seq
            }
            ScheduleKind::Cosine => {
                let f = |t: f64| {
                    let angle = (t / num_steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                        * std::f64::consts::FRAC_PI_2;
                    angle.cos().powi(2)
                };
                let mut seq = Vec::with_capacity(num_steps + 1);
                seq.push(1.0);
                let mut prod = 1.0;
                for t in 1..=num_steps {
                    let beta = (1.0 - f(t as f64) / f((t - 1) as f64)).min(COSINE_MAX_BETA);
                    prod *= 1.0 - beta;
                    seq.push(prod);
                }
                seq
            }
            ScheduleKind::Custom => {
                return Err(Error::invalid(
                    "custom schedules are built with NoiseSchedule::from_alpha_bar",
                ))
            }
        };
        Self::validated(kind, alpha_bar)
    }

    /// Wrap an explicit `alpha_bar` sequence (`alpha_bar[0]` must be exactly 1).
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::invalid("alpha_bar needs at least T+1 = 2 entries"));
        }
        Self::validated(ScheduleKind::Custom, alpha_bar)
    }

    fn validated(kind: ScheduleKind, alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar[0] != 1.0 {
            return Err(Error::invalid("alpha_bar_0 must be exactly 1"));
        }
        for (t, pair) in alpha_bar.windows(2).enumerate() {
            if !pair[1].is_finite() || pair[1] <= 0.0 {
                return Err(Error::invalid(format!(
                    "alpha_bar_{} = {} must be finite and strictly positive",
                    t + 1,
                    pair[1]
                )));
            }
            if pair[1] > pair[0] {
                return Err(Error::invalid(format!(
                    "alpha_bar must be non-increasing, violated at t = {}",
                    t + 1
                )));
            }
        }
        Ok(Self { kind, alpha_bar })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of diffusion steps `T`.
    pub fn num_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    /// `alpha_bar_t`; panics if `t > T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bar_seq(&self) -> &[f64] {
        &self.alpha_bar
    }
}

fn linear_betas(num_steps: usize) -> impl Iterator<Item = f64> {
    let step = if num_steps > 1 {
        (LINEAR_BETA_END - LINEAR_BETA_START) / (num_steps - 1) as f64
    } else {
        0.0
    };
    (0..num_steps).map(move |i| LINEAR_BETA_START + step * i as f64)
}
