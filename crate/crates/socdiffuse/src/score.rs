//! Analytic score fields.
//!
//! Every model here is a prior over clean states whose corrupted marginal
//! under `x = a*x0 + b*eps`, `eps ~ N(0, I)` stays in closed form. The pair
//! `(a, b)` is a [`NoiseLevel`]; the variance-preserving schedule uses
//! `(sqrt(alpha_bar), sqrt(1 - alpha_bar))`, the straight-line flow path
//! uses `(t, 1 - t)`, and the Ornstein-Uhlenbeck process uses
//! `(exp(-t), sqrt(1 - exp(-2t)))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Opaque conditioning tag standing in for a prompt; selects among score
/// models inside [`ScoreModel::Conditional`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ContextTag(pub u32);

/// Coefficients of the linear-Gaussian corruption `x = data_scale * x0 + noise_scale * eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevel {
    pub data_scale: f64,
    pub noise_scale: f64,
}

impl NoiseLevel {
    /// Variance-preserving level at signal strength `alpha_bar`.
    pub fn vp(alpha_bar: f64) -> Self {
        Self {
            data_scale: alpha_bar.sqrt(),
            noise_scale: (1.0 - alpha_bar).sqrt(),
        }
    }

    /// Straight-line flow path level at flow time `t` (data weight `t`).
    pub fn flow(t: f64) -> Self {
        Self {
            data_scale: t,
            noise_scale: 1.0 - t,
        }
    }

    /// Ornstein-Uhlenbeck marginal at time `t` (drift `-x`, volatility `sqrt(2)`).
    pub fn ou(t: f64) -> Self {
        Self {
            data_scale: (-t).exp(),
            noise_scale: (1.0 - (-2.0 * t).exp()).sqrt(),
        }
    }

    /// Uncorrupted data.
    pub fn clean() -> Self {
        Self {
            data_scale: 1.0,
            noise_scale: 0.0,
        }
    }
}

/// One isotropic component `weight * N(mean, var * I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub var: f64,
}

/// Evaluatable approximation of `grad log p(x, t)`.
#[derive(Debug, Clone)]
pub enum ScoreModel {
    /// Prior `N(mean, var * I)`.
    IsotropicGaussian { mean: DVector<f64>, var: f64 },
    /// Weighted isotropic Gaussian mixture; weights must sum to 1 within 1e-12.
    GaussianMixture(Vec<MixtureComponent>),
    /// One-dimensional score values tabulated on a uniform grid, linearly
    /// interpolated; the grid is tied to a single noise level.
    Tabulated {
        x_min: f64,
        x_max: f64,
        values: Vec<f64>,
    },
    /// Dispatches on the context tag (prompt-conditional scores).
    Conditional(Vec<(u32, ScoreModel)>),
}

impl ScoreModel {
    pub fn standard_normal(dim: usize) -> Self {
        ScoreModel::IsotropicGaussian {
            mean: DVector::zeros(dim),
            var: 1.0,
        }
    }

    /// Validated mixture constructor.
    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let dim = components[0].mean.len();
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        for c in &components {
            if c.mean.len() != dim {
                return Err(Error::invalid("mixture component dimensions differ"));
            }
            if !(c.var > 0.0 && c.var.is_finite()) {
                return Err(Error::invalid("mixture component variance must be positive"));
            }
            if c.weight < 0.0 {
                return Err(Error::invalid("mixture weights must be non-negative"));
            }
        }
        Ok(ScoreModel::GaussianMixture(components))
    }

    /// Sample a one-dimensional model onto a uniform grid.
    pub fn tabulate(
        model: &ScoreModel,
        level: NoiseLevel,
        ctx: ContextTag,
        x_min: f64,
        x_max: f64,
        points: usize,
    ) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::invalid("tabulation supports one-dimensional models"));
        }
        if points < 2 || x_max <= x_min || (x_max - x_min).is_nan() {
            return Err(Error::invalid("tabulation needs points >= 2 and x_max > x_min"));
        }
        let mut values = Vec::with_capacity(points);
        for i in 0..points {
            let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
            values.push(model.score(&DVector::from_element(1, x), level, ctx)?[0]);
        }
        Ok(ScoreModel::Tabulated { x_min, x_max, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::IsotropicGaussian { mean, .. } => mean.len(),
            ScoreModel::GaussianMixture(cs) => cs[0].mean.len(),
            ScoreModel::Tabulated { .. } => 1,
            ScoreModel::Conditional(models) => models[0].1.dim(),
        }
    }

    /// Score of the corrupted marginal at `x`.
    pub fn score(&self, x: &DVector<f64>, level: NoiseLevel, ctx: ContextTag) -> Result<DVector<f64>> {
        match self {
            ScoreModel::IsotropicGaussian { mean, var } => {
                self.check_dim(x)?;
                let v = marginal_var(level, *var);
                Ok((mean * level.data_scale - x) / v)
            }
            ScoreModel::GaussianMixture(components) => {
                self.check_dim(x)?;
                let resp = responsibilities(components, x, level);
                let mut out = DVector::zeros(x.len());
                for (c, r) in components.iter().zip(&resp) {
                    let v = marginal_var(level, c.var);
                    out += (&c.mean * level.data_scale - x) * (r / v);
                }
                Ok(out)
            }
            ScoreModel::Tabulated { x_min, x_max, values } => {
                self.check_dim(x)?;
                let pos = (x[0] - x_min) / (x_max - x_min) * (values.len() - 1) as f64;
                let pos = pos.clamp(0.0, (values.len() - 1) as f64);
                let i = (pos.floor() as usize).min(values.len() - 2);
                let frac = pos - i as f64;
                Ok(DVector::from_element(
                    1,
                    values[i] * (1.0 - frac) + values[i + 1] * frac,
                ))
            }
            ScoreModel::Conditional(_) => self.select(ctx)?.score(x, level, ctx),
        }
    }

    /// Log density of the corrupted marginal (analytic variants only).
    pub fn log_density(&self, x: &DVector<f64>, level: NoiseLevel, ctx: ContextTag) -> Result<f64> {
        match self {
            ScoreModel::IsotropicGaussian { mean, var } => {
                self.check_dim(x)?;
                Ok(log_gaussian(x, &(mean * level.data_scale), marginal_var(level, *var)))
            }
            ScoreModel::GaussianMixture(components) => {
                self.check_dim(x)?;
                let logs: Vec<f64> = components
                    .iter()
                    .map(|c| {
                        c.weight.ln()
                            + log_gaussian(x, &(&c.mean * level.data_scale), marginal_var(level, c.var))
                    })
                    .collect();
                Ok(log_sum_exp(&logs))
            }
            ScoreModel::Tabulated { .. } => Err(Error::invalid(
                "tabulated score has no log-density; use an analytic model",
            )),
            ScoreModel::Conditional(_) => self.select(ctx)?.log_density(x, level, ctx),
        }
    }

    /// Jacobian of the score with respect to `x` (the Hessian of the log
    /// density). Available for the Gaussian variants; `None` means callers
    /// should fall back to finite differences.
    pub fn score_jacobian(
        &self,
        x: &DVector<f64>,
        level: NoiseLevel,
        ctx: ContextTag,
    ) -> Result<Option<DMatrix<f64>>> {
        match self {
            ScoreModel::IsotropicGaussian { var, .. } => {
                self.check_dim(x)?;
                let v = marginal_var(level, *var);
                Ok(Some(DMatrix::identity(x.len(), x.len()) * (-1.0 / v)))
            }
            ScoreModel::GaussianMixture(components) => {
                self.check_dim(x)?;
                let d = x.len();
                let resp = responsibilities(components, x, level);
                let scores: Vec<DVector<f64>> = components
                    .iter()
                    .map(|c| (&c.mean * level.data_scale - x) / marginal_var(level, c.var))
                    .collect();
                let mut mean_score = DVector::zeros(d);
                for (s, r) in scores.iter().zip(&resp) {
                    mean_score += s * *r;
                }
                // Hessian of log p: sum_i r_i (s_i s_i^T - I/v_i) - s_bar s_bar^T
                let mut hess = DMatrix::zeros(d, d);
                for ((c, s), r) in components.iter().zip(&scores).zip(&resp) {
                    let v = marginal_var(level, c.var);
                    hess += (s * s.transpose() - DMatrix::identity(d, d) / v) * *r;
                }
                hess -= &mean_score * mean_score.transpose();
                Ok(Some(hess))
            }
            ScoreModel::Tabulated { .. } => Ok(None),
            ScoreModel::Conditional(_) => self.select(ctx)?.score_jacobian(x, level, ctx),
        }
    }

    fn select(&self, ctx: ContextTag) -> Result<&ScoreModel> {
        match self {
            ScoreModel::Conditional(models) => models
                .iter()
                .find(|(tag, _)| *tag == ctx.0)
                .map(|(_, m)| m)
                .ok_or_else(|| Error::invalid(format!("no score model for context tag {}", ctx.0))),
            other => Ok(other),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "state dimension {} does not match score model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn marginal_var(level: NoiseLevel, prior_var: f64) -> f64 {
    level.data_scale * level.data_scale * prior_var + level.noise_scale * level.noise_scale
}

fn log_gaussian(x: &DVector<f64>, mean: &DVector<f64>, var: f64) -> f64 {
    let d = x.len() as f64;
    let sq = (x - mean).norm_squared();
    -0.5 * (sq / var + d * (var.ln() + (2.0 * std::f64::consts::PI).ln()))
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

fn responsibilities(components: &[MixtureComponent], x: &DVector<f64>, level: NoiseLevel) -> Vec<f64> {
    let logs: Vec<f64> = components
        .iter()
        .map(|c| c.weight.ln() + log_gaussian(x, &(&c.mean * level.data_scale), marginal_var(level, c.var)))
        .collect();
    let total = log_sum_exp(&logs);
    logs.iter().map(|l| (l - total).exp()).collect()
}
