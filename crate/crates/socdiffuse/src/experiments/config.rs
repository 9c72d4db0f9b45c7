//! Flat `section.key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; keys are dotted pairs.
//! The schema:
//!
//! ```text
//! experiment.kind        sample-alg1 | sample-alg2 | verify-lq | verify-bridge |
//!                        verify-prop2 | verify-hjb | verify-afa | sweep-gamma
//! problem.dim            state dimension d               (default 2)
//! problem.feature_dim    feature dimension k             (default 1)
//! schedule.kind          linear-beta | cosine            (default linear-beta)
//! schedule.num_steps     diffusion steps T               (default 50)
//! score.kind             gaussian | mixture              (default gaussian)
//! score.mean             comma vector                    (gaussian, default zeros)
//! score.var              positive real                   (gaussian, default 1)
//! score.weights          comma list                      (mixture)
//! score.means            semicolon-separated comma vectors (mixture)
//! score.vars             comma list                      (mixture)
//! extractor.kind         linear | identity | quadratic   (default linear)
//! extractor.matrix       rows split by ';', entries by ','  (linear; default
//!                        projection onto the first k coordinates)
//! cost.reference         comma vector of length k        (required by samplers)
//! cost.gamma             positive real | inf             (default inf)
//! sampler.eta            stepsize                        (required by samplers)
//! sampler.opt_steps      inner steps M                   (required by samplers)
//! sampler.lambda         proximal strength               (required by sample-alg2)
//! sampler.gradient_mode  analytic | finite-difference    (default analytic)
//! sampler.proximal_init  posterior-mean | zero           (default posterior-mean)
//! run.seeds              "a..b" range or comma list      (default 0..20)
//! run.out_dir            artifact directory              (default "out")
//! run.threads            worker threads                  (default 1)
//! ```
//!
//! The only environment override honored is `SEED`, for CI convenience; the
//! `--seed` flag takes precedence over it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sampler::{GradientMode, ProximalInit};
use crate::schedule::ScheduleKind;
use crate::score::{MixtureComponent, ScoreModel};
use crate::style::{FeatureExtractor, Gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SampleAlg1,
    SampleAlg2,
    VerifyLq,
    VerifyBridge,
    VerifyProp2,
    VerifyHjb,
    VerifyAfa,
    SweepGamma,
}

impl ExperimentKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sample-alg1" => Self::SampleAlg1,
            "sample-alg2" => Self::SampleAlg2,
            "verify-lq" => Self::VerifyLq,
            "verify-bridge" => Self::VerifyBridge,
            "verify-prop2" => Self::VerifyProp2,
            "verify-hjb" => Self::VerifyHjb,
            "verify-afa" => Self::VerifyAfa,
            "sweep-gamma" => Self::SweepGamma,
            other => {
                return Err(Error::Config(format!(
                    "experiment.kind: unknown kind \"{other}\""
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SampleAlg1 => "sample-alg1",
            Self::SampleAlg2 => "sample-alg2",
            Self::VerifyLq => "verify-lq",
            Self::VerifyBridge => "verify-bridge",
            Self::VerifyProp2 => "verify-prop2",
            Self::VerifyHjb => "verify-hjb",
            Self::VerifyAfa => "verify-afa",
            Self::SweepGamma => "sweep-gamma",
        }
    }

    fn is_sampling(&self) -> bool {
        matches!(self, Self::SampleAlg1 | Self::SampleAlg2)
    }
}

/// A parsed and validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub feature_dim: usize,
    pub schedule_kind: ScheduleKind,
    pub num_steps: usize,
    pub eta: Option<f64>,
    pub opt_steps: Option<usize>,
    pub lambda: Option<f64>,
    pub gamma: Gamma,
    pub gradient_mode: GradientMode,
    pub proximal_init: ProximalInit,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub threads: usize,
    entries: BTreeMap<String, String>,
}

impl PartialEq for ExperimentConfig {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got \"{line}\"", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !key.contains('.') {
                return Err(Error::Config(format!(
                    "line {}: key \"{key}\" must be section.key",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key \"{key}\"",
                    lineno + 1
                )));
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| entries.get(key).map(|s| s.as_str());
        let kind = ExperimentKind::parse(
            get("experiment.kind")
                .ok_or_else(|| Error::Config("missing required field experiment.kind".into()))?,
        )?;

        let dim = parse_field(get("problem.dim"), "problem.dim", 2usize)?;
        let feature_dim = parse_field(get("problem.feature_dim"), "problem.feature_dim", 1usize)?;
        if dim == 0 || feature_dim == 0 {
            return Err(Error::Config("problem dimensions must be positive".into()));
        }

        let schedule_kind = match get("schedule.kind").unwrap_or("linear-beta") {
            "linear-beta" => ScheduleKind::LinearBeta,
            "cosine" => ScheduleKind::Cosine,
            other => {
                return Err(Error::Config(format!(
                    "schedule.kind: unknown kind \"{other}\""
                )))
            }
        };
        let num_steps = parse_field(get("schedule.num_steps"), "schedule.num_steps", 50usize)?;
        if num_steps == 0 {
            return Err(Error::Config("schedule.num_steps must be positive".into()));
        }

        let eta = parse_optional::<f64>(get("sampler.eta"), "sampler.eta")?;
        let opt_steps = parse_optional::<usize>(get("sampler.opt_steps"), "sampler.opt_steps")?;
        let lambda = parse_optional::<f64>(get("sampler.lambda"), "sampler.lambda")?;

        if kind.is_sampling() {
            for (name, missing) in [
                ("sampler.eta", eta.is_none()),
                ("sampler.opt_steps", opt_steps.is_none()),
                ("cost.reference", get("cost.reference").is_none()),
            ] {
                if missing {
                    return Err(Error::Config(format!(
                        "missing required field {name} for experiment kind {}",
                        kind.as_str()
                    )));
                }
            }
        }
        if kind == ExperimentKind::SampleAlg2 && lambda.is_none() {
            return Err(Error::Config(
                "missing required field sampler.lambda for experiment kind sample-alg2".into(),
            ));
        }
        if let Some(e) = eta {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config("sampler.eta must be positive".into()));
            }
        }
        if let Some(l) = lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config("sampler.lambda must be positive".into()));
            }
        }

        let gamma = match get("cost.gamma").unwrap_or("inf") {
            "inf" | "infinite" | "+inf" => Gamma::Infinite,
            other => Gamma::finite(other.parse().map_err(|_| {
                Error::Config(format!("cost.gamma: expected a real or \"inf\", got \"{other}\""))
            })?)
            .map_err(|e| Error::Config(e.to_string()))?,
        };

        let gradient_mode = match get("sampler.gradient_mode").unwrap_or("analytic") {
            "analytic" => GradientMode::Analytic,
            "finite-difference" => GradientMode::FiniteDifference,
            other => {
                return Err(Error::Config(format!(
                    "sampler.gradient_mode: unknown mode \"{other}\""
                )))
            }
        };
        let proximal_init = match get("sampler.proximal_init").unwrap_or("posterior-mean") {
            "posterior-mean" => ProximalInit::PosteriorMean,
            "zero" => ProximalInit::Zero,
            other => {
                return Err(Error::Config(format!(
                    "sampler.proximal_init: unknown init \"{other}\""
                )))
            }
        };

        let seeds = parse_seeds(get("run.seeds").unwrap_or("0..20"))?;
        if seeds.is_empty() {
            return Err(Error::Config("run.seeds must name at least one seed".into()));
        }
        let out_dir = PathBuf::from(get("run.out_dir").unwrap_or("out"));
        let threads = parse_field(get("run.threads"), "run.threads", 1usize)?;
        if threads == 0 {
            return Err(Error::Config("run.threads must be positive".into()));
        }

        let config = Self {
            kind,
            dim,
            feature_dim,
            schedule_kind,
            num_steps,
            eta,
            opt_steps,
            lambda,
            gamma,
            gradient_mode,
            proximal_init,
            seeds,
            out_dir,
            threads,
            entries,
        };
        // Fail fast on malformed score/extractor/reference sections.
        config.score_model()?;
        config.extractor()?;
        if config.entries.contains_key("cost.reference") {
            config.reference()?;
        }
        Ok(config)
    }

    /// Normalized `key = value` lines; re-parsing yields an equal config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Replace the seed list (used by `--seed` and the `SEED` override).
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = vec![seed];
        self.entries.insert("run.seeds".into(), seed.to_string());
    }

    pub fn override_out_dir(&mut self, dir: PathBuf) {
        self.entries
            .insert("run.out_dir".into(), dir.display().to_string());
        self.out_dir = dir;
    }

    /// Worker count is an execution detail: it never enters the config echo,
    /// so artifacts stay byte-identical across thread counts.
    pub fn override_threads(&mut self, threads: usize) {
        self.threads = threads;
    }

    pub fn score_model(&self) -> Result<ScoreModel> {
        match self.entries.get("score.kind").map(|s| s.as_str()).unwrap_or("gaussian") {
            "gaussian" => {
                let mean = match self.entries.get("score.mean") {
                    Some(v) => parse_vector(v, "score.mean")?,
                    None => DVector::zeros(self.dim),
                };
                if mean.len() != self.dim {
                    return Err(Error::Config(format!(
                        "score.mean has {} entries, problem.dim is {}",
                        mean.len(),
                        self.dim
                    )));
                }
                let var: f64 = parse_field(
                    self.entries.get("score.var").map(|s| s.as_str()),
                    "score.var",
                    1.0,
                )?;
                if var <= 0.0 || var.is_nan() {
                    return Err(Error::Config("score.var must be positive".into()));
                }
                Ok(ScoreModel::IsotropicGaussian { mean, var })
            }
            "mixture" => {
                let weights = parse_list(
                    self.require("score.weights")?,
                    "score.weights",
                )?;
                let vars = parse_list(self.require("score.vars")?, "score.vars")?;
                let means_raw = self.require("score.means")?;
                let means: Vec<DVector<f64>> = means_raw
                    .split(';')
                    .map(|m| parse_vector(m, "score.means"))
                    .collect::<Result<_>>()?;
                if weights.len() != means.len() || weights.len() != vars.len() {
                    return Err(Error::Config(
                        "score.weights, score.means and score.vars must have equal length".into(),
                    ));
                }
                let components = weights
                    .into_iter()
                    .zip(means)
                    .zip(vars)
                    .map(|((weight, mean), var)| MixtureComponent { weight, mean, var })
                    .collect();
                ScoreModel::mixture(components).map_err(|e| Error::Config(e.to_string()))
            }
            other => Err(Error::Config(format!("score.kind: unknown kind \"{other}\""))),
        }
    }

    pub fn extractor(&self) -> Result<FeatureExtractor> {
        match self
            .entries
            .get("extractor.kind")
            .map(|s| s.as_str())
            .unwrap_or("linear")
        {
            "identity" => Ok(FeatureExtractor::identity(self.dim)),
            "quadratic" => Ok(FeatureExtractor::Quadratic { dim: self.dim }),
            "linear" => {
                let matrix = match self.entries.get("extractor.matrix") {
                    Some(text) => parse_matrix(text, "extractor.matrix")?,
                    None => {
                        // Projection onto the first k coordinates.
                        let mut m = DMatrix::zeros(self.feature_dim, self.dim);
                        for i in 0..self.feature_dim.min(self.dim) {
                            m[(i, i)] = 1.0;
                        }
                        m
                    }
                };
                if matrix.ncols() != self.dim || matrix.nrows() != self.feature_dim {
                    return Err(Error::Config(format!(
                        "extractor.matrix is {}x{}, expected {}x{} from problem dims",
                        matrix.nrows(),
                        matrix.ncols(),
                        self.feature_dim,
                        self.dim
                    )));
                }
                Ok(FeatureExtractor::Linear(matrix))
            }
            other => Err(Error::Config(format!(
                "extractor.kind: unknown kind \"{other}\""
            ))),
        }
    }

    pub fn reference(&self) -> Result<DVector<f64>> {
        let text = self.require("cost.reference")?;
        let v = parse_vector(text, "cost.reference")?;
        let expected = self.extractor()?.output_dim();
        if v.len() != expected {
            return Err(Error::Config(format!(
                "cost.reference has {} entries, extractor produces {}",
                v.len(),
                expected
            )));
        }
        Ok(v)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("missing required field {key}")))
    }
}

fn parse_field<T: std::str::FromStr>(value: Option<&str>, key: &str, default: T) -> Result<T> {
    match value {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse \"{v}\""))),
    }
}

fn parse_optional<T: std::str::FromStr>(value: Option<&str>, key: &str) -> Result<Option<T>> {
    value
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse \"{v}\"")))
        })
        .transpose()
}

fn parse_list(text: &str, key: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse \"{}\"", p.trim())))
        })
        .collect()
}

fn parse_vector(text: &str, key: &str) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(parse_list(text, key)?))
}

fn parse_matrix(text: &str, key: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| parse_list(row, key))
        .collect::<Result<_>>()?;
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{key}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((start, end)) = text.split_once("..") {
        let a: u64 = start
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("run.seeds: bad range start \"{start}\"")))?;
        let b: u64 = end
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("run.seeds: bad range end \"{end}\"")))?;
        if b <= a {
            return Err(Error::Config("run.seeds: empty range".into()));
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("run.seeds: cannot parse \"{}\"", p.trim())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
experiment.kind = sample-alg1
problem.dim = 2
problem.feature_dim = 1
schedule.num_steps = 50
extractor.matrix = 1,0
cost.reference = 2
sampler.eta = 0.1
sampler.opt_steps = 3
run.seeds = 0..4
";

    #[test]
    fn parses_a_complete_sampling_config() {
        let cfg = ExperimentConfig::parse_str(SAMPLE).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::SampleAlg1);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3]);
        assert_eq!(cfg.eta, Some(0.1));
        assert_eq!(cfg.reference().unwrap(), DVector::from_vec(vec![2.0]));
    }

    #[test]
    fn missing_eta_is_named_in_the_error() {
        let text = SAMPLE.replace("sampler.eta = 0.1\n", "");
        let err = ExperimentConfig::parse_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sampler.eta"), "message was: {msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn alg2_requires_lambda() {
        let text = SAMPLE.replace("sample-alg1", "sample-alg2");
        let err = ExperimentConfig::parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("sampler.lambda"));
    }

    #[test]
    fn line_diagnostics_on_bad_syntax() {
        let err = ExperimentConfig::parse_str("experiment.kind = verify-hjb\nbogus line\n")
            .unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let err = ExperimentConfig::parse_str(
            "experiment.kind = verify-hjb\nproblem.dim = 2\nproblem.dim = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::parse_str(SAMPLE).unwrap();
        let again = ExperimentConfig::parse_str(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn seed_list_and_range_forms() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1,5,9").unwrap(), vec![1, 5, 9]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert!(parse_seeds("5..5").is_err());
    }

    #[test]
    fn mixture_score_resolves() {
        let text = "\
experiment.kind = verify-hjb
problem.dim = 1
score.kind = mixture
score.weights = 0.5,0.5
score.means = -2;2
score.vars = 0.25,0.25
";
        let cfg = ExperimentConfig::parse_str(text).unwrap();
        assert!(matches!(
            cfg.score_model().unwrap(),
            ScoreModel::GaussianMixture(_)
        ));
    }
}
