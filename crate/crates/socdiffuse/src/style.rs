//! Style descriptors and the quadratic terminal cost built on them.
//!
//! The descriptor is pluggable; the linear variant (a plain matrix) is the
//! verification workhorse because every controller built on it has a closed
//! form. Quadratic, composite and custom variants exist to exercise the
//! nonlinear code paths.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative step of the central-difference fallback gradient.
const FD_RELATIVE_STEP: f64 = 1e-4;
/// Absolute floor of the central-difference step.
const FD_ABSOLUTE_FLOOR: f64 = 1e-8;

/// Terminal weight: a positive real or the hard-constraint limit.
///
/// The infinite case is a flag with its own code path, never an overflowing
/// float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    pub fn finite(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(format!(
                "gamma must be a non-negative finite real, got {value}"
            )));
        }
        Ok(Gamma::Finite(value))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Gamma::Infinite)
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gamma::Finite(v) => write!(f, "{v}"),
            Gamma::Infinite => write!(f, "inf"),
        }
    }
}

type ExtractorFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A style descriptor mapping d-dimensional states to k-dimensional features.
#[derive(Clone)]
pub enum FeatureExtractor {
    /// `x -> A x`
    Linear(DMatrix<f64>),
    /// Per-coordinate squares, `x -> (x_1^2, ..., x_d^2)`.
    Quadratic { dim: usize },
    /// Concatenation of extractors sharing the input dimension.
    Composite(Vec<FeatureExtractor>),
    /// Black-box descriptor; gradients fall back to central differences.
    Custom {
        name: String,
        input_dim: usize,
        output_dim: usize,
        f: Arc<ExtractorFn>,
    },
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureExtractor::Linear(a) => write!(f, "Linear({}x{})", a.nrows(), a.ncols()),
            FeatureExtractor::Quadratic { dim } => write!(f, "Quadratic({dim})"),
            FeatureExtractor::Composite(parts) => f.debug_tuple("Composite").field(parts).finish(),
            FeatureExtractor::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl FeatureExtractor {
    pub fn identity(dim: usize) -> Self {
        FeatureExtractor::Linear(DMatrix::identity(dim, dim))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureExtractor::Linear(a) => a.ncols(),
            FeatureExtractor::Quadratic { dim } => *dim,
            FeatureExtractor::Composite(parts) => parts[0].input_dim(),
            FeatureExtractor::Custom { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureExtractor::Linear(a) => a.nrows(),
            FeatureExtractor::Quadratic { dim } => *dim,
            FeatureExtractor::Composite(parts) => parts.iter().map(|p| p.output_dim()).sum(),
            FeatureExtractor::Custom { output_dim, .. } => *output_dim,
        }
    }

    /// Whether the gradient of a cost through this extractor is exact.
    pub fn is_analytic(&self) -> bool {
        match self {
            FeatureExtractor::Linear(_) | FeatureExtractor::Quadratic { .. } => true,
            FeatureExtractor::Composite(parts) => parts.iter().all(|p| p.is_analytic()),
            FeatureExtractor::Custom { .. } => false,
        }
    }

    /// Evaluate the descriptor.
    pub fn extract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "extractor expects dimension {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(match self {
            FeatureExtractor::Linear(a) => a * x,
            FeatureExtractor::Quadratic { .. } => x.map(|v| v * v),
            FeatureExtractor::Composite(parts) => {
                let mut out = Vec::with_capacity(self.output_dim());
                for p in parts {
                    out.extend(p.extract(x)?.iter().copied());
                }
                DVector::from_vec(out)
            }
            FeatureExtractor::Custom { f, .. } => f(x),
        })
    }

    /// `J(x)^T v` for analytic variants.
    fn vjp(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            FeatureExtractor::Linear(a) => Ok(a.transpose() * v),
            FeatureExtractor::Quadratic { .. } => Ok(x.component_mul(v) * 2.0),
            FeatureExtractor::Composite(parts) => {
                let mut out = DVector::zeros(self.input_dim());
                let mut offset = 0;
                for p in parts {
                    let k = p.output_dim();
                    let block = DVector::from_iterator(k, v.iter().skip(offset).take(k).copied());
                    out += p.vjp(x, &block)?;
                    offset += k;
                }
                Ok(out)
            }
            FeatureExtractor::Custom { name, .. } => Err(Error::invalid(format!(
                "custom extractor {name} has no analytic jacobian"
            ))),
        }
    }
}

/// Squared feature-space discrepancy `||reference - psi(x)||^2`, with the
/// weight carried alongside for the control objective.
#[derive(Debug, Clone)]
pub struct TerminalCost {
    extractor: FeatureExtractor,
    reference: DVector<f64>,
    weight: Gamma,
}

impl TerminalCost {
    pub fn new(extractor: FeatureExtractor, reference: DVector<f64>, weight: Gamma) -> Result<Self> {
        if reference.len() != extractor.output_dim() {
            return Err(Error::invalid(format!(
                "reference feature dimension {} does not match extractor output {}",
                reference.len(),
                extractor.output_dim()
            )));
        }
        Ok(Self { extractor, reference, weight })
    }

    /// Reference features taken from a concrete reference state `z0`.
    pub fn from_reference_state(
        extractor: FeatureExtractor,
        z0: &DVector<f64>,
        weight: Gamma,
    ) -> Result<Self> {
        let reference = extractor.extract(z0)?;
        Self::new(extractor, reference, weight)
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn weight(&self) -> Gamma {
        self.weight
    }

    /// `||reference - psi(x)||^2`
    pub fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((&self.reference - self.extractor.extract(x)?).norm_squared())
    }

    /// Gradient of [`Self::cost`]: analytic chain rule where the extractor
    /// allows it, otherwise central differences (relative step 1e-4,
    /// absolute floor 1e-8).
    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.extractor.is_analytic() {
            let residual = self.extractor.extract(x)? - &self.reference;
            return Ok(self.extractor.vjp(x, &residual)? * 2.0);
        }
        let mut g = DVector::zeros(x.len());
        for j in 0..x.len() {
            let h = FD_RELATIVE_STEP * x[j].abs() + FD_ABSOLUTE_FLOOR;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            g[j] = (self.cost(&xp)? - self.cost(&xm)?) / (2.0 * h);
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(
                "finite-difference cost gradient produced non-finite values".to_string(),
            ));
        }
        Ok(g)
    }
}
