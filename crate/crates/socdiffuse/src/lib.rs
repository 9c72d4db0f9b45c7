//! Controlled reverse-diffusion sampling at desk scale.
//!
//! The library pairs a stochastic optimal controller carrying a terminal
//! style cost with analytic diffusion machinery, and verifies every closed
//! form against an independent numerical oracle: shooting boundary-value
//! solves, HJB residuals, quadrature posterior means and brute-force
//! attention references.
//!
//! ## Layout
//!
//! - [`schedule`], [`score`], [`diffusion`] — noise schedules, analytic score
//!   fields, forward paths, posterior means, DDIM stepping and reverse drifts.
//! - [`style`] — pluggable feature descriptors and the quadratic terminal cost.
//! - [`control`] — bridge and style-feature controllers, the drift-modulated
//!   closed form, HJB residual checking, the shooting solver, and controlled
//!   simulation.
//! - [`sampler`] — the two controlled sampling procedures and their inner
//!   optimizers.
//! - [`afa`] — attention feature aggregation over token-concatenated branches.
//! - [`experiments`] — config-driven runs, verification suites and
//!   deterministic CSV/JSON/SVG artifacts, fronted by the `socdiffuse` binary.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example bridge_steering
//! cargo run --example style_steering
//! cargo run --example modulated_drift
//! cargo run --example hjb_check
//! cargo run --example posterior_means
//! cargo run --example algorithm1_gaussian
//! cargo run --example algorithm2_proximal
//! cargo run --example gamma_sweep
//! cargo run --example afa_aggregation
//! ```
//!
//! The CLI drives the same machinery from config files:
//!
//! ```bash
//! socdiffuse run experiment.cfg
//! socdiffuse verify optimal-control
//! socdiffuse plot out/trajectories.csv out/cost.svg
//! ```

pub mod afa;
pub mod control;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod style;

pub use error::{Error, Result};
