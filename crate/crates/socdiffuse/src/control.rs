//! Closed-form controllers, their value functions, and the independent
//! numerical machinery that checks them: an HJB residual evaluator, a
//! shooting-method boundary-value solver, and Euler/Euler-Maruyama
//! simulation of controlled dynamics.
//!
//! This module lives on the substituted clock where `t0 -> 1` flows towards
//! data. Conversion from the sampler's step index happens only through
//! [`control_time_from_step`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{State, Trajectory};
use crate::error::{Error, Result};
use crate::style::{Gamma, TerminalCost};

/// Relative rank tolerance of the pseudoinverse path: singular values below
/// `1e-10 * sigma_max` are treated as zero.
const PINV_RANK_TOL: f64 = 1e-10;

/// Shooting root-finder parameters.
const SHOOTING_MAX_ITERS: usize = 100;
const SHOOTING_TOL: f64 = 1e-10;

/// Whether the state enters the drift (`dX = [X + u] dt`) or only the
/// control does (`dX = u dt`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMode {
    PureControl,
    StatePlusControl,
}

/// A bundled linear-quadratic control problem: linear extractor `A`, feature
/// target `y1`, start `(x0, t0)`, terminal weight and drift mode.
#[derive(Debug, Clone)]
pub struct LqInstance {
    pub extractor_matrix: DMatrix<f64>,
    pub target: DVector<f64>,
    pub initial_state: DVector<f64>,
    pub initial_time: f64,
    pub gamma: Gamma,
    pub drift_mode: DriftMode,
}

impl LqInstance {
    pub fn new(
        extractor_matrix: DMatrix<f64>,
        target: DVector<f64>,
        initial_state: DVector<f64>,
        initial_time: f64,
        gamma: Gamma,
        drift_mode: DriftMode,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&initial_time) {
            return Err(Error::invalid(format!(
                "initial time {initial_time} must lie in [0, 1)"
            )));
        }
        if extractor_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("extractor matrix contains non-finite entries"));
        }
        if extractor_matrix.ncols() != initial_state.len() {
            return Err(Error::invalid(format!(
                "extractor expects dimension {}, state has {}",
                extractor_matrix.ncols(),
                initial_state.len()
            )));
        }
        if extractor_matrix.nrows() != target.len() {
            return Err(Error::invalid(format!(
                "target feature dimension {} does not match extractor rows {}",
                target.len(),
                extractor_matrix.nrows()
            )));
        }
        Ok(Self {
            extractor_matrix,
            target,
            initial_state,
            initial_time,
            gamma,
            drift_mode,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }
}

/// The single clock conversion: sampler step `t` (counting `T` down to `0`,
/// data at `0`) maps to the control clock where data sits at `1`.
pub fn control_time_from_step(step: usize, num_steps: usize) -> f64 {
    1.0 - step as f64 / num_steps as f64
}

/// Bridge controller steering towards a fixed terminal point: the hard
/// constraint limit is `(x1 - x)/(1 - t)`, the finite-weight form
/// `gamma (x1 - x)/(1 + gamma (1 - t))`.
pub fn bridge_controller(
    x: &DVector<f64>,
    t: f64,
    x1: &DVector<f64>,
    gamma: Gamma,
) -> Result<DVector<f64>> {
    if t >= 1.0 {
        return Err(Error::SingularTime { t });
    }
    if x1.len() != x.len() {
        return Err(Error::invalid("terminal point dimension mismatch"));
    }
    let pull = x1 - x;
    Ok(match gamma {
        Gamma::Infinite => pull / (1.0 - t),
        Gamma::Finite(g) => pull * (g / (1.0 + g * (1.0 - t))),
    })
}

/// Style-feature controller. The hard-constraint limit is
/// `pinv(A) (y1 - A x)/(1 - t)` with the Moore-Penrose pseudoinverse; the
/// finite-weight costate solve `-(I/gamma + A^T A (1-t))^{-1} (A^T A x - A^T y1)`
/// is always well posed.
pub fn style_controller(
    x: &DVector<f64>,
    t: f64,
    a: &DMatrix<f64>,
    y1: &DVector<f64>,
    gamma: Gamma,
) -> Result<DVector<f64>> {
    if t >= 1.0 {
        return Err(Error::SingularTime { t });
    }
    if a.ncols() != x.len() || a.nrows() != y1.len() {
        return Err(Error::invalid("extractor/state/target dimensions inconsistent"));
    }
    match gamma {
        Gamma::Infinite => {
            let pinv = pseudo_inverse(a)?;
            Ok(pinv * (y1 - a * x) / (1.0 - t))
        }
        Gamma::Finite(g) => {
            if g == 0.0 {
                return Ok(DVector::zeros(x.len()));
            }
            let d = x.len();
            let ata = a.transpose() * a;
            let lhs = DMatrix::identity(d, d) / g + &ata * (1.0 - t);
            let rhs = &ata * x - a.transpose() * y1;
            let p = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::LinearSolve("finite-gamma costate system singular".into()))?;
            Ok(-p)
        }
    }
}

fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    svd.pseudo_inverse(PINV_RANK_TOL * sigma_max.max(1e-300))
        .map_err(|e| Error::LinearSolve(e.to_string()))
}

/// Terminal state of the drift-modulated problem, obtained by evaluating the
/// closed-form trajectory at `t = 1` and solving the linear self-consistency
/// equation `x1 = e x0 - (gamma/2)(e^2 - 1) A^T (A x1 - y1)`. Requires the
/// state-plus-control mode, finite weight and `t0 = 0`.
pub fn solve_terminal_state_prop2(instance: &LqInstance) -> Result<DVector<f64>> {
    if instance.drift_mode != DriftMode::StatePlusControl {
        return Err(Error::invalid(
            "terminal-state solve applies to the state-plus-control drift mode",
        ));
    }
    if instance.initial_time != 0.0 {
        return Err(Error::invalid(
            "the closed form is pinned to t0 = 0; use the shooting solver for general t0",
        ));
    }
    let g = match instance.gamma {
        Gamma::Finite(g) => g,
        Gamma::Infinite => {
            return Err(Error::invalid("terminal-state solve requires a finite weight"))
        }
    };
    let e = std::f64::consts::E;
    let c = 0.5 * g * (e * e - 1.0);
    let a = &instance.extractor_matrix;
    let d = instance.state_dim();
    let lhs = DMatrix::identity(d, d) + a.transpose() * a * c;
    let rhs = &instance.initial_state * e + a.transpose() * &instance.target * c;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearSolve("terminal self-consistency system singular".into()))
}

/// Closed-form state, costate and control of the drift-modulated problem at
/// time `t`:
/// `x_t = x0 e^t - r e^{1+t} + r e^{1-t}`, `p_t = 2 r e^{1-t}`, `u = -p_t`,
/// with `r = (gamma/2) A^T (A x1 - y1)` and `x1` from
/// [`solve_terminal_state_prop2`].
pub fn modulated_solution(
    instance: &LqInstance,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if !(instance.initial_time..=1.0).contains(&t) {
        return Err(Error::invalid(format!(
            "time {t} outside [{}, 1]",
            instance.initial_time
        )));
    }
    let g = match instance.gamma {
        Gamma::Finite(g) => g,
        Gamma::Infinite => {
            return Err(Error::invalid("modulated closed form requires a finite weight"))
        }
    };
    let x1 = solve_terminal_state_prop2(instance)?;
    let a = &instance.extractor_matrix;
    let r = a.transpose() * (a * &x1 - &instance.target) * (0.5 * g);
    let et = t.exp();
    let x_t = &instance.initial_state * et - &r * (1.0 + t).exp() + &r * (1.0 - t).exp();
    let p_t = r * (2.0 * (1.0 - t).exp());
    let u_t = -&p_t;
    Ok((x_t, p_t, u_t))
}

type ScalarField = dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync;
type VectorField = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;

/// A candidate value function with optional analytic derivatives; missing
/// derivatives fall back to central differences.
pub struct ValueFunction {
    value: Box<ScalarField>,
    gradient: Option<Box<VectorField>>,
    time_derivative: Option<Box<ScalarField>>,
}

impl ValueFunction {
    pub fn new(value: impl Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(value),
            gradient: None,
            time_derivative: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn with_time_derivative(
        mut self,
        dt: impl Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.time_derivative = Some(Box::new(dt));
        self
    }

    pub fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        (self.value)(x, t)
    }

    pub fn gradient(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        if let Some(g) = &self.gradient {
            return g(x, t);
        }
        let mut out = DVector::zeros(x.len());
        for j in 0..x.len() {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            out[j] = (self.value(&xp, t) - self.value(&xm, t)) / (2.0 * h);
        }
        out
    }

    pub fn time_derivative(&self, x: &DVector<f64>, t: f64) -> f64 {
        if let Some(dt) = &self.time_derivative {
            return dt(x, t);
        }
        let h = 1e-6 * (1.0 + t.abs());
        (self.value(x, t + h) - self.value(x, t - h)) / (2.0 * h)
    }
}

/// Value function of the bridge problem, `||x1 - x||^2 / (2 (1 - t))`, with
/// analytic derivatives.
pub fn bridge_value_function(x1: DVector<f64>) -> ValueFunction {
    let x1_grad = x1.clone();
    let x1_dt = x1.clone();
    ValueFunction::new(move |x, t| (&x1 - x).norm_squared() / (2.0 * (1.0 - t)))
        .with_gradient(move |x, t| (x - &x1_grad) / (1.0 - t))
        .with_time_derivative(move |x, t| {
            (&x1_dt - x).norm_squared() / (2.0 * (1.0 - t) * (1.0 - t))
        })
}

/// Signed residual of the HJB equation with transient cost `||u||^2 / 2`;
/// zero for the true value function.
///
/// Pure control: `dV/dt - ||grad V||^2 / 2`.
/// State plus control: `dV/dt - ||grad V||^2 / 2 + (grad V)^T x`.
pub fn hjb_residual(v: &ValueFunction, x: &DVector<f64>, t: f64, mode: DriftMode) -> Result<f64> {
    let dvdt = v.time_derivative(x, t);
    let grad = v.gradient(x, t);
    if !dvdt.is_finite() || !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::numerical(format!(
            "value-function derivatives non-finite at t = {t}"
        )));
    }
    let base = dvdt - 0.5 * grad.norm_squared();
    Ok(match mode {
        DriftMode::PureControl => base,
        DriftMode::StatePlusControl => base + grad.dot(x),
    })
}

/// Shooting solution of the two-point boundary value problem on a uniform
/// time grid.
#[derive(Debug, Clone)]
pub struct CostateSolution {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    costates: Vec<DVector<f64>>,
}

impl CostateSolution {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn costates(&self) -> &[DVector<f64>] {
        &self.costates
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty grid")
    }

    /// State at `t`, linearly interpolated between grid nodes.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        self.interpolate(&self.states, t)
    }

    /// Costate at `t`, linearly interpolated between grid nodes.
    pub fn costate_at(&self, t: f64) -> DVector<f64> {
        self.interpolate(&self.costates, t)
    }

    /// The minimum-principle control `u = -p`.
    pub fn control_at(&self, t: f64) -> DVector<f64> {
        -self.costate_at(t)
    }

    fn interpolate(&self, series: &[DVector<f64>], t: f64) -> DVector<f64> {
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        let h = (t1 - t0) / (self.times.len() - 1) as f64;
        let pos = ((t - t0) / h).clamp(0.0, (self.times.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.times.len() - 2);
        let frac = pos - i as f64;
        &series[i] * (1.0 - frac) + &series[i + 1] * frac
    }
}

/// Solve the two-point boundary value problem of the minimum principle by
/// shooting on the initial costate: integrate the Hamiltonian system
/// (`dx = -p`, `dp = 0` in pure-control mode; `dx = x - p`, `dp = -p` with
/// drift modulation) forward with RK4 and drive the terminal defect
/// `p(1) - gamma A^T (A x(1) - y1)` to zero with a damped Newton iteration
/// (finite-difference Jacobian, 100-iteration cap, residual tolerance 1e-10).
pub fn shooting_bvp_solve(instance: &LqInstance, grid_points: usize) -> Result<CostateSolution> {
    let g = match instance.gamma {
        Gamma::Finite(g) => g,
        Gamma::Infinite => {
            return Err(Error::invalid("shooting requires a finite terminal weight"))
        }
    };
    if grid_points < 2 {
        return Err(Error::invalid("shooting grid needs at least two nodes"));
    }
    let d = instance.state_dim();
    let a = &instance.extractor_matrix;

    let integrate = |p0: &DVector<f64>| -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let h = (1.0 - instance.initial_time) / (grid_points - 1) as f64;
        let deriv = |x: &DVector<f64>, p: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            match instance.drift_mode {
                DriftMode::PureControl => (-p, DVector::zeros(d)),
                DriftMode::StatePlusControl => (x - p, -p),
            }
        };
        let mut xs = Vec::with_capacity(grid_points);
        let mut ps = Vec::with_capacity(grid_points);
        let mut x = instance.initial_state.clone();
        let mut p = p0.clone();
        xs.push(x.clone());
        ps.push(p.clone());
        for _ in 1..grid_points {
            let (k1x, k1p) = deriv(&x, &p);
            let (k2x, k2p) = deriv(&(&x + &k1x * (h / 2.0)), &(&p + &k1p * (h / 2.0)));
            let (k3x, k3p) = deriv(&(&x + &k2x * (h / 2.0)), &(&p + &k2p * (h / 2.0)));
            let (k4x, k4p) = deriv(&(&x + &k3x * h), &(&p + &k3p * h));
            x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            xs.push(x.clone());
            ps.push(p.clone());
        }
        (xs, ps)
    };

    let residual = |p0: &DVector<f64>| -> DVector<f64> {
        let (xs, ps) = integrate(p0);
        let x1 = xs.last().unwrap();
        let p1 = ps.last().unwrap();
        p1 - a.transpose() * (a * x1 - &instance.target) * g
    };

    let mut p0 = DVector::zeros(d);
    let mut f = residual(&p0);
    let mut iterations = 0;
    while f.amax() > SHOOTING_TOL {
        iterations += 1;
        if iterations > SHOOTING_MAX_ITERS {
            return Err(Error::ConvergenceFailure {
                iterations: SHOOTING_MAX_ITERS,
                residual: f.amax(),
            });
        }
        // Finite-difference Jacobian of the terminal defect.
        let mut jac = DMatrix::zeros(d, d);
        let delta = 1e-7 * (1.0 + p0.norm());
        for j in 0..d {
            let mut perturbed = p0.clone();
            perturbed[j] += delta;
            let fj = residual(&perturbed);
            jac.set_column(j, &((fj - &f) / delta));
        }
        let step = jac
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::LinearSolve("shooting Jacobian singular".into()))?;
        // Damped update: halve until the defect shrinks.
        let mut alpha = 1.0;
        let norm0 = f.norm();
        loop {
            let candidate = &p0 + &step * alpha;
            let fc = residual(&candidate);
            if fc.norm() <= (1.0 - 1e-4 * alpha) * norm0 || alpha < 1e-6 {
                p0 = candidate;
                f = fc;
                break;
            }
            alpha *= 0.5;
        }
    }

    let (states, costates) = integrate(&p0);
    let h = (1.0 - instance.initial_time) / (grid_points - 1) as f64;
    let times = (0..grid_points)
        .map(|i| instance.initial_time + i as f64 * h)
        .collect();
    Ok(CostateSolution { times, states, costates })
}

/// Euler (or Euler-Maruyama, when a noise source is supplied) integration of
/// `dX = [v + u] dt (+ dW)` on a uniform grid from `t0` to `1 - dt`; the
/// singular last step at `t = 1` is never taken. Controls and per-state
/// terminal costs are recorded; state time indices count steps remaining.
pub fn simulate_controlled<F>(
    mut controller: F,
    x0: &DVector<f64>,
    t0: f64,
    dt: f64,
    drift_mode: DriftMode,
    mut noise: Option<&mut ChaCha8Rng>,
    cost: Option<&TerminalCost>,
) -> Result<Trajectory>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    if dt <= 0.0 {
        return Err(Error::invalid("step size must be positive"));
    }
    if t0 >= 1.0 {
        return Err(Error::invalid("start time must precede the terminal time"));
    }
    let n_steps = (((1.0 - t0) / dt).round() as usize).saturating_sub(1);
    let eval_cost = |x: &DVector<f64>| -> Result<f64> {
        match cost {
            Some(c) => c.cost(x),
            None => Ok(0.0),
        }
    };

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut controls = Vec::with_capacity(n_steps);
    let mut costs = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    states.push(State::new(x.clone(), n_steps)?);
    costs.push(eval_cost(&x)?);

    for n in 0..n_steps {
        let t = t0 + n as f64 * dt;
        let u = controller(&x, t)?;
        let mut drift = match drift_mode {
            DriftMode::PureControl => u.clone(),
            DriftMode::StatePlusControl => &x + &u,
        };
        drift *= dt;
        let mut next = &x + drift;
        if let Some(rng) = noise.as_deref_mut() {
            let root_dt = dt.sqrt();
            for v in next.iter_mut() {
                *v += root_dt * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::AbortedTrajectory {
                step: n,
                last_state: x.iter().copied().collect(),
            });
        }
        controls.push(u);
        costs.push(eval_cost(&next)?);
        states.push(State::new(next.clone(), n_steps - n - 1)?);
        x = next;
    }

    Trajectory::new(states, controls, costs)
}
