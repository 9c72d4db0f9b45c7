//! Steer a state to a fixed terminal point with the bridge controller
//! `u = (x1 - x)/(1 - t)`, deterministically and under Brownian noise.
//!
//! ```bash
//! cargo run --example bridge_steering
//! ```

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socdiffuse::control::{bridge_controller, simulate_controlled, DriftMode};
use socdiffuse::style::Gamma;

fn main() -> socdiffuse::Result<()> {
    let x0 = DVector::from_vec(vec![1.0, -1.0]);
    let x1 = DVector::zeros(2);

    println!("deterministic steering from {:?} to the origin", x0.as_slice());
    println!("{:>10} {:>14}", "dt", "terminal error");
    for dt in [1e-2, 1e-3, 1e-4] {
        let traj = simulate_controlled(
            |x, t| bridge_controller(x, t, &x1, Gamma::Infinite),
            &x0,
            0.0,
            dt,
            DriftMode::PureControl,
            None,
            None,
        )?;
        let err = (&traj.terminal_state().values - &x1).norm();
        println!("{dt:>10.0e} {err:>14.6e}");
    }

    println!("\nsame controller, Brownian noise, 2000 seeds:");
    let n = 2000;
    let mut sum = DVector::zeros(2);
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = simulate_controlled(
            |x, t| bridge_controller(x, t, &x1, Gamma::Infinite),
            &x0,
            0.0,
            1e-3,
            DriftMode::PureControl,
            Some(&mut rng),
            None,
        )?;
        sum += &traj.terminal_state().values;
    }
    let mean = sum / n as f64;
    println!("terminal mean = ({:+.4}, {:+.4}), target = (0, 0)", mean[0], mean[1]);
    println!("the same control law holds under noise (certainty equivalence)");

    println!("\nfinite terminal weights soften the pull at t = 0:");
    for gamma in [1.0, 10.0, 1000.0] {
        let u = bridge_controller(&x0, 0.0, &x1, Gamma::Finite(gamma))?;
        println!("gamma = {gamma:>6}: u = ({:+.4}, {:+.4})", u[0], u[1]);
    }
    let u = bridge_controller(&x0, 0.0, &x1, Gamma::Infinite)?;
    println!("gamma =    inf: u = ({:+.4}, {:+.4})", u[0], u[1]);
    Ok(())
}
