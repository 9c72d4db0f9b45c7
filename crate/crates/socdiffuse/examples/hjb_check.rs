//! Certify a candidate value function by its Hamilton-Jacobi-Bellman
//! residual: zero for the true bridge value function, exactly one for an
//! additively perturbed impostor.
//!
//! ```bash
//! cargo run --example hjb_check
//! ```

use nalgebra::DVector;
use socdiffuse::control::{bridge_value_function, hjb_residual, DriftMode, ValueFunction};

fn main() -> socdiffuse::Result<()> {
    let x1 = DVector::from_vec(vec![0.5, -0.5]);
    let v = bridge_value_function(x1.clone());

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
    println!("bridge value ||x1 - x||^2 / (2(1-t))");
    println!("max |residual| over a 20x20x10 grid: {worst:.3e}");

    // Shift the value function by t: the time derivative moves by one, so
    // the residual is exactly one everywhere.
    let (g, d) = (x1.clone(), x1.clone());
    let impostor = ValueFunction::new(move |x: &DVector<f64>, t: f64| {
        (&x1 - x).norm_squared() / (2.0 * (1.0 - t)) + t
    })
    .with_gradient(move |x, t| (x - &g) / (1.0 - t))
    .with_time_derivative(move |x, t| (&d - x).norm_squared() / (2.0 * (1.0 - t) * (1.0 - t)) + 1.0);
    let r = hjb_residual(
        &impostor,
        &DVector::from_vec(vec![1.0, 0.3]),
        0.4,
        DriftMode::PureControl,
    )?;
    println!("perturbed value V + t: residual = {r}");

    // A value function given only by its evaluator falls back to central
    // differences for both derivatives.
    let fd_only = ValueFunction::new({
        let x1 = DVector::from_vec(vec![0.5, -0.5]);
        move |x: &DVector<f64>, t: f64| (&x1 - x).norm_squared() / (2.0 * (1.0 - t))
    });
    let r = hjb_residual(
        &fd_only,
        &DVector::from_vec(vec![1.0, 0.3]),
        0.4,
        DriftMode::PureControl,
    )?;
    println!("finite-difference derivatives only: residual = {r:.3e}");
    Ok(())
}
