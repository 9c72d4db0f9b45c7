//! Steer feature values instead of states: the controller
//! `u = pinv(A) (y1 - A x)/(1 - t)` drives `A x` to target features `y1`,
//! including the wide case `k < d` where infinitely many terminal states fit.
//!
//! ```bash
//! cargo run --example style_steering
//! ```

use nalgebra::{DMatrix, DVector};
use socdiffuse::control::{simulate_controlled, style_controller, DriftMode};
use socdiffuse::style::Gamma;

fn main() -> socdiffuse::Result<()> {
    // Invertible extractor: the terminal state is fully determined.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let y1 = DVector::from_vec(vec![1.0, 2.0]);
    let u = style_controller(&DVector::zeros(2), 0.0, &a, &y1, Gamma::Infinite)?;
    println!("invertible A, x = 0, t = 0: u = ({:.4}, {:.4})  (= A^-1 y1)", u[0], u[1]);

    let traj = simulate_controlled(
        |x, t| style_controller(x, t, &a, &y1, Gamma::Infinite),
        &DVector::from_vec(vec![-0.5, 0.8]),
        0.0,
        1e-3,
        DriftMode::PureControl,
        None,
        None,
    )?;
    let terminal = &traj.terminal_state().values;
    println!(
        "simulated terminal state  = ({:+.5}, {:+.5}), features = ({:+.5}, {:+.5})",
        terminal[0],
        terminal[1],
        (&a * terminal)[0],
        (&a * terminal)[1]
    );

    // Wide extractor, k = 1 and d = 4: only the feature is pinned down.
    let wide = DMatrix::from_row_slice(1, 4, &[1.0, -0.5, 0.25, 2.0]);
    let target = DVector::from_element(1, 1.5);
    println!("\nwide A (1x4), feature target {}", target[0]);
    for start in [
        DVector::from_vec(vec![0.1, -0.3, 0.8, -0.2]),
        DVector::from_vec(vec![-1.0, 0.5, 0.0, 0.4]),
    ] {
        let traj = simulate_controlled(
            |x, t| style_controller(x, t, &wide, &target, Gamma::Infinite),
            &start,
            0.0,
            1e-3,
            DriftMode::PureControl,
            None,
            None,
        )?;
        let terminal = &traj.terminal_state().values;
        println!(
            "start {:?} -> terminal feature {:+.5} (state {:+.3?})",
            start.as_slice(),
            (&wide * terminal)[0],
            terminal.as_slice(),
        );
    }
    println!("different starts reach different states with the same feature value");
    Ok(())
}
