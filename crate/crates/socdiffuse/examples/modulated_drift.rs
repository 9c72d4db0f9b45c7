//! The drift-modulated problem `dX = [X + u] dt`: closed-form state and
//! costate against the shooting boundary-value oracle, point by point.
//!
//! ```bash
//! cargo run --example modulated_drift
//! ```

use nalgebra::{DMatrix, DVector};
use socdiffuse::control::{
    modulated_solution, shooting_bvp_solve, solve_terminal_state_prop2, DriftMode, LqInstance,
};
use socdiffuse::style::Gamma;

fn main() -> socdiffuse::Result<()> {
    let instance = LqInstance::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        DVector::from_element(1, 1.0),
        0.0,
        Gamma::Finite(1.0),
        DriftMode::StatePlusControl,
    )?;

    let x1 = solve_terminal_state_prop2(&instance)?;
    println!("scalar instance A = 1, y1 = 0, x0 = 1, gamma = 1");
    println!("terminal state x1 = {:.12}  (2e/(e^2+1) = 1/cosh(1))", x1[0]);

    let oracle = shooting_bvp_solve(&instance, 11)?;
    println!("\n{:>6} {:>14} {:>14} {:>14} {:>14}", "t", "x(t)", "shoot x", "p(t)", "shoot p");
    for (i, t) in oracle.times().iter().enumerate() {
        let (x_t, p_t, _) = modulated_solution(&instance, *t)?;
        println!(
            "{t:>6.2} {:>14.8} {:>14.8} {:>14.8} {:>14.8}",
            x_t[0],
            oracle.states()[i][0],
            p_t[0],
            oracle.costates()[i][0],
        );
    }

    // Zero weight: uncontrolled exponential growth.
    let free = LqInstance::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        DVector::from_element(1, 1.0),
        0.0,
        Gamma::Finite(0.0),
        DriftMode::StatePlusControl,
    )?;
    let (x_end, p_end, _) = modulated_solution(&free, 1.0)?;
    println!("\ngamma = 0: x(1) = {:.6} (= e), p = {}", x_end[0], p_end[0]);
    Ok(())
}
