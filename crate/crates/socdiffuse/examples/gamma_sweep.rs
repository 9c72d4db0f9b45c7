//! Convergence of the finite-weight controller to the hard-constraint
//! limit: the gap shrinks like 1/gamma (log-log slope -1).
//!
//! ```bash
//! cargo run --example gamma_sweep
//! ```

use nalgebra::{DMatrix, DVector};
use socdiffuse::control::style_controller;
use socdiffuse::experiments::log_log_slope;
use socdiffuse::style::Gamma;

fn main() -> socdiffuse::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let y1 = DVector::from_vec(vec![1.0, -1.0]);
    let x = DVector::from_vec(vec![0.3, 0.7]);
    let t = 0.25;

    let u_inf = style_controller(&x, t, &a, &y1, Gamma::Infinite)?;
    println!("hard-constraint control u_inf = ({:+.6}, {:+.6})\n", u_inf[0], u_inf[1]);

    let gammas: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let mut gaps = Vec::new();
    println!("{:>10} {:>16}", "gamma", "||u_g - u_inf||");
    for g in &gammas {
        let u = style_controller(&x, t, &a, &y1, Gamma::Finite(*g))?;
        let gap = (u - &u_inf).norm();
        println!("{g:>10.0e} {gap:>16.6e}");
        gaps.push(gap);
    }
    println!("\nlog-log slope: {:+.4} (expected -1)", log_log_slope(&gammas, &gaps));
    Ok(())
}
