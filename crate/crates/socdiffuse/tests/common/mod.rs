//! Oracle helpers for the integration suites, implemented independently of
//! the library code paths they check.

use nalgebra::DVector;

/// Trapezoid-rule posterior mean `E[X0 | X = x]` for a 1-D isotropic mixture
/// prior under `x = a x0 + b eps`.
pub fn posterior_mean_quadrature(
    components: &[(f64, f64, f64)], // (weight, mean, var)
    a: f64,
    b: f64,
    x: f64,
) -> f64 {
    let (lo, hi, n) = (-14.0, 14.0, 280_000usize);
    let h = (hi - lo) / n as f64;
    let joint = |x0: f64| -> f64 {
        let prior: f64 = components
            .iter()
            .map(|(w, m, v)| {
                w * (-(x0 - m) * (x0 - m) / (2.0 * v)).exp()
                    / (2.0 * std::f64::consts::PI * v).sqrt()
            })
            .sum();
        prior * (-(x - a * x0) * (x - a * x0) / (2.0 * b * b)).exp()
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let x0 = lo + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let f = joint(x0);
        num += w * f * x0;
        den += w * f;
    }
    num / den
}

/// Least-squares slope of `ln y` vs `ln x`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

pub fn bits_equal(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Relative deviation with a floor on the denominator.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-9)
}
