//! Deterministic CSV and SVG emission.
//!
//! Floats are printed with 17 significant digits so values round-trip
//! losslessly and artifact bytes are reproducible; SVG output uses a fixed
//! viewport and carries no timestamps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::diffusion::Trajectory;
use crate::error::{Error, Result};

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 400.0;
const SVG_MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// 17 significant digits; parses back to the identical f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one CSV with all trajectories: columns `seed, step, x0.., u0.., terminal_cost`.
/// The control columns of the final state of each trajectory stay empty.
pub fn write_trajectories_csv(path: &Path, runs: &[(u64, &Trajectory)]) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::invalid("no trajectories to write"));
    }
    let dim = runs[0].1.states[0].dim();
    let mut out = String::from("seed,step");
    for i in 0..dim {
        write!(out, ",x{i}").unwrap();
    }
    for i in 0..dim {
        write!(out, ",u{i}").unwrap();
    }
    out.push_str(",terminal_cost\n");

    for (seed, traj) in runs {
        for (step, state) in traj.states.iter().enumerate() {
            write!(out, "{seed},{step}").unwrap();
            for v in state.values.iter() {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            if step < traj.controls.len() {
                for v in traj.controls[step].iter() {
                    out.push(',');
                    out.push_str(&format_f64(*v));
                }
            } else {
                for _ in 0..dim {
                    out.push(',');
                }
            }
            out.push(',');
            out.push_str(&format_f64(traj.costs[step]));
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Emit a deterministic SVG line plot plus a companion CSV of the plotted
/// series. Series are `(label, y-values over step index)`. Returns the SVG path.
pub fn emit_plot_data(series: &[(String, Vec<f64>)], svg_path: &Path) -> Result<PathBuf> {
    if series.is_empty() || series.iter().all(|(_, ys)| ys.is_empty()) {
        return Err(Error::invalid("nothing to plot"));
    }

    // Companion CSV.
    let max_len = series.iter().map(|(_, ys)| ys.len()).max().unwrap();
    let mut csv = String::from("step");
    for (label, _) in series {
        write!(csv, ",{label}").unwrap();
    }
    csv.push('\n');
    for step in 0..max_len {
        write!(csv, "{step}").unwrap();
        for (_, ys) in series {
            csv.push(',');
            if let Some(v) = ys.get(step) {
                csv.push_str(&format_f64(*v));
            }
        }
        csv.push('\n');
    }
    let csv_path = svg_path.with_extension("csv");
    std::fs::write(&csv_path, csv)?;

    // Plot bounds.
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, ys) in series {
        for y in ys {
            y_min = y_min.min(*y);
            y_max = y_max.max(*y);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err(Error::invalid("plot data contains non-finite values"));
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let x_max = (max_len - 1).max(1) as f64;
    let plot_w = SVG_WIDTH - 2.0 * SVG_MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * SVG_MARGIN;
    let to_x = |step: f64| SVG_MARGIN + step / x_max * plot_w;
    let to_y = |v: f64| SVG_HEIGHT - SVG_MARGIN - (v - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">"
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = SVG_MARGIN,
        b = SVG_HEIGHT - SVG_MARGIN,
        r = SVG_WIDTH - SVG_MARGIN,
        t = SVG_MARGIN,
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{m}\" y=\"{y}\" font-size=\"11\" font-family=\"monospace\">{lo:.4e} .. {hi:.4e}</text>",
        m = SVG_MARGIN,
        y = SVG_MARGIN - 8.0,
        lo = y_min,
        hi = y_max,
    )
    .unwrap();

    for (idx, (label, ys)) in series.iter().enumerate() {
        if ys.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let mut points = String::new();
        for (step, y) in ys.iter().enumerate() {
            write!(points, "{:.2},{:.2} ", to_x(step as f64), to_y(*y)).unwrap();
        }
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\" font-family=\"monospace\" fill=\"{color}\">{label}</text>",
            x = SVG_WIDTH - SVG_MARGIN + 4.0,
            y = SVG_MARGIN + 14.0 * idx as f64,
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    std::fs::write(svg_path, svg)?;
    Ok(svg_path.to_path_buf())
}

/// Plot the terminal-cost column of an emitted trajectories CSV, one series
/// per seed.
pub fn plot_trajectories_csv(csv_path: &Path, svg_path: &Path) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty trajectories CSV"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let cost_col = columns
        .iter()
        .position(|c| *c == "terminal_cost")
        .ok_or_else(|| Error::invalid("CSV has no terminal_cost column"))?;

    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::invalid(format!(
                "CSV row {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                columns.len()
            )));
        }
        let seed = fields[0];
        let cost: f64 = fields[cost_col]
            .parse()
            .map_err(|_| Error::invalid(format!("bad cost on row {}", lineno + 2)))?;
        let label = format!("seed {seed}");
        match series.last_mut() {
            Some((l, ys)) if *l == label => ys.push(cost),
            _ => series.push((label, vec![cost])),
        }
    }
    emit_plot_data(&series, svg_path)
}

/// Load a plain numeric CSV (no header) as a matrix.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|p| {
                p.trim().parse().map_err(|_| {
                    Error::invalid(format!(
                        "{}: row {}: cannot parse \"{}\"",
                        path.display(),
                        lineno + 1,
                        p.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::invalid(format!(
                    "{}: ragged rows ({} vs {})",
                    path.display(),
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: empty matrix", path.display())));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
