//! Temporal and spatial self-convergence of the hybrid scheme on a smooth
//! payoff, written as CSV data files plus a gnuplot script.

use std::fs;

use hybridjd::cir_tree::{CirParams, TimeGrid};
use hybridjd::convergence::fit_loglog;
use hybridjd::fd_ops::{Scheme, SpatialGrid};
use hybridjd::hybrid::{price, price_with_layer, SchemeConfig};
use hybridjd::models::{to_reference, BatesParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let maturity = 1.0;
    let cir = CirParams::new(2.0, 0.04, 0.2, 0.04)?;
    let params = BatesParams::heston(1.0, 0.05, 0.0, -0.5, cir);
    let model = to_reference(&params)?;
    let x0 = model.x0();
    let payoff = move |x: f64, _y: f64| (-(x - x0) * (x - x0)).exp();

    // Halving the time step with the spatial grid held fixed: the spatial
    // error cancels in the differences, so the ratio isolates the time order.
    let spatial = SpatialGrid::new(x0, 0.01, 192)?;
    let mut temporal = String::from("scheme,n_steps,value,diff,ratio\n");
    println!("temporal refinement (dx = 0.01 fixed):");
    for scheme in [Scheme::Centered, Scheme::Upwind] {
        let mut values = Vec::new();
        for n in [50usize, 100, 200, 400] {
            let config = SchemeConfig {
                scheme,
                grid: TimeGrid::new(maturity, n)?,
                spatial,
                tail_tol: None,
                diagnostics: false,
            };
            values.push((n, price(&model, &payoff, &config)?.value));
        }
        for (j, &(n, v)) in values.iter().enumerate() {
            let diff = values.get(j + 1).map(|&(_, w)| (v - w).abs());
            let ratio = match (diff, values.get(j + 2)) {
                (Some(d), Some(&(_, w2))) => {
                    let d2 = (values[j + 1].1 - w2).abs();
                    if d2 > 0.0 { Some(d / d2) } else { None }
                }
                _ => None,
            };
            let fmt = |o: Option<f64>| o.map_or(String::new(), |v| format!("{v}"));
            temporal.push_str(&format!("{scheme},{n},{v},{},{}\n", fmt(diff), fmt(ratio)));
            println!(
                "  {scheme:>10} N={n:<4} value {v:.9}  ratio {}",
                ratio.map_or("     -".into(), |r| format!("{r:.3}")),
            );
        }
    }
    fs::write("convergence_temporal.csv", temporal)?;

    // Halving dx with the step count held fixed; the layers are compared on
    // the shared coarse points over the interior window |x - x0| <= 1.
    let n_steps = 400;
    println!("\nspatial refinement (N = {n_steps} fixed, interior window 1.0):");
    let mut spatial_csv = String::from("scheme,dx,error,norm\n");
    for (scheme, norm_name) in [(Scheme::Centered, "l2"), (Scheme::Upwind, "linf")] {
        let mut layers = Vec::new();
        for j in 0..4 {
            let dx = 0.08 / (1 << j) as f64;
            let config = SchemeConfig {
                scheme,
                grid: TimeGrid::new(maturity, n_steps)?,
                spatial: SpatialGrid::new(x0, dx, 24 << j)?,
                tail_tol: None,
                diagnostics: false,
            };
            let (_, layer) = price_with_layer(&model, &payoff, &config, Some(0))?;
            layers.push((dx, 24 << j, layer.unwrap().node_values[0].clone()));
        }
        let mut dxs = Vec::new();
        let mut errors = Vec::new();
        for w in layers.windows(2) {
            let (dx, hp, ref coarse) = w[0];
            let fine = &w[1].2;
            let window = (1.0 / dx).floor() as usize;
            let mut err = 0.0f64;
            for m in 0..=2 * window {
                let i = hp - window + m;
                let diff = (coarse[i] - fine[2 * i]).abs();
                err = match scheme {
                    Scheme::Centered => err + diff * diff,
                    Scheme::Upwind => err.max(diff),
                };
            }
            if scheme == Scheme::Centered {
                err = (dx * err).sqrt();
            }
            spatial_csv.push_str(&format!("{scheme},{dx},{err},{norm_name}\n"));
            println!("  {scheme:>10} dx={dx:<5} |u_dx - u_dx/2|_{norm_name} = {err:.3e}");
            dxs.push(dx);
            errors.push(err);
        }
        match fit_loglog(&dxs, &errors, 1e-12).slope {
            Some(s) => println!("  {scheme:>10} fitted slope {s:.3}"),
            None => println!("  {scheme:>10} errors at the floor"),
        }
    }
    fs::write("convergence_spatial.csv", &spatial_csv)?;

    fs::write(
        "convergence_study.gp",
        "set logscale xy\n\
         set datafile separator ','\n\
         set xlabel 'dx'\n\
         set ylabel 'self-convergence error'\n\
         plot 'convergence_spatial.csv' every ::1 using 2:3 with linespoints title 'layer difference'\n",
    )?;
    println!("\nwrote convergence_temporal.csv, convergence_spatial.csv, convergence_study.gp");
    Ok(())
}
