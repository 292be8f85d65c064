//! Stability and consistency diagnostics: operator norms over a parameter
//! sweep, the jump-quadrature mass bound, and lattice moment residuals.

use hybridjd::cir_tree::{build_lattice, CirParams, TimeGrid};
use hybridjd::fd_ops::{
    assemble_implicit, assemble_jump, inverse_norm_estimate, jump_norm_bound,
    jump_norm_estimate, Scheme, SpatialGrid,
};
use hybridjd::levy::{build_quadrature, JumpLaw};

fn main() -> Result<(), hybridjd::Error> {
    let law = JumpLaw::Merton {
        lambda: 1.0,
        mean: 0.0,
        std: 1.0,
    };

    println!("operator norms (worst case over mu in [-1,1], sigma^2 in [1e-4,1]):");
    for scheme in [Scheme::Centered, Scheme::Upwind] {
        for h in [1e-3, 1e-2] {
            for dx in [0.01, 0.05, 0.1] {
                let grid = SpatialGrid::centered_at(0.0, dx, 2.0)?;
                let quad = build_quadrature(&law, 1.0, dx, None)?;
                let b = assemble_jump(&quad, h)?;
                let b_norm = jump_norm_estimate(&b, scheme);
                let b_bound = jump_norm_bound(&b);
                let mut worst_a = 0.0f64;
                for mu in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                    for sigma2 in [1e-4, 1e-2, 1.0] {
                        let a = assemble_implicit(scheme, mu, sigma2, h, &grid)?;
                        let (norm, _) = inverse_norm_estimate(&a)?;
                        worst_a = worst_a.max(norm);
                    }
                }
                println!(
                    "  {scheme:>10} h={h:<6} dx={dx:<5} |A^-1| {worst_a:.9}  |B| {b_norm:.9} (bound {b_bound:.9})"
                );
            }
        }
    }

    println!("\njump quadrature mass versus the second-derivative bound:");
    for dx in [0.2, 0.1, 0.05, 0.025] {
        let quad = build_quadrature(&law, 1.0, dx, None)?;
        let defect = (quad.total_mass() - law.lambda()).abs();
        println!(
            "  dx={dx:<6} |sum w - lambda| {defect:.3e}  bound {:.3e}",
            quad.quadrature_error_bound()
        );
    }

    println!("\nlattice moment residuals (kappa=2, theta=0.04, sigma=0.2, y0=0.04, N=200):");
    let params = CirParams::new(2.0, 0.04, 0.2, 0.04)?;
    let tree = build_lattice(&params, &TimeGrid::new(1.0, 200)?);
    let m = tree.moment_report();
    println!("  branch nodes       {}", m.nodes);
    println!("  single-jump nodes  {}", m.single_jump_nodes);
    println!("  max m1 residual    {:.3e}", m.max_m1_residual);
    println!("  max m2 residual    {:.3e}", m.max_m2_residual);
    println!("  max m3 residual    {:.3e}", m.max_m3_residual);
    let r = tree.regime_report();
    println!("  clamps {}  multi-jump nodes inside the single-jump band {}",
        r.clamp_count, r.band_multi_jump);
    Ok(())
}
