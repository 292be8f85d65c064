//! Prices a European call under Bates with Merton and with Kou jumps, both
//! spatial schemes, against the Monte Carlo reference.

use hybridjd::cir_tree::{CirParams, TimeGrid};
use hybridjd::fd_ops::{Scheme, SpatialGrid};
use hybridjd::hybrid::{default_half_width, price, SchemeConfig};
use hybridjd::levy::JumpLaw;
use hybridjd::mc_oracle::{price_mc, McConfig};
use hybridjd::models::{to_reference, transform_payoff, BatesParams};

fn main() -> Result<(), hybridjd::Error> {
    let maturity = 1.0;
    let strike = 1.0;
    let cir = CirParams::new(2.0, 0.04, 0.2, 0.04)?;

    let laws = [
        ("Merton(-0.1, 0.15), lambda=0.2", JumpLaw::Merton {
            lambda: 0.2,
            mean: -0.1,
            std: 0.15,
        }),
        ("Kou(p=0.4, eta+=10, eta-=5), lambda=0.3", JumpLaw::Kou {
            lambda: 0.3,
            up_prob: 0.4,
            eta_up: 10.0,
            eta_down: 5.0,
        }),
    ];

    for (label, law) in laws {
        let params = BatesParams::bates(1.0, 0.05, 0.0, -0.5, cir, law);
        let model = to_reference(&params)?;
        let payoff = transform_payoff(|s| (s - strike).max(0.0), &model, maturity, true);

        let grid = TimeGrid::new(maturity, 200)?;
        let half_width = default_half_width(&model, maturity);
        let spatial = SpatialGrid::centered_at(model.x0(), 0.01, half_width)?;

        println!("Bates call with {label}");
        for scheme in [Scheme::Centered, Scheme::Upwind] {
            let config = SchemeConfig {
                scheme,
                grid,
                spatial,
                tail_tol: None,
                diagnostics: true,
            };
            let result = price(&model, &payoff, &config)?;
            let d = result.diagnostics.unwrap();
            println!(
                "  {scheme:>10}: value {:.8}  |B| {:.6} (bound {:.6})",
                result.value, d.b_norm, d.b_norm_bound
            );
        }

        let mc = McConfig {
            paths: 400_000,
            substeps: 64,
            seed: 42,
            antithetic: true,
        };
        let est = price_mc(&model, &payoff, &TimeGrid::new(maturity, 1)?, &mc)?;
        println!(
            "  {:>10}: value {:.8}  +/- {:.2e} (95% CI, {} paths)",
            "mc", est.mean, est.ci95, est.paths
        );
        println!();
    }
    Ok(())
}
