//! End-to-end acceptance checks, one test per claim the engine is built
//! around. Each test prints a single PASS line with the measured quantities
//! next to the tolerance it was held to.

use std::process::Command;

use hybridjd::cir_tree::{build_lattice, CirParams, TimeGrid};
use hybridjd::convergence::fit_loglog;
use hybridjd::fd_ops::{
    assemble_implicit, assemble_jump, inverse_norm_estimate, jump_norm_bound, jump_norm_estimate,
    Scheme, SpatialGrid,
};
use hybridjd::hybrid::{default_half_width, price, price_with_layer, SchemeConfig};
use hybridjd::levy::{build_quadrature, JumpLaw};
use hybridjd::mc_oracle::{price_mc, McConfig};
use hybridjd::models::{to_reference, transform_payoff, BatesParams, ReferenceModel};

const MATURITY: f64 = 1.0;

fn standard_cir() -> CirParams {
    CirParams::new(2.0, 0.04, 0.2, 0.04).unwrap()
}

fn heston_model() -> ReferenceModel {
    to_reference(&BatesParams::heston(1.0, 0.05, 0.0, -0.5, standard_cir())).unwrap()
}

fn bates_merton_model() -> ReferenceModel {
    let law = JumpLaw::Merton {
        lambda: 0.2,
        mean: -0.1,
        std: 0.15,
    };
    to_reference(&BatesParams::bates(1.0, 0.05, 0.0, -0.5, standard_cir(), law)).unwrap()
}

fn scheme_config(scheme: Scheme, model: &ReferenceModel, steps: usize, dx: f64) -> SchemeConfig {
    let half_width = default_half_width(model, MATURITY);
    SchemeConfig {
        scheme,
        grid: TimeGrid::new(MATURITY, steps).unwrap(),
        spatial: SpatialGrid::centered_at(model.x0(), dx, half_width).unwrap(),
        tail_tol: None,
        diagnostics: false,
    }
}

#[test]
fn c01_tree_weak_convergence_is_first_order() {
    // Weak error of the variance lattice against the closed-form first and
    // second moments; fitted log-log slope must lie in [0.7, 1.3] with and
    // without the Feller condition.
    let cases = [
        ("feller satisfied", CirParams::new(2.0, 0.04, 0.2, 0.09).unwrap()),
        ("feller violated", CirParams::new(0.5, 0.04, 1.0, 0.09).unwrap()),
    ];
    let mut slopes = Vec::new();
    for (label, params) in cases {
        for (name, exact, f) in [
            ("y", params.mean(MATURITY), (|y: f64| y) as fn(f64) -> f64),
            ("y^2", params.second_moment(MATURITY), |y| y * y),
        ] {
            let mut hs = Vec::new();
            let mut errors = Vec::new();
            for n in [50usize, 100, 200, 400, 800, 1600] {
                let grid = TimeGrid::new(MATURITY, n).unwrap();
                let tree = build_lattice(&params, &grid);
                hs.push(grid.h());
                errors.push((tree.expectation(f) - exact).abs());
            }
            let slope = fit_loglog(&hs, &errors, 1e-10)
                .slope
                .unwrap_or_else(|| panic!("{label} f={name}: errors vanished, nothing to fit"));
            assert!(
                (0.7..=1.3).contains(&slope),
                "{label} f={name}: slope {slope} outside [0.7, 1.3] (errors {errors:?})"
            );
            slopes.push(format!("{label} f={name}: {slope:.3}"));
        }
    }
    println!("PASS tree weak order in [0.7, 1.3]: {}", slopes.join("; "));
}

#[test]
fn c02_local_moments_match_closed_forms() {
    // First moment exact to 1e-12 relative to 1 + |y| on every unclamped
    // node; second and third moments within 1e-10 relative on single-jump
    // nodes.
    for (label, params, steps) in [
        ("feller satisfied", CirParams::new(2.0, 0.04, 0.2, 0.04).unwrap(), 200),
        ("feller violated", CirParams::new(0.5, 0.04, 1.0, 0.09).unwrap(), 400),
    ] {
        let tree = build_lattice(&params, &TimeGrid::new(MATURITY, steps).unwrap());
        let report = tree.moment_report();
        assert!(report.single_jump_nodes > 0, "{label}: no single-jump nodes");
        assert!(
            report.max_m1_residual <= 1e-12,
            "{label}: m1 residual {}",
            report.max_m1_residual
        );
        assert!(
            report.max_m2_residual <= 1e-10,
            "{label}: m2 residual {}",
            report.max_m2_residual
        );
        assert!(
            report.max_m3_residual <= 1e-10,
            "{label}: m3 residual {}",
            report.max_m3_residual
        );
        println!(
            "PASS local moments ({label}): m1 {:.2e} <= 1e-12, m2 {:.2e} / m3 {:.2e} <= 1e-10 \
             over {} single-jump of {} nodes",
            report.max_m1_residual,
            report.max_m2_residual,
            report.max_m3_residual,
            report.single_jump_nodes,
            report.nodes
        );
    }
}

#[test]
fn c03_lattice_structure_across_parameters() {
    // Ten parameter sets with h <= 1/(2 kappa): no probability clamps, only
    // adjacent moves inside the single-jump band, and bounded up-steps below
    // it.
    let sets = [
        (2.0, 0.04, 0.2, 0.04),
        (2.0, 0.09, 0.3, 0.09),
        (0.5, 0.04, 1.0, 0.04),
        (1.0, 0.02, 0.5, 0.01),
        (3.0, 0.06, 0.25, 0.03),
        (1.5, 0.05, 0.4, 0.08),
        (0.8, 0.03, 0.6, 0.02),
        (2.5, 0.07, 0.35, 0.1),
        (4.0, 0.04, 0.3, 0.05),
        (1.2, 0.1, 0.8, 0.12),
    ];
    for (kappa, theta, sigma, y0) in sets {
        let params = CirParams::new(kappa, theta, sigma, y0).unwrap();
        let steps = 400;
        let grid = TimeGrid::new(MATURITY, steps).unwrap();
        assert!(grid.h() <= 1.0 / (2.0 * kappa));
        let tree = build_lattice(&params, &grid);
        let report = tree.regime_report();
        assert_eq!(report.clamp_count, 0, "clamps for {params:?}");
        assert_eq!(
            report.band_multi_jump, 0,
            "multi-jump nodes inside the band for {params:?}"
        );
        assert!(
            report.low_band_nodes == 0 || report.low_band_max_excess <= 1e-12,
            "low-band step excess {} for {params:?}",
            report.low_band_max_excess
        );
    }
    println!(
        "PASS lattice structure: 10 parameter sets at h = 1/400, zero clamps, \
         single jumps inside the band, bounded steps below it"
    );
}

#[test]
fn c04_operator_norms_within_stability_bounds() {
    // Sweep of drift, squared volatility, time step and mesh width: the
    // centered estimate of |A^-1|_2 stays below 1 + 1e-6, the upwind
    // |A^-1|_inf = 1 is certified, and |B| respects 1 + 2 lambda c_nu h in
    // the matching norm.
    let law = JumpLaw::Merton {
        lambda: 1.0,
        mean: 0.0,
        std: 1.0,
    };
    let mut worst_centered = 0.0f64;
    let mut worst_b_slack = f64::NEG_INFINITY;
    for scheme in [Scheme::Centered, Scheme::Upwind] {
        for h in [1e-3, 1e-2] {
            for dx in [0.01, 0.05, 0.1] {
                let grid = SpatialGrid::centered_at(0.0, dx, 2.0).unwrap();
                let quad = build_quadrature(&law, 1.0, dx, None).unwrap();
                let b = assemble_jump(&quad, h).unwrap();
                let b_norm = jump_norm_estimate(&b, scheme);
                let bound = jump_norm_bound(&b);
                assert!(
                    b_norm <= bound + 1e-6,
                    "{scheme} h={h} dx={dx}: |B| {b_norm} above {bound}"
                );
                worst_b_slack = worst_b_slack.max(b_norm - bound);
                for mu in [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0] {
                    for sigma2 in [1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0] {
                        let a = assemble_implicit(scheme, mu, sigma2, h, &grid).unwrap();
                        let (norm, certified) = inverse_norm_estimate(&a).unwrap();
                        match scheme {
                            Scheme::Centered => {
                                assert!(
                                    norm <= 1.0 + 1e-6,
                                    "centered mu={mu} sigma2={sigma2} h={h} dx={dx}: \
                                     |A^-1|_2 {norm}"
                                );
                                worst_centered = worst_centered.max(norm);
                            }
                            Scheme::Upwind => {
                                assert!(certified && norm == 1.0, "upwind certificate failed");
                            }
                        }
                    }
                }
            }
        }
    }
    println!(
        "PASS operator norms: worst centered |A^-1|_2 {worst_centered:.9} <= 1 + 1e-6, \
         upwind certified at 1, worst |B| slack {worst_b_slack:.2e} <= 1e-6"
    );
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let w = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * f(a + i as f64 * w);
    }
    sum * w / 3.0
}

#[test]
fn c05_quadrature_mass_defect_below_second_derivative_bound() {
    // |sum of weights - lambda| <= dx^2 / 12 * |nu''|_L1 for the standard
    // normal jump density, with the right-hand side integrated numerically
    // rather than taken from the closed form.
    let law = JumpLaw::Merton {
        lambda: 1.0,
        mean: 0.0,
        std: 1.0,
    };
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let second_derivative_mass = simpson(|x| ((x * x - 1.0) * pdf(x)).abs(), -10.0, 10.0, 100_000);
    let mut lines = Vec::new();
    for dx in [0.2, 0.1, 0.05, 0.025] {
        let quad = build_quadrature(&law, 1.0, dx, None).unwrap();
        let defect = (quad.total_mass() - 1.0).abs();
        let bound = dx * dx / 12.0 * second_derivative_mass;
        assert!(defect <= bound, "dx={dx}: defect {defect} above bound {bound}");
        lines.push(format!("dx={dx}: {defect:.1e} <= {bound:.1e}"));
    }
    println!(
        "PASS quadrature mass defect below (dx^2/12) |nu''|_L1 = {second_derivative_mass:.6} \
         numerically integrated: {}",
        lines.join("; ")
    );
}

#[test]
fn c06_constant_payoffs_price_to_one() {
    // The full backward recursion reproduces a constant payoff to 1e-10 for
    // both schemes and both models.
    for (label, model) in [("heston", heston_model()), ("bates", bates_merton_model())] {
        for scheme in [Scheme::Centered, Scheme::Upwind] {
            let config = scheme_config(scheme, &model, 50, 0.05);
            let result = price(&model, &|_x: f64, _y: f64| 1.0, &config).unwrap();
            assert!(
                (result.value - 1.0).abs() <= 1e-10,
                "{label} {scheme}: constant priced to {}",
                result.value
            );
        }
    }
    println!("PASS constant preservation: |price(1) - 1| <= 1e-10 for both schemes and models");
}

#[test]
fn c07_temporal_refinement_is_first_order() {
    // Richardson ratios |v(N) - v(2N)| / |v(2N) - v(4N)| on a smooth payoff
    // with the spatial grid held fixed; first order in the time step puts the
    // ratio near 2, accepted inside [1.5, 3.0].
    let model = bates_merton_model();
    let x0 = model.x0();
    let payoff = move |x: f64, _y: f64| (-(x - x0) * (x - x0)).exp();
    let spatial = SpatialGrid::new(x0, 0.01, 192).unwrap();
    let mut lines = Vec::new();
    for scheme in [Scheme::Centered, Scheme::Upwind] {
        let mut values = Vec::new();
        for n in [50usize, 100, 200, 400] {
            let config = SchemeConfig {
                scheme,
                grid: TimeGrid::new(MATURITY, n).unwrap(),
                spatial,
                tail_tol: None,
                diagnostics: false,
            };
            values.push(price(&model, &payoff, &config).unwrap().value);
        }
        for (i, n) in [50usize, 100].into_iter().enumerate() {
            let coarse = (values[i] - values[i + 1]).abs();
            let fine = (values[i + 1] - values[i + 2]).abs();
            let ratio = coarse / fine;
            assert!(
                (1.5..=3.0).contains(&ratio),
                "{scheme} N={n}: Richardson ratio {ratio} outside [1.5, 3.0] ({values:?})"
            );
            lines.push(format!("{scheme} N={n}: {ratio:.3}"));
        }
    }
    println!("PASS temporal order, ratios in [1.5, 3.0]: {}", lines.join("; "));
}

#[test]
fn c08_spatial_refinement_matches_scheme_order() {
    // Self-convergence across mesh halvings with the step count fixed:
    // second order for centered in the interior l2 norm, first order for
    // upwind in the maximum norm.
    let model = heston_model();
    let x0 = model.x0();
    let payoff = move |x: f64, _y: f64| (-(x - x0) * (x - x0)).exp();
    let mut lines = Vec::new();
    for (scheme, band) in [(Scheme::Centered, (1.5, 2.6)), (Scheme::Upwind, (0.7, 1.3))] {
        let mut layers = Vec::new();
        for j in 0..4 {
            let config = SchemeConfig {
                scheme,
                grid: TimeGrid::new(MATURITY, 400).unwrap(),
                spatial: SpatialGrid::new(x0, 0.08 / (1 << j) as f64, 24 << j).unwrap(),
                tail_tol: None,
                diagnostics: false,
            };
            let (_, layer) = price_with_layer(&model, &payoff, &config, Some(0)).unwrap();
            layers.push((
                0.08 / (1 << j) as f64,
                24usize << j,
                layer.unwrap().node_values[0].clone(),
            ));
        }
        let mut dxs = Vec::new();
        let mut errors = Vec::new();
        for pair in layers.windows(2) {
            let (dx, hp, ref coarse) = pair[0];
            let fine = &pair[1].2;
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
            dxs.push(dx);
            errors.push(err);
        }
        let slope = fit_loglog(&dxs, &errors, 1e-12).slope.expect("slope");
        assert!(
            (band.0..=band.1).contains(&slope),
            "{scheme}: spatial slope {slope} outside [{}, {}] (errors {errors:?})",
            band.0,
            band.1
        );
        lines.push(format!("{scheme}: {slope:.3} in [{}, {}]", band.0, band.1));
    }
    println!("PASS spatial order: {}", lines.join("; "));
}

#[test]
fn c09_call_prices_agree_with_monte_carlo() {
    // European call, S0 = K = 1: the hybrid price must sit within three
    // Monte Carlo standard errors (1e6 paths, 64 substeps) for both schemes
    // and both models. The upwind runs use a finer mesh so the first-order
    // spatial bias stays below the statistical resolution.
    let mc = McConfig {
        paths: 1_000_000,
        substeps: 64,
        seed: 42,
        antithetic: false,
    };
    let grid = TimeGrid::new(MATURITY, 1).unwrap();
    let mut lines = Vec::new();
    for (label, model) in [("heston", heston_model()), ("bates", bates_merton_model())] {
        let payoff = transform_payoff(|s| (s - 1.0).max(0.0), &model, MATURITY, true);
        let est = price_mc(&model, &payoff, &grid, &mc).unwrap();
        for (scheme, dx) in [(Scheme::Centered, 0.01), (Scheme::Upwind, 0.0025)] {
            let config = scheme_config(scheme, &model, 200, dx);
            let value = price(&model, &payoff, &config).unwrap().value;
            let gap = (value - est.mean).abs();
            assert!(
                gap <= 3.0 * est.std_error,
                "{label} {scheme}: price {value} vs mc {} +/- {} (gap {gap})",
                est.mean,
                est.std_error
            );
            lines.push(format!(
                "{label} {scheme}: gap {gap:.2e} <= {:.2e}",
                3.0 * est.std_error
            ));
        }
    }
    println!("PASS call prices within 3 MC standard errors: {}", lines.join("; "));
}

#[test]
fn c10_discounted_asset_is_a_martingale() {
    // With the jump compensator on, the discounted asset must price back to
    // the spot within max(3 MC standard errors, 5e-3).
    let model = bates_merton_model();
    let payoff = transform_payoff(|s| s, &model, MATURITY, true);
    let mc = McConfig {
        paths: 100_000,
        substeps: 64,
        seed: 42,
        antithetic: false,
    };
    let est = price_mc(&model, &payoff, &TimeGrid::new(MATURITY, 1).unwrap(), &mc).unwrap();
    let tol = (3.0 * est.std_error).max(5e-3);
    let mut lines = Vec::new();
    for scheme in [Scheme::Centered, Scheme::Upwind] {
        let config = scheme_config(scheme, &model, 100, 0.01);
        let value = price(&model, &payoff, &config).unwrap().value;
        assert!(
            (value - model.s0()).abs() <= tol,
            "{scheme}: discounted asset priced to {value}, spot {} (tolerance {tol})",
            model.s0()
        );
        lines.push(format!("{scheme}: |{value:.6} - 1| <= {tol:.1e}"));
    }
    println!("PASS martingale check: {}", lines.join("; "));
}

#[test]
fn c11_outputs_are_bitwise_deterministic_across_threads() {
    // Identical configs and seeds must produce byte-identical CSV output no
    // matter the worker count.
    let config_text = "\
[market]
s0 = 1.0
rate = 0.05
rho = -0.5

[cir]
kappa = 2.0
theta = 0.04
sigma = 0.2
y0 = 0.04

[jumps]
kind = \"merton\"
lambda = 0.2
m = -0.1
delta = 0.15

[scheme]
scheme = \"centered\"
steps = 64
maturity = 1.0
dx = 0.02

[payoff]
kind = \"call\"
strike = 1.0

[mc]
paths = 20000
substeps = 1
seed = 9
";
    let dir = std::env::temp_dir().join(format!("hybridjd-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("determinism.toml");
    std::fs::write(&config_path, config_text).unwrap();

    let exe = env!("CARGO_BIN_EXE_hybridjd");
    let run = |subcommand: &str, threads: &str| {
        let output = Command::new(exe)
            .args([subcommand, "--config", config_path.to_str().unwrap(), "--threads", threads])
            .env_remove("HYBRIDJD_THREADS")
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{subcommand} --threads {threads} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        output.stdout
    };
    for subcommand in ["price", "mc-price", "tree-dump"] {
        let single = run(subcommand, "1");
        let multi = run(subcommand, "4");
        let again = run(subcommand, "4");
        assert_eq!(single, multi, "{subcommand}: thread count changed the output");
        assert_eq!(multi, again, "{subcommand}: repeated run changed the output");
        assert!(!single.is_empty());
    }
    std::fs::remove_dir_all(&dir).ok();
    println!("PASS determinism: price, mc-price and tree-dump byte-identical at 1 and 4 threads");
}
