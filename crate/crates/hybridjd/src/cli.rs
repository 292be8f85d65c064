//! Command-line interface: price, converge, diagnose, tree-dump, mc-price
//!
//! Every subcommand reads a TOML run configuration (`--config`), applies
//! `--set section.key=value` overrides plus the shortcut flags
//! (`--scheme`, `--steps`, `--dx`, `--half-width`, `--seed`), and emits CSV
//! on stdout or into `--output`. Parameter provenance travels with the data
//! as `#`-prefixed comment lines above the header row.
//!
//! Exit codes: `0` success, `1` configuration or usage error, `2` numerical
//! failure (including failed `diagnose` checks).
//!
//! Worker threads come from `--threads`, falling back to the
//! `HYBRIDJD_THREADS` environment variable; results are bitwise identical
//! for any thread count.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::cir_tree::{build_lattice, CirParams, TimeGrid};
use crate::config::{self, FileConfig, PayoffKind};
use crate::convergence::fit_loglog;
use crate::error::{Error, Result};
use crate::fd_ops::{assemble_implicit, assemble_jump, operator_norm_diagnostics, SpatialGrid};
use crate::hybrid;
use crate::levy::{build_quadrature, JumpLaw};
use crate::mc_oracle::price_mc;
use crate::models::to_reference;

#[derive(Debug, Parser)]
#[command(
    name = "hybridjd",
    version,
    about = "Hybrid tree / finite-difference pricer for jump-diffusions with stochastic volatility"
)]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config entry (repeatable), e.g. --set scheme.steps=400
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Drift discretization: centered or upwind
    #[arg(long, global = true, value_name = "NAME")]
    scheme: Option<String>,
    /// Number of time steps
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
    /// Spatial grid spacing
    #[arg(long, global = true, value_name = "DX")]
    dx: Option<f64>,
    /// Spatial half-width around the initial transformed log price
    #[arg(long = "half-width", global = true, value_name = "W")]
    half_width: Option<f64>,
    /// Random seed for Monte Carlo commands and references
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// Worker threads (default: HYBRIDJD_THREADS, then all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write the CSV here instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price one contract with the hybrid backward scheme
    Price {
        /// Dump the value layer at this time level instead of the price row
        #[arg(long = "dump-layer", value_name = "LEVEL")]
        dump_layer: Option<usize>,
    },
    /// Error table and fitted order across a resolution ladder
    Converge {
        /// What to refine
        #[arg(long, value_enum, default_value_t = Target::Price)]
        target: Target,
        /// Which resolution to vary
        #[arg(long, value_enum, default_value_t = Vary::Steps)]
        vary: Vary,
        /// Comma-separated resolution ladder (at least three entries)
        #[arg(long, value_name = "LIST")]
        values: String,
        /// Error reference
        #[arg(long, value_enum, default_value_t = Reference::SelfRef)]
        reference: Reference,
        /// Lattice functional for --target tree
        #[arg(long = "test-fn", value_enum, default_value_t = TestFn::Y)]
        test_fn: TestFn,
    },
    /// Check lattice, operator and quadrature health
    Diagnose,
    /// Dump the variance lattice
    TreeDump,
    /// Monte Carlo reference price
    McPrice {
        #[arg(long, value_name = "N")]
        paths: Option<usize>,
        /// Euler substeps per time step
        #[arg(long, value_name = "N")]
        substeps: Option<usize>,
        /// Use antithetic path pairs
        #[arg(long)]
        antithetic: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Price,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Vary {
    Steps,
    Dx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Reference {
    /// Successive differences between ladder neighbors
    #[value(name = "self")]
    SelfRef,
    /// A Monte Carlo price at the configured [mc] effort
    Mc,
    /// Closed form (lattice functionals only)
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestFn {
    /// E[Y_T]
    Y,
    /// E[Y_T^2]
    Y2,
    /// E[exp(-Y_T)]
    Expneg,
}

struct Outcome {
    csv: String,
    side_files: Vec<(PathBuf, String)>,
    exit_code: i32,
}

impl Outcome {
    fn ok(csv: String) -> Outcome {
        Outcome {
            csv,
            side_files: Vec::new(),
            exit_code: 0,
        }
    }
}

/// Parses and runs a full command line, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let threads = match resolve_threads(cli.threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let result = match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => execute(&cli),
    };

    match result {
        Ok(outcome) => {
            if let Some(path) = &cli.output {
                if let Err(e) = std::fs::write(path, &outcome.csv) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return 1;
                }
                for (side, text) in &outcome.side_files {
                    if let Err(e) = std::fs::write(side, text) {
                        eprintln!("error: cannot write {}: {e}", side.display());
                        return 1;
                    }
                }
            } else {
                print!("{}", outcome.csv);
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => 2,
                _ => 1,
            }
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = flag {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        return Ok(Some(t));
    }
    match std::env::var("HYBRIDJD_THREADS") {
        Ok(raw) => {
            let t: usize = raw.parse().map_err(|_| {
                Error::Config(format!(
                    "HYBRIDJD_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
            if t == 0 {
                return Err(Error::Config("HYBRIDJD_THREADS must be at least 1".into()));
            }
            Ok(Some(t))
        }
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut sets = cli.set.clone();
    if let Some(s) = &cli.scheme {
        sets.push(format!("scheme.scheme={s}"));
    }
    if let Some(n) = cli.steps {
        sets.push(format!("scheme.steps={n}"));
    }
    if let Some(dx) = cli.dx {
        sets.push(format!("scheme.dx={dx}"));
    }
    if let Some(w) = cli.half_width {
        sets.push(format!("scheme.half_width={w}"));
    }
    if let Some(seed) = cli.seed {
        sets.push(format!("mc.seed={seed}"));
    }
    let cfg = config::load(config_path, &sets)?;

    match &cli.command {
        Command::Price { dump_layer } => cmd_price(&cfg, *dump_layer),
        Command::Converge {
            target,
            vary,
            values,
            reference,
            test_fn,
        } => cmd_converge(&cfg, *target, *vary, values, *reference, *test_fn, cli),
        Command::Diagnose => cmd_diagnose(&cfg),
        Command::TreeDump => cmd_tree_dump(&cfg),
        Command::McPrice {
            paths,
            substeps,
            antithetic,
        } => cmd_mc_price(&cfg, *paths, *substeps, *antithetic),
    }
}

fn model_header(cfg: &FileConfig) -> Result<String> {
    let mut out = String::new();
    let law = cfg.jump_law()?;
    let gamma = cfg
        .market
        .gamma
        .unwrap_or(if law.lambda() > 0.0 { 1.0 } else { 0.0 });
    let m = &cfg.market;
    writeln!(
        out,
        "# market: s0={} rate={} dividend={} rho={} gamma={gamma}",
        m.s0, m.rate, m.dividend, m.rho
    )
    .unwrap();
    let c = &cfg.cir;
    writeln!(
        out,
        "# cir: kappa={} theta={} sigma={} y0={}",
        c.kappa, c.theta, c.sigma, c.y0
    )
    .unwrap();
    match law {
        JumpLaw::None => writeln!(out, "# jumps: kind=none").unwrap(),
        JumpLaw::Merton { lambda, mean, std } => writeln!(
            out,
            "# jumps: kind=merton lambda={lambda} m={mean} delta={std} compensate={}",
            cfg.jumps.compensate
        )
        .unwrap(),
        JumpLaw::Kou {
            lambda,
            up_prob,
            eta_up,
            eta_down,
        } => writeln!(
            out,
            "# jumps: kind=kou lambda={lambda} p={up_prob} eta1={eta_up} eta2={eta_down} \
             compensate={}",
            cfg.jumps.compensate
        )
        .unwrap(),
    }
    Ok(out)
}

fn scheme_header(cfg: &FileConfig, actual_half_width: f64) -> String {
    let s = &cfg.scheme;
    let tail = match s.tail_tol {
        Some(t) => format!("{t}"),
        None => "default".to_string(),
    };
    format!(
        "# scheme: scheme={} steps={} maturity={} dx={} half_width={actual_half_width} \
         tail_tol={tail}\n",
        s.scheme, s.steps, s.maturity, s.dx
    )
}

fn payoff_header(cfg: &FileConfig) -> Result<String> {
    let kind = cfg.payoff_kind()?;
    let detail = match kind {
        PayoffKind::Call { strike } | PayoffKind::Put { strike } => format!(" strike={strike}"),
        PayoffKind::Constant { value } => format!(" value={value}"),
        PayoffKind::Asset | PayoffKind::Gauss => String::new(),
    };
    Ok(format!(
        "# payoff: kind={}{detail} discount={}\n",
        kind.name(),
        cfg.payoff.discount
    ))
}

fn cmd_price(cfg: &FileConfig, dump_layer: Option<usize>) -> Result<Outcome> {
    let params = cfg.bates()?;
    let model = to_reference(&params)?;
    let mut scheme_cfg = cfg.scheme_config(&model)?;
    scheme_cfg.diagnostics = true;
    let payoff = cfg
        .payoff_kind()?
        .build(&model, scheme_cfg.grid.maturity(), cfg.payoff.discount);
    let (result, layer) =
        hybrid::price_with_layer(&model, payoff.as_ref(), &scheme_cfg, dump_layer)?;
    let d = result
        .diagnostics
        .expect("diagnostics were requested for the price command");

    let half_width = scheme_cfg.spatial.half_points() as f64 * scheme_cfg.spatial.dx();
    let mut csv = model_header(cfg)?;
    csv.push_str(&scheme_header(cfg, half_width));
    csv.push_str(&payoff_header(cfg)?);
    match layer {
        None => {
            csv.push_str("scheme,N,dx,half_width,value,clamp_count,normA_inv,normB\n");
            writeln!(
                csv,
                "{},{},{},{half_width},{},{},{},{}",
                scheme_cfg.scheme,
                scheme_cfg.grid.steps(),
                scheme_cfg.spatial.dx(),
                result.value,
                result.clamp_count,
                d.a_inv_norm,
                d.b_norm
            )
            .unwrap();
        }
        Some(layer) => {
            writeln!(csv, "# value = {}", result.value).unwrap();
            writeln!(csv, "# clamp_count = {}", result.clamp_count).unwrap();
            csv.push_str("level,k,y,i,x,value\n");
            for (k, (y, row)) in layer
                .variance_levels
                .iter()
                .zip(&layer.node_values)
                .enumerate()
            {
                for (i, v) in row.iter().enumerate() {
                    writeln!(
                        csv,
                        "{},{k},{y},{i},{},{v}",
                        layer.level,
                        scheme_cfg.spatial.point(i)
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(Outcome::ok(csv))
}

fn cmd_tree_dump(cfg: &FileConfig) -> Result<Outcome> {
    let cir = CirParams::new(cfg.cir.kappa, cfg.cir.theta, cfg.cir.sigma, cfg.cir.y0)?;
    let grid = cfg.time_grid()?;
    let tree = build_lattice(&cir, &grid);

    let mut csv = String::new();
    writeln!(
        csv,
        "# cir: kappa={} theta={} sigma={} y0={}",
        cir.kappa, cir.theta, cir.sigma, cir.y0
    )
    .unwrap();
    writeln!(
        csv,
        "# grid: maturity={} steps={}",
        grid.maturity(),
        grid.steps()
    )
    .unwrap();
    writeln!(csv, "# clamp_count = {}", tree.clamp_count()).unwrap();
    csv.push_str("n,k,y,ku,kd,pu\n");
    for n in 0..grid.steps() {
        for k in 0..=n {
            let mv = tree.node_move(n, k);
            writeln!(csv, "{n},{k},{},{},{},{}", tree.value(n, k), mv.ku, mv.kd, mv.pu).unwrap();
        }
    }
    let terminal = grid.steps();
    for k in 0..=terminal {
        writeln!(csv, "{terminal},{k},{},,,", tree.value(terminal, k)).unwrap();
    }
    Ok(Outcome::ok(csv))
}

fn cmd_mc_price(
    cfg: &FileConfig,
    paths: Option<usize>,
    substeps: Option<usize>,
    antithetic: bool,
) -> Result<Outcome> {
    let params = cfg.bates()?;
    let model = to_reference(&params)?;
    let grid = cfg.time_grid()?;
    let mut mc = cfg.mc_config();
    if let Some(p) = paths {
        mc.paths = p;
    }
    if let Some(s) = substeps {
        mc.substeps = s;
    }
    if antithetic {
        mc.antithetic = true;
    }
    let payoff = cfg
        .payoff_kind()?
        .build(&model, grid.maturity(), cfg.payoff.discount);
    let est = price_mc(&model, payoff, &grid, &mc)?;

    let mut csv = model_header(cfg)?;
    csv.push_str(&payoff_header(cfg)?);
    writeln!(
        csv,
        "# grid: maturity={} steps={}",
        grid.maturity(),
        grid.steps()
    )
    .unwrap();
    writeln!(
        csv,
        "# mc: paths={} substeps={} seed={} antithetic={}",
        mc.paths, mc.substeps, mc.seed, mc.antithetic
    )
    .unwrap();
    csv.push_str("mean,std_error,ci95,paths,substeps,seed\n");
    writeln!(
        csv,
        "{},{},{},{},{},{}",
        est.mean, est.std_error, est.ci95, est.paths, mc.substeps, mc.seed
    )
    .unwrap();
    Ok(Outcome::ok(csv))
}

struct Check {
    name: &'static str,
    status: &'static str,
    value: f64,
    threshold: f64,
}

impl Check {
    fn gauge(name: &'static str, value: f64, threshold: f64) -> Check {
        Check {
            name,
            status: if value <= threshold { "pass" } else { "fail" },
            value,
            threshold,
        }
    }

    fn skip(name: &'static str, threshold: f64) -> Check {
        Check {
            name,
            status: "skip",
            value: f64::NAN,
            threshold,
        }
    }
}

fn cmd_diagnose(cfg: &FileConfig) -> Result<Outcome> {
    let params = cfg.bates()?;
    let model = to_reference(&params)?;
    let scheme_cfg = cfg.scheme_config(&model)?;
    let grid = scheme_cfg.grid;
    let h = grid.h();
    let tree = build_lattice(model.cir(), &grid);
    let moments = tree.moment_report();
    let regime = tree.regime_report();
    let quad = build_quadrature(
        model.law(),
        model.gamma(),
        scheme_cfg.spatial.dx(),
        scheme_cfg.tail_tol,
    )?;
    let jump = assemble_jump(&quad, h)?;

    let mut checks = Vec::new();
    checks.push(Check::gauge("clamp_count", tree.clamp_count() as f64, 0.0));
    checks.push(Check::gauge(
        "band_multi_jump_nodes",
        regime.band_multi_jump as f64,
        0.0,
    ));
    if regime.low_band_nodes == 0 {
        checks.push(Check::skip("low_band_step_excess", 1e-12));
    } else {
        checks.push(Check::gauge(
            "low_band_step_excess",
            regime.low_band_max_excess,
            1e-12,
        ));
    }
    checks.push(Check::gauge(
        "up_move_dominance_excess",
        regime.dominance_max_excess,
        1e-12,
    ));
    if moments.unclamped_nodes == 0 {
        checks.push(Check::skip("drift_moment_residual", 1e-12));
    } else {
        checks.push(Check::gauge(
            "drift_moment_residual",
            moments.max_m1_residual,
            1e-12,
        ));
    }
    if moments.single_jump_nodes == 0 {
        checks.push(Check::skip("variance_moment_residual", 1e-10));
        checks.push(Check::skip("third_moment_residual", 1e-10));
    } else {
        checks.push(Check::gauge(
            "variance_moment_residual",
            moments.max_m2_residual,
            1e-10,
        ));
        checks.push(Check::gauge(
            "third_moment_residual",
            moments.max_m3_residual,
            1e-10,
        ));
    }

    let n_steps = grid.steps();
    let y_max = tree.level(n_steps).last().copied().unwrap_or(0.0);
    let mut a_norm = 0.0f64;
    let mut b_norm = 1.0;
    let mut b_bound = 1.0;
    for y in [0.0, model.cir().y0, y_max] {
        let a = assemble_implicit(
            scheme_cfg.scheme,
            model.mu_x(y),
            model.sigma_x2(y),
            h,
            &scheme_cfg.spatial,
        )?;
        let report = operator_norm_diagnostics(&a, &jump)?;
        a_norm = a_norm.max(report.a_inv_norm);
        b_norm = report.b_norm;
        b_bound = report.b_norm_bound;
    }
    checks.push(Check::gauge("inverse_operator_norm", a_norm, 1.0 + 1e-6));
    checks.push(Check::gauge("jump_operator_norm", b_norm, b_bound + 1e-6));

    if quad.is_empty() {
        checks.push(Check::skip("quadrature_mass_defect", 0.0));
    } else {
        checks.push(Check::gauge(
            "quadrature_mass_defect",
            (quad.total_mass() - quad.lambda()).abs(),
            quad.quadrature_error_bound() + 1e-12,
        ));
    }

    let a = assemble_implicit(
        scheme_cfg.scheme,
        model.mu_x(model.cir().y0),
        model.sigma_x2(model.cir().y0),
        h,
        &scheme_cfg.spatial,
    )?;
    let rhs: Vec<f64> = (0..scheme_cfg.spatial.len())
        .map(|i| (0.37 * i as f64).sin())
        .collect();
    let sol = a.solve(&rhs)?;
    let mut back = vec![0.0; rhs.len()];
    a.apply(&sol, &mut back);
    let resid = back
        .iter()
        .zip(&rhs)
        .map(|(b, r)| (b - r).abs())
        .fold(0.0f64, f64::max);
    checks.push(Check::gauge("solver_residual", resid, 1e-12));

    let half_width = scheme_cfg.spatial.half_points() as f64 * scheme_cfg.spatial.dx();
    let mut csv = model_header(cfg)?;
    csv.push_str(&scheme_header(cfg, half_width));
    csv.push_str("check,status,value,threshold\n");
    let mut failures = 0;
    for check in &checks {
        if check.status == "fail" {
            failures += 1;
        }
        let value = if check.value.is_nan() {
            String::new()
        } else {
            format!("{}", check.value)
        };
        writeln!(csv, "{},{},{value},{}", check.name, check.status, check.threshold).unwrap();
    }
    writeln!(csv, "# failures = {failures}").unwrap();
    Ok(Outcome {
        csv,
        side_files: Vec::new(),
        exit_code: if failures > 0 { 2 } else { 0 },
    })
}

fn parse_step_ladder(values: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in values.split(',') {
        let part = part.trim();
        let n: usize = part
            .parse()
            .map_err(|_| Error::Config(format!("--values entry {part:?} is not a step count")))?;
        if n == 0 {
            return Err(Error::Config("--values entries must be >= 1".into()));
        }
        out.push(n);
    }
    out.sort_unstable();
    out.dedup();
    if out.len() < 3 {
        return Err(Error::Config(
            "--values needs at least three distinct resolutions".into(),
        ));
    }
    Ok(out)
}

fn parse_dx_ladder(values: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in values.split(',') {
        let part = part.trim();
        let dx: f64 = part
            .parse()
            .map_err(|_| Error::Config(format!("--values entry {part:?} is not a grid spacing")))?;
        if !dx.is_finite() || dx <= 0.0 {
            return Err(Error::Config("--values entries must be positive".into()));
        }
        out.push(dx);
    }
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out.dedup();
    if out.len() < 3 {
        return Err(Error::Config(
            "--values needs at least three distinct resolutions".into(),
        ));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_converge(
    cfg: &FileConfig,
    target: Target,
    vary: Vary,
    values: &str,
    reference: Reference,
    test_fn: TestFn,
    cli: &Cli,
) -> Result<Outcome> {
    match target {
        Target::Tree => cmd_converge_tree(cfg, vary, values, reference, test_fn, cli),
        Target::Price => cmd_converge_price(cfg, vary, values, reference, cli),
    }
}

fn cmd_converge_tree(
    cfg: &FileConfig,
    vary: Vary,
    values: &str,
    reference: Reference,
    test_fn: TestFn,
    cli: &Cli,
) -> Result<Outcome> {
    if vary != Vary::Steps {
        return Err(Error::Config(
            "--target tree refines time steps; use --vary steps".into(),
        ));
    }
    if reference != Reference::Exact {
        return Err(Error::Config(
            "--target tree compares against closed forms; use --reference exact".into(),
        ));
    }
    let cir = CirParams::new(cfg.cir.kappa, cfg.cir.theta, cfg.cir.sigma, cfg.cir.y0)?;
    let maturity = cfg.scheme.maturity;
    let ladder = parse_step_ladder(values)?;
    let exact = match test_fn {
        TestFn::Y => cir.mean(maturity),
        TestFn::Y2 => cir.second_moment(maturity),
        TestFn::Expneg => cir.laplace(1.0, maturity),
    };
    let f = |y: f64| match test_fn {
        TestFn::Y => y,
        TestFn::Y2 => y * y,
        TestFn::Expneg => (-y).exp(),
    };

    let mut rows = Vec::new();
    for &n in &ladder {
        let grid = TimeGrid::new(maturity, n)?;
        let tree = build_lattice(&cir, &grid);
        let value = tree.expectation(f);
        rows.push((grid.h(), value, Some((value - exact).abs())));
    }

    let mut csv = String::new();
    writeln!(
        csv,
        "# cir: kappa={} theta={} sigma={} y0={}",
        cir.kappa, cir.theta, cir.sigma, cir.y0
    )
    .unwrap();
    let fn_name = match test_fn {
        TestFn::Y => "y",
        TestFn::Y2 => "y2",
        TestFn::Expneg => "expneg",
    };
    writeln!(
        csv,
        "# converge: target=tree vary=steps reference=exact test_fn={fn_name} maturity={maturity}"
    )
    .unwrap();
    finish_convergence_csv(csv, rows, cli)
}

fn cmd_converge_price(
    cfg: &FileConfig,
    vary: Vary,
    values: &str,
    reference: Reference,
    cli: &Cli,
) -> Result<Outcome> {
    let params = cfg.bates()?;
    let model = to_reference(&params)?;
    let base = cfg.scheme_config(&model)?;
    let maturity = base.grid.maturity();
    let payoff = cfg
        .payoff_kind()?
        .build(&model, maturity, cfg.payoff.discount);

    let mut resolutions: Vec<(f64, hybrid::SchemeConfig)> = Vec::new();
    match vary {
        Vary::Steps => {
            for &n in &parse_step_ladder(values)? {
                let mut c = base;
                c.grid = TimeGrid::new(maturity, n)?;
                resolutions.push((c.grid.h(), c));
            }
        }
        Vary::Dx => {
            let half_width = base.spatial.half_points() as f64 * base.spatial.dx();
            for &dx in &parse_dx_ladder(values)? {
                let mut c = base;
                c.spatial = SpatialGrid::centered_at(model.x0(), dx, half_width)?;
                resolutions.push((dx, c));
            }
        }
    }

    let mut prices = Vec::new();
    for (_, scheme_cfg) in &resolutions {
        let result = hybrid::price(&model, payoff.as_ref(), scheme_cfg)?;
        prices.push(result.value);
    }

    let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::new();
    match reference {
        Reference::SelfRef => {
            for (j, ((step, _), &value)) in resolutions.iter().zip(&prices).enumerate() {
                let err = if j + 1 < prices.len() {
                    Some((value - prices[j + 1]).abs())
                } else {
                    None
                };
                rows.push((*step, value, err));
            }
        }
        Reference::Mc => {
            let grid = cfg.time_grid()?;
            let mc = cfg.mc_config();
            let est = price_mc(&model, payoff.as_ref(), &grid, &mc)?;
            for ((step, _), &value) in resolutions.iter().zip(&prices) {
                rows.push((*step, value, Some((value - est.mean).abs())));
            }
        }
        Reference::Exact => {
            return Err(Error::Numerical(
                "no closed-form reference price is available for this model".into(),
            ));
        }
    }

    let vary_name = match vary {
        Vary::Steps => "steps",
        Vary::Dx => "dx",
    };
    let ref_name = match reference {
        Reference::SelfRef => "self",
        Reference::Mc => "mc",
        Reference::Exact => "exact",
    };
    let half_width = base.spatial.half_points() as f64 * base.spatial.dx();
    let mut csv = model_header(cfg)?;
    csv.push_str(&scheme_header(cfg, half_width));
    csv.push_str(&payoff_header(cfg)?);
    writeln!(
        csv,
        "# converge: target=price vary={vary_name} reference={ref_name}"
    )
    .unwrap();
    finish_convergence_csv(csv, rows, cli)
}

/// Renders `(step, value, error)` rows with error ratios, the fitted slope,
/// and an optional gnuplot companion script.
fn finish_convergence_csv(
    mut csv: String,
    rows: Vec<(f64, f64, Option<f64>)>,
    cli: &Cli,
) -> Result<Outcome> {
    csv.push_str("step,value,error,ratio\n");
    let errors: Vec<Option<f64>> = rows.iter().map(|r| r.2).collect();
    for (j, (step, value, err)) in rows.iter().enumerate() {
        let err_text = match err {
            Some(e) => format!("{e}"),
            None => String::new(),
        };
        let ratio = match (err, errors.get(j + 1).copied().flatten()) {
            (Some(e), Some(next)) if next > 0.0 => format!("{}", e / next),
            _ => String::new(),
        };
        writeln!(csv, "{step},{value},{err_text},{ratio}").unwrap();
    }

    let fit_steps: Vec<f64> = rows
        .iter()
        .filter(|r| r.2.is_some())
        .map(|r| r.0)
        .collect();
    let fit_errors: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
    let fit = fit_loglog(&fit_steps, &fit_errors, 1e-10);
    match fit.slope {
        Some(slope) => writeln!(csv, "# slope = {slope}").unwrap(),
        None => writeln!(csv, "# slope = NaN").unwrap(),
    }
    if fit.excluded_coarsest {
        writeln!(csv, "# note = coarsest point excluded as pre-asymptotic").unwrap();
    }
    if fit.floored {
        writeln!(csv, "# note = errors at the roundoff floor were ignored").unwrap();
    }

    let mut side_files = Vec::new();
    if let Some(output) = &cli.output {
        let data_name = output
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("convergence.csv")
            .to_string();
        let script = format!(
            "set datafile separator \",\"\n\
             set logscale xy\n\
             set xlabel \"step\"\n\
             set ylabel \"error\"\n\
             plot \"{data_name}\" every ::1 using 1:3 with linespoints title \"error\"\n"
        );
        side_files.push((output.with_extension("gp"), script));
    }
    Ok(Outcome {
        csv,
        side_files,
        exit_code: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;
    use std::sync::atomic::{AtomicUsize, Ordering};

    const CONFIG: &str = r#"
[market]
s0 = 1.0
rate = 0.05
dividend = 0.0
rho = -0.5

[cir]
kappa = 2.0
theta = 0.04
sigma = 0.2
y0 = 0.04

[jumps]
kind = "merton"
lambda = 0.2
m = -0.1
delta = 0.15

[scheme]
scheme = "centered"
steps = 8
maturity = 1.0
dx = 0.05

[payoff]
kind = "call"
strike = 1.0

[mc]
paths = 4000
substeps = 2
seed = 7
"#;

    static COUNTER: AtomicUsize = AtomicUsize::new(0);

    fn temp_file(tag: &str, content: Option<&str>) -> PathBuf {
        let id = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = std::env::temp_dir().join(format!(
            "hybridjd-cli-{}-{id}-{tag}",
            std::process::id()
        ));
        if let Some(text) = content {
            std::fs::write(&path, text).unwrap();
        }
        path
    }

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("hybridjd").chain(args.iter().copied()))
    }

    fn read(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run_args(&["--help"]), 0);
        assert_eq!(run_args(&["price", "--help"]), 0);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        assert_eq!(run_args(&["price"]), 1);
    }

    #[test]
    fn unreadable_config_is_a_usage_error() {
        assert_eq!(
            run_args(&["price", "--config", "/nonexistent/run.toml"]),
            1
        );
    }

    #[test]
    fn price_emits_the_documented_csv_shape() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("price.csv", None);
        let code = run_args(&[
            "price",
            "--config",
            config.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = read(&out);
        assert!(text.contains("scheme,N,dx,half_width,value,clamp_count,normA_inv,normB\n"));
        assert!(text.contains("# market: s0=1 rate=0.05 dividend=0 rho=-0.5 gamma=1\n"));
        let data_line = text
            .lines()
            .find(|l| l.starts_with("centered,8,"))
            .expect("data row present");
        assert_eq!(data_line.split(',').count(), 8);
    }

    #[test]
    fn flag_overrides_reach_the_scheme() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("price-upwind.csv", None);
        let code = run_args(&[
            "price",
            "--config",
            config.to_str().unwrap(),
            "--scheme",
            "upwind",
            "--steps",
            "5",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(read(&out).contains("\nupwind,5,"));
    }

    #[test]
    fn dump_layer_switches_to_the_layer_csv() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("layer.csv", None);
        let code = run_args(&[
            "price",
            "--config",
            config.to_str().unwrap(),
            "--dump-layer",
            "3",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = read(&out);
        assert!(text.contains("level,k,y,i,x,value\n"));
        assert!(text.contains("# value = "));
        assert!(text.lines().any(|l| l.starts_with("3,0,")));
        assert!(text.lines().any(|l| l.starts_with("3,3,")));
    }

    #[test]
    fn tree_dump_lists_every_node() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("tree.csv", None);
        let code = run_args(&[
            "tree-dump",
            "--config",
            config.to_str().unwrap(),
            "--steps",
            "3",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = read(&out);
        assert!(text.contains("n,k,y,ku,kd,pu\n"));
        // 1 + 2 + 3 move rows and 4 terminal rows.
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 10);
        assert!(text.lines().any(|l| l.starts_with("3,3,") && l.ends_with(",,,")));
    }

    #[test]
    fn mc_price_reports_its_estimate() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("mc.csv", None);
        let code = run_args(&[
            "mc-price",
            "--config",
            config.to_str().unwrap(),
            "--paths",
            "2000",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = read(&out);
        assert!(text.contains("mean,std_error,ci95,paths,substeps,seed\n"));
        assert!(text.contains("# mc: paths=2000 substeps=2 seed=7 antithetic=false\n"));
    }

    #[test]
    fn diagnose_passes_on_a_healthy_configuration() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("diag.csv", None);
        let code = run_args(&[
            "diagnose",
            "--config",
            config.to_str().unwrap(),
            "--steps",
            "64",
            "--output",
            out.to_str().unwrap(),
        ]);
        let text = read(&out);
        assert_eq!(code, 0, "{text}");
        assert!(text.contains("check,status,value,threshold\n"));
        assert!(text.contains("# failures = 0"));
        assert!(!text.contains(",fail,"));
    }

    #[test]
    fn converge_tree_reports_a_slope() {
        let config = temp_file("run.toml", Some(CONFIG));
        let out = temp_file("conv.csv", None);
        let code = run_args(&[
            "converge",
            "--config",
            config.to_str().unwrap(),
            "--target",
            "tree",
            "--reference",
            "exact",
            "--test-fn",
            "y",
            "--values",
            "25,50,100,200",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = read(&out);
        assert!(text.contains("step,value,error,ratio\n"));
        assert!(text.contains("# slope = "));
        let gp = read(&out.with_extension("gp"));
        assert!(gp.contains("set logscale xy"));
    }

    #[test]
    fn converge_price_without_a_closed_form_fails_numerically() {
        let config = temp_file("run.toml", Some(CONFIG));
        let code = run_args(&[
            "converge",
            "--config",
            config.to_str().unwrap(),
            "--reference",
            "exact",
            "--values",
            "4,8,16",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn converge_needs_three_resolutions() {
        let config = temp_file("run.toml", Some(CONFIG));
        let code = run_args(&[
            "converge",
            "--config",
            config.to_str().unwrap(),
            "--values",
            "4,8",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn outputs_are_identical_across_thread_counts() {
        let config = temp_file("run.toml", Some(CONFIG));
        let one = temp_file("t1.csv", None);
        let two = temp_file("t2.csv", None);
        for (threads, path) in [("1", &one), ("3", &two)] {
            let code = run_args(&[
                "price",
                "--config",
                config.to_str().unwrap(),
                "--threads",
                threads,
                "--output",
                path.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
        }
        assert_eq!(read(&one), read(&two));
    }
}
