//! Recombining binomial tree for the square-root (CIR) variance process
//!
//! ```text
//!     dY_t = kappa (theta - Y_t) dt + sigma sqrt(Y_t) dW_t,    Y_0 = y0 >= 0.
//! ```
//!
//! With `h = T / N`, level `n` of the lattice holds the `n + 1` values
//!
//! ```text
//!     y[n][k] = (sqrt(y0) + (sigma/2) (2k - n) sqrt(h))^2   if the base is positive,
//!               0                                           otherwise,
//! ```
//!
//! for `k = 0..=n`. From node `(n, k)` the chain jumps to a pair of
//! level-`(n + 1)` indices `ku > k >= kd`, chosen as the tightest bracket of
//! the Euler predictor `y + kappa (theta - y) h`:
//!
//! ```text
//!     ku = min { j in [k+1, n+1] : y + mu h <= y[n+1][j] }   (n+1 if none),
//!     kd = max { j in [0, k]     : y + mu h >= y[n+1][j] }   (0 if none),
//! ```
//!
//! so the jumps are "multiple": `ku` and `kd` are not restricted to the
//! adjacent indices. The up probability matches the predictor in expectation,
//!
//! ```text
//!     pu = clamp( (mu h + y - y_dn) / (y_up - y_dn), 0, 1 ),
//! ```
//!
//! and every clamp event is counted: a nonzero [`CirTree::clamp_count`] means
//! the step size is too coarse for the parameters, and the first local moment
//! is no longer exact at the clamped nodes.
//!
//! Index comparisons use exact floating-point `<=` / `>=` with no tolerance;
//! ties land on a bracket endpoint and give `pu` exactly 0 or 1, which is
//! harmless.

use crate::error::{Error, Result};

/// Parameters of the CIR process `dY = kappa (theta - Y) dt + sigma sqrt(Y) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirParams {
    /// Mean-reversion speed, `> 0`.
    pub kappa: f64,
    /// Long-run level, `> 0`.
    pub theta: f64,
    /// Volatility of variance, `> 0`.
    pub sigma: f64,
    /// Initial value, `>= 0`.
    pub y0: f64,
}

impl CirParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, y0: f64) -> Result<Self> {
        let params = CirParams {
            kappa,
            theta,
            sigma,
            y0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(Error::invalid("cir.kappa", self.kappa, "must be finite and > 0"));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(Error::invalid("cir.theta", self.theta, "must be finite and > 0"));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::invalid("cir.sigma", self.sigma, "must be finite and > 0"));
        }
        if !self.y0.is_finite() || self.y0 < 0.0 {
            return Err(Error::invalid("cir.y0", self.y0, "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Drift `kappa (theta - y)`.
    #[inline]
    pub fn drift(&self, y: f64) -> f64 {
        self.kappa * (self.theta - y)
    }

    /// `2 kappa theta / sigma^2`; the origin is unattainable when `>= 1`.
    pub fn feller_ratio(&self) -> f64 {
        2.0 * self.kappa * self.theta / (self.sigma * self.sigma)
    }

    /// `E[Y_t] = theta + (y0 - theta) exp(-kappa t)`.
    pub fn mean(&self, t: f64) -> f64 {
        self.theta + (self.y0 - self.theta) * (-self.kappa * t).exp()
    }

    /// `Var(Y_t)` in closed form.
    pub fn variance(&self, t: f64) -> f64 {
        let e = (-self.kappa * t).exp();
        let s2 = self.sigma * self.sigma;
        self.y0 * s2 / self.kappa * (e - e * e)
            + self.theta * s2 / (2.0 * self.kappa) * (1.0 - e) * (1.0 - e)
    }

    /// `E[Y_t^2]`.
    pub fn second_moment(&self, t: f64) -> f64 {
        let m = self.mean(t);
        self.variance(t) + m * m
    }

    /// `E[exp(-u Y_t)]` via the noncentral chi-square representation:
    /// `Y_t = c W` with `W ~ chi'^2(df, nc)`, `c = sigma^2 (1 - e^{-kappa t}) / (4 kappa)`,
    /// `df = 4 kappa theta / sigma^2`, `nc = y0 e^{-kappa t} / c`.
    pub fn laplace(&self, u: f64, t: f64) -> f64 {
        if t == 0.0 {
            return (-u * self.y0).exp();
        }
        let e = (-self.kappa * t).exp();
        let c = self.sigma * self.sigma * (1.0 - e) / (4.0 * self.kappa);
        let df = 4.0 * self.kappa * self.theta / (self.sigma * self.sigma);
        let nc = self.y0 * e / c;
        let denom = 1.0 + 2.0 * u * c;
        (-nc * u * c / denom).exp() * denom.powf(-df / 2.0)
    }

    /// Thresholds `(lo, hi)` of the single-jump region of the lattice: a node
    /// value `y` with `lo * h <= y <= hi / h` bracket its predictor with the
    /// adjacent indices, `ku = k + 1` and `kd = k`.
    pub fn single_jump_thresholds(&self) -> (f64, f64) {
        let lo = (self.kappa * self.theta / self.sigma).powi(2);
        let hi = self.sigma * self.sigma / (4.0 * self.kappa * self.kappa);
        (lo, hi)
    }

    /// Coefficient `c` such that below the single-jump region
    /// (`y < lo * h`) the up-move is bounded by `y_up - y <= c h`.
    pub fn small_y_step_coeff(&self) -> f64 {
        let (lo, _) = self.single_jump_thresholds();
        let kt = self.kappa * self.theta;
        let a = kt + 2.0 * self.sigma * (lo + kt).sqrt() + self.sigma * self.sigma;
        let b = self.sigma * self.sigma / 4.0 + self.sigma * lo.sqrt();
        a.max(b)
    }
}

/// Uniform time grid with `steps` steps of size `h = maturity / steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    maturity: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(maturity: f64, steps: usize) -> Result<Self> {
        if !maturity.is_finite() || maturity <= 0.0 {
            return Err(Error::invalid("maturity", maturity, "must be finite and > 0"));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", 0.0, "must be >= 1"));
        }
        Ok(TimeGrid { maturity, steps })
    }

    #[inline]
    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.maturity / self.steps as f64
    }
}

/// Branch data of one tree node: up/down target indices on the next level and
/// the up probability.
#[derive(Debug, Clone, Copy)]
pub struct NodeMove {
    pub ku: u32,
    pub kd: u32,
    pub pu: f64,
}

/// The built lattice: node values per level, branch data per node, and the
/// number of probability clamp events.
#[derive(Debug, Clone)]
pub struct CirTree {
    params: CirParams,
    grid: TimeGrid,
    values: Vec<Vec<f64>>,
    moves: Vec<Vec<NodeMove>>,
    clamp_count: usize,
}

/// Builds the lattice for `params` on `grid`.
pub fn build_lattice(params: &CirParams, grid: &TimeGrid) -> CirTree {
    let n_steps = grid.steps();
    let h = grid.h();
    let sqrt_y0 = params.y0.sqrt();
    let half_sigma_rt_h = 0.5 * params.sigma * h.sqrt();

    let mut values = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let mut level = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let base = sqrt_y0 + half_sigma_rt_h * (2.0 * k as f64 - n as f64);
            level.push(if base > 0.0 { base * base } else { 0.0 });
        }
        values.push(level);
    }

    let mut clamp_count = 0usize;
    let mut moves = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let next = &values[n + 1];
        let mut level_moves = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let y = values[n][k];
            let target = y + params.drift(y) * h;

            // Values on a level are nondecreasing in k, so both searches are
            // binary. `ku`: first index in [k+1, n+1] whose value >= target,
            // falling back to n+1; `kd`: last index in [0, k] whose value
            // <= target, falling back to 0.
            let tail = &next[k + 1..];
            let ku = k + 1 + tail.partition_point(|&v| v < target).min(tail.len() - 1);
            let head = &next[..=k];
            let below = head.partition_point(|&v| v <= target);
            let kd = below.saturating_sub(1);

            let y_up = next[ku];
            let y_dn = next[kd];
            assert!(
                y_up > y_dn,
                "degenerate bracket at node ({n}, {k}): y_up = {y_up}, y_dn = {y_dn}"
            );
            let pu_raw = (target - y_dn) / (y_up - y_dn);
            if !(0.0..=1.0).contains(&pu_raw) {
                clamp_count += 1;
            }
            level_moves.push(NodeMove {
                ku: ku as u32,
                kd: kd as u32,
                pu: pu_raw.clamp(0.0, 1.0),
            });
        }
        moves.push(level_moves);
    }

    CirTree {
        params: *params,
        grid: *grid,
        values,
        moves,
        clamp_count,
    }
}

/// Worst-case residuals of the first three local moments of the tree against
/// their closed forms.
///
/// * `max_m1_residual`: `|m1 - mu_Y(y) h| / (1 + |y|)` over nodes with
///   unclamped probabilities (there `m1` is exact up to rounding).
/// * `max_m2_residual`, `max_m3_residual`: relative residuals of the second
///   and third moments against their closed forms on single-jump nodes whose
///   children both lie on the positive branch of the lattice; the residual is
///   measured relative to the sum of the term magnitudes of the closed form,
///   so it stays meaningful where the signed expression crosses zero.
#[derive(Debug, Clone, Copy)]
pub struct MomentReport {
    pub nodes: usize,
    pub unclamped_nodes: usize,
    pub single_jump_nodes: usize,
    pub max_m1_residual: f64,
    pub max_m2_residual: f64,
    pub max_m3_residual: f64,
}

/// Structural diagnostics of the lattice regime.
///
/// With `(lo, hi)` the single-jump thresholds and `c*` the small-`y` step
/// coefficient of [`CirParams`]:
///
/// * `band_multi_jump` counts nodes with `lo * h <= y <= hi / h` whose moves
///   are not the adjacent pair `(k + 1, k)`;
/// * `low_band_max_excess` is the maximum of `(y_up - y) - c* h` over nodes
///   below `lo * h`;
/// * `dominance_max_excess` is the maximum over all nodes of
///   `(y_up - y - sigma sqrt(y h)) - ((sigma / sqrt(hi)) y h + c h)` with
///   `c = max(c*, sigma^2 / 4) + sigma (kappa theta + lo)`.
///
/// For step sizes small enough for the parameters all three are nonpositive
/// counts/excesses and `clamp_count` is zero.
#[derive(Debug, Clone, Copy)]
pub struct RegimeReport {
    pub nodes: usize,
    pub clamp_count: usize,
    pub band_nodes: usize,
    pub band_multi_jump: usize,
    pub low_band_nodes: usize,
    pub low_band_max_excess: f64,
    pub dominance_max_excess: f64,
}

impl CirTree {
    #[inline]
    pub fn params(&self) -> &CirParams {
        &self.params
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Node value `y[n][k]`.
    #[inline]
    pub fn value(&self, n: usize, k: usize) -> f64 {
        self.values[n][k]
    }

    /// All node values of level `n`.
    #[inline]
    pub fn level(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    /// Branch data of node `(n, k)`; defined for `n < steps`.
    #[inline]
    pub fn node_move(&self, n: usize, k: usize) -> NodeMove {
        self.moves[n][k]
    }

    /// Number of nodes whose raw up probability fell outside `[0, 1]`.
    #[inline]
    pub fn clamp_count(&self) -> usize {
        self.clamp_count
    }

    /// `E[f(Y^h_N)]` by backward induction through the tree.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n_steps = self.grid.steps();
        let mut v: Vec<f64> = self.values[n_steps].iter().map(|&y| f(y)).collect();
        for n in (0..n_steps).rev() {
            let mut w = Vec::with_capacity(n + 1);
            for mv in &self.moves[n] {
                let up = v[mv.ku as usize];
                let dn = v[mv.kd as usize];
                w.push(dn + mv.pu * (up - dn));
            }
            v = w;
        }
        v[0]
    }

    /// Checks the first three local moments of every branch against their
    /// closed forms; see [`MomentReport`].
    pub fn moment_report(&self) -> MomentReport {
        let h = self.grid.h();
        let p = &self.params;
        let s2 = p.sigma * p.sigma;
        let s4 = s2 * s2;
        let s6 = s4 * s2;

        let mut report = MomentReport {
            nodes: 0,
            unclamped_nodes: 0,
            single_jump_nodes: 0,
            max_m1_residual: 0.0,
            max_m2_residual: 0.0,
            max_m3_residual: 0.0,
        };

        for n in 0..self.grid.steps() {
            for k in 0..=n {
                report.nodes += 1;
                let y = self.values[n][k];
                let mv = self.moves[n][k];
                let y_up = self.values[n + 1][mv.ku as usize];
                let y_dn = self.values[n + 1][mv.kd as usize];
                let mu_h = p.drift(y) * h;
                let target = y + mu_h;
                let clamped = target < y_dn || target > y_up;
                if clamped {
                    continue;
                }
                report.unclamped_nodes += 1;

                let a = y_up - y;
                let b = y_dn - y;
                let m1 = b + mv.pu * (a - b);
                let r1 = (m1 - mu_h).abs() / (1.0 + y.abs());
                report.max_m1_residual = report.max_m1_residual.max(r1);

                let single = mv.ku as usize == k + 1
                    && mv.kd as usize == k
                    && y > 0.0
                    && self.values[n + 1][k] > 0.0;
                if !single {
                    continue;
                }
                report.single_jump_nodes += 1;

                let m2 = b * b + mv.pu * (a * a - b * b);
                let m3 = b * b * b + mv.pu * (a * a * a - b * b * b);

                let mu = p.drift(y);
                // m2 = sigma^2 y h + (sigma^2 / 2)(mu - sigma^2 / 8) h^2 on
                // single-jump nodes with both children positive.
                let m2_terms = [s2 * y * h, 0.5 * s2 * mu * h * h, -s2 * s2 / 16.0 * h * h];
                let m2_closed: f64 = m2_terms.iter().sum();
                let m2_scale: f64 = m2_terms.iter().map(|t| t.abs()).sum();
                report.max_m2_residual = report
                    .max_m2_residual
                    .max((m2 - m2_closed).abs() / m2_scale.max(f64::MIN_POSITIVE));

                // m3 = mu h^2 (sigma^2 y + 3 sigma^4 h / 16)
                //      + (sigma^4 y / 2) h^2 - (sigma^6 / 32) h^3.
                let m3_terms = [
                    mu * h * h * (s2 * y + 3.0 * s4 * h / 16.0),
                    0.5 * s4 * y * h * h,
                    -s6 / 32.0 * h * h * h,
                ];
                let m3_closed: f64 = m3_terms.iter().sum();
                let m3_scale: f64 = m3_terms.iter().map(|t| t.abs()).sum();
                report.max_m3_residual = report
                    .max_m3_residual
                    .max((m3 - m3_closed).abs() / m3_scale.max(f64::MIN_POSITIVE));
            }
        }
        report
    }

    /// Structural regime diagnostics; see [`RegimeReport`].
    pub fn regime_report(&self) -> RegimeReport {
        let h = self.grid.h();
        let p = &self.params;
        let (lo, hi) = p.single_jump_thresholds();
        let c_star = p.small_y_step_coeff();
        let dominance_slope = p.sigma / hi.sqrt();
        let dominance_c =
            c_star.max(p.sigma * p.sigma / 4.0) + p.sigma * (p.kappa * p.theta + lo);

        let mut report = RegimeReport {
            nodes: 0,
            clamp_count: self.clamp_count,
            band_nodes: 0,
            band_multi_jump: 0,
            low_band_nodes: 0,
            low_band_max_excess: f64::NEG_INFINITY,
            dominance_max_excess: f64::NEG_INFINITY,
        };

        for n in 0..self.grid.steps() {
            for k in 0..=n {
                report.nodes += 1;
                let y = self.values[n][k];
                let mv = self.moves[n][k];
                let y_up = self.values[n + 1][mv.ku as usize];

                if lo * h <= y && y <= hi / h {
                    report.band_nodes += 1;
                    if mv.ku as usize != k + 1 || mv.kd as usize != k {
                        report.band_multi_jump += 1;
                    }
                }
                if y < lo * h {
                    report.low_band_nodes += 1;
                    report.low_band_max_excess =
                        report.low_band_max_excess.max((y_up - y) - c_star * h);
                }
                let dominance = (y_up - y - p.sigma * (y * h).sqrt())
                    - (dominance_slope * y * h + dominance_c * h);
                report.dominance_max_excess = report.dominance_max_excess.max(dominance);
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(maturity: f64, steps: usize) -> TimeGrid {
        TimeGrid::new(maturity, steps).unwrap()
    }

    fn standard() -> CirParams {
        CirParams::new(2.0, 0.04, 0.2, 0.04).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CirParams::new(0.0, 0.04, 0.2, 0.04).is_err());
        assert!(CirParams::new(2.0, -0.1, 0.2, 0.04).is_err());
        assert!(CirParams::new(2.0, 0.04, 0.0, 0.04).is_err());
        assert!(CirParams::new(2.0, 0.04, 0.2, -1e-9).is_err());
        assert!(CirParams::new(f64::NAN, 0.04, 0.2, 0.04).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn first_level_values_match_hand_evaluation() {
        // sqrt(y0) = 0.2, (sigma/2) sqrt(h) = 0.01 at h = 0.01:
        // y[1][1] = 0.21^2 = 0.0441 and y[1][0] = 0.19^2 = 0.0361.
        let tree = build_lattice(&standard(), &grid(1.0, 100));
        assert!((tree.value(1, 1) - 0.0441).abs() < 1e-15);
        assert!((tree.value(1, 0) - 0.0361).abs() < 1e-15);
        // The root stores the formula value (sqrt(y0))^2, one rounding away
        // from y0 itself.
        let s = 0.04f64.sqrt();
        assert_eq!(tree.value(0, 0), s * s);
    }

    #[test]
    fn root_branch_probability_matches_hand_evaluation() {
        // Zero drift at the root (y0 = theta), so the predictor is y0 itself:
        // pu = (0.04 - 0.0361) / (0.0441 - 0.0361) = 0.4875.
        let tree = build_lattice(&standard(), &grid(1.0, 100));
        let mv = tree.node_move(0, 0);
        assert_eq!(mv.ku, 1);
        assert_eq!(mv.kd, 0);
        assert!((mv.pu - 0.4875).abs() < 1e-12);
        assert_eq!(tree.clamp_count(), 0);
    }

    #[test]
    fn negative_base_truncates_to_zero() {
        // sqrt(y0) = 0.1 and (sigma/2) sqrt(h) = 0.05: the base at (3, 0) is
        // 0.1 - 3 * 0.05 < 0, so the node value is exactly zero.
        let params = CirParams::new(1.0, 0.02, 0.5, 0.01).unwrap();
        let tree = build_lattice(&params, &grid(0.12, 3));
        assert_eq!(tree.value(3, 0), 0.0);
        assert!(tree.value(3, 3) > 0.0);
    }

    #[test]
    fn constant_function_expectation_is_exact() {
        let tree = build_lattice(&standard(), &grid(1.0, 60));
        assert_eq!(tree.expectation(|_| 1.0), 1.0);
        assert_eq!(tree.expectation(|_| -3.5), -3.5);
    }

    #[test]
    fn tree_mean_tracks_closed_form() {
        let params = standard();
        let tree = build_lattice(&params, &grid(1.0, 200));
        let exact = params.mean(1.0);
        let approx = tree.expectation(|y| y);
        assert!(
            (approx - exact).abs() < 5e-4,
            "tree mean {approx} vs exact {exact}"
        );
    }

    #[test]
    fn laplace_transform_is_consistent_with_moments() {
        let params = CirParams::new(1.3, 0.07, 0.4, 0.05).unwrap();
        let t = 0.8;
        let u = 1e-4;
        let taylor = 1.0 - u * params.mean(t) + 0.5 * u * u * params.second_moment(t);
        assert!((params.laplace(u, t) - taylor).abs() < 1e-10);
        assert_eq!(params.laplace(0.0, t), 1.0);
        assert!((params.laplace(0.5, 0.0) - (-0.5f64 * 0.05).exp()).abs() < 1e-15);
    }

    #[test]
    fn moment_report_certifies_exactness() {
        // Feller ratio 4: the whole occupied band is single-jump.
        let params = CirParams::new(2.0, 0.09, 0.3, 0.09).unwrap();
        let tree = build_lattice(&params, &grid(1.0, 200));
        let report = tree.moment_report();
        assert_eq!(tree.clamp_count(), 0);
        assert_eq!(report.nodes, report.unclamped_nodes);
        assert!(report.single_jump_nodes > 0);
        assert!(
            report.max_m1_residual < 1e-12,
            "m1 residual {}",
            report.max_m1_residual
        );
        assert!(
            report.max_m2_residual < 1e-10,
            "m2 residual {}",
            report.max_m2_residual
        );
        assert!(
            report.max_m3_residual < 1e-10,
            "m3 residual {}",
            report.max_m3_residual
        );
    }

    #[test]
    fn moment_closed_forms_match_direct_two_point_evaluation() {
        // Independent spot check of the closed forms on one synthetic
        // single-jump branch: y_up/dn = y + sigma^2 h / 4 +- sigma sqrt(y h),
        // pu from the predictor.
        let (kappa, theta, sigma) = (1.7f64, 0.06f64, 0.45f64);
        let (y, h) = (0.11f64, 1.0f64 / 320.0);
        let mu = kappa * (theta - y);
        let up = sigma * sigma * h / 4.0 + sigma * (y * h).sqrt();
        let dn = sigma * sigma * h / 4.0 - sigma * (y * h).sqrt();
        let pu = (mu * h - dn) / (up - dn);
        assert!((0.0..=1.0).contains(&pu));
        let m2 = pu * up * up + (1.0 - pu) * dn * dn;
        let m3 = pu * up * up * up + (1.0 - pu) * dn * dn * dn;

        let s2 = sigma * sigma;
        let s4 = s2 * s2;
        let m2_closed = s2 * y * h + 0.5 * s2 * (mu - s2 / 8.0) * h * h;
        let m3_closed = mu * h * h * (s2 * y + 3.0 * s4 * h / 16.0) + 0.5 * s4 * y * h * h
            - s4 * s2 / 32.0 * h * h * h;
        assert!((m2 - m2_closed).abs() / m2_closed.abs() < 1e-12);
        assert!((m3 - m3_closed).abs() / m3_closed.abs() < 1e-12);
    }

    #[test]
    fn regime_report_is_clean_for_small_steps() {
        for params in [
            standard(),
            CirParams::new(2.0, 0.09, 0.3, 0.09).unwrap(),
            CirParams::new(0.5, 0.04, 1.0, 0.04).unwrap(),
        ] {
            let tree = build_lattice(&params, &grid(1.0, 400));
            let report = tree.regime_report();
            assert_eq!(report.clamp_count, 0, "params {params:?}");
            assert_eq!(report.band_multi_jump, 0, "params {params:?}");
            assert!(
                report.low_band_nodes == 0 || report.low_band_max_excess <= 1e-12,
                "params {params:?}: low-band excess {}",
                report.low_band_max_excess
            );
            assert!(
                report.dominance_max_excess <= 1e-12,
                "params {params:?}: dominance excess {}",
                report.dominance_max_excess
            );
        }
    }

    #[test]
    fn coarse_steps_trigger_probability_clamps() {
        // kappa h = 1.5 with theta far above y0 and a small vol-of-vol: the
        // root predictor y0 + kappa (theta - y0) h = 0.745 overshoots the top
        // value (sqrt(0.01) + 0.1 sqrt(0.5))^2 = 0.029, so the up branch falls
        // back to the edge and the probability is clamped at one.
        let params = CirParams::new(3.0, 0.5, 0.2, 0.01).unwrap();
        let tree = build_lattice(&params, &grid(1.0, 2));
        assert!(tree.clamp_count() > 0);
    }

    proptest! {
        #[test]
        fn lattice_structure_holds_for_random_params(
            kappa in 0.2f64..4.0,
            theta in 0.01f64..0.5,
            sigma in 0.05f64..1.5,
            y0 in 0.0f64..0.5,
            steps in 1usize..80,
        ) {
            let params = CirParams::new(kappa, theta, sigma, y0).unwrap();
            let tree = build_lattice(&params, &grid(1.0, steps));

            for n in 0..=steps {
                for k in 0..n {
                    // Levels are nondecreasing and consecutive levels interlace.
                    prop_assert!(tree.value(n, k) <= tree.value(n, k + 1));
                }
                if n < steps {
                    for k in 0..=n {
                        prop_assert!(tree.value(n + 1, k) <= tree.value(n, k));
                        prop_assert!(tree.value(n, k) <= tree.value(n + 1, k + 1));
                    }
                }
            }

            let h = tree.grid().h();
            for n in 0..steps {
                for k in 0..=n {
                    let mv = tree.node_move(n, k);
                    prop_assert!((mv.kd as usize) <= k);
                    prop_assert!((mv.ku as usize) > k);
                    prop_assert!((mv.ku as usize) <= n + 1);
                    prop_assert!((0.0..=1.0).contains(&mv.pu));

                    let y = tree.value(n, k);
                    let target = y + params.drift(y) * h;
                    let y_up = tree.value(n + 1, mv.ku as usize);
                    let y_dn = tree.value(n + 1, mv.kd as usize);
                    if y_dn <= target && target <= y_up {
                        // Unclamped branch: the first moment is exact.
                        let m1 = y_dn - y + mv.pu * (y_up - y_dn);
                        prop_assert!((m1 - params.drift(y) * h).abs() <= 1e-12 * (1.0 + y));
                    }
                }
            }
        }
    }
}
