//! Backward induction mixing the variance lattice with implicit space steps
//!
//! The value function lives on the product of the variance lattice and a
//! uniform log-price grid: at time level `n` the state is one price vector
//! per lattice node. A backward step from level `n + 1` to node `(n, k)`
//! does, with the node's branch data `(ku, kd, pu)`:
//!
//! ```text
//!     mixed = v[n+1][kd] + pu (v[n+1][ku] - v[n+1][kd])        (lattice move)
//!     rhs   = B mixed                                          (explicit jumps)
//!     A v[n][k] = rhs,  A frozen at y = y[n][k]                (implicit local part)
//! ```
//!
//! The price is the root-node value at the grid center. Constants survive
//! every stage exactly (the mixing is affine, `B` reproduces constants
//! bitwise, `A` has unit row sums), so a constant payoff prices to itself up
//! to solver roundoff.
//!
//! Nodes within a level are independent, and each node writes its own value
//! vector, so the sweep parallelizes over nodes with results identical for
//! any thread count.

use rayon::prelude::*;

use crate::cir_tree::{build_lattice, CirTree, TimeGrid};
use crate::error::{Error, Result};
use crate::fd_ops::{
    assemble_implicit, assemble_jump, inverse_norm_estimate, jump_norm_bound,
    jump_norm_estimate, Scheme, SpatialGrid,
};
use crate::levy::build_quadrature;
use crate::models::ReferenceModel;

/// Discretization choices for one pricing run.
#[derive(Debug, Clone, Copy)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub grid: TimeGrid,
    pub spatial: SpatialGrid,
    /// Neglected tail mass of the jump quadrature; `None` for the default.
    pub tail_tol: Option<f64>,
    /// Attach operator-norm diagnostics to the result.
    pub diagnostics: bool,
}

/// The value function at one time level: a price vector per lattice node.
#[derive(Debug, Clone)]
pub struct ValueLayer {
    pub level: usize,
    /// Variance value of each node at this level.
    pub variance_levels: Vec<f64>,
    /// `node_values[k][i]`: node `k`, price grid index `i`.
    pub node_values: Vec<Vec<f64>>,
}

/// Stability diagnostics of the operators used by a run.
#[derive(Debug, Clone, Copy)]
pub struct PriceDiagnostics {
    /// Worst `|A^-1|` over the probed variance levels.
    pub a_inv_norm: f64,
    /// `true` when every probe was certified rather than iterated.
    pub a_inv_certified: bool,
    pub b_norm: f64,
    pub b_norm_bound: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PriceResult {
    pub value: f64,
    /// Probability clamps recorded while building the lattice.
    pub clamp_count: usize,
    pub diagnostics: Option<PriceDiagnostics>,
}

/// A spatial half-width covering the drift of the transformed log price plus
/// six standard deviations of its diffusive and jump parts at an elevated
/// variance level.
pub fn default_half_width(model: &ReferenceModel, maturity: f64) -> f64 {
    let cir = model.cir();
    let y_ref = 2.0 * cir.y0.max(cir.theta);
    let drift = model.mu_x(0.0).abs().max(model.mu_x(y_ref).abs()) * maturity;
    let law = model.law();
    let var = model.sigma_x2(y_ref) * maturity
        + law.lambda() * maturity * law.second_moment() * model.gamma() * model.gamma();
    drift + 6.0 * var.sqrt()
}

/// Prices `E[payoff(X_T, Y_T)]` by the hybrid backward scheme.
pub fn price<F>(model: &ReferenceModel, payoff: &F, config: &SchemeConfig) -> Result<PriceResult>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let (result, _) = price_with_layer(model, payoff, config, None)?;
    Ok(result)
}

/// As [`price`], additionally returning the value layer at `dump_level`.
pub fn price_with_layer<F>(
    model: &ReferenceModel,
    payoff: &F,
    config: &SchemeConfig,
    dump_level: Option<usize>,
) -> Result<(PriceResult, Option<ValueLayer>)>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let n_steps = config.grid.steps();
    if let Some(level) = dump_level {
        if level > n_steps {
            return Err(Error::invalid(
                "dump_layer",
                level as f64,
                "exceeds the number of time steps",
            ));
        }
    }
    let tree = build_lattice(model.cir(), &config.grid);
    let h = config.grid.h();
    let quad = build_quadrature(model.law(), model.gamma(), config.spatial.dx(), config.tail_tol)?;
    let jump = assemble_jump(&quad, h)?;
    let n_points = config.spatial.len();

    let mut next: Vec<Vec<f64>> = (0..=n_steps)
        .into_par_iter()
        .map(|k| {
            let y = tree.value(n_steps, k);
            config.spatial.points().map(|x| payoff(x, y)).collect()
        })
        .collect();
    for row in &next {
        for &v in row {
            if !v.is_finite() {
                return Err(Error::Numerical(
                    "payoff produced a non-finite terminal value".into(),
                ));
            }
        }
    }

    let mut dumped = match dump_level {
        Some(level) if level == n_steps => Some(snapshot(level, &tree, &next)),
        _ => None,
    };

    for n in (0..n_steps).rev() {
        let level: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let y = tree.value(n, k);
                let mv = tree.node_move(n, k);
                let up = &next[mv.ku as usize];
                let dn = &next[mv.kd as usize];
                let mut mixed = Vec::with_capacity(n_points);
                for i in 0..n_points {
                    mixed.push(dn[i] + mv.pu * (up[i] - dn[i]));
                }
                let mut rhs = vec![0.0; n_points];
                jump.apply(&mixed, &mut rhs);
                let a = assemble_implicit(
                    config.scheme,
                    model.mu_x(y),
                    model.sigma_x2(y),
                    h,
                    &config.spatial,
                )?;
                let mut out = vec![0.0; n_points];
                let mut scratch = Vec::new();
                a.solve_into(&rhs, &mut scratch, &mut out)?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        next = level;
        if dump_level == Some(n) {
            dumped = Some(snapshot(n, &tree, &next));
        }
    }

    let value = next[0][config.spatial.center()];
    if !value.is_finite() {
        return Err(Error::Numerical("backward sweep produced a non-finite price".into()));
    }

    let diagnostics = if config.diagnostics {
        Some(probe_norms(model, &tree, &jump, config)?)
    } else {
        None
    };

    Ok((
        PriceResult {
            value,
            clamp_count: tree.clamp_count(),
            diagnostics,
        },
        dumped,
    ))
}

fn snapshot(level: usize, tree: &CirTree, values: &[Vec<f64>]) -> ValueLayer {
    ValueLayer {
        level,
        variance_levels: tree.level(level).to_vec(),
        node_values: values.to_vec(),
    }
}

/// Probes the operator norms at the zero, initial and largest variance
/// levels of the lattice.
fn probe_norms(
    model: &ReferenceModel,
    tree: &CirTree,
    jump: &crate::fd_ops::JumpOperator,
    config: &SchemeConfig,
) -> Result<PriceDiagnostics> {
    let n_steps = config.grid.steps();
    let h = config.grid.h();
    let y_max = tree
        .level(n_steps)
        .last()
        .copied()
        .unwrap_or(model.cir().y0);
    let mut a_inv_norm = 0.0f64;
    let mut a_inv_certified = true;
    for y in [0.0, model.cir().y0, y_max] {
        let a = assemble_implicit(
            config.scheme,
            model.mu_x(y),
            model.sigma_x2(y),
            h,
            &config.spatial,
        )?;
        let (norm, certified) = inverse_norm_estimate(&a)?;
        a_inv_norm = a_inv_norm.max(norm);
        a_inv_certified &= certified;
    }
    Ok(PriceDiagnostics {
        a_inv_norm,
        a_inv_certified,
        b_norm: jump_norm_estimate(jump, config.scheme),
        b_norm_bound: jump_norm_bound(jump),
    })
}
