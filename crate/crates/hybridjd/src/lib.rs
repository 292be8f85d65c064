//! Hybrid tree / finite-difference pricing engine for jump-diffusions whose
//! variance follows a square-root (CIR) process, covering the Heston and
//! Bates models.
//!
//! The engine splits the two-dimensional problem by coordinate:
//!
//! * the variance `Y` is approximated by a recombining binomial tree on a
//!   square-root lattice ([`cir_tree`]),
//! * the (transformed) log-price `X` is handled on a uniform grid by a
//!   one-step implicit finite-difference operator for the local part and an
//!   explicit quadrature operator for the jump part ([`fd_ops`], [`levy`]),
//! * the backward recursion couples the two: at every tree node the value
//!   vector is mixed along the tree branches, the jump operator is applied
//!   explicitly and the tridiagonal system is solved implicitly ([`hybrid`]).
//!
//! Model parameters and the change of variables that decouples the Brownian
//! drivers live in [`models`]; a Monte Carlo reference pricer with exact CIR
//! sampling is provided in [`mc_oracle`] to validate prices independently.
//!
//! The crate is primarily a library. Each major capability has a runnable
//! example:
//!
//! ```text
//! cargo run --release --example tree_convergence      # CIR tree weak convergence
//! cargo run --release --example price_heston          # Heston call, both schemes, MC cross-check
//! cargo run --release --example price_bates           # Bates with Merton or Kou jumps
//! cargo run --release --example operator_diagnostics  # norms, quadrature and moment checks
//! cargo run --release --example mc_reference          # exact CIR sampling and Euler pricing
//! cargo run --release --example convergence_study     # temporal/spatial order studies, CSV + gnuplot
//! ```
//!
//! A thin command-line binary exposes the same functionality as subcommands
//! (`price`, `converge`, `diagnose`, `tree-dump`, `mc-price`); see
//! [`cli`] and the README for the file formats.

pub mod cir_tree;
pub mod cli;
pub mod config;
pub mod convergence;
mod error;
pub mod fd_ops;
pub mod hybrid;
pub mod levy;
pub mod mc_oracle;
pub mod models;

pub use error::{Error, Result};
