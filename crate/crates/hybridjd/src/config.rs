//! TOML run configuration and command-line overrides
//!
//! A run file has up to six sections:
//!
//! ```toml
//! [market]
//! s0 = 1.0
//! rate = 0.05
//! dividend = 0.0
//! rho = -0.5
//!
//! [cir]
//! kappa = 2.0
//! theta = 0.04
//! sigma = 0.2
//! y0 = 0.04
//!
//! [jumps]                 # optional; defaults to no jumps
//! kind = "merton"         # "none" | "merton" | "kou"
//! lambda = 0.2
//! m = -0.1                # merton: jump mean
//! delta = 0.15            # merton: jump standard deviation
//! p = 0.5                 # kou: upward probability
//! eta1 = 10.0             # kou: upward rate (> 1)
//! eta2 = 5.0              # kou: downward rate
//! compensate = true
//!
//! [scheme]
//! scheme = "centered"     # "centered" | "upwind"
//! steps = 100
//! maturity = 1.0
//! dx = 0.01
//! half_width = 1.2        # optional; defaults to drift + 6 stddev sizing
//! tail_tol = 1e-13        # optional
//!
//! [payoff]                # optional; defaults to an at-the-money call
//! kind = "call"           # "call" | "put" | "asset" | "constant" | "gauss"
//! strike = 1.0
//! value = 1.0             # constant payoff level
//! discount = true
//!
//! [mc]                    # optional; Monte Carlo reference settings
//! paths = 100000
//! substeps = 16
//! seed = 42
//! antithetic = false
//! ```
//!
//! Overrides of the form `section.key=value` (the `--set` flag) are applied
//! to the parsed TOML before validation, so `--set scheme.steps=400` behaves
//! exactly like editing the file.

use std::path::Path;

use serde::Deserialize;

use crate::cir_tree::{CirParams, TimeGrid};
use crate::error::{Error, Result};
use crate::fd_ops::{Scheme, SpatialGrid};
use crate::hybrid::{default_half_width, SchemeConfig};
use crate::levy::JumpLaw;
use crate::mc_oracle::McConfig;
use crate::models::{BatesParams, ReferenceModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub market: MarketSection,
    pub cir: CirSection,
    #[serde(default)]
    pub jumps: JumpsSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub payoff: PayoffSection,
    #[serde(default)]
    pub mc: McSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub s0: f64,
    pub rate: f64,
    #[serde(default)]
    pub dividend: f64,
    pub rho: f64,
    /// Jump scale on the transformed log price; defaults to `1` when jumps
    /// are present and `0` otherwise.
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirSection {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct JumpsSection {
    pub kind: String,
    pub lambda: Option<f64>,
    pub m: Option<f64>,
    pub delta: Option<f64>,
    pub p: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub compensate: bool,
}

impl Default for JumpsSection {
    fn default() -> JumpsSection {
        JumpsSection {
            kind: "none".to_string(),
            lambda: None,
            m: None,
            delta: None,
            p: None,
            eta1: None,
            eta2: None,
            compensate: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_scheme_name")]
    pub scheme: String,
    pub steps: usize,
    pub maturity: f64,
    pub dx: f64,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub tail_tol: Option<f64>,
}

fn default_scheme_name() -> String {
    "centered".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct PayoffSection {
    pub kind: String,
    pub strike: Option<f64>,
    pub value: Option<f64>,
    pub discount: bool,
}

impl Default for PayoffSection {
    fn default() -> PayoffSection {
        PayoffSection {
            kind: "call".to_string(),
            strike: None,
            value: None,
            discount: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct McSection {
    pub paths: Option<usize>,
    pub substeps: Option<usize>,
    pub seed: Option<u64>,
    pub antithetic: Option<bool>,
}

/// Terminal payoff choices; `Gauss` acts on the transformed log price
/// directly and the others on the asset level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffKind {
    Call { strike: f64 },
    Put { strike: f64 },
    Asset,
    Constant { value: f64 },
    Gauss,
}

impl PayoffKind {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::Call { .. } => "call",
            PayoffKind::Put { .. } => "put",
            PayoffKind::Asset => "asset",
            PayoffKind::Constant { .. } => "constant",
            PayoffKind::Gauss => "gauss",
        }
    }

    /// Builds the payoff on the transformed pair `(x, y)`, discounting by
    /// `exp(-rate * maturity)` when requested.
    pub fn build(
        &self,
        model: &ReferenceModel,
        maturity: f64,
        discount: bool,
    ) -> Box<dyn Fn(f64, f64) -> f64 + Sync + Send> {
        let factor = if discount {
            (-model.rate() * maturity).exp()
        } else {
            1.0
        };
        let ros = model.rho_over_sigma();
        match *self {
            PayoffKind::Call { strike } => Box::new(move |x, y| {
                factor * ((x + ros * y).exp() - strike).max(0.0)
            }),
            PayoffKind::Put { strike } => Box::new(move |x, y| {
                factor * (strike - (x + ros * y).exp()).max(0.0)
            }),
            PayoffKind::Asset => Box::new(move |x, y| factor * (x + ros * y).exp()),
            PayoffKind::Constant { value } => Box::new(move |_, _| factor * value),
            PayoffKind::Gauss => {
                let x0 = model.x0();
                Box::new(move |x, _| factor * (-(x - x0) * (x - x0)).exp())
            }
        }
    }
}

impl FileConfig {
    /// Jump law from the `[jumps]` section.
    pub fn jump_law(&self) -> Result<JumpLaw> {
        let j = &self.jumps;
        let need = |field: &'static str, v: Option<f64>| -> Result<f64> {
            v.ok_or_else(|| {
                Error::Config(format!("jumps.kind = {:?} requires jumps.{field}", j.kind))
            })
        };
        let law = match j.kind.as_str() {
            "none" => JumpLaw::None,
            "merton" => JumpLaw::Merton {
                lambda: need("lambda", j.lambda)?,
                mean: need("m", j.m)?,
                std: need("delta", j.delta)?,
            },
            "kou" => JumpLaw::Kou {
                lambda: need("lambda", j.lambda)?,
                up_prob: need("p", j.p)?,
                eta_up: need("eta1", j.eta1)?,
                eta_down: need("eta2", j.eta2)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "jumps.kind {other:?} is not one of \"none\", \"merton\", \"kou\""
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }

    /// Model parameters from the `[market]`, `[cir]` and `[jumps]` sections.
    pub fn bates(&self) -> Result<BatesParams> {
        let cir = CirParams::new(
            self.cir.kappa,
            self.cir.theta,
            self.cir.sigma,
            self.cir.y0,
        )?;
        let jumps = self.jump_law()?;
        let gamma = self
            .market
            .gamma
            .unwrap_or(if jumps.lambda() > 0.0 { 1.0 } else { 0.0 });
        let params = BatesParams {
            s0: self.market.s0,
            rate: self.market.rate,
            dividend: self.market.dividend,
            rho: self.market.rho,
            cir,
            jumps,
            gamma,
            compensate: self.jumps.compensate,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn scheme_kind(&self) -> Result<Scheme> {
        self.scheme.scheme.parse()
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.scheme.maturity, self.scheme.steps)
    }

    /// Discretization for `model`, sizing the spatial domain automatically
    /// when `scheme.half_width` is absent.
    pub fn scheme_config(&self, model: &ReferenceModel) -> Result<SchemeConfig> {
        let grid = self.time_grid()?;
        let half_width = match self.scheme.half_width {
            Some(w) => w,
            None => default_half_width(model, self.scheme.maturity),
        };
        let spatial = SpatialGrid::centered_at(model.x0(), self.scheme.dx, half_width)?;
        Ok(SchemeConfig {
            scheme: self.scheme_kind()?,
            grid,
            spatial,
            tail_tol: self.scheme.tail_tol,
            diagnostics: false,
        })
    }

    pub fn payoff_kind(&self) -> Result<PayoffKind> {
        let p = &self.payoff;
        match p.kind.as_str() {
            "call" => Ok(PayoffKind::Call {
                strike: p.strike.ok_or_else(|| {
                    Error::Config("payoff.kind = \"call\" requires payoff.strike".into())
                })?,
            }),
            "put" => Ok(PayoffKind::Put {
                strike: p.strike.ok_or_else(|| {
                    Error::Config("payoff.kind = \"put\" requires payoff.strike".into())
                })?,
            }),
            "asset" => Ok(PayoffKind::Asset),
            "constant" => Ok(PayoffKind::Constant {
                value: p.value.unwrap_or(1.0),
            }),
            "gauss" => Ok(PayoffKind::Gauss),
            other => Err(Error::Config(format!(
                "payoff.kind {other:?} is not one of \"call\", \"put\", \"asset\", \
                 \"constant\", \"gauss\""
            ))),
        }
    }

    pub fn mc_config(&self) -> McConfig {
        let defaults = McConfig::default();
        McConfig {
            paths: self.mc.paths.unwrap_or(defaults.paths),
            substeps: self.mc.substeps.unwrap_or(defaults.substeps),
            seed: self.mc.seed.unwrap_or(defaults.seed),
            antithetic: self.mc.antithetic.unwrap_or(defaults.antithetic),
        }
    }
}

/// Reads and parses a config file, applying `section.key=value` overrides.
pub fn load(path: &Path, sets: &[String]) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, sets)
}

/// Parses config text and applies overrides; see [`load`].
pub fn parse(text: &str, sets: &[String]) -> Result<FileConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    for set in sets {
        apply_override(&mut table, set)?;
    }
    table
        .try_into()
        .map_err(|e| Error::Config(format!("config: {e}")))
}

fn apply_override(table: &mut toml::Table, set: &str) -> Result<()> {
    let (path, raw) = set.split_once('=').ok_or_else(|| {
        Error::Config(format!("override {set:?} is not of the form section.key=value"))
    })?;
    let mut keys = path.split('.').collect::<Vec<_>>();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override {set:?} has an empty key segment")));
    }
    let leaf = keys.pop().expect("split yields at least one segment");
    let mut current = table;
    for key in keys {
        let entry = current
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override {set:?}: {key} is not a table"))
        })?;
    }
    current.insert(leaf.to_string(), parse_value(raw));
    Ok(())
}

/// Interprets an override value with TOML scalar types: boolean, integer,
/// float, then string.
fn parse_value(raw: &str) -> toml::Value {
    if raw == "true" {
        return toml::Value::Boolean(true);
    }
    if raw == "false" {
        return toml::Value::Boolean(false);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}
