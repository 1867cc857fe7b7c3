//! The single TOML config file.
//!
//! Sections mirror the core configs: `[data]` (panel source and split),
//! `[run]` (mining), `[strategy]` (backtest), `[sweep]` and `[output]`.
//! Every key is optional and defaults to the core default; unknown keys are
//! rejected. Overrides use dotted `section.key=value` paths.

use std::path::{Path, PathBuf};

use alphamine_core::backtest::StrategyConfig;
use alphamine_core::expr::{parse, Token};
use alphamine_core::panel::{synth_panel, Horizon, Planted, SplitSpec};
use alphamine_core::pipeline::RunConfig;
use alphamine_core::policy::UpdateMode;
use alphamine_core::pool::FitConfig;
use alphamine_core::Panel;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Environment variable holding the root for relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "ALPHAMINE_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub run: RunSection,
    pub strategy: StrategySection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Panel CSV; a synthetic panel is generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub synth_stocks: usize,
    pub synth_days: usize,
    pub synth_seed: u64,
    /// Expression planted into the synthetic 5-day returns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planted: Option<String>,
    pub planted_weight: f64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// Target horizon in days: 5 or 10.
    pub horizon: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            synth_stocks: 30,
            synth_days: 300,
            synth_seed: 100,
            planted: None,
            planted_weight: 0.8,
            train_fraction: 0.6,
            valid_fraction: 0.2,
            horizon: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub pool_size: usize,
    pub lambda: f64,
    pub max_episode_len: usize,
    pub cycles_per_iteration: usize,
    pub iterations: usize,
    pub quantile_level: f64,
    pub beta: f64,
    pub policy_lr: f64,
    pub discount: f64,
    pub c_puct: f64,
    /// `per-trajectory` or `batched`.
    pub update_mode: String,
    pub fit_lr: f64,
    pub fit_max_iters: usize,
    pub fit_tol: f64,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    /// Token names; the full vocabulary when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    pub cache_capacity: usize,
    /// Stop after this many iterations without a better validation IC.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = RunConfig::default();
        RunSection {
            seed: r.seed,
            pool_size: r.pool_size,
            lambda: r.lambda,
            max_episode_len: r.max_episode_len,
            cycles_per_iteration: r.cycles_per_iteration,
            iterations: r.iterations,
            quantile_level: r.quantile_level,
            beta: r.beta,
            policy_lr: r.policy_lr,
            discount: r.discount,
            c_puct: r.c_puct,
            update_mode: update_mode_name(r.update_mode).into(),
            fit_lr: r.fit.lr,
            fit_max_iters: r.fit.max_iters,
            fit_tol: r.fit.tol,
            embed_dim: r.embed_dim,
            hidden: r.hidden,
            layers: r.layers,
            head_hidden: r.head_hidden,
            vocabulary: None,
            cache_capacity: r.cache_capacity,
            patience: r.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub k: usize,
    pub rebalance_every: usize,
    pub cost_bps: f64,
    /// Fail instead of holding every eligible stock when fewer than k are.
    pub strict: bool,
}

impl Default for StrategySection {
    fn default() -> Self {
        let s = StrategyConfig::default();
        StrategySection {
            k: s.k,
            rebalance_every: s.rebalance_every,
            cost_bps: s.cost_bps,
            strict: s.strict,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub levels: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            levels: vec![0.6, 0.85, 0.95],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths resolve against `$ALPHAMINE_OUTPUT_ROOT` if set.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("alphamine-out"),
        }
    }
}

fn update_mode_name(m: UpdateMode) -> &'static str {
    match m {
        UpdateMode::PerTrajectory => "per-trajectory",
        UpdateMode::Batched => "batched",
    }
}

impl Config {
    /// Reads `path` (defaults when `None`) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, Error> {
        let (text, source) = match path {
            Some(p) => (
                std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                p.display().to_string(),
            ),
            None => (String::new(), "<defaults>".to_string()),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{source}: {}", e.message())))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{source}: {}", e.message())))?;
        cfg.run_config()
            .map_err(|e| Error::Config(format!("{source}: {e}")))?;
        cfg.check_data().map_err(|e| Error::Config(format!("{source}: {e}")))?;
        Ok(cfg)
    }

    /// Canonical TOML text; loading it yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn run_config(&self) -> Result<RunConfig, Error> {
        let r = &self.run;
        let update_mode = match r.update_mode.as_str() {
            "per-trajectory" => UpdateMode::PerTrajectory,
            "batched" => UpdateMode::Batched,
            other => {
                return Err(Error::Config(format!(
                    "run.update_mode: expected per-trajectory or batched, got {other:?}"
                )))
            }
        };
        let vocabulary = match &r.vocabulary {
            None => None,
            Some(names) => Some(
                names
                    .iter()
                    .map(|n| {
                        Token::from_name(n)
                            .filter(|t| !matches!(t, Token::Beg | Token::End))
                            .ok_or_else(|| Error::Config(format!("run.vocabulary: unknown token {n:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let cfg = RunConfig {
            pool_size: r.pool_size,
            lambda: r.lambda,
            max_episode_len: r.max_episode_len,
            cycles_per_iteration: r.cycles_per_iteration,
            iterations: r.iterations,
            quantile_level: r.quantile_level,
            beta: r.beta,
            policy_lr: r.policy_lr,
            discount: r.discount,
            c_puct: r.c_puct,
            seed: r.seed,
            horizon: self.horizon()?,
            update_mode,
            fit: FitConfig {
                lr: r.fit_lr,
                max_iters: r.fit_max_iters,
                tol: r.fit_tol,
            },
            embed_dim: r.embed_dim,
            hidden: r.hidden,
            layers: r.layers,
            head_hidden: r.head_hidden,
            vocabulary,
            cache_capacity: r.cache_capacity,
            patience: r.patience,
        };
        cfg.validate().map_err(|e| Error::Config(format!("run: {e}")))?;
        Ok(cfg)
    }

    pub fn strategy(&self) -> Result<StrategyConfig, Error> {
        let s = &self.strategy;
        if s.k == 0 || s.rebalance_every == 0 || !(s.cost_bps >= 0.0) {
            return Err(Error::Config(
                "strategy: k and rebalance_every must be positive, cost_bps non-negative".into(),
            ));
        }
        Ok(StrategyConfig {
            k: s.k,
            rebalance_every: s.rebalance_every,
            cost_bps: s.cost_bps,
            strict: s.strict,
        })
    }

    pub fn horizon(&self) -> Result<Horizon, Error> {
        Horizon::from_days(self.data.horizon)
            .ok_or_else(|| Error::Config(format!("data.horizon: expected 5 or 10, got {}", self.data.horizon)))
    }

    fn planted(&self) -> Result<Option<Planted>, Error> {
        match &self.data.planted {
            None => Ok(None),
            Some(text) => {
                let expr =
                    parse(text).map_err(|e| Error::Config(format!("data.planted: {text:?}: {e}")))?;
                Ok(Some(Planted {
                    expr,
                    weight: self.data.planted_weight,
                }))
            }
        }
    }

    fn check_data(&self) -> Result<(), Error> {
        self.planted()?;
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.valid_fraction > 0.0 && d.train_fraction + d.valid_fraction < 1.0)
        {
            return Err(Error::Config(
                "data.train_fraction and data.valid_fraction must be positive and sum below 1".into(),
            ));
        }
        for l in &self.sweep.levels {
            if !(*l > 0.0 && *l < 1.0) {
                return Err(Error::Config(format!("sweep.levels: {l} is outside (0, 1)")));
            }
        }
        self.strategy()?;
        Ok(())
    }

    /// Synthetic panel described by `[data]`, ignoring `path`.
    pub fn synth_panel(&self) -> Result<Panel, Error> {
        let d = &self.data;
        let planted = self.planted()?;
        synth_panel(d.synth_stocks, d.synth_days, d.synth_seed, planted.as_ref())
            .map_err(|e| Error::Config(format!("data: {e}")))
    }

    /// The panel from `data.path`, or the synthetic one.
    pub fn panel(&self) -> Result<Panel, Error> {
        match &self.data.path {
            Some(p) => crate::data::load_csv(p),
            None => self.synth_panel(),
        }
    }

    pub fn split(&self, panel: &Panel) -> Result<SplitSpec, Error> {
        SplitSpec::by_fraction(panel.n_days(), self.data.train_fraction, self.data.valid_fraction)
            .map_err(|e| Error::Config(format!("data: {e}")))
    }

    /// The output directory, resolved against `$ALPHAMINE_OUTPUT_ROOT`.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.output.dir;
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir.clone(),
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataSection::default(),
            run: RunSection::default(),
            strategy: StrategySection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Applies `section.key=value`; the value is read as TOML and falls back to a
/// bare string.
fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), Error> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override {ov:?} is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) || parts.len() != 2 {
        return Err(Error::Config(format!("override key {key:?} must be section.key")));
    }
    let value = parse_value(raw.trim());
    let section = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match section {
        toml::Value::Table(t) => {
            t.insert(parts[1].to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("override key {key:?}: {} is not a section", parts[0]))),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
