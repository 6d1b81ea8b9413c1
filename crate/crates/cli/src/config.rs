//! Run configuration.
//!
//! A config file is TOML with one section per component. Any key left out
//! takes the default for the selected system, so the smallest valid file is
//! empty. The fully resolved config is what gets echoed next to every run's
//! outputs, and re-loading it yields the same values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cacto_core::bench::{GridSpec, Region};
use cacto_core::cacto::TrainConfig;
use cacto_core::environments::{CostParams, ManipulatorGeometry, StateBounds};
use cacto_core::{EnvKind, EnvModel, SolverOptions};
use serde::{Deserialize, Serialize};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub dt: f64,
    pub horizon: usize,
    pub u_max: Vec<f64>,
    pub workspace: [[f64; 2]; 2],
    pub state_bounds: StateBounds,
    pub cost: CostParams,
    pub geometry: ManipulatorGeometry,
}

impl From<&EnvModel> for EnvConfig {
    fn from(m: &EnvModel) -> Self {
        EnvConfig {
            kind: m.kind,
            dt: m.dt,
            horizon: m.horizon,
            u_max: m.u_max.clone(),
            workspace: m.workspace,
            state_bounds: m.state_bounds.clone(),
            cost: m.cost.clone(),
            geometry: m.geometry.clone(),
        }
    }
}

impl EnvConfig {
    pub fn model(&self) -> EnvModel {
        EnvModel {
            kind: self.kind,
            dt: self.dt,
            horizon: self.horizon,
            u_max: self.u_max.clone(),
            cost: self.cost.clone(),
            geometry: self.geometry.clone(),
            workspace: self.workspace,
            state_bounds: self.state_bounds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub grid: GridSpec,
    /// Rows inside this rectangle are also reported separately.
    pub hard_region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    /// Random initial policies per MDP.
    pub starts: usize,
    /// Largest accepted `max |V - V*|`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed, expanded into per-component streams.
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub trajopt: SolverOptions,
    pub bench: BenchConfig,
    pub tabular: TabularConfig,
}

impl RunConfig {
    /// Defaults for one system. Learning rates and lookahead come from
    /// [`TrainConfig::for_env`].
    pub fn defaults(kind: EnvKind) -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs").join(kind.name()),
            env: EnvConfig::from(&EnvModel::default_for(kind)),
            train: TrainConfig::for_env(kind),
            trajopt: SolverOptions::default(),
            bench: BenchConfig { grid: GridSpec::default(), hard_region: Region::hard_region(kind) },
            tabular: TabularConfig { starts: 10, tolerance: 1e-9 },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().context("config is not valid TOML")?;
        let kind = match user.get("env").and_then(|e| e.get("kind")) {
            Some(k) => k.clone().try_into::<EnvKind>().context("env.kind")?,
            None => EnvKind::DoubleIntegrator,
        };
        let user_train_seed = user
            .get("train")
            .and_then(|t| t.get("seed"))
            .map(|s| s.as_integer().context("train.seed must be an integer"))
            .transpose()?;
        let mut merged = toml::Table::try_from(RunConfig::defaults(kind))?;
        overlay(&mut merged, user);
        let mut cfg: RunConfig = merged.try_into().context("invalid config")?;
        if let Some(s) = user_train_seed {
            if s != cfg.seed as i64 {
                bail!("train.seed ({s}) differs from the global seed ({}); set only `seed`", cfg.seed);
            }
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env.model();
        env.validate()?;
        self.train.validate(env.horizon)?;
        self.bench.grid.validate()?;
        self.bench.hard_region.validate()?;
        let o = &self.trajopt;
        if o.line_search_steps == 0 {
            bail!("trajopt.line_search_steps must be positive");
        }
        for (name, v) in [
            ("rel_tol", o.rel_tol),
            ("grad_tol", o.grad_tol),
            ("mu_init", o.mu_init),
            ("mu_min", o.mu_min),
            ("mu_max", o.mu_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("trajopt.{name} must be positive, got {v}");
            }
        }
        if !(o.mu_increase > 1.0 && o.mu_decrease > 1.0) {
            bail!("trajopt.mu_increase and mu_decrease must exceed 1");
        }
        if self.tabular.starts == 0 || self.tabular.tolerance.is_nan() || self.tabular.tolerance < 0.0 {
            bail!("tabular.starts must be positive and tabular.tolerance non-negative");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved config into the output directory.
    pub fn write_effective(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        let path = self.out.join(EFFECTIVE_CONFIG);
        fs::write(&path, self.to_toml()?).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

/// Recursively replaces entries of `base` by those of `top`. Tables merge,
/// everything else (arrays included) is replaced wholesale.
fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_double_integrator_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::defaults(EnvKind::DoubleIntegrator));
    }

    #[test]
    fn per_system_learning_rates() {
        let cfg = RunConfig::from_toml("[env]\nkind = \"manipulator\"\n").unwrap();
        assert_eq!(cfg.train.lr_actor, 5e-5);
        assert_eq!(cfg.env.u_max.len(), 3);
    }

    #[test]
    fn nested_override_keeps_siblings() {
        let cfg = RunConfig::from_toml("[env.cost]\nw_d = 2.0\n[bench.grid]\nnx = 3\n").unwrap();
        let d = RunConfig::defaults(EnvKind::DoubleIntegrator);
        assert_eq!(cfg.env.cost.w_d, 2.0);
        assert_eq!(cfg.env.cost.target, d.env.cost.target);
        assert_eq!(cfg.bench.grid.nx, 3);
        assert_eq!(cfg.bench.grid.ny, d.bench.grid.ny);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["bogus = 1", "[train]\nepisode = 3", "[env.cost]\nw_z = 1.0", "[extra]\n"] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn conflicting_train_seed_rejected() {
        assert!(RunConfig::from_toml("seed = 3\n[train]\nseed = 4\n").is_err());
        assert_eq!(RunConfig::from_toml("seed = 3\n[train]\nseed = 3\n").unwrap().train.seed, 3);
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "[train]\nbatch_size = 0",
            "[train]\nlookahead = 100",
            "[train]\nlookahead = \"td\"",
            "[env]\nhorizon = 0",
            "[env]\nu_max = [1.0]",
            "[trajopt]\nrel_tol = -1.0",
            "[bench.grid]\nnx = 0",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trip_through_text() {
        for kind in EnvKind::ALL {
            let mut cfg = RunConfig::defaults(kind);
            cfg.set_seed(11);
            cfg.train.lookahead = cacto_core::cacto::Lookahead::Steps(7);
            let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(again, cfg);
        }
    }
}
