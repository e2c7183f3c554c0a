//! Experiment configuration: a TOML file with lowercase snake-case keys.

use std::path::{Path, PathBuf};

use intent_games::environments::{
    make_furniture, make_lunar_lander, make_manipulation, make_platooning, make_scalar_toy,
    EnvironmentName, EnvironmentSpec, FurnitureParams, LunarLanderParams, ManipulationParams,
    PlatooningParams, ScalarToyParams,
};
use intent_games::estimation::EstimatorKind;
use intent_games::simulation::IntentSwitch;
use intent_games::teaching::TeachingWeights;
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const METRICS: [&str; 3] = ["regret", "time_to_convergence", "final_belief_error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: String,
    /// Overrides of the environment's parameter record.
    #[serde(default)]
    pub params: toml::Table,
    /// Any of `active`, `passive`, `complete_info`.
    #[serde(default)]
    pub models: Vec<String>,
    /// True intents to sweep; the environment's default grid when absent.
    pub theta: Option<Vec<f64>>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    /// Sweep of `ρ2 / ρ1` for the active model, with `ρ1` held fixed.
    pub ratios: Option<Vec<f64>>,
    /// Gradient step of point-estimate environments.
    pub alpha: Option<f64>,
    pub horizon: Option<usize>,
    pub switch: Option<SwitchConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_std: f64,
    /// Passes over the horizon when timing teaching actions.
    #[serde(default = "default_repeats")]
    pub bench_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub stage: usize,
    pub theta: f64,
}

fn default_metrics() -> Vec<String> {
    METRICS.iter().map(|m| m.to_string()).collect()
}

fn default_threshold() -> f64 {
    0.05
}

fn default_repeats() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Active,
    Passive,
    CompleteInfo,
}

impl ModelKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "active" => Some(ModelKind::Active),
            "passive" => Some(ModelKind::Passive),
            "complete_info" => Some(ModelKind::CompleteInfo),
            _ => None,
        }
    }
}

/// A configuration checked against its environment's schema.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: EnvironmentSpec,
    pub models: Vec<ModelKind>,
    pub thetas: Vec<f64>,
    /// Active weights without θ*; one entry per swept ratio.
    pub active: Vec<(f64, f64)>,
    pub output: PathBuf,
}

impl Experiment {
    pub fn weights(&self, rho: (f64, f64), theta: f64) -> Result<TeachingWeights, CliError> {
        Ok(TeachingWeights::new(
            rho.0,
            rho.1,
            DVector::from_element(1, theta),
        )?)
    }

    pub fn metric(&self, name: &str) -> bool {
        self.config.metrics.iter().any(|m| m == name)
    }
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config: cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config: {}", e.message())))
}

pub fn default_config(name: EnvironmentName) -> Result<ExperimentConfig, CliError> {
    let params = match name {
        EnvironmentName::Manipulation => to_table(&ManipulationParams::default()),
        EnvironmentName::LunarLander => to_table(&LunarLanderParams::default()),
        EnvironmentName::Furniture => to_table(&FurnitureParams::default()),
        EnvironmentName::Platooning => to_table(&PlatooningParams::default()),
        EnvironmentName::ScalarToy => to_table(&ScalarToyParams::default()),
    }?;
    Ok(ExperimentConfig {
        environment: name.to_string(),
        params,
        models: vec!["active".into(), "passive".into(), "complete_info".into()],
        theta: None,
        rho1: None,
        rho2: None,
        ratios: None,
        alpha: None,
        horizon: None,
        switch: None,
        metrics: default_metrics(),
        convergence_threshold: default_threshold(),
        output: None,
        seed: 0,
        noise_std: 0.0,
        bench_repeats: default_repeats(),
    })
}

fn to_table<T: Serialize>(params: &T) -> Result<toml::Table, CliError> {
    toml::Table::try_from(params).map_err(|e| CliError::Config(format!("params: {e}")))
}

fn from_table<T: DeserializeOwned>(table: &toml::Table) -> Result<T, CliError> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("params: {}", e.message().trim())))
}

fn build_spec(name: EnvironmentName, params: &toml::Table) -> Result<EnvironmentSpec, CliError> {
    let spec = match name {
        EnvironmentName::Manipulation => make_manipulation(&from_table(params)?),
        EnvironmentName::LunarLander => make_lunar_lander(&from_table(params)?),
        EnvironmentName::Furniture => make_furniture(&from_table(params)?),
        EnvironmentName::Platooning => make_platooning(&from_table(params)?),
        EnvironmentName::ScalarToy => make_scalar_toy(&from_table(params)?),
    };
    spec.map_err(|e| CliError::Config(format!("params: {e}")))
}

fn finite(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key}: must be finite")))
    }
}

/// Validates `config` and builds its environment.
///
/// `require_models` is false for subcommands that ignore the model list.
pub fn prepare(config: ExperimentConfig, require_models: bool) -> Result<Experiment, CliError> {
    let name: EnvironmentName = config.environment.parse().map_err(|_| {
        CliError::Config(format!(
            "environment: unknown environment '{}'",
            config.environment
        ))
    })?;

    let mut models = Vec::new();
    for (k, m) in config.models.iter().enumerate() {
        let kind = ModelKind::parse(m)
            .ok_or_else(|| CliError::Config(format!("models[{k}]: unknown model '{m}'")))?;
        if models.contains(&kind) {
            return Err(CliError::Config(format!("models[{k}]: '{m}' listed twice")));
        }
        models.push(kind);
    }
    if require_models && models.is_empty() {
        return Err(CliError::Config("models: must be non-empty".into()));
    }
    for (k, m) in config.metrics.iter().enumerate() {
        if !METRICS.contains(&m.as_str()) {
            return Err(CliError::Config(format!(
                "metrics[{k}]: unknown metric '{m}'"
            )));
        }
    }
    if !(config.convergence_threshold > 0.0) {
        return Err(CliError::Config(
            "convergence_threshold: must be positive".into(),
        ));
    }
    if !(config.noise_std >= 0.0) || !config.noise_std.is_finite() {
        return Err(CliError::Config("noise_std: must be non-negative".into()));
    }
    if config.bench_repeats == 0 {
        return Err(CliError::Config("bench_repeats: must be positive".into()));
    }

    let mut params = config.params.clone();
    if let Some(h) = config.horizon {
        if h == 0 {
            return Err(CliError::Config("horizon: must be positive".into()));
        }
        params.insert("horizon".into(), toml::Value::Integer(h as i64));
    }
    let mut spec = build_spec(name, &params)?;

    if let Some(alpha) = config.alpha {
        match spec.estimator {
            EstimatorKind::Mle { .. } => spec.estimator = EstimatorKind::Mle { alpha },
            EstimatorKind::Gaussian { .. } => {
                return Err(CliError::Config(format!(
                    "alpha: {name} uses a Gaussian estimator"
                )));
            }
        }
        spec.estimator
            .validate()
            .map_err(|e| CliError::Config(format!("alpha: {e}")))?;
    }
    if let Some(s) = &config.switch {
        if s.stage >= spec.game.dims().horizon {
            return Err(CliError::Config(format!(
                "switch.stage: {} is beyond the horizon {}",
                s.stage,
                spec.game.dims().horizon
            )));
        }
        spec.switch = Some(IntentSwitch {
            stage: s.stage,
            theta: DVector::from_element(1, finite("switch.theta", s.theta)?),
        });
    }

    let rho1 = finite("rho1", config.rho1.unwrap_or(spec.weights.rho1))?;
    let rho2 = finite("rho2", config.rho2.unwrap_or(spec.weights.rho2))?;
    let active = match &config.ratios {
        Some(ratios) => {
            if ratios.is_empty() {
                return Err(CliError::Config("ratios: must be non-empty".into()));
            }
            if config.rho2.is_some() {
                return Err(CliError::Config("ratios: conflicts with rho2".into()));
            }
            ratios
                .iter()
                .enumerate()
                .map(|(k, &r)| Ok((rho1, finite(&format!("ratios[{k}]"), r)? * rho1)))
                .collect::<Result<Vec<_>, CliError>>()?
        }
        None => vec![(rho1, rho2)],
    };
    for &(r1, r2) in &active {
        TeachingWeights::new(r1, r2, spec.weights.theta_star.clone())
            .map_err(|e| CliError::Config(format!("rho1/rho2: {e}")))?;
    }
    spec.weights = TeachingWeights::new(active[0].0, active[0].1, spec.weights.theta_star.clone())?;

    let thetas = config
        .theta
        .clone()
        .unwrap_or_else(|| spec.theta_grid.clone());
    if thetas.is_empty() {
        return Err(CliError::Config("theta: must be non-empty".into()));
    }
    for (k, &t) in thetas.iter().enumerate() {
        finite(&format!("theta[{k}]"), t)?;
    }
    let output = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Experiment {
        config,
        spec,
        models,
        thetas,
        active,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    fn config_error(text: &str) -> String {
        match prepare(parse(text), true) {
            Err(CliError::Config(msg)) => msg,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_models_rejected() {
        assert_eq!(
            config_error("environment = \"lunar_lander\"\nmodels = []"),
            "models: must be non-empty"
        );
    }

    #[test]
    fn bad_keys_are_named() {
        assert!(
            config_error("environment = \"mars\"\nmodels = [\"passive\"]")
                .starts_with("environment:")
        );
        assert!(
            config_error("environment = \"lunar_lander\"\nmodels = [\"lazy\"]")
                .starts_with("models[0]:")
        );
        let msg = config_error(
            "environment = \"lunar_lander\"\nmodels = [\"passive\"]\n[params]\nwobble = 1.0",
        );
        assert!(
            msg.starts_with("params:") && msg.contains("wobble"),
            "{msg}"
        );
        let msg = config_error("environment = \"furniture\"\nmodels = [\"passive\"]\nalpha = 0.5");
        assert!(msg.starts_with("alpha:"), "{msg}");
        let msg = config_error(
            "environment = \"manipulation\"\nmodels = [\"passive\"]\n[params]\ndt = 0.0",
        );
        assert!(msg.starts_with("params:"), "{msg}");
        assert!(toml::from_str::<ExperimentConfig>("environment = \"x\"\nbogus = 1").is_err());
    }

    #[test]
    fn ratio_sweep_expands_active_weights() {
        let exp = prepare(
            parse("environment = \"manipulation\"\nmodels = [\"active\"]\nrho1 = 2.0\nratios = [0.0, 1.0, 10.0]"),
            true,
        )
        .unwrap();
        assert_eq!(exp.active, vec![(2.0, 0.0), (2.0, 2.0), (2.0, 20.0)]);
    }

    #[test]
    fn defaults_round_trip() {
        for name in EnvironmentName::ALL {
            let cfg = default_config(name).unwrap();
            let text = toml::to_string(&cfg).unwrap();
            let back: ExperimentConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg);
            prepare(back, true).unwrap();
        }
    }

    #[test]
    fn overrides_apply() {
        let exp = prepare(
            parse(
                "environment = \"lunar_lander\"\nmodels = [\"passive\"]\nalpha = 0.25\nhorizon = 30\ntheta = [5.0]\n\
                 switch = { stage = 10, theta = 7.0 }",
            ),
            true,
        )
        .unwrap();
        assert_eq!(exp.spec.estimator, EstimatorKind::Mle { alpha: 0.25 });
        assert_eq!(exp.spec.game.dims().horizon, 30);
        assert_eq!(exp.thetas, vec![5.0]);
        assert_eq!(exp.spec.switch.as_ref().unwrap().stage, 10);
    }
}
