//! Scenario files.
//!
//! A scenario is a TOML document with the sections `system`, `metric`,
//! `controller`, `simulation`, `setpoint`, `verify` and `output`. Unknown
//! keys are rejected everywhere. Values can be overridden from the command
//! line with dotted paths (`controller.lambda=0.5`), which are applied to the
//! parsed document before it is interpreted.

use crate::CliError;
use ccm_adapt::control::{AdaptiveState, ControllerConfig};
use ccm_adapt::geometry::{ConstantMetric, ExpressionMetric, MetricField};
use ccm_adapt::sim::{Scenario, SimConfig};
use ccm_adapt::systems::{ExpressionSystem, ExpressionSystemSpec, LopezExample, LopezExampleMetric, Setpoint, SystemModel};
use ccm_adapt::verify::VerificationGrid;
use ccm_adapt::{Vector, systems::lopez};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const BUILTIN_SYSTEMS: [&str; 1] = ["lopez_example"];
pub const BUILTIN_METRICS: [&str; 2] = ["lopez_example", "identity"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Name of a built-in system; exclusive with `expressions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<ExpressionSystemSpec>,
    /// True matched parameters used by the plant.
    pub theta_true_m: Vec<f64>,
    /// True extended-matched parameters used by the plant.
    pub theta_true_em: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricExpressions {
    /// Dual metric `W` as a square matrix of expressions in `x1..xn` and
    /// `theta1..thetap`; only the upper triangle is read.
    pub dual: Vec<Vec<String>>,
    #[serde(default)]
    pub param_dim: usize,
    pub w_lower: f64,
    pub w_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<MetricExpressions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: Vec<f64>,
    pub theta0_m: Vec<f64>,
    pub theta0_em: Vec<f64>,
    #[serde(default = "defaults::t_final")]
    pub t_final: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::period")]
    pub control_period: f64,
    #[serde(default = "defaults::period")]
    pub log_period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_radius: Option<f64>,
}

mod defaults {
    use ccm_adapt::sim::SimConfig;

    pub fn t_final() -> f64 {
        SimConfig::default().t_final
    }

    pub fn dt() -> f64 {
        SimConfig::default().dt
    }

    pub fn period() -> f64 {
        SimConfig::default().control_period
    }
}

/// Desired state, feedforward input and state rate; all zero when omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetpointSection {
    pub x_d: Vec<f64>,
    pub u_d: Vec<f64>,
    pub x_d_dot: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Rate to certify; the controller's `lambda` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Grid; the built-in example grid when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<VerificationGrid>,
    /// Matched-parameter vectors for the invariance check.
    #[serde(default)]
    pub matched_samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for artifacts; relative paths resolve against the working
    /// directory. The `--out` flag wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub plot_json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemSection,
    pub metric: MetricSection,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub setpoint: SetpointSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `path = value` in `table`, creating intermediate tables.
/// `value` is read as a TOML literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key.path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key `{path}` is malformed")));
    }
    let mut node = table;
    for (depth, key) in keys[..keys.len() - 1].iter().enumerate() {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override key `{}` is not a table", keys[..=depth].join(".")))
        })?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parse `text` with `overrides` applied on top.
    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Self::from_toml_str(text);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_toml_str(&merged)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_str_with_overrides(&text, overrides).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The effective configuration as TOML text; parsing it back yields an
    /// identical configuration.
    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_model(&self) -> Result<SystemModel, CliError> {
        let s = &self.system;
        let system: Arc<dyn ccm_adapt::systems::UncertainSystem> = match (&s.builtin, &s.expressions) {
            (Some(name), None) => match name.as_str() {
                "lopez_example" => Arc::new(LopezExample),
                other => {
                    return Err(CliError::Config(format!(
                        "system.builtin: unknown system `{other}` (known: {})",
                        BUILTIN_SYSTEMS.join(", ")
                    )))
                }
            },
            (None, Some(spec)) => Arc::new(
                ExpressionSystem::from_spec(spec).map_err(|e| CliError::Config(format!("system.expressions: {e}")))?,
            ),
            _ => {
                return Err(CliError::Config(
                    "system: exactly one of `builtin` and `expressions` must be given".into(),
                ))
            }
        };
        SystemModel::new(
            self.name.clone(),
            system,
            Vector::from_vec(s.theta_true_m.clone()),
            Vector::from_vec(s.theta_true_em.clone()),
        )
        .map_err(|e| CliError::Config(format!("system.theta_true_m/theta_true_em: {e}")))
    }

    pub fn build_metric(&self, state_dim: usize, param_dim: usize) -> Result<Arc<dyn MetricField>, CliError> {
        let metric: Arc<dyn MetricField> = match (&self.metric.builtin, &self.metric.expressions) {
            (Some(name), None) => match name.as_str() {
                "lopez_example" => Arc::new(LopezExampleMetric),
                "identity" => Arc::new(ConstantMetric::identity(state_dim, 0)),
                other => {
                    return Err(CliError::Config(format!(
                        "metric.builtin: unknown metric `{other}` (known: {})",
                        BUILTIN_METRICS.join(", ")
                    )))
                }
            },
            (None, Some(e)) => Arc::new(
                ExpressionMetric::parse(&e.dual, e.param_dim, (e.w_lower, e.w_upper))
                    .map_err(|err| CliError::Config(format!("metric.expressions: {err}")))?,
            ),
            _ => {
                return Err(CliError::Config(
                    "metric: exactly one of `builtin` and `expressions` must be given".into(),
                ))
            }
        };
        if metric.dim() != state_dim {
            return Err(CliError::Config(format!(
                "metric: dimension {} does not match the {state_dim} system states",
                metric.dim()
            )));
        }
        if metric.param_dim() != 0 && metric.param_dim() != param_dim {
            return Err(CliError::Config(format!(
                "metric: depends on {} parameters, system has {param_dim} extended-matched parameters",
                metric.param_dim()
            )));
        }
        Ok(metric)
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            t_final: s.t_final,
            dt: s.dt,
            control_period: s.control_period,
            log_period: s.log_period,
            blowup_radius: s.blowup_radius,
        }
    }

    fn setpoint(&self, n: usize, m: usize) -> Result<Setpoint, CliError> {
        let sp = &self.setpoint;
        let pick = |key: &str, v: &[f64], len: usize| -> Result<Vector, CliError> {
            match v.len() {
                0 => Ok(Vector::zeros(len)),
                l if l == len => Ok(Vector::from_column_slice(v)),
                l => Err(CliError::Config(format!("setpoint.{key} has {l} entries, expected {len}"))),
            }
        };
        Ok(Setpoint {
            x_d: pick("x_d", &sp.x_d, n)?,
            u_d: pick("u_d", &sp.u_d, m)?,
            x_d_dot: pick("x_d_dot", &sp.x_d_dot, n)?,
        })
    }

    /// Interpret the whole file and check that every dimension agrees.
    pub fn build(&self) -> Result<Scenario, CliError> {
        let model = self.build_model()?;
        let sys = model.system();
        let (n, m, pm, pe) = (sys.state_dim(), sys.input_dim(), sys.matched_dim(), sys.extended_dim());
        let metric = self.build_metric(n, pe)?;
        let sim = &self.simulation;
        for (key, len, want) in [
            ("simulation.x0", sim.x0.len(), n),
            ("simulation.theta0_m", sim.theta0_m.len(), pm),
            ("simulation.theta0_em", sim.theta0_em.len(), pe),
        ] {
            if len != want {
                return Err(CliError::Config(format!("{key} has {len} entries, expected {want}")));
            }
        }
        let setpoint = self.setpoint(n, m)?;
        let sim_config = self.sim_config();
        sim_config
            .validate()
            .map_err(|e| CliError::Config(format!("simulation: {e}")))?;
        self.controller
            .validate(sys)
            .map_err(|e| CliError::Config(format!("controller: {e}")))?;
        Ok(Scenario {
            name: self.name.clone(),
            initial: AdaptiveState {
                t: 0.0,
                x: Vector::from_vec(sim.x0.clone()),
                theta_m: Vector::from_vec(sim.theta0_m.clone()),
                theta_em: Vector::from_vec(sim.theta0_em.clone()),
            },
            model,
            metric,
            controller: self.controller.clone(),
            setpoint,
            sim: sim_config,
        })
    }

    pub fn verify_grid(&self, n: usize, p: usize) -> Result<VerificationGrid, CliError> {
        let grid = match &self.verify.grid {
            Some(g) => g.clone(),
            None if self.system.builtin.as_deref() == Some("lopez_example") => VerificationGrid::example_default(),
            None => return Err(CliError::Config("verify.grid is required for expression systems".into())),
        };
        grid.validate(n, p).map_err(|e| CliError::Config(format!("verify.grid: {e}")))?;
        Ok(grid)
    }

    pub fn verify_lambda(&self) -> f64 {
        self.verify.lambda.unwrap_or(self.controller.lambda)
    }

    pub fn matched_samples(&self, p: usize) -> Result<Vec<Vector>, CliError> {
        self.verify
            .matched_samples
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() == p {
                    Ok(Vector::from_column_slice(v))
                } else {
                    Err(CliError::Config(format!(
                        "verify.matched_samples[{i}] has {} entries, expected {p}",
                        v.len()
                    )))
                }
            })
            .collect()
    }
}

/// The built-in example with the true and initial parameters of the
/// reference experiment; used for defaults in tests and docs.
pub fn lopez_reference() -> ScenarioConfig {
    ScenarioConfig {
        name: "lopez".into(),
        system: SystemSection {
            builtin: Some("lopez_example".into()),
            expressions: None,
            theta_true_m: lopez::TRUE_THETA_M.to_vec(),
            theta_true_em: lopez::TRUE_THETA_EM.to_vec(),
        },
        metric: MetricSection {
            builtin: Some("lopez_example".into()),
            expressions: None,
        },
        controller: ControllerConfig::default(),
        simulation: SimulationSection {
            x0: vec![1.0, 1.0, 1.0],
            theta0_m: lopez::INITIAL_THETA_M.to_vec(),
            theta0_em: lopez::INITIAL_THETA_EM.to_vec(),
            t_final: defaults::t_final(),
            dt: defaults::dt(),
            control_period: defaults::period(),
            log_period: defaults::period(),
            blowup_radius: None,
        },
        setpoint: SetpointSection::default(),
        verify: VerifySection::default(),
        output: OutputSection::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_creates_and_replaces() {
        let mut t: toml::Table = "[controller]\nlambda = 0.1\n".parse().unwrap();
        apply_override(&mut t, "controller.lambda=0.5").unwrap();
        apply_override(&mut t, "controller.gamma_m=[1.0, 2.0]").unwrap();
        apply_override(&mut t, "metric.builtin=identity").unwrap();
        assert_eq!(t["controller"]["lambda"].as_float(), Some(0.5));
        assert_eq!(t["controller"]["gamma_m"].as_array().unwrap().len(), 2);
        assert_eq!(t["metric"]["builtin"].as_str(), Some("identity"));
        assert!(apply_override(&mut t, "controller.lambda.x=1").is_err());
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn reference_round_trips() {
        let cfg = lopez_reference();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
        cfg.build().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut text = lopez_reference().to_toml_string().unwrap();
        text = text.replace("[controller]\n", "[controller]\nlamda = 0.3\n");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
    }

    #[test]
    fn dimension_errors_name_the_key() {
        let mut cfg = lopez_reference();
        cfg.simulation.x0 = vec![1.0, 2.0];
        let err = cfg.build().unwrap_err().to_string();
        assert!(err.contains("simulation.x0"), "{err}");
    }
}
