//! JSON scenario documents and their expansion into grid points.
//!
//! A document looks like
//!
//! ```json
//! {
//!   "name": "fig2",
//!   "horizon": 10,
//!   "market": { "lambda": 0.001, "alpha": 0.5, "beta": 0.5, "rho": 0.1 },
//!   "environment": { "a_env": 0.0, "b_env": 0.0, "sigma_env": 0.01,
//!                    "sigma_eps": 0.02, "rho_env_eps": 0.0, "mu_eps": 0.0 },
//!   "traders": [
//!     { "inventory": 100000.0, "risk_aversion": 0.001, "wealth": 0.0 },
//!     { "inventory": 100000.0, "risk_aversion": 0.001, "wealth": 0.0 }
//!   ],
//!   "simulation": { "paths": 10000, "seed": 20240001, "initial_price": 100.0 },
//!   "sweep": [ { "path": "environment.sigma_env", "values": [0.01, 1.0, 10.0] } ]
//! }
//! ```
//!
//! Every field is optional and defaults to the benchmark value. Per-period
//! parameters (`lambda`, `alpha`, `beta`, `a_env`, `b_env`, `sigma_env`,
//! `sigma_eps`, `mu_eps`) take a scalar, broadcast over the horizon, or an
//! array of length `horizon`.
//!
//! `sweep` lists grid axes; the grid is their Cartesian product with the first
//! axis outermost. An axis either varies one dotted path over `values`, or
//! varies several `paths` together, `values` then holding one row per point.

use std::fs;
use std::path::Path;

use impact_game_core::{validate, EnvParams, MarketParams, SimulationConfig, TraderSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_001;

/// A per-period parameter: one value for every period, or one per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Series {
    fn expand(&self, horizon: usize) -> Vec<f64> {
        match self {
            Series::Scalar(x) => vec![*x; horizon],
            Series::Vector(v) => v.clone(),
        }
    }

    fn collapse(values: &[f64]) -> Self {
        match values.first() {
            Some(&x) if values.iter().all(|v| v.to_bits() == x.to_bits()) => Series::Scalar(x),
            _ => Series::Vector(values.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub lambda: Series,
    pub alpha: Series,
    pub beta: Series,
    pub rho: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            lambda: Series::Scalar(0.001),
            alpha: Series::Scalar(0.5),
            beta: Series::Scalar(0.5),
            rho: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub a_env: Series,
    pub b_env: Series,
    pub sigma_env: Series,
    pub sigma_eps: Series,
    pub rho_env_eps: f64,
    pub mu_eps: Series,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            a_env: Series::Scalar(0.0),
            b_env: Series::Scalar(0.0),
            sigma_env: Series::Scalar(0.01),
            sigma_eps: Series::Scalar(0.02),
            rho_env_eps: 0.0,
            mu_eps: Series::Scalar(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraderSection {
    pub inventory: f64,
    pub risk_aversion: f64,
    pub wealth: f64,
}

impl Default for TraderSection {
    fn default() -> Self {
        Self {
            inventory: 1e5,
            risk_aversion: 0.001,
            wealth: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub paths: usize,
    pub seed: u64,
    pub initial_price: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            paths: 10_000,
            seed: DEFAULT_SEED,
            initial_price: 100.0,
        }
    }
}

/// One grid axis. Exactly one of `path` and `paths` is set; with `paths`,
/// each entry of `values` is a row with one value per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<String>>,
    pub values: Vec<Value>,
}

impl SweepAxis {
    pub fn single(path: &str, values: &[f64]) -> Self {
        Self {
            path: Some(path.to_string()),
            paths: None,
            values: values.iter().map(|&v| Value::from(v)).collect(),
        }
    }

    pub fn zipped(paths: &[&str], rows: &[&[f64]]) -> Self {
        Self {
            path: None,
            paths: Some(paths.iter().map(|p| p.to_string()).collect()),
            values: rows
                .iter()
                .map(|row| Value::Array(row.iter().map(|&v| Value::from(v)).collect()))
                .collect(),
        }
    }

    /// The axis as (paths, one row of values per point).
    fn columns(&self) -> Result<(Vec<String>, Vec<Vec<Value>>), String> {
        match (&self.path, &self.paths) {
            (Some(p), None) => Ok((vec![p.clone()], self.values.iter().map(|v| vec![v.clone()]).collect())),
            (None, Some(ps)) => {
                let rows = self
                    .values
                    .iter()
                    .map(|row| match row {
                        Value::Array(r) if r.len() == ps.len() => Ok(r.clone()),
                        _ => Err(format!("each row of a zipped axis must hold {} values", ps.len())),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((ps.clone(), rows))
            }
            _ => Err("a sweep axis needs exactly one of `path` and `paths`".to_string()),
        }
    }
}

/// The on-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Document {
    pub name: String,
    pub horizon: usize,
    pub market: MarketSection,
    pub environment: EnvironmentSection,
    pub traders: [TraderSection; 2],
    pub simulation: SimulationSection,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
}

impl Default for Document {
    fn default() -> Self {
        Self {
            name: "custom".to_string(),
            horizon: 10,
            market: MarketSection::default(),
            environment: EnvironmentSection::default(),
            traders: [TraderSection::default(); 2],
            simulation: SimulationSection::default(),
            sweep: Vec::new(),
        }
    }
}

/// A fully resolved scenario: the base game, the simulation settings and the
/// axes to grid over.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: MarketParams,
    pub env: EnvParams,
    pub traders: [TraderSpec; 2],
    pub simulation: SimulationConfig,
    pub sweep: Vec<SweepAxis>,
}

/// One point of a scenario's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Position in the grid, starting at 0.
    pub index: usize,
    /// `path=value` pairs applied to the base scenario.
    pub overrides: Vec<(String, Value)>,
    pub params: MarketParams,
    pub env: EnvParams,
    pub traders: [TraderSpec; 2],
    pub simulation: SimulationConfig,
}

impl GridPoint {
    pub fn label(&self) -> String {
        if self.overrides.is_empty() {
            return "base".to_string();
        }
        self.overrides
            .iter()
            .map(|(p, v)| format!("{p}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub(crate) fn context(&self, scenario: &str) -> String {
        format!("{scenario}, grid point {} ({})", self.index + 1, self.label())
    }
}

impl Scenario {
    /// Resolves a document and validates every grid point.
    pub fn from_document(doc: Document) -> Result<Self, CliError> {
        let sweep = doc.sweep.clone();
        let (params, env, traders, simulation) = resolve(&doc);
        let scenario = Self {
            name: doc.name,
            params,
            env,
            traders,
            simulation,
            sweep,
        };
        scenario.grid()?;
        Ok(scenario)
    }

    /// Parses and validates a JSON document; `origin` names it in errors.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        let doc: Document = serde_json::from_str(text).map_err(|e| CliError::parse(origin, e))?;
        Self::from_document(doc)
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// The canonical document, with constant series written as scalars.
    pub fn to_document(&self) -> Document {
        let (p, e) = (&self.params, &self.env);
        let trader = |t: &TraderSpec| TraderSection {
            inventory: t.initial_inventory,
            risk_aversion: t.risk_aversion,
            wealth: t.initial_wealth,
        };
        Document {
            name: self.name.clone(),
            horizon: p.horizon,
            market: MarketSection {
                lambda: Series::collapse(&p.lambda),
                alpha: Series::collapse(&p.alpha),
                beta: Series::collapse(&p.beta),
                rho: p.rho,
            },
            environment: EnvironmentSection {
                a_env: Series::collapse(&e.a_env),
                b_env: Series::collapse(&e.b_env),
                sigma_env: Series::collapse(&e.sigma_env),
                sigma_eps: Series::collapse(&e.sigma_eps),
                rho_env_eps: e.rho_env_eps,
                mu_eps: Series::collapse(&e.mu_eps),
            },
            traders: [trader(&self.traders[0]), trader(&self.traders[1])],
            simulation: SimulationSection {
                paths: self.simulation.num_paths,
                seed: self.simulation.seed,
                initial_price: self.simulation.initial_price,
            },
            sweep: self.sweep.clone(),
        }
    }

    /// Pretty-printed canonical document, newline terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("documents always serialise");
        s.push('\n');
        s
    }

    /// Expands the sweep into validated grid points, first axis outermost.
    pub fn grid(&self) -> Result<Vec<GridPoint>, CliError> {
        let invalid = |message: String| CliError::Invalid {
            context: self.name.clone(),
            message,
        };
        let axes = self
            .sweep
            .iter()
            .map(|a| a.columns())
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        if axes.iter().any(|(_, rows)| rows.is_empty()) {
            return Err(invalid("a sweep axis has no values".to_string()));
        }

        let mut base = self.to_document();
        base.sweep.clear();
        let base = serde_json::to_value(&base).expect("documents always serialise");

        let count: usize = axes.iter().map(|(_, rows)| rows.len()).product();
        let mut points = Vec::with_capacity(count);
        for index in 0..count {
            // mixed-radix digits of `index`, last axis fastest
            let mut rest = index;
            let mut picks = vec![0; axes.len()];
            for (k, (_, rows)) in axes.iter().enumerate().rev() {
                picks[k] = rest % rows.len();
                rest /= rows.len();
            }
            let mut value = base.clone();
            let mut overrides = Vec::new();
            for ((paths, rows), &pick) in axes.iter().zip(&picks) {
                for (path, v) in paths.iter().zip(&rows[pick]) {
                    set_path(&mut value, path, v.clone()).map_err(&invalid)?;
                    overrides.push((path.clone(), v.clone()));
                }
            }
            let mut point = GridPoint {
                index,
                overrides,
                params: self.params.clone(),
                env: self.env.clone(),
                traders: self.traders,
                simulation: self.simulation.clone(),
            };
            let doc: Document = serde_json::from_value(value).map_err(|e| CliError::Invalid {
                context: point.context(&self.name),
                message: e.to_string(),
            })?;
            (point.params, point.env, point.traders, point.simulation) = resolve(&doc);
            validate(&point.params, &point.env, &point.traders)
                .map_err(|e| CliError::core(point.context(&self.name), e))?;
            if point.simulation.num_paths == 0 {
                return Err(CliError::Invalid {
                    context: point.context(&self.name),
                    message: "simulation.paths must be at least 1".to_string(),
                });
            }
            points.push(point);
        }
        Ok(points)
    }
}

fn resolve(doc: &Document) -> (MarketParams, EnvParams, [TraderSpec; 2], SimulationConfig) {
    let h = doc.horizon;
    let (m, e) = (&doc.market, &doc.environment);
    let params = MarketParams {
        horizon: h,
        lambda: m.lambda.expand(h),
        alpha: m.alpha.expand(h),
        beta: m.beta.expand(h),
        rho: m.rho,
    };
    let env = EnvParams {
        a_env: e.a_env.expand(h),
        b_env: e.b_env.expand(h),
        sigma_env: e.sigma_env.expand(h),
        sigma_eps: e.sigma_eps.expand(h),
        rho_env_eps: e.rho_env_eps,
        mu_eps: e.mu_eps.expand(h),
    };
    let traders = doc.traders.map(|t| TraderSpec {
        initial_inventory: t.inventory,
        risk_aversion: t.risk_aversion,
        initial_wealth: t.wealth,
    });
    let simulation = SimulationConfig {
        num_paths: doc.simulation.paths,
        seed: doc.simulation.seed,
        initial_price: doc.simulation.initial_price,
        ..SimulationConfig::default()
    };
    (params, env, traders, simulation)
}

/// Replaces the value at a dotted path such as `traders.1.inventory`.
fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), String> {
    let mut node = root;
    for seg in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("unknown sweep path `{path}`"))?;
    }
    *node = new;
    Ok(())
}

/// Reads and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Scenario, CliError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Scenario::from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_benchmark() {
        let s = Scenario::from_json("{}", "test").unwrap();
        assert_eq!(s.params, MarketParams::benchmark(10));
        assert_eq!(s.env, EnvParams::benchmark(10));
        assert_eq!(s.simulation.seed, DEFAULT_SEED);
        assert_eq!(s.grid().unwrap().len(), 1);
    }

    #[test]
    fn scalars_broadcast_and_arrays_pass_through() {
        let s = Scenario::from_json(r#"{"horizon": 3, "market": {"lambda": [0.001, 0.002, 0.003]}}"#, "t").unwrap();
        assert_eq!(s.params.lambda, vec![0.001, 0.002, 0.003]);
        assert_eq!(s.params.alpha, vec![0.5; 3]);
        assert!(matches!(s.to_document().market.lambda, Series::Vector(_)));
        assert!(matches!(s.to_document().market.alpha, Series::Scalar(_)));
    }

    #[test]
    fn wrong_length_is_a_validation_error() {
        let err = Scenario::from_json(r#"{"horizon": 3, "market": {"beta": [0.1, 0.2]}}"#, "t").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Scenario::from_json("{\n  \"horizon\": \"ten\"\n}", "bad.json").unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
        let err = Scenario::from_json(r#"{"market": {"gamma": 1}}"#, "bad.json").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn grid_is_cartesian_with_first_axis_outermost() {
        let mut s = Scenario::from_json("{}", "t").unwrap();
        s.sweep = vec![
            SweepAxis::single("environment.a_env", &[1.0, 2.0]),
            SweepAxis::zipped(&["traders.0.inventory", "traders.1.inventory"], &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]),
        ];
        let g = s.grid().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].env.a_env[0], 1.0);
        assert_eq!(g[2].env.a_env[0], 1.0);
        assert_eq!(g[3].env.a_env[0], 2.0);
        assert_eq!(g[4].traders[0].initial_inventory, 3.0);
        assert_eq!(g[4].traders[1].initial_inventory, 4.0);
        assert_eq!(g[4].label(), "environment.a_env=2.0, traders.0.inventory=3.0, traders.1.inventory=4.0");
    }

    #[test]
    fn unknown_sweep_path_is_rejected() {
        let err = Scenario::from_json(r#"{"sweep": [{"path": "market.gamma", "values": [1]}]}"#, "t").unwrap_err();
        assert!(err.to_string().contains("market.gamma"));
        let err = Scenario::from_json(r#"{"sweep": [{"values": [1]}]}"#, "t").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn invalid_grid_point_names_the_point() {
        let err = Scenario::from_json(r#"{"sweep": [{"path": "market.alpha", "values": [0.5, 1.0]}]}"#, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grid point 2") && msg.contains("admissibility violated"), "{msg}");
    }

    #[test]
    fn horizon_can_be_swept() {
        let s = Scenario::from_json(r#"{"sweep": [{"path": "horizon", "values": [2, 5]}]}"#, "t").unwrap();
        let g = s.grid().unwrap();
        assert_eq!(g[1].params.horizon, 5);
        assert_eq!(g[1].env.sigma_eps.len(), 5);
    }
}
