//! Scenario files.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "storage": {"eta_c": 0.5, "eta_d": 0.5, "lambda": 1.0, "delta": 1.0, "x0": 0.75, "horizon": 2},
//!   "bounds": {"u_max": [1, 1], "u_min": [1, 1], "x_max": [1, 1], "x_min": [0, 0]},
//!   "cost": {"family": "energy_arbitrage", "p_buy": [1, 1], "p_sell": [1, 1]},
//!   "solve": {"max_iterations": 100000, "seed": 7},
//!   "outputs": ["solution", "certificate"]
//! }
//! ```
//!
//! **`u_min` holds discharge limits as nonnegative magnitudes**: the power
//! box in period `t` is `[-u_min[t], u_max[t]]`.
//!
//! Cost families and their parameters:
//!
//! | `family`           | parameters          |
//! |--------------------|---------------------|
//! | `peak_shaving`     | `load`              |
//! | `load_balancing`   | `load`              |
//! | `power_regulation` | `signal`            |
//! | `energy_arbitrage` | `p_buy`, `p_sell`   |
//! | `power_smoothing`  | `renewable`         |
//!
//! `solve` and `outputs` are optional. Unknown fields are rejected everywhere.

use std::fs;
use std::path::Path;

use ess_reform::{
    validate_params, Bounds, CostSpec, InitialPoint, ModelError, Problem, SolveOptions, StepRule, StorageParams,
};
use serde::{Deserialize, Serialize};
use serde_json::error::Category;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid scenario: {0}")]
    Validation(#[from] ModelError),
}

/// Requested artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Solution,
    FeasibleSetSamples,
    Certificate,
    OracleComparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Constant,
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    Offset,
    BoxMidpoint,
    UserSupplied(Vec<f64>),
}

/// Solver settings given in the file. Anything left out keeps the library
/// default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_projection_cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_point: Option<StartPoint>,
}

impl SolveOverrides {
    pub fn apply(&self, mut options: SolveOptions) -> SolveOptions {
        if let Some(v) = self.max_iterations {
            options.max_iterations = v;
        }
        let (constant, size) = match options.step_rule {
            StepRule::Constant(a) => (true, a),
            StepRule::Diminishing(a) => (false, a),
        };
        let constant = self.step_rule.map_or(constant, |k| k == StepKind::Constant);
        let size = self.step_size.or(size);
        options.step_rule = if constant {
            StepRule::Constant(size)
        } else {
            StepRule::Diminishing(size)
        };
        if let Some(v) = self.projection_tolerance {
            options.projection_tolerance = v;
        }
        if let Some(v) = self.max_projection_cycles {
            options.max_projection_cycles = v;
        }
        if let Some(v) = self.objective_tolerance {
            options.objective_tolerance = v;
        }
        if let Some(v) = self.seed {
            options.seed = v;
        }
        if let Some(p) = &self.initial_point {
            options.initial_point = match p {
                StartPoint::Offset => InitialPoint::Offset,
                StartPoint::BoxMidpoint => InitialPoint::BoxMidpoint,
                StartPoint::UserSupplied(x) => InitialPoint::UserSupplied(x.clone()),
            };
        }
        options
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub storage: StorageParams,
    pub bounds: Bounds,
    pub cost: CostSpec,
    pub solve: SolveOverrides,
    pub outputs: Vec<Output>,
}

impl Scenario {
    pub fn problem(&self) -> Result<Problem, ScenarioError> {
        let system = validate_params(self.storage.clone(), self.bounds.clone())?;
        Problem::new(system, self.cost.clone()).map_err(|e| ScenarioError::Schema(e.to_string()))
    }

    /// File settings on top of the library defaults.
    pub fn solve_options(&self) -> SolveOptions {
        self.solve.apply(SolveOptions::default())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StorageDoc {
    eta_c: f64,
    eta_d: f64,
    lambda: f64,
    delta: f64,
    x0: f64,
    horizon: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    u_max: Vec<f64>,
    u_min: Vec<f64>,
    x_max: Vec<f64>,
    x_min: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum CostDoc {
    PeakShaving { load: Vec<f64> },
    LoadBalancing { load: Vec<f64> },
    PowerRegulation { signal: Vec<f64> },
    EnergyArbitrage { p_buy: Vec<f64>, p_sell: Vec<f64> },
    PowerSmoothing { renewable: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    storage: StorageDoc,
    bounds: BoundsDoc,
    cost: CostDoc,
    #[serde(default)]
    solve: SolveOverrides,
    #[serde(default)]
    outputs: Vec<Output>,
}

impl From<CostDoc> for CostSpec {
    fn from(doc: CostDoc) -> Self {
        match doc {
            CostDoc::PeakShaving { load } => CostSpec::PeakShaving { load },
            CostDoc::LoadBalancing { load } => CostSpec::LoadBalancing { load },
            CostDoc::PowerRegulation { signal } => CostSpec::PowerRegulation { signal },
            CostDoc::EnergyArbitrage { p_buy, p_sell } => CostSpec::EnergyArbitrage { p_buy, p_sell },
            CostDoc::PowerSmoothing { renewable } => CostSpec::PowerSmoothing { renewable },
        }
    }
}

impl TryFrom<&CostSpec> for CostDoc {
    type Error = ScenarioError;

    fn try_from(c: &CostSpec) -> Result<Self, ScenarioError> {
        Ok(match c {
            CostSpec::PeakShaving { load } => CostDoc::PeakShaving { load: load.clone() },
            CostSpec::LoadBalancing { load } => CostDoc::LoadBalancing { load: load.clone() },
            CostSpec::PowerRegulation { signal } => CostDoc::PowerRegulation { signal: signal.clone() },
            CostSpec::EnergyArbitrage { p_buy, p_sell } => CostDoc::EnergyArbitrage {
                p_buy: p_buy.clone(),
                p_sell: p_sell.clone(),
            },
            CostSpec::PowerSmoothing { renewable } => CostDoc::PowerSmoothing {
                renewable: renewable.clone(),
            },
            CostSpec::Custom(c) => {
                return Err(ScenarioError::Schema(format!(
                    "custom cost '{}' cannot be written to a scenario file",
                    c.name()
                )))
            }
        })
    }
}

fn check_length(what: &str, actual: usize, horizon: usize) -> Result<(), ScenarioError> {
    if actual != horizon {
        return Err(ScenarioError::Schema(format!(
            "{what} has {actual} entries but storage.horizon is {horizon}"
        )));
    }
    Ok(())
}

/// Parses and validates a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| match e.classify() {
        Category::Data => ScenarioError::Schema(e.to_string()),
        _ => ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;

    let n = doc.storage.horizon;
    for (what, v) in [
        ("bounds.u_max", &doc.bounds.u_max),
        ("bounds.u_min", &doc.bounds.u_min),
        ("bounds.x_max", &doc.bounds.x_max),
        ("bounds.x_min", &doc.bounds.x_min),
    ] {
        check_length(what, v.len(), n)?;
    }
    let cost = CostSpec::from(doc.cost);
    for (name, v) in cost.parameter_vectors() {
        check_length(&format!("cost.{name}"), v.len(), n)?;
    }
    if let Some(StartPoint::UserSupplied(x)) = &doc.solve.initial_point {
        check_length("solve.initial_point.user_supplied", x.len(), n)?;
    }

    let storage = StorageParams {
        eta_c: doc.storage.eta_c,
        eta_d: doc.storage.eta_d,
        lambda: doc.storage.lambda,
        delta: doc.storage.delta,
        x0: doc.storage.x0,
        horizon: n,
    };
    let bounds = Bounds {
        u_max: doc.bounds.u_max,
        u_min_mag: doc.bounds.u_min,
        x_max: doc.bounds.x_max,
        x_min: doc.bounds.x_min,
    };
    let system = validate_params(storage, bounds)?;
    let (storage, bounds) = system.into_parts();
    Ok(Scenario {
        storage,
        bounds,
        cost,
        solve: doc.solve,
        outputs: doc.outputs,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Pretty-printed JSON that [`parse_scenario`] reads back unchanged.
pub fn scenario_to_json(s: &Scenario) -> Result<String, ScenarioError> {
    let doc = ScenarioDoc {
        storage: StorageDoc {
            eta_c: s.storage.eta_c,
            eta_d: s.storage.eta_d,
            lambda: s.storage.lambda,
            delta: s.storage.delta,
            x0: s.storage.x0,
            horizon: s.storage.horizon,
        },
        bounds: BoundsDoc {
            u_max: s.bounds.u_max.clone(),
            u_min: s.bounds.u_min_mag.clone(),
            x_max: s.bounds.x_max.clone(),
            x_min: s.bounds.x_min.clone(),
        },
        cost: CostDoc::try_from(&s.cost)?,
        solve: s.solve.clone(),
        outputs: s.outputs.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_scenario(s: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    let text = scenario_to_json(s)?;
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_PERIOD: &str = r#"{
        "storage": {"eta_c": 0.5, "eta_d": 0.5, "lambda": 1.0, "delta": 1.0, "x0": 0.75, "horizon": 2},
        "bounds": {"u_max": [1, 1], "u_min": [1, 1], "x_max": [1, 1], "x_min": [0, 0]},
        "cost": {"family": "energy_arbitrage", "p_buy": [1, 1], "p_sell": [1, 1]}
    }"#;

    #[test]
    fn two_period_scenario_loads() {
        let s = parse_scenario(TWO_PERIOD).unwrap();
        assert_eq!(s.storage.eta_c, 0.5);
        assert_eq!(s.storage.eta_d, 0.5);
        assert_eq!(s.storage.delta, 1.0);
        assert_eq!(s.storage.x0, 0.75);
        assert_eq!(s.storage.lambda, 1.0);
        assert_eq!(s.bounds.u_min_mag, vec![1.0, 1.0]);
        assert!(s.outputs.is_empty());
        assert_eq!(s.solve, SolveOverrides::default());
    }

    #[test]
    fn length_mismatch_is_a_schema_error() {
        let text = TWO_PERIOD.replace(
            r#""family": "energy_arbitrage", "p_buy": [1, 1], "p_sell": [1, 1]"#,
            r#""family": "peak_shaving", "load": [1, 2, 3]"#,
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(
            matches!(&err, ScenarioError::Schema(m) if m.contains("cost.load")),
            "{err}"
        );
    }

    #[test]
    fn unknown_family_lists_valid_tags() {
        let text = TWO_PERIOD.replace("energy_arbitrage", "frequency");
        let err = parse_scenario(&text).unwrap_err();
        let ScenarioError::Schema(m) = &err else {
            panic!("{err:?}")
        };
        for tag in [
            "peak_shaving",
            "load_balancing",
            "power_regulation",
            "energy_arbitrage",
            "power_smoothing",
        ] {
            assert!(m.contains(tag), "{m}");
        }
    }

    #[test]
    fn unknown_and_missing_fields_are_schema_errors() {
        let extra = TWO_PERIOD.replace(r#""x0": 0.75"#, r#""x0": 0.75, "capacity": 3"#);
        assert!(matches!(parse_scenario(&extra), Err(ScenarioError::Schema(_))));
        let missing = TWO_PERIOD.replace(r#""x0": 0.75, "#, "");
        assert!(matches!(parse_scenario(&missing), Err(ScenarioError::Schema(m)) if m.contains("x0")));
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\n  \"storage\": {\n    \"eta_c\": 0.5,,\n";
        match parse_scenario(text).unwrap_err() {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn model_validation_is_forwarded() {
        let text = TWO_PERIOD.replace(r#""eta_c": 0.5"#, r#""eta_c": 1.5"#);
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::Validation(ModelError::InvalidEfficiency { .. }))
        ));
    }

    #[test]
    fn overrides_apply_on_top_of_defaults() {
        let text = TWO_PERIOD.replace(
            r#""cost""#,
            r#""solve": {"step_rule": "constant", "step_size": 0.01, "seed": 9,
                         "initial_point": {"user_supplied": [0.5, 0.5]}},
               "cost""#,
        );
        let s = parse_scenario(&text).unwrap();
        let o = s.solve_options();
        assert_eq!(o.step_rule, StepRule::Constant(Some(0.01)));
        assert_eq!(o.seed, 9);
        assert_eq!(o.initial_point, InitialPoint::UserSupplied(vec![0.5, 0.5]));
        assert_eq!(o.max_iterations, SolveOptions::default().max_iterations);
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut s = parse_scenario(TWO_PERIOD).unwrap();
        s.solve = SolveOverrides {
            max_iterations: Some(1234),
            step_rule: Some(StepKind::Diminishing),
            step_size: Some(0.1 + 0.2),
            projection_tolerance: Some(1e-12),
            max_projection_cycles: Some(77),
            objective_tolerance: Some(1e-7),
            seed: Some(u64::MAX),
            initial_point: Some(StartPoint::BoxMidpoint),
        };
        s.outputs = vec![Output::Solution, Output::OracleComparison];
        s.storage.x0 = 1.0 / 3.0;
        let back = parse_scenario(&scenario_to_json(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
