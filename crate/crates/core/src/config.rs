//! Experiment configuration: strict JSON documents, presets, validation.
//!
//! Documents are validated as raw JSON first so that every problem (unknown
//! keys, missing keys, wrong types, out-of-range values) is reported in one
//! pass, then deserialized into the typed structures below.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dynamics::{IterateMode, Order, Schedule};
use crate::equilibria::OracleSettings;
use crate::error::{Error, Result};
use crate::games::{AgentCost, LinearRegressionGame, LogisticGame, PopulationSpec, StrategicGame, Vector};
use crate::optimize::{Perturbation, StepSchedule};

pub const DESK_SCALE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    Linear {
        beta: Vec<f64>,
        sigma2: f64,
        budget: f64,
        #[serde(default = "default_theta_radius")]
        theta_radius: f64,
    },
    LogisticConstrained {
        p: f64,
        alpha: Vec<f64>,
        n: usize,
        budget: f64,
        #[serde(default)]
        population_seed: u64,
        #[serde(default = "default_theta_radius")]
        theta_radius: f64,
    },
    LogisticCostly {
        p: f64,
        alpha: Vec<f64>,
        n: usize,
        lambda: f64,
        #[serde(default)]
        population_seed: u64,
        #[serde(default = "default_theta_radius")]
        theta_radius: f64,
    },
}

fn default_theta_radius() -> f64 {
    crate::games::DEFAULT_THETA_RADIUS
}

impl GameSpec {
    pub fn dim(&self) -> usize {
        match self {
            GameSpec::Linear { beta, .. } => beta.len(),
            GameSpec::LogisticConstrained { alpha, .. } | GameSpec::LogisticCostly { alpha, .. } => alpha.len(),
        }
    }

    /// Builds the game; `samples` overrides the population size of logistic games.
    pub fn build_with_samples(&self, samples: Option<usize>) -> Result<Box<dyn StrategicGame>> {
        match self {
            GameSpec::Linear {
                beta,
                sigma2,
                budget,
                theta_radius,
            } => {
                let beta = Vector::from_column_slice(beta);
                let set = crate::games::BallSet::new(*theta_radius, beta.len())?;
                Ok(Box::new(LinearRegressionGame::with_theta_set(beta, *sigma2, *budget, set)?))
            }
            GameSpec::LogisticConstrained {
                p,
                alpha,
                n,
                budget,
                population_seed,
                theta_radius,
            } => {
                let spec = PopulationSpec {
                    p: *p,
                    alpha: Vector::from_column_slice(alpha),
                    n: samples.unwrap_or(*n),
                    seed: *population_seed,
                };
                let cost = AgentCost::Budget { budget: *budget };
                Ok(Box::new(LogisticGame::from_population(&spec, cost, *theta_radius)?))
            }
            GameSpec::LogisticCostly {
                p,
                alpha,
                n,
                lambda,
                population_seed,
                theta_radius,
            } => {
                let alpha = Vector::from_column_slice(alpha);
                let cost = AgentCost::Quadratic {
                    lambda: *lambda,
                    search_radius: LogisticGame::costly_search_radius(&alpha, *lambda),
                };
                let spec = PopulationSpec {
                    p: *p,
                    alpha,
                    n: samples.unwrap_or(*n),
                    seed: *population_seed,
                };
                Ok(Box::new(LogisticGame::from_population(&spec, cost, *theta_radius)?))
            }
        }
    }

    pub fn build(&self) -> Result<Box<dyn StrategicGame>> {
        self.build_with_samples(None)
    }

    /// Named parameters, used as the leading columns of preference tables.
    pub fn parameters(&self) -> BTreeMap<&'static str, f64> {
        let mut out = BTreeMap::new();
        match self {
            GameSpec::Linear { sigma2, budget, .. } => {
                out.insert("budget", *budget);
                out.insert("sigma2", *sigma2);
            }
            GameSpec::LogisticConstrained { p, budget, .. } => {
                out.insert("budget", *budget);
                out.insert("p", *p);
            }
            GameSpec::LogisticCostly { p, lambda, .. } => {
                out.insert("lambda", *lambda);
                out.insert("p", *p);
            }
        }
        out
    }

    pub fn variant(&self) -> &'static str {
        match self {
            GameSpec::Linear { .. } => "linear",
            GameSpec::LogisticConstrained { .. } => "logistic-constrained",
            GameSpec::LogisticCostly { .. } => "logistic-costly",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    #[default]
    Decaying,
    /// `delta0 * T^{-delta_exponent}` for the whole run, `T` the executed epoch count.
    Constant,
}

/// One run of the dynamics. `epochs` is the full-scale horizon; the executed
/// horizon is `epochs / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub order: Order,
    pub epochs: usize,
    pub inner_steps: usize,
    pub eta0: f64,
    pub eta_exponent: f64,
    pub delta0: f64,
    pub delta_exponent: f64,
    #[serde(default)]
    pub dim_scaling: bool,
    #[serde(default)]
    pub perturbation: PerturbationKind,
    pub fast_step: f64,
    #[serde(default)]
    pub iterate_mode: IterateMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
}

impl RunSpec {
    pub fn executed_epochs(&self, scale: usize) -> usize {
        (self.epochs / scale.max(1)).max(1)
    }

    pub fn schedule(&self, scale: usize) -> Schedule {
        let epochs = self.executed_epochs(scale);
        let slow = StepSchedule {
            eta0: self.eta0,
            eta_exponent: self.eta_exponent,
            delta0: self.delta0,
            delta_exponent: self.delta_exponent,
            dim_scaling: self.dim_scaling,
            perturbation: match self.perturbation {
                PerturbationKind::Decaying => Perturbation::Decaying,
                PerturbationKind::Constant => Perturbation::Constant { horizon: epochs },
            },
        };
        let mut schedule = Schedule::new(self.order, epochs, self.inner_steps, slow, self.fast_step);
        schedule.iterate_mode = self.iterate_mode;
        schedule.theta0 = self.theta0.clone();
        schedule.mu0 = self.mu0.clone();
        schedule
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(flatten)]
    pub settings: OracleSettings,
    /// Population size of the logistic game used by the equilibrium oracles;
    /// the dynamics use the game's own `n`. The first `n` oracle samples
    /// coincide with the dynamics' samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            settings: OracleSettings::default(),
            samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub name: String,
    pub game: GameSpec,
    pub runs: Vec<RunSpec>,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Output directory; the CLI flag and the environment override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

fn default_scale() -> usize {
    1
}

impl ExperimentConfig {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// presets

struct Leg {
    eta0: f64,
    follower_step: f64,
}

fn logistic_runs(epochs: usize, tau: usize, dm_leads: Leg, agents_lead: Leg) -> Value {
    let run = |order: &str, leg: &Leg| {
        json!({
            "order": order,
            "epochs": epochs,
            "inner_steps": tau,
            "eta0": leg.eta0,
            "eta_exponent": 0.75,
            "delta0": 1.0,
            "delta_exponent": 0.25,
            "fast_step": leg.follower_step,
        })
    };
    json!([run("proactive", &dm_leads), run("reactive", &agents_lead)])
}

fn constrained_preset(name: &str, p: f64, budget: f64) -> Value {
    let eta0 = if p <= 0.1 {
        6.0
    } else if p <= 0.5 {
        5.0
    } else {
        10.0
    };
    json!({
        "name": name,
        "game": {
            "variant": "logistic-constrained",
            "p": p, "alpha": [2.0], "n": 100, "budget": budget, "population_seed": 0,
        },
        "runs": logistic_runs(50_000, 200,
            Leg { eta0, follower_step: 0.1 },
            Leg { eta0: 0.02, follower_step: 0.1 }),
        "seed": 0,
        "scale": DESK_SCALE,
        "oracle": { "samples": 1000 },
    })
}

fn costly_preset(name: &str, p: f64, lambda: f64) -> Value {
    let dm_eta0 = if lambda >= 20.0 { 1.0 } else { 0.1 };
    json!({
        "name": name,
        "game": {
            "variant": "logistic-costly",
            "p": p, "alpha": [1.5, 1.5], "n": 100, "lambda": lambda, "population_seed": 0,
        },
        "runs": logistic_runs(50_000, 100,
            Leg { eta0: dm_eta0, follower_step: 0.01 },
            Leg { eta0: 0.01, follower_step: 0.1 }),
        "seed": 0,
        "scale": DESK_SCALE,
        "oracle": { "samples": 1000, "grid": 101 },
    })
}

/// Linear game `beta = (1, 0)`, `sigma2 = 0`, `B = 2`, tuned for the desk-scale
/// horizon `T = 5000`, `tau = 50`.
fn linear_preset() -> Value {
    json!({
        "name": "linear-B2",
        "game": { "variant": "linear", "beta": [1.0, 0.0], "sigma2": 0.0, "budget": 2.0 },
        "runs": [
            {
                "order": "proactive", "epochs": 50_000, "inner_steps": 50,
                "eta0": LINEAR_PROACTIVE.eta0, "eta_exponent": LINEAR_PROACTIVE.eta_exponent,
                "delta0": LINEAR_PROACTIVE.delta0, "delta_exponent": LINEAR_PROACTIVE.delta_exponent,
                "fast_step": LINEAR_PROACTIVE.fast_step,
            },
            {
                "order": "reactive", "epochs": 50_000, "inner_steps": 50,
                "eta0": LINEAR_REACTIVE.eta0, "eta_exponent": LINEAR_REACTIVE.eta_exponent,
                "delta0": LINEAR_REACTIVE.delta0, "delta_exponent": LINEAR_REACTIVE.delta_exponent,
                "fast_step": LINEAR_REACTIVE.fast_step,
            },
        ],
        "seed": 0,
        "scale": DESK_SCALE,
    })
}

/// Step parameters of one linear-preset run.
#[derive(Clone, Copy, Debug)]
pub struct LinearTuning {
    pub eta0: f64,
    pub eta_exponent: f64,
    pub delta0: f64,
    pub delta_exponent: f64,
    pub fast_step: f64,
}

/// Picked by a 32-seed sweep over the desk-scale horizon. The decision-maker
/// lands a little above 0.4 on most seeds: the smoothing bias and the
/// estimator noise both push the running average up.
pub const LINEAR_PROACTIVE: LinearTuning =
    LinearTuning { eta0: 0.025, eta_exponent: 0.75, delta0: 0.35, delta_exponent: 0.25, fast_step: 1.0 };
/// Agents learning by zeroth order need a larger, faster-decaying step; the
/// agent risk is flat near its optimum so `R` settles long before `L` does.
pub const LINEAR_REACTIVE: LinearTuning =
    LinearTuning { eta0: 0.5, eta_exponent: 1.0, delta0: 2.0, delta_exponent: 0.35, fast_step: 0.1 };

pub fn preset_names() -> Vec<String> {
    let mut names = vec!["linear-B2".to_string()];
    for p in [0.1, 0.5, 0.9] {
        names.push(format!("fig2-p{p}-B2"));
    }
    for p in [0.1, 0.5, 0.9] {
        names.push(format!("fig3-p{p}-B1"));
    }
    for p in [0.1, 0.5, 0.9] {
        names.push(format!("fig4-lam1-p{p}"));
    }
    for p in [0.1, 0.5, 0.9] {
        names.push(format!("fig5-lam20-p{p}"));
    }
    names
}

pub fn preset(name: &str) -> Option<Value> {
    if name == "linear-B2" {
        return Some(linear_preset());
    }
    let parse_p = |s: &str| s.parse::<f64>().ok().filter(|p| [0.1, 0.5, 0.9].contains(p));
    if let Some(rest) = name.strip_prefix("fig2-p") {
        let p = parse_p(rest.strip_suffix("-B2")?)?;
        return Some(constrained_preset(name, p, 2.0));
    }
    if let Some(rest) = name.strip_prefix("fig3-p") {
        let p = parse_p(rest.strip_suffix("-B1")?)?;
        return Some(constrained_preset(name, p, 1.0));
    }
    if let Some(rest) = name.strip_prefix("fig4-lam1-p") {
        return Some(costly_preset(name, parse_p(rest)?, 1.0));
    }
    if let Some(rest) = name.strip_prefix("fig5-lam20-p") {
        return Some(costly_preset(name, parse_p(rest)?, 20.0));
    }
    None
}

/// Recursive merge; `overlay` wins, arrays are replaced whole.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Expands a preset reference into a fully explicit document. The document's
/// own keys override the preset's.
pub fn expand(document: Value) -> Result<Value> {
    let Some(name) = document.get("preset") else {
        return Ok(document);
    };
    let name = name
        .as_str()
        .ok_or_else(|| Error::Validation(vec!["preset: expected a string".into()]))?
        .to_string();
    let mut base = preset(&name).ok_or_else(|| {
        Error::Validation(vec![format!("preset: unknown preset {name:?} (known: {})", preset_names().join(", "))])
    })?;
    // a game override may switch variants; drop the preset's game then
    if let (Some(Value::Object(ov)), Some(Value::Object(bv))) = (document.get("game"), base.get("game")) {
        if ov.get("variant").is_some_and(|v| Some(v) != bv.get("variant")) {
            base.as_object_mut().expect("object").remove("game");
        }
    }
    merge(&mut base, document);
    log::info!("expanded preset {name}: {base}");
    Ok(base)
}

// ---------------------------------------------------------------------------
// validation

#[derive(Clone, Copy)]
enum Kind {
    Str,
    Enum(&'static [&'static str]),
    Bool,
    Uint,
    Num(Range),
    Vector,
    Object(&'static [Field]),
    Runs,
    Game,
}

#[derive(Clone, Copy)]
struct Range {
    min: Option<(f64, bool)>,
    max: Option<(f64, bool)>,
}

const ANY: Range = Range { min: None, max: None };
const NONNEG: Range = Range {
    min: Some((0.0, true)),
    max: None,
};
const POSITIVE: Range = Range {
    min: Some((0.0, false)),
    max: None,
};
const UNIT: Range = Range {
    min: Some((0.0, true)),
    max: Some((1.0, true)),
};

#[derive(Clone, Copy)]
struct Field {
    name: &'static str,
    kind: Kind,
    required: bool,
}

const fn req(name: &'static str, kind: Kind) -> Field {
    Field { name, kind, required: true }
}

const fn opt(name: &'static str, kind: Kind) -> Field {
    Field { name, kind, required: false }
}

const TOP: &[Field] = &[
    opt("preset", Kind::Str),
    req("name", Kind::Str),
    req("game", Kind::Game),
    req("runs", Kind::Runs),
    req("seed", Kind::Uint),
    opt("scale", Kind::Uint),
    opt("oracle", Kind::Object(ORACLE)),
    opt("out_dir", Kind::Str),
];

const ORACLE: &[Field] = &[
    opt("dm_steps", Kind::Uint),
    opt("dm_eta", Kind::Num(POSITIVE)),
    opt("dm_tol", Kind::Num(NONNEG)),
    opt("grid", Kind::Uint),
    opt("inner_steps", Kind::Uint),
    opt("inner_eta", Kind::Num(POSITIVE)),
    opt("inner_tol", Kind::Num(NONNEG)),
    opt("samples", Kind::Uint),
];

const RUN: &[Field] = &[
    req("order", Kind::Enum(&["proactive", "reactive"])),
    req("epochs", Kind::Uint),
    req("inner_steps", Kind::Uint),
    req("eta0", Kind::Num(NONNEG)),
    req("eta_exponent", Kind::Num(NONNEG)),
    req("delta0", Kind::Num(POSITIVE)),
    req("delta_exponent", Kind::Num(ANY)),
    opt("dim_scaling", Kind::Bool),
    opt("perturbation", Kind::Enum(&["decaying", "constant"])),
    req("fast_step", Kind::Num(NONNEG)),
    opt("iterate_mode", Kind::Enum(&["averaged", "last"])),
    opt("theta0", Kind::Vector),
    opt("mu0", Kind::Vector),
];

const LINEAR: &[Field] = &[
    req("variant", Kind::Str),
    req("beta", Kind::Vector),
    req("sigma2", Kind::Num(NONNEG)),
    req("budget", Kind::Num(NONNEG)),
    opt("theta_radius", Kind::Num(NONNEG)),
];

const CONSTRAINED: &[Field] = &[
    req("variant", Kind::Str),
    req("p", Kind::Num(UNIT)),
    req("alpha", Kind::Vector),
    req("n", Kind::Uint),
    req("budget", Kind::Num(NONNEG)),
    opt("population_seed", Kind::Uint),
    opt("theta_radius", Kind::Num(NONNEG)),
];

const COSTLY: &[Field] = &[
    req("variant", Kind::Str),
    req("p", Kind::Num(UNIT)),
    req("alpha", Kind::Vector),
    req("n", Kind::Uint),
    req("lambda", Kind::Num(POSITIVE)),
    opt("population_seed", Kind::Uint),
    opt("theta_radius", Kind::Num(NONNEG)),
];

const VARIANTS: &[&str] = &["linear", "logistic-constrained", "logistic-costly"];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn describe(range: &Range) -> String {
    let mut parts = Vec::new();
    if let Some((lo, inclusive)) = range.min {
        parts.push(format!("{} {lo}", if inclusive { ">=" } else { ">" }));
    }
    if let Some((hi, inclusive)) = range.max {
        parts.push(format!("{} {hi}", if inclusive { "<=" } else { "<" }));
    }
    parts.join(" and ")
}

fn check_value(path: &str, kind: Kind, value: &Value, errors: &mut Vec<String>) {
    match kind {
        Kind::Str => {
            if !value.is_string() {
                errors.push(format!("{path}: expected a string"));
            }
        }
        Kind::Enum(options) => match value.as_str() {
            Some(s) if options.contains(&s) => {}
            _ => errors.push(format!("{path}: expected one of {}", options.join(", "))),
        },
        Kind::Bool => {
            if !value.is_boolean() {
                errors.push(format!("{path}: expected a boolean"));
            }
        }
        Kind::Uint => {
            if value.as_u64().is_none() {
                errors.push(format!("{path}: expected a nonnegative integer"));
            }
        }
        Kind::Num(range) => match value.as_f64() {
            None => errors.push(format!("{path}: expected a number")),
            Some(x) => {
                let low = range.min.is_some_and(|(lo, inc)| if inc { x < lo } else { x <= lo });
                let high = range.max.is_some_and(|(hi, inc)| if inc { x > hi } else { x >= hi });
                if low || high {
                    errors.push(format!("{path}: value {x} out of range (must be {})", describe(&range)));
                }
            }
        },
        Kind::Vector => match value.as_array() {
            Some(xs) if !xs.is_empty() && xs.iter().all(Value::is_number) => {}
            _ => errors.push(format!("{path}: expected a non-empty array of numbers")),
        },
        Kind::Object(fields) => check_object(path, fields, value, errors),
        Kind::Runs => match value.as_array() {
            Some(runs) if !runs.is_empty() => {
                for (i, run) in runs.iter().enumerate() {
                    check_object(&format!("{path}[{i}]"), RUN, run, errors);
                }
            }
            _ => errors.push(format!("{path}: expected a non-empty array of runs")),
        },
        Kind::Game => {
            let fields = match value.get("variant").and_then(Value::as_str) {
                Some("linear") => LINEAR,
                Some("logistic-constrained") => CONSTRAINED,
                Some("logistic-costly") => COSTLY,
                _ => {
                    errors.push(format!(
                        "{}: expected one of {}",
                        join(path, "variant"),
                        VARIANTS.join(", ")
                    ));
                    return;
                }
            };
            check_object(path, fields, value, errors);
        }
    }
}

fn check_object(path: &str, fields: &[Field], value: &Value, errors: &mut Vec<String>) {
    let Some(object) = value.as_object() else {
        errors.push(format!("{}: expected an object", if path.is_empty() { "document" } else { path }));
        return;
    };
    for key in object.keys() {
        if !fields.iter().any(|f| f.name == key) {
            errors.push(format!("{}: unknown field", join(path, key)));
        }
    }
    for field in fields {
        match object.get(field.name) {
            None if field.required => errors.push(format!("{}: missing required field", join(path, field.name))),
            None => {}
            Some(v) => check_value(&join(path, field.name), field.kind, v, errors),
        }
    }
}

fn dim_of(object: &Map<String, Value>) -> Option<usize> {
    object
        .get("beta")
        .or_else(|| object.get("alpha"))
        .and_then(Value::as_array)
        .map(Vec::len)
}

fn check_cross(document: &Value, errors: &mut Vec<String>) {
    let dim = document.get("game").and_then(Value::as_object).and_then(dim_of);
    if let (Some(dim), Some(runs)) = (dim, document.get("runs").and_then(Value::as_array)) {
        for (i, run) in runs.iter().enumerate() {
            for key in ["theta0", "mu0"] {
                if let Some(len) = run.get(key).and_then(Value::as_array).map(Vec::len) {
                    if len != dim {
                        errors.push(format!("runs[{i}].{key}: length {len} does not match game dimension {dim}"));
                    }
                }
            }
            for key in ["epochs", "inner_steps"] {
                if run.get(key).and_then(Value::as_u64) == Some(0) {
                    errors.push(format!("runs[{i}].{key}: must be at least 1"));
                }
            }
        }
    }
    if document.get("scale").and_then(Value::as_u64) == Some(0) {
        errors.push("scale: must be at least 1".into());
    }
    if document.get("game").and_then(|g| g.get("n")).and_then(Value::as_u64) == Some(0) {
        errors.push("game.n: must be at least 1".into());
    }
    if let Some(oracle) = document.get("oracle") {
        if oracle.get("grid").and_then(Value::as_u64) == Some(0) {
            errors.push("oracle.grid: must be at least 1".into());
        }
        if let (Some(dim), Some(grid)) = (dim, oracle.get("grid").and_then(Value::as_u64)) {
            if dim > 2 {
                errors.push(format!("oracle: grid search supports dimensions 1 and 2, game has {dim}"));
            } else if dim == 2 && grid > 2001 {
                errors.push(format!("oracle.grid: {grid} points per axis is too many for a 2-D lattice"));
            }
        }
    }
}

/// Parses and validates a config document, expanding presets. Every
/// validation error is reported, not just the first.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let document: Value = serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("malformed JSON: {e}")]))?;
    config_from_value(document)
}

pub fn config_from_value(document: Value) -> Result<ExperimentConfig> {
    let document = expand(document)?;
    let mut errors = Vec::new();
    check_object("", TOP, &document, &mut errors);
    check_cross(&document, &mut errors);
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let config: ExperimentConfig = serde_json::from_value(document).map_err(|e| Error::Validation(vec![e.to_string()]))?;
    // the game constructors apply the remaining semantic checks
    config.game.build_with_samples(Some(1)).map_err(|e| Error::Validation(vec![format!("game: {e}")]))?;
    for (i, run) in config.runs.iter().enumerate() {
        run.schedule(config.scale)
            .validate()
            .map_err(|e| Error::Validation(vec![format!("runs[{i}]: {e}")]))?;
    }
    Ok(config)
}

/// A sweep of games for the preference table: a base game and, per
/// parameter, the values to take. The table covers the Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSweep {
    #[serde(default = "default_sweep_name")]
    pub name: String,
    pub game: GameSpec,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub oracle: OracleSpec,
}

fn default_sweep_name() -> String {
    "preference".into()
}

const SWEEPABLE: &[&str] = &["budget", "lambda", "p", "sigma2"];

impl PreferenceSweep {
    pub fn parse(text: &str) -> Result<PreferenceSweep> {
        let document: Value =
            serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("malformed JSON: {e}")]))?;
        let mut errors = Vec::new();
        if let Some(object) = document.as_object() {
            for key in object.keys() {
                if !["name", "game", "grid", "oracle", "runs", "seed", "scale", "preset", "out_dir"].contains(&key.as_str()) {
                    errors.push(format!("{key}: unknown field"));
                }
            }
            match object.get("game") {
                Some(g) => check_value("game", Kind::Game, g, &mut errors),
                None => errors.push("game: missing required field".into()),
            }
            if let Some(o) = object.get("oracle") {
                check_value("oracle", Kind::Object(ORACLE), o, &mut errors);
            }
            if let Some(grid) = object.get("grid") {
                match grid.as_object() {
                    None => errors.push("grid: expected an object".into()),
                    Some(grid) => {
                        for (k, v) in grid {
                            if !SWEEPABLE.contains(&k.as_str()) {
                                errors.push(format!("grid.{k}: not a sweepable parameter ({})", SWEEPABLE.join(", ")));
                            }
                            if !v.as_array().is_some_and(|xs| xs.iter().all(Value::is_number)) {
                                errors.push(format!("grid.{k}: expected an array of numbers"));
                            }
                        }
                    }
                }
            }
        } else {
            errors.push("document: expected an object".into());
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let mut object = document.as_object().cloned().unwrap_or_default();
        for key in ["runs", "seed", "scale", "preset", "out_dir"] {
            object.remove(key);
        }
        serde_json::from_value(Value::Object(object)).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    /// The swept games in row-major order over the grid keys (sorted by name).
    pub fn games(&self) -> Result<Vec<GameSpec>> {
        let base = serde_json::to_value(&self.game)?;
        let mut rows = vec![base];
        for (key, values) in &self.grid {
            let mut next = Vec::with_capacity(rows.len() * values.len());
            for row in &rows {
                if row.get(key).is_none() {
                    return Err(Error::config(format!("grid.{key}: the {} game has no such parameter", self.game.variant())));
                }
                for v in values {
                    let mut row = row.clone();
                    row[key.as_str()] = json!(v);
                    next.push(row);
                }
            }
            rows = next;
        }
        rows.into_iter()
            .map(|r| serde_json::from_value(r).map_err(|e| Error::config(e.to_string())))
            .collect()
    }
}
