//! Repeated interaction between the decision-maker and the agents.
//!
//! Each epoch starts with one zeroth-order update of the slow player followed
//! by `inner_steps` gradient updates of the fast player. In proactive mode the
//! decision-maker is slow (and therefore leads); in reactive mode the agents
//! are slow and the decision-maker follows.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::games::{check_dim, BallSet, StrategicGame, Vector};
use crate::optimize::{
    agent_gd_step, dm_descend, dm_gd_step, project_ball, sample_sphere, zero_order_step, StepSchedule,
    ZeroOrderState,
};
use crate::rng::{self, Stream};

/// Gradient-norm tolerance and step cap of the numerical best-response oracle.
pub const BR_ORACLE_TOL: f64 = 1e-8;
pub const BR_ORACLE_MAX_STEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// Decision-maker updates slowly and leads.
    Proactive,
    /// Decision-maker updates quickly; the agents lead.
    Reactive,
}

impl Order {
    pub fn label(self) -> &'static str {
        match self {
            Order::Proactive => "proactive",
            Order::Reactive => "reactive",
        }
    }
}

/// Which fast-player iterate the slow player observes at the end of an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterateMode {
    /// Mean of the epoch's iterates `j = 1..=tau` (the epoch's start point excluded).
    Averaged,
    /// The epoch's final iterate.
    #[default]
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub order: Order,
    pub epochs: usize,
    pub inner_steps: usize,
    /// Zeroth-order schedule of the slow player.
    pub slow: StepSchedule,
    /// Constant gradient step of the fast player.
    pub fast_step: f64,
    #[serde(default)]
    pub iterate_mode: IterateMode,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub mu0: Option<Vec<f64>>,
    /// In reactive mode, compute `br_gap` with the numerical decision-maker
    /// oracle when the game has no closed form.
    #[serde(default = "default_true")]
    pub numeric_br_gap: bool,
}

fn default_true() -> bool {
    true
}

impl Schedule {
    pub fn new(order: Order, epochs: usize, inner_steps: usize, slow: StepSchedule, fast_step: f64) -> Self {
        Schedule {
            order,
            epochs,
            inner_steps,
            slow,
            fast_step,
            iterate_mode: IterateMode::Last,
            theta0: None,
            mu0: None,
            numeric_br_gap: true,
        }
    }

    pub fn with_iterate_mode(mut self, mode: IterateMode) -> Self {
        self.iterate_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epoch count must be at least 1"));
        }
        if self.inner_steps == 0 {
            return Err(Error::config("inner step count must be at least 1"));
        }
        if !(self.fast_step.is_finite() && self.fast_step >= 0.0) {
            return Err(Error::config(format!("fast step must be finite and >= 0, got {}", self.fast_step)));
        }
        self.slow.validate()
    }

    fn start(&self, init: &Option<Vec<f64>>, dim: usize) -> Result<Vector> {
        match init {
            None => Ok(Vector::zeros(dim)),
            Some(xs) => {
                let v = Vector::from_column_slice(xs);
                check_dim(dim, &v)?;
                Ok(v)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub loss_dm: f64,
    pub loss_agents: f64,
    pub running_avg_dm: f64,
    pub running_avg_agents: f64,
    /// Distance of the fast player's iterate to its best response, when an oracle exists.
    pub br_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub order: Order,
    pub records: Vec<EpochRecord>,
    pub rng_seed: u64,
    pub config_digest: String,
    /// Slow player's unperturbed centre after the last update.
    pub slow_center: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Mean of `metric` over the final `fraction` of epochs (at least one epoch).
    pub fn window_mean(&self, fraction: f64, metric: impl Fn(&EpochRecord) -> f64) -> f64 {
        let n = self.records.len();
        if n == 0 {
            return f64::NAN;
        }
        let count = ((n as f64 * fraction).round() as usize).clamp(1, n);
        self.records[n - count..].iter().map(&metric).sum::<f64>() / count as f64
    }

    /// Mean of the decision-maker's running-average risk over the final `fraction` of epochs.
    pub fn terminal_dm_risk(&self, fraction: f64) -> f64 {
        self.window_mean(fraction, |r| r.running_avg_dm)
    }

    pub fn terminal_agent_risk(&self, fraction: f64) -> f64 {
        self.window_mean(fraction, |r| r.running_avg_agents)
    }

    /// Smallest and largest value of `metric` over the final `fraction` of epochs.
    pub fn window_range(&self, fraction: f64, metric: impl Fn(&EpochRecord) -> f64) -> (f64, f64) {
        let n = self.records.len();
        let count = ((n as f64 * fraction).round() as usize).clamp(1, n.max(1));
        self.records[n.saturating_sub(count)..]
            .iter()
            .map(&metric)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// What an observer sees at the end of every epoch.
#[derive(Debug)]
pub struct EpochEvent<'a> {
    pub epoch: usize,
    /// The slow player's deployed point.
    pub slow_point: &'a Vector,
    /// The fast player's iterate at the start of the epoch.
    pub fast_start: &'a Vector,
    /// The fast player's final iterate of the epoch.
    pub fast_end: &'a Vector,
    /// `(1/tau) sum_j loss_fast(iterate_j)` over the epoch's fast iterates.
    pub fast_mean_loss: f64,
}

pub fn config_digest(game: &dyn StrategicGame, schedule: &Schedule, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{game:?}|{schedule:?}|{seed}").as_bytes());
    hex::encode(hasher.finalize())
}

struct Recorder {
    records: Vec<EpochRecord>,
    sum_dm: f64,
    sum_agents: f64,
}

impl Recorder {
    fn new(capacity: usize) -> Self {
        Recorder {
            records: Vec::with_capacity(capacity),
            sum_dm: 0.0,
            sum_agents: 0.0,
        }
    }

    fn push(&mut self, theta: &Vector, mu: &Vector, loss_dm: f64, loss_agents: f64, br_gap: Option<f64>) {
        self.sum_dm += loss_dm;
        self.sum_agents += loss_agents;
        let epoch = self.records.len() + 1;
        self.records.push(EpochRecord {
            epoch,
            theta: theta.iter().copied().collect(),
            mu: mu.iter().copied().collect(),
            loss_dm,
            loss_agents,
            running_avg_dm: self.sum_dm / epoch as f64,
            running_avg_agents: self.sum_agents / epoch as f64,
            br_gap,
        });
    }

    fn finish(self, order: Order, seed: u64, digest: String, slow_center: &Vector) -> Trace {
        Trace {
            order,
            records: self.records,
            rng_seed: seed,
            config_digest: digest,
            slow_center: slow_center.iter().copied().collect(),
        }
    }
}

fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `epoch` is the first epoch missing from the partial trace.
fn diverged(epoch: usize, what: &str, recorder: Recorder, order: Order, seed: u64, digest: String, center: &Vector) -> Error {
    Error::Diverged {
        epoch,
        what: what.to_string(),
        partial: Box::new(recorder.finish(order, seed, digest, center)),
    }
}

/// Runs either order of play according to `schedule.order`.
pub fn run(game: &dyn StrategicGame, schedule: &Schedule, seed: u64) -> Result<Trace> {
    match schedule.order {
        Order::Proactive => run_proactive(game, schedule, seed),
        Order::Reactive => run_reactive(game, schedule, seed),
    }
}

pub fn run_proactive(game: &dyn StrategicGame, schedule: &Schedule, seed: u64) -> Result<Trace> {
    run_proactive_observed(game, schedule, seed, |_| {})
}

/// Decision-maker runs the zeroth-order update once per epoch; the agents run
/// `inner_steps` gradient steps against the deployed model, warm-started from
/// the previous epoch's last iterate.
pub fn run_proactive_observed(
    game: &dyn StrategicGame,
    schedule: &Schedule,
    seed: u64,
    mut observe: impl FnMut(&EpochEvent<'_>),
) -> Result<Trace> {
    if schedule.order != Order::Proactive {
        return Err(Error::config("run_proactive needs a proactive schedule"));
    }
    schedule.validate()?;
    let dim = game.dim();
    let theta_set = game.theta_set();
    let agent_set = game.action_set();
    let digest = config_digest(game, schedule, seed);
    let mut rng = rng::stream(seed, Stream::Perturbation);

    let mut state = ZeroOrderState::new(&schedule.start(&schedule.theta0, dim)?, &theta_set, &mut rng)?;
    let mut mu = schedule.start(&schedule.mu0, dim)?;
    if let Some(set) = &agent_set {
        mu = project_ball(&mu, set);
    }
    let tau = schedule.inner_steps;
    let mut recorder = Recorder::new(schedule.epochs);

    for epoch in 1..=schedule.epochs {
        let theta = state.deployed(&schedule.slow);
        let fast_start = mu.clone();
        let mut mu_sum = Vector::zeros(dim);
        let mut follower_loss_sum = 0.0;
        for _ in 0..tau {
            mu = agent_gd_step(game, &mu, &theta, schedule.fast_step, agent_set.as_ref())?;
            mu_sum += &mu;
            follower_loss_sum += game.agent_loss(&mu, &theta)?;
        }
        let observed_mu = match schedule.iterate_mode {
            IterateMode::Last => mu.clone(),
            IterateMode::Averaged => mu_sum / tau as f64,
        };
        let loss_dm = game.decision_loss(&observed_mu, &theta)?;
        let loss_agents = game.agent_loss(&observed_mu, &theta)?;
        if !(all_finite(&theta) && all_finite(&mu) && loss_dm.is_finite() && loss_agents.is_finite()) {
            return Err(diverged(epoch, "proactive iterate", recorder, Order::Proactive, seed, digest, &state.phi));
        }
        let br_gap = game.agents_best_response(&theta).map(|br| (&observed_mu - br).norm());
        recorder.push(&theta, &observed_mu, loss_dm, loss_agents, br_gap);
        observe(&EpochEvent {
            epoch,
            slow_point: &theta,
            fast_start: &fast_start,
            fast_end: &mu,
            fast_mean_loss: follower_loss_sum / tau as f64,
        });
        state = zero_order_step(&state, loss_dm, &schedule.slow, &theta_set, &mut rng)?;
        if !all_finite(&state.phi) {
            return Err(diverged(epoch + 1, "decision-maker update", recorder, Order::Proactive, seed, digest, &state.phi));
        }
    }
    Ok(recorder.finish(Order::Proactive, seed, digest, &state.phi))
}

pub fn run_reactive(game: &dyn StrategicGame, schedule: &Schedule, seed: u64) -> Result<Trace> {
    run_reactive_observed(game, schedule, seed, |_| {})
}

/// Agents run the zeroth-order update on their observed loss once per epoch;
/// the decision-maker runs `inner_steps` projected gradient steps against the
/// deployed action. The agents observe `R` after the decision-maker's steps.
pub fn run_reactive_observed(
    game: &dyn StrategicGame,
    schedule: &Schedule,
    seed: u64,
    mut observe: impl FnMut(&EpochEvent<'_>),
) -> Result<Trace> {
    if schedule.order != Order::Reactive {
        return Err(Error::config("run_reactive needs a reactive schedule"));
    }
    schedule.validate()?;
    let dim = game.dim();
    let theta_set = game.theta_set();
    let agent_set = game.action_search_set();
    let digest = config_digest(game, schedule, seed);
    let mut rng = rng::stream(seed, Stream::Perturbation);

    let mut state = ZeroOrderState::new(&schedule.start(&schedule.mu0, dim)?, &agent_set, &mut rng)?;
    let mut theta = project_ball(&schedule.start(&schedule.theta0, dim)?, &theta_set);
    let oracle_step = if schedule.fast_step > 0.0 { schedule.fast_step } else { 0.1 };
    let mut oracle_theta = theta.clone();
    let tau = schedule.inner_steps;
    let mut recorder = Recorder::new(schedule.epochs);

    for epoch in 1..=schedule.epochs {
        let mu = state.deployed(&schedule.slow);
        let fast_start = theta.clone();
        let mut theta_sum = Vector::zeros(dim);
        let mut follower_loss_sum = 0.0;
        for _ in 0..tau {
            theta = dm_gd_step(game, &mu, &theta, schedule.fast_step, &theta_set)?;
            theta_sum += &theta;
            follower_loss_sum += game.decision_loss(&mu, &theta)?;
        }
        let observed_theta = match schedule.iterate_mode {
            IterateMode::Last => theta.clone(),
            IterateMode::Averaged => theta_sum / tau as f64,
        };
        let loss_dm = game.decision_loss(&mu, &observed_theta)?;
        let loss_agents = game.agent_loss(&mu, &observed_theta)?;
        if !(all_finite(&mu) && all_finite(&theta) && loss_dm.is_finite() && loss_agents.is_finite()) {
            return Err(diverged(epoch, "reactive iterate", recorder, Order::Reactive, seed, digest, &state.phi));
        }
        let br_gap = match game.decision_best_response(&mu) {
            Some(br) => Some((&observed_theta - br).norm()),
            None if schedule.numeric_br_gap => {
                let (best, _) = dm_descend(game, &mu, &oracle_theta, oracle_step, BR_ORACLE_TOL, BR_ORACLE_MAX_STEPS)?;
                let gap = (&observed_theta - &best).norm();
                oracle_theta = best;
                Some(gap)
            }
            None => None,
        };
        recorder.push(&observed_theta, &mu, loss_dm, loss_agents, br_gap);
        observe(&EpochEvent {
            epoch,
            slow_point: &mu,
            fast_start: &fast_start,
            fast_end: &theta,
            fast_mean_loss: follower_loss_sum / tau as f64,
        });
        state = zero_order_step(&state, loss_agents, &schedule.slow, &agent_set, &mut rng)?;
        if !all_finite(&state.phi) {
            return Err(diverged(epoch + 1, "agents' update", recorder, Order::Reactive, seed, digest, &state.phi));
        }
    }
    Ok(recorder.finish(Order::Reactive, seed, digest, &state.phi))
}

/// Per-epoch best-response gaps and their running average.
#[derive(Clone, Debug, PartialEq)]
pub struct BrGapSeries {
    pub gaps: Vec<f64>,
    pub running_avg: Vec<f64>,
}

pub fn br_gap_series(trace: &Trace) -> Result<BrGapSeries> {
    let gaps = trace
        .records
        .iter()
        .map(|r| r.br_gap)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::DiagnosticUnavailable("trace has no best-response oracle values".into()))?;
    let mut sum = 0.0;
    let running_avg = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            sum += g;
            sum / (i + 1) as f64
        })
        .collect();
    Ok(BrGapSeries { gaps, running_avg })
}

/// Cumulative Stackelberg regret `sum_t (SR_L(theta_t) - sr_star)` of a
/// proactive trace, using the game's closed-form agents' best response.
pub fn cumulative_regret(game: &dyn StrategicGame, trace: &Trace, sr_star: f64) -> Result<f64> {
    let mut total = 0.0;
    for r in &trace.records {
        let theta = Vector::from_column_slice(&r.theta);
        let risk = game
            .stackelberg_risk_dm(&theta)
            .ok_or_else(|| Error::DiagnosticUnavailable("game has no closed-form agents' best response".into()))??;
        total += risk - sr_star;
    }
    Ok(total)
}

/// Monte Carlo estimate of a smoothed gradient at `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityEstimate {
    pub gradient: Vector,
    pub norm: f64,
    /// Standard error of the estimate's Euclidean norm (root of the summed
    /// per-coordinate variances of the mean).
    pub std_error: f64,
}

/// Estimator used for sphere-smoothed gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingEstimator {
    /// `(d / delta) f(phi + delta u) u`.
    OnePoint,
    /// `(d / 2 delta) (f(phi + delta u) - f(phi - delta u)) u`: same
    /// expectation, since `u` and `-u` are equally likely.
    Antithetic,
}

/// Estimates `grad E_v[f(phi + delta v)]` (v uniform in the unit ball) from
/// `n` sphere draws.
pub fn smoothed_gradient<R: Rng + ?Sized>(
    f: impl Fn(&Vector) -> Result<f64>,
    phi: &Vector,
    delta: f64,
    n: usize,
    estimator: SmoothingEstimator,
    rng: &mut R,
) -> Result<StationarityEstimate> {
    if n == 0 {
        return Err(Error::config("Monte Carlo sample count must be positive"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::config(format!("smoothing radius must be > 0, got {delta}")));
    }
    let dim = phi.len();
    let mut mean = Vector::zeros(dim);
    let mut sq = Vector::zeros(dim);
    for _ in 0..n {
        let u = sample_sphere(dim, rng);
        let weight = match estimator {
            SmoothingEstimator::OnePoint => dim as f64 / delta * f(&(phi + &u * delta))?,
            SmoothingEstimator::Antithetic => {
                dim as f64 / (2.0 * delta) * (f(&(phi + &u * delta))? - f(&(phi - &u * delta))?)
            }
        };
        let sample = u * weight;
        sq += sample.component_mul(&sample);
        mean += sample;
    }
    let n_f = n as f64;
    mean /= n_f;
    let variance_of_mean: f64 = sq
        .iter()
        .zip(mean.iter())
        .map(|(s, m)| (s / n_f - m * m).max(0.0) / n_f)
        .sum();
    Ok(StationarityEstimate {
        norm: mean.norm(),
        gradient: mean,
        std_error: variance_of_mean.sqrt(),
    })
}

/// Estimates `||grad SR_L^hat(phi_T)||` at the final centre of a proactive run.
pub fn stationarity_check(
    game: &dyn StrategicGame,
    trace: &Trace,
    delta: f64,
    n_mc: usize,
    seed: u64,
) -> Result<StationarityEstimate> {
    if n_mc == 0 {
        return Err(Error::config("Monte Carlo sample count must be positive"));
    }
    if trace.order != Order::Proactive {
        return Err(Error::DiagnosticUnavailable("stationarity is defined for proactive runs".into()));
    }
    let phi = Vector::from_column_slice(&trace.slow_center);
    stationarity_at(game, &phi, delta, n_mc, seed)
}

pub fn stationarity_at(game: &dyn StrategicGame, phi: &Vector, delta: f64, n_mc: usize, seed: u64) -> Result<StationarityEstimate> {
    check_dim(game.dim(), phi)?;
    if game.agents_best_response(phi).is_none() {
        return Err(Error::DiagnosticUnavailable("game has no closed-form agents' best response".into()));
    }
    let mut rng = rng::stream(seed, Stream::Diagnostics);
    let risk = |theta: &Vector| -> Result<f64> {
        game.stackelberg_risk_dm(theta)
            .ok_or_else(|| Error::DiagnosticUnavailable("Stackelberg risk unavailable".into()))?
    };
    smoothed_gradient(risk, phi, delta, n_mc, SmoothingEstimator::Antithetic, &mut rng)
}

/// Decision-maker's feasible set widened by the largest perturbation the
/// schedule can produce; deployed models stay inside it.
pub fn deployment_region(theta_set: &BallSet, schedule: &StepSchedule) -> BallSet {
    BallSet {
        radius: theta_set.radius + schedule.delta(1, theta_set.dim),
        dim: theta_set.dim,
    }
}
