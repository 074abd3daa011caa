//! Strategic games between a decision-maker (model `theta`) and a population
//! of agents (mean feature shift `mu`).
//!
//! A game exposes the decision-maker's loss `L(mu, theta)`, the agents' loss
//! `R(mu, theta)`, their partial gradients, and the feasible sets. Games are
//! immutable after construction and can be shared across threads.

use std::fmt;

use nalgebra::DVector;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::project_ball;
use crate::rng::{self, Stream};

pub type Vector = DVector<f64>;

/// Radius used for the decision-maker's feasible set when none is given.
pub const DEFAULT_THETA_RADIUS: f64 = 10.0;

const MEMBERSHIP_TOL: f64 = 1e-12;

/// Closed Euclidean ball `{v : ||v|| <= radius}` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSet {
    pub radius: f64,
    pub dim: usize,
}

impl BallSet {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::config(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::config("ball dimension must be positive"));
        }
        Ok(BallSet { radius, dim })
    }

    pub fn contains(&self, v: &Vector) -> bool {
        v.len() == self.dim && v.norm() <= self.radius + MEMBERSHIP_TOL
    }

    pub fn project(&self, v: &Vector) -> Vector {
        project_ball(v, self)
    }
}

pub(crate) fn check_dim(expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

/// Agents' best response `B theta / ||theta||` on the ball of radius `B`,
/// or `None` when `theta = 0` (every feasible action is then optimal).
pub(crate) fn radial_best_response(theta: &Vector, budget: f64) -> Option<Vector> {
    let norm = theta.norm();
    if norm == 0.0 {
        None
    } else {
        Some(theta * (budget / norm))
    }
}

/// `J^T v` for the map `theta -> B theta / ||theta||`.
fn radial_best_response_vjp(theta: &Vector, budget: f64, v: &Vector) -> Option<Vector> {
    let norm = theta.norm();
    if norm == 0.0 {
        return None;
    }
    let unit = theta / norm;
    let tangential = v - &unit * unit.dot(v);
    Some(tangential * (budget / norm))
}

/// Interface every strategic game implements.
///
/// `decision_loss` is `L(mu, theta)`, `agent_loss` is `R(mu, theta)`.
pub trait StrategicGame: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Feasible set of the decision-maker.
    fn theta_set(&self) -> BallSet;

    /// Feasible set of the agents, `None` when unconstrained.
    fn action_set(&self) -> Option<BallSet>;

    /// Bounded region over which agent-side searches run: the action set when
    /// it exists, otherwise a ball large enough to contain the agents'
    /// relevant actions.
    fn action_search_set(&self) -> BallSet;

    fn decision_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64>;

    fn agent_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64>;

    fn decision_grad_theta(&self, mu: &Vector, theta: &Vector) -> Result<Vector>;

    fn decision_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector>;

    fn agent_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector>;

    /// Closed-form `mu_BR(theta)` when the game has one.
    fn agents_best_response(&self, _theta: &Vector) -> Option<Vector> {
        None
    }

    /// `J_BR(theta)^T v` for the closed-form agents' best response.
    fn agents_best_response_vjp(&self, _theta: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }

    /// Closed-form `theta_BR(mu)` when the game has one.
    fn decision_best_response(&self, _mu: &Vector) -> Option<Vector> {
        None
    }

    /// The agents' exact minimum `min_mu R(mu, theta)` when known in closed form.
    fn agent_loss_min(&self, _theta: &Vector) -> Option<f64> {
        None
    }

    /// Downcast used to route the linear game to its closed forms.
    fn as_linear(&self) -> Option<&LinearRegressionGame> {
        None
    }

    /// Decision-maker's Stackelberg risk `SR_L(theta) = L(mu_BR(theta), theta)`.
    fn stackelberg_risk_dm(&self, theta: &Vector) -> Option<Result<f64>> {
        let mu = self.agents_best_response(theta)?;
        Some(self.decision_loss(&mu, theta))
    }
}

/// Linear regression with agents shifting all features by `mu`, evaluated at
/// the population level: `L = sigma2/2 + ||beta - theta||^2/2 + (mu.theta)^2/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRegressionGame {
    beta: Vector,
    sigma2: f64,
    budget: f64,
    theta_set: BallSet,
}

impl LinearRegressionGame {
    pub fn new(beta: Vector, sigma2: f64, budget: f64) -> Result<Self> {
        let dim = beta.len();
        Self::with_theta_set(beta, sigma2, budget, BallSet::new(DEFAULT_THETA_RADIUS, dim.max(1))?)
    }

    pub fn with_theta_set(beta: Vector, sigma2: f64, budget: f64, theta_set: BallSet) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::config("beta must have at least one coordinate"));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("beta must be finite"));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::config(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::config(format!("budget must be >= 0, got {budget}")));
        }
        check_dim(theta_set.dim, &beta)?;
        Ok(LinearRegressionGame {
            beta,
            sigma2,
            budget,
            theta_set,
        })
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    fn check(&self, mu: &Vector, theta: &Vector) -> Result<()> {
        check_dim(self.beta.len(), mu)?;
        check_dim(self.beta.len(), theta)
    }
}

impl StrategicGame for LinearRegressionGame {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn theta_set(&self) -> BallSet {
        self.theta_set
    }

    fn action_set(&self) -> Option<BallSet> {
        Some(BallSet {
            radius: self.budget,
            dim: self.dim(),
        })
    }

    fn action_search_set(&self) -> BallSet {
        BallSet {
            radius: self.budget,
            dim: self.dim(),
        }
    }

    fn decision_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64> {
        self.check(mu, theta)?;
        let shift = mu.dot(theta);
        Ok(0.5 * self.sigma2 + 0.5 * (&self.beta - theta).norm_squared() + 0.5 * shift * shift)
    }

    fn agent_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64> {
        self.check(mu, theta)?;
        Ok(-mu.dot(theta))
    }

    fn decision_grad_theta(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        Ok((theta - &self.beta) + mu * mu.dot(theta))
    }

    fn decision_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        Ok(theta * mu.dot(theta))
    }

    fn agent_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        Ok(-theta)
    }

    fn agents_best_response(&self, theta: &Vector) -> Option<Vector> {
        if theta.len() != self.dim() {
            return None;
        }
        Some(radial_best_response(theta, self.budget).unwrap_or_else(|| Vector::zeros(self.dim())))
    }

    fn agents_best_response_vjp(&self, theta: &Vector, v: &Vector) -> Option<Vector> {
        radial_best_response_vjp(theta, self.budget, v)
    }

    fn decision_best_response(&self, mu: &Vector) -> Option<Vector> {
        crate::equilibria::theta_br_linear(mu, &self.beta).ok()
    }

    fn as_linear(&self) -> Option<&LinearRegressionGame> {
        Some(self)
    }

    fn agent_loss_min(&self, theta: &Vector) -> Option<f64> {
        Some(-self.budget * theta.norm())
    }
}

/// How agents with label 0 pay for shifting their features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AgentCost {
    /// Shift constrained to `||mu|| <= budget`; `R = -mu.theta`.
    Budget { budget: f64 },
    /// Unconstrained shift with quadratic penalty; `R = lambda/2 ||mu||^2 - mu.theta`.
    /// `search_radius` bounds agent-side searches over the otherwise unbounded set.
    Quadratic { lambda: f64, search_radius: f64 },
}

/// One labelled base sample `(x0, y)` with `y` in `{0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint {
    pub features: Vector,
    pub label: bool,
}

/// Draw parameters for the base (non-strategic) population:
/// `y ~ Bern(p)`, `x0 | y ~ N((2y - 1) alpha, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSpec {
    pub p: f64,
    pub alpha: Vector,
    pub n: usize,
    pub seed: u64,
}

pub fn generate_population(spec: &PopulationSpec) -> Result<Vec<LabeledPoint>> {
    if !(0.0..=1.0).contains(&spec.p) {
        return Err(Error::config(format!("label probability p must lie in [0, 1], got {}", spec.p)));
    }
    if spec.n == 0 {
        return Err(Error::config("sample count n must be at least 1"));
    }
    if spec.alpha.is_empty() {
        return Err(Error::config("alpha must have at least one coordinate"));
    }
    let mut rng = rng::stream(spec.seed, Stream::Population);
    let coin = Bernoulli::new(spec.p).map_err(|e| Error::config(e.to_string()))?;
    let dim = spec.alpha.len();
    let points = (0..spec.n)
        .map(|_| {
            let label = coin.sample(&mut rng);
            let sign = if label { 1.0 } else { -1.0 };
            let features = Vector::from_iterator(
                dim,
                spec.alpha.iter().map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sign * a + z
                }),
            );
            LabeledPoint { features, label }
        })
        .collect();
    Ok(points)
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression where label-0 agents shift their features by `mu`.
///
/// The expectation over the population is a fixed sample average; samples are
/// frozen at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticGame {
    dim: usize,
    // row-major `n x dim`
    features: Vec<f64>,
    labels: Vec<bool>,
    cost: AgentCost,
    theta_set: BallSet,
}

impl LogisticGame {
    pub fn new(samples: &[LabeledPoint], cost: AgentCost, theta_set: BallSet) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::config("logistic game needs at least one sample"))?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::config("sample features must have at least one coordinate"));
        }
        check_dim(theta_set.dim, &first.features)?;
        match cost {
            AgentCost::Budget { budget } if !(budget.is_finite() && budget >= 0.0) => {
                return Err(Error::config(format!("budget must be >= 0, got {budget}")));
            }
            AgentCost::Quadratic { lambda, search_radius } => {
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(Error::config(format!("lambda must be > 0, got {lambda}")));
                }
                if !(search_radius.is_finite() && search_radius > 0.0) {
                    return Err(Error::config(format!("search radius must be > 0, got {search_radius}")));
                }
            }
            _ => {}
        }
        let mut features = Vec::with_capacity(samples.len() * dim);
        let mut labels = Vec::with_capacity(samples.len());
        for s in samples {
            check_dim(dim, &s.features)?;
            if s.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("sample features must be finite"));
            }
            features.extend(s.features.iter());
            labels.push(s.label);
        }
        Ok(LogisticGame {
            dim,
            features,
            labels,
            cost,
            theta_set,
        })
    }

    /// Build from a freshly generated population. For the quadratic-cost
    /// variant the agents' search radius defaults to `3 ||alpha|| / lambda + 1`.
    pub fn from_population(spec: &PopulationSpec, cost: AgentCost, theta_radius: f64) -> Result<Self> {
        let samples = generate_population(spec)?;
        let theta_set = BallSet::new(theta_radius, spec.alpha.len())?;
        Self::new(&samples, cost, theta_set)
    }

    pub fn costly_search_radius(alpha: &Vector, lambda: f64) -> f64 {
        3.0 * alpha.norm() / lambda + 1.0
    }

    pub fn cost(&self) -> AgentCost {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> Vec<LabeledPoint> {
        self.features
            .chunks_exact(self.dim)
            .zip(&self.labels)
            .map(|(x, &label)| LabeledPoint {
                features: Vector::from_column_slice(x),
                label,
            })
            .collect()
    }

    fn check(&self, mu: &Vector, theta: &Vector) -> Result<()> {
        check_dim(self.dim, mu)?;
        check_dim(self.dim, theta)
    }

    /// Calls `f(x0, label, z)` for every sample, with `z = x^T theta` the
    /// logit at the shifted features.
    fn for_each_logit(&self, mu: &Vector, theta: &Vector, mut f: impl FnMut(&[f64], bool, f64)) {
        let shift = mu.dot(theta);
        for (x, &label) in self.features.chunks_exact(self.dim).zip(&self.labels) {
            let base: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let z = if label { base } else { base + shift };
            f(x, label, z);
        }
    }
}

impl StrategicGame for LogisticGame {
    fn dim(&self) -> usize {
        self.dim
    }

    fn theta_set(&self) -> BallSet {
        self.theta_set
    }

    fn action_set(&self) -> Option<BallSet> {
        match self.cost {
            AgentCost::Budget { budget } => Some(BallSet {
                radius: budget,
                dim: self.dim,
            }),
            AgentCost::Quadratic { .. } => None,
        }
    }

    fn action_search_set(&self) -> BallSet {
        let radius = match self.cost {
            AgentCost::Budget { budget } => budget,
            AgentCost::Quadratic { search_radius, .. } => search_radius,
        };
        BallSet { radius, dim: self.dim }
    }

    fn decision_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64> {
        self.check(mu, theta)?;
        let mut total = 0.0;
        self.for_each_logit(mu, theta, |_, label, z| {
            total += softplus(z) - if label { z } else { 0.0 };
        });
        Ok(total / self.len() as f64)
    }

    fn agent_loss(&self, mu: &Vector, theta: &Vector) -> Result<f64> {
        self.check(mu, theta)?;
        let linear = -mu.dot(theta);
        Ok(match self.cost {
            AgentCost::Budget { .. } => linear,
            AgentCost::Quadratic { lambda, .. } => 0.5 * lambda * mu.norm_squared() + linear,
        })
    }

    fn decision_grad_theta(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        let mut grad = Vector::zeros(self.dim);
        self.for_each_logit(mu, theta, |x, label, z| {
            let y = if label { 1.0 } else { 0.0 };
            let w = sigmoid(z) - y;
            for (k, g) in grad.iter_mut().enumerate() {
                let xk = if label { x[k] } else { x[k] + mu[k] };
                *g += w * xk;
            }
        });
        Ok(grad / self.len() as f64)
    }

    fn decision_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        let mut weight = 0.0;
        self.for_each_logit(mu, theta, |_, label, z| {
            if !label {
                weight += sigmoid(z);
            }
        });
        Ok(theta * (weight / self.len() as f64))
    }

    fn agent_grad_mu(&self, mu: &Vector, theta: &Vector) -> Result<Vector> {
        self.check(mu, theta)?;
        Ok(match self.cost {
            AgentCost::Budget { .. } => -theta,
            AgentCost::Quadratic { lambda, .. } => mu * lambda - theta,
        })
    }

    fn agents_best_response(&self, theta: &Vector) -> Option<Vector> {
        if theta.len() != self.dim {
            return None;
        }
        Some(match self.cost {
            AgentCost::Budget { budget } => {
                radial_best_response(theta, budget).unwrap_or_else(|| Vector::zeros(self.dim))
            }
            AgentCost::Quadratic { lambda, .. } => theta / lambda,
        })
    }

    fn agents_best_response_vjp(&self, theta: &Vector, v: &Vector) -> Option<Vector> {
        match self.cost {
            AgentCost::Budget { budget } => radial_best_response_vjp(theta, budget, v),
            AgentCost::Quadratic { lambda, .. } => Some(v / lambda),
        }
    }

    fn agent_loss_min(&self, theta: &Vector) -> Option<f64> {
        Some(match self.cost {
            AgentCost::Budget { budget } => -budget * theta.norm(),
            AgentCost::Quadratic { lambda, .. } => -theta.norm_squared() / (2.0 * lambda),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn linear_b2() -> LinearRegressionGame {
        LinearRegressionGame::new(v(&[1.0, 0.0]), 0.0, 2.0).unwrap()
    }

    fn single_sample_game(cost: AgentCost) -> LogisticGame {
        let pts = [LabeledPoint {
            features: v(&[0.0]),
            label: false,
        }];
        LogisticGame::new(&pts, cost, BallSet::new(10.0, 1).unwrap()).unwrap()
    }

    #[test]
    fn linear_loss_examples() {
        let g = linear_b2();
        assert_eq!(g.decision_loss(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        let l = g.decision_loss(&v(&[2.0, 0.0]), &v(&[0.2, 0.0])).unwrap();
        assert_abs_diff_eq!(l, 0.40, epsilon = 1e-15);
    }

    #[test]
    fn logistic_loss_at_origin_is_log2() {
        let g = single_sample_game(AgentCost::Budget { budget: 1.0 });
        let l = g.decision_loss(&v(&[0.0]), &v(&[0.0])).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn agent_loss_examples() {
        let g = linear_b2();
        assert_eq!(g.agent_loss(&v(&[1.0, 0.0]), &v(&[0.5, 0.0])).unwrap(), -0.5);
        assert_eq!(g.agent_loss(&v(&[0.0, 0.0]), &v(&[3.0, -1.0])).unwrap(), 0.0);

        let pts = [LabeledPoint {
            features: v(&[0.0, 0.0]),
            label: false,
        }];
        let costly = LogisticGame::new(
            &pts,
            AgentCost::Quadratic {
                lambda: 1.0,
                search_radius: 5.0,
            },
            BallSet::new(10.0, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(costly.agent_loss(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), -0.5);
        assert_eq!(costly.agent_loss(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let g = linear_b2();
        let grad = g.decision_grad_theta(&v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(grad, v(&[-1.0, 0.0]));
        let grad = g.decision_grad_theta(&v(&[1.0, 0.0]), &v(&[0.5, 0.0])).unwrap();
        assert_abs_diff_eq!(grad.norm(), 0.0, epsilon = 1e-15);

        assert_eq!(g.agent_grad_mu(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), v(&[-3.0, -4.0]));

        let pts = [LabeledPoint {
            features: v(&[0.0, 0.0]),
            label: true,
        }];
        let costly = |lambda| {
            LogisticGame::new(
                &pts,
                AgentCost::Quadratic {
                    lambda,
                    search_radius: 5.0,
                },
                BallSet::new(10.0, 2).unwrap(),
            )
            .unwrap()
        };
        assert_eq!(costly(2.0).agent_grad_mu(&v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(costly(1.0).agent_grad_mu(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = linear_b2();
        let err = g.decision_loss(&v(&[1.0]), &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 1 }));
        assert!(g.agent_grad_mu(&v(&[0.0, 0.0]), &v(&[0.0, 0.0, 1.0])).is_err());
        let l = single_sample_game(AgentCost::Budget { budget: 1.0 });
        assert!(l.decision_grad_theta(&v(&[0.0, 0.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn softplus_is_stable_for_large_logits() {
        assert_abs_diff_eq!(softplus(800.0), 800.0, epsilon = 1e-12);
        assert_abs_diff_eq!(softplus(-800.0), 0.0, epsilon = 1e-300);
        assert!(softplus(1e308).is_finite());
        assert_abs_diff_eq!(sigmoid(-800.0), 0.0, epsilon = 1e-300);
        assert_abs_diff_eq!(sigmoid(800.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_populations() {
        let alpha = v(&[2.0]);
        let all_pos = generate_population(&PopulationSpec {
            p: 1.0,
            alpha: alpha.clone(),
            n: 3,
            seed: 4,
        })
        .unwrap();
        assert_eq!(all_pos.len(), 3);
        assert!(all_pos.iter().all(|s| s.label));

        let all_neg = generate_population(&PopulationSpec {
            p: 0.0,
            alpha,
            n: 500,
            seed: 4,
        })
        .unwrap();
        assert!(all_neg.iter().all(|s| !s.label));
        let mean = all_neg.iter().map(|s| s.features[0]).sum::<f64>() / 500.0;
        assert!((mean + 2.0).abs() < 3.0 / (500f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn population_rejects_bad_probability() {
        let err = generate_population(&PopulationSpec {
            p: 1.5,
            alpha: v(&[2.0]),
            n: 3,
            seed: 0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn population_is_reproducible() {
        let spec = PopulationSpec {
            p: 0.3,
            alpha: v(&[1.5, 1.5]),
            n: 50,
            seed: 77,
        };
        let a = generate_population(&spec).unwrap();
        let b = generate_population(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            for (p, q) in x.features.iter().zip(y.features.iter()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn ball_membership() {
        let b = BallSet::new(1.0, 2).unwrap();
        assert!(b.contains(&v(&[0.6, 0.8])));
        assert!(!b.contains(&v(&[0.6, 0.81])));
        assert!(BallSet::new(-1.0, 2).is_err());
        assert!(BallSet::new(1.0, 0).is_err());
    }
}
