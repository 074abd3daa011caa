//! Update rules for both players: Euclidean projection, uniform sphere
//! directions, the single-point zeroth-order step and projected gradient
//! steps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{check_dim, BallSet, StrategicGame, Vector};

/// Euclidean projection onto a centred ball. Points on the boundary are
/// returned unchanged.
pub fn project_ball(v: &Vector, set: &BallSet) -> Vector {
    let norm = v.norm();
    if norm <= set.radius {
        v.clone()
    } else {
        v * (set.radius / norm)
    }
}

/// Uniform draw from the unit sphere `S^{dim-1}` by normalising a Gaussian.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let g = Vector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return g / norm;
        }
    }
}

/// How the perturbation radius evolves over epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Perturbation {
    /// `delta_t = delta0 * t^{-exponent}`.
    Decaying,
    /// `delta = delta0 * T^{-exponent}`, fixed for the whole run of `horizon` epochs.
    Constant { horizon: usize },
}

/// Step-size and perturbation schedule for a zeroth-order learner.
///
/// `eta(t) = eta0 * d^{-1/2} * t^{-eta_exponent}` and
/// `delta(t) = delta0 * d^{1/2} * t^{-delta_exponent}` (or the constant
/// variant), where the dimension factors apply only with `dim_scaling`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta0: f64,
    pub eta_exponent: f64,
    pub delta0: f64,
    pub delta_exponent: f64,
    pub dim_scaling: bool,
    pub perturbation: Perturbation,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            eta0: 1.0,
            eta_exponent: 0.75,
            delta0: 1.0,
            delta_exponent: 0.25,
            dim_scaling: false,
            perturbation: Perturbation::Decaying,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0.is_finite() && self.eta0 >= 0.0) {
            return Err(Error::config(format!("eta0 must be finite and >= 0, got {}", self.eta0)));
        }
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return Err(Error::config(format!("delta0 must be finite and > 0, got {}", self.delta0)));
        }
        if !(self.eta_exponent.is_finite() && self.eta_exponent >= 0.0) {
            return Err(Error::config("eta exponent must be finite and >= 0"));
        }
        if !self.delta_exponent.is_finite() {
            return Err(Error::config("delta exponent must be finite"));
        }
        if let Perturbation::Constant { horizon } = self.perturbation {
            if horizon == 0 {
                return Err(Error::config("constant perturbation needs a positive horizon"));
            }
        }
        Ok(())
    }

    /// Step size at epoch `t >= 1`.
    pub fn eta(&self, t: usize, dim: usize) -> f64 {
        let scale = if self.dim_scaling { (dim as f64).powf(-0.5) } else { 1.0 };
        self.eta0 * scale * (t as f64).powf(-self.eta_exponent)
    }

    /// Perturbation radius at epoch `t >= 1`.
    pub fn delta(&self, t: usize, dim: usize) -> f64 {
        let scale = if self.dim_scaling { (dim as f64).sqrt() } else { 1.0 };
        let clock = match self.perturbation {
            Perturbation::Decaying => t,
            Perturbation::Constant { horizon } => horizon,
        };
        self.delta0 * scale * (clock as f64).powf(-self.delta_exponent)
    }
}

/// State of a single-point zeroth-order learner: the unperturbed centre
/// `phi_t`, the direction `u_t` it will deploy with, and the epoch counter.
/// The deployed point is `phi_t + delta_t u_t`; it may leave the feasible set
/// by at most `delta_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroOrderState {
    pub phi: Vector,
    pub last_u: Vector,
    pub t: usize,
}

impl ZeroOrderState {
    /// Starts at `phi0` (projected onto `set`) at epoch 1 with a fresh direction.
    pub fn new<R: Rng + ?Sized>(phi0: &Vector, set: &BallSet, rng: &mut R) -> Result<Self> {
        check_dim(set.dim, phi0)?;
        Ok(ZeroOrderState {
            phi: project_ball(phi0, set),
            last_u: sample_sphere(set.dim, rng),
            t: 1,
        })
    }

    pub fn deployed(&self, schedule: &StepSchedule) -> Vector {
        let delta = schedule.delta(self.t, self.phi.len());
        &self.phi + &self.last_u * delta
    }
}

/// `phi_{t+1} = Proj(phi_t - eta_t (d / delta_t) * observed_loss * u_t)`,
/// then draws `u_{t+1}`.
///
/// `observed_loss` must be the loss measured at the deployed point
/// `phi_t + delta_t u_t`.
pub fn zero_order_step<R: Rng + ?Sized>(
    state: &ZeroOrderState,
    observed_loss: f64,
    schedule: &StepSchedule,
    set: &BallSet,
    rng: &mut R,
) -> Result<ZeroOrderState> {
    check_dim(set.dim, &state.phi)?;
    let dim = state.phi.len();
    let delta = schedule.delta(state.t, dim);
    if delta == 0.0 {
        return Err(Error::ZeroPerturbation { epoch: state.t });
    }
    let eta = schedule.eta(state.t, dim);
    let scale = eta * dim as f64 / delta * observed_loss;
    let phi = project_ball(&(&state.phi - &state.last_u * scale), set);
    Ok(ZeroOrderState {
        phi,
        last_u: sample_sphere(dim, rng),
        t: state.t + 1,
    })
}

/// One agents' gradient step on `R(., theta)`, projected when a constraint is given.
pub fn agent_gd_step(
    game: &dyn StrategicGame,
    mu: &Vector,
    theta: &Vector,
    eta_mu: f64,
    constraint: Option<&BallSet>,
) -> Result<Vector> {
    let next = mu - game.agent_grad_mu(mu, theta)? * eta_mu;
    Ok(match constraint {
        Some(set) => project_ball(&next, set),
        None => next,
    })
}

/// One projected gradient step of the decision-maker on `L(mu, .)`.
pub fn dm_gd_step(
    game: &dyn StrategicGame,
    mu: &Vector,
    theta: &Vector,
    eta: f64,
    theta_set: &BallSet,
) -> Result<Vector> {
    let next = theta - game.decision_grad_theta(mu, theta)? * eta;
    Ok(project_ball(&next, theta_set))
}

/// Outcome of [`projected_descent`].
#[derive(Clone, Debug, PartialEq)]
pub struct Descent {
    pub point: Vector,
    /// Projected-gradient norm `||x - P(x - eta g)|| / eta` at the base step
    /// `eta`; equals `||g||` in the interior of the set.
    pub residual: f64,
    pub steps: usize,
}

const MAX_BACKTRACKS: usize = 60;

/// Projected gradient descent on `objective` (returning value and gradient)
/// over `set`, from `x0`, stopped once the residual is at most `tol` or after
/// `max_steps` accepted steps.
///
/// The step starts at `eta`, doubles after every accepted step and halves
/// until the projected step satisfies the sufficient-decrease test
/// `f(x') <= f(x) + g.(x' - x) + ||x' - x||^2 / (2 step)`. Flat stretches of
/// the objective are crossed in a few iterations instead of thousands.
pub fn projected_descent(
    objective: impl Fn(&Vector) -> Result<(f64, Vector)>,
    x0: &Vector,
    set: &BallSet,
    eta: f64,
    tol: f64,
    max_steps: usize,
) -> Result<Descent> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config(format!("descent step size must be > 0, got {eta}")));
    }
    let finite = |v: f64, g: &Vector| v.is_finite() && g.iter().all(|x| x.is_finite());
    let residual_at = |x: &Vector, g: &Vector| (&set.project(&(x - g * eta)) - x).norm() / eta;
    let mut x = set.project(x0);
    let (mut value, mut grad) = objective(&x)?;
    if !finite(value, &grad) {
        return Err(Error::NonFinite("objective at the starting point of a descent".into()));
    }
    let mut residual = residual_at(&x, &grad);
    let mut step = eta;
    let mut steps = 0;
    while residual > tol && steps < max_steps {
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = set.project(&(&x - &grad * step));
            let moved = &candidate - &x;
            let (v, g) = objective(&candidate)?;
            if finite(v, &g) {
                let bound = value + grad.dot(&moved) + moved.norm_squared() / (2.0 * step);
                // once the predicted change is below rounding, values cannot
                // rank the candidates; a shrinking residual decides instead
                let rounding = 4.0 * f64::EPSILON * value.abs().max(1.0);
                let decided = if (v - bound).abs() > rounding {
                    v <= bound
                } else {
                    residual_at(&candidate, &g) < residual
                };
                if decided {
                    accepted = Some((candidate, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, v, g)) = accepted else {
            break;
        };
        x = candidate;
        value = v;
        grad = g;
        residual = residual_at(&x, &grad);
        steps += 1;
        step *= 2.0;
    }
    Ok(Descent { point: x, residual, steps })
}

/// The decision-maker's best response to a fixed `mu` by [`projected_descent`]
/// on `L(mu, .)`. Returns the final iterate and its residual.
pub fn dm_descend(
    game: &dyn StrategicGame,
    mu: &Vector,
    theta0: &Vector,
    eta: f64,
    tol: f64,
    max_steps: usize,
) -> Result<(Vector, f64)> {
    let objective = |theta: &Vector| Ok((game.decision_loss(mu, theta)?, game.decision_grad_theta(mu, theta)?));
    let descent = projected_descent(objective, theta0, &game.theta_set(), eta, tol, max_steps)?;
    Ok((descent.point, descent.residual))
}
