//! Stackelberg equilibria for both orders of play.
//!
//! The linear regression game has exact closed forms. Other games go through
//! numerical oracles: gradient descent on the decision-maker's Stackelberg
//! risk (chain rule through the agents' closed-form best response), and a
//! grid search over agent actions with an inner gradient-descent best
//! response for the decision-maker.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{check_dim, radial_best_response, LinearRegressionGame, StrategicGame, Vector};
use crate::optimize::{dm_descend, project_ball, projected_descent};

/// Offset applied to a zero iterate when the agents' best response is
/// undefined there.
pub const ZERO_THETA_NUDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Leader {
    DecisionMaker,
    Agents,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    GridSearch,
    OuterGd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub leader: Leader,
    /// `theta_SE` when the decision-maker leads, `mu_SE` when the agents lead.
    pub point: Vec<f64>,
    /// The follower's best response at `point`.
    pub follower_point: Vec<f64>,
    pub risk_dm: f64,
    pub risk_agents: f64,
    pub method: Method,
    /// Follower (grid search) or leader (outer descent) stationarity norm; zero for closed forms.
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EquilibriumReport {
    pub fn point(&self) -> Vector {
        Vector::from_column_slice(&self.point)
    }

    pub fn follower_point(&self) -> Vector {
        Vector::from_column_slice(&self.follower_point)
    }
}

/// Knobs of the numerical oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub dm_steps: usize,
    pub dm_eta: f64,
    pub dm_tol: f64,
    /// Grid points per axis.
    pub grid: usize,
    pub inner_steps: usize,
    pub inner_eta: f64,
    pub inner_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            dm_steps: 1000,
            dm_eta: 0.1,
            dm_tol: 1e-10,
            grid: 1001,
            inner_steps: 10_000,
            inner_eta: 0.1,
            inner_tol: 1e-8,
        }
    }
}

/// Agents' best response on a ball, flagged when `theta = 0` makes every
/// feasible action optimal (the zero action is returned then).
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub point: Vector,
    pub degenerate: bool,
}

pub fn mu_br_constrained(theta: &Vector, budget: f64) -> BestResponse {
    match radial_best_response(theta, budget) {
        Some(point) => BestResponse { point, degenerate: false },
        None => BestResponse {
            point: Vector::zeros(theta.len()),
            degenerate: true,
        },
    }
}

pub fn mu_br_costly(theta: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::config(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(theta / lambda)
}

/// `(I + mu mu^T)^{-1} beta`, evaluated as `beta - mu (mu.beta) / (1 + |mu|^2)`.
pub fn theta_br_linear(mu: &Vector, beta: &Vector) -> Result<Vector> {
    check_dim(beta.len(), mu)?;
    Ok(beta - mu * (mu.dot(beta) / (1.0 + mu.norm_squared())))
}

/// Closed-form equilibria of the linear regression game:
/// `(decision-maker leads, agents lead)`.
pub fn linear_equilibria(game: &LinearRegressionGame) -> Result<(EquilibriumReport, EquilibriumReport)> {
    let beta = game.beta();
    let beta_norm = beta.norm();
    if beta_norm == 0.0 {
        return Err(Error::DegenerateGame("beta = 0: every model is an equilibrium".into()));
    }
    let b = game.budget();
    let half_noise = 0.5 * game.sigma2();
    let direction = beta / beta_norm;

    let theta_se = beta / (1.0 + b * b);
    let mu_follow = &direction * b;
    let dm_leads = EquilibriumReport {
        leader: Leader::DecisionMaker,
        point: theta_se.iter().copied().collect(),
        follower_point: mu_follow.iter().copied().collect(),
        risk_dm: half_noise + beta_norm * beta_norm * b * b / (2.0 * (1.0 + b * b)),
        risk_agents: -beta_norm * b / (1.0 + b * b),
        method: Method::ClosedForm,
        residual: 0.0,
        warnings: Vec::new(),
    };

    let c = b.min(1.0);
    let mu_se = &direction * c;
    let theta_follow = theta_br_linear(&mu_se, beta)?;
    let agents_lead = EquilibriumReport {
        leader: Leader::Agents,
        point: mu_se.iter().copied().collect(),
        follower_point: theta_follow.iter().copied().collect(),
        risk_dm: half_noise + beta_norm * beta_norm * c * c / (2.0 * (1.0 + c * c)),
        risk_agents: -beta_norm * c / (1.0 + c * c),
        method: Method::ClosedForm,
        residual: 0.0,
        warnings: Vec::new(),
    };
    Ok((dm_leads, agents_lead))
}

fn nudge_off_zero(theta: &mut Vector) {
    if theta.norm() == 0.0 {
        theta[0] = ZERO_THETA_NUDGE;
    }
}

/// Gradient of `SR_L(theta) = L(mu_BR(theta), theta)` via the chain rule.
fn stackelberg_gradient(game: &dyn StrategicGame, theta: &Vector) -> Result<(Vector, Vector)> {
    let mu = game
        .agents_best_response(theta)
        .ok_or_else(|| Error::DiagnosticUnavailable("game has no closed-form agents' best response".into()))?;
    let direct = game.decision_grad_theta(&mu, theta)?;
    let through_mu = game.decision_grad_mu(&mu, theta)?;
    let chain = game
        .agents_best_response_vjp(theta, &through_mu)
        .ok_or_else(|| Error::DiagnosticUnavailable("best-response Jacobian undefined at theta = 0".into()))?;
    Ok((direct + chain, mu))
}

/// Decision-maker's equilibrium by projected gradient descent on `SR_L`,
/// starting from the origin.
pub fn dm_equilibrium_numeric(game: &dyn StrategicGame, steps: usize, eta: f64) -> Result<EquilibriumReport> {
    dm_equilibrium_from(game, &Vector::zeros(game.dim()), steps, eta, OracleSettings::default().dm_tol)
}

pub fn dm_equilibrium_from(
    game: &dyn StrategicGame,
    theta0: &Vector,
    steps: usize,
    eta: f64,
    tol: f64,
) -> Result<EquilibriumReport> {
    check_dim(game.dim(), theta0)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config(format!("outer step size must be > 0, got {eta}")));
    }
    let set = game.theta_set();
    let mut start = project_ball(theta0, &set);
    nudge_off_zero(&mut start);
    let objective = |theta: &Vector| -> Result<(f64, Vector)> {
        let mut theta = theta.clone();
        nudge_off_zero(&mut theta);
        let (grad, mu) = stackelberg_gradient(game, &theta)?;
        Ok((game.decision_loss(&mu, &theta)?, grad))
    };
    let descent = projected_descent(objective, &start, &set, eta, tol, steps)?;
    let mut theta = descent.point;
    nudge_off_zero(&mut theta);
    let mut warnings = Vec::new();
    if descent.residual > tol {
        warnings.push(format!(
            "outer descent stopped after {} steps with residual {:.3e} above tolerance {tol:.1e}",
            descent.steps, descent.residual
        ));
    }
    let mu = game.agents_best_response(&theta).expect("checked above");
    let risk_dm = game.decision_loss(&mu, &theta)?;
    let risk_agents = game.agent_loss(&mu, &theta)?;
    if !(risk_dm.is_finite() && risk_agents.is_finite()) {
        return Err(Error::NonFinite("risk at the decision-maker's equilibrium".into()));
    }
    Ok(EquilibriumReport {
        leader: Leader::DecisionMaker,
        point: theta.iter().copied().collect(),
        follower_point: mu.iter().copied().collect(),
        risk_dm,
        risk_agents,
        method: Method::OuterGd,
        residual: descent.residual,
        warnings,
    })
}

/// Number of contiguous grid chunks; each chunk warm-starts its inner descents
/// sequentially, chunks run in parallel. Fixed so results never depend on the
/// thread count.
const GRID_CHUNKS: usize = 32;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn candidate_grid(game: &dyn StrategicGame, center: &Vector, half_width: f64, per_axis: usize) -> Result<Vec<Vector>> {
    let dim = game.dim();
    let constraint = game.action_set();
    let keep = |mu: &Vector| constraint.as_ref().is_none_or(|set| set.contains(mu));
    if half_width == 0.0 {
        return Ok(vec![center.clone()]);
    }
    let points: Vec<Vector> = match dim {
        1 => linspace(center[0] - half_width, center[0] + half_width, per_axis)
            .into_iter()
            .map(|x| Vector::from_element(1, x))
            .collect(),
        2 => {
            let xs = linspace(center[0] - half_width, center[0] + half_width, per_axis);
            let ys = linspace(center[1] - half_width, center[1] + half_width, per_axis);
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| Vector::from_column_slice(&[x, y])))
                .collect()
        }
        d => return Err(Error::config(format!("grid search supports 1 or 2 dimensions, got {d}"))),
    };
    Ok(points.into_iter().filter(|mu| keep(mu)).collect())
}

struct Candidate {
    index: usize,
    mu: Vector,
    theta: Vector,
    risk_agents: f64,
    residual: f64,
}

fn evaluate_grid(game: &dyn StrategicGame, points: Vec<Vector>, start: &Vector, settings: &OracleSettings) -> Result<Vec<Candidate>> {
    let chunk = points.len().div_ceil(GRID_CHUNKS).max(1);
    let indexed: Vec<(usize, Vector)> = points.into_iter().enumerate().collect();
    let chunks: Vec<Result<Vec<Candidate>>> = indexed
        .par_chunks(chunk)
        .map(|part| {
            let mut warm = start.clone();
            let mut out = Vec::with_capacity(part.len());
            for (index, mu) in part {
                let (theta, residual) =
                    dm_descend(game, mu, &warm, settings.inner_eta, settings.inner_tol, settings.inner_steps)?;
                let risk_agents = game.agent_loss(mu, &theta)?;
                warm = theta.clone();
                out.push(Candidate {
                    index: *index,
                    mu: mu.clone(),
                    theta,
                    risk_agents,
                    residual,
                });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Minimum `SR_R`; ties go to the smaller `||mu||`, then the earlier grid index.
fn best_candidate(candidates: Vec<Candidate>) -> Option<Candidate> {
    candidates.into_iter().filter(|c| c.risk_agents.is_finite()).min_by(|a, b| {
        a.risk_agents
            .total_cmp(&b.risk_agents)
            .then(a.mu.norm().total_cmp(&b.mu.norm()))
            .then(a.index.cmp(&b.index))
    })
}

/// Agents' equilibrium by grid search over their actions. In one dimension the
/// grid covers `[-r, r]` with `settings.grid` points; in two it is a
/// `grid x grid` lattice over `[-r, r]^2` (clipped to the action set when one
/// exists) refined once around the incumbent with half-width two cells.
pub fn agents_equilibrium_numeric(game: &dyn StrategicGame, settings: &OracleSettings) -> Result<EquilibriumReport> {
    let dim = game.dim();
    let radius = game.action_search_set().radius;
    if settings.grid == 0 {
        return Err(Error::config("grid must have at least one point per axis"));
    }
    let zero = Vector::zeros(dim);
    let (start, _) = dm_descend(game, &zero, &zero, settings.inner_eta, settings.inner_tol, settings.inner_steps)?;

    let points = candidate_grid(game, &zero, radius, settings.grid)?;
    let mut best = best_candidate(evaluate_grid(game, points, &start, settings)?)
        .ok_or_else(|| Error::NonFinite("no grid point produced a finite agents' risk".into()))?;

    if dim == 2 && radius > 0.0 && settings.grid > 1 {
        let cell = 2.0 * radius / (settings.grid - 1) as f64;
        let refined = candidate_grid(game, &best.mu, 2.0 * cell, settings.grid)?;
        if let Some(candidate) = best_candidate(evaluate_grid(game, refined, &best.theta, settings)?) {
            if candidate.risk_agents < best.risk_agents {
                best = candidate;
            }
        }
    }

    let mut warnings = Vec::new();
    if best.residual > settings.inner_tol {
        warnings.push(format!(
            "inner descent stopped at gradient norm {:.3e} (> {:.1e}) at the reported point",
            best.residual, settings.inner_tol
        ));
    }
    let risk_dm = game.decision_loss(&best.mu, &best.theta)?;
    Ok(EquilibriumReport {
        leader: Leader::Agents,
        point: best.mu.iter().copied().collect(),
        follower_point: best.theta.iter().copied().collect(),
        risk_dm,
        risk_agents: best.risk_agents,
        method: Method::GridSearch,
        residual: best.residual,
        warnings,
    })
}

/// Risks at both equilibria and their differences (decision-maker leading
/// minus agents leading). Positive deltas mean that player prefers the agents
/// to lead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTable {
    pub dm_leads: EquilibriumReport,
    pub agents_lead: EquilibriumReport,
    pub delta_dm: f64,
    pub delta_agents: f64,
}

impl PreferenceTable {
    pub fn from_reports(dm_leads: EquilibriumReport, agents_lead: EquilibriumReport) -> Self {
        PreferenceTable {
            delta_dm: dm_leads.risk_dm - agents_lead.risk_dm,
            delta_agents: dm_leads.risk_agents - agents_lead.risk_agents,
            dm_leads,
            agents_lead,
        }
    }
}

/// Both equilibria of a game: closed form for linear regression, numerical
/// oracles otherwise.
pub fn equilibria(game: &dyn StrategicGame, settings: &OracleSettings) -> Result<(EquilibriumReport, EquilibriumReport)> {
    match game.as_linear() {
        Some(linear) => linear_equilibria(linear),
        None => Ok((
            dm_equilibrium_from(game, &Vector::zeros(game.dim()), settings.dm_steps, settings.dm_eta, settings.dm_tol)?,
            agents_equilibrium_numeric(game, settings)?,
        )),
    }
}

pub fn preference_table(game: &dyn StrategicGame, settings: &OracleSettings) -> Result<PreferenceTable> {
    let (dm, agents) = equilibria(game, settings)?;
    Ok(PreferenceTable::from_reports(dm, agents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{AgentCost, LogisticGame, PopulationSpec};
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn close(a: &Vector, b: &Vector, tol: f64) {
        assert!((a - b).norm() <= tol, "{a} vs {b}");
    }

    #[test]
    fn constrained_best_response_examples() {
        close(&mu_br_constrained(&v(&[3.0, 4.0]), 2.0).point, &v(&[1.2, 1.6]), 1e-15);
        close(&mu_br_constrained(&v(&[0.2, 0.0]), 2.0).point, &v(&[2.0, 0.0]), 1e-15);
        assert_eq!(mu_br_constrained(&v(&[1.0, 0.0]), 0.0).point, v(&[0.0, 0.0]));
        let zero = mu_br_constrained(&v(&[0.0, 0.0]), 2.0);
        assert!(zero.degenerate);
        assert_eq!(zero.point, v(&[0.0, 0.0]));
    }

    #[test]
    fn costly_best_response_examples() {
        assert_eq!(mu_br_costly(&v(&[2.0, 2.0]), 2.0).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(mu_br_costly(&v(&[0.0, 0.0]), 3.0).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(mu_br_costly(&v(&[1.0, 0.0]), 1.0).unwrap(), v(&[1.0, 0.0]));
        assert!(mu_br_costly(&v(&[1.0]), 0.0).is_err());
        assert!(mu_br_costly(&v(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn linear_decision_best_response_examples() {
        assert_eq!(theta_br_linear(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        close(&theta_br_linear(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), &v(&[0.5, 0.0]), 1e-15);
        assert_eq!(theta_br_linear(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), v(&[0.0, 1.0]));
        assert!(theta_br_linear(&v(&[1.0]), &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn linear_equilibria_budget_two() {
        let g = LinearRegressionGame::new(v(&[1.0, 0.0]), 0.0, 2.0).unwrap();
        let (dm, ag) = linear_equilibria(&g).unwrap();
        close(&dm.point(), &v(&[0.2, 0.0]), 1e-15);
        assert_abs_diff_eq!(dm.risk_dm, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(dm.risk_agents, -0.4, epsilon = 1e-15);
        close(&ag.point(), &v(&[1.0, 0.0]), 1e-15);
        assert_abs_diff_eq!(ag.risk_dm, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(ag.risk_agents, -0.5, epsilon = 1e-15);
        assert_eq!(dm.residual, 0.0);
        assert_eq!(ag.method, Method::ClosedForm);
    }

    #[test]
    fn linear_equilibria_zero_budget_and_degenerate_beta() {
        let g = LinearRegressionGame::new(v(&[1.0, -2.0]), 0.6, 0.0).unwrap();
        let (dm, ag) = linear_equilibria(&g).unwrap();
        assert_eq!(dm.point(), v(&[1.0, -2.0]));
        assert_eq!(ag.point(), v(&[0.0, 0.0]));
        assert_abs_diff_eq!(dm.risk_dm, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(ag.risk_dm, 0.3, epsilon = 1e-15);
        assert_eq!(dm.risk_agents, 0.0);
        assert_eq!(ag.risk_agents, 0.0);

        let flat = LinearRegressionGame::new(v(&[0.0, 0.0]), 0.0, 1.0).unwrap();
        assert!(matches!(linear_equilibria(&flat), Err(Error::DegenerateGame(_))));
    }

    #[test]
    fn closed_form_risks_match_loss_evaluations() {
        let g = LinearRegressionGame::new(v(&[0.7, -1.3, 0.4]), 0.25, 1.7).unwrap();
        let (dm, ag) = linear_equilibria(&g).unwrap();
        let theta = dm.point();
        let mu = mu_br_constrained(&theta, g.budget()).point;
        assert_abs_diff_eq!(g.decision_loss(&mu, &theta).unwrap(), dm.risk_dm, epsilon = 1e-12);
        assert_abs_diff_eq!(g.agent_loss(&mu, &theta).unwrap(), dm.risk_agents, epsilon = 1e-12);
        let mu = ag.point();
        let theta = theta_br_linear(&mu, g.beta()).unwrap();
        assert_abs_diff_eq!(g.decision_loss(&mu, &theta).unwrap(), ag.risk_dm, epsilon = 1e-12);
        assert_abs_diff_eq!(g.agent_loss(&mu, &theta).unwrap(), ag.risk_agents, epsilon = 1e-12);
    }

    #[test]
    fn outer_descent_reproduces_linear_closed_form() {
        let g = LinearRegressionGame::new(v(&[1.0, 0.0]), 0.0, 2.0).unwrap();
        let (closed, _) = linear_equilibria(&g).unwrap();
        let numeric = dm_equilibrium_numeric(&g, 1000, 0.1).unwrap();
        close(&numeric.point(), &closed.point(), 1e-6);
        assert_abs_diff_eq!(numeric.risk_dm, closed.risk_dm, epsilon = 1e-6);
        assert_abs_diff_eq!(numeric.risk_agents, closed.risk_agents, epsilon = 1e-6);
        assert_eq!(numeric.method, Method::OuterGd);
    }

    #[test]
    fn grid_search_zero_budget_is_singleton() {
        let g = LinearRegressionGame::new(v(&[1.0]), 0.0, 0.0).unwrap();
        let report = agents_equilibrium_numeric(&g, &OracleSettings::default()).unwrap();
        assert_eq!(report.point(), v(&[0.0]));
    }

    #[test]
    fn grid_search_finds_linear_agents_equilibrium() {
        let g = LinearRegressionGame::new(v(&[1.0]), 0.0, 2.0).unwrap();
        let settings = OracleSettings::default();
        let report = agents_equilibrium_numeric(&g, &settings).unwrap();
        let cell = 4.0 / (settings.grid - 1) as f64;
        assert!((report.point[0] - 1.0).abs() <= cell, "{:?}", report.point);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn grid_search_in_two_dimensions() {
        let g = LinearRegressionGame::new(v(&[0.6, 0.8]), 0.0, 2.0).unwrap();
        let settings = OracleSettings {
            grid: 41,
            ..OracleSettings::default()
        };
        let report = agents_equilibrium_numeric(&g, &settings).unwrap();
        let cell = 4.0 / 40.0;
        // the refinement pass works at a finer spacing than one coarse cell
        assert!((report.point() - v(&[0.6, 0.8])).norm() <= cell, "{:?}", report.point);
        assert!(report.risk_agents <= -0.5 + 1e-3);
    }

    #[test]
    fn vanishing_manipulation_recovers_plain_logistic_fit() {
        let spec = PopulationSpec {
            p: 0.5,
            alpha: v(&[1.0]),
            n: 60,
            seed: 12,
        };
        let lambda = 1e9;
        let g = LogisticGame::from_population(
            &spec,
            AgentCost::Quadratic {
                lambda,
                search_radius: 1.0,
            },
            10.0,
        )
        .unwrap();
        let report = dm_equilibrium_numeric(&g, 20_000, 0.5).unwrap();
        let zero = Vector::zeros(1);
        let (plain, residual) = dm_descend(&g, &zero, &zero, 0.5, 1e-12, 100_000).unwrap();
        assert!(residual < 1e-10);
        close(&report.point(), &plain, 1e-6);
    }
}
