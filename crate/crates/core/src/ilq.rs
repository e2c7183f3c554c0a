//! Approximate feedback Nash equilibria of nonlinear games by repeated local
//! LQ approximation about a nominal trajectory.

use nalgebra::DVector;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{all_finite_v, max_abs};
use crate::lq_nash::{backward_recursion, Degeneracy, FeedbackPolicyStage};
use crate::model::{
    evaluate_trajectory_cost, local_lq_game, GameDefinition, LinearGame, NonlinearGame, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct IlqOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Feedforward scalings tried in order; the first admissible one is taken.
    pub step_grid: Vec<f64>,
}

impl Default for IlqOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-4,
            step_grid: vec![1.0, 0.5, 0.25, 0.1, 0.01],
        }
    }
}

impl IlqOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if self.step_grid.is_empty() || self.step_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidInput(
                "step_grid must hold positive step sizes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub nominal: Trajectory,
    /// Number of updates that moved the nominal by at least `tol`.
    pub iterations: usize,
    /// Max-norm state change of the last update.
    pub last_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct IlqSolution {
    pub state: IterationState,
    /// Absolute-coordinate affine policies that reproduce the nominal at the
    /// solve intent.
    pub policies: Vec<FeedbackPolicyStage>,
    /// Local LQ game about the final nominal.
    pub local_game: LinearGame,
}

/// Step acceptance for the line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Acceptance {
    /// Any finite, in-bounds rollout.
    Feasible,
    /// Additionally requires the first player's cost not to increase.
    Descent,
}

pub fn solve_ilq(
    game: &NonlinearGame,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    initial_controls: Option<Vec<Vec<DVector<f64>>>>,
    options: &IlqOptions,
) -> Result<IlqSolution> {
    iterate(
        game,
        theta,
        x0,
        initial_controls,
        options,
        Acceptance::Feasible,
    )
}

pub(crate) fn iterate(
    game: &NonlinearGame,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    initial_controls: Option<Vec<Vec<DVector<f64>>>>,
    options: &IlqOptions,
    acceptance: Acceptance,
) -> Result<IlqSolution> {
    options.validate()?;
    let dims = &game.dims;
    if x0.len() != dims.state_dim {
        return Err(dim_err("initial state", dims.state_dim, x0.len()));
    }
    if theta.len() != dims.intent_dim {
        return Err(dim_err("intent", dims.intent_dim, theta.len()));
    }
    let controls = match initial_controls {
        Some(c) => {
            if c.len() != dims.horizon {
                return Err(dim_err("initial controls", dims.horizon, c.len()));
            }
            c
        }
        None => vec![
            dims.control_dims
                .iter()
                .map(|&m| DVector::zeros(m))
                .collect::<Vec<_>>();
            dims.horizon
        ],
    };
    let states = game.simulate(x0, &controls);
    if let Some(t) = states.iter().position(|x| !all_finite_v(x)) {
        return Err(Error::NonFiniteState { step: t });
    }
    let mut nominal = Trajectory { states, controls };
    let definition = GameDefinition::Nonlinear(game.clone());
    let cost_of = |tr: &Trajectory| evaluate_trajectory_cost(&definition, tr, 0, theta);
    let mut nominal_cost = match acceptance {
        Acceptance::Descent => cost_of(&nominal)?,
        Acceptance::Feasible => 0.0,
    };

    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let degeneracy = if dims.players() == 1 {
        Degeneracy::ControlHessian
    } else {
        Degeneracy::Nash
    };

    for pass in 0..options.max_iters {
        let local = local_lq_game(game, &nominal, theta)?;
        let solution = backward_recursion(&local.dims, &local.stages, &local.costs, degeneracy)?;

        let mut accepted = None;
        for &eta in &options.step_grid {
            let Some(candidate) =
                line_search_rollout(game, &nominal, &solution.policies, theta, eta)
            else {
                continue;
            };
            if acceptance == Acceptance::Descent {
                let c = cost_of(&candidate)?;
                if !(c <= nominal_cost) {
                    continue;
                }
                nominal_cost = c;
            }
            accepted = Some(candidate);
            break;
        }
        let Some(candidate) = accepted else {
            if acceptance == Acceptance::Descent {
                // No step improves the cost: the nominal is locally optimal.
                last_change = 0.0;
                converged = true;
                break;
            }
            return Err(Error::Divergence { iteration: pass });
        };

        last_change = candidate
            .states
            .iter()
            .zip(&nominal.states)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(0.0, f64::max);
        nominal = candidate;
        if last_change < options.tol {
            converged = true;
            break;
        }
        iterations += 1;
    }

    let local_game = local_lq_game(game, &nominal, theta)?;
    let solution = backward_recursion(
        &local_game.dims,
        &local_game.stages,
        &local_game.costs,
        degeneracy,
    )?;
    let policies = anchor_to_nominal(solution.policies, &nominal, theta);

    Ok(IlqSolution {
        state: IterationState {
            nominal,
            iterations,
            last_change,
            converged,
        },
        policies,
        local_game,
    })
}

/// Re-expresses local feedback gains as `u = ū − K_x (x − x̄) − K_θ (θ − θ_nom)`.
pub(crate) fn anchor_to_nominal(
    mut policies: Vec<FeedbackPolicyStage>,
    nominal: &Trajectory,
    theta: &DVector<f64>,
) -> Vec<FeedbackPolicyStage> {
    for (t, stage) in policies.iter_mut().enumerate() {
        for (i, g) in stage.players.iter_mut().enumerate() {
            g.offset = -&nominal.controls[t][i]
                - &g.state_gain * &nominal.states[t]
                - &g.intent_gain * theta;
        }
    }
    policies
}

fn line_search_rollout(
    game: &NonlinearGame,
    nominal: &Trajectory,
    policies: &[FeedbackPolicyStage],
    theta: &DVector<f64>,
    eta: f64,
) -> Option<Trajectory> {
    let horizon = game.dims.horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(nominal.states[0].clone());
    for t in 0..horizon {
        let x = &states[t];
        let x_bar = &nominal.states[t];
        let dx = x - x_bar;
        let u: Vec<DVector<f64>> = policies[t]
            .players
            .iter()
            .zip(&nominal.controls[t])
            .map(|(g, u_bar)| {
                let feedforward =
                    &g.state_gain * x_bar + &g.intent_gain * theta + &g.offset + u_bar;
                u_bar - &g.state_gain * &dx - feedforward * eta
            })
            .collect();
        let next = game.dynamics.step(t, x, &u);
        if !all_finite_v(&next) || u.iter().any(|ui| !all_finite_v(ui)) {
            return None;
        }
        if let Some(bounds) = &game.state_bounds {
            if !bounds.contains(&next) {
                return None;
            }
        }
        states.push(next);
        controls.push(u);
    }
    Some(Trajectory { states, controls })
}
