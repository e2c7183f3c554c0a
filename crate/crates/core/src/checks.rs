//! Exact checks on LQ environments: geometric belief contraction under a
//! demonstration-only objective, and the task-cost advantage of shaping the
//! uncertain players' beliefs.

use nalgebra::DVector;

use crate::environments::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::estimation::{contraction_factor, Belief, EstimatorKind};
use crate::ilq::IlqOptions;
use crate::lq_nash::{FeedbackPolicyStage, PlayerPolicy};
use crate::model::GameDefinition;
use crate::simulation::{first_below, rollout, InteractionModel, RolloutRecord, RolloutSetup};
use crate::teaching::{belief_gains, cost_to_go_jacobian, plan_teaching, TeachingWeights};

/// Slack allowed on each observed contraction ratio.
pub const RATIO_SLACK: f64 = 1e-9;
/// Belief error that counts as converged.
pub const CONVERGED_ERROR: f64 = 1e-3;
/// Errors below this fraction of the initial error are not used for ratios.
const RATIO_FLOOR: f64 = 1e-9;
/// Smallest cost-to-go Jacobian norm treated as nonzero.
pub const JACOBIAN_THRESHOLD: f64 = 1e-3;
/// Smallest cost gap treated as a strict improvement.
pub const GAP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCheck {
    pub alpha: f64,
    /// `max_t σ_max(I − α K_θᵀK_θ)`.
    pub factor: f64,
    pub min_eigenvalue: f64,
    /// Belief error of the first uncertain player at every state.
    pub errors: Vec<f64>,
    /// `e_{t+1} / e_t` while `e_t` is above the numerical floor.
    pub ratios: Vec<f64>,
    /// `⌈log(tol / e_0) / log c⌉` when `c < 1`.
    pub step_bound: Option<usize>,
    pub steps_to_tolerance: Option<usize>,
}

impl ContractionCheck {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        let within_bound = match (self.step_bound, self.steps_to_tolerance) {
            (Some(bound), Some(taken)) => taken <= bound,
            _ => false,
        };
        self.factor < 1.0
            && self.min_eigenvalue > 0.0
            && self.ratios.iter().all(|&r| r <= self.factor + RATIO_SLACK)
            && within_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageCheck {
    /// Largest cost-to-go Jacobian norm over the stages of the equilibrium
    /// trajectory.
    pub jacobian_norm: f64,
    /// Certain player's task cost when it exploits the belief dynamics.
    pub active_cost: f64,
    /// Certain player's cost in the complete-information equilibrium.
    pub nash_cost: f64,
}

impl AdvantageCheck {
    pub fn gap(&self) -> f64 {
        self.nash_cost - self.active_cost
    }

    /// A nonzero Jacobian must come with a strict improvement; otherwise the
    /// check holds vacuously.
    pub fn passed(&self) -> bool {
        self.jacobian_norm <= JACOBIAN_THRESHOLD || self.gap() > GAP_THRESHOLD
    }
}

fn linear_mle(spec: &EnvironmentSpec) -> Result<f64> {
    if !spec.game.is_linear() {
        return Err(Error::InvalidInput(format!(
            "exact checks need an LQ environment; {} is nonlinear",
            spec.name
        )));
    }
    match spec.estimator {
        EstimatorKind::Mle { alpha } => Ok(alpha),
        EstimatorKind::Gaussian { .. } => Err(Error::InvalidInput(
            "exact checks need point estimates with a gradient step".into(),
        )),
    }
}

fn setup(spec: &EnvironmentSpec, beliefs: Vec<Belief>) -> RolloutSetup {
    RolloutSetup {
        x0: spec.x0.clone(),
        beliefs,
        theta_star: spec.weights.theta_star.clone(),
        switch: None,
        noise_std: 0.0,
        seed: 0,
    }
}

fn active_record(
    spec: &EnvironmentSpec,
    policies: &[FeedbackPolicyStage],
    weights: &TeachingWeights,
    beliefs: Vec<Belief>,
) -> Result<RolloutRecord> {
    let teaching = plan_teaching(
        &spec.game,
        policies,
        spec.estimator,
        &beliefs,
        weights,
        &spec.x0,
        &IlqOptions::default(),
    )?;
    rollout(
        &spec.game,
        policies,
        spec.estimator,
        &InteractionModel::Active(weights.clone()),
        Some(&teaching),
        &setup(spec, beliefs),
    )
}

/// Runs the demonstration-only teaching policy (`ρ1 = 0`, `ρ2 = rho2`) and
/// compares every step's belief contraction with the certified factor.
pub fn check_contraction(spec: &EnvironmentSpec, rho2: f64) -> Result<ContractionCheck> {
    let alpha = linear_mle(spec)?;
    let theta = &spec.weights.theta_star;
    let policies = spec.solve(theta, &IlqOptions::default())?;
    let player1: Vec<PlayerPolicy> = policies.iter().map(|s| s.players[0].clone()).collect();
    let report = contraction_factor(&player1, alpha)?;
    let weights = TeachingWeights::new(0.0, rho2, theta.clone())?;
    let rec = active_record(spec, &policies, &weights, spec.initial_beliefs.clone())?;
    let errors = rec.belief_errors(1)?;
    let floor = RATIO_FLOOR * errors[0];
    let ratios = errors
        .windows(2)
        .take_while(|w| w[0] > floor && w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let step_bound = (report.factor < 1.0).then(|| {
        if errors[0] <= CONVERGED_ERROR {
            0
        } else if report.factor <= 0.0 {
            1
        } else {
            ((CONVERGED_ERROR / errors[0]).ln() / report.factor.ln()).ceil() as usize
        }
    });
    Ok(ContractionCheck {
        alpha,
        factor: report.factor,
        min_eigenvalue: report.min_eigenvalue,
        steps_to_tolerance: first_below(&errors, CONVERGED_ERROR),
        errors,
        ratios,
        step_bound,
    })
}

/// Compares the certain player's cost under pure task-driven teaching
/// (`ρ1 = 1`, `ρ2 = 0`, estimates starting at θ*) with its
/// complete-information equilibrium cost.
pub fn check_demonstration_advantage(spec: &EnvironmentSpec) -> Result<AdvantageCheck> {
    linear_mle(spec)?;
    let GameDefinition::Linear(game) = &spec.game else {
        unreachable!("checked by linear_mle")
    };
    let theta = spec.weights.theta_star.clone();
    let policies = spec.solve(&theta, &IlqOptions::default())?;
    let uncertain = game.dims.players() - 1;
    let truthful: Vec<Belief> = vec![Belief::Point(theta.clone()); uncertain];
    let weights = TeachingWeights::new(1.0, 0.0, theta.clone())?;

    let nash = rollout(
        &spec.game,
        &policies,
        spec.estimator,
        &InteractionModel::CompleteInfo,
        None,
        &setup(spec, truthful.clone()),
    )?;
    let gains = belief_gains(spec.estimator, &truthful, &policies)?;
    let controls: Vec<DVector<f64>> = nash.controls.iter().map(|u| u[0].clone()).collect();
    let mut jacobian_norm: f64 = 0.0;
    for t in 0..game.dims.horizon {
        let g = cost_to_go_jacobian(
            &spec.game, &policies, &gains, &weights, t, &controls, &spec.x0,
        )?;
        jacobian_norm = jacobian_norm.max(g.norm());
    }
    let active = active_record(spec, &policies, &weights, truthful)?;
    Ok(AdvantageCheck {
        jacobian_norm,
        active_cost: active.total_cost(0),
        nash_cost: nash.total_cost(0),
    })
}
