//! Concrete scenarios: a lunar lander, two-arm manipulation, cooperative
//! furniture carrying, vehicle platooning and a scalar teaching toy.
//!
//! Every scenario keeps all of its tunable constants in one `Params` struct
//! with documented defaults.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind};
use crate::ilq::{solve_ilq, IlqOptions};
use crate::lq_nash::{solve_feedback_nash, FeedbackPolicyStage};
use crate::model::{expansion_fd_error, jacobian_fd_error, GameDefinition};
use crate::simulation::IntentSwitch;
use crate::teaching::{belief_coupled_game, belief_gains, AugmentedState, TeachingWeights};

pub mod furniture;
pub mod lunar_lander;
pub mod manipulation;
pub mod platooning;
pub mod scalar_toy;
mod terms;

pub use furniture::{make_furniture, FurnitureParams};
pub use lunar_lander::{make_lunar_lander, LunarLanderParams};
pub use manipulation::{make_manipulation, ManipulationParams};
pub use platooning::{make_platooning, PlatooningParams};
pub use scalar_toy::{make_scalar_toy, ScalarToyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvironmentName {
    Manipulation,
    LunarLander,
    Furniture,
    Platooning,
    ScalarToy,
}

impl EnvironmentName {
    pub const ALL: [EnvironmentName; 5] = [
        EnvironmentName::Manipulation,
        EnvironmentName::LunarLander,
        EnvironmentName::Furniture,
        EnvironmentName::Platooning,
        EnvironmentName::ScalarToy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvironmentName::Manipulation => "manipulation",
            EnvironmentName::LunarLander => "lunar_lander",
            EnvironmentName::Furniture => "furniture",
            EnvironmentName::Platooning => "platooning",
            EnvironmentName::ScalarToy => "scalar_toy",
        }
    }
}

impl fmt::Display for EnvironmentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvironmentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown environment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefKind {
    Point,
    Gaussian,
}

/// A constructed scenario together with its estimation and teaching defaults.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub name: EnvironmentName,
    pub game: GameDefinition,
    pub x0: DVector<f64>,
    /// What the intent parameter means physically.
    pub intent_meaning: &'static str,
    pub estimator: EstimatorKind,
    /// Initial belief of each uncertain player.
    pub initial_beliefs: Vec<Belief>,
    /// Default teaching weights, including the default true intent.
    pub weights: TeachingWeights,
    /// Default sweep of true intents.
    pub theta_grid: Vec<f64>,
    pub switch: Option<IntentSwitch>,
}

impl EnvironmentSpec {
    pub fn belief_kind(&self) -> BeliefKind {
        match self.estimator {
            EstimatorKind::Mle { .. } => BeliefKind::Point,
            EstimatorKind::Gaussian { .. } => BeliefKind::Gaussian,
        }
    }

    /// Equilibrium policies for true intent `theta`: the exact feedback Nash
    /// equilibrium of LQ games, or iterative LQ policies solved at `theta`.
    pub fn solve(
        &self,
        theta: &DVector<f64>,
        options: &IlqOptions,
    ) -> Result<Vec<FeedbackPolicyStage>> {
        match &self.game {
            GameDefinition::Linear(g) => Ok(solve_feedback_nash(g)?.policies),
            GameDefinition::Nonlinear(g) => {
                Ok(solve_ilq(g, theta, &self.x0, None, options)?.policies)
            }
        }
    }
}

/// Largest deviation of the analytic derivatives used by the iterative
/// solvers from central finite differences, over `points` random samples
/// around the initial state.
///
/// Covers the game's dynamics and every player's running and terminal cost,
/// plus the belief-coupled problem built from `policies`.
pub fn derivative_fidelity(
    spec: &EnvironmentSpec,
    policies: &[FeedbackPolicyStage],
    points: usize,
    seed: u64,
) -> Result<f64> {
    let game = spec.game.to_nonlinear();
    let gains = belief_gains(spec.estimator, &spec.initial_beliefs, policies)?;
    let coupled = belief_coupled_game(&spec.game, policies, &gains, &spec.weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.5).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut sample = |v: &DVector<f64>| v.map(|c| c + normal.sample(&mut rng));
    let missing = |what: &str| Error::InvalidInput(format!("{what} has no analytic derivatives"));
    let dims = &game.dims;
    let theta_star = &spec.weights.theta_star;
    let z_base = AugmentedState::new(
        spec.x0.clone(),
        spec.initial_beliefs
            .iter()
            .map(|b| b.mean().clone())
            .collect(),
    )
    .to_vector();
    let mut worst: f64 = 0.0;
    for k in 0..points {
        let t = k % dims.horizon;
        let x = sample(&spec.x0);
        let u: Vec<DVector<f64>> = dims
            .control_dims
            .iter()
            .map(|&m| sample(&DVector::zeros(m)))
            .collect();
        let theta = sample(theta_star);
        worst = worst.max(
            jacobian_fd_error(game.dynamics.as_ref(), t, &x, &u)
                .ok_or_else(|| missing("dynamics"))?,
        );
        for cost in &game.costs {
            for stage in [Some(t), None] {
                let e = expansion_fd_error(cost.as_ref(), stage, &x, &u, &theta)
                    .ok_or_else(|| missing("cost"))?;
                worst = worst.max(e);
            }
        }
        let z = sample(&z_base);
        let u1 = vec![u[0].clone()];
        worst = worst.max(
            jacobian_fd_error(coupled.dynamics.as_ref(), t, &z, &u1)
                .ok_or_else(|| missing("belief dynamics"))?,
        );
        for stage in [Some(t), None] {
            let e = expansion_fd_error(coupled.costs[0].as_ref(), stage, &z, &u1, theta_star)
                .ok_or_else(|| missing("teaching cost"))?;
            worst = worst.max(e);
        }
    }
    Ok(worst)
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

pub(crate) fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

pub(crate) fn check_len(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() == len {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must have {len} entries, got {}",
            v.len()
        )))
    }
}

/// Zero-order-hold double integrator for one axis: `[p, v]`.
pub(crate) fn double_integrator(dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[0.5 * dt * dt, dt]),
    )
}

pub(crate) fn v1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}
