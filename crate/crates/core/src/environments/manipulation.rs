//! Two arms lifting a pot. The certain (left) arm wants the handle at height
//! θ; the uncertain (right) arm is rewarded for grasping the opposite handle
//! at −θ and keeps a point estimate of θ.
//!
//! Each end-effector is a planar double integrator with state
//! `[p_x, p_y, v_x, v_y]` and acceleration controls.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::terms::{Penalty, SoftCollision, TermCost};
use super::{check_len, non_negative, positive, v1, EnvironmentName, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind};
use crate::model::{
    Dynamics, GameDefinition, GameDimensions, IntentSpace, NonlinearGame, PlayerCost,
};
use crate::teaching::TeachingWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManipulationParams {
    pub dt: f64,
    pub horizon: usize,
    /// `[p_x, p_y]` of the left end-effector.
    pub left_start: Vec<f64>,
    pub right_start: Vec<f64>,
    /// Handles sit at `x = ±handle_x`.
    pub handle_x: f64,
    pub goal_weight: f64,
    pub terminal_goal_weight: f64,
    pub velocity_weight: f64,
    pub effort: f64,
    pub collision_weight: f64,
    pub collision_radius: f64,
    pub collision_smoothing: f64,
    pub alpha: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub theta_star: f64,
    pub initial_estimate: f64,
    pub theta_grid: Vec<f64>,
}

impl Default for ManipulationParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 30,
            left_start: vec![-1.0, 0.0],
            right_start: vec![1.0, 0.0],
            handle_x: 0.3,
            goal_weight: 0.5,
            terminal_goal_weight: 10.0,
            velocity_weight: 0.5,
            effort: 1.0,
            collision_weight: 10.0,
            collision_radius: 0.3,
            collision_smoothing: 0.05,
            alpha: 0.5,
            rho1: 1.0,
            rho2: 1.0,
            theta_star: -0.5,
            initial_estimate: 0.0,
            theta_grid: vec![-0.5, -0.25, 0.25, 0.5],
        }
    }
}

impl ManipulationParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        check_len("left_start", &self.left_start, 2)?;
        check_len("right_start", &self.right_start, 2)?;
        for (name, v) in [
            ("goal_weight", self.goal_weight),
            ("terminal_goal_weight", self.terminal_goal_weight),
            ("velocity_weight", self.velocity_weight),
            ("collision_weight", self.collision_weight),
            ("collision_radius", self.collision_radius),
        ] {
            non_negative(name, v)?;
        }
        positive("effort", self.effort)?;
        positive("collision_smoothing", self.collision_smoothing)?;
        Ok(())
    }
}

/// Independent planar double integrators, one per player, each driven by its
/// own acceleration.
#[derive(Debug, Clone)]
pub(crate) struct PlanarDoubleIntegrators {
    pub dt: f64,
    pub players: usize,
}

impl PlanarDoubleIntegrators {
    fn matrices(&self) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = 4 * self.players;
        let dt = self.dt;
        let mut a = DMatrix::identity(n, n);
        let mut bs = Vec::with_capacity(self.players);
        for i in 0..self.players {
            let o = 4 * i;
            a[(o, o + 2)] = dt;
            a[(o + 1, o + 3)] = dt;
            let mut b = DMatrix::zeros(n, 2);
            b[(o, 0)] = 0.5 * dt * dt;
            b[(o + 1, 1)] = 0.5 * dt * dt;
            b[(o + 2, 0)] = dt;
            b[(o + 3, 1)] = dt;
            bs.push(b);
        }
        (a, bs)
    }
}

impl Dynamics for PlanarDoubleIntegrators {
    fn step(&self, _t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let dt = self.dt;
        let mut next = x.clone();
        for (i, ui) in u.iter().enumerate() {
            let o = 4 * i;
            for k in 0..2 {
                next[o + k] += dt * x[o + 2 + k] + 0.5 * dt * dt * ui[k];
                next[o + 2 + k] += dt * ui[k];
            }
        }
        next
    }

    fn jacobians(
        &self,
        _t: usize,
        _x: &DVector<f64>,
        _u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        Some(self.matrices())
    }
}

pub fn make_manipulation(params: &ManipulationParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let p = params;
    let collision = SoftCollision {
        radius: p.collision_radius,
        weight: p.collision_weight,
        smoothing: p.collision_smoothing,
        kappa: 0.1 * p.collision_radius.max(0.1),
    };
    // Left arm: (p_x + h)² + (p_y − θ)²; right arm: (p_x − h)² + (p_y + θ)².
    let goals = |player: usize, w: f64| {
        let o = 4 * player;
        let sign = if player == 0 { 1.0 } else { -1.0 };
        vec![
            Penalty::track(o, w, -sign * p.handle_x, 0.0),
            Penalty::track(o + 1, w, 0.0, sign),
            Penalty::track(o + 2, p.velocity_weight, 0.0, 0.0),
            Penalty::track(o + 3, p.velocity_weight, 0.0, 0.0),
        ]
    };
    let costs: Vec<Arc<dyn PlayerCost>> = (0..2)
        .map(|i| {
            Arc::new(TermCost {
                player: i,
                running: goals(i, p.goal_weight),
                terminal: goals(i, p.terminal_goal_weight),
                effort: vec![p.effort; 2],
                pairs: vec![(0, 4)],
                collision: Some(collision),
                spacing: vec![],
            }) as Arc<dyn PlayerCost>
        })
        .collect();
    let dims = GameDimensions::new(8, vec![2, 2], 1, p.horizon)?;
    let dynamics = Arc::new(PlanarDoubleIntegrators {
        dt: p.dt,
        players: 2,
    });
    let game = NonlinearGame::new(dims, dynamics, costs, IntentSpace::unbounded(1))?;
    let mut x0 = DVector::zeros(8);
    x0[0] = p.left_start[0];
    x0[1] = p.left_start[1];
    x0[4] = p.right_start[0];
    x0[5] = p.right_start[1];
    Ok(EnvironmentSpec {
        name: EnvironmentName::Manipulation,
        game: GameDefinition::Nonlinear(game),
        x0,
        intent_meaning: "height of the handle the left arm grasps",
        estimator: EstimatorKind::Mle { alpha: p.alpha },
        initial_beliefs: vec![Belief::Point(v1(p.initial_estimate))],
        weights: TeachingWeights::new(p.rho1, p.rho2, v1(p.theta_star))?,
        theta_grid: p.theta_grid.clone(),
        switch: None,
    })
}
