//! A human and a robot carry a table to a known destination. The human knows
//! the preferred table angle θ; the robot holds a Gaussian belief over it.
//!
//! State `[p_x^H, p_y^H, p_x^R, p_y^R, φ]` with planar velocity controls; the
//! table angle turns with the carriers' relative velocity across the table.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::terms::{Penalty, Spacing, TermCost};
use super::{check_len, non_negative, positive, v1, EnvironmentName, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind, GaussianBelief};
use crate::model::{
    Dynamics, GameDefinition, GameDimensions, IntentSpace, NonlinearGame, PlayerCost,
};
use crate::teaching::TeachingWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FurnitureParams {
    pub dt: f64,
    pub horizon: usize,
    pub table_length: f64,
    /// Human (table end) start position; the robot starts at the other end.
    pub human_start: Vec<f64>,
    pub initial_angle: f64,
    /// Destination of the table midpoint.
    pub destination: Vec<f64>,
    pub human_angle_weight: f64,
    pub human_goal_weight: f64,
    pub human_effort: f64,
    pub robot_angle_weight: f64,
    pub robot_goal_weight: f64,
    pub robot_spacing_weight: f64,
    pub robot_effort: f64,
    /// Multiplier on all stage-`T` weights.
    pub terminal_scale: f64,
    pub observation_noise: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub theta_star: f64,
    pub theta_grid: Vec<f64>,
}

impl Default for FurnitureParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 30,
            table_length: 1.0,
            human_start: vec![0.0, 0.0],
            initial_angle: 0.6,
            destination: vec![2.0, 1.0],
            human_angle_weight: 2.0,
            human_goal_weight: 0.5,
            human_effort: 1.0,
            robot_angle_weight: 2.0,
            robot_goal_weight: 0.5,
            robot_spacing_weight: 5.0,
            robot_effort: 0.5,
            terminal_scale: 5.0,
            observation_noise: 1.0,
            prior_mean: 0.1,
            prior_variance: 0.4,
            rho1: 1.0,
            rho2: 0.0,
            theta_star: 1.1,
            theta_grid: vec![0.3, 1.1],
        }
    }
}

impl FurnitureParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        positive("table_length", self.table_length)?;
        check_len("human_start", &self.human_start, 2)?;
        check_len("destination", &self.destination, 2)?;
        for (name, v) in [
            ("human_angle_weight", self.human_angle_weight),
            ("human_goal_weight", self.human_goal_weight),
            ("robot_angle_weight", self.robot_angle_weight),
            ("robot_goal_weight", self.robot_goal_weight),
            ("robot_spacing_weight", self.robot_spacing_weight),
            ("terminal_scale", self.terminal_scale),
        ] {
            non_negative(name, v)?;
        }
        positive("human_effort", self.human_effort)?;
        positive("robot_effort", self.robot_effort)?;
        positive("observation_noise", self.observation_noise)?;
        positive("prior_variance", self.prior_variance)?;
        Ok(())
    }
}

/// Single-integrator carriers; the table angle follows
/// `φ' = φ + dt ((v^R − v^H) · [−sin φ, cos φ]) / L`.
#[derive(Debug, Clone)]
pub(crate) struct TableKinematics {
    pub dt: f64,
    pub length: f64,
}

impl Dynamics for TableKinematics {
    fn step(&self, _t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let (vh, vr) = (&u[0], &u[1]);
        let (s, c) = x[4].sin_cos();
        let turn = ((vr[0] - vh[0]) * -s + (vr[1] - vh[1]) * c) / self.length;
        DVector::from_vec(vec![
            x[0] + self.dt * vh[0],
            x[1] + self.dt * vh[1],
            x[2] + self.dt * vr[0],
            x[3] + self.dt * vr[1],
            x[4] + self.dt * turn,
        ])
    }

    fn jacobians(
        &self,
        _t: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let (vh, vr) = (&u[0], &u[1]);
        let (s, c) = x[4].sin_cos();
        let k = self.dt / self.length;
        let mut a = DMatrix::identity(5, 5);
        a[(4, 4)] += k * (-(vr[0] - vh[0]) * c - (vr[1] - vh[1]) * s);
        let mut bh = DMatrix::zeros(5, 2);
        bh[(0, 0)] = self.dt;
        bh[(1, 1)] = self.dt;
        bh[(4, 0)] = k * s;
        bh[(4, 1)] = -k * c;
        let mut br = DMatrix::zeros(5, 2);
        br[(2, 0)] = self.dt;
        br[(3, 1)] = self.dt;
        br[(4, 0)] = -k * s;
        br[(4, 1)] = k * c;
        Some((a, vec![bh, br]))
    }
}

pub fn make_furniture(params: &FurnitureParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let p = params;
    let midpoint = |axis: usize, w: f64| Penalty {
        coefs: vec![(axis, 0.5), (2 + axis, 0.5)],
        weight: w,
        offset: p.destination[axis],
        theta_coef: 0.0,
    };
    let terms = |angle: f64, goal: f64, scale: f64| {
        vec![
            Penalty::track(4, scale * angle, 0.0, 1.0),
            midpoint(0, scale * goal),
            midpoint(1, scale * goal),
        ]
    };
    let spacing = Spacing {
        a: 0,
        b: 2,
        length: p.table_length,
        weight: p.robot_spacing_weight,
        smoothing: 1e-3,
    };
    let human = TermCost {
        player: 0,
        running: terms(p.human_angle_weight, p.human_goal_weight, 1.0),
        terminal: terms(p.human_angle_weight, p.human_goal_weight, p.terminal_scale),
        effort: vec![p.human_effort; 2],
        pairs: vec![],
        collision: None,
        spacing: vec![],
    };
    let robot = TermCost {
        player: 1,
        running: terms(p.robot_angle_weight, p.robot_goal_weight, 1.0),
        terminal: terms(p.robot_angle_weight, p.robot_goal_weight, p.terminal_scale),
        effort: vec![p.robot_effort; 2],
        pairs: vec![],
        collision: None,
        spacing: vec![spacing],
    };
    let costs: Vec<Arc<dyn PlayerCost>> = vec![Arc::new(human), Arc::new(robot)];
    let dims = GameDimensions::new(5, vec![2, 2], 1, p.horizon)?;
    let dynamics = Arc::new(TableKinematics {
        dt: p.dt,
        length: p.table_length,
    });
    let game = NonlinearGame::new(dims, dynamics, costs, IntentSpace::unbounded(1))?;
    let (s, c) = p.initial_angle.sin_cos();
    let (hx, hy) = (p.human_start[0], p.human_start[1]);
    let x0 = DVector::from_vec(vec![
        hx,
        hy,
        hx + p.table_length * c,
        hy + p.table_length * s,
        p.initial_angle,
    ]);
    Ok(EnvironmentSpec {
        name: EnvironmentName::Furniture,
        game: GameDefinition::Nonlinear(game),
        x0,
        intent_meaning: "preferred table angle in radians",
        estimator: EstimatorKind::Gaussian {
            observation_noise: p.observation_noise,
        },
        initial_beliefs: vec![Belief::Gaussian(GaussianBelief::scalar(
            p.prior_mean,
            p.prior_variance,
        )?)],
        weights: TeachingWeights::new(p.rho1, p.rho2, v1(p.theta_star))?,
        theta_grid: p.theta_grid.clone(),
        switch: None,
    })
}
