//! Shared-control lunar lander: a human pilot with horizontal thrust who knows
//! the landing site, and an autopilot with both thrusters that must infer it.
//!
//! State `[p_x, v_x, p_y, v_y]`, rotation excluded. Linear-quadratic, so the
//! equilibrium and the teaching policy are solved exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    check_len, double_integrator, non_negative, positive, v1, EnvironmentName, EnvironmentSpec,
};
use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind};
use crate::linalg::{floor_eigenvalues, symmetrize};
use crate::lq_nash::solve_feedback_nash;
use crate::model::{
    GameDefinition, GameDimensions, IntentSpace, LinearGame, LinearStage, QuadraticCostStage,
};
use crate::simulation::IntentSwitch;
use crate::teaching::TeachingWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LunarLanderParams {
    pub dt: f64,
    pub horizon: usize,
    pub gravity: f64,
    /// `[p_x, v_x, p_y, v_y]`.
    pub initial_state: Vec<f64>,
    /// Pilot weight on `(p_x − θ)²` at every stage.
    pub pilot_target_weight: f64,
    /// Pilot weight on `v_x²` at every stage.
    pub pilot_velocity_weight: f64,
    pub pilot_effort: f64,
    /// Pilot weight on `(p_x − θ)²` at touchdown.
    pub pilot_terminal_weight: f64,
    /// Replace the touchdown costs by the cost-to-go of a game that runs
    /// `stationary_lead_in` further stages, which keeps the equilibrium gains
    /// nearly constant over the horizon.
    pub stationary_terminal: bool,
    pub stationary_lead_in: usize,
    pub autopilot_altitude_weight: f64,
    pub autopilot_descent_weight: f64,
    pub autopilot_drift_weight: f64,
    pub autopilot_effort: f64,
    pub autopilot_terminal_weight: f64,
    pub alpha: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub theta_star: f64,
    /// Autopilot's initial estimate of the landing site.
    pub initial_estimate: f64,
    /// Move the landing site to `switch_theta` at stage `switch_stage`.
    pub switch_enabled: bool,
    pub switch_stage: usize,
    pub switch_theta: f64,
    pub theta_grid: Vec<f64>,
}

impl Default for LunarLanderParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 50,
            gravity: 1.62,
            initial_state: vec![0.0, 0.0, 40.0, 0.0],
            pilot_target_weight: 1.0,
            pilot_velocity_weight: 1.0,
            pilot_effort: 1.0,
            pilot_terminal_weight: 10.0,
            stationary_terminal: true,
            stationary_lead_in: 400,
            autopilot_altitude_weight: 1.0,
            autopilot_descent_weight: 1.0,
            autopilot_drift_weight: 0.1,
            autopilot_effort: 0.1,
            autopilot_terminal_weight: 10.0,
            alpha: 0.5,
            rho1: 1.0,
            rho2: 4.0,
            theta_star: 25.0,
            initial_estimate: 0.0,
            switch_enabled: true,
            switch_stage: 20,
            switch_theta: 50.0,
            theta_grid: vec![10.0, 25.0, 40.0],
        }
    }
}

impl LunarLanderParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        check_len("initial_state", &self.initial_state, 4)?;
        non_negative("gravity", self.gravity)?;
        for (name, v) in [
            ("pilot_target_weight", self.pilot_target_weight),
            ("pilot_velocity_weight", self.pilot_velocity_weight),
            ("pilot_terminal_weight", self.pilot_terminal_weight),
            ("autopilot_altitude_weight", self.autopilot_altitude_weight),
            ("autopilot_descent_weight", self.autopilot_descent_weight),
            ("autopilot_drift_weight", self.autopilot_drift_weight),
            ("autopilot_terminal_weight", self.autopilot_terminal_weight),
        ] {
            non_negative(name, v)?;
        }
        positive("pilot_effort", self.pilot_effort)?;
        positive("autopilot_effort", self.autopilot_effort)?;
        if self.switch_enabled && self.switch_stage >= self.horizon {
            return Err(Error::StageOutOfRange {
                stage: self.switch_stage,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

pub fn make_lunar_lander(params: &LunarLanderParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let p = params;
    let n = 4;
    let (a1, b1) = double_integrator(p.dt);
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (2, 2)).copy_from(&a1);
    a.view_mut((2, 2), (2, 2)).copy_from(&a1);
    let mut b_pilot = DMatrix::zeros(n, 1);
    b_pilot.view_mut((0, 0), (2, 1)).copy_from(&b1);
    let mut b_auto = DMatrix::zeros(n, 2);
    b_auto.view_mut((0, 0), (2, 1)).copy_from(&b1);
    b_auto.view_mut((2, 1), (2, 1)).copy_from(&b1);
    let drift = DVector::from_vec(vec![
        0.0,
        0.0,
        -0.5 * p.gravity * p.dt * p.dt,
        -p.gravity * p.dt,
    ]);
    let stage = LinearStage::new(a, vec![b_pilot, b_auto]).with_drift(drift);

    // (p_x − θ)² = p_xᵀp_x − 2θ p_x + θ²; the θ² constant is dropped.
    let pilot = |target: f64, velocity: f64, effort: Option<f64>| {
        let mut q = DMatrix::zeros(n, n);
        q[(0, 0)] = target;
        q[(1, 1)] = velocity;
        let mut l_theta = DMatrix::zeros(n, 1);
        l_theta[(0, 0)] = -2.0 * target;
        let c = match effort {
            Some(r) => QuadraticCostStage::new(q, DMatrix::from_element(1, 1, r), 1),
            None => QuadraticCostStage::terminal(q, 1),
        };
        c.with_linear(DVector::zeros(n), l_theta)
    };
    let autopilot = |scale: f64, effort: Option<f64>| {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.0,
            scale * p.autopilot_drift_weight,
            scale * p.autopilot_altitude_weight,
            scale * p.autopilot_descent_weight,
        ]));
        match effort {
            Some(r) => QuadraticCostStage::new(q, DMatrix::identity(2, 2) * r, 1),
            None => QuadraticCostStage::terminal(q, 1),
        }
    };
    let running = vec![
        pilot(
            p.pilot_target_weight,
            p.pilot_velocity_weight,
            Some(p.pilot_effort),
        ),
        autopilot(1.0, Some(p.autopilot_effort)),
    ];
    let touchdown = vec![
        pilot(p.pilot_terminal_weight, p.pilot_velocity_weight, None),
        autopilot(p.autopilot_terminal_weight, None),
    ];
    let costs = [running, touchdown];

    let game = if p.stationary_terminal && p.stationary_lead_in > 0 {
        let lead_in = lander_game(&stage, &costs[0], &costs[1], p.stationary_lead_in)?;
        let values = solve_feedback_nash(&lead_in)?.values.swap_remove(0);
        let terminal: Vec<QuadraticCostStage> = values
            .players
            .into_iter()
            .map(|v| {
                QuadraticCostStage::terminal(floor_eigenvalues(&symmetrize(&v.z), 0.0), 1)
                    .with_linear(v.zeta0, v.zeta_theta)
            })
            .collect();
        lander_game(&stage, &costs[0], &terminal, p.horizon)?
    } else {
        lander_game(&stage, &costs[0], &costs[1], p.horizon)?
    };
    Ok(EnvironmentSpec {
        name: EnvironmentName::LunarLander,
        game: GameDefinition::Linear(game),
        x0: DVector::from_vec(p.initial_state.clone()),
        intent_meaning: "horizontal landing site on the x-axis",
        estimator: EstimatorKind::Mle { alpha: p.alpha },
        initial_beliefs: vec![Belief::Point(v1(p.initial_estimate))],
        weights: TeachingWeights::new(p.rho1, p.rho2, v1(p.theta_star))?,
        theta_grid: p.theta_grid.clone(),
        switch: p.switch_enabled.then(|| IntentSwitch {
            stage: p.switch_stage,
            theta: v1(p.switch_theta),
        }),
    })
}

fn lander_game(
    stage: &LinearStage,
    running: &[QuadraticCostStage],
    terminal: &[QuadraticCostStage],
    horizon: usize,
) -> Result<LinearGame> {
    let mut costs = vec![running.to_vec(); horizon];
    costs.push(terminal.to_vec());
    let dims = GameDimensions::new(4, vec![1, 2], 1, horizon)?;
    LinearGame::new(
        dims,
        vec![stage.clone(); horizon],
        costs,
        IntentSpace::unbounded(1),
    )
}
