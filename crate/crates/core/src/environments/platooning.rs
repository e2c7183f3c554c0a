//! A human-driven lead vehicle guides two autonomous vehicles toward a target
//! lane that only the human knows. Each autonomous vehicle keeps its own
//! Gaussian belief over the lane.
//!
//! Every vehicle is a unicycle with state `[p_x, p_y, ψ, v]` and controls
//! `[a, w]` (acceleration, turning rate).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::terms::{Penalty, SoftCollision, TermCost};
use super::{check_len, non_negative, positive, v1, EnvironmentName, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind, GaussianBelief};
use crate::model::{
    Dynamics, GameDefinition, GameDimensions, IntentSpace, NonlinearGame, PlayerCost,
};
use crate::teaching::TeachingWeights;

const VEHICLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatooningParams {
    pub dt: f64,
    pub horizon: usize,
    /// `[p_x, p_y, ψ, v]` of the lead, then of each autonomous vehicle.
    pub initial_states: Vec<Vec<f64>>,
    pub target_speed: f64,
    pub lane_weight: f64,
    /// Lead's weight on each autonomous vehicle's distance to the target lane.
    pub guide_weight: f64,
    pub heading_weight: f64,
    pub speed_weight: f64,
    pub acceleration_effort: f64,
    pub turn_effort: f64,
    pub collision_weight: f64,
    pub collision_radius: f64,
    pub terminal_scale: f64,
    /// Lateral extent of the lanes; the default sweep covers it evenly.
    pub lane_span: Vec<f64>,
    pub sweep_points: usize,
    pub observation_noise: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub theta_star: f64,
}

impl Default for PlatooningParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 30,
            initial_states: vec![
                vec![2.0, 0.0, 0.0, 2.0],
                vec![0.0, 0.5, 0.0, 2.0],
                vec![0.0, -0.5, 0.0, 2.0],
            ],
            target_speed: 2.0,
            lane_weight: 1.0,
            guide_weight: 0.5,
            heading_weight: 1.0,
            speed_weight: 0.5,
            acceleration_effort: 0.5,
            turn_effort: 0.5,
            collision_weight: 10.0,
            collision_radius: 0.5,
            terminal_scale: 5.0,
            lane_span: vec![-1.0, 1.0],
            sweep_points: 5,
            observation_noise: 1.0,
            prior_mean: 0.0,
            prior_variance: 0.5,
            rho1: 1.0,
            rho2: 0.0,
            theta_star: 1.0,
        }
    }
}

impl PlatooningParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        if self.initial_states.len() != VEHICLES {
            return Err(Error::InvalidInput(format!(
                "initial_states must hold {VEHICLES} vehicles, got {}",
                self.initial_states.len()
            )));
        }
        for s in &self.initial_states {
            check_len("initial_states entry", s, 4)?;
        }
        check_len("lane_span", &self.lane_span, 2)?;
        if !(self.lane_span[0] <= self.lane_span[1]) {
            return Err(Error::InvalidInput("lane_span must be ordered".into()));
        }
        if self.sweep_points == 0 {
            return Err(Error::InvalidInput("sweep_points must be positive".into()));
        }
        for (name, v) in [
            ("lane_weight", self.lane_weight),
            ("guide_weight", self.guide_weight),
            ("heading_weight", self.heading_weight),
            ("speed_weight", self.speed_weight),
            ("collision_weight", self.collision_weight),
            ("collision_radius", self.collision_radius),
            ("terminal_scale", self.terminal_scale),
        ] {
            non_negative(name, v)?;
        }
        positive("acceleration_effort", self.acceleration_effort)?;
        positive("turn_effort", self.turn_effort)?;
        positive("observation_noise", self.observation_noise)?;
        positive("prior_variance", self.prior_variance)?;
        Ok(())
    }

    /// `sweep_points` evenly spaced lanes across `lane_span`.
    pub fn theta_grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.lane_span[0], self.lane_span[1]);
        if self.sweep_points == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (self.sweep_points - 1) as f64;
        (0..self.sweep_points)
            .map(|k| lo + step * k as f64)
            .collect()
    }
}

/// Independent unicycles:
/// `p' = p + dt v [cos ψ, sin ψ]`, `ψ' = ψ + dt w`, `v' = v + dt a`.
#[derive(Debug, Clone)]
pub(crate) struct Unicycles {
    pub dt: f64,
}

impl Dynamics for Unicycles {
    fn step(&self, _t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let mut next = x.clone();
        for (i, ui) in u.iter().enumerate() {
            let o = 4 * i;
            let (s, c) = x[o + 2].sin_cos();
            let v = x[o + 3];
            next[o] += self.dt * v * c;
            next[o + 1] += self.dt * v * s;
            next[o + 2] += self.dt * ui[1];
            next[o + 3] += self.dt * ui[0];
        }
        next
    }

    fn jacobians(
        &self,
        _t: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = x.len();
        let mut a = DMatrix::identity(n, n);
        let mut bs = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let o = 4 * i;
            let (s, c) = x[o + 2].sin_cos();
            let v = x[o + 3];
            a[(o, o + 2)] = -self.dt * v * s;
            a[(o, o + 3)] = self.dt * c;
            a[(o + 1, o + 2)] = self.dt * v * c;
            a[(o + 1, o + 3)] = self.dt * s;
            let mut b = DMatrix::zeros(n, 2);
            b[(o + 3, 0)] = self.dt;
            b[(o + 2, 1)] = self.dt;
            bs.push(b);
        }
        Some((a, bs))
    }
}

pub fn make_platooning(params: &PlatooningParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let p = params;
    let collision = SoftCollision {
        radius: p.collision_radius,
        weight: p.collision_weight,
        smoothing: 0.05,
        kappa: 0.1 * p.collision_radius.max(0.1),
    };
    // Every vehicle heads for the target lane θ, points forward and holds the
    // target speed; the lead also wants the followers in that lane.
    let terms = |i: usize, scale: f64| {
        let o = 4 * i;
        let mut t = vec![
            Penalty::track(o + 1, scale * p.lane_weight, 0.0, 1.0),
            Penalty::track(o + 2, scale * p.heading_weight, 0.0, 0.0),
            Penalty::track(o + 3, scale * p.speed_weight, p.target_speed, 0.0),
        ];
        if i == 0 {
            t.extend(
                (1..VEHICLES).map(|j| Penalty::track(4 * j + 1, scale * p.guide_weight, 0.0, 1.0)),
            );
        }
        t
    };
    let costs: Vec<Arc<dyn PlayerCost>> = (0..VEHICLES)
        .map(|i| {
            let pairs = (0..VEHICLES)
                .filter(|&j| j != i)
                .map(|j| (4 * i, 4 * j))
                .collect();
            Arc::new(TermCost {
                player: i,
                running: terms(i, 1.0),
                terminal: terms(i, p.terminal_scale),
                effort: vec![p.acceleration_effort, p.turn_effort],
                pairs,
                collision: Some(collision),
                spacing: vec![],
            }) as Arc<dyn PlayerCost>
        })
        .collect();
    let dims = GameDimensions::new(4 * VEHICLES, vec![2; VEHICLES], 1, p.horizon)?;
    let game = NonlinearGame::new(
        dims,
        Arc::new(Unicycles { dt: p.dt }),
        costs,
        IntentSpace::unbounded(1),
    )?;
    let x0 = DVector::from_iterator(4 * VEHICLES, p.initial_states.iter().flatten().copied());
    let prior = Belief::Gaussian(GaussianBelief::scalar(p.prior_mean, p.prior_variance)?);
    Ok(EnvironmentSpec {
        name: EnvironmentName::Platooning,
        game: GameDefinition::Nonlinear(game),
        x0,
        intent_meaning: "lateral coordinate of the target lane",
        estimator: EstimatorKind::Gaussian {
            observation_noise: p.observation_noise,
        },
        initial_beliefs: vec![prior; VEHICLES - 1],
        weights: TeachingWeights::new(p.rho1, p.rho2, v1(p.theta_star))?,
        theta_grid: p.theta_grid(),
        switch: None,
    })
}
