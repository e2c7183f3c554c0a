//! Scalar two-player LQ game used for exact checks: player 0 tracks θ,
//! player 1 regulates the state to zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{non_negative, positive, v1, EnvironmentName, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::estimation::{Belief, EstimatorKind};
use crate::model::{
    GameDefinition, GameDimensions, IntentSpace, LinearGame, LinearStage, QuadraticCostStage,
};
use crate::teaching::TeachingWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarToyParams {
    pub horizon: usize,
    pub a: f64,
    pub b_certain: f64,
    pub b_uncertain: f64,
    /// Certain player's weight on `(x − θ)²`.
    pub q_certain: f64,
    pub r_certain: f64,
    /// Uncertain player's weight on `x²`.
    pub q_uncertain: f64,
    pub r_uncertain: f64,
    pub x0: f64,
    pub alpha: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub theta_star: f64,
    /// Defaults to the true intent, so any belief motion is induced by
    /// the certain player.
    pub initial_estimate: Option<f64>,
    pub theta_grid: Vec<f64>,
}

impl Default for ScalarToyParams {
    fn default() -> Self {
        Self {
            horizon: 4,
            a: 1.0,
            b_certain: 1.0,
            b_uncertain: 0.5,
            q_certain: 1.0,
            r_certain: 0.5,
            q_uncertain: 0.4,
            r_uncertain: 1.0,
            x0: 0.5,
            alpha: 0.5,
            rho1: 1.0,
            rho2: 0.0,
            theta_star: 1.0,
            initial_estimate: None,
            theta_grid: vec![-1.0, 0.0, 1.0],
        }
    }
}

impl ScalarToyParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        non_negative("q_certain", self.q_certain)?;
        non_negative("q_uncertain", self.q_uncertain)?;
        positive("r_certain", self.r_certain)?;
        positive("r_uncertain", self.r_uncertain)?;
        for (name, v) in [
            ("a", self.a),
            ("b_certain", self.b_certain),
            ("b_uncertain", self.b_uncertain),
            ("x0", self.x0),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

pub fn make_scalar_toy(params: &ScalarToyParams) -> Result<EnvironmentSpec> {
    params.validate()?;
    let p = params;
    let m1 = |v: f64| DMatrix::from_element(1, 1, v);
    let stage = LinearStage::new(m1(p.a), vec![m1(p.b_certain), m1(p.b_uncertain)]);
    let track = |q: f64, r: Option<f64>| {
        let c = match r {
            Some(r) => QuadraticCostStage::new(m1(q), m1(r), 1),
            None => QuadraticCostStage::terminal(m1(q), 1),
        };
        c.with_linear(v1(0.0), m1(-2.0 * q))
    };
    let regulate = |r: Option<f64>| match r {
        Some(r) => QuadraticCostStage::new(m1(p.q_uncertain), m1(r), 1),
        None => QuadraticCostStage::terminal(m1(p.q_uncertain), 1),
    };
    let mut costs = vec![
        vec![
            track(p.q_certain, Some(p.r_certain)),
            regulate(Some(p.r_uncertain))
        ];
        p.horizon
    ];
    costs.push(vec![track(p.q_certain, None), regulate(None)]);
    let dims = GameDimensions::new(1, vec![1, 1], 1, p.horizon)?;
    let game = LinearGame::new(
        dims,
        vec![stage; p.horizon],
        costs,
        IntentSpace::unbounded(1),
    )?;
    Ok(EnvironmentSpec {
        name: EnvironmentName::ScalarToy,
        game: GameDefinition::Linear(game),
        x0: DVector::from_element(1, p.x0),
        intent_meaning: "set point tracked by the certain player",
        estimator: EstimatorKind::Mle { alpha: p.alpha },
        initial_beliefs: vec![Belief::Point(v1(p
            .initial_estimate
            .unwrap_or(p.theta_star)))],
        weights: TeachingWeights::new(p.rho1, p.rho2, v1(p.theta_star))?,
        theta_grid: p.theta_grid.clone(),
        switch: None,
    })
}
