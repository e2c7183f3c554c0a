//! Closed-loop rollouts under the active, passive and complete-information
//! interaction models, plus the metrics computed from them.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Error, Result};
use crate::estimation::{update_belief, Belief, EstimatorKind};
use crate::linalg::{all_finite_v, max_abs};
use crate::lq_nash::FeedbackPolicyStage;
use crate::model::{running_cost, terminal_cost, GameDefinition, Trajectory};
use crate::teaching::{AugmentedState, TeachingPolicyStage, TeachingWeights};

#[derive(Debug, Clone, PartialEq)]
pub enum InteractionModel {
    /// The certain player follows a teaching policy.
    Active(TeachingWeights),
    /// The certain player plays its equilibrium policy at θ*; the others still learn.
    Passive,
    /// Everyone plays the equilibrium policy at θ*; nobody holds beliefs.
    CompleteInfo,
}

impl InteractionModel {
    pub fn label(&self) -> &'static str {
        match self {
            InteractionModel::Active(_) => "active",
            InteractionModel::Passive => "passive",
            InteractionModel::CompleteInfo => "complete_info",
        }
    }
}

/// The true intent changes to `theta` from stage `stage` on.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentSwitch {
    pub stage: usize,
    pub theta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct RolloutSetup {
    pub x0: DVector<f64>,
    /// Initial belief of each uncertain player; ignored for complete information.
    pub beliefs: Vec<Belief>,
    pub theta_star: DVector<f64>,
    pub switch: Option<IntentSwitch>,
    /// Standard deviation of additive Gaussian actuation noise on every control.
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub model: InteractionModel,
    pub theta_star: DVector<f64>,
    pub switch: Option<IntentSwitch>,
    pub seed: u64,
    pub noise_std: f64,
    /// `x_0..x_T`.
    pub states: Vec<DVector<f64>>,
    /// Per-player controls at stages `0..T-1`.
    pub controls: Vec<Vec<DVector<f64>>>,
    /// Beliefs of players `1..N` at every state; `None` for complete information.
    pub beliefs: Option<Vec<Vec<Belief>>>,
    /// `[t][player]`, `T + 1` rows; the last row holds terminal costs.
    pub stage_costs: Vec<Vec<f64>>,
    /// True intent in force at every state.
    pub intent_schedule: Vec<DVector<f64>>,
}

impl RolloutRecord {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn players(&self) -> usize {
        self.stage_costs.first().map_or(0, |r| r.len())
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.states.clone(),
            controls: self.controls.clone(),
        }
    }

    pub fn total_cost(&self, player: usize) -> f64 {
        self.stage_costs.iter().map(|r| r[player]).sum()
    }

    /// `‖θ̂_t − θ*_t‖₂` of uncertain `player` (game index ≥ 1) at every state.
    pub fn belief_errors(&self, player: usize) -> Result<Vec<f64>> {
        let beliefs = self.beliefs.as_ref().ok_or(Error::NoBeliefs)?;
        if player == 0 || player > beliefs[0].len() {
            return Err(Error::InvalidInput(format!(
                "player {player} holds no belief"
            )));
        }
        Ok(beliefs
            .iter()
            .zip(&self.intent_schedule)
            .map(|(b, th)| (b[player - 1].mean() - th).norm())
            .collect())
    }
}

fn intent_at(setup: &RolloutSetup, t: usize) -> &DVector<f64> {
    match &setup.switch {
        Some(s) if t >= s.stage => &s.theta,
        _ => &setup.theta_star,
    }
}

/// Steps the closed loop for the full horizon.
///
/// `teaching` is required for [`InteractionModel::Active`] and ignored
/// otherwise. A switch of the true intent changes only the certain player's
/// policy evaluation and the cost bookkeeping.
pub fn rollout(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    estimator: EstimatorKind,
    model: &InteractionModel,
    teaching: Option<&[TeachingPolicyStage]>,
    setup: &RolloutSetup,
) -> Result<RolloutRecord> {
    let dims = game.dims();
    let t_len = dims.horizon;
    if policies.len() != t_len {
        return Err(Error::Mismatch(format!(
            "policy horizon {} does not match game horizon {t_len}",
            policies.len()
        )));
    }
    if setup.x0.len() != dims.state_dim {
        return Err(dim_err("initial state", dims.state_dim, setup.x0.len()));
    }
    if !(setup.noise_std >= 0.0 && setup.noise_std.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise level must be non-negative, got {}",
            setup.noise_std
        )));
    }
    let learning = !matches!(model, InteractionModel::CompleteInfo);
    if learning {
        estimator.validate()?;
        if setup.beliefs.len() != dims.players() - 1 {
            return Err(dim_err(
                "initial beliefs",
                dims.players() - 1,
                setup.beliefs.len(),
            ));
        }
    }
    let teaching = match model {
        InteractionModel::Active(_) => {
            let t = teaching.ok_or_else(|| {
                Error::InvalidInput("active model needs a teaching policy".into())
            })?;
            if t.len() != t_len {
                return Err(dim_err("teaching policy horizon", t_len, t.len()));
            }
            Some(t)
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let noise = if setup.noise_std > 0.0 {
        Some(
            Normal::new(0.0, setup.noise_std)
                .map_err(|e| Error::InvalidInput(format!("noise level: {e}")))?,
        )
    } else {
        None
    };

    let mut x = setup.x0.clone();
    let mut beliefs = setup.beliefs.clone();
    let mut states = vec![x.clone()];
    let mut controls = Vec::with_capacity(t_len);
    let mut belief_log = learning.then(|| vec![beliefs.clone()]);
    let mut stage_costs = Vec::with_capacity(t_len + 1);
    let mut schedule = Vec::with_capacity(t_len + 1);

    for t in 0..t_len {
        let theta = intent_at(setup, t);
        schedule.push(theta.clone());
        let stage = &policies[t].players;
        let mut u = Vec::with_capacity(stage.len());
        u.push(match teaching {
            Some(tp) => {
                let z = AugmentedState::new(
                    x.clone(),
                    beliefs.iter().map(|b| b.mean().clone()).collect(),
                )
                .to_vector();
                tp[t].eval(&z, theta)
            }
            None => stage[0].eval(&x, theta),
        });
        for (j, pol) in stage.iter().enumerate().skip(1) {
            u.push(if learning {
                pol.eval(&x, beliefs[j - 1].mean())
            } else {
                pol.eval(&x, theta)
            });
        }
        if let Some(noise) = &noise {
            for ui in u.iter_mut() {
                ui.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
        }
        stage_costs.push(
            (0..u.len())
                .map(|i| running_cost(game, t, &x, &u, i, theta))
                .collect(),
        );

        let next = match game {
            GameDefinition::Linear(g) => g.stages[t].apply(&x, &u),
            GameDefinition::Nonlinear(g) => g.dynamics.step(t, &x, &u),
        };
        if !all_finite_v(&next) {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
        if learning {
            beliefs = beliefs
                .iter()
                .map(|b| update_belief(b, estimator, &x, &u[0], &stage[0]))
                .collect::<Result<_>>()?;
            if let Some(log) = belief_log.as_mut() {
                log.push(beliefs.clone());
            }
        }
        x = next;
        states.push(x.clone());
        controls.push(u);
    }
    let theta = intent_at(setup, t_len);
    schedule.push(theta.clone());
    stage_costs.push(
        (0..dims.players())
            .map(|i| terminal_cost(game, &x, i, theta))
            .collect(),
    );

    Ok(RolloutRecord {
        model: model.clone(),
        theta_star: setup.theta_star.clone(),
        switch: setup.switch.clone(),
        seed: setup.seed,
        noise_std: setup.noise_std,
        states,
        controls,
        beliefs: belief_log,
        stage_costs,
        intent_schedule: schedule,
    })
}

/// `Σ_t [c^i(executed) − c^i(reference)]`, terminal stage included.
pub fn regret(executed: &RolloutRecord, reference: &RolloutRecord, player: usize) -> Result<f64> {
    if executed.horizon() != reference.horizon() {
        return Err(Error::Mismatch(format!(
            "horizons differ: {} vs {}",
            executed.horizon(),
            reference.horizon()
        )));
    }
    if executed.players() != reference.players() {
        return Err(Error::Mismatch(
            "records come from games with different player counts".into(),
        ));
    }
    if executed.theta_star != reference.theta_star {
        return Err(Error::Mismatch(
            "records were produced for different true intents".into(),
        ));
    }
    if player >= executed.players() {
        return Err(Error::InvalidInput(format!("player {player} out of range")));
    }
    Ok(executed
        .stage_costs
        .iter()
        .zip(&reference.stage_costs)
        .map(|(a, b)| a[player] - b[player])
        .sum())
}

/// First stage whose belief error drops below `eps`, or `None` if it never does.
pub fn time_to_convergence(
    record: &RolloutRecord,
    player: usize,
    eps: f64,
) -> Result<Option<usize>> {
    Ok(first_below(&record.belief_errors(player)?, eps))
}

pub fn first_below(errors: &[f64], eps: f64) -> Option<usize> {
    errors.iter().position(|&e| e < eps)
}

/// Largest deviation of a recorded transition from the dynamics.
pub fn dynamics_residual(game: &GameDefinition, record: &RolloutRecord) -> Result<f64> {
    if record.states.len() != game.dims().horizon + 1 {
        return Err(dim_err(
            "record length",
            game.dims().horizon + 1,
            record.states.len(),
        ));
    }
    let mut worst: f64 = 0.0;
    for t in 0..record.horizon() {
        let (x, u) = (&record.states[t], &record.controls[t]);
        let next = match game {
            GameDefinition::Linear(g) => g.stages[t].apply(x, u),
            GameDefinition::Nonlinear(g) => g.dynamics.step(t, x, u),
        };
        worst = worst.max(max_abs(&(next - &record.states[t + 1])));
    }
    Ok(worst)
}

/// Largest deviation of the recorded beliefs from re-applying the estimator.
pub fn belief_replay_residual(
    record: &RolloutRecord,
    policies: &[FeedbackPolicyStage],
    estimator: EstimatorKind,
) -> Result<f64> {
    let beliefs = record.beliefs.as_ref().ok_or(Error::NoBeliefs)?;
    let mut worst: f64 = 0.0;
    for t in 0..record.horizon() {
        for (j, b) in beliefs[t].iter().enumerate() {
            let next = update_belief(
                b,
                estimator,
                &record.states[t],
                &record.controls[t][0],
                &policies[t].players[0],
            )?;
            let recorded = &beliefs[t + 1][j];
            worst = worst.max(max_abs(&(next.mean() - recorded.mean())));
            if let (Some(a), Some(b)) = (next.covariance(), recorded.covariance()) {
                worst = worst.max((a - b).amax());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub samples: usize,
    pub mean: Duration,
    pub p95: Duration,
    pub max: Duration,
}

impl TimingSummary {
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort();
        let total: Duration = sorted.iter().sum();
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Some(Self {
            samples: sorted.len(),
            mean: total / sorted.len() as u32,
            p95: sorted[rank - 1],
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Wall-clock time of each teaching-policy evaluation along an active record,
/// `repeats` passes over the horizon.
pub fn time_teaching_actions(
    record: &RolloutRecord,
    teaching: &[TeachingPolicyStage],
    repeats: usize,
) -> Result<Vec<Duration>> {
    let beliefs = record.beliefs.as_ref().ok_or(Error::NoBeliefs)?;
    if teaching.len() != record.horizon() {
        return Err(dim_err(
            "teaching policy horizon",
            record.horizon(),
            teaching.len(),
        ));
    }
    let mut out = Vec::with_capacity(repeats * teaching.len());
    for _ in 0..repeats {
        for (t, pol) in teaching.iter().enumerate() {
            let start = Instant::now();
            let z = AugmentedState::new(
                record.states[t].clone(),
                beliefs[t].iter().map(|b| b.mean().clone()).collect(),
            )
            .to_vector();
            let u = pol.eval(&z, &record.intent_schedule[t]);
            out.push(start.elapsed());
            std::hint::black_box(u);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilq::{solve_ilq, IlqOptions};
    use crate::lq_nash::{rollout_linear, solve_feedback_nash};
    use crate::model::{GameDimensions, IntentSpace, LinearGame, LinearStage, QuadraticCostStage};
    use crate::teaching::{build_augmented_lq, solve_affine_lqr, solve_ilqr_augmented};
    use nalgebra::DMatrix;

    fn v1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn game() -> LinearGame {
        let horizon = 12;
        let dims = GameDimensions::new(2, vec![1, 1], 1, horizon).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        let stage = LinearStage::new(
            a,
            vec![
                DMatrix::from_column_slice(2, 1, &[0.02, 0.2]),
                DMatrix::from_column_slice(2, 1, &[0.0, 0.1]),
            ],
        );
        let q1 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1]));
        let l1 = DMatrix::from_column_slice(2, 1, &[-2.0, 0.0]);
        let q2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        let running = vec![
            QuadraticCostStage::new(q1.clone(), DMatrix::from_element(1, 1, 0.3), 1)
                .with_linear(DVector::zeros(2), l1.clone()),
            QuadraticCostStage::new(q2.clone(), DMatrix::identity(1, 1), 1),
        ];
        let mut costs = vec![running; horizon];
        costs.push(vec![
            QuadraticCostStage::terminal(q1, 1).with_linear(DVector::zeros(2), l1),
            QuadraticCostStage::terminal(q2, 1),
        ]);
        LinearGame::new(dims, vec![stage; horizon], costs, IntentSpace::unbounded(1)).unwrap()
    }

    fn setup(theta: f64, belief: f64) -> RolloutSetup {
        RolloutSetup {
            x0: DVector::from_vec(vec![0.0, 0.3]),
            beliefs: vec![Belief::Point(v1(belief))],
            theta_star: v1(theta),
            switch: None,
            noise_std: 0.0,
            seed: 1,
        }
    }

    const MLE: EstimatorKind = EstimatorKind::Mle { alpha: 0.5 };

    #[test]
    fn complete_information_is_the_equilibrium_rollout() {
        let g = game();
        let nash = solve_feedback_nash(&g).unwrap();
        let s = setup(1.0, 0.0);
        let rec = rollout(
            &GameDefinition::Linear(g.clone()),
            &nash.policies,
            MLE,
            &InteractionModel::CompleteInfo,
            None,
            &s,
        )
        .unwrap();
        assert!(rec.beliefs.is_none());
        let fne = rollout_linear(&g, &nash.policies, &s.x0, &s.theta_star).unwrap();
        assert_eq!(rec.trajectory(), fne);
        assert!(matches!(
            time_to_convergence(&rec, 1, 0.1),
            Err(Error::NoBeliefs)
        ));
        for i in 0..2 {
            assert_eq!(regret(&rec, &rec, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn inert_teaching_reproduces_complete_information() {
        let g = game();
        let nash = solve_feedback_nash(&g).unwrap();
        let w = TeachingWeights::new(1.0, 0.0, v1(1.0)).unwrap();
        let prob = build_augmented_lq(&g, &nash.policies, 0.0, &w).unwrap();
        let teach = solve_affine_lqr(&prob).unwrap().policies;
        let s = setup(1.0, 1.0);
        let def = GameDefinition::Linear(g);
        let active = rollout(
            &def,
            &nash.policies,
            EstimatorKind::Mle { alpha: 0.0 },
            &InteractionModel::Active(w),
            Some(&teach),
            &s,
        )
        .unwrap();
        let full = rollout(
            &def,
            &nash.policies,
            MLE,
            &InteractionModel::CompleteInfo,
            None,
            &s,
        )
        .unwrap();
        for (a, b) in active.states.iter().zip(&full.states) {
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn records_are_replayable_and_deterministic() {
        let g = game();
        let nash = solve_feedback_nash(&g).unwrap();
        let def = GameDefinition::Linear(g);
        let mut s = setup(1.0, -1.0);
        s.noise_std = 0.05;
        s.seed = 42;
        let a = rollout(
            &def,
            &nash.policies,
            MLE,
            &InteractionModel::Passive,
            None,
            &s,
        )
        .unwrap();
        let b = rollout(
            &def,
            &nash.policies,
            MLE,
            &InteractionModel::Passive,
            None,
            &s,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(dynamics_residual(&def, &a).unwrap() <= 1e-9);
        assert!(belief_replay_residual(&a, &nash.policies, MLE).unwrap() <= 1e-12);
        s.seed = 43;
        let c = rollout(
            &def,
            &nash.policies,
            MLE,
            &InteractionModel::Passive,
            None,
            &s,
        )
        .unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn regret_and_convergence_scans() {
        let rec = |costs: Vec<f64>| RolloutRecord {
            model: InteractionModel::Passive,
            theta_star: v1(1.0),
            switch: None,
            seed: 0,
            noise_std: 0.0,
            states: vec![v1(0.0), v1(0.0)],
            controls: vec![vec![v1(0.0)]],
            beliefs: Some(vec![
                vec![Belief::Point(v1(0.0))],
                vec![Belief::Point(v1(0.6))],
                vec![Belief::Point(v1(0.9))],
            ]),
            stage_costs: costs.into_iter().map(|c| vec![c]).collect(),
            intent_schedule: vec![v1(1.0); 3],
        };
        assert_eq!(
            regret(&rec(vec![2.0, 3.0]), &rec(vec![1.0, 1.0]), 0).unwrap(),
            3.0
        );
        assert_eq!(first_below(&[1.0, 0.4, 0.1], 0.2), Some(2));
        assert_eq!(first_below(&[1.0, 0.4, 0.1], 5.0), Some(0));
        assert_eq!(first_below(&[1.0, 0.4], 0.1), None);
        let r = rec(vec![0.0, 0.0]);
        assert_eq!(time_to_convergence(&r, 1, 0.5).unwrap(), Some(1));
        let mut other = rec(vec![0.0, 0.0]);
        other.stage_costs.pop();
        other.controls.push(vec![v1(0.0)]);
        assert!(regret(&r, &other, 0).is_err());
    }

    #[test]
    fn switch_only_moves_the_certain_player() {
        let g = game();
        let nash = solve_feedback_nash(&g).unwrap();
        let def = GameDefinition::Linear(g);
        let mut s = setup(1.0, 1.0);
        s.switch = Some(IntentSwitch {
            stage: 4,
            theta: v1(2.0),
        });
        let rec = rollout(
            &def,
            &nash.policies,
            MLE,
            &InteractionModel::Passive,
            None,
            &s,
        )
        .unwrap();
        let errs = rec.belief_errors(1).unwrap();
        assert!(errs[..4].iter().all(|&e| e < 1e-12));
        assert_eq!(errs[4], 1.0);
        assert!(errs[5] < 1.0);
        assert_eq!(rec.intent_schedule[3], v1(1.0));
        assert_eq!(rec.intent_schedule[4], v1(2.0));
    }

    #[test]
    fn active_rollout_follows_iterative_plan() {
        let g = game();
        let def = GameDefinition::Linear(g.clone());
        let theta = v1(1.0);
        let x0 = DVector::from_vec(vec![0.0, 0.3]);
        let sol = solve_ilq(&g.as_nonlinear(), &theta, &x0, None, &IlqOptions::default()).unwrap();
        let w = TeachingWeights::new(1.0, 0.0, theta.clone()).unwrap();
        let prior = [Belief::Point(v1(-1.0))];
        let plan = solve_ilqr_augmented(
            &def,
            &sol.policies,
            MLE,
            &prior,
            &w,
            &x0,
            &IlqOptions::default(),
        )
        .unwrap();
        let s = setup(1.0, -1.0);
        let rec = rollout(
            &def,
            &sol.policies,
            MLE,
            &InteractionModel::Active(w),
            Some(&plan.policies),
            &s,
        )
        .unwrap();
        let passive = rollout(
            &def,
            &sol.policies,
            MLE,
            &InteractionModel::Passive,
            None,
            &s,
        )
        .unwrap();
        for (x, z) in rec.states.iter().zip(&plan.nominal.states) {
            assert!((x - z.rows(0, 2)).amax() < 1e-9);
        }
        assert!(rec.total_cost(0) <= passive.total_cost(0));
    }

    #[test]
    fn timing_summary_percentile() {
        let samples: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        let s = TimingSummary::from_samples(&samples).unwrap();
        assert_eq!(s.p95, Duration::from_millis(95));
        assert_eq!(s.max, Duration::from_millis(100));
        assert!(TimingSummary::from_samples(&[]).is_none());
    }
}
