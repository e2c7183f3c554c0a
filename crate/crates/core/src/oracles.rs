//! Independent reference computations used to validate the solvers:
//! random LQ games, unilateral-deviation probes and grid Bayes posteriors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lq_nash::{policy_response, FeedbackPolicyStage, PlayerPolicy};
use crate::model::{
    evaluate_trajectory_cost, GameDefinition, GameDimensions, IntentSpace, LinearGame, LinearStage,
    QuadraticCostStage, Trajectory,
};

fn gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    scale: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random LQ game whose every player is strictly convex in its own control.
///
/// Each running cost comes from a random Gram matrix over `(x, u)` plus a
/// control floor, so `[Q Sᵀ; S R]` is positive semidefinite and `R ≻ 0`.
/// The dynamics matrix is scaled to spectral norm at most `1.05`.
pub fn random_lq_game<R: Rng + ?Sized>(
    rng: &mut R,
    state_dim: usize,
    control_dims: Vec<usize>,
    intent_dim: usize,
    horizon: usize,
) -> Result<LinearGame> {
    let dims = GameDimensions::new(state_dim, control_dims.clone(), intent_dim, horizon)?;
    let n = state_dim;
    let p = intent_dim;
    let mut a = gaussian_matrix(rng, n, n, 1.0);
    let norm = a.clone().svd(false, false).singular_values.max();
    if norm > 0.0 {
        a *= 1.05 / norm;
    }
    let b: Vec<DMatrix<f64>> = control_dims
        .iter()
        .map(|&m| gaussian_matrix(rng, n, m, 0.5))
        .collect();
    let stage = LinearStage::new(a, b).with_drift(gaussian_vector(rng, n, 0.1));

    let mut running = Vec::with_capacity(control_dims.len());
    let mut terminal = Vec::with_capacity(control_dims.len());
    for &m in &control_dims {
        let w = gaussian_matrix(rng, n + m, n + m, 1.0 / ((n + m) as f64).sqrt());
        let mut h = w.transpose() * w;
        for k in n..n + m {
            h[(k, k)] += 0.5;
        }
        let q = h.view((0, 0), (n, n)).into_owned();
        let r = h.view((n, n), (m, m)).into_owned();
        let s = h.view((n, 0), (m, n)).into_owned();
        running.push(
            QuadraticCostStage::new(q.clone(), r, p)
                .with_cross(s)
                .with_linear(
                    gaussian_vector(rng, n, 0.2),
                    gaussian_matrix(rng, n, p, 0.5),
                )
                .with_control_linear(gaussian_vector(rng, m, 0.2))
                .with_control_intent(gaussian_matrix(rng, m, p, 0.2)),
        );
        terminal.push(QuadraticCostStage::terminal(q, p).with_linear(
            gaussian_vector(rng, n, 0.2),
            gaussian_matrix(rng, n, p, 0.5),
        ));
    }
    let mut costs = vec![running; horizon];
    costs.push(terminal);
    LinearGame::new(dims, vec![stage; horizon], costs, IntentSpace::unbounded(p))
}

/// Closed loop of `policies` in which `player` adds `offsets[t]` to its
/// policy output at every stage.
pub fn deviated_rollout(
    game: &LinearGame,
    policies: &[FeedbackPolicyStage],
    x0: &DVector<f64>,
    theta: &DVector<f64>,
    player: usize,
    offsets: &[DVector<f64>],
) -> Result<Trajectory> {
    let t_len = game.dims.horizon;
    if offsets.len() != t_len {
        return Err(Error::InvalidInput(format!(
            "expected {t_len} control offsets, got {}",
            offsets.len()
        )));
    }
    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(t_len);
    for (t, delta) in offsets.iter().enumerate() {
        let mut u = policy_response(policies, t, &states[t], theta)?;
        u[player] += delta;
        states.push(game.stages[t].apply(&states[t], &u));
        controls.push(u);
    }
    Ok(Trajectory { states, controls })
}

/// `J_i(equilibrium) − J_i(deviation)`: positive when the unilateral
/// deviation by `player` lowers its own cost.
pub fn deviation_improvement(
    game: &LinearGame,
    policies: &[FeedbackPolicyStage],
    x0: &DVector<f64>,
    theta: &DVector<f64>,
    player: usize,
    offsets: &[DVector<f64>],
) -> Result<f64> {
    let def = GameDefinition::Linear(game.clone());
    let zero: Vec<DVector<f64>> = offsets.iter().map(|d| DVector::zeros(d.len())).collect();
    let base = deviated_rollout(game, policies, x0, theta, player, &zero)?;
    let moved = deviated_rollout(game, policies, x0, theta, player, offsets)?;
    Ok(evaluate_trajectory_cost(&def, &base, player, theta)?
        - evaluate_trajectory_cost(&def, &moved, player, theta)?)
}

/// Random offset sequence for `control_dim`-dimensional controls over
/// `horizon` stages with joint Euclidean norm `norm`.
pub fn random_offsets<R: Rng + ?Sized>(
    rng: &mut R,
    control_dim: usize,
    horizon: usize,
    norm: f64,
) -> Vec<DVector<f64>> {
    let mut seq: Vec<DVector<f64>> = (0..horizon)
        .map(|_| gaussian_vector(rng, control_dim, 1.0))
        .collect();
    let total = seq.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
    if total > 0.0 {
        for d in &mut seq {
            *d *= norm / total;
        }
    }
    seq
}

/// Posterior mean and variance of a scalar intent under a Gaussian prior and
/// the likelihood `N(u¹; π¹(x; θ), σ² I)`, by quadrature on `points` nodes
/// spanning `±width` prior standard deviations.
#[allow(clippy::too_many_arguments)]
pub fn grid_posterior(
    prior_mean: f64,
    prior_variance: f64,
    x: &DVector<f64>,
    u1: &DVector<f64>,
    policy: &PlayerPolicy,
    observation_noise: f64,
    points: usize,
    width: f64,
) -> Result<(f64, f64)> {
    if policy.intent_gain.ncols() != 1 {
        return Err(Error::InvalidInput(
            "grid posterior needs a scalar intent".into(),
        ));
    }
    if !(prior_variance > 0.0) || !(observation_noise > 0.0) || points < 2 {
        return Err(Error::InvalidInput(
            "grid posterior needs positive variances and at least two nodes".into(),
        ));
    }
    let sd = prior_variance.sqrt();
    let (lo, hi) = (prior_mean - width * sd, prior_mean + width * sd);
    let step = (hi - lo) / (points - 1) as f64;
    let log_w: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let th = lo + step * k as f64;
            let resid = u1 - policy.eval(x, &DVector::from_element(1, th));
            let lp = -(th - prior_mean).powi(2) / (2.0 * prior_variance)
                - resid.norm_squared() / (2.0 * observation_noise);
            (th, lp)
        })
        .collect();
    let peak = log_w.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &(th, lp) in &log_w {
        let w = (lp - peak).exp();
        z += w;
        m1 += w * th;
        m2 += w * th * th;
    }
    let mean = m1 / z;
    Ok((mean, m2 / z - mean * mean))
}
