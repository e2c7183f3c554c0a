//! Feedback Nash equilibria of finite-horizon LQ games via coupled Riccati
//! recursions, with policies affine in the intent parameter.
//!
//! Sign convention: every player plays `u_i = -K_x x - K_θ θ - k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{all_finite_m, all_finite_v, condition_number, symmetrize};
use crate::model::{GameDimensions, LinearGame, LinearStage, QuadraticCostStage};

/// Stacked gain systems above this condition number are treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e12;

/// `u = -state_gain · x - intent_gain · θ - offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerPolicy {
    pub state_gain: DMatrix<f64>,
    pub intent_gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl PlayerPolicy {
    pub fn zeros(control_dim: usize, state_dim: usize, intent_dim: usize) -> Self {
        Self {
            state_gain: DMatrix::zeros(control_dim, state_dim),
            intent_gain: DMatrix::zeros(control_dim, intent_dim),
            offset: DVector::zeros(control_dim),
        }
    }

    pub fn eval(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.state_gain * x) - &self.intent_gain * theta - &self.offset
    }

    pub fn is_finite(&self) -> bool {
        all_finite_m(&self.state_gain)
            && all_finite_m(&self.intent_gain)
            && all_finite_v(&self.offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicyStage {
    pub players: Vec<PlayerPolicy>,
}

/// Quadratic value of one player,
/// `xᵀZx + (ζ₀ + Z_θ θ)ᵀx + c₀ + c_θᵀθ + θᵀC_θθ θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerValue {
    pub z: DMatrix<f64>,
    pub zeta0: DVector<f64>,
    pub zeta_theta: DMatrix<f64>,
    pub c0: f64,
    pub c_theta: DVector<f64>,
    pub c_theta_theta: DMatrix<f64>,
}

impl PlayerValue {
    pub fn eval(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        x.dot(&(&self.z * x))
            + (&self.zeta0 + &self.zeta_theta * theta).dot(x)
            + self.c0
            + self.c_theta.dot(theta)
            + theta.dot(&(&self.c_theta_theta * theta))
    }

    fn terminal(cost: &QuadraticCostStage) -> Self {
        let p = cost.l_theta.ncols();
        Self {
            z: cost.q.clone(),
            zeta0: cost.ell0.clone(),
            zeta_theta: cost.l_theta.clone(),
            c0: 0.0,
            c_theta: DVector::zeros(p),
            c_theta_theta: DMatrix::zeros(p, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueStage {
    pub players: Vec<PlayerValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    /// One stage per control step, `T` entries.
    pub policies: Vec<FeedbackPolicyStage>,
    /// One stage per state, `T + 1` entries.
    pub values: Vec<ValueStage>,
}

/// Solves an N-player LQ game for its feedback Nash equilibrium.
pub fn solve_feedback_nash(game: &LinearGame) -> Result<NashSolution> {
    game.validate()?;
    backward_recursion(&game.dims, &game.stages, &game.costs, Degeneracy::Nash)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Degeneracy {
    Nash,
    ControlHessian,
}

/// Coupled backward recursion shared by the game solver (N ≥ 2) and the
/// single-player teaching problem (N = 1).
pub(crate) fn backward_recursion(
    dims: &GameDimensions,
    stages: &[LinearStage],
    costs: &[Vec<QuadraticCostStage>],
    degeneracy: Degeneracy,
) -> Result<NashSolution> {
    let n = dims.state_dim;
    let p = dims.intent_dim;
    let players = dims.players();
    let t_len = dims.horizon;
    let total = dims.total_controls();
    let offsets: Vec<usize> = (0..players).map(|i| dims.control_offset(i)).collect();

    let mut next: Vec<PlayerValue> = costs[t_len].iter().map(PlayerValue::terminal).collect();
    let mut values_rev = vec![ValueStage {
        players: next.clone(),
    }];
    let mut policies_rev = Vec::with_capacity(t_len);

    for t in (0..t_len).rev() {
        let stage = &stages[t];
        let stage_costs = &costs[t];

        let mut s = DMatrix::zeros(total, total);
        let mut rhs = DMatrix::zeros(total, n + 1 + p);
        for i in 0..players {
            let bi = &stage.b[i];
            let zi = &next[i].z;
            let bt_z = bi.transpose() * zi;
            let oi = offsets[i];
            let mi = dims.control_dims[i];
            for j in 0..players {
                let block = &bt_z * &stage.b[j];
                s.view_mut((oi, offsets[j]), (mi, dims.control_dims[j]))
                    .copy_from(&block);
            }
            let mut diag = s.view_mut((oi, oi), (mi, mi));
            diag += &stage_costs[i].r;

            rhs.view_mut((oi, 0), (mi, n))
                .copy_from(&(&bt_z * &stage.a + &stage_costs[i].cross));
            let aff = &bt_z * &stage.d
                + bi.transpose() * &next[i].zeta0 * 0.5
                + &stage_costs[i].control_linear * 0.5;
            rhs.view_mut((oi, n), (mi, 1)).copy_from(&aff);
            rhs.view_mut((oi, n + 1), (mi, p)).copy_from(
                &(bi.transpose() * &next[i].zeta_theta * 0.5
                    + &stage_costs[i].control_intent * 0.5),
            );
        }

        let condition = condition_number(&s);
        if !(condition <= DEGENERACY_THRESHOLD) {
            return Err(match degeneracy {
                Degeneracy::Nash => Error::DegenerateNash {
                    stage: t,
                    condition,
                },
                Degeneracy::ControlHessian => Error::SingularControlHessian {
                    stage: t,
                    condition,
                },
            });
        }
        let sol = s.lu().solve(&rhs).ok_or(match degeneracy {
            Degeneracy::Nash => Error::DegenerateNash {
                stage: t,
                condition: f64::INFINITY,
            },
            Degeneracy::ControlHessian => Error::SingularControlHessian {
                stage: t,
                condition: f64::INFINITY,
            },
        })?;

        let gains: Vec<PlayerPolicy> = (0..players)
            .map(|i| {
                let oi = offsets[i];
                let mi = dims.control_dims[i];
                PlayerPolicy {
                    state_gain: sol.view((oi, 0), (mi, n)).into_owned(),
                    offset: sol.view((oi, n), (mi, 1)).column(0).into_owned(),
                    intent_gain: sol.view((oi, n + 1), (mi, p)).into_owned(),
                }
            })
            .collect();
        if let Some(i) = gains.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("feedback gains of player {i}"),
                location: format!("stage {t}"),
            });
        }

        // Closed loop x' = F x + β₀ + B_θ θ.
        let mut f = stage.a.clone();
        let mut beta0 = stage.d.clone();
        let mut b_theta = DMatrix::zeros(n, p);
        for (bj, g) in stage.b.iter().zip(&gains) {
            f -= bj * &g.state_gain;
            beta0 -= bj * &g.offset;
            b_theta -= bj * &g.intent_gain;
        }

        let current: Vec<PlayerValue> = (0..players)
            .map(|i| {
                let c = &stage_costs[i];
                let g = &gains[i];
                let nv = &next[i];
                let pk = &g.state_gain;
                let r = &c.r;
                let rk = r * &g.offset;
                let rkt = r * &g.intent_gain;
                let ft_z = f.transpose() * &nv.z;
                let s = &c.cross;
                let pts = pk.transpose() * s;
                let z = symmetrize(
                    &(&c.q + pk.transpose() * r * pk - &pts - pts.transpose() + &ft_z * &f),
                );
                let zeta0 = &c.ell0 + 2.0 * pk.transpose() * &rk
                    - pk.transpose() * &c.control_linear
                    - 2.0 * s.transpose() * &g.offset
                    + 2.0 * &ft_z * &beta0
                    + f.transpose() * &nv.zeta0;
                let m_int = &c.control_intent;
                let zeta_theta = &c.l_theta + 2.0 * pk.transpose() * &rkt
                    - 2.0 * s.transpose() * &g.intent_gain
                    - pk.transpose() * m_int
                    + 2.0 * &ft_z * &b_theta
                    + f.transpose() * &nv.zeta_theta;
                let zb0 = &nv.z * &beta0;
                let c0 = g.offset.dot(&rk) - c.control_linear.dot(&g.offset)
                    + beta0.dot(&zb0)
                    + nv.zeta0.dot(&beta0)
                    + nv.c0;
                let c_theta = 2.0 * g.intent_gain.transpose() * &rk
                    - g.intent_gain.transpose() * &c.control_linear
                    - m_int.transpose() * &g.offset
                    + 2.0 * b_theta.transpose() * &zb0
                    + b_theta.transpose() * &nv.zeta0
                    + nv.zeta_theta.transpose() * &beta0
                    + &nv.c_theta;
                let c_theta_theta = symmetrize(
                    &(g.intent_gain.transpose() * &rkt - g.intent_gain.transpose() * m_int
                        + b_theta.transpose() * &nv.z * &b_theta
                        + nv.zeta_theta.transpose() * &b_theta
                        + &nv.c_theta_theta),
                );
                PlayerValue {
                    z,
                    zeta0,
                    zeta_theta,
                    c0,
                    c_theta,
                    c_theta_theta,
                }
            })
            .collect();

        policies_rev.push(FeedbackPolicyStage { players: gains });
        values_rev.push(ValueStage {
            players: current.clone(),
        });
        next = current;
    }

    policies_rev.reverse();
    values_rev.reverse();
    Ok(NashSolution {
        policies: policies_rev,
        values: values_rev,
    })
}

/// Controls of every player at stage `t` under intent `theta`.
pub fn policy_response(
    policies: &[FeedbackPolicyStage],
    t: usize,
    x: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let stage = policies.get(t).ok_or(Error::StageOutOfRange {
        stage: t,
        horizon: policies.len(),
    })?;
    stage
        .players
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.state_gain.ncols() != x.len() {
                return Err(dim_err(
                    format!("state for player {i} policy"),
                    g.state_gain.ncols(),
                    x.len(),
                ));
            }
            if g.intent_gain.ncols() != theta.len() {
                return Err(dim_err(
                    format!("intent for player {i} policy"),
                    g.intent_gain.ncols(),
                    theta.len(),
                ));
            }
            Ok(g.eval(x, theta))
        })
        .collect()
}

/// Closed-loop rollout of feedback policies from `x0` under intent `theta`.
pub fn rollout_linear(
    game: &LinearGame,
    policies: &[FeedbackPolicyStage],
    x0: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<crate::model::Trajectory> {
    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(game.dims.horizon);
    for t in 0..game.dims.horizon {
        let u = policy_response(policies, t, &states[t], theta)?;
        states.push(game.stages[t].apply(&states[t], &u));
        controls.push(u);
    }
    Ok(crate::model::Trajectory { states, controls })
}
