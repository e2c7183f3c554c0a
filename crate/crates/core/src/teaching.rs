//! Intent demonstration: the certain player's control problem over the joint
//! physical and belief state.
//!
//! The uncertain players follow their equilibrium policies conditioned on their
//! current estimates, and every estimate moves by `L_t (u¹ − π¹_t(x; θ̂))`. The
//! certain player minimizes `ρ1 c¹ + ρ2 Σ_j ‖θ̂^j − θ*‖²` through that coupling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::estimation::{
    check_step_size, gain_schedule, policy_intent_jacobian, Belief, EstimatorKind,
};
use crate::ilq::{iterate, Acceptance, IlqOptions};
use crate::linalg::{all_finite_m, all_finite_v, vstack};
use crate::lq_nash::{
    backward_recursion, Degeneracy, FeedbackPolicyStage, PlayerPolicy, PlayerValue,
};
use crate::model::{
    evaluate_trajectory_cost, fd_jacobians, running_cost, terminal_cost, CostExpansion, Dynamics,
    GameDefinition, GameDimensions, LinearGame, LinearStage, NonlinearGame, PlayerCost,
    QuadraticCostStage, StateBounds, Trajectory,
};

/// Weight of `‖u¹ − π¹(x; θ*)‖²` added when the task weight `ρ1` is zero.
pub const CONTROL_REGULARIZATION: f64 = 1e-6;

/// Default central-difference step for [`cost_to_go_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-4;

/// Physical state plus one intent estimate per uncertain player.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub theta_hats: Vec<DVector<f64>>,
}

impl AugmentedState {
    pub fn new(x: DVector<f64>, theta_hats: Vec<DVector<f64>>) -> Self {
        Self { x, theta_hats }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.theta_hats.iter().map(|t| t.len()).sum::<usize>()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut parts = vec![&self.x];
        parts.extend(self.theta_hats.iter());
        vstack(&parts)
    }

    pub fn from_vector(z: &DVector<f64>, state_dim: usize, intent_dim: usize) -> Result<Self> {
        if z.len() < state_dim
            || intent_dim == 0
            || !(z.len() - state_dim).is_multiple_of(intent_dim)
        {
            return Err(Error::InvalidInput(format!(
                "augmented vector of length {} does not split into a {state_dim}-state and {intent_dim}-estimates",
                z.len()
            )));
        }
        let count = (z.len() - state_dim) / intent_dim;
        Ok(Self {
            x: z.rows(0, state_dim).into_owned(),
            theta_hats: (0..count)
                .map(|j| z.rows(state_dim + j * intent_dim, intent_dim).into_owned())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeachingWeights {
    /// Task weight.
    pub rho1: f64,
    /// Demonstration weight.
    pub rho2: f64,
    pub theta_star: DVector<f64>,
}

impl TeachingWeights {
    pub fn new(rho1: f64, rho2: f64, theta_star: DVector<f64>) -> Result<Self> {
        let w = Self {
            rho1,
            rho2,
            theta_star,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.rho1) || !ok(self.rho2) {
            return Err(Error::InvalidInput(format!(
                "weights must be finite and non-negative, got rho1 = {}, rho2 = {}",
                self.rho1, self.rho2
            )));
        }
        if self.rho1 + self.rho2 <= 0.0 {
            return Err(Error::InvalidInput("rho1 + rho2 must be positive".into()));
        }
        if !all_finite_v(&self.theta_star) {
            return Err(Error::NonFinite {
                what: "true intent".into(),
                location: "teaching weights".into(),
            });
        }
        Ok(())
    }

    /// `ρ2 / ρ1`, infinite for pure demonstration.
    pub fn ratio(&self) -> f64 {
        if self.rho1 == 0.0 {
            f64::INFINITY
        } else {
            self.rho2 / self.rho1
        }
    }

    pub fn regularization(&self) -> f64 {
        if self.rho1 == 0.0 {
            CONTROL_REGULARIZATION
        } else {
            0.0
        }
    }
}

/// `u¹ = −K̄ z − K̄_θ θ* − k̄` over the augmented state `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachingPolicyStage {
    pub gain: DMatrix<f64>,
    /// Gain on the true intent; lets the policy be re-evaluated for a new θ*.
    pub intent_gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl TeachingPolicyStage {
    pub fn eval(&self, z: &DVector<f64>, theta_star: &DVector<f64>) -> DVector<f64> {
        -(&self.gain * z) - &self.intent_gain * theta_star - &self.offset
    }

    pub fn is_finite(&self) -> bool {
        all_finite_m(&self.gain) && all_finite_m(&self.intent_gain) && all_finite_v(&self.offset)
    }

    fn from_player(p: PlayerPolicy) -> Self {
        Self {
            gain: p.state_gain,
            intent_gain: p.intent_gain,
            offset: p.offset,
        }
    }
}

/// Exact augmented problem of an LQ game with affine estimate dynamics.
#[derive(Debug, Clone)]
pub struct AugmentedLQProblem {
    /// Single-player LQ problem over `z`; its intent slot carries θ*.
    ///
    /// Stage costs omit the terms that depend on θ* alone.
    pub game: LinearGame,
    pub weights: TeachingWeights,
    pub state_dim: usize,
    pub uncertain_players: usize,
}

impl AugmentedLQProblem {
    pub fn augmented_dim(&self) -> usize {
        self.game.dims.state_dim
    }

    /// Open-loop rollout of a control sequence from `z0`.
    pub fn rollout(&self, z0: &DVector<f64>, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut zs = vec![z0.clone()];
        for (t, u) in controls.iter().enumerate() {
            let next = self.game.stages[t].apply(&zs[t], std::slice::from_ref(u));
            zs.push(next);
        }
        zs
    }

    /// Closed-loop rollout under teaching policies evaluated at `theta_star`.
    pub fn rollout_policy(
        &self,
        z0: &DVector<f64>,
        policies: &[TeachingPolicyStage],
        theta_star: &DVector<f64>,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut zs = vec![z0.clone()];
        let mut us = Vec::with_capacity(policies.len());
        for (t, pol) in policies.iter().enumerate() {
            let u = pol.eval(&zs[t], theta_star);
            zs.push(self.game.stages[t].apply(&zs[t], std::slice::from_ref(&u)));
            us.push(u);
        }
        (zs, us)
    }

    /// Encoded quadratic cost of a control sequence at the problem's θ*.
    pub fn cost(&self, z0: &DVector<f64>, controls: &[DVector<f64>]) -> f64 {
        let zs = self.rollout(z0, controls);
        let theta = &self.weights.theta_star;
        let t_len = self.game.dims.horizon;
        let running: f64 = (0..t_len)
            .map(|t| self.game.costs[t][0].eval(&zs[t], Some(&controls[t]), theta))
            .sum();
        running + self.game.costs[t_len][0].eval(&zs[t_len], None, theta)
    }
}

#[derive(Debug, Clone)]
pub struct TeachingSolution {
    pub policies: Vec<TeachingPolicyStage>,
    /// Value functions `V_t(z, θ*)` up to terms depending on θ* alone.
    pub values: Vec<PlayerValue>,
}

fn check_policies(dims: &GameDimensions, policies: &[FeedbackPolicyStage]) -> Result<()> {
    if policies.len() != dims.horizon {
        return Err(Error::Mismatch(format!(
            "policy horizon {} does not match game horizon {}",
            policies.len(),
            dims.horizon
        )));
    }
    for (t, stage) in policies.iter().enumerate() {
        if stage.players.len() != dims.players() {
            return Err(dim_err(
                format!("policy players at stage {t}"),
                dims.players(),
                stage.players.len(),
            ));
        }
        for (i, g) in stage.players.iter().enumerate() {
            let m = dims.control_dims[i];
            if g.state_gain.shape() != (m, dims.state_dim)
                || g.intent_gain.shape() != (m, dims.intent_dim)
                || g.offset.len() != m
            {
                return Err(Error::Mismatch(format!(
                    "policy of player {i} at stage {t} has wrong shape"
                )));
            }
        }
    }
    Ok(())
}

fn check_gains(dims: &GameDimensions, gains: &[Vec<DMatrix<f64>>]) -> Result<()> {
    let uncertain = dims.players() - 1;
    if gains.len() != uncertain {
        return Err(dim_err("estimate gain schedules", uncertain, gains.len()));
    }
    let (p, m1) = (dims.intent_dim, dims.control_dims[0]);
    for (j, schedule) in gains.iter().enumerate() {
        if schedule.len() != dims.horizon {
            return Err(dim_err(
                format!("gain schedule of player {}", j + 1),
                dims.horizon,
                schedule.len(),
            ));
        }
        if let Some(t) = schedule.iter().position(|l| l.shape() != (p, m1)) {
            return Err(Error::Mismatch(format!(
                "estimate gain of player {} at stage {t} must be {p}x{m1}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// Augmented LQ problem for gradient-MLE estimators with step size `alpha`.
pub fn build_augmented_lq(
    game: &LinearGame,
    policies: &[FeedbackPolicyStage],
    alpha: f64,
    weights: &TeachingWeights,
) -> Result<AugmentedLQProblem> {
    check_step_size(alpha)?;
    check_policies(&game.dims, policies)?;
    let schedule: Vec<DMatrix<f64>> = policies
        .iter()
        .map(|s| policy_intent_jacobian(&s.players[0]).transpose() * alpha)
        .collect();
    let gains = vec![schedule; game.dims.players() - 1];
    build_augmented_lq_from_gains(game, policies, &gains, weights)
}

/// Augmented LQ problem for any estimator whose mean moves by
/// `gains[j][t] (u¹ − π¹_t(x; θ̂^j))`.
pub fn build_augmented_lq_from_gains(
    game: &LinearGame,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
) -> Result<AugmentedLQProblem> {
    game.validate()?;
    weights.validate()?;
    let dims = &game.dims;
    check_policies(dims, policies)?;
    check_gains(dims, gains)?;
    let (n, p, m1) = (dims.state_dim, dims.intent_dim, dims.control_dims[0]);
    if weights.theta_star.len() != p {
        return Err(dim_err("true intent", p, weights.theta_star.len()));
    }
    let uncertain = dims.players() - 1;
    let na = n + uncertain * p;
    let (rho1, rho2, reg) = (weights.rho1, weights.rho2, weights.regularization());

    let mut stages = Vec::with_capacity(dims.horizon);
    let mut costs = Vec::with_capacity(dims.horizon + 1);
    for t in 0..dims.horizon {
        let st = &game.stages[t];
        let pol = &policies[t].players;
        let p1 = &pol[0];

        let mut a = DMatrix::zeros(na, na);
        let mut b = DMatrix::zeros(na, m1);
        let mut d = DVector::zeros(na);
        let mut axx = st.a.clone();
        let mut dx = st.d.clone();
        for j in 1..=uncertain {
            let bj = &st.b[j];
            axx -= bj * &pol[j].state_gain;
            dx -= bj * &pol[j].offset;
            let off = n + (j - 1) * p;
            a.view_mut((0, off), (n, p))
                .copy_from(&(-(bj * &pol[j].intent_gain)));

            let l = &gains[j - 1][t];
            a.view_mut((off, 0), (p, n))
                .copy_from(&(l * &p1.state_gain));
            a.view_mut((off, off), (p, p))
                .copy_from(&(DMatrix::identity(p, p) + l * &p1.intent_gain));
            b.view_mut((off, 0), (p, m1)).copy_from(l);
            d.rows_mut(off, p).copy_from(&(l * &p1.offset));
        }
        a.view_mut((0, 0), (n, n)).copy_from(&axx);
        b.view_mut((0, 0), (n, m1)).copy_from(&st.b[0]);
        d.rows_mut(0, n).copy_from(&dx);
        stages.push(LinearStage { a, b: vec![b], d });

        // Regularizer ε‖u + K_x x + K_θ θ* + k‖² expanded exactly.
        let c = &game.costs[t][0];
        let kx = &p1.state_gain;
        let mut q = DMatrix::zeros(na, na);
        q.view_mut((0, 0), (n, n))
            .copy_from(&(&c.q * rho1 + kx.transpose() * kx * reg));
        let mut ell0 = DVector::zeros(na);
        ell0.rows_mut(0, n)
            .copy_from(&(&c.ell0 * rho1 + kx.transpose() * &p1.offset * (2.0 * reg)));
        let mut l_theta = DMatrix::zeros(na, p);
        l_theta
            .view_mut((0, 0), (n, p))
            .copy_from(&(&c.l_theta * rho1 + kx.transpose() * &p1.intent_gain * (2.0 * reg)));
        let mut cross = DMatrix::zeros(m1, na);
        cross
            .view_mut((0, 0), (m1, n))
            .copy_from(&(&c.cross * rho1 + kx * reg));
        add_demonstration(&mut q, &mut l_theta, n, p, uncertain, rho2);
        costs.push(vec![QuadraticCostStage {
            q: crate::linalg::symmetrize(&q),
            r: &c.r * rho1 + DMatrix::identity(m1, m1) * reg,
            ell0,
            l_theta,
            control_linear: &c.control_linear * rho1 + &p1.offset * (2.0 * reg),
            cross,
            control_intent: &c.control_intent * rho1 + &p1.intent_gain * (2.0 * reg),
        }]);
    }
    let c = &game.costs[dims.horizon][0];
    let mut q = DMatrix::zeros(na, na);
    q.view_mut((0, 0), (n, n)).copy_from(&(&c.q * rho1));
    let mut ell0 = DVector::zeros(na);
    ell0.rows_mut(0, n).copy_from(&(&c.ell0 * rho1));
    let mut l_theta = DMatrix::zeros(na, p);
    l_theta
        .view_mut((0, 0), (n, p))
        .copy_from(&(&c.l_theta * rho1));
    add_demonstration(&mut q, &mut l_theta, n, p, uncertain, rho2);
    costs.push(vec![
        QuadraticCostStage::terminal(q, p).with_linear(ell0, l_theta)
    ]);

    let aug = LinearGame {
        dims: GameDimensions::with_players(na, vec![m1], p, dims.horizon)?,
        stages,
        costs,
        intent_space: game.intent_space.clone(),
    };
    aug.validate()?;
    Ok(AugmentedLQProblem {
        game: aug,
        weights: weights.clone(),
        state_dim: n,
        uncertain_players: uncertain,
    })
}

/// `ρ2 Σ_j ‖θ̂^j − θ*‖²` without its θ*-only constant.
fn add_demonstration(
    q: &mut DMatrix<f64>,
    l_theta: &mut DMatrix<f64>,
    n: usize,
    p: usize,
    uncertain: usize,
    rho2: f64,
) {
    for j in 0..uncertain {
        let off = n + j * p;
        q.view_mut((off, off), (p, p))
            .copy_from(&(DMatrix::identity(p, p) * rho2));
        l_theta
            .view_mut((off, 0), (p, p))
            .copy_from(&(DMatrix::identity(p, p) * (-2.0 * rho2)));
    }
}

/// Exact backward Riccati recursion of the augmented problem.
pub fn solve_affine_lqr(problem: &AugmentedLQProblem) -> Result<TeachingSolution> {
    let g = &problem.game;
    let sol = backward_recursion(&g.dims, &g.stages, &g.costs, Degeneracy::ControlHessian)?;
    Ok(TeachingSolution {
        policies: sol
            .policies
            .into_iter()
            .map(|mut s| TeachingPolicyStage::from_player(s.players.remove(0)))
            .collect(),
        values: sol
            .values
            .into_iter()
            .map(|mut v| v.players.remove(0))
            .collect(),
    })
}

struct Coupled {
    physical: NonlinearGame,
    policies: Vec<FeedbackPolicyStage>,
    gains: Vec<Vec<DMatrix<f64>>>,
    rho1: f64,
    rho2: f64,
    reg: f64,
}

impl Coupled {
    fn n(&self) -> usize {
        self.physical.dims.state_dim
    }

    fn p(&self) -> usize {
        self.physical.dims.intent_dim
    }

    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let (n, p) = (self.n(), self.p());
        let x = z.rows(0, n).into_owned();
        let mus = (0..self.gains.len())
            .map(|j| z.rows(n + j * p, p).into_owned())
            .collect();
        (x, mus)
    }

    fn profile(
        &self,
        t: usize,
        x: &DVector<f64>,
        mus: &[DVector<f64>],
        u1: &DVector<f64>,
    ) -> Vec<DVector<f64>> {
        let pol = &self.policies[t].players;
        let mut u = Vec::with_capacity(pol.len());
        u.push(u1.clone());
        for (j, mu) in mus.iter().enumerate() {
            u.push(pol[j + 1].eval(x, mu));
        }
        u
    }

    fn demonstration(&self, mus: &[DVector<f64>], theta: &DVector<f64>) -> f64 {
        self.rho2 * mus.iter().map(|m| (m - theta).norm_squared()).sum::<f64>()
    }
}

struct CoupledDynamics(Arc<Coupled>);

impl Dynamics for CoupledDynamics {
    fn step(&self, t: usize, z: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let c = &self.0;
        let (x, mus) = c.split(z);
        let profile = c.profile(t, &x, &mus, &u[0]);
        let xn = c.physical.dynamics.step(t, &x, &profile);
        let p1 = &c.policies[t].players[0];
        let next: Vec<DVector<f64>> = mus
            .iter()
            .enumerate()
            .map(|(j, mu)| mu + &c.gains[j][t] * (&u[0] - p1.eval(&x, mu)))
            .collect();
        let mut parts = vec![&xn];
        parts.extend(next.iter());
        vstack(&parts)
    }

    fn jacobians(
        &self,
        t: usize,
        z: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let c = &self.0;
        let (n, p) = (c.n(), c.p());
        let (x, mus) = c.split(z);
        let profile = c.profile(t, &x, &mus, &u[0]);
        let dynamics = c.physical.dynamics.as_ref();
        let (fx, fu) = dynamics
            .jacobians(t, &x, &profile)
            .unwrap_or_else(|| fd_jacobians(dynamics, t, &x, &profile));
        let na = z.len();
        let m1 = u[0].len();
        let pol = &c.policies[t].players;
        let mut a = DMatrix::zeros(na, na);
        let mut b = DMatrix::zeros(na, m1);
        let mut axx = fx;
        for j in 1..pol.len() {
            axx -= &fu[j] * &pol[j].state_gain;
            let off = n + (j - 1) * p;
            a.view_mut((0, off), (n, p))
                .copy_from(&(-(&fu[j] * &pol[j].intent_gain)));
            let l = &c.gains[j - 1][t];
            a.view_mut((off, 0), (p, n))
                .copy_from(&(l * &pol[0].state_gain));
            a.view_mut((off, off), (p, p))
                .copy_from(&(DMatrix::identity(p, p) + l * &pol[0].intent_gain));
            b.view_mut((off, 0), (p, m1)).copy_from(l);
        }
        a.view_mut((0, 0), (n, n)).copy_from(&axx);
        b.view_mut((0, 0), (n, m1)).copy_from(&fu[0]);
        Some((a, vec![b]))
    }
}

/// Certain player's aggregated cost over the augmented state.
///
/// The analytic expansion assumes the physical cost does not read the other
/// players' controls. Without an analytic physical expansion there is none here
/// either, and callers fall back to finite differences.
struct CoupledCost(Arc<Coupled>);

impl PlayerCost for CoupledCost {
    fn player(&self) -> usize {
        0
    }

    fn running(&self, t: usize, z: &DVector<f64>, u: &[DVector<f64>], theta: &DVector<f64>) -> f64 {
        let c = &self.0;
        let (x, mus) = c.split(z);
        let mut total = c.demonstration(&mus, theta);
        if c.rho1 != 0.0 {
            let profile = c.profile(t, &x, &mus, &u[0]);
            total += c.rho1 * c.physical.costs[0].running(t, &x, &profile, theta);
        }
        if c.reg != 0.0 {
            let v = &u[0] - c.policies[t].players[0].eval(&x, theta);
            total += c.reg * v.norm_squared();
        }
        total
    }

    fn terminal(&self, z: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let c = &self.0;
        let (x, mus) = c.split(z);
        let mut total = c.demonstration(&mus, theta);
        if c.rho1 != 0.0 {
            total += c.rho1 * c.physical.costs[0].terminal(&x, theta);
        }
        total
    }

    fn running_expansion(
        &self,
        t: usize,
        z: &DVector<f64>,
        u: &[DVector<f64>],
        theta: &DVector<f64>,
    ) -> Option<CostExpansion> {
        let c = &self.0;
        let (x, mus) = c.split(z);
        let m1 = u[0].len();
        let physical = if c.rho1 != 0.0 {
            let profile = c.profile(t, &x, &mus, &u[0]);
            Some(c.physical.costs[0].running_expansion(t, &x, &profile, theta)?)
        } else {
            None
        };
        let mut exp = self.embed(physical, &mus, theta, Some(m1));
        if c.reg != 0.0 {
            let (n, p1) = (c.n(), &c.policies[t].players[0]);
            let kx = &p1.state_gain;
            let v = &u[0] - p1.eval(&x, theta);
            let mut gx = exp.grad_x.rows_mut(0, n);
            gx += kx.transpose() * &v * (2.0 * c.reg);
            let mut hxx = exp.hess_xx.view_mut((0, 0), (n, n));
            hxx += kx.transpose() * kx * (2.0 * c.reg);
            let mut hxt = exp.hess_x_theta.view_mut((0, 0), (n, c.p()));
            hxt += kx.transpose() * &p1.intent_gain * (2.0 * c.reg);
            let mut hux = exp.hess_ux.view_mut((0, 0), (m1, n));
            hux += kx * (2.0 * c.reg);
            exp.hess_u_theta += &p1.intent_gain * (2.0 * c.reg);
            exp.grad_u += &v * (2.0 * c.reg);
            exp.hess_uu += DMatrix::identity(m1, m1) * (2.0 * c.reg);
        }
        Some(exp)
    }

    fn terminal_expansion(&self, z: &DVector<f64>, theta: &DVector<f64>) -> Option<CostExpansion> {
        let c = &self.0;
        let (x, mus) = c.split(z);
        let physical = if c.rho1 != 0.0 {
            Some(c.physical.costs[0].terminal_expansion(&x, theta)?)
        } else {
            None
        };
        Some(self.embed(physical, &mus, theta, None))
    }
}

impl CoupledCost {
    fn embed(
        &self,
        physical: Option<CostExpansion>,
        mus: &[DVector<f64>],
        theta: &DVector<f64>,
        m1: Option<usize>,
    ) -> CostExpansion {
        let c = &self.0;
        let (n, p) = (c.n(), c.p());
        let na = n + mus.len() * p;
        let m = m1.unwrap_or(0);
        let mut exp = CostExpansion {
            grad_x: DVector::zeros(na),
            hess_xx: DMatrix::zeros(na, na),
            grad_u: DVector::zeros(m),
            hess_uu: DMatrix::zeros(m, m),
            hess_x_theta: DMatrix::zeros(na, p),
            hess_ux: DMatrix::zeros(m, na),
            hess_u_theta: DMatrix::zeros(m, p),
        };
        if let Some(e) = physical {
            exp.grad_x.rows_mut(0, n).copy_from(&(e.grad_x * c.rho1));
            exp.hess_xx
                .view_mut((0, 0), (n, n))
                .copy_from(&(e.hess_xx * c.rho1));
            exp.hess_x_theta
                .view_mut((0, 0), (n, p))
                .copy_from(&(e.hess_x_theta * c.rho1));
            if m1.is_some() {
                exp.grad_u = e.grad_u * c.rho1;
                exp.hess_uu = e.hess_uu * c.rho1;
                exp.hess_ux
                    .view_mut((0, 0), (m, n))
                    .copy_from(&(e.hess_ux * c.rho1));
                exp.hess_u_theta = e.hess_u_theta * c.rho1;
            }
        }
        for (j, mu) in mus.iter().enumerate() {
            let off = n + j * p;
            exp.grad_x
                .rows_mut(off, p)
                .copy_from(&((mu - theta) * (2.0 * c.rho2)));
            exp.hess_xx
                .view_mut((off, off), (p, p))
                .copy_from(&(DMatrix::identity(p, p) * (2.0 * c.rho2)));
            exp.hess_x_theta
                .view_mut((off, 0), (p, p))
                .copy_from(&(DMatrix::identity(p, p) * (-2.0 * c.rho2)));
        }
        exp
    }
}

/// Single-player game over the augmented state `[x; θ̂²; …; θ̂ᴺ]` whose only
/// control is the certain player's and whose intent is θ*.
pub fn belief_coupled_game(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
) -> Result<NonlinearGame> {
    weights.validate()?;
    let dims = game.dims();
    check_policies(dims, policies)?;
    check_gains(dims, gains)?;
    if weights.theta_star.len() != dims.intent_dim {
        return Err(dim_err(
            "true intent",
            dims.intent_dim,
            weights.theta_star.len(),
        ));
    }
    let physical = game.to_nonlinear();
    let uncertain = dims.players() - 1;
    let na = dims.state_dim + uncertain * dims.intent_dim;
    let bounds = physical.state_bounds.as_ref().map(|b| {
        let pad = |v: &DVector<f64>, fill: f64| {
            let mut out = DVector::from_element(na, fill);
            out.rows_mut(0, v.len()).copy_from(v);
            out
        };
        StateBounds {
            lower: pad(&b.lower, f64::NEG_INFINITY),
            upper: pad(&b.upper, f64::INFINITY),
        }
    });
    let inner = Arc::new(Coupled {
        physical,
        policies: policies.to_vec(),
        gains: gains.to_vec(),
        rho1: weights.rho1,
        rho2: weights.rho2,
        reg: weights.regularization(),
    });
    let aug_dims = GameDimensions::with_players(
        na,
        vec![dims.control_dims[0]],
        dims.intent_dim,
        dims.horizon,
    )?;
    let mut g = NonlinearGame::new(
        aug_dims,
        Arc::new(CoupledDynamics(inner.clone())),
        vec![Arc::new(CoupledCost(inner))],
        game.intent_space().clone(),
    )?;
    g.state_bounds = bounds;
    Ok(g)
}

/// Per-player mean gain schedules for the given estimator and initial beliefs.
pub fn belief_gains(
    kind: EstimatorKind,
    beliefs: &[Belief],
    policies: &[FeedbackPolicyStage],
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let player1: Vec<PlayerPolicy> = policies.iter().map(|s| s.players[0].clone()).collect();
    beliefs
        .iter()
        .map(|b| gain_schedule(kind, b, &player1))
        .collect()
}

#[derive(Debug, Clone)]
pub struct IlqrTeachingSolution {
    pub policies: Vec<TeachingPolicyStage>,
    /// Augmented nominal trajectory; controls hold the certain player's only.
    pub nominal: Trajectory,
    /// Aggregated cost of the nominal.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Teaching policy of a general game by iterative LQ approximation of the
/// augmented problem.
///
/// Starts from the certain player's equilibrium policy evaluated at θ* and
/// only accepts steps that do not increase the aggregated cost.
pub fn solve_ilqr_augmented(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    kind: EstimatorKind,
    beliefs: &[Belief],
    weights: &TeachingWeights,
    x0: &DVector<f64>,
    options: &IlqOptions,
) -> Result<IlqrTeachingSolution> {
    kind.validate()?;
    let dims = game.dims();
    check_policies(dims, policies)?;
    if beliefs.len() != dims.players() - 1 {
        return Err(dim_err(
            "initial beliefs",
            dims.players() - 1,
            beliefs.len(),
        ));
    }
    let gains = belief_gains(kind, beliefs, policies)?;
    let aug = belief_coupled_game(game, policies, &gains, weights)?;
    let z0 = AugmentedState::new(
        x0.clone(),
        beliefs.iter().map(|b| b.mean().clone()).collect(),
    )
    .to_vector();
    if z0.len() != aug.dims.state_dim {
        return Err(dim_err(
            "augmented initial state",
            aug.dims.state_dim,
            z0.len(),
        ));
    }
    let theta = &weights.theta_star;
    let warm = passive_controls(&aug, policies, &z0, theta);
    let sol = iterate(&aug, theta, &z0, Some(warm), options, Acceptance::Descent)?;
    let cost = evaluate_trajectory_cost(
        &GameDefinition::Nonlinear(aug),
        &sol.state.nominal,
        0,
        theta,
    )?;
    Ok(IlqrTeachingSolution {
        policies: sol
            .policies
            .into_iter()
            .map(|mut s| TeachingPolicyStage::from_player(s.players.remove(0)))
            .collect(),
        nominal: sol.state.nominal,
        cost,
        iterations: sol.state.iterations,
        converged: sol.state.converged,
    })
}

/// Teaching policy by the exact route for LQ games and the iterative one
/// otherwise.
pub fn plan_teaching(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    kind: EstimatorKind,
    beliefs: &[Belief],
    weights: &TeachingWeights,
    x0: &DVector<f64>,
    options: &IlqOptions,
) -> Result<Vec<TeachingPolicyStage>> {
    match game {
        GameDefinition::Linear(g) => {
            kind.validate()?;
            check_policies(&g.dims, policies)?;
            let gains = belief_gains(kind, beliefs, policies)?;
            let problem = build_augmented_lq_from_gains(g, policies, &gains, weights)?;
            Ok(solve_affine_lqr(&problem)?.policies)
        }
        GameDefinition::Nonlinear(_) => {
            Ok(solve_ilqr_augmented(game, policies, kind, beliefs, weights, x0, options)?.policies)
        }
    }
}

/// Certain-player controls of `π¹(x; θ*)` in the belief-coupled closed loop.
fn passive_controls(
    aug: &NonlinearGame,
    policies: &[FeedbackPolicyStage],
    z0: &DVector<f64>,
    theta: &DVector<f64>,
) -> Vec<Vec<DVector<f64>>> {
    let n = policies[0].players[0].state_gain.ncols();
    let mut z = z0.clone();
    let mut out = Vec::with_capacity(policies.len());
    for (t, stage) in policies.iter().enumerate() {
        let u = stage.players[0].eval(&z.rows(0, n).into_owned(), theta);
        z = aug.dynamics.step(t, &z, std::slice::from_ref(&u));
        out.push(vec![u]);
    }
    out
}

/// Gradient of the aggregated cost-to-go from stage `t` with respect to the
/// certain player's controls `u¹_t..u¹_{T−1}`, with every estimate reset to θ*
/// at stage `t`.
///
/// `controls` is the certain player's full sequence; earlier entries only fix
/// the physical state reached at `t`.
pub fn cost_to_go_jacobian(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
    t: usize,
    controls: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    cost_to_go_jacobian_with_step(
        game,
        policies,
        gains,
        weights,
        t,
        controls,
        x0,
        JACOBIAN_STEP,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn cost_to_go_jacobian_with_step(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
    t: usize,
    controls: &[DVector<f64>],
    x0: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let (aug, zt) = cost_to_go_start(game, policies, gains, weights, t, controls, x0)?;
    let theta = &weights.theta_star;
    let tail: Vec<DVector<f64>> = controls[t..].to_vec();
    let m1 = game.dims().control_dims[0];
    let mut grad = DVector::zeros(tail.len() * m1);
    for k in 0..tail.len() {
        for a in 0..m1 {
            let mut up = tail.clone();
            up[k][a] += step;
            let mut dn = tail.clone();
            dn[k][a] -= step;
            grad[k * m1 + a] = (tail_cost(&aug, &zt, t, &up, theta)
                - tail_cost(&aug, &zt, t, &dn, theta))
                / (2.0 * step);
        }
    }
    Ok(grad)
}

/// The aggregated cost-to-go differentiated by [`cost_to_go_jacobian`].
pub fn cost_to_go(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
    t: usize,
    controls: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<f64> {
    let (aug, zt) = cost_to_go_start(game, policies, gains, weights, t, controls, x0)?;
    Ok(tail_cost(&aug, &zt, t, &controls[t..], &weights.theta_star))
}

fn cost_to_go_start(
    game: &GameDefinition,
    policies: &[FeedbackPolicyStage],
    gains: &[Vec<DMatrix<f64>>],
    weights: &TeachingWeights,
    t: usize,
    controls: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<(NonlinearGame, DVector<f64>)> {
    let dims = game.dims();
    if t >= dims.horizon {
        return Err(Error::StageOutOfRange {
            stage: t,
            horizon: dims.horizon,
        });
    }
    if controls.len() != dims.horizon {
        return Err(dim_err(
            "certain player controls",
            dims.horizon,
            controls.len(),
        ));
    }
    let aug = belief_coupled_game(game, policies, gains, weights)?;
    let theta = &weights.theta_star;
    let uncertain = dims.players() - 1;
    let mut z = AugmentedState::new(x0.clone(), vec![theta.clone(); uncertain]).to_vector();
    for (s, u) in controls.iter().enumerate().take(t) {
        z = aug.dynamics.step(s, &z, std::slice::from_ref(u));
    }
    let x = z.rows(0, dims.state_dim).into_owned();
    let zt = AugmentedState::new(x, vec![theta.clone(); uncertain]).to_vector();
    Ok((aug, zt))
}

fn tail_cost(
    aug: &NonlinearGame,
    zt: &DVector<f64>,
    t: usize,
    us: &[DVector<f64>],
    theta: &DVector<f64>,
) -> f64 {
    let mut z = zt.clone();
    let mut total = 0.0;
    for (k, u) in us.iter().enumerate() {
        let s = t + k;
        total += aug.costs[0].running(s, &z, std::slice::from_ref(u), theta);
        z = aug.dynamics.step(s, &z, std::slice::from_ref(u));
    }
    total + aug.costs[0].terminal(&z, theta)
}

/// Task cost `c¹` of the certain player along a physical trajectory.
pub fn task_cost(
    game: &GameDefinition,
    trajectory: &Trajectory,
    theta: &DVector<f64>,
) -> Result<f64> {
    let t_len = game.dims().horizon;
    if trajectory.states.len() != t_len + 1 || trajectory.controls.len() != t_len {
        return Err(dim_err(
            "trajectory length",
            t_len,
            trajectory.controls.len(),
        ));
    }
    let running: f64 = (0..t_len)
        .map(|t| {
            running_cost(
                game,
                t,
                &trajectory.states[t],
                &trajectory.controls[t],
                0,
                theta,
            )
        })
        .sum();
    Ok(running + terminal_cost(game, &trajectory.states[t_len], 0, theta))
}
