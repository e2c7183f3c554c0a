//! Game definitions: dimensions, linear and nonlinear stages, intent-parameterized
//! costs, and the linearization / quadraticization used by the iterative solvers.
//!
//! Player index 0 is the certain player throughout the crate. Stage `t` runs
//! from `0` to `T - 1`; a trajectory carries `T + 1` states and `T` control
//! profiles, with the terminal cost applied to `x_T`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    all_finite_m, all_finite_v, asymmetry, floor_eigenvalues, min_eigenvalue, symmetrize,
};

/// Eigenvalue floor applied to quadraticized state costs.
pub const HESSIAN_FLOOR: f64 = 1e-8;
/// Relative step for first-order central differences.
pub const FD_STEP: f64 = 1e-6;
/// Relative step for second-order central differences.
pub const FD_STEP_SECOND: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GameDimensions {
    pub state_dim: usize,
    pub control_dims: Vec<usize>,
    pub intent_dim: usize,
    pub horizon: usize,
}

impl GameDimensions {
    pub fn new(
        state_dim: usize,
        control_dims: Vec<usize>,
        intent_dim: usize,
        horizon: usize,
    ) -> Result<Self> {
        if control_dims.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a game needs at least 2 players, got {}",
                control_dims.len()
            )));
        }
        Self::with_players(state_dim, control_dims, intent_dim, horizon)
    }

    /// Same checks as [`GameDimensions::new`] but admits a single player; used for
    /// the certain player's optimal control problems.
    pub(crate) fn with_players(
        state_dim: usize,
        control_dims: Vec<usize>,
        intent_dim: usize,
        horizon: usize,
    ) -> Result<Self> {
        if state_dim == 0 || intent_dim == 0 || horizon == 0 {
            return Err(Error::InvalidInput(
                "state dimension, intent dimension and horizon must be positive".into(),
            ));
        }
        if control_dims.is_empty() || control_dims.contains(&0) {
            return Err(Error::InvalidInput(
                "every player needs a positive control dimension".into(),
            ));
        }
        Ok(Self {
            state_dim,
            control_dims,
            intent_dim,
            horizon,
        })
    }

    pub fn players(&self) -> usize {
        self.control_dims.len()
    }

    pub fn total_controls(&self) -> usize {
        self.control_dims.iter().sum()
    }

    pub fn control_offset(&self, player: usize) -> usize {
        self.control_dims[..player].iter().sum()
    }
}

/// Box bounds on the intent parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentSpace {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl IntentSpace {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(dim_err("intent space bounds", lower.len(), upper.len()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput(
                "intent space lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clip(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            theta
                .iter()
                .enumerate()
                .map(|(k, v)| v.clamp(self.lower[k], self.upper[k])),
        )
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }
}

/// Box bounds on the state, used by the iterative line searches.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl StateBounds {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }
}

/// `x' = A x + Σ_i B_i u_i + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStage {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub d: DVector<f64>,
}

impl LinearStage {
    pub fn new(a: DMatrix<f64>, b: Vec<DMatrix<f64>>) -> Self {
        let n = a.nrows();
        Self {
            a,
            b,
            d: DVector::zeros(n),
        }
    }

    pub fn with_drift(mut self, d: DVector<f64>) -> Self {
        self.d = d;
        self
    }

    pub fn apply(&self, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        let mut next = &self.a * x + &self.d;
        for (b, ui) in self.b.iter().zip(u) {
            next += b * ui;
        }
        next
    }

    fn validate(&self, dims: &GameDimensions, t: usize) -> Result<()> {
        let n = dims.state_dim;
        if self.a.shape() != (n, n) {
            return Err(dim_err(
                format!("stage {t} A"),
                format!("{n}x{n}"),
                shape(&self.a),
            ));
        }
        if self.d.len() != n {
            return Err(dim_err(format!("stage {t} d"), n, self.d.len()));
        }
        if self.b.len() != dims.players() {
            return Err(dim_err(
                format!("stage {t} B count"),
                dims.players(),
                self.b.len(),
            ));
        }
        for (i, (b, &m)) in self.b.iter().zip(&dims.control_dims).enumerate() {
            if b.shape() != (n, m) {
                return Err(dim_err(
                    format!("stage {t} B[{i}]"),
                    format!("{n}x{m}"),
                    shape(b),
                ));
            }
        }
        Ok(())
    }
}

/// One player's stage cost
/// `xᵀQx + uᵀRu + 2uᵀSx + (ell0 + L_θ θ)ᵀx + (r + M θ)ᵀu`.
///
/// Terminal costs carry an empty `R`, `S`, `r` and `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCostStage {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub ell0: DVector<f64>,
    pub l_theta: DMatrix<f64>,
    pub control_linear: DVector<f64>,
    /// `S`, m × n.
    pub cross: DMatrix<f64>,
    /// `M`, m × p.
    pub control_intent: DMatrix<f64>,
}

impl QuadraticCostStage {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, intent_dim: usize) -> Self {
        let n = q.nrows();
        let m = r.nrows();
        Self {
            q,
            r,
            ell0: DVector::zeros(n),
            l_theta: DMatrix::zeros(n, intent_dim),
            control_linear: DVector::zeros(m),
            cross: DMatrix::zeros(m, n),
            control_intent: DMatrix::zeros(m, intent_dim),
        }
    }

    pub fn terminal(q: DMatrix<f64>, intent_dim: usize) -> Self {
        Self::new(q, DMatrix::zeros(0, 0), intent_dim)
    }

    pub fn zero(state_dim: usize, control_dim: usize, intent_dim: usize) -> Self {
        Self::new(
            DMatrix::zeros(state_dim, state_dim),
            DMatrix::zeros(control_dim, control_dim),
            intent_dim,
        )
    }

    pub fn with_linear(mut self, ell0: DVector<f64>, l_theta: DMatrix<f64>) -> Self {
        self.ell0 = ell0;
        self.l_theta = l_theta;
        self
    }

    pub fn with_control_linear(mut self, r: DVector<f64>) -> Self {
        self.control_linear = r;
        self
    }

    pub fn with_cross(mut self, s: DMatrix<f64>) -> Self {
        self.cross = s;
        self
    }

    pub fn with_control_intent(mut self, m: DMatrix<f64>) -> Self {
        self.control_intent = m;
        self
    }

    pub fn control_linear_term(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.control_linear + &self.control_intent * theta
    }

    pub fn linear_term(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.ell0 + &self.l_theta * theta
    }

    /// Evaluates the cost; `u` is ignored for terminal stages.
    pub fn eval(&self, x: &DVector<f64>, u: Option<&DVector<f64>>, theta: &DVector<f64>) -> f64 {
        let mut c = x.dot(&(&self.q * x)) + self.linear_term(theta).dot(x);
        if let Some(u) = u {
            if !self.r.is_empty() {
                c += u.dot(&(&self.r * u))
                    + 2.0 * u.dot(&(&self.cross * x))
                    + self.control_linear_term(theta).dot(u);
            }
        }
        c
    }

    fn validate(&self, n: usize, m: Option<usize>, p: usize, ctx: &str) -> Result<()> {
        if self.q.shape() != (n, n) {
            return Err(dim_err(
                format!("{ctx} Q"),
                format!("{n}x{n}"),
                shape(&self.q),
            ));
        }
        if self.ell0.len() != n {
            return Err(dim_err(format!("{ctx} ell0"), n, self.ell0.len()));
        }
        if self.l_theta.shape() != (n, p) {
            return Err(dim_err(
                format!("{ctx} L_theta"),
                format!("{n}x{p}"),
                shape(&self.l_theta),
            ));
        }
        if !all_finite_m(&self.q) || !all_finite_m(&self.l_theta) || !all_finite_v(&self.ell0) {
            return Err(Error::NonFinite {
                what: "cost coefficients".into(),
                location: ctx.into(),
            });
        }
        if asymmetry(&self.q) > 1e-12 {
            return Err(Error::InvalidInput(format!("{ctx}: Q is not symmetric")));
        }
        if min_eigenvalue(&self.q) < -1e-10 {
            return Err(Error::InvalidInput(format!(
                "{ctx}: Q is not positive semidefinite"
            )));
        }
        if let Some(m) = m {
            if self.r.shape() != (m, m) {
                return Err(dim_err(
                    format!("{ctx} R"),
                    format!("{m}x{m}"),
                    shape(&self.r),
                ));
            }
            if self.control_linear.len() != m {
                return Err(dim_err(
                    format!("{ctx} control linear term"),
                    m,
                    self.control_linear.len(),
                ));
            }
            if self.cross.shape() != (m, n) {
                return Err(dim_err(
                    format!("{ctx} cross term"),
                    format!("{m}x{n}"),
                    shape(&self.cross),
                ));
            }
            if self.control_intent.shape() != (m, p) {
                return Err(dim_err(
                    format!("{ctx} control intent term"),
                    format!("{m}x{p}"),
                    shape(&self.control_intent),
                ));
            }
            if asymmetry(&self.r) > 1e-12 {
                return Err(Error::InvalidInput(format!("{ctx}: R is not symmetric")));
            }
            if min_eigenvalue(&self.r) < 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "{ctx}: R is not positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// A finite-horizon game with linear dynamics and quadratic costs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGame {
    pub dims: GameDimensions,
    pub stages: Vec<LinearStage>,
    /// `costs[t][i]` for `t` in `0..=T`; the last entry is the terminal cost.
    pub costs: Vec<Vec<QuadraticCostStage>>,
    pub intent_space: IntentSpace,
}

impl LinearGame {
    pub fn new(
        dims: GameDimensions,
        stages: Vec<LinearStage>,
        costs: Vec<Vec<QuadraticCostStage>>,
        intent_space: IntentSpace,
    ) -> Result<Self> {
        let game = Self {
            dims,
            stages,
            costs,
            intent_space,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.dims;
        let t_len = dims.horizon;
        if self.stages.len() != t_len {
            return Err(dim_err("dynamics stage count", t_len, self.stages.len()));
        }
        if self.costs.len() != t_len + 1 {
            return Err(dim_err("cost stage count", t_len + 1, self.costs.len()));
        }
        if self.intent_space.dim() != dims.intent_dim {
            return Err(dim_err(
                "intent space",
                dims.intent_dim,
                self.intent_space.dim(),
            ));
        }
        for (t, stage) in self.stages.iter().enumerate() {
            stage.validate(dims, t)?;
        }
        for (t, per_player) in self.costs.iter().enumerate() {
            if per_player.len() != dims.players() {
                return Err(dim_err(
                    format!("stage {t} cost count"),
                    dims.players(),
                    per_player.len(),
                ));
            }
            for (i, c) in per_player.iter().enumerate() {
                let m = if t < t_len {
                    Some(dims.control_dims[i])
                } else {
                    None
                };
                c.validate(
                    dims.state_dim,
                    m,
                    dims.intent_dim,
                    &format!("stage {t} player {i}"),
                )?;
            }
        }
        Ok(())
    }

    /// Wraps the game behind the nonlinear interfaces with exact derivatives.
    pub fn as_nonlinear(&self) -> NonlinearGame {
        let shared = Arc::new(self.clone());
        let costs: Vec<Arc<dyn PlayerCost>> = (0..self.dims.players())
            .map(|i| {
                Arc::new(QuadraticPlayerCost {
                    game: shared.clone(),
                    player: i,
                }) as Arc<dyn PlayerCost>
            })
            .collect();
        NonlinearGame {
            dims: self.dims.clone(),
            dynamics: Arc::new(LinearDynamics { game: shared }),
            costs,
            intent_space: self.intent_space.clone(),
            state_bounds: None,
        }
    }
}

/// Discrete-time dynamics `x_{t+1} = f_t(x_t, u_t^1, …, u_t^N)`.
pub trait Dynamics: Send + Sync {
    fn step(&self, t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64>;

    /// Analytic Jacobians `(∂f/∂x, [∂f/∂u_i])`; `None` selects finite differences.
    fn jacobians(
        &self,
        _t: usize,
        _x: &DVector<f64>,
        _u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        None
    }
}

/// Second-order information of one player's cost about a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub grad_x: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    pub grad_u: DVector<f64>,
    pub hess_uu: DMatrix<f64>,
    /// `∂²c / ∂x ∂θ`, n × p.
    pub hess_x_theta: DMatrix<f64>,
    /// `∂²c / ∂u ∂x`, m × n (empty for terminal costs).
    pub hess_ux: DMatrix<f64>,
    /// `∂²c / ∂u ∂θ`, m × p (empty for terminal costs).
    pub hess_u_theta: DMatrix<f64>,
}

/// One player's running and terminal cost, parameterized by the intent θ.
///
/// Costs may read every player's control but are differentiated only in the
/// owner's control (no cross-control terms).
pub trait PlayerCost: Send + Sync {
    fn player(&self) -> usize;

    fn running(&self, t: usize, x: &DVector<f64>, u: &[DVector<f64>], theta: &DVector<f64>) -> f64;

    fn terminal(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64;

    fn running_expansion(
        &self,
        _t: usize,
        _x: &DVector<f64>,
        _u: &[DVector<f64>],
        _theta: &DVector<f64>,
    ) -> Option<CostExpansion> {
        None
    }

    fn terminal_expansion(
        &self,
        _x: &DVector<f64>,
        _theta: &DVector<f64>,
    ) -> Option<CostExpansion> {
        None
    }
}

/// A game with general differentiable dynamics and costs.
#[derive(Clone)]
pub struct NonlinearGame {
    pub dims: GameDimensions,
    pub dynamics: Arc<dyn Dynamics>,
    pub costs: Vec<Arc<dyn PlayerCost>>,
    pub intent_space: IntentSpace,
    pub state_bounds: Option<StateBounds>,
}

impl fmt::Debug for NonlinearGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearGame")
            .field("dims", &self.dims)
            .field("intent_space", &self.intent_space)
            .finish_non_exhaustive()
    }
}

impl NonlinearGame {
    pub fn new(
        dims: GameDimensions,
        dynamics: Arc<dyn Dynamics>,
        costs: Vec<Arc<dyn PlayerCost>>,
        intent_space: IntentSpace,
    ) -> Result<Self> {
        if costs.len() != dims.players() {
            return Err(dim_err("player cost count", dims.players(), costs.len()));
        }
        if intent_space.dim() != dims.intent_dim {
            return Err(dim_err("intent space", dims.intent_dim, intent_space.dim()));
        }
        for (i, c) in costs.iter().enumerate() {
            if c.player() != i {
                return Err(Error::InvalidInput(format!(
                    "cost {i} reports owner {}",
                    c.player()
                )));
            }
        }
        Ok(Self {
            dims,
            dynamics,
            costs,
            intent_space,
            state_bounds: None,
        })
    }

    pub fn with_state_bounds(mut self, bounds: StateBounds) -> Self {
        self.state_bounds = Some(bounds);
        self
    }

    /// Open-loop rollout of a control sequence.
    pub fn simulate(&self, x0: &DVector<f64>, controls: &[Vec<DVector<f64>>]) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for (t, u) in controls.iter().enumerate() {
            let next = self.dynamics.step(t, &states[t], u);
            states.push(next);
        }
        states
    }
}

#[derive(Debug, Clone)]
pub enum GameDefinition {
    Linear(LinearGame),
    Nonlinear(NonlinearGame),
}

impl GameDefinition {
    pub fn dims(&self) -> &GameDimensions {
        match self {
            GameDefinition::Linear(g) => &g.dims,
            GameDefinition::Nonlinear(g) => &g.dims,
        }
    }

    pub fn intent_space(&self) -> &IntentSpace {
        match self {
            GameDefinition::Linear(g) => &g.intent_space,
            GameDefinition::Nonlinear(g) => &g.intent_space,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, GameDefinition::Linear(_))
    }

    /// Nonlinear view of the game (exact wrapper for linear games).
    pub fn to_nonlinear(&self) -> NonlinearGame {
        match self {
            GameDefinition::Linear(g) => g.as_nonlinear(),
            GameDefinition::Nonlinear(g) => g.clone(),
        }
    }
}

/// States `x_0..x_T` and per-player controls `u_0..u_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    fn check(&self, dims: &GameDimensions) -> Result<()> {
        let t_len = dims.horizon;
        if self.states.len() != t_len + 1 {
            return Err(dim_err(
                "trajectory state count",
                t_len + 1,
                self.states.len(),
            ));
        }
        if self.controls.len() != t_len {
            return Err(dim_err(
                "trajectory control count",
                t_len,
                self.controls.len(),
            ));
        }
        for (t, x) in self.states.iter().enumerate() {
            if x.len() != dims.state_dim {
                return Err(dim_err(
                    format!("state at stage {t}"),
                    dims.state_dim,
                    x.len(),
                ));
            }
        }
        for (t, u) in self.controls.iter().enumerate() {
            if u.len() != dims.players() {
                return Err(dim_err(
                    format!("control profile at stage {t}"),
                    dims.players(),
                    u.len(),
                ));
            }
            for (i, ui) in u.iter().enumerate() {
                if ui.len() != dims.control_dims[i] {
                    return Err(dim_err(
                        format!("control of player {i} at stage {t}"),
                        dims.control_dims[i],
                        ui.len(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Total cost of `player` along `trajectory`, summed in stage order, terminal last.
pub fn evaluate_trajectory_cost(
    game: &GameDefinition,
    trajectory: &Trajectory,
    player: usize,
    theta: &DVector<f64>,
) -> Result<f64> {
    let dims = game.dims();
    trajectory.check(dims)?;
    if player >= dims.players() {
        return Err(Error::InvalidInput(format!("player {player} out of range")));
    }
    if theta.len() != dims.intent_dim {
        return Err(dim_err("intent", dims.intent_dim, theta.len()));
    }
    let t_len = dims.horizon;
    let total = match game {
        GameDefinition::Linear(g) => {
            let mut acc = 0.0;
            for t in 0..t_len {
                acc += g.costs[t][player].eval(
                    &trajectory.states[t],
                    Some(&trajectory.controls[t][player]),
                    theta,
                );
            }
            acc + g.costs[t_len][player].eval(&trajectory.states[t_len], None, theta)
        }
        GameDefinition::Nonlinear(g) => {
            let cost = &g.costs[player];
            let mut acc = 0.0;
            for t in 0..t_len {
                acc += cost.running(t, &trajectory.states[t], &trajectory.controls[t], theta);
            }
            acc + cost.terminal(&trajectory.states[t_len], theta)
        }
    };
    Ok(total)
}

/// Running cost of `player` at stage `t`.
pub fn running_cost(
    game: &GameDefinition,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
    player: usize,
    theta: &DVector<f64>,
) -> f64 {
    match game {
        GameDefinition::Linear(g) => g.costs[t][player].eval(x, Some(&u[player]), theta),
        GameDefinition::Nonlinear(g) => g.costs[player].running(t, x, u, theta),
    }
}

pub fn terminal_cost(
    game: &GameDefinition,
    x: &DVector<f64>,
    player: usize,
    theta: &DVector<f64>,
) -> f64 {
    match game {
        GameDefinition::Linear(g) => g.costs[g.dims.horizon][player].eval(x, None, theta),
        GameDefinition::Nonlinear(g) => g.costs[player].terminal(x, theta),
    }
}

/// Affine approximation `f(x, u) ≈ A x + Σ B_i u_i + d` about `(x, u)`.
pub fn linearize(
    dynamics: &dyn Dynamics,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
) -> Result<LinearStage> {
    let (a, b) = match dynamics.jacobians(t, x, u) {
        Some(j) => j,
        None => fd_jacobians(dynamics, t, x, u),
    };
    for (r, c) in iter_indices(&a) {
        if !a[(r, c)].is_finite() {
            return Err(Error::NonFinite {
                what: "dynamics Jacobian dF/dx".into(),
                location: format!("stage {t}, entry ({r}, {c})"),
            });
        }
    }
    for (i, bi) in b.iter().enumerate() {
        for (r, c) in iter_indices(bi) {
            if !bi[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    what: format!("dynamics Jacobian dF/du[{i}]"),
                    location: format!("stage {t}, entry ({r}, {c})"),
                });
            }
        }
    }
    let fx = dynamics.step(t, x, u);
    let mut d = fx - &a * x;
    for (bi, ui) in b.iter().zip(u) {
        d -= bi * ui;
    }
    if let Some(k) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "dynamics drift".into(),
            location: format!("stage {t}, coordinate {k}"),
        });
    }
    Ok(LinearStage { a, b, d })
}

/// Central-difference Jacobians with step `1e-6 · (1 + |value|)`.
pub fn fd_jacobians(
    dynamics: &dyn Dynamics,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = x.len();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = FD_STEP * (1.0 + x[k].abs());
        let mut xp = x.clone();
        xp[k] += h;
        let mut xm = x.clone();
        xm[k] -= h;
        let col = (dynamics.step(t, &xp, u) - dynamics.step(t, &xm, u)) / (2.0 * h);
        a.set_column(k, &col);
    }
    let mut bs = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let m = u[i].len();
        let mut b = DMatrix::zeros(n, m);
        for k in 0..m {
            let h = FD_STEP * (1.0 + u[i][k].abs());
            let mut up = u.to_vec();
            up[i][k] += h;
            let mut um = u.to_vec();
            um[i][k] -= h;
            let col = (dynamics.step(t, x, &up) - dynamics.step(t, x, &um)) / (2.0 * h);
            b.set_column(k, &col);
        }
        bs.push(b);
    }
    (a, bs)
}

/// Finite-difference expansion of a player's running cost (or terminal cost
/// when `t` is `None`, in which case `u` is ignored).
pub fn fd_cost_expansion(
    cost: &dyn PlayerCost,
    t: Option<usize>,
    x: &DVector<f64>,
    u: &[DVector<f64>],
    theta: &DVector<f64>,
) -> CostExpansion {
    let player = cost.player();
    let eval = |x: &DVector<f64>, u: &[DVector<f64>], th: &DVector<f64>| match t {
        Some(t) => cost.running(t, x, u, th),
        None => cost.terminal(x, th),
    };
    let n = x.len();
    let p = theta.len();
    let f0 = eval(x, u, theta);

    let mut grad_x = DVector::zeros(n);
    let mut hess_xx = DMatrix::zeros(n, n);
    for a in 0..n {
        let h = FD_STEP * (1.0 + x[a].abs());
        grad_x[a] = (eval(&bump(x, a, h), u, theta) - eval(&bump(x, a, -h), u, theta)) / (2.0 * h);
    }
    for a in 0..n {
        let ha = FD_STEP_SECOND * (1.0 + x[a].abs());
        hess_xx[(a, a)] = (eval(&bump(x, a, ha), u, theta) - 2.0 * f0
            + eval(&bump(x, a, -ha), u, theta))
            / (ha * ha);
        for b in (a + 1)..n {
            let hb = FD_STEP_SECOND * (1.0 + x[b].abs());
            let v = (eval(&bump(&bump(x, a, ha), b, hb), u, theta)
                - eval(&bump(&bump(x, a, ha), b, -hb), u, theta)
                - eval(&bump(&bump(x, a, -ha), b, hb), u, theta)
                + eval(&bump(&bump(x, a, -ha), b, -hb), u, theta))
                / (4.0 * ha * hb);
            hess_xx[(a, b)] = v;
            hess_xx[(b, a)] = v;
        }
    }

    let mut hess_x_theta = DMatrix::zeros(n, p);
    for a in 0..n {
        let ha = FD_STEP_SECOND * (1.0 + x[a].abs());
        for b in 0..p {
            let hb = FD_STEP_SECOND * (1.0 + theta[b].abs());
            hess_x_theta[(a, b)] = (eval(&bump(x, a, ha), u, &bump(theta, b, hb))
                - eval(&bump(x, a, ha), u, &bump(theta, b, -hb))
                - eval(&bump(x, a, -ha), u, &bump(theta, b, hb))
                + eval(&bump(x, a, -ha), u, &bump(theta, b, -hb)))
                / (4.0 * ha * hb);
        }
    }

    let (grad_u, hess_uu, hess_ux, hess_u_theta) = if t.is_some() && player < u.len() {
        let ui = &u[player];
        let m = ui.len();
        let with = |v: DVector<f64>| {
            let mut us = u.to_vec();
            us[player] = v;
            us
        };
        let mut g = DVector::zeros(m);
        let mut hm = DMatrix::zeros(m, m);
        for a in 0..m {
            let h = FD_STEP * (1.0 + ui[a].abs());
            g[a] = (eval(x, &with(bump(ui, a, h)), theta) - eval(x, &with(bump(ui, a, -h)), theta))
                / (2.0 * h);
        }
        for a in 0..m {
            let ha = FD_STEP_SECOND * (1.0 + ui[a].abs());
            hm[(a, a)] = (eval(x, &with(bump(ui, a, ha)), theta) - 2.0 * f0
                + eval(x, &with(bump(ui, a, -ha)), theta))
                / (ha * ha);
            for b in (a + 1)..m {
                let hb = FD_STEP_SECOND * (1.0 + ui[b].abs());
                let v = (eval(x, &with(bump(&bump(ui, a, ha), b, hb)), theta)
                    - eval(x, &with(bump(&bump(ui, a, ha), b, -hb)), theta)
                    - eval(x, &with(bump(&bump(ui, a, -ha), b, hb)), theta)
                    + eval(x, &with(bump(&bump(ui, a, -ha), b, -hb)), theta))
                    / (4.0 * ha * hb);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        let mut hx = DMatrix::zeros(m, n);
        let mut ht = DMatrix::zeros(m, p);
        for a in 0..m {
            let ha = FD_STEP_SECOND * (1.0 + ui[a].abs());
            for b in 0..n {
                let hb = FD_STEP_SECOND * (1.0 + x[b].abs());
                hx[(a, b)] = (eval(&bump(x, b, hb), &with(bump(ui, a, ha)), theta)
                    - eval(&bump(x, b, -hb), &with(bump(ui, a, ha)), theta)
                    - eval(&bump(x, b, hb), &with(bump(ui, a, -ha)), theta)
                    + eval(&bump(x, b, -hb), &with(bump(ui, a, -ha)), theta))
                    / (4.0 * ha * hb);
            }
            for b in 0..p {
                let hb = FD_STEP_SECOND * (1.0 + theta[b].abs());
                ht[(a, b)] = (eval(x, &with(bump(ui, a, ha)), &bump(theta, b, hb))
                    - eval(x, &with(bump(ui, a, ha)), &bump(theta, b, -hb))
                    - eval(x, &with(bump(ui, a, -ha)), &bump(theta, b, hb))
                    + eval(x, &with(bump(ui, a, -ha)), &bump(theta, b, -hb)))
                    / (4.0 * ha * hb);
            }
        }
        (g, hm, hx, ht)
    } else {
        (
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, n),
            DMatrix::zeros(0, p),
        )
    };

    CostExpansion {
        grad_x,
        hess_xx,
        grad_u,
        hess_uu,
        hess_x_theta,
        hess_ux,
        hess_u_theta,
    }
}

/// Second-order expansion of a player's running cost about `(x, u)` at intent
/// `theta`, re-expressed in absolute coordinates.
///
/// The state Hessian is symmetrized and floored at [`HESSIAN_FLOOR`]; the intent
/// enters through the mixed derivative so the linear state term is affine in θ.
pub fn quadraticize(
    cost: &dyn PlayerCost,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
    theta: &DVector<f64>,
) -> Result<QuadraticCostStage> {
    let exp = cost
        .running_expansion(t, x, u, theta)
        .unwrap_or_else(|| fd_cost_expansion(cost, Some(t), x, u, theta));
    expansion_to_stage(
        &exp,
        x,
        Some(&u[cost.player()]),
        theta,
        &format!("stage {t} player {}", cost.player()),
    )
}

pub fn quadraticize_terminal(
    cost: &dyn PlayerCost,
    x: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<QuadraticCostStage> {
    let exp = cost
        .terminal_expansion(x, theta)
        .unwrap_or_else(|| fd_cost_expansion(cost, None, x, &[], theta));
    expansion_to_stage(
        &exp,
        x,
        None,
        theta,
        &format!("terminal player {}", cost.player()),
    )
}

fn expansion_to_stage(
    exp: &CostExpansion,
    x: &DVector<f64>,
    u: Option<&DVector<f64>>,
    theta: &DVector<f64>,
    ctx: &str,
) -> Result<QuadraticCostStage> {
    let finite = all_finite_v(&exp.grad_x)
        && all_finite_m(&exp.hess_xx)
        && all_finite_v(&exp.grad_u)
        && all_finite_m(&exp.hess_uu)
        && all_finite_m(&exp.hess_x_theta)
        && all_finite_m(&exp.hess_ux)
        && all_finite_m(&exp.hess_u_theta);
    if !finite {
        return Err(Error::NonFinite {
            what: "cost Hessian".into(),
            location: ctx.into(),
        });
    }
    let n = x.len();
    let q = floor_eigenvalues(&(&exp.hess_xx * 0.5), HESSIAN_FLOOR);
    let mut linear = &exp.grad_x - 2.0 * &q * x;
    let l_theta = exp.hess_x_theta.clone();
    let (r, control_linear, cross, control_intent) = match u {
        Some(u) => {
            let r = symmetrize(&(&exp.hess_uu * 0.5));
            let cross = &exp.hess_ux * 0.5;
            linear -= 2.0 * cross.transpose() * u;
            let lin = &exp.grad_u - 2.0 * &r * u - 2.0 * &cross * x - &exp.hess_u_theta * theta;
            (r, lin, cross, exp.hess_u_theta.clone())
        }
        None => (
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DMatrix::zeros(0, theta.len()),
        ),
    };
    let ell0 = linear - &l_theta * theta;
    Ok(QuadraticCostStage {
        q,
        r,
        ell0,
        l_theta,
        control_linear,
        cross,
        control_intent,
    })
}

/// Local LQ game of a nonlinear game about a nominal trajectory.
pub fn local_lq_game(
    game: &NonlinearGame,
    nominal: &Trajectory,
    theta: &DVector<f64>,
) -> Result<LinearGame> {
    let t_len = game.dims.horizon;
    let mut stages = Vec::with_capacity(t_len);
    let mut costs = Vec::with_capacity(t_len + 1);
    for t in 0..t_len {
        let x = &nominal.states[t];
        let u = &nominal.controls[t];
        stages.push(linearize(game.dynamics.as_ref(), t, x, u)?);
        costs.push(
            game.costs
                .iter()
                .map(|c| quadraticize(c.as_ref(), t, x, u, theta))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    costs.push(
        game.costs
            .iter()
            .map(|c| quadraticize_terminal(c.as_ref(), &nominal.states[t_len], theta))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(LinearGame {
        dims: game.dims.clone(),
        stages,
        costs,
        intent_space: game.intent_space.clone(),
    })
}

struct LinearDynamics {
    game: Arc<LinearGame>,
}

impl Dynamics for LinearDynamics {
    fn step(&self, t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
        self.game.stages[t].apply(x, u)
    }

    fn jacobians(
        &self,
        t: usize,
        _x: &DVector<f64>,
        _u: &[DVector<f64>],
    ) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let s = &self.game.stages[t];
        Some((s.a.clone(), s.b.clone()))
    }
}

struct QuadraticPlayerCost {
    game: Arc<LinearGame>,
    player: usize,
}

impl QuadraticPlayerCost {
    fn expansion(
        &self,
        c: &QuadraticCostStage,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
        theta: &DVector<f64>,
    ) -> CostExpansion {
        let mut grad_x = 2.0 * &c.q * x + c.linear_term(theta);
        let (grad_u, hess_uu, hess_ux, hess_u_theta) = match u {
            Some(u) => {
                grad_x += 2.0 * c.cross.transpose() * u;
                (
                    2.0 * &c.r * u + 2.0 * &c.cross * x + c.control_linear_term(theta),
                    2.0 * &c.r,
                    2.0 * &c.cross,
                    c.control_intent.clone(),
                )
            }
            None => (
                DVector::zeros(0),
                DMatrix::zeros(0, 0),
                DMatrix::zeros(0, x.len()),
                DMatrix::zeros(0, theta.len()),
            ),
        };
        CostExpansion {
            grad_x,
            hess_xx: 2.0 * &c.q,
            grad_u,
            hess_uu,
            hess_x_theta: c.l_theta.clone(),
            hess_ux,
            hess_u_theta,
        }
    }
}

impl PlayerCost for QuadraticPlayerCost {
    fn player(&self) -> usize {
        self.player
    }

    fn running(&self, t: usize, x: &DVector<f64>, u: &[DVector<f64>], theta: &DVector<f64>) -> f64 {
        self.game.costs[t][self.player].eval(x, Some(&u[self.player]), theta)
    }

    fn terminal(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let t_len = self.game.dims.horizon;
        self.game.costs[t_len][self.player].eval(x, None, theta)
    }

    fn running_expansion(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
        theta: &DVector<f64>,
    ) -> Option<CostExpansion> {
        Some(self.expansion(
            &self.game.costs[t][self.player],
            x,
            Some(&u[self.player]),
            theta,
        ))
    }

    fn terminal_expansion(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Option<CostExpansion> {
        let t_len = self.game.dims.horizon;
        Some(self.expansion(&self.game.costs[t_len][self.player], x, None, theta))
    }
}

/// Largest deviation of analytic dynamics Jacobians from central differences;
/// `None` when the dynamics provide no analytic Jacobians.
pub fn jacobian_fd_error(
    dynamics: &dyn Dynamics,
    t: usize,
    x: &DVector<f64>,
    u: &[DVector<f64>],
) -> Option<f64> {
    let (a, b) = dynamics.jacobians(t, x, u)?;
    let (fa, fb) = fd_jacobians(dynamics, t, x, u);
    let mut err = (a - fa).amax();
    for (bi, fbi) in b.iter().zip(&fb) {
        err = err.max((bi - fbi).amax());
    }
    Some(err)
}

/// Largest deviation of an analytic cost expansion from central differences.
///
/// Gradients are checked against differences of the cost; second derivatives
/// against differences of the analytic gradients, which avoids the truncation
/// error of second-order stencils. `None` when the cost provides no analytic
/// expansion.
pub fn expansion_fd_error(
    cost: &dyn PlayerCost,
    t: Option<usize>,
    x: &DVector<f64>,
    u: &[DVector<f64>],
    theta: &DVector<f64>,
) -> Option<f64> {
    let expand = |x: &DVector<f64>, u: &[DVector<f64>], th: &DVector<f64>| match t {
        Some(t) => cost.running_expansion(t, x, u, th),
        None => cost.terminal_expansion(x, th),
    };
    let value = |x: &DVector<f64>, u: &[DVector<f64>], th: &DVector<f64>| match t {
        Some(t) => cost.running(t, x, u, th),
        None => cost.terminal(x, th),
    };
    let e = expand(x, u, theta)?;
    let mut err: f64 = 0.0;
    for a in 0..x.len() {
        let h = FD_STEP * (1.0 + x[a].abs());
        let (xp, xm) = (bump(x, a, h), bump(x, a, -h));
        let g = (value(&xp, u, theta) - value(&xm, u, theta)) / (2.0 * h);
        err = err.max((g - e.grad_x[a]).abs());
        let (ep, em) = (expand(&xp, u, theta)?, expand(&xm, u, theta)?);
        let col = (&ep.grad_x - &em.grad_x) / (2.0 * h);
        err = err.max((col - e.hess_xx.column(a)).amax());
        if t.is_some() {
            let col = (&ep.grad_u - &em.grad_u) / (2.0 * h);
            err = err.max((col - e.hess_ux.column(a)).amax());
        }
    }
    for b in 0..theta.len() {
        let h = FD_STEP * (1.0 + theta[b].abs());
        let (ep, em) = (
            expand(x, u, &bump(theta, b, h))?,
            expand(x, u, &bump(theta, b, -h))?,
        );
        let col = (&ep.grad_x - &em.grad_x) / (2.0 * h);
        err = err.max((col - e.hess_x_theta.column(b)).amax());
        if t.is_some() {
            let col = (&ep.grad_u - &em.grad_u) / (2.0 * h);
            err = err.max((col - e.hess_u_theta.column(b)).amax());
        }
    }
    if t.is_some() {
        let i = cost.player();
        for a in 0..u[i].len() {
            let h = FD_STEP * (1.0 + u[i][a].abs());
            let mut up = u.to_vec();
            up[i][a] += h;
            let mut um = u.to_vec();
            um[i][a] -= h;
            let g = (value(x, &up, theta) - value(x, &um, theta)) / (2.0 * h);
            err = err.max((g - e.grad_u[a]).abs());
            let (ep, em) = (expand(x, &up, theta)?, expand(x, &um, theta)?);
            let col = (&ep.grad_u - &em.grad_u) / (2.0 * h);
            err = err.max((col - e.hess_uu.column(a)).amax());
        }
    }
    Some(err)
}

fn bump(v: &DVector<f64>, k: usize, h: f64) -> DVector<f64> {
    let mut out = v.clone();
    out[k] += h;
    out
}

fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn iter_indices(m: &DMatrix<f64>) -> impl Iterator<Item = (usize, usize)> {
    let (r, c) = m.shape();
    (0..r).flat_map(move |i| (0..c).map(move |j| (i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_game(q: f64, r: f64, qt: f64, l_theta: f64, horizon: usize) -> LinearGame {
        let dims = GameDimensions::new(1, vec![1, 1], 1, horizon).unwrap();
        let stage = LinearStage::new(
            DMatrix::from_element(1, 1, 1.0),
            vec![DMatrix::from_element(1, 1, 1.0); 2],
        );
        let running = |lt: f64| {
            QuadraticCostStage::new(
                DMatrix::from_element(1, 1, q),
                DMatrix::from_element(1, 1, r),
                1,
            )
            .with_linear(DVector::zeros(1), DMatrix::from_element(1, 1, lt))
        };
        let mut costs = vec![vec![running(l_theta), running(0.0)]; horizon];
        costs.push(vec![
            QuadraticCostStage::terminal(DMatrix::from_element(1, 1, qt), 1)
                .with_linear(DVector::zeros(1), DMatrix::from_element(1, 1, l_theta)),
            QuadraticCostStage::terminal(DMatrix::from_element(1, 1, qt), 1),
        ]);
        LinearGame::new(dims, vec![stage; horizon], costs, IntentSpace::unbounded(1)).unwrap()
    }

    fn traj(xs: &[f64], us: &[f64]) -> Trajectory {
        Trajectory {
            states: xs.iter().map(|&v| DVector::from_element(1, v)).collect(),
            controls: us
                .iter()
                .map(|&v| vec![DVector::from_element(1, v), DVector::zeros(1)])
                .collect(),
        }
    }

    #[test]
    fn zero_trajectory_costs_nothing() {
        let game = GameDefinition::Linear(scalar_game(1.0, 1.0, 1.0, 0.0, 2));
        let c = evaluate_trajectory_cost(
            &game,
            &traj(&[0.0, 0.0, 0.0], &[0.0, 0.0]),
            0,
            &DVector::zeros(1),
        )
        .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn hand_summed_stage_costs() {
        let game = GameDefinition::Linear(scalar_game(1.0, 1.0, 1.0, 0.0, 1));
        let c = evaluate_trajectory_cost(&game, &traj(&[1.0, 1.0], &[1.0]), 0, &DVector::zeros(1))
            .unwrap();
        assert_abs_diff_eq!(c, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn intent_linear_term() {
        let game = GameDefinition::Linear(scalar_game(0.0, 1.0, 0.0, 1.0, 1));
        let c = evaluate_trajectory_cost(
            &game,
            &traj(&[1.0, 0.0], &[0.0]),
            0,
            &DVector::from_element(1, 2.0),
        )
        .unwrap();
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_names_stage() {
        let game = GameDefinition::Linear(scalar_game(1.0, 1.0, 1.0, 0.0, 2));
        let mut tr = traj(&[0.0, 0.0, 0.0], &[0.0, 0.0]);
        tr.states[1] = DVector::zeros(2);
        let err = evaluate_trajectory_cost(&game, &tr, 0, &DVector::zeros(1)).unwrap_err();
        assert!(err.to_string().contains("stage 1"), "{err}");
    }

    #[test]
    fn rejects_indefinite_r() {
        let dims = GameDimensions::new(1, vec![1, 1], 1, 1).unwrap();
        let stage = LinearStage::new(DMatrix::identity(1, 1), vec![DMatrix::identity(1, 1); 2]);
        let bad = QuadraticCostStage::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            1,
        );
        let good = QuadraticCostStage::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1);
        let term = QuadraticCostStage::terminal(DMatrix::identity(1, 1), 1);
        let err = LinearGame::new(
            dims,
            vec![stage],
            vec![vec![bad, good], vec![term.clone(), term]],
            IntentSpace::unbounded(1),
        )
        .unwrap_err();
        assert!(err.to_string().contains("positive definite"));
    }

    #[test]
    fn dimensions_require_two_players() {
        assert!(GameDimensions::new(2, vec![1], 1, 3).is_err());
        assert!(GameDimensions::new(0, vec![1, 1], 1, 3).is_err());
        assert!(GameDimensions::new(2, vec![1, 0], 1, 3).is_err());
    }

    struct Affine;
    impl Dynamics for Affine {
        fn step(&self, _t: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> DVector<f64> {
            2.0 * x + &u[0]
        }
    }

    #[test]
    fn linear_map_is_its_own_linearization() {
        let x = DVector::from_element(1, 0.7);
        let u = vec![DVector::from_element(1, -0.3)];
        let lin = linearize(&Affine, 0, &x, &u).unwrap();
        assert_abs_diff_eq!(lin.a[(0, 0)], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(lin.b[0][(0, 0)], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(lin.d[0], 0.0, epsilon = 1e-8);
    }

    struct Blowup;
    impl Dynamics for Blowup {
        fn step(&self, _t: usize, x: &DVector<f64>, _u: &[DVector<f64>]) -> DVector<f64> {
            x.map(|v| if v > 0.0 { f64::NAN } else { v })
        }
    }

    #[test]
    fn non_finite_jacobian_names_coordinate() {
        let err = linearize(
            &Blowup,
            3,
            &DVector::from_element(2, 1.0),
            &[DVector::zeros(1)],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stage 3") && msg.contains("(0, 0)"), "{msg}");
    }

    struct Tracking;
    impl PlayerCost for Tracking {
        fn player(&self) -> usize {
            0
        }
        fn running(
            &self,
            _t: usize,
            x: &DVector<f64>,
            u: &[DVector<f64>],
            th: &DVector<f64>,
        ) -> f64 {
            (x[0] - th[0]).powi(2) + u[0][0].powi(2)
        }
        fn terminal(&self, x: &DVector<f64>, th: &DVector<f64>) -> f64 {
            (x[0] - th[0]).powi(2)
        }
    }

    #[test]
    fn tracking_cost_expansion_by_hand() {
        let q = quadraticize(
            &Tracking,
            0,
            &DVector::zeros(1),
            &[DVector::zeros(1)],
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(q.q[(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            q.linear_term(&DVector::from_element(1, 1.0))[0],
            -2.0,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(q.l_theta[(0, 0)], -2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(q.ell0[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(q.r[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quadratic_cost_recovered_exactly() {
        let g = scalar_game(3.0, 2.0, 1.0, 0.5, 2).as_nonlinear();
        let x = DVector::from_element(1, -1.3);
        let u = vec![DVector::from_element(1, 0.4), DVector::from_element(1, 0.2)];
        let q = quadraticize(
            g.costs[0].as_ref(),
            0,
            &x,
            &u,
            &DVector::from_element(1, 0.9),
        )
        .unwrap();
        assert_abs_diff_eq!(q.q[(0, 0)], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.r[(0, 0)], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.l_theta[(0, 0)], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(q.ell0[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.control_linear[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn state_hessian_is_floored() {
        struct Concave;
        impl PlayerCost for Concave {
            fn player(&self) -> usize {
                0
            }
            fn running(
                &self,
                _t: usize,
                x: &DVector<f64>,
                u: &[DVector<f64>],
                _th: &DVector<f64>,
            ) -> f64 {
                -x[0] * x[0] + u[0][0] * u[0][0]
            }
            fn terminal(&self, _x: &DVector<f64>, _th: &DVector<f64>) -> f64 {
                0.0
            }
        }
        let q = quadraticize(
            &Concave,
            0,
            &DVector::from_element(1, 0.5),
            &[DVector::zeros(1)],
            &DVector::zeros(1),
        )
        .unwrap();
        assert_abs_diff_eq!(q.q[(0, 0)], HESSIAN_FLOOR, epsilon = 1e-15);
    }
}
