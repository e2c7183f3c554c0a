//! Estimate dynamics of the uncertain players: gradient-MLE point updates,
//! closed-form Gaussian updates, and the contraction diagnostics that certify
//! exponential convergence of point estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    asymmetry, condition_number, floor_eigenvalues, max_singular_value, min_eigenvalue,
};
use crate::lq_nash::PlayerPolicy;

/// Covariance eigenvalue floor.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.shape() != (p, p) {
            return Err(dim_err(
                "belief covariance",
                format!("{p}x{p}"),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if asymmetry(&cov) > 1e-10 {
            return Err(Error::InvalidInput(
                "belief covariance is not symmetric".into(),
            ));
        }
        if min_eigenvalue(&cov) < -1e-10 {
            return Err(Error::InvalidInput(
                "belief covariance is not positive semidefinite".into(),
            ));
        }
        Ok(Self {
            mean,
            cov: floor_eigenvalues(&cov, COVARIANCE_FLOOR),
        })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }
}

/// An uncertain player's estimate of the intent.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Point(DVector<f64>),
    Gaussian(GaussianBelief),
}

impl Belief {
    pub fn mean(&self) -> &DVector<f64> {
        match self {
            Belief::Point(v) => v,
            Belief::Gaussian(g) => &g.mean,
        }
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        match self {
            Belief::Point(_) => None,
            Belief::Gaussian(g) => Some(&g.cov),
        }
    }
}

/// Which estimate dynamics the uncertain players run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    /// Gradient MLE with step size `alpha`.
    Mle { alpha: f64 },
    /// Closed-form Gaussian update with likelihood `N(π¹(x; θ), σ² I)`.
    Gaussian { observation_noise: f64 },
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::Mle { alpha } => check_step_size(alpha),
            EstimatorKind::Gaussian { observation_noise } => {
                if observation_noise > 0.0 && observation_noise.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "observation noise multiplier must be positive, got {observation_noise}"
                    )))
                }
            }
        }
    }
}

pub(crate) fn check_step_size(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "step size alpha must lie in [0, 1), got {alpha}"
        )))
    }
}

/// Jacobian of player 1's policy in θ, `∇_θ π¹ = -K_θ`.
pub fn policy_intent_jacobian(policy: &PlayerPolicy) -> DMatrix<f64> {
    -&policy.intent_gain
}

fn check_observation(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    u1: &DVector<f64>,
    policy: &PlayerPolicy,
) -> Result<()> {
    if policy.intent_gain.ncols() != theta.len() {
        return Err(dim_err("estimate", policy.intent_gain.ncols(), theta.len()));
    }
    if policy.state_gain.ncols() != x.len() {
        return Err(dim_err(
            "observed state",
            policy.state_gain.ncols(),
            x.len(),
        ));
    }
    if policy.state_gain.nrows() != u1.len() {
        return Err(dim_err(
            "observed control",
            policy.state_gain.nrows(),
            u1.len(),
        ));
    }
    Ok(())
}

/// One gradient-MLE step on `½‖u¹ − π¹(x; θ̂)‖²`.
///
/// With `u¹ = π¹(x; θ)` this is `θ̂ + α K_θᵀK_θ (θ − θ̂)`.
pub fn mle_update(
    estimate: &DVector<f64>,
    x: &DVector<f64>,
    u1: &DVector<f64>,
    policy: &PlayerPolicy,
    alpha: f64,
) -> Result<DVector<f64>> {
    check_step_size(alpha)?;
    check_observation(estimate, x, u1, policy)?;
    let innovation = u1 - policy.eval(x, estimate);
    Ok(estimate + alpha * policy_intent_jacobian(policy).transpose() * innovation)
}

/// Gain `L` such that the belief mean moves by `L (u¹ − π¹(x; μ))`, and the
/// posterior covariance it implies.
pub fn gaussian_gain(
    cov: &DMatrix<f64>,
    policy: &PlayerPolicy,
    observation_noise: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = policy_intent_jacobian(policy);
    let m = g.nrows();
    let s = DMatrix::identity(m, m) * observation_noise + &g * cov * g.transpose();
    let condition = condition_number(&s);
    if !(condition <= 1e12) {
        return Err(Error::InvalidInput(format!(
            "innovation covariance is singular (condition number {condition:.3e})"
        )));
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("innovation covariance is singular".into()))?;
    let gain = cov * g.transpose() * s_inv;
    let posterior = floor_eigenvalues(&(cov - &gain * &g * cov), COVARIANCE_FLOOR);
    Ok((gain, posterior))
}

/// Bayesian update of a Gaussian belief after observing `(x, u¹)`.
pub fn gaussian_update(
    belief: &GaussianBelief,
    x: &DVector<f64>,
    u1: &DVector<f64>,
    policy: &PlayerPolicy,
    observation_noise: f64,
) -> Result<GaussianBelief> {
    check_observation(&belief.mean, x, u1, policy)?;
    let (gain, cov) = gaussian_gain(&belief.cov, policy, observation_noise)?;
    let innovation = u1 - policy.eval(x, &belief.mean);
    Ok(GaussianBelief {
        mean: &belief.mean + gain * innovation,
        cov,
    })
}

pub fn expected_intent(belief: &GaussianBelief) -> DVector<f64> {
    belief.mean.clone()
}

/// Applies the estimator to any belief representation.
pub fn update_belief(
    belief: &Belief,
    kind: EstimatorKind,
    x: &DVector<f64>,
    u1: &DVector<f64>,
    policy: &PlayerPolicy,
) -> Result<Belief> {
    match (belief, kind) {
        (Belief::Point(est), EstimatorKind::Mle { alpha }) => {
            Ok(Belief::Point(mle_update(est, x, u1, policy, alpha)?))
        }
        (Belief::Gaussian(g), EstimatorKind::Gaussian { observation_noise }) => Ok(
            Belief::Gaussian(gaussian_update(g, x, u1, policy, observation_noise)?),
        ),
        _ => Err(Error::InvalidInput(
            "belief representation does not match the estimator".into(),
        )),
    }
}

/// Per-stage mean gains `L_t` for beliefs that start from `initial`.
///
/// Both estimators move the mean by `L_t (u¹ − π¹(x; μ))` with `L_t`
/// independent of the state, which makes the belief dynamics affine.
pub fn gain_schedule(
    kind: EstimatorKind,
    initial: &Belief,
    player1: &[PlayerPolicy],
) -> Result<Vec<DMatrix<f64>>> {
    match (kind, initial) {
        (EstimatorKind::Mle { alpha }, Belief::Point(_)) => {
            check_step_size(alpha)?;
            Ok(player1
                .iter()
                .map(|p| policy_intent_jacobian(p).transpose() * alpha)
                .collect())
        }
        (EstimatorKind::Gaussian { observation_noise }, Belief::Gaussian(g)) => {
            let mut cov = g.cov.clone();
            let mut gains = Vec::with_capacity(player1.len());
            for p in player1 {
                let (gain, next) = gaussian_gain(&cov, p, observation_noise)?;
                gains.push(gain);
                cov = next;
            }
            Ok(gains)
        }
        _ => Err(Error::InvalidInput(
            "belief representation does not match the estimator".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    /// `max_t σ_max(I − α K_θᵀK_θ)`.
    pub factor: f64,
    /// `min_t λ_min(K_θᵀK_θ)`; must be positive for the certificate.
    pub min_eigenvalue: f64,
}

impl ContractionReport {
    pub fn certifies(&self) -> bool {
        self.factor < 1.0 && self.min_eigenvalue > 0.0
    }
}

pub fn contraction_factor(player1: &[PlayerPolicy], alpha: f64) -> Result<ContractionReport> {
    if player1.is_empty() {
        return Err(Error::InvalidInput(
            "contraction factor needs at least one policy stage".into(),
        ));
    }
    check_step_size(alpha)?;
    let mut factor: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for pol in player1 {
        let k = &pol.intent_gain;
        let ktk = k.transpose() * k;
        let p = ktk.nrows();
        factor = factor.max(max_singular_value(
            &(DMatrix::identity(p, p) - &ktk * alpha),
        ));
        min_eig = min_eig.min(min_eigenvalue(&ktk));
    }
    Ok(ContractionReport {
        factor,
        min_eigenvalue: min_eig,
    })
}
