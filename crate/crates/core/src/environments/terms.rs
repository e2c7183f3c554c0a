//! Cost building blocks with exact first and second derivatives.

use nalgebra::{DMatrix, DVector};

use crate::model::{CostExpansion, PlayerCost};

/// `weight · (Σ_k a_k x_k − offset − theta_coef · θ₀)²`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Penalty {
    pub coefs: Vec<(usize, f64)>,
    pub weight: f64,
    pub offset: f64,
    pub theta_coef: f64,
}

impl Penalty {
    /// `weight · (x_index − offset − theta_coef · θ)²`.
    pub fn track(index: usize, weight: f64, offset: f64, theta_coef: f64) -> Self {
        Self {
            coefs: vec![(index, 1.0)],
            weight,
            offset,
            theta_coef,
        }
    }

    pub fn residual(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.coefs.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
            - self.offset
            - self.theta_coef * theta[0]
    }

    fn accumulate(&self, x: &DVector<f64>, theta: &DVector<f64>, e: &mut CostExpansion) {
        let r = self.residual(x, theta);
        for &(i, ai) in &self.coefs {
            e.grad_x[i] += 2.0 * self.weight * r * ai;
            e.hess_x_theta[(i, 0)] -= 2.0 * self.weight * ai * self.theta_coef;
            for &(j, aj) in &self.coefs {
                e.hess_xx[(i, j)] += 2.0 * self.weight * ai * aj;
            }
        }
    }
}

/// Quadratic hinge `weight · s(radius − d)²` on the smoothed distance
/// `d = sqrt(‖p_a − p_b‖² + smoothing²)` between two planar positions, with
/// the soft plus `s(z) = (z + sqrt(z² + κ²)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SoftCollision {
    pub radius: f64,
    pub weight: f64,
    pub smoothing: f64,
    pub kappa: f64,
}

impl SoftCollision {
    /// Value and first two derivatives in the smoothed distance.
    fn radial(&self, d: f64) -> (f64, f64, f64) {
        let z = self.radius - d;
        let root = (z * z + self.kappa * self.kappa).sqrt();
        let s = 0.5 * (z + root);
        let s1 = s / root;
        let s2 = 0.5 * self.kappa * self.kappa / root.powi(3);
        (
            self.weight * s * s,
            -2.0 * self.weight * s * s1,
            2.0 * self.weight * (s1 * s1 + s * s2),
        )
    }

    /// Value, gradient and Hessian with respect to the offset `p_a − p_b`.
    pub fn eval(&self, dx: f64, dy: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        radial_expansion(dx, dy, self.smoothing, |d| self.radial(d))
    }
}

/// `weight · (d − length)²` on the smoothed distance between two planar
/// positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Spacing {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub weight: f64,
    pub smoothing: f64,
}

impl Spacing {
    pub fn eval(&self, dx: f64, dy: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        radial_expansion(dx, dy, self.smoothing, |d| {
            let r = d - self.length;
            (
                self.weight * r * r,
                2.0 * self.weight * r,
                2.0 * self.weight,
            )
        })
    }
}

/// Chain rule through `d = sqrt(dx² + dy² + smoothing²)` for a function of
/// `d` given as `(value, first, second)` derivatives.
fn radial_expansion(
    dx: f64,
    dy: f64,
    smoothing: f64,
    f: impl Fn(f64) -> (f64, f64, f64),
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let d = (dx * dx + dy * dy + smoothing * smoothing).sqrt();
    let (c, cd, cdd) = f(d);
    let n = [dx / d, dy / d];
    let grad = [cd * n[0], cd * n[1]];
    let mut hess = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let eye = if i == j { 1.0 } else { 0.0 };
            hess[i][j] = cdd * n[i] * n[j] + cd * (eye - n[i] * n[j]) / d;
        }
    }
    (c, grad, hess)
}

/// Adds a function of the offset between positions starting at indices `a`
/// and `b`.
fn scatter_pair(
    x: &DVector<f64>,
    a: usize,
    b: usize,
    e: &mut CostExpansion,
    f: impl Fn(f64, f64) -> (f64, [f64; 2], [[f64; 2]; 2]),
) -> f64 {
    let (c, g, h) = f(x[a] - x[b], x[a + 1] - x[b + 1]);
    for i in 0..2 {
        e.grad_x[a + i] += g[i];
        e.grad_x[b + i] -= g[i];
        for j in 0..2 {
            e.hess_xx[(a + i, a + j)] += h[i][j];
            e.hess_xx[(b + i, b + j)] += h[i][j];
            e.hess_xx[(a + i, b + j)] -= h[i][j];
            e.hess_xx[(b + i, a + j)] -= h[i][j];
        }
    }
    c
}

/// Sum of penalties, pairwise collision hinges and a control effort term.
#[derive(Debug, Clone)]
pub(crate) struct TermCost {
    pub player: usize,
    pub running: Vec<Penalty>,
    pub terminal: Vec<Penalty>,
    /// Per-component weights of `Σ_k r_k (u_player)_k²`.
    pub effort: Vec<f64>,
    /// Position index pairs subject to `collision`.
    pub pairs: Vec<(usize, usize)>,
    pub collision: Option<SoftCollision>,
    /// Applied at every stage including the terminal one.
    pub spacing: Vec<Spacing>,
}

impl TermCost {
    fn expansion(
        &self,
        terms: &[Penalty],
        x: &DVector<f64>,
        theta: &DVector<f64>,
        m: usize,
    ) -> (f64, CostExpansion) {
        let n = x.len();
        let mut e = CostExpansion {
            grad_x: DVector::zeros(n),
            hess_xx: DMatrix::zeros(n, n),
            grad_u: DVector::zeros(m),
            hess_uu: DMatrix::zeros(m, m),
            hess_x_theta: DMatrix::zeros(n, theta.len()),
            hess_ux: DMatrix::zeros(m, n),
            hess_u_theta: DMatrix::zeros(m, theta.len()),
        };
        let mut c = 0.0;
        for p in terms {
            c += p.weight * p.residual(x, theta).powi(2);
            p.accumulate(x, theta, &mut e);
        }
        if let Some(col) = &self.collision {
            for &(a, b) in &self.pairs {
                c += scatter_pair(x, a, b, &mut e, |dx, dy| col.eval(dx, dy));
            }
        }
        for sp in &self.spacing {
            c += scatter_pair(x, sp.a, sp.b, &mut e, |dx, dy| sp.eval(dx, dy));
        }
        (c, e)
    }
}

impl PlayerCost for TermCost {
    fn player(&self) -> usize {
        self.player
    }

    fn running(
        &self,
        _t: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
        theta: &DVector<f64>,
    ) -> f64 {
        let ui = &u[self.player];
        self.expansion(&self.running, x, theta, 0).0
            + self
                .effort
                .iter()
                .zip(ui.iter())
                .map(|(r, v)| r * v * v)
                .sum::<f64>()
    }

    fn terminal(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.expansion(&self.terminal, x, theta, 0).0
    }

    fn running_expansion(
        &self,
        _t: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
        theta: &DVector<f64>,
    ) -> Option<CostExpansion> {
        let ui = &u[self.player];
        let m = ui.len();
        let (_, mut e) = self.expansion(&self.running, x, theta, m);
        for (k, r) in self.effort.iter().enumerate() {
            e.grad_u[k] = 2.0 * r * ui[k];
            e.hess_uu[(k, k)] = 2.0 * r;
        }
        Some(e)
    }

    fn terminal_expansion(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Option<CostExpansion> {
        Some(self.expansion(&self.terminal, x, theta, 0).1)
    }
}
