//! SC-AdaGrad expert bound to one grid learning rate.
//!
//! Each round the expert receives the meta play `x_t` and gradient `g_t`,
//! differentiates its surrogate at its own iterate, accumulates the squared
//! surrogate gradient into `v`, and takes a projected step in the geometry of
//! `A_t = diag(v_t) + delta I` with step size `alpha = 1 / (4 eta^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, weighted_norm_sq, DecisionSet, DiagonalMatrix, RealVector};
use crate::surrogate::{surrogate_grad, SurrogateContext};

pub const DEFAULT_DELTA: f64 = 1e-8;

/// Slack tolerance for the preconditioner-growth check.
pub const LEMMA2_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertState {
    pub eta: f64,
    pub alpha: f64,
    pub x: RealVector,
    /// Running coordinate-wise sum of squared surrogate gradients.
    pub v: RealVector,
    pub delta: f64,
}

/// Everything one expert step touched, for diagnostics.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub x_prev: RealVector,
    pub x_next: RealVector,
    pub surrogate_grad: RealVector,
    /// `A_{t-1}`; `delta I` on the first round.
    pub a_prev: DiagonalMatrix,
    pub a_curr: DiagonalMatrix,
    pub projection_active: bool,
    /// `<grad s_t, A_t^{-1} grad s_t>`.
    pub inverse_quadratic_form: f64,
}

pub fn expert_init(eta: f64, dim: usize, delta: f64, set: &DecisionSet) -> Result<ExpertState> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config("delta", format!("must be positive, got {delta}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::config("eta", format!("must be positive, got {eta}")));
    }
    check_dim(set.dim(), dim)?;
    let origin = RealVector::zeros(dim);
    let x = if set.contains(&origin, 0.0) {
        origin
    } else {
        set.project_euclidean(&origin)?
    };
    Ok(ExpertState {
        eta,
        alpha: 1.0 / (4.0 * eta * eta),
        x,
        v: RealVector::zeros(dim),
        delta,
    })
}

impl ExpertState {
    pub fn predict(&self) -> &RealVector {
        &self.x
    }

    pub fn preconditioner(&self) -> Result<DiagonalMatrix> {
        DiagonalMatrix::shifted(&self.v, self.delta)
    }

    /// One round of the expert update against meta play `played` and loss
    /// gradient `gradient`.
    pub fn step(
        &mut self,
        played: &RealVector,
        gradient: &RealVector,
        set: &DecisionSet,
        gradient_bound: f64,
    ) -> Result<StepTrace> {
        check_dim(self.x.dim(), played.dim())?;
        check_dim(self.x.dim(), gradient.dim())?;
        if !gradient.is_finite() {
            return Err(Error::NonFinite("loss gradient".into()));
        }
        let ctx = SurrogateContext::new(self.eta, gradient_bound, played, gradient);
        let grad = surrogate_grad(&ctx, &self.x);
        if !grad.is_finite() {
            return Err(Error::NonFinite("surrogate gradient".into()));
        }

        let a_prev = self.preconditioner()?;
        let v_next = self.v.add(&grad.hadamard(&grad));
        let a_curr = DiagonalMatrix::shifted(&v_next, self.delta)?;

        let candidate = self.x.add_scaled(-self.alpha, &a_curr.solve(&grad));
        let projection = set.project_weighted_flagged(&candidate, &a_curr)?;
        if !projection.point.is_finite() {
            return Err(Error::NonFinite("expert iterate".into()));
        }

        let trace = StepTrace {
            x_prev: std::mem::replace(&mut self.x, projection.point.clone()),
            x_next: projection.point,
            inverse_quadratic_form: a_curr.inverse_quadratic_form(&grad),
            surrogate_grad: grad,
            a_prev,
            a_curr,
            projection_active: projection.active,
        };
        self.v = v_next;
        Ok(trace)
    }
}

/// Smallest margin in the preconditioner-growth inequalities, per coordinate:
/// `2 alpha mu - (A_t - A_{t-1})` for later rounds, or
/// `delta + 2 alpha mu - A_1` on the first round (`prev = None`).
pub fn lemma2_slack(prev: Option<&DiagonalMatrix>, curr: &DiagonalMatrix, alpha: f64, mu: f64, delta: f64) -> f64 {
    let budget = 2.0 * alpha * mu;
    match prev {
        Some(prev) => curr
            .diag()
            .iter()
            .zip(prev.diag().iter())
            .map(|(a, b)| budget - (a - b))
            .fold(f64::INFINITY, f64::min),
        None => curr
            .diag()
            .iter()
            .map(|a| delta + budget - a)
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn lemma2_check(prev: Option<&DiagonalMatrix>, curr: &DiagonalMatrix, alpha: f64, mu: f64, delta: f64) -> bool {
    lemma2_slack(prev, curr, alpha, mu, delta) >= -LEMMA2_TOL
}

/// Right side minus left side of the one-step inequality
///
/// ```text
/// (x - x*)^T grad <= (||x - x*||_A^2 - ||x_next - x*||_A^2) / (2 alpha)
///                    + (alpha / 2) <grad, A^{-1} grad>
/// ```
///
/// Nonnegative whenever `x_next` is the `A`-projection of
/// `x - alpha A^{-1} grad`; zero when that projection is inactive.
pub fn lemma4_slack(
    x: &RealVector,
    x_next: &RealVector,
    comparator: &RealVector,
    grad: &RealVector,
    a: &DiagonalMatrix,
    alpha: f64,
) -> Result<f64> {
    let before = weighted_norm_sq(&x.sub(comparator), a)?;
    let after = weighted_norm_sq(&x_next.sub(comparator), a)?;
    let rhs = (before - after) / (2.0 * alpha) + 0.5 * alpha * a.inverse_quadratic_form(grad);
    let lhs = x.sub(comparator).dot(grad);
    Ok(rhs - lhs)
}
