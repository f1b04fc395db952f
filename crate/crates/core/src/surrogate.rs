//! Surrogate loss for one grid learning rate.
//!
//! For a meta play `x_t`, observed gradient `g_t` and grid rate `eta`,
//!
//! ```text
//! s(x) = -eta * (x_t - x)^T g_t + eta^2 G^2 ||x_t - x||^2
//! ```
//!
//! `s(x_t) = 0`, and `s` is a quadratic with Hessian `2 eta^2 G^2 I`.

use crate::geometry::RealVector;

/// Inputs that fix one round's surrogate for one grid point.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateContext<'a> {
    pub eta: f64,
    pub gradient_bound: f64,
    pub played: &'a RealVector,
    pub gradient: &'a RealVector,
}

impl<'a> SurrogateContext<'a> {
    pub fn new(eta: f64, gradient_bound: f64, played: &'a RealVector, gradient: &'a RealVector) -> Self {
        debug_assert_eq!(played.dim(), gradient.dim());
        SurrogateContext {
            eta,
            gradient_bound,
            played,
            gradient,
        }
    }

    fn curvature(&self) -> f64 {
        self.eta * self.eta * self.gradient_bound * self.gradient_bound
    }
}

pub fn surrogate_loss(ctx: &SurrogateContext<'_>, x: &RealVector) -> f64 {
    debug_assert_eq!(x.dim(), ctx.played.dim());
    let diff = ctx.played.sub(x);
    -ctx.eta * diff.dot(ctx.gradient) + ctx.curvature() * diff.norm_sq()
}

pub fn surrogate_grad(ctx: &SurrogateContext<'_>, x: &RealVector) -> RealVector {
    debug_assert_eq!(x.dim(), ctx.played.dim());
    let c = 2.0 * ctx.curvature();
    RealVector::from(
        ctx.gradient
            .iter()
            .zip(x.iter().zip(ctx.played.iter()))
            .map(|(g, (xi, pi))| ctx.eta * g + c * (xi - pi))
            .collect::<Vec<_>>(),
    )
}

/// Strong-convexity modulus `2 eta^2 G^2` of the surrogate.
pub fn surrogate_modulus(ctx: &SurrogateContext<'_>) -> f64 {
    modulus(ctx.eta, ctx.gradient_bound)
}

pub fn modulus(eta: f64, gradient_bound: f64) -> f64 {
    2.0 * eta * eta * gradient_bound * gradient_bound
}

/// Range `[-1/5, 1/5 + 1/25]` that every surrogate value must lie in when
/// `eta <= 1/(5GD)`, `||g|| <= G` and `||x_t - x|| <= D`.
pub const SURROGATE_RANGE: (f64, f64) = (-0.2, 0.2 + 0.04);
