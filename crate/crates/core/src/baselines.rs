//! Single-learner references that need their step sizes tuned by hand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, DecisionSet, DiagonalMatrix, RealVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineState {
    /// Projected gradient descent with step `1 / (lambda t)`.
    OgdSc { lambda: f64, t: usize, x: RealVector },
    /// SC-AdaGrad on the true gradients: step `alpha A^{-1} g`,
    /// `A = diag(sum g^2) + delta I`.
    ScAdagrad {
        v: RealVector,
        delta: f64,
        alpha: f64,
        x: RealVector,
    },
    /// Diagonal AdaGrad: step `scale * g / (sqrt(sum g^2) + delta)`.
    Adagrad {
        v: RealVector,
        delta: f64,
        step_scale: f64,
        x: RealVector,
    },
}

fn start(set: &DecisionSet) -> Result<RealVector> {
    let origin = RealVector::zeros(set.dim());
    if set.contains(&origin, 0.0) {
        Ok(origin)
    } else {
        set.project_euclidean(&origin)
    }
}

impl BaselineState {
    pub fn ogd_sc(lambda: f64, set: &DecisionSet) -> Result<Self> {
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::config("lambda", "must be positive"));
        }
        Ok(BaselineState::OgdSc {
            lambda,
            t: 1,
            x: start(set)?,
        })
    }

    pub fn sc_adagrad(alpha: f64, delta: f64, set: &DecisionSet) -> Result<Self> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::config("delta", "must be positive"));
        }
        Ok(BaselineState::ScAdagrad {
            v: RealVector::zeros(set.dim()),
            delta,
            alpha,
            x: start(set)?,
        })
    }

    pub fn adagrad(step_scale: f64, delta: f64, set: &DecisionSet) -> Result<Self> {
        if delta < 0.0 {
            return Err(Error::config("delta", "must be nonnegative"));
        }
        Ok(BaselineState::Adagrad {
            v: RealVector::zeros(set.dim()),
            delta,
            step_scale,
            x: start(set)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineState::OgdSc { .. } => "ogd_sc",
            BaselineState::ScAdagrad { .. } => "sc_adagrad",
            BaselineState::Adagrad { .. } => "adagrad",
        }
    }

    pub fn predict(&self) -> &RealVector {
        match self {
            BaselineState::OgdSc { x, .. } | BaselineState::ScAdagrad { x, .. } | BaselineState::Adagrad { x, .. } => x,
        }
    }

    pub fn step(&mut self, g: &RealVector, set: &DecisionSet) -> Result<()> {
        check_dim(set.dim(), g.dim())?;
        if !g.is_finite() {
            return Err(Error::NonFinite("baseline gradient".into()));
        }
        match self {
            BaselineState::OgdSc { lambda, t, x } => {
                let step = 1.0 / (*lambda * *t as f64);
                *x = set.project_euclidean(&x.add_scaled(-step, g))?;
                *t += 1;
            }
            BaselineState::ScAdagrad { v, delta, alpha, x } => {
                *v = v.add(&g.hadamard(g));
                let a = DiagonalMatrix::shifted(v, *delta)?;
                *x = set.project_weighted(&x.add_scaled(-*alpha, &a.solve(g)), &a)?;
            }
            BaselineState::Adagrad {
                v,
                delta,
                step_scale,
                x,
            } => {
                *v = v.add(&g.hadamard(g));
                // With delta = 0 a coordinate that has never seen a gradient
                // has a zero scale; it does not move and gets unit weight in
                // the projection.
                let scale: Vec<f64> = v.iter().map(|vi| vi.sqrt() + *delta).collect();
                let candidate: Vec<f64> = x
                    .iter()
                    .zip(g.iter())
                    .zip(&scale)
                    .map(|((xi, gi), si)| if *si > 0.0 { xi - *step_scale * gi / si } else { *xi })
                    .collect();
                let a = DiagonalMatrix::new(RealVector::from(
                    scale
                        .iter()
                        .map(|s| if *s > 0.0 { *s } else { 1.0 })
                        .collect::<Vec<_>>(),
                ))?;
                *x = set.project_weighted(&RealVector::from(candidate), &a)?;
            }
        }
        Ok(())
    }
}
