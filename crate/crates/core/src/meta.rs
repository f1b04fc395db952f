//! Meta learner: a learning-rate grid of SC-AdaGrad experts combined by a
//! tilted exponentially weighted average.
//!
//! Weights live in the log domain. The play is the `pi * eta` weighted mean of
//! the expert iterates, and after the gradient is revealed each expert's weight
//! is multiplied by `exp(-s)` of its own surrogate value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{expert_init, ExpertState, StepTrace};
use crate::geometry::{DecisionSet, ProblemConstants, RealVector};
use crate::surrogate::{surrogate_loss, SurrogateContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Largest grid index; the grid has `k + 1` points.
    pub k: usize,
    pub etas: Vec<f64>,
    pub priors: Vec<f64>,
}

/// `k = ceil(log2(T) / 2)`, `eta_i = 2^-i / (5 G D)` and
/// `pi_i = c / (3 (i + 1)(i + 2))` with `c = 1 + 1 / (1 + k)`, `i = 0..=k`.
pub fn build_grid(gradient_bound: f64, diameter: f64, horizon: usize) -> Result<GridConfig> {
    if horizon == 0 {
        return Err(Error::config("T", "horizon must be at least 1"));
    }
    if !(gradient_bound > 0.0 && diameter > 0.0) {
        return Err(Error::config("G, D", "gradient bound and diameter must be positive"));
    }
    let k = (0.5 * (horizon as f64).log2()).ceil() as usize;
    let c = 1.0 + 1.0 / (1.0 + k as f64);
    let eta_max = 1.0 / (5.0 * gradient_bound * diameter);
    let etas = (0..=k).map(|i| eta_max * 0.5f64.powi(i as i32)).collect();
    let priors = (0..=k)
        .map(|i| c / (3.0 * (i as f64 + 1.0) * (i as f64 + 2.0)))
        .collect();
    Ok(GridConfig { k, etas, priors })
}

impl GridConfig {
    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn eta_max(&self) -> f64 {
        self.etas[0]
    }

    pub fn eta_min(&self) -> f64 {
        self.etas[self.k]
    }

    /// Index of a grid point in `[eta_hat / 2, eta_hat]`, if any.
    pub fn covering_point(&self, eta_hat: f64) -> Option<usize> {
        self.etas.iter().position(|&eta| eta <= eta_hat && eta >= 0.5 * eta_hat)
    }
}

/// Numerically stable `ln(sum_i exp(x_i))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `sum_i prior_i exp(-cumulative_i)`, evaluated through log-sum-exp.
pub fn potential(priors: &[f64], cumulative_surrogates: &[f64]) -> f64 {
    let terms: Vec<f64> = priors
        .iter()
        .zip(cumulative_surrogates)
        .map(|(p, s)| p.ln() - s)
        .collect();
    log_sum_exp(&terms).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub grid: GridConfig,
    pub experts: Vec<ExpertState>,
    pub log_weights: Vec<f64>,
    pub constants: ProblemConstants,
    pub set: DecisionSet,
    /// `sum_{tau <= t} s_tau(x_tau^eta)` per grid point.
    pub cumulative_surrogates: Vec<f64>,
}

/// One meta round: what was played and how every expert moved.
#[derive(Debug, Clone)]
pub struct MetaRound {
    pub played: RealVector,
    pub loss: f64,
    pub gradient: RealVector,
    /// Normalized weights the play was formed with.
    pub weights: Vec<f64>,
    /// Expert predictions the play was formed from.
    pub predictions: Vec<RealVector>,
    /// `s_t^eta(x_t^eta)` per grid point.
    pub surrogates: Vec<f64>,
    pub steps: Vec<StepTrace>,
    pub potential: f64,
}

impl MetaState {
    pub fn new(constants: ProblemConstants, set: DecisionSet, delta: f64) -> Result<Self> {
        if set.dim() != constants.dim {
            return Err(Error::DimensionMismatch {
                expected: constants.dim,
                found: set.dim(),
            });
        }
        let grid = build_grid(constants.gradient_bound, constants.diameter, constants.horizon)?;
        let experts = grid
            .etas
            .iter()
            .map(|&eta| expert_init(eta, constants.dim, delta, &set))
            .collect::<Result<Vec<_>>>()?;
        let log_weights = grid.priors.iter().map(|p| p.ln()).collect();
        let n = grid.len();
        Ok(MetaState {
            grid,
            experts,
            log_weights,
            constants,
            set,
            cumulative_surrogates: vec![0.0; n],
        })
    }

    /// Normalized weights `pi_t`.
    pub fn weights(&self) -> Vec<f64> {
        let z = log_sum_exp(&self.log_weights);
        self.log_weights.iter().map(|l| (l - z).exp()).collect()
    }

    pub fn predictions(&self) -> Vec<RealVector> {
        self.experts.iter().map(|e| e.predict().clone()).collect()
    }

    /// Tilted average `sum pi eta x^eta / sum pi eta`.
    pub fn aggregate(&self) -> Result<RealVector> {
        let tilted: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.grid.etas)
            .map(|(l, eta)| l + eta.ln())
            .collect();
        let m = tilted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFinite("meta weights".into()));
        }
        let scaled: Vec<f64> = tilted.iter().map(|t| (t - m).exp()).collect();
        let total: f64 = scaled.iter().sum();
        let mut acc = RealVector::zeros(self.constants.dim);
        for (w, expert) in scaled.iter().zip(&self.experts) {
            acc = acc.add_scaled(*w, expert.predict());
        }
        Ok(acc.scale(1.0 / total))
    }

    /// Multiplies each weight by `exp(-surrogate)` and renormalizes.
    pub fn update_weights(&mut self, surrogate_values: &[f64]) -> Result<()> {
        if surrogate_values.len() != self.log_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.log_weights.len(),
                found: surrogate_values.len(),
            });
        }
        if surrogate_values.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("surrogate values".into()));
        }
        for (l, s) in self.log_weights.iter_mut().zip(surrogate_values) {
            *l -= s;
        }
        let z = log_sum_exp(&self.log_weights);
        for l in &mut self.log_weights {
            *l -= z;
        }
        for (c, s) in self.cumulative_surrogates.iter_mut().zip(surrogate_values) {
            *c += s;
        }
        Ok(())
    }

    pub fn potential(&self) -> f64 {
        potential(&self.grid.priors, &self.cumulative_surrogates)
    }

    /// Plays, asks `oracle` for the loss and gradient at the play, updates
    /// the weights and steps every expert.
    pub fn round<F>(&mut self, oracle: F) -> Result<MetaRound>
    where
        F: FnOnce(&RealVector) -> Result<(f64, RealVector)>,
    {
        let predictions = self.predictions();
        let weights = self.weights();
        let played = self.aggregate()?;
        let (loss, gradient) = oracle(&played)?;
        if gradient.dim() != self.constants.dim {
            return Err(Error::DimensionMismatch {
                expected: self.constants.dim,
                found: gradient.dim(),
            });
        }
        if !gradient.is_finite() || !loss.is_finite() {
            return Err(Error::NonFinite("loss or gradient".into()));
        }
        let g_bound = self.constants.gradient_bound;
        let surrogates: Vec<f64> = self
            .grid
            .etas
            .iter()
            .zip(&predictions)
            .map(|(&eta, x)| surrogate_loss(&SurrogateContext::new(eta, g_bound, &played, &gradient), x))
            .collect();
        self.update_weights(&surrogates)?;
        let set = &self.set;
        let steps = self
            .experts
            .iter_mut()
            .map(|e| e.step(&played, &gradient, set, g_bound))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaRound {
            played,
            loss,
            gradient,
            weights,
            predictions,
            surrogates,
            steps,
            potential: self.potential(),
        })
    }
}

/// Right side of the meta-regret bound, `2 ln(sqrt(3) (log2(T) / 2 + 3))`.
pub fn meta_regret_bound(horizon: usize) -> f64 {
    2.0 * (3f64.sqrt() * (0.5 * (horizon as f64).log2() + 3.0)).ln()
}
