//! Seeded, replayable strongly convex loss streams.
//!
//! Every round's loss is a quadratic `f_t(x) = x^T H_t x / 2 - c_t^T x + e_t`,
//! so the cumulative loss is also a quadratic and the offline comparator is a
//! well-conditioned projected gradient problem.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, DecisionSet, RealVector};

pub const COMPARATOR_TOL: f64 = 1e-10;
pub const COMPARATOR_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TargetMode {
    /// Fresh target every round, uniform in the target ball.
    Iid,
    /// One target for the whole run.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSpec {
    /// `f_t(x) = (lambda / 2) ||x - u_t||^2`.
    Quadratic {
        lambda: f64,
        targets: TargetMode,
        target_radius: f64,
        /// Explicit constant target; overrides sampling.
        target: Option<Vec<f64>>,
    },
    /// `f_t(x) = (<a_t, x> - b_t)^2 / 2 + (lambda / 2) ||x||^2` with `a_t`
    /// supported on `sparsity` random coordinates.
    SparseRidge {
        lambda: f64,
        sparsity: usize,
        noise: f64,
        weight_radius: f64,
    },
}

impl StreamSpec {
    pub fn lambda(&self) -> f64 {
        match self {
            StreamSpec::Quadratic { lambda, .. } | StreamSpec::SparseRidge { lambda, .. } => *lambda,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("losses must be strongly convex, got lambda = {lambda}"),
            ));
        }
        match self {
            StreamSpec::Quadratic {
                target_radius, target, ..
            } => {
                if !(*target_radius >= 0.0 && target_radius.is_finite()) {
                    return Err(Error::config("target_radius", "must be nonnegative"));
                }
                if let Some(t) = target {
                    if t.len() != dim {
                        return Err(Error::config(
                            "target",
                            format!("expected {dim} entries, got {}", t.len()),
                        ));
                    }
                    if t.iter().any(|x| !x.is_finite()) {
                        return Err(Error::config("target", "entries must be finite"));
                    }
                }
            }
            StreamSpec::SparseRidge {
                sparsity,
                noise,
                weight_radius,
                ..
            } => {
                if *sparsity == 0 || *sparsity > dim {
                    return Err(Error::config("sparsity", format!("must be in 1..={dim}")));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::config("noise", "must be nonnegative"));
                }
                if !(*weight_radius >= 0.0 && weight_radius.is_finite()) {
                    return Err(Error::config("weight_radius", "must be nonnegative"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RoundData {
    Quadratic { target: RealVector },
    Ridge { features: RealVector, label: f64 },
}

/// One round's loss, borrowed from its stream.
#[derive(Debug, Clone, Copy)]
pub struct RoundLoss<'a> {
    lambda: f64,
    data: &'a RoundData,
}

impl RoundLoss<'_> {
    pub fn value(&self, x: &RealVector) -> f64 {
        match self.data {
            RoundData::Quadratic { target } => 0.5 * self.lambda * x.sub(target).norm_sq(),
            RoundData::Ridge { features, label } => {
                let r = features.dot(x) - label;
                0.5 * r * r + 0.5 * self.lambda * x.norm_sq()
            }
        }
    }

    pub fn gradient(&self, x: &RealVector) -> RealVector {
        match self.data {
            RoundData::Quadratic { target } => x.sub(target).scale(self.lambda),
            RoundData::Ridge { features, label } => {
                let r = features.dot(x) - label;
                features.scale(r).add_scaled(self.lambda, x)
            }
        }
    }
}

/// Offline minimizer of the realized cumulative loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub point: RealVector,
    pub iterations: usize,
    /// Gradient-mapping norm of the averaged objective at `point`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossStream {
    spec: StreamSpec,
    dim: usize,
    seed: u64,
    rounds: Vec<RoundData>,
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> RealVector {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let dir = RealVector::from(dir);
    let n = dir.norm();
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    if n == 0.0 {
        RealVector::zeros(dim)
    } else {
        dir.scale(r / n)
    }
}

impl LossStream {
    pub fn generate(spec: &StreamSpec, dim: usize, horizon: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        if horizon == 0 {
            return Err(Error::config("T", "horizon must be at least 1"));
        }
        spec.validate(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rounds = match spec {
            StreamSpec::Quadratic {
                targets,
                target_radius,
                target,
                ..
            } => {
                let fixed = match target {
                    Some(t) => Some(RealVector::from(t.clone())),
                    None if *targets == TargetMode::Constant => Some(uniform_in_ball(&mut rng, dim, *target_radius)),
                    None => None,
                };
                (0..horizon)
                    .map(|_| RoundData::Quadratic {
                        target: fixed
                            .clone()
                            .unwrap_or_else(|| uniform_in_ball(&mut rng, dim, *target_radius)),
                    })
                    .collect()
            }
            StreamSpec::SparseRidge {
                sparsity,
                noise,
                weight_radius,
                ..
            } => {
                let truth = uniform_in_ball(&mut rng, dim, *weight_radius);
                (0..horizon)
                    .map(|_| {
                        let mut a = vec![0.0; dim];
                        for i in sample(&mut rng, dim, *sparsity) {
                            a[i] = rng.gen_range(-1.0..=1.0);
                        }
                        let features = RealVector::from(a);
                        let label = features.dot(&truth) + noise * rng.gen_range(-1.0..=1.0);
                        RoundData::Ridge { features, label }
                    })
                    .collect()
            }
        };
        Ok(LossStream {
            spec: spec.clone(),
            dim,
            seed,
            rounds,
        })
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda()
    }

    /// Loss of round `t` (1-based).
    pub fn next_loss(&self, t: usize) -> Result<RoundLoss<'_>> {
        if t == 0 || t > self.rounds.len() {
            return Err(Error::RoundOutOfRange {
                t,
                horizon: self.rounds.len(),
            });
        }
        Ok(RoundLoss {
            lambda: self.lambda(),
            data: &self.rounds[t - 1],
        })
    }

    /// Analytic bound on `||grad f_t(x)||` over `x` in `set`.
    pub fn gradient_bound(&self, set: &DecisionSet) -> f64 {
        match &self.spec {
            StreamSpec::Quadratic {
                lambda,
                target_radius,
                target,
                ..
            } => match target {
                Some(t) => lambda * set.max_distance_from(&RealVector::from(t.clone())),
                None => lambda * (set.max_distance_from(&RealVector::zeros(self.dim)) + target_radius),
            },
            StreamSpec::SparseRidge {
                lambda,
                sparsity,
                noise,
                weight_radius,
            } => {
                let a_max = (*sparsity as f64).sqrt();
                let b_max = a_max * weight_radius + noise;
                let x_max = set.max_norm();
                a_max * (a_max * x_max + b_max) + lambda * x_max
            }
        }
    }

    /// `(H, c)` of the averaged cumulative loss `x^T H x / 2 - c^T x`, with
    /// `H` dense row-major.
    fn averaged_quadratic(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let lambda = self.lambda();
        let mut h = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        for round in &self.rounds {
            match round {
                RoundData::Quadratic { target } => {
                    for i in 0..d {
                        h[i * d + i] += lambda;
                        c[i] += lambda * target[i];
                    }
                }
                RoundData::Ridge { features, label } => {
                    for i in 0..d {
                        if features[i] == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            h[i * d + j] += features[i] * features[j];
                        }
                        c[i] += label * features[i];
                    }
                    for i in 0..d {
                        h[i * d + i] += lambda;
                    }
                }
            }
        }
        let n = self.rounds.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
        c.iter_mut().for_each(|x| *x /= n);
        (h, c)
    }

    pub fn cumulative_loss(&self, x: &RealVector) -> f64 {
        let lambda = self.lambda();
        self.rounds.iter().map(|data| RoundLoss { lambda, data }.value(x)).sum()
    }

    /// Minimizer of the cumulative loss over `set` by projected gradient
    /// descent with constant step `1/L` on the averaged objective.
    pub fn comparator_pgd(&self, set: &DecisionSet) -> Result<Comparator> {
        check_dim(set.dim(), self.dim)?;
        let d = self.dim;
        let (h, c) = self.averaged_quadratic();
        // Gershgorin bound on the largest eigenvalue.
        let lipschitz = (0..d)
            .map(|i| (0..d).map(|j| h[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let grad = |x: &RealVector| -> RealVector {
            RealVector::from(
                (0..d)
                    .map(|i| (0..d).map(|j| h[i * d + j] * x[j]).sum::<f64>() - c[i])
                    .collect::<Vec<_>>(),
            )
        };
        let mut x = set.project_euclidean(&RealVector::zeros(d))?;
        let mut residual = f64::INFINITY;
        for iter in 1..=COMPARATOR_MAX_ITERS {
            let next = set.project_euclidean(&x.add_scaled(-1.0 / lipschitz, &grad(&x)))?;
            residual = lipschitz * next.distance(&x);
            x = next;
            if residual < COMPARATOR_TOL {
                return Ok(Comparator {
                    point: x,
                    iterations: iter,
                    residual,
                });
            }
        }
        Err(Error::NoConvergence {
            achieved: residual,
            iterations: COMPARATOR_MAX_ITERS,
        })
    }

    /// Offline comparator. Quadratic tracking has Hessian `lambda T I`, so the
    /// minimizer over any set is the Euclidean projection of the mean target;
    /// other streams use [`LossStream::comparator_pgd`].
    pub fn comparator(&self, set: &DecisionSet) -> Result<Comparator> {
        check_dim(set.dim(), self.dim)?;
        match &self.spec {
            StreamSpec::Quadratic { .. } => {
                let (_, c) = self.averaged_quadratic();
                let mean = RealVector::from(c).scale(1.0 / self.lambda());
                Ok(Comparator {
                    point: set.project_euclidean(&mean)?,
                    iterations: 0,
                    residual: 0.0,
                })
            }
            StreamSpec::SparseRidge { .. } => self.comparator_pgd(set),
        }
    }
}
