//! The shipped experiment matrix that `scmeta verify` certifies.

use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, SetSpec};
use crate::environments::{StreamSpec, TargetMode};
use crate::error::Result;
use crate::expert::DEFAULT_DELTA;
use crate::harness::{run_experiment, RunOutput};

pub const SUITE_DIMS: [usize; 4] = [1, 2, 5, 20];
pub const SUITE_HORIZONS: [usize; 3] = [1 << 8, 1 << 10, 1 << 12];

pub fn quadratic_tracking(dim: usize, horizon: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        stream: StreamSpec::Quadratic {
            lambda: 1.0,
            targets: TargetMode::Iid,
            target_radius: 1.0,
            target: None,
        },
        horizon,
        dim,
        seed,
        delta: DEFAULT_DELTA,
        set: SetSpec::Ball { radius: 1.0 },
        algos: vec![Algorithm::Meta],
        sc_adagrad_alpha: None,
        adagrad_step_scale: None,
        out: None,
    }
}

pub fn sparse_ridge(dim: usize, horizon: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        stream: StreamSpec::SparseRidge {
            lambda: 0.5,
            sparsity: dim.div_ceil(4),
            noise: 0.1,
            weight_radius: 1.0,
        },
        set: SetSpec::Box {
            lower: -1.0,
            upper: 1.0,
        },
        ..quadratic_tracking(dim, horizon, seed)
    }
}

/// Quadratic tracking with one fixed target, used for the regret-growth check.
pub fn constant_target(dim: usize, horizon: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        stream: StreamSpec::Quadratic {
            lambda: 1.0,
            targets: TargetMode::Constant,
            target_radius: 0.5,
            target: None,
        },
        ..quadratic_tracking(dim, horizon, seed)
    }
}

/// Both stream families over every dimension and horizon of the matrix.
pub fn shipped_configs() -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for (family, build) in [
        (
            "quadratic",
            quadratic_tracking as fn(usize, usize, u64) -> ExperimentConfig,
        ),
        ("sparse_ridge", sparse_ridge),
    ] {
        for dim in SUITE_DIMS {
            for horizon in SUITE_HORIZONS {
                let seed = 1000 + dim as u64 * 10 + horizon.trailing_zeros() as u64;
                out.push((format!("{family}-d{dim}-T{horizon}"), build(dim, horizon, seed)));
            }
        }
    }
    out
}

/// Runs every shipped config; results keep the order of [`shipped_configs`].
pub fn run_suite() -> Vec<(String, Result<RunOutput>)> {
    shipped_configs()
        .into_par_iter()
        .map(|(name, cfg)| {
            let out = run_experiment(&cfg);
            (name, out)
        })
        .collect()
}
