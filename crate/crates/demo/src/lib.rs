//! Browser bindings for the scmeta learner.
//!
//! Each export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are callable natively, which is how they are tested.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use scmeta::config::ExperimentConfig;
use scmeta::geometry::{DecisionSet, DiagonalMatrix, RealVector};
use scmeta::harness::run_experiment;
use scmeta::meta::build_grid;

/// Longest series sent back to the page.
pub const MAX_POINTS: usize = 512;

#[derive(Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    /// Round index of each sampled point.
    pub t: Vec<usize>,
    /// Meta regret first, then one series per baseline.
    pub regret: Vec<Series>,
    /// `weights[i]` is expert `i`'s weight at each sampled round.
    pub weights: Vec<Vec<f64>>,
    pub etas: Vec<f64>,
    /// Played points (first two coordinates) at each sampled round.
    pub played: Vec<[f64; 2]>,
    pub comparator: Vec<f64>,
    pub final_bound: f64,
    pub observed_regret: f64,
    pub certificates: Vec<(String, bool)>,
}

fn sample_indices(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_POINTS).map(|j| j * (len - 1) / (MAX_POINTS - 1)).collect();
    idx.dedup();
    idx
}

pub fn run_meta_json(config: &str) -> Result<String, String> {
    let cfg = ExperimentConfig::from_json_str(config).map_err(|e| e.to_string())?;
    if cfg.horizon > 1 << 16 {
        return Err("T is capped at 65536 in the browser".into());
    }
    let run = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let idx = sample_indices(run.records.len());
    let pick = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).collect::<Vec<_>>();

    let mut regret = vec![Series {
        name: "meta".into(),
        values: pick(&|i| run.records[i].regret),
    }];
    for b in &run.baselines {
        regret.push(Series {
            name: b.name.clone(),
            values: pick(&|i| b.regret[i]),
        });
    }
    let weights = (0..run.grid.len())
        .map(|k| pick(&|i| run.records[i].weights[k]))
        .collect();
    let played = idx
        .iter()
        .map(|&i| {
            let x = &run.records[i].played;
            [x[0], if x.dim() > 1 { x[1] } else { 0.0 }]
        })
        .collect();
    let summary = RunSummary {
        t: idx.iter().map(|&i| run.records[i].t).collect(),
        regret,
        weights,
        etas: run.grid.etas.clone(),
        played,
        comparator: run.comparator.point.to_vec(),
        final_bound: run.report.final_bound,
        observed_regret: run.report.observed_regret,
        certificates: run
            .report
            .certificates
            .iter()
            .map(|c| (c.name.clone(), c.passed))
            .collect(),
    };
    serde_json::to_string(&summary).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct ProjectionRequest {
    pub y: Vec<f64>,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Diagonal of the weighting matrix.
    pub a: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ProjectionResponse {
    pub weighted: Vec<f64>,
    pub euclidean: Vec<f64>,
    pub active: bool,
}

pub fn project_ball_json(request: &str) -> Result<String, String> {
    let req: ProjectionRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let err = |e: scmeta::Error| e.to_string();
    let set = DecisionSet::ball(RealVector::from(req.center), req.radius).map_err(err)?;
    let a = DiagonalMatrix::new(RealVector::from(req.a)).map_err(err)?;
    let y = RealVector::from(req.y);
    let p = set.project_weighted_flagged(&y, &a).map_err(err)?;
    let e = set.project_euclidean(&y).map_err(err)?;
    serde_json::to_string(&ProjectionResponse {
        weighted: p.point.to_vec(),
        euclidean: e.to_vec(),
        active: p.active,
    })
    .map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct GridRequest {
    #[serde(rename = "G")]
    pub gradient_bound: f64,
    #[serde(rename = "D")]
    pub diameter: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
}

pub fn grid_json(request: &str) -> Result<String, String> {
    let req: GridRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let grid = build_grid(req.gradient_bound, req.diameter, req.horizon).map_err(|e| e.to_string())?;
    serde_json::to_string(&grid).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// Runs one experiment and returns a downsampled trace.
#[wasm_bindgen]
pub fn run_meta(config: &str) -> Result<String, JsValue> {
    js(run_meta_json(config))
}

/// Weighted and Euclidean projections of a point onto a ball.
#[wasm_bindgen]
pub fn project_ball(request: &str) -> Result<String, JsValue> {
    js(project_ball_json(request))
}

/// The learning-rate grid and priors for given `G`, `D`, `T`.
#[wasm_bindgen]
pub fn grid(request: &str) -> Result<String, JsValue> {
    js(grid_json(request))
}
