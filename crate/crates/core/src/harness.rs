//! Experiment driver and regret accounting.
//!
//! [`run_experiment`] plays the meta learner (and any selected baselines)
//! against one replayable stream, tracks true, meta and expert regret, checks
//! the per-round inequalities the regret analysis rests on, and condenses
//! everything into a [`BoundReport`].

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::BaselineState;
use crate::config::{Algorithm, ExperimentConfig};
use crate::environments::{Comparator, LossStream};
use crate::error::{Error, Result};
use crate::expert::{lemma2_slack, lemma4_slack, LEMMA2_TOL};
use crate::geometry::{DecisionSet, ProblemConstants, RealVector, MEMBERSHIP_TOL};
use crate::meta::{meta_regret_bound, GridConfig, MetaState};
use crate::surrogate::{modulus, surrogate_loss, SurrogateContext, SURROGATE_RANGE};

/// Additive tolerance for the regret certificates.
pub const CERTIFICATE_TOL: f64 = 1e-6;
pub const LEMMA4_TOL: f64 = 1e-9;
/// Largest allowed `|slack|` of the one-step inequality when the projection
/// was inactive.
pub const LEMMA4_TIGHT_TOL: f64 = 1e-10;
pub const POTENTIAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub played: RealVector,
    pub loss: f64,
    pub comparator_loss: f64,
    /// `R_t = sum_{tau <= t} f_tau(x_tau) - f_tau(x*)`.
    pub regret: f64,
    /// Weights the play was formed with.
    pub weights: Vec<f64>,
    pub surrogates: Vec<f64>,
    /// Potential after this round's update.
    pub potential: f64,
    /// Smallest preconditioner-growth margin over experts.
    pub lemma2_slack: f64,
    /// Smallest one-step inequality slack over experts.
    pub lemma4_slack: f64,
    /// `V_t = sum_{tau <= t} G^2 ||x_tau - x*||^2`.
    pub variance_sum: f64,
}

/// Per-expert running totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertAccount {
    pub eta: f64,
    pub alpha: f64,
    pub delta: f64,
    /// `-sum_t s_t(x_t^eta)`, the meta regret against this expert.
    pub meta_regret: f64,
    /// `sum_t s_t(x_t^eta) - s_t(x*)`.
    pub expert_regret: f64,
    /// `sum_t <grad s_t, A_t^{-1} grad s_t>`.
    pub quadratic_form_sum: f64,
    pub accumulator: RealVector,
    pub min_lemma2_slack: f64,
    pub min_lemma4_slack: f64,
    /// Largest `|slack|` over rounds where the projection was inactive.
    pub max_inactive_gap: f64,
    pub inactive_rounds: usize,
}

impl ExpertAccount {
    /// `sum_i ln((v_T,i + delta) / delta)`.
    pub fn log_determinant_ratio(&self) -> f64 {
        self.accumulator
            .iter()
            .map(|v| ((v + self.delta) / self.delta).ln())
            .sum()
    }

    /// `D^2 d delta / (2 alpha) + (alpha / 2) sum_i ln((v_T,i + delta) / delta)`.
    pub fn expert_bound(&self, diameter: f64) -> f64 {
        let d = self.accumulator.dim() as f64;
        diameter * diameter * d * self.delta / (2.0 * self.alpha) + 0.5 * self.alpha * self.log_determinant_ratio()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineTrace {
    pub name: String,
    /// Cumulative regret after each round.
    pub regret: Vec<f64>,
    pub final_point: RealVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The tuned rate falls inside the grid.
    SmallEta,
    /// The tuned rate exceeds the largest grid point.
    LargeEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaHat {
    /// `sqrt(A_T / V_T)`; `None` when `V_T = 0`.
    pub raw: Option<f64>,
    /// Clipped into `[eta_min, eta_max]` of the grid.
    pub clipped: f64,
    pub regime: Regime,
    /// Grid point in `[clipped / 2, clipped]`.
    pub covering_index: Option<usize>,
}

/// `sqrt(A_T / V_T)` before clipping.
pub fn eta_hat_raw(a_t: f64, variance_sum: f64) -> Option<f64> {
    (variance_sum > 0.0).then(|| (a_t / variance_sum).sqrt())
}

pub fn eta_hat(a_t: f64, variance_sum: f64, grid: &GridConfig) -> EtaHat {
    let raw = eta_hat_raw(a_t, variance_sum);
    let (lo, hi) = (grid.eta_min(), grid.eta_max());
    let clipped = raw.map_or(hi, |r| r.clamp(lo, hi));
    EtaHat {
        raw,
        clipped,
        regime: match raw {
            Some(r) if r < hi => Regime::SmallEta,
            _ => Regime::LargeEta,
        },
        covering_index: grid.covering_point(clipped),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    /// Worst-case `bound - observed` (negative means violated).
    pub margin: f64,
    pub tolerance: f64,
}

impl Certificate {
    fn new(name: &str, margin: f64, tolerance: f64) -> Self {
        Certificate {
            name: name.to_string(),
            passed: margin >= -tolerance,
            margin,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeBounds {
    /// `3 sqrt(V_T A_T) - (lambda / 2) sum ||x_t - x*||^2`.
    pub small_eta: f64,
    /// `10 G D A_T - (lambda / 2) sum ||x_t - x*||^2`.
    pub large_eta: f64,
    /// Both regime terms added, as in the combined bound.
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// `A_T` of the operative (bound-minimizing) expert.
    #[serde(rename = "A_T")]
    pub a_t: f64,
    /// `E_T` of the operative expert.
    #[serde(rename = "E_T")]
    pub e_t: f64,
    pub lemma3_bound: f64,
    /// Expert-regret bound per grid point.
    pub lemma5_bounds: Vec<f64>,
    /// `min_eta (G^2 / lambda + 10 G D) A_T(eta)`.
    pub final_bound: f64,
    pub final_bounds: Vec<f64>,
    pub operative_expert: usize,
    pub observed_regret: f64,
    pub observed_meta_regret: Vec<f64>,
    pub observed_expert_regret: Vec<f64>,
    pub lemma1_lhs: Vec<f64>,
    pub lemma1_rhs: Vec<f64>,
    pub etas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub priors: Vec<f64>,
    pub surrogate_moduli: Vec<f64>,
    pub lambda_sc: f64,
    pub gradient_bound: f64,
    pub diameter: f64,
    pub horizon: usize,
    pub dim: usize,
    pub delta: f64,
    pub comparator: RealVector,
    pub variance_sum: f64,
    pub squared_distance_sum: f64,
    pub eta_hat: EtaHat,
    pub regime_bounds: RegimeBounds,
    pub potential_initial: f64,
    pub potential_final: f64,
    pub potential_max_increase: f64,
    pub min_lemma2_slack: f64,
    pub min_lemma4_slack: f64,
    pub max_inactive_lemma4_gap: f64,
    pub max_gradient_norm: f64,
    pub gradient_bound_violations: usize,
    pub surrogate_range_violations: usize,
    pub infeasible_rounds: usize,
    pub baselines: BTreeMap<String, f64>,
    pub certificates: Vec<Certificate>,
}

impl BoundReport {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.iter().filter(|c| !c.passed)
    }

    pub fn certificate(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }
}

/// Run-wide observations that feed the report besides the per-expert totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunDiagnostics {
    pub potential_initial: f64,
    pub potential_max_increase: f64,
    pub max_gradient_norm: f64,
    pub gradient_bound_violations: usize,
    pub surrogate_range_violations: usize,
    pub infeasible_rounds: usize,
    pub squared_distance_sum: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub constants: ProblemConstants,
    pub set: DecisionSet,
    pub grid: GridConfig,
    pub comparator: Comparator,
    pub records: Vec<RoundRecord>,
    pub experts: Vec<ExpertAccount>,
    pub baselines: Vec<BaselineTrace>,
    pub report: BoundReport,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let set = config.decision_set()?;
    let stream = LossStream::generate(&config.stream, config.dim, config.horizon, config.seed)?;
    let gradient_bound = stream.gradient_bound(&set);
    let constants = ProblemConstants::new(
        gradient_bound,
        set.diameter(),
        stream.lambda(),
        config.horizon,
        config.dim,
    )?;
    let comparator = stream.comparator(&set)?;
    let x_star = &comparator.point;

    let mut meta = MetaState::new(constants, set.clone(), config.delta)?;
    let grid = meta.grid.clone();
    let mut experts: Vec<ExpertAccount> = meta
        .experts
        .iter()
        .map(|e| ExpertAccount {
            eta: e.eta,
            alpha: e.alpha,
            delta: e.delta,
            meta_regret: 0.0,
            expert_regret: 0.0,
            quadratic_form_sum: 0.0,
            accumulator: e.v.clone(),
            min_lemma2_slack: f64::INFINITY,
            min_lemma4_slack: f64::INFINITY,
            max_inactive_gap: 0.0,
            inactive_rounds: 0,
        })
        .collect();

    let mut diag = RunDiagnostics {
        potential_initial: meta.potential(),
        ..RunDiagnostics::default()
    };
    let mut last_potential = diag.potential_initial;
    let mut regret = 0.0;
    let mut variance_sum = 0.0;
    let mut records = Vec::with_capacity(config.horizon);
    let g2 = gradient_bound * gradient_bound;

    for t in 1..=config.horizon {
        let f = stream.next_loss(t)?;
        let round = meta
            .round(|x| Ok((f.value(x), f.gradient(x))))
            .map_err(|e| e.at_round(t))?;
        let comparator_loss = f.value(x_star);
        regret += round.loss - comparator_loss;

        let gnorm = round.gradient.norm();
        diag.max_gradient_norm = diag.max_gradient_norm.max(gnorm);
        if gnorm > gradient_bound + MEMBERSHIP_TOL {
            if diag.gradient_bound_violations == 0 {
                warn!("round {t}: gradient norm {gnorm} exceeds the bound G = {gradient_bound}");
            }
            diag.gradient_bound_violations += 1;
        }
        if !set.contains(&round.played, MEMBERSHIP_TOL) {
            diag.infeasible_rounds += 1;
        }

        let mut round_l2 = f64::INFINITY;
        let mut round_l4 = f64::INFINITY;
        for (i, (acct, step)) in experts.iter_mut().zip(&round.steps).enumerate() {
            let s = round.surrogates[i];
            if !(SURROGATE_RANGE.0 - POTENTIAL_TOL..=SURROGATE_RANGE.1 + POTENTIAL_TOL).contains(&s) {
                diag.surrogate_range_violations += 1;
            }
            let ctx = SurrogateContext::new(acct.eta, gradient_bound, &round.played, &round.gradient);
            acct.meta_regret -= s;
            acct.expert_regret += s - surrogate_loss(&ctx, x_star);
            acct.quadratic_form_sum += step.inverse_quadratic_form;
            acct.accumulator = meta.experts[i].v.clone();

            let prev = (t > 1).then_some(&step.a_prev);
            let l2 = lemma2_slack(
                prev,
                &step.a_curr,
                acct.alpha,
                modulus(acct.eta, gradient_bound),
                acct.delta,
            );
            let l4 = lemma4_slack(
                &step.x_prev,
                &step.x_next,
                x_star,
                &step.surrogate_grad,
                &step.a_curr,
                acct.alpha,
            )
            .map_err(|e| e.at_round(t))?;
            if !step.projection_active {
                acct.inactive_rounds += 1;
                acct.max_inactive_gap = acct.max_inactive_gap.max(l4.abs());
            }
            if !set.contains(&step.x_next, MEMBERSHIP_TOL) {
                diag.infeasible_rounds += 1;
            }
            acct.min_lemma2_slack = acct.min_lemma2_slack.min(l2);
            acct.min_lemma4_slack = acct.min_lemma4_slack.min(l4);
            round_l2 = round_l2.min(l2);
            round_l4 = round_l4.min(l4);
        }

        diag.potential_max_increase = diag.potential_max_increase.max(round.potential - last_potential);
        last_potential = round.potential;
        let sq_dist = round.played.sub(x_star).norm_sq();
        diag.squared_distance_sum += sq_dist;
        variance_sum += g2 * sq_dist;

        records.push(RoundRecord {
            t,
            played: round.played,
            loss: round.loss,
            comparator_loss,
            regret,
            weights: round.weights,
            surrogates: round.surrogates,
            potential: round.potential,
            lemma2_slack: round_l2,
            lemma4_slack: round_l4,
            variance_sum,
        });
    }

    let baselines = run_baselines(config, &stream, &set, x_star)?;
    let report = evaluate_bounds(&records, &experts, &constants, &grid, x_star, &diag, &baselines);
    Ok(RunOutput {
        config: config.clone(),
        constants,
        set,
        grid,
        comparator,
        records,
        experts,
        baselines,
        report,
    })
}

fn run_baselines(
    config: &ExperimentConfig,
    stream: &LossStream,
    set: &DecisionSet,
    x_star: &RealVector,
) -> Result<Vec<BaselineTrace>> {
    let lambda = stream.lambda();
    let mut learners = Vec::new();
    for algo in &config.algos {
        match algo {
            Algorithm::Meta => {}
            Algorithm::OgdSc => learners.push(BaselineState::ogd_sc(lambda, set)?),
            Algorithm::ScAdagrad => learners.push(BaselineState::sc_adagrad(
                config.sc_adagrad_alpha.unwrap_or(1.0 / (2.0 * lambda)),
                config.delta,
                set,
            )?),
            Algorithm::Adagrad => learners.push(BaselineState::adagrad(
                config
                    .adagrad_step_scale
                    .unwrap_or(set.diameter() / std::f64::consts::SQRT_2),
                config.delta,
                set,
            )?),
        }
    }
    learners
        .into_iter()
        .map(|mut learner| {
            let mut regret = 0.0;
            let mut trace = Vec::with_capacity(stream.horizon());
            for t in 1..=stream.horizon() {
                let f = stream.next_loss(t)?;
                let x = learner.predict().clone();
                regret += f.value(&x) - f.value(x_star);
                trace.push(regret);
                learner.step(&f.gradient(&x), set).map_err(|e| e.at_round(t))?;
            }
            Ok(BaselineTrace {
                name: learner.name().to_string(),
                regret: trace,
                final_point: learner.predict().clone(),
            })
        })
        .collect()
}

/// Evaluates every bound of the regret analysis on a finished run.
pub fn evaluate_bounds(
    records: &[RoundRecord],
    experts: &[ExpertAccount],
    constants: &ProblemConstants,
    grid: &GridConfig,
    comparator: &RealVector,
    diag: &RunDiagnostics,
    baselines: &[BaselineTrace],
) -> BoundReport {
    let ProblemConstants {
        gradient_bound: g,
        diameter,
        lambda_sc,
        horizon,
        dim,
    } = *constants;
    let lemma3_bound = meta_regret_bound(horizon);
    let lemma5_bounds: Vec<f64> = experts.iter().map(|e| e.expert_bound(diameter)).collect();
    let a_ts: Vec<f64> = lemma5_bounds.iter().map(|e| lemma3_bound + e).collect();
    let factor = g * g / lambda_sc + 10.0 * g * diameter;
    let final_bounds: Vec<f64> = a_ts.iter().map(|a| factor * a).collect();
    let operative_expert = final_bounds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    let final_bound = final_bounds[operative_expert];
    let a_t = a_ts[operative_expert];

    let last = records.last();
    let observed_regret = last.map_or(0.0, |r| r.regret);
    let variance_sum = last.map_or(0.0, |r| r.variance_sum);
    let potential_final = last.map_or(diag.potential_initial, |r| r.potential);

    let curvature_credit = 0.5 * lambda_sc * diag.squared_distance_sum;
    let small = 3.0 * (variance_sum * a_t).sqrt();
    let large = 10.0 * g * diameter * a_t;
    let regime_bounds = RegimeBounds {
        small_eta: small - curvature_credit,
        large_eta: large - curvature_credit,
        sum: small + large - curvature_credit,
    };

    let lemma1_lhs: Vec<f64> = experts.iter().map(|e| e.quadratic_form_sum).collect();
    let lemma1_rhs: Vec<f64> = experts.iter().map(|e| e.log_determinant_ratio()).collect();
    let min_lemma2_slack = experts.iter().map(|e| e.min_lemma2_slack).fold(f64::INFINITY, f64::min);
    let min_lemma4_slack = experts.iter().map(|e| e.min_lemma4_slack).fold(f64::INFINITY, f64::min);
    let max_inactive_lemma4_gap = experts.iter().map(|e| e.max_inactive_gap).fold(0.0, f64::max);

    let min_margin = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let certificates = vec![
        Certificate::new(
            "lemma1",
            min_margin(&mut lemma1_rhs.iter().zip(&lemma1_lhs).map(|(r, l)| r - l)),
            CERTIFICATE_TOL,
        ),
        Certificate::new("lemma2", min_lemma2_slack, LEMMA2_TOL),
        Certificate::new(
            "lemma3",
            min_margin(&mut experts.iter().map(|e| lemma3_bound - e.meta_regret)),
            CERTIFICATE_TOL,
        ),
        Certificate::new("lemma4", min_lemma4_slack, LEMMA4_TOL),
        Certificate::new("lemma4_tight", -max_inactive_lemma4_gap, LEMMA4_TIGHT_TOL),
        Certificate::new(
            "lemma5",
            min_margin(&mut experts.iter().zip(&lemma5_bounds).map(|(e, b)| b - e.expert_regret)),
            CERTIFICATE_TOL,
        ),
        Certificate::new("potential", -diag.potential_max_increase, POTENTIAL_TOL),
        Certificate::new(
            "potential_initial",
            -(diag.potential_initial - 1.0 / 3.0).abs(),
            POTENTIAL_TOL,
        ),
        Certificate::new("total_regret", final_bound - observed_regret, CERTIFICATE_TOL),
        Certificate::new("surrogate_range", -(diag.surrogate_range_violations as f64), 0.0),
        Certificate::new("feasibility", -(diag.infeasible_rounds as f64), 0.0),
    ];

    BoundReport {
        a_t,
        e_t: lemma5_bounds[operative_expert],
        lemma3_bound,
        lemma5_bounds,
        final_bound,
        final_bounds,
        operative_expert,
        observed_regret,
        observed_meta_regret: experts.iter().map(|e| e.meta_regret).collect(),
        observed_expert_regret: experts.iter().map(|e| e.expert_regret).collect(),
        lemma1_lhs,
        lemma1_rhs,
        etas: grid.etas.clone(),
        alphas: experts.iter().map(|e| e.alpha).collect(),
        priors: grid.priors.clone(),
        surrogate_moduli: grid.etas.iter().map(|&eta| modulus(eta, g)).collect(),
        lambda_sc,
        gradient_bound: g,
        diameter,
        horizon,
        dim,
        delta: experts.first().map_or(0.0, |e| e.delta),
        comparator: comparator.clone(),
        variance_sum,
        squared_distance_sum: diag.squared_distance_sum,
        eta_hat: eta_hat(a_t, variance_sum, grid),
        regime_bounds,
        potential_initial: diag.potential_initial,
        potential_final,
        potential_max_increase: diag.potential_max_increase,
        min_lemma2_slack,
        min_lemma4_slack,
        max_inactive_lemma4_gap,
        max_gradient_norm: diag.max_gradient_norm,
        gradient_bound_violations: diag.gradient_bound_violations,
        surrogate_range_violations: diag.surrogate_range_violations,
        infeasible_rounds: diag.infeasible_rounds,
        baselines: baselines
            .iter()
            .map(|b| (b.name.clone(), b.regret.last().copied().unwrap_or(0.0)))
            .collect(),
        certificates,
    }
}

/// One point of a horizon-doubling sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub horizon: usize,
    pub regret: f64,
    /// `R_T / (d ln T)`.
    pub normalized_regret: f64,
    pub all_passed: bool,
}

/// Runs `config` once per horizon (in parallel) and returns the outputs
/// sorted by horizon.
pub fn sweep(config: &ExperimentConfig, horizons: &[usize]) -> Result<Vec<RunOutput>> {
    if horizons.is_empty() {
        return Err(Error::config("T", "sweep needs at least one horizon"));
    }
    let mut runs = horizons
        .par_iter()
        .map(|&h| run_experiment(&config.with_horizon(h)))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.config.horizon);
    Ok(runs)
}

pub fn sweep_points(runs: &[RunOutput]) -> Vec<SweepPoint> {
    runs.iter()
        .map(|r| {
            let t = r.config.horizon;
            SweepPoint {
                horizon: t,
                regret: r.report.observed_regret,
                normalized_regret: r.report.observed_regret / (r.config.dim as f64 * (t as f64).ln()),
                all_passed: r.report.all_passed(),
            }
        })
        .collect()
}
