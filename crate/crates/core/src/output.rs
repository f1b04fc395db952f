//! Telemetry files: `rounds.csv`, `trace.csv`, `baselines.csv`, `bounds.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::harness::{RunOutput, SweepPoint};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,loss,regret,phi,w0..wk,s0..sk`, one row per round.
pub fn rounds_csv(run: &RunOutput) -> String {
    let n = run.grid.len();
    let mut out = String::from("t,loss,regret,phi");
    for i in 0..n {
        write!(out, ",w{i}").unwrap();
    }
    for i in 0..n {
        write!(out, ",s{i}").unwrap();
    }
    out.push('\n');
    for r in &run.records {
        write!(
            out,
            "{},{},{},{}",
            r.t,
            fmt_f64(r.loss),
            fmt_f64(r.regret),
            fmt_f64(r.potential)
        )
        .unwrap();
        for w in r.weights.iter().chain(&r.surrogates) {
            write!(out, ",{}", fmt_f64(*w)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Played point, comparator loss, per-round slacks and `V_t`.
pub fn trace_csv(run: &RunOutput) -> String {
    let d = run.config.dim;
    let mut out = String::from("t");
    for i in 0..d {
        write!(out, ",x{i}").unwrap();
    }
    out.push_str(",comparator_loss,lemma2_slack,lemma4_slack,variance_sum\n");
    for r in &run.records {
        write!(out, "{}", r.t).unwrap();
        for x in r.played.iter() {
            write!(out, ",{}", fmt_f64(*x)).unwrap();
        }
        writeln!(
            out,
            ",{},{},{},{}",
            fmt_f64(r.comparator_loss),
            fmt_f64(r.lemma2_slack),
            fmt_f64(r.lemma4_slack),
            fmt_f64(r.variance_sum)
        )
        .unwrap();
    }
    out
}

pub fn baselines_csv(run: &RunOutput) -> String {
    let mut out = String::from("t,meta");
    for b in &run.baselines {
        write!(out, ",{}", b.name).unwrap();
    }
    out.push('\n');
    for (i, r) in run.records.iter().enumerate() {
        write!(out, "{},{}", r.t, fmt_f64(r.regret)).unwrap();
        for b in &run.baselines {
            write!(out, ",{}", fmt_f64(b.regret[i])).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn bounds_json(run: &RunOutput) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&run.report)?;
    s.push('\n');
    Ok(s)
}

/// Writes the run's files into `dir`, creating it if needed.
pub fn emit_csv(run: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("rounds.csv"), rounds_csv(run))?;
    fs::write(dir.join("trace.csv"), trace_csv(run))?;
    if !run.baselines.is_empty() {
        fs::write(dir.join("baselines.csv"), baselines_csv(run))?;
    }
    fs::write(dir.join("bounds.json"), bounds_json(run)?)?;
    Ok(())
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("T,regret,regret_over_d_log_t,increment,all_passed\n");
    let mut prev: Option<f64> = None;
    for p in points {
        let inc = prev.map_or(String::new(), |r| fmt_f64(p.regret - r));
        writeln!(
            out,
            "{},{},{},{},{}",
            p.horizon,
            fmt_f64(p.regret),
            fmt_f64(p.normalized_regret),
            inc,
            p.all_passed
        )
        .unwrap();
        prev = Some(p.regret);
    }
    out
}
