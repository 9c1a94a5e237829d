//! Serializable views of plans, traces and Monte-Carlo reports.
//!
//! Wall-clock figures are left out of these so that they reproduce byte for
//! byte; they go to separate timing files.

use fsreach_core::planner::problem::{PlanSolution, PlanStatus};
use fsreach_core::sim::{CollisionEstimate, CollisionQuery, Outcome, SimTrace};
use fsreach_core::AvoidBoxSet;
use serde::Serialize;

use crate::io::{csv, num};

#[derive(Debug, Clone, Serialize)]
pub struct RegionJson {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub obstacle: usize,
}

pub fn regions(set: &AvoidBoxSet) -> Vec<RegionJson> {
    set.boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let r = set.region(i);
            RegionJson { lo: r.lo, hi: r.hi, obstacle: b.obstacle }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanJson {
    pub status: PlanStatus,
    pub objective: Option<f64>,
    pub controls: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub binaries: Vec<Vec<Vec<bool>>>,
    pub binary_count: usize,
    pub nodes: usize,
    pub avoid: Vec<AvoidBoxSet>,
}

impl PlanJson {
    pub fn new(plan: &PlanSolution, avoid: &[AvoidBoxSet]) -> Self {
        PlanJson {
            status: plan.status,
            objective: plan.has_plan().then_some(plan.objective),
            controls: plan.controls.clone(),
            states: plan.states.clone(),
            binaries: plan.binaries.clone(),
            binary_count: plan.binary_count,
            nodes: plan.nodes,
            avoid: avoid.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepJson {
    pub t: usize,
    pub robot: Vec<f64>,
    pub obstacles: Vec<Vec<f64>>,
    pub control: Option<Vec<f64>>,
    pub status: Option<PlanStatus>,
    pub objective: Option<f64>,
    pub active_boxes: usize,
    pub binaries: usize,
    pub nodes: usize,
    /// Boxes the planner avoided one step ahead of this state.
    pub avoid_next: Vec<RegionJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceJson {
    pub name: String,
    pub alpha: f64,
    pub seed: u64,
    pub horizon: usize,
    pub resolution: f64,
    pub outcome: Outcome,
    pub goal_reached: bool,
    pub collision_at_step: Option<usize>,
    pub infeasible_at_step: Option<usize>,
    pub goal: Vec<f64>,
    pub steps: Vec<StepJson>,
}

fn status_name(s: Option<PlanStatus>) -> &'static str {
    match s {
        None => "none",
        Some(PlanStatus::Feasible) => "feasible",
        Some(PlanStatus::Infeasible) => "infeasible",
        Some(PlanStatus::Timeout) => "timeout",
    }
}

fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    if prefix == "x" && n == 2 {
        return vec!["x".into(), "y".into()];
    }
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

/// `t, x, y, u1, u2, status`; inputs are empty on the final row.
pub fn trace_csv(trace: &SimTrace) -> String {
    let n = trace.records.first().map_or(0, |r| r.robot.len());
    let m = trace.records.iter().find_map(|r| r.control.as_ref().map(|u| u.len())).unwrap_or(n);
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("x", n));
    header.extend(axis_names("u", m));
    header.push("status".into());
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    csv(
        &header,
        trace.records.iter().map(|r| {
            let mut row = vec![r.t.to_string()];
            row.extend(r.robot.iter().map(|v| num(*v)));
            match &r.control {
                Some(u) => row.extend(u.iter().map(|v| num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.push(status_name(r.status).into());
            row
        }),
    )
}

/// `t, obstacle, x, y`.
pub fn obstacles_csv(trace: &SimTrace) -> String {
    let n = trace.records.first().map_or(0, |r| r.robot.len());
    let mut header = vec!["t".to_string(), "obstacle".to_string()];
    header.extend(axis_names("x", n));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    csv(
        &header,
        trace.records.iter().flat_map(|r| {
            r.obstacles.iter().enumerate().map(move |(i, p)| {
                let mut row = vec![r.t.to_string(), i.to_string()];
                row.extend(p.iter().map(|v| num(*v)));
                row
            })
        }),
    )
}

pub fn solve_times_csv(trace: &SimTrace) -> String {
    csv(
        &["t", "solve_seconds", "nodes", "binaries"],
        trace.records.iter().filter(|r| r.status.is_some()).map(|r| {
            vec![r.t.to_string(), num(r.solve_time.as_secs_f64()), r.nodes.to_string(), r.binaries.to_string()]
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CollisionRow {
    pub t: usize,
    pub lookahead: usize,
    pub point: Vec<f64>,
    pub hits: u64,
    pub samples: u64,
    pub probability: f64,
    pub sigma: f64,
    pub wilson95: (f64, f64),
    pub bound: f64,
    pub pass: bool,
}

/// Compares each estimate against `alpha` plus three binomial standard
/// deviations at `alpha`.
pub fn collision_rows(queries: &[CollisionQuery], estimates: &[CollisionEstimate], alpha: f64) -> Vec<CollisionRow> {
    queries
        .iter()
        .zip(estimates)
        .map(|(q, e)| {
            let sigma = e.sigma_at(alpha);
            let bound = alpha + 3.0 * sigma;
            CollisionRow {
                t: q.t,
                lookahead: q.lookahead,
                point: q.point.clone(),
                hits: e.hits,
                samples: e.samples,
                probability: e.probability(),
                sigma,
                wilson95: e.wilson95(),
                bound,
                pass: e.probability() <= bound,
            }
        })
        .collect()
}

pub fn collision_csv(rows: &[CollisionRow]) -> String {
    csv(
        &["t", "lookahead", "hits", "samples", "probability", "sigma", "wilson_lo", "wilson_hi", "bound", "pass"],
        rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.lookahead.to_string(),
                r.hits.to_string(),
                r.samples.to_string(),
                num(r.probability),
                num(r.sigma),
                num(r.wilson95.0),
                num(r.wilson95.1),
                num(r.bound),
                r.pass.to_string(),
            ]
        }),
    )
}
