//! Closed-loop simulation and Monte-Carlo collision estimates.
//!
//! Obstacles move by displacements drawn from their continuous (unsnapped)
//! laws; collisions are checked in continuous coordinates against the
//! closed footprint. Randomness comes from ChaCha8 streams derived from the
//! scenario seed, so traces and estimates are reproducible.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::disturbance::DisturbanceSpec;
use crate::lattice::{BoxRegion, Lattice};
use crate::occupancy::ObstacleGeometry;
use crate::planner::miqp::MiqpOptions;
use crate::planner::problem::{default_big_m, Objective, PlanConfig, PlanStatus, RobotModel};
use crate::planner::receding::{Forecaster, ObstacleModel, RecedingPlanner};
use crate::{Clock, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Monte-Carlo samples are drawn in chunks of this size, each from its own
/// stream, so that any split across workers gives the same counts.
pub const MC_CHUNK: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Scenario {
    pub schema: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub name: String,
    /// Lattice spacing on every axis.
    pub resolution: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub lattice_origin: Option<Vec<f64>>,
    pub sample_time: f64,
    /// Mission length in steps.
    pub steps: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
    /// End the run as soon as the robot is at the goal. When false the
    /// mission keeps replanning for all `steps`.
    #[cfg_attr(feature = "serde", serde(default = "yes"))]
    pub stop_at_goal: bool,
    pub robot: RobotSpec,
    pub obstacles: Vec<ObstacleSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub planner: PlannerSpec,
}

#[cfg(feature = "serde")]
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RobotSpec {
    pub initial: Vec<f64>,
    pub goal: Vec<f64>,
    pub input_box: BoxRegion,
    /// `n x m`, row-major; `sample_time * I` when absent.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub input_gain: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ObstacleSpec {
    pub initial: Vec<f64>,
    pub geometry: ObstacleGeometry,
    pub disturbance: DisturbanceSpec,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlannerSpec {
    /// Defaults to the identity.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub cost_state: Option<Vec<Vec<f64>>>,
    /// Defaults to `0.01 I`.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub cost_input: Option<Vec<Vec<f64>>>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub big_m: Option<f64>,
    pub margin: f64,
    pub objective: Objective,
    /// Defaults to the hull of everything the robot can reach during the
    /// mission, together with the goal.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub workspace: Option<BoxRegion>,
    pub node_limit: usize,
    pub snap_compensation: bool,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        PlannerSpec {
            cost_state: None,
            cost_input: None,
            big_m: None,
            margin: 1e-6,
            objective: Objective::Quadratic,
            workspace: None,
            node_limit: MiqpOptions::default().node_limit,
            snap_compensation: true,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::invalid("resolution must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least one"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least one"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        let n = self.robot.initial.len();
        if n == 0 || self.robot.goal.len() != n {
            return Err(Error::invalid("robot initial state and goal must have the same positive dimension"));
        }
        if let Some(o) = &self.lattice_origin {
            if o.len() != n {
                return Err(Error::invalid("lattice_origin dimension does not match the robot state"));
            }
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            let ctx = |e: Error| Error::invalid(format!("obstacle {i}: {e}"));
            if ob.initial.len() != n || ob.initial.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("obstacle {i}: initial position must be {n} finite coordinates")));
            }
            ob.geometry.validate().map_err(ctx)?;
            ob.disturbance.validate().map_err(ctx)?;
            if ob.geometry.dim() != n || ob.disturbance.dim() != n {
                return Err(Error::invalid(format!("obstacle {i}: dimension does not match the robot state")));
            }
        }
        self.robot_model()?;
        self.plan_config()?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let n = self.robot.initial.len();
        let origin = self.lattice_origin.clone().unwrap_or_else(|| alloc::vec![0.0; n]);
        Lattice::new(origin, alloc::vec![self.resolution; n])
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        match &self.robot.input_gain {
            Some(g) => RobotModel::new(g.clone(), self.robot.input_box.clone()),
            None => RobotModel::point_mass(self.sample_time, self.robot.input_box.clone()),
        }
    }

    pub fn obstacle_models(&self) -> Vec<ObstacleModel> {
        self.obstacles
            .iter()
            .map(|o| ObstacleModel { geometry: o.geometry.clone(), disturbance: o.disturbance.clone() })
            .collect()
    }

    pub fn obstacle_starts(&self) -> Vec<Vec<f64>> {
        self.obstacles.iter().map(|o| o.initial.clone()).collect()
    }

    /// Workspace used to validate the big-M constant.
    pub fn workspace(&self) -> Result<BoxRegion> {
        if let Some(w) = &self.planner.workspace {
            return Ok(w.clone());
        }
        let model = self.robot_model()?;
        let mut hull = model.reach_hull(&self.robot.initial, self.steps + self.horizon);
        for k in 0..hull.dim() {
            hull.lo[k] = hull.lo[k].min(self.robot.initial[k]).min(self.robot.goal[k]);
            hull.hi[k] = hull.hi[k].max(self.robot.initial[k]).max(self.robot.goal[k]);
        }
        Ok(hull)
    }

    pub fn plan_config(&self) -> Result<PlanConfig> {
        let model = self.robot_model()?;
        let ws = self.workspace()?;
        let mut c = PlanConfig::with_defaults(model.state_dim(), model.input_dim(), ws);
        c.horizon = self.horizon;
        if let Some(q) = &self.planner.cost_state {
            c.cost_state = q.clone();
        }
        if let Some(r) = &self.planner.cost_input {
            c.cost_input = r.clone();
        }
        c.big_m = self.planner.big_m;
        c.margin = self.planner.margin;
        c.objective = self.planner.objective;
        if c.big_m.is_none() {
            log::debug!("big-M from workspace: {}", default_big_m(&c.workspace));
        }
        Ok(c)
    }

    pub fn miqp_options(&self) -> MiqpOptions {
        MiqpOptions { node_limit: self.planner.node_limit, ..MiqpOptions::default() }
    }

    pub fn planner(&self) -> Result<RecedingPlanner> {
        self.validate()?;
        let forecaster = Forecaster::new(
            &self.lattice()?,
            &self.obstacle_models(),
            self.horizon,
            self.alpha,
            self.planner.snap_compensation,
        )?;
        RecedingPlanner::new(
            self.robot_model()?,
            self.robot.goal.clone(),
            self.plan_config()?,
            self.miqp_options(),
            forecaster,
        )
    }

    /// Whether `x` is within one lattice cell of the goal on every axis.
    pub fn at_goal(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.robot.goal).all(|(a, g)| (a - g).abs() <= self.resolution + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub robot: Vec<f64>,
    pub obstacles: Vec<Vec<f64>>,
    /// Control applied from this state; absent on the final record.
    pub control: Option<Vec<f64>>,
    /// Planner status at this state; absent when no plan was attempted.
    pub status: Option<PlanStatus>,
    pub solve_time: Duration,
    pub active_boxes: usize,
    pub binaries: usize,
    pub nodes: usize,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    GoalReached,
    Collision,
    Infeasible,
    /// All mission steps ran without reaching the goal.
    MissionComplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
    pub goal_reached: bool,
    pub collision_at_step: Option<usize>,
    pub infeasible_at_step: Option<usize>,
}

impl SimTrace {
    /// Steps actually executed.
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// Goal reached or every mission step executed, without collision or
    /// planner failure.
    pub fn completed(&self) -> bool {
        matches!(self.outcome, Outcome::GoalReached | Outcome::MissionComplete)
    }

    pub fn max_solve_time(&self) -> Duration {
        self.records.iter().map(|r| r.solve_time).max().unwrap_or(Duration::ZERO)
    }
}

/// Stream used for obstacle motion in [`run`].
pub fn motion_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for chunk `chunk` of Monte-Carlo query `query`.
pub fn chunk_rng(seed: u64, query: usize, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d63_5f63_6f6c_6c69);
    rng.set_stream(((query as u64) << 32) | chunk);
    rng
}

fn collides(scenario: &Scenario, lattice: &Lattice, obstacles: &[Vec<f64>], x: &[f64]) -> bool {
    scenario.obstacles.iter().zip(obstacles).any(|(o, c)| o.geometry.covers(lattice, c, x))
}

/// Runs the closed loop: plan, apply the first control, move the obstacles,
/// check for collision. Stops at the goal, on collision, when no plan is
/// found, or after `scenario.steps` steps.
pub fn run<C: Clock>(scenario: &Scenario, clock: &C) -> Result<SimTrace> {
    let planner = scenario.planner()?;
    let lattice = scenario.lattice()?;
    let model = scenario.robot_model()?;
    let mut rng = motion_rng(scenario.seed);
    let mut x = scenario.robot.initial.clone();
    let mut obs = scenario.obstacle_starts();
    let mut records = Vec::with_capacity(scenario.steps + 1);
    let blank = |t: usize, x: &[f64], obs: &[Vec<f64>]| StepRecord {
        t,
        robot: x.to_vec(),
        obstacles: obs.to_vec(),
        control: None,
        status: None,
        solve_time: Duration::ZERO,
        active_boxes: 0,
        binaries: 0,
        nodes: 0,
        objective: None,
    };
    let mut reached = false;
    let trace = |records, outcome, reached, collision, infeasible| SimTrace {
        records,
        outcome,
        goal_reached: reached,
        collision_at_step: collision,
        infeasible_at_step: infeasible,
    };
    if collides(scenario, &lattice, &obs, &x) {
        records.push(blank(0, &x, &obs));
        return Ok(trace(records, Outcome::Collision, false, Some(0), None));
    }
    for t in 0..scenario.steps {
        reached |= scenario.at_goal(&x);
        if reached && scenario.stop_at_goal {
            records.push(blank(t, &x, &obs));
            return Ok(trace(records, Outcome::GoalReached, true, None, None));
        }
        let step = planner.step(&x, &obs, clock)?;
        let mut rec = blank(t, &x, &obs);
        rec.status = Some(step.plan.status);
        rec.solve_time = step.plan.solve_time;
        rec.active_boxes = step.avoid.first().map_or(0, |s| s.len());
        rec.binaries = step.plan.binary_count;
        rec.nodes = step.plan.nodes;
        rec.objective = step.plan.has_plan().then_some(step.plan.objective);
        let Some(u) = step.control else {
            log::info!("no plan at step {t} ({:?})", step.plan.status);
            records.push(rec);
            return Ok(trace(records, Outcome::Infeasible, reached, None, Some(t)));
        };
        x = model.step(&x, &u);
        rec.control = Some(u);
        records.push(rec);
        for (o, p) in scenario.obstacles.iter().zip(obs.iter_mut()) {
            let v = o.disturbance.sample(&mut rng)?;
            for (a, b) in p.iter_mut().zip(&v) {
                *a += b;
            }
        }
        if collides(scenario, &lattice, &obs, &x) {
            records.push(blank(t + 1, &x, &obs));
            return Ok(trace(records, Outcome::Collision, reached, Some(t + 1), None));
        }
    }
    reached |= scenario.at_goal(&x);
    let outcome = if reached { Outcome::GoalReached } else { Outcome::MissionComplete };
    records.push(blank(scenario.steps, &x, &obs));
    Ok(trace(records, outcome, reached, None, None))
}

/// Probability that some obstacle covers `point` after `lookahead` steps
/// from `starts`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionQuery {
    pub t: usize,
    pub starts: Vec<Vec<f64>>,
    pub lookahead: usize,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub hits: u64,
    pub samples: u64,
}

impl CollisionEstimate {
    pub fn probability(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.hits as f64 / self.samples as f64
        }
    }

    /// Binomial standard deviation of the estimate at `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        crate::math::sqrt(p * (1.0 - p) / self.samples as f64)
    }

    /// Wilson score interval at 95 % confidence.
    pub fn wilson95(&self) -> (f64, f64) {
        let n = self.samples as f64;
        if n == 0.0 {
            return (0.0, 1.0);
        }
        let z = 1.959_963_984_540_054;
        let p = self.probability();
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * crate::math::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
        ((center - half).max(0.0), (center + half).min(1.0))
    }
}

/// One query per executed step `t >= 1`: obstacles start where they were
/// measured at `t - 1` and move once; the point is the robot at `t`. This is
/// the risk the planner bounded when it chose the control at `t - 1`.
pub fn trace_queries(trace: &SimTrace) -> Vec<CollisionQuery> {
    trace
        .records
        .windows(2)
        .filter(|w| w[0].control.is_some())
        .map(|w| CollisionQuery {
            t: w[1].t,
            starts: w[0].obstacles.clone(),
            lookahead: 1,
            point: w[1].robot.clone(),
        })
        .collect()
}

/// One query per planned state `states[t]`, `t >= 1`, with obstacles
/// starting at `starts`.
pub fn plan_queries(starts: &[Vec<f64>], states: &[Vec<f64>]) -> Vec<CollisionQuery> {
    states
        .iter()
        .enumerate()
        .skip(1)
        .map(|(t, x)| CollisionQuery { t, starts: starts.to_vec(), lookahead: t, point: x.clone() })
        .collect()
}

/// Hits among `samples` draws of the obstacle futures for `query`.
pub fn collision_hits<R: rand::Rng + ?Sized>(
    scenario: &Scenario,
    lattice: &Lattice,
    query: &CollisionQuery,
    samples: u64,
    rng: &mut R,
) -> Result<u64> {
    if query.starts.len() != scenario.obstacles.len() {
        return Err(Error::invalid("one start position per obstacle is required"));
    }
    let mut hits = 0;
    let mut pos: Vec<Vec<f64>> = query.starts.clone();
    for _ in 0..samples {
        let mut hit = false;
        // Every obstacle is always sampled so the stream layout does not
        // depend on earlier outcomes.
        for (o, (p, s)) in scenario.obstacles.iter().zip(pos.iter_mut().zip(&query.starts)) {
            p.copy_from_slice(s);
            for _ in 0..query.lookahead {
                let v = o.disturbance.sample(rng)?;
                for (a, b) in p.iter_mut().zip(&v) {
                    *a += b;
                }
            }
            hit |= o.geometry.covers(lattice, p, &query.point);
        }
        hits += u64::from(hit);
    }
    Ok(hits)
}

/// Number of chunks needed for `samples` draws.
pub fn chunk_count(samples: u64) -> u64 {
    samples.div_ceil(MC_CHUNK)
}

/// Hits in chunk `chunk` of query number `qi`.
pub fn chunk_hits(
    scenario: &Scenario,
    lattice: &Lattice,
    query: &CollisionQuery,
    qi: usize,
    chunk: u64,
    samples: u64,
    seed: u64,
) -> Result<u64> {
    let n = MC_CHUNK.min(samples - chunk * MC_CHUNK);
    let mut rng = chunk_rng(seed, qi, chunk);
    collision_hits(scenario, lattice, query, n, &mut rng)
}

/// Sequential Monte-Carlo estimate for each query.
pub fn monte_carlo(
    scenario: &Scenario,
    queries: &[CollisionQuery],
    samples: u64,
    seed: u64,
) -> Result<Vec<CollisionEstimate>> {
    let lattice = scenario.lattice()?;
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut hits = 0;
            for c in 0..chunk_count(samples) {
                hits += chunk_hits(scenario, &lattice, q, qi, c, samples, seed)?;
            }
            Ok(CollisionEstimate { hits, samples })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::SpeedSet;
    use crate::NoClock;
    use alloc::vec;

    fn speed(speeds: Vec<f64>, probs: Vec<f64>, sign: [f64; 2]) -> DisturbanceSpec {
        DisturbanceSpec::FiniteSpeedSet(SpeedSet {
            speeds,
            probs,
            per_axis_sign: sign.to_vec(),
            gain_matrix: None,
            sample_time: 0.2,
        })
    }

    fn scenario(obstacles: Vec<ObstacleSpec>) -> Scenario {
        Scenario {
            schema: 1,
            name: "test".into(),
            resolution: 0.05,
            lattice_origin: None,
            sample_time: 0.2,
            steps: 50,
            horizon: 5,
            alpha: 0.045,
            seed: 7,
            stop_at_goal: true,
            robot: RobotSpec {
                initial: vec![0.0, 0.0],
                goal: vec![1.0, 3.0],
                input_box: BoxRegion::new(vec![-0.2, 0.1], vec![1.0, 1.0]).unwrap(),
                input_gain: None,
            },
            obstacles,
            planner: PlannerSpec::default(),
        }
    }

    #[test]
    fn free_space_reaches_the_goal() {
        let s = scenario(vec![]);
        let trace = run(&s, &NoClock).unwrap();
        assert_eq!(trace.outcome, Outcome::GoalReached);
        assert!(trace.infeasible_at_step.is_none());
        assert!(s.at_goal(&trace.records.last().unwrap().robot));
    }

    #[test]
    fn runs_are_reproducible() {
        let ob = ObstacleSpec {
            initial: vec![3.0, 1.0],
            geometry: ObstacleGeometry::centered_box(vec![0.5, 0.5]).unwrap(),
            disturbance: speed(vec![1.0, 0.5], vec![0.5, 0.5], [-1.0, 1.0]),
        };
        let s = scenario(vec![ob]);
        let a = run(&s, &NoClock).unwrap();
        let b = run(&s, &NoClock).unwrap();
        assert_eq!(a, b);
        assert!(a.steps() > 0);
    }

    #[test]
    fn estimates_at_trivial_points() {
        let ob = ObstacleSpec {
            initial: vec![0.0, 0.0],
            geometry: ObstacleGeometry::centered_box(vec![0.5, 0.5]).unwrap(),
            disturbance: speed(vec![1.0], vec![1.0], [1.0, 1.0]),
        };
        let s = scenario(vec![ob]);
        let center = CollisionQuery { t: 1, starts: vec![vec![0.0, 0.0]], lookahead: 1, point: vec![0.2, 0.2] };
        let far = CollisionQuery { point: vec![5.0, 5.0], ..center.clone() };
        let est = monte_carlo(&s, &[center, far], 20_000, 1).unwrap();
        assert_eq!(est[0].hits, 20_000);
        assert_eq!(est[1].hits, 0);
    }

    #[test]
    fn chunking_matches_a_single_pass_count() {
        let ob = ObstacleSpec {
            initial: vec![0.0, 0.0],
            geometry: ObstacleGeometry::centered_box(vec![0.5, 0.5]).unwrap(),
            disturbance: speed(vec![3.0, 0.1], vec![0.5, 0.5], [1.0, 1.0]),
        };
        let s = scenario(vec![ob]);
        let q = CollisionQuery { t: 1, starts: vec![vec![0.0, 0.0]], lookahead: 1, point: vec![0.9, 0.9] };
        let est = monte_carlo(&s, &[q.clone()], 25_000, 3).unwrap()[0];
        let lattice = s.lattice().unwrap();
        let manual: u64 =
            (0..3).map(|c| chunk_hits(&s, &lattice, &q, 0, c, 25_000, 3).unwrap()).sum();
        assert_eq!(est.hits, manual);
        // Covered only when the obstacle moves 0.6 on both axes.
        let p = est.probability();
        assert!((p - 0.25).abs() < 4.0 * est.sigma_at(0.25), "{p}");
    }

    #[test]
    fn wilson_interval_contains_the_estimate() {
        let e = CollisionEstimate { hits: 30, samples: 1000 };
        let (lo, hi) = e.wilson95();
        assert!(lo < 0.03 && 0.03 < hi);
        let z = CollisionEstimate { hits: 0, samples: 100_000 };
        assert_eq!(z.wilson95().0, 0.0);
        assert!(z.wilson95().1 < 1e-4);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut s = scenario(vec![]);
        s.alpha = 1.5;
        assert!(s.validate().is_err());
        let mut s = scenario(vec![]);
        s.schema = 2;
        assert!(s.validate().is_err());
    }
}
