//! Receding-horizon planning against forecast obstacle occupancy.
//!
//! Obstacles follow `x[t+1] = x[t] + v[t]`, so the reach distribution from a
//! known position is the distribution from the origin shifted by that
//! position. [`Forecaster`] computes the origin-based avoid boxes once per
//! obstacle and lookahead step; every replan only translates them.
//!
//! Lattice snapping moves a continuous obstacle away from its lattice twin
//! by at most half a cell at the start plus the displacement snapping error
//! each step. With snap compensation on, the footprint used for step `t`
//! grows by that amount plus half a cell, so that every point of a cell left
//! out of the avoid set is covered with probability below the threshold in
//! continuous space, not only at the cell center.

use alloc::vec::Vec;

use super::miqp::MiqpOptions;
use super::problem::{PlanConfig, PlanProblem, PlanSolution, RobotModel};
use crate::disturbance::DisturbanceSpec;
use crate::fsr::{fsr_compute, DynamicsMap, FsrOptions, FsrResult};
use crate::lattice::Lattice;
use crate::occupancy::{occupancy, superlevel, AvoidBoxSet, ObstacleGeometry, TaggedBox};
use crate::pmf::SparsePmf;
use crate::{Clock, Error, NoClock, Result};

const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleModel {
    pub geometry: ObstacleGeometry,
    pub disturbance: DisturbanceSpec,
}

/// Per-obstacle avoid boxes relative to the obstacle's starting cell.
#[derive(Debug, Clone)]
pub struct Forecaster {
    lattice: Lattice,
    alpha: f64,
    /// `offsets[i][t - 1]`, boxes tagged with obstacle `i`.
    offsets: Vec<Vec<AvoidBoxSet>>,
    fsr: Vec<FsrResult>,
}

impl Forecaster {
    /// Propagates every obstacle `horizon` steps from a point mass at the
    /// origin and thresholds each occupancy field at `alpha / N_obs`.
    pub fn new(
        lattice: &Lattice,
        obstacles: &[ObstacleModel],
        horizon: usize,
        alpha: f64,
        snap_compensation: bool,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        let n = lattice.dim();
        let offset_lattice = Lattice::new(alloc::vec![0.0; n], lattice.resolution().to_vec())?;
        let threshold = if obstacles.is_empty() { alpha } else { alpha / obstacles.len() as f64 };
        let mut offsets = Vec::with_capacity(obstacles.len());
        let mut fsr = Vec::with_capacity(obstacles.len());
        for (i, ob) in obstacles.iter().enumerate() {
            ob.geometry.validate()?;
            let v = ob.disturbance.discretize(&offset_lattice)?;
            let start = SparsePmf::delta(offset_lattice.clone(), alloc::vec![0i64; n])?;
            let result =
                fsr_compute(&start, &DynamicsMap::identity(n), &v, horizon, &FsrOptions::default(), &NoClock)?;
            let drift = if snap_compensation { ob.disturbance.lattice_error(&offset_lattice)? } else { 0.0 };
            let mut per_step = Vec::with_capacity(horizon);
            for t in 1..=horizon {
                let geometry = if snap_compensation {
                    compensated(&ob.geometry, lattice, t as f64 * drift)?
                } else {
                    ob.geometry.clone()
                };
                let field = occupancy(result.pmf(t), &geometry)?.with_time_index(t);
                let mut set = if threshold > 1.0 {
                    AvoidBoxSet::empty(offset_lattice.clone(), t, alpha)
                } else {
                    superlevel(&field, threshold)?
                };
                set.alpha = alpha;
                set.lattice = lattice.clone();
                for b in &mut set.boxes {
                    b.obstacle = i;
                }
                per_step.push(set);
            }
            offsets.push(per_step);
            fsr.push(result);
        }
        if threshold > 1.0 && !obstacles.is_empty() {
            log::warn!("per-obstacle threshold {threshold} exceeds one; avoid sets are empty");
        }
        Ok(Forecaster { lattice: lattice.clone(), alpha, offsets, fsr })
    }

    pub fn horizon(&self) -> usize {
        self.fsr.first().map_or(0, |r| r.tau())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn obstacle_count(&self) -> usize {
        self.offsets.len()
    }

    /// Reach distributions of obstacle `i` from the origin.
    pub fn offset_fsr(&self, i: usize) -> &FsrResult {
        &self.fsr[i]
    }

    /// Avoid boxes for lookahead steps `1..=horizon` given measured obstacle
    /// positions, each snapped to the lattice.
    pub fn avoid_sets(&self, positions: &[Vec<f64>], horizon: usize) -> Result<Vec<AvoidBoxSet>> {
        if positions.len() != self.offsets.len() {
            return Err(Error::invalid("one measured position per obstacle is required"));
        }
        let shifts = positions
            .iter()
            .map(|p| self.lattice.snap(p).map(|q| q.0))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let mut set = AvoidBoxSet::empty(self.lattice.clone(), t, self.alpha);
            for (per_step, d) in self.offsets.iter().zip(&shifts) {
                let Some(s) = per_step.get(t - 1) else {
                    return Err(Error::invalid("requested horizon exceeds the forecast"));
                };
                set.extend(s.translate(d));
            }
            out.push(set);
        }
        Ok(out)
    }
}

/// Footprint grown so that the lattice forecast covers every continuous
/// outcome: `extra` of accumulated displacement snapping, and for boxes the
/// half-cell start snapping plus the half cell between a point and its cell
/// center.
fn compensated(geometry: &ObstacleGeometry, lattice: &Lattice, extra: f64) -> Result<ObstacleGeometry> {
    match geometry {
        ObstacleGeometry::CenteredBox { half_widths } => ObstacleGeometry::centered_box(
            half_widths.iter().zip(lattice.resolution()).map(|(h, r)| h + r + extra).collect(),
        ),
        ObstacleGeometry::IndicatorKernel { .. } => {
            let kernel = geometry.kernel(lattice)?;
            let grow: Vec<i64> = lattice
                .resolution()
                .iter()
                .map(|r| libm::ceil(extra / r - SNAP_TOLERANCE).max(0.0) as i64)
                .collect();
            if grow.iter().all(|&g| g == 0) {
                return Ok(geometry.clone());
            }
            let mut cells = alloc::collections::BTreeSet::new();
            let lo: Vec<i64> = grow.iter().map(|g| -g).collect();
            for k in &kernel {
                for d in crate::pmf::IndexBoxIter::new(&lo, &grow) {
                    cells.insert(k.iter().zip(&d).map(|(a, b)| a + b).collect::<Vec<i64>>());
                }
            }
            Ok(ObstacleGeometry::IndicatorKernel { cells: cells.into_iter().map(crate::LatticePoint).collect() })
        }
    }
}

/// Robot side of the receding-horizon loop.
#[derive(Debug, Clone)]
pub struct RecedingPlanner {
    pub model: RobotModel,
    pub goal: Vec<f64>,
    pub config: PlanConfig,
    pub options: MiqpOptions,
    pub forecaster: Forecaster,
}

#[derive(Debug, Clone)]
pub struct RecedingStep {
    /// First input of the plan; absent when no plan was found.
    pub control: Option<Vec<f64>>,
    pub plan: PlanSolution,
    /// Avoid boxes for lookahead steps `1..=horizon`.
    pub avoid: Vec<AvoidBoxSet>,
}

impl RecedingPlanner {
    pub fn new(
        model: RobotModel,
        goal: Vec<f64>,
        config: PlanConfig,
        options: MiqpOptions,
        forecaster: Forecaster,
    ) -> Result<Self> {
        if forecaster.obstacle_count() > 0 && forecaster.horizon() < config.horizon {
            return Err(Error::invalid("forecast is shorter than the planning horizon"));
        }
        Ok(RecedingPlanner { model, goal, config, options, forecaster })
    }

    /// Plans from `robot_state` against obstacles measured at `positions` and
    /// returns the first control.
    pub fn step<C: Clock>(&self, robot_state: &[f64], positions: &[Vec<f64>], clock: &C) -> Result<RecedingStep> {
        let avoid = if self.forecaster.obstacle_count() == 0 {
            (1..=self.config.horizon)
                .map(|t| AvoidBoxSet::empty(self.forecaster.lattice.clone(), t, self.forecaster.alpha))
                .collect()
        } else {
            self.forecaster.avoid_sets(positions, self.config.horizon)?
        };
        let regions = avoid.iter().map(|s| s.regions()).collect();
        let problem = PlanProblem::build(
            robot_state.to_vec(),
            self.goal.clone(),
            self.model.clone(),
            regions,
            self.config.clone(),
        )?;
        let plan = problem.solve(&self.options, clock)?;
        if plan.has_plan() {
            debug_assert!(problem.verify(&plan).is_ok());
        }
        let control = plan.controls.first().cloned();
        Ok(RecedingStep { control, plan, avoid })
    }
}

/// Boxes of obstacle `i` in `set`.
pub fn boxes_of(set: &AvoidBoxSet, i: usize) -> impl Iterator<Item = &TaggedBox> {
    set.boxes.iter().filter(move |b| b.obstacle == i)
}
