//! Finite-horizon avoidance problems for a point robot.
//!
//! The robot follows `x[t] = x[t-1] + B u[t-1]` with `u` in a box. States are
//! eliminated, leaving the stacked inputs as continuous unknowns. Each avoid
//! box `{y : P y <= q}` at step `t` must be left through at least one face:
//!
//! ```text
//! p_l' x[t] >= q_l + margin - M_l * d_l,   sum_l d_l <= n_faces - 1
//! ```
//!
//! Before the binaries are created, every box is compared with the interval
//! hull of the states reachable at its step. Faces the robot cannot reach are
//! fixed shut, a box the robot cannot enter is dropped, and each `M_l` is the
//! smallest constant that deactivates its row over that hull.

use alloc::format;
use alloc::vec::Vec;
use core::time::Duration;

use nalgebra::{DMatrix, DVector};

use super::miqp::{solve_miqp, Miqp, MiqpOptions, MiqpStatus};
use crate::lattice::BoxRegion;
use crate::{Clock, Error, Result};

/// Point robot `x[t+1] = x[t] + B u[t]`, `u` in `input_box`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    /// `n x m`, row-major.
    pub input_gain: Vec<Vec<f64>>,
    pub input_box: BoxRegion,
}

impl RobotModel {
    /// `B = sample_time * I`.
    pub fn point_mass(sample_time: f64, input_box: BoxRegion) -> Result<Self> {
        if !(sample_time.is_finite() && sample_time > 0.0) {
            return Err(Error::invalid("sample time must be positive"));
        }
        let n = input_box.dim();
        let gain = (0..n)
            .map(|i| (0..n).map(|j| if i == j { sample_time } else { 0.0 }).collect())
            .collect();
        RobotModel::new(gain, input_box)
    }

    pub fn new(input_gain: Vec<Vec<f64>>, input_box: BoxRegion) -> Result<Self> {
        input_box.validate()?;
        let m = input_box.dim();
        if input_gain.is_empty() || input_gain.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("input gain must have {m} finite columns per row")));
        }
        Ok(RobotModel { input_gain, input_box })
    }

    pub fn state_dim(&self) -> usize {
        self.input_gain.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.input_gain
            .iter()
            .zip(x)
            .map(|(row, xi)| xi + row.iter().zip(u).map(|(b, v)| b * v).sum::<f64>())
            .collect()
    }

    /// Interval hull of the states reachable from `x0` in `t` steps.
    pub fn reach_hull(&self, x0: &[f64], t: usize) -> BoxRegion {
        let (lo, hi) = self.step_hull();
        BoxRegion {
            lo: x0.iter().zip(&lo).map(|(x, l)| x + t as f64 * l).collect(),
            hi: x0.iter().zip(&hi).map(|(x, h)| x + t as f64 * h).collect(),
        }
    }

    fn step_hull(&self) -> (Vec<f64>, Vec<f64>) {
        let u = &self.input_box;
        let mut lo = Vec::with_capacity(self.state_dim());
        let mut hi = Vec::with_capacity(self.state_dim());
        for row in &self.input_gain {
            let (mut l, mut h) = (0.0, 0.0);
            for (j, &b) in row.iter().enumerate() {
                let (a, c) = (b * u.lo[j], b * u.hi[j]);
                l += a.min(c);
                h += a.max(c);
            }
            lo.push(l);
            hi.push(h);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Objective {
    /// Sum of `(x - g)' Q (x - g)` over steps plus `u' R u` over inputs.
    #[default]
    Quadratic,
    /// Sum over steps of the L1 distance to the goal, through epigraph
    /// variables; the problem becomes a mixed-integer linear program up to a
    /// small proximal term.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub horizon: usize,
    /// `n x n`, symmetric positive semidefinite.
    pub cost_state: Vec<Vec<f64>>,
    /// `m x m`, symmetric positive definite.
    pub cost_input: Vec<Vec<f64>>,
    /// Supplied big-M constant; computed from the workspace when absent.
    pub big_m: Option<f64>,
    pub margin: f64,
    pub objective: Objective,
    /// Region over which the big-M constant must deactivate every row.
    pub workspace: BoxRegion,
}

impl PlanConfig {
    /// Horizon 5, `Q = I`, `R = 0.01 I`, margin `1e-6`.
    pub fn with_defaults(state_dim: usize, input_dim: usize, workspace: BoxRegion) -> Self {
        let eye = |n: usize, s: f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect()).collect()
        };
        PlanConfig {
            horizon: 5,
            cost_state: eye(state_dim, 1.0),
            cost_input: eye(input_dim, 0.01),
            big_m: None,
            margin: 1e-6,
            objective: Objective::Quadratic,
            workspace,
        }
    }
}

/// Proximal weight that keeps the linear objective mode strictly convex.
const LINEAR_MODE_PROXIMAL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub initial_state: Vec<f64>,
    pub goal: Vec<f64>,
    pub model: RobotModel,
    pub config: PlanConfig,
    /// Avoid regions for steps `1..=horizon` (index `t - 1`).
    pub avoid: Vec<Vec<BoxRegion>>,
    /// Big-M constant validated against the workspace.
    pub big_m: f64,
    miqp: Miqp,
    /// `(step, box)` of an avoid box that swallows every reachable state.
    blocked: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PlanStatus {
    Feasible,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct PlanSolution {
    pub status: PlanStatus,
    /// `u[0..horizon]`; empty without a usable plan.
    pub controls: Vec<Vec<f64>>,
    /// `x[0..=horizon]`; empty without a usable plan.
    pub states: Vec<Vec<f64>>,
    /// Per step, per avoid box, per face: `true` when the face constraint is
    /// relaxed. Derived from the states, so it certifies the plan.
    pub binaries: Vec<Vec<Vec<bool>>>,
    pub objective: f64,
    pub solve_time: Duration,
    pub nodes: usize,
    /// Number of binary variables in the solved program.
    pub binary_count: usize,
}

impl PlanSolution {
    pub fn has_plan(&self) -> bool {
        !self.controls.is_empty()
    }
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("{what} must be a finite {n} x {n} matrix")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::invalid(format!("{what} must be symmetric")));
    }
    Ok(m)
}

/// Smallest constant that makes every face row of a box inside `workspace`
/// inactive for every point of `workspace`.
pub fn required_big_m(workspace: &BoxRegion, margin: f64) -> f64 {
    // For an axis face, |p'y - q| is at most the workspace extent on that axis.
    let extent = workspace.lo.iter().zip(&workspace.hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    extent + margin
}

/// Default constant: twice the workspace diameter times the largest face
/// normal, plus the largest face offset.
pub fn default_big_m(workspace: &BoxRegion) -> f64 {
    let max_q = workspace.lo.iter().chain(&workspace.hi).fold(0.0f64, |a, v| a.max(v.abs()));
    2.0 * workspace.diameter() + max_q
}

impl PlanProblem {
    /// Materializes the mixed-integer program.
    ///
    /// `avoid[t - 1]` lists the boxes to avoid at step `t`. Boxes without
    /// interior are dropped with a warning.
    pub fn build(
        initial_state: Vec<f64>,
        goal: Vec<f64>,
        model: RobotModel,
        avoid: Vec<Vec<BoxRegion>>,
        config: PlanConfig,
    ) -> Result<Self> {
        let n = model.state_dim();
        let m = model.input_dim();
        let horizon = config.horizon;
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least one"));
        }
        if initial_state.len() != n || goal.len() != n {
            return Err(Error::invalid(format!("initial state and goal must have {n} coordinates")));
        }
        if initial_state.iter().chain(&goal).any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state and goal must be finite"));
        }
        if avoid.len() != horizon {
            return Err(Error::invalid(format!("expected avoid sets for {horizon} steps, got {}", avoid.len())));
        }
        if !(config.margin.is_finite() && config.margin > 0.0) {
            return Err(Error::invalid("margin must be positive"));
        }
        config.workspace.validate()?;
        if config.workspace.dim() != n {
            return Err(Error::invalid("workspace dimension does not match the state"));
        }
        let q = square(&config.cost_state, n, "state cost")?;
        let r = square(&config.cost_input, m, "input cost")?;
        if r.clone().cholesky().is_none() {
            return Err(Error::invalid("input cost must be positive definite"));
        }
        if q.clone().symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
            return Err(Error::invalid("state cost must be positive semidefinite"));
        }
        let required = required_big_m(&config.workspace, config.margin);
        let big_m = match config.big_m {
            Some(v) if !(v.is_finite() && v >= required) => {
                return Err(Error::BadBigM { supplied: v, required });
            }
            Some(v) => v,
            None => default_big_m(&config.workspace).max(required),
        };

        let nu = horizon * m;
        let b = DMatrix::from_fn(n, m, |i, j| model.input_gain[i][j]);
        // x[t] = x0 + S_t U with S_t = [B .. B 0 .. 0] (t copies).
        let s_mat = |t: usize| -> DMatrix<f64> {
            let mut s = DMatrix::zeros(n, nu);
            for k in 0..t {
                s.view_mut((0, k * m), (n, m)).copy_from(&b);
            }
            s
        };
        let x0 = DVector::from_column_slice(&initial_state);
        let g = DVector::from_column_slice(&goal);
        let e0 = &x0 - &g;

        let n_epi = if config.objective == Objective::Linear { horizon * n } else { 0 };
        let n_cont = nu + n_epi;
        let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(n_cont);
        for _ in 0..horizon {
            for j in 0..m {
                bounds.push((model.input_box.lo[j], model.input_box.hi[j]));
            }
        }
        bounds.extend(core::iter::repeat_n((0.0, f64::INFINITY), n_epi));

        // Continuous rows first; box rows are appended once binaries are known.
        let mut rows: Vec<(Vec<f64>, Vec<(usize, f64)>, f64)> = Vec::new();
        let (h_cont, c_cont, constant) = match config.objective {
            Objective::Quadratic => {
                let mut h = DMatrix::zeros(n_cont, n_cont);
                let mut c = DVector::zeros(n_cont);
                for t in 1..=horizon {
                    let s = s_mat(t);
                    h += 2.0 * s.transpose() * &q * &s;
                    c += 2.0 * s.transpose() * &q * &e0;
                }
                for k in 0..horizon {
                    let mut blk = h.view_mut((k * m, k * m), (m, m));
                    blk += 2.0 * &r;
                }
                let constant = (horizon + 1) as f64 * (e0.transpose() * &q * &e0)[(0, 0)];
                (h, c, constant)
            }
            Objective::Linear => {
                let mut h = DMatrix::identity(n_cont, n_cont) * LINEAR_MODE_PROXIMAL;
                let mut c = DVector::zeros(n_cont);
                for k in 0..n_epi {
                    c[nu + k] = 1.0;
                }
                for k in 0..horizon {
                    let mut blk = h.view_mut((k * m, k * m), (m, m));
                    blk += 2.0 * &r;
                }
                // e[t,i] >= +-(x[t,i] - g[i]).
                for t in 1..=horizon {
                    let s = s_mat(t);
                    for i in 0..n {
                        let e = nu + (t - 1) * n + i;
                        for sign in [1.0, -1.0] {
                            let mut a = alloc::vec![0.0; n_cont];
                            for j in 0..nu {
                                a[j] = -sign * s[(i, j)];
                            }
                            a[e] = 1.0;
                            rows.push((a, Vec::new(), sign * e0[i]));
                        }
                    }
                }
                let l1: f64 = e0.iter().map(|v| v.abs()).sum();
                (h, c, l1)
            }
        };

        let margin = config.margin;
        let mut blocked = None;
        let mut n_bin = 0usize;
        for (ti, boxes) in avoid.iter().enumerate() {
            let t = ti + 1;
            let hull = model.reach_hull(&initial_state, t);
            let s = s_mat(t);
            let sx0 = &x0;
            for (bi, region) in boxes.iter().enumerate() {
                region.validate()?;
                if region.dim() != n {
                    return Err(Error::invalid("avoid box dimension does not match the state"));
                }
                if !region.has_interior() {
                    log::warn!("dropping avoid box {bi} at step {t}: it has no interior");
                    continue;
                }
                let mut faces = Vec::new();
                let mut redundant = false;
                for (p, qv) in region.faces() {
                    // Range of p'y over the hull.
                    let (mut lo, mut hi) = (0.0, 0.0);
                    for k in 0..n {
                        let (a, c) = (p[k] * hull.lo[k], p[k] * hull.hi[k]);
                        lo += a.min(c);
                        hi += a.max(c);
                    }
                    let need = qv + margin;
                    if lo >= need {
                        redundant = true;
                        break;
                    }
                    if hi >= need {
                        // M must cover the worst point of the hull.
                        let m_row = (need - lo) * (1.0 + 1e-9) + 1e-12;
                        faces.push((p, qv, m_row));
                    }
                }
                if redundant {
                    continue;
                }
                if faces.is_empty() {
                    blocked.get_or_insert((t, bi));
                    continue;
                }
                let single = faces.len() == 1;
                let first_bin = n_bin;
                for (p, qv, m_row) in faces {
                    let mut a = alloc::vec![0.0; n_cont];
                    for j in 0..nu {
                        a[j] = (0..n).map(|k| p[k] * s[(k, j)]).sum();
                    }
                    let rhs = qv + margin - (0..n).map(|k| p[k] * sx0[k]).sum::<f64>();
                    if single {
                        rows.push((a, Vec::new(), rhs));
                    } else {
                        rows.push((a, alloc::vec![(n_bin, m_row)], rhs));
                        n_bin += 1;
                    }
                }
                if !single {
                    // At most k - 1 of the k reachable faces may be relaxed.
                    let k = n_bin - first_bin;
                    let bins = (first_bin..n_bin).map(|j| (j, -1.0)).collect();
                    rows.push((alloc::vec![0.0; n_cont], bins, -(k as f64 - 1.0)));
                }
            }
        }

        let nv = n_cont + n_bin;
        let mut hessian = DMatrix::zeros(nv, nv);
        hessian.view_mut((0, 0), (n_cont, n_cont)).copy_from(&h_cont);
        let mut linear = DVector::zeros(nv);
        linear.rows_mut(0, n_cont).copy_from(&c_cont);
        let mut a = DMatrix::zeros(rows.len(), nv);
        let mut bvec = DVector::zeros(rows.len());
        for (i, (cont, bins, rhs)) in rows.iter().enumerate() {
            for (j, v) in cont.iter().enumerate() {
                a[(i, j)] = *v;
            }
            for &(j, v) in bins {
                a[(i, n_cont + j)] = v;
            }
            bvec[i] = *rhs;
        }
        let miqp = Miqp { n_cont, n_bin, hessian, linear, constant, rows: a, rhs: bvec, bounds };
        Ok(PlanProblem {
            initial_state,
            goal,
            model,
            config,
            avoid,
            big_m,
            miqp,
            blocked,
        })
    }

    /// Number of binaries left after presolve.
    pub fn binary_count(&self) -> usize {
        self.miqp.n_bin
    }

    /// The underlying mixed-integer program over stacked inputs and binaries.
    pub fn program(&self) -> &Miqp {
        &self.miqp
    }

    /// Solves to global optimality unless the node or time limits hit first.
    pub fn solve<C: Clock>(&self, options: &MiqpOptions, clock: &C) -> Result<PlanSolution> {
        let start = clock.now();
        let empty = |status, nodes| PlanSolution {
            status,
            controls: Vec::new(),
            states: Vec::new(),
            binaries: Vec::new(),
            objective: f64::INFINITY,
            solve_time: clock.now().saturating_sub(start),
            nodes,
            binary_count: self.miqp.n_bin,
        };
        if let Some((t, b)) = self.blocked {
            log::debug!("avoid box {b} at step {t} covers every reachable state");
            return Ok(empty(PlanStatus::Infeasible, 0));
        }
        let sol = solve_miqp(&self.miqp, options, clock)?;
        let status = match sol.status {
            MiqpStatus::Optimal => PlanStatus::Feasible,
            MiqpStatus::Infeasible => PlanStatus::Infeasible,
            MiqpStatus::Timeout => PlanStatus::Timeout,
        };
        if !sol.has_incumbent() {
            return Ok(empty(status, sol.nodes));
        }
        let m = self.model.input_dim();
        let ib = &self.model.input_box;
        let controls: Vec<Vec<f64>> = (0..self.config.horizon)
            .map(|k| (0..m).map(|j| sol.x[k * m + j].clamp(ib.lo[j], ib.hi[j])).collect())
            .collect();
        let mut out = self.evaluate(controls);
        out.status = status;
        out.nodes = sol.nodes;
        out.solve_time = clock.now().saturating_sub(start);
        Ok(out)
    }

    /// Rolls out `controls` and derives cost and face certificate.
    pub fn evaluate(&self, controls: Vec<Vec<f64>>) -> PlanSolution {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(self.initial_state.clone());
        for u in &controls {
            let next = self.model.step(states.last().unwrap(), u);
            states.push(next);
        }
        let binaries = self
            .avoid
            .iter()
            .enumerate()
            .map(|(ti, boxes)| {
                boxes
                    .iter()
                    .map(|b| {
                        b.faces()
                            .iter()
                            .map(|(p, q)| dot(p, &states[ti + 1]) < q + self.config.margin - 1e-9)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let objective = self.cost(&states, &controls);
        PlanSolution {
            status: PlanStatus::Feasible,
            controls,
            states,
            binaries,
            objective,
            solve_time: Duration::ZERO,
            nodes: 0,
            binary_count: self.miqp.n_bin,
        }
    }

    fn cost(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> f64 {
        let q = &self.config.cost_state;
        let r = &self.config.cost_input;
        let quad = |mat: &[Vec<f64>], v: &[f64]| -> f64 {
            mat.iter().enumerate().map(|(i, row)| v[i] * dot(row, v)).sum()
        };
        let input: f64 = controls.iter().map(|u| quad(r, u)).sum();
        match self.config.objective {
            Objective::Quadratic => {
                let state: f64 = states
                    .iter()
                    .map(|x| {
                        let e: Vec<f64> = x.iter().zip(&self.goal).map(|(a, b)| a - b).collect();
                        quad(q, &e)
                    })
                    .sum();
                state + input
            }
            Objective::Linear => {
                let l1: f64 = states
                    .iter()
                    .map(|x| x.iter().zip(&self.goal).map(|(a, b)| (a - b).abs()).sum::<f64>())
                    .sum();
                l1 + input
            }
        }
    }

    /// Checks a plan against dynamics, input bounds and every avoid box,
    /// returning a description of the first violation.
    pub fn verify(&self, sol: &PlanSolution) -> core::result::Result<(), alloc::string::String> {
        if sol.controls.len() != self.config.horizon || sol.states.len() != self.config.horizon + 1 {
            return Err("plan length does not match the horizon".into());
        }
        let tol = 1e-9;
        for (k, u) in sol.controls.iter().enumerate() {
            if !self.model.input_box.inflate(tol).contains(u) {
                return Err(format!("input {k} leaves the input box"));
            }
            let next = self.model.step(&sol.states[k], u);
            if next.iter().zip(&sol.states[k + 1]).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Err(format!("state {} does not follow the dynamics", k + 1));
            }
        }
        for (ti, boxes) in self.avoid.iter().enumerate() {
            let x = &sol.states[ti + 1];
            for (bi, b) in boxes.iter().enumerate() {
                if !b.has_interior() {
                    continue;
                }
                let ok = b.faces().iter().any(|(p, q)| dot(p, x) >= q + self.config.margin - tol);
                if !ok {
                    return Err(format!("state {} is inside avoid box {bi}", ti + 1));
                }
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
