//! Branch-and-bound for mixed-binary convex quadratic programs.
//!
//! ```text
//! minimize    1/2 v' H v + c' v + k
//! subject to  A v >= b,  lo <= x <= hi,  d in {0,1}^p,  v = (x, d)
//! ```
//!
//! Each node fixes some binaries, substitutes them out, relaxes the rest to
//! `[0, 1]` and solves the resulting QP with [`solve_qp`]. The tree is
//! explored depth first, branching on the most fractional binary and
//! visiting the child nearer to the relaxed value first.

use alloc::vec::Vec;
use core::time::Duration;

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpStatus, FEASIBILITY_TOLERANCE};
use crate::{Clock, Error, Result};

const INTEGRALITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Miqp {
    /// Continuous variables come first, then `n_bin` binaries.
    pub n_cont: usize,
    pub n_bin: usize,
    /// Positive semidefinite, and positive definite on the continuous block.
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Bounds on the continuous variables; infinite entries are allowed.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct MiqpOptions {
    pub node_limit: usize,
    pub time_budget: Option<Duration>,
    /// Ridge added to relaxed binaries so the node QPs stay strictly convex.
    /// Lower bounds are corrected for it.
    pub regularization: f64,
    /// Relative optimality gap used for pruning.
    pub relative_gap: f64,
}

impl Default for MiqpOptions {
    fn default() -> Self {
        MiqpOptions { node_limit: 200_000, time_budget: None, regularization: 1e-8, relative_gap: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
    /// Limits were reached; the best incumbent, if any, is returned.
    Timeout,
}

#[derive(Debug, Clone)]
pub struct MiqpSolution {
    pub status: MiqpStatus,
    /// Continuous part of the best solution (empty without an incumbent).
    pub x: Vec<f64>,
    pub binaries: Vec<bool>,
    pub objective: f64,
    pub nodes: usize,
}

impl MiqpSolution {
    pub fn has_incumbent(&self) -> bool {
        self.objective.is_finite()
    }
}

/// Node subproblem with some binaries fixed.
struct Relaxation {
    free: Vec<usize>,
    h: DMatrix<f64>,
    c: DVector<f64>,
    constant: f64,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Miqp {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_cont + self.n_bin;
        if self.hessian.nrows() != n || self.hessian.ncols() != n || self.linear.len() != n {
            return Err(Error::invalid("objective dimensions do not match the variable count"));
        }
        if self.rows.nrows() != self.rhs.len() || (self.rows.nrows() > 0 && self.rows.ncols() != n) {
            return Err(Error::invalid("constraint dimensions do not match the variable count"));
        }
        if self.bounds.len() != self.n_cont {
            return Err(Error::invalid("one bound pair is needed per continuous variable"));
        }
        if self.bounds.iter().any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::invalid("continuous bounds must satisfy lo <= hi"));
        }
        Ok(())
    }

    /// Objective of `(x, d)` including the constant.
    pub fn evaluate(&self, x: &[f64], d: &[bool]) -> f64 {
        let v = self.join(x, d);
        0.5 * (&self.hessian * &v).dot(&v) + self.linear.dot(&v) + self.constant
    }

    /// Largest violation of any row or bound at `(x, d)`.
    pub fn max_violation(&self, x: &[f64], d: &[bool]) -> f64 {
        let v = self.join(x, d);
        let mut worst = 0.0f64;
        if self.rows.nrows() > 0 {
            let s = &self.rows * &v - &self.rhs;
            for i in 0..s.len() {
                let scale = self.rows.row(i).norm().max(1e-300);
                worst = worst.max(-s[i] / scale);
            }
        }
        for (k, (l, h)) in self.bounds.iter().enumerate() {
            worst = worst.max(l - x[k]).max(x[k] - h);
        }
        worst
    }

    fn join(&self, x: &[f64], d: &[bool]) -> DVector<f64> {
        DVector::from_iterator(
            self.n_cont + self.n_bin,
            x.iter().copied().chain(d.iter().map(|&b| if b { 1.0 } else { 0.0 })),
        )
    }

    /// Builds the node QP. `None` when a row is violated whatever the free
    /// variables do.
    fn relax(&self, fixed: &[Option<bool>], rho: f64) -> Option<Relaxation> {
        let nc = self.n_cont;
        let free: Vec<usize> = (0..self.n_bin).filter(|&j| fixed[j].is_none()).collect();
        // Variable map into the node problem: continuous, then free binaries.
        let cols: Vec<usize> = (0..nc).chain(free.iter().map(|&j| nc + j)).collect();
        let nv = cols.len();
        let fixed_vals: Vec<(usize, f64)> = (0..self.n_bin)
            .filter_map(|j| fixed[j].map(|b| (nc + j, if b { 1.0 } else { 0.0 })))
            .collect();

        let mut h = DMatrix::from_fn(nv, nv, |i, j| self.hessian[(cols[i], cols[j])]);
        for k in nc..nv {
            h[(k, k)] += rho;
        }
        let mut c = DVector::from_fn(nv, |i, _| self.linear[cols[i]]);
        let mut constant = self.constant;
        for &(gi, v) in &fixed_vals {
            if v == 0.0 {
                continue;
            }
            constant += self.linear[gi] * v;
            for &(gj, w) in &fixed_vals {
                constant += 0.5 * self.hessian[(gi, gj)] * v * w;
            }
            for i in 0..nv {
                c[i] += self.hessian[(cols[i], gi)] * v;
            }
        }

        // Interval bounds of each node variable, for presolve.
        let var_bounds: Vec<(f64, f64)> =
            (0..nv).map(|i| if i < nc { self.bounds[i] } else { (0.0, 1.0) }).collect();
        let mut a_rows: Vec<f64> = Vec::new();
        let mut b_rows: Vec<f64> = Vec::new();
        for r in 0..self.rows.nrows() {
            let mut rhs = self.rhs[r];
            for &(g, v) in &fixed_vals {
                rhs -= self.rows[(r, g)] * v;
            }
            let (mut lo, mut hi) = (0.0f64, 0.0f64);
            let mut scale = 0.0f64;
            for (i, &g) in cols.iter().enumerate() {
                let a = self.rows[(r, g)];
                if a == 0.0 {
                    continue;
                }
                scale = scale.max(a.abs());
                let (l, u) = var_bounds[i];
                if a > 0.0 {
                    lo += a * l;
                    hi += a * u;
                } else {
                    lo += a * u;
                    hi += a * l;
                }
            }
            let tol = FEASIBILITY_TOLERANCE * scale.max(1.0);
            if lo >= rhs - tol * 1e-3 {
                continue;
            }
            if hi < rhs - tol {
                return None;
            }
            for &g in &cols {
                a_rows.push(self.rows[(r, g)]);
            }
            b_rows.push(rhs);
        }
        for (i, &(l, u)) in var_bounds.iter().enumerate() {
            if l.is_finite() {
                let mut row = alloc::vec![0.0; nv];
                row[i] = 1.0;
                a_rows.extend(row);
                b_rows.push(l);
            }
            if u.is_finite() {
                let mut row = alloc::vec![0.0; nv];
                row[i] = -1.0;
                a_rows.extend(row);
                b_rows.push(-u);
            }
        }
        let m = b_rows.len();
        Some(Relaxation {
            free,
            h,
            c,
            constant,
            a: DMatrix::from_row_slice(m, nv, &a_rows),
            b: DVector::from_vec(b_rows),
        })
    }
}

/// Branch-and-bound driver.
pub fn solve_miqp<C: Clock>(p: &Miqp, options: &MiqpOptions, clock: &C) -> Result<MiqpSolution> {
    p.validate()?;
    let start = clock.now();
    let nc = p.n_cont;
    let mut best = MiqpSolution {
        status: MiqpStatus::Infeasible,
        x: Vec::new(),
        binaries: Vec::new(),
        objective: f64::INFINITY,
        nodes: 0,
    };
    let mut stack: Vec<Vec<Option<bool>>> = alloc::vec![alloc::vec![None; p.n_bin]];
    let mut timed_out = false;
    while let Some(fixed) = stack.pop() {
        if best.nodes >= options.node_limit
            || options.time_budget.is_some_and(|b| clock.now().saturating_sub(start) > b)
        {
            timed_out = true;
            break;
        }
        best.nodes += 1;
        let Some(node) = p.relax(&fixed, options.regularization) else {
            continue;
        };
        let sol = solve_qp(&node.h, &node.c, &node.a, &node.b)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => continue,
            QpStatus::IterationLimit => {
                log::warn!("node relaxation hit the iteration limit; treating it as infeasible");
                continue;
            }
        }
        let bias = 0.5 * options.regularization * node.free.len() as f64;
        let bound = sol.objective + node.constant - bias;
        if bound >= best.objective - options.relative_gap * best.objective.abs().max(1.0) {
            continue;
        }
        // Most fractional free binary; ties go to the lowest index.
        let mut branch = None;
        let mut best_dist = 0.5 - INTEGRALITY_TOLERANCE;
        for (k, &j) in node.free.iter().enumerate() {
            let v = sol.x[nc + k];
            let dist = (v - 0.5).abs();
            if dist < best_dist {
                best_dist = dist;
                branch = Some((j, v));
            }
        }
        if branch.is_none() {
            // Integral within tolerance: fix everything and solve exactly.
            let mut all = fixed.clone();
            for (k, &j) in node.free.iter().enumerate() {
                all[j] = Some(sol.x[nc + k] >= 0.5);
            }
            if let Some(exact) = p.relax(&all, 0.0) {
                let s = solve_qp(&exact.h, &exact.c, &exact.a, &exact.b)?;
                if s.status == QpStatus::Optimal {
                    let obj = s.objective + exact.constant;
                    if obj < best.objective {
                        best.objective = obj;
                        best.x = s.x.iter().copied().collect();
                        best.binaries = all.iter().map(|b| b.unwrap()).collect();
                    }
                    continue;
                }
            }
            // Rounding broke feasibility; keep branching on the least integral one.
            let mut worst = -1.0;
            for (k, &j) in node.free.iter().enumerate() {
                let v = sol.x[nc + k];
                let dist = v.min(1.0 - v).abs();
                if dist > worst {
                    worst = dist;
                    branch = Some((j, v));
                }
            }
        }
        let Some((j, v)) = branch else { continue };
        let mut down = fixed.clone();
        down[j] = Some(false);
        let mut up = fixed;
        up[j] = Some(true);
        if v >= 0.5 {
            stack.push(down);
            stack.push(up);
        } else {
            stack.push(up);
            stack.push(down);
        }
    }
    best.status = match (timed_out, best.has_incumbent()) {
        (true, _) => MiqpStatus::Timeout,
        (false, true) => MiqpStatus::Optimal,
        (false, false) => MiqpStatus::Infeasible,
    };
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NoClock;
    use alloc::vec;

    /// min (x - 0.5)^2 + d0 + 2 d1  s.t. x <= d0 + d1 - 0.5, x in [0, 2].
    fn small() -> Miqp {
        Miqp {
            n_cont: 1,
            n_bin: 2,
            hessian: DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            linear: DVector::from_row_slice(&[-1.0, 1.0, 2.0]),
            constant: 0.25,
            rows: DMatrix::from_row_slice(1, 3, &[-1.0, 1.0, 1.0]),
            rhs: DVector::from_row_slice(&[0.5]),
            bounds: vec![(0.0, 2.0)],
        }
    }

    #[test]
    fn solves_a_small_instance() {
        let s = solve_miqp(&small(), &MiqpOptions::default(), &NoClock).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        // d0 = 1 allows x = 0.5, cost 1.
        assert_eq!(s.binaries, vec![true, false]);
        assert!((s.x[0] - 0.5).abs() < 1e-9);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((small().evaluate(&s.x, &s.binaries) - s.objective).abs() < 1e-9);
    }

    #[test]
    fn reports_infeasibility() {
        let mut p = small();
        // x >= 3 cannot hold inside [0, 2].
        p.rows = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        p.rhs = DVector::from_row_slice(&[3.0]);
        let s = solve_miqp(&p, &MiqpOptions::default(), &NoClock).unwrap();
        assert_eq!(s.status, MiqpStatus::Infeasible);
        assert!(!s.has_incumbent());
    }

    #[test]
    fn node_limit_gives_timeout() {
        let opts = MiqpOptions { node_limit: 0, ..MiqpOptions::default() };
        let s = solve_miqp(&small(), &opts, &NoClock).unwrap();
        assert_eq!(s.status, MiqpStatus::Timeout);
    }

    #[test]
    fn pure_continuous_problem() {
        let p = Miqp {
            n_cont: 2,
            n_bin: 0,
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_row_slice(&[-1.0, -1.0]),
            constant: 0.0,
            rows: DMatrix::zeros(0, 2),
            rhs: DVector::zeros(0),
            bounds: vec![(f64::NEG_INFINITY, 0.5), (0.0, f64::INFINITY)],
        };
        let s = solve_miqp(&p, &MiqpOptions::default(), &NoClock).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.nodes, 1);
    }
}
