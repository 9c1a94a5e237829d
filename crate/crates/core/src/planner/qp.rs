//! Dense strictly convex quadratic programs
//!
//! ```text
//! minimize    1/2 x' H x + c' x
//! subject to  A x >= b
//! ```
//!
//! solved with the Goldfarb-Idnani dual active-set method. The method starts
//! from the unconstrained minimizer and adds violated constraints one at a
//! time, keeping the iterate optimal for the current active set, so
//! infeasibility is detected when a violated constraint cannot be added.
//! Factorizations are updated with Givens rotations; pivoting is
//! deterministic (most violated constraint, lowest index on ties).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{math, Error, Result};

/// Constraint violation tolerance after rows are scaled to unit norm.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    /// The iteration cap was hit, which points to severe degeneracy.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Indices of the constraints active at the solution.
    pub active: Vec<usize>,
}

/// Solves the QP; `h` must be symmetric positive definite.
pub fn solve_qp(h: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<QpSolution> {
    let n = h.nrows();
    let m = a.nrows();
    if h.ncols() != n || c.len() != n || (m > 0 && a.ncols() != n) || b.len() != m {
        return Err(Error::invalid("QP dimensions are inconsistent"));
    }
    if n == 0 {
        let infeasible = b.iter().any(|&v| v > FEASIBILITY_TOLERANCE);
        return Ok(QpSolution {
            status: if infeasible { QpStatus::Infeasible } else { QpStatus::Optimal },
            x: DVector::zeros(0),
            objective: 0.0,
            active: Vec::new(),
        });
    }
    let chol = h.clone().cholesky().ok_or_else(|| Error::invalid("QP Hessian is not positive definite"))?;

    // Unit-norm rows, stored as columns so each one is contiguous; all-zero
    // rows are either trivially satisfied or infeasible.
    let mut rows = DMatrix::zeros(n, m);
    let mut rhs = DVector::zeros(m);
    let mut usable = alloc::vec![true; m];
    for i in 0..m {
        let norm = a.row(i).norm();
        if norm <= 1e-14 {
            usable[i] = false;
            if b[i] > FEASIBILITY_TOLERANCE {
                return Ok(QpSolution {
                    status: QpStatus::Infeasible,
                    x: DVector::zeros(n),
                    objective: f64::INFINITY,
                    active: Vec::new(),
                });
            }
            continue;
        }
        for j in 0..n {
            rows[(j, i)] = a[(i, j)] / norm;
        }
        rhs[i] = b[i] / norm;
    }

    // J = L^{-T}, so that J J' = H^{-1}.
    let l = chol.l();
    let mut jm = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::invalid("QP Hessian is singular"))?;
    let mut x = -chol.solve(c);

    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut r_norm = 1.0f64;
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut u: Vec<f64> = Vec::with_capacity(n + 1);
    let mut is_active = alloc::vec![false; m];
    let mut excluded = alloc::vec![false; m];
    let mut d = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut rv: Vec<f64> = Vec::with_capacity(n);
    let slack = |x: &DVector<f64>, i: usize| rows.column(i).dot(x) - rhs[i];

    let max_iter = 50 * (n + m) + 100;
    let mut iter = 0usize;
    'outer: loop {
        // Pick the most violated inactive constraint.
        let mut ip = None;
        let mut worst = -FEASIBILITY_TOLERANCE;
        for i in 0..m {
            if !usable[i] || is_active[i] || excluded[i] {
                continue;
            }
            let s = slack(&x, i);
            if s < worst {
                worst = s;
                ip = Some(i);
            }
        }
        let Some(ip) = ip else {
            if excluded.iter().any(|&e| e) {
                // Degenerate constraints were skipped; make sure they hold.
                for i in 0..m {
                    if usable[i] && slack(&x, i) < -FEASIBILITY_TOLERANCE * 10.0 {
                        return Ok(fail(QpStatus::Infeasible, n));
                    }
                }
            }
            break;
        };
        let np = rows.column(ip).into_owned();
        let x_saved = x.clone();
        let u_saved = u.clone();
        let active_saved = active.clone();
        u.push(0.0);
        loop {
            iter += 1;
            if iter > max_iter {
                return Ok(fail(QpStatus::IterationLimit, n));
            }
            let q = active.len();
            // d = J' n+, z = J2 d2, r = R^{-1} d1.
            jm.tr_mul_to(&np, &mut d);
            z.fill(0.0);
            for k in q..n {
                for i in 0..n {
                    z[i] += jm[(i, k)] * d[k];
                }
            }
            rv.clear();
            rv.resize(q, 0.0);
            for i in (0..q).rev() {
                let mut s = d[i];
                for j in i + 1..q {
                    s -= r[(i, j)] * rv[j];
                }
                rv[i] = s / r[(i, i)];
            }
            // Largest dual step keeping multipliers non-negative.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for k in 0..q {
                if rv[k] > 0.0 {
                    let ratio = u[k] / rv[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let t2 = if z.norm_squared() > 1e-20 && zn > 0.0 { -slack(&x, ip) / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Ok(fail(QpStatus::Infeasible, n));
            }
            if !t2.is_finite() {
                // Pure dual step: the new constraint is parallel to the active ones.
                for k in 0..q {
                    u[k] -= t * rv[k];
                }
                u[q] += t;
                let k = drop_at.unwrap();
                is_active[active[k]] = false;
                delete_constraint(&mut r, &mut jm, &mut active, &mut u, k);
                continue;
            }
            x.axpy(t, &z, 1.0);
            for k in 0..q {
                u[k] -= t * rv[k];
            }
            u[q] += t;
            if t == t2 {
                if add_constraint(&mut r, &mut jm, &mut d, q, &mut r_norm) {
                    active.push(ip);
                    is_active[ip] = true;
                } else {
                    // Linearly dependent on the active set: skip it and restore.
                    excluded[ip] = true;
                    for &i in &active {
                        is_active[i] = false;
                    }
                    x = x_saved;
                    u = u_saved;
                    active = active_saved;
                    // The factorization must match the restored active set.
                    rebuild(&l, &rows, &mut active, &mut u, &mut jm, &mut r, &mut r_norm)?;
                    for &i in &active {
                        is_active[i] = true;
                    }
                }
                continue 'outer;
            }
            // Partial step: drop the blocking constraint and retry.
            let k = drop_at.unwrap();
            is_active[active[k]] = false;
            delete_constraint(&mut r, &mut jm, &mut active, &mut u, k);
        }
    }
    let objective = objective(h, c, &x);
    Ok(QpSolution { status: QpStatus::Optimal, x, objective, active })
}

fn fail(status: QpStatus, n: usize) -> QpSolution {
    QpSolution { status, x: DVector::zeros(n), objective: f64::INFINITY, active: Vec::new() }
}

fn objective(h: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * (h * x).dot(x) + c.dot(x)
}

/// Rotates `d` so that only its first `q + 1` entries are non-zero, applying
/// the same rotations to the columns of `J`, and appends it to `R`.
fn add_constraint(r: &mut DMatrix<f64>, jm: &mut DMatrix<f64>, d: &mut DVector<f64>, q: usize, r_norm: &mut f64) -> bool {
    let n = d.len();
    let mut j = n - 1;
    while j > q {
        let mut cc = d[j - 1];
        let mut ss = d[j];
        let h = math::hypot(cc, ss);
        if h != 0.0 {
            d[j] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[j - 1] = -h;
            } else {
                d[j - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = jm[(k, j - 1)];
                let t2 = jm[(k, j)];
                jm[(k, j - 1)] = t1 * cc + t2 * ss;
                jm[(k, j)] = xny * (t1 + jm[(k, j - 1)]) - t2;
            }
        }
        j -= 1;
    }
    for i in 0..=q {
        r[(i, q)] = d[i];
    }
    if d[q].abs() <= f64::EPSILON * *r_norm {
        for i in 0..=q {
            r[(i, q)] = 0.0;
        }
        return false;
    }
    *r_norm = r_norm.max(d[q].abs());
    true
}

/// Removes active constraint `k` and restores the triangular form of `R`.
/// `u` carries one extra trailing multiplier for the constraint being added.
fn delete_constraint(r: &mut DMatrix<f64>, jm: &mut DMatrix<f64>, active: &mut Vec<usize>, u: &mut Vec<f64>, k: usize) {
    let n = jm.nrows();
    let q = active.len();
    active.remove(k);
    u.remove(k);
    for col in k..q - 1 {
        for i in 0..n {
            r[(i, col)] = r[(i, col + 1)];
        }
    }
    for i in 0..n {
        r[(i, q - 1)] = 0.0;
    }
    let q = q - 1;
    for j in k..q {
        let mut cc = r[(j, j)];
        let mut ss = r[(j + 1, j)];
        let h = math::hypot(cc, ss);
        if h == 0.0 {
            continue;
        }
        cc /= h;
        ss /= h;
        r[(j + 1, j)] = 0.0;
        if cc < 0.0 {
            r[(j, j)] = -h;
            cc = -cc;
            ss = -ss;
        } else {
            r[(j, j)] = h;
        }
        let xny = ss / (1.0 + cc);
        for c in j + 1..q {
            let t1 = r[(j, c)];
            let t2 = r[(j + 1, c)];
            r[(j, c)] = t1 * cc + t2 * ss;
            r[(j + 1, c)] = xny * (t1 + r[(j, c)]) - t2;
        }
        for i in 0..n {
            let t1 = jm[(i, j)];
            let t2 = jm[(i, j + 1)];
            jm[(i, j)] = t1 * cc + t2 * ss;
            jm[(i, j + 1)] = xny * (jm[(i, j)] + t1) - t2;
        }
    }
}

/// Refactors `J` and `R` from scratch for the given active set. Rows that
/// turn out numerically dependent on earlier ones are dropped together with
/// their multipliers; the rotations already applied only mix the free
/// columns of `J`, so the factorization stays valid.
fn rebuild(
    l: &DMatrix<f64>,
    rows: &DMatrix<f64>,
    active: &mut Vec<usize>,
    u: &mut Vec<f64>,
    jm: &mut DMatrix<f64>,
    r: &mut DMatrix<f64>,
    r_norm: &mut f64,
) -> Result<()> {
    let n = l.nrows();
    *jm = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::invalid("QP Hessian is singular"))?;
    r.fill(0.0);
    *r_norm = 1.0;
    let mut d = DVector::zeros(n);
    let mut k = 0;
    while k < active.len() {
        let np = rows.column(active[k]);
        jm.tr_mul_to(&np, &mut d);
        if add_constraint(r, jm, &mut d, k, r_norm) {
            k += 1;
        } else {
            active.remove(k);
            u.remove(k);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn qp(h: &[f64], c: &[f64], a: &[f64], b: &[f64]) -> QpSolution {
        let n = c.len();
        let m = b.len();
        solve_qp(
            &DMatrix::from_row_slice(n, n, h),
            &DVector::from_row_slice(c),
            &DMatrix::from_row_slice(m, n, a),
            &DVector::from_row_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_minimum() {
        let s = qp(&[2.0, 0.0, 0.0, 4.0], &[-2.0, -4.0], &[], &[]);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_a_halfplane() {
        // min |x - (2, 2)|^2 / 2 s.t. x1 + x2 <= 2.
        let s = qp(&[1.0, 0.0, 0.0, 1.0], &[-2.0, -2.0], &[-1.0, -1.0], &[-2.0]);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn corner_of_a_box() {
        // min |x - (3, -3)|^2 / 2 over [0,1]^2.
        let a = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let b = [0.0, -1.0, 0.0, -1.0];
        let s = qp(&[1.0, 0.0, 0.0, 1.0], &[-3.0, 3.0], &a, &b);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let s = qp(&[1.0], &[0.0], &[1.0, -1.0], &[1.0, 0.0]);
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn handles_redundant_and_duplicate_rows() {
        let a = [1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 0.0];
        let b = [1.0, 2.0, 1.0, -5.0];
        let s = qp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], &a, &b);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-9 && (s.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_row_infeasible() {
        let s = qp(&[1.0], &[0.0], &[0.0], &[1.0]);
        assert_eq!(s.status, QpStatus::Infeasible);
        let s = qp(&[1.0], &[0.0], &[0.0], &[-1.0]);
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let r = solve_qp(
            &DMatrix::from_row_slice(1, 1, &[-1.0]),
            &DVector::from_row_slice(&[0.0]),
            &DMatrix::zeros(0, 1),
            &DVector::zeros(0),
        );
        assert!(r.is_err());
    }

    /// Optimality check through the KKT conditions: feasibility, and a
    /// gradient that is a non-negative combination of the active rows,
    /// verified by projecting onto the active rows with least squares.
    fn kkt_holds(h: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> bool {
        let g = h * x + c;
        let slack = a * x - b;
        if slack.iter().any(|&s| s < -1e-7) {
            return false;
        }
        let act: Vec<usize> = (0..b.len()).filter(|&i| slack[i].abs() <= 1e-7).collect();
        if act.is_empty() {
            return g.norm() <= 1e-7;
        }
        let at = DMatrix::from_fn(x.len(), act.len(), |i, j| a[(act[j], i)]);
        let svd = at.clone().svd(true, true);
        let lam = svd.solve(&g, 1e-12).unwrap();
        (at * &lam - g).norm() <= 1e-6 && lam.iter().all(|&l| l >= -1e-7)
    }

    /// A non-empty polyhedron in three dimensions whose rows span the space
    /// has a vertex, i.e. a feasible point where three rows are tight.
    fn has_feasible_vertex(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
        let m = b.len();
        for i in 0..m {
            for j in i + 1..m {
                for k in j + 1..m {
                    let sub = DMatrix::from_fn(3, 3, |r, c| a[([i, j, k][r], c)]);
                    let rhs = DVector::from_vec(alloc::vec![b[i], b[j], b[k]]);
                    if let Some(x) = sub.lu().solve(&rhs) {
                        if (a * &x - b).iter().all(|&v| v >= -1e-9) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    proptest::proptest! {
        #[test]
        fn random_problems_satisfy_kkt(
            seed_h in proptest::collection::vec(-1.0f64..1.0, 9),
            c in proptest::collection::vec(-3.0f64..3.0, 3),
            rows in proptest::collection::vec(-1.0f64..1.0, 18),
            b in proptest::collection::vec(-1.0f64..0.5, 6),
        ) {
            let m = DMatrix::from_row_slice(3, 3, &seed_h);
            let h = m.transpose() * &m + DMatrix::identity(3, 3) * 0.1;
            let a = DMatrix::from_row_slice(6, 3, &rows);
            let (c, b) = (DVector::from_vec(c), DVector::from_vec(b));
            let s = solve_qp(&h, &c, &a, &b).unwrap();
            // b <= 0 rows are satisfied at the origin only if b <= 0; here some
            // b are positive so infeasibility is possible.
            if s.status == QpStatus::Optimal {
                proptest::prop_assert!(kkt_holds(&h, &c, &a, &b, &s.x));
            } else {
                proptest::prop_assert_eq!(s.status, QpStatus::Infeasible);
                proptest::prop_assert!(!has_feasible_vertex(&a, &b));
            }
        }
    }
}
