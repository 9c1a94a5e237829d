//! Reference implementations shared by the oracle tests and the acceptance
//! suite.
#![allow(dead_code)]

use fsreach_core::planner::miqp::Miqp;
use fsreach_core::{Lattice, ObstacleGeometry, SparsePmf};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_pmf(rng: &mut ChaCha8Rng, lattice: &Lattice, max_len: usize, spread: i64) -> SparsePmf {
    let len = rng.random_range(1..=max_len);
    let entries: Vec<(Vec<i64>, f64)> = (0..len)
        .map(|_| {
            let p: Vec<i64> = (0..lattice.dim()).map(|_| rng.random_range(-spread..=spread)).collect();
            (p, rng.random_range(0.01..1.0))
        })
        .collect();
    // Duplicate points are merged by normalization.
    SparsePmf::normalized(lattice.clone(), entries).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> ObstacleGeometry {
    ObstacleGeometry::centered_box((0..dim).map(|_| rng.random_range(0.0..4.0) * r + 0.3 * r).collect()).unwrap()
}

/// Occupancy straight from its definition: the mass of all centers whose
/// body covers the cell center, tested in continuous coordinates.
pub fn direct_occupancy(centers: &[(Vec<f64>, f64)], lattice: &Lattice, g: &ObstacleGeometry, cell: &[i64]) -> f64 {
    let y = lattice.coord(cell);
    centers.iter().filter(|(z, _)| g.covers(lattice, z, &y)).map(|(_, m)| m).sum()
}

pub fn cells_around(pmf: &SparsePmf, pad: i64) -> Vec<Vec<i64>> {
    let (lo, hi) = pmf.bounds();
    let mut out = vec![Vec::new()];
    for k in 0..lo.len() {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (lo[k] - pad..=hi[k] + pad).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Minimizer of `0.5 x'Hx + c'x` subject to `A x >= b` by enumerating
/// candidate active sets; `None` when infeasible. Only sensible for a handful
/// of variables and rows.
pub fn qp_by_enumeration(h: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = h.nrows();
    let m = a.nrows();
    let mut best: Option<f64> = None;
    let mut subset = Vec::new();
    fn visit(
        start: usize,
        subset: &mut Vec<usize>,
        n: usize,
        m: usize,
        h: &DMatrix<f64>,
        c: &DVector<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        best: &mut Option<f64>,
    ) {
        // KKT system of the equality-constrained problem on this subset.
        let k = subset.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        rhs.rows_mut(0, n).copy_from(&(-c));
        for (i, &row) in subset.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + i)] = -a[(row, j)];
                kkt[(n + i, j)] = a[(row, j)];
            }
            rhs[n + i] = b[row];
        }
        if let Some(sol) = kkt.lu().solve(&rhs) {
            let x = sol.rows(0, n).into_owned();
            let slack = a * &x - b;
            if sol.iter().all(|v| v.is_finite()) && slack.iter().all(|&s| s >= -1e-9) {
                let f = 0.5 * (h * &x).dot(&x) + c.dot(&x);
                if best.is_none_or(|b| f < b) {
                    *best = Some(f);
                }
            }
        }
        if k == n {
            return;
        }
        for r in start..m {
            subset.push(r);
            visit(r + 1, subset, n, m, h, c, a, b, best);
            subset.pop();
        }
    }
    visit(0, &mut subset, n, m, h, c, a, b, &mut best);
    best
}

/// A point in `[-1, 1]^2` that must stay out of up to two random boxes,
/// with the usual big-M face encoding; binaries also carry a linear cost.
pub fn random_avoidance_miqp(rng: &mut ChaCha8Rng, blocking: bool) -> Miqp {
    let n_boxes = rng.random_range(1..=2usize);
    let nc = 2;
    let nb = 4 * n_boxes;
    let n = nc + nb;
    let mut hessian = DMatrix::zeros(n, n);
    let q11 = rng.random_range(0.5..3.0);
    let q22 = rng.random_range(0.5..3.0);
    let q12 = rng.random_range(-0.4..0.4);
    hessian[(0, 0)] = q11;
    hessian[(1, 1)] = q22;
    hessian[(0, 1)] = q12;
    hessian[(1, 0)] = q12;
    let goal = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
    let mut linear = DVector::zeros(n);
    linear[0] = -(q11 * goal[0] + q12 * goal[1]);
    linear[1] = -(q12 * goal[0] + q22 * goal[1]);
    for j in 0..nb {
        linear[nc + j] = rng.random_range(0.0..0.05);
    }
    let big_m = 10.0;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for bx in 0..n_boxes {
        let (lo, hi) = if blocking && bx == 0 {
            ([-1.5, -1.5], [1.5, 1.5])
        } else {
            let c = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
            let w = [rng.random_range(0.1..0.6), rng.random_range(0.1..0.6)];
            ([c[0] - w[0], c[1] - w[1]], [c[0] + w[0], c[1] + w[1]])
        };
        // Faces p'x <= q; leaving through a face means p'x >= q unless relaxed.
        let faces = [([1.0, 0.0], hi[0]), ([-1.0, 0.0], -lo[0]), ([0.0, 1.0], hi[1]), ([0.0, -1.0], -lo[1])];
        for (f, (p, q)) in faces.iter().enumerate() {
            let mut row = vec![0.0; n];
            row[0] = p[0];
            row[1] = p[1];
            row[nc + 4 * bx + f] = big_m;
            rows.push(row);
            rhs.push(*q);
        }
        let mut card = vec![0.0; n];
        for f in 0..4 {
            card[nc + 4 * bx + f] = -1.0;
        }
        rows.push(card);
        rhs.push(-3.0);
    }
    Miqp {
        n_cont: nc,
        n_bin: nb,
        hessian,
        linear,
        constant: 0.0,
        rows: DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]),
        rhs: DVector::from_vec(rhs),
        bounds: vec![(-1.0, 1.0); nc],
    }
}

/// Optimum over every binary assignment, each continuous subproblem solved
/// by active-set enumeration.
pub fn miqp_by_enumeration(p: &Miqp) -> Option<f64> {
    let nc = p.n_cont;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << p.n_bin) {
        let d: Vec<f64> = (0..p.n_bin).map(|j| f64::from((mask >> j) & 1)).collect();
        let dv = DVector::from_vec(d.clone());
        let hxx = p.hessian.view((0, 0), (nc, nc)).into_owned();
        let hxd = p.hessian.view((0, nc), (nc, p.n_bin)).into_owned();
        let hdd = p.hessian.view((nc, nc), (p.n_bin, p.n_bin)).into_owned();
        let c = p.linear.rows(0, nc).into_owned() + &hxd * &dv;
        let constant = 0.5 * (&hdd * &dv).dot(&dv) + p.linear.rows(nc, p.n_bin).dot(&dv) + p.constant;
        let ax = p.rows.columns(0, nc).into_owned();
        let b = &p.rhs - p.rows.columns(nc, p.n_bin) * &dv;
        // Bounds become rows.
        let mut a_all = DMatrix::zeros(ax.nrows() + 2 * nc, nc);
        let mut b_all = DVector::zeros(ax.nrows() + 2 * nc);
        a_all.rows_mut(0, ax.nrows()).copy_from(&ax);
        b_all.rows_mut(0, ax.nrows()).copy_from(&b);
        for (k, (lo, hi)) in p.bounds.iter().enumerate() {
            let i = ax.nrows() + 2 * k;
            a_all[(i, k)] = 1.0;
            b_all[i] = *lo;
            a_all[(i + 1, k)] = -1.0;
            b_all[i + 1] = -hi;
        }
        if let Some(f) = qp_by_enumeration(&hxx, &c, &a_all, &b_all) {
            let f = f + constant;
            if best.is_none_or(|b| f < b) {
                best = Some(f);
            }
        }
    }
    best
}
