//! Forward stochastic reach sets and their probability measures.
//!
//! For `x[t+1] = f(x[t]) + v[t]` with i.i.d. lattice-valued `v`, the law of
//! `x[t+1]` is obtained by pushing every support point of the current PMF
//! through `f` and spreading its mass over the disturbance support. Only
//! states with positive mass are visited, so the cost of a step scales with
//! `|support(x[t])| * |support(v)|` rather than with the size of the state
//! space. [`dp_baseline`] computes the same recursion densely over a fixed
//! domain for comparison.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use nalgebra::DMatrix;

use crate::lattice::{round_half_away, BoxRegion, Lattice};
use crate::pmf::{Accumulator, IndexBoxIter, SparsePmf};
use crate::{Clock, Error, Result};

/// Image offsets closer than this (in cells) to a lattice point count as exact.
const EXACT_TOLERANCE: f64 = 1e-9;

/// Deterministic state map `f`.
pub enum DynamicsMap {
    Linear(DMatrix<f64>),
    /// Writes `f(x)` into the output slice. Must be deterministic.
    Nonlinear(Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
}

impl fmt::Debug for DynamicsMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsMap::Linear(a) => f.debug_tuple("Linear").field(a).finish(),
            DynamicsMap::Nonlinear(_) => f.write_str("Nonlinear(..)"),
        }
    }
}

impl DynamicsMap {
    pub fn identity(dim: usize) -> Self {
        DynamicsMap::Linear(DMatrix::identity(dim, dim))
    }

    /// Linear map from a row-major square matrix.
    pub fn linear(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("dynamics matrix must be square and non-empty"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dynamics matrix must be finite"));
        }
        Ok(DynamicsMap::Linear(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    pub fn nonlinear(f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        DynamicsMap::Nonlinear(Box::new(f))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let DynamicsMap::Linear(a) = self {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::invalid(format!(
                    "dynamics matrix is {}x{}, state has {dim} axes",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DynamicsMap::Linear(a) => {
                for i in 0..x.len() {
                    let mut s = 0.0;
                    for j in 0..x.len() {
                        s += a[(i, j)] * x[j];
                    }
                    out[i] = s;
                }
            }
            DynamicsMap::Nonlinear(f) => f(x, out),
        }
    }

    /// True when `A` maps lattice points of `lattice` onto lattice points,
    /// i.e. the propagation involves no snapping at all.
    pub fn preserves_lattice(&self, lattice: &Lattice) -> bool {
        let DynamicsMap::Linear(a) = self else {
            return false;
        };
        let n = lattice.dim();
        if a.nrows() != n {
            return false;
        }
        let (o, r) = (lattice.origin(), lattice.resolution());
        let is_int = |v: f64| (v - round_half_away(v)).abs() <= EXACT_TOLERANCE;
        for i in 0..n {
            let mut ao = 0.0;
            for j in 0..n {
                if !is_int(a[(i, j)] * r[j] / r[i]) {
                    return false;
                }
                ao += a[(i, j)] * o[j];
            }
            if !is_int((ao - o[i]) / r[i]) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default)]
pub struct FsrOptions {
    /// Entries below this mass are dropped after every step and the PMF is
    /// renormalized. Zero keeps the computation exact.
    pub prune_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct FsrStep {
    pub pmf: SparsePmf,
    /// Wall-clock time spent computing this step (zero for the initial PMF).
    pub runtime: Duration,
    /// Largest distance, in state units on any axis, between an exact image
    /// `f(x) + v` and the lattice point it was assigned to.
    pub max_snap_error: f64,
    /// Mass kept by pruning before renormalization (one when not pruning).
    pub retained_mass: f64,
}

impl FsrStep {
    fn initial(pmf: SparsePmf) -> Self {
        FsrStep { pmf, runtime: Duration::ZERO, max_snap_error: 0.0, retained_mass: 1.0 }
    }
}

/// PMFs and timings for `t = 0..=tau`.
#[derive(Debug, Clone)]
pub struct FsrResult {
    pub steps: Vec<FsrStep>,
}

impl FsrResult {
    pub fn tau(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn pmf(&self, t: usize) -> &SparsePmf {
        &self.steps[t].pmf
    }

    /// The reach set at `t`, which is exactly the support of its PMF.
    pub fn support(&self, t: usize) -> Vec<crate::LatticePoint> {
        self.steps[t].pmf.support()
    }

    pub fn total_runtime(&self) -> Duration {
        self.steps.iter().map(|s| s.runtime).sum()
    }
}

/// Where the images of one source point land.
struct Image {
    /// Snapped index of `f(x)` when it sits on the lattice.
    exact: Option<Vec<i64>>,
    coord: Vec<f64>,
    error: f64,
}

/// Shared per-point propagation so the sparse and dense engines assign mass
/// identically.
struct Propagator<'a> {
    lattice: &'a Lattice,
    dynamics: &'a DynamicsMap,
    dist: &'a SparsePmf,
    /// Disturbance lattice origin expressed in state-lattice cells, when aligned.
    shift: Option<Vec<i64>>,
    dist_coords: Vec<f64>,
    x: Vec<f64>,
}

impl<'a> Propagator<'a> {
    fn new(lattice: &'a Lattice, dynamics: &'a DynamicsMap, dist: &'a SparsePmf) -> Result<Self> {
        lattice.check_compatible(dist.lattice())?;
        dynamics.check_dim(lattice.dim())?;
        let zero = Lattice::new(alloc::vec![0.0; lattice.dim()], lattice.resolution().to_vec())?;
        let shift = zero.origin_offset(dist.lattice());
        let mut dist_coords = Vec::with_capacity(dist.len() * lattice.dim());
        for (z, _) in dist.iter() {
            dist_coords.extend(dist.lattice().coord(z));
        }
        Ok(Propagator { lattice, dynamics, dist, shift, dist_coords, x: alloc::vec![0.0; lattice.dim()] })
    }

    fn image(&mut self, idx: &[i64]) -> Image {
        let n = self.lattice.dim();
        self.lattice.coord_into(idx, &mut self.x);
        let mut y = alloc::vec![0.0; n];
        self.dynamics.apply(&self.x, &mut y);
        let (o, r) = (self.lattice.origin(), self.lattice.resolution());
        let mut snapped = alloc::vec![0i64; n];
        let mut exact = self.shift.is_some();
        let mut error = 0.0f64;
        for k in 0..n {
            let q = (y[k] - o[k]) / r[k];
            let s = round_half_away(q);
            let off = (q - s).abs();
            exact &= off <= EXACT_TOLERANCE;
            error = error.max(off * r[k]);
            snapped[k] = s as i64;
        }
        Image { exact: exact.then_some(snapped), coord: y, error }
    }

    /// Calls `sink(target, z_index)` for each disturbance atom, in order.
    /// Returns the largest snapping error.
    fn spread(&self, image: &Image, target: &mut [i64], mut sink: impl FnMut(&[i64], usize)) -> Result<f64> {
        let n = self.lattice.dim();
        match (&image.exact, &self.shift) {
            (Some(base), Some(shift)) => {
                for (j, (z, _)) in self.dist.iter().enumerate() {
                    for k in 0..n {
                        target[k] = base[k] + z[k] + shift[k];
                    }
                    sink(target, j);
                }
                Ok(image.error)
            }
            _ => {
                let mut err = 0.0f64;
                let mut p = alloc::vec![0.0; n];
                let r = self.lattice.resolution();
                let o = self.lattice.origin();
                for j in 0..self.dist.len() {
                    for k in 0..n {
                        p[k] = image.coord[k] + self.dist_coords[j * n + k];
                    }
                    self.lattice.snap_into(&p, target)?;
                    for k in 0..n {
                        err = err.max((o[k] + target[k] as f64 * r[k] - p[k]).abs());
                    }
                    sink(target, j);
                }
                Ok(err)
            }
        }
    }

    /// Inclusive index bounds that contain every target of the given images.
    fn target_bounds(&self, images: &[Image]) -> (Vec<i64>, Vec<i64>) {
        let n = self.lattice.dim();
        let (dlo, dhi) = self.dist.bounds();
        let mut lo = alloc::vec![i64::MAX; n];
        let mut hi = alloc::vec![i64::MIN; n];
        let (o, r) = (self.lattice.origin(), self.lattice.resolution());
        let dl = self.dist.lattice();
        for im in images {
            for k in 0..n {
                let (a, b) = match (&im.exact, &self.shift) {
                    (Some(base), Some(shift)) => (base[k] + dlo[k] + shift[k], base[k] + dhi[k] + shift[k]),
                    _ => {
                        let vlo = dl.origin()[k] + dlo[k] as f64 * dl.resolution()[k];
                        let vhi = dl.origin()[k] + dhi[k] as f64 * dl.resolution()[k];
                        let a = crate::math::floor((im.coord[k] + vlo - o[k]) / r[k]) as i64 - 1;
                        let b = crate::math::ceil((im.coord[k] + vhi - o[k]) / r[k]) as i64 + 1;
                        (a, b)
                    }
                };
                lo[k] = lo[k].min(a);
                hi[k] = hi[k].max(b);
            }
        }
        (lo, hi)
    }
}

/// One step of the recursion: the law of `f(x) + v` for `x ~ current`,
/// `v ~ disturbance`, each image snapped to `current`'s lattice.
///
/// Returns the new PMF and the largest snapping error.
pub fn fsr_step(current: &SparsePmf, dynamics: &DynamicsMap, disturbance: &SparsePmf) -> Result<(SparsePmf, f64)> {
    let mut prop = Propagator::new(current.lattice(), dynamics, disturbance)?;
    let images: Vec<Image> = (0..current.len()).map(|i| prop.image(current.point(i))).collect();
    let (lo, hi) = prop.target_bounds(&images);
    let mut acc = Accumulator::new(&lo, &hi, current.len().saturating_mul(disturbance.len()));
    let mut target = alloc::vec![0i64; current.dim()];
    let dm = disturbance.masses();
    let mut max_err = 0.0f64;
    for (image, &m) in images.iter().zip(current.masses()) {
        let err = prop.spread(image, &mut target, |t, j| acc.add(t, m * dm[j]))?;
        max_err = max_err.max(err);
    }
    let (points, mass) = acc.finish();
    if mass.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok((SparsePmf::from_sorted_parts(current.lattice().clone(), points, mass), max_err))
}

/// Runs [`fsr_step`] `tau` times from `initial`, timing each step.
///
/// When `dynamics` preserves the lattice and the disturbance lattice is
/// aligned with the state lattice, every step is exact and this is checked.
pub fn fsr_compute<C: Clock>(
    initial: &SparsePmf,
    dynamics: &DynamicsMap,
    disturbance: &SparsePmf,
    tau: usize,
    options: &FsrOptions,
    clock: &C,
) -> Result<FsrResult> {
    initial.lattice().check_compatible(disturbance.lattice())?;
    dynamics.check_dim(initial.dim())?;
    if !(options.prune_threshold >= 0.0) {
        return Err(Error::invalid("prune threshold must be non-negative"));
    }
    let exact = dynamics.preserves_lattice(initial.lattice())
        && Lattice::new(alloc::vec![0.0; initial.dim()], initial.lattice().resolution().to_vec())?
            .origin_offset(disturbance.lattice())
            .is_some();
    let mut steps = Vec::with_capacity(tau + 1);
    steps.push(FsrStep::initial(initial.clone()));
    for t in 1..=tau {
        let start = clock.now();
        let (pmf, max_snap_error) = fsr_step(&steps[t - 1].pmf, dynamics, disturbance)?;
        let (pmf, retained_mass) = if options.prune_threshold > 0.0 {
            let p = pmf.prune(options.prune_threshold)?;
            (p.pmf, p.retained_mass)
        } else {
            (pmf, 1.0)
        };
        let runtime = clock.now().saturating_sub(start);
        if exact {
            let tol = EXACT_TOLERANCE * initial.lattice().resolution().iter().fold(0.0f64, |a, &b| a.max(b));
            assert!(max_snap_error <= tol, "lattice-preserving dynamics produced a snapping error of {max_snap_error}");
        }
        log::debug!("step {t}: {} support points", pmf.len());
        steps.push(FsrStep { pmf, runtime, max_snap_error, retained_mass });
    }
    Ok(FsrResult { steps })
}

/// Dense dynamic-programming reference: every lattice cell of `domain` is
/// propagated at every step, whether or not it carries mass.
///
/// Mass assignment uses the same rule as [`fsr_step`], so both agree to the
/// last bit whenever the domain holds all reachable mass. Mass pushed
/// outside the domain is reported as [`Error::DomainOverflow`].
pub fn dp_baseline<C: Clock>(
    initial: &SparsePmf,
    dynamics: &DynamicsMap,
    disturbance: &SparsePmf,
    domain: &BoxRegion,
    tau: usize,
    clock: &C,
) -> Result<FsrResult> {
    let lattice = initial.lattice();
    let mut prop = Propagator::new(lattice, dynamics, disturbance)?;
    let (lo, hi) = lattice.index_range(domain)?;
    let n = lattice.dim();
    let mut extent = Vec::with_capacity(n);
    let mut volume: u128 = 1;
    for k in 0..n {
        if hi[k] < lo[k] {
            return Err(Error::invalid("dynamic-programming domain contains no lattice points"));
        }
        let e = (hi[k] - lo[k] + 1) as u128;
        extent.push(e as usize);
        volume = volume.saturating_mul(e);
    }
    const LIMIT: u128 = 1 << 28;
    if volume > LIMIT {
        return Err(Error::TooLarge { size: volume, limit: LIMIT });
    }
    let volume = volume as usize;
    let flat = |p: &[i64]| -> Option<usize> {
        let mut f = 0usize;
        for k in 0..n {
            if p[k] < lo[k] || p[k] > hi[k] {
                return None;
            }
            f = f * extent[k] + (p[k] - lo[k]) as usize;
        }
        Some(f)
    };

    let mut grid = alloc::vec![0.0f64; volume];
    let mut escaped = 0.0;
    for (p, m) in initial.iter() {
        match flat(p) {
            Some(i) => grid[i] = m,
            None => escaped += m,
        }
    }
    if escaped > 0.0 {
        return Err(Error::DomainOverflow { step: 0, escaped });
    }
    let to_pmf = |grid: &[f64]| -> SparsePmf {
        let mut points = Vec::new();
        let mut mass = Vec::new();
        for (cell, &v) in IndexBoxIter::new(&lo, &hi).zip(grid) {
            if v > 0.0 {
                points.extend_from_slice(&cell);
                mass.push(v);
            }
        }
        SparsePmf::from_sorted_parts(lattice.clone(), points, mass)
    };

    let dm = disturbance.masses();
    let mut steps = Vec::with_capacity(tau + 1);
    steps.push(FsrStep::initial(initial.clone()));
    let mut target = alloc::vec![0i64; n];
    for t in 1..=tau {
        let start = clock.now();
        let mut next = alloc::vec![0.0f64; volume];
        let mut escaped = 0.0;
        let mut max_err = 0.0f64;
        for (cell, &m) in IndexBoxIter::new(&lo, &hi).zip(grid.iter()) {
            let image = prop.image(&cell);
            let err = prop.spread(&image, &mut target, |tgt, j| {
                let w = m * dm[j];
                match flat(tgt) {
                    Some(i) => next[i] += w,
                    None => escaped += w,
                }
            })?;
            if m > 0.0 {
                max_err = max_err.max(err);
            }
        }
        grid = next;
        let runtime = clock.now().saturating_sub(start);
        if escaped > 0.0 {
            return Err(Error::DomainOverflow { step: t, escaped });
        }
        steps.push(FsrStep { pmf: to_pmf(&grid), runtime, max_snap_error: max_err, retained_mass: 1.0 });
    }
    Ok(FsrResult { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NoClock;
    use alloc::vec;

    fn line() -> Lattice {
        Lattice::uniform(1, 1.0).unwrap()
    }

    #[test]
    fn identity_shifts_a_delta() {
        let l = Lattice::uniform(2, 0.1).unwrap();
        let x = SparsePmf::delta(l.clone(), [3, -2]).unwrap();
        let v = SparsePmf::delta(l, [1, 5]).unwrap();
        let (next, err) = fsr_step(&x, &DynamicsMap::identity(2), &v).unwrap();
        assert_eq!(next.support(), vec![[4, 3].into()]);
        assert!(err < 1e-12);
    }

    #[test]
    fn reflection() {
        let x = SparsePmf::from_entries(line(), [([-1], 0.3), ([1], 0.7)]).unwrap();
        let v = SparsePmf::delta(line(), [0]).unwrap();
        let f = DynamicsMap::linear(&[vec![-1.0]]).unwrap();
        let (next, _) = fsr_step(&x, &f, &v).unwrap();
        assert_eq!(next.get(&[1]), 0.3);
        assert_eq!(next.get(&[-1]), 0.7);
    }

    #[test]
    fn nonlinear_images_are_snapped_and_merged() {
        let l = Lattice::uniform(1, 0.5).unwrap();
        let x = SparsePmf::uniform(l.clone(), [[0], [1], [2], [3]]).unwrap();
        let v = SparsePmf::delta(l, [0]).unwrap();
        // x -> x^2 / 3 lands at 0, 1/12, 1/3, 3/4.
        let f = DynamicsMap::nonlinear(|x, y| y[0] = x[0] * x[0] / 3.0);
        let (next, err) = fsr_step(&x, &f, &v).unwrap();
        assert_eq!(next.get(&[0]), 0.5);
        assert_eq!(next.get(&[1]), 0.25);
        assert_eq!(next.get(&[2]), 0.25);
        assert!((err - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tau_zero_is_the_initial_pmf() {
        let x = SparsePmf::delta(line(), [0]).unwrap();
        let r = fsr_compute(&x, &DynamicsMap::identity(1), &x, 0, &FsrOptions::default(), &NoClock).unwrap();
        assert_eq!(r.tau(), 0);
        assert_eq!(r.pmf(0), &x);
    }

    #[test]
    fn misaligned_disturbance_origin_still_snaps() {
        let l = line();
        let x = SparsePmf::delta(l.clone(), [0]).unwrap();
        let v = SparsePmf::delta(Lattice::new(vec![0.25], vec![1.0]).unwrap(), [1]).unwrap();
        let (next, err) = fsr_step(&x, &DynamicsMap::identity(1), &v).unwrap();
        assert_eq!(next.point(0), &[1]);
        assert!((err - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lattice_preservation() {
        let l = Lattice::uniform(2, 0.1).unwrap();
        assert!(DynamicsMap::identity(2).preserves_lattice(&l));
        assert!(DynamicsMap::linear(&[vec![2.0, 1.0], vec![0.0, -1.0]]).unwrap().preserves_lattice(&l));
        assert!(!DynamicsMap::linear(&[vec![0.5, 0.0], vec![0.0, 1.0]]).unwrap().preserves_lattice(&l));
        let shifted = Lattice::new(vec![0.05, 0.0], vec![0.1, 0.1]).unwrap();
        assert!(!DynamicsMap::linear(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap().preserves_lattice(&shifted));
    }

    #[test]
    fn dp_reports_escaping_mass() {
        let x = SparsePmf::delta(line(), [0]).unwrap();
        let v = SparsePmf::from_entries(line(), [([0], 0.5), ([1], 0.5)]).unwrap();
        let domain = BoxRegion::new(vec![0.0], vec![2.0]).unwrap();
        let err = dp_baseline(&x, &DynamicsMap::identity(1), &v, &domain, 4, &NoClock).unwrap_err();
        match err {
            Error::DomainOverflow { step, escaped } => {
                assert_eq!(step, 3);
                assert!((escaped - 0.125).abs() < 1e-15);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn pruning_keeps_declared_mass() {
        let x = SparsePmf::delta(line(), [0]).unwrap();
        let v = SparsePmf::from_entries(line(), [([0], 0.9), ([1], 0.1)]).unwrap();
        let opts = FsrOptions { prune_threshold: 1e-3 };
        let r = fsr_compute(&x, &DynamicsMap::identity(1), &v, 6, &opts, &NoClock).unwrap();
        for s in &r.steps[1..] {
            assert!((s.pmf.total_mass() - 1.0).abs() <= 1e-12);
            assert!(s.pmf.masses().iter().all(|&m| m >= 1e-3));
            assert!(s.retained_mass > 0.99 && s.retained_mass <= 1.0 + 1e-12);
        }
    }
}
