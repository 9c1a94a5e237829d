//! Disturbance models and their lattice PMFs.
//!
//! A [`DisturbanceSpec`] describes the per-step displacement `v = g(w)` added
//! to the state. [`DisturbanceSpec::discretize`] turns it into a
//! [`SparsePmf`] over a displacement lattice, and [`DisturbanceSpec::sample`]
//! draws from the original (unsnapped) law for Monte-Carlo work.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::lattice::{BoxRegion, Lattice, LatticePoint};
use crate::pmf::{IndexBoxIter, SparsePmf, MASS_TOLERANCE};
use crate::{math, Error, Result};

/// Rejection sampling gives up after this many draws outside the box.
const MAX_REJECTIONS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum DisturbanceSpec {
    /// Gaussian restricted to `support` and renormalized.
    TruncatedGaussian {
        support: BoxRegion,
        mean: Vec<f64>,
        /// Row-major, symmetric positive definite.
        covariance: Vec<Vec<f64>>,
    },
    FiniteSpeedSet(SpeedSet),
    Explicit { pmf: SparsePmf },
}

/// Independent per-axis speeds drawn from a common finite set, with a fixed
/// sign per axis; the displacement is `sample_time * gain * (sign .* speed)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SpeedSet {
    pub speeds: Vec<f64>,
    pub probs: Vec<f64>,
    pub per_axis_sign: Vec<f64>,
    /// `n x p` matrix, row-major; identity when absent.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub gain_matrix: Option<Vec<Vec<f64>>>,
    pub sample_time: f64,
}

impl SpeedSet {
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() || self.speeds.len() != self.probs.len() {
            return Err(Error::invalid("speeds and probs must be non-empty and of equal length"));
        }
        if self.speeds.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("speeds must be finite"));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be non-negative"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("speed probabilities sum to {total}, expected 1")));
        }
        if self.per_axis_sign.is_empty() || self.per_axis_sign.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::invalid("per_axis_sign entries must be +1 or -1"));
        }
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return Err(Error::invalid("sample_time must be positive"));
        }
        if let Some(g) = &self.gain_matrix {
            let p = self.per_axis_sign.len();
            if g.is_empty() || g.iter().any(|row| row.len() != p || row.iter().any(|v| !v.is_finite())) {
                return Err(Error::invalid(format!("gain_matrix must have {p} finite columns per row")));
            }
        }
        Ok(())
    }

    /// Dimension of the displacement.
    pub fn output_dim(&self) -> usize {
        self.gain_matrix.as_ref().map_or(self.per_axis_sign.len(), |g| g.len())
    }

    /// Expected speed on one axis.
    pub fn mean_speed(&self) -> f64 {
        self.speeds.iter().zip(&self.probs).map(|(s, p)| s * p).sum()
    }

    /// Calls `f(displacement, probability)` for every per-axis speed
    /// combination, last axis varying fastest.
    fn for_each_displacement(&self, mut f: impl FnMut(&[f64], f64)) {
        let p = self.per_axis_sign.len();
        let k = self.speeds.len();
        let mut digits = alloc::vec![0usize; p];
        let mut w = alloc::vec![0.0; p];
        let mut v = alloc::vec![0.0; self.output_dim()];
        loop {
            let mut m = 1.0;
            for a in 0..p {
                w[a] = self.per_axis_sign[a] * self.speeds[digits[a]];
                m *= self.probs[digits[a]];
            }
            self.displacement(&w, &mut v);
            f(&v, m);
            let mut a = p;
            while a > 0 {
                a -= 1;
                digits[a] += 1;
                if digits[a] < k {
                    break;
                }
                digits[a] = 0;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
    }

    fn displacement(&self, w: &[f64], out: &mut [f64]) {
        match &self.gain_matrix {
            None => {
                for k in 0..w.len() {
                    out[k] = self.sample_time * w[k];
                }
            }
            Some(g) => {
                for (i, row) in g.iter().enumerate() {
                    out[i] = self.sample_time * row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DisturbanceSpec::TruncatedGaussian { support, mean, covariance } => {
                support.validate()?;
                gaussian_factor(support, mean, covariance).map(|_| ())
            }
            DisturbanceSpec::FiniteSpeedSet(s) => s.validate(),
            DisturbanceSpec::Explicit { .. } => Ok(()),
        }
    }

    /// Dimension of the displacement `v`.
    pub fn dim(&self) -> usize {
        match self {
            DisturbanceSpec::TruncatedGaussian { mean, .. } => mean.len(),
            DisturbanceSpec::FiniteSpeedSet(s) => s.output_dim(),
            DisturbanceSpec::Explicit { pmf } => pmf.dim(),
        }
    }

    /// PMF of the displacement on `lattice`.
    ///
    /// Truncated Gaussians are evaluated at every lattice point inside the
    /// support box and renormalized. Speed sets enumerate every per-axis
    /// speed combination and snap the displacement to the nearest point,
    /// summing masses that land together. Explicit PMFs must already live on
    /// a lattice with the same spacing and are returned unchanged.
    pub fn discretize(&self, lattice: &Lattice) -> Result<SparsePmf> {
        if lattice.dim() != self.dim() {
            return Err(Error::LatticeMismatch(format!(
                "disturbance has dimension {}, lattice has {} axes",
                self.dim(),
                lattice.dim()
            )));
        }
        match self {
            DisturbanceSpec::TruncatedGaussian { support, mean, covariance } => {
                let chol = gaussian_factor(support, mean, covariance)?;
                let (lo, hi) = lattice.index_range(support)?;
                let n = mean.len();
                let mut entries = Vec::new();
                let mut c = alloc::vec![0.0; n];
                for idx in IndexBoxIter::new(&lo, &hi) {
                    lattice.coord_into(&idx, &mut c);
                    let d = DVector::from_iterator(n, c.iter().zip(mean).map(|(x, m)| x - m));
                    let y = chol.l().solve_lower_triangular(&d).ok_or(Error::invalid("singular covariance"))?;
                    let w = math::exp(-0.5 * y.norm_squared());
                    if w > 0.0 {
                        entries.push((LatticePoint(idx), w));
                    }
                }
                if entries.is_empty() {
                    return Err(Error::EmptySupport);
                }
                SparsePmf::normalized(lattice.clone(), entries)
            }
            DisturbanceSpec::FiniteSpeedSet(s) => {
                s.validate()?;
                let mut idx = alloc::vec![0i64; s.output_dim()];
                let mut acc: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
                let mut failed = None;
                s.for_each_displacement(|v, m| {
                    if m > 0.0 {
                        match lattice.snap_into(v, &mut idx) {
                            Ok(()) => *acc.entry(idx.clone()).or_insert(0.0) += m,
                            Err(e) => failed = Some(e),
                        }
                    }
                });
                if let Some(e) = failed {
                    return Err(e);
                }
                if acc.is_empty() {
                    return Err(Error::EmptySupport);
                }
                SparsePmf::normalized(lattice.clone(), acc.into_iter().map(|(p, m)| (LatticePoint(p), m)))
            }
            DisturbanceSpec::Explicit { pmf } => {
                pmf.lattice().check_compatible(lattice)?;
                Ok(pmf.clone())
            }
        }
    }

    /// Largest per-axis distance between a displacement the law can produce
    /// and the lattice point standing for it in [`Self::discretize`].
    pub fn lattice_error(&self, lattice: &Lattice) -> Result<f64> {
        let mut worst = 0.0f64;
        match self {
            DisturbanceSpec::TruncatedGaussian { support, .. } => {
                let (lo, hi) = lattice.index_range(support)?;
                let first = lattice.coord(&lo);
                let last = lattice.coord(&hi);
                for k in 0..lattice.dim() {
                    let gap = (first[k] - support.lo[k]).max(support.hi[k] - last[k]);
                    worst = worst.max(gap).max(0.5 * lattice.resolution()[k]);
                }
            }
            DisturbanceSpec::FiniteSpeedSet(s) => {
                s.validate()?;
                let mut idx = alloc::vec![0i64; s.output_dim()];
                let mut c = alloc::vec![0.0; s.output_dim()];
                let mut failed = None;
                s.for_each_displacement(|v, m| {
                    if m > 0.0 {
                        if let Err(e) = lattice.snap_into(v, &mut idx) {
                            failed = Some(e);
                            return;
                        }
                        lattice.coord_into(&idx, &mut c);
                        for (a, b) in v.iter().zip(&c) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                });
                if let Some(e) = failed {
                    return Err(e);
                }
            }
            DisturbanceSpec::Explicit { pmf } => {
                pmf.lattice().check_compatible(lattice)?;
                // Drawn points are points of the PMF's own lattice; they only
                // move when that lattice is offset from `lattice`.
                if lattice.origin_offset(pmf.lattice()).is_none() {
                    worst = lattice.resolution().iter().fold(0.0, |a, r| a.max(0.5 * r));
                }
            }
        }
        Ok(worst)
    }

    /// One draw of the displacement from the continuous or discrete law
    /// itself, not from its lattice PMF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            DisturbanceSpec::TruncatedGaussian { support, mean, covariance } => {
                let chol = gaussian_factor(support, mean, covariance)?;
                let n = mean.len();
                for _ in 0..MAX_REJECTIONS {
                    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
                    let x = chol.l() * z;
                    let v: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a + m).collect();
                    if support.contains(&v) {
                        return Ok(v);
                    }
                }
                Err(Error::invalid("truncation box has negligible probability under the Gaussian"))
            }
            DisturbanceSpec::FiniteSpeedSet(s) => {
                let p = s.per_axis_sign.len();
                let mut w = alloc::vec![0.0; p];
                for a in 0..p {
                    w[a] = s.per_axis_sign[a] * s.speeds[categorical(&s.probs, rng)];
                }
                let mut v = alloc::vec![0.0; s.output_dim()];
                s.displacement(&w, &mut v);
                Ok(v)
            }
            DisturbanceSpec::Explicit { pmf } => {
                let i = categorical(pmf.masses(), rng);
                Ok(pmf.lattice().coord(pmf.point(i)))
            }
        }
    }
}

fn gaussian_factor(
    support: &BoxRegion,
    mean: &[f64],
    covariance: &[Vec<f64>],
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = mean.len();
    if n == 0 || support.dim() != n {
        return Err(Error::invalid("mean and support box must have the same positive dimension"));
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("mean must be finite"));
    }
    if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("covariance must be {n} x {n}")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariance must be finite"));
    }
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return Err(Error::invalid("covariance must be symmetric"));
            }
        }
    }
    m.cholesky().ok_or_else(|| Error::invalid("covariance must be positive definite"))
}

/// Index drawn with the given (normalized) weights by inverse CDF.
fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut c = 0.0;
    for (i, w) in weights.iter().enumerate() {
        c += w;
        if u < c {
            return i;
        }
    }
    // Rounding can leave the cumulative sum just under one.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
