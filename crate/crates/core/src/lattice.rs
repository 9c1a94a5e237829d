//! Uniform grids over the state space and axis-aligned regions.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::{Error, Result};

/// Fractional parts this close to one half are treated as exact ties when
/// snapping, so that decimal inputs such as `0.125 / 0.05` round the same way
/// they would in exact arithmetic.
const TIE_TOLERANCE: f64 = 1e-9;

/// A uniform lattice: cell `i` on axis `k` sits at `origin[k] + i * resolution[k]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lattice {
    origin: Vec<f64>,
    resolution: Vec<f64>,
}

impl Lattice {
    pub fn new(origin: Vec<f64>, resolution: Vec<f64>) -> Result<Self> {
        if origin.is_empty() {
            return Err(Error::invalid("lattice dimension must be positive"));
        }
        if origin.len() != resolution.len() {
            return Err(Error::invalid(format!(
                "origin has {} axes but resolution has {}",
                origin.len(),
                resolution.len()
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("lattice origin must be finite"));
        }
        if resolution.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("lattice resolution must be positive on every axis"));
        }
        Ok(Lattice { origin, resolution })
    }

    /// Lattice with the same spacing `resolution` on all `dim` axes, anchored at zero.
    pub fn uniform(dim: usize, resolution: f64) -> Result<Self> {
        Lattice::new(alloc::vec![0.0; dim], alloc::vec![resolution; dim])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn resolution(&self) -> &[f64] {
        &self.resolution
    }

    /// Nearest lattice point; exact half-way ties round away from zero.
    pub fn snap(&self, point: &[f64]) -> Result<LatticePoint> {
        let mut out = alloc::vec![0i64; self.dim()];
        self.snap_into(point, &mut out)?;
        Ok(LatticePoint(out))
    }

    pub(crate) fn snap_into(&self, point: &[f64], out: &mut [i64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, lattice has {} axes",
                point.len(),
                self.dim()
            )));
        }
        for (k, &p) in point.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::invalid(format!("coordinate {k} is not finite")));
            }
            let idx = round_half_away((p - self.origin[k]) / self.resolution[k]);
            if !(idx >= i64::MIN as f64 && idx <= i64::MAX as f64) {
                return Err(Error::invalid(format!("coordinate {k} is outside the index range")));
            }
            out[k] = idx as i64;
        }
        Ok(())
    }

    pub fn coord(&self, index: &[i64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        self.coord_into(index, &mut out);
        out
    }

    pub(crate) fn coord_into(&self, index: &[i64], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.origin[k] + index[k] as f64 * self.resolution[k];
        }
    }

    /// Same dimension and spacing (origins may differ).
    pub fn is_compatible(&self, other: &Lattice) -> bool {
        self.dim() == other.dim()
            && self
                .resolution
                .iter()
                .zip(&other.resolution)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()))
    }

    pub fn check_compatible(&self, other: &Lattice) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch(format!(
                "resolution {:?} vs {:?}",
                self.resolution, other.resolution
            )))
        }
    }

    /// Index offset of `other`'s origin on this lattice, if it falls exactly on a cell.
    pub(crate) fn origin_offset(&self, other: &Lattice) -> Option<Vec<i64>> {
        let mut shift = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let q = (other.origin[k] - self.origin[k]) / self.resolution[k];
            let r = math::round(q);
            if (q - r).abs() > TIE_TOLERANCE {
                return None;
            }
            shift.push(r as i64);
        }
        Some(shift)
    }

    /// Lattice whose origin is the sum of both origins; cell sums land there.
    pub(crate) fn sum_lattice(&self, other: &Lattice) -> Lattice {
        Lattice {
            origin: self.origin.iter().zip(&other.origin).map(|(a, b)| a + b).collect(),
            resolution: self.resolution.clone(),
        }
    }

    /// Lattice over the product space `self × other`.
    pub fn product(&self, other: &Lattice) -> Lattice {
        let mut origin = self.origin.clone();
        origin.extend_from_slice(&other.origin);
        let mut resolution = self.resolution.clone();
        resolution.extend_from_slice(&other.resolution);
        Lattice { origin, resolution }
    }

    pub(crate) fn select_axes(&self, axes: &[usize]) -> Lattice {
        Lattice {
            origin: axes.iter().map(|&a| self.origin[a]).collect(),
            resolution: axes.iter().map(|&a| self.resolution[a]).collect(),
        }
    }

    /// Inclusive index range of lattice points inside `region`.
    pub fn index_range(&self, region: &BoxRegion) -> Result<(Vec<i64>, Vec<i64>)> {
        if region.dim() != self.dim() {
            return Err(Error::invalid("region dimension does not match lattice"));
        }
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let a = (region.lo[k] - self.origin[k]) / self.resolution[k];
            let b = (region.hi[k] - self.origin[k]) / self.resolution[k];
            lo.push(math::ceil(a - TIE_TOLERANCE) as i64);
            hi.push(math::floor(b + TIE_TOLERANCE) as i64);
        }
        Ok((lo, hi))
    }

    /// Closed region covered by the cell `[lo, hi]` index box, each cell
    /// inflated by half a resolution per axis.
    pub(crate) fn cell_box(&self, lo: &[i64], hi: &[i64]) -> BoxRegion {
        let mut blo = Vec::with_capacity(self.dim());
        let mut bhi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let half = 0.5 * self.resolution[k];
            blo.push(self.origin[k] + lo[k] as f64 * self.resolution[k] - half);
            bhi.push(self.origin[k] + hi[k] as f64 * self.resolution[k] + half);
        }
        BoxRegion { lo: blo, hi: bhi }
    }
}

/// Rounds to the nearest integer; values within [`TIE_TOLERANCE`] of a
/// half-integer go away from zero.
pub(crate) fn round_half_away(q: f64) -> f64 {
    let f = math::floor(q);
    if ((q - f) - 0.5).abs() <= TIE_TOLERANCE {
        if q >= 0.0 {
            f + 1.0
        } else {
            f
        }
    } else {
        math::round(q)
    }
}

/// Integer cell indices of a lattice point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(indices: Vec<i64>) -> Self {
        LatticePoint(indices)
    }

    pub fn indices(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn offset(&self, by: &[i64]) -> LatticePoint {
        LatticePoint(self.0.iter().zip(by).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(v)
    }
}

impl<const N: usize> From<[i64; N]> for LatticePoint {
    fn from(v: [i64; N]) -> Self {
        LatticePoint(v.to_vec())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = BoxRegion { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::invalid("box bounds must have the same positive length"));
        }
        for k in 0..self.lo.len() {
            if !(self.lo[k].is_finite() && self.hi[k].is_finite()) {
                return Err(Error::invalid("box bounds must be finite"));
            }
            if self.lo[k] > self.hi[k] {
                return Err(Error::invalid(format!(
                    "box lower bound {} exceeds upper bound {} on axis {k}",
                    self.lo[k], self.hi[k]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().enumerate().all(|(k, &v)| self.lo[k] <= v && v <= self.hi[k])
    }

    pub fn has_interior(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| h > l)
    }

    pub fn intersect(&self, other: &BoxRegion) -> Option<BoxRegion> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let l = self.lo[k].max(other.lo[k]);
            let h = self.hi[k].min(other.hi[k]);
            if l > h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(BoxRegion { lo, hi })
    }

    pub fn inflate(&self, by: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|v| v - by).collect(),
            hi: self.hi.iter().map(|v| v + by).collect(),
        }
    }

    pub fn translate(&self, by: &[f64]) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().zip(by).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(by).map(|(a, b)| a + b).collect(),
        }
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        math::sqrt(self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum())
    }

    /// Outward half-space form `P y <= q`: two faces per axis, lower face first.
    pub fn faces(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n);
        for k in 0..n {
            let mut lower = alloc::vec![0.0; n];
            lower[k] = -1.0;
            out.push((lower, -self.lo[k]));
            let mut upper = alloc::vec![0.0; n];
            upper[k] = 1.0;
            out.push((upper, self.hi[k]));
        }
        out
    }
}
