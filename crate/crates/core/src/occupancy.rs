//! Rigid-body occupancy and probabilistic avoid sets.
//!
//! The occupancy of a lattice point `y` is the probability that an obstacle
//! whose center is distributed as `psi` covers `y`:
//! `phi(y) = sum_z psi(z) * 1[y - z in K]`, where `K` is the footprint
//! rasterized on the lattice. Thresholding `phi` at `alpha` gives the cells
//! the robot must avoid, which are then merged into a small number of
//! axis-aligned boxes for the planner.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::lattice::{BoxRegion, Lattice, LatticePoint};
use crate::pmf::{Accumulator, IndexBoxIter, SparsePmf};
use crate::{math, Error, Result};

/// Limit on the number of joint configurations enumerated by
/// [`joint_occupancy_bruteforce`].
pub const JOINT_CONFIGURATION_LIMIT: u128 = 1_000_000;

const GEOMETRY_TOLERANCE: f64 = 1e-9;

/// Footprint of an obstacle relative to its center.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum ObstacleGeometry {
    /// `{y : |y_k - c_k| <= half_widths_k}`.
    CenteredBox { half_widths: Vec<f64> },
    /// Explicit lattice offsets from the center.
    IndicatorKernel { cells: Vec<LatticePoint> },
}

impl ObstacleGeometry {
    pub fn centered_box(half_widths: Vec<f64>) -> Result<Self> {
        let g = ObstacleGeometry::CenteredBox { half_widths };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ObstacleGeometry::CenteredBox { half_widths } => {
                if half_widths.is_empty() || half_widths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
                    return Err(Error::InvalidGeometry("half widths must be positive and finite".into()));
                }
            }
            ObstacleGeometry::IndicatorKernel { cells } => {
                if cells.is_empty() {
                    return Err(Error::InvalidGeometry("kernel has no cells".into()));
                }
                let d = cells[0].dim();
                if d == 0 || cells.iter().any(|c| c.dim() != d) {
                    return Err(Error::InvalidGeometry("kernel cells differ in dimension".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ObstacleGeometry::CenteredBox { half_widths } => half_widths.len(),
            ObstacleGeometry::IndicatorKernel { cells } => cells.first().map_or(0, |c| c.dim()),
        }
    }

    /// Sorted, de-duplicated lattice offsets covered by the footprint.
    ///
    /// For a box these are the offsets whose cell centers lie inside it.
    pub fn kernel(&self, lattice: &Lattice) -> Result<Vec<Vec<i64>>> {
        self.validate()?;
        if self.dim() != lattice.dim() {
            return Err(Error::InvalidGeometry(format!(
                "geometry has dimension {}, lattice has {} axes",
                self.dim(),
                lattice.dim()
            )));
        }
        let cells: Vec<Vec<i64>> = match self {
            ObstacleGeometry::CenteredBox { half_widths } => {
                let ext: Vec<i64> = half_widths
                    .iter()
                    .zip(lattice.resolution())
                    .map(|(h, r)| math::floor(h / r + GEOMETRY_TOLERANCE) as i64)
                    .collect();
                let lo: Vec<i64> = ext.iter().map(|e| -e).collect();
                IndexBoxIter::new(&lo, &ext).collect()
            }
            ObstacleGeometry::IndicatorKernel { cells } => {
                let set: BTreeSet<Vec<i64>> = cells.iter().map(|c| c.0.clone()).collect();
                set.into_iter().collect()
            }
        };
        if cells.is_empty() {
            return Err(Error::InvalidGeometry("footprint covers no lattice cell".into()));
        }
        Ok(cells)
    }

    /// Whether the body centered at `center` covers `point` (closed set),
    /// evaluated in continuous coordinates.
    pub fn covers(&self, lattice: &Lattice, center: &[f64], point: &[f64]) -> bool {
        match self {
            ObstacleGeometry::CenteredBox { half_widths } => {
                (0..center.len()).all(|k| (point[k] - center[k]).abs() <= half_widths[k])
            }
            ObstacleGeometry::IndicatorKernel { cells } => {
                // A kernel cell covers the half-open lattice cell around its center.
                let Ok(c) = lattice.snap(center) else { return false };
                let Ok(p) = lattice.snap(point) else { return false };
                let off: Vec<i64> = p.0.iter().zip(&c.0).map(|(a, b)| a - b).collect();
                cells.iter().any(|k| k.0 == off)
            }
        }
    }
}

/// Occupancy values on a lattice; cells not stored have value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyField {
    lattice: Lattice,
    time_index: usize,
    points: Vec<i64>,
    values: Vec<f64>,
}

impl OccupancyField {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn with_time_index(mut self, t: usize) -> Self {
        self.time_index = t;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[i64], f64)> + '_ {
        self.points.chunks_exact(self.lattice.dim()).zip(self.values.iter().copied())
    }

    pub fn get(&self, index: &[i64]) -> f64 {
        let d = self.lattice.dim();
        let n = self.values.len();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.points[mid * d..(mid + 1) * d].cmp(index) {
                core::cmp::Ordering::Less => lo = mid + 1,
                core::cmp::Ordering::Greater => hi = mid,
                core::cmp::Ordering::Equal => return self.values[mid],
            }
        }
        0.0
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cells with value at least `alpha`; every stored cell when `alpha` is zero.
    pub fn superlevel_cells(&self, alpha: f64) -> Vec<Vec<i64>> {
        self.iter().filter(|(_, v)| *v >= alpha).map(|(p, _)| p.to_vec()).collect()
    }
}

/// Inclusive box of lattice indices, tagged with the obstacle it came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TaggedBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub obstacle: usize,
}

impl TaggedBox {
    pub fn contains_index(&self, idx: &[i64]) -> bool {
        idx.iter().enumerate().all(|(k, &v)| self.lo[k] <= v && v <= self.hi[k])
    }

    pub fn cell_count(&self) -> u128 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l + 1) as u128).product()
    }
}

/// Boxes to avoid at one time step. Each index box stands for the closed
/// region covered by its cells, each inflated by half a resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AvoidBoxSet {
    pub t: usize,
    pub alpha: f64,
    pub lattice: Lattice,
    pub boxes: Vec<TaggedBox>,
}

impl AvoidBoxSet {
    pub fn empty(lattice: Lattice, t: usize, alpha: f64) -> Self {
        AvoidBoxSet { t, alpha, lattice, boxes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn region(&self, i: usize) -> BoxRegion {
        self.lattice.cell_box(&self.boxes[i].lo, &self.boxes[i].hi)
    }

    pub fn regions(&self) -> Vec<BoxRegion> {
        (0..self.boxes.len()).map(|i| self.region(i)).collect()
    }

    /// Shifts every box by the lattice vector `d`.
    pub fn translate(&self, d: &[i64]) -> AvoidBoxSet {
        let shift = |v: &[i64]| -> Vec<i64> { v.iter().zip(d).map(|(a, b)| a + b).collect() };
        AvoidBoxSet {
            t: self.t,
            alpha: self.alpha,
            lattice: self.lattice.clone(),
            boxes: self
                .boxes
                .iter()
                .map(|b| TaggedBox { lo: shift(&b.lo), hi: shift(&b.hi), obstacle: b.obstacle })
                .collect(),
        }
    }

    /// Whether the closed union of box regions contains `p`.
    pub fn contains_point(&self, p: &[f64]) -> bool {
        (0..self.boxes.len()).any(|i| self.region(i).contains(p))
    }

    pub fn covers_cell(&self, idx: &[i64]) -> bool {
        self.boxes.iter().any(|b| b.contains_index(idx))
    }

    /// Every lattice cell inside some box.
    pub fn cells(&self) -> BTreeSet<Vec<i64>> {
        let mut out = BTreeSet::new();
        for b in &self.boxes {
            out.extend(IndexBoxIter::new(&b.lo, &b.hi));
        }
        out
    }

    pub fn extend(&mut self, other: AvoidBoxSet) {
        self.boxes.extend(other.boxes);
    }
}

/// Occupancy of a rigid body whose center follows `center_pmf`: the PMF
/// spread over the footprint kernel, each cell summing the masses of the
/// centers that cover it.
pub fn occupancy(center_pmf: &SparsePmf, geometry: &ObstacleGeometry) -> Result<OccupancyField> {
    let lattice = center_pmf.lattice();
    let kernel = geometry.kernel(lattice)?;
    let n = lattice.dim();
    let (plo, phi) = center_pmf.bounds();
    let mut klo = alloc::vec![i64::MAX; n];
    let mut khi = alloc::vec![i64::MIN; n];
    for k in &kernel {
        for a in 0..n {
            klo[a] = klo[a].min(k[a]);
            khi[a] = khi[a].max(k[a]);
        }
    }
    let lo: Vec<i64> = (0..n).map(|a| plo[a] + klo[a]).collect();
    let hi: Vec<i64> = (0..n).map(|a| phi[a] + khi[a]).collect();
    let mut acc = Accumulator::new(&lo, &hi, center_pmf.len().saturating_mul(kernel.len()));
    let mut y = alloc::vec![0i64; n];
    for (z, m) in center_pmf.iter() {
        for k in &kernel {
            for a in 0..n {
                y[a] = z[a] + k[a];
            }
            acc.add(&y, m);
        }
    }
    let (points, mut values) = acc.finish();
    // Summation error can push a fully covered cell a hair above one.
    values.iter_mut().for_each(|v| *v = v.min(1.0));
    Ok(OccupancyField { lattice: lattice.clone(), time_index: 0, points, values })
}

/// Cells of `field` with value at least `alpha`, merged into boxes.
pub fn superlevel(field: &OccupancyField, alpha: f64) -> Result<AvoidBoxSet> {
    check_alpha(alpha)?;
    let cells = field.superlevel_cells(alpha);
    let boxes = decompose(&cells, field.lattice.dim())
        .into_iter()
        .map(|(lo, hi)| TaggedBox { lo, hi, obstacle: 0 })
        .collect();
    Ok(AvoidBoxSet { t: field.time_index, alpha, lattice: field.lattice.clone(), boxes })
}

/// Union over obstacles of their superlevel sets at `alpha / N`. The free
/// space outside it is a subset of the set where the probability of any
/// obstacle covering a point is below `alpha`.
pub fn avoid_sets_multi(
    per_obstacle_pmfs: &[SparsePmf],
    geometry: &ObstacleGeometry,
    alpha: f64,
) -> Result<AvoidBoxSet> {
    if per_obstacle_pmfs.is_empty() {
        return Err(Error::invalid("at least one obstacle is required"));
    }
    let fields = per_obstacle_pmfs
        .iter()
        .map(|p| occupancy(p, geometry))
        .collect::<Result<Vec<_>>>()?;
    avoid_from_fields(&fields, alpha)
}

/// [`avoid_sets_multi`] for precomputed occupancy fields, one per obstacle.
pub fn avoid_from_fields(fields: &[OccupancyField], alpha: f64) -> Result<AvoidBoxSet> {
    check_alpha(alpha)?;
    let first = fields.first().ok_or_else(|| Error::invalid("at least one obstacle is required"))?;
    for f in fields {
        f.lattice.check_compatible(&first.lattice)?;
    }
    let threshold = alpha / fields.len() as f64;
    let mut out = AvoidBoxSet::empty(first.lattice.clone(), first.time_index, alpha);
    if threshold > 1.0 {
        log::warn!("per-obstacle threshold {threshold} exceeds one; avoid set is empty");
        return Ok(out);
    }
    for (i, f) in fields.iter().enumerate() {
        let mut s = superlevel(f, threshold)?;
        if f.lattice != first.lattice {
            // Same spacing, different origin: re-express on the first lattice.
            let shift = first
                .lattice
                .origin_offset(&f.lattice)
                .ok_or_else(|| Error::LatticeMismatch("occupancy lattices are not aligned".into()))?;
            s = s.translate(&shift);
        }
        out.boxes.extend(s.boxes.into_iter().map(|b| TaggedBox { obstacle: i, ..b }));
    }
    Ok(out)
}

/// Exact probability that at least one obstacle covers each cell, by
/// enumerating every joint configuration of independent obstacle centers.
/// Intended for verification on small instances.
pub fn joint_occupancy_bruteforce(
    per_obstacle_pmfs: &[SparsePmf],
    geometry: &ObstacleGeometry,
) -> Result<OccupancyField> {
    let first = per_obstacle_pmfs.first().ok_or_else(|| Error::invalid("at least one obstacle is required"))?;
    let lattice = first.lattice().clone();
    for p in per_obstacle_pmfs {
        if p.lattice() != &lattice {
            return Err(Error::LatticeMismatch("obstacle PMFs must share a lattice".into()));
        }
    }
    let size = per_obstacle_pmfs.iter().fold(1u128, |a, p| a.saturating_mul(p.len() as u128));
    if size > JOINT_CONFIGURATION_LIMIT {
        return Err(Error::TooLarge { size, limit: JOINT_CONFIGURATION_LIMIT });
    }
    let kernel = geometry.kernel(&lattice)?;
    let n = lattice.dim();
    let m = per_obstacle_pmfs.len();
    let mut digits = alloc::vec![0usize; m];
    let mut acc: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut covered: BTreeSet<Vec<i64>> = BTreeSet::new();
    loop {
        let mut prob = 1.0;
        covered.clear();
        for (i, pmf) in per_obstacle_pmfs.iter().enumerate() {
            let z = pmf.point(digits[i]);
            prob *= pmf.masses()[digits[i]];
            for k in &kernel {
                covered.insert((0..n).map(|a| z[a] + k[a]).collect());
            }
        }
        for c in &covered {
            *acc.entry(c.clone()).or_insert(0.0) += prob;
        }
        let mut i = m;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < per_obstacle_pmfs[i].len() {
                break;
            }
            digits[i] = 0;
        }
        if digits.iter().all(|&d| d == 0) {
            break;
        }
    }
    let mut points = Vec::with_capacity(acc.len() * n);
    let mut values = Vec::with_capacity(acc.len());
    for (p, v) in acc {
        if v > 0.0 {
            points.extend_from_slice(&p);
            values.push(v.min(1.0));
        }
    }
    Ok(OccupancyField { lattice, time_index: 0, points, values })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha = {alpha} is not a probability")));
    }
    Ok(())
}

/// Greedy box cover of a sorted cell list: maximal runs along the last
/// axis, then runs of identical boxes merged along each earlier axis.
pub(crate) fn decompose(cells: &[Vec<i64>], dim: usize) -> Vec<(Vec<i64>, Vec<i64>)> {
    let mut boxes: Vec<(Vec<i64>, Vec<i64>)> = Vec::new();
    let last = dim - 1;
    for c in cells {
        if let Some((lo, hi)) = boxes.last_mut() {
            let same_prefix = (0..last).all(|k| lo[k] == c[k]);
            if same_prefix && hi[last] + 1 == c[last] {
                hi[last] = c[last];
                continue;
            }
        }
        boxes.push((c.clone(), c.clone()));
    }
    for axis in (0..last).rev() {
        // Key on every span except `axis`; within a key, merge touching boxes.
        let mut groups: BTreeMap<Vec<(i64, i64)>, Vec<(i64, i64)>> = BTreeMap::new();
        for (lo, hi) in &boxes {
            let key: Vec<(i64, i64)> = (0..dim).filter(|&k| k != axis).map(|k| (lo[k], hi[k])).collect();
            groups.entry(key).or_default().push((lo[axis], hi[axis]));
        }
        let mut merged = Vec::with_capacity(boxes.len());
        for (key, mut spans) in groups {
            spans.sort_unstable();
            let mut cur = spans[0];
            let mut emit = |span: (i64, i64)| {
                let mut lo = Vec::with_capacity(dim);
                let mut hi = Vec::with_capacity(dim);
                let mut it = key.iter();
                for k in 0..dim {
                    let (l, h) = if k == axis { span } else { *it.next().unwrap() };
                    lo.push(l);
                    hi.push(h);
                }
                merged.push((lo, hi));
            };
            for &s in &spans[1..] {
                if s.0 == cur.1 + 1 {
                    cur.1 = s.1;
                } else {
                    emit(cur);
                    cur = s;
                }
            }
            emit(cur);
        }
        merged.sort_unstable();
        boxes = merged;
    }
    boxes
}

#[cfg(feature = "serde")]
mod serde_impl {
    use super::*;
    use serde::ser::{SerializeMap, SerializeStruct};
    use serde::{Serialize, Serializer};

    struct Boxes<'a>(&'a AvoidBoxSet);
    struct OneBox<'a>(&'a AvoidBoxSet, usize);
    struct Entries<'a>(&'a OccupancyField);

    impl Serialize for OneBox<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            let r = self.0.region(self.1);
            let mut m = s.serialize_map(Some(3))?;
            m.serialize_entry("lo", &r.lo)?;
            m.serialize_entry("hi", &r.hi)?;
            m.serialize_entry("obstacle", &self.0.boxes[self.1].obstacle)?;
            m.end()
        }
    }

    impl Serialize for Boxes<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            s.collect_seq((0..self.0.boxes.len()).map(|i| OneBox(self.0, i)))
        }
    }

    impl Serialize for AvoidBoxSet {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            let mut st = s.serialize_struct("AvoidBoxSet", 3)?;
            st.serialize_field("t", &self.t)?;
            st.serialize_field("alpha", &self.alpha)?;
            st.serialize_field("boxes", &Boxes(self))?;
            st.end()
        }
    }

    impl Serialize for Entries<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            #[derive(Serialize)]
            struct E<'a> {
                idx: &'a [i64],
                value: f64,
            }
            s.collect_seq(self.0.iter().map(|(idx, value)| E { idx, value }))
        }
    }

    impl Serialize for OccupancyField {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            let mut st = s.serialize_struct("OccupancyField", 4)?;
            st.serialize_field("t", &self.time_index)?;
            st.serialize_field("resolution", self.lattice.resolution())?;
            st.serialize_field("origin", self.lattice.origin())?;
            st.serialize_field("entries", &Entries(self))?;
            st.end()
        }
    }
}
