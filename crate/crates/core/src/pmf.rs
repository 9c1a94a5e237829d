//! Sparse probability mass functions on a lattice.
//!
//! Only cells with strictly positive mass are stored, so the support of a
//! [`SparsePmf`] is exactly its key set. Entries are kept sorted
//! lexicographically by index, which also fixes the accumulation order of
//! every operation that iterates over them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::lattice::{Lattice, LatticePoint};
use crate::{Error, Result};

/// Allowed deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePmf {
    lattice: Lattice,
    points: Vec<i64>,
    mass: Vec<f64>,
}

impl SparsePmf {
    /// Builds a PMF from `(index, mass)` pairs. Duplicate indices are summed
    /// and zero masses dropped; the total must be one within [`MASS_TOLERANCE`].
    pub fn from_entries<I, P>(lattice: Lattice, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, f64)>,
        P: Into<LatticePoint>,
    {
        let pmf = Self::collect(lattice, entries)?;
        let total = pmf.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("masses sum to {total}, expected 1")));
        }
        Ok(pmf)
    }

    /// Like [`SparsePmf::from_entries`] but rescales the masses to sum to one.
    pub fn normalized<I, P>(lattice: Lattice, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, f64)>,
        P: Into<LatticePoint>,
    {
        let mut pmf = Self::collect(lattice, entries)?;
        let total = pmf.total_mass();
        if !(total > 0.0) {
            return Err(Error::EmptySupport);
        }
        for m in &mut pmf.mass {
            *m /= total;
        }
        Ok(pmf)
    }

    fn collect<I, P>(lattice: Lattice, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, f64)>,
        P: Into<LatticePoint>,
    {
        let dim = lattice.dim();
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (p, m) in entries {
            let p = p.into();
            if p.dim() != dim {
                return Err(Error::invalid(format!(
                    "point {p} has {} indices, lattice has {dim} axes",
                    p.dim()
                )));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::invalid(format!("mass {m} at {p} is not a probability")));
            }
            *map.entry(p.0).or_insert(0.0) += m;
        }
        let mut points = Vec::with_capacity(map.len() * dim);
        let mut mass = Vec::with_capacity(map.len());
        for (p, m) in map {
            if m > 0.0 {
                points.extend_from_slice(&p);
                mass.push(m);
            }
        }
        if mass.is_empty() {
            return Err(Error::EmptySupport);
        }
        Ok(SparsePmf { lattice, points, mass })
    }

    /// Point mass at `point`.
    pub fn delta(lattice: Lattice, point: impl Into<LatticePoint>) -> Result<Self> {
        Self::from_entries(lattice, [(point.into(), 1.0)])
    }

    /// Equal mass on each of `points` (duplicates count once).
    pub fn uniform<P: Into<LatticePoint>>(
        lattice: Lattice,
        points: impl IntoIterator<Item = P>,
    ) -> Result<Self> {
        Self::normalized(lattice, points.into_iter().map(|p| (p.into(), 1.0)))
            .map(|mut pmf| {
                let w = 1.0 / pmf.len() as f64;
                pmf.mass.iter_mut().for_each(|m| *m = w);
                pmf
            })
    }

    /// Uniform mass over every lattice point of a closed box.
    pub fn uniform_box(lattice: Lattice, region: &crate::BoxRegion) -> Result<Self> {
        let (lo, hi) = lattice.index_range(region)?;
        let cells = IndexBoxIter::new(&lo, &hi).map(LatticePoint);
        Self::uniform(lattice, cells)
    }

    /// Internal constructor for already sorted, strictly positive data.
    pub(crate) fn from_sorted_parts(lattice: Lattice, points: Vec<i64>, mass: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), mass.len() * lattice.dim());
        debug_assert!(mass.iter().all(|&m| m > 0.0));
        SparsePmf { lattice, points, mass }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[i64], f64)> + '_ {
        self.points.chunks_exact(self.dim()).zip(self.mass.iter().copied())
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn point(&self, i: usize) -> &[i64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    /// Mass at `index`, zero off the support.
    pub fn get(&self, index: &[i64]) -> f64 {
        match self.position(index) {
            Some(i) => self.mass[i],
            None => 0.0,
        }
    }

    fn position(&self, index: &[i64]) -> Option<usize> {
        if index.len() != self.dim() {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.point(mid).cmp(index) {
                core::cmp::Ordering::Less => lo = mid + 1,
                core::cmp::Ordering::Greater => hi = mid,
                core::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn support(&self) -> Vec<LatticePoint> {
        self.points.chunks_exact(self.dim()).map(|p| LatticePoint(p.to_vec())).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Inclusive per-axis index bounds of the support.
    pub fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let d = self.dim();
        let mut lo = alloc::vec![i64::MAX; d];
        let mut hi = alloc::vec![i64::MIN; d];
        for p in self.points.chunks_exact(d) {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Expected coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut acc = alloc::vec![0.0; d];
        let mut c = alloc::vec![0.0; d];
        for (p, m) in self.iter() {
            self.lattice.coord_into(p, &mut c);
            for k in 0..d {
                acc[k] += m * c[k];
            }
        }
        acc
    }

    /// Shifts every support point by the index vector `by`.
    pub fn translate(&self, by: &[i64]) -> SparsePmf {
        let d = self.dim();
        let mut points = self.points.clone();
        for p in points.chunks_exact_mut(d) {
            for k in 0..d {
                p[k] += by[k];
            }
        }
        SparsePmf { lattice: self.lattice.clone(), points, mass: self.mass.clone() }
    }

    /// Drops entries below `threshold` and renormalizes.
    pub fn prune(&self, threshold: f64) -> Result<Pruned> {
        if !(threshold >= 0.0) {
            return Err(Error::invalid("prune threshold must be non-negative"));
        }
        if threshold == 0.0 {
            return Ok(Pruned { pmf: self.clone(), retained_mass: self.total_mass() });
        }
        let d = self.dim();
        let mut points = Vec::new();
        let mut mass = Vec::new();
        for (p, m) in self.iter() {
            if m >= threshold {
                points.extend_from_slice(p);
                mass.push(m);
            }
        }
        let retained: f64 = mass.iter().sum();
        if mass.is_empty() {
            return Err(Error::EmptySupport);
        }
        mass.iter_mut().for_each(|m| *m /= retained);
        debug_assert_eq!(points.len(), mass.len() * d);
        Ok(Pruned { pmf: SparsePmf { lattice: self.lattice.clone(), points, mass }, retained_mass: retained })
    }

    /// Marginal over the listed axes, in the given order.
    pub fn marginal(&self, axes: &[usize]) -> Result<SparsePmf> {
        if axes.is_empty() || axes.iter().any(|&a| a >= self.dim()) {
            return Err(Error::invalid("marginal axes out of range"));
        }
        let lattice = self.lattice.select_axes(axes);
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (p, m) in self.iter() {
            let key: Vec<i64> = axes.iter().map(|&a| p[a]).collect();
            *map.entry(key).or_insert(0.0) += m;
        }
        let mut points = Vec::with_capacity(map.len() * axes.len());
        let mut mass = Vec::with_capacity(map.len());
        for (p, m) in map {
            points.extend_from_slice(&p);
            mass.push(m);
        }
        Ok(SparsePmf { lattice, points, mass })
    }
}

/// Result of [`SparsePmf::prune`].
#[derive(Debug, Clone)]
pub struct Pruned {
    /// Renormalized PMF.
    pub pmf: SparsePmf,
    /// Mass kept before renormalization.
    pub retained_mass: f64,
}

/// Exact sparse convolution: the law of `X + Y` for independent `X ~ a`, `Y ~ b`.
///
/// The result lives on a lattice whose origin is the sum of both origins.
pub fn convolve(a: &SparsePmf, b: &SparsePmf) -> Result<SparsePmf> {
    a.lattice.check_compatible(&b.lattice)?;
    let d = a.dim();
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    let lo: Vec<i64> = (0..d).map(|k| alo[k] + blo[k]).collect();
    let hi: Vec<i64> = (0..d).map(|k| ahi[k] + bhi[k]).collect();
    let mut acc = Accumulator::new(&lo, &hi, a.len().saturating_mul(b.len()));
    let mut target = alloc::vec![0i64; d];
    for (p, pm) in a.iter() {
        for (q, qm) in b.iter() {
            for k in 0..d {
                target[k] = p[k] + q[k];
            }
            acc.add(&target, pm * qm);
        }
    }
    let (points, mass) = acc.finish();
    Ok(SparsePmf::from_sorted_parts(a.lattice.sum_lattice(&b.lattice), points, mass))
}

/// Joint PMF of independent `X ~ a` and `Y ~ b` on the product lattice.
pub fn product(a: &SparsePmf, b: &SparsePmf) -> SparsePmf {
    let d = a.dim() + b.dim();
    let mut points = Vec::with_capacity(a.len() * b.len() * d);
    let mut mass = Vec::with_capacity(a.len() * b.len());
    // Lexicographic order of (p, q) is the nested iteration order.
    for (p, pm) in a.iter() {
        for (q, qm) in b.iter() {
            let m = pm * qm;
            if m > 0.0 {
                points.extend_from_slice(p);
                points.extend_from_slice(q);
                mass.push(m);
            }
        }
    }
    SparsePmf::from_sorted_parts(a.lattice.product(&b.lattice), points, mass)
}

/// Sum of the stored masses.
pub fn total_mass(a: &SparsePmf) -> f64 {
    a.total_mass()
}

/// Scatter-add target for sums over lattice points.
///
/// When the bounding box of all targets is small relative to the number of
/// additions, a dense buffer over that box is used; otherwise an ordered map.
/// Either way the additions for a given cell happen in call order, so the
/// two paths produce bit-identical results.
pub(crate) struct Accumulator {
    inner: AccInner,
}

enum AccInner {
    Dense { lo: Vec<i64>, extent: Vec<usize>, values: Vec<f64> },
    Sparse { dim: usize, map: BTreeMap<Vec<i64>, f64> },
}

const DENSE_VOLUME_LIMIT: u128 = 1 << 26;

impl Accumulator {
    pub(crate) fn new(lo: &[i64], hi: &[i64], expected_adds: usize) -> Self {
        let mut volume: u128 = 1;
        let mut extent = Vec::with_capacity(lo.len());
        for k in 0..lo.len() {
            let e = (hi[k] - lo[k] + 1).max(0) as u128;
            volume = volume.saturating_mul(e);
            extent.push(e as usize);
        }
        let budget = (expected_adds as u128).saturating_mul(8).max(4096);
        if volume <= DENSE_VOLUME_LIMIT && volume <= budget {
            Accumulator {
                inner: AccInner::Dense {
                    lo: lo.to_vec(),
                    extent,
                    values: alloc::vec![0.0; volume as usize],
                },
            }
        } else {
            Accumulator { inner: AccInner::Sparse { dim: lo.len(), map: BTreeMap::new() } }
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, p: &[i64], m: f64) {
        match &mut self.inner {
            AccInner::Dense { lo, extent, values } => {
                let mut flat = 0usize;
                for k in 0..lo.len() {
                    let off = (p[k] - lo[k]) as usize;
                    debug_assert!(off < extent[k], "accumulator target outside its bounds");
                    flat = flat * extent[k] + off;
                }
                values[flat] += m;
            }
            AccInner::Sparse { map, .. } => {
                if let Some(v) = map.get_mut(p) {
                    *v += m;
                } else {
                    map.insert(p.to_vec(), m);
                }
            }
        }
    }

    /// Sorted `(points, masses)` with zero entries removed.
    pub(crate) fn finish(self) -> (Vec<i64>, Vec<f64>) {
        match self.inner {
            AccInner::Dense { lo, extent, values } => {
                let d = lo.len();
                let mut points = Vec::new();
                let mut mass = Vec::new();
                let mut idx = lo.clone();
                for v in values {
                    if v > 0.0 {
                        points.extend_from_slice(&idx);
                        mass.push(v);
                    }
                    // Row-major increment, last axis fastest.
                    for k in (0..d).rev() {
                        idx[k] += 1;
                        if ((idx[k] - lo[k]) as usize) < extent[k] {
                            break;
                        }
                        idx[k] = lo[k];
                    }
                }
                (points, mass)
            }
            AccInner::Sparse { dim, map } => {
                let mut points = Vec::with_capacity(map.len() * dim);
                let mut mass = Vec::with_capacity(map.len());
                for (p, v) in map {
                    if v > 0.0 {
                        points.extend_from_slice(&p);
                        mass.push(v);
                    }
                }
                (points, mass)
            }
        }
    }
}

/// Row-major iterator over the integer points of an inclusive index box.
pub(crate) struct IndexBoxIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    next: Option<Vec<i64>>,
}

impl IndexBoxIter {
    pub(crate) fn new(lo: &[i64], hi: &[i64]) -> Self {
        let empty = lo.iter().zip(hi).any(|(l, h)| l > h);
        IndexBoxIter { lo: lo.to_vec(), hi: hi.to_vec(), next: if empty { None } else { Some(lo.to_vec()) } }
    }
}

impl Iterator for IndexBoxIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let cur = self.next.take()?;
        let mut nxt = cur.clone();
        let mut k = nxt.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if nxt[k] < self.hi[k] {
                nxt[k] += 1;
                self.next = Some(nxt);
                break;
            }
            nxt[k] = self.lo[k];
        }
        Some(cur)
    }
}

#[cfg(feature = "serde")]
mod serde_impl {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        idx: Vec<i64>,
        p: f64,
    }

    #[derive(Serialize, Deserialize)]
    struct Repr {
        resolution: Vec<f64>,
        origin: Vec<f64>,
        entries: Vec<Entry>,
    }

    impl Serialize for SparsePmf {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            Repr {
                resolution: self.lattice.resolution().to_vec(),
                origin: self.lattice.origin().to_vec(),
                entries: self.iter().map(|(p, m)| Entry { idx: p.to_vec(), p: m }).collect(),
            }
            .serialize(s)
        }
    }

    impl<'de> Deserialize<'de> for SparsePmf {
        fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            let repr = Repr::deserialize(d)?;
            let lattice = Lattice::new(repr.origin, repr.resolution).map_err(serde::de::Error::custom)?;
            SparsePmf::from_entries(lattice, repr.entries.into_iter().map(|e| (LatticePoint(e.idx), e.p)))
                .map_err(serde::de::Error::custom)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn line() -> Lattice {
        Lattice::uniform(1, 1.0).unwrap()
    }

    fn plane() -> Lattice {
        Lattice::uniform(2, 0.1).unwrap()
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(SparsePmf::from_entries(line(), [([0], 0.5)]).is_err());
        assert!(SparsePmf::from_entries(line(), [([0], 1.5), ([1], -0.5)]).is_err());
        assert!(matches!(SparsePmf::from_entries(line(), [([0], 0.0)]), Err(Error::EmptySupport)));
        assert!(SparsePmf::from_entries(line(), [(vec![0, 1], 1.0)]).is_err());
    }

    #[test]
    fn zero_entries_are_not_stored() {
        let pmf = SparsePmf::from_entries(line(), [([0], 1.0), ([3], 0.0)]).unwrap();
        assert_eq!(pmf.len(), 1);
        assert_eq!(pmf.get(&[3]), 0.0);
    }

    #[test]
    fn delta_shift() {
        let a = SparsePmf::delta(plane(), [2, 3]).unwrap();
        let b = SparsePmf::delta(plane(), [1, 1]).unwrap();
        let c = convolve(&a, &b).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.point(0), &[3, 4]);
        assert_eq!(c.masses()[0], 1.0);
        assert_eq!(total_mass(&c), 1.0);
    }

    #[test]
    fn coin_sum_is_binomial() {
        let u = SparsePmf::uniform(line(), [[0], [1]]).unwrap();
        let c = convolve(&u, &u).unwrap();
        assert_eq!(c.get(&[0]), 0.25);
        assert_eq!(c.get(&[1]), 0.5);
        assert_eq!(c.get(&[2]), 0.25);
    }

    #[test]
    fn convolve_rejects_mismatched_lattices() {
        let a = SparsePmf::delta(plane(), [0, 0]).unwrap();
        let b = SparsePmf::delta(Lattice::uniform(2, 0.05).unwrap(), [0, 0]).unwrap();
        assert!(matches!(convolve(&a, &b), Err(Error::LatticeMismatch(_))));
        let c = SparsePmf::delta(line(), [0]).unwrap();
        assert!(matches!(convolve(&a, &c), Err(Error::LatticeMismatch(_))));
    }

    #[test]
    fn convolution_origin_is_sum_of_origins() {
        let la = Lattice::new(vec![0.5], vec![1.0]).unwrap();
        let lb = Lattice::new(vec![0.25], vec![1.0]).unwrap();
        let c = convolve(&SparsePmf::delta(la, [1]).unwrap(), &SparsePmf::delta(lb, [2]).unwrap()).unwrap();
        assert_eq!(c.lattice().coord(c.point(0)), vec![3.75]);
    }

    #[test]
    fn product_of_deltas() {
        let a = SparsePmf::delta(line(), [4]).unwrap();
        let b = SparsePmf::delta(line(), [-2]).unwrap();
        let j = product(&a, &b);
        assert_eq!(j.dim(), 2);
        assert_eq!(j.len(), 1);
        assert_eq!(j.point(0), &[4, -2]);
    }

    #[test]
    fn product_with_a_delta_copies_masses() {
        let a = SparsePmf::from_entries(line(), [([1], 0.5), ([2], 0.5)]).unwrap();
        let b = SparsePmf::delta(line(), [7]).unwrap();
        let j = product(&a, &b);
        assert_eq!(j.get(&[1, 7]), 0.5);
        assert_eq!(j.get(&[2, 7]), 0.5);
        assert!((j.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
    }

    #[test]
    fn product_marginals_recover_inputs() {
        let a = SparsePmf::from_entries(line(), [([0], 0.3), ([5], 0.7)]).unwrap();
        let b = SparsePmf::from_entries(line(), [([-1], 0.6), ([2], 0.4)]).unwrap();
        let j = product(&a, &b);
        assert_eq!(j.len(), 4);
        // Marginal oracle: sum the other coordinate by hand.
        let mut ma = [0.0; 2];
        let mut mb = [0.0; 2];
        for (p, m) in j.iter() {
            ma[if p[0] == 0 { 0 } else { 1 }] += m;
            mb[if p[1] == -1 { 0 } else { 1 }] += m;
        }
        assert!((ma[0] - 0.3).abs() < 1e-15 && (ma[1] - 0.7).abs() < 1e-15);
        assert!((mb[0] - 0.6).abs() < 1e-15 && (mb[1] - 0.4).abs() < 1e-15);
        let back = j.marginal(&[0]).unwrap();
        assert!((back.get(&[0]) - 0.3).abs() < 1e-15);
        assert!((back.get(&[5]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn delta_total_mass_is_exactly_one() {
        assert_eq!(SparsePmf::delta(plane(), [9, -9]).unwrap().total_mass(), 1.0);
    }

    #[test]
    fn prune_accounts_for_dropped_mass() {
        let pmf = SparsePmf::from_entries(
            line(),
            [([0], 0.001), ([1], 0.002), ([2], 0.497), ([3], 0.5)],
        )
        .unwrap();
        let eps = 0.0025;
        let pruned = pmf.prune(eps).unwrap();
        assert_eq!(pruned.pmf.len(), 2);
        assert!(pruned.retained_mass >= 1.0 - eps * pmf.len() as f64);
        assert!((pruned.pmf.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
    }

    #[test]
    fn index_box_iter_is_row_major() {
        let pts: Vec<Vec<i64>> = IndexBoxIter::new(&[0, 0], &[1, 2]).collect();
        assert_eq!(pts, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![1, 2]]);
        assert_eq!(IndexBoxIter::new(&[1], &[0]).count(), 0);
    }

    #[test]
    fn dense_and_sparse_accumulators_agree_bitwise() {
        let pts: Vec<(Vec<i64>, f64)> =
            (0..200).map(|i| (vec![(i * 7) % 13, (i * 5) % 11], 0.1 + (i as f64) * 1e-3)).collect();
        let mut dense = Accumulator::new(&[0, 0], &[12, 10], 1 << 20);
        let mut sparse = Accumulator::new(&[0, 0], &[12, 10], 0);
        // Budget of zero adds still allows a 4096-cell dense buffer, so force
        // the sparse path with a huge box instead.
        let mut sparse_big = Accumulator::new(&[0, 0], &[1 << 20, 1 << 20], 0);
        for (p, m) in &pts {
            dense.add(p, *m);
            sparse.add(p, *m);
            sparse_big.add(p, *m);
        }
        let a = dense.finish();
        assert_eq!(a, sparse.finish());
        assert_eq!(a, sparse_big.finish());
    }

    fn arb_pmf(dim: usize, max_len: usize) -> impl Strategy<Value = SparsePmf> {
        proptest::collection::vec((proptest::collection::vec(-6i64..6, dim), 0.01f64..1.0), 1..max_len)
            .prop_map(move |entries| {
                SparsePmf::normalized(Lattice::uniform(dim, 0.5).unwrap(), entries.into_iter().map(|(p, m)| (LatticePoint(p), m)))
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn convolution_is_commutative_and_mass_preserving(a in arb_pmf(2, 12), b in arb_pmf(2, 12)) {
            let ab = convolve(&a, &b).unwrap();
            let ba = convolve(&b, &a).unwrap();
            prop_assert_eq!(ab.support(), ba.support());
            for (p, m) in ab.iter() {
                prop_assert!((m - ba.get(p)).abs() <= 1e-12);
            }
            prop_assert!((ab.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
            prop_assert!(ab.len() <= a.len() * b.len());
        }

        #[test]
        fn convolution_is_associative(a in arb_pmf(1, 8), b in arb_pmf(1, 8), c in arb_pmf(1, 8)) {
            let left = convolve(&convolve(&a, &b).unwrap(), &c).unwrap();
            let right = convolve(&a, &convolve(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(left.support(), right.support());
            for (p, m) in left.iter() {
                prop_assert!((m - right.get(p)).abs() <= 1e-12);
            }
        }

        #[test]
        fn convolution_support_is_minkowski_sum(a in arb_pmf(2, 10), b in arb_pmf(2, 10)) {
            let mut expected = alloc::collections::BTreeSet::new();
            for (p, _) in a.iter() {
                for (q, _) in b.iter() {
                    expected.insert(vec![p[0] + q[0], p[1] + q[1]]);
                }
            }
            let got: alloc::collections::BTreeSet<Vec<i64>> =
                convolve(&a, &b).unwrap().support().into_iter().map(|p| p.0).collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn product_marginalization_is_exact(a in arb_pmf(1, 10), b in arb_pmf(2, 10)) {
            let j = product(&a, &b);
            prop_assert!((j.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
            let ma = j.marginal(&[0]).unwrap();
            let mb = j.marginal(&[1, 2]).unwrap();
            prop_assert_eq!(ma.support(), a.support());
            prop_assert_eq!(mb.support(), b.support());
            for (p, m) in a.iter() { prop_assert!((ma.get(p) - m).abs() <= 1e-12); }
            for (p, m) in b.iter() { prop_assert!((mb.get(p) - m).abs() <= 1e-12); }
        }
    }
}
