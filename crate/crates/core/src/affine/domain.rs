//! Integer boxes (loop domains) and finite image sets.

use std::collections::BTreeSet;
use std::fmt;

use super::AffineError;

/// Hard cap on the number of points a box may contain.
pub const MAX_BOX_POINTS: u64 = 1 << 40;

/// A rectangular integer domain `lo_0..hi_0 × … × lo_{n-1}..hi_{n-1}`,
/// inclusive below and exclusive above.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl IntBox {
    pub fn new(bounds: impl IntoIterator<Item = (i64, i64)>) -> Result<Self, AffineError> {
        let (lo, hi): (Vec<i64>, Vec<i64>) = bounds.into_iter().unzip();
        for (dim, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l > h {
                return Err(AffineError::InvalidBound { dim, lo: l, hi: h });
            }
        }
        let mut card: u128 = 1;
        for (&l, &h) in lo.iter().zip(&hi) {
            card = card.saturating_mul((h as i128 - l as i128) as u128);
        }
        if card > MAX_BOX_POINTS as u128 {
            return Err(AffineError::BoxTooLarge(card));
        }
        Ok(IntBox { lo, hi })
    }

    /// Box `0..e_0 × … × 0..e_{n-1}`.
    pub fn from_extents(extents: &[i64]) -> Result<Self, AffineError> {
        Self::new(extents.iter().map(|&e| (0, e)))
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, dim: usize) -> i64 {
        self.lo[dim]
    }

    pub fn hi(&self, dim: usize) -> i64 {
        self.hi[dim]
    }

    pub fn extent(&self, dim: usize) -> i64 {
        self.hi[dim] - self.lo[dim]
    }

    pub fn extents(&self) -> Vec<i64> {
        (0..self.dims()).map(|d| self.extent(d)).collect()
    }

    pub fn bounds(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.lo.iter().copied().zip(self.hi.iter().copied())
    }

    pub fn cardinality(&self) -> u64 {
        self.bounds().map(|(l, h)| (h - l) as u64).product()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds().any(|(l, h)| l == h)
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.len() == self.dims() && self.bounds().zip(point).all(|((l, h), &x)| l <= x && x < h)
    }

    /// Row-major rank of `point` within the box. The point must be contained.
    pub fn rank_of(&self, point: &[i64]) -> u64 {
        let mut rank = 0u64;
        for (d, &x) in point.iter().enumerate() {
            rank = rank * self.extent(d) as u64 + (x - self.lo[d]) as u64;
        }
        rank
    }

    /// Inverse of [`IntBox::rank_of`].
    pub fn point_at(&self, mut rank: u64) -> Vec<i64> {
        let mut point = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            let e = self.extent(d) as u64;
            point[d] = self.lo[d] + (rank % e) as i64;
            rank /= e;
        }
        point
    }

    /// Visits every point in lexicographic order.
    pub fn for_each_point(&self, mut f: impl FnMut(&[i64])) {
        if self.is_empty() {
            return;
        }
        let n = self.dims();
        let mut p = self.lo.clone();
        loop {
            f(&p);
            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                p[d] += 1;
                if p[d] < self.hi[d] {
                    break;
                }
                p[d] = self.lo[d];
            }
        }
    }

    /// Lexicographic point iterator.
    pub fn points(&self) -> Points<'_> {
        Points {
            bx: self,
            next: if self.is_empty() { None } else { Some(self.lo.clone()) },
        }
    }
}

impl fmt::Display for IntBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (d, (l, h)) in self.bounds().enumerate() {
            if d > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}..{h}")?;
        }
        write!(f, "]")
    }
}

pub struct Points<'a> {
    bx: &'a IntBox,
    next: Option<Vec<i64>>,
}

impl Iterator for Points<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        let mut d = succ.len();
        self.next = loop {
            if d == 0 {
                break None;
            }
            d -= 1;
            succ[d] += 1;
            if succ[d] < self.bx.hi[d] {
                break Some(succ);
            }
            succ[d] = self.bx.lo[d];
        };
        Some(cur)
    }
}

/// The image of a map: a dense box, a per-axis strided lattice, or an
/// explicit point set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSet {
    Box(IntBox),
    /// Points `lo_k + s_k·t` inside `bounds` on every axis.
    Lattice { bounds: IntBox, strides: Vec<i64> },
    Points { dims: usize, points: BTreeSet<Vec<i64>> },
}

impl ImageSet {
    pub fn dims(&self) -> usize {
        match self {
            ImageSet::Box(b) => b.dims(),
            ImageSet::Lattice { bounds, .. } => bounds.dims(),
            ImageSet::Points { dims, .. } => *dims,
        }
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        match self {
            ImageSet::Box(b) => b.contains(point),
            ImageSet::Lattice { bounds, strides } => {
                bounds.contains(point)
                    && point
                        .iter()
                        .zip(strides)
                        .enumerate()
                        .all(|(d, (&x, &s))| (x - bounds.lo(d)) % s == 0)
            }
            ImageSet::Points { points, .. } => points.contains(point),
        }
    }

    pub fn cardinality(&self) -> u64 {
        match self {
            ImageSet::Box(b) => b.cardinality(),
            ImageSet::Lattice { bounds, strides } => (0..bounds.dims())
                .map(|d| {
                    let e = bounds.extent(d);
                    if e == 0 {
                        0
                    } else {
                        ((e - 1) / strides[d] + 1) as u64
                    }
                })
                .product(),
            ImageSet::Points { points, .. } => points.len() as u64,
        }
    }

    /// Smallest box containing the set; `None` for an empty point set.
    pub fn bounding_box(&self) -> Option<IntBox> {
        match self {
            ImageSet::Box(b) => Some(b.clone()),
            ImageSet::Lattice { bounds, .. } => Some(bounds.clone()),
            ImageSet::Points { dims, points } => {
                let first = points.iter().next()?;
                let mut lo = first.clone();
                let mut hi = first.clone();
                for p in points {
                    for d in 0..*dims {
                        lo[d] = lo[d].min(p[d]);
                        hi[d] = hi[d].max(p[d]);
                    }
                }
                IntBox::new(lo.into_iter().zip(hi.into_iter().map(|h| h + 1))).ok()
            }
        }
    }

    /// True when the set is exactly the points of `bx`.
    pub fn covers(&self, bx: &IntBox) -> bool {
        if self.dims() != bx.dims() || self.cardinality() != bx.cardinality() {
            return false;
        }
        // Equal cardinality plus containment of every point means equality.
        match self.bounding_box() {
            None => true,
            Some(bb) => (0..bx.dims()).all(|d| bb.extent(d) == 0 || (bx.lo(d) <= bb.lo(d) && bb.hi(d) <= bx.hi(d))),
        }
    }

    /// All points in lexicographic order.
    pub fn to_points(&self) -> Vec<Vec<i64>> {
        match self {
            ImageSet::Box(b) => b.points().collect(),
            ImageSet::Lattice { .. } => {
                let bounds = self.bounding_box().expect("lattice has bounds");
                bounds.points().filter(|p| self.contains(p)).collect()
            }
            ImageSet::Points { points, .. } => points.iter().cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(matches!(IntBox::new([(3, 2)]), Err(AffineError::InvalidBound { dim: 0, .. })));
    }

    #[test]
    fn rejects_huge_boxes() {
        assert!(matches!(
            IntBox::from_extents(&[1 << 21, 1 << 20]),
            Err(AffineError::BoxTooLarge(_))
        ));
        assert!(IntBox::from_extents(&[1 << 20, 1 << 20]).is_ok());
    }

    #[test]
    fn lexicographic_order_and_rank() {
        let b = IntBox::new([(1, 3), (0, 3)]).unwrap();
        let pts: Vec<_> = b.points().collect();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![1, 0]);
        assert_eq!(pts[1], vec![1, 1]);
        assert_eq!(pts[5], vec![2, 2]);
        for (r, p) in pts.iter().enumerate() {
            assert_eq!(b.rank_of(p), r as u64);
            assert_eq!(&b.point_at(r as u64), p);
        }
        let mut visited = Vec::new();
        b.for_each_point(|p| visited.push(p.to_vec()));
        assert_eq!(visited, pts);
    }

    #[test]
    fn zero_dim_box_has_one_point() {
        let b = IntBox::new([]).unwrap();
        assert_eq!(b.cardinality(), 1);
        assert_eq!(b.points().count(), 1);
    }

    #[test]
    fn empty_box_has_no_points() {
        let b = IntBox::new([(0, 2), (4, 4)]).unwrap();
        assert_eq!(b.points().count(), 0);
        let mut n = 0;
        b.for_each_point(|_| n += 1);
        assert_eq!(n, 0);
    }

    #[test]
    fn lattice_membership() {
        let set = ImageSet::Lattice {
            bounds: IntBox::new([(0, 9)]).unwrap(),
            strides: vec![2],
        };
        assert_eq!(set.cardinality(), 5);
        assert_eq!(set.to_points(), vec![vec![0], vec![2], vec![4], vec![6], vec![8]]);
        assert!(!set.covers(&IntBox::from_extents(&[5]).unwrap()));
    }
}
