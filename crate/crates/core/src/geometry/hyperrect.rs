use std::fmt;

use num_traits::{One, Zero};

use super::rational::format_scalar;
use super::{GeometryError, Scalar};

/// Closed axis-aligned box `[lo[0], hi[0]] × … × [lo[n-1], hi[n-1]]`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hyperrect {
    lo: Vec<Scalar>,
    hi: Vec<Scalar>,
}

/// How a box sits relative to a union of boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    Inside,
    Outside,
    Straddles,
}

impl Hyperrect {
    pub fn new(lo: Vec<Scalar>, hi: Vec<Scalar>) -> Result<Self, GeometryError> {
        if lo.is_empty() {
            return Err(GeometryError::EmptyDimension);
        }
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if let Some(axis) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(GeometryError::InvertedBounds { axis });
        }
        Ok(Hyperrect { lo, hi })
    }

    /// Builds from `(lo, hi)` pairs; panics on malformed input.
    pub fn from_bounds(bounds: &[(Scalar, Scalar)]) -> Self {
        let (lo, hi) = bounds.iter().cloned().unzip();
        Hyperrect::new(lo, hi).expect("malformed box")
    }

    pub fn point(x: Vec<Scalar>) -> Self {
        Hyperrect {
            lo: x.clone(),
            hi: x,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[Scalar] {
        &self.lo
    }

    pub fn hi(&self) -> &[Scalar] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> Scalar {
        &self.hi[axis] - &self.lo[axis]
    }

    /// Lowest-indexed axis of maximal width.
    pub fn widest_axis(&self) -> usize {
        let mut best = 0;
        for axis in 1..self.dim() {
            if self.width(axis) > self.width(best) {
                best = axis;
            }
        }
        best
    }

    /// ∞-norm diameter.
    pub fn diameter(&self) -> Scalar {
        self.width(self.widest_axis())
    }

    pub fn center(&self) -> Vec<Scalar> {
        let two = Scalar::from_integer(2.into());
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (l + h) / &two)
            .collect()
    }

    pub fn half_widths(&self) -> Vec<Scalar> {
        let two = Scalar::from_integer(2.into());
        (0..self.dim()).map(|i| self.width(i) / &two).collect()
    }

    pub fn volume(&self) -> Scalar {
        (0..self.dim()).fold(Scalar::one(), |acc, i| acc * self.width(i))
    }

    pub fn is_full_dimensional(&self) -> bool {
        (0..self.dim()).all(|i| self.lo[i] < self.hi[i])
    }

    pub fn contains_point(&self, x: &[Scalar]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| self.lo[i] <= x[i] && x[i] <= self.hi[i])
    }

    pub fn contains_point_interior(&self, x: &[Scalar]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| self.lo[i] < x[i] && x[i] < self.hi[i])
    }

    pub fn contains(&self, other: &Hyperrect) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Closed intersection test: shared boundary points count.
    pub fn intersects(&self, other: &Hyperrect) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// Interiors overlap (positive-measure intersection for full-dimensional boxes).
    pub fn overlaps_interior(&self, other: &Hyperrect) -> bool {
        (0..self.dim()).all(|i| self.lo[i] < other.hi[i] && other.lo[i] < self.hi[i])
    }

    pub fn intersection(&self, other: &Hyperrect) -> Option<Hyperrect> {
        if !self.intersects(other) {
            return None;
        }
        let lo = (0..self.dim())
            .map(|i| super::rational::max_of(&self.lo[i], &other.lo[i]).clone())
            .collect();
        let hi = (0..self.dim())
            .map(|i| super::rational::min_of(&self.hi[i], &other.hi[i]).clone())
            .collect();
        Some(Hyperrect { lo, hi })
    }

    /// Bisects on `axis`. Zero-width axes are rejected.
    pub fn bisect(&self, axis: usize) -> Result<(Hyperrect, Hyperrect), GeometryError> {
        if axis >= self.dim() {
            return Err(GeometryError::AxisOutOfRange {
                axis,
                dim: self.dim(),
            });
        }
        if self.width(axis).is_zero() {
            return Err(GeometryError::DegenerateSplit { axis });
        }
        let mid = (&self.lo[axis] + &self.hi[axis]) / Scalar::from_integer(2.into());
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = mid.clone();
        right.lo[axis] = mid;
        Ok((left, right))
    }

    /// All distinct vertices; zero-width axes contribute one coordinate.
    pub fn vertices(&self) -> Vec<Vec<Scalar>> {
        let mut out: Vec<Vec<Scalar>> = vec![Vec::with_capacity(self.dim())];
        for i in 0..self.dim() {
            let choices: Vec<&Scalar> = if self.lo[i] == self.hi[i] {
                vec![&self.lo[i]]
            } else {
                vec![&self.lo[i], &self.hi[i]]
            };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |c| {
                        let mut v = prefix.clone();
                        v.push((*c).clone());
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Classifies this box against the union of `boxes`.
    ///
    /// Coordinates of the boxes that meet this box are compressed into an
    /// elementary grid; each grid cell is either wholly inside some box or
    /// meets none of them in its interior.
    pub fn coverage(&self, boxes: &[Hyperrect]) -> Coverage {
        let relevant: Vec<&Hyperrect> = boxes
            .iter()
            .filter(|b| b.dim() == self.dim() && b.overlaps_interior(self))
            .collect();
        if relevant.is_empty() {
            return Coverage::Outside;
        }
        if relevant.iter().any(|b| b.contains(self)) {
            return Coverage::Inside;
        }
        let mut breaks: Vec<Vec<Scalar>> = Vec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            let mut pts = vec![self.lo[axis].clone(), self.hi[axis].clone()];
            for b in &relevant {
                for p in [&b.lo[axis], &b.hi[axis]] {
                    if *p > self.lo[axis] && *p < self.hi[axis] {
                        pts.push(p.clone());
                    }
                }
            }
            pts.sort();
            pts.dedup();
            breaks.push(pts);
        }
        let mut covered = 0usize;
        let mut total = 0usize;
        let mut idx = vec![0usize; self.dim()];
        let two = Scalar::from_integer(2.into());
        loop {
            let mid: Vec<Scalar> = (0..self.dim())
                .map(|a| (&breaks[a][idx[a]] + &breaks[a][idx[a] + 1]) / &two)
                .collect();
            total += 1;
            if relevant.iter().any(|b| b.contains_point(&mid)) {
                covered += 1;
            }
            if covered > 0 && covered < total {
                return Coverage::Straddles;
            }
            let mut axis = 0;
            loop {
                if axis == self.dim() {
                    return if covered == total {
                        Coverage::Inside
                    } else {
                        Coverage::Outside
                    };
                }
                idx[axis] += 1;
                if idx[axis] + 1 < breaks[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
}

impl fmt::Debug for Hyperrect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Hyperrect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(
                f,
                "[{},{}]",
                format_scalar(&self.lo[i]),
                format_scalar(&self.hi[i])
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::{frac, int};

    fn iv(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn rejects_malformed() {
        assert!(Hyperrect::new(vec![int(1)], vec![int(0)]).is_err());
        assert!(Hyperrect::new(vec![], vec![]).is_err());
        assert!(Hyperrect::new(vec![int(0)], vec![int(1), int(2)]).is_err());
    }

    #[test]
    fn closed_vs_interior() {
        let a = iv(int(0), int(1));
        let b = iv(int(1), int(2));
        assert!(a.intersects(&b));
        assert!(!a.overlaps_interior(&b));
    }

    #[test]
    fn coverage_of_split_union() {
        let unit = Hyperrect::from_bounds(&[(int(0), int(1)), (int(0), int(1))]);
        let left = Hyperrect::from_bounds(&[(int(0), frac(1, 2)), (int(0), int(1))]);
        let right = Hyperrect::from_bounds(&[(frac(1, 2), int(1)), (int(0), int(1))]);
        assert_eq!(unit.coverage(&[left.clone(), right]), Coverage::Inside);
        assert_eq!(unit.coverage(&[left]), Coverage::Straddles);
        let far = Hyperrect::from_bounds(&[(int(2), int(3)), (int(0), int(1))]);
        assert_eq!(unit.coverage(&[far]), Coverage::Outside);
    }

    #[test]
    fn bisect_rejects_zero_width() {
        let b = Hyperrect::from_bounds(&[(int(0), int(1)), (int(2), int(2))]);
        assert!(b.bisect(1).is_err());
        assert!(b.bisect(2).is_err());
        let (l, r) = b.bisect(0).unwrap();
        assert_eq!(l.hi()[0], frac(1, 2));
        assert_eq!(r.lo()[0], frac(1, 2));
    }

    #[test]
    fn vertices_dedup_degenerate_axes() {
        let b = Hyperrect::from_bounds(&[(int(0), int(1)), (int(2), int(2))]);
        assert_eq!(b.vertices().len(), 2);
        let c = Hyperrect::from_bounds(&[(int(0), int(1)), (int(0), int(1)), (int(0), int(1))]);
        assert_eq!(c.vertices().len(), 8);
    }
}
