//! Exact test of `cell ⊆ ⋃ pieces` for full-dimensional parallelotopes.
//!
//! The cell is carved by each piece in turn (polytope difference in
//! half-space form); the cell is covered iff no carved remainder keeps a
//! nonempty interior. Lower-dimensional leftovers are ignored: a closed
//! cell minus a finite union of closed sets is relatively open, so it is
//! empty exactly when it has empty interior.

use num_traits::{One, Signed, Zero};

use super::lp::{maximize, LpOutcome};
use super::parallelotope::Matrix;
use super::{Hyperrect, Parallelotope, Scalar};

#[derive(Clone)]
struct HPoly {
    a: Matrix,
    b: Vec<Scalar>,
}

impl HPoly {
    fn from_box(cell: &Hyperrect) -> Self {
        let n = cell.dim();
        let mut a = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut up = vec![Scalar::zero(); n];
            up[i] = Scalar::one();
            a.push(up);
            b.push(cell.hi()[i].clone());
            let mut down = vec![Scalar::zero(); n];
            down[i] = -Scalar::one();
            a.push(down);
            b.push(-cell.lo()[i].clone());
        }
        HPoly { a, b }
    }

    fn with(&self, row: Vec<Scalar>, rhs: Scalar) -> Self {
        let mut out = self.clone();
        out.a.push(row);
        out.b.push(rhs);
        out
    }

    /// Positive slack everywhere ⇔ nonempty interior. `origin` is a point
    /// below the polytope on every axis so shifted variables are nonnegative.
    fn has_interior(&self, origin: &[Scalar]) -> bool {
        let n = origin.len();
        let mut rows = Vec::with_capacity(self.a.len() + 1);
        let mut rhs = Vec::with_capacity(self.a.len() + 1);
        for (row, b) in self.a.iter().zip(&self.b) {
            let shift = row
                .iter()
                .zip(origin)
                .fold(Scalar::zero(), |acc, (x, o)| acc + x * o);
            let mut r = row.clone();
            r.push(Scalar::one());
            rows.push(r);
            rhs.push(b - shift);
        }
        let mut cap = vec![Scalar::zero(); n + 1];
        cap[n] = Scalar::one();
        rows.push(cap.clone());
        rhs.push(Scalar::one());
        match maximize(&rows, &rhs, &cap) {
            LpOutcome::Optimal { value, .. } => value.is_positive(),
            _ => false,
        }
    }
}

pub fn box_covered_by(cell: &Hyperrect, pieces: &[Parallelotope]) -> bool {
    if !cell.is_full_dimensional() {
        // Degenerate cells never arise from partitions; fall back to vertices.
        return cell
            .vertices()
            .iter()
            .all(|v| pieces.iter().any(|p| p.contains_point(v)));
    }
    if pieces.iter().any(|p| p.contains_box(cell)) {
        return true;
    }
    let origin = cell.lo().to_vec();
    let mut remaining = vec![HPoly::from_box(cell)];
    for piece in pieces {
        if !piece.overlaps_interior(cell) {
            continue;
        }
        let Some((ha, hb)) = piece.halfspaces() else {
            continue;
        };
        let mut next = Vec::new();
        for r in remaining {
            let mut inside = r.clone();
            for (row, b) in ha.iter().zip(&hb) {
                inside = inside.with(row.clone(), b.clone());
            }
            if !inside.has_interior(&origin) {
                next.push(r);
                continue;
            }
            let mut prefix = r.clone();
            for (row, b) in ha.iter().zip(&hb) {
                let outside = prefix.with(row.iter().map(|x| -x).collect(), -b.clone());
                if outside.has_interior(&origin) {
                    next.push(outside);
                }
                prefix = prefix.with(row.clone(), b.clone());
            }
        }
        remaining = next;
        if remaining.is_empty() {
            return true;
        }
    }
    remaining.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::parallelotope::affine_image;
    use crate::geometry::rational::{frac, int};

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn two_segments_cover_their_union() {
        let a = Parallelotope::from_box(&seg(frac(1, 4), frac(5, 4)));
        let b = Parallelotope::from_box(&seg(frac(5, 4), frac(9, 4)));
        assert!(box_covered_by(
            &seg(int(1), frac(3, 2)),
            &[a.clone(), b.clone()]
        ));
        assert!(!box_covered_by(&seg(int(2), int(3)), &[a.clone(), b]));
        assert!(!box_covered_by(&seg(int(1), frac(3, 2)), &[a]));
    }

    #[test]
    fn two_triangles_halves_cover_square() {
        // Two sheared parallelograms whose union covers the unit square.
        let sq = Hyperrect::from_bounds(&[(int(0), int(1)), (int(0), int(1))]);
        let shear = vec![vec![int(1), int(1)], vec![int(0), int(1)]];
        let lower = affine_image(
            &Hyperrect::from_bounds(&[(int(-1), int(1)), (int(0), frac(1, 2))]),
            &shear,
            &[int(0), int(0)],
        )
        .unwrap();
        let upper = affine_image(
            &Hyperrect::from_bounds(&[(int(-2), int(1)), (frac(1, 2), int(1))]),
            &shear,
            &[int(0), int(0)],
        )
        .unwrap();
        assert!(box_covered_by(&sq, &[lower.clone(), upper]));
        assert!(!box_covered_by(&sq, &[lower]));
    }
}
