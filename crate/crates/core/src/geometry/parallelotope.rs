use num_traits::{One, Signed, Zero};

use super::lp::{maximize, LpOutcome};
use super::{GeometryError, Hyperrect, Scalar};

pub type Matrix = Vec<Vec<Scalar>>;

/// `{ center + G·α : α ∈ [-1,1]^n }` with `G` square; the exact image of a
/// box under an affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct Parallelotope {
    center: Vec<Scalar>,
    /// Row-major; column `j` is the `j`-th generator.
    generators: Matrix,
    inverse: Option<Matrix>,
}

/// Relationship between a parallelotope and a closed box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contact {
    Disjoint,
    /// Closed sets meet, but no point of the parallelotope lies in the box interior.
    Touching,
    /// Some point of the parallelotope lies in the open box.
    Overlapping,
}

pub fn mat_vec(m: &Matrix, x: &[Scalar]) -> Vec<Scalar> {
    m.iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .fold(Scalar::zero(), |acc, (a, b)| acc + a * b)
        })
        .collect()
}

/// Gauss-Jordan inverse; `None` when singular.
pub fn invert(m: &Matrix) -> Option<Matrix> {
    let n = m.len();
    let mut a: Matrix = m.clone();
    let mut inv: Matrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Scalar::one()
                    } else {
                        Scalar::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let da = &f * &a[col][j];
                a[r][j] -= da;
                let di = &f * &inv[col][j];
                inv[r][j] -= di;
            }
        }
    }
    Some(inv)
}

fn check_square(m: &Matrix, n: usize) -> Result<(), GeometryError> {
    if m.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: m.len(),
        });
    }
    if let Some(row) = m.iter().find(|r| r.len() != n) {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: row.len(),
        });
    }
    Ok(())
}

/// `{ A·x + offset : x ∈ b }`.
pub fn affine_image(
    b: &Hyperrect,
    a: &Matrix,
    offset: &[Scalar],
) -> Result<Parallelotope, GeometryError> {
    let n = b.dim();
    check_square(a, n)?;
    if offset.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: offset.len(),
        });
    }
    let half = b.half_widths();
    let mut center = mat_vec(a, &b.center());
    for (c, o) in center.iter_mut().zip(offset) {
        *c += o;
    }
    let generators: Matrix = a
        .iter()
        .map(|row| row.iter().zip(&half).map(|(x, h)| x * h).collect())
        .collect();
    Ok(Parallelotope::new(center, generators))
}

impl Parallelotope {
    pub fn new(center: Vec<Scalar>, generators: Matrix) -> Self {
        let inverse = invert(&generators);
        Parallelotope {
            center,
            generators,
            inverse,
        }
    }

    pub fn from_box(b: &Hyperrect) -> Self {
        let half = b.half_widths();
        let n = b.dim();
        let generators = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            half[i].clone()
                        } else {
                            Scalar::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Parallelotope::new(b.center(), generators)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[Scalar] {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn is_degenerate(&self) -> bool {
        self.inverse.is_none()
    }

    /// Absolute determinant of the generator matrix scaled to volume.
    pub fn volume(&self) -> Scalar {
        let n = self.dim();
        let det = determinant(&self.generators);
        det.abs() * num_traits::pow(Scalar::from_integer(2.into()), n)
    }

    /// Vertex `center + G·s` for a sign vector.
    pub fn vertex(&self, signs: &[bool]) -> Vec<Scalar> {
        let s: Vec<Scalar> = signs
            .iter()
            .map(|&p| if p { Scalar::one() } else { -Scalar::one() })
            .collect();
        let mut v = mat_vec(&self.generators, &s);
        for (x, c) in v.iter_mut().zip(&self.center) {
            *x += c;
        }
        v
    }

    pub fn bounding_box(&self) -> Hyperrect {
        let radius: Vec<Scalar> = self
            .generators
            .iter()
            .map(|row| row.iter().fold(Scalar::zero(), |acc, g| acc + g.abs()))
            .collect();
        let lo = self
            .center
            .iter()
            .zip(&radius)
            .map(|(c, r)| c - r)
            .collect();
        let hi = self
            .center
            .iter()
            .zip(&radius)
            .map(|(c, r)| c + r)
            .collect();
        Hyperrect::new(lo, hi).expect("radius is non-negative")
    }

    /// Same shape shifted by `delta`.
    pub fn translated(&self, delta: &[Scalar]) -> Parallelotope {
        Parallelotope {
            center: self.center.iter().zip(delta).map(|(c, d)| c + d).collect(),
            generators: self.generators.clone(),
            inverse: self.inverse.clone(),
        }
    }

    pub fn contains_point(&self, x: &[Scalar]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.inverse {
            Some(inv) => {
                let d: Vec<Scalar> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
                mat_vec(inv, &d).iter().all(|a| a.abs() <= Scalar::one())
            }
            None => self.contact(&Hyperrect::point(x.to_vec())) != Contact::Disjoint,
        }
    }

    /// Closed containment `b ⊆ self`, decided on the vertices of `b`.
    pub fn contains_box(&self, b: &Hyperrect) -> bool {
        if b.dim() != self.dim() || !self.bounding_box().contains(b) {
            return false;
        }
        if self.is_degenerate() && b.is_full_dimensional() {
            return false;
        }
        b.vertices().iter().all(|v| self.contains_point(v))
    }

    pub fn intersects(&self, b: &Hyperrect) -> bool {
        self.contact(b) != Contact::Disjoint
    }

    pub fn overlaps_interior(&self, b: &Hyperrect) -> bool {
        self.contact(b) == Contact::Overlapping
    }

    /// Exact contact classification.
    ///
    /// Generators with a single nonzero row are eliminated in closed form
    /// (they widen that row's bounds); at most one remaining generator is
    /// handled by interval intersection, more go to the simplex.
    pub fn contact(&self, b: &Hyperrect) -> Contact {
        let n = self.dim();
        if b.dim() != n {
            return Contact::Disjoint;
        }
        if !self.bounding_box().intersects(b) {
            return Contact::Disjoint;
        }
        let mut slack = vec![Scalar::zero(); n];
        let mut free: Vec<usize> = Vec::new();
        for j in 0..n {
            let nonzero: Vec<usize> = (0..n)
                .filter(|&i| !self.generators[i][j].is_zero())
                .collect();
            match nonzero.as_slice() {
                [] => {}
                [i] => slack[*i] += self.generators[*i][j].abs(),
                _ => free.push(j),
            }
        }
        let lower: Vec<Scalar> = (0..n).map(|i| &b.lo()[i] - &slack[i]).collect();
        let upper: Vec<Scalar> = (0..n).map(|i| &b.hi()[i] + &slack[i]).collect();

        match free.len() {
            0 => {
                let c = &self.center;
                if (0..n).any(|i| c[i] < lower[i] || c[i] > upper[i]) {
                    Contact::Disjoint
                } else if (0..n).all(|i| c[i] > lower[i] && c[i] < upper[i]) {
                    Contact::Overlapping
                } else {
                    Contact::Touching
                }
            }
            1 => self.contact_one_free(free[0], &lower, &upper),
            _ => self.contact_lp(&free, &lower, &upper),
        }
    }

    fn contact_one_free(&self, j: usize, lower: &[Scalar], upper: &[Scalar]) -> Contact {
        // Bounds on α as (value, strict) for the open test; closed test ignores strictness.
        let mut lo = (-Scalar::one(), false);
        let mut hi = (Scalar::one(), false);
        let mut closed_ok = true;
        let mut open_ok = true;
        for i in 0..self.dim() {
            let g = &self.generators[i][j];
            let c = &self.center[i];
            if g.is_zero() {
                if *c < lower[i] || *c > upper[i] {
                    closed_ok = false;
                }
                if !(*c > lower[i] && *c < upper[i]) {
                    open_ok = false;
                }
                continue;
            }
            let (a, b) = if g.is_positive() {
                ((&lower[i] - c) / g, (&upper[i] - c) / g)
            } else {
                ((&upper[i] - c) / g, (&lower[i] - c) / g)
            };
            if a > lo.0 || (a == lo.0 && !lo.1) {
                lo = (a, true);
            }
            if b < hi.0 || (b == hi.0 && !hi.1) {
                hi = (b, true);
            }
        }
        if !closed_ok || lo.0 > hi.0 {
            return Contact::Disjoint;
        }
        if open_ok && (lo.0 < hi.0 || (!lo.1 && !hi.1)) {
            Contact::Overlapping
        } else {
            Contact::Touching
        }
    }

    fn contact_lp(&self, free: &[usize], lower: &[Scalar], upper: &[Scalar]) -> Contact {
        let n = self.dim();
        let f = free.len();
        // Variables: β_k = α_{free[k]} + 1 ∈ [0, 2] and slack t ∈ [0, 1].
        let mut a: Vec<Vec<Scalar>> = Vec::new();
        let mut rhs: Vec<Scalar> = Vec::new();
        for i in 0..n {
            let coefs: Vec<Scalar> = free
                .iter()
                .map(|&j| self.generators[i][j].clone())
                .collect();
            let shift = coefs.iter().fold(Scalar::zero(), |acc, g| acc + g);
            let mut up = coefs.clone();
            up.push(Scalar::one());
            a.push(up);
            rhs.push(&upper[i] - &self.center[i] + &shift);
            let mut down: Vec<Scalar> = coefs.iter().map(|g| -g).collect();
            down.push(Scalar::one());
            a.push(down);
            rhs.push(&self.center[i] - &lower[i] - &shift);
        }
        for k in 0..=f {
            let mut row = vec![Scalar::zero(); f + 1];
            row[k] = Scalar::one();
            a.push(row);
            rhs.push(if k < f {
                Scalar::from_integer(2.into())
            } else {
                Scalar::one()
            });
        }
        let mut objective = vec![Scalar::zero(); f + 1];
        objective[f] = Scalar::one();
        match maximize(&a, &rhs, &objective) {
            LpOutcome::Infeasible => Contact::Disjoint,
            LpOutcome::Unbounded => unreachable!("slack is bounded"),
            LpOutcome::Optimal { value, .. } => {
                if value.is_positive() {
                    Contact::Overlapping
                } else {
                    Contact::Touching
                }
            }
        }
    }

    /// Half-space form `{x : A x <= b}` when full-dimensional.
    pub fn halfspaces(&self) -> Option<(Matrix, Vec<Scalar>)> {
        let inv = self.inverse.as_ref()?;
        let shift = mat_vec(inv, &self.center);
        let mut a = Vec::with_capacity(2 * self.dim());
        let mut b = Vec::with_capacity(2 * self.dim());
        for (row, s) in inv.iter().zip(&shift) {
            a.push(row.clone());
            b.push(Scalar::one() + s);
            a.push(row.iter().map(|x| -x).collect());
            b.push(Scalar::one() - s);
        }
        Some((a, b))
    }
}

fn determinant(m: &Matrix) -> Scalar {
    let n = m.len();
    let mut a = m.clone();
    let mut det = Scalar::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Scalar::zero();
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= &p;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &p;
            for j in col..n {
                let d = &f * &a[col][j];
                a[r][j] -= d;
            }
        }
    }
    det
}
