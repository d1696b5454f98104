//! Small dense exact simplex.
//!
//! Solves `maximize c·x  s.t.  A·x <= b, x >= 0` over exact rationals using
//! the dictionary form with Bland's rule, so it never cycles. An auxiliary
//! problem with one artificial variable finds a starting basis when some
//! `b[i]` is negative. Problems here have a handful of variables and a few
//! dozen rows; no attempt is made at sparsity.

use num_traits::{One, Signed, Zero};

use super::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { value: Scalar, point: Vec<Scalar> },
}

impl LpOutcome {
    pub fn optimum(&self) -> Option<&Scalar> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }
}

struct Dictionary {
    /// `basic[i] = rhs[i] - sum_j rows[i][j] * nonbasic[j]`
    rows: Vec<Vec<Scalar>>,
    rhs: Vec<Scalar>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    obj: Vec<Scalar>,
    obj_const: Scalar,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Dictionary {
    fn pivot(&mut self, leave: usize, enter: usize) {
        let p = self.rows[leave][enter].clone();
        let inv = Scalar::one() / &p;
        let mut pivot_row: Vec<Scalar> = self.rows[leave].iter().map(|a| a * &inv).collect();
        pivot_row[enter] = inv.clone();
        let pivot_rhs = &self.rhs[leave] * &inv;

        for i in 0..self.rows.len() {
            if i == leave {
                continue;
            }
            let factor = self.rows[i][enter].clone();
            if factor.is_zero() {
                continue;
            }
            for j in 0..pivot_row.len() {
                if j == enter {
                    self.rows[i][j] = -(&factor * &pivot_row[j]);
                } else if !pivot_row[j].is_zero() {
                    let delta = &factor * &pivot_row[j];
                    self.rows[i][j] -= delta;
                }
            }
            self.rhs[i] -= &factor * &pivot_rhs;
        }

        let ce = self.obj[enter].clone();
        if !ce.is_zero() {
            self.obj_const += &ce * &pivot_rhs;
            for j in 0..pivot_row.len() {
                if j == enter {
                    self.obj[j] = -(&ce * &pivot_row[j]);
                } else if !pivot_row[j].is_zero() {
                    let delta = &ce * &pivot_row[j];
                    self.obj[j] -= delta;
                }
            }
        }

        self.rows[leave] = pivot_row;
        self.rhs[leave] = pivot_rhs;
        std::mem::swap(&mut self.basic[leave], &mut self.nonbasic[enter]);
    }

    fn run(&mut self) -> Step {
        loop {
            let enter = (0..self.nonbasic.len())
                .filter(|&j| self.obj[j].is_positive())
                .min_by_key(|&j| self.nonbasic[j]);
            let Some(enter) = enter else {
                return Step::Optimal;
            };
            let mut leave: Option<(usize, Scalar)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                let better = match &leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < *best || (ratio == *best && self.basic[i] < self.basic[*l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                None => return Step::Unbounded,
                Some((l, _)) => self.pivot(l, enter),
            }
        }
    }

    fn value_of(&self, var: usize) -> Scalar {
        self.basic
            .iter()
            .position(|&b| b == var)
            .map(|i| self.rhs[i].clone())
            .unwrap_or_else(Scalar::zero)
    }
}

/// Maximizes `c·x` subject to `a·x <= b` and `x >= 0`.
pub fn maximize(a: &[Vec<Scalar>], b: &[Scalar], c: &[Scalar]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "row count mismatch");
    assert!(a.iter().all(|r| r.len() == n), "column count mismatch");

    let min_row = (0..m).min_by(|&i, &j| b[i].cmp(&b[j]));
    let needs_phase_one = min_row.map(|i| b[i].is_negative()).unwrap_or(false);

    let mut dict = if needs_phase_one {
        // Auxiliary variable id n + m, stored as the last nonbasic column.
        let aux = n + m;
        let rows: Vec<Vec<Scalar>> = a
            .iter()
            .map(|r| {
                let mut row = r.clone();
                row.push(-Scalar::one());
                row
            })
            .collect();
        let mut obj = vec![Scalar::zero(); n];
        obj.push(-Scalar::one());
        let mut d = Dictionary {
            rows,
            rhs: b.to_vec(),
            basic: (n..n + m).collect(),
            nonbasic: (0..n).chain(std::iter::once(aux)).collect(),
            obj,
            obj_const: Scalar::zero(),
        };
        d.pivot(min_row.unwrap(), n);
        d.run();
        if !d.obj_const.is_zero() {
            return LpOutcome::Infeasible;
        }
        if let Some(i) = d.basic.iter().position(|&v| v == aux) {
            // Degenerate: artificial variable sits in the basis at zero.
            let enter = (0..d.nonbasic.len())
                .find(|&j| !d.rows[i][j].is_zero())
                .expect("artificial row has a nonzero coefficient");
            d.pivot(i, enter);
        }
        let col = d.nonbasic.iter().position(|&v| v == aux).unwrap();
        for row in d.rows.iter_mut() {
            row.remove(col);
        }
        d.nonbasic.remove(col);

        // Re-express the true objective over the current nonbasic set.
        let mut obj = vec![Scalar::zero(); d.nonbasic.len()];
        let mut obj_const = Scalar::zero();
        for (var, coef) in c.iter().enumerate() {
            if coef.is_zero() {
                continue;
            }
            if let Some(j) = d.nonbasic.iter().position(|&v| v == var) {
                obj[j] += coef;
            } else if let Some(i) = d.basic.iter().position(|&v| v == var) {
                obj_const += coef * &d.rhs[i];
                for j in 0..d.nonbasic.len() {
                    obj[j] -= coef * &d.rows[i][j];
                }
            }
        }
        d.obj = obj;
        d.obj_const = obj_const;
        d
    } else {
        Dictionary {
            rows: a.to_vec(),
            rhs: b.to_vec(),
            basic: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            obj: c.to_vec(),
            obj_const: Scalar::zero(),
        }
    };

    match dict.run() {
        Step::Unbounded => LpOutcome::Unbounded,
        Step::Optimal => LpOutcome::Optimal {
            value: dict.obj_const.clone(),
            point: (0..n).map(|v| dict.value_of(v)).collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::{frac, int};

    fn q(rows: &[&[i64]]) -> Vec<Vec<Scalar>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| int(x)).collect())
            .collect()
    }

    fn v(xs: &[i64]) -> Vec<Scalar> {
        xs.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn textbook_problem() {
        // max 3x + y + 2z, classic CLRS instance with optimum 28.
        let a = q(&[&[1, 1, 3], &[2, 2, 5], &[4, 1, 2]]);
        let out = maximize(&a, &v(&[30, 24, 36]), &v(&[3, 1, 2]));
        assert_eq!(out.optimum(), Some(&int(28)));
    }

    #[test]
    fn phase_one_feasible() {
        // max 2x - y s.t. 2x - y <= 2, x - 5y <= -4 ; optimum 2 at (14/9, 10/9)
        let a = q(&[&[2, -1], &[1, -5]]);
        let out = maximize(&a, &v(&[2, -4]), &v(&[2, -1]));
        match out {
            LpOutcome::Optimal { value, point } => {
                assert_eq!(value, int(2));
                assert!(&point[0] * int(2) - &point[1] <= int(2));
                assert!(&point[0] - &point[1] * int(5) <= int(-4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x <= 1 and -x <= -2
        let a = q(&[&[1], &[-1]]);
        assert_eq!(maximize(&a, &v(&[1, -2]), &v(&[0])), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let a = q(&[&[-1, 1]]);
        assert_eq!(maximize(&a, &v(&[1]), &v(&[1, 0])), LpOutcome::Unbounded);
    }

    #[test]
    fn fractional_optimum() {
        // max x + y s.t. 3x + y <= 2, x + 3y <= 2 ; optimum 1 at (1/2, 1/2)
        let a = q(&[&[3, 1], &[1, 3]]);
        match maximize(&a, &v(&[2, 2]), &v(&[1, 1])) {
            LpOutcome::Optimal { value, point } => {
                assert_eq!(value, int(1));
                assert_eq!(point, vec![frac(1, 2), frac(1, 2)]);
            }
            other => panic!("{other:?}"),
        }
    }
}
