//! Piecewise-affine systems, reach-avoid problems, controllers and
//! ranking functions.

use std::fmt;

use num_traits::Zero;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::rational::{format_scalar, int};
use crate::geometry::{
    canonical_box, mat_vec, CellId, Coverage, GeometryError, Hyperrect, Matrix, Partition, Scalar,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("state lies outside the state space")]
    OutOfDomain,
    #[error("input index {index} out of range ({count} inputs)")]
    BadInput { index: usize, count: usize },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
}

/// `f(x, u) = A·x + B·u + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDynamics {
    a: Matrix,
    b: Matrix,
    c: Vec<Scalar>,
}

impl AffineDynamics {
    pub fn new(a: Matrix, b: Matrix, c: Vec<Scalar>) -> Result<Self, ModelError> {
        let n = a.len();
        if n == 0 || a.iter().any(|r| r.len() != n) {
            return Err(ModelError::InvalidSystem(
                "A must be square and nonempty".into(),
            ));
        }
        if b.len() != n || c.len() != n {
            return Err(ModelError::InvalidSystem(
                "B and c must have one row per state".into(),
            ));
        }
        let m = b[0].len();
        if b.iter().any(|r| r.len() != m) {
            return Err(ModelError::InvalidSystem("B rows differ in length".into()));
        }
        Ok(AffineDynamics { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &[Scalar] {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].len()
    }

    /// Constant part `B·u + c` for a fixed input.
    pub fn offset(&self, u: &[Scalar]) -> Vec<Scalar> {
        mat_vec(&self.b, u)
            .into_iter()
            .zip(&self.c)
            .map(|(bu, c)| bu + c)
            .collect()
    }

    pub fn apply(&self, x: &[Scalar], u: &[Scalar]) -> Vec<Scalar> {
        mat_vec(&self.a, x)
            .into_iter()
            .zip(self.offset(u))
            .map(|(ax, o)| ax + o)
            .collect()
    }

    /// Same map with `delta` added to the constant term.
    pub fn shifted(&self, delta: &[Scalar]) -> AffineDynamics {
        AffineDynamics {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.iter().zip(delta).map(|(c, d)| c + d).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub invariant: Hyperrect,
    pub dynamics: AffineDynamics,
}

/// `M = (X, U, L, I, F)` with a finite input set.
#[derive(Debug, Clone)]
pub struct PiecewiseAffineSystem {
    state_space: Hyperrect,
    input_box: Hyperrect,
    inputs: Vec<Vec<Scalar>>,
    locations: Vec<Location>,
    invariants: Partition,
}

impl PartialEq for PiecewiseAffineSystem {
    fn eq(&self, other: &Self) -> bool {
        self.state_space == other.state_space
            && self.input_box == other.input_box
            && self.inputs == other.inputs
            && self.locations == other.locations
    }
}

impl PiecewiseAffineSystem {
    pub fn new(
        state_space: Hyperrect,
        input_box: Hyperrect,
        inputs: Vec<Vec<Scalar>>,
        locations: Vec<Location>,
    ) -> Result<Self, ModelError> {
        let n = state_space.dim();
        if inputs.is_empty() {
            return Err(ModelError::InvalidSystem(
                "at least one input is required".into(),
            ));
        }
        if let Some(i) = inputs.iter().position(|u| !input_box.contains_point(u)) {
            return Err(ModelError::InvalidSystem(format!(
                "input {i} lies outside the input box"
            )));
        }
        for (l, loc) in locations.iter().enumerate() {
            if loc.dynamics.state_dim() != n || loc.invariant.dim() != n {
                return Err(ModelError::InvalidSystem(format!(
                    "location {l} has the wrong state dimension"
                )));
            }
            if loc.dynamics.input_dim() != input_box.dim() {
                return Err(ModelError::InvalidSystem(format!(
                    "location {l} has the wrong input dimension"
                )));
            }
        }
        let invariants = Partition::new(
            state_space.clone(),
            locations.iter().map(|l| l.invariant.clone()).collect(),
        )
        .map_err(|e| ModelError::InvalidSystem(format!("location invariants: {e}")))?;
        Ok(PiecewiseAffineSystem {
            state_space,
            input_box,
            inputs,
            locations,
            invariants,
        })
    }

    pub fn state_space(&self) -> &Hyperrect {
        &self.state_space
    }

    pub fn input_box(&self) -> &Hyperrect {
        &self.input_box
    }

    pub fn inputs(&self) -> &[Vec<Scalar>] {
        &self.inputs
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn dim(&self) -> usize {
        self.state_space.dim()
    }

    /// Location invariants as a partition of the state space.
    pub fn invariant_partition(&self) -> &Partition {
        &self.invariants
    }

    /// Lowest-indexed location whose closed invariant contains `x`.
    pub fn locate(&self, x: &[Scalar]) -> Result<usize, ModelError> {
        if !self.state_space.contains_point(x) {
            return Err(ModelError::OutOfDomain);
        }
        self.invariants.locate(x).ok_or(ModelError::OutOfDomain)
    }

    pub fn step(&self, x: &[Scalar], input: usize) -> Result<Vec<Scalar>, ModelError> {
        let u = self.inputs.get(input).ok_or(ModelError::BadInput {
            index: input,
            count: self.inputs.len(),
        })?;
        let l = self.locate(x)?;
        Ok(self.locations[l].dynamics.apply(x, u))
    }

    /// Per-location constant offsets `δ_l` added to every map.
    pub fn perturbed(&self, offsets: &[Vec<Scalar>]) -> PiecewiseAffineSystem {
        let mut out = self.clone();
        for (loc, delta) in out.locations.iter_mut().zip(offsets) {
            loc.dynamics = loc.dynamics.shifted(delta);
        }
        out
    }

    fn canonical(&self) -> String {
        let mut s = format!(
            "X={};U={};",
            canonical_box(&self.state_space),
            canonical_box(&self.input_box)
        );
        for u in &self.inputs {
            s.push_str(&format!("u={};", join(u)));
        }
        for loc in &self.locations {
            s.push_str(&format!("I={};", canonical_box(&loc.invariant)));
            for row in loc.dynamics.a() {
                s.push_str(&format!("A={};", join(row)));
            }
            for row in loc.dynamics.b() {
                s.push_str(&format!("B={};", join(row)));
            }
            s.push_str(&format!("c={};", join(loc.dynamics.c())));
        }
        s
    }
}

fn join(v: &[Scalar]) -> String {
    v.iter().map(format_scalar).collect::<Vec<_>>().join(",")
}

/// Lookup-table feedback: one input index per control cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Controller {
    pub table: Vec<usize>,
}

impl Controller {
    pub fn input_for(&self, control_cell: CellId) -> usize {
        self.table[control_cell]
    }
}

/// Piecewise-constant ranking function on the control partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingFunction {
    pub ranks: Vec<u64>,
    pub max_rank: u64,
}

/// A reach-avoid synthesis problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub system: PiecewiseAffineSystem,
    pub control: Partition,
    pub init: Vec<Hyperrect>,
    pub safe: Vec<Hyperrect>,
    pub goal: Vec<Hyperrect>,
    pub k: usize,
    pub max_rank: u64,
}

/// One failed problem invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
    pub cells: Vec<CellId>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)?;
        if !self.cells.is_empty() {
            write!(f, " (cells {:?})", self.cells)?;
        }
        Ok(())
    }
}

impl Problem {
    /// Builds a problem with `max_rank` defaulting to the number of control cells.
    pub fn new(
        system: PiecewiseAffineSystem,
        control: Partition,
        init: Vec<Hyperrect>,
        safe: Vec<Hyperrect>,
        goal: Vec<Hyperrect>,
        k: usize,
        max_rank: Option<u64>,
    ) -> Problem {
        let max_rank = max_rank.unwrap_or(control.len() as u64);
        Problem {
            system,
            control,
            init,
            safe,
            goal,
            k,
            max_rank,
        }
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    /// `true` for control cells inside Goal.
    pub fn control_goal(&self) -> Vec<bool> {
        (0..self.control.len())
            .map(|c| self.control.coverage_of(c, &self.goal) == Coverage::Inside)
            .collect()
    }

    pub fn in_goal(&self, x: &[Scalar]) -> bool {
        self.goal.iter().any(|b| b.contains_point(x))
    }

    pub fn in_safe(&self, x: &[Scalar]) -> bool {
        self.system.state_space().contains_point(x) && self.safe.iter().any(|b| b.contains_point(x))
    }

    pub fn in_init(&self, x: &[Scalar]) -> bool {
        self.init.iter().any(|b| b.contains_point(x))
    }

    /// Every violated problem invariant; empty iff the problem is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let space = self.system.state_space();
        if self.control.domain() != space {
            out.push(Violation {
                invariant: "control-domain",
                detail: "control partition does not cover the state space".into(),
                cells: vec![],
            });
        }
        if self.k == 0 {
            out.push(Violation {
                invariant: "k-positive",
                detail: "induction parameter k must be at least 1".into(),
                cells: vec![],
            });
        }
        for (name, set) in [
            ("init", &self.init),
            ("safe", &self.safe),
            ("goal", &self.goal),
        ] {
            if let Some(i) = set
                .iter()
                .position(|b| b.dim() != space.dim() || !space.contains(b))
            {
                out.push(Violation {
                    invariant: match name {
                        "init" => "init-in-space",
                        "safe" => "safe-in-space",
                        _ => "goal-in-space",
                    },
                    detail: format!("{name} box {i} leaves the state space"),
                    cells: vec![],
                });
            }
        }
        for (i, b) in self.init.iter().enumerate() {
            if b.coverage(&self.safe) != Coverage::Inside {
                out.push(Violation {
                    invariant: "init-subset-safe",
                    detail: format!("init box {i} is not inside Safe"),
                    cells: vec![],
                });
            }
        }
        for (i, b) in self.goal.iter().enumerate() {
            if b.coverage(&self.safe) != Coverage::Inside {
                out.push(Violation {
                    invariant: "goal-subset-safe",
                    detail: format!("goal box {i} is not inside Safe"),
                    cells: vec![],
                });
            }
        }
        for (name, set) in [
            ("init-aligned", &self.init),
            ("safe-aligned", &self.safe),
            ("goal-aligned", &self.goal),
        ] {
            let straddling: Vec<CellId> = (0..self.control.len())
                .filter(|&c| self.control.coverage_of(c, set) == Coverage::Straddles)
                .collect();
            if !straddling.is_empty() {
                out.push(Violation {
                    invariant: name,
                    detail: "control cells straddle the set boundary".into(),
                    cells: straddling,
                });
            }
        }
        let invariants: Vec<Hyperrect> = self
            .system
            .locations()
            .iter()
            .map(|l| l.invariant.clone())
            .collect();
        let straddling: Vec<CellId> = (0..self.control.len())
            .filter(|&c| {
                invariants.iter().any(|inv| {
                    self.control.cell(c).coverage(std::slice::from_ref(inv)) == Coverage::Straddles
                })
            })
            .collect();
        if !straddling.is_empty() {
            out.push(Violation {
                invariant: "location-aligned",
                detail: "control cells straddle a location invariant".into(),
                cells: straddling,
            });
        }
        let goal = self.control_goal();
        if self.max_rank == 0 && goal.iter().any(|g| !g) {
            out.push(Violation {
                invariant: "max-rank",
                detail: "max_rank 0 leaves no rank for non-goal cells".into(),
                cells: vec![],
            });
        }
        out
    }

    /// SHA-256 over a canonical text of every field.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.canonical());
        h.update(format!("C={};", self.control.hash()));
        for (tag, set) in [
            ("init", &self.init),
            ("safe", &self.safe),
            ("goal", &self.goal),
        ] {
            for b in set.iter() {
                h.update(format!("{tag}={};", canonical_box(b)));
            }
        }
        h.update(format!("k={};R={}", self.k, self.max_rank));
        hex::encode(h.finalize())
    }
}

/// Convenience for tests and generators: a one-location system.
pub fn single_location(
    state_space: Hyperrect,
    input_box: Hyperrect,
    inputs: Vec<Vec<Scalar>>,
    dynamics: AffineDynamics,
) -> Result<PiecewiseAffineSystem, ModelError> {
    let loc = Location {
        invariant: state_space.clone(),
        dynamics,
    };
    PiecewiseAffineSystem::new(state_space, input_box, inputs, vec![loc])
}

/// `x⁺ = x + u` in `n` dimensions.
pub fn translation_dynamics(n: usize) -> AffineDynamics {
    let eye: Matrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { int(1) } else { Scalar::zero() })
                .collect()
        })
        .collect();
    AffineDynamics::new(eye.clone(), eye, vec![Scalar::zero(); n]).expect("square")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::frac;

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    fn shift_system() -> PiecewiseAffineSystem {
        single_location(
            seg(int(0), int(1)),
            seg(int(0), int(1)),
            vec![vec![frac(1, 4)], vec![int(0)]],
            translation_dynamics(1),
        )
        .unwrap()
    }

    #[test]
    fn step_substitutes() {
        let sys = shift_system();
        assert_eq!(sys.step(&[frac(1, 10)], 0).unwrap(), vec![frac(7, 20)]);
        assert_eq!(sys.step(&[int(2)], 0), Err(ModelError::OutOfDomain));
        assert!(matches!(
            sys.step(&[int(0)], 5),
            Err(ModelError::BadInput { .. })
        ));
    }

    fn two_location() -> PiecewiseAffineSystem {
        let one =
            AffineDynamics::new(vec![vec![int(1)]], vec![vec![int(0)]], vec![int(1)]).unwrap();
        let two =
            AffineDynamics::new(vec![vec![int(1)]], vec![vec![int(0)]], vec![int(2)]).unwrap();
        PiecewiseAffineSystem::new(
            seg(int(0), int(2)),
            seg(int(0), int(0)),
            vec![vec![int(0)]],
            vec![
                Location {
                    invariant: seg(int(0), int(1)),
                    dynamics: one,
                },
                Location {
                    invariant: seg(int(1), int(2)),
                    dynamics: two,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn boundary_goes_to_lowest_location() {
        let sys = two_location();
        assert_eq!(sys.locate(&[frac(1, 2)]).unwrap(), 0);
        assert_eq!(sys.locate(&[int(1)]).unwrap(), 0);
        assert_eq!(sys.locate(&[frac(3, 2)]).unwrap(), 1);
        assert_eq!(sys.step(&[int(1)], 0).unwrap(), vec![int(2)]);
    }

    #[test]
    fn shared_vertex_picks_lowest_of_four() {
        let dyn2 = translation_dynamics(2);
        let q = |a, b, c, d| Hyperrect::from_bounds(&[(int(a), int(b)), (int(c), int(d))]);
        let locs = vec![
            Location {
                invariant: q(1, 2, 1, 2),
                dynamics: dyn2.clone(),
            },
            Location {
                invariant: q(0, 1, 1, 2),
                dynamics: dyn2.clone(),
            },
            Location {
                invariant: q(1, 2, 0, 1),
                dynamics: dyn2.clone(),
            },
            Location {
                invariant: q(0, 1, 0, 1),
                dynamics: dyn2.clone(),
            },
        ];
        let sys = PiecewiseAffineSystem::new(
            q(0, 2, 0, 2),
            q(0, 0, 0, 0),
            vec![vec![int(0), int(0)]],
            locs,
        )
        .unwrap();
        // All four invariants contain (1,1); index 0 is the lowest.
        assert_eq!(sys.locate(&[int(1), int(1)]).unwrap(), 0);
        assert_eq!(sys.locate(&[frac(1, 2), int(1)]).unwrap(), 1);
    }

    #[test]
    fn rejects_overlapping_locations() {
        let d = translation_dynamics(1);
        let res = PiecewiseAffineSystem::new(
            seg(int(0), int(2)),
            seg(int(0), int(0)),
            vec![vec![int(0)]],
            vec![
                Location {
                    invariant: seg(int(0), frac(3, 2)),
                    dynamics: d.clone(),
                },
                Location {
                    invariant: seg(int(1), int(2)),
                    dynamics: d,
                },
            ],
        );
        assert!(res.is_err());
    }

    fn gridless_problem(goal: Hyperrect, init: Hyperrect) -> Problem {
        let sys = shift_system();
        let control = Partition::uniform(sys.state_space(), &[4]).unwrap();
        Problem::new(
            sys,
            control,
            vec![init],
            vec![seg(int(0), int(1))],
            vec![goal],
            1,
            None,
        )
    }

    #[test]
    fn validate_examples() {
        let ok = gridless_problem(seg(frac(3, 4), int(1)), seg(int(0), frac(1, 4)));
        assert!(ok.validate().is_empty());
        assert_eq!(ok.max_rank, 4);

        let straddle = gridless_problem(seg(frac(7, 10), int(1)), seg(int(0), frac(1, 4)));
        let v = straddle.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, "goal-aligned");
        assert_eq!(v[0].cells, vec![2]);

        let mut outside = gridless_problem(seg(frac(3, 4), int(1)), seg(int(0), frac(1, 4)));
        outside.safe = vec![seg(frac(1, 4), int(1))];
        let v = outside.validate();
        assert!(v.iter().any(|x| x.invariant == "init-subset-safe"));
    }

    #[test]
    fn perturbation_shifts_constant() {
        let sys = shift_system().perturbed(&[vec![frac(1, 8)]]);
        assert_eq!(sys.step(&[int(0)], 1).unwrap(), vec![frac(1, 8)]);
    }
}
