//! Certificate checking against the exact rules, closed-loop simulation,
//! and perturbation probing.
//!
//! The checker works from exact images of cells and does not share code
//! with the successor tables or the encoder.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::Variant;
use crate::geometry::rational::format_scalar;
use crate::geometry::{
    affine_image, CellId, Contact, Coverage, Hyperrect, Parallelotope, Partition, Scalar,
};
use crate::model::{Controller, PiecewiseAffineSystem, Problem, RankingFunction};

/// Controller, ranking function and invariant cell set for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub controller: Controller,
    pub ranking: RankingFunction,
    pub invariant_cells: Vec<CellId>,
    pub variant: Variant,
    pub k: usize,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: String,
    pub cells: Vec<CellId>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleReport {
    pub violations: Vec<RuleViolation>,
}

impl RuleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> BTreeSet<&str> {
        self.violations.iter().map(|v| v.rule.as_str()).collect()
    }

    fn push(&mut self, rule: &str, cells: Vec<CellId>, detail: String) {
        self.violations.push(RuleViolation {
            rule: rule.to_string(),
            cells,
            detail,
        });
    }
}

/// Cells whose interior meets the image of `cell` under its controlled
/// input (closed contact for flat images), and whether the image leaves
/// the state space.
fn step_cells(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cell: &Hyperrect,
    input: usize,
) -> (BTreeSet<CellId>, bool) {
    let u = &sys.inputs()[input];
    let mut hits = BTreeSet::new();
    let mut escapes = false;
    for (l, loc) in sys.locations().iter().enumerate() {
        let Some(sub) = cell.intersection(&loc.invariant) else {
            continue;
        };
        if !sub.is_full_dimensional() && cell.is_full_dimensional() {
            continue;
        }
        let image: Parallelotope = affine_image(&sub, loc.dynamics.a(), &loc.dynamics.offset(u))
            .unwrap_or_else(|e| panic!("location {l}: {e}"));
        let bbox = image.bounding_box();
        if !sys.state_space().contains(&bbox) {
            escapes = true;
        }
        let flat = image.is_degenerate();
        for q in partition.cells_intersecting(&bbox) {
            let contact = image.contact(partition.cell(q));
            if contact == Contact::Overlapping || (flat && contact == Contact::Touching) {
                hits.insert(q);
            }
        }
    }
    (hits, escapes)
}

struct Roles {
    init: Vec<bool>,
    safe: Vec<bool>,
    goal: Vec<bool>,
    control: Vec<CellId>,
}

fn roles(problem: &Problem, partition: &Partition) -> Result<Roles, CellId> {
    let mut r = Roles {
        init: Vec::new(),
        safe: Vec::new(),
        goal: Vec::new(),
        control: Vec::new(),
    };
    for (p, cell) in partition.cells().iter().enumerate() {
        r.init
            .push(cell.coverage(&problem.init) != Coverage::Outside);
        r.safe
            .push(cell.coverage(&problem.safe) == Coverage::Inside);
        r.goal
            .push(cell.coverage(&problem.goal) == Coverage::Inside);
        r.control
            .push(problem.control.containing_cell(cell).ok_or(p)?);
    }
    Ok(r)
}

/// Checks R1–R6 for `cert` on `problem`.
///
/// For k > 1 the k-step image is over-approximated by the cells met at
/// every intermediate step, which only makes R6 harder to satisfy.
pub fn check_exact_rules(problem: &Problem, cert: &Certificate) -> RuleReport {
    let mut report = RuleReport::default();
    let partition = &cert.partition;
    let sys = &problem.system;
    let n_control = problem.n_control();
    if partition.domain() != sys.state_space() {
        report.push(
            "structure",
            vec![],
            "partition domain differs from X".into(),
        );
    }
    if cert.controller.table.len() != n_control || cert.ranking.ranks.len() != n_control {
        report.push(
            "structure",
            vec![],
            format!("controller or ranking is not total on {n_control} control cells"),
        );
    }
    if let Some(c) = cert
        .controller
        .table
        .iter()
        .position(|&i| i >= sys.n_inputs())
    {
        report.push("structure", vec![c], "input index out of range".into());
    }
    if let Some(&p) = cert.invariant_cells.iter().find(|&&p| p >= partition.len()) {
        report.push("structure", vec![p], "unknown invariant cell".into());
    }
    let roles = match roles(problem, partition) {
        Ok(r) => r,
        Err(p) => {
            report.push("structure", vec![p], "cell straddles control cells".into());
            return report;
        }
    };
    if !report.passed() {
        return report;
    }

    let inv: BTreeSet<CellId> = cert.invariant_cells.iter().copied().collect();
    let rank = |p: CellId| cert.ranking.ranks[roles.control[p]];

    let missing: Vec<CellId> = (0..partition.len())
        .filter(|&p| roles.init[p] && !inv.contains(&p))
        .collect();
    if !missing.is_empty() {
        report.push("R1", missing, "init cells outside Inv".into());
    }

    let unsafe_cells: Vec<CellId> = inv.iter().copied().filter(|&p| !roles.safe[p]).collect();
    if !unsafe_cells.is_empty() {
        report.push("R3", unsafe_cells, "Inv cells outside Safe".into());
    }

    let control_goal = problem.control_goal();
    for c in 0..n_control {
        let r = cert.ranking.ranks[c];
        if control_goal[c] != (r == 0) {
            report.push(
                "R4",
                vec![c],
                format!("control cell {c} has rank {r}, goal = {}", control_goal[c]),
            );
        } else if r > cert.ranking.max_rank {
            report.push("R4", vec![c], format!("rank {r} exceeds max_rank"));
        }
    }

    let input_of = |p: CellId| cert.controller.table[roles.control[p]];
    let mut succ: BTreeMap<CellId, (BTreeSet<CellId>, bool)> = inv
        .par_iter()
        .map(|&p| {
            (
                p,
                step_cells(sys, partition, partition.cell(p), input_of(p)),
            )
        })
        .collect();

    for &p in &inv {
        let (hits, escapes) = &succ[&p];
        if *escapes {
            report.push("R2", vec![p], "image leaves the state space".into());
        }
        let outside: Vec<CellId> = hits.iter().copied().filter(|q| !inv.contains(q)).collect();
        if !outside.is_empty() {
            report.push(
                "R2",
                vec![p],
                format!("image of {p} meets non-Inv cells {outside:?}"),
            );
        }
        if roles.goal[p] {
            continue;
        }
        let bad: Vec<CellId> = hits
            .iter()
            .copied()
            .filter(|&q| rank(q) > rank(p))
            .collect();
        if !bad.is_empty() {
            report.push("R5", vec![p], format!("rank increases from {p} to {bad:?}"));
        }
    }

    for &p in &inv {
        if roles.goal[p] {
            continue;
        }
        let mut frontier = BTreeSet::from([p]);
        for _ in 0..cert.k {
            let mut next = BTreeSet::new();
            for &q in &frontier {
                if roles.goal[q] {
                    next.insert(q);
                    continue;
                }
                let entry = succ
                    .entry(q)
                    .or_insert_with(|| step_cells(sys, partition, partition.cell(q), input_of(q)));
                next.extend(entry.0.iter().copied());
            }
            frontier = next;
        }
        let bad: Vec<CellId> = frontier
            .iter()
            .copied()
            .filter(|&q| rank(q) >= rank(p))
            .collect();
        if !bad.is_empty() {
            report.push(
                "R6",
                vec![p],
                format!(
                    "no rank decrease from {p} within {} steps to {bad:?}",
                    cert.k
                ),
            );
        }
    }
    report
}

/// Least set of cells containing the init cells and closed under the
/// controlled exact images; stops growing at cells outside Safe.
pub fn reach_closure(
    problem: &Problem,
    partition: &Partition,
    controller: &Controller,
) -> Vec<CellId> {
    let Ok(roles) = roles(problem, partition) else {
        return Vec::new();
    };
    let mut seen: BTreeSet<CellId> = (0..partition.len()).filter(|&p| roles.init[p]).collect();
    let mut todo: Vec<CellId> = seen.iter().copied().collect();
    while let Some(p) = todo.pop() {
        if !roles.safe[p] {
            continue;
        }
        let input = controller.table[roles.control[p]];
        let (hits, _) = step_cells(&problem.system, partition, partition.cell(p), input);
        for q in hits {
            if seen.insert(q) {
                todo.push(q);
            }
        }
    }
    seen.into_iter().collect()
}

/// Default simulation horizon `k · max_rank · |C|`.
pub fn default_horizon(problem: &Problem, cert: &Certificate) -> usize {
    (cert.k as u64 * cert.ranking.max_rank.max(1) * problem.n_control() as u64) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub states: Vec<Vec<Scalar>>,
    pub safe_ok: bool,
    pub progress_ok: bool,
    pub goal_step: Option<usize>,
    pub violation_step: Option<usize>,
}

fn run(
    problem: &Problem,
    controller: &Controller,
    x0: &[Scalar],
    horizon: usize,
    record: bool,
) -> Trace {
    let mut x = x0.to_vec();
    let mut trace = Trace {
        states: Vec::new(),
        safe_ok: true,
        progress_ok: false,
        goal_step: None,
        violation_step: None,
    };
    for t in 0..=horizon {
        if record {
            trace.states.push(x.clone());
        }
        if !problem.in_safe(&x) {
            trace.safe_ok = false;
            trace.violation_step = Some(t);
            break;
        }
        if trace.goal_step.is_none() && problem.in_goal(&x) {
            trace.goal_step = Some(t);
            trace.progress_ok = true;
        }
        if t == horizon {
            break;
        }
        let Some(c) = problem.control.locate(&x) else {
            trace.safe_ok = false;
            trace.violation_step = Some(t);
            break;
        };
        match problem.system.step(&x, controller.input_for(c)) {
            // A fixed point repeats forever; the remaining steps add nothing.
            Ok(next) if next == x && !record => break,
            Ok(next) => x = next,
            Err(_) => {
                trace.safe_ok = false;
                trace.violation_step = Some(t);
                break;
            }
        }
    }
    trace
}

/// Iterates the closed loop from `x0` for `horizon` steps, recording states.
pub fn simulate(
    problem: &Problem,
    controller: &Controller,
    x0: &[Scalar],
    horizon: usize,
) -> Trace {
    run(problem, controller, x0, horizon, true)
}

/// Odd prime just below 2^20: sampled coordinates never land on dyadic faces.
const SAMPLE_DENOMINATOR: i64 = 1_048_573;

/// Uniform rational point strictly inside `b`.
pub fn sample_interior(b: &Hyperrect, rng: &mut impl Rng) -> Vec<Scalar> {
    (0..b.dim())
        .map(|i| {
            let r = rng.gen_range(1..SAMPLE_DENOMINATOR);
            let t = Scalar::new(BigInt::from(r), BigInt::from(SAMPLE_DENOMINATOR));
            &b.lo()[i] + b.width(i) * t
        })
        .collect()
}

fn sample_init(problem: &Problem, rng: &mut impl Rng) -> Vec<Scalar> {
    let boxes: Vec<&Hyperrect> = problem
        .init
        .iter()
        .filter(|b| b.is_full_dimensional())
        .collect();
    let weights: Vec<f64> = boxes
        .iter()
        .map(|b| crate::geometry::rational::to_f64(&b.volume()))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut chosen = boxes[boxes.len() - 1];
    for (b, w) in boxes.iter().zip(&weights) {
        if pick < *w {
            chosen = b;
            break;
        }
        pick -= w;
    }
    sample_interior(chosen, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub safe: usize,
    pub reached_goal: usize,
    pub max_goal_step: Option<usize>,
    pub first_failure: Option<SimulationFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationFailure {
    pub run: usize,
    pub x0: Vec<String>,
    pub kind: String,
    pub step: Option<usize>,
}

impl SimulationReport {
    pub fn all_ok(&self) -> bool {
        self.safe == self.runs && self.reached_goal == self.runs
    }
}

/// `runs` simulations from seeded interior points of Init.
pub fn simulate_many(
    problem: &Problem,
    controller: &Controller,
    runs: usize,
    seed: u64,
    horizon: usize,
) -> SimulationReport {
    let starts: Vec<Vec<Scalar>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..runs).map(|_| sample_init(problem, &mut rng)).collect()
    };
    let traces: Vec<Trace> = starts
        .par_iter()
        .map(|x0| run(problem, controller, x0, horizon, false))
        .collect();
    let mut report = SimulationReport {
        runs,
        horizon,
        seed,
        safe: 0,
        reached_goal: 0,
        max_goal_step: None,
        first_failure: None,
    };
    for (i, (trace, x0)) in traces.iter().zip(&starts).enumerate() {
        report.safe += trace.safe_ok as usize;
        report.reached_goal += trace.progress_ok as usize;
        report.max_goal_step = report.max_goal_step.max(trace.goal_step);
        if report.first_failure.is_none() && !(trace.safe_ok && trace.progress_ok) {
            report.first_failure = Some(SimulationFailure {
                run: i,
                x0: x0.iter().map(format_scalar).collect(),
                kind: if trace.safe_ok { "progress" } else { "safety" }.into(),
                step: trace.violation_step,
            });
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub epsilon: Scalar,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub epsilon: String,
    pub samples: usize,
    pub passed: usize,
    pub first_failure: Option<PerturbationFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationFailure {
    pub sample: usize,
    pub offsets: Vec<Vec<String>>,
    pub rules: Vec<String>,
}

impl RobustnessReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.passed as f64 / self.samples as f64
        }
    }
}

/// Per-location offsets: the `2n` axis extremes shared by every location,
/// then `spec.samples` random offsets of ∞-norm exactly `ε` per location.
pub fn perturbation_offsets(problem: &Problem, spec: &PerturbationSpec) -> Vec<Vec<Vec<Scalar>>> {
    let n = problem.system.dim();
    let n_loc = problem.system.locations().len();
    let eps = &spec.epsilon;
    let mut out = Vec::new();
    for axis in 0..n {
        for sign in [1, -1] {
            let mut d = vec![Scalar::zero(); n];
            d[axis] = eps * Scalar::from_integer(sign.into());
            out.push(vec![d; n_loc]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.samples {
        let offsets = (0..n_loc)
            .map(|_| {
                let mut d: Vec<Scalar> = (0..n)
                    .map(|_| {
                        let r = rng.gen_range(-SAMPLE_DENOMINATOR..=SAMPLE_DENOMINATOR);
                        eps * Scalar::new(BigInt::from(r), BigInt::from(SAMPLE_DENOMINATOR))
                    })
                    .collect();
                let pinned = rng.gen_range(0..n);
                d[pinned] = if rng.gen::<bool>() {
                    eps.clone()
                } else {
                    -eps.clone()
                };
                d
            })
            .collect();
        out.push(offsets);
    }
    out
}

/// Re-checks the same controller and ranks on perturbed systems, with Inv
/// recomputed as the reach closure of each.
pub fn probe_robustness(
    problem: &Problem,
    cert: &Certificate,
    spec: &PerturbationSpec,
) -> RobustnessReport {
    let offsets = perturbation_offsets(problem, spec);
    let results: Vec<RuleReport> = offsets
        .par_iter()
        .map(|delta| {
            let mut perturbed = problem.clone();
            perturbed.system = problem.system.perturbed(delta);
            let mut c = cert.clone();
            c.invariant_cells = reach_closure(&perturbed, &cert.partition, &cert.controller);
            check_exact_rules(&perturbed, &c)
        })
        .collect();
    let mut report = RobustnessReport {
        epsilon: format_scalar(&spec.epsilon),
        samples: offsets.len(),
        passed: 0,
        first_failure: None,
    };
    for (i, (r, delta)) in results.iter().zip(&offsets).enumerate() {
        if r.passed() {
            report.passed += 1;
        } else if report.first_failure.is_none() {
            report.first_failure = Some(PerturbationFailure {
                sample: i,
                offsets: delta
                    .iter()
                    .map(|d| d.iter().map(format_scalar).collect())
                    .collect(),
                rules: r.rules().into_iter().map(String::from).collect(),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::{frac, int};
    use crate::model::{single_location, translation_dynamics};

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    /// Four unit cells on [0,4], goal the last, inputs +1 and -1.
    fn conveyor() -> Problem {
        let sys = single_location(
            seg(int(0), int(4)),
            seg(int(-1), int(1)),
            vec![vec![int(1)], vec![int(-1)]],
            translation_dynamics(1),
        )
        .unwrap();
        Problem::new(
            sys,
            Partition::uniform(&seg(int(0), int(4)), &[4]).unwrap(),
            vec![seg(int(0), int(1))],
            vec![seg(int(0), int(4))],
            vec![seg(int(3), int(4))],
            1,
            None,
        )
    }

    fn good_cert(problem: &Problem) -> Certificate {
        Certificate {
            controller: Controller {
                table: vec![0, 0, 0, 1],
            },
            ranking: RankingFunction {
                ranks: vec![3, 2, 1, 0],
                max_rank: 4,
            },
            invariant_cells: vec![0, 1, 2, 3],
            variant: Variant::Exact,
            k: 1,
            partition: problem.control.clone(),
        }
    }

    #[test]
    fn hand_certificate_passes() {
        let problem = conveyor();
        assert!(check_exact_rules(&problem, &good_cert(&problem)).passed());
    }

    #[test]
    fn corrupted_rank_flags_r4() {
        let problem = conveyor();
        let mut cert = good_cert(&problem);
        cert.ranking.ranks[1] = 0;
        let report = check_exact_rules(&problem, &cert);
        assert!(report.rules().contains("R4"));
    }

    #[test]
    fn removed_cell_flags_r2() {
        let problem = conveyor();
        let mut cert = good_cert(&problem);
        cert.invariant_cells = vec![0, 2, 3];
        let report = check_exact_rules(&problem, &cert);
        assert_eq!(report.violations[0].rule, "R2");
        assert_eq!(report.violations[0].cells, vec![0]);
    }

    #[test]
    fn flat_ranks_flag_r6() {
        let problem = conveyor();
        let mut cert = good_cert(&problem);
        cert.ranking.ranks = vec![2, 2, 1, 0];
        assert_eq!(
            check_exact_rules(&problem, &cert).rules(),
            BTreeSet::from(["R6"])
        );
        cert.k = 2;
        assert!(check_exact_rules(&problem, &cert).passed());
    }

    #[test]
    fn conveyor_reaches_goal_in_three_steps() {
        let problem = conveyor();
        let cert = good_cert(&problem);
        let trace = simulate(&problem, &cert.controller, &[frac(1, 2)], 16);
        assert_eq!(trace.goal_step, Some(3));
        assert!(trace.safe_ok && trace.progress_ok);
        assert_eq!(trace.states[3], vec![frac(7, 2)]);
    }

    #[test]
    fn reversed_controller_fails() {
        let problem = conveyor();
        let reversed = Controller {
            table: vec![1, 1, 1, 1],
        };
        let report = simulate_many(&problem, &reversed, 20, 7, 16);
        assert_eq!(report.safe, 0);
        assert_eq!(report.first_failure.unwrap().kind, "safety");
    }

    #[test]
    fn init_in_goal_progresses_immediately() {
        let mut problem = conveyor();
        problem.init = vec![seg(int(3), int(4))];
        let trace = simulate(
            &problem,
            &Controller { table: vec![1; 4] },
            &[frac(7, 2)],
            4,
        );
        assert_eq!(trace.goal_step, Some(0));
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let problem = conveyor();
        let cert = good_cert(&problem);
        let a = simulate_many(&problem, &cert.controller, 50, 3, 16);
        assert!(a.all_ok());
        assert_eq!(a, simulate_many(&problem, &cert.controller, 50, 3, 16));
    }

    #[test]
    fn zero_perturbation_passes() {
        let problem = conveyor();
        let cert = good_cert(&problem);
        let spec = PerturbationSpec {
            epsilon: int(0),
            samples: 5,
            seed: 1,
        };
        let r = probe_robustness(&problem, &cert, &spec);
        assert_eq!(r.samples, 7);
        assert_eq!(r.passed, 7);
    }

    #[test]
    fn reach_closure_follows_controller() {
        let problem = conveyor();
        let stay = Controller {
            table: vec![1, 0, 0, 1],
        };
        // Cell 0 under -1 lands on [-1,0], outside X but for one point.
        assert_eq!(reach_closure(&problem, &problem.control, &stay), vec![0]);
        let cert = good_cert(&problem);
        assert_eq!(
            reach_closure(&problem, &problem.control, &cert.controller),
            vec![0, 1, 2, 3]
        );
    }
}
