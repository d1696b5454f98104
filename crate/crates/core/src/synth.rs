//! The refinement loop: solve the strengthened and weakened encodings on
//! the current partition, stop on a controller or an impossibility proof,
//! otherwise refine and repeat.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{check_exact_rules, Certificate};
use crate::encode::{decode_model, encode, EncodeError, Variant};
use crate::geometry::rational::format_scalar;
use crate::geometry::{CellId, Coverage, GeometryError, Hyperrect, Partition};
use crate::model::{Controller, Problem};
use crate::post::{
    build_table, over_post_set, rebuild_table, under_post_set, PostError, SuccessorTable, OUT,
};
use crate::solver::{solve, SolverConfig, SolverError, SolverOutcome, SolverStatus};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("problem is invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Post(#[from] PostError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Bisects every control cell on its `splits` widest axes (cycling when
/// `splits` exceeds the dimension); the lineage map points into the
/// control partition.
pub fn init_partition(problem: &Problem, splits: usize) -> Partition {
    let control = &problem.control;
    let mut cells = Vec::new();
    let mut origin = Vec::new();
    for (c, cell) in control.cells().iter().enumerate() {
        let n = cell.dim();
        let mut axes: Vec<usize> = (0..n).collect();
        axes.sort_by(|&a, &b| cell.width(b).cmp(&cell.width(a)).then(a.cmp(&b)));
        let mut pieces = vec![cell.clone()];
        for s in 0..splits {
            let axis = axes[s % n];
            pieces = pieces
                .into_iter()
                .flat_map(|p| {
                    let (l, r) = p
                        .bisect(axis)
                        .expect("partition cells are full-dimensional");
                    [l, r]
                })
                .collect();
        }
        origin.extend(std::iter::repeat_n(c, pieces.len()));
        cells.extend(pieces);
    }
    Partition::new(control.domain().clone(), cells)
        .expect("bisection keeps a partition")
        .with_parent(Some(origin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Uniform,
    Must,
    Complement,
    Heuristic,
}

impl StrategyKind {
    pub fn parse(text: &str) -> Option<StrategyKind> {
        match text {
            "uniform" => Some(StrategyKind::Uniform),
            "must" => Some(StrategyKind::Must),
            "complement" => Some(StrategyKind::Complement),
            "heuristic" => Some(StrategyKind::Heuristic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefinementStrategy {
    pub kind: StrategyKind,
    /// Hops in the cell adjacency graph that count as "close to unsafe".
    pub proximity_threshold: usize,
    /// Also split every cell of maximal diameter, so resolution shrinks
    /// at least once every `dim` rounds whatever the guidance selects.
    pub fair: bool,
}

impl Default for RefinementStrategy {
    fn default() -> Self {
        RefinementStrategy {
            kind: StrategyKind::Must,
            proximity_threshold: 1,
            fair: true,
        }
    }
}

impl RefinementStrategy {
    pub fn of(kind: StrategyKind) -> Self {
        RefinementStrategy {
            kind,
            ..Self::default()
        }
    }
}

/// Cells that are not entirely inside Safe.
pub fn unsafe_cells(partition: &Partition, safe: &[Hyperrect]) -> Vec<bool> {
    partition
        .cells()
        .iter()
        .map(|c| c.coverage(safe) != Coverage::Inside)
        .collect()
}

fn near_unsafe(partition: &Partition, must: &[CellId], unsafe_mask: &[bool], hops: usize) -> bool {
    let mut seen: BTreeSet<CellId> = must.iter().copied().collect();
    let mut queue: VecDeque<(CellId, usize)> = must.iter().map(|&c| (c, 0)).collect();
    while let Some((c, d)) = queue.pop_front() {
        if unsafe_mask[c] {
            return true;
        }
        if d == hops {
            continue;
        }
        for q in partition.cells_intersecting(partition.cell(c)) {
            if seen.insert(q) {
                queue.push_back((q, d + 1));
            }
        }
    }
    false
}

/// The cells a strategy would split, before fairness is added.
pub fn select_cells(
    partition: &Partition,
    must: &[CellId],
    strategy: &RefinementStrategy,
    unsafe_mask: &[bool],
) -> Vec<CellId> {
    let in_must: BTreeSet<CellId> = must.iter().copied().collect();
    let complement = || -> Vec<CellId> {
        (0..partition.len())
            .filter(|c| !in_must.contains(c))
            .collect()
    };
    let chosen = match strategy.kind {
        StrategyKind::Uniform => (0..partition.len()).collect(),
        StrategyKind::Must => in_must.iter().copied().collect(),
        StrategyKind::Complement => complement(),
        StrategyKind::Heuristic => {
            if near_unsafe(partition, must, unsafe_mask, strategy.proximity_threshold) {
                complement()
            } else {
                in_must.iter().copied().collect()
            }
        }
    };
    if chosen.is_empty() {
        (0..partition.len()).collect()
    } else {
        chosen
    }
}

/// Splits the selected cells on their widest axes.
pub fn refine(
    partition: &Partition,
    must: &[CellId],
    strategy: &RefinementStrategy,
    safe: &[Hyperrect],
) -> Result<Partition, GeometryError> {
    let mask = unsafe_cells(partition, safe);
    let mut chosen: BTreeSet<CellId> = select_cells(partition, must, strategy, &mask)
        .into_iter()
        .collect();
    if strategy.fair {
        let res = partition.resolution();
        chosen.extend((0..partition.len()).filter(|&c| partition.cell(c).diameter() == res));
    }
    partition.split_widest(&chosen.into_iter().collect::<Vec<_>>())
}

/// Least member set from Init under `controller`, read from the under
/// (`over = false`) or over rows; [`OUT`] is kept if reached.
pub fn fixed_point(table: &SuccessorTable, controller: &Controller, over: bool) -> Vec<CellId> {
    let mut seen: BTreeSet<CellId> = (0..table.n_cells())
        .filter(|&p| table.roles[p].init)
        .collect();
    let mut todo: Vec<CellId> = seen.iter().copied().collect();
    while let Some(p) = todo.pop() {
        if p == OUT {
            continue;
        }
        let i = controller.input_for(table.cell_control[p]);
        let row = if over {
            &table.over[p][i]
        } else {
            &table.under[p][i]
        };
        for &q in row {
            if seen.insert(q) {
                todo.push(q);
            }
        }
    }
    seen.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Budget {
    pub max_iters: usize,
    pub max_cells: usize,
    pub wallclock: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_iters: 8,
            max_cells: 20_000,
            wallclock: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub solver: SolverConfig,
    pub strategy: RefinementStrategy,
    pub budget: Budget,
    pub init_splits: usize,
}

impl SynthConfig {
    pub fn new(solver: SolverConfig) -> Self {
        SynthConfig {
            solver,
            strategy: RefinementStrategy::default(),
            budget: Budget::default(),
            init_splits: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Sat(Box<Certificate>),
    Unsat {
        partition_hash: String,
        encoding_hash: String,
    },
    Unknown {
        reason: String,
    },
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Sat(_) => "sat",
            Verdict::Unsat { .. } => "unsat",
            Verdict::Unknown { .. } => "unknown",
        }
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub partition_hash: String,
    pub cells: usize,
    pub resolution: String,
    pub weak_status: SolverStatus,
    pub strong_status: SolverStatus,
    pub weak_assertions: usize,
    pub strong_assertions: usize,
    pub table_secs: f64,
    pub weak_secs: f64,
    pub strong_secs: f64,
    pub action: String,
    pub must: Vec<CellId>,
    pub may: Vec<CellId>,
}

#[derive(Debug, Clone)]
pub struct SynthesisRun {
    pub iterations: Vec<IterationRecord>,
    pub verdict: Verdict,
    pub partition: Partition,
    pub table: SuccessorTable,
}

impl SynthesisRun {
    pub fn write_log(&self, out: &mut impl Write) -> std::io::Result<()> {
        for rec in &self.iterations {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn solve_pair(
    weak: &crate::encode::EncodedProblem,
    strong: &crate::encode::EncodedProblem,
    cfg: &SolverConfig,
) -> Result<(SolverOutcome, SolverOutcome), SolverError> {
    thread::scope(|s| {
        let w = s.spawn(|| solve(weak, cfg));
        let st = solve(strong, cfg);
        let w = w.join().expect("solver thread");
        Ok((w?, st?))
    })
}

fn unknown(reason: impl Into<String>) -> Verdict {
    Verdict::Unknown {
        reason: reason.into(),
    }
}

pub fn synthesize(problem: &Problem, cfg: &SynthConfig) -> Result<SynthesisRun, SynthError> {
    let violations = problem.validate();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(SynthError::Invalid(text.join("; ")));
    }
    let start = Instant::now();
    let mut partition = init_partition(problem, cfg.init_splits);
    let t0 = Instant::now();
    let mut table = build_table(problem, &partition)?;
    let mut table_secs = t0.elapsed().as_secs_f64();
    let mut records = Vec::new();
    let finish = |records, verdict, partition, table| {
        Ok(SynthesisRun {
            iterations: records,
            verdict,
            partition,
            table,
        })
    };

    for iteration in 0.. {
        if iteration >= cfg.budget.max_iters {
            let reason = format!("iteration budget {} exhausted", cfg.budget.max_iters);
            return finish(records, unknown(reason), partition, table);
        }
        if start.elapsed() > cfg.budget.wallclock {
            let reason = format!("wall-clock budget {:?} exhausted", cfg.budget.wallclock);
            return finish(records, unknown(reason), partition, table);
        }
        let weak = encode(problem, &partition, &table, Variant::Weakened)?;
        let strong = encode(problem, &partition, &table, Variant::Strengthened)?;
        let mut solver = cfg.solver.clone();
        let remaining = cfg.budget.wallclock.saturating_sub(start.elapsed());
        solver.timeout = solver
            .timeout
            .min(remaining.max(Duration::from_millis(100)));
        let (w, s) = solve_pair(&weak, &strong, &solver)?;
        info!(
            "iteration {iteration}: {} cells, W {:?}, S {:?}",
            partition.len(),
            w.status,
            s.status
        );
        let mut record = IterationRecord {
            iteration,
            partition_hash: table.partition_hash.clone(),
            cells: partition.len(),
            resolution: format_scalar(&partition.resolution()),
            weak_status: w.status,
            strong_status: s.status,
            weak_assertions: weak.n_assertions,
            strong_assertions: strong.n_assertions,
            table_secs,
            weak_secs: w.wall_time,
            strong_secs: s.wall_time,
            action: String::new(),
            must: Vec::new(),
            may: Vec::new(),
        };

        if s.status == SolverStatus::Sat {
            let mut cert = decode_model(&strong, s.model.as_deref().unwrap_or(""))?;
            let may = fixed_point(&table, &cert.controller, true);
            record.must = fixed_point(&table, &cert.controller, false);
            record.may = may.clone();
            if !may.contains(&OUT) {
                cert.invariant_cells = may;
            }
            let report = check_exact_rules(problem, &cert);
            if !report.passed() {
                record.action = "reject".into();
                records.push(record);
                let reason = format!("certificate failed the exact check: {:?}", report.rules());
                return finish(records, unknown(reason), partition, table);
            }
            record.action = "sat".into();
            records.push(record);
            return finish(records, Verdict::Sat(Box::new(cert)), partition, table);
        }
        if w.status == SolverStatus::Unsat {
            let again = solve(&weak, &cfg.solver)?;
            if again.status != SolverStatus::Unsat {
                record.action = "unconfirmed".into();
                records.push(record);
                let reason = format!("weak encoding re-solve returned {:?}", again.status);
                return finish(records, unknown(reason), partition, table);
            }
            record.action = "unsat".into();
            records.push(record);
            let verdict = Verdict::Unsat {
                partition_hash: partition.hash(),
                encoding_hash: weak.hash(),
            };
            return finish(records, verdict, partition, table);
        }
        if w.status != SolverStatus::Sat || s.status != SolverStatus::Unsat {
            record.action = "stop".into();
            records.push(record);
            let reason = format!(
                "solver returned {:?}/{:?}: {}",
                w.status,
                s.status,
                w.stderr_tail.trim()
            );
            return finish(records, unknown(reason), partition, table);
        }

        let wcert = decode_model(&weak, w.model.as_deref().unwrap_or(""))?;
        let must: Vec<CellId> = fixed_point(&table, &wcert.controller, false)
            .into_iter()
            .filter(|&q| q != OUT)
            .collect();
        record.must = must.clone();
        let refined = refine(&partition, &must, &cfg.strategy, &problem.safe)?;
        record.action = format!("refine {} -> {}", partition.len(), refined.len());
        debug!("{}", record.action);
        records.push(record);
        if refined.len() > cfg.budget.max_cells {
            let reason = format!("cell budget {} exceeded", cfg.budget.max_cells);
            return finish(records, unknown(reason), partition, table);
        }
        let t0 = Instant::now();
        table = rebuild_table(problem, &table, &partition, &refined)?;
        table_secs = t0.elapsed().as_secs_f64();
        partition = refined;
    }
    unreachable!("the loop returns")
}

/// Must and May computed with set-level posts (cells inside the image of
/// the whole current set), both least fixed points from Init. The flag
/// reports whether either set reaches [`OUT`].
pub fn set_fixed_points(
    problem: &Problem,
    partition: &Partition,
    controller: &Controller,
) -> Result<(Vec<CellId>, Vec<CellId>, bool), PostError> {
    let input_of = |p: CellId| {
        let c = problem
            .control
            .containing_cell(partition.cell(p))
            .expect("partition refines the control partition");
        controller.input_for(c)
    };
    let init: BTreeSet<CellId> = (0..partition.len())
        .filter(|&p| partition.cell(p).coverage(&problem.init) == Coverage::Inside)
        .collect();

    let grow = |over: bool| -> Result<(Vec<CellId>, bool), PostError> {
        let mut set = init.clone();
        let mut escapes = false;
        loop {
            let cells: Vec<CellId> = set.iter().copied().collect();
            let next = if over {
                over_post_set(&problem.system, partition, &cells, input_of)?
            } else {
                under_post_set(&problem.system, partition, &cells, input_of)?
            };
            let before = set.len();
            for q in next {
                if q == OUT {
                    escapes = true;
                } else {
                    set.insert(q);
                }
            }
            if set.len() == before {
                return Ok((set.into_iter().collect(), escapes));
            }
        }
    };
    let (must, must_escapes) = grow(false)?;
    let (may, may_escapes) = grow(true)?;
    Ok((must, may, must_escapes || may_escapes))
}

fn same_points(coarse: &[CellId], fine: &[CellId], refined: &Partition) -> bool {
    let parent = refined.parent().expect("refinement records lineage");
    let coarse: BTreeSet<CellId> = coarse.iter().copied().collect();
    let fine: BTreeSet<CellId> = fine.iter().copied().collect();
    (0..refined.len()).all(|q| fine.contains(&q) == coarse.contains(&parent[q]))
}

/// Refines the cells of Must and checks that the Must and May point sets
/// do not change.
pub fn check_refinement_stability(
    problem: &Problem,
    controller: &Controller,
    partition: &Partition,
) -> Result<bool, PostError> {
    let (must, may, escapes) = set_fixed_points(problem, partition, controller)?;
    let strategy = RefinementStrategy {
        kind: StrategyKind::Must,
        proximity_threshold: 1,
        fair: false,
    };
    let refined = refine(partition, &must, &strategy, &problem.safe)?;
    let (must2, may2, escapes2) = set_fixed_points(problem, &refined, controller)?;
    Ok(escapes == escapes2
        && same_points(&must, &must2, &refined)
        && same_points(&may, &may2, &refined))
}
