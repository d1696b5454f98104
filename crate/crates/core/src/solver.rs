//! External SMT solver driver and an enumerative oracle for tiny instances.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::Certificate;
use crate::encode::{EncodedProblem, Variant};
use crate::geometry::{CellId, Partition};
use crate::model::{Controller, Problem, RankingFunction};
use crate::post::{SuccessorTable, OUT};

pub const SOLVER_ENV: &str = "REACH_SYNTH_SOLVER";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver executable {0:?} not found")]
    NotFound(PathBuf),
    #[error("failed to run solver: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance exceeds the enumeration budget: {0}")]
    BudgetExceeded(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub executable: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
    pub memory_mb: Option<u64>,
}

impl SolverConfig {
    /// `--solver` flag, then `REACH_SYNTH_SOLVER`, then `z3` on `PATH`.
    pub fn resolve(flag: Option<&str>) -> SolverConfig {
        let exe = flag
            .map(String::from)
            .or_else(|| std::env::var(SOLVER_ENV).ok().filter(|s| !s.is_empty()))
            .unwrap_or_else(|| "z3".to_string());
        SolverConfig::for_executable(exe)
    }

    /// Picks stdin-reading arguments for the known solvers.
    pub fn for_executable(exe: impl Into<PathBuf>) -> SolverConfig {
        let executable = exe.into();
        let name = executable
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let args = if name.contains("z3") {
            vec!["-in".into(), "-smt2".into()]
        } else if name.contains("cvc") {
            vec!["--lang=smt2".into()]
        } else {
            Vec::new()
        };
        SolverConfig {
            executable,
            args,
            timeout: Duration::from_secs(60),
            memory_mb: Some(4096),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> SolverConfig {
        self.timeout = timeout;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverStatus {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    pub model: Option<String>,
    pub wall_time: f64,
    pub stderr_tail: String,
    pub output_tail: String,
}

const TAIL: usize = 2000;

fn tail(text: &str) -> String {
    let start = text.len().saturating_sub(TAIL);
    let start = (start..=text.len())
        .find(|&i| text.is_char_boundary(i))
        .unwrap_or(text.len());
    text[start..].to_string()
}

pub fn solve(encoded: &EncodedProblem, cfg: &SolverConfig) -> Result<SolverOutcome, SolverError> {
    solve_text(&encoded.smtlib, cfg)
}

/// Feeds `text` to a fresh solver process and reads its answer.
///
/// The child runs in its own process group; on timeout the whole group is
/// killed and reaped before returning.
pub fn solve_text(text: &str, cfg: &SolverConfig) -> Result<SolverOutcome, SolverError> {
    let mut cmd = Command::new(&cfg.executable);
    cmd.args(&cfg.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let memory = cfg.memory_mb.map(|mb| mb.saturating_mul(1 << 20));
    // SAFETY: only async-signal-safe calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if let Some(bytes) = memory {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                libc::setrlimit(libc::RLIMIT_AS, &lim);
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SolverError::NotFound(cfg.executable.clone()))
        }
        Err(e) => return Err(e.into()),
    };
    let pgid = child.id() as libc::pid_t;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = text.to_owned();
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let out_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let mut stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let deadline = start + cfg.timeout;
    let mut timed_out = false;
    let exit = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            timed_out = true;
            break None;
        }
        thread::sleep(Duration::from_millis(2));
    };
    // Reap the whole group: grandchildren may hold the pipes open.
    // SAFETY: plain syscall on a process group we created.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    if exit.is_none() {
        child.wait()?;
    }
    let _ = writer.join();
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    let wall_time = start.elapsed().as_secs_f64();

    let (status, model) = if timed_out {
        (SolverStatus::Timeout, None)
    } else {
        let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some("sat") => {
                let rest = out.split_once("sat").map(|(_, r)| r.trim()).unwrap_or("");
                if rest.starts_with('(') && crate::sexp::parse_all(rest).is_ok() {
                    (SolverStatus::Sat, Some(rest.to_string()))
                } else {
                    (SolverStatus::Crash, None)
                }
            }
            Some("unsat") => (SolverStatus::Unsat, None),
            Some("unknown") => (SolverStatus::Unknown, None),
            _ => (SolverStatus::Crash, None),
        }
    };
    Ok(SolverOutcome {
        status,
        model,
        wall_time,
        stderr_tail: tail(&err),
        output_tail: tail(&out),
    })
}

pub const BRUTE_MAX_CONTROL: usize = 12;
pub const BRUTE_MAX_INPUTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteOutcome {
    pub sat: bool,
    pub witness: Option<Certificate>,
    pub controllers_tried: u64,
}

/// Least ranks satisfying `v(a) ≥ v(b)` on `weak` edges, `v(a) > v(b)` on
/// `strict` edges, `v = 0` exactly on goal nodes and `v ≤ max_rank`.
///
/// Edges must leave non-goal nodes. A solution exists iff no strict edge
/// lies inside a strongly connected component and the longest strict
/// chain fits under `max_rank`.
pub fn rank_assignment(
    goal: &[bool],
    weak: &[(usize, usize)],
    strict: &[(usize, usize)],
    max_rank: u64,
) -> Option<Vec<u64>> {
    let n = goal.len();
    let mut g: DiGraph<(), bool> = DiGraph::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for &(a, b) in weak {
        g.add_edge(nodes[a], nodes[b], false);
    }
    for &(a, b) in strict {
        g.add_edge(nodes[a], nodes[b], true);
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (i, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = i;
        }
    }
    if strict.iter().any(|&(a, b)| comp[a] == comp[b]) {
        return None;
    }
    if weak.iter().chain(strict).any(|&(a, b)| goal[a] && !goal[b]) {
        return None;
    }
    // tarjan_scc yields components in reverse topological order: sinks first.
    let mut rank: Vec<u64> = goal.iter().map(|&g| if g { 0 } else { 1 }).collect();
    for scc in &sccs {
        let mut r = 0;
        for v in scc {
            let a = v.index();
            r = r.max(rank[a]);
            for e in g.edges(*v) {
                use petgraph::visit::EdgeRef;
                let b = e.target().index();
                if comp[b] != comp[a] {
                    r = r.max(rank[b] + *e.weight() as u64);
                }
            }
        }
        for v in scc {
            if !goal[v.index()] {
                rank[v.index()] = r;
            }
        }
    }
    if rank.iter().any(|&r| r > max_rank) || goal.iter().zip(&rank).any(|(&g, &r)| g && r != 0) {
        return None;
    }
    Some(rank)
}

struct Oracle<'a> {
    problem: &'a Problem,
    table: &'a SuccessorTable,
    over: bool,
    goal: Vec<bool>,
    tried: u64,
}

enum Closure {
    Unsafe,
    Needs(CellId),
    Closed(BTreeSet<CellId>),
}

impl Oracle<'_> {
    fn succ(&self, p: CellId, i: usize) -> &[CellId] {
        if self.over {
            &self.table.over[p][i]
        } else {
            &self.table.under[p][i]
        }
    }

    /// Least member set under a partial controller; membership only grows
    /// as more cells are assigned, so an unsafe partial closure is final.
    fn closure(&self, assign: &[Option<usize>]) -> Closure {
        let mut members: BTreeSet<CellId> = (0..self.table.n_cells())
            .filter(|&p| self.table.roles[p].init)
            .collect();
        let mut todo: Vec<CellId> = members.iter().copied().collect();
        let mut needed: Option<CellId> = None;
        while let Some(p) = todo.pop() {
            if !self.table.roles[p].safe {
                return Closure::Unsafe;
            }
            let c = self.table.cell_control[p];
            let Some(i) = assign[c] else {
                needed = Some(needed.map_or(c, |n: CellId| n.min(c)));
                continue;
            };
            for &q in self.succ(p, i) {
                if q == OUT {
                    return Closure::Unsafe;
                }
                if members.insert(q) {
                    todo.push(q);
                }
            }
        }
        match needed {
            Some(c) => Closure::Needs(c),
            None => Closure::Closed(members),
        }
    }

    fn k_step(&self, assign: &[Option<usize>], p: CellId) -> BTreeSet<CellId> {
        let mut frontier = BTreeSet::from([p]);
        for _ in 0..self.problem.k {
            let mut next = BTreeSet::new();
            for &q in &frontier {
                if self.table.is_goal(q) {
                    next.insert(q);
                    continue;
                }
                let i = assign[self.table.cell_control[q]].unwrap_or(0);
                next.extend(self.succ(q, i).iter().copied().filter(|&r| r != OUT));
            }
            frontier = next;
        }
        frontier
    }

    fn ranks(&self, assign: &[Option<usize>], members: &BTreeSet<CellId>) -> Option<Vec<u64>> {
        let mut weak = BTreeSet::new();
        let mut strict = BTreeSet::new();
        for &p in members {
            if self.table.is_goal(p) {
                continue;
            }
            let c = self.table.cell_control[p];
            let i = assign[c].expect("members are assigned");
            for &q in self.succ(p, i).iter().filter(|&&q| q != OUT) {
                weak.insert((c, self.table.cell_control[q]));
            }
            for q in self.k_step(assign, p) {
                strict.insert((c, self.table.cell_control[q]));
            }
        }
        let weak: Vec<_> = weak.into_iter().collect();
        let strict: Vec<_> = strict.into_iter().collect();
        rank_assignment(&self.goal, &weak, &strict, self.problem.max_rank)
    }

    fn search(&mut self, assign: &mut Vec<Option<usize>>) -> Option<(BTreeSet<CellId>, Vec<u64>)> {
        match self.closure(assign) {
            Closure::Unsafe => None,
            Closure::Closed(members) => {
                self.tried += 1;
                let ranks = self.ranks(assign, &members)?;
                Some((members, ranks))
            }
            Closure::Needs(c) => {
                for i in 0..self.table.n_inputs {
                    assign[c] = Some(i);
                    if let Some(found) = self.search(assign) {
                        return Some(found);
                    }
                }
                assign[c] = None;
                None
            }
        }
    }
}

/// Decides the rule system `variant` by enumerating controllers over the
/// control cells reachable from Init.
pub fn brute_force(
    problem: &Problem,
    partition: &Partition,
    table: &SuccessorTable,
    variant: Variant,
) -> Result<BruteOutcome, SolverError> {
    let n_control = problem.n_control();
    if n_control > BRUTE_MAX_CONTROL || table.n_inputs > BRUTE_MAX_INPUTS {
        return Err(SolverError::BudgetExceeded(format!(
            "{n_control} control cells, {} inputs",
            table.n_inputs
        )));
    }
    if variant == Variant::Exact && !table.is_exact() {
        return Err(SolverError::BudgetExceeded(
            "exact rules need cell-aligned images".into(),
        ));
    }
    let mut oracle = Oracle {
        problem,
        table,
        over: variant.uses_over(),
        goal: problem.control_goal(),
        tried: 0,
    };
    let mut assign = vec![None; n_control];
    let found = oracle.search(&mut assign);
    let witness = found.map(|(members, ranks)| Certificate {
        controller: Controller {
            table: assign.iter().map(|a| a.unwrap_or(0)).collect(),
        },
        ranking: RankingFunction {
            ranks,
            max_rank: problem.max_rank,
        },
        invariant_cells: members.into_iter().collect(),
        variant,
        k: problem.k,
        partition: partition.clone(),
    });
    Ok(BruteOutcome {
        sat: witness.is_some(),
        witness,
        controllers_tried: oracle.tried,
    })
}
