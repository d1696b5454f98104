//! QF_LIA encodings of the exact, weakened and strengthened rule systems.
//!
//! Variables: `u_<c>` selects the input of control cell `c`, `v_<c>` is its
//! rank, `m_<p>` marks partition cell `p` as a member of Inv / Must / May.
//! Rules are instantiated per partition cell; ranks are lifted through the
//! table's `cell_control` map.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::Certificate;
use crate::geometry::{CellId, Partition};
use crate::model::{Controller, Problem, RankingFunction};
use crate::post::{SuccessorTable, OUT};
use crate::sexp::{as_bool, as_int, parse_all};

pub const MAX_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Exact,
    #[serde(rename = "weak")]
    Weakened,
    #[serde(rename = "strong")]
    Strengthened,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Weakened => "weak",
            Variant::Strengthened => "strong",
        }
    }

    pub fn parse(text: &str) -> Option<Variant> {
        match text {
            "exact" => Some(Variant::Exact),
            "weak" | "weakened" => Some(Variant::Weakened),
            "strong" | "strengthened" => Some(Variant::Strengthened),
            _ => None,
        }
    }

    /// Weakened rules read under sets; the others read over sets.
    pub fn uses_over(self) -> bool {
        self != Variant::Weakened
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("k = {0} is outside 1..={MAX_K}; path enumeration grows as |U|^k")]
    KOutOfRange(usize),
    #[error("table belongs to a different partition")]
    StaleTable,
    #[error("exact encoding needs cell-aligned images; {} rows are not, first {:?}", .0.len(), .0.first())]
    NotAligned(Vec<(CellId, usize)>),
    #[error("model has no value for {0}")]
    MissingValue(String),
    #[error("model value for {name} is invalid: {value}")]
    BadValue { name: String, value: String },
    #[error("unreadable model: {0}")]
    BadModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Input,
    Rank,
    Member,
}

#[derive(Debug, Clone)]
pub struct EncodedProblem {
    pub smtlib: String,
    pub variant: Variant,
    pub k: usize,
    pub n_assertions: usize,
    pub predicted_assertions: usize,
    pub decode_map: BTreeMap<String, (VarKind, usize)>,
    pub partition: Partition,
    pub n_control: usize,
    pub n_inputs: usize,
    pub max_rank: u64,
}

impl EncodedProblem {
    /// SHA-256 of the SMT-LIB text.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.smtlib.as_bytes()))
    }
}

struct Ctx<'a> {
    table: &'a SuccessorTable,
    over: bool,
}

impl Ctx<'_> {
    fn succ(&self, p: CellId, i: usize) -> &[CellId] {
        if self.over {
            &self.table.over[p][i]
        } else {
            &self.table.under[p][i]
        }
    }

    fn control(&self, p: CellId) -> CellId {
        self.table.cell_control[p]
    }

    /// Every length-`k` path from `p` as (guard pairs, end cell); goal cells
    /// absorb, paths through [`OUT`] are dropped.
    fn paths(&self, p: CellId, k: usize) -> Vec<(Vec<(CellId, usize)>, CellId)> {
        let mut paths = vec![(Vec::new(), p)];
        for _ in 0..k {
            let mut next = Vec::new();
            for (guard, q) in paths {
                if self.table.is_goal(q) {
                    next.push((guard, q));
                    continue;
                }
                for i in 0..self.table.n_inputs {
                    for &r in self.succ(q, i) {
                        if r == OUT {
                            continue;
                        }
                        let mut g = guard.clone();
                        g.push((self.control(q), i));
                        next.push((g, r));
                    }
                }
            }
            paths = next;
        }
        paths
    }

    /// Cells that can reach Goal or a dead end (an empty successor row)
    /// using only inputs whose successors are all safe. A member outside
    /// this set would need an infinite strictly decreasing rank chain.
    fn viable(&self) -> Vec<bool> {
        let t = self.table;
        let usable =
            |p: CellId, i: usize| self.succ(p, i).iter().all(|&q| q != OUT && t.roles[q].safe);
        let mut ok: Vec<bool> = (0..t.n_cells())
            .map(|p| {
                t.is_goal(p) || (0..t.n_inputs).any(|i| usable(p, i) && self.succ(p, i).is_empty())
            })
            .collect();
        loop {
            let mut changed = false;
            for p in 0..t.n_cells() {
                if !ok[p]
                    && (0..t.n_inputs)
                        .any(|i| usable(p, i) && self.succ(p, i).iter().any(|&q| ok[q]))
                {
                    ok[p] = true;
                    changed = true;
                }
            }
            if !changed {
                return ok;
            }
        }
    }

    fn count_paths(&self, p: CellId, k: usize) -> usize {
        if k == 0 || self.table.is_goal(p) {
            return 1;
        }
        (0..self.table.n_inputs)
            .flat_map(|i| self.succ(p, i).iter())
            .filter(|&&r| r != OUT)
            .map(|&r| self.count_paths(r, k - 1))
            .sum()
    }
}

/// Closed-form assertion count for an encoding of `table`.
///
/// `2|C| + |init cells| + |unsafe cells| + |safe non-viable cells| + Σ closure edges
/// + [k ≥ 2] Σ one-step rank edges + Σ k-step rank paths`.
pub fn predict_assertions(problem: &Problem, table: &SuccessorTable, variant: Variant) -> usize {
    let ctx = Ctx {
        table,
        over: variant.uses_over(),
    };
    let n = table.n_cells();
    let mut count = 2 * problem.n_control();
    count += table.roles.iter().filter(|r| r.init).count();
    count += table.roles.iter().filter(|r| !r.safe).count();
    let viable = ctx.viable();
    count += (0..n)
        .filter(|&p| table.roles[p].safe && !viable[p])
        .count();
    for p in 0..n {
        for i in 0..table.n_inputs {
            let succ = ctx.succ(p, i);
            count += succ.iter().filter(|&&q| q != p).count();
            if problem.k >= 2 && !table.is_goal(p) {
                count += succ.iter().filter(|&&q| q != OUT).count();
            }
        }
        if !table.is_goal(p) {
            count += ctx.count_paths(p, problem.k);
        }
    }
    count
}

fn guard(p: CellId, pairs: &[(CellId, usize)]) -> String {
    let mut g = format!("(and m_{p}");
    for (c, i) in pairs {
        let _ = write!(g, " (= u_{c} {i})");
    }
    g.push(')');
    g
}

/// Emits the rule system `variant` over `table`.
pub fn encode(
    problem: &Problem,
    partition: &Partition,
    table: &SuccessorTable,
    variant: Variant,
) -> Result<EncodedProblem, EncodeError> {
    let k = problem.k;
    if !(1..=MAX_K).contains(&k) {
        return Err(EncodeError::KOutOfRange(k));
    }
    if table.partition_hash != partition.hash() {
        return Err(EncodeError::StaleTable);
    }
    if variant == Variant::Exact {
        let bad = table.misaligned_rows();
        if !bad.is_empty() {
            return Err(EncodeError::NotAligned(bad));
        }
    }
    let ctx = Ctx {
        table,
        over: variant.uses_over(),
    };
    let n_control = problem.n_control();
    let n_inputs = table.n_inputs;
    let goal = problem.control_goal();
    let mut asserts: Vec<String> = Vec::new();

    for c in 0..n_control {
        asserts.push(format!("(and (>= u_{c} 0) (< u_{c} {n_inputs}))"));
    }
    for (c, &g) in goal.iter().enumerate() {
        if g {
            asserts.push(format!("(= v_{c} 0)"));
        } else {
            asserts.push(format!(
                "(and (>= v_{c} 1) (<= v_{c} {}))",
                problem.max_rank
            ));
        }
    }
    for (p, role) in table.roles.iter().enumerate() {
        if role.init {
            asserts.push(format!("m_{p}"));
        }
    }
    for (p, role) in table.roles.iter().enumerate() {
        if !role.safe {
            asserts.push(format!("(not m_{p})"));
        }
    }
    for (p, ok) in ctx.viable().into_iter().enumerate() {
        if table.roles[p].safe && !ok {
            asserts.push(format!("(not m_{p})"));
        }
    }
    for p in 0..table.n_cells() {
        let c = ctx.control(p);
        for i in 0..n_inputs {
            for &q in ctx.succ(p, i) {
                if q == OUT {
                    asserts.push(format!("(not (and m_{p} (= u_{c} {i})))"));
                } else if q != p {
                    asserts.push(format!("(=> (and m_{p} (= u_{c} {i})) m_{q})"));
                }
            }
        }
    }
    for p in 0..table.n_cells() {
        if table.is_goal(p) {
            continue;
        }
        let c = ctx.control(p);
        if k >= 2 {
            for i in 0..n_inputs {
                for &q in ctx.succ(p, i).iter().filter(|&&q| q != OUT) {
                    asserts.push(format!(
                        "(=> (and m_{p} (= u_{c} {i})) (>= v_{c} v_{}))",
                        ctx.control(q)
                    ));
                }
            }
        }
        for (pairs, q) in ctx.paths(p, k) {
            asserts.push(format!(
                "(=> {} (> v_{c} v_{}))",
                guard(p, &pairs),
                ctx.control(q)
            ));
        }
    }

    let mut decode_map = BTreeMap::new();
    let mut text = String::new();
    let _ = writeln!(text, "; reach-synth encoding");
    let _ = writeln!(text, "; problem {}", problem.hash());
    let _ = writeln!(text, "; variant {}", variant.name());
    let _ = writeln!(text, "; control-cells {n_control}");
    let _ = writeln!(text, "; partition-cells {}", table.n_cells());
    let _ = writeln!(text, "; k {k}");
    let _ = writeln!(text, "; assertions {}", asserts.len());
    let _ = writeln!(text, "(set-option :produce-models true)");
    let _ = writeln!(text, "(set-logic QF_LIA)");
    for c in 0..n_control {
        let _ = writeln!(text, "(declare-const u_{c} Int)");
        decode_map.insert(format!("u_{c}"), (VarKind::Input, c));
    }
    for c in 0..n_control {
        let _ = writeln!(text, "(declare-const v_{c} Int)");
        decode_map.insert(format!("v_{c}"), (VarKind::Rank, c));
    }
    for p in 0..table.n_cells() {
        let _ = writeln!(text, "(declare-const m_{p} Bool)");
        decode_map.insert(format!("m_{p}"), (VarKind::Member, p));
    }
    for a in &asserts {
        let _ = writeln!(text, "(assert {a})");
    }
    text.push_str("(check-sat)\n(get-model)\n");

    Ok(EncodedProblem {
        smtlib: text,
        variant,
        k,
        n_assertions: asserts.len(),
        predicted_assertions: predict_assertions(problem, table, variant),
        decode_map,
        partition: partition.clone(),
        n_control,
        n_inputs,
        max_rank: problem.max_rank,
    })
}

pub fn encode_weakened(
    problem: &Problem,
    partition: &Partition,
    table: &SuccessorTable,
) -> Result<EncodedProblem, EncodeError> {
    encode(problem, partition, table, Variant::Weakened)
}

pub fn encode_strengthened(
    problem: &Problem,
    partition: &Partition,
    table: &SuccessorTable,
) -> Result<EncodedProblem, EncodeError> {
    encode(problem, partition, table, Variant::Strengthened)
}

pub fn encode_exact(
    problem: &Problem,
    partition: &Partition,
    table: &SuccessorTable,
) -> Result<EncodedProblem, EncodeError> {
    encode(problem, partition, table, Variant::Exact)
}

/// Reads a `(get-model)` answer into a certificate.
pub fn decode_model(encoded: &EncodedProblem, model: &str) -> Result<Certificate, EncodeError> {
    let top = parse_all(model).map_err(EncodeError::BadModel)?;
    let mut values: BTreeMap<&str, &crate::sexp::Sexp> = BTreeMap::new();
    for def in top.iter().flat_map(|e| e.list().unwrap_or(&[])) {
        if let Some([head, name, _, _, value]) = def.list() {
            if head.atom() == Some("define-fun") {
                if let Some(n) = name.atom() {
                    values.insert(n, value);
                }
            }
        }
    }
    let mut inputs = vec![0usize; encoded.n_control];
    let mut ranks = vec![0u64; encoded.n_control];
    let mut members = Vec::new();
    for (name, &(kind, id)) in &encoded.decode_map {
        let value = values
            .get(name.as_str())
            .ok_or_else(|| EncodeError::MissingValue(name.clone()))?;
        let bad = || EncodeError::BadValue {
            name: name.clone(),
            value: format!("{value:?}"),
        };
        match kind {
            VarKind::Input => {
                let v = as_int(value).ok_or_else(bad)?;
                if v < 0 || v as usize >= encoded.n_inputs {
                    return Err(bad());
                }
                inputs[id] = v as usize;
            }
            VarKind::Rank => {
                let v = as_int(value).ok_or_else(bad)?;
                if v < 0 {
                    return Err(bad());
                }
                ranks[id] = v as u64;
            }
            VarKind::Member => {
                if as_bool(value).ok_or_else(bad)? {
                    members.push(id);
                }
            }
        }
    }
    members.sort_unstable();
    Ok(Certificate {
        controller: Controller { table: inputs },
        ranking: RankingFunction {
            ranks,
            max_rank: encoded.max_rank,
        },
        invariant_cells: members,
        variant: encoded.variant,
        k: encoded.k,
        partition: encoded.partition.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::{frac, int};
    use crate::geometry::{Hyperrect, Scalar};
    use crate::model::{single_location, translation_dynamics};
    use crate::post::build_table;

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    fn conveyor(k: usize) -> Problem {
        let sys = single_location(
            seg(int(0), int(1)),
            seg(int(-1), int(1)),
            vec![vec![frac(1, 4)], vec![frac(-1, 4)]],
            translation_dynamics(1),
        )
        .unwrap();
        Problem::new(
            sys,
            Partition::uniform(&seg(int(0), int(1)), &[4]).unwrap(),
            vec![seg(int(0), frac(1, 4))],
            vec![seg(int(0), int(1))],
            vec![seg(frac(3, 4), int(1))],
            k,
            None,
        )
    }

    #[test]
    fn header_and_counts() {
        let problem = conveyor(1);
        let p = problem.control.clone();
        let t = build_table(&problem, &p).unwrap();
        for variant in [Variant::Weakened, Variant::Strengthened, Variant::Exact] {
            let e = encode(&problem, &p, &t, variant).unwrap();
            assert!(e.smtlib.contains(&format!("; variant {}", variant.name())));
            assert!(e
                .smtlib
                .contains(&format!("; assertions {}", e.n_assertions)));
            assert_eq!(e.smtlib.matches("(assert ").count(), e.n_assertions);
            assert_eq!(e.n_assertions, e.predicted_assertions);
            assert_eq!(e.decode_map.len(), 4 + 4 + 4);
        }
    }

    #[test]
    fn predictor_matches_at_larger_k() {
        for k in 1..=3 {
            let problem = conveyor(k);
            let p = problem.control.split_widest(&[0, 1, 2, 3]).unwrap();
            let t = build_table(&problem, &p).unwrap();
            let e = encode(&problem, &p, &t, Variant::Strengthened).unwrap();
            assert_eq!(e.n_assertions, e.predicted_assertions, "k = {k}");
        }
    }

    #[test]
    fn deterministic_text() {
        let problem = conveyor(2);
        let p = problem.control.clone();
        let t = build_table(&problem, &p).unwrap();
        let a = encode_weakened(&problem, &p, &t).unwrap();
        let b = encode_weakened(&problem, &p, &t).unwrap();
        assert_eq!(a.smtlib, b.smtlib);
    }

    #[test]
    fn refuses_large_k_and_unaligned_exact() {
        let problem = conveyor(4);
        let p = problem.control.clone();
        let t = build_table(&problem, &p).unwrap();
        assert_eq!(
            encode_strengthened(&problem, &p, &t).unwrap_err(),
            EncodeError::KOutOfRange(4)
        );
        let mut skewed = conveyor(1);
        let sys = single_location(
            seg(int(0), int(1)),
            seg(int(-1), int(1)),
            vec![vec![frac(1, 3)]],
            translation_dynamics(1),
        )
        .unwrap();
        skewed.system = sys;
        let t = build_table(&skewed, &p).unwrap();
        assert!(matches!(
            encode_exact(&skewed, &p, &t),
            Err(EncodeError::NotAligned(_))
        ));
    }

    #[test]
    fn decode_round_trip() {
        let problem = conveyor(1);
        let p = problem.control.clone();
        let t = build_table(&problem, &p).unwrap();
        let e = encode_strengthened(&problem, &p, &t).unwrap();
        let mut model = String::from("(\n");
        for c in 0..4 {
            model.push_str(&format!("  (define-fun u_{c} () Int 0)\n"));
            model.push_str(&format!("  (define-fun v_{c} () Int {})\n", 3 - c));
        }
        for q in 0..4 {
            model.push_str(&format!("  (define-fun m_{q} () Bool true)\n"));
        }
        model.push(')');
        let cert = decode_model(&e, &model).unwrap();
        assert_eq!(cert.controller.table, vec![0; 4]);
        assert_eq!(cert.ranking.ranks, vec![3, 2, 1, 0]);
        assert_eq!(cert.invariant_cells, vec![0, 1, 2, 3]);
        assert_eq!(cert.variant, Variant::Strengthened);

        let truncated = model.replace("  (define-fun v_2 () Int 1)\n", "");
        assert_eq!(
            decode_model(&e, &truncated).unwrap_err(),
            EncodeError::MissingValue("v_2".into())
        );
    }
}
