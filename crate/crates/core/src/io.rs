//! JSON documents: problems (`reach-synth/1`), certificates and partitions.
//! Rationals are written as `"p/q"` strings so they round-trip exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::Certificate;
use crate::encode::Variant;
use crate::geometry::rational::{format_scalar, parse_scalar};
use crate::geometry::{CellId, Hyperrect, Partition, Scalar};
use crate::model::{
    AffineDynamics, Controller, Location, PiecewiseAffineSystem, Problem, RankingFunction,
};

pub const PROBLEM_FORMAT: &str = "reach-synth/1";
pub const CERTIFICATE_FORMAT: &str = "reach-synth-certificate/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json(e.to_string())
    }
}

fn field_err(field: impl Into<String>, message: impl ToString) -> IoError {
    IoError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub lo: Vec<String>,
    pub hi: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationDoc {
    pub invariant: BoxDoc,
    pub a: Vec<Vec<String>>,
    pub b: Vec<Vec<String>>,
    pub c: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub state_space: BoxDoc,
    pub input_box: BoxDoc,
    pub inputs: Vec<Vec<String>>,
    pub locations: Vec<LocationDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDoc {
    pub domain: BoxDoc,
    pub cells: Vec<BoxDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Vec<CellId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub format: String,
    pub system: SystemDoc,
    pub control: Vec<BoxDoc>,
    pub init: Vec<BoxDoc>,
    pub safe: Vec<BoxDoc>,
    pub goal: Vec<BoxDoc>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rank: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    pub format: String,
    pub problem_hash: String,
    pub partition_hash: String,
    pub variant: String,
    pub k: usize,
    pub controller: Vec<usize>,
    pub ranks: Vec<u64>,
    pub max_rank: u64,
    pub invariant_cells: Vec<CellId>,
    pub partition: PartitionDoc,
}

fn scalars(v: &[Scalar]) -> Vec<String> {
    v.iter().map(format_scalar).collect()
}

fn matrix(m: &[Vec<Scalar>]) -> Vec<Vec<String>> {
    m.iter().map(|r| scalars(r)).collect()
}

fn parse_vec(v: &[String], field: &str) -> Result<Vec<Scalar>, IoError> {
    v.iter()
        .enumerate()
        .map(|(i, s)| parse_scalar(s).map_err(|e| field_err(format!("{field}[{i}]"), e)))
        .collect()
}

fn parse_matrix(m: &[Vec<String>], field: &str) -> Result<Vec<Vec<Scalar>>, IoError> {
    m.iter()
        .enumerate()
        .map(|(i, r)| parse_vec(r, &format!("{field}[{i}]")))
        .collect()
}

pub fn box_doc(b: &Hyperrect) -> BoxDoc {
    BoxDoc {
        lo: scalars(b.lo()),
        hi: scalars(b.hi()),
    }
}

pub fn parse_box(doc: &BoxDoc, field: &str) -> Result<Hyperrect, IoError> {
    let lo = parse_vec(&doc.lo, &format!("{field}.lo"))?;
    let hi = parse_vec(&doc.hi, &format!("{field}.hi"))?;
    Hyperrect::new(lo, hi).map_err(|e| field_err(field, e))
}

fn parse_boxes(docs: &[BoxDoc], field: &str) -> Result<Vec<Hyperrect>, IoError> {
    docs.iter()
        .enumerate()
        .map(|(i, b)| parse_box(b, &format!("{field}[{i}]")))
        .collect()
}

pub fn partition_doc(p: &Partition) -> PartitionDoc {
    PartitionDoc {
        domain: box_doc(p.domain()),
        cells: p.cells().iter().map(box_doc).collect(),
        parent: p.parent().map(|s| s.to_vec()),
    }
}

pub fn parse_partition(doc: &PartitionDoc, field: &str) -> Result<Partition, IoError> {
    let domain = parse_box(&doc.domain, &format!("{field}.domain"))?;
    let cells = parse_boxes(&doc.cells, &format!("{field}.cells"))?;
    if let Some(parent) = &doc.parent {
        if parent.len() != cells.len() {
            return Err(field_err(
                format!("{field}.parent"),
                "length differs from cells",
            ));
        }
    }
    Ok(Partition::new(domain, cells)
        .map_err(|e| field_err(format!("{field}.cells"), e))?
        .with_parent(doc.parent.clone()))
}

pub fn problem_doc(problem: &Problem) -> ProblemDoc {
    let sys = &problem.system;
    ProblemDoc {
        format: PROBLEM_FORMAT.into(),
        system: SystemDoc {
            state_space: box_doc(sys.state_space()),
            input_box: box_doc(sys.input_box()),
            inputs: matrix(sys.inputs()),
            locations: sys
                .locations()
                .iter()
                .map(|l| LocationDoc {
                    invariant: box_doc(&l.invariant),
                    a: matrix(l.dynamics.a()),
                    b: matrix(l.dynamics.b()),
                    c: scalars(l.dynamics.c()),
                })
                .collect(),
        },
        control: problem.control.cells().iter().map(box_doc).collect(),
        init: problem.init.iter().map(box_doc).collect(),
        safe: problem.safe.iter().map(box_doc).collect(),
        goal: problem.goal.iter().map(box_doc).collect(),
        k: problem.k,
        max_rank: Some(problem.max_rank),
    }
}

pub fn problem_from_doc(doc: &ProblemDoc) -> Result<Problem, IoError> {
    if doc.format != PROBLEM_FORMAT {
        return Err(field_err(
            "format",
            format!("expected \"{PROBLEM_FORMAT}\""),
        ));
    }
    let s = &doc.system;
    let state_space = parse_box(&s.state_space, "system.state_space")?;
    let input_box = parse_box(&s.input_box, "system.input_box")?;
    let inputs = parse_matrix(&s.inputs, "system.inputs")?;
    let mut locations = Vec::new();
    for (l, loc) in s.locations.iter().enumerate() {
        let f = format!("system.locations[{l}]");
        let dynamics = AffineDynamics::new(
            parse_matrix(&loc.a, &format!("{f}.a"))?,
            parse_matrix(&loc.b, &format!("{f}.b"))?,
            parse_vec(&loc.c, &format!("{f}.c"))?,
        )
        .map_err(|e| field_err(f.clone(), e))?;
        locations.push(Location {
            invariant: parse_box(&loc.invariant, &format!("{f}.invariant"))?,
            dynamics,
        });
    }
    let system = PiecewiseAffineSystem::new(state_space.clone(), input_box, inputs, locations)
        .map_err(|e| field_err("system", e))?;
    let control = Partition::new(state_space, parse_boxes(&doc.control, "control")?)
        .map_err(|e| field_err("control", e))?;
    if doc.k == 0 {
        return Err(field_err("k", "must be at least 1"));
    }
    Ok(Problem::new(
        system,
        control,
        parse_boxes(&doc.init, "init")?,
        parse_boxes(&doc.safe, "safe")?,
        parse_boxes(&doc.goal, "goal")?,
        doc.k,
        doc.max_rank,
    ))
}

pub fn problem_to_json(problem: &Problem) -> String {
    serde_json::to_string_pretty(&problem_doc(problem)).expect("documents serialize")
}

/// Parses and validates a problem; any violated invariant is an error
/// naming the offending field.
pub fn problem_from_json(text: &str) -> Result<Problem, IoError> {
    let doc: ProblemDoc = serde_json::from_str(text)?;
    let problem = problem_from_doc(&doc)?;
    if let Some(v) = problem.validate().first() {
        return Err(field_err(v.invariant, &v.detail));
    }
    Ok(problem)
}

pub fn certificate_doc(problem: &Problem, cert: &Certificate) -> CertificateDoc {
    CertificateDoc {
        format: CERTIFICATE_FORMAT.into(),
        problem_hash: problem.hash(),
        partition_hash: cert.partition.hash(),
        variant: cert.variant.name().into(),
        k: cert.k,
        controller: cert.controller.table.clone(),
        ranks: cert.ranking.ranks.clone(),
        max_rank: cert.ranking.max_rank,
        invariant_cells: cert.invariant_cells.clone(),
        partition: partition_doc(&cert.partition),
    }
}

pub fn certificate_to_json(problem: &Problem, cert: &Certificate) -> String {
    serde_json::to_string_pretty(&certificate_doc(problem, cert)).expect("documents serialize")
}

/// Parses a certificate and checks that it belongs to `problem` and that
/// the embedded partition matches its recorded hash.
pub fn certificate_from_json(problem: &Problem, text: &str) -> Result<Certificate, IoError> {
    let doc: CertificateDoc = serde_json::from_str(text)?;
    if doc.format != CERTIFICATE_FORMAT {
        return Err(field_err(
            "format",
            format!("expected \"{CERTIFICATE_FORMAT}\""),
        ));
    }
    if doc.problem_hash != problem.hash() {
        return Err(field_err(
            "problem_hash",
            "certificate was issued for another problem",
        ));
    }
    let partition = parse_partition(&doc.partition, "partition")?;
    if partition.hash() != doc.partition_hash {
        return Err(field_err(
            "partition_hash",
            "does not match the embedded partition",
        ));
    }
    let variant =
        Variant::parse(&doc.variant).ok_or_else(|| field_err("variant", "unknown variant"))?;
    if doc.controller.len() != problem.n_control() {
        return Err(field_err(
            "controller",
            "one input per control cell expected",
        ));
    }
    if let Some(c) = doc
        .controller
        .iter()
        .position(|&i| i >= problem.system.n_inputs())
    {
        return Err(field_err(
            format!("controller[{c}]"),
            "input index out of range",
        ));
    }
    if doc.ranks.len() != problem.n_control() {
        return Err(field_err("ranks", "one rank per control cell expected"));
    }
    if let Some(&c) = doc.invariant_cells.iter().find(|&&c| c >= partition.len()) {
        return Err(field_err(
            "invariant_cells",
            format!("cell {c} out of range"),
        ));
    }
    Ok(Certificate {
        controller: Controller {
            table: doc.controller,
        },
        ranking: RankingFunction {
            ranks: doc.ranks,
            max_rank: doc.max_rank,
        },
        invariant_cells: doc.invariant_cells,
        variant,
        k: doc.k,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{full_vehicle_instance, gridworld, margin_instance, Layout};
    use crate::geometry::rational::frac;

    #[test]
    fn problems_round_trip() {
        for p in [gridworld(3, 2, Layout::Wall), margin_instance(frac(1, 7))] {
            let text = problem_to_json(&p);
            let back = problem_from_json(&text).unwrap();
            assert_eq!(back, p);
            assert_eq!(back.hash(), p.hash());
            assert_eq!(problem_to_json(&back), text);
        }
    }

    #[test]
    fn vehicle_round_trip() {
        let p = full_vehicle_instance();
        assert_eq!(problem_from_json(&problem_to_json(&p)).unwrap(), p);
    }

    #[test]
    fn diagnostics_name_fields() {
        let p = gridworld(2, 2, Layout::Open);
        let mut doc = problem_doc(&p);
        doc.system.locations[0].c[1] = "1/0".into();
        let text = serde_json::to_string(&doc).unwrap();
        let err = problem_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("system.locations[0].c[1]"), "{err}");

        let mut doc = problem_doc(&p);
        doc.goal[0].hi[0] = "1/2".into();
        let err = problem_from_json(&serde_json::to_string(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, IoError::Field { .. }), "{err}");

        assert!(matches!(problem_from_json("{"), Err(IoError::Json(_))));
        let missing = problem_from_json(r#"{"format":"reach-synth/1"}"#).unwrap_err();
        assert!(missing.to_string().contains("system"), "{missing}");
    }
}
