//! One-step images of cells and the partition-relative over/under
//! approximations, materialized as successor tables.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{
    affine_image, box_covered_by, CellId, Coverage, GeometryError, Hyperrect, Parallelotope,
    Partition,
};
use crate::model::{Controller, PiecewiseAffineSystem, Problem};

/// Sentinel successor standing for everything outside the state space.
pub const OUT: CellId = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PostError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("input index {0} out of range")]
    BadInput(usize),
    #[error("cell {0} is not inside a single control cell")]
    NotPreserved(CellId),
    #[error("table was built for a different partition")]
    StaleTable,
}

/// Exact image of a cell, one piece per location the cell overlaps.
#[derive(Debug, Clone)]
pub struct SplitPost {
    pub pieces: Vec<(Hyperrect, Parallelotope)>,
}

impl SplitPost {
    pub fn images(&self) -> Vec<Parallelotope> {
        self.pieces.iter().map(|(_, p)| p.clone()).collect()
    }
}

pub fn exact_post(
    sys: &PiecewiseAffineSystem,
    cell: &Hyperrect,
    input: usize,
) -> Result<SplitPost, PostError> {
    let u = sys.inputs().get(input).ok_or(PostError::BadInput(input))?;
    let invariants = sys.invariant_partition();
    let mut locs = invariants.cells_overlapping(cell);
    if locs.is_empty() {
        locs = invariants
            .cells_intersecting(cell)
            .into_iter()
            .take(1)
            .collect();
    }
    let mut pieces = Vec::with_capacity(locs.len());
    for l in locs {
        let loc = &sys.locations()[l];
        let sub = cell
            .intersection(&loc.invariant)
            .expect("overlapping boxes intersect");
        let image = affine_image(&sub, loc.dynamics.a(), &loc.dynamics.offset(u))?;
        pieces.push((sub, image));
    }
    Ok(SplitPost { pieces })
}

fn over_of(partition: &Partition, images: &[Parallelotope]) -> Vec<CellId> {
    let mut out = BTreeSet::new();
    for image in images {
        let bbox = image.bounding_box();
        if image.is_degenerate() {
            for q in partition.cells_intersecting(&bbox) {
                if image.intersects(partition.cell(q)) {
                    out.insert(q);
                }
            }
        } else {
            for q in partition.cells_overlapping(&bbox) {
                if image.overlaps_interior(partition.cell(q)) {
                    out.insert(q);
                }
            }
        }
        if !partition.domain().contains(&bbox) {
            out.insert(OUT);
        }
    }
    out.into_iter().collect()
}

fn under_of(partition: &Partition, images: &[Parallelotope]) -> Vec<CellId> {
    let mut out = BTreeSet::new();
    for image in images.iter().filter(|p| !p.is_degenerate()) {
        for q in partition.cells_overlapping(&image.bounding_box()) {
            if out.contains(&q) {
                continue;
            }
            let cell = partition.cell(q);
            if image.contains_box(cell) {
                out.insert(q);
                continue;
            }
            let touching: Vec<Parallelotope> = images
                .iter()
                .filter(|p| p.overlaps_interior(cell))
                .cloned()
                .collect();
            if touching.len() > 1 && box_covered_by(cell, &touching) {
                out.insert(q);
            }
        }
    }
    // The image is exact, so leaving the domain is certain, not possible.
    if images
        .iter()
        .any(|p| !partition.domain().contains(&p.bounding_box()))
    {
        out.insert(OUT);
    }
    out.into_iter().collect()
}

/// Cells meeting the exact image of `cell` (interior overlap for
/// full-dimensional images), plus [`OUT`] if the image leaves the domain.
pub fn over_post(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cell: CellId,
    input: usize,
) -> Result<Vec<CellId>, PostError> {
    let post = exact_post(sys, partition.cell(cell), input)?;
    Ok(over_of(partition, &post.images()))
}

/// Cells contained in the exact image of `cell`, plus [`OUT`] if the
/// image leaves the domain.
pub fn under_post(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cell: CellId,
    input: usize,
) -> Result<Vec<CellId>, PostError> {
    let post = exact_post(sys, partition.cell(cell), input)?;
    Ok(under_of(partition, &post.images()))
}

/// Set-level over-post of a union of cells, each stepping with its own input.
pub fn over_post_set(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cells: &[CellId],
    input_of: impl Fn(CellId) -> usize,
) -> Result<Vec<CellId>, PostError> {
    let images = images_of(sys, partition, cells, input_of)?;
    Ok(over_of(partition, &images))
}

/// Set-level under-post: cells contained in the union of the images.
pub fn under_post_set(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cells: &[CellId],
    input_of: impl Fn(CellId) -> usize,
) -> Result<Vec<CellId>, PostError> {
    let images = images_of(sys, partition, cells, input_of)?;
    Ok(under_of(partition, &images))
}

fn images_of(
    sys: &PiecewiseAffineSystem,
    partition: &Partition,
    cells: &[CellId],
    input_of: impl Fn(CellId) -> usize,
) -> Result<Vec<Parallelotope>, PostError> {
    let mut images = Vec::new();
    for &c in cells {
        images.extend(exact_post(sys, partition.cell(c), input_of(c))?.images());
    }
    Ok(images)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRole {
    pub init: bool,
    pub safe: bool,
    pub goal: bool,
}

/// Over/under successor sets for every (cell, input) pair.
///
/// Rows are indexed `[cell][input]`; each set is sorted, with [`OUT`] last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessorTable {
    pub partition_hash: String,
    pub n_inputs: usize,
    pub over: Vec<Vec<Vec<CellId>>>,
    pub under: Vec<Vec<Vec<CellId>>>,
    pub cell_control: Vec<CellId>,
    pub cell_location: Vec<usize>,
    pub roles: Vec<CellRole>,
}

type Row = (Vec<Vec<CellId>>, Vec<Vec<CellId>>, usize);

fn row(sys: &PiecewiseAffineSystem, partition: &Partition, cell: CellId) -> Result<Row, PostError> {
    let mut over = Vec::with_capacity(sys.n_inputs());
    let mut under = Vec::with_capacity(sys.n_inputs());
    let mut location = 0;
    for i in 0..sys.n_inputs() {
        let post = exact_post(sys, partition.cell(cell), i)?;
        if i == 0 {
            location = post
                .pieces
                .first()
                .and_then(|(sub, _)| sys.invariant_partition().containing_cell(sub))
                .unwrap_or(0);
        }
        let images = post.images();
        over.push(over_of(partition, &images));
        under.push(under_of(partition, &images));
    }
    Ok((over, under, location))
}

fn roles_and_control(
    problem: &Problem,
    partition: &Partition,
    cell: CellId,
) -> Result<(CellRole, CellId), PostError> {
    let b = partition.cell(cell);
    let control = problem
        .control
        .containing_cell(b)
        .ok_or(PostError::NotPreserved(cell))?;
    let role = CellRole {
        init: b.coverage(&problem.init) == Coverage::Inside,
        safe: b.coverage(&problem.safe) == Coverage::Inside,
        goal: b.coverage(&problem.goal) == Coverage::Inside,
    };
    Ok((role, control))
}

impl SuccessorTable {
    pub fn n_cells(&self) -> usize {
        self.over.len()
    }

    pub fn is_goal(&self, cell: CellId) -> bool {
        cell != OUT && self.roles[cell].goal
    }

    /// `true` iff every over row equals its under row, i.e. each exact
    /// image inside the domain is a union of cells.
    pub fn is_exact(&self) -> bool {
        self.misaligned_rows().is_empty()
    }

    pub fn misaligned_rows(&self) -> Vec<(CellId, usize)> {
        let mut out = Vec::new();
        for (p, (over, under)) in self.over.iter().zip(&self.under).enumerate() {
            for (i, (o, u)) in over.iter().zip(under).enumerate() {
                if o != u {
                    out.push((p, i));
                }
            }
        }
        out
    }

    fn successors(&self, over: bool, cell: CellId, input: usize) -> &[CellId] {
        if over {
            &self.over[cell][input]
        } else {
            &self.under[cell][input]
        }
    }

    fn k_step(&self, over: bool, controller: &Controller, cell: CellId, k: usize) -> Vec<CellId> {
        let mut frontier: BTreeSet<CellId> = BTreeSet::from([cell]);
        for _ in 0..k {
            let mut next = BTreeSet::new();
            for &c in &frontier {
                if c == OUT || self.is_goal(c) {
                    next.insert(c);
                    continue;
                }
                let input = controller.input_for(self.cell_control[c]);
                next.extend(self.successors(over, c, input).iter().copied());
            }
            frontier = next;
        }
        frontier.into_iter().collect()
    }
}

/// Builds the full table; rows are computed in parallel and merged in
/// cell order, so the result does not depend on the thread count.
pub fn build_table(problem: &Problem, partition: &Partition) -> Result<SuccessorTable, PostError> {
    let sys = &problem.system;
    let rows: Vec<Row> = (0..partition.len())
        .into_par_iter()
        .map(|c| row(sys, partition, c))
        .collect::<Result<_, _>>()?;
    assemble(problem, partition, rows)
}

fn assemble(
    problem: &Problem,
    partition: &Partition,
    rows: Vec<Row>,
) -> Result<SuccessorTable, PostError> {
    let mut over = Vec::with_capacity(rows.len());
    let mut under = Vec::with_capacity(rows.len());
    let mut cell_location = Vec::with_capacity(rows.len());
    for (o, u, l) in rows {
        over.push(o);
        under.push(u);
        cell_location.push(l);
    }
    let (roles, cell_control) = (0..partition.len())
        .map(|c| roles_and_control(problem, partition, c))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .unzip();
    Ok(SuccessorTable {
        partition_hash: partition.hash(),
        n_inputs: problem.system.n_inputs(),
        over,
        under,
        cell_control,
        cell_location,
        roles,
    })
}

/// Rebuilds a table after one round of splitting.
///
/// `refined` must carry a lineage map into `old_partition`. Rows are
/// recomputed for split cells and for cells whose over row mentions a
/// split cell; every other row is copied.
pub fn rebuild_table(
    problem: &Problem,
    old: &SuccessorTable,
    old_partition: &Partition,
    refined: &Partition,
) -> Result<SuccessorTable, PostError> {
    if old.partition_hash != old_partition.hash() {
        return Err(PostError::StaleTable);
    }
    let Some(parent) = refined.parent() else {
        return build_table(problem, refined);
    };
    let n_old = old_partition.len();
    let mut split = vec![false; n_old];
    for &p in &parent[n_old..] {
        split[p] = true;
    }
    let sys = &problem.system;
    let rows: Vec<Row> = (0..refined.len())
        .into_par_iter()
        .map(|c| {
            let stale = c >= n_old
                || split[c]
                || old.over[c]
                    .iter()
                    .any(|set| set.iter().any(|&q| q != OUT && split[q]));
            if stale {
                row(sys, refined, c)
            } else {
                Ok((
                    old.over[c].clone(),
                    old.under[c].clone(),
                    old.cell_location[c],
                ))
            }
        })
        .collect::<Result<_, _>>()?;
    assemble(problem, refined, rows)
}

/// Composition of one-step over sets under `controller`; goal cells and
/// [`OUT`] are absorbing.
pub fn k_step_over(
    table: &SuccessorTable,
    controller: &Controller,
    cell: CellId,
    k: usize,
) -> Vec<CellId> {
    table.k_step(true, controller, cell, k)
}

/// Composition of one-step under sets; goal cells are absorbing.
pub fn k_step_under(
    table: &SuccessorTable,
    controller: &Controller,
    cell: CellId,
    k: usize,
) -> Vec<CellId> {
    table.k_step(false, controller, cell, k)
}

/// Cache key for a table: problem plus partition.
pub fn table_key(problem: &Problem, partition: &Partition) -> String {
    let mut h = Sha256::new();
    h.update(problem.hash());
    h.update(partition.hash());
    hex::encode(h.finalize())
}

/// [`build_table`] backed by a JSON cache directory.
pub fn build_table_cached(
    problem: &Problem,
    partition: &Partition,
    cache_dir: &Path,
) -> Result<SuccessorTable, PostError> {
    let path = cache_dir.join(format!("{}.json", table_key(problem, partition)));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(table) = serde_json::from_str::<SuccessorTable>(&text) {
            if table.partition_hash == partition.hash() {
                return Ok(table);
            }
        }
    }
    let table = build_table(problem, partition)?;
    if fs::create_dir_all(cache_dir).is_ok() {
        if let Ok(text) = serde_json::to_string(&table) {
            let _ = fs::write(&path, text);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::{frac, int};
    use crate::geometry::Scalar;
    use crate::model::{
        single_location, translation_dynamics, AffineDynamics, Location, PiecewiseAffineSystem,
    };

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    fn shift_system(inputs: &[Scalar]) -> PiecewiseAffineSystem {
        single_location(
            seg(int(0), int(1)),
            seg(int(-1), int(1)),
            inputs.iter().map(|u| vec![u.clone()]).collect(),
            translation_dynamics(1),
        )
        .unwrap()
    }

    fn quarters() -> Partition {
        Partition::uniform(&seg(int(0), int(1)), &[4]).unwrap()
    }

    #[test]
    fn shifted_quarter() {
        let sys = shift_system(&[frac(3, 10)]);
        let p = quarters();
        let post = exact_post(&sys, p.cell(0), 0).unwrap();
        assert_eq!(post.pieces.len(), 1);
        assert_eq!(
            post.pieces[0].1.bounding_box(),
            seg(frac(3, 10), frac(11, 20))
        );
        assert_eq!(over_post(&sys, &p, 0, 0).unwrap(), vec![1, 2]);
        assert!(under_post(&sys, &p, 0, 0).unwrap().is_empty());
    }

    #[test]
    fn identity_maps_cell_to_itself() {
        let sys = shift_system(&[int(0)]);
        let p = quarters();
        let post = exact_post(&sys, p.cell(2), 0).unwrap();
        assert_eq!(post.pieces[0].1.bounding_box(), *p.cell(2));
        assert_eq!(over_post(&sys, &p, 2, 0).unwrap(), vec![2]);
        assert_eq!(under_post(&sys, &p, 2, 0).unwrap(), vec![2]);
    }

    #[test]
    fn overflow_reports_out() {
        let sys = shift_system(&[frac(1, 5)]);
        let p = quarters();
        // [3/4, 1] + 1/5 = [0.95, 1.2]
        assert_eq!(over_post(&sys, &p, 3, 0).unwrap(), vec![3, OUT]);
        assert_eq!(under_post(&sys, &p, 3, 0).unwrap(), vec![OUT]);
    }

    #[test]
    fn expansion_covers_everything() {
        let sys = single_location(
            seg(int(0), int(1)),
            seg(int(0), int(0)),
            vec![vec![int(0)]],
            AffineDynamics::new(vec![vec![int(2)]], vec![vec![int(0)]], vec![int(0)]).unwrap(),
        )
        .unwrap();
        let p = Partition::new(
            seg(int(0), int(1)),
            vec![seg(int(0), frac(1, 2)), seg(frac(1, 2), int(1))],
        )
        .unwrap();
        let q = quarters();
        let image = exact_post(&sys, p.cell(0), 0).unwrap().images();
        assert_eq!(under_of(&q, &image), vec![0, 1, 2, 3]);
    }

    #[test]
    fn straddling_cell_splits_by_location() {
        let loc = |lo, hi, a: i64| Location {
            invariant: seg(lo, hi),
            dynamics: AffineDynamics::new(vec![vec![int(a)]], vec![vec![int(0)]], vec![int(0)])
                .unwrap(),
        };
        let sys = PiecewiseAffineSystem::new(
            seg(int(0), int(2)),
            seg(int(0), int(0)),
            vec![vec![int(0)]],
            vec![loc(int(0), int(1), 1), loc(int(1), int(2), -1)],
        )
        .unwrap();
        let post = exact_post(&sys, &seg(frac(1, 2), frac(3, 2)), 0).unwrap();
        assert_eq!(post.pieces.len(), 2);
        assert_eq!(post.pieces[0].0, seg(frac(1, 2), int(1)));
        assert_eq!(post.pieces[1].1.bounding_box(), seg(frac(-3, 2), int(-1)));
    }

    fn conveyor() -> Problem {
        let sys = shift_system(&[frac(1, 3), int(0)]);
        let control = Partition::uniform(&seg(int(0), int(1)), &[3]).unwrap();
        Problem::new(
            sys,
            control,
            vec![seg(int(0), frac(1, 3))],
            vec![seg(int(0), int(1))],
            vec![seg(frac(2, 3), int(1))],
            1,
            None,
        )
    }

    #[test]
    fn table_rows_match_single_queries() {
        let problem = conveyor();
        let p = problem.control.clone();
        let t = build_table(&problem, &p).unwrap();
        assert_eq!(t.n_cells(), 3);
        assert_eq!(t.over[0].len(), 2);
        for c in 0..3 {
            for i in 0..2 {
                assert_eq!(t.over[c][i], over_post(&problem.system, &p, c, i).unwrap());
                assert_eq!(
                    t.under[c][i],
                    under_post(&problem.system, &p, c, i).unwrap()
                );
            }
        }
        assert!(t.is_exact());
        assert_eq!(t.cell_control, vec![0, 1, 2]);
        assert!(t.roles[2].goal && t.roles[0].init);
    }

    #[test]
    fn k_step_composes_with_absorbing_goal() {
        let problem = conveyor();
        let t = build_table(&problem, &problem.control).unwrap();
        let forward = Controller {
            table: vec![0, 0, 0],
        };
        assert_eq!(k_step_over(&t, &forward, 0, 1), t.over[0][0]);
        assert_eq!(k_step_over(&t, &forward, 0, 2), vec![2]);
        assert_eq!(k_step_under(&t, &forward, 0, 2), vec![2]);
        for k in 1..4 {
            assert_eq!(k_step_over(&t, &forward, 2, k), vec![2]);
        }
        let stay = Controller {
            table: vec![1, 1, 1],
        };
        let p = Partition::uniform(&seg(int(0), int(1)), &[6]).unwrap();
        let fine = build_table(&problem, &p).unwrap();
        assert!(k_step_under(&fine, &stay, 0, 1).contains(&0));
    }

    #[test]
    fn rebuild_matches_full_build() {
        let sys = shift_system(&[frac(3, 10), frac(-1, 7)]);
        let control = quarters();
        let problem = Problem::new(
            sys,
            control.clone(),
            vec![seg(int(0), frac(1, 4))],
            vec![seg(int(0), int(1))],
            vec![seg(frac(3, 4), int(1))],
            1,
            None,
        );
        let t = build_table(&problem, &control).unwrap();
        let refined = control.split_widest(&[1, 3]).unwrap();
        let incremental = rebuild_table(&problem, &t, &control, &refined).unwrap();
        assert_eq!(incremental, build_table(&problem, &refined).unwrap());
        // Row 0 did not mention a split cell under input 1 ([0,1/4]-1/7 → {0, OUT}).
        assert_eq!(incremental.over[0][1], t.over[0][1]);
    }

    #[test]
    fn cache_round_trip() {
        let problem = conveyor();
        let dir = tempfile::tempdir().unwrap();
        let a = build_table_cached(&problem, &problem.control, dir.path()).unwrap();
        let b = build_table_cached(&problem, &problem.control, dir.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn set_level_under_sees_union() {
        // x⁺ = 2x + 1/4 on [0,3]: the halves of [0,1] jointly cover [1, 3/2].
        let sys = single_location(
            seg(int(0), int(3)),
            seg(int(0), int(0)),
            vec![vec![int(0)]],
            AffineDynamics::new(vec![vec![int(2)]], vec![vec![int(0)]], vec![frac(1, 4)]).unwrap(),
        )
        .unwrap();
        let p = Partition::uniform(&seg(int(0), int(3)), &[6]).unwrap();
        let set = under_post_set(&sys, &p, &[0, 1], |_| 0).unwrap();
        assert!(set.contains(&2));
        let cellwise: BTreeSet<CellId> = [0, 1]
            .iter()
            .flat_map(|&c| under_post(&sys, &p, c, 0).unwrap())
            .collect();
        assert!(!cellwise.contains(&2));
    }
}
