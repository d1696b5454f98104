use sha2::{Digest, Sha256};

use super::hyperrect::Coverage;
use super::rational::{format_scalar, int};
use super::{GeometryError, Hyperrect, Scalar};

pub type CellId = usize;

/// Bounding-volume hierarchy over cell boxes; queries return sorted ids.
#[derive(Debug, Clone)]
struct CellIndex {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Hyperrect,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(Vec<CellId>),
    Split(usize, usize),
}

const LEAF_SIZE: usize = 8;

impl CellIndex {
    fn build(cells: &[Hyperrect]) -> Self {
        let mut index = CellIndex { nodes: Vec::new() };
        let ids: Vec<CellId> = (0..cells.len()).collect();
        if !ids.is_empty() {
            index.build_node(cells, ids);
        }
        index
    }

    fn build_node(&mut self, cells: &[Hyperrect], mut ids: Vec<CellId>) -> usize {
        let bounds = hull(ids.iter().map(|&i| &cells[i]));
        let slot = self.nodes.len();
        if ids.len() <= LEAF_SIZE {
            self.nodes.push(Node {
                bounds,
                kind: NodeKind::Leaf(ids),
            });
            return slot;
        }
        self.nodes.push(Node {
            bounds: bounds.clone(),
            kind: NodeKind::Leaf(Vec::new()),
        });
        let axis = bounds.widest_axis();
        ids.sort_by(|&a, &b| {
            (&cells[a].lo()[axis] + &cells[a].hi()[axis])
                .cmp(&(&cells[b].lo()[axis] + &cells[b].hi()[axis]))
                .then(a.cmp(&b))
        });
        let right_ids = ids.split_off(ids.len() / 2);
        let left = self.build_node(cells, ids);
        let right = self.build_node(cells, right_ids);
        self.nodes[slot].kind = NodeKind::Split(left, right);
        slot
    }

    fn query(&self, cells: &[Hyperrect], probe: &Hyperrect, interior: bool) -> Vec<CellId> {
        let hit = |a: &Hyperrect, b: &Hyperrect| {
            if interior {
                a.overlaps_interior(b)
            } else {
                a.intersects(b)
            }
        };
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            // Interior overlap with a child cell implies closed overlap with the node hull.
            if !node.bounds.intersects(probe) {
                continue;
            }
            match &node.kind {
                NodeKind::Leaf(ids) => {
                    out.extend(ids.iter().copied().filter(|&i| hit(&cells[i], probe)))
                }
                NodeKind::Split(l, r) => {
                    stack.push(*l);
                    stack.push(*r);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn hull<'a>(mut boxes: impl Iterator<Item = &'a Hyperrect>) -> Hyperrect {
    let first = boxes.next().expect("nonempty").clone();
    boxes.fold(first, |acc, b| {
        let lo = acc
            .lo()
            .iter()
            .zip(b.lo())
            .map(|(x, y)| x.min(y).clone())
            .collect();
        let hi = acc
            .hi()
            .iter()
            .zip(b.hi())
            .map(|(x, y)| x.max(y).clone())
            .collect();
        Hyperrect::new(lo, hi).unwrap()
    })
}

/// Finite cover of `domain` by interior-disjoint closed boxes.
///
/// Cells live in a flat list. Splitting a cell keeps its id for the first
/// half and appends the second half, so ids of untouched cells survive
/// refinement; `parent` maps each cell to the id it came from in the
/// previous partition.
#[derive(Debug, Clone)]
pub struct Partition {
    domain: Hyperrect,
    cells: Vec<Hyperrect>,
    parent: Option<Vec<CellId>>,
    index: CellIndex,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.cells == other.cells && self.parent == other.parent
    }
}

impl Partition {
    /// Validates the cover: every cell full-dimensional and inside the
    /// domain, pairwise interior-disjoint, and volumes summing to the domain.
    pub fn new(domain: Hyperrect, cells: Vec<Hyperrect>) -> Result<Self, GeometryError> {
        let p = Partition::from_parts_unchecked(domain, cells, None);
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn from_parts_unchecked(
        domain: Hyperrect,
        cells: Vec<Hyperrect>,
        parent: Option<Vec<CellId>>,
    ) -> Self {
        let index = CellIndex::build(&cells);
        Partition {
            domain,
            cells,
            parent,
            index,
        }
    }

    pub fn with_parent(mut self, parent: Option<Vec<CellId>>) -> Self {
        self.parent = parent;
        self
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if self.cells.is_empty() {
            return Err(GeometryError::NotAPartition("no cells".into()));
        }
        let n = self.domain.dim();
        let mut total = int(0);
        for (i, c) in self.cells.iter().enumerate() {
            if c.dim() != n {
                return Err(GeometryError::DimensionMismatch {
                    expected: n,
                    found: c.dim(),
                });
            }
            if !c.is_full_dimensional() {
                return Err(GeometryError::NotAPartition(format!(
                    "cell {i} has zero width"
                )));
            }
            if !self.domain.contains(c) {
                return Err(GeometryError::NotAPartition(format!(
                    "cell {i} {c} leaves the domain"
                )));
            }
            total += c.volume();
        }
        for i in 0..self.cells.len() {
            let hits = self.index.query(&self.cells, &self.cells[i], true);
            if let Some(&j) = hits.iter().find(|&&j| j != i) {
                return Err(GeometryError::NotAPartition(format!(
                    "cells {i} and {j} overlap"
                )));
            }
        }
        if total != self.domain.volume() {
            return Err(GeometryError::NotAPartition(
                "cells do not cover the domain".into(),
            ));
        }
        Ok(())
    }

    /// Uniform grid with `counts[i]` slabs along axis `i`, cells in
    /// row-major order (last axis fastest).
    pub fn uniform(domain: &Hyperrect, counts: &[usize]) -> Result<Self, GeometryError> {
        if counts.len() != domain.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: domain.dim(),
                found: counts.len(),
            });
        }
        if counts.contains(&0) {
            return Err(GeometryError::NotAPartition("zero slab count".into()));
        }
        let mut cells = vec![(Vec::new(), Vec::new())];
        for (axis, &count) in counts.iter().enumerate() {
            let step = domain.width(axis) / int(count as i64);
            let mut next = Vec::with_capacity(cells.len() * count);
            for (lo, hi) in &cells {
                for k in 0..count {
                    let mut l: Vec<Scalar> = lo.clone();
                    let mut h: Vec<Scalar> = hi.clone();
                    l.push(&domain.lo()[axis] + &step * int(k as i64));
                    h.push(&domain.lo()[axis] + &step * int(k as i64 + 1));
                    next.push((l, h));
                }
            }
            cells = next;
        }
        let cells = cells
            .into_iter()
            .map(|(l, h)| Hyperrect::new(l, h))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Partition::from_parts_unchecked(domain.clone(), cells, None))
    }

    pub fn domain(&self) -> &Hyperrect {
        &self.domain
    }

    pub fn cells(&self) -> &[Hyperrect] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> &Hyperrect {
        &self.cells[id]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn parent(&self) -> Option<&[CellId]> {
        self.parent.as_deref()
    }

    /// Maximum ∞-norm diameter over cells.
    pub fn resolution(&self) -> Scalar {
        self.cells
            .iter()
            .map(|c| c.diameter())
            .max()
            .unwrap_or_else(|| int(0))
    }

    /// Cells meeting `probe` (closed test), ascending ids.
    pub fn cells_intersecting(&self, probe: &Hyperrect) -> Vec<CellId> {
        self.index.query(&self.cells, probe, false)
    }

    /// Cells whose interior meets the interior of `probe`, ascending ids.
    pub fn cells_overlapping(&self, probe: &Hyperrect) -> Vec<CellId> {
        self.index.query(&self.cells, probe, true)
    }

    /// Lowest-indexed cell containing `x`.
    pub fn locate(&self, x: &[Scalar]) -> Option<CellId> {
        let probe = Hyperrect::point(x.to_vec());
        self.cells_intersecting(&probe).first().copied()
    }

    /// The cell that contains `inner` entirely, if any.
    pub fn containing_cell(&self, inner: &Hyperrect) -> Option<CellId> {
        self.cells_intersecting(inner)
            .into_iter()
            .find(|&i| self.cells[i].contains(inner))
    }

    pub fn coverage_of(&self, id: CellId, set: &[Hyperrect]) -> Coverage {
        self.cells[id].coverage(set)
    }

    /// Every cell lies inside the union `set` or is interior-disjoint from it.
    pub fn preserves(&self, set: &[Hyperrect]) -> bool {
        self.cells
            .iter()
            .all(|c| c.coverage(set) != Coverage::Straddles)
    }

    /// Each cell of `self` fits inside some cell of `coarse`.
    pub fn subsumes(&self, coarse: &Partition) -> bool {
        self.cells
            .iter()
            .all(|c| coarse.containing_cell(c).is_some())
    }

    /// Bisects one cell on `axis`; the lineage map of the result points
    /// back into `self`.
    pub fn split_cell(&self, id: CellId, axis: usize) -> Result<Partition, GeometryError> {
        self.split_cells(&[(id, axis)])
    }

    /// Bisects several distinct cells at once.
    pub fn split_cells(&self, splits: &[(CellId, usize)]) -> Result<Partition, GeometryError> {
        let mut cells = self.cells.clone();
        let mut parent: Vec<CellId> = (0..cells.len()).collect();
        let mut seen = vec![false; cells.len()];
        for &(id, axis) in splits {
            if id >= self.cells.len() {
                return Err(GeometryError::UnknownCell(id));
            }
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            let (left, right) = self.cells[id].bisect(axis)?;
            cells[id] = left;
            cells.push(right);
            parent.push(id);
        }
        Ok(Partition::from_parts_unchecked(
            self.domain.clone(),
            cells,
            Some(parent),
        ))
    }

    /// Splits the given cells on their widest axes.
    pub fn split_widest(&self, ids: &[CellId]) -> Result<Partition, GeometryError> {
        let splits: Vec<(CellId, usize)> = ids
            .iter()
            .map(|&id| (id, self.cells[id].widest_axis()))
            .collect();
        self.split_cells(&splits)
    }

    /// SHA-256 over the canonical text of domain and cells.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(canonical_box(&self.domain));
        for c in &self.cells {
            h.update(b";");
            h.update(canonical_box(c));
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn canonical_box(b: &Hyperrect) -> String {
    let lo: Vec<String> = b.lo().iter().map(format_scalar).collect();
    let hi: Vec<String> = b.hi().iter().map(format_scalar).collect();
    format!("{}|{}", lo.join(","), hi.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rational::frac;

    fn unit() -> Hyperrect {
        Hyperrect::from_bounds(&[(int(0), int(1))])
    }

    fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
        Hyperrect::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn uniform_grid_is_valid() {
        let dom = Hyperrect::from_bounds(&[(int(0), int(2)), (int(0), int(3))]);
        let p = Partition::uniform(&dom, &[2, 3]).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.validate().is_ok());
        assert_eq!(p.resolution(), int(1));
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let gap = Partition::new(unit(), vec![seg(int(0), frac(1, 2))]);
        assert!(gap.is_err());
        let overlap = Partition::new(
            unit(),
            vec![seg(int(0), frac(3, 4)), seg(frac(1, 2), int(1))],
        );
        assert!(overlap.is_err());
    }

    #[test]
    fn preserves_examples() {
        let p = Partition::uniform(&unit(), &[4]).unwrap();
        assert!(p.preserves(&[seg(int(0), frac(1, 2))]));
        assert!(!p.preserves(&[seg(int(0), frac(3, 10))]));
        assert!(p.preserves(&[unit()]));
    }

    #[test]
    fn subsumes_examples() {
        let four = Partition::uniform(&unit(), &[4]).unwrap();
        let two = Partition::uniform(&unit(), &[2]).unwrap();
        assert!(four.subsumes(&two));
        assert!(!two.subsumes(&four));
        let third = Partition::new(
            unit(),
            vec![seg(int(0), frac(1, 3)), seg(frac(1, 3), int(1))],
        )
        .unwrap();
        assert!(!third.subsumes(&two));
    }

    #[test]
    fn split_examples() {
        let dom = Hyperrect::from_bounds(&[(int(0), int(1)), (int(0), int(1))]);
        let p = Partition::uniform(&dom, &[1, 1]).unwrap();
        let q = p.split_cell(0, 0).unwrap();
        assert_eq!(
            q.cell(0),
            &Hyperrect::from_bounds(&[(int(0), frac(1, 2)), (int(0), int(1))])
        );
        assert_eq!(
            q.cell(1),
            &Hyperrect::from_bounds(&[(frac(1, 2), int(1)), (int(0), int(1))])
        );
        assert_eq!(q.parent(), Some(&[0, 0][..]));
        assert!(q.subsumes(&p));
        assert!(q.resolution() <= p.resolution());
        assert!(q.validate().is_ok());
    }

    #[test]
    fn widest_split_halves_cube_resolution() {
        let dom = Hyperrect::from_bounds(&[(int(0), int(1)), (int(0), int(1))]);
        let p = Partition::uniform(&dom, &[2, 2]).unwrap();
        let all: Vec<CellId> = (0..p.len()).collect();
        let once = p.split_widest(&all).unwrap();
        assert_eq!(once.resolution(), frac(1, 2));
        let all: Vec<CellId> = (0..once.len()).collect();
        let twice = once.split_widest(&all).unwrap();
        assert_eq!(twice.resolution(), frac(1, 4));
    }

    #[test]
    fn split_rejects_degenerate_axis() {
        let p = Partition::uniform(&unit(), &[2]).unwrap();
        assert!(p.split_cell(0, 1).is_err());
        assert!(p.split_cell(9, 0).is_err());
    }

    #[test]
    fn locate_prefers_lowest_index() {
        let p = Partition::uniform(&unit(), &[2]).unwrap();
        assert_eq!(p.locate(&[frac(1, 2)]), Some(0));
        assert_eq!(p.locate(&[frac(3, 4)]), Some(1));
        assert_eq!(p.locate(&[int(2)]), None);
    }

    #[test]
    fn hash_is_stable_and_discriminating() {
        let a = Partition::uniform(&unit(), &[2]).unwrap();
        let b = Partition::uniform(&unit(), &[2]).unwrap();
        let c = Partition::uniform(&unit(), &[4]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
