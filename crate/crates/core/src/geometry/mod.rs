//! Exact axis-aligned boxes, parallelotopes, partitions and the set
//! predicates the rest of the crate is built on.
//!
//! All arithmetic is over arbitrary-precision rationals. Sets are closed;
//! partition cells overlap only on measure-zero faces.

use thiserror::Error;

mod cover;
mod hyperrect;
pub mod lp;
mod parallelotope;
mod partition;
pub mod rational;

pub use cover::box_covered_by;
pub use hyperrect::{Coverage, Hyperrect};
pub use parallelotope::{affine_image, invert, mat_vec, Contact, Matrix, Parallelotope};
pub(crate) use partition::canonical_box;
pub use partition::{CellId, Partition};
pub use rational::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("box must have at least one dimension")]
    EmptyDimension,
    #[error("lower bound exceeds upper bound on axis {axis}")]
    InvertedBounds { axis: usize },
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("cannot bisect zero-width axis {axis}")]
    DegenerateSplit { axis: usize },
    #[error("unknown cell {0}")]
    UnknownCell(usize),
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("malformed rational {0:?}")]
    BadScalar(String),
}

/// `intersects(p, b)`: closed sets share a point.
pub fn intersects(p: &Parallelotope, b: &Hyperrect) -> bool {
    p.intersects(b)
}

/// `contains(p, b)`: `b ⊆ p`, decided on the vertices of `b`.
pub fn contains(p: &Parallelotope, b: &Hyperrect) -> bool {
    p.contains_box(b)
}

pub fn preserves(p: &Partition, s: &[Hyperrect]) -> bool {
    p.preserves(s)
}

pub fn subsumes(fine: &Partition, coarse: &Partition) -> bool {
    fine.subsumes(coarse)
}

pub fn split_cell(p: &Partition, cell: CellId, axis: usize) -> Result<Partition, GeometryError> {
    p.split_cell(cell, axis)
}
