//! Exact integer quasi-affine map algebra over bounded boxes.
//!
//! Maps are immutable values; every operation here is a pure function.

mod domain;
mod expr;
mod inverse;
mod map;

pub use domain::{ImageSet, IntBox, Points, MAX_BOX_POINTS};
pub use expr::{DivTerm, LinearExpr, NestingTooDeep, QuasiAffineExpr};
pub use inverse::{InverseResult, PointTable};
pub use map::{classify, compose, Classification, QuasiAffineMap, StructuralClass};

use thiserror::Error;

/// Default cap on the number of points enumerated for tables and images.
pub const DEFAULT_TABULATION_LIMIT: u64 = 1 << 20;

/// Enumeration budget for operations that fall back to point tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub tabulation: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { tabulation: DEFAULT_TABULATION_LIMIT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffineError {
    #[error("bound {lo}..{hi} on dimension {dim} is inverted")]
    InvalidBound { dim: usize, lo: i64, hi: i64 },
    #[error("box has {0} points, above the 2^40 cap")]
    BoxTooLarge(u128),
    #[error("point {point:?} is outside the map domain")]
    PointOutsideDomain { point: Vec<i64> },
    #[error("expected {expected} dimensions, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("outer map takes {outer_dims} indices but inner map produces {inner_outputs}")]
    ArityMismatch { outer_dims: usize, inner_outputs: usize },
    #[error("inner map sends {point:?} to {image:?}, outside the outer domain")]
    ImageEscapesDomain { point: Vec<i64>, image: Vec<i64> },
    #[error("domain of {points} points exceeds the enumeration limit of {limit}")]
    DomainTooLarge { points: u64, limit: u64 },
}
