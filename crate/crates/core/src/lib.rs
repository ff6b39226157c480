//! Global memory-access optimizations for tensor programs expressed as
//! loop nests with quasi-affine accesses.

pub mod affine;
pub mod ir;
pub mod frontend;
pub mod interp;
pub mod par;
pub mod dme;
pub mod bankmap;
pub mod traffic;
