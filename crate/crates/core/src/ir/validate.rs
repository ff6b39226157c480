use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{Location, OperatorNest, Origin, Program, Statement};
use crate::affine::{IntBox, Limits, QuasiAffineMap};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViolationKind {
    #[error("tensor %{0} is declared more than once")]
    DuplicateTensor(String),
    #[error("tensor %{0} has a non-positive extent")]
    InvalidShape(String),
    #[error("tensor %{0} has element size 0")]
    ZeroElementSize(String),
    #[error("bank mapping of %{tensor} uses axis {axis} but the tensor has rank {rank}")]
    BankAxisOutOfRange { tensor: String, axis: usize, rank: usize },
    #[error("bank mapping of %{0} has zero banks")]
    ZeroBanks(String),
    #[error("nest name {0} is used more than once")]
    DuplicateNest(String),
    #[error("nest body is empty")]
    EmptyBody,
    #[error("tensor %{0} is not declared")]
    UndefinedTensor(String),
    #[error("value %{0} is used before it is defined")]
    UndefinedValue(String),
    #[error("value %{0} is defined more than once")]
    RedefinedValue(String),
    #[error("opcode {op} takes {expected} operands, found {found}")]
    OperandCount { op: String, expected: usize, found: usize },
    #[error("access to %{tensor} is not defined over the nest's loop box")]
    DomainMismatch { tensor: String },
    #[error("access to %{tensor} produces {found} indices for a rank-{expected} tensor")]
    RankMismatch { tensor: String, expected: usize, found: usize },
    #[error("access to %{tensor} leaves its shape{}", witness_text(.witness))]
    OutOfBoundsAccess { tensor: String, witness: Option<(Vec<i64>, Vec<i64>)> },
    #[error("memcopy into %{tensor} must iterate exactly its shape")]
    MemcopyShape { tensor: String },
    #[error("model input %{0} is written")]
    StoreToInput(String),
    #[error("tensor %{0} is written by more than one nest")]
    MultipleProducers(String),
    #[error("tensor %{0} is read before any earlier nest writes it")]
    ReadBeforeWrite(String),
    #[error("model output %{0} is never written")]
    OutputNeverWritten(String),
}

fn witness_text(w: &Option<(Vec<i64>, Vec<i64>)>) -> String {
    match w {
        Some((p, idx)) => format!(" at loop point {p:?} (index {idx:?})"),
        None => " (could not be proven in bounds)".to_string(),
    }
}

/// A broken invariant, located by nest name and statement index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub nest: Option<String>,
    pub statement: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.nest, self.statement) {
            (Some(n), Some(s)) => write!(f, "nest {n}, statement {s}: {}", self.kind),
            (Some(n), None) => write!(f, "nest {n}: {}", self.kind),
            _ => write!(f, "{}", self.kind),
        }
    }
}

/// A loop point and the out-of-range index it produces.
pub type Witness = (Vec<i64>, Vec<i64>);

/// Checks that every point of `map`'s domain lands inside `shape`.
/// `Err(Some((point, index)))` names a witness; `Err(None)` means the bound
/// could not be established within the enumeration limit.
pub fn access_in_bounds(map: &QuasiAffineMap, shape: &IntBox) -> Result<(), Option<Witness>> {
    if map.domain().is_empty() {
        return Ok(());
    }
    let proven = map
        .output_bounds()
        .iter()
        .enumerate()
        .all(|(k, &(l, h))| shape.lo(k) <= l && h < shape.hi(k));
    if proven {
        return Ok(());
    }
    if map.domain().cardinality() > Limits::default().tabulation {
        return Err(None);
    }
    let mut out = vec![0; map.out_dims()];
    let mut witness = None;
    map.domain().for_each_point(|p| {
        if witness.is_none() {
            map.evaluate_into(p, &mut out);
            if !shape.contains(&out) {
                witness = Some((p.to_vec(), out.clone()));
            }
        }
    });
    witness.map_or(Ok(()), |w| Err(Some(w)))
}

/// Returns every invariant violation; an empty list means the program is
/// well formed.
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    let global = |kind| Violation { nest: None, statement: None, kind };

    let mut shapes: HashMap<&str, Option<IntBox>> = HashMap::new();
    for t in &program.tensors {
        if shapes.contains_key(t.name.as_str()) {
            out.push(global(ViolationKind::DuplicateTensor(t.name.clone())));
            continue;
        }
        let shape = if t.shape.iter().any(|&e| e < 1) {
            out.push(global(ViolationKind::InvalidShape(t.name.clone())));
            None
        } else {
            IntBox::from_extents(&t.shape).ok()
        };
        if t.elem_size == 0 {
            out.push(global(ViolationKind::ZeroElementSize(t.name.clone())));
        }
        if let Location::OnChip(Some(m)) = t.location {
            if m.axis >= t.rank() {
                out.push(global(ViolationKind::BankAxisOutOfRange { tensor: t.name.clone(), axis: m.axis, rank: t.rank() }));
            }
            if m.banks == 0 {
                out.push(global(ViolationKind::ZeroBanks(t.name.clone())));
            }
        }
        shapes.insert(&t.name, shape);
    }

    // Body checks are independent per nest; the bounds enumeration dominates.
    let mut bodies = par::map_slice(&program.nests, |nest| check_body(nest, &shapes));
    let mut nest_names = HashSet::new();
    let mut produced_by: HashMap<&str, usize> = HashMap::new();
    for (ni, nest) in program.nests.iter().enumerate() {
        let at = |s: Option<usize>, kind| Violation { nest: Some(nest.name.clone()), statement: s, kind };
        if !nest_names.insert(nest.name.as_str()) {
            out.push(at(None, ViolationKind::DuplicateNest(nest.name.clone())));
        }
        if nest.body.is_empty() {
            out.push(at(None, ViolationKind::EmptyBody));
        }

        out.append(&mut bodies[ni]);

        for t in nest.reads() {
            let Some(decl) = program.tensor(t) else { continue };
            let earlier = produced_by.get(t).is_some_and(|&p| p < ni);
            if !decl.origin.is_input() && !earlier {
                out.push(at(None, ViolationKind::ReadBeforeWrite(t.to_string())));
            }
        }
        for t in nest.writes() {
            let Some(decl) = program.tensor(t) else { continue };
            if decl.origin.is_input() {
                out.push(at(None, ViolationKind::StoreToInput(t.to_string())));
            }
            if produced_by.insert(t, ni).is_some() {
                out.push(at(None, ViolationKind::MultipleProducers(t.to_string())));
            }
        }
    }

    for t in &program.tensors {
        if t.origin == Origin::ModelOutput && !produced_by.contains_key(t.name.as_str()) {
            out.push(global(ViolationKind::OutputNeverWritten(t.name.clone())));
        }
    }
    out
}

/// Access, value and operand checks local to one nest body.
fn check_body(nest: &OperatorNest, shapes: &HashMap<&str, Option<IntBox>>) -> Vec<Violation> {
    let mut out = Vec::new();
    let at = |s: Option<usize>, kind| Violation { nest: Some(nest.name.clone()), statement: s, kind };
    let mut values: HashSet<&str> = HashSet::new();
    let check_access = |out: &mut Vec<Violation>, si: usize, tensor: &str, map: &QuasiAffineMap| {
        let Some(shape) = shapes.get(tensor) else {
            out.push(at(Some(si), ViolationKind::UndefinedTensor(tensor.to_string())));
            return;
        };
        if map.domain() != &nest.domain {
            out.push(at(Some(si), ViolationKind::DomainMismatch { tensor: tensor.to_string() }));
            return;
        }
        let Some(shape) = shape else { return };
        if map.out_dims() != shape.dims() {
            out.push(at(
                Some(si),
                ViolationKind::RankMismatch { tensor: tensor.to_string(), expected: shape.dims(), found: map.out_dims() },
            ));
            return;
        }
        if let Err(witness) = access_in_bounds(map, shape) {
            out.push(at(Some(si), ViolationKind::OutOfBoundsAccess { tensor: tensor.to_string(), witness }));
        }
    };

    for (si, stmt) in nest.body.iter().enumerate() {
        match stmt {
            Statement::Load { tensor, access, .. } => check_access(&mut out, si, tensor, access),
            Statement::Store { tensor, access, value } => {
                check_access(&mut out, si, tensor, access);
                if !values.contains(value.as_str()) {
                    out.push(at(Some(si), ViolationKind::UndefinedValue(value.clone())));
                }
            }
            Statement::Compute { op, operands, .. } => {
                for v in operands {
                    if !values.contains(v.as_str()) {
                        out.push(at(Some(si), ViolationKind::UndefinedValue(v.clone())));
                    }
                }
                if let Some(expected) = op.arity() {
                    if expected != operands.len() {
                        out.push(at(
                            Some(si),
                            ViolationKind::OperandCount { op: op.name().to_string(), expected, found: operands.len() },
                        ));
                    }
                }
            }
            Statement::Memcopy { dst, src, map } => {
                check_access(&mut out, si, src, map);
                match shapes.get(dst.as_str()) {
                    None => out.push(at(Some(si), ViolationKind::UndefinedTensor(dst.clone()))),
                    Some(Some(shape)) if shape != &nest.domain => {
                        out.push(at(Some(si), ViolationKind::MemcopyShape { tensor: dst.clone() }))
                    }
                    _ => {}
                }
            }
        }
        if let Some(v) = stmt.defined_value() {
            if !values.insert(v) {
                out.push(at(Some(si), ViolationKind::RedefinedValue(v.to_string())));
            }
        }
    }
    out
}
