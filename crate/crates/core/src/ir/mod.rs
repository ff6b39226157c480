//! Loop-nest IR: tensors with locations and perfectly nested loops whose
//! bodies load, store, compute and memcopy through quasi-affine accesses.

mod analysis;
mod validate;

pub use analysis::{dependence_edges, find_copy_pairs, CopyPair, DepEdge};
pub use validate::{access_in_bounds, validate, Violation, ViolationKind, Witness};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affine::{IntBox, QuasiAffineMap};

/// How elements along the banked axis are spread across banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// `bank = index mod B`
    Cyclic,
    /// `bank = index · B / extent`
    Blocked,
}

/// Assignment of one tensor axis to memory banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BankMapping {
    pub axis: usize,
    pub banks: u32,
    pub policy: Policy,
}

impl BankMapping {
    pub fn new(axis: usize, banks: u32, policy: Policy) -> Self {
        BankMapping { axis, banks, policy }
    }

    /// Bank holding the element whose banked-axis index is `index`.
    pub fn bank_of(&self, index: i64, extent: i64) -> u32 {
        let b = self.banks as i64;
        match self.policy {
            Policy::Cyclic => index.rem_euclid(b) as u32,
            Policy::Blocked => ((index * b) / extent.max(1)).clamp(0, b - 1) as u32,
        }
    }
}

impl fmt::Display for BankMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let policy = match self.policy {
            Policy::Cyclic => "cyclic",
            Policy::Blocked => "blocked",
        };
        write!(f, "axis={}, banks={}, {}", self.axis, self.banks, policy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    OffChip,
    OnChip(Option<BankMapping>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    ModelInput,
    ModelOutput,
    /// Input returned unchanged as an output.
    InputOutput,
    Intermediate,
}

impl Origin {
    pub fn is_input(self) -> bool {
        matches!(self, Origin::ModelInput | Origin::InputOutput)
    }

    pub fn is_output(self) -> bool {
        matches!(self, Origin::ModelOutput | Origin::InputOutput)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorDecl {
    pub name: String,
    pub elem_size: u32,
    pub shape: Vec<i64>,
    pub location: Location,
    pub origin: Origin,
}

impl TensorDecl {
    pub fn new(name: impl Into<String>, elem_size: u32, shape: Vec<i64>, location: Location, origin: Origin) -> Self {
        TensorDecl { name: name.into(), elem_size, shape, location, origin }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn elements(&self) -> u64 {
        self.shape.iter().map(|&e| e.max(0) as u64).product()
    }

    pub fn bytes(&self) -> u64 {
        self.elements() * self.elem_size as u64
    }

    pub fn shape_box(&self) -> IntBox {
        IntBox::from_extents(&self.shape).expect("validated tensor shape")
    }

    pub fn is_on_chip(&self) -> bool {
        matches!(self.location, Location::OnChip(_))
    }

    pub fn bank_mapping(&self) -> Option<BankMapping> {
        match self.location {
            Location::OnChip(m) => m,
            Location::OffChip => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Opcode {
    Add,
    Mul,
    Max,
    Neg,
    Identity,
    /// Parsed but not executable.
    Other(String),
}

impl Opcode {
    pub fn name(&self) -> &str {
        match self {
            Opcode::Add => "add",
            Opcode::Mul => "mul",
            Opcode::Max => "max",
            Opcode::Neg => "neg",
            Opcode::Identity => "id",
            Opcode::Other(s) => s,
        }
    }

    pub fn arity(&self) -> Option<usize> {
        match self {
            Opcode::Add | Opcode::Mul | Opcode::Max => Some(2),
            Opcode::Neg | Opcode::Identity => Some(1),
            Opcode::Other(_) => None,
        }
    }

    pub fn from_name(s: &str) -> Opcode {
        match s {
            "add" => Opcode::Add,
            "mul" => Opcode::Mul,
            "max" => Opcode::Max,
            "neg" => Opcode::Neg,
            "id" => Opcode::Identity,
            other => Opcode::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv2d,
    Matmul,
    Pooling,
    Elementwise,
    Repeat,
    Tile,
    Split,
    Transpose,
    StridedSlice,
    Reshape,
    Copy,
    Other,
}

impl OpKind {
    pub const ALL: [OpKind; 12] = [
        OpKind::Conv2d,
        OpKind::Matmul,
        OpKind::Pooling,
        OpKind::Elementwise,
        OpKind::Repeat,
        OpKind::Tile,
        OpKind::Split,
        OpKind::Transpose,
        OpKind::StridedSlice,
        OpKind::Reshape,
        OpKind::Copy,
        OpKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::Matmul => "matmul",
            OpKind::Pooling => "pooling",
            OpKind::Elementwise => "elementwise",
            OpKind::Repeat => "repeat",
            OpKind::Tile => "tile",
            OpKind::Split => "split",
            OpKind::Transpose => "transpose",
            OpKind::StridedSlice => "strided_slice",
            OpKind::Reshape => "reshape",
            OpKind::Copy => "copy",
            OpKind::Other => "other",
        }
    }

    /// Memory-bound data-movement operators.
    pub fn is_copy_kind(self) -> bool {
        matches!(
            self,
            OpKind::Repeat
                | OpKind::Tile
                | OpKind::Split
                | OpKind::Transpose
                | OpKind::StridedSlice
                | OpKind::Reshape
                | OpKind::Copy
        )
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown operator kind `{s}`"))
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Load { result: String, tensor: String, access: QuasiAffineMap },
    Store { tensor: String, access: QuasiAffineMap, value: String },
    Compute { result: String, op: Opcode, operands: Vec<String> },
    /// `dst[i] = src[map(i)]` for every loop point `i`.
    Memcopy { dst: String, src: String, map: QuasiAffineMap },
}

impl Statement {
    /// Tensor read by this statement, if any.
    pub fn read_tensor(&self) -> Option<&str> {
        match self {
            Statement::Load { tensor, .. } => Some(tensor),
            Statement::Memcopy { src, .. } => Some(src),
            _ => None,
        }
    }

    /// Tensor written by this statement, if any.
    pub fn written_tensor(&self) -> Option<&str> {
        match self {
            Statement::Store { tensor, .. } => Some(tensor),
            Statement::Memcopy { dst, .. } => Some(dst),
            _ => None,
        }
    }

    pub fn defined_value(&self) -> Option<&str> {
        match self {
            Statement::Load { result, .. } | Statement::Compute { result, .. } => Some(result),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorNest {
    pub name: String,
    pub kind: OpKind,
    pub domain: IntBox,
    pub body: Vec<Statement>,
}

impl OperatorNest {
    /// Distinct tensors read, in body order.
    pub fn reads(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.body.iter().filter_map(Statement::read_tensor) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }

    /// Distinct tensors written, in body order.
    pub fn writes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.body.iter().filter_map(Statement::written_tensor) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

/// Tensor declarations plus operator nests in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub tensors: Vec<TensorDecl>,
    pub nests: Vec<OperatorNest>,
}

impl Program {
    pub fn tensor(&self, name: &str) -> Option<&TensorDecl> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut TensorDecl> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Index of the first nest writing `tensor`.
    pub fn producer_of(&self, tensor: &str) -> Option<usize> {
        self.nests.iter().position(|n| n.writes().contains(&tensor))
    }

    /// Indices of nests reading `tensor`, in program order.
    pub fn consumers_of(&self, tensor: &str) -> Vec<usize> {
        self.nests
            .iter()
            .enumerate()
            .filter(|(_, n)| n.reads().contains(&tensor))
            .map(|(i, _)| i)
            .collect()
    }

    /// Σ bytes of intermediate tensors.
    pub fn intermediate_bytes(&self) -> u64 {
        self.tensors.iter().filter(|t| t.origin == Origin::Intermediate).map(TensorDecl::bytes).sum()
    }

    /// A tensor name not yet declared, derived from `base`.
    pub fn fresh_tensor_name(&self, base: &str) -> String {
        if self.tensor(base).is_none() {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}_{k}")).find(|n| self.tensor(n).is_none()).expect("unbounded")
    }

    pub fn fresh_nest_name(&self, base: &str) -> String {
        let taken = |n: &str| self.nests.iter().any(|x| x.name == n);
        if !taken(base) {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}_{k}")).find(|n| !taken(n)).expect("unbounded")
    }
}
