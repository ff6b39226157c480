//! Reference interpreter over integer payloads.
//!
//! Every cell of a non-input tensor starts out poisoned; reading a poisoned
//! cell is an error, so a pass that drops a write is caught on the first
//! read rather than producing plausible garbage.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::affine::IntBox;
use crate::ir::{Opcode, Program, Statement};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("no input supplied for model input %{0}")]
    MissingInput(String),
    #[error("%{0} is not a model input")]
    UnexpectedInput(String),
    #[error("input %{tensor} has {found} elements, expected {expected}")]
    InputShape { tensor: String, expected: usize, found: usize },
    #[error("tensor %{0} is not declared")]
    UndefinedTensor(String),
    #[error("nest {nest}: read of unwritten cell %{tensor}{index:?}")]
    PoisonRead { nest: String, tensor: String, index: Vec<i64> },
    #[error("nest {nest}: index {index:?} is outside %{tensor}")]
    OutOfBounds { nest: String, tensor: String, index: Vec<i64> },
    #[error("nest {nest}: unknown opcode `{op}`")]
    UnknownOpcode { nest: String, op: String },
    #[error("nest {nest}: value %{value} is undefined")]
    UndefinedValue { nest: String, value: String },
    #[error("programs disagree on interface tensor %{0}")]
    InterfaceMismatch(String),
}

/// Dense row-major buffer; `None` marks a cell never written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub shape: Vec<i64>,
    pub data: Vec<Option<i64>>,
}

impl Tensor {
    pub fn from_values(shape: Vec<i64>, values: Vec<i64>) -> Self {
        Tensor { shape, data: values.into_iter().map(Some).collect() }
    }

    pub fn poisoned(shape: Vec<i64>) -> Self {
        let n = shape.iter().product::<i64>().max(0) as usize;
        Tensor { shape, data: vec![None; n] }
    }

    /// All values, or `None` if any cell is unwritten.
    pub fn values(&self) -> Option<Vec<i64>> {
        self.data.iter().copied().collect()
    }

    fn offset(&self, index: &[i64]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0i64;
        for (&i, &e) in index.iter().zip(&self.shape) {
            if i < 0 || i >= e {
                return None;
            }
            off = off * e + i;
        }
        Some(off as usize)
    }

    pub fn get(&self, index: &[i64]) -> Option<i64> {
        self.offset(index).and_then(|o| self.data[o])
    }
}

/// Named tensor buffers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TensorStore {
    tensors: BTreeMap<String, Tensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// Executes `program` and returns its model outputs.
pub fn run(program: &Program, inputs: &TensorStore) -> Result<TensorStore, InterpError> {
    for name in inputs.names() {
        if !program.tensor(name).is_some_and(|t| t.origin.is_input()) {
            return Err(InterpError::UnexpectedInput(name.to_string()));
        }
    }
    let mut slots: HashMap<String, Tensor> = HashMap::new();
    for t in &program.tensors {
        if t.origin.is_input() {
            let given = inputs.get(&t.name).ok_or_else(|| InterpError::MissingInput(t.name.clone()))?;
            let expected = t.elements() as usize;
            if given.data.len() != expected || given.shape != t.shape {
                return Err(InterpError::InputShape {
                    tensor: t.name.clone(),
                    expected,
                    found: given.data.len(),
                });
            }
            slots.insert(t.name.clone(), given.clone());
        } else {
            slots.insert(t.name.clone(), Tensor::poisoned(t.shape.clone()));
        }
    }

    for nest in &program.nests {
        run_nest(nest, &mut slots)?;
    }

    let mut out = TensorStore::new();
    for t in program.tensors.iter().filter(|t| t.origin.is_output()) {
        out.insert(t.name.clone(), slots.remove(t.name.as_str()).expect("declared"));
    }
    Ok(out)
}

/// Statement with names resolved to value slots.
enum Op<'a> {
    Load { slot: usize, tensor: &'a str, stmt: &'a Statement },
    Store { slot: usize, tensor: &'a str, stmt: &'a Statement },
    Compute { slot: usize, op: &'a Opcode, args: Vec<usize> },
    Memcopy { dst: &'a str, src: &'a str, stmt: &'a Statement },
}

fn run_nest(nest: &crate::ir::OperatorNest, slots: &mut HashMap<String, Tensor>) -> Result<(), InterpError> {
    let err_nest = || nest.name.clone();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut ops = Vec::with_capacity(nest.body.len());
    let lookup = |ids: &HashMap<&str, usize>, v: &str| {
        ids.get(v).copied().ok_or_else(|| InterpError::UndefinedValue { nest: err_nest(), value: v.to_string() })
    };
    for stmt in &nest.body {
        let op = match stmt {
            Statement::Load { result, tensor, .. } => {
                let slot = ids.len();
                ids.insert(result, slot);
                Op::Load { slot, tensor, stmt }
            }
            Statement::Store { tensor, value, .. } => Op::Store { slot: lookup(&ids, value)?, tensor, stmt },
            Statement::Compute { result, op, operands } => {
                if matches!(op, Opcode::Other(_)) {
                    return Err(InterpError::UnknownOpcode { nest: err_nest(), op: op.name().to_string() });
                }
                let args = operands.iter().map(|v| lookup(&ids, v)).collect::<Result<Vec<_>, _>>()?;
                let slot = ids.len();
                ids.insert(result, slot);
                Op::Compute { slot, op, args }
            }
            Statement::Memcopy { dst, src, .. } => Op::Memcopy { dst, src, stmt },
        };
        ops.push(op);
    }
    for name in nest.reads().into_iter().chain(nest.writes()) {
        if !slots.contains_key(name) {
            return Err(InterpError::UndefinedTensor(name.to_string()));
        }
    }

    let mut values = vec![0i64; ids.len()];
    let mut index = Vec::new();
    let mut failure = None;
    let domain: &IntBox = &nest.domain;
    domain.for_each_point(|p| {
        if failure.is_some() {
            return;
        }
        for op in &ops {
            let r = exec(op, p, &mut values, &mut index, slots, &nest.name);
            if let Err(e) = r {
                failure = Some(e);
                return;
            }
        }
    });
    failure.map_or(Ok(()), Err)
}

fn exec(
    op: &Op<'_>,
    p: &[i64],
    values: &mut [i64],
    index: &mut Vec<i64>,
    slots: &mut HashMap<String, Tensor>,
    nest: &str,
) -> Result<(), InterpError> {
    let oob = |tensor: &str, index: &[i64]| InterpError::OutOfBounds {
        nest: nest.to_string(),
        tensor: tensor.to_string(),
        index: index.to_vec(),
    };
    let read = |slots: &HashMap<String, Tensor>, tensor: &str, index: &[i64]| -> Result<i64, InterpError> {
        let t = &slots[tensor];
        let off = t.offset(index).ok_or_else(|| oob(tensor, index))?;
        t.data[off].ok_or_else(|| InterpError::PoisonRead {
            nest: nest.to_string(),
            tensor: tensor.to_string(),
            index: index.to_vec(),
        })
    };
    match op {
        Op::Load { slot, tensor, stmt } => {
            let map = access(stmt);
            index.resize(map.out_dims(), 0);
            map.evaluate_into(p, index);
            values[*slot] = read(slots, tensor, index)?;
        }
        Op::Store { slot, tensor, stmt } => {
            let map = access(stmt);
            index.resize(map.out_dims(), 0);
            map.evaluate_into(p, index);
            let t = slots.get_mut(*tensor).expect("checked");
            let off = t.offset(index).ok_or_else(|| oob(tensor, index))?;
            t.data[off] = Some(values[*slot]);
        }
        Op::Compute { slot, op, args } => {
            let a = |k: usize| values[args[k]];
            values[*slot] = match op {
                Opcode::Add => a(0).wrapping_add(a(1)),
                Opcode::Mul => a(0).wrapping_mul(a(1)),
                Opcode::Max => a(0).max(a(1)),
                Opcode::Neg => a(0).wrapping_neg(),
                Opcode::Identity => a(0),
                Opcode::Other(_) => unreachable!("rejected before execution"),
            };
        }
        Op::Memcopy { dst, src, stmt } => {
            let map = access(stmt);
            index.resize(map.out_dims(), 0);
            map.evaluate_into(p, index);
            let v = read(slots, src, index)?;
            let t = slots.get_mut(*dst).expect("checked");
            let off = t.offset(p).ok_or_else(|| oob(dst, p))?;
            t.data[off] = Some(v);
        }
    }
    Ok(())
}

/// Deterministic pseudo-random values for every model input.
pub fn random_inputs(program: &Program, seed: u64) -> TensorStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = TensorStore::new();
    for t in program.tensors.iter().filter(|t| t.origin.is_input()) {
        let values = (0..t.elements()).map(|_| rng.gen_range(-1000..=1000)).collect();
        store.insert(t.name.clone(), Tensor::from_values(t.shape.clone(), values));
    }
    store
}

/// First observed difference between two programs' outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub trial: usize,
    pub seed: u64,
    pub tensor: String,
    pub index: Vec<i64>,
    pub left: Option<i64>,
    pub right: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equivalence {
    pub equivalent: bool,
    pub trials: usize,
    pub counterexample: Option<Counterexample>,
}

/// Runs both programs on `trials` random input sets; trial `k` uses seed
/// `seed + k`. Trials run concurrently.
pub fn equivalent(p1: &Program, p2: &Program, trials: usize, seed: u64) -> Result<Equivalence, InterpError> {
    check_interface(p1, p2)?;
    let results = par::map_range(trials, |k| {
        let trial_seed = seed.wrapping_add(k as u64);
        let inputs = random_inputs(p1, trial_seed);
        let a = run(p1, &inputs)?;
        let b = run(p2, &inputs)?;
        Ok(first_difference(&a, &b).map(|(tensor, index, left, right)| Counterexample {
            trial: k,
            seed: trial_seed,
            tensor,
            index,
            left,
            right,
        }))
    });
    for r in results {
        if let Some(cx) = r? {
            return Ok(Equivalence { equivalent: false, trials, counterexample: Some(cx) });
        }
    }
    Ok(Equivalence { equivalent: true, trials, counterexample: None })
}

fn check_interface(p1: &Program, p2: &Program) -> Result<(), InterpError> {
    let iface = |p: &Program| -> BTreeMap<String, (Vec<i64>, bool, bool)> {
        p.tensors
            .iter()
            .filter(|t| t.origin.is_input() || t.origin.is_output())
            .map(|t| (t.name.clone(), (t.shape.clone(), t.origin.is_input(), t.origin.is_output())))
            .collect()
    };
    let (a, b) = (iface(p1), iface(p2));
    for name in a.keys().chain(b.keys()) {
        if a.get(name) != b.get(name) {
            return Err(InterpError::InterfaceMismatch(name.clone()));
        }
    }
    Ok(())
}

fn access(stmt: &Statement) -> &crate::affine::QuasiAffineMap {
    match stmt {
        Statement::Load { access, .. } | Statement::Store { access, .. } => access,
        Statement::Memcopy { map, .. } => map,
        Statement::Compute { .. } => unreachable!("compute has no access"),
    }
}

type Difference = (String, Vec<i64>, Option<i64>, Option<i64>);

fn first_difference(a: &TensorStore, b: &TensorStore) -> Option<Difference> {
    for (name, ta) in a.iter() {
        let tb = b.get(name)?;
        let bx = IntBox::from_extents(&ta.shape).ok()?;
        for (k, (x, y)) in ta.data.iter().zip(&tb.data).enumerate() {
            if x != y {
                return Some((name.to_string(), bx.point_at(k as u64), *x, *y));
            }
        }
    }
    None
}
