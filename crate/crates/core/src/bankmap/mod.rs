//! Memory-bank mapping: anchors seed per-tensor mappings, propagation
//! carries them through unanchored nests to a fixpoint, and materialize
//! inserts inter-bank copies where a tensor is required in two layouts.
//! The local baseline assigns mappings per nest without propagation.

mod registry;
mod transfer;

pub use registry::{AnchorRegistry, OperandTemplate, RegistryError};
pub use transfer::{transfer, Blocked};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::ir::{BankMapping, Location, OpKind, OperatorNest, Origin, Policy, Program, Statement, TensorDecl};
use crate::affine::QuasiAffineMap;

pub const DEFAULT_BANKS: u32 = 4;

/// Mapping for tensors nothing constrains: outermost axis, cyclic.
pub fn default_mapping(banks: u32) -> BankMapping {
    BankMapping { axis: 0, banks, policy: Policy::Cyclic }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeedError {
    #[error("nest {nest}: {kind} expects {expected} operands, found {found}")]
    OperandCount { nest: String, kind: OpKind, expected: usize, found: usize },
    #[error("nest {nest}: operand `{role}` (%{tensor}) has rank {found}, template expects {expected}")]
    RankMismatch { nest: String, role: String, tensor: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Lattice {
    #[default]
    Unknown,
    Exactly(BankMapping),
    /// Every mapping that reached the tensor.
    Conflict(BTreeSet<BankMapping>),
}

impl Lattice {
    pub fn join(&self, other: &Lattice) -> Lattice {
        use Lattice::*;
        match (self, other) {
            (Unknown, x) | (x, Unknown) => x.clone(),
            (Exactly(a), Exactly(b)) if a == b => Exactly(*a),
            _ => Conflict(self.members().chain(other.members()).collect()),
        }
    }

    fn members(&self) -> impl Iterator<Item = BankMapping> + '_ {
        let (one, many) = match self {
            Lattice::Unknown => (None, None),
            Lattice::Exactly(m) => (Some(*m), None),
            Lattice::Conflict(s) => (None, Some(s.iter().copied())),
        };
        one.into_iter().chain(many.into_iter().flatten())
    }

    /// 0 for ⊥, 1 for a single mapping, 2 for ⊤.
    pub fn level(&self) -> u8 {
        match self {
            Lattice::Unknown => 0,
            Lattice::Exactly(_) => 1,
            Lattice::Conflict(_) => 2,
        }
    }
}

/// Per-tensor lattice values; absent names are ⊥.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MappingState {
    values: BTreeMap<String, Lattice>,
}

impl MappingState {
    pub fn get(&self, tensor: &str) -> &Lattice {
        static UNKNOWN: Lattice = Lattice::Unknown;
        self.values.get(tensor).unwrap_or(&UNKNOWN)
    }

    /// Joins `value` into the tensor's entry; returns whether it changed.
    pub fn join_into(&mut self, tensor: &str, value: &Lattice) -> bool {
        let old = self.get(tensor);
        let new = old.join(value);
        if &new == old {
            return false;
        }
        self.values.insert(tensor.to_string(), new);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Lattice)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn conflicts(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, v)| v.level() == 2).map(|(k, _)| k)
    }
}

/// An anchored operand: the tensor and, for inputs, the reading statement.
#[derive(Debug, Clone)]
struct Operand<'r> {
    tensor: String,
    stmt: Option<usize>,
    template: &'r OperandTemplate,
}

/// Templates for each operand of an anchored nest, in role order, or
/// `None` for unanchored nests. Inputs are the nest's reading statements in
/// body order, so a tensor read twice fills two roles; outputs are the
/// distinct tensors written. Off-chip operands are included.
fn operand_templates<'r>(
    nest: &OperatorNest,
    program: &Program,
    registry: &'r AnchorRegistry,
) -> Result<Option<Vec<Operand<'r>>>, SeedError> {
    let Some(templates) = registry.templates(nest.kind) else { return Ok(None) };
    let operands: Vec<(&str, Option<usize>)> = nest
        .body
        .iter()
        .enumerate()
        .filter_map(|(k, s)| s.read_tensor().map(|t| (t, Some(k))))
        .chain(nest.writes().into_iter().map(|t| (t, None)))
        .collect();
    if operands.len() != templates.len() {
        return Err(SeedError::OperandCount {
            nest: nest.name.clone(),
            kind: nest.kind,
            expected: templates.len(),
            found: operands.len(),
        });
    }
    let mut out = Vec::new();
    for ((t, stmt), tpl) in operands.into_iter().zip(templates) {
        let rank = program.tensor(t).map_or(0, TensorDecl::rank);
        if rank != tpl.rank {
            return Err(SeedError::RankMismatch {
                nest: nest.name.clone(),
                role: tpl.role.clone(),
                tensor: t.to_string(),
                expected: tpl.rank,
                found: rank,
            });
        }
        out.push(Operand { tensor: t.to_string(), stmt, template: tpl });
    }
    Ok(Some(out))
}

fn on_chip(program: &Program, t: &str) -> bool {
    program.tensor(t).is_some_and(TensorDecl::is_on_chip)
}

/// Seeds every on-chip operand of an anchored nest with its template.
pub fn seed_anchors(program: &Program, registry: &AnchorRegistry, banks: u32) -> Result<MappingState, SeedError> {
    let mut state = MappingState::default();
    for nest in &program.nests {
        if let Some(ops) = operand_templates(nest, program, registry)? {
            for op in ops {
                if on_chip(program, &op.tensor) {
                    state.join_into(&op.tensor, &Lattice::Exactly(op.template.mapping(banks)));
                }
            }
        }
    }
    Ok(state)
}

/// A directed transfer through one unanchored nest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransferArc {
    pub nest: usize,
    pub from: String,
    pub to: String,
}

/// Forward (read → write) and backward (write → read) arcs through every
/// unanchored nest, between on-chip tensors only.
pub fn transfer_arcs(program: &Program, registry: &AnchorRegistry) -> Vec<TransferArc> {
    let mut arcs = Vec::new();
    for (ni, nest) in program.nests.iter().enumerate() {
        if registry.is_anchored(nest.kind) {
            continue;
        }
        let reads: Vec<&str> = nest.reads().into_iter().filter(|t| on_chip(program, t)).collect();
        let writes: Vec<&str> = nest.writes().into_iter().filter(|t| on_chip(program, t)).collect();
        for &r in &reads {
            for &w in &writes {
                if r != w {
                    arcs.push(TransferArc { nest: ni, from: r.to_string(), to: w.to_string() });
                    arcs.push(TransferArc { nest: ni, from: w.to_string(), to: r.to_string() });
                }
            }
        }
    }
    arcs
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    pub state: MappingState,
    /// Synchronous rounds until nothing changed, including the final one.
    pub rounds: usize,
    /// Number of ⊥→single and single→⊤ transitions.
    pub level_changes: usize,
}

pub fn propagate(program: &Program, registry: &AnchorRegistry, seeded: &MappingState) -> Propagation {
    propagate_arcs(program, seeded, &transfer_arcs(program, registry))
}

/// Fixpoint over the given arcs. Each round evaluates every arc against
/// the previous round's state, so the result does not depend on arc order.
/// A tensor in conflict carries nothing further.
pub fn propagate_arcs(program: &Program, seeded: &MappingState, arcs: &[TransferArc]) -> Propagation {
    let mut state = seeded.clone();
    let mut rounds = 0;
    let mut level_changes = 0;
    loop {
        rounds += 1;
        let mut incoming: Vec<(&str, BankMapping)> = Vec::new();
        for arc in arcs {
            if let Lattice::Exactly(m) = state.get(&arc.from) {
                if let Ok(m2) = transfer(*m, &program.nests[arc.nest], &arc.from, &arc.to) {
                    incoming.push((&arc.to, m2));
                }
            }
        }
        let mut changed = false;
        for (t, m) in incoming {
            let before = state.get(t).level();
            if state.join_into(t, &Lattice::Exactly(m)) {
                changed = true;
                if state.get(t).level() != before {
                    level_changes += 1;
                }
            }
        }
        if !changed {
            return Propagation { state, rounds, level_changes };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InsertedCopy {
    /// Tensor being re-banked.
    pub tensor: String,
    /// Fresh tensor holding the re-banked copy.
    pub copy: String,
    pub nest: String,
    pub from_mapping: String,
    pub to_mapping: String,
    pub bytes: u64,
    /// Nests rewritten to read the copy.
    pub consumers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct InsertionReport {
    pub memcopies: Vec<InsertedCopy>,
    /// Tensors whose propagated state was a conflict.
    pub conflicts: Vec<String>,
    /// On-chip tensors propagation left at ⊥. Each takes its producer's
    /// forwarded mapping where one exists, else the default.
    pub defaulted: Vec<String>,
}

impl InsertionReport {
    pub fn memcopies_inserted(&self) -> usize {
        self.memcopies.len()
    }

    pub fn copy_bytes(&self) -> u64 {
        self.memcopies.iter().map(|c| c.bytes).sum()
    }
}

type Templates<'r> = Vec<Option<Vec<Operand<'r>>>>;

/// Template of the tensor written (`stmt = None`) or read by statement
/// `stmt` of nest `ni`, if the nest is anchored.
fn template_for(templates: &Templates<'_>, ni: usize, tensor: &str, stmt: Option<usize>, banks: u32) -> Option<BankMapping> {
    templates[ni]
        .as_ref()?
        .iter()
        .find(|op| op.tensor == tensor && op.stmt == stmt)
        .map(|op| op.template.mapping(banks))
}

/// Applies the propagated state: fixes a final mapping for every on-chip
/// tensor and inserts a copy wherever a consumer requires another layout.
pub fn materialize(
    program: &Program,
    registry: &AnchorRegistry,
    state: &MappingState,
    banks: u32,
) -> Result<(Program, InsertionReport), SeedError> {
    let templates = all_templates(program, registry)?;
    let mut report = InsertionReport::default();
    let mut mapping: HashMap<String, BankMapping> = HashMap::new();

    // Program order gives every producer input a mapping before its outputs.
    for t in program.tensors.iter().filter(|t| t.is_on_chip() && program.producer_of(&t.name).is_none()) {
        let m = match state.get(&t.name) {
            Lattice::Exactly(m) => *m,
            _ => default_mapping(banks),
        };
        mapping.insert(t.name.clone(), m);
    }
    for (ni, nest) in program.nests.iter().enumerate() {
        for w in nest.writes() {
            if !on_chip(program, w) || mapping.contains_key(w) {
                continue;
            }
            let m = if let Some(m) = template_for(&templates, ni, w, None, banks) {
                m
            } else if let Lattice::Exactly(m) = state.get(w) {
                *m
            } else {
                let inherited = nest
                    .reads()
                    .into_iter()
                    .filter_map(|r| mapping.get(r).and_then(|&m| transfer(m, nest, r, w).ok()))
                    .next();
                inherited.unwrap_or(default_mapping(banks))
            };
            mapping.insert(w.to_string(), m);
        }
    }
    report.conflicts = state.conflicts().map(str::to_string).collect();
    report.defaulted = program
        .tensors
        .iter()
        .filter(|t| t.is_on_chip() && state.get(&t.name).level() == 0)
        .map(|t| t.name.clone())
        .collect();

    let requirement = |ni: usize, stmt: usize, t: &str, mapping: &HashMap<String, BankMapping>| {
        if templates[ni].is_some() {
            return template_for(&templates, ni, t, Some(stmt), banks);
        }
        let nest = &program.nests[ni];
        nest.writes()
            .into_iter()
            .filter(|w| on_chip(program, w))
            .find_map(|w| transfer(mapping[w], nest, w, t).ok())
    };
    let (out, memcopies) = reconcile(program, &mapping, requirement);
    report.memcopies = memcopies;
    Ok((out, report))
}

fn all_templates<'r>(program: &Program, registry: &'r AnchorRegistry) -> Result<Templates<'r>, SeedError> {
    program.nests.iter().map(|n| operand_templates(n, program, registry)).collect()
}

/// Baseline: each nest picks mappings for its own operands (templates if
/// anchored, else the default for outputs and whatever the default output
/// implies for inputs), and a copy is inserted on every edge where the
/// producer's choice differs from the consumer's.
pub fn run_local_baseline(
    program: &Program,
    registry: &AnchorRegistry,
    banks: u32,
) -> Result<(Program, InsertionReport), SeedError> {
    let templates = all_templates(program, registry)?;
    let default = default_mapping(banks);
    let mut mapping: HashMap<String, BankMapping> = HashMap::new();
    let mut report = InsertionReport::default();
    for t in program.tensors.iter().filter(|t| t.is_on_chip()) {
        let m = match program.producer_of(&t.name) {
            Some(p) => template_for(&templates, p, &t.name, None, banks).unwrap_or(default),
            None => t.bank_mapping().unwrap_or(default),
        };
        mapping.insert(t.name.clone(), m);
    }
    let requirement = |ni: usize, stmt: usize, t: &str, _: &HashMap<String, BankMapping>| {
        if templates[ni].is_some() {
            return template_for(&templates, ni, t, Some(stmt), banks);
        }
        let nest = &program.nests[ni];
        let out = nest.writes().into_iter().find(|w| on_chip(program, w));
        Some(out.and_then(|w| transfer(default, nest, w, t).ok()).unwrap_or(default))
    };
    let (out, memcopies) = reconcile(program, &mapping, requirement);
    report.memcopies = memcopies;
    Ok((out, report))
}

/// Rewrites reads whose requirement differs from the tensor's mapping to
/// use a re-banked copy, one copy per (tensor, mapping), placed before its
/// first consumer. Annotates every on-chip tensor with its final mapping.
fn reconcile(
    program: &Program,
    mapping: &HashMap<String, BankMapping>,
    requirement: impl Fn(usize, usize, &str, &HashMap<String, BankMapping>) -> Option<BankMapping>,
) -> (Program, Vec<InsertedCopy>) {
    let mut out = program.clone();
    let mut copies: BTreeMap<(String, BankMapping), usize> = BTreeMap::new();
    let mut inserted: Vec<InsertedCopy> = Vec::new();
    let mut before: Vec<(usize, OperatorNest)> = Vec::new();
    let mut new_tensors: Vec<(String, TensorDecl)> = Vec::new();
    let mut nest_names: HashSet<String> = program.nests.iter().map(|n| n.name.clone()).collect();
    let mut tensor_names: HashSet<String> = program.tensors.iter().map(|t| t.name.clone()).collect();

    for (ni, nest) in program.nests.iter().enumerate() {
        for (k, stmt) in nest.body.iter().enumerate() {
            let Some(t) = stmt.read_tensor() else { continue };
            let Some(&have) = mapping.get(t) else { continue };
            let Some(need) = requirement(ni, k, t, mapping) else { continue };
            if need == have {
                continue;
            }
            let key = (t.to_string(), need);
            let idx = *copies.entry(key).or_insert_with(|| {
                let decl = program.tensor(t).expect("validated");
                let copy = fresh(&mut tensor_names, &format!("{t}_bank{}", need.axis));
                let nest_name = fresh(&mut nest_names, &format!("rebank_{t}"));
                let domain = decl.shape_box();
                before.push((
                    ni,
                    OperatorNest {
                        name: nest_name.clone(),
                        kind: OpKind::Copy,
                        domain: domain.clone(),
                        body: vec![Statement::Memcopy {
                            dst: copy.clone(),
                            src: t.to_string(),
                            map: QuasiAffineMap::identity(domain),
                        }],
                    },
                ));
                new_tensors.push((
                    t.to_string(),
                    TensorDecl {
                        name: copy.clone(),
                        elem_size: decl.elem_size,
                        shape: decl.shape.clone(),
                        location: Location::OnChip(Some(need)),
                        origin: Origin::Intermediate,
                    },
                ));
                inserted.push(InsertedCopy {
                    tensor: t.to_string(),
                    copy,
                    nest: nest_name,
                    from_mapping: have.to_string(),
                    to_mapping: need.to_string(),
                    bytes: decl.bytes(),
                    consumers: Vec::new(),
                });
                inserted.len() - 1
            });
            let copy = inserted[idx].copy.clone();
            if inserted[idx].consumers.last() != Some(&nest.name) {
                inserted[idx].consumers.push(nest.name.clone());
            }
            match &mut out.nests[ni].body[k] {
                Statement::Load { tensor, .. } => *tensor = copy,
                Statement::Memcopy { src, .. } => *src = copy,
                _ => unreachable!("reading statement"),
            }
        }
    }

    for t in &mut out.tensors {
        if let Some(&m) = mapping.get(&t.name) {
            t.location = Location::OnChip(Some(m));
        }
    }
    // Each copy is declared right after its original (and earlier copies).
    let mut placed: HashMap<String, usize> = HashMap::new();
    for (after, decl) in new_tensors {
        let seen = placed.entry(after.clone()).or_insert(0);
        let pos = out.tensors.iter().position(|t| t.name == after).expect("original declared");
        out.tensors.insert(pos + 1 + *seen, decl);
        *seen += 1;
    }
    let old = std::mem::take(&mut out.nests);
    let mut pending = before.into_iter().peekable();
    for (ni, nest) in old.into_iter().enumerate() {
        while let Some((_, copy_nest)) = pending.next_if(|(at, _)| *at == ni) {
            out.nests.push(copy_nest);
        }
        out.nests.push(nest);
    }
    (out, inserted)
}

fn fresh(taken: &mut HashSet<String>, base: &str) -> String {
    let name = if taken.contains(base) {
        (1..).map(|k| format!("{base}_{k}")).find(|n| !taken.contains(n)).expect("unbounded")
    } else {
        base.to_string()
    };
    taken.insert(name.clone());
    name
}

/// The global pipeline: seed, propagate, materialize.
pub fn run_global(
    program: &Program,
    registry: &AnchorRegistry,
    banks: u32,
) -> Result<(Program, InsertionReport, Propagation), SeedError> {
    let seeded = seed_anchors(program, registry, banks)?;
    let prop = propagate(program, registry, &seeded);
    let (out, report) = materialize(program, registry, &prop.state, banks)?;
    Ok((out, report, prop))
}
