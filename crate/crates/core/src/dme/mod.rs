//! Data-movement elimination.
//!
//! A copy pair `v = t_l[f_l(i)]; t_s[f_s(i)] = v` is removed by inverting
//! `f_s`, forming `g_ls = f_l ∘ f_s⁻¹`, and rewriting every downstream read
//! `t_s[f(i')]` as `t_l[g_ls(f(i'))]`. Afterwards `t_s` is dead.

use std::collections::HashSet;

use serde::Serialize;

use crate::affine::{InverseResult, QuasiAffineMap};
use crate::ir::{find_copy_pairs, CopyPair, Program, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// `f_s` is not injective, or its inverse could not be tabulated.
    NotInvertible,
    /// The copy does not write every cell of `t_s` exactly once, or `t_s`
    /// has other writers.
    NotTotalCover,
    /// `t_s` is a model output.
    EscapingOutput,
    /// A rewritten access would need a point table.
    CompositionUnrepresentable,
    /// `t_s` is read in the nest that writes it, or `t_l = t_s`.
    SelfReferential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EliminationRecord {
    pub nest: String,
    pub tensor: String,
    pub source: String,
    pub bytes: u64,
    pub rewritten_loads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl EliminationRecord {
    pub fn eliminated(&self) -> bool {
        self.skipped.is_none()
    }
}

/// Tries to remove one copy pair. On failure the program is returned
/// unchanged together with the reason.
pub fn try_eliminate_pair(program: &Program, pair: CopyPair) -> (Program, EliminationRecord) {
    match plan(program, pair) {
        Ok(plan) => {
            let record = plan.record.clone();
            (apply(program, pair, plan), record)
        }
        Err(record) => (program.clone(), record),
    }
}

struct Plan {
    record: EliminationRecord,
    /// `(nest, statement, new access)` for every read of `t_s`.
    rewrites: Vec<(usize, usize, QuasiAffineMap)>,
}

fn plan(program: &Program, pair: CopyPair) -> Result<Plan, EliminationRecord> {
    let nest = &program.nests[pair.nest];
    let (Statement::Load { tensor: t_l, access: f_l, .. }, Statement::Store { tensor: t_s, access: f_s, .. }) =
        (&nest.body[pair.load], &nest.body[pair.store])
    else {
        panic!("pair does not name a load and a store");
    };
    let decl = program.tensor(t_s).expect("validated program");
    let mut record = EliminationRecord {
        nest: nest.name.clone(),
        tensor: t_s.clone(),
        source: t_l.clone(),
        bytes: decl.bytes(),
        rewritten_loads: 0,
        skipped: None,
        detail: None,
    };
    let skip = |mut r: EliminationRecord, why: SkipReason, detail: String| {
        r.skipped = Some(why);
        r.detail = Some(detail);
        r
    };

    if decl.origin.is_output() {
        return Err(skip(record, SkipReason::EscapingOutput, format!("%{t_s} is a model output")));
    }
    if t_l == t_s || nest.reads().contains(&t_s.as_str()) {
        return Err(skip(record, SkipReason::SelfReferential, format!("%{t_s} is read by its own copy nest")));
    }
    let inverse = f_s.reverse();
    if let InverseResult::NotInvertible(why) = &inverse {
        return Err(skip(record, SkipReason::NotInvertible, why.clone()));
    }
    let writers: usize = program
        .nests
        .iter()
        .flat_map(|n| &n.body)
        .filter(|s| s.written_tensor() == Some(t_s.as_str()))
        .count();
    if writers != 1 {
        return Err(skip(record, SkipReason::NotTotalCover, format!("%{t_s} has {writers} writers")));
    }
    let shape = decl.shape_box();
    let image = inverse.image().expect("invertible");
    if !image.covers(&shape) {
        return Err(skip(
            record,
            SkipReason::NotTotalCover,
            format!("copy writes {} of {} cells of %{t_s}", image.cardinality(), shape.cardinality()),
        ));
    }
    let InverseResult::Symbolic { map: inv, .. } = inverse else {
        return Err(skip(record, SkipReason::CompositionUnrepresentable, "inverse is a point table".into()));
    };
    let g_ls = match f_l.compose(&inv) {
        Ok(g) if g.is_symbolic() => g,
        Ok(_) => return Err(skip(record, SkipReason::CompositionUnrepresentable, "f_l ∘ f_s⁻¹ needs a table".into())),
        Err(e) => return Err(skip(record, SkipReason::CompositionUnrepresentable, e.to_string())),
    };

    let mut rewrites = Vec::new();
    for (ni, n) in program.nests.iter().enumerate().skip(pair.nest + 1) {
        for (si, s) in n.body.iter().enumerate() {
            let access = match s {
                Statement::Load { tensor, access, .. } if tensor == t_s => access,
                Statement::Memcopy { src, map, .. } if src == t_s => map,
                _ => continue,
            };
            match g_ls.compose(access) {
                Ok(g) if g.is_symbolic() => rewrites.push((ni, si, g)),
                Ok(_) => {
                    return Err(skip(
                        record,
                        SkipReason::CompositionUnrepresentable,
                        format!("rewritten access in nest {} needs a table", n.name),
                    ))
                }
                Err(e) => return Err(skip(record, SkipReason::CompositionUnrepresentable, e.to_string())),
            }
        }
    }
    record.rewritten_loads = rewrites.len();
    Ok(Plan { record, rewrites })
}

fn apply(program: &Program, pair: CopyPair, plan: Plan) -> Program {
    let mut out = program.clone();
    let t_s = plan.record.tensor.as_str();
    let t_l = plan.record.source.as_str();
    for (ni, si, g) in plan.rewrites {
        match &mut out.nests[ni].body[si] {
            Statement::Load { tensor, access, .. } => {
                *tensor = t_l.to_string();
                *access = g;
            }
            Statement::Memcopy { src, map, .. } => {
                *src = t_l.to_string();
                *map = g;
            }
            _ => unreachable!("planned rewrite targets a read"),
        }
    }
    let nest = &mut out.nests[pair.nest];
    nest.body.remove(pair.store);
    remove_dead_values(&mut nest.body);
    if nest.body.is_empty() {
        out.nests.remove(pair.nest);
    }
    out.tensors.retain(|t| t.name != t_s);
    out
}

/// Drops loads and computes whose results no store or memcopy depends on.
fn remove_dead_values(body: &mut Vec<Statement>) {
    let mut live: HashSet<String> = HashSet::new();
    let mut keep = vec![false; body.len()];
    for (k, s) in body.iter().enumerate().rev() {
        keep[k] = match s {
            Statement::Store { value, .. } => {
                live.insert(value.clone());
                true
            }
            Statement::Memcopy { .. } => true,
            Statement::Load { result, .. } => live.contains(result),
            Statement::Compute { result, operands, .. } => {
                let used = live.contains(result);
                if used {
                    live.extend(operands.iter().cloned());
                }
                used
            }
        };
    }
    let mut k = 0;
    body.retain(|_| {
        k += 1;
        keep[k - 1]
    });
}

/// Result of running the pass to a fixpoint.
#[derive(Debug, Clone)]
pub struct DmeOutcome {
    pub program: Program,
    /// Eliminations in the order performed, then a skip record for each
    /// pair left in the final program.
    pub records: Vec<EliminationRecord>,
    /// Scans over the pair list that found at least one pair.
    pub iterations: usize,
}

impl DmeOutcome {
    pub fn eliminated(&self) -> impl Iterator<Item = &EliminationRecord> {
        self.records.iter().filter(|r| r.eliminated())
    }

    pub fn skipped(&self) -> impl Iterator<Item = &EliminationRecord> {
        self.records.iter().filter(|r| !r.eliminated())
    }
}

/// Eliminates pairs in program order, restarting after each success, until
/// a full scan eliminates nothing.
pub fn run_dme(program: &Program) -> DmeOutcome {
    let mut current = program.clone();
    let mut records = Vec::new();
    let mut iterations = 0;
    loop {
        let pairs = find_copy_pairs(&current);
        if pairs.is_empty() {
            break;
        }
        iterations += 1;
        let mut skips = Vec::new();
        let mut progressed = false;
        for pair in pairs {
            match plan(&current, pair) {
                Ok(plan) => {
                    records.push(plan.record.clone());
                    current = apply(&current, pair, plan);
                    progressed = true;
                    break;
                }
                Err(skip) => skips.push(skip),
            }
        }
        if !progressed {
            records.extend(skips);
            break;
        }
    }
    DmeOutcome { program: current, records, iterations }
}
