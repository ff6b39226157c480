//! Byte accounting of memory movement.
//!
//! Every statement execution moves one element, so a statement costs
//! `|loop box| × element size`. Loads and stores that touch an off-chip
//! tensor are off-chip traffic. A copy between two on-chip tensors (a
//! memcopy, or a load-store pair inside a copy-kind nest) is on-chip copy
//! traffic, counted once per copied element.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::ir::{find_copy_pairs, Program, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrafficOptions {
    /// Count every on-chip load and store, not only copies.
    pub count_all_onchip: bool,
    /// On-chip to on-chip memcopies go through main memory: each moved byte
    /// is read and written off-chip.
    pub interbank_via_dram: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NestTraffic {
    pub nest: String,
    pub kind: String,
    pub off_chip_bytes: u64,
    pub on_chip_copy_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TrafficReport {
    pub off_chip_bytes: u64,
    pub on_chip_copy_bytes: u64,
    pub intermediate_tensor_bytes: u64,
    pub copy_pairs_total: u64,
    pub copy_pairs_eliminated: u64,
    pub memcopies_inserted: u64,
    pub per_nest: Vec<NestTraffic>,
}

/// Traffic of `program` as it stands. `copy_pairs_total` is the number of
/// pairs present; the pass counters start at zero.
pub fn account(program: &Program, options: &TrafficOptions) -> TrafficReport {
    let on_chip: HashMap<&str, (bool, u64)> =
        program.tensors.iter().map(|t| (t.name.as_str(), (t.is_on_chip(), t.elem_size as u64))).collect();
    let info = |t: &str| on_chip.get(t).copied().unwrap_or((false, 0));

    let mut report = TrafficReport {
        intermediate_tensor_bytes: program.intermediate_bytes(),
        copy_pairs_total: find_copy_pairs(program).len() as u64,
        ..Default::default()
    };
    for nest in &program.nests {
        let n = nest.domain.cardinality();
        let mut entry = NestTraffic {
            nest: nest.name.clone(),
            kind: nest.kind.to_string(),
            off_chip_bytes: 0,
            on_chip_copy_bytes: 0,
        };
        // Values loaded from on-chip tensors in this nest.
        let mut on_chip_values: HashSet<&str> = HashSet::new();
        for s in &nest.body {
            match s {
                Statement::Load { result, tensor, .. } => {
                    let (chip, size) = info(tensor);
                    if chip {
                        on_chip_values.insert(result);
                        if options.count_all_onchip {
                            entry.on_chip_copy_bytes += n * size;
                        }
                    } else {
                        entry.off_chip_bytes += n * size;
                    }
                }
                Statement::Store { tensor, value, .. } => {
                    let (chip, size) = info(tensor);
                    if !chip {
                        entry.off_chip_bytes += n * size;
                    } else if options.count_all_onchip
                        || (nest.kind.is_copy_kind() && on_chip_values.contains(value.as_str()))
                    {
                        entry.on_chip_copy_bytes += n * size;
                    }
                }
                Statement::Memcopy { dst, src, .. } => {
                    let (dchip, dsize) = info(dst);
                    let (schip, ssize) = info(src);
                    match (schip, dchip) {
                        (true, true) if options.interbank_via_dram => entry.off_chip_bytes += 2 * n * dsize,
                        (true, true) => entry.on_chip_copy_bytes += n * dsize,
                        _ => {
                            if !schip {
                                entry.off_chip_bytes += n * ssize;
                            } else if options.count_all_onchip {
                                entry.on_chip_copy_bytes += n * ssize;
                            }
                            if !dchip {
                                entry.off_chip_bytes += n * dsize;
                            } else if options.count_all_onchip {
                                entry.on_chip_copy_bytes += n * dsize;
                            }
                        }
                    }
                }
                Statement::Compute { .. } => {}
            }
        }
        report.off_chip_bytes += entry.off_chip_bytes;
        report.on_chip_copy_bytes += entry.on_chip_copy_bytes;
        report.per_nest.push(entry);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDelta {
    pub before: u64,
    pub after: u64,
    pub delta: i64,
    /// `100 · (after − before) / before`; `None` when `before` is zero.
    pub percent: Option<f64>,
}

impl FieldDelta {
    pub fn new(before: u64, after: u64) -> Self {
        let delta = after as i64 - before as i64;
        let percent = (before != 0).then(|| 100.0 * delta as f64 / before as f64);
        FieldDelta { before, after, delta, percent }
    }
}

pub type Comparison = BTreeMap<&'static str, FieldDelta>;

pub fn compare(before: &TrafficReport, after: &TrafficReport) -> Comparison {
    let fields = |r: &TrafficReport| {
        [
            ("off_chip_bytes", r.off_chip_bytes),
            ("on_chip_copy_bytes", r.on_chip_copy_bytes),
            ("intermediate_tensor_bytes", r.intermediate_tensor_bytes),
            ("copy_pairs_total", r.copy_pairs_total),
            ("copy_pairs_eliminated", r.copy_pairs_eliminated),
            ("memcopies_inserted", r.memcopies_inserted),
        ]
    };
    fields(before).into_iter().zip(fields(after)).map(|((k, b), (_, a))| (k, FieldDelta::new(b, a))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn copy_nest(src_loc: &str) -> Program {
        parse(&format!(
            "tensor %a : 4x[10, 100] {src_loc} input
tensor %b : 4x[10, 100] @sbuf output
nest c kind=copy (i0 in 0..10, i1 in 0..100) {{
  %v = load %a[i0, i1]
  store %b[i0, i1] = %v
}}"
        ))
        .unwrap()
    }

    #[test]
    fn on_chip_copy_counts_once() {
        let r = account(&copy_nest("@sbuf"), &TrafficOptions::default());
        assert_eq!((r.on_chip_copy_bytes, r.off_chip_bytes), (4000, 0));
        assert_eq!(r.copy_pairs_total, 1);
        let all = account(&copy_nest("@sbuf"), &TrafficOptions { count_all_onchip: true, ..Default::default() });
        assert_eq!(all.on_chip_copy_bytes, 8000);
    }

    #[test]
    fn off_chip_source_counts_load() {
        let r = account(&copy_nest("@dram"), &TrafficOptions::default());
        assert_eq!((r.on_chip_copy_bytes, r.off_chip_bytes), (0, 4000));
    }

    #[test]
    fn memcopy_between_banks() {
        let p = parse(
            "tensor %a : 4x[8, 4] @sbuf input
tensor %b : 4x[8, 4] @sbuf output
nest m kind=copy (i0 in 0..8, i1 in 0..4) {
  memcopy %b <- %a
}",
        )
        .unwrap();
        assert_eq!(account(&p, &TrafficOptions::default()).on_chip_copy_bytes, 128);
        let via = account(&p, &TrafficOptions { interbank_via_dram: true, ..Default::default() });
        assert_eq!((via.on_chip_copy_bytes, via.off_chip_bytes), (0, 256));
    }

    #[test]
    fn empty_program_is_zero() {
        let r = account(&Program::default(), &TrafficOptions::default());
        assert_eq!(r, TrafficReport::default());
    }

    #[test]
    fn compare_percentages() {
        let mk = |on| TrafficReport { on_chip_copy_bytes: on, ..Default::default() };
        let c = compare(&mk(100), &mk(24));
        assert_eq!(c["on_chip_copy_bytes"].percent, Some(-76.0));
        assert_eq!(c["on_chip_copy_bytes"].delta, -76);
        assert_eq!(c["off_chip_bytes"].percent, None);
        let same = compare(&mk(5), &mk(5));
        assert_eq!(same["on_chip_copy_bytes"].percent, Some(0.0));
    }
}
