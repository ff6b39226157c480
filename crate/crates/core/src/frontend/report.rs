//! Pass pipelines and the JSON report they produce.

use serde::Serialize;
use thiserror::Error;

use crate::bankmap::{self, AnchorRegistry, InsertionReport, SeedError};
use crate::dme::{self, EliminationRecord};
use crate::ir::Program;
use crate::traffic::{self, Comparison, TrafficOptions, TrafficReport};

pub const SCHEMA_VERSION: u32 = 1;

/// The published JSON schema for [`ReportDocument`].
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "pass", rename_all = "snake_case")]
pub enum PassSpec {
    Dme,
    Bankmap { mode: MappingMode, banks: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "pass", rename_all = "snake_case")]
pub enum PassResult {
    Dme {
        iterations: usize,
        eliminated: usize,
        skipped: usize,
        records: Vec<EliminationRecord>,
    },
    Bankmap {
        mode: MappingMode,
        banks: u32,
        /// Propagation rounds; absent for the local baseline.
        rounds: Option<usize>,
        level_changes: Option<usize>,
        #[serde(flatten)]
        insertions: InsertionReport,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AccountingOptions {
    pub count_all_onchip: bool,
    pub interbank_via_dram: bool,
}

impl From<TrafficOptions> for AccountingOptions {
    fn from(o: TrafficOptions) -> Self {
        AccountingOptions { count_all_onchip: o.count_all_onchip, interbank_via_dram: o.interbank_via_dram }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub schema: u32,
    pub tool: ToolInfo,
    pub input: String,
    pub accounting: AccountingOptions,
    pub pipeline: Vec<PassSpec>,
    pub passes: Vec<PassResult>,
    pub before: TrafficReport,
    pub after: Option<TrafficReport>,
    pub compare: Option<Comparison>,
}

impl ReportDocument {
    /// Traffic of a program with no passes applied.
    pub fn traffic_only(input: impl Into<String>, program: &Program, options: TrafficOptions) -> Self {
        ReportDocument {
            schema: SCHEMA_VERSION,
            tool: ToolInfo::default(),
            input: input.into(),
            accounting: options.into(),
            pipeline: Vec::new(),
            passes: Vec::new(),
            before: traffic::account(program, &options),
            after: None,
            compare: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Seed(#[from] SeedError),
}

/// Runs `passes` in order and reports traffic before and after.
pub fn optimize(
    input: impl Into<String>,
    program: &Program,
    passes: &[PassSpec],
    registry: &AnchorRegistry,
    options: TrafficOptions,
) -> Result<(Program, ReportDocument), PipelineError> {
    let mut doc = ReportDocument::traffic_only(input, program, options);
    doc.pipeline = passes.to_vec();
    let mut current = program.clone();
    let (mut eliminated, mut inserted) = (0, 0);
    for pass in passes {
        let result = match *pass {
            PassSpec::Dme => {
                let out = dme::run_dme(&current);
                let n = out.eliminated().count();
                eliminated += n;
                current = out.program;
                PassResult::Dme {
                    iterations: out.iterations,
                    eliminated: n,
                    skipped: out.records.len() - n,
                    records: out.records,
                }
            }
            PassSpec::Bankmap { mode, banks } => {
                let (next, insertions, prop) = match mode {
                    MappingMode::Global => {
                        let (p, r, prop) = bankmap::run_global(&current, registry, banks)?;
                        (p, r, Some(prop))
                    }
                    MappingMode::Local => {
                        let (p, r) = bankmap::run_local_baseline(&current, registry, banks)?;
                        (p, r, None)
                    }
                };
                inserted += insertions.memcopies_inserted();
                current = next;
                PassResult::Bankmap {
                    mode,
                    banks,
                    rounds: prop.as_ref().map(|p| p.rounds),
                    level_changes: prop.as_ref().map(|p| p.level_changes),
                    insertions,
                }
            }
        };
        doc.passes.push(result);
    }
    let mut after = traffic::account(&current, &options);
    after.copy_pairs_eliminated = eliminated as u64;
    after.memcopies_inserted = inserted as u64;
    doc.compare = Some(traffic::compare(&doc.before, &after));
    doc.after = Some(after);
    Ok((current, doc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::generate_wavenet_analog;

    #[test]
    fn wavenet_dme_report() {
        let p = generate_wavenet_analog(10, 1, 4);
        let (out, doc) = optimize("w.ir", &p, &[PassSpec::Dme], &AnchorRegistry::default(), TrafficOptions::default())
            .unwrap();
        let after = doc.after.as_ref().unwrap();
        assert_eq!(after.copy_pairs_eliminated, 9);
        assert_eq!(after.copy_pairs_total, 1);
        assert_eq!(out.nests.len(), p.nests.len() - 9);
        let json: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["passes"][0]["pass"], "dme");
        assert_eq!(json["pipeline"][0]["pass"], "dme");
    }

    #[test]
    fn empty_report_is_zeroed() {
        let doc = ReportDocument::traffic_only("-", &Program::default(), TrafficOptions::default());
        let json: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(json["before"]["off_chip_bytes"], 0);
        assert_eq!(json["before"]["on_chip_copy_bytes"], 0);
        assert!(json["after"].is_null());
    }
}
