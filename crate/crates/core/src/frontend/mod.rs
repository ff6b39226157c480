//! Textual IR, workload generators, configuration and reports.

mod gen;
mod report;
mod text;

pub use crate::bankmap::{AnchorRegistry, RegistryError};
pub use gen::{generate_random, generate_resnet_analog, generate_wavenet_analog, CopyVariant};
pub use report::{
    optimize, AccountingOptions, MappingMode, PassResult, PassSpec, PipelineError, ReportDocument, ToolInfo,
    REPORT_SCHEMA, SCHEMA_VERSION,
};
pub use text::{parse, print, ParseError};
