use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use memopt::bankmap::{AnchorRegistry, DEFAULT_BANKS};
use memopt::frontend::{self, MappingMode, PassSpec, ReportDocument};
use memopt::interp;
use memopt::ir::{validate, Program};
use memopt::traffic::TrafficOptions;

#[derive(Parser)]
#[command(name = "memopt", version, about = "Data-movement elimination and bank mapping for loop-nest tensor programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run passes over a program and report traffic before and after.
    Optimize {
        input: PathBuf,
        /// Passes in order; repeat the flag or separate with commas.
        #[arg(long = "pass", value_delimiter = ',', required = true)]
        passes: Vec<Pass>,
        #[arg(long, value_enum, default_value_t = Mode::Global)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_BANKS, value_parser = clap::value_parser!(u32).range(1..))]
        banks: u32,
        /// Anchor registry TOML; the built-in one is used otherwise.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[command(flatten)]
        accounting: Accounting,
        /// Optimized program; not written when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSON report; standard output when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check two programs agree on random inputs.
    Verify {
        left: PathBuf,
        right: PathBuf,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Traffic of a program with no passes applied.
    Report {
        input: PathBuf,
        #[command(flatten)]
        accounting: Accounting,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit a synthetic workload.
    Gen {
        #[command(subcommand)]
        workload: Workload,
    },
}

#[derive(Subcommand)]
enum Workload {
    /// Compute chain with copy nests holding COPY_PAIRS load-store pairs.
    Wavenet {
        copy_pairs: usize,
        non_invertible: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convolution blocks separated by transposes.
    Resnet {
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        blocks: u64,
        transposes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random DAG mixing every copy kind.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Accounting {
    /// Count every on-chip load and store.
    #[arg(long)]
    count_all_onchip: bool,
    /// Inter-bank copies transit main memory.
    #[arg(long)]
    interbank_via_dram: bool,
}

impl From<&Accounting> for TrafficOptions {
    fn from(a: &Accounting) -> Self {
        TrafficOptions { count_all_onchip: a.count_all_onchip, interbank_via_dram: a.interbank_via_dram }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Pass {
    Dme,
    Bankmap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Global,
    Local,
}

/// A diagnostic: printed to stderr, exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn load(path: &Path) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let program = frontend::parse(&text).map_err(|e| Failure(format!("{}:{e}", path.display())))?;
    let violations = validate(&program);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("{}: {v}", path.display())).collect();
        return Err(Failure(lines.join("\n")));
    }
    Ok(program)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text.trim_end()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Optimize { input, passes, mode, banks, registry, accounting, output, report } => {
            let program = load(&input)?;
            let registry = match registry {
                Some(p) => AnchorRegistry::load(&p)?,
                None => AnchorRegistry::default(),
            };
            let mode = match mode {
                Mode::Global => MappingMode::Global,
                Mode::Local => MappingMode::Local,
            };
            let specs: Vec<PassSpec> = passes
                .iter()
                .map(|p| match p {
                    Pass::Dme => PassSpec::Dme,
                    Pass::Bankmap => PassSpec::Bankmap { mode, banks },
                })
                .collect();
            let name = input.display().to_string();
            let (optimized, doc) = frontend::optimize(name, &program, &specs, &registry, (&accounting).into())?;
            if let Some(out) = &output {
                emit(Some(out), &frontend::print(&optimized))?;
            }
            emit(report.as_deref(), &doc.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { left, right, trials, seed } => {
            let (a, b) = (load(&left)?, load(&right)?);
            let result = interp::equivalent(&a, &b, trials, seed)?;
            let json = serde_json::json!({
                "equivalent": result.equivalent,
                "trials": result.trials,
                "seed": seed,
                "counterexample": result.counterexample.as_ref().map(|c| serde_json::json!({
                    "trial": c.trial,
                    "seed": c.seed,
                    "tensor": c.tensor,
                    "index": c.index,
                    "left": c.left,
                    "right": c.right,
                })),
            });
            emit(None, &serde_json::to_string_pretty(&json)?)?;
            Ok(if result.equivalent { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Report { input, accounting, output } => {
            let program = load(&input)?;
            let doc = ReportDocument::traffic_only(input.display().to_string(), &program, (&accounting).into());
            emit(output.as_deref(), &doc.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { workload } => {
            let (program, output) = match workload {
                Workload::Wavenet { copy_pairs, non_invertible, seed, output } => {
                    if non_invertible > copy_pairs {
                        return Err(Failure("non_invertible must not exceed copy_pairs".into()));
                    }
                    (frontend::generate_wavenet_analog(copy_pairs, non_invertible, seed), output)
                }
                Workload::Resnet { blocks, transposes, seed, output } => {
                    (frontend::generate_resnet_analog(blocks as usize, transposes, seed), output)
                }
                Workload::Random { seed, output } => (frontend::generate_random(seed), output),
            };
            emit(output.as_deref(), &frontend::print(&program))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
