use std::io::{stderr, stdout};
use std::path::PathBuf;
use std::process::exit;

use clap::Parser;

use ifcil::cli::{run, Mode, RunConfig};

/// Verifies information-flow requirements annotated in a CIL configuration.
#[derive(Parser)]
#[command(name = "ifcil", version, about)]
struct Args {
    /// Configuration file to verify.
    input: PathBuf,

    /// Flow-direction table (one `<key> <forward|backward|both|none>` per
    /// line); built-in defaults apply when omitted.
    #[arg(long)]
    flows: Option<PathBuf>,

    /// Require an explicit flow-table entry for every operation.
    #[arg(long)]
    strict_flows: bool,

    /// Write the model-checker input file instead of verifying.
    #[arg(long, value_name = "PATH", group = "mode")]
    emit_nusmv: Option<PathBuf>,

    /// Print the normal form instead of verifying.
    #[arg(long, group = "mode")]
    dump_normalized: bool,

    /// Print the permission arcs, one `src ops dst` line each.
    #[arg(long, group = "mode")]
    dump_graph: bool,

    /// Decide requirements with the brute-force oracle instead of the
    /// automaton checker; refuses large systems unless forced.
    #[arg(long, group = "mode")]
    oracle: bool,

    /// Allow the oracle on systems beyond its size limit.
    #[arg(long)]
    force: bool,

    /// Write a machine-readable report (one record per requirement).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,

    /// Mirror attribute-level permission arcs onto member types before
    /// deriving flows.
    #[arg(long)]
    close_attr_arcs: bool,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            exit(0);
        }
        Err(e) => {
            let _ = e.print();
            exit(10);
        }
    };
    let mode = if let Some(path) = args.emit_nusmv {
        Mode::EmitNusmv(path)
    } else if args.dump_normalized {
        Mode::DumpNormalized
    } else if args.dump_graph {
        Mode::DumpGraph
    } else if args.oracle {
        Mode::Oracle
    } else {
        Mode::Verify
    };
    let config = RunConfig {
        input: args.input,
        flows: args.flows,
        strict_flows: args.strict_flows,
        mode,
        report: args.report,
        force: args.force,
        close_attr_arcs: args.close_attr_arcs,
    };
    exit(run(&config, &mut stdout(), &mut stderr()));
}
