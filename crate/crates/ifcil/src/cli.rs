//! The user-facing command: load a configuration and flow table, normalize,
//! build the semantics, verify, and report.
//!
//! Exit codes: 0 when every requirement is satisfied, 1 when any is
//! violated, 2 when the only failures are unknown verdicts, 10 for
//! configuration or I/O problems, 11 for parse errors, 12 for normalization
//! errors, 13 for semantics errors. Warnings always go to the diagnostic
//! stream.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::flow::FlowTable;
use crate::graph::{build_graph, build_ifd, collect_requirements, resolve_typeattributes};
use crate::ifl::{LabeledRequirement, Requirement};
use crate::kts::{build_kts, Kts};
use crate::normalize::normalize;
use crate::nusmv::{add_sink, attr_defines, emit};
use crate::oracle;
use crate::parser::parse_config;
use crate::verify::{check_all, Outcome, Verdict, WitnessStep};

/// Steps shown in the human-readable report before eliding.
const WITNESS_CAP: usize = 20;
/// Largest system the brute-force oracle accepts without `--force`.
const ORACLE_TYPE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Oracle,
    EmitNusmv(PathBuf),
    DumpNormalized,
    DumpGraph,
}

/// Everything one run needs; exactly one mode is active.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub flows: Option<PathBuf>,
    pub strict_flows: bool,
    pub mode: Mode,
    pub report: Option<PathBuf>,
    pub force: bool,
    /// Mirror attribute-level permission arcs onto all member types before
    /// deriving flows.
    pub close_attr_arcs: bool,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_CONFIG: i32 = 10;
pub const EXIT_PARSE: i32 = 11;
pub const EXIT_NORMALIZE: i32 = 12;
pub const EXIT_SEMANTICS: i32 = 13;

fn render_witness(steps: &[WitnessStep], cap: Option<usize>) -> String {
    let shown = cap.map(|c| c.min(steps.len())).unwrap_or(steps.len());
    let mut out = steps[0].src.to_string();
    for step in &steps[..shown] {
        out.push_str(&format!(" -[{}]-> {}", step.op, step.dst));
    }
    if shown < steps.len() {
        out.push_str(" ...");
    }
    out
}

fn outcome_word(outcome: &Outcome) -> &'static str {
    match outcome {
        Outcome::Satisfied => "SATISFIED",
        Outcome::Violated => "VIOLATED",
        Outcome::Unknown(_) => "UNKNOWN",
    }
}

fn exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.outcome == Outcome::Violated) {
        EXIT_VIOLATED
    } else if verdicts.iter().any(|v| matches!(v.outcome, Outcome::Unknown(_))) {
        EXIT_UNKNOWN
    } else {
        EXIT_OK
    }
}

fn machine_report(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        out.push_str(&format!("label: {}\n", v.label));
        out.push_str(&format!("requirement: {}\n", v.requirement));
        out.push_str(&format!("outcome: {}\n", outcome_word(&v.outcome).to_lowercase()));
        if let Outcome::Unknown(reason) = &v.outcome {
            out.push_str(&format!("reason: {reason}\n"));
        }
        if let Some(witness) = &v.witness {
            out.push_str(&format!("witness: {}\n", render_witness(witness, None)));
        }
        out.push('\n');
    }
    out
}

fn oracle_verdicts(ifd: &crate::graph::Ifd, reqs: &[LabeledRequirement]) -> Vec<Verdict> {
    reqs.iter()
        .map(|labeled| {
            let holds = oracle::oracle_holds(ifd, &labeled.requirement);
            let witness = match (&labeled.requirement, holds) {
                (Requirement::Exists(kind), true) => oracle::find_path_of_kind(ifd, kind),
                (Requirement::Prohibit(kind), false) => oracle::find_path_of_kind(ifd, kind),
                (Requirement::Constraint(p, q), false) => {
                    oracle::find_constraint_counterexample(ifd, p, q)
                }
                _ => None,
            }
            .map(|path| {
                path.into_iter()
                    .map(|arc| WitnessStep {
                        src: arc.src,
                        // Pick the smallest operation of the arc for display.
                        op: arc.ops.iter().next().cloned().unwrap_or_default(),
                        dst: arc.dst,
                    })
                    .collect::<Vec<_>>()
            });
            Verdict {
                label: labeled.label.clone(),
                requirement: labeled.requirement.clone(),
                outcome: if holds { Outcome::Satisfied } else { Outcome::Violated },
                witness,
            }
        })
        .collect()
}

/// Runs one invocation, writing reports to `out` and diagnostics to `diag`.
/// Returns the process exit code.
pub fn run(config: &RunConfig, out: &mut dyn Write, diag: &mut dyn Write) -> i32 {
    macro_rules! fail {
        ($code:expr, $($arg:tt)*) => {{
            let _ = writeln!(diag, "error: {}", format!($($arg)*));
            return $code;
        }};
    }
    macro_rules! warn_all {
        ($warnings:expr) => {
            for w in $warnings {
                let _ = writeln!(diag, "warning: {w}");
            }
        };
    }

    let text = match fs::read_to_string(&config.input) {
        Ok(t) => t,
        Err(e) => fail!(EXIT_CONFIG, "cannot read {}: {e}", config.input.display()),
    };
    let parsed = match parse_config(&text) {
        Ok(p) => p,
        Err(e) => fail!(EXIT_PARSE, "{e}"),
    };
    warn_all!(&parsed.warnings);
    let normalized = match normalize(&parsed.gamma) {
        Ok(n) => n,
        Err(e) => fail!(EXIT_NORMALIZE, "{e}"),
    };
    warn_all!(&normalized.warnings);
    let gamma = normalized.gamma;

    if config.mode == Mode::DumpNormalized {
        let _ = write!(out, "{gamma}");
        return EXIT_OK;
    }

    let table = match &config.flows {
        Some(path) => {
            let flow_text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => fail!(EXIT_CONFIG, "cannot read {}: {e}", path.display()),
            };
            match FlowTable::parse(&flow_text, !config.strict_flows) {
                Ok(t) => t,
                Err(e) => fail!(EXIT_CONFIG, "{}: {e}", path.display()),
            }
        }
        None => {
            let _ = writeln!(diag, "warning: no flow table given; using the built-in defaults");
            FlowTable::defaults()
        }
    };

    let (graph, graph_warnings) = match build_graph(&gamma) {
        Ok(g) => g,
        Err(e) => fail!(EXIT_SEMANTICS, "{e}"),
    };
    warn_all!(&graph_warnings);
    let graph = if config.close_attr_arcs { graph.close_attribute_arcs() } else { graph };

    if config.mode == Mode::DumpGraph {
        for ((src, dst), ops) in &graph.arcs {
            let names: Vec<&str> = ops.keys().map(String::as_str).collect();
            let _ = writeln!(out, "{src} {} {dst}", names.join(","));
        }
        return EXIT_OK;
    }

    let reqs = match collect_requirements(&gamma, &graph) {
        Ok(r) => r,
        Err(e) => fail!(EXIT_SEMANTICS, "{e}"),
    };
    let (ifd, ifd_warnings) = match build_ifd(&graph, &table, config.strict_flows) {
        Ok(i) => i,
        Err(e) => fail!(EXIT_SEMANTICS, "{e}"),
    };
    warn_all!(&ifd_warnings);
    let kts: Kts = build_kts(&ifd);

    if let Mode::EmitNusmv(path) = &config.mode {
        let resolution = resolve_typeattributes(&gamma);
        let defines = attr_defines(&gamma, &resolution);
        let text = match emit(&add_sink(&kts), &defines, &reqs) {
            Ok(t) => t,
            Err(e) => fail!(EXIT_SEMANTICS, "{e}"),
        };
        if let Err(e) = fs::write(path, text) {
            fail!(EXIT_CONFIG, "cannot write {}: {e}", path.display());
        }
        return EXIT_OK;
    }

    let verdicts = match config.mode {
        Mode::Oracle => {
            if kts.len() > ORACLE_TYPE_LIMIT && !config.force {
                fail!(
                    EXIT_CONFIG,
                    "oracle mode refused: {} types exceed the limit of {ORACLE_TYPE_LIMIT} (use --force to override)",
                    kts.len()
                );
            }
            oracle_verdicts(&ifd, &reqs)
        }
        _ => check_all(&kts, &reqs),
    };

    for v in &verdicts {
        let _ = writeln!(out, "{}: {}", v.label, outcome_word(&v.outcome));
        if let Outcome::Unknown(reason) = &v.outcome {
            let _ = writeln!(out, "  {reason}");
        }
        if let Some(witness) = &v.witness {
            let _ = writeln!(out, "  {}", render_witness(witness, Some(WITNESS_CAP)));
        }
    }

    if let Some(path) = &config.report {
        if let Err(e) = fs::write(path, machine_report(&verdicts)) {
            fail!(EXIT_CONFIG, "cannot write {}: {e}", path.display());
        }
    }

    exit_code(&verdicts)
}
