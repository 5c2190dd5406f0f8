//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on input errors, 2 when verification fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::BenchSpec;
use crate::circuit::{parse_circuit, Circuit};
use crate::conversion::{to_control_phase_form, ConvertedCircuit};
use crate::graphs::{build_extrinsic_conflicts, build_intrinsic_conflicts, build_packing_graph, export_dot, Level};
use crate::plan::{AuxCount, PackingPlan};
use crate::solver::{run_pipeline, MvcMode, PipelineResult, SolverOptions};
use crate::verifier::{verify_converted, VerifyError, VerifyStatus};

#[derive(Debug, Parser)]
#[command(name = "dqc-packer", version, about = "Pack global gates of a bipartite circuit into shared-ebit processes")]
pub struct Cli {
    /// Worker threads for parallel passes.
    #[arg(long, global = true, env = "DQC_PACKER_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a circuit and report the packing.
    Pack(PackArgs),
    /// Generate a benchmark circuit.
    Gen(GenArgs),
    /// Write packing and conflict graphs as DOT files.
    Graphs(GraphsArgs),
    /// Check a stored plan against a circuit.
    VerifyPlan(VerifyPlanArgs),
}

/// Per-side aux limits; a missing side is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuxLimits {
    pub a: Option<usize>,
    pub b: Option<usize>,
}

pub fn parse_aux_limits(s: &str) -> Result<AuxLimits, String> {
    let mut out = AuxLimits::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (side, value) = part.split_once('=').ok_or_else(|| format!("expected SIDE=N, got '{part}'"))?;
        let n: usize = value.trim().parse().map_err(|_| format!("invalid count '{value}'"))?;
        if n < 1 {
            return Err(format!("limit for {side} must be at least 1"));
        }
        match side.trim() {
            "A" | "a" => out.a = Some(n),
            "B" | "b" => out.b = Some(n),
            other => return Err(format!("unknown side '{other}'")),
        }
    }
    if out.a.is_none() && out.b.is_none() {
        return Err("no limits given".into());
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Vertex-cover strategy.
    #[arg(long, value_enum, default_value_t = MvcMode::Auto)]
    pub mvc: MvcMode,
    /// Seed for randomized cover restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the extended-embedding pass.
    #[arg(long)]
    pub no_extended: bool,
}

impl SolveArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions { mvc: self.mvc, seed: self.seed, extended: !self.no_extended }
    }
}

#[derive(Debug, Args)]
pub struct PackArgs {
    pub input: PathBuf,
    /// Simulate the plan and compare against the circuit unitary.
    #[arg(long)]
    pub verify: bool,
    /// Aux limits, e.g. `A=1,B=1`.
    #[arg(long, value_parser = parse_aux_limits)]
    pub aux_limit: Option<AuxLimits>,
    #[arg(long, value_name = "DIR")]
    pub emit_dot: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub plan: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Write the control-phase form in the circuit format.
    #[arg(long, value_name = "PATH")]
    pub dump_converted: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dump_packets: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub family: GenFamily,
    /// Output path; stdout when absent.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenFamily {
    /// UCC-style ansatz with every single and double excitation.
    Ucc {
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Layered random circuit.
    Random {
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[arg(long, default_value_t = 0.5)]
        p_two: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct GraphsArgs {
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Args)]
pub struct VerifyPlanArgs {
    pub circuit: PathBuf,
    pub plan: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Verification(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VerificationOutcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSummary {
    pub status: VerificationOutcome,
    pub branches: u128,
    pub max_deviation: f64,
    pub phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monotonicity {
    pub baseline: usize,
    pub neighbouring_only: usize,
    pub full: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub qubits: usize,
    pub depth: usize,
    pub global_gates: usize,
    pub ebits: usize,
    pub aux: AuxCount,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_limits: Option<AuxCount>,
    pub monotonicity: Monotonicity,
    pub packets: usize,
    pub intrinsic_conflicts: usize,
    pub removed_embeddings: usize,
    pub extended_embeddings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
}

fn read_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    parse_circuit(&text).map_err(|e| input_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| input_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| input_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn verify_summary(converted: &ConvertedCircuit, plan: &PackingPlan) -> VerificationSummary {
    let fail = |detail: String, dev: f64| VerificationSummary {
        status: VerificationOutcome::Fail,
        branches: 0,
        max_deviation: dev,
        phase: 0.0,
        detail: Some(detail),
    };
    match verify_converted(converted, plan) {
        Ok(r) => VerificationSummary {
            status: if r.status == VerifyStatus::Pass { VerificationOutcome::Pass } else { VerificationOutcome::Fail },
            branches: r.branches,
            max_deviation: r.max_deviation,
            phase: r.phase,
            detail: None,
        },
        Err(VerifyError::TooLarge { wires }) => VerificationSummary {
            status: VerificationOutcome::Skipped,
            branches: 0,
            max_deviation: 0.0,
            phase: 0.0,
            detail: Some(format!("{wires} wires exceed the simulation limit")),
        },
        Err(e @ VerifyError::BranchMismatch { deviation, .. }) => fail(e.to_string(), deviation),
        Err(e) => fail(e.to_string(), f64::INFINITY),
    }
}

fn write_dots(dir: &Path, converted: &ConvertedCircuit, result: &PipelineResult) -> Result<(), CliError> {
    let packing = build_packing_graph(&result.packets.packets, converted).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&dir.join("packing.dot"), &export_dot(&packing))?;
    let intrinsic = build_intrinsic_conflicts(&result.packets.packets, converted, Level::Packet);
    write_file(&dir.join("conflict_intrinsic.dot"), &export_dot(&intrinsic))?;
    let [ext_a, ext_b] = build_extrinsic_conflicts(&result.plan.roots, converted);
    write_file(&dir.join("conflict_extrinsic_A.dot"), &export_dot(&ext_a))?;
    write_file(&dir.join("conflict_extrinsic_B.dot"), &export_dot(&ext_b))?;
    Ok(())
}

fn solve(converted: &ConvertedCircuit, limits: Option<AuxLimits>, options: &SolverOptions) -> Result<PipelineResult, CliError> {
    let cap = converted.global_nodes().count().max(1);
    let limits = limits.map(|l| AuxCount { a: l.a.unwrap_or(cap), b: l.b.unwrap_or(cap) });
    run_pipeline(converted, limits.as_ref(), options).map_err(|e| CliError::Input(e.to_string()))
}

pub fn cmd_pack(args: &PackArgs, out: &mut dyn Write) -> Result<Report, CliError> {
    let circuit = read_circuit(&args.input)?;
    let converted = to_control_phase_form(&circuit).map_err(|e| input_err(&args.input, e))?;
    if let Some(p) = &args.dump_converted {
        write_file(p, (converted.to_circuit().to_json() + "\n").as_bytes())?;
    }
    let result = solve(&converted, args.aux_limit, &args.solve.options())?;
    if let Some(p) = &args.dump_packets {
        write_file(p, &to_json(&result.packets))?;
    }
    if let Some(dir) = &args.emit_dot {
        write_dots(dir, &converted, &result)?;
    }
    if let Some(p) = &args.plan {
        write_file(p, &to_json(&result.plan))?;
    }
    let plan = &result.plan;
    let report = Report {
        qubits: circuit.n_qubits(),
        depth: circuit.depth(),
        global_gates: circuit.global_gate_count(),
        ebits: plan.ebits,
        aux: plan.aux_required,
        aux_limits: args.aux_limit.map(|l| {
            let cap = result.baseline.max(1);
            AuxCount { a: l.a.unwrap_or(cap), b: l.b.unwrap_or(cap) }
        }),
        monotonicity: Monotonicity {
            baseline: result.baseline,
            neighbouring_only: result.neighbour_only_ebits,
            full: result.full_ebits,
        },
        packets: result.packets.packets.len(),
        intrinsic_conflicts: result.intrinsic_conflicts,
        removed_embeddings: plan.removed_embeddings.len(),
        extended_embeddings: plan.extended.len(),
        verification: args.verify.then(|| verify_summary(&converted, plan)),
    };
    if let Some(p) = &args.report {
        write_file(p, &to_json(&report))?;
    }
    let io = |e: std::io::Error| CliError::Input(e.to_string());
    if args.json {
        out.write_all(&to_json(&report)).map_err(io)?;
    } else {
        writeln!(out, "circuit: {} qubits, depth {}, {} global gates", report.qubits, report.depth, report.global_gates)
            .map_err(io)?;
        writeln!(
            out,
            "ebits: {} (neighbouring-only {}, baseline {})",
            report.ebits, report.monotonicity.neighbouring_only, report.monotonicity.baseline
        )
        .map_err(io)?;
        writeln!(out, "aux: A={} B={}", report.aux.a, report.aux.b).map_err(io)?;
        if let Some(v) = &report.verification {
            writeln!(out, "verification: {:?} ({} branches, max deviation {:.2e})", v.status, v.branches, v.max_deviation)
                .map_err(io)?;
        }
    }
    if let Some(v) = &report.verification {
        if v.status == VerificationOutcome::Fail {
            return Err(CliError::Verification(v.detail.clone().unwrap_or_default()));
        }
    }
    Ok(report)
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = match args.family {
        GenFamily::Ucc { qubits, seed } => BenchSpec::ucc(qubits, seed),
        GenFamily::Random { qubits, depth, p_two, seed } => BenchSpec::random(qubits, depth, p_two, seed),
    };
    let circuit = spec.generate().map_err(|e| CliError::Input(e.to_string()))?;
    let text = circuit.to_json() + "\n";
    match &args.output {
        Some(p) => write_file(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Input(e.to_string())),
    }
}

pub fn cmd_graphs(args: &GraphsArgs) -> Result<(), CliError> {
    let circuit = read_circuit(&args.input)?;
    let converted = to_control_phase_form(&circuit).map_err(|e| input_err(&args.input, e))?;
    let result = solve(&converted, None, &args.solve.options())?;
    write_dots(&args.out, &converted, &result)
}

pub fn cmd_verify_plan(args: &VerifyPlanArgs, out: &mut dyn Write) -> Result<VerificationSummary, CliError> {
    let circuit = read_circuit(&args.circuit)?;
    let converted = to_control_phase_form(&circuit).map_err(|e| input_err(&args.circuit, e))?;
    let text = fs::read_to_string(&args.plan).map_err(|e| input_err(&args.plan, e))?;
    let plan: PackingPlan = serde_json::from_str(&text).map_err(|e| input_err(&args.plan, e))?;
    let summary = verify_summary(&converted, &plan);
    out.write_all(&to_json(&summary)).map_err(|e| CliError::Input(e.to_string()))?;
    match summary.status {
        VerificationOutcome::Pass => Ok(summary),
        VerificationOutcome::Fail => Err(CliError::Verification(summary.detail.unwrap_or_default())),
        VerificationOutcome::Skipped => Err(CliError::Input(summary.detail.unwrap_or_default())),
    }
}

/// Run a parsed command line, writing normal output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        // A pool may already exist when embedded; that is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Pack(a) => cmd_pack(a, out).map(|_| ()),
        Command::Gen(a) => cmd_gen(a, out),
        Command::Graphs(a) => cmd_graphs(a),
        Command::VerifyPlan(a) => cmd_verify_plan(a, out).map(|_| ()),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_exit() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aux_limit_syntax() {
        assert_eq!(parse_aux_limits("A=1,B=2"), Ok(AuxLimits { a: Some(1), b: Some(2) }));
        assert_eq!(parse_aux_limits("B=3"), Ok(AuxLimits { a: None, b: Some(3) }));
        assert!(parse_aux_limits("A=0").is_err());
        assert!(parse_aux_limits("C=1").is_err());
        assert!(parse_aux_limits("").is_err());
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from(["dqc-packer", "pack", "x.json", "--verify", "--aux-limit", "A=1,B=1", "--mvc", "greedy"])
            .unwrap();
        let Command::Pack(p) = cli.command else { panic!("pack expected") };
        assert!(p.verify);
        assert_eq!(p.solve.mvc, MvcMode::Greedy);
        assert!(Cli::try_parse_from(["dqc-packer", "gen", "random", "--depth", "3"]).is_ok());
    }
}
