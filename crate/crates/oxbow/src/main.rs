use clap::{Args, Parser, Subcommand};
use oxbow::metrics::{primal_gap, primal_integral, read_trace, shifted_geomean, write_trace};
use oxbow::model::{normalize, parse_mps};
use oxbow::{solve, SolveConfig};
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "oxbow",
    version,
    about = "Portfolio primal heuristic for mixed-integer linear programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search one MPS instance for good feasible solutions.
    Solve(SolveArgs),
    /// Evaluate a stored incumbent trace against a reference objective.
    Eval(EvalArgs),
    /// Shifted geometric mean of a list of values.
    Sgm(SgmArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// MPS file path, or "-" for stdin.
    file: String,
    /// Budget in seconds (virtual seconds with --deterministic).
    #[arg(long, default_value_t = 10.0, env = "OXBOW_TIME_LIMIT")]
    time_limit: f64,
    /// Worker threads; 0 uses all hardware threads.
    #[arg(long, default_value_t = 0, env = "OXBOW_THREADS")]
    threads: usize,
    /// Independent tabu trajectories; 0 derives from --threads.
    #[arg(long, default_value_t = 0, env = "OXBOW_TABU_INSTANCES")]
    tabu_instances: usize,
    #[arg(long, default_value_t = 0, env = "OXBOW_SEED")]
    seed: u64,
    /// LP snapshot schedule (iteration counts).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "100,1000,10000,100000",
        env = "OXBOW_CHECKPOINTS"
    )]
    checkpoints: Vec<usize>,
    /// Write the best solution here in .sol format.
    #[arg(long, env = "OXBOW_SOL_OUT")]
    sol_out: Option<PathBuf>,
    /// Write the incumbent trace here.
    #[arg(long, env = "OXBOW_TRACE_OUT")]
    trace_out: Option<PathBuf>,
    /// Single-threaded round-robin scheduling on a virtual clock.
    #[arg(long, env = "OXBOW_DETERMINISTIC")]
    deterministic: bool,
    /// Use the column-wise flip scoring sweep.
    #[arg(long, env = "OXBOW_COLUMN_WISE_FLIPS")]
    column_wise_flips: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, env = "OXBOW_TRACE")]
    trace: PathBuf,
    /// Reference objective (user sense).
    #[arg(long = "ref", env = "OXBOW_REF")]
    reference: f64,
    /// Evaluation horizon in seconds.
    #[arg(long, default_value_t = 300.0, env = "OXBOW_HORIZON")]
    horizon: f64,
}

#[derive(Args)]
struct SgmArgs {
    #[arg(long, default_value_t = 1.0, env = "OXBOW_SHIFT")]
    shift: f64,
    #[arg(required = true)]
    values: Vec<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Solve(args) => run_solve(args),
        Cmd::Eval(args) => run_eval(args),
        Cmd::Sgm(args) => {
            println!("sgm {:.6}", shifted_geomean(&args.values, args.shift));
            ExitCode::SUCCESS
        }
    }
}

fn run_solve(args: SolveArgs) -> ExitCode {
    let text = match read_input(&args.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.file);
            return ExitCode::FAILURE;
        }
    };
    let inst = match parse_mps(&text).and_then(|raw| normalize(&raw)) {
        Ok(inst) => Arc::new(inst),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!(
        "instance {} vars {} rows {} nonzeros {}",
        inst.name,
        inst.n(),
        inst.m(),
        inst.nnz()
    );

    let cfg = SolveConfig {
        time_limit: args.time_limit,
        threads: args.threads,
        tabu_instances: args.tabu_instances,
        seed: args.seed,
        checkpoints: args.checkpoints,
        deterministic: args.deterministic,
        column_wise_flips: args.column_wise_flips,
    };
    let report = solve(Arc::clone(&inst), &cfg);

    for ws in &report.workers {
        println!(
            "worker {} steps {} submissions {} wins {}",
            ws.name, ws.steps, ws.submissions, ws.wins
        );
    }
    if let Some(path) = &args.trace_out {
        if let Err(e) = write_trace(path, &report.trace) {
            eprintln!("error: cannot write trace {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    match &report.best {
        Some((point, objective)) => {
            println!("feasible objective {objective}");
            if let Some(path) = &args.sol_out {
                if let Err(e) = std::fs::write(path, inst.format_sol(point)) {
                    eprintln!("error: cannot write solution {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        None => {
            match report.best_violation {
                Some(v) => println!("no feasible solution; best partial violation {v}"),
                None => println!("no feasible solution"),
            }
            ExitCode::from(2)
        }
    }
}

fn run_eval(args: EvalArgs) -> ExitCode {
    let trace = match read_trace(&args.trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let gap = trace
        .last()
        .map_or(1.0, |e| primal_gap(e.objective, args.reference));
    println!("gap {gap:.6}");
    println!("pi {:.3}", primal_integral(&trace, args.reference, args.horizon));
    ExitCode::SUCCESS
}

fn read_input(path: &str) -> std::io::Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path)
    }
}
