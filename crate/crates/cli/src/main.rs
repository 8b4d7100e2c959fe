//! `factsflow` command-line front end.

mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use factsflow::case_io::{self, IngestOptions, ParallelPolicy};
use factsflow::gadgets::{
    self, ChoiceBuilder, ExactCoverInstance, MonotoneChoice, PlainGeneratorChoice, TieLineChoice,
};
use factsflow::im::{self, StartPoint};
use factsflow::ldc::{self, SignPattern};
use factsflow::lp::write_mip_text;
use factsflow::maxflow;
use factsflow::mip::{self, MffConfig};
use factsflow::network::{LdcSolution, Network};
use factsflow::validate::{validate_solution, DEFAULT_TOL};

#[derive(Parser)]
#[command(
    name = "factsflow",
    version,
    about = "Maximum throughput of Linear-DC networks with FACTS devices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a MATPOWER case file to network JSON.
    Convert {
        case: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// How to treat several branches between the same two buses.
        #[arg(long, value_enum, default_value_t = Parallel::Reject)]
        parallel: Parallel,
        /// Boundary-line susceptance as a multiple of the largest branch susceptance.
        #[arg(long, default_value_t = 10.0)]
        boundary_factor: f64,
    },
    /// Classic maximum flow, ignoring the power law. Prints the value only,
    /// since the flow is generally not an LDC solution.
    Mf { net: PathBuf },
    /// Maximum power flow at fixed susceptances.
    Mpf {
        net: PathBuf,
        /// Susceptance of every FACTS line.
        #[arg(long, value_enum, default_value_t = Start::Lower)]
        at: Start,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Maximum flow with fixed angle-difference directions.
    Mvf {
        net: PathBuf,
        /// One `1` (nonnegative) or `0` (nonpositive) per line.
        #[arg(long)]
        signs: String,
        #[command(flatten)]
        out: Output,
    },
    /// Alternating MPF/MVF heuristic from one or more starts.
    Im {
        net: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "lower,upper,mid")]
        starts: Vec<Start>,
        /// Seed for `random` starts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = im::DEFAULT_REL_TOL)]
        rel_tol: f64,
        #[arg(long, default_value_t = im::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Write every run's objective trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Maximum FACTS flow by branch and bound.
    Mff {
        net: PathBuf,
        #[command(flatten)]
        mip: MipArgs,
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long)]
        big_m: Option<f64>,
        /// Start from this solution file.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Write the model in LP format.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Seeded experiment table: MPF, multi-start IM and MFF per trial.
    Scenario(scenario::ScenarioArgs),
    /// Build reduction networks.
    Encode {
        #[command(subcommand)]
        what: Encode,
    },
    /// Check a solution against a network; exit status 0 iff it is valid.
    Validate {
        net: PathBuf,
        solution: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
}

#[derive(Subcommand)]
enum Encode {
    /// Exact cover by 3-sets, from `{"elements": [...], "sets": [[a, b, c], ...]}`.
    ExactCover {
        instance: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Builder::TieLine)]
        builder: Builder,
    },
}

#[derive(Args)]
struct Output {
    /// Write the solution JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub(crate) struct MipArgs {
    /// Relative optimality gap at which branch and bound stops.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Wall-clock limit for branch and bound, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl MipArgs {
    fn config(&self) -> Result<MffConfig> {
        let time_limit = match self.time_limit {
            Some(t) if !(t >= 0.0 && t.is_finite()) => bail!("time limit must be a nonnegative number of seconds"),
            Some(t) => Some(Duration::from_secs_f64(t)),
            None => None,
        };
        Ok(MffConfig {
            gap_tol: self.gap,
            time_limit,
            ..MffConfig::default()
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Parallel {
    Reject,
    Merge,
    Split,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Start {
    Lower,
    Upper,
    Mid,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builder {
    TieLine,
    Monotone,
    PlainGenerator,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FACTSFLOW_LOG", "warn")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Convert {
            case,
            output,
            parallel,
            boundary_factor,
        } => {
            let opts = IngestOptions {
                parallel: match parallel {
                    Parallel::Reject => ParallelPolicy::Reject,
                    Parallel::Merge => ParallelPolicy::Merge,
                    Parallel::Split => ParallelPolicy::Split,
                },
                boundary_factor,
            };
            let net = case_io::load_case(&case, &opts).with_context(|| format!("reading {}", case.display()))?;
            let text = case_io::serialize_network(&net)?;
            match output {
                Some(path) => write(&path, &text)?,
                None => println!("{text}"),
            }
            eprintln!("{} buses, {} lines", net.buses.len(), net.lines.len());
        }
        Command::Mf { net } => {
            let mf = maxflow::max_flow(&read_network(&net)?)?;
            println!("objective {:.6}", mf.value);
        }
        Command::Mpf { net, at, seed, out } => {
            let net = read_network(&net)?;
            let s = im::start_susceptances(&net, start_point(at, seed, 0));
            let r = ldc::solve_mpf(&net, &s)?;
            println!("objective {:.6}", r.value);
            emit(&out, &r.solution, json!({"solver": "mpf"}))?;
        }
        Command::Mvf { net, signs, out } => {
            let net = read_network(&net)?;
            let d = parse_signs(&signs, net.lines.len())?;
            let r = ldc::solve_mvf(&net, &d)?;
            println!("objective {:.6}", r.value);
            emit(&out, &r.solution, json!({"solver": "mvf", "signs": d.bits()}))?;
        }
        Command::Im {
            net,
            starts,
            seed,
            rel_tol,
            max_iter,
            trace,
            out,
        } => {
            let net = read_network(&net)?;
            let starts: Vec<StartPoint> = starts
                .iter()
                .enumerate()
                .map(|(k, &s)| start_point(s, seed, k as u64))
                .collect();
            let ms = im::multi_start_im_from(&net, &starts, rel_tol, max_iter)?;
            for (start, run) in &ms.runs {
                eprintln!(
                    "{start:?}: {:.6} after {} iterations{}",
                    run.value,
                    run.trace.iterations,
                    if run.trace.converged { "" } else { " (not converged)" }
                );
            }
            println!("objective {:.6}", ms.best.value);
            if let Some(path) = trace {
                let runs: Vec<_> = ms
                    .runs
                    .iter()
                    .map(|(start, run)| json!({"start": start, "value": run.value, "trace": run.trace}))
                    .collect();
                write(&path, &serde_json::to_string_pretty(&runs)?)?;
            }
            let meta = json!({
                "solver": "im",
                "start": ms.best_start,
                "iterations": ms.best.trace.iterations,
            });
            emit(&out, &ms.best.solution, meta)?;
        }
        Command::Mff {
            net,
            mip: mip_args,
            node_limit,
            big_m,
            warm_start,
            dump_lp,
            out,
        } => {
            let net = read_network(&net)?;
            let config = MffConfig {
                node_limit,
                big_m,
                ..mip_args.config()?
            };
            if let Some(path) = dump_lp {
                let m = big_m.unwrap_or_else(|| mip::choose_big_m(&net));
                let model = mip::build_mff_mip(&net, m)?;
                write(&path, &write_mip_text(model.relaxation(), model.binaries()))?;
            }
            let warm = match warm_start {
                Some(path) => Some(case_io::deserialize_solution(&read(&path)?)?),
                None => None,
            };
            let r = mip::solve_mff(&net, &config, warm.as_ref())?;
            println!("objective {:.6}", r.objective);
            println!("bound {:.6}", r.best_bound);
            println!("gap {:.6}", r.gap);
            eprintln!(
                "{} nodes, {:.3} s, big-M {}{}, {:?}",
                r.nodes,
                r.wall_time.as_secs_f64(),
                r.big_m,
                if r.big_m_retried { " (retried)" } else { "" },
                r.termination
            );
            let meta = json!({
                "solver": "mff",
                "best_bound": r.best_bound,
                "gap": r.gap,
                "nodes": r.nodes,
                "wall_time_s": r.wall_time.as_secs_f64(),
                "termination": r.termination,
                "big_m": r.big_m,
            });
            emit(&out, &r.solution, meta)?;
        }
        Command::Scenario(args) => scenario::run(args)?,
        Command::Encode {
            what:
                Encode::ExactCover {
                    instance,
                    output,
                    builder,
                },
        } => {
            let inst: ExactCoverInstance =
                serde_json::from_str(&read(&instance)?).with_context(|| format!("parsing {}", instance.display()))?;
            let builder: &dyn ChoiceBuilder = match builder {
                Builder::TieLine => &TieLineChoice,
                Builder::Monotone => &MonotoneChoice,
                Builder::PlainGenerator => &PlainGeneratorChoice,
            };
            let built = gadgets::build_exact_cover_network(&inst, builder)?;
            let text = case_io::serialize_network(&built.net)?;
            match output {
                Some(path) => write(&path, &text)?,
                None => println!("{text}"),
            }
            eprintln!("target {} = {:.6}", built.target, gadgets::to_f64(built.target));
        }
        Command::Validate { net, solution, tol } => {
            let net = read_network(&net)?;
            let sol = case_io::deserialize_solution(&read(&solution)?)?;
            let report = validate_solution(&net, &sol, tol);
            if report.is_empty() {
                println!("valid, objective {:.6}", sol.objective());
            } else {
                println!("{report}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn start_point(start: Start, seed: u64, index: u64) -> StartPoint {
    match start {
        Start::Lower => StartPoint::Lower,
        Start::Upper => StartPoint::Upper,
        Start::Mid => StartPoint::Mid,
        Start::Random => StartPoint::Random(case_io::derive_seed(seed, index)),
    }
}

fn parse_signs(bits: &str, lines: usize) -> Result<SignPattern> {
    let d = bits
        .chars()
        .map(|c| match c {
            '1' | '+' => Ok(true),
            '0' | '-' => Ok(false),
            other => bail!("sign pattern may only contain 0/1 or -/+, found {other:?}"),
        })
        .collect::<Result<Vec<bool>>>()?;
    if d.len() != lines {
        bail!("sign pattern has {} entries for {lines} lines", d.len());
    }
    Ok(SignPattern(d))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn read_network(path: &Path) -> Result<Network> {
    case_io::deserialize_network(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn emit(out: &Output, sol: &LdcSolution, meta: serde_json::Value) -> Result<()> {
    if let Some(path) = &out.output {
        write(path, &case_io::serialize_solution(sol, Some(meta))?)?;
    }
    Ok(())
}
