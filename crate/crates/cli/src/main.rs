use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use chordnet::analysis::{h2_bound, hinf_bound, verify_stability, AnalysisSettings, SolverChoice};
use chordnet::graph::{chordal_extension, maximal_cliques, CliqueSet};
use chordnet::sdp::{h2_sdp, hinf_pattern, hinf_sdp, stability_sdp, write_sdpa, PPattern};
use chordnet::solver::{AdmmSettings, SolveResult, SolveStatus};
use chordnet::sysmodel::{
    assemble, random_chain, read_system, spectral_abscissa, undirected_pattern, without_feedthrough, write_system,
    NetworkedSystem,
};
use chordnet::Error;

#[derive(Parser)]
#[command(
    name = "chordnet",
    version,
    about = "Clique-decomposed stability and performance analysis of networked systems"
)]
struct Cli {
    /// Worker threads for the solver (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random benchmark chain.
    Gen {
        #[arg(long, value_name = "N")]
        chain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero every D_i so the file is accepted by the h2 analysis.
        #[arg(long)]
        no_feedthrough: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Summarize a system file.
    Info { system: PathBuf },
    /// Run one analysis and print a single-line record.
    Analyze {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long, value_enum, default_value_t = Solver::Decomposed)]
        solver: Solver,
        system: PathBuf,
    },
    /// Print the sparsity pattern and maximal cliques of an analysis problem.
    Pattern {
        #[arg(long, value_enum)]
        problem: Problem,
        system: PathBuf,
    },
    /// Time both solvers on random chains and write CSV.
    Bench {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Problem::Stability, Problem::H2, Problem::Hinf])]
        problems: Vec<Problem>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Solver::Decomposed, Solver::Dense])]
        solvers: Vec<Solver>,
        /// Output file; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the analysis SDP in SDPA sparse format.
    Export {
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(short, long)]
        out: PathBuf,
        system: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct SolveArgs {
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Stability margin in P ⪰ εI, AᵀP + PA ⪯ -εI.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
}

impl SolveArgs {
    fn settings(&self, solver: Solver) -> AnalysisSettings {
        AnalysisSettings {
            admm: AdmmSettings {
                tol: self.tol,
                max_iter: self.max_iter,
                ..AdmmSettings::default()
            },
            solver: match solver {
                Solver::Decomposed => SolverChoice::Decomposed,
                Solver::Dense => SolverChoice::Dense,
            },
            eps: self.eps,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Problem {
    Stability,
    H2,
    Hinf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Decomposed,
    Dense,
}

fn name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_owned()
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    msg: String,
}

const EXIT_UNKNOWN: u8 = 3;
const EXIT_IO: u8 = 1;
const EXIT_INPUT: u8 = 4;

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_IO,
            msg: format!("{}: {e}", path.display()),
        }
    }
}

/// Errors rooted in the system data exit with 4, everything else with 1.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidSystem(_)
            | Error::DimensionMismatch(_)
            | Error::NonzeroD { .. }
            | Error::Unstable { .. }
            | Error::Json(_) => EXIT_INPUT,
            _ => EXIT_IO,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn load(path: &Path) -> Result<NetworkedSystem, Failure> {
    let f = File::open(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        msg: format!("{}: {e}", path.display()),
    })?;
    read_system(BufReader::new(f)).map_err(|e| {
        let mut f = Failure::from(e);
        f.code = EXIT_INPUT;
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli.command)),
        Err(e) => Err(Failure {
            code: EXIT_IO,
            msg: e.to_string(),
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Gen {
            chain,
            seed,
            no_feedthrough,
            out,
        } => {
            let mut sys = random_chain(chain, seed).map_err(|e| Failure {
                code: 2,
                msg: e.to_string(),
            })?;
            if no_feedthrough {
                sys = without_feedthrough(&sys);
            }
            let mut w = create(&out)?;
            write_system(&sys, &mut w)?;
            w.flush().map_err(|e| Failure::io(&out, e))?;
            Ok(0)
        }
        Command::Info { system } => info(&load(&system)?),
        Command::Analyze {
            solve,
            problem,
            solver,
            system,
        } => analyze(&load(&system)?, problem, solver, &solve),
        Command::Pattern { problem, system } => pattern(&load(&system)?, problem),
        Command::Bench {
            solve,
            sizes,
            seed,
            problems,
            solvers,
            out,
        } => {
            let rows = bench(&sizes, seed, &problems, &solvers, &solve)?;
            match out {
                Some(path) => {
                    write_csv(create(&path)?, &rows).map_err(|e| Failure::io(&path, e))?;
                }
                None => write_csv(io::stdout().lock(), &rows).map_err(|e| Failure::io(Path::new("<stdout>"), e))?,
            }
            Ok(0)
        }
        Command::Export {
            problem,
            eps,
            out,
            system,
        } => {
            let sys = load(&system)?;
            let gs = assemble(&sys)?;
            let pp = PPattern::new(gs.states.clone());
            let p = match problem {
                Problem::Stability => stability_sdp(&gs, &pp, eps)?,
                Problem::H2 => {
                    if let Some(block) = gs.nonzero_feedthrough() {
                        return Err(Error::NonzeroD { block }.into());
                    }
                    h2_sdp(&gs, &pp)?
                }
                Problem::Hinf => hinf_sdp(&gs, &pp)?,
            };
            let mut w = create(&out)?;
            write_sdpa(&p, &mut w)?;
            w.flush().map_err(|e| Failure::io(&out, e))?;
            Ok(0)
        }
    }
}

fn info(sys: &NetworkedSystem) -> CmdResult {
    let gs = assemble(sys)?;
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    println!("blocks {}", sys.len());
    println!("states {}", gs.states.dim());
    println!("disturbances {}", gs.disturbances.dim());
    println!("outputs {}", gs.outputs.dim());
    println!("alpha {}", join(gs.states.sizes()));
    println!("m {}", join(gs.disturbances.sizes()));
    println!("d {}", join(gs.outputs.sizes()));
    println!("edges {}", sys.directed_edges().len());
    println!(
        "feedthrough {}",
        if gs.nonzero_feedthrough().is_some() {
            "nonzero"
        } else {
            "zero"
        }
    );
    println!("abscissa {:.6e}", spectral_abscissa(&gs.a)?);
    Ok(0)
}

fn analyze(sys: &NetworkedSystem, problem: Problem, solver: Solver, args: &SolveArgs) -> CmdResult {
    let s = args.settings(solver);
    s.admm.validate().map_err(|e| Failure {
        code: 2,
        msg: e.to_string(),
    })?;
    let head = format!("problem={} solver={}", name(problem), name(solver));
    let tail = |r: &SolveResult| format!("iterations={} time_s={:.6}", r.iterations, r.wall_time);
    match problem {
        Problem::Stability => {
            let rep = verify_stability(sys, &s)?;
            let verdict = if rep.is_stable() { "stable" } else { "unknown" };
            println!(
                "{head} status={} verdict={verdict} objective={:.6e} {}",
                rep.solve.status,
                rep.solve.objective,
                tail(&rep.solve)
            );
            Ok(if rep.is_stable() { 0 } else { EXIT_UNKNOWN })
        }
        Problem::H2 | Problem::Hinf => {
            let rep = if problem == Problem::H2 {
                h2_bound(sys, &s)?
            } else {
                hinf_bound(sys, &s)?
            };
            println!(
                "{head} status={} objective={:.6e} bound={:.6e} certified={} {}",
                rep.solve.status,
                rep.solve.objective,
                rep.bound,
                rep.certified,
                tail(&rep.solve)
            );
            Ok(if rep.solve.status == SolveStatus::Solved {
                0
            } else {
                EXIT_UNKNOWN
            })
        }
    }
}

fn fmt_cliques(cs: &CliqueSet) -> String {
    cs.iter()
        .map(|c| {
            format!(
                "{{{}}}",
                c.iter().map(|v| (v + 1).to_string()).collect::<Vec<_>>().join(",")
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_edges(edges: &[(usize, usize)]) -> String {
    if edges.is_empty() {
        return "-".into();
    }
    edges
        .iter()
        .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

fn pattern(sys: &NetworkedSystem, problem: Problem) -> CmdResult {
    let base = undirected_pattern(sys);
    let (extended, fill) = chordal_extension(base.graph());
    let sizes: Vec<String> = match problem {
        Problem::Hinf => {
            let gs = assemble(sys)?;
            [gs.states.sizes(), gs.disturbances.sizes(), gs.outputs.sizes()]
                .concat()
                .iter()
                .map(|x| x.to_string())
                .collect()
        }
        _ => base.partition().sizes().iter().map(|x| x.to_string()).collect(),
    };
    println!("problem {}", name(problem));
    println!("partition {}", sizes.join(" "));
    match problem {
        Problem::Stability | Problem::H2 => {
            let cs = maximal_cliques(&extended)?;
            println!("edges {}", fmt_edges(&base.graph().edges()));
            println!("fill {}", fmt_edges(&fill));
            println!("cliques {}", fmt_cliques(&cs));
            println!("count {}", cs.len());
            println!("largest {}", cs.largest());
        }
        Problem::Hinf => {
            let gs = assemble(sys)?;
            let pp = PPattern::new(gs.states.clone());
            let (lifted, predicted) = hinf_pattern(&gs, &pp)?;
            let graph = lifted.graph();
            let edges: Vec<(usize, usize)> = graph
                .edges()
                .into_iter()
                .filter(|&(i, j)| !fill.contains(&(i, j)))
                .collect();
            let cs = maximal_cliques(graph)?;
            println!("edges {}", fmt_edges(&edges));
            println!("fill {}", fmt_edges(&fill));
            println!("cliques {}", fmt_cliques(&cs));
            println!("count {}", cs.len());
            println!("largest {}", cs.largest());
            println!("predicted {}", predicted.len());
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    #[serde(rename = "N")]
    big_n: usize,
    problem: String,
    solver: String,
    status: String,
    objective: String,
    iterations: usize,
    time_s: String,
}

fn bench(
    sizes: &[usize],
    seed: u64,
    problems: &[Problem],
    solvers: &[Solver],
    args: &SolveArgs,
) -> Result<Vec<BenchRow>, Failure> {
    let bad = |msg: String| Failure { code: 2, msg };
    AdmmSettings {
        tol: args.tol,
        max_iter: args.max_iter,
        ..AdmmSettings::default()
    }
    .validate()
    .map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for &n in sizes {
        let sys = random_chain(n, seed).map_err(|e| bad(e.to_string()))?;
        let big_n = sys.state_partition().dim();
        for &problem in problems {
            for &solver in solvers {
                let s = args.settings(solver);
                let (solve, objective) = match problem {
                    Problem::Stability => {
                        let r = verify_stability(&sys, &s)?;
                        let obj = r.solve.objective;
                        (r.solve, obj)
                    }
                    Problem::H2 => {
                        let r = h2_bound(&without_feedthrough(&sys), &s)?;
                        (r.solve, r.bound)
                    }
                    Problem::Hinf => {
                        let r = hinf_bound(&sys, &s)?;
                        (r.solve, r.bound)
                    }
                };
                rows.push(BenchRow {
                    n,
                    big_n,
                    problem: name(problem),
                    solver: name(solver),
                    status: solve.status.to_string(),
                    objective: format!("{objective:.6e}"),
                    iterations: solve.iterations,
                    time_s: format!("{:.6}", solve.wall_time),
                });
            }
        }
    }
    Ok(rows)
}

fn write_csv<W: Write>(w: W, rows: &[BenchRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record([
            "n",
            "N",
            "problem",
            "solver",
            "status",
            "objective",
            "iterations",
            "time_s",
        ])?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
