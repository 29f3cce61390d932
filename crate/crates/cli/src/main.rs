use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fmcf::curve::DiscreteCurve;
use fmcf::flow::{run, FlowConfig, Scheme, TimeStep};
use fmcf::oracles::{compare_radial, RadialSolution};
use fmcf::scenario::{self, Mode, RunOptions, Scenario};
use fmcf::{Error, PlaneWeight};

const USAGE: u8 = 2;
const FAILED: u8 = 1;

#[derive(Parser)]
#[command(name = "fmcf", version, about = "f-mean curvature flow of plane curves and Harnack checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate scenarios and write their traces.
    Simulate(RunArgs),
    /// Integrate scenarios and evaluate their checks.
    Verify(RunArgs),
    /// Radial closed-form table, compared with a simulated circle.
    Oracle(OracleArgs),
    /// Print the statement and hypotheses behind a check.
    Describe {
        /// One of: signs, pinch, differential_harnack, integral_harnack,
        /// evolution_residuals, radial_oracle.
        check: String,
    },
    /// List the bundled scenarios.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file or bundled scenario name; may be repeated.
    #[arg(long = "config", short = 'c', required_unless_present = "all")]
    configs: Vec<String>,
    /// Run every bundled scenario.
    #[arg(long, conflicts_with = "configs")]
    all: bool,
    /// Output root; artifacts go to <out>/<scenario name>/.
    #[arg(long, env = "FMCF_OUT")]
    out: Option<PathBuf>,
    /// Number of scenarios run concurrently.
    #[arg(long, short = 'j', default_value_t = 1)]
    jobs: usize,
    /// Multiplies every default tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Args)]
struct OracleArgs {
    /// Take the circle and weight from a scenario instead.
    #[arg(long = "config", short = 'c', conflicts_with_all = ["r0", "c", "t_end"])]
    config: Option<String>,
    /// Initial radius.
    #[arg(long, required_unless_present = "config")]
    r0: Option<f64>,
    /// Weight coefficient in f = c|x|²/2.
    #[arg(long, allow_negative_numbers = true, required_unless_present = "config")]
    c: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    t_end: Option<f64>,
    /// Sphere dimension; only n = 1 is simulated.
    #[arg(long, default_value_t = 1)]
    dim: u32,
    #[arg(long, default_value_t = 256)]
    nodes: usize,
    /// Number of table rows.
    #[arg(long, default_value_t = 11)]
    samples: usize,
    /// Also write oracle.csv here.
    #[arg(long, env = "FMCF_OUT")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => run_many(&args, Mode::Simulate),
        Command::Verify(args) => run_many(&args, Mode::Verify),
        Command::Oracle(args) => oracle(&args),
        Command::Describe { check } => match scenario::describe(&check) {
            Some(text) => {
                println!("{text}");
                0
            }
            None => {
                eprintln!(
                    "error: unknown check `{check}`; expected one of {}",
                    scenario::CHECK_NAMES.join(", ")
                );
                USAGE
            }
        },
        Command::List => {
            for (name, _) in scenario::BUNDLED {
                let s = scenario::bundled(name).expect("bundled scenario is valid");
                println!("{name:26} {}", s.description);
            }
            0
        }
    };
    ExitCode::from(code)
}

fn out_root(arg: &Option<PathBuf>, s: &Scenario) -> PathBuf {
    arg.clone()
        .or_else(|| s.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fmcf-out"))
}

fn report_error(source: &str, e: &Error) {
    eprintln!("error: {source}: {e}");
}

/// One line per check: `key=pass|FAIL|vacuous`.
fn check_line(summary: &fmcf::scenario::Outcome) -> String {
    let mut line = String::new();
    if let Some(checks) = summary.summary["checks"].as_object() {
        for (key, v) in checks {
            let status = match (v["passed"].as_bool(), v["vacuous"].as_bool()) {
                (Some(false), _) => "FAIL",
                (_, Some(true)) => "vacuous",
                _ => "pass",
            };
            let _ = write!(line, " {key}={status}");
        }
    }
    if let Some(e) = summary.summary["run"]["error"].as_str() {
        let _ = write!(line, " run_error=\"{e}\"");
    }
    line
}

fn run_many(args: &RunArgs, mode: Mode) -> u8 {
    if !(args.tol_scale > 0.0 && args.tol_scale.is_finite()) {
        eprintln!("error: --tol-scale must be positive, got {}", args.tol_scale);
        return USAGE;
    }
    let names: Vec<String> = if args.all {
        scenario::BUNDLED.iter().map(|(n, _)| n.to_string()).collect()
    } else {
        args.configs.clone()
    };
    let one = |source: &String| -> u8 {
        let s = match scenario::load(source) {
            Ok(s) => s,
            Err(e) => {
                report_error(source, &e);
                return USAGE;
            }
        };
        let opts = RunOptions {
            out_root: out_root(&args.out, &s),
            tol_scale: args.tol_scale,
            mode,
        };
        match scenario::run_scenario(&s, &opts) {
            Ok(out) => {
                let verdict = if out.passed { "PASS" } else { "FAIL" };
                println!("{}: {verdict}{} -> {}", s.name, check_line(&out), out.out_dir.display());
                if out.passed {
                    0
                } else {
                    FAILED
                }
            }
            Err(e) => {
                report_error(source, &e);
                USAGE
            }
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", args.jobs);
            return USAGE;
        }
    };
    let codes: Vec<u8> = pool.install(|| names.par_iter().map(one).collect());
    codes.into_iter().max().unwrap_or(0)
}

fn oracle(args: &OracleArgs) -> u8 {
    let (sol, nodes, weight, out, t_end) = match &args.config {
        Some(source) => {
            let s = match scenario::load(source) {
                Ok(s) => s,
                Err(e) => {
                    report_error(source, &e);
                    return USAGE;
                }
            };
            let Some(sol) = s.radial_solution() else {
                eprintln!("error: {source}: not a centred circle under an isotropic weight");
                return USAGE;
            };
            let out = args.out.clone().map(|o| o.join(&s.name));
            (sol, s.curve.node_count(), s.weight, out, s.flow.t_end)
        }
        None => {
            let (r0, c) = (args.r0.expect("required"), args.c.expect("required"));
            if !(r0 > 0.0) || args.dim == 0 {
                eprintln!("error: need --r0 > 0 and --dim ≥ 1");
                return USAGE;
            }
            let t_end = args.t_end.expect("required");
            (RadialSolution::new(args.dim, r0, c), args.nodes, PlaneWeight::isotropic(c), args.out.clone(), t_end)
        }
    };
    if !(t_end > 0.0) {
        eprintln!("error: --t-end must be positive");
        return USAGE;
    }
    if let Err(e) = sol.radius(t_end) {
        eprintln!("error: {e}");
        return USAGE;
    }
    let samples = args.samples.max(2);
    let times: Vec<f64> = (0..samples).map(|k| t_end * k as f64 / (samples - 1) as f64).collect();

    let mut table = String::from("t,R_exact,R_sim,abs_err\n");
    if sol.n == 1 {
        let curve = match DiscreteCurve::circle(sol.r0, nodes) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return USAGE;
            }
        };
        let mut rows = Vec::with_capacity(samples);
        let mut current = curve;
        for &t in &times[1..] {
            let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Auto, t).record_every(usize::MAX);
            match run(&current, &weight, &cfg) {
                Ok(trace) => {
                    if rows.is_empty() {
                        rows.extend(compare_radial(&trace, &sol).expect("before extinction").into_iter().take(1));
                    }
                    rows.push(compare_radial(&trace, &sol).expect("before extinction").pop().expect("final"));
                    current = trace.last().curve.clone();
                }
                Err(f) => {
                    eprintln!("error: simulation failed: {}", f.error);
                    return FAILED;
                }
            }
        }
        for r in rows {
            let _ = writeln!(table, "{:?},{:?},{:?},{:?}", r.t, r.r_exact, r.r_sim, r.abs_err);
        }
    } else {
        for &t in &times {
            let r = sol.radius(t).expect("checked against t_end");
            let _ = writeln!(table, "{t:?},{r:?},,");
        }
    }
    print!("{table}");
    if let Some(dir) = out {
        let path = dir.join("oracle.csv");
        if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, &table)) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return FAILED;
        }
    }
    0
}
