use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cocyclelab::cli::{
    cmd_accel, cmd_classify, cmd_degree, cmd_kam, cmd_lyapunov, cmd_nf, cmd_renorm, cmd_sweep, cmd_verify, parse_grid,
    render_table, ClassifyParams, CocycleSpec, EstimatorParams, RunReport, SweepParam, SystemSpec,
};
use cocyclelab::Error;

#[derive(Parser, Debug)]
#[command(name = "cocyclelab", version, about = "Invariants, renormalization and reducibility of quasi-periodic SO(3) cocycles")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Cocycle spec (JSON); a linear-system spec for `kam`.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Iterates for the Lyapunov and acceleration estimators.
    #[arg(long, global = true, default_value_t = 2000)]
    n: usize,
    /// Iterates for the degree estimator (defaults to --n).
    #[arg(long, global = true)]
    degree_n: Option<usize>,
    /// Starting points of the Birkhoff averages.
    #[arg(long, global = true, default_value_t = 8)]
    grid: usize,
    /// ε values: `a,b,c` or `lo:hi:count`.
    #[arg(long, global = true)]
    eps_grid: Option<String>,
    /// Renormalization depth (6 for `renorm`, 10 for `classify`).
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Step-condition exponent of the KAM scheme.
    #[arg(long = "L", global = true, default_value_t = 4)]
    l: usize,
    /// Step budget of `kam`, `nf` and `classify`.
    #[arg(long, global = true, default_value_t = 25)]
    steps: usize,
    /// Target size of the normal-form perturbation.
    #[arg(long, global = true, default_value_t = 1e-13)]
    tol: f64,
    /// Overrides the seed of a random system block.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool; reports do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Attach wall-clock time (the report is then no longer byte-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Finite-n Lyapunov exponents on each ε of the grid.
    Lyapunov,
    /// Acceleration and degree, snapped and cross-checked.
    Accel,
    /// Dynamical degree.
    Degree,
    /// Renormalization representatives up to --depth.
    Renorm,
    /// KAM reduction of a linear system on the two-torus.
    Kam,
    /// Conjugation of an exp-sum spec to its normal form.
    Nf,
    /// Degree, then almost-reducibility evidence or a normal-form conjugacy.
    Classify,
    /// Property suites: algebra3, arithmetic, fourier, cocycle, renorm, kam, normalform, all.
    Verify { suite: String },
    /// One CSV row per grid value.
    Sweep {
        /// `c0` or `scale`.
        #[arg(long)]
        param: String,
        /// `a,b,c` or `lo:hi:count`; empty for a header-only file.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
}

fn read_spec(args: &Args) -> Result<String, Error> {
    let path = args.spec.as_ref().ok_or_else(|| Error::Input("--spec is required".into()))?;
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn params(args: &Args) -> Result<EstimatorParams, Error> {
    let eps_grid = args.eps_grid.as_deref().map(parse_grid).transpose()?;
    Ok(EstimatorParams { n: args.n, degree_n: args.degree_n.unwrap_or(args.n), grid: args.grid, eps_grid })
}

fn cocycle_spec(args: &Args) -> Result<CocycleSpec, Error> {
    CocycleSpec::from_json(&read_spec(args)?)
}

fn run(args: &Args) -> RunReport {
    let name = format!("{:?}", args.command).to_lowercase();
    let input = |e: Error| RunReport::new(&name, None).fail(&e);
    match &args.command {
        Cmd::Lyapunov | Cmd::Accel | Cmd::Degree | Cmd::Renorm | Cmd::Nf | Cmd::Classify => {
            let spec = match cocycle_spec(args) {
                Ok(s) => s,
                Err(e) => return input(e),
            };
            let p = match params(args) {
                Ok(p) => p,
                Err(e) => return input(e),
            };
            match args.command {
                Cmd::Lyapunov => cmd_lyapunov(&spec, &p),
                Cmd::Accel => cmd_accel(&spec, &p),
                Cmd::Degree => cmd_degree(&spec, &p),
                Cmd::Renorm => cmd_renorm(&spec, args.depth.unwrap_or(6)),
                Cmd::Nf => cmd_nf(&spec, args.steps, args.tol),
                _ => {
                    let d = ClassifyParams::default();
                    let depth = args.depth.unwrap_or(d.depth);
                    cmd_classify(&spec, &ClassifyParams { estimator: p, depth, steps: args.steps, tol: args.tol })
                }
            }
        }
        Cmd::Kam => {
            let spec = match read_spec(args).and_then(|t| SystemSpec::from_json(&t)) {
                Ok(s) => s,
                Err(e) => return input(e),
            };
            let spec = match args.seed {
                Some(s) => spec.with_seed(s),
                None => spec,
            };
            cmd_kam(&spec, args.l, args.steps)
        }
        Cmd::Verify { suite } => {
            let (report, checks) = cmd_verify(suite);
            eprint!("{}", render_table(&checks));
            report
        }
        Cmd::Sweep { .. } => unreachable!("sweep writes CSV"),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn sweep(args: &Args, param: &str, values: &str) -> i32 {
    let go = || -> Result<(), Error> {
        let spec = cocycle_spec(args)?;
        let param: SweepParam = param.parse()?;
        let grid = parse_grid(values)?;
        let p = params(args)?;
        match &args.out {
            Some(path) => {
                let f = std::fs::File::create(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                cmd_sweep(&spec, param, &grid, &p, f)
            }
            None => cmd_sweep(&spec, param, &grid, &p, std::io::stdout().lock()),
        }
    };
    match go() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(args: &Args, report: &RunReport) -> std::io::Result<()> {
    match &args.out {
        Some(path) => {
            std::fs::write(path, report.to_json() + "\n")?;
            if !report.trajectory.is_empty() {
                report.write_trajectory(&sibling(path, "trajectory.jsonl"))?;
            }
            if !report.margins.is_empty() {
                report.write_margins_csv(&sibling(path, "margins.csv"))?;
            }
            Ok(())
        }
        None => match writeln!(std::io::stdout().lock(), "{}", report.to_json()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r,
        },
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if let Cmd::Sweep { param, values } = &args.command {
        return ExitCode::from(sweep(&args, param, values) as u8);
    }
    let start = Instant::now();
    let mut report = run(&args);
    report.seed = report.seed.or(args.seed);
    if args.timing {
        report.wall_clock_s = Some(start.elapsed().as_secs_f64());
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    if let Err(e) = emit(&args, &report) {
        eprintln!("error: writing report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(report.exit_code as u8)
}
