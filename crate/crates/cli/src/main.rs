//! Command-line surface: simulation runs, verification suites and the
//! quadrature solver, with trajectory export to CSV or JSON.

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use holomech::liouville::{invert_levels, liouville_solve, phase_constants, IntegralPair};
use holomech::poisson::PhaseFunction;
use holomech::verify::{run_verification, BuiltinSystem};

use holomech_cli::config::{build_system, load_file, FileConfig};
use holomech_cli::expr::Expr;
use holomech_cli::output;
use holomech_cli::runner::{run, Method, RunError, RunPlan};

#[derive(Parser)]
#[command(
    name = "holomech",
    version,
    about = "Hamiltonian dynamics on configuration submanifolds: reduction routes, series integration, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a system and export the trajectory.
    Simulate(SimulateArgs),
    /// Run the verification suite of a built-in system.
    Verify(VerifyArgs),
    /// Solve a two-degree-of-freedom system by quadratures.
    Liouville(LiouvilleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// sphere | rigid_body | custom (custom needs --config)
    #[arg(long)]
    system: Option<String>,
    /// rk | lie_series | multiplier_ode | dirac | alternative
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Sampling interval of the output trajectory.
    #[arg(long = "dt")]
    sample_dt: Option<f64>,
    /// Series truncation order (lie_series).
    #[arg(long)]
    order: Option<usize>,
    /// Series re-expansion step (lie_series).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "sphere")]
    system: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Emit the report as JSON instead of a table.
    #[arg(long, default_value_t = false)]
    json: bool,
    /// Include a deliberately broken structure as a negative control.
    #[arg(long, default_value_t = false, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct LiouvilleArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => CliError::Usage(m),
            RunError::Numerical(m) => CliError::Numerical(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Liouville(args) => cmd_liouville(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_trajectory(
    traj: &holomech::traj::Trajectory,
    out: Option<&str>,
    format: Option<&str>,
) -> Result<(), CliError> {
    let format = format.unwrap_or("csv");
    let render = |w: &mut dyn Write| -> std::io::Result<()> {
        match format {
            "csv" => output::write_csv(traj, w),
            "json" => output::write_json(traj, w),
            other => Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("unknown format '{other}'"),
            )),
        }
    };
    let io_result = match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| CliError::Usage(format!("cannot create '{path}': {e}")))?;
            render(&mut file)
        }
        None => render(&mut std::io::stdout().lock()),
    };
    io_result.map_err(|e| {
        if e.kind() == std::io::ErrorKind::InvalidInput {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => load_file(path).map_err(CliError::Usage)?,
        None => FileConfig::default(),
    };
    let mut system_section = file.system.unwrap_or_default();
    if let Some(name) = &args.system {
        system_section.name = Some(name.clone());
    }
    let system = build_system(&system_section).map_err(CliError::Usage)?;

    let run_section = file.run.unwrap_or_default();
    let method_name = args
        .method
        .or(run_section.method)
        .unwrap_or_else(|| "rk".into());
    let method = Method::parse(&method_name).map_err(CliError::Usage)?;
    let t_end = args.t_end.or(run_section.t_end).unwrap_or(1.0);
    let sample_dt = args.sample_dt.or(run_section.sample_dt).unwrap_or(0.01);
    let tol = file
        .tolerances
        .unwrap_or_default()
        .build()
        .map_err(CliError::Usage)?;
    let initial = file.initial.unwrap_or_default();
    let plan = RunPlan {
        method,
        t_end,
        sample_dt,
        order: args.order.or(run_section.order),
        step: args.step.or(run_section.step),
        tol,
        q0: initial.q,
        p0: initial.p,
        omega0: initial.omega,
    };
    let traj = run(&system, &plan)?;
    let out_section = file.output.unwrap_or_default();
    let out = args.out.or(out_section.path);
    let format = args.format.or(out_section.format);
    write_trajectory(&traj, out.as_deref(), format.as_deref())?;
    if let Some(path) = &out {
        eprintln!(
            "wrote {path}: {} ({}, {} samples)",
            system.name(),
            method_name,
            traj.samples.len()
        );
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let system = BuiltinSystem::parse(&args.system).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_verification(system, args.seed, args.samples, args.corrupt)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.table());
    }
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Numerical("verification checks failed".into()))
    }
}

fn cmd_liouville(args: LiouvilleArgs) -> Result<(), CliError> {
    let file = load_file(&args.config).map_err(CliError::Usage)?;
    let section = file
        .liouville
        .ok_or_else(|| CliError::Usage("config needs a [liouville] section".into()))?;
    if section.t_end <= 0.0 || section.sample_dt <= 0.0 {
        return Err(CliError::Usage("t_end and sample_dt must be positive".into()));
    }
    let tol = file
        .tolerances
        .unwrap_or_default()
        .build()
        .map_err(CliError::Usage)?;
    let vars: Vec<String> = ["x", "y", "px", "py"].iter().map(|s| s.to_string()).collect();
    let h_expr = Expr::parse(&section.h, &vars).map_err(|e| CliError::Usage(e.to_string()))?;
    let f_expr = Expr::parse(&section.f, &vars).map_err(|e| CliError::Usage(e.to_string()))?;
    let h_grad: Vec<Expr> = (0..4)
        .map(|i| h_expr.diff(i))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let f_grad: Vec<Expr> = (0..4)
        .map(|i| f_expr.diff(i))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let h_for_fn = h_expr;
    let h_fun = PhaseFunction::with_gradient(
        move |z: &[f64]| h_for_fn.eval(z),
        move |z: &[f64]| h_grad.iter().map(|g| g.eval(z)).collect(),
    );
    let f_for_fn = f_expr;
    let f_fun = PhaseFunction::with_gradient(
        move |z: &[f64]| f_for_fn.eval(z),
        move |z: &[f64]| f_grad.iter().map(|g| g.eval(z)).collect(),
    );
    let pair = IntegralPair::new(h_fun, f_fun);
    let seed_xy = section.seed_position.unwrap_or([0.0, 0.0]);
    let surface = invert_levels(
        &pair,
        section.energy,
        section.constant,
        (section.seed_momenta[0], section.seed_momenta[1]),
        (seed_xy[0], seed_xy[1]),
        &tol,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    // Phase constants default to the trajectory through the seed at t = 0.
    let (bx, by) = match (section.b_x, section.b_y) {
        (Some(bx), Some(by)) => (bx, by),
        _ => phase_constants(&surface, seed_xy[0], seed_xy[1], 0.0)
            .map_err(|e| CliError::Numerical(e.to_string()))?,
    };
    let labels = vec!["x".into(), "y".into(), "px".into(), "py".into()];
    let diag = vec!["energy_drift".into(), "second_integral_drift".into()];
    let mut traj = holomech::traj::Trajectory::new(labels, diag);
    let steps = (section.t_end / section.sample_dt).ceil() as usize;
    let mut warm = (seed_xy[0], seed_xy[1]);
    for i in 0..=steps {
        let t = (i as f64 * section.sample_dt).min(section.t_end);
        let (x, y, px, py) = liouville_solve(&surface, bx, by, t, warm)
            .map_err(|e| CliError::Numerical(format!("at t = {t}: {e}")))?;
        warm = (x, y);
        let z = [x, y, px, py];
        traj.push(
            t,
            z.to_vec(),
            vec![
                (pair.h.eval(&z) - section.energy).abs(),
                (pair.f.eval(&z) - section.constant).abs(),
            ],
        );
    }
    write_trajectory(&traj, args.out.as_deref(), args.format.as_deref())
}
