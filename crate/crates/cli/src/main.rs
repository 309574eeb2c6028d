use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use txcost::analysis::{self, GapSpec, GridPolicy, SweepReport};
use txcost::asymptotics::{find_lambda_threshold, verify_instance, BoundarySet, ScanSpec, Side};
use txcost::export::{self, Format};
use txcost::hjb::{self, GridSpec, Scheme};
use txcost::simulate::{self, PathConfig};
use txcost::{Error, Execution, MarketParams, Model};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "txcost", version, about = "Small transaction cost asymptotics, HJB reference solver and Monte Carlo")]
struct Cli {
    /// Parameter file with keys mu, sigma, r, p, lambda, beta, T and optional t0.
    /// Without it the built-in reference instance is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides lambda from the config.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Minus,
    Plus,
    Both,
}

impl SideArg {
    fn sides(self) -> Vec<Side> {
        match self {
            SideArg::Minus => vec![Side::Minus],
            SideArg::Plus => vec![Side::Plus],
            SideArg::Both => vec![Side::Minus, Side::Plus],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived constants.
    Constants,
    /// Free-boundary offsets on a uniform time grid.
    Boundaries {
        #[arg(long, default_value_t = txcost::asymptotics::DEFAULT_TIMES)]
        times: usize,
        #[arg(long, value_enum, default_value_t = SideArg::Minus)]
        side: SideArg,
    },
    /// Solve the reduced HJB variational inequality on a grid.
    Solve {
        #[arg(long, default_value = "penalty")]
        scheme: Scheme,
        /// Number of z nodes; defaults to the sweep grid policy.
        #[arg(long)]
        nz: Option<usize>,
        #[arg(long)]
        nt: Option<usize>,
    },
    /// Monte Carlo of the reflected strategy (or the frictionless portfolio).
    Simulate {
        #[command(flatten)]
        mc: McArgs,
        /// Simulate the frictionless Merton portfolio instead.
        #[arg(long)]
        merton: bool,
        #[arg(long, default_value_t = txcost::asymptotics::DEFAULT_TIMES)]
        times: usize,
    },
    /// Scan the sub- and supersolution inequalities.
    Verify {
        #[arg(long, value_enum, default_value_t = SideArg::Both)]
        side: SideArg,
        #[arg(long, default_value_t = 500)]
        nt: usize,
        #[arg(long, default_value_t = 500)]
        nz: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        tube: f64,
        /// Also bisect in log(lambda) over [1e-8, 1e-1] for the largest cost
        /// at which both sides verify; reported only.
        #[arg(long)]
        threshold: bool,
    },
    /// Expansion, sandwich and strategy-gap studies over a list of costs.
    Sweep {
        /// Comma-separated costs; defaults to five points from 1e-2 to 1e-4.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Sandwich window in z, as lo,hi.
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.3, 0.7])]
        k1: Vec<f64>,
        /// Time levels of the sandwich check grid.
        #[arg(long, default_value_t = 101)]
        check_times: usize,
        #[command(flatten)]
        grid: PolicyArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Skip the Monte Carlo strategy gap.
        #[arg(long)]
        no_gap: bool,
    },
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    #[arg(long)]
    no_antithetic: bool,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = GridPolicy::default().points_per_band)]
    points_per_band: f64,
    #[arg(long, default_value_t = GridPolicy::default().min_nz)]
    min_nz: usize,
    #[arg(long = "grid-nt", default_value_t = GridPolicy::default().nt)]
    grid_nt: usize,
}

impl From<&PolicyArgs> for GridPolicy {
    fn from(a: &PolicyArgs) -> Self {
        GridPolicy { points_per_band: a.points_per_band, min_nz: a.min_nz, nt: a.grid_nt, ..GridPolicy::default() }
    }
}

enum Failure {
    Lib(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            let input = e.is_input_error() || matches!(e, Error::Io(_) | Error::Csv(_) | Error::Json(_));
            ExitCode::from(if input { EXIT_INPUT } else { EXIT_NUMERICAL })
        }
    }
}

fn load_params(cli: &Cli) -> Result<MarketParams, Error> {
    let mut params = match &cli.config {
        Some(p) => MarketParams::from_file(p)?,
        None => MarketParams::reference(),
    };
    if let Some(l) = cli.lambda {
        params.lambda = l;
    }
    Ok(params)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let params = load_params(cli)?;
    let model = Model::new(params)?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let format: Format = cli.format.into();
    let out = cli.out.as_path();

    match &cli.command {
        Command::Constants => constants(&model, out, format)?,
        Command::Boundaries { times, side } => {
            if *times < 2 {
                return Err(Error::Config("--times must be at least 2".into()).into());
            }
            for s in side.sides() {
                let set = BoundarySet::uniform(s, &model, *times)?;
                let path = export::write_boundaries(&set, &model, out, format)?;
                println!(
                    "{} boundaries: {} times, max |residual| = {:e} -> {}",
                    s.label(),
                    set.len(),
                    set.max_abs_residual(),
                    path.display()
                );
            }
        }
        Command::Solve { scheme, nz, nt } => {
            let policy = GridPolicy { scheme: *scheme, ..GridPolicy::default() };
            let mut grid = policy.grid_for(&model);
            if let Some(n) = nz {
                grid = GridSpec { nz: *n, ..grid };
            }
            if let Some(n) = nt {
                grid = GridSpec { nt: *n, ..grid };
            }
            let sol = hjb::solve(&model, &grid)?;
            let dir = out.join("solution");
            hjb::write_solution(&sol, &dir)?;
            let theta = model.consts.theta;
            let b = sol.extract_boundaries();
            println!("grid {} x {} ({}), dz = {:e}", grid.nz, grid.nt, grid.scheme, grid.dz());
            println!("u(t0, theta) = {:.12}", sol.value_at_start(theta)?);
            println!("merton       = {:.12}", model.merton_value(model.params.t0, 1.0)?);
            if let (Some(z1), Some(z2)) = (b.zeta1[0], b.zeta2[0]) {
                println!("no-trade band at t0: [{z1:.6}, {z2:.6}]");
            }
            println!("-> {}", dir.display());
        }
        Command::Simulate { mc, merton, times } => {
            let cfg =
                PathConfig { antithetic: !mc.no_antithetic, ..PathConfig::at_merton(&model, mc.paths, mc.dt, mc.seed) };
            cfg.validate(model.horizon(), model.params.lambda)?;
            let result = if *merton {
                simulate::simulate_merton(&model.params, &cfg, exec)?
            } else {
                let b = BoundarySet::uniform(Side::Minus, &model, *times)?;
                simulate::simulate_reflected(&model, &b, &cfg, exec)?
            };
            let path = out.join(format!("simulation.{}", format.extension()));
            export::write_simulations(std::slice::from_ref(&result), &path, format)?;
            println!(
                "estimate = {:.10} +/- {:.3e} ({} paths, {} steps), volume = {:.6}, hits = {:.3}, ruined = {}",
                result.estimate,
                result.std_error,
                result.n_paths,
                result.steps,
                result.trade_volume,
                result.boundary_hits,
                result.ruin_count
            );
            println!("-> {}", path.display());
        }
        Command::Verify { side, nt, nz, tol, tube, threshold } => {
            let spec = ScanSpec { nt: *nt, nz: *nz, tol: *tol, tube: *tube, execution: exec, ..ScanSpec::default() };
            let reports: Vec<_> = side.sides().into_iter().map(|s| verify_instance(&model, s, &spec)).collect();
            let path = out.join("verify.json");
            export::write_json(&reports, &path)?;
            let mut failed = vec![];
            for r in &reports {
                println!("w{} at lambda = {:e}: {}", sign(r.side), r.lambda, if r.passed() { "pass" } else { "FAIL" });
                if let Some(e) = &r.construction_error {
                    println!("  construction: {e}");
                }
                for c in r.checks.iter().filter(|c| !c.informational) {
                    println!(
                        "  [{}] {} worst = {:e} at (t, z) = ({}, {})",
                        mark(c.passed),
                        c.name,
                        c.worst,
                        c.worst_t,
                        c.worst_z
                    );
                }
                if !r.passed() {
                    failed.push(format!("w{}", sign(r.side)));
                }
            }
            println!("-> {}", path.display());
            if *threshold {
                let t = find_lambda_threshold(&model, 1e-8, 1e-1, 12, &spec);
                match (t.lambda_star, t.failing) {
                    (Some(a), Some(b)) => println!("lambda* in [{a:e}, {b:e})"),
                    (Some(a), None) => println!("lambda* >= {a:e}"),
                    _ => println!("no verifying cost found down to 1e-8"),
                }
                let path = out.join("threshold.json");
                export::write_json(&t, &path)?;
                println!("-> {}", path.display());
            }
            if !failed.is_empty() {
                return Err(Failure::Verification(failed.join(", ")));
            }
        }
        Command::Sweep { lambdas, k1, check_times, grid, mc, no_gap } => {
            let lambdas =
                lambdas.clone().unwrap_or_else(|| (0..5).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect());
            let policy = GridPolicy::from(grid);
            let k1 = (k1[0], k1[1]);
            let expansion = analysis::expansion_study(&model, &lambdas, &policy, exec)?;
            let sandwich = analysis::sandwich_study(&model, &lambdas, k1, &policy, *check_times, exec)?;
            let (gap, sims) = if *no_gap {
                (None, vec![])
            } else {
                let spec = GapSpec { n_paths: mc.paths, dt: mc.dt, seed: mc.seed, antithetic: !mc.no_antithetic };
                let (g, s) = analysis::gap_study(&model, &lambdas, &policy, &spec, exec)?;
                (Some(g), s)
            };
            let report = SweepReport::assemble(&model, expansion, sandwich, gap);
            let written = export::write_sweep(&report, out, format)?;
            if !sims.is_empty() {
                export::write_simulations(&sims, &out.join(format!("simulations.{}", format.extension())), format)?;
            }
            print_sweep(&report);
            for p in written {
                println!("-> {}", p.display());
            }
            if !report.passed() {
                return Err(Failure::Verification("sweep checks".into()));
            }
        }
    }
    Ok(())
}

fn constants(model: &Model, out: &Path, format: Format) -> Result<(), Error> {
    let c = &model.consts;
    println!("theta  = {:.15}", c.theta);
    println!("A      = {:.15}", c.a);
    println!("pA     = {:.15}", model.pa());
    println!("gamma2 = {:.15}", c.gamma2);
    println!("nu     = {:.15}", c.nu);
    println!("B      = {:.15}", c.b);
    println!("M      = {:.15}", c.m);
    println!("merton value at t0 = {:.15}", model.merton_value(model.params.t0, 1.0)?);
    let path = out.join(format!("constants.{}", format.extension()));
    match format {
        Format::Json => export::write_json(c, &path)?,
        Format::Csv => {
            std::fs::create_dir_all(out)?;
            let rows = [("theta", c.theta), ("A", c.a), ("gamma2", c.gamma2), ("nu", c.nu), ("B", c.b), ("M", c.m)];
            let mut text = String::from("name,value\n");
            for (k, v) in rows {
                text.push_str(&format!("{k},{v:e}\n"));
            }
            std::fs::write(&path, text)?;
        }
    }
    Ok(())
}

fn print_sweep(r: &SweepReport) {
    println!("{:>10} {:>16} {:>11} {:>12} {:>10}", "lambda", "u_num", "error", "loss", "ratio");
    for p in &r.expansion.points {
        println!(
            "{:>10.3e} {:>16.12} {:>11.3e} {:>12.5e} {:>10.4}",
            p.lambda, p.u_num, p.u_num_error, p.loss, p.coefficient_ratio
        );
    }
    match (r.fitted_slope, r.slope_ci) {
        (Some(s), Some((lo, hi))) => println!("log-log slope = {s:.4} (95% CI [{lo:.4}, {hi:.4}])"),
        _ => println!("no slope fit"),
    }
    if let Some((a, b)) = r.expansion.two_term {
        println!(
            "two-term fit: loss = {a:.5e} lambda^(2/3) + {b:.5e} lambda (a / gamma2(t0) = {:.4})",
            a / r.expansion.gamma2_t0
        );
    }
    for s in &r.sandwich {
        println!(
            "sandwich lambda = {:.3e}: [{}] w+ margin {:?}, w- margin {:?}, tol {:.2e}",
            s.lambda,
            mark(s.passed),
            s.plus_margin,
            s.minus_margin,
            s.tolerance
        );
    }
    if let Some(g) = &r.gap {
        for row in &g.rows {
            println!("gap lambda = {:.3e}: {:.4e} +/- {:.2e}", row.lambda, row.gap, row.gap_error);
        }
        if let Some(c) = &g.constant {
            println!("gap constant C = {:.4} (stable: {})", c.c, c.stable);
        }
    }
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn sign(s: Side) -> char {
    match s {
        Side::Plus => '+',
        Side::Minus => '-',
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}
