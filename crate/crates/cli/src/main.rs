use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deltalab_core::exponents::{parse_q, Q};
use deltalab_core::suites::{
    self, exponents_suite, kfrac_suite, run_suite, KfracPlan, SuiteError, SuiteOptions, SuiteReport, DEFAULT_SEED,
};

#[derive(Parser, Debug)]
#[command(name = "deltalab", version, about = "Verification suites for a delta-method subconvexity argument")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed for every randomized input.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory for machine-readable reports.
    #[arg(long, global = true, env = "DELTALAB_OUT", default_value = "deltalab-reports")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Multiplies every tolerance; must lie in (0, 1].
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ramanujan, Kloosterman and Gauss sums, Dirichlet characters.
    CharsumsVerify,
    /// The delta-symbol expansion against the indicator.
    DeltaVerify,
    /// The level-1 Voronoi formula for the weight-12 cusp form.
    VoronoiVerify,
    /// Hecke relations of the divisor, Δ and synthetic sequences.
    HeckeVerify,
    /// The amplifier equals a prime count.
    AmplifierVerify,
    /// Closed forms of the Poisson-dual character sums.
    ShevalVerify,
    /// Cancellation in Kloosterman-fraction sums.
    KfracExperiment(KfracArgs),
    /// Exact identities along the argument at desk scale.
    PipelineRun,
    /// Exact optimization of the saving exponent.
    ExponentsSolve(ExponentArgs),
    /// Every suite; passes only if all do.
    All,
}

#[derive(Args, Debug)]
struct KfracArgs {
    #[arg(long, default_value_t = 64)]
    small: u64,
    #[arg(long, default_value_t = 512)]
    large: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    a: i64,
}

#[derive(Args, Debug)]
struct ExponentArgs {
    /// Trilinear saving exponent, as `a/b`.
    #[arg(long, default_value = "1/20", value_parser = parse_q)]
    sigma: Q,
    /// Amplifier power, 1 or 2.
    #[arg(long, default_value_t = 2)]
    j: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(SuiteError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, SuiteError> {
    let opts = SuiteOptions {
        seed: cli.common.seed,
        tol_scale: cli.common.tol_scale,
    };
    opts.validate()?;
    let reports = match &cli.command {
        Command::CharsumsVerify => vec![run_suite("charsums-verify", &opts)?],
        Command::DeltaVerify => vec![run_suite("delta-verify", &opts)?],
        Command::VoronoiVerify => vec![run_suite("voronoi-verify", &opts)?],
        Command::HeckeVerify => vec![run_suite("hecke-verify", &opts)?],
        Command::AmplifierVerify => vec![run_suite("amplifier-verify", &opts)?],
        Command::ShevalVerify => vec![run_suite("sheval-verify", &opts)?],
        Command::PipelineRun => vec![run_suite("pipeline-run", &opts)?],
        Command::KfracExperiment(k) => {
            if k.small == 0 || k.large == 0 || k.trials == 0 {
                return Err(SuiteError::Config("sizes and trial count must be positive".into()));
            }
            let plan = KfracPlan {
                small: k.small,
                large: k.large,
                trials: k.trials,
                a: k.a,
            };
            vec![kfrac_suite(&opts, &plan)?]
        }
        Command::ExponentsSolve(e) => {
            let r = exponents_suite(&opts, e.j, e.sigma)?;
            println!("delta = {}", r.data["delta"].as_str().unwrap_or("?"));
            vec![r]
        }
        Command::All => suites::run_all(&opts)?,
    };
    fs::create_dir_all(&cli.common.out)
        .map_err(|e| SuiteError::Config(format!("cannot create {}: {e}", cli.common.out.display())))?;
    let mut pass = true;
    for r in &reports {
        summarize(r);
        write_report(&cli.common.out, cli.common.format, r)?;
        pass &= r.pass;
    }
    if reports.len() > 1 {
        println!("{} overall", if pass { "PASS" } else { "FAIL" });
    }
    Ok(pass)
}

fn summarize(r: &SuiteReport) {
    println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.suite);
    for c in &r.checks {
        println!("  [{}] {}: {}", if c.pass { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    for c in r.failing() {
        eprintln!("{}: failing check {}: {}", r.suite, c.name, c.detail);
    }
}

fn write(path: &Path, contents: &str) -> Result<(), SuiteError> {
    fs::write(path, contents).map_err(|e| SuiteError::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_report(dir: &Path, format: Format, r: &SuiteReport) -> Result<(), SuiteError> {
    match format {
        Format::Json => write(&dir.join(format!("{}.json", r.suite)), &(r.to_json() + "\n"))?,
        Format::Csv => {
            write(&dir.join(format!("{}_checks.csv", r.suite)), &r.checks_csv())?;
            for t in &r.tables {
                write(&dir.join(format!("{}_{}.csv", r.suite, t.name)), &t.csv)?;
            }
        }
    }
    if !r.pass {
        let dump = SuiteReport {
            checks: r.failing().cloned().collect(),
            tables: Vec::new(),
            ..r.clone()
        };
        write(&dir.join(format!("{}_failures.json", r.suite)), &(dump.to_json() + "\n"))?;
    }
    Ok(())
}
