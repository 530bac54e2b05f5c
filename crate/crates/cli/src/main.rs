use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dualirs::estimators::{build_b, build_phase3_stack};
use dualirs::harness::{emit_csv, run_experiment, ExperimentSpec};
use dualirs::linalg::{max_abs, CMat, C64};
use dualirs::random::rng_from_seed;
use dualirs::training_design::{
    phase1_design, phase1_min_pilots, phase2_case2_min_pilots, phase2_certified_case2,
    phase2_design_case1, phase3_design, phase3_min_pilots, rank_certificate,
    verify_phase2_conditions, Phase2Schedule,
};
use dualirs::{cascade, gen_channels, overhead, Case2Mode, Error, RankCase, Scheme, SystemConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "dualirs",
    version,
    about = "Double-IRS channel estimation experiments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its CSV table
    Run(RunArgs),
    /// Print the minimum training overhead of a scheme
    Overhead(OverheadArgs),
    /// Training design checks
    Design {
        #[command(subcommand)]
        action: DesignAction,
    },
    /// Print the version
    Version,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment JSON file
    #[arg(long)]
    config: PathBuf,
    /// Override the trial count
    #[arg(long)]
    trials: Option<usize>,
    /// Override the base seed
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; defaults to the config's `output`, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Proposed,
    Decoupled,
    #[value(alias = "per_antenna", alias = "perAntenna")]
    PerAntenna,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Proposed => Scheme::Proposed,
            SchemeArg::Decoupled => Scheme::Decoupled,
            SchemeArg::PerAntenna => Scheme::PerAntenna,
        }
    }
}

#[derive(Args)]
struct OverheadArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    m2: usize,
    #[arg(long)]
    k: usize,
}

#[derive(Subcommand)]
enum DesignAction {
    /// Build the training design of one phase and check it
    Verify(VerifyArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    phase: u8,
    /// System JSON (an experiment config also works); defaults are used without it
    #[arg(long)]
    config: Option<PathBuf>,
}

/// System parameters plus optional pilot counts, read from a flat JSON file.
#[derive(Deserialize)]
struct DesignConfig {
    #[serde(flatten)]
    system: SystemConfig,
    #[serde(default)]
    i1: Option<usize>,
    #[serde(default)]
    i2: Option<usize>,
    #[serde(default)]
    i3: Option<usize>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut root = &e;
        while let Error::AtSweepPoint { source, .. } = root {
            root = source;
        }
        match root {
            Error::InvalidConfig(_) | Error::Json(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load_spec(path: &PathBuf) -> Result<ExperimentSpec, Failure> {
    // an unreadable config is a config error, not a runtime one
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    ExperimentSpec::from_json(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut spec = load_spec(&args.config)?;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.system.seed = s;
    }
    spec.validate()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let table = run_experiment(&spec)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    match args.out.or(spec.output) {
        Some(path) => emit_csv(&table, &path)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(table.to_csv().as_bytes())
                .map_err(|e| Failure::Runtime(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

fn load_design_config(path: Option<&PathBuf>) -> Result<DesignConfig, Failure> {
    let cfg = match path {
        None => DesignConfig {
            system: SystemConfig::default(),
            i1: None,
            i2: None,
            i3: None,
        },
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.system
        .validate()
        .map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

const TOL: f64 = 1e-10;

fn verify(args: VerifyArgs) -> Result<bool, Failure> {
    let cfg = load_design_config(args.config.as_ref())?;
    let s = &cfg.system;
    let (n, m1, m2, k) = (s.n, s.m1, s.m2, s.k);
    match args.phase {
        1 => {
            let i1 = cfg.i1.unwrap_or_else(|| phase1_min_pilots(m2));
            let d = phase1_design(m1, m2, i1)?;
            let tb = &d.theta_bar2;
            let gram = max_abs(
                &(tb * tb.adjoint() - CMat::identity(m2 + 1, m2 + 1) * C64::from(i1 as f64)),
            );
            let ok = gram <= TOL;
            println!(
                "{} phase 1: I1 = {i1}, max |Theta Theta^H - I1 I| = {gram:.1e}",
                verdict(ok)
            );
            Ok(ok)
        }
        2 if n >= m2 => {
            let i2 = cfg.i2.unwrap_or(2 * m1 + 1);
            let Phase2Schedule::Case1 {
                theta1, psi_row, ..
            } = phase2_design_case1(m1, i2)?
            else {
                unreachable!("case 1 design")
            };
            let r = verify_phase2_conditions(&theta1, &psi_row, TOL)?;
            println!(
                "{} phase 2 (case 1): I2 = {i2}, deviations gram {:.1e}, row sums {:.1e}, psi {:.1e}, cross {:.1e}",
                verdict(r.passed),
                r.gram,
                r.row_sums,
                r.psi_orthogonal,
                r.cross
            );
            Ok(r.passed)
        }
        2 => {
            let i2 = cfg.i2.unwrap_or_else(|| phase2_case2_min_pilots(n, m1, m2));
            let cc = cascade(&gen_channels(s, s.seed)?)?;
            match phase2_certified_case2(&cc.q_bar, m1, i2, Case2Mode::Random, s.seed, 32) {
                Ok((_, c)) => {
                    println!(
                        "PASS phase 2 (case 2): I2 = {i2}, rank {} of {}, min singular value ratio {:.1e}",
                        c.rank, c.required, c.min_sv_ratio
                    );
                    Ok(true)
                }
                Err(e @ Error::DesignFailure { .. }) => {
                    println!("FAIL phase 2 (case 2): I2 = {i2}, {e}");
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        _ => {
            if k < 2 {
                return Err(Failure::Config("phase 3 needs k >= 2".into()));
            }
            let i3 = cfg.i3.unwrap_or_else(|| phase3_min_pilots(n, m1, m2, k));
            let real = gen_channels(s, s.seed)?;
            let cc = cascade(&real)?;
            let mut rng = rng_from_seed(s.seed);
            let d = phase3_design(k, i3, m1, m2, n, &mut rng)?;
            let gram = max_abs(
                &(&d.x * d.x.adjoint() - CMat::identity(k - 1, k - 1) * C64::from(i3 as f64)),
            );
            let user1 = &cc.users[0];
            let bs = (0..i3)
                .map(|i| {
                    build_b(
                        &user1.q,
                        &user1.r,
                        &user1.r_tilde,
                        &d.theta1[i],
                        &d.theta2[i],
                    )
                })
                .collect::<dualirs::Result<Vec<_>>>()?;
            // Case 1 solves with B alone; Case 2 needs the whole stacked model.
            let cert = match d.case {
                RankCase::Case1 => rank_certificate(&bs[0]),
                RankCase::Case2 => rank_certificate(&build_phase3_stack(&d.x, &bs)?),
            };
            let (rank, required) = (cert.rank, cert.required);
            let ok = gram <= TOL && cert.passed;
            let case = match d.case {
                RankCase::Case1 => 1,
                RankCase::Case2 => 2,
            };
            println!(
                "{} phase 3 (case {case}): I3 = {i3}, max |X X^H - I3 I| = {gram:.1e}, design rank {rank} of {required}",
                verdict(ok)
            );
            Ok(ok)
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Overhead(a) => overhead(a.scheme.into(), a.n, a.m1, a.m2, a.k)
            .map(|v| println!("{v}"))
            .map_err(|e| Failure::Config(e.to_string())),
        Command::Design {
            action: DesignAction::Verify(args),
        } => match verify(args) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::Version => {
            println!("dualirs {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
