use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semiflow_cli::runner::parse_slack_override;
use semiflow_cli::verify::{default_suite, exit_code, run_suite, summary};
use semiflow_cli::{run_scenario, CliError, DumpStates, Kind, Outcome, RunOptions, Scenario};

const DEFAULT_OUT: &str = "semiflow-out";

#[derive(Parser)]
#[command(name = "semiflow", version, about = "Implicit Euler flows of convex energies with estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an `evolve` scenario.
    Run(RunArgs),
    /// Run a `perturbed` scenario through Picard iteration.
    Perturbed(RunArgs),
    /// Run a `dtn` scenario on the boundary.
    Dtn(RunArgs),
    /// Run every scenario of a suite directory.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory; `run`, `perturbed` and `dtn` default to
    /// `semiflow-out`, `verify` writes nothing unless it is given.
    #[arg(long, env = "SEMIFLOW_OUT")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override one slack factor, e.g. `velocity=1.5`.
    #[arg(long = "slack-override", value_name = "NAME=VALUE", value_parser = parse_slack_override)]
    slack_override: Vec<(String, f64)>,
    #[arg(long, value_enum, default_value_t = DumpStates::None)]
    dump_states: DumpStates,
}

impl Common {
    fn options(self) -> RunOptions {
        RunOptions {
            out_dir: self.out,
            seed: self.seed,
            slack_overrides: self.slack_override,
            dump_states: self.dump_states,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory of scenario files; the bundled suite by default.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn print_outcome(o: &Outcome) {
    println!("scenario {} ({})", o.name, o.kind.as_str());
    println!("{:<16} {:>12} {:>8} {:>6} {:>6}", "estimate", "ratio", "slack", "index", "pass");
    for e in &o.report.entries {
        println!(
            "{:<16} {:>12.4e} {:>8} {:>6} {:>6}",
            e.name,
            e.ratio,
            e.slack,
            e.worst_time_index,
            if e.pass { "yes" } else { "NO" }
        );
    }
    if let Some(fp) = &o.fixed_point {
        println!(
            "picard: {} iterations, converged {}, last distance {:.3e}",
            fp.distances.len(),
            fp.converged,
            fp.distances.last().copied().unwrap_or(0.0)
        );
    }
    if let Some(c) = o.trace_constant {
        println!("trace constant: {c:.4}");
    }
    for f in &o.files {
        println!("wrote {}", f.display());
    }
    println!("{}", if o.passed() { "PASS" } else { "FAIL" });
}

fn run(kind: Kind, args: RunArgs) -> Result<i32, CliError> {
    let scenario = Scenario::load(&args.config)?;
    if scenario.kind != kind {
        return Err(CliError::Config(format!(
            "{} is a {} scenario; use `semiflow {}`",
            args.config.display(),
            scenario.kind.as_str(),
            match scenario.kind {
                Kind::Evolve => "run",
                Kind::Perturbed => "perturbed",
                Kind::Dtn => "dtn",
            }
        )));
    }
    let mut options = args.common.options();
    options.out_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT));
    let outcome = run_scenario(&scenario, &options)?;
    print_outcome(&outcome);
    Ok(outcome.exit_code())
}

fn verify(args: VerifyArgs) -> Result<i32, CliError> {
    let dir = args.suite.unwrap_or_else(default_suite);
    let rows = run_suite(&dir, &args.common.options())?;
    print!("{}", summary(&rows));
    Ok(exit_code(&rows))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(Kind::Evolve, a),
        Command::Perturbed(a) => run(Kind::Perturbed, a),
        Command::Dtn(a) => run(Kind::Dtn, a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("semiflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
