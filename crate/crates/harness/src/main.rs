use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pawtime::emit::{emit, EmitFormat};
use pawtime::runner::{run_scenario, verify_scenario, ResultBundle, Status};
use pawtime::scenario::{load_scenario, parse_scenario, ScenarioConfig};
use pawtime::{corpus, selfcheck, thread_cap, HarnessError};

/// Quantum-clock event-time simulator.
#[derive(Parser)]
#[command(name = "pawtime", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files and persist their results.
    Run {
        /// Scenario TOML paths, or names of shipped scenarios.
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Output directory for result files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Output format for the per-scenario artifact.
        #[arg(long, default_value = "json")]
        format: EmitFormat,
        /// Additionally run the scenario's declared oracle comparisons and
        /// fail (exit 3) on any tolerance breach.
        #[arg(long)]
        verify: bool,
    },
    /// List the shipped scenario corpus.
    ListScenarios,
    /// Run the built-in invariant suite.
    Selfcheck,
}

fn load_by_name_or_path(input: &str) -> Result<ScenarioConfig, HarnessError> {
    let path = Path::new(input);
    if path.exists() {
        load_scenario(path)
    } else if let Some(entry) = corpus::find(input) {
        parse_scenario(entry.text)
    } else {
        Err(HarnessError::Io(format!(
            "{input}: not a file and not a shipped scenario (see `pawtime list-scenarios`)"
        )))
    }
}

struct RunOutcome {
    input: String,
    result: Result<(ResultBundle, Vec<String>, bool), HarnessError>,
}

fn run_one(input: &str, out_dir: &Path, format: EmitFormat, verify: bool) -> RunOutcome {
    let result = (|| {
        let cfg = load_by_name_or_path(input)?;
        let mut bundle = run_scenario(&cfg)?;
        let mut breach_lines = Vec::new();
        if verify {
            for b in verify_scenario(&cfg, &mut bundle)? {
                breach_lines.push(format!("{}: {}", b.check, b.detail));
            }
        }
        let path = out_dir.join(format!("{}.{}", cfg.name, format.extension()));
        emit(&bundle, format, &path)?;
        let required_never =
            cfg.options.require_event && bundle.status == Status::NeverOccurs;
        Ok((bundle, breach_lines, required_never))
    })();
    RunOutcome { input: input.to_string(), result }
}

fn summarize(bundle: &ResultBundle) -> String {
    match bundle.status {
        Status::NeverOccurs => "status=never_occurs".to_string(),
        Status::Ok => {
            let d = bundle.distribution.as_ref().expect("ok bundles carry a distribution");
            let peak = d
                .rows
                .iter()
                .max_by(|a, b| a.prob_mass.partial_cmp(&b.prob_mass).unwrap())
                .map(|r| r.t_seconds)
                .unwrap_or(f64::NAN);
            format!(
                "status=ok dwell={:.6} arrival_p={:.6} peak_t={:.6}",
                d.dwell_time_seconds, d.arrival_probability, peak
            )
        }
    }
}

fn cmd_run(scenarios: Vec<String>, out: PathBuf, format: EmitFormat, verify: bool) -> u8 {
    let threads = thread_cap();
    let outcomes = pawtime::run_parallel(scenarios, threads, |input| {
        run_one(input, &out, format, verify)
    });

    let mut exit = 0u8;
    let mut raise = |code: u8| {
        // Report the most severe failure class: hard errors beat verify
        // breaches beat required-never results.
        let rank = |c: u8| match c {
            0 => 0,
            3 => 1,
            4 => 2,
            _ => 3,
        };
        if rank(code) > rank(exit) {
            exit = code;
        }
    };

    for outcome in outcomes {
        match outcome.result {
            Ok((bundle, breaches, required_never)) => {
                println!("{}: {}", bundle.scenario, summarize(&bundle));
                for w in &bundle.diagnostics.warnings {
                    eprintln!("{}: warning: {w}", bundle.scenario);
                }
                for b in &breaches {
                    eprintln!("{}: verify breach: {b}", bundle.scenario);
                }
                if required_never {
                    eprintln!(
                        "{}: event was required to occur but never does",
                        bundle.scenario
                    );
                    raise(4);
                }
                if !breaches.is_empty() {
                    raise(3);
                }
            }
            Err(e) => {
                eprintln!("{}: error: {e}", outcome.input);
                raise(e.exit_code() as u8);
            }
        }
    }
    exit
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenarios, out, format, verify } => cmd_run(scenarios, out, format, verify),
        Command::ListScenarios => {
            for entry in corpus::CORPUS {
                match parse_scenario(entry.text) {
                    Ok(cfg) => println!("{:24} {}", cfg.name, cfg.description),
                    Err(e) => {
                        eprintln!("{}: corrupt embedded scenario: {e}", entry.name);
                        return ExitCode::from(1);
                    }
                }
            }
            0
        }
        Command::Selfcheck => {
            if selfcheck::run_selfcheck() {
                0
            } else {
                3
            }
        }
    };
    ExitCode::from(code)
}
