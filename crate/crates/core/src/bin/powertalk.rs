use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use powertalk::experiments::{self, output, Scenario};
use powertalk::protocol::Execution;
use powertalk::Error;

#[derive(Parser)]
#[command(name = "powertalk", version, about = "Power talk signaling and economic dispatch simulator")]
struct Cli {
    /// Run trials on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its summary.
    Validate { scenario: PathBuf },
    /// Simulate one dispatch period and write its trace.
    Run {
        scenario: PathBuf,
        #[arg(long, env = output::OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one of the evaluation studies.
    Exp {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = output::OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Quantization,
    Detection,
    Cost,
}

fn exit_code(category: &str) -> u8 {
    match category {
        "parse" => 3,
        "validation" => 4,
        "numerical" => 5,
        "protocol" => 6,
        "io" => 7,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let execution = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, execution) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let category = err.category();
            eprintln!("error[{category}]: {err}");
            ExitCode::from(exit_code(category))
        }
    }
}

fn run(command: Command, execution: Execution) -> Result<(), Error> {
    match command {
        Command::Validate { scenario } => {
            let s = experiments::load_scenario(&scenario)?;
            // Operating point and channel must also exist.
            let ctx = s.context(&s.protocol)?;
            print_summary(&s);
            println!("signaling amplitude: {:.6} V", ctx.amplitude());
            println!("slot noise sigma: {:.6e} V", ctx.sigma());
            Ok(())
        }
        Command::Run { scenario, out, seed } => {
            let s = experiments::load_scenario(&scenario)?;
            let seed = seed.unwrap_or(s.seed);
            let trace = experiments::run_reference_period(&s, seed)?;
            let files = output::write_trace(&out, &trace)?;
            let manifest = output::write_manifest(&out, "run", &display(&scenario), seed, 1, &files)?;
            println!("period cost {:.6}", trace.period_cost);
            report(&files, &manifest);
            Ok(())
        }
        Command::Exp { kind, scenario, out, seed, trials } => {
            let s = experiments::load_scenario(&scenario)?;
            let seed = seed.unwrap_or(s.seed);
            let (name, trials, files) = match kind {
                ExperimentKind::Quantization => {
                    let trials = trials.unwrap_or(s.trials);
                    let rows = experiments::experiment_quantization(&s, &s.sweeps.bits, trials, seed, execution)?;
                    ("quantization", trials, output::write_quantization(&out, &rows)?)
                }
                ExperimentKind::Detection => {
                    let trials = trials.unwrap_or(s.detection_trials);
                    let rows = experiments::experiment_detection(
                        &s,
                        &s.sweeps.power_budgets,
                        &s.sweeps.group_sizes,
                        trials,
                        seed,
                        execution,
                    )?;
                    ("detection", trials, output::write_detection(&out, &rows)?)
                }
                ExperimentKind::Cost => {
                    let trials = trials.unwrap_or(s.trials);
                    let rows = experiments::experiment_cost_tradeoff(
                        &s,
                        &s.sweeps.slot_durations,
                        &s.sweeps.cost_bits,
                        trials,
                        seed,
                        execution,
                    )?;
                    for &ts in &s.sweeps.slot_durations {
                        match experiments::interior_minimum(&rows, ts) {
                            Some(q) => println!("T_S = {ts} s: cost minimized at Q = {q}"),
                            None => println!("T_S = {ts} s: minimum at the edge of the sweep"),
                        }
                    }
                    ("cost", trials, output::write_cost(&out, &rows)?)
                }
            };
            let manifest = output::write_manifest(&out, name, &display(&scenario), seed, trials, &files)?;
            report(&files, &manifest);
            Ok(())
        }
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn print_summary(s: &Scenario) {
    println!("scenario: {}", s.name);
    println!(
        "buses {}, DERs {}, types {}",
        s.config.num_buses(),
        s.config.num_ders(),
        s.config.num_types()
    );
    println!("total demand: {} W", s.config.total_demand());
    println!(
        "protocol: Q = {}, T = {} s, T_S = {} s, {} slots",
        s.protocol.bits,
        s.protocol.period,
        s.protocol.slot_duration,
        s.protocol.num_slots()
    );
}

fn report(files: &[PathBuf], manifest: &Path) {
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", manifest.display());
}
