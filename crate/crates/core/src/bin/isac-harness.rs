use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oran_isac::harness::{
    run_experiment_a, run_experiment_b, run_sensing_accuracy, HarnessConfig, HarnessError,
    TransportKind,
};

#[derive(Parser)]
#[command(name = "isac-harness", about = "Run the ISAC control-loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Harness config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    transport: Option<Transport>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// exp-a: seconds per segment. exp-b: run length, converted to probes.
    #[arg(long = "duration-s", global = true)]
    duration_s: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Reporting-period schedule and inter-arrival statistics.
    ExpA,
    /// Closed-loop latency breakdown at a fixed period.
    ExpB,
    /// Range/velocity accuracy and trigger checks against ground truth.
    Sense,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Inproc,
    Tcp,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(t) = cli.transport {
        cfg.transport = match t {
            Transport::Inproc => TransportKind::Inproc,
            Transport::Tcp => TransportKind::Tcp,
        };
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::ExpA => {
            if let Some(d) = cli.duration_s {
                cfg.exp_a.segment_s = d;
            }
            let out = run_experiment_a(&cfg)?;
            out.write(&cli.out)?;
            for s in &out.summary.segments {
                println!(
                    "target {:>6.1} ms: {:>5} reports, mean {:.3} ms, stdev {:.3} ms, p95 jitter {:.3} ms",
                    s.target_ms,
                    s.reports,
                    s.mean_interarrival_ms,
                    s.stdev_interarrival_ms,
                    s.jitter_p95_ms
                );
            }
            println!("sequence gaps: {}", out.summary.sequence_gaps);
        }
        Command::ExpB => {
            if let Some(d) = cli.duration_s {
                cfg.exp_b.probes = ((d * 1e3 / cfg.exp_b.period_ms).round() as usize).max(1);
            }
            let out = run_experiment_b(&cfg)?;
            out.write(&cli.out)?;
            let s = &out.summary;
            for (name, p) in [
                ("telemetry", s.telemetry_ms),
                ("control", s.control_ms),
                ("closed-loop", s.closed_loop_ms),
            ] {
                if let Some(p) = p {
                    println!(
                        "{name:>11}: p50 {:.3} ms  p95 {:.3} ms  p99 {:.3} ms  (n={})",
                        p.p50, p.p95, p.p99, p.count
                    );
                }
            }
            for (name, frac) in &s.compliance {
                println!("{name:>22}: {:.1}% below threshold", frac * 100.0);
            }
            println!("reference prototype values: {:?}", s.reference_values);
        }
        Command::Sense => {
            if cli.duration_s.is_some() {
                log::warn!("--duration-s has no effect on sense; use sense.trials");
            }
            let out = run_sensing_accuracy(&cfg)?;
            out.write(&cli.out)?;
            let s = &out.summary;
            println!(
                "noise floor {:.2} dB, trigger at {:.2} dB, false alarms {}",
                s.noise_floor_db, s.trigger_threshold_db, s.false_alarms
            );
            for sc in &s.scenes {
                println!(
                    "{}: {} trials, range RMSE {:.3} m, velocity RMSE {:.3} m/s, {} within half a bin, trigger hits {}",
                    sc.scene, sc.trials, sc.range_rmse_m, sc.velocity_rmse_m, sc.within_half_bin, sc.trigger_hits
                );
            }
        }
    }
    eprintln!("results written to {}", cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isac-harness: {e}");
            ExitCode::FAILURE
        }
    }
}
