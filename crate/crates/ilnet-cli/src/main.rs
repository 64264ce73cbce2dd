use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ilnet_cli::{cmd_bench, cmd_synth, cmd_track, cmd_verify};
use ilnet_core::verify::SuiteOptions;

#[derive(Parser)]
#[command(name = "ilnet", about = "Tracking-by-detection engine over shared conv features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence; writes boxes.csv, metrics.json, curves.csv, timings.json.
    Track {
        /// Sequence directory (img/ plus groundtruth_rect.txt).
        #[arg(long)]
        seq: PathBuf,
        /// Flat JSON config; defaults apply for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare interpolated against brute-force candidate processing; writes bench.json.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repetitions (median reported, at least 3).
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite; writes verify.json, exits nonzero on failure.
    Verify {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fault-injection hook: skew bilinear sampling so the equivalence
        /// checks must fail.
        #[arg(long, default_value_t = false)]
        corrupt_bilinear: bool,
    },
    /// Materialize a synthetic sequence in the layout `track` reads.
    Synth {
        /// SynthSpec JSON; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> ilnet_core::Result<ExitCode> {
    match cli.command {
        Command::Track {
            seq,
            config,
            seed,
            out,
        } => {
            let s = cmd_track(&seq, config.as_deref(), seed, &out)?;
            println!(
                "tracked {} frames in {:.1}s: precision@20 {:.3}, AUC {:.3}, mean IoU {:.3} -> {}",
                s.trajectory.len(),
                s.elapsed_s,
                s.metrics.precision_at_20,
                s.metrics.auc,
                s.metrics.mean_iou,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { config, reps, out } => {
            let r = cmd_bench(config.as_deref(), reps, &out)?;
            println!(
                "candidate: {:.1}ms vs {:.1}ms brute ({:.1}x measured, {:.1}x analytic flops)",
                r.candidate.interpolated.median_ms,
                r.candidate.brute_force.median_ms,
                r.candidate.speedup,
                r.flops.candidate_ratio,
            );
            println!(
                "frame: {:.1}ms vs {:.1}ms brute ({:.1}x measured, {:.1}x analytic flops) -> {}",
                r.frame.interpolated.median_ms,
                r.frame.brute_force.median_ms,
                r.frame.speedup,
                r.flops.frame_ratio,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            out,
            seed,
            corrupt_bilinear,
        } => {
            let opts = SuiteOptions {
                seed,
                corrupt_bilinear,
                ..SuiteOptions::default()
            };
            let report = cmd_verify(&out, &opts)?;
            for c in &report.checks {
                println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            }
            println!(
                "{} of {} checks passed -> {}",
                report.checks.iter().filter(|c| c.passed).count(),
                report.checks.len(),
                out.join("verify.json").display()
            );
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Synth { spec, out } => {
            let s = cmd_synth(spec.as_deref(), &out)?;
            println!(
                "wrote {} frames of {}x{} to {}",
                s.frame_count,
                s.width,
                s.height,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
