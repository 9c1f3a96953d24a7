use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byzopt::graph::generate_robust_graph;
use byzopt::harness::{self, output, HarnessError};

#[derive(Parser)]
#[command(name = "byzopt", version, about = "Byzantine-resilient distributed optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an r-robust graph as an edge list.
    GenerateGraph {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Check r-robustness exhaustively (n <= 20).
        #[arg(long)]
        verify: bool,
    },
    /// Run one simulation from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a named preset several times.
    Experiment {
        #[arg(long)]
        preset: String,
        /// Defaults to the preset's run count.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Certify a stored trajectory.
    Certify {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset's base config as TOML, or list presets.
    Preset { name: Option<String> },
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::GenerateGraph { n, r, seed, out, verify } => {
            let g = generate_robust_graph(n, r, seed)?;
            if verify && !g.is_r_robust(r)? {
                return Err(HarnessError::Config(format!("generated graph is not {r}-robust")));
            }
            g.write(&out)?;
            println!("wrote {} nodes, {} edges to {}", g.n(), g.edge_count(), out.display());
            Ok(true)
        }
        Command::Run { config, out_dir } => {
            let scenario = harness::parse_config(&config)?;
            for w in &scenario.warnings {
                log::warn!("{w}");
            }
            let outcome = harness::run_scenario(&scenario, 0, None)?;
            std::fs::create_dir_all(&out_dir)?;
            output::write_metrics_csv(&out_dir.join("metrics.csv"), &outcome.metrics)?;
            output::write_trajectory_csv(
                &out_dir.join("trajectory.csv"),
                &outcome.trajectory,
                &outcome.config.adversaries,
            )?;
            if let Ok(cert) = &outcome.certificate {
                output::write_json(&out_dir.join("certificate.json"), cert)?;
            }
            let summary = outcome.summary();
            output::write_json(&out_dir.join("summary.json"), &summary)?;
            println!(
                "{} rounds; final gap f(x_bar) - f* = {:.6e}; hard checks {}",
                summary.rounds,
                summary.final_gap_x,
                if outcome.hard_checks_passed() { "passed" } else { "FAILED" }
            );
            Ok(outcome.hard_checks_passed())
        }
        Command::Experiment { preset, runs, seed, out } => {
            let p = harness::preset(&preset).ok_or_else(|| {
                HarnessError::Config(format!("unknown preset {preset:?}; known: {}", harness::PRESET_NAMES.join(", ")))
            })?;
            let runs = runs.unwrap_or(p.runs);
            let (summary, _) = harness::run_experiment(&p, runs, seed, Some(&out))?;
            println!(
                "{}: {} runs; x-gap below y-gap in {}; consensus in {}; hard checks {}",
                summary.preset,
                summary.runs,
                summary.gap_x_below_gap_y,
                summary.consensus_verdicts,
                if summary.all_hard_checks_passed { "passed" } else { "FAILED" }
            );
            Ok(summary.all_hard_checks_passed)
        }
        Command::Certify { trajectory, config, out } => {
            let scenario = harness::parse_config(&config)?;
            let states = output::read_trajectory_csv(&trajectory)?;
            let traj = harness::trajectory_from_states(&scenario.config, states)?;
            let report = harness::certify_report(&scenario.config, &traj)?;
            output::write_json(&out, &report)?;
            println!(
                "s*_min = {:.6e}; minimizer inside: {}; final states inside: {}",
                report.certificate.s_star_min, report.certificate.minimizer_inside, report.certificate.final_contained
            );
            Ok(report.certificate.minimizer_inside && report.certificate.final_contained)
        }
        Command::Preset { name: None } => {
            for name in harness::PRESET_NAMES {
                let p = harness::preset(name).expect("listed preset exists");
                println!("{name}: {}", p.description);
            }
            Ok(true)
        }
        Command::Preset { name: Some(name) } => {
            let p = harness::preset(&name).ok_or_else(|| HarnessError::Config(format!("unknown preset {name:?}")))?;
            print!("{}", p.base.to_toml()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
