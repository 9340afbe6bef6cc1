use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use ranslice::harness::compare::compare_runs;
use ranslice::harness::oracle::brute_force_static_oracle;
use ranslice::harness::run::{read_summary, run_experiment, write_json};
use ranslice::harness::RunConfig;

#[derive(Parser)]
#[command(version, about = "RAN-slicing simulator and RL experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed (or every configured seed) and write step logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every static allocation and report the best.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare groups of run summaries with paired sign tests.
    Compare {
        /// `label=glob` selecting `*.summary.json` files; repeat per group.
        #[arg(long = "group", required = true)]
        groups: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the calibrated capacity and SLA thresholds of a config.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let summaries = run_experiment(&cfg, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summaries)?);
        }
        Command::Oracle {
            config,
            horizon,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let env = cfg.env.build()?.env;
            let result = brute_force_static_oracle(&env, horizon, seed)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Compare { groups, out } => {
            let mut parsed = Vec::new();
            for g in &groups {
                let Some((label, pattern)) = g.split_once('=') else {
                    bail!("group {g:?} is not of the form label=glob");
                };
                let mut runs = Vec::new();
                for path in glob::glob(pattern).with_context(|| format!("bad glob {pattern:?}"))? {
                    runs.push(read_summary(&path?)?);
                }
                if runs.is_empty() {
                    bail!("group {label} matched no files");
                }
                parsed.push((label.to_string(), runs));
            }
            let report = compare_runs(&parsed)?;
            write_json(&out, &report)?;
            println!("wrote {}", out.display());
        }
        Command::Calibrate { config } => {
            let cfg = RunConfig::load(&config)?;
            let calibrated = cfg.env.build()?;
            let env = &calibrated.env;
            let slices: Vec<_> = env
                .profiles
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    json!({
                        "class": p.class,
                        "users": p.num_users,
                        "c1_ms": p.sla_c1,
                        "c2_ms": p.sla_c2,
                        "deadline_ms": p.deadline,
                        "hard_slicing_latency_ms": calibrated.hard_latency.as_ref().map(|l| l[i]),
                    })
                })
                .collect();
            let report = json!({
                "capacity_bytes_per_slot": env.capacity_per_slot,
                "slices": slices,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
