//! `sgpcn` command line: simulate one configuration or summarize traces.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sgpcn::config::{load_config, Algorithm, SimConfig};
use sgpcn::sim::{self, SummaryOptions};

#[derive(Parser)]
#[command(name = "sgpcn", version, about = "Grid-energy-aware scheduling and beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its per-slot trace as CSV.
    Run {
        /// TOML configuration; every key is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Option<Algorithm>,
        /// Lyapunov weight of the energy cost.
        #[arg(long)]
        v: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean cost, annualized cost and delay per trace, and per algorithm/V group.
    Summarize {
        /// Moving-average window in slots.
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long, default_value_t = 1.0)]
        slot_ms: f64,
        #[arg(long, default_value_t = 1e3)]
        bst_scale: f64,
        /// Also write the moving-average series of every trace to this CSV.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: sgpcn::Error| e.to_string())
}

fn run(
    config: Option<PathBuf>,
    seed: Option<u64>,
    slots: Option<u64>,
    algorithm: Option<Algorithm>,
    v: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = match &config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => SimConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(slots) = slots {
        cfg.run.num_slots = slots;
    }
    if let Some(a) = algorithm {
        cfg.control.algorithm = a;
    }
    if let Some(v) = v {
        cfg.control.v = v;
    }
    if let Some(out) = out {
        cfg.run.output = out;
    }
    let path = sim::run(&cfg)?;
    println!("{}", path.display());
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn summarize(window: usize, slot_ms: f64, bst_scale: f64, series: Option<PathBuf>, paths: Vec<PathBuf>) -> Result<()> {
    anyhow::ensure!(window >= 1, "--window must be at least 1");
    anyhow::ensure!(slot_ms > 0.0, "--slot-ms must be positive");
    let summary = sim::summarize(
        &paths,
        SummaryOptions {
            window,
            slot_ms,
            bst_scale,
        },
    )?;
    println!("path,algorithm,v,seed,slots,mean_cost,annualized,delay");
    for r in &summary.runs {
        println!(
            "{},{},{},{},{},{:.6e},{:.6},{}",
            r.path.display(),
            r.algorithm,
            r.v,
            r.seed,
            r.slots,
            r.mean_cost,
            r.annualized,
            fmt_opt(r.delay)
        );
    }
    println!();
    println!("algorithm,v,runs,cost_mean,cost_std,annualized_mean,annualized_std,delay_mean,delay_std");
    for g in &summary.groups {
        println!(
            "{},{},{},{:.6e},{:.6e},{:.6},{:.6},{},{}",
            g.algorithm,
            g.v,
            g.runs,
            g.cost_mean,
            g.cost_std,
            g.annualized_mean,
            g.annualized_std,
            fmt_opt(g.delay_mean),
            fmt_opt(g.delay_std)
        );
    }
    if let Some(out) = series {
        let mut text = String::from("slot");
        for r in &summary.runs {
            text.push_str(&format!(",{}", r.path.display()));
        }
        text.push('\n');
        let len = summary.runs.iter().map(|r| r.moving_average.len()).max().unwrap_or(0);
        for t in 0..len {
            text.push_str(&t.to_string());
            for r in &summary.runs {
                text.push(',');
                if let Some(x) = r.moving_average.get(t) {
                    text.push_str(&x.to_string());
                }
            }
            text.push('\n');
        }
        std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            slots,
            algorithm,
            v,
            out,
        } => run(config, seed, slots, algorithm, v, out),
        Command::Summarize {
            window,
            slot_ms,
            bst_scale,
            series,
            paths,
        } => summarize(window, slot_ms, bst_scale, series, paths),
    }
}
