use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;

use nkbench::evolution::Algorithm;
use nkbench::exact::{solve, SolveConfig};
use nkbench::harness::{self, CellAggregate, RunStats, SweepConfig, SweepOptions};
use nkbench::instance::bits_to_string;
use nkbench::io::{read_instance, write_instance};
use nkbench::{Error, NkInstance};

const EXIT_INVALID: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "nkbench", version, about = "NK landscape benchmarking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random NK instance and write it as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Defaults to `nk_n<N>_k<K>_s<SEED>.json` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "NKBENCH_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Find the global optimum of an instance by branch and bound.
    SolveExact {
        instance: PathBuf,
        #[arg(long)]
        node_limit: Option<u64>,
        /// Hill-climbing restarts used to seed the incumbent.
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Run a full benchmark sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Skip work units already listed in the manifest.
        #[arg(long)]
        resume: bool,
        /// Overrides the config's output directory.
        #[arg(long, env = "NKBENCH_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Per-cell ratios of A's work to B's work on shared instances.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only this algorithm's runs from A.
        #[arg(long)]
        algorithm_a: Option<Algorithm>,
        #[arg(long)]
        algorithm_b: Option<Algorithm>,
    },
    /// Turn an aggregates file into plot-ready series.
    ExportPlotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NodeLimit { .. } | Error::PopulationCap { .. } => EXIT_RESOURCE,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_INVALID,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> nkbench::Result<()> {
    match command {
        Command::Generate { n, k, seed, out, out_dir } => {
            let inst = NkInstance::generate(n, k, seed)?;
            let path = out.unwrap_or_else(|| out_dir.join(format!("nk_n{n}_k{k}_s{seed}.json")));
            write_instance(&path, &inst)?;
            info!("wrote {}", path.display());
            Ok(())
        }
        Command::SolveExact {
            instance,
            node_limit,
            restarts,
        } => solve_exact(&instance, node_limit, restarts),
        Command::Sweep {
            config,
            workers,
            resume,
            out_dir,
        } => {
            let cfg = SweepConfig::from_json(&fs::read_to_string(&config)?)?;
            let dir = out_dir
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory (config, --out-dir or NKBENCH_OUT_DIR)".into()))?;
            fs::create_dir_all(&dir)?;
            let opts = SweepOptions {
                workers,
                resume,
                max_new_units: None,
            };
            let out = harness::run_sweep(&cfg, &dir, &opts)?;
            info!(
                "{} runs in {} cells, {} uncertified instances",
                out.results.len(),
                out.aggregates.len(),
                out.manifest.uncertified.len()
            );
            Ok(())
        }
        Command::Compare {
            a,
            b,
            out,
            algorithm_a,
            algorithm_b,
        } => {
            let load = |path: &Path, alg: Option<Algorithm>| -> nkbench::Result<Vec<RunStats>> {
                let rows: Vec<RunStats> = harness::read_csv(path)?;
                Ok(match alg {
                    Some(alg) => rows.into_iter().filter(|r| r.algorithm == alg).collect(),
                    None => rows,
                })
            };
            let curve = harness::compare(&load(&a, algorithm_a)?, &load(&b, algorithm_b)?)?;
            harness::write_csv(&out, &curve)
        }
        Command::ExportPlotdata { input, out } => {
            let aggregates: Vec<CellAggregate> = harness::read_csv(&input)?;
            harness::write_csv(&out, &harness::plot_series(&aggregates))
        }
    }
}

fn solve_exact(path: &Path, node_limit: Option<u64>, restarts: Option<usize>) -> nkbench::Result<()> {
    let inst = read_instance(path)?;
    let cfg = SolveConfig {
        node_limit,
        restarts,
        ..SolveConfig::default()
    };
    match solve(&inst, &cfg) {
        Ok(res) => {
            let out = json!({
                "status": "optimal",
                "n": inst.n(),
                "k": inst.k(),
                "optimum_bits": bits_to_string(&res.optimum_bits),
                "optimum_value": res.optimum_value,
                "nodes_expanded": res.nodes_expanded,
                "seed_value": res.seed_value,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Err(Error::NodeLimit {
            limit,
            nodes_expanded,
            incumbent,
        }) => {
            let out = json!({
                "status": "node-limit",
                "n": inst.n(),
                "k": inst.k(),
                "incumbent_bits": incumbent.to_bitstring(),
                "incumbent_value": incumbent.fitness_or_nan(),
                "nodes_expanded": nodes_expanded,
                "node_limit": limit,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Err(Error::NodeLimit {
                limit,
                nodes_expanded,
                incumbent,
            })
        }
        Err(e) => Err(e),
    }
}
