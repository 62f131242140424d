use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cobot_pick::experiment::{self, ExperimentConfig, PolicySpec, Preset, TrainMode};
use cobot_pick::oracle::{InstanceSpec, MAX_ITEMS, MAX_PICKERS};
use cobot_pick::{Error, Result};
use log::{error, info};

/// Picker routing for human-robot collaborative order picking.
#[derive(Parser, Debug)]
#[command(name = "cobot-pick", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; episode i uses seed + i.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Number of evaluation episodes.
    #[arg(long, global = true, value_name = "N")]
    episodes: Option<usize>,
    /// Warehouse preset: S, M, L or XL.
    #[arg(long, global = true, value_name = "PRESET")]
    preset: Option<Preset>,
    /// greedy, vi, random or checkpoint:PATH.
    #[arg(long, global = true, value_name = "SPEC")]
    policy: Option<PolicySpec>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a policy and write per-episode metrics.
    Simulate,
    /// Train a multi-objective population or a pure-efficiency policy.
    Train {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// PPO iterations (efficiency mode).
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue from a checkpoint (efficiency mode).
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Re-evaluate a training run's policies and report the front.
    Pareto {
        /// Directory written by `train` in multi-objective mode.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        /// Extra policies evaluated alongside the run's policies.
        #[arg(long = "with", value_name = "SPEC")]
        extra: Vec<PolicySpec>,
    },
    /// Compare heuristics (and --policy, if given) to exact optima.
    OracleCompare {
        #[arg(long, value_name = "DIR")]
        instances: PathBuf,
    },
    /// Write random deterministic instances small enough for the exact solver.
    GenInstances {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        min_items: usize,
        #[arg(long, default_value_t = 8)]
        max_items: usize,
        #[arg(long, default_value_t = 3)]
        max_pickers: usize,
        #[arg(long, default_value_t = 3)]
        max_amrs: usize,
        #[arg(long, default_value_t = 3)]
        aisles: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Start AMRs part-way along their route.
        #[arg(long)]
        diverse_start: bool,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Morl,
    Efficiency,
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.episodes {
        cfg.episodes = n;
    }
    if let Some(p) = c.preset {
        cfg.preset = Some(p);
    }
    if let Some(p) = &c.policy {
        cfg.policy = p.clone();
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config(&cli.common)?;
    match cli.command {
        Command::Simulate => {
            let (_, s) = experiment::cmd_simulate(&cfg)?;
            println!(
                "completion_time_s {:.3} ± {:.3}  workload_sd_kg {:.3} ± {:.3}  ({} episodes)",
                s.completion_time, s.completion_time_ci95, s.workload_sd, s.workload_sd_ci95, s.episodes
            );
        }
        Command::Train {
            mode,
            iterations,
            resume,
        } => {
            if let Some(m) = mode {
                cfg.mode = match m {
                    Mode::Morl => TrainMode::Morl,
                    Mode::Efficiency => TrainMode::Efficiency,
                };
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            if resume.is_some() {
                cfg.resume = resume;
            }
            let dir = experiment::cmd_train(&cfg)?;
            println!("{}", dir.display());
        }
        Command::Pareto { run, extra } => {
            let r = experiment::cmd_pareto(&run, &cfg, &extra)?;
            for row in &r.rows {
                println!(
                    "{:<14} C {:>9.2} ± {:<7.2} SD {:>7.3} ± {:<6.3} {}",
                    row.label,
                    row.summary.completion_time,
                    row.summary.completion_time_ci95,
                    row.summary.workload_sd,
                    row.summary.workload_sd_ci95,
                    if row.non_dominated { "non-dominated" } else { "" }
                );
            }
            println!("hypervolume {}", r.hypervolume);
        }
        Command::OracleCompare { instances } => {
            let policy = cli.common.policy.as_ref();
            std::fs::create_dir_all(&cfg.out_dir)?;
            let rows = experiment::cmd_oracle_compare(&instances, &cfg, policy)?;
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&experiment::OracleRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
            println!(
                "mean gap greedy {:.2}%  vi {:.2}%",
                mean(&|r| r.gap(r.greedy)),
                mean(&|r| r.gap(r.vi))
            );
            if policy.is_some() {
                println!("mean gap policy {:.2}%", mean(&|r| r.policy.map_or(0.0, |p| r.gap(p))));
            }
        }
        Command::GenInstances {
            count,
            min_items,
            max_items,
            max_pickers,
            max_amrs,
            aisles,
            depth,
            diverse_start,
        } => {
            if min_items < 1
                || min_items > max_items
                || max_items > MAX_ITEMS
                || !(1..=MAX_PICKERS).contains(&max_pickers)
                || max_amrs < 1
            {
                return Err(Error::Config(format!(
                    "instance bounds: 1 ≤ min-items ≤ max-items ≤ {MAX_ITEMS}, 1 ≤ max-pickers ≤ {MAX_PICKERS}, max-amrs ≥ 1"
                )));
            }
            let spec = InstanceSpec {
                n_aisles: aisles,
                depth,
                items: (min_items, max_items),
                pickers: (1, max_pickers),
                amrs: (1, max_amrs),
                diverse_start,
                ..InstanceSpec::default()
            };
            let paths = experiment::cmd_gen_instances(&cfg.out_dir, count, cfg.seed, &spec)?;
            info!("wrote {} instances to {}", paths.len(), cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
