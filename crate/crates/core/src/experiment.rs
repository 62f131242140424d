//! Experiment configuration, orchestration and report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_by_name, GreedyPolicy, ViPolicy};
use crate::env::{run_episode, Env, EnvConfig, Policy};
use crate::error::{Error, Result};
use crate::morl::{self, dominates, hypervolume_2d, run_morl, ArchiveFile, MorlConfig, Point, PolicyRecord};
use crate::nn::Checkpoint;
use crate::oracle::{self, DeterministicInstance, InstanceSpec, Objective};
use crate::ppo::{NetPolicy, PpoConfig, PpoTrainer};
use crate::report::{self, mean_ci95};
use crate::sim::SimConfig;
use crate::stochastic::RandomStream;

/// Warehouse sizes used in the full-scale experiments.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    S,
    M,
    L,
    XL,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::S, Preset::M, Preset::L, Preset::XL];

    /// (aisles, depth, pickers, AMRs, picks).
    pub fn dims(self) -> (usize, usize, usize, usize, u64) {
        match self {
            Preset::S => (10, 10, 10, 25, 5000),
            Preset::M => (15, 15, 20, 50, 7500),
            Preset::L => (25, 25, 30, 90, 7500),
            Preset::XL => (35, 40, 60, 180, 15000),
        }
    }

    pub fn apply(self, sim: &mut SimConfig) {
        let (a, d, k, r, n) = self.dims();
        sim.n_aisles = a;
        sim.depth = d;
        sim.n_pickers = k;
        sim.n_amrs = r;
        sim.total_picks = n;
    }

    pub fn sim_config(self) -> SimConfig {
        let mut sim = SimConfig::default();
        self.apply(&mut sim);
        sim
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Preset::S),
            "M" => Ok(Preset::M),
            "L" => Ok(Preset::L),
            "XL" => Ok(Preset::XL),
            _ => Err(Error::config(format!("unknown preset '{s}' (expected S, M, L or XL)"))),
        }
    }
}

/// Desk-scale scenario for learning experiments: 4 aisles of depth 4,
/// 3 pickers, 6 AMRs, 400 picks in runs of 9 to 14 lines.
pub fn small_scenario() -> SimConfig {
    SimConfig {
        n_aisles: 4,
        depth: 4,
        n_pickers: 3,
        n_amrs: 6,
        total_picks: 400,
        pickrun_min: 9,
        pickrun_max: 14,
        ..SimConfig::default()
    }
}

/// Larger desk-scale scenario used to check transfer: 6 aisles of depth 6.
pub fn transfer_scenario() -> SimConfig {
    SimConfig {
        n_aisles: 6,
        depth: 6,
        n_pickers: 6,
        n_amrs: 12,
        total_picks: 900,
        ..small_scenario()
    }
}

/// Reward divisors for the desk-scale scenarios: episode totals of both
/// objectives land at a few units.
pub const SMALL_REWARD_SCALES: [f64; 2] = [100.0, 20.0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    Greedy,
    Vi,
    Random,
    Checkpoint(PathBuf),
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PolicySpec::Greedy),
            "vi" => Ok(PolicySpec::Vi),
            "random" => Ok(PolicySpec::Random),
            _ => match s.strip_prefix("checkpoint:") {
                Some(p) if !p.is_empty() => Ok(PolicySpec::Checkpoint(PathBuf::from(p))),
                _ => Err(Error::config(format!(
                    "unknown policy '{s}' (expected greedy, vi, random or checkpoint:PATH)"
                ))),
            },
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Greedy => f.write_str("greedy"),
            PolicySpec::Vi => f.write_str("vi"),
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::Checkpoint(p) => write!(f, "checkpoint:{}", p.display()),
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl PolicySpec {
    /// Loads what the policy needs once; episodes then build cheap instances.
    pub fn prepare(&self) -> Result<PreparedPolicy> {
        Ok(match self {
            PolicySpec::Checkpoint(p) => {
                let ck = Checkpoint::load(p)?;
                PreparedPolicy::Net {
                    actor: Arc::new(ck.actor()),
                    efficiency_only: ck.efficiency_only,
                }
            }
            other => PreparedPolicy::Baseline(other.to_string()),
        })
    }
}

#[derive(Clone, Debug)]
pub enum PreparedPolicy {
    Baseline(String),
    Net {
        actor: Arc<crate::nn::Actor<f32>>,
        efficiency_only: bool,
    },
}

impl PreparedPolicy {
    pub fn instantiate(&self, seed: u64) -> Result<Box<dyn Policy + Send>> {
        match self {
            PreparedPolicy::Baseline(name) => baseline_by_name(name, seed),
            PreparedPolicy::Net { actor, .. } => Ok(Box::new(NetPolicy::new(actor.clone(), true, seed))),
        }
    }

    /// Networks trained without fairness features see them zeroed.
    pub fn env_config(&self, mut env: EnvConfig) -> EnvConfig {
        if let PreparedPolicy::Net {
            efficiency_only: true, ..
        } = self
        {
            env.efficiency_only = true;
        }
        env
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Multi-objective evolutionary training.
    #[default]
    Morl,
    /// Single-objective PPO on efficiency with fairness features zeroed.
    Efficiency,
}

/// Evolutionary-loop settings; PPO, environment and seed come from the
/// experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorlSettings {
    pub n_tasks: usize,
    pub warmup_iterations: usize,
    pub task_iterations: usize,
    pub generations: usize,
    pub eval_episodes: usize,
    pub radius: f64,
    pub beta: f64,
    pub grid_step: f64,
}

impl Default for MorlSettings {
    fn default() -> Self {
        let d = MorlConfig::default();
        MorlSettings {
            n_tasks: d.n_tasks,
            warmup_iterations: d.warmup_iterations,
            task_iterations: d.task_iterations,
            generations: d.generations,
            eval_episodes: d.eval_episodes,
            radius: d.radius,
            beta: d.beta,
            grid_step: d.grid_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Overrides the dimensions and counts of `sim` when set.
    pub preset: Option<Preset>,
    pub sim: SimConfig,
    pub policy: PolicySpec,
    /// Episode `i` uses seed `seed + i`; training streams derive from it.
    pub seed: u64,
    pub episodes: usize,
    pub out_dir: PathBuf,
    pub reward_scales: [f64; 2],
    pub ppo: PpoConfig,
    pub mode: TrainMode,
    /// PPO iterations in efficiency mode.
    pub iterations: usize,
    /// Iterations between saved checkpoints in efficiency mode.
    pub checkpoint_every: usize,
    /// Continue training from this checkpoint.
    pub resume: Option<PathBuf>,
    pub morl: MorlSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            sim: small_scenario(),
            policy: PolicySpec::Greedy,
            seed: 0,
            episodes: 100,
            out_dir: PathBuf::from("out"),
            reward_scales: SMALL_REWARD_SCALES,
            ppo: PpoConfig::default(),
            mode: TrainMode::Morl,
            iterations: 100,
            checkpoint_every: 10,
            resume: None,
            morl: MorlSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Simulator configuration with the preset applied.
    pub fn sim_config(&self) -> SimConfig {
        let mut sim = self.sim.clone();
        if let Some(p) = self.preset {
            p.apply(&mut sim);
        }
        sim
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            sim: self.sim_config(),
            reward_scales: self.reward_scales,
            efficiency_only: self.mode == TrainMode::Efficiency,
        }
    }

    pub fn morl_config(&self) -> MorlConfig {
        let m = &self.morl;
        MorlConfig {
            ppo: self.ppo.clone(),
            env: EnvConfig {
                efficiency_only: false,
                ..self.env_config()
            },
            n_tasks: m.n_tasks,
            warmup_iterations: m.warmup_iterations,
            task_iterations: m.task_iterations,
            generations: m.generations,
            eval_episodes: m.eval_episodes,
            radius: m.radius,
            beta: m.beta,
            grid_step: m.grid_step,
            reference: None,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be positive"));
        }
        self.env_config().validate()?;
        self.ppo.validate()?;
        match self.mode {
            TrainMode::Morl => self.morl_config().validate(),
            TrainMode::Efficiency if self.iterations == 0 || self.checkpoint_every == 0 => {
                Err(Error::config("iterations and checkpoint interval must be positive"))
            }
            TrainMode::Efficiency => Ok(()),
        }
    }

    /// Hash of everything that determines results; the output location is
    /// excluded so identical runs in different directories match byte for byte.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        report::config_hash(&c)
    }

    pub fn episode_seeds(&self) -> Vec<u64> {
        (0..self.episodes as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub seed: u64,
    pub completion_time: f64,
    pub workload_sd: f64,
    pub workloads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub completion_time: f64,
    pub completion_time_ci95: f64,
    pub workload_sd: f64,
    pub workload_sd_ci95: f64,
}

impl Summary {
    pub fn of(rows: &[EpisodeRow]) -> Self {
        let (c, ch) = mean_ci95(&rows.iter().map(|r| r.completion_time).collect::<Vec<_>>());
        let (s, sh) = mean_ci95(&rows.iter().map(|r| r.workload_sd).collect::<Vec<_>>());
        Summary {
            episodes: rows.len(),
            completion_time: c,
            completion_time_ci95: ch,
            workload_sd: s,
            workload_sd_ci95: sh,
        }
    }

    /// Objective point in reward orientation.
    pub fn point(&self) -> Point {
        [-self.completion_time, -self.workload_sd]
    }
}

/// Runs `policy` on every seed in parallel; rows come back in seed order.
pub fn evaluate_policy(env_cfg: &EnvConfig, policy: &PreparedPolicy, seeds: &[u64]) -> Result<Vec<EpisodeRow>> {
    let env_cfg = policy.env_config(env_cfg.clone());
    let wh = Env::new(env_cfg.clone())?.warehouse().clone();
    seeds
        .par_iter()
        .enumerate()
        .map_init(
            || Env::with_warehouse(env_cfg.clone(), wh.clone()),
            |env, (i, &seed)| {
                let mut p = policy.instantiate(seed)?;
                let out = run_episode(env, p.as_mut(), seed)?;
                Ok(EpisodeRow {
                    episode: i,
                    seed,
                    completion_time: out.metrics.completion_time,
                    workload_sd: out.metrics.workload_sd,
                    workloads: out.metrics.workloads,
                })
            },
        )
        .collect()
}

/// Evaluates the configured policy and writes `simulate.csv`: one row per
/// episode, then mean and 95% confidence half-width rows.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(Vec<EpisodeRow>, Summary)> {
    cfg.validate()?;
    let policy = cfg.policy.prepare()?;
    let env_cfg = EnvConfig {
        efficiency_only: false,
        ..cfg.env_config()
    };
    let rows = evaluate_policy(&env_cfg, &policy, &cfg.episode_seeds())?;
    let summary = Summary::of(&rows);
    let k = env_cfg.sim.n_pickers;
    let mut w = report::csv_writer(&cfg.out_dir.join("simulate.csv"), &cfg.hash()?)?;
    let mut header = vec![
        "episode".to_string(),
        "seed".into(),
        "completion_time_s".into(),
        "workload_sd_kg".into(),
    ];
    header.extend((0..k).map(|i| format!("workload_{i}_kg")));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![
            r.episode.to_string(),
            r.seed.to_string(),
            r.completion_time.to_string(),
            r.workload_sd.to_string(),
        ];
        rec.extend(r.workloads.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    let pad = |mut v: Vec<String>| {
        v.resize(header.len(), String::new());
        v
    };
    w.write_record(pad(vec![
        "mean".into(),
        String::new(),
        summary.completion_time.to_string(),
        summary.workload_sd.to_string(),
    ]))?;
    w.write_record(pad(vec![
        "ci95_half_width".into(),
        String::new(),
        summary.completion_time_ci95.to_string(),
        summary.workload_sd_ci95.to_string(),
    ]))?;
    w.flush()?;
    info!(
        "{}: C = {:.1} ± {:.1} s, SD = {:.2} ± {:.2} kg over {} episodes",
        cfg.policy,
        summary.completion_time,
        summary.completion_time_ci95,
        summary.workload_sd,
        summary.workload_sd_ci95,
        summary.episodes
    );
    Ok((rows, summary))
}

/// Header-stamped JSON wrapper for report files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub version: String,
    pub data: T,
}

fn write_stamped<T: Serialize>(path: &Path, hash: &str, data: T) -> Result<()> {
    let s = Stamped {
        config_hash: hash.to_string(),
        version: report::VERSION.to_string(),
        data,
    };
    std::fs::write(path, serde_json::to_string_pretty(&s)?)?;
    Ok(())
}

/// Efficiency-mode result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub final_checkpoint: PathBuf,
    pub env_steps: u64,
    pub iterations: usize,
    pub evaluation: Summary,
}

/// Trains per the configured mode into `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cfg.mode {
        TrainMode::Morl => {
            let m = cfg.morl_config();
            let r = run_morl(&m, Some(&cfg.out_dir))?;
            info!(
                "archive: {} policies, hypervolume {:.4} (warm-up {:.4})",
                r.archive.len(),
                r.hypervolume.last().copied().unwrap_or(0.0),
                r.hypervolume[0]
            );
        }
        TrainMode::Efficiency => {
            train_efficiency(cfg)?;
        }
    }
    std::fs::write(cfg.out_dir.join("experiment.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(cfg.out_dir.clone())
}

/// Single-objective PPO with `w = (1, 0)` and fairness features zeroed.
pub fn train_efficiency(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let env_cfg = cfg.env_config();
    debug_assert!(env_cfg.efficiency_only);
    let weights = [1.0, 0.0];
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            PpoTrainer::from_checkpoint(cfg.ppo.clone(), env_cfg.clone(), weights, &ck, cfg.seed)?
        }
        None => PpoTrainer::new(cfg.ppo.clone(), env_cfg.clone(), weights, cfg.seed)?,
    };
    let hash = cfg.hash()?;
    let dir = &cfg.out_dir;
    let mut curve = report::csv_writer(&dir.join("learning_curve.csv"), &hash)?;
    curve.write_record([
        "iteration",
        "env_steps",
        "episodes",
        "mean_reward_efficiency",
        "mean_reward_fairness",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_fraction",
        "grad_norm",
    ])?;
    let mut last = dir.join("checkpoints").join("final.json");
    for it in 1..=cfg.iterations {
        let s = trainer.iterate()?;
        let u = &s.update;
        curve.write_record([
            s.iteration.to_string(),
            s.env_steps.to_string(),
            s.episodes.to_string(),
            s.mean_episode_reward[0].to_string(),
            s.mean_episode_reward[1].to_string(),
            u.policy_loss.to_string(),
            u.value_loss.to_string(),
            u.entropy.to_string(),
            u.approx_kl.to_string(),
            u.clip_fraction.to_string(),
            u.grad_norm.to_string(),
        ])?;
        curve.flush()?;
        info!(
            "iteration {}: {} steps, mean episode reward {:.1?}, entropy {:.3}",
            s.iteration, s.env_steps, s.mean_episode_reward, u.entropy
        );
        if it % cfg.checkpoint_every == 0 || it == cfg.iterations {
            let p = dir
                .join("checkpoints")
                .join(format!("iter_{:05}.json", trainer.iteration));
            trainer.checkpoint().save(&p)?;
            last = p;
        }
    }
    let final_path = dir.join("checkpoints").join("final.json");
    std::fs::copy(&last, &final_path)?;
    let policy = PolicySpec::Checkpoint(final_path.clone()).prepare()?;
    let eval_env = EnvConfig {
        efficiency_only: false,
        ..env_cfg
    };
    let rows = evaluate_policy(&eval_env, &policy, &morl::MorlConfig::default().eval_seeds())?;
    let summary = TrainSummary {
        final_checkpoint: final_path,
        env_steps: trainer.env_steps,
        iterations: cfg.iterations,
        evaluation: Summary::of(&rows),
    };
    write_stamped(&dir.join("summary.json"), &hash, &summary)?;
    Ok(summary)
}

/// One evaluated policy of a Pareto report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub label: String,
    pub weights: Option<[f64; 2]>,
    pub summary: Summary,
    pub non_dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub rows: Vec<FrontRow>,
    pub reference: Point,
    pub hypervolume: f64,
}

/// Re-evaluates every retained policy of a training run (plus optional
/// extra policies) on the shared seed list, flags the non-dominated ones and
/// writes `pareto.csv`, `front.dat` and `pareto_summary.csv` to `out_dir`.
pub fn cmd_pareto(run_dir: &Path, cfg: &ExperimentConfig, extra: &[PolicySpec]) -> Result<ParetoReport> {
    cfg.validate()?;
    let archive: ArchiveFile = serde_json::from_str(&std::fs::read_to_string(run_dir.join("archive.json"))?)?;
    let population: Vec<PolicyRecord> =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("population.json"))?)?;
    let run_cfg: MorlConfig = serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json"))?)?;
    let env_cfg = run_cfg.env.clone();
    let seeds = cfg.episode_seeds();
    let mut labelled: Vec<(String, Option<[f64; 2]>, PolicySpec)> = population
        .iter()
        .filter_map(|p| {
            p.checkpoint_path.as_ref().map(|path| {
                (
                    format!("policy_{:04}", p.id),
                    Some(p.weights),
                    PolicySpec::Checkpoint(path.clone()),
                )
            })
        })
        .collect();
    labelled.extend(extra.iter().map(|s| (s.to_string(), None, s.clone())));
    let mut rows = Vec::with_capacity(labelled.len());
    for (label, weights, spec) in labelled {
        let episodes = evaluate_policy(&env_cfg, &spec.prepare()?, &seeds)?;
        rows.push(FrontRow {
            label,
            weights,
            summary: Summary::of(&episodes),
            non_dominated: true,
        });
    }
    let points: Vec<Point> = rows.iter().map(|r| r.summary.point()).collect();
    for (i, r) in rows.iter_mut().enumerate() {
        r.non_dominated = !points.iter().any(|&q| dominates(q, points[i]));
    }
    let front: Vec<Point> = rows
        .iter()
        .filter(|r| r.non_dominated)
        .map(|r| r.summary.point())
        .collect();
    let reference = archive.reference;
    let report = ParetoReport {
        hypervolume: hypervolume_2d(&front, reference),
        rows,
        reference,
    };
    write_pareto(&cfg.out_dir, &cfg.hash()?, &report)?;
    Ok(report)
}

fn write_pareto(dir: &Path, hash: &str, r: &ParetoReport) -> Result<()> {
    let mut w = report::csv_writer(&dir.join("pareto.csv"), hash)?;
    w.write_record([
        "policy",
        "w_efficiency",
        "w_fairness",
        "completion_time_s",
        "completion_time_ci95",
        "workload_sd_kg",
        "workload_sd_ci95",
        "non_dominated",
    ])?;
    let weight = |x: Option<[f64; 2]>, j: usize| x.map_or(String::new(), |w| w[j].to_string());
    for row in &r.rows {
        let s = &row.summary;
        w.write_record([
            row.label.clone(),
            weight(row.weights, 0),
            weight(row.weights, 1),
            s.completion_time.to_string(),
            s.completion_time_ci95.to_string(),
            s.workload_sd.to_string(),
            s.workload_sd_ci95.to_string(),
            row.non_dominated.to_string(),
        ])?;
    }
    w.flush()?;
    let mut s = report::csv_writer(&dir.join("pareto_summary.csv"), hash)?;
    s.write_record(["reference_efficiency", "reference_fairness", "hypervolume"])?;
    s.write_record([
        r.reference[0].to_string(),
        r.reference[1].to_string(),
        r.hypervolume.to_string(),
    ])?;
    s.flush()?;
    let mut dat = format!(
        "{}\n# completion_time_s workload_sd_kg non_dominated\n",
        report::header_line(hash)
    );
    for row in &r.rows {
        dat.push_str(&format!(
            "{} {} {}\n",
            row.summary.completion_time, row.summary.workload_sd, row.non_dominated as u8
        ));
    }
    std::fs::write(dir.join("front.dat"), dat)?;
    Ok(())
}

/// Writes `count` random deterministic instances to `dir`.
pub fn cmd_gen_instances(dir: &Path, count: usize, seed: u64, spec: &InstanceSpec) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut rs = RandomStream::new(seed);
    (0..count)
        .map(|i| {
            let inst = oracle::random_instance(&mut rs, spec)?;
            let p = dir.join(format!("instance_{i:03}.json"));
            inst.save(&p)?;
            Ok(p)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub instance: String,
    pub optimum: f64,
    pub greedy: f64,
    pub vi: f64,
    pub policy: Option<f64>,
}

impl OracleRow {
    pub fn gap(&self, value: f64) -> f64 {
        100.0 * (value - self.optimum) / self.optimum
    }
}

/// Optimum versus greedy, VI and an optional network policy on every
/// `*.json` instance in `dir`, written to `out_dir/oracle_compare.csv`.
pub fn cmd_oracle_compare(dir: &Path, cfg: &ExperimentConfig, policy: Option<&PolicySpec>) -> Result<Vec<OracleRow>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!("no instances in {}", dir.display())));
    }
    let prepared = policy.map(|p| p.prepare()).transpose()?;
    let rows: Vec<OracleRow> = paths
        .par_iter()
        .map(|p| {
            let inst = DeterministicInstance::load(p)?;
            let opt = oracle::solve_exact(&inst, Objective::Efficiency, true)?;
            let greedy = oracle::simulate_deterministic(&inst, &mut GreedyPolicy)?.completion_time;
            let vi = oracle::simulate_deterministic(&inst, &mut ViPolicy::default())?.completion_time;
            let policy = match &prepared {
                Some(pp) => Some(oracle::simulate_deterministic(&inst, pp.instantiate(0)?.as_mut())?.completion_time),
                None => None,
            };
            Ok(OracleRow {
                instance: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                optimum: opt.value,
                greedy,
                vi,
                policy,
            })
        })
        .collect::<Result<_>>()?;
    let mut w = report::csv_writer(
        &cfg.out_dir.join("oracle_compare.csv"),
        &report::config_hash(&(cfg.hash()?, dir))?,
    )?;
    w.write_record([
        "instance",
        "optimum",
        "greedy",
        "vi",
        "policy",
        "greedy_gap_pct",
        "vi_gap_pct",
        "policy_gap_pct",
    ])?;
    for r in &rows {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        w.write_record([
            r.instance.clone(),
            r.optimum.to_string(),
            r.greedy.to_string(),
            r.vi.to_string(),
            opt(r.policy),
            r.gap(r.greedy).to_string(),
            r.gap(r.vi).to_string(),
            opt(r.policy.map(|p| r.gap(p))),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests;
