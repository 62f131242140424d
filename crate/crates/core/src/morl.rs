use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_episode, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::{Actor, Checkpoint};
use crate::ppo::{validate_weights, IterationStats, NetPolicy, PpoConfig, PpoTrainer};
use crate::report;
use crate::stochastic::RandomStream;

/// Objective vector `(efficiency, fairness)`, both maximised.
pub type Point = [f64; 2];

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: Point, b: Point) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

/// Indices of the non-dominated points; duplicates keep their first copy.
pub fn non_dominated(points: &[Point]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, &q)| dominates(q, points[i]) || (j < i && q == points[i]))
        })
        .collect()
}

/// Exact 2-D hypervolume relative to `reference` by a sweep over the first
/// objective. Points not strictly better than the reference in both
/// objectives contribute nothing.
pub fn hypervolume_2d(points: &[Point], reference: Point) -> f64 {
    let mut ps: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| p[0] > reference[0] && p[1] > reference[1])
        .collect();
    ps.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut top = reference[1];
    for p in ps {
        if p[1] > top {
            area += (p[0] - reference[0]) * (p[1] - top);
            top = p[1];
        }
    }
    area
}

/// Mean over objectives of the mean squared gap between consecutive points
/// sorted by the first objective; zero for fewer than two points.
pub fn sparsity(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut ps = points.to_vec();
    ps.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let gaps = (ps.len() - 1) as f64;
    (0..2)
        .map(|j| ps.windows(2).map(|w| (w[1][j] - w[0][j]).powi(2)).sum::<f64>() / gaps)
        .sum::<f64>()
        / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub point: Point,
    pub policy: usize,
    pub weights: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

/// Non-dominated set of evaluated policies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    /// Adds the entry unless an archived point dominates or equals it;
    /// evicts entries it dominates. Returns whether it was added.
    pub fn insert(&mut self, e: ArchiveEntry) -> bool {
        if !e.point.iter().all(|x| x.is_finite()) {
            return false;
        }
        if self
            .entries
            .iter()
            .any(|a| a.point == e.point || dominates(a.point, e.point))
        {
            return false;
        }
        self.entries.retain(|a| !dominates(e.point, a.point));
        self.entries.push(e);
        self.entries
            .sort_by(|a, b| a.point[0].total_cmp(&b.point[0]).then(a.policy.cmp(&b.policy)));
        true
    }

    pub fn points(&self) -> Vec<Point> {
        self.entries.iter().map(|e| e.point).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hypervolume(&self, reference: Point) -> f64 {
        hypervolume_2d(&self.points(), reference)
    }

    pub fn is_non_dominated(&self) -> bool {
        non_dominated(&self.points()).len() == self.entries.len()
    }
}

/// `f(x) = amplitude / (1 + exp(-slope (x - shift))) + offset`, with `x` the
/// efficiency weight.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperbolic {
    pub amplitude: f64,
    pub slope: f64,
    pub shift: f64,
    pub offset: f64,
}

const SLOPE_LIMIT: f64 = 100.0;
const SHIFT_RANGE: (f64, f64) = (-2.0, 3.0);

impl Hyperbolic {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * sigmoid(self.slope * (x - self.shift)) + self.offset
    }

    fn params(&self) -> [f64; 4] {
        [self.amplitude, self.slope, self.shift, self.offset]
    }

    fn from_params(p: [f64; 4]) -> Self {
        Hyperbolic {
            amplitude: p[0],
            slope: p[1].clamp(-SLOPE_LIMIT, SLOPE_LIMIT),
            shift: p[2].clamp(SHIFT_RANGE.0, SHIFT_RANGE.1),
            offset: p[3],
        }
    }

    fn jacobian_row(&self, x: f64) -> [f64; 4] {
        let s = sigmoid(self.slope * (x - self.shift));
        let ds = s * (1.0 - s);
        [
            s,
            self.amplitude * ds * (x - self.shift),
            -self.amplitude * ds * self.slope,
            1.0,
        ]
    }

    fn sse(&self, xs: &[f64], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(&x, &y)| (self.eval(x) - y).powi(2)).sum()
    }

    /// Levenberg–Marquardt least squares from several starting points.
    /// `None` with fewer than four observations or without a finite fit.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Option<Self> {
        if xs.len() < 4 || xs.len() != ys.len() || !xs.iter().chain(ys).all(|v| v.is_finite()) {
            return None;
        }
        let (lo, hi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
        let span = (hi - lo).max(1e-9);
        let mut best: Option<(f64, Hyperbolic)> = None;
        for &slope in &[-10.0, -3.0, 3.0, 10.0] {
            for &shift in &[0.25, 0.5, 0.75] {
                let start = Hyperbolic {
                    amplitude: span,
                    slope,
                    shift,
                    offset: lo,
                };
                let h = levenberg_marquardt(start, xs, ys);
                let e = h.sse(xs, ys);
                if e.is_finite() && h.params().iter().all(|p| p.is_finite()) && best.is_none_or(|(b, _)| e < b) {
                    best = Some((e, h));
                }
            }
        }
        best.map(|(_, h)| h)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn levenberg_marquardt(mut h: Hyperbolic, xs: &[f64], ys: &[f64]) -> Hyperbolic {
    let mut lambda = 1e-3;
    let mut err = h.sse(xs, ys);
    for _ in 0..200 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let j = h.jacobian_row(x);
            let r = y - h.eval(x);
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + 1e-12);
            }
            if let Some(delta) = solve4(m, jtr) {
                let p = h.params();
                let cand = Hyperbolic::from_params(std::array::from_fn(|i| p[i] + delta[i]));
                let e = cand.sse(xs, ys);
                if e.is_finite() && e < err {
                    let done = err - e < 1e-14 * (1.0 + err);
                    h = cand;
                    err = e;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    h
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut v: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-300 || !m[p][c].is_finite() {
            return None;
        }
        m.swap(c, p);
        v.swap(c, p);
        for r in c + 1..4 {
            let f = m[r][c] / m[c][c];
            for k in c..4 {
                m[r][k] -= f * m[c][k];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| m[r][k] * x[k]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Outcome of training some policy with weights `weights` for one interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub policy: usize,
    pub weights: [f64; 2],
    pub before: Point,
    pub after: Point,
}

impl TrainingRecord {
    pub fn improvement(&self) -> Point {
        [self.after[0] - self.before[0], self.after[1] - self.before[1]]
    }
}

/// Per-objective predictor of the objective change from training with a
/// given efficiency weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObjectivePredictor {
    Fitted(Hyperbolic),
    /// Too few neighbours: `(efficiency weight, observed change)` samples,
    /// answered by the nearest one.
    Nearest(Vec<(f64, f64)>),
}

impl ObjectivePredictor {
    pub fn from_samples(samples: &[(f64, f64)]) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
        match Hyperbolic::fit(&xs, &ys) {
            Some(h) => ObjectivePredictor::Fitted(h),
            None => ObjectivePredictor::Nearest(samples.to_vec()),
        }
    }

    pub fn predict(&self, x: f64) -> f64 {
        match self {
            ObjectivePredictor::Fitted(h) => h.eval(x),
            ObjectivePredictor::Nearest(s) => s
                .iter()
                .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
                .map_or(0.0, |&(_, y)| y),
        }
    }
}

/// Improvement model of one policy, one predictor per objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicModel {
    pub objectives: [ObjectivePredictor; 2],
}

impl HyperbolicModel {
    /// Fits on the records whose starting point lies within `radius` of
    /// `point` after dividing each objective by `scale`. With fewer than four
    /// neighbours the nearest-weight record answers instead, searched among
    /// the neighbours or, if there are none, the whole history.
    pub fn fit(point: Point, history: &[TrainingRecord], scale: Point, radius: f64) -> Self {
        let near: Vec<&TrainingRecord> = history
            .iter()
            .filter(|r| normalized_distance(r.before, point, scale) <= radius)
            .collect();
        let pool: Vec<&TrainingRecord> = if near.is_empty() {
            history.iter().collect()
        } else {
            near
        };
        let samples =
            |j: usize| -> Vec<(f64, f64)> { pool.iter().map(|r| (r.weights[0], r.improvement()[j])).collect() };
        HyperbolicModel {
            objectives: std::array::from_fn(|j| ObjectivePredictor::from_samples(&samples(j))),
        }
    }

    pub fn predict(&self, point: Point, weights: [f64; 2]) -> Point {
        [
            point[0] + self.objectives[0].predict(weights[0]),
            point[1] + self.objectives[1].predict(weights[0]),
        ]
    }
}

fn normalized_distance(a: Point, b: Point, scale: Point) -> f64 {
    (((a[0] - b[0]) / scale[0]).powi(2) + ((a[1] - b[1]) / scale[1]).powi(2)).sqrt()
}

/// Per-objective spread of `points`, used to normalise objective space.
pub fn objective_scale(points: &[Point]) -> Point {
    std::array::from_fn(|j| {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
            (l.min(p[j]), h.max(p[j]))
        });
        let span = hi - lo;
        if span.is_finite() && span > 1e-12 {
            span
        } else {
            1.0
        }
    })
}

/// A (policy, weights) pair and the objective point predicted after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub policy: usize,
    pub weights: [f64; 2],
    pub predicted: Point,
}

/// Weight vectors `(x, 1 - x)` for `x = 0, step, …, 1`.
pub fn weight_grid(step: f64) -> Vec<[f64; 2]> {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            [x, 1.0 - x]
        })
        .collect()
}

/// Evenly spread weights for the warm-up tasks, efficiency-heavy first.
pub fn warmup_weights(n: usize) -> Vec<[f64; 2]> {
    if n == 1 {
        return vec![[0.5, 0.5]];
    }
    (0..n)
        .map(|i| {
            let x = 1.0 - i as f64 / (n - 1) as f64;
            [x, 1.0 - x]
        })
        .collect()
}

/// Greedily picks `n` candidates, each maximising the hypervolume gain of
/// the archive plus the already-picked predictions minus `beta` times the
/// resulting sparsity. Objectives are divided by `scale` first. Ties go to
/// the higher predicted efficiency, then to the earlier candidate.
pub fn select_tasks(
    candidates: &[Candidate],
    archive: &[Point],
    reference: Point,
    scale: Point,
    n: usize,
    beta: f64,
) -> Vec<usize> {
    let norm = |p: Point| -> Point { [p[0] / scale[0], p[1] / scale[1]] };
    let r = norm(reference);
    let mut front: Vec<Point> = archive.iter().map(|&p| norm(p)).collect();
    let mut chosen = Vec::new();
    while chosen.len() < n.min(candidates.len()) {
        let base = hypervolume_2d(&front, r);
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let mut with = front.clone();
            with.push(norm(c.predicted));
            let nd: Vec<Point> = non_dominated(&with).into_iter().map(|k| with[k]).collect();
            let score = hypervolume_2d(&nd, r) - base - beta * sparsity(&nd);
            let better = match best {
                None => true,
                Some((s, b)) => score > s || (score == s && c.predicted[0] > candidates[b].predicted[0]),
            };
            if better {
                best = Some((score, i));
            }
        }
        let (_, i) = best.expect("candidates remain");
        chosen.push(i);
        front.push(norm(candidates[i].predicted));
    }
    chosen
}

/// Mean and standard deviation of the objective vector over evaluation
/// episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: Point,
    pub sd: Point,
    pub completion_time: f64,
    pub workload_sd: f64,
    pub episodes: usize,
}

/// Greedy (argmax) evaluation over the given episode seeds.
pub fn evaluate_actor(actor: &Arc<Actor<f32>>, env_cfg: &EnvConfig, seeds: &[u64]) -> Result<Evaluation> {
    let env = Env::new(env_cfg.clone())?;
    let wh = env.warehouse().clone();
    let outcomes: Vec<Point> = seeds
        .par_iter()
        .map_init(
            || {
                (
                    Env::with_warehouse(env_cfg.clone(), wh.clone()),
                    NetPolicy::new(actor.clone(), true, 0),
                )
            },
            |(env, policy), &s| {
                let m = run_episode(env, policy, s)?.metrics;
                Ok([-m.completion_time, -m.workload_sd])
            },
        )
        .collect::<Result<_>>()?;
    let n = outcomes.len().max(1) as f64;
    let mean: Point = std::array::from_fn(|j| outcomes.iter().map(|p| p[j]).sum::<f64>() / n);
    let sd: Point =
        std::array::from_fn(|j| (outcomes.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt());
    Ok(Evaluation {
        mean,
        sd,
        completion_time: -mean[0],
        workload_sd: -mean[1],
        episodes: outcomes.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorlConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    /// Parallel tasks per generation.
    pub n_tasks: usize,
    pub warmup_iterations: usize,
    pub task_iterations: usize,
    pub generations: usize,
    pub eval_episodes: usize,
    /// Neighbourhood radius for improvement models, normalised objective space.
    pub radius: f64,
    /// Weight of sparsity against hypervolume gain in task selection.
    pub beta: f64,
    pub grid_step: f64,
    /// Hypervolume reference; derived from the warm-up population if unset.
    pub reference: Option<Point>,
    pub seed: u64,
}

impl Default for MorlConfig {
    fn default() -> Self {
        MorlConfig {
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            n_tasks: 6,
            warmup_iterations: 80,
            task_iterations: 20,
            generations: 10,
            eval_episodes: 20,
            radius: 0.1,
            beta: 1.0,
            grid_step: 0.05,
            reference: None,
            seed: 0,
        }
    }
}

impl MorlConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.env.validate()?;
        if self.env.efficiency_only {
            return Err(Error::config("multi-objective training needs the fairness features"));
        }
        if self.n_tasks == 0 || self.warmup_iterations == 0 || self.task_iterations == 0 || self.eval_episodes == 0 {
            return Err(Error::config(
                "tasks, iterations and evaluation episodes must be positive",
            ));
        }
        if !(self.radius > 0.0 && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("radius must be positive and beta non-negative"));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0)
            || ((1.0 / self.grid_step).round() * self.grid_step - 1.0).abs() > 1e-9
        {
            return Err(Error::config("grid step must divide 1"));
        }
        Ok(())
    }

    /// Iterations between retained intermediate policies.
    pub fn checkpoint_interval(&self) -> usize {
        (self.task_iterations / 4).max(1)
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.eval_episodes as u64).map(|i| EVAL_SEED_BASE + i).collect()
    }
}

/// Evaluation seeds are disjoint from training seeds, which derive from the
/// run seed through per-worker streams.
pub const EVAL_SEED_BASE: u64 = 1 << 40;

/// One evaluated policy of the population.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub id: usize,
    /// Policy this one was trained from, if any.
    pub parent: Option<usize>,
    pub weights: [f64; 2],
    pub generation: usize,
    pub iteration: usize,
    pub evaluation: Evaluation,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
}

impl PolicyRecord {
    pub fn point(&self) -> Point {
        self.evaluation.mean
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskLog {
    pub generation: usize,
    pub task: usize,
    pub policy: Option<usize>,
    pub weights: [f64; 2],
    pub stats: IterationStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorlResult {
    pub archive: ParetoArchive,
    pub warmup_archive: ParetoArchive,
    pub reference: Point,
    /// Archive hypervolume after warm-up (index 0) and after each generation.
    pub hypervolume: Vec<f64>,
    pub population: Vec<PolicyRecord>,
    pub history: Vec<TrainingRecord>,
    pub log: Vec<TaskLog>,
}

impl MorlResult {
    pub fn policy(&self, id: usize) -> &PolicyRecord {
        &self.population[id]
    }
}

/// On-disk archive: points, the weights that produced them and checkpoint
/// files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveFile {
    pub config_hash: String,
    pub version: String,
    pub reference: Point,
    pub hypervolume: f64,
    pub entries: Vec<ArchiveEntry>,
}

struct Run<'a> {
    cfg: &'a MorlConfig,
    out: Option<&'a Path>,
    eval_seeds: Vec<u64>,
    population: Vec<PolicyRecord>,
    history: Vec<TrainingRecord>,
    log: Vec<TaskLog>,
    archive: ParetoArchive,
}

impl Run<'_> {
    fn add_policy(&mut self, trainer: &PpoTrainer, parent: Option<usize>, generation: usize) -> Result<usize> {
        let ck = trainer.checkpoint();
        let evaluation = evaluate_actor(&Arc::new(trainer.actor().clone()), &self.cfg.env, &self.eval_seeds)?;
        let id = self.population.len();
        let checkpoint_path = match self.out {
            Some(dir) => {
                let p = dir.join("checkpoints").join(format!("policy_{id:04}.json"));
                ck.save(&p)?;
                Some(p)
            }
            None => None,
        };
        info!(
            "policy {id}: weights {:.2?} iteration {} C={:.1}s SD={:.2}kg",
            trainer.weights, trainer.iteration, evaluation.completion_time, evaluation.workload_sd
        );
        self.archive.insert(ArchiveEntry {
            point: evaluation.mean,
            policy: id,
            weights: trainer.weights,
            checkpoint: checkpoint_path.clone(),
        });
        debug_assert!(self.archive.is_non_dominated());
        self.population.push(PolicyRecord {
            id,
            parent,
            weights: trainer.weights,
            generation,
            iteration: trainer.iteration,
            evaluation,
            checkpoint: Some(ck),
            checkpoint_path,
        });
        Ok(id)
    }

    /// Trains one task, retaining an evaluated policy every checkpoint
    /// interval and recording each interval's improvement.
    fn train_task(
        &mut self,
        mut trainer: PpoTrainer,
        start: usize,
        iterations: usize,
        generation: usize,
        task: usize,
    ) -> Result<()> {
        let every = self.cfg.checkpoint_interval();
        let mut prev = start;
        for it in 1..=iterations {
            let stats = trainer.iterate()?;
            self.log.push(TaskLog {
                generation,
                task,
                policy: Some(prev),
                weights: trainer.weights,
                stats,
            });
            if it % every == 0 || it == iterations {
                let id = self.add_policy(&trainer, Some(prev), generation)?;
                self.history.push(TrainingRecord {
                    policy: prev,
                    weights: trainer.weights,
                    before: self.population[prev].point(),
                    after: self.population[id].point(),
                });
                prev = id;
            }
        }
        Ok(())
    }

    fn candidates(&self, grid: &[[f64; 2]]) -> Vec<Candidate> {
        let points: Vec<Point> = self.population.iter().map(|p| p.point()).collect();
        let scale = objective_scale(&points);
        let mut out = Vec::new();
        for p in &self.population {
            let model = HyperbolicModel::fit(p.point(), &self.history, scale, self.cfg.radius);
            for &w in grid {
                out.push(Candidate {
                    policy: p.id,
                    weights: w,
                    predicted: model.predict(p.point(), w),
                });
            }
        }
        out
    }
}

/// Warm-up on evenly spread weights, then generations of predicted-best
/// tasks continuing from population policies.
pub fn run_morl(cfg: &MorlConfig, out: Option<&Path>) -> Result<MorlResult> {
    cfg.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    }
    let mut run = Run {
        cfg,
        out,
        eval_seeds: cfg.eval_seeds(),
        population: Vec::new(),
        history: Vec::new(),
        log: Vec::new(),
        archive: ParetoArchive::default(),
    };
    let mut seeds = RandomStream::new(cfg.seed);
    let mut next_seed = || seeds.rng().next_u64();

    for (task, w) in warmup_weights(cfg.n_tasks).into_iter().enumerate() {
        validate_weights(w)?;
        let trainer = PpoTrainer::new(cfg.ppo.clone(), cfg.env.clone(), w, next_seed())?;
        let start = run.add_policy(&trainer, None, 0)?;
        run.train_task(trainer, start, cfg.warmup_iterations, 0, task)?;
    }
    let warmup_archive = run.archive.clone();
    let reference = cfg.reference.unwrap_or_else(|| {
        let pts: Vec<Point> = run.population.iter().map(|p| p.point()).collect();
        let scale = objective_scale(&pts);
        std::array::from_fn(|j| pts.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min) - 0.1 * scale[j])
    });
    let mut hypervolume = vec![run.archive.hypervolume(reference)];
    info!(
        "warm-up archive: {} policies, HV {:.4}",
        run.archive.len(),
        hypervolume[0]
    );

    let grid = weight_grid(cfg.grid_step);
    for generation in 1..=cfg.generations {
        let candidates = run.candidates(&grid);
        let scale = objective_scale(&run.population.iter().map(|p| p.point()).collect::<Vec<_>>());
        let picked = select_tasks(
            &candidates,
            &run.archive.points(),
            reference,
            scale,
            cfg.n_tasks,
            cfg.beta,
        );
        for (task, &ci) in picked.iter().enumerate() {
            let c = &candidates[ci];
            let parent = c.policy;
            let ck = run.population[parent]
                .checkpoint
                .clone()
                .ok_or_else(|| Error::Training(format!("policy {parent} has no checkpoint")))?;
            info!(
                "generation {generation} task {task}: policy {parent} weights {:.2?} predicted {:.2?}",
                c.weights, c.predicted
            );
            let trainer = PpoTrainer::from_checkpoint(cfg.ppo.clone(), cfg.env.clone(), c.weights, &ck, next_seed())?;
            run.train_task(trainer, parent, cfg.task_iterations, generation, task)?;
        }
        hypervolume.push(run.archive.hypervolume(reference));
        info!(
            "generation {generation}: archive {} policies, HV {:.4}",
            run.archive.len(),
            hypervolume[generation]
        );
    }

    let result = MorlResult {
        archive: run.archive,
        warmup_archive,
        reference,
        hypervolume,
        population: run.population,
        history: run.history,
        log: run.log,
    };
    if let Some(dir) = out {
        write_run(dir, cfg, &result)?;
    }
    Ok(result)
}

fn write_run(dir: &Path, cfg: &MorlConfig, r: &MorlResult) -> Result<()> {
    let hash = report::config_hash(cfg)?;
    let file = ArchiveFile {
        config_hash: hash.clone(),
        version: report::VERSION.to_string(),
        reference: r.reference,
        hypervolume: r.archive.hypervolume(r.reference),
        entries: r.archive.entries.clone(),
    };
    std::fs::write(dir.join("archive.json"), serde_json::to_string_pretty(&file)?)?;
    std::fs::write(
        dir.join("population.json"),
        serde_json::to_string_pretty(&r.population)?,
    )?;
    std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(&r.history)?)?;
    let mut w = report::csv_writer(&dir.join("learning_curve.csv"), &hash)?;
    w.write_record([
        "generation",
        "task",
        "iteration",
        "env_steps",
        "w_efficiency",
        "w_fairness",
        "mean_reward_efficiency",
        "mean_reward_fairness",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
    ])?;
    for l in &r.log {
        let s = &l.stats;
        w.write_record([
            l.generation.to_string(),
            l.task.to_string(),
            s.iteration.to_string(),
            s.env_steps.to_string(),
            l.weights[0].to_string(),
            l.weights[1].to_string(),
            s.mean_episode_reward[0].to_string(),
            s.mean_episode_reward[1].to_string(),
            s.update.policy_loss.to_string(),
            s.update.value_loss.to_string(),
            s.update.entropy.to_string(),
            s.update.approx_kl.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
