//! Clipped-surrogate PPO with an entropy bonus, trained on the weighted sum
//! `ωᵀR̃` of the normalised reward vector.

use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{normalize_rewards, Env, EnvConfig, Policy};
use crate::error::{Error, Result};
use crate::layout::NodeId;
use crate::nn::{
    entropy, logit_grad, masked_log_prob, Actor, ActorKind, Adam, AisleIndex, Checkpoint, Critic, NetInput, Params,
};
use crate::stochastic::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub workers: usize,
    pub steps_per_worker: usize,
    /// Global gradient-norm clip applied before each Adam step.
    pub max_grad_norm: f64,
    pub actor: ActorKind,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.01,
            learning_rate: 5e-4,
            epochs: 3,
            minibatch: 128,
            gamma: 0.995,
            gae_lambda: 0.95,
            workers: 64,
            steps_per_worker: 400,
            max_grad_norm: 0.5,
            actor: ActorKind::Aemo,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.clip,
            self.learning_rate,
            self.gamma,
            self.gae_lambda,
            self.max_grad_norm,
        ];
        if pos.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::config("PPO rates and coefficients must be positive"));
        }
        if self.clip >= 1.0 || self.gamma >= 1.0 || self.gae_lambda > 1.0 {
            return Err(Error::config("need clip < 1, gamma < 1 and lambda <= 1"));
        }
        if self.entropy_coef < 0.0 || !self.entropy_coef.is_finite() {
            return Err(Error::config("entropy coefficient must be non-negative"));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.workers == 0 || self.steps_per_worker == 0 {
            return Err(Error::config("epochs, minibatch, workers and steps must be positive"));
        }
        Ok(())
    }
}

pub fn validate_weights(w: [f64; 2]) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || ((w[0] + w[1]) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("weight vector {w:?} is not on the simplex")));
    }
    Ok(())
}

/// One decision of a rollout.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: NetInput<f32>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub logp: f32,
    /// Critic estimate per objective at collection time.
    pub value: [f32; 2],
    /// Normalised reward vector received after the action.
    pub reward: [f64; 2],
    /// The episode ended with this step.
    pub done: bool,
}

/// Contiguous steps of one worker, with the critic's estimate of the state
/// that follows the last step (ignored if that step ended an episode).
#[derive(Clone, Debug, Default)]
pub struct Segment {
    pub samples: Vec<Sample>,
    pub bootstrap: [f32; 2],
}

/// Generalised advantage estimates and returns for a scalar reward stream.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_value = 0.0;
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Per-objective advantages and returns of a segment; the policy advantage
/// is their `ω`-weighted sum, which equals GAE on the scalarised reward with
/// the scalarised value `ωᵀV`.
pub fn segment_advantages(seg: &Segment, weights: [f64; 2], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let dones: Vec<bool> = seg.samples.iter().map(|s| s.done).collect();
    let mut adv = vec![0.0; seg.samples.len()];
    let mut returns = vec![[0.0; 2]; seg.samples.len()];
    for i in 0..2 {
        let r: Vec<f64> = seg.samples.iter().map(|s| s.reward[i]).collect();
        let v: Vec<f64> = seg.samples.iter().map(|s| s.value[i] as f64).collect();
        let (a, ret) = gae(&r, &v, &dones, seg.bootstrap[i] as f64, gamma, lambda);
        for t in 0..a.len() {
            adv[t] += weights[i] * a[t];
            returns[t][i] = ret[t];
        }
    }
    (adv, returns)
}

/// Shifts and scales to zero mean and unit variance (no-op on constant input).
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in xs.iter_mut() {
        *x = (*x - mean) / if sd > 1e-8 { sd } else { 1.0 };
    }
}

/// Clipped surrogate for one sample and its derivative with respect to the
/// new log-probability.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Optimiser state for one actor/critic pair.
#[derive(Clone, Debug)]
pub struct Learner {
    pub actor: Actor<f32>,
    pub critic: Critic<f32>,
    actor_opt: Adam<f32>,
    critic_opt: Adam<f32>,
}

struct Grads {
    actor: Actor<f32>,
    critic: Critic<f32>,
    stats: UpdateStats,
    clipped: usize,
}

impl Learner {
    pub fn new(actor: Actor<f32>, critic: Critic<f32>, cfg: &PpoConfig) -> Self {
        Learner {
            actor,
            critic,
            actor_opt: Adam::new(cfg.learning_rate, cfg.max_grad_norm),
            critic_opt: Adam::new(cfg.learning_rate, cfg.max_grad_norm),
        }
    }

    fn minibatch_grads(
        &self,
        samples: &[&Sample],
        adv: &[f64],
        returns: &[[f64; 2]],
        weights: [f64; 2],
        cfg: &PpoConfig,
    ) -> Result<Grads> {
        let b = samples.len() as f64;
        let zero = || Grads {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
            stats: UpdateStats::default(),
            clipped: 0,
        };
        let per_sample = |g: &mut Grads, (s, (&a, ret)): (&&Sample, (&f64, &[f64; 2]))| -> Result<()> {
            let (out, cache) = self.actor.forward_cached(&s.input, &s.mask)?;
            let logp = masked_log_prob(&out.logits, &s.mask, s.action) as f64;
            let ratio = (logp - s.logp as f64).exp();
            let (surr, dsurr) = clipped_surrogate(ratio, a, cfg.clip);
            let h = entropy(&out.probs) as f64;
            // Loss = -(surrogate + c·H), averaged over the minibatch.
            let dl = logit_grad(
                &out.probs,
                s.action,
                (-dsurr / b) as f32,
                (-cfg.entropy_coef / b) as f32,
            );
            self.actor.backward(&s.input, &cache, &dl, &mut g.actor);

            let (v, ccache) = self.critic.forward_cached(&s.input);
            // Each value head's squared error is weighted by its preference, so
            // an objective with zero weight has no influence on training.
            let err = [v[0] as f64 - ret[0], v[1] as f64 - ret[1]];
            let dv = [(weights[0] * err[0] / b) as f32, (weights[1] * err[1] / b) as f32];
            self.critic.backward(&ccache, dv, &mut g.critic);

            let st = &mut g.stats;
            st.policy_loss -= surr / b;
            st.entropy += h / b;
            st.value_loss += 0.5 * (weights[0] * err[0] * err[0] + weights[1] * err[1] * err[1]) / b;
            st.approx_kl += (s.logp as f64 - logp) / b;
            if (ratio - 1.0).abs() > cfg.clip {
                g.clipped += 1;
            }
            if !(surr.is_finite() && h.is_finite() && err[0].is_finite() && err[1].is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss: surrogate {surr}, entropy {h}, value error {err:?}, action {} logp {logp}",
                    s.action
                )));
            }
            Ok(())
        };
        samples
            .par_iter()
            .zip(adv.par_iter().zip(returns.par_iter()))
            .try_fold(zero, |mut g, item| {
                per_sample(&mut g, item)?;
                Ok(g)
            })
            .try_reduce(zero, |mut x, y| {
                x.actor.add_assign(&y.actor);
                x.critic.add_assign(&y.critic);
                x.stats.policy_loss += y.stats.policy_loss;
                x.stats.value_loss += y.stats.value_loss;
                x.stats.entropy += y.stats.entropy;
                x.stats.approx_kl += y.stats.approx_kl;
                x.clipped += y.clipped;
                Ok(x)
            })
    }

    /// Epochs of shuffled minibatch steps on a collected batch. Advantages
    /// are normalised over the whole batch first.
    pub fn update(
        &mut self,
        samples: &[Sample],
        mut adv: Vec<f64>,
        returns: &[[f64; 2]],
        weights: [f64; 2],
        cfg: &PpoConfig,
        rs: &mut RandomStream,
    ) -> Result<UpdateStats> {
        normalize(&mut adv);
        let n = samples.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut total = UpdateStats::default();
        let mut steps = 0usize;
        let mut clipped = 0usize;
        for _ in 0..cfg.epochs {
            for i in (1..n).rev() {
                order.swap(i, rs.index(i + 1));
            }
            for chunk in order.chunks(cfg.minibatch) {
                let s: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let r: Vec<[f64; 2]> = chunk.iter().map(|&i| returns[i]).collect();
                let g = self.minibatch_grads(&s, &a, &r, weights, cfg)?;
                let gn = self.actor_opt.step(&mut self.actor, &g.actor)?;
                self.critic_opt.step(&mut self.critic, &g.critic)?;
                let w = chunk.len() as f64;
                total.policy_loss += g.stats.policy_loss * w;
                total.value_loss += g.stats.value_loss * w;
                total.entropy += g.stats.entropy * w;
                total.approx_kl += g.stats.approx_kl * w;
                total.grad_norm += gn;
                clipped += g.clipped;
                steps += 1;
            }
        }
        let seen = (n * cfg.epochs).max(1) as f64;
        total.policy_loss /= seen;
        total.value_loss /= seen;
        total.entropy /= seen;
        total.approx_kl /= seen;
        total.clip_fraction = clipped as f64 / seen;
        total.grad_norm /= steps.max(1) as f64;
        Ok(total)
    }
}

/// Draws an action from the masked distribution.
fn sample_action(probs: &[f32], rs: &mut RandomStream) -> usize {
    let w: Vec<f64> = probs.iter().map(|&p| p as f64).collect();
    rs.categorical(&w)
}

fn argmax(probs: &[f32], mask: &[bool]) -> usize {
    (0..probs.len())
        .filter(|&i| mask[i])
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if probs[b] >= probs[i] => Some(b),
            _ => Some(i),
        })
        .expect("non-empty mask")
}

/// Rollout worker owning one environment.
struct Worker {
    env: Env,
    rs: RandomStream,
    running: bool,
    episode_reward: [f64; 2],
}

impl Worker {
    fn next_episode(&mut self) -> Result<()> {
        for _ in 0..1000 {
            let seed = self.rs.rng().next_u64();
            if self.env.reset(seed)? {
                self.running = true;
                self.episode_reward = [0.0; 2];
                return Ok(());
            }
        }
        Err(Error::config("environment produced no decisions in 1000 episodes"))
    }

    fn collect(
        &mut self,
        actor: &Actor<f32>,
        critic: &Critic<f32>,
        aisles: &Arc<AisleIndex>,
        steps: usize,
    ) -> Result<(Segment, Vec<[f64; 2]>)> {
        let mut seg = Segment::default();
        let mut finished = Vec::new();
        let scales = self.env.config().reward_scales;
        for _ in 0..steps {
            if !self.running {
                self.next_episode()?;
            }
            let mask = self.env.mask();
            let input = NetInput::new(&self.env.features(), aisles.clone())?;
            let out = actor.forward(&input, &mask)?;
            let action = sample_action(&out.probs, &mut self.rs);
            let logp = masked_log_prob(&out.logits, &mask, action);
            let value = critic.forward(&input);
            let step = self.env.step(NodeId::from(action))?;
            let r = normalize_rewards(step.reward, scales);
            self.episode_reward[0] += step.reward.efficiency;
            self.episode_reward[1] += step.reward.fairness;
            if step.done {
                self.running = false;
                finished.push(self.episode_reward);
            }
            seg.samples.push(Sample {
                input,
                mask,
                action,
                logp,
                value,
                reward: [r.efficiency, r.fairness],
                done: step.done,
            });
        }
        if self.running {
            let input = NetInput::new(&self.env.features(), aisles.clone())?;
            seg.bootstrap = critic.forward(&input);
        }
        Ok((seg, finished))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub env_steps: u64,
    pub episodes: usize,
    /// Mean raw episodic reward (efficiency, fairness) of episodes finished
    /// during this iteration's rollouts; NaN if none finished.
    pub mean_episode_reward: [f64; 2],
    pub update: UpdateStats,
}

/// PPO training of one task: a policy and a fixed weight vector.
pub struct PpoTrainer {
    pub cfg: PpoConfig,
    pub env_cfg: EnvConfig,
    pub weights: [f64; 2],
    pub learner: Learner,
    pub env_steps: u64,
    pub iteration: usize,
    workers: Vec<Worker>,
    aisles: Arc<AisleIndex>,
    rs: RandomStream,
}

impl PpoTrainer {
    pub fn new(cfg: PpoConfig, env_cfg: EnvConfig, weights: [f64; 2], seed: u64) -> Result<Self> {
        let mut init = RandomStream::derived(seed, u64::MAX - 1);
        let actor = Actor::init(cfg.actor, &mut init);
        let critic = Critic::init(&mut init);
        Self::with_networks(cfg, env_cfg, weights, actor, critic, seed)
    }

    /// Continues training existing networks (fresh optimiser state).
    pub fn from_checkpoint(
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        weights: [f64; 2],
        ck: &Checkpoint,
        seed: u64,
    ) -> Result<Self> {
        let mut t = Self::with_networks(cfg, env_cfg, weights, ck.actor(), ck.critic(), seed)?;
        t.env_steps = ck.env_steps;
        Ok(t)
    }

    pub fn with_networks(
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        weights: [f64; 2],
        actor: Actor<f32>,
        critic: Critic<f32>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        validate_weights(weights)?;
        let first = Env::new(env_cfg.clone())?;
        let wh = first.warehouse().clone();
        let aisles = Arc::new(AisleIndex::from_layout(&wh.layout));
        let workers = (0..cfg.workers)
            .map(|w| Worker {
                env: Env::with_warehouse(env_cfg.clone(), wh.clone()),
                rs: RandomStream::derived(seed, w as u64),
                running: false,
                episode_reward: [0.0; 2],
            })
            .collect();
        Ok(PpoTrainer {
            learner: Learner::new(actor, critic, &cfg),
            cfg,
            env_cfg,
            weights,
            env_steps: 0,
            iteration: 0,
            workers,
            aisles,
            rs: RandomStream::derived(seed, u64::MAX),
        })
    }

    pub fn actor(&self) -> &Actor<f32> {
        &self.learner.actor
    }

    pub fn steps_per_iteration(&self) -> u64 {
        (self.cfg.workers * self.cfg.steps_per_worker) as u64
    }

    /// Collect rollouts in parallel, then one sequential PPO update.
    pub fn iterate(&mut self) -> Result<IterationStats> {
        let (actor, critic, aisles) = (&self.learner.actor, &self.learner.critic, &self.aisles);
        let steps = self.cfg.steps_per_worker;
        let results: Vec<Result<(Segment, Vec<[f64; 2]>)>> = self
            .workers
            .par_iter_mut()
            .map(|w| w.collect(actor, critic, aisles, steps))
            .collect();
        let mut samples = Vec::with_capacity(self.cfg.workers * steps);
        let mut adv = Vec::with_capacity(samples.capacity());
        let mut returns = Vec::with_capacity(samples.capacity());
        let mut finished = Vec::new();
        for r in results {
            let (seg, fin) = r?;
            let (a, ret) = segment_advantages(&seg, self.weights, self.cfg.gamma, self.cfg.gae_lambda);
            samples.extend(seg.samples);
            adv.extend(a);
            returns.extend(ret);
            finished.extend(fin);
        }
        let update = self
            .learner
            .update(&samples, adv, &returns, self.weights, &self.cfg, &mut self.rs)?;
        self.iteration += 1;
        self.env_steps += samples.len() as u64;
        let mean = if finished.is_empty() {
            [f64::NAN; 2]
        } else {
            let n = finished.len() as f64;
            [
                finished.iter().map(|r| r[0]).sum::<f64>() / n,
                finished.iter().map(|r| r[1]).sum::<f64>() / n,
            ]
        };
        Ok(IterationStats {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: finished.len(),
            mean_episode_reward: mean,
            update,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(&self.learner.actor, &self.learner.critic, self.weights);
        ck.efficiency_only = self.env_cfg.efficiency_only;
        ck.reward_scales = self.env_cfg.reward_scales;
        ck.env_steps = self.env_steps;
        ck
    }
}

/// Policy backed by an actor network: argmax for evaluation, sampling for
/// exploration.
#[derive(Clone, Debug)]
pub struct NetPolicy {
    pub actor: Arc<Actor<f32>>,
    pub greedy: bool,
    seed: u64,
    rs: RandomStream,
    aisles: Option<Arc<AisleIndex>>,
}

impl NetPolicy {
    pub fn new(actor: Arc<Actor<f32>>, greedy: bool, seed: u64) -> Self {
        NetPolicy {
            actor,
            greedy,
            seed,
            rs: RandomStream::new(seed),
            aisles: None,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        NetPolicy::new(Arc::new(ck.actor()), true, 0)
    }
}

impl Policy for NetPolicy {
    fn name(&self) -> String {
        format!("{:?}", self.actor.kind()).to_lowercase()
    }

    fn reset(&mut self, episode_seed: u64) {
        self.rs = RandomStream::derived(self.seed, episode_seed);
    }

    fn act(&mut self, env: &Env, _picker: usize, mask: &[bool]) -> Result<NodeId> {
        if self.aisles.as_ref().is_none_or(|a| a.aisle_of.len() != env.n_nodes()) {
            self.aisles = Some(Arc::new(AisleIndex::from_layout(&env.warehouse().layout)));
        }
        let input = NetInput::new(&env.features(), self.aisles.clone().unwrap())?;
        let out = self.actor.forward(&input, mask)?;
        let a = if self.greedy {
            argmax(&out.probs, mask)
        } else {
            sample_action(&out.probs, &mut self.rs)
        };
        Ok(NodeId::from(a))
    }
}
