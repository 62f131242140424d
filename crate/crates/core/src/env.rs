//! Two-objective decision environment on top of the simulator: per-node
//! features, action mask and the (efficiency, fairness) reward vector.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::{Mode, NodeId, Warehouse};
use crate::sim::{init_episode, Advance, AmrStatus, EpisodeMetrics, PickerStatus, SimConfig, SimState};
use crate::stochastic::RandomStream;

pub const N_EFF: usize = 23;
pub const N_FAIR: usize = 12;
pub const N_FEATURES: usize = N_EFF + N_FAIR;

/// Placeholder for "no such AMR/picker" in distance and time features.
pub const SENTINEL: f64 = -10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub index: usize,
    pub block: String,
    pub name: String,
    pub description: String,
    /// Multiplier applied at the network input.
    pub input_scale: f64,
}

const DIST: f64 = 0.1;
const TIME: f64 = 0.05;
const MASS: f64 = 0.02;
const COUNT: f64 = 0.5;

const EFF_SPEC: [(&str, &str, f64); N_EFF] = [
    ("picker_at_node", "requesting picker stands at the node (0/1)", 1.0),
    (
        "picker_distance",
        "walking distance from the requesting picker, m",
        DIST,
    ),
    ("amr_at_node", "some AMR is at the node (0/1)", 1.0),
    (
        "amrs_going",
        "AMRs travelling towards the node as current destination",
        COUNT,
    ),
    (
        "amr_dest_distance",
        "min remaining AMR trip to the node, m; -10 if none",
        DIST,
    ),
    (
        "amr_eta_next",
        "min expected time of AMRs having the node as next destination, s; -10 if none",
        TIME,
    ),
    (
        "amr_eta_two_step",
        "as amr_eta_next for the destination two steps ahead, s; -10 if none",
        TIME,
    ),
    (
        "amrs_heading_to_aisle",
        "AMRs whose current destination lies in the node's aisle",
        COUNT,
    ),
    (
        "amrs_waiting_in_aisle",
        "AMRs waiting for a picker in the node's aisle",
        COUNT,
    ),
    ("other_picker_at_node", "another picker stands at the node (0/1)", 1.0),
    (
        "picker_dest_distance",
        "min remaining walk of pickers heading to the node, m; -10 if none",
        DIST,
    ),
    (
        "pickers_heading_to_aisle",
        "other pickers whose destination lies in the node's aisle",
        COUNT,
    ),
    (
        "other_picker_distance",
        "min over other pickers of walk to destination plus destination to node, m",
        DIST,
    ),
    (
        "other_picker_eta",
        "min over other pickers of expected time until free plus walk to node, s",
        TIME,
    ),
    ("aisle_position", "aisle index divided by the number of aisles", 1.0),
    (
        "depth_position",
        "position along the AMR direction divided by aisle depth",
        1.0,
    ),
    (
        "next_dest_distance_1",
        "closest distance to next destinations of AMRs heading here, m; 0 if none",
        DIST,
    ),
    (
        "next_dest_distance_2",
        "second closest such distance, m; 0 if none",
        DIST,
    ),
    (
        "two_step_distance_1",
        "closest distance to two-step destinations of AMRs heading here, m; 0 if none",
        DIST,
    ),
    (
        "two_step_distance_2",
        "second closest such distance, m; 0 if none",
        DIST,
    ),
    (
        "nearest_picker_dest",
        "distance to the closest other node that is a picker destination, m; 0 if none",
        DIST,
    ),
    (
        "unserved_distance_1",
        "distance to the closest other unclaimed AMR destination, m; 0 if none",
        DIST,
    ),
    (
        "unserved_distance_2",
        "distance to the second closest one, m; 0 if none",
        DIST,
    ),
];

const FAIR_SPEC: [(&str, &str, f64); N_FAIR] = [
    (
        "picker_here_workload",
        "workload of pickers at the node minus mean workload, kg; 0 if none",
        MASS,
    ),
    (
        "incoming_picker_workload",
        "workload of the picker heading to the node minus mean, kg; 0 if none",
        MASS,
    ),
    ("item_weight", "mass of one item stored at the node, kg", 0.2),
    (
        "waiting_amr_mass",
        "mass to load on AMRs standing at the node, kg",
        MASS,
    ),
    (
        "incoming_amr_mass",
        "mass to load on AMRs heading to the node, kg",
        MASS,
    ),
    (
        "closest_picker_workload_1",
        "workload of the picker with the earliest expected arrival minus mean, kg",
        MASS,
    ),
    (
        "closest_picker_workload_2",
        "same for the second earliest picker, kg; 0 if fewer pickers",
        MASS,
    ),
    ("own_workload", "requesting picker's workload minus mean, kg", MASS),
    ("workload_min", "minimum picker workload minus mean, kg", MASS),
    ("workload_p25", "25th percentile picker workload minus mean, kg", MASS),
    ("workload_p75", "75th percentile picker workload minus mean, kg", MASS),
    ("workload_max", "maximum picker workload minus mean, kg", MASS),
];

pub fn feature_manifest() -> Vec<FeatureSpec> {
    let eff = EFF_SPEC.iter().map(|s| ("efficiency", s));
    let fair = FAIR_SPEC.iter().map(|s| ("fairness", s));
    eff.chain(fair)
        .enumerate()
        .map(|(index, (block, &(name, description, input_scale)))| FeatureSpec {
            index,
            block: block.to_string(),
            name: name.to_string(),
            description: description.to_string(),
            input_scale,
        })
        .collect()
}

pub fn feature_manifest_json() -> String {
    serde_json::to_string_pretty(&feature_manifest()).expect("manifest serializes")
}

/// Hex SHA-256 of the manifest; stored in checkpoints.
pub fn feature_manifest_hash() -> String {
    let digest = Sha256::digest(feature_manifest_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn input_scales() -> [f64; N_FEATURES] {
    let mut s = [0.0; N_FEATURES];
    for (i, f) in feature_manifest().iter().enumerate() {
        s[i] = f.input_scale;
    }
    s
}

/// Row-major per-node features: `eff[v * N_EFF + j]`, `fair[v * N_FAIR + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub n_nodes: usize,
    pub eff: Vec<f64>,
    pub fair: Vec<f64>,
}

impl FeatureTensor {
    pub fn eff_row(&self, v: usize) -> &[f64] {
        &self.eff[v * N_EFF..(v + 1) * N_EFF]
    }

    pub fn fair_row(&self, v: usize) -> &[f64] {
        &self.fair[v * N_FAIR..(v + 1) * N_FAIR]
    }

    pub fn zero_fairness(&mut self) {
        self.fair.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub efficiency: f64,
    pub fairness: f64,
}

impl RewardVector {
    pub fn dot(&self, w: [f64; 2]) -> f64 {
        w[0] * self.efficiency + w[1] * self.fairness
    }
}

pub fn normalize_rewards(r: RewardVector, scales: [f64; 2]) -> RewardVector {
    RewardVector {
        efficiency: r.efficiency / scales[0],
        fairness: r.fairness / scales[1],
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct AmrView {
    node: NodeId,
    status: AmrStatus,
    /// Destinations 0, 1 and 2 steps ahead.
    dests: [Option<NodeId>; 3],
    /// Expected arrival times at those destinations, s.
    eta: [f64; 3],
    remaining_trip: f64,
    current_mass: f64,
}

fn two_smallest(xs: impl Iterator<Item = f64>) -> (Option<f64>, Option<f64>) {
    let mut a: Option<f64> = None;
    let mut b: Option<f64> = None;
    for x in xs {
        match a {
            Some(av) if x >= av => {
                if b.is_none_or(|bv| x < bv) {
                    b = Some(x);
                }
            }
            _ => {
                b = a;
                a = Some(x);
            }
        }
    }
    (a, b)
}

/// Features for the decision of `picker`.
pub fn observe(state: &SimState, picker: usize) -> FeatureTensor {
    let wh: &Warehouse = state.warehouse();
    let layout = &wh.layout;
    let n = layout.n_nodes();
    let pd = &wh.picker_dist;
    let ad = &wh.amr_dist;
    let vp = state.noise().picker_speed.mean;
    let va = state.noise().amr_speed.mean;
    let n_aisles = layout.n_aisles();

    let amrs: Vec<AmrView> = state
        .amrs()
        .iter()
        .map(|a| {
            let lines: Vec<_> = (0..3).map(|o| a.line_ahead(o)).collect();
            let mut eta = [0.0; 3];
            let remaining_trip = a.remaining_trip(wh);
            let mut t = remaining_trip / va;
            let mut prev = None;
            for o in 0..3 {
                if let Some(l) = lines[o] {
                    if let Some((p, pt)) = prev {
                        t += pt + ad.get(p, l.node) / va;
                    }
                    eta[o] = t;
                    prev = Some((l.node, l.expected_time));
                }
            }
            AmrView {
                node: a.node,
                status: a.status,
                dests: [
                    lines[0].map(|l| l.node),
                    lines[1].map(|l| l.node),
                    lines[2].map(|l| l.node),
                ],
                eta,
                remaining_trip,
                current_mass: lines[0].map_or(0.0, |l| l.mass),
            }
        })
        .collect();

    // Expected pick time of the line an AMR brings to each destination.
    let mut pick_at = vec![0.0f64; n];
    let mut first_eta = vec![f64::INFINITY; n];
    for (a, raw) in amrs.iter().zip(state.amrs()) {
        for o in 0..2 {
            if let (Some(d), Some(l)) = (a.dests[o], raw.line_ahead(o)) {
                if a.eta[o] < first_eta[d.index()] {
                    first_eta[d.index()] = a.eta[o];
                    pick_at[d.index()] = l.expected_time;
                }
            }
        }
    }

    // Where each picker will be free, and after how long.
    let pickers = state.pickers();
    let free: Vec<(NodeId, f64)> = pickers
        .iter()
        .map(|p| match p.status {
            PickerStatus::Picking => {
                let expected = p
                    .serving
                    .and_then(|r| state.amrs()[r].current_line())
                    .map_or(0.0, |l| l.expected_time);
                (p.node, (expected - (state.clock() - p.pick_started)).max(0.0))
            }
            PickerStatus::Moving | PickerStatus::WaitingForAmr => {
                let d = p.dest.expect("busy picker has a destination");
                let walk = pd.get(p.node, d) / vp;
                let amr = if first_eta[d.index()].is_finite() {
                    first_eta[d.index()]
                } else {
                    0.0
                };
                (d, walk.max(amr) + pick_at[d.index()])
            }
            PickerStatus::AwaitingAssignment => (p.node, 0.0),
        })
        .collect();

    let workloads = state.workloads();
    let mean_w = workloads.iter().sum::<f64>() / workloads.len() as f64;
    let mut sorted_w: Vec<f64> = workloads.iter().map(|w| w - mean_w).collect();
    sorted_w.sort_by(f64::total_cmp);
    let dist_block = [
        sorted_w[0],
        percentile(&sorted_w, 0.25),
        percentile(&sorted_w, 0.75),
        sorted_w[sorted_w.len() - 1],
    ];
    let own_c = workloads[picker] - mean_w;

    let me = &pickers[picker];
    let others: Vec<usize> = (0..pickers.len()).filter(|&k| k != picker).collect();

    // Per-aisle aggregates.
    let mut amrs_to_aisle = vec![0.0; n_aisles];
    let mut amrs_waiting_aisle = vec![0.0; n_aisles];
    for a in &amrs {
        if let Some(d) = a.dests[0] {
            amrs_to_aisle[layout.aisle_of(d)] += 1.0;
        }
        if a.status == AmrStatus::WaitingForPicker {
            amrs_waiting_aisle[layout.aisle_of(a.node)] += 1.0;
        }
    }
    let mut pickers_to_aisle = vec![0.0; n_aisles];
    for &k in &others {
        if let Some(d) = pickers[k].dest {
            pickers_to_aisle[layout.aisle_of(d)] += 1.0;
        }
    }
    let picker_dests: Vec<NodeId> = others.iter().filter_map(|&k| pickers[k].dest).collect();
    let unserved: Vec<NodeId> = state
        .amr_destinations(true)
        .into_iter()
        .filter(|&d| state.claimed_by(d).is_none())
        .collect();

    let mut eff = vec![0.0; n * N_EFF];
    let mut fair = vec![0.0; n * N_FAIR];
    for v in layout.nodes() {
        let e = &mut eff[v.index() * N_EFF..(v.index() + 1) * N_EFF];
        let aisle = layout.aisle_of(v);

        e[0] = (me.node == v) as u8 as f64;
        e[1] = pd.get(me.node, v);
        e[2] = amrs.iter().any(|a| a.node == v) as u8 as f64;
        let going: Vec<&AmrView> = amrs
            .iter()
            .filter(|a| a.dests[0] == Some(v) && a.status == AmrStatus::Moving)
            .collect();
        e[3] = going.len() as f64;
        e[4] = going
            .iter()
            .map(|a| a.remaining_trip)
            .reduce(f64::min)
            .unwrap_or(SENTINEL);
        e[5] = amrs
            .iter()
            .filter(|a| a.dests[1] == Some(v))
            .map(|a| a.eta[1])
            .reduce(f64::min)
            .unwrap_or(SENTINEL);
        e[6] = amrs
            .iter()
            .filter(|a| a.dests[2] == Some(v))
            .map(|a| a.eta[2])
            .reduce(f64::min)
            .unwrap_or(SENTINEL);
        e[7] = amrs_to_aisle[aisle];
        e[8] = amrs_waiting_aisle[aisle];
        e[9] = others.iter().any(|&k| pickers[k].node == v) as u8 as f64;
        e[10] = others
            .iter()
            .filter(|&&k| pickers[k].dest == Some(v))
            .map(|&k| pd.get(pickers[k].node, v))
            .reduce(f64::min)
            .unwrap_or(SENTINEL);
        e[11] = pickers_to_aisle[aisle];
        e[12] = others
            .iter()
            .map(|&k| {
                let p = &pickers[k];
                let d = p.dest.unwrap_or(p.node);
                pd.get(p.node, d) + pd.get(d, v)
            })
            .reduce(f64::min)
            .unwrap_or(0.0);
        e[13] = others
            .iter()
            .map(|&k| free[k].1 + pd.get(free[k].0, v) / vp)
            .reduce(f64::min)
            .unwrap_or(0.0);
        e[14] = aisle as f64 / n_aisles as f64;
        e[15] = layout.position_along_direction(v) as f64 / layout.depth() as f64;
        let heading_here = amrs.iter().filter(|a| a.dests[0] == Some(v));
        let (n1, n2) = two_smallest(heading_here.clone().filter_map(|a| a.dests[1]).map(|d| pd.get(v, d)));
        e[16] = n1.unwrap_or(0.0);
        e[17] = n2.unwrap_or(0.0);
        let (t1, t2) = two_smallest(heading_here.filter_map(|a| a.dests[2]).map(|d| pd.get(v, d)));
        e[18] = t1.unwrap_or(0.0);
        e[19] = t2.unwrap_or(0.0);
        e[20] = picker_dests
            .iter()
            .filter(|&&d| d != v)
            .map(|&d| pd.get(v, d))
            .reduce(f64::min)
            .unwrap_or(0.0);
        let (u1, u2) = two_smallest(unserved.iter().filter(|&&d| d != v).map(|&d| pd.get(v, d)));
        e[21] = u1.unwrap_or(0.0);
        e[22] = u2.unwrap_or(0.0);

        let f = &mut fair[v.index() * N_FAIR..(v.index() + 1) * N_FAIR];
        let here: Vec<f64> = pickers
            .iter()
            .filter(|p| p.node == v)
            .map(|p| p.workload - mean_w)
            .collect();
        f[0] = if here.is_empty() {
            0.0
        } else {
            here.iter().sum::<f64>() / here.len() as f64
        };
        f[1] = others
            .iter()
            .find(|&&k| pickers[k].dest == Some(v))
            .map_or(0.0, |&k| pickers[k].workload - mean_w);
        f[2] = state.unit_weight(v);
        f[3] = amrs
            .iter()
            .filter(|a| a.node == v && a.dests[0] == Some(v) && a.status != AmrStatus::Moving)
            .map(|a| a.current_mass)
            .sum();
        f[4] = going.iter().map(|a| a.current_mass).sum();
        let mut arrivals: Vec<(f64, usize)> = (0..pickers.len())
            .map(|k| (free[k].1 + pd.get(free[k].0, v) / vp, k))
            .collect();
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        f[5] = arrivals.first().map_or(0.0, |&(_, k)| workloads[k] - mean_w);
        f[6] = arrivals.get(1).map_or(0.0, |&(_, k)| workloads[k] - mean_w);
        f[7] = own_c;
        f[8..12].copy_from_slice(&dist_block);
    }
    FeatureTensor { n_nodes: n, eff, fair }
}

/// Environment configuration used by training and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub sim: SimConfig,
    /// Divisors for (efficiency, fairness) rewards during training.
    pub reward_scales: [f64; 2],
    /// Zero the fairness block: pure-efficiency agents.
    pub efficiency_only: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            sim: SimConfig::default(),
            reward_scales: [1.0, 1.0],
            efficiency_only: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.reward_scales.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::config("reward scales must be positive"));
        }
        self.sim.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Observation {
    pub picker: usize,
    pub features: FeatureTensor,
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Raw reward (seconds, kg).
    pub reward: RewardVector,
    pub done: bool,
}

/// Episode wrapper exposing reset / observe / step.
pub struct Env {
    cfg: EnvConfig,
    wh: Arc<Warehouse>,
    state: Option<SimState>,
    requester: Option<usize>,
    prev_time: f64,
    prev_sd: f64,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let wh = Warehouse::new(cfg.sim.n_aisles, cfg.sim.depth)?;
        Ok(Env::with_warehouse(cfg, wh))
    }

    /// Shares a precomputed warehouse; dimensions must match the config.
    pub fn with_warehouse(cfg: EnvConfig, wh: Arc<Warehouse>) -> Self {
        Env {
            cfg,
            wh,
            state: None,
            requester: None,
            prev_time: 0.0,
            prev_sd: 0.0,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn warehouse(&self) -> &Arc<Warehouse> {
        &self.wh
    }

    pub fn n_nodes(&self) -> usize {
        self.wh.layout.n_nodes()
    }

    pub fn state(&self) -> &SimState {
        self.state.as_ref().expect("reset before use")
    }

    pub fn requester(&self) -> Option<usize> {
        self.requester
    }

    pub fn is_done(&self) -> bool {
        self.requester.is_none()
    }

    /// Starts a new episode; returns false if it ended before any decision.
    pub fn reset(&mut self, seed: u64) -> Result<bool> {
        let state = init_episode(&self.cfg.sim, self.wh.clone(), RandomStream::new(seed))?;
        self.reset_with(state)
    }

    /// Starts from a prepared simulator state.
    pub fn reset_with(&mut self, state: SimState) -> Result<bool> {
        self.state = Some(state);
        self.prev_time = 0.0;
        self.prev_sd = 0.0;
        self.advance()?;
        Ok(self.requester.is_some())
    }

    fn advance(&mut self) -> Result<()> {
        let state = self.state.as_mut().expect("reset before use");
        self.requester = match state.advance_to_next_request()? {
            Advance::Decision { picker } => Some(picker),
            Advance::Done => None,
        };
        Ok(())
    }

    pub fn mask(&self) -> Vec<bool> {
        let k = self.requester.expect("episode running");
        self.state().action_mask(k)
    }

    pub fn features(&self) -> FeatureTensor {
        let k = self.requester.expect("episode running");
        let mut f = observe(self.state(), k);
        if self.cfg.efficiency_only {
            f.zero_fairness();
        }
        f
    }

    pub fn observe(&self) -> Observation {
        Observation {
            picker: self.requester.expect("episode running"),
            features: self.features(),
            mask: self.mask(),
        }
    }

    pub fn step(&mut self, action: NodeId) -> Result<StepOutcome> {
        let k = self
            .requester
            .ok_or_else(|| Error::config("step called on a finished episode"))?;
        self.state
            .as_mut()
            .expect("reset before use")
            .apply_allocation(k, action)?;
        self.advance()?;
        let state = self.state();
        let now = state.metrics();
        let t = now.completion_time;
        let sd = now.workload_sd;
        let reward = RewardVector {
            efficiency: self.prev_time - t,
            fairness: self.prev_sd - sd,
        };
        self.prev_time = t;
        self.prev_sd = sd;
        Ok(StepOutcome {
            reward,
            done: self.requester.is_none(),
        })
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        self.state().metrics()
    }
}

/// Anything that can choose a destination for a requesting picker.
pub trait Policy {
    fn name(&self) -> String;

    /// Called at the start of each episode with that episode's seed.
    fn reset(&mut self, _episode_seed: u64) {}

    fn act(&mut self, env: &Env, picker: usize, mask: &[bool]) -> Result<NodeId>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub metrics: EpisodeMetrics,
    pub reward_sum: RewardVector,
    pub decisions: usize,
    pub max_mask_popcount: usize,
}

/// Runs one full episode, checking every chosen action against the mask.
pub fn run_episode(env: &mut Env, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeOutcome> {
    policy.reset(seed);
    env.reset(seed)?;
    finish_episode(env, policy, seed)
}

pub(crate) fn finish_episode(env: &mut Env, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeOutcome> {
    let mut sum = RewardVector {
        efficiency: 0.0,
        fairness: 0.0,
    };
    let mut decisions = 0;
    let mut max_pop = 0;
    while let Some(k) = env.requester() {
        let mask = env.mask();
        max_pop = max_pop.max(mask.iter().filter(|&&m| m).count());
        let a = policy.act(env, k, &mask)?;
        if !mask.get(a.index()).copied().unwrap_or(false) {
            return Err(Error::InvalidAction {
                picker: k,
                node: a,
                reason: "policy chose a masked node",
            });
        }
        let out = env.step(a)?;
        sum.efficiency += out.reward.efficiency;
        sum.fairness += out.reward.fairness;
        decisions += 1;
    }
    Ok(EpisodeOutcome {
        seed,
        metrics: env.metrics(),
        reward_sum: sum,
        decisions,
        max_mask_popcount: max_pop,
    })
}

/// Walking distance helper for policies.
pub fn picker_distance(env: &Env, from: NodeId, to: NodeId) -> f64 {
    env.warehouse().dist(Mode::Picker).get(from, to)
}

#[cfg(test)]
mod tests;
