//! Exact solver and schedule evaluator for tiny deterministic instances:
//! one pickrun per AMR, fixed speeds and load times, no disruptions or
//! overtaking.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, Policy};
use crate::error::{Error, Result};
use crate::layout::{Mode, NodeId, Warehouse};
use crate::sim::pickrun::s_shape_key;
use crate::sim::{population_sd, sort_s_shape, Line, SimConfig, SimState};
use crate::stochastic::{NoiseConfig, RandomStream};

pub const MAX_ITEMS: usize = 9;
pub const MAX_PICKERS: usize = 3;
/// Load time of every item in generated instances, seconds.
pub const FIXED_LOAD_TIME: f64 = 7.5;
/// Slack for comparing bounds with schedule values summed in another order.
const BOUND_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleItem {
    pub node: NodeId,
    /// Mass lifted by the picker, kg.
    pub workload: f64,
    /// Load time, seconds.
    pub load_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicInstance {
    pub n_aisles: usize,
    pub depth: usize,
    pub picker_speed: f64,
    pub amr_speed: f64,
    pub items: Vec<OracleItem>,
    /// Item indices in visiting order, one pickrun per AMR.
    pub amr_sequences: Vec<Vec<usize>>,
    pub amr_starts: Vec<NodeId>,
    pub picker_starts: Vec<NodeId>,
}

impl DeterministicInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("instance: {m}")));
        if !(self.picker_speed > 0.0 && self.amr_speed > 0.0) {
            return bad("speeds must be positive");
        }
        if self.items.is_empty() || self.picker_starts.is_empty() || self.amr_sequences.is_empty() {
            return bad("needs items, pickers and AMRs");
        }
        if self.amr_starts.len() != self.amr_sequences.len() {
            return bad("one start node per AMR");
        }
        let n_nodes = 2 * self.n_aisles * self.depth;
        let in_layout = |v: &NodeId| v.index() < n_nodes;
        if !self.amr_starts.iter().chain(&self.picker_starts).all(in_layout) {
            return bad("start node outside layout");
        }
        for it in &self.items {
            if !in_layout(&it.node) || !(it.load_time > 0.0 && it.load_time.is_finite()) || !(it.workload >= 0.0) {
                return bad("items need a layout node, positive load time and non-negative workload");
            }
        }
        let mut seen = vec![false; self.items.len()];
        for &i in self.amr_sequences.iter().flatten() {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return bad("each item must appear on exactly one AMR");
            }
        }
        if !seen.iter().all(|&s| s) {
            return bad("each item must appear on exactly one AMR");
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_pickers(&self) -> usize {
        self.picker_starts.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let inst: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Simulator configuration that reproduces the instance's fixed times.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            sim: SimConfig {
                n_aisles: self.n_aisles,
                depth: self.depth,
                n_pickers: self.n_pickers(),
                n_amrs: self.amr_sequences.len(),
                total_picks: self.items.len() as u64,
                pickrun_min: 1,
                pickrun_max: self.items.len(),
                diverse_start: false,
                noise: NoiseConfig::deterministic(self.picker_speed, self.amr_speed),
                event_log: true,
                ..SimConfig::default()
            },
            ..EnvConfig::default()
        }
    }
}

/// Sizes for [`random_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n_aisles: usize,
    pub depth: usize,
    pub items: (usize, usize),
    pub pickers: (usize, usize),
    pub amrs: (usize, usize),
    pub picker_speed: f64,
    pub amr_speed: f64,
    /// AMRs start part-way along their route instead of at the base.
    pub diverse_start: bool,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            n_aisles: 3,
            depth: 4,
            items: (2, 8),
            pickers: (1, 3),
            amrs: (1, 3),
            picker_speed: 1.25,
            amr_speed: 1.5,
            diverse_start: false,
        }
    }
}

/// Random instance: items at uniform nodes with workloads in [0.5, 10] kg,
/// split into S-shape-sorted pickruns, and pickers at uniform nodes. AMRs
/// start at the base, or with `diverse_start` at a uniform node preceding
/// their first item in traversal order.
pub fn random_instance(rs: &mut RandomStream, spec: &InstanceSpec) -> Result<DeterministicInstance> {
    let wh = Warehouse::new(spec.n_aisles, spec.depth)?;
    let n_nodes = wh.layout.n_nodes();
    let n_items = rs.int_inclusive(spec.items.0, spec.items.1);
    let n_amrs = rs.int_inclusive(spec.amrs.0, spec.amrs.1).min(n_items);
    let n_pickers = rs.int_inclusive(spec.pickers.0, spec.pickers.1);
    let items: Vec<OracleItem> = (0..n_items)
        .map(|_| OracleItem {
            node: NodeId::from(rs.index(n_nodes)),
            workload: (5.0 + rs.uniform() * 95.0).round() / 10.0,
            load_time: FIXED_LOAD_TIME,
        })
        .collect();
    // Every AMR gets at least one item.
    let mut owner: Vec<usize> = (0..n_items)
        .map(|i| if i < n_amrs { i } else { rs.index(n_amrs) })
        .collect();
    for i in (1..n_items).rev() {
        owner.swap(i, rs.index(i + 1));
    }
    let amr_sequences: Vec<Vec<usize>> = (0..n_amrs)
        .map(|r| {
            let mut lines: Vec<Line> = (0..n_items)
                .filter(|&i| owner[i] == r)
                .map(|i| Line {
                    id: i,
                    node: items[i].node,
                    n_items: 1,
                    mass: items[i].workload,
                    expected_time: items[i].load_time,
                })
                .collect();
            sort_s_shape(&wh.layout, &mut lines);
            lines.iter().map(|l| l.id).collect()
        })
        .collect();
    let layout = &wh.layout;
    let amr_starts = amr_sequences
        .iter()
        .map(|seq| {
            let first = s_shape_key(layout, items[seq[0]].node);
            let before: Vec<NodeId> = layout.nodes().filter(|&v| s_shape_key(layout, v) < first).collect();
            if spec.diverse_start && !before.is_empty() {
                before[rs.index(before.len())]
            } else {
                layout.base_node()
            }
        })
        .collect();
    let inst = DeterministicInstance {
        n_aisles: spec.n_aisles,
        depth: spec.depth,
        picker_speed: spec.picker_speed,
        amr_speed: spec.amr_speed,
        items,
        amr_sequences,
        amr_starts,
        picker_starts: (0..n_pickers).map(|_| NodeId::from(rs.index(n_nodes))).collect(),
    };
    inst.validate()?;
    Ok(inst)
}

/// Instance data reduced to travel times between the relevant nodes.
#[derive(Clone, Debug)]
pub struct Prepared {
    n: usize,
    k: usize,
    load: Vec<f64>,
    work: Vec<f64>,
    amr_pred: Vec<Option<usize>>,
    /// AMR travel into the item from its previous stop (or start).
    amr_travel: Vec<f64>,
    /// Time from each item's AMR-predecessor finish to the end of the AMR's
    /// pickrun, counting this item onwards.
    amr_tail: Vec<f64>,
    picker_from_start: Vec<Vec<f64>>,
    picker_between: Vec<Vec<f64>>,
}

impl Prepared {
    pub fn new(inst: &DeterministicInstance) -> Result<Self> {
        inst.validate()?;
        let wh = Warehouse::new(inst.n_aisles, inst.depth)?;
        Ok(Self::with_warehouse(inst, &wh))
    }

    pub fn with_warehouse(inst: &DeterministicInstance, wh: &Warehouse) -> Self {
        let n = inst.items.len();
        let node = |i: usize| inst.items[i].node;
        let tk = |u: NodeId, v: NodeId| wh.dist(Mode::Picker).get(u, v) / inst.picker_speed;
        let tr = |u: NodeId, v: NodeId| wh.dist(Mode::Amr).get(u, v) / inst.amr_speed;
        let mut amr_pred = vec![None; n];
        let mut amr_travel = vec![0.0; n];
        let mut amr_tail = vec![0.0; n];
        for (seq, &start) in inst.amr_sequences.iter().zip(&inst.amr_starts) {
            let mut prev_node = start;
            let mut prev = None;
            for &i in seq {
                amr_pred[i] = prev;
                amr_travel[i] = tr(prev_node, node(i));
                prev_node = node(i);
                prev = Some(i);
            }
            let mut tail = 0.0;
            for &i in seq.iter().rev() {
                tail += amr_travel[i] + inst.items[i].load_time;
                amr_tail[i] = tail;
            }
        }
        Prepared {
            n,
            k: inst.picker_starts.len(),
            load: inst.items.iter().map(|it| it.load_time).collect(),
            work: inst.items.iter().map(|it| it.workload).collect(),
            amr_pred,
            amr_travel,
            amr_tail,
            picker_from_start: inst
                .picker_starts
                .iter()
                .map(|&s| (0..n).map(|i| tk(s, node(i))).collect())
                .collect(),
            picker_between: (0..n).map(|a| (0..n).map(|b| tk(node(a), node(b))).collect()).collect(),
        }
    }

    fn picker_travel(&self, picker: usize, prev: Option<usize>, i: usize) -> f64 {
        match prev {
            Some(p) => self.picker_between[p][i],
            None => self.picker_from_start[picker][i],
        }
    }
}

/// Event times of a complete schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Items in picking order, per picker.
    pub orders: Vec<Vec<usize>>,
    pub picker_of: Vec<usize>,
    pub picker_arrival: Vec<f64>,
    pub amr_arrival: Vec<f64>,
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub completion_time: f64,
    pub workloads: Vec<f64>,
    pub workload_sd: f64,
}

/// Earliest event times for the given per-picker orders. A picker leaves for
/// its next item once it finished the previous one and not before that
/// item's `release` time, if given. AMRs leave an item once it is loaded.
/// Fails on incomplete assignments and on cyclic precedence.
pub fn evaluate_schedule(prep: &Prepared, orders: &[Vec<usize>], release: Option<&[f64]>) -> Result<Schedule> {
    if orders.len() != prep.k {
        return Err(Error::Infeasible(format!(
            "{} orders for {} pickers",
            orders.len(),
            prep.k
        )));
    }
    let mut picker_of = vec![usize::MAX; prep.n];
    let mut picker_pred = vec![None; prep.n];
    for (k, order) in orders.iter().enumerate() {
        for (j, &i) in order.iter().enumerate() {
            if i >= prep.n || picker_of[i] != usize::MAX {
                return Err(Error::Infeasible(format!("item {i} unknown or assigned twice")));
            }
            picker_of[i] = k;
            picker_pred[i] = j.checked_sub(1).map(|p| order[p]);
        }
    }
    if let Some(i) = picker_of.iter().position(|&k| k == usize::MAX) {
        return Err(Error::Infeasible(format!("item {i} not assigned")));
    }
    let nan = vec![f64::NAN; prep.n];
    let (mut pa, mut aa, mut start, mut finish) = (nan.clone(), nan.clone(), nan.clone(), nan);
    let mut done = vec![false; prep.n];
    let mut remaining = prep.n;
    // Forward propagation: repeatedly settle items whose predecessors are settled.
    while remaining > 0 {
        let mut progressed = false;
        for i in 0..prep.n {
            if done[i] {
                continue;
            }
            let ready = |p: Option<usize>| p.is_none_or(|p| done[p]);
            if !ready(prep.amr_pred[i]) || !ready(picker_pred[i]) {
                continue;
            }
            let k = picker_of[i];
            let free = picker_pred[i].map_or(0.0, |p| finish[p]);
            let depart = release.map_or(free, |r| free.max(r[i]));
            pa[i] = depart + prep.picker_travel(k, picker_pred[i], i);
            aa[i] = prep.amr_pred[i].map_or(0.0, |p| finish[p]) + prep.amr_travel[i];
            start[i] = pa[i].max(aa[i]);
            finish[i] = start[i] + prep.load[i];
            done[i] = true;
            remaining -= 1;
            progressed = true;
        }
        if !progressed {
            return Err(Error::Infeasible(
                "cyclic precedence between picker and AMR orders".into(),
            ));
        }
    }
    let mut workloads = vec![0.0; prep.k];
    for (k, order) in orders.iter().enumerate() {
        workloads[k] = order.iter().map(|&i| prep.work[i]).sum();
    }
    Ok(Schedule {
        orders: orders.to_vec(),
        picker_of,
        picker_arrival: pa,
        amr_arrival: aa,
        completion_time: finish.iter().copied().fold(0.0, f64::max),
        start,
        finish,
        workload_sd: population_sd(&workloads),
        workloads,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Minimise completion time, then workload SD.
    Efficiency,
    /// Minimise workload SD, then completion time.
    Fairness,
    /// Minimise `w0 * C + w1 * SD`, then completion time.
    Weighted([f64; 2]),
}

impl Objective {
    fn score(self, c: f64, sd: f64) -> (f64, f64) {
        match self {
            Objective::Efficiency => (c, sd),
            Objective::Fairness => (sd, c),
            Objective::Weighted(w) => (w[0] * c + w[1] * sd, c),
        }
    }

    /// Lower bound on the primary score given bounds on C and a known SD.
    fn bound(self, c_lb: f64, sd: f64) -> f64 {
        self.bounds(c_lb, sd).0
    }

    /// Lower bounds on the (primary, secondary) score.
    fn bounds(self, c_lb: f64, sd: f64) -> (f64, f64) {
        match self {
            Objective::Efficiency => (c_lb, sd),
            Objective::Fairness => (sd, c_lb),
            Objective::Weighted(w) => (w[0] * c_lb + w[1] * sd, c_lb),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub schedule: Schedule,
    pub objective: Objective,
    pub value: f64,
    /// Complete schedules evaluated.
    pub leaves: u64,
    /// Search nodes expanded.
    pub nodes: u64,
}

struct Search<'a> {
    prep: &'a Prepared,
    objective: Objective,
    prune: bool,
    assign: Vec<usize>,
    sd: f64,
    finish: Vec<f64>,
    order: Vec<usize>,
    picker_last: Vec<Option<usize>>,
    picker_free: Vec<f64>,
    picker_rest: Vec<f64>,
    best: Option<((f64, f64), Vec<usize>, Vec<usize>)>,
    leaves: u64,
    nodes: u64,
}

impl Search<'_> {
    fn key(&self, score: (f64, f64), assign: &[usize], order: &[usize]) -> bool {
        match &self.best {
            None => true,
            Some((s, a, o)) => (score.0, score.1, assign, order) < (s.0, s.1, a.as_slice(), o.as_slice()),
        }
    }

    fn lower_bound(&self, last_start: f64) -> f64 {
        let mut lb = self.finish.iter().copied().filter(|f| !f.is_nan()).fold(0.0, f64::max);
        for i in 0..self.prep.n {
            if !self.finish[i].is_nan() {
                continue;
            }
            let ready = self.prep.amr_pred[i].map_or(Some(0.0), |p| (!self.finish[p].is_nan()).then(|| self.finish[p]));
            if let Some(t) = ready {
                lb = lb.max(t + self.prep.amr_tail[i]);
            }
            lb = lb.max(last_start + self.prep.load[i]);
        }
        for k in 0..self.prep.k {
            lb = lb.max(self.picker_free[k] + self.picker_rest[k]);
        }
        lb
    }

    /// Extends the partial schedule in canonical (start time, item) order,
    /// which generates every acyclic schedule of the assignment exactly once.
    fn dfs(&mut self, last: (f64, usize), c: f64) {
        self.nodes += 1;
        if self.order.len() == self.prep.n {
            self.leaves += 1;
            let score = self.objective.score(c, self.sd);
            if self.key(score, &self.assign.clone(), &self.order.clone()) {
                self.best = Some((score, self.assign.clone(), self.order.clone()));
            }
            return;
        }
        if self.prune {
            if let Some((s, _, _)) = &self.best {
                let lb = self.objective.bounds(self.lower_bound(last.0), self.sd);
                if lb.0 > s.0 + BOUND_EPS || (lb.0 >= s.0 - BOUND_EPS && lb.1 > s.1 + BOUND_EPS) {
                    return;
                }
            }
        }
        for i in 0..self.prep.n {
            if !self.finish[i].is_nan() || self.prep.amr_pred[i].is_some_and(|p| self.finish[p].is_nan()) {
                continue;
            }
            let k = self.assign[i];
            let p = self.picker_free[k] + self.prep.picker_travel(k, self.picker_last[k], i);
            let a = self.prep.amr_pred[i].map_or(0.0, |q| self.finish[q]) + self.prep.amr_travel[i];
            let b = p.max(a);
            if (b, i) <= last {
                continue;
            }
            let f = b + self.prep.load[i];
            let saved = (self.picker_last[k], self.picker_free[k]);
            self.finish[i] = f;
            self.order.push(i);
            self.picker_last[k] = Some(i);
            self.picker_free[k] = f;
            self.picker_rest[k] -= self.prep.load[i];
            self.dfs((b, i), c.max(f));
            self.picker_rest[k] += self.prep.load[i];
            (self.picker_last[k], self.picker_free[k]) = saved;
            self.order.pop();
            self.finish[i] = f64::NAN;
        }
    }
}

/// Exhaustive branch-and-bound over assignments and picking orders. With
/// `prune` off every acyclic schedule is evaluated.
pub fn solve_exact(inst: &DeterministicInstance, objective: Objective, prune: bool) -> Result<Solution> {
    inst.validate()?;
    if inst.n_items() > MAX_ITEMS || inst.n_pickers() > MAX_PICKERS {
        return Err(Error::config(format!(
            "exact search handles at most {MAX_ITEMS} items and {MAX_PICKERS} pickers"
        )));
    }
    if let Objective::Weighted(w) = objective {
        crate::ppo::validate_weights(w)?;
    }
    let prep = Prepared::new(inst)?;
    let (n, k) = (prep.n, prep.k);
    let mut assignments: Vec<(f64, Vec<usize>)> = (0..k.pow(n as u32))
        .map(|mut code| {
            let a: Vec<usize> = (0..n)
                .map(|_| {
                    let p = code % k;
                    code /= k;
                    p
                })
                .collect();
            let mut w = vec![0.0; k];
            for (i, &p) in a.iter().enumerate() {
                w[p] += prep.work[i];
            }
            (population_sd(&w), a)
        })
        .collect();
    if prune && objective != Objective::Efficiency {
        assignments.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    }
    let mut s = Search {
        prep: &prep,
        objective,
        prune,
        assign: Vec::new(),
        sd: 0.0,
        finish: vec![f64::NAN; n],
        order: Vec::with_capacity(n),
        picker_last: vec![None; k],
        picker_free: vec![0.0; k],
        picker_rest: vec![0.0; k],
        best: None,
        leaves: 0,
        nodes: 0,
    };
    for (sd, a) in assignments {
        if prune {
            if let Some((best, _, _)) = &s.best {
                if objective.bound(0.0, sd) > best.0 + BOUND_EPS {
                    if objective == Objective::Efficiency {
                        continue;
                    }
                    // Assignments are sorted by SD: none of the rest can win.
                    break;
                }
            }
        }
        s.picker_rest = vec![0.0; k];
        for (i, &p) in a.iter().enumerate() {
            s.picker_rest[p] += prep.load[i];
        }
        s.assign = a;
        s.sd = sd;
        s.dfs((f64::NEG_INFINITY, 0), 0.0);
    }
    let (_, assign, order) = s
        .best
        .clone()
        .ok_or_else(|| Error::Infeasible("no schedule found".into()))?;
    let mut orders = vec![Vec::new(); k];
    for &i in &order {
        orders[assign[i]].push(i);
    }
    let schedule = evaluate_schedule(&prep, &orders, None)?;
    Ok(Solution {
        value: objective.score(schedule.completion_time, schedule.workload_sd).0,
        schedule,
        objective,
        leaves: s.leaves,
        nodes: s.nodes,
    })
}

/// Simulator run on an instance: outcome plus the realised decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicRun {
    pub completion_time: f64,
    pub workloads: Vec<f64>,
    pub workload_sd: f64,
    /// Items each picker served, in order.
    pub orders: Vec<Vec<usize>>,
    /// Time each picker left for each item.
    pub release: Vec<f64>,
    pub decisions: usize,
    /// Stall-breaker re-polls: a picker abandoned its destination.
    pub repolls: usize,
}

/// Builds the simulator state of an instance.
pub fn instance_state(inst: &DeterministicInstance, wh: Arc<Warehouse>) -> Result<SimState> {
    inst.validate()?;
    let runs = inst
        .amr_sequences
        .iter()
        .zip(&inst.amr_starts)
        .map(|(seq, &start)| {
            let lines = seq
                .iter()
                .map(|&i| Line {
                    id: i,
                    node: inst.items[i].node,
                    n_items: 1,
                    mass: inst.items[i].workload,
                    expected_time: inst.items[i].load_time,
                })
                .collect();
            (start, lines)
        })
        .collect();
    SimState::from_parts(
        wh,
        NoiseConfig::deterministic(inst.picker_speed, inst.amr_speed),
        RandomStream::new(0),
        runs,
        &inst.picker_starts,
        true,
    )
}

/// Runs the event simulator on the instance with `policy` deciding.
pub fn simulate_deterministic(inst: &DeterministicInstance, policy: &mut dyn Policy) -> Result<DeterministicRun> {
    let cfg = inst.env_config();
    let wh = Warehouse::new(inst.n_aisles, inst.depth)?;
    let mut env = Env::with_warehouse(cfg, wh.clone());
    policy.reset(0);
    env.reset_with(instance_state(inst, wh)?)?;
    let mut decisions = 0;
    while let Some(k) = env.requester() {
        let mask = env.mask();
        let a = policy.act(&env, k, &mask)?;
        if !mask.get(a.index()).copied().unwrap_or(false) {
            return Err(Error::InvalidAction {
                picker: k,
                node: a,
                reason: "policy chose a masked node",
            });
        }
        env.step(a)?;
        decisions += 1;
    }
    let state = env.state();
    if !state.is_done() {
        return Err(Error::Integrity {
            time: state.clock(),
            message: "episode ended with items left".into(),
        });
    }
    let mut orders = vec![Vec::new(); inst.n_pickers()];
    let mut release = vec![0.0; inst.n_items()];
    for s in state.trace() {
        orders[s.picker].push(s.line);
        release[s.line] = s.dispatch;
    }
    let repolls = state
        .event_log()
        .map_or(0, |log| log.rows.iter().filter(|r| r.event == "repoll").count());
    let m = state.metrics();
    Ok(DeterministicRun {
        completion_time: m.completion_time,
        workload_sd: m.workload_sd,
        workloads: m.workloads,
        orders,
        release,
        decisions,
        repolls,
    })
}

/// Replays fixed per-picker orders: each decision sends the picker to the
/// location of its next unserved item.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub orders: Vec<Vec<usize>>,
    nodes: Vec<NodeId>,
}

impl ScriptedPolicy {
    pub fn new(inst: &DeterministicInstance, orders: Vec<Vec<usize>>) -> Self {
        ScriptedPolicy {
            orders,
            nodes: inst.items.iter().map(|it| it.node).collect(),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn act(&mut self, env: &Env, picker: usize, _mask: &[bool]) -> Result<NodeId> {
        let served: HashSet<usize> = env.state().trace().iter().map(|s| s.line).collect();
        let next = self.orders[picker]
            .iter()
            .find(|i| !served.contains(i))
            .ok_or(Error::InvalidAction {
                picker,
                node: env.state().pickers()[picker].node,
                reason: "script has no item left for this picker",
            })?;
        Ok(self.nodes[*next])
    }
}

#[cfg(test)]
mod tests;
