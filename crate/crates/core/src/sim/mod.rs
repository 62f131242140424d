//! Discrete-event simulation of pickers and AMRs between allocation requests.
//!
//! Movement is simulated edge by edge so that positions are always known at
//! graph nodes. Every entity has at most one pending event. Events at equal
//! times run in insertion order.

mod eventlog;
pub mod pickrun;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Mode, NodeId, Warehouse};
use crate::stochastic::{generate_product_placement, CatalogConfig, NoiseConfig, RandomStream};

pub use eventlog::{EventLog, LogRow};
pub use pickrun::{generate_pickruns, sort_s_shape, Line, Pickrun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_aisles: usize,
    pub depth: usize,
    pub n_pickers: usize,
    pub n_amrs: usize,
    /// Items to pick over the episode.
    pub total_picks: u64,
    pub pickrun_min: usize,
    pub pickrun_max: usize,
    /// Cut each AMR's first pickrun at a uniform point so AMRs start spread out.
    pub diverse_start: bool,
    pub noise: NoiseConfig,
    pub catalog: CatalogConfig,
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_aisles: 10,
            depth: 10,
            n_pickers: 10,
            n_amrs: 25,
            total_picks: 5000,
            pickrun_min: 15,
            pickrun_max: 25,
            diverse_start: true,
            noise: NoiseConfig::default(),
            catalog: CatalogConfig::default(),
            event_log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_aisles < 1 || self.depth < 1 {
            return Err(Error::config("layout dimensions must be at least 1"));
        }
        if self.n_pickers < 1 {
            return Err(Error::config("need at least one picker"));
        }
        if self.n_amrs < 1 {
            return Err(Error::config("need at least one AMR"));
        }
        if self.total_picks < 1 {
            return Err(Error::config("need at least one pick"));
        }
        if self.pickrun_min < 1 || self.pickrun_min > self.pickrun_max {
            return Err(Error::config("pickrun length bounds must satisfy 1 <= min <= max"));
        }
        self.noise.validate()?;
        self.catalog.validate()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PickerStatus {
    Moving,
    Picking,
    /// Idle and waiting for a destination from the policy.
    AwaitingAssignment,
    WaitingForAmr,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmrStatus {
    Moving,
    WaitingForPicker,
    Loading,
    /// Heading to the base with no pickrun left.
    ToBase,
    Parked,
}

#[derive(Clone, Debug)]
pub struct Picker {
    pub id: usize,
    pub node: NodeId,
    pub dest: Option<NodeId>,
    pub status: PickerStatus,
    pub speed: f64,
    /// Total lifted mass in kg.
    pub workload: f64,
    pub items_picked: u64,
    path: Vec<NodeId>,
    path_pos: usize,
    ready_at: f64,
    pub(crate) serving: Option<usize>,
    pub(crate) pick_started: f64,
    dispatch: f64,
    dispatch_from: NodeId,
    /// Set by the stall breaker: only AMR current destinations are offered.
    restricted: bool,
}

#[derive(Clone, Debug)]
pub struct Amr {
    pub id: usize,
    pub node: NodeId,
    pub status: AmrStatus,
    pub speed: f64,
    run: Option<Vec<Line>>,
    cursor: usize,
    path: Vec<NodeId>,
    path_pos: usize,
    waiting_since: f64,
}

impl Amr {
    pub fn current_line(&self) -> Option<&Line> {
        self.run.as_ref().and_then(|r| r.get(self.cursor))
    }

    pub fn next_line(&self) -> Option<&Line> {
        self.run.as_ref().and_then(|r| r.get(self.cursor + 1))
    }

    pub fn current_dest(&self) -> Option<NodeId> {
        self.current_line().map(|l| l.node)
    }

    pub fn next_dest(&self) -> Option<NodeId> {
        self.next_line().map(|l| l.node)
    }

    /// Line `offset` steps ahead of the current one.
    pub fn line_ahead(&self, offset: usize) -> Option<&Line> {
        self.run.as_ref().and_then(|r| r.get(self.cursor + offset))
    }

    /// Length of the rest of the current trip in metres (0 when standing).
    pub fn remaining_trip(&self, wh: &Warehouse) -> f64 {
        self.path[self.path_pos..]
            .windows(2)
            .map(|w| wh.amr_dist.get(w[0], w[1]))
            .sum()
    }

    /// Lines not yet picked, starting with the current one.
    pub fn remaining_lines(&self) -> &[Line] {
        match &self.run {
            Some(r) => &r[self.cursor.min(r.len())..],
            None => &[],
        }
    }

    /// True while standing still at a pick location.
    pub fn is_stationary(&self) -> bool {
        matches!(self.status, AmrStatus::WaitingForPicker | AmrStatus::Loading)
    }
}

/// A completed pick, as needed to replay the episode as a fixed schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServedLine {
    pub line: usize,
    pub node: NodeId,
    pub picker: usize,
    pub amr: usize,
    pub start: f64,
    pub finish: f64,
    /// When the picker set off towards this line, and from where.
    pub dispatch: f64,
    pub dispatch_from: NodeId,
    pub mass: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Advance {
    Decision { picker: usize },
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub completion_time: f64,
    pub workload_sd: f64,
    pub workloads: Vec<f64>,
}

#[derive(Copy, Clone, Debug)]
enum EventKind {
    PickerStep(usize),
    PickDone(usize),
    AmrStep(usize),
}

#[derive(Copy, Clone, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn population_sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub struct SimState {
    wh: Arc<Warehouse>,
    noise: NoiseConfig,
    rs: RandomStream,
    clock: f64,
    seq: u64,
    queue: BinaryHeap<Event>,
    pickers: Vec<Picker>,
    amrs: Vec<Amr>,
    pending_runs: VecDeque<Pickrun>,
    /// Picker that has claimed each node as its destination.
    claims: Vec<Option<usize>>,
    requests: VecDeque<usize>,
    starved: Vec<usize>,
    current_request: Option<usize>,
    items_remaining: u64,
    total_mass: f64,
    done: bool,
    completion_time: f64,
    trace: Vec<ServedLine>,
    log: Option<EventLog>,
    /// Mass of one item of the product stored at each node.
    unit_weight: Vec<f64>,
}

impl std::fmt::Debug for SimState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimState")
            .field("clock", &self.clock)
            .field("items_remaining", &self.items_remaining)
            .field("pickers", &self.pickers)
            .field("amrs", &self.amrs)
            .finish_non_exhaustive()
    }
}

/// Builds a stochastic episode: product placement, pickruns, AMR and picker start positions.
pub fn init_episode(config: &SimConfig, wh: Arc<Warehouse>, mut rs: RandomStream) -> Result<SimState> {
    config.validate()?;
    if wh.layout.n_aisles() != config.n_aisles || wh.layout.depth() != config.depth {
        return Err(Error::config("warehouse does not match configured dimensions"));
    }
    let layout = &wh.layout;
    let placement = generate_product_placement(&mut rs, layout, &config.catalog);
    let runs = generate_pickruns(
        &mut rs,
        layout,
        &placement.products,
        &config.catalog,
        config.total_picks,
        (config.pickrun_min, config.pickrun_max),
    );
    let mut queue: VecDeque<Pickrun> = runs.into();
    let base = layout.base_node();
    let mut starts = Vec::with_capacity(config.n_amrs);
    let mut initial = Vec::with_capacity(config.n_amrs);
    for _ in 0..config.n_amrs {
        match queue.pop_front() {
            Some(run) => {
                let mut lines = run.lines;
                let mut start = base;
                if config.diverse_start && lines.len() > 1 {
                    let cut = rs.index(lines.len());
                    if cut > 0 {
                        start = lines[cut - 1].node;
                        lines.drain(..cut);
                    }
                }
                starts.push(start);
                initial.push(Some(lines));
            }
            None => {
                starts.push(base);
                initial.push(None);
            }
        }
    }
    let mut state = SimState::empty(wh.clone(), config.noise.clone(), rs, queue, config.event_log);
    state.unit_weight = placement.products.iter().map(|p| p.weight).collect();
    for (r, (start, run)) in starts.into_iter().zip(initial).enumerate() {
        state.add_amr(r, start, run);
    }

    // Pickers start at distinct, uniformly drawn AMR destinations, already
    // committed to them; leftovers (tiny fleets) request at t = 0.
    let mut dests = state.amr_destinations(false);
    for i in 0..dests.len() {
        let j = i + state.rs.index(dests.len() - i);
        dests.swap(i, j);
    }
    for k in 0..config.n_pickers {
        if let Some(&v) = dests.get(k) {
            state.add_picker(k, v);
            state.claims[v.index()] = Some(k);
            let p = &mut state.pickers[k];
            p.dest = Some(v);
            p.status = PickerStatus::WaitingForAmr;
        } else {
            let v = NodeId::from(state.rs.index(layout.n_nodes()));
            state.add_picker(k, v);
            state.requests.push_back(k);
        }
    }
    state.start_amrs();
    Ok(state)
}

impl SimState {
    fn empty(
        wh: Arc<Warehouse>,
        noise: NoiseConfig,
        rs: RandomStream,
        pending_runs: VecDeque<Pickrun>,
        event_log: bool,
    ) -> Self {
        let n = wh.layout.n_nodes();
        let items_remaining = pending_runs.iter().map(Pickrun::n_items).sum();
        let total_mass = pending_runs.iter().flat_map(|r| &r.lines).map(|l| l.mass).sum();
        SimState {
            wh,
            noise,
            rs,
            clock: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            pickers: Vec::new(),
            amrs: Vec::new(),
            pending_runs,
            claims: vec![None; n],
            requests: VecDeque::new(),
            starved: Vec::new(),
            current_request: None,
            items_remaining,
            total_mass,
            done: false,
            completion_time: 0.0,
            trace: Vec::new(),
            log: event_log.then(EventLog::default),
            unit_weight: vec![0.0; n],
        }
    }

    /// Episode with explicit pickruns per AMR and picker start nodes; all
    /// pickers request a destination at t = 0 in id order.
    pub fn from_parts(
        wh: Arc<Warehouse>,
        noise: NoiseConfig,
        rs: RandomStream,
        amr_runs: Vec<(NodeId, Vec<Line>)>,
        picker_starts: &[NodeId],
        event_log: bool,
    ) -> Result<Self> {
        noise.validate()?;
        if amr_runs.is_empty() || picker_starts.is_empty() {
            return Err(Error::config("need at least one AMR and one picker"));
        }
        let n = wh.layout.n_nodes();
        let in_layout = |v: &NodeId| v.index() < n;
        if !picker_starts.iter().all(in_layout)
            || !amr_runs
                .iter()
                .all(|(s, l)| in_layout(s) && l.iter().all(|x| in_layout(&x.node)))
        {
            return Err(Error::config("node outside layout"));
        }
        let mut state = SimState::empty(wh, noise, rs, VecDeque::new(), event_log);
        for (_, lines) in &amr_runs {
            for l in lines {
                state.unit_weight[l.node.index()] = l.mass / l.n_items.max(1) as f64;
            }
        }
        for (r, (start, lines)) in amr_runs.into_iter().enumerate() {
            state.add_amr(r, start, (!lines.is_empty()).then_some(lines));
        }
        for (k, &v) in picker_starts.iter().enumerate() {
            state.add_picker(k, v);
            state.requests.push_back(k);
        }
        state.start_amrs();
        Ok(state)
    }

    fn add_amr(&mut self, id: usize, node: NodeId, run: Option<Vec<Line>>) {
        if let Some(lines) = &run {
            self.items_remaining += lines.iter().map(|l| l.n_items as u64).sum::<u64>();
            self.total_mass += lines.iter().map(|l| l.mass).sum::<f64>();
        }
        self.amrs.push(Amr {
            id,
            node,
            status: AmrStatus::Parked,
            speed: 0.0,
            run,
            cursor: 0,
            path: vec![node],
            path_pos: 0,
            waiting_since: 0.0,
        });
    }

    fn add_picker(&mut self, id: usize, node: NodeId) {
        self.pickers.push(Picker {
            id,
            node,
            dest: None,
            status: PickerStatus::AwaitingAssignment,
            speed: 0.0,
            workload: 0.0,
            items_picked: 0,
            path: vec![node],
            path_pos: 0,
            ready_at: 0.0,
            serving: None,
            pick_started: 0.0,
            dispatch: 0.0,
            dispatch_from: node,
            restricted: false,
        });
    }

    fn start_amrs(&mut self) {
        for r in 0..self.amrs.len() {
            if let Some(dest) = self.amrs[r].current_dest() {
                let from = self.amrs[r].node;
                let path = self.wh.shortest_path(Mode::Amr, from, dest);
                self.begin_amr_trip(r, path, AmrStatus::Moving);
            }
        }
        if self.items_remaining == 0 {
            self.done = true;
        }
    }

    // ---- accessors -------------------------------------------------------

    pub fn warehouse(&self) -> &Arc<Warehouse> {
        &self.wh
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn pickers(&self) -> &[Picker] {
        &self.pickers
    }

    pub fn amrs(&self) -> &[Amr] {
        &self.amrs
    }

    pub fn pending_runs(&self) -> &VecDeque<Pickrun> {
        &self.pending_runs
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn items_remaining(&self) -> u64 {
        self.items_remaining
    }

    /// Mass of every line in the episode, picked or not.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn trace(&self) -> &[ServedLine] {
        &self.trace
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    pub fn current_request(&self) -> Option<usize> {
        self.current_request
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn workloads(&self) -> Vec<f64> {
        self.pickers.iter().map(|p| p.workload).collect()
    }

    pub fn unit_weight(&self, v: NodeId) -> f64 {
        self.unit_weight[v.index()]
    }

    pub fn claimed_by(&self, v: NodeId) -> Option<usize> {
        self.claims[v.index()]
    }

    pub fn rng(&mut self) -> &mut RandomStream {
        &mut self.rs
    }

    /// Distinct current (and, unless `current_only`, next) AMR destinations, sorted.
    pub fn amr_destinations(&self, current_only: bool) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(2 * self.amrs.len());
        for a in &self.amrs {
            out.extend(a.current_dest());
            if !current_only {
                out.extend(a.next_dest());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Nodes `picker` may be sent to: AMR current/next destinations not
    /// claimed by another picker.
    pub fn valid_targets(&self, picker: usize) -> Vec<NodeId> {
        self.amr_destinations(self.pickers[picker].restricted)
            .into_iter()
            .filter(|v| self.claims[v.index()].is_none_or(|c| c == picker))
            .collect()
    }

    pub fn action_mask(&self, picker: usize) -> Vec<bool> {
        let mut mask = vec![false; self.wh.layout.n_nodes()];
        for v in self.valid_targets(picker) {
            mask[v.index()] = true;
        }
        mask
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        let workloads = self.workloads();
        EpisodeMetrics {
            completion_time: if self.done { self.completion_time } else { self.clock },
            workload_sd: population_sd(&workloads),
            workloads,
        }
    }

    // ---- scheduling ------------------------------------------------------

    fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time >= self.clock);
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn log(&mut self, entity: String, event: &'static str, node: NodeId) {
        if let Some(log) = &mut self.log {
            log.rows.push(LogRow {
                time: self.clock,
                entity,
                event,
                node,
            });
        }
    }

    fn schedule_picker_leg(&mut self, k: usize, depart: f64) {
        let p = &self.pickers[k];
        let time = match p.path.get(p.path_pos + 1) {
            Some(&next) => depart + self.wh.picker_dist.get(p.path[p.path_pos], next) / p.speed,
            None => depart,
        };
        self.push(time, EventKind::PickerStep(k));
    }

    fn schedule_amr_leg(&mut self, r: usize, depart: f64) {
        let a = &self.amrs[r];
        let time = match a.path.get(a.path_pos + 1) {
            Some(&next) => depart + self.wh.amr_dist.get(a.path[a.path_pos], next) / a.speed,
            None => depart,
        };
        self.push(time, EventKind::AmrStep(r));
    }

    fn begin_amr_trip(&mut self, r: usize, path: Vec<NodeId>, status: AmrStatus) {
        let speed = self.noise.sample_amr_speed(&mut self.rs);
        let a = &mut self.amrs[r];
        a.speed = speed;
        a.path = path;
        a.path_pos = 0;
        a.status = status;
        let node = a.node;
        self.log(format!("amr:{r}"), "depart", node);
        self.schedule_amr_leg(r, self.clock);
    }

    // ---- policy interface ------------------------------------------------

    /// Runs events until a picker needs a destination or all items are picked.
    pub fn advance_to_next_request(&mut self) -> Result<Advance> {
        if let Some(k) = self.current_request {
            return Ok(Advance::Decision { picker: k });
        }
        loop {
            if self.done {
                return Ok(Advance::Done);
            }
            if let Some(k) = self.requests.pop_front() {
                if self.valid_targets(k).is_empty() {
                    self.starved.push(k);
                    self.log(format!("picker:{k}"), "starved", self.pickers[k].node);
                    continue;
                }
                self.current_request = Some(k);
                return Ok(Advance::Decision { picker: k });
            }
            if let Some(i) = (0..self.starved.len()).find(|&i| !self.valid_targets(self.starved[i]).is_empty()) {
                let k = self.starved.remove(i);
                self.requests.push_back(k);
                continue;
            }
            match self.queue.pop() {
                Some(ev) => {
                    if ev.time < self.clock {
                        return Err(Error::Integrity {
                            time: self.clock,
                            message: format!("event at {} scheduled in the past", ev.time),
                        });
                    }
                    self.clock = ev.time;
                    match ev.kind {
                        EventKind::PickerStep(k) => self.on_picker_step(k),
                        EventKind::PickDone(k) => self.on_pick_done(k)?,
                        EventKind::AmrStep(r) => self.on_amr_step(r),
                    }
                }
                None => self.break_stall()?,
            }
        }
    }

    /// Nobody can make progress: some picker waits for an AMR that itself
    /// waits for a picker elsewhere. Re-poll one waiting picker, offering
    /// only AMR current destinations.
    fn break_stall(&mut self) -> Result<()> {
        let k = self
            .pickers
            .iter()
            .position(|p| p.status == PickerStatus::WaitingForAmr);
        let Some(k) = k else {
            return Err(Error::Integrity {
                time: self.clock,
                message: format!(
                    "deadlock: event queue empty with {} items unpicked",
                    self.items_remaining
                ),
            });
        };
        let p = &mut self.pickers[k];
        let v = p.dest.take().expect("waiting picker has a destination");
        p.status = PickerStatus::AwaitingAssignment;
        p.restricted = true;
        p.ready_at = self.clock;
        self.claims[v.index()] = None;
        log::debug!("stall at t={:.2}: re-polling picker {k}", self.clock);
        self.log(format!("picker:{k}"), "repoll", v);
        self.requests.push_front(k);
        if self.valid_targets(k).is_empty() {
            return Err(Error::Integrity {
                time: self.clock,
                message: "deadlock: no AMR is waiting at an unclaimed location".into(),
            });
        }
        Ok(())
    }

    /// Sends the requesting picker to `target`.
    pub fn apply_allocation(&mut self, picker: usize, target: NodeId) -> Result<()> {
        if self.current_request != Some(picker) {
            return Err(Error::InvalidAction {
                picker,
                node: target,
                reason: "picker is not requesting an allocation",
            });
        }
        if target.index() >= self.wh.layout.n_nodes() {
            return Err(Error::InvalidAction {
                picker,
                node: target,
                reason: "node outside the layout",
            });
        }
        if let Some(other) = self.claims[target.index()] {
            if other != picker {
                return Err(Error::InvalidAction {
                    picker,
                    node: target,
                    reason: "another picker is already going there",
                });
            }
        }
        if !self.valid_targets(picker).contains(&target) {
            return Err(Error::InvalidAction {
                picker,
                node: target,
                reason: "not a current or next AMR destination",
            });
        }
        self.current_request = None;
        self.claims[target.index()] = Some(picker);
        let speed = self.noise.sample_picker_speed(&mut self.rs);
        let path = self.wh.shortest_path(Mode::Picker, self.pickers[picker].node, target);
        let p = &mut self.pickers[picker];
        let depart = p.ready_at.max(self.clock);
        p.dest = Some(target);
        p.status = PickerStatus::Moving;
        p.restricted = false;
        p.speed = speed;
        p.path = path;
        p.path_pos = 0;
        p.dispatch = depart;
        p.dispatch_from = p.node;
        self.log(format!("picker:{picker}"), "assigned", target);
        self.schedule_picker_leg(picker, depart);
        Ok(())
    }

    // ---- event handlers --------------------------------------------------

    fn on_picker_step(&mut self, k: usize) {
        let p = &mut self.pickers[k];
        if p.path_pos + 1 < p.path.len() {
            p.path_pos += 1;
            p.node = p.path[p.path_pos];
        }
        if p.path_pos + 1 < p.path.len() {
            self.schedule_picker_leg(k, self.clock);
            return;
        }
        let node = p.node;
        debug_assert_eq!(Some(node), p.dest);
        self.log(format!("picker:{k}"), "arrive", node);
        match self.waiting_amr_at(node) {
            Some(r) => self.start_pick(k, r, self.clock),
            None => self.pickers[k].status = PickerStatus::WaitingForAmr,
        }
    }

    fn on_amr_step(&mut self, r: usize) {
        let a = &mut self.amrs[r];
        let prev = a.node;
        if a.path_pos + 1 < a.path.len() {
            a.path_pos += 1;
            a.node = a.path[a.path_pos];
        }
        let node = a.node;
        if a.path_pos + 1 < a.path.len() {
            let mut depart = self.clock;
            if self.noise.overtake_enabled && self.wh.layout.is_in_aisle_move(prev, node) {
                let blockers = self
                    .amrs
                    .iter()
                    .filter(|o| o.id != r && o.node == node && o.is_stationary())
                    .count();
                for _ in 0..blockers {
                    depart += self.noise.sample_overtake_delay(&mut self.rs);
                }
                if blockers > 0 {
                    self.log(format!("amr:{r}"), "overtake", node);
                }
            }
            self.schedule_amr_leg(r, depart);
            return;
        }
        self.log(format!("amr:{r}"), "arrive", node);
        let a = &mut self.amrs[r];
        if a.status == AmrStatus::ToBase {
            a.status = AmrStatus::Parked;
            return;
        }
        debug_assert_eq!(a.current_dest(), Some(node));
        a.status = AmrStatus::WaitingForPicker;
        a.waiting_since = self.clock;
        let picker = self
            .pickers
            .iter()
            .position(|p| p.status == PickerStatus::WaitingForAmr && p.dest == Some(node) && p.node == node);
        if let Some(k) = picker {
            self.start_pick(k, r, self.clock);
        }
    }

    /// Earliest-arrived AMR waiting at `node` for a pick there.
    fn waiting_amr_at(&self, node: NodeId) -> Option<usize> {
        self.amrs
            .iter()
            .filter(|a| a.status == AmrStatus::WaitingForPicker && a.node == node)
            .min_by(|a, b| a.waiting_since.total_cmp(&b.waiting_since).then(a.id.cmp(&b.id)))
            .map(|a| a.id)
    }

    fn start_pick(&mut self, k: usize, r: usize, start: f64) {
        let expected = self.amrs[r].current_line().expect("AMR has a line").expected_time;
        let duration = self.noise.sample_pick_time(&mut self.rs, expected);
        self.amrs[r].status = AmrStatus::Loading;
        let p = &mut self.pickers[k];
        p.status = PickerStatus::Picking;
        p.serving = Some(r);
        p.pick_started = start;
        let node = p.node;
        self.log(format!("picker:{k}"), "pick_start", node);
        self.push(start + duration, EventKind::PickDone(k));
    }

    fn on_pick_done(&mut self, k: usize) -> Result<()> {
        let r = self.pickers[k].serving.take().expect("picking picker serves an AMR");
        let line = self.amrs[r].current_line().expect("loading AMR has a line").clone();
        let node = self.pickers[k].node;
        if line.node != node || self.amrs[r].node != node {
            return Err(Error::Integrity {
                time: self.clock,
                message: format!("picker {k} picked line {} away from its location", line.id),
            });
        }
        let p = &mut self.pickers[k];
        p.workload += line.mass;
        p.items_picked += line.n_items as u64;
        self.trace.push(ServedLine {
            line: line.id,
            node,
            picker: k,
            amr: r,
            start: p.pick_started,
            finish: self.clock,
            dispatch: p.dispatch,
            dispatch_from: p.dispatch_from,
            mass: line.mass,
        });
        self.log(format!("picker:{k}"), "pick_done", node);
        self.items_remaining -= line.n_items as u64;
        if self.items_remaining == 0 {
            self.done = true;
            self.completion_time = self.clock;
            self.log("system".into(), "done", node);
            return Ok(());
        }

        self.advance_amr(r);

        let ready = match self.noise.sample_disruption(&mut self.rs) {
            Some(d) => {
                self.log(format!("picker:{k}"), "disrupted", node);
                self.clock + d
            }
            None => self.clock,
        };
        let p = &mut self.pickers[k];
        p.ready_at = ready;
        if let Some(r2) = self.waiting_amr_at(node) {
            // Another AMR is already here: serve it without a new request.
            let p = &mut self.pickers[k];
            p.dispatch = ready;
            p.dispatch_from = node;
            self.start_pick(k, r2, ready);
        } else {
            let p = &mut self.pickers[k];
            p.status = PickerStatus::AwaitingAssignment;
            if let Some(v) = p.dest.take() {
                self.claims[v.index()] = None;
            }
            self.requests.push_back(k);
        }
        Ok(())
    }

    fn advance_amr(&mut self, r: usize) {
        let a = &mut self.amrs[r];
        a.cursor += 1;
        let here = a.node;
        if let Some(next) = a.current_dest() {
            if next == here {
                a.status = AmrStatus::WaitingForPicker;
                a.waiting_since = self.clock;
            } else {
                let path = self.wh.shortest_path(Mode::Amr, here, next);
                self.begin_amr_trip(r, path, AmrStatus::Moving);
            }
            return;
        }
        // Pickrun finished: back to base, then on to the next queued pickrun.
        let base = self.wh.layout.base_node();
        let mut path = self.wh.shortest_path(Mode::Amr, here, base);
        match self.pending_runs.pop_front() {
            Some(run) => {
                let first = run.lines[0].node;
                path.extend(self.wh.shortest_path(Mode::Amr, base, first).into_iter().skip(1));
                let a = &mut self.amrs[r];
                a.run = Some(run.lines);
                a.cursor = 0;
                self.begin_amr_trip(r, path, AmrStatus::Moving);
            }
            None => {
                let a = &mut self.amrs[r];
                a.run = None;
                a.cursor = 0;
                self.begin_amr_trip(r, path, AmrStatus::ToBase);
            }
        }
    }
}
