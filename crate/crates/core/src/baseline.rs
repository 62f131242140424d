//! Non-learning benchmark policies: nearest location, the walking rule used
//! in practice ("VI"), and uniform random.

use crate::env::{Env, Policy};
use crate::error::{Error, Result};
use crate::layout::{Mode, NodeId, WarehouseLayout};
use crate::sim::{AmrStatus, SimState};
use crate::stochastic::RandomStream;

/// Depth positions scanned ahead of and behind the picker.
pub const VI_SCAN_WINDOW: usize = 10;

fn valid_nodes(mask: &[bool]) -> impl Iterator<Item = NodeId> + '_ {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| NodeId::from(i))
}

fn empty_mask(picker: usize) -> Error {
    Error::InvalidAction {
        picker,
        node: NodeId(0),
        reason: "empty action mask",
    }
}

/// Nearest valid node by walking distance among the locations AMRs are
/// currently heading to; an AMR's following stop is only considered when no
/// current destination is valid. Ties go to the lowest id.
pub fn greedy_choice(state: &SimState, picker: usize, mask: &[bool]) -> Option<NodeId> {
    let from = state.pickers()[picker].node;
    let dist = state.warehouse().dist(Mode::Picker);
    let nearest = |it: &mut dyn Iterator<Item = NodeId>| {
        it.min_by(|&a, &b| dist.get(from, a).total_cmp(&dist.get(from, b)).then(a.cmp(&b)))
    };
    let current = state.amr_destinations(true);
    nearest(
        &mut current
            .into_iter()
            .filter(|v| mask.get(v.index()).copied().unwrap_or(false)),
    )
    .or_else(|| nearest(&mut valid_nodes(mask)))
}

#[derive(Clone, Debug, Default)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn act(&mut self, env: &Env, picker: usize, mask: &[bool]) -> Result<NodeId> {
        greedy_choice(env.state(), picker, mask).ok_or_else(|| empty_mask(picker))
    }
}

#[derive(Clone, Debug)]
pub struct RandomPolicy {
    seed: u64,
    rs: RandomStream,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            seed,
            rs: RandomStream::new(seed),
        }
    }

    pub fn choose(&mut self, mask: &[bool]) -> Option<NodeId> {
        let valid: Vec<NodeId> = valid_nodes(mask).collect();
        (!valid.is_empty()).then(|| valid[self.rs.index(valid.len())])
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, episode_seed: u64) {
        self.rs = RandomStream::derived(self.seed, episode_seed);
    }

    fn act(&mut self, _env: &Env, picker: usize, mask: &[bool]) -> Result<NodeId> {
        self.choose(mask).ok_or_else(|| empty_mask(picker))
    }
}

/// Per-picker memory of the walking rule: the aisle each picker last
/// committed to after running out of work in its own aisle.
#[derive(Clone, Debug, Default)]
pub struct ViWalkerState {
    pub committed_aisle: Vec<Option<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct ViPolicy {
    pub walker: ViWalkerState,
    /// Number of decisions where the rule's pick was masked out and greedy was used.
    pub fallbacks: usize,
}

/// Aisle cost of the walking rule: aisles to cross minus waiting AMRs there.
pub fn vi_aisle_cost(from_aisle: usize, to_aisle: usize, waiting: usize) -> i64 {
    from_aisle.abs_diff(to_aisle) as i64 - waiting as i64
}

fn waiting_at(state: &SimState, v: NodeId) -> bool {
    state
        .amrs()
        .iter()
        .any(|a| a.node == v && a.status == AmrStatus::WaitingForPicker && a.current_dest() == Some(v))
}

/// Nodes of `aisle` at a position along the AMR direction.
fn nodes_at(layout: &WarehouseLayout, aisle: usize, pos: usize) -> [NodeId; 2] {
    let d = match layout.amr_direction(aisle) {
        crate::layout::Direction::Up => pos,
        crate::layout::Direction::Down => layout.depth() - 1 - pos,
    };
    [
        layout.node(aisle, d, crate::layout::Side::Left),
        layout.node(aisle, d, crate::layout::Side::Right),
    ]
}

/// Scan ±window positions around `pos` in `aisle` for waiting AMRs at valid
/// nodes. Nearest wins; at equal offset the one ahead (in AMR direction) wins.
fn scan(state: &SimState, mask: &[bool], aisle: usize, pos: usize) -> Option<NodeId> {
    let layout = &state.warehouse().layout;
    let depth = layout.depth();
    for off in 0..=VI_SCAN_WINDOW {
        let mut positions = vec![];
        if pos + off < depth {
            positions.push(pos + off);
        }
        if off > 0 && off <= pos {
            positions.push(pos - off);
        }
        for p in positions {
            for v in nodes_at(layout, aisle, p) {
                if mask[v.index()] && waiting_at(state, v) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Work the rule finds in `aisle` starting at position `pos`: scan, then step
/// along the AMR direction rescanning, and finally the first valid node met
/// while walking to the aisle end.
fn work_in_aisle(state: &SimState, mask: &[bool], aisle: usize, pos: usize) -> Option<NodeId> {
    let layout = &state.warehouse().layout;
    for p in pos..layout.depth() {
        if let Some(v) = scan(state, mask, aisle, p) {
            return Some(v);
        }
    }
    (pos..layout.depth())
        .flat_map(|p| nodes_at(layout, aisle, p))
        .find(|v| mask[v.index()])
}

impl ViPolicy {
    pub fn choose(&mut self, state: &SimState, picker: usize, mask: &[bool]) -> Option<NodeId> {
        let layout = &state.warehouse().layout;
        if self.walker.committed_aisle.len() != state.pickers().len() {
            self.walker.committed_aisle = vec![None; state.pickers().len()];
        }
        let here = state.pickers()[picker].node;
        let aisle = layout.aisle_of(here);
        let pos = layout.position_along_direction(here);

        let mut choice = work_in_aisle(state, mask, aisle, pos);
        if choice.is_none() {
            // Aisle exhausted: move to the cheapest other aisle, entering at its AMR entry.
            let mut waiting = vec![0usize; layout.n_aisles()];
            for a in state.amrs() {
                if a.status == AmrStatus::WaitingForPicker {
                    waiting[layout.aisle_of(a.node)] += 1;
                }
            }
            let mut aisles: Vec<usize> = (0..layout.n_aisles()).filter(|&b| b != aisle).collect();
            aisles.sort_by_key(|&b| (vi_aisle_cost(aisle, b, waiting[b]), b));
            for b in aisles {
                if let Some(v) = work_in_aisle(state, mask, b, 0) {
                    self.walker.committed_aisle[picker] = Some(b);
                    choice = Some(v);
                    break;
                }
            }
        }
        match choice {
            Some(v) if mask[v.index()] => Some(v),
            _ => {
                self.fallbacks += 1;
                log::debug!("walking rule found nothing valid for picker {picker}; using nearest");
                greedy_choice(state, picker, mask)
            }
        }
    }
}

impl Policy for ViPolicy {
    fn name(&self) -> String {
        "vi".into()
    }

    fn reset(&mut self, _episode_seed: u64) {
        self.walker.committed_aisle.clear();
        self.fallbacks = 0;
    }

    fn act(&mut self, env: &Env, picker: usize, mask: &[bool]) -> Result<NodeId> {
        self.choose(env.state(), picker, mask).ok_or_else(|| empty_mask(picker))
    }
}

/// Baseline policy by name: "greedy", "vi" or "random".
pub fn baseline_by_name(name: &str, seed: u64) -> Result<Box<dyn Policy + Send>> {
    match name {
        "greedy" => Ok(Box::new(GreedyPolicy)),
        "vi" => Ok(Box::new(ViPolicy::default())),
        "random" => Ok(Box::new(RandomPolicy::new(seed))),
        other => Err(Error::config(format!("unknown policy '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, EnvConfig};
    use crate::layout::{Side, Warehouse};
    use crate::sim::{Advance, Line, SimConfig};
    use crate::stochastic::NoiseConfig;

    fn line(id: usize, node: NodeId) -> Line {
        Line {
            id,
            node,
            n_items: 1,
            mass: 1.0,
            expected_time: 7.5,
        }
    }

    fn state_with(wh: &std::sync::Arc<Warehouse>, runs: Vec<(NodeId, Vec<Line>)>, pickers: &[NodeId]) -> SimState {
        SimState::from_parts(
            wh.clone(),
            NoiseConfig::deterministic(1.25, 1.5),
            RandomStream::new(0),
            runs,
            pickers,
            false,
        )
        .unwrap()
    }

    #[test]
    fn greedy_picks_nearest_then_lowest_id() {
        let wh = Warehouse::new(3, 5).unwrap();
        let l = &wh.layout;
        let p = l.node(0, 0, Side::Left);
        let s = state_with(&wh, vec![(p, vec![line(0, p)])], &[p]);
        let mut mask = vec![false; l.n_nodes()];
        let near = l.node(0, 2, Side::Left); // 2.8 m
        let far = l.node(0, 4, Side::Left); // 5.6 m
        mask[near.index()] = true;
        mask[far.index()] = true;
        assert_eq!(greedy_choice(&s, 0, &mask), Some(near));
        // Both sides of the same position in the neighbouring aisle are equidistant.
        let mut tie = vec![false; l.n_nodes()];
        let a = l.node(1, 0, Side::Left);
        let b = l.node(1, 0, Side::Right);
        tie[a.index()] = true;
        tie[b.index()] = true;
        assert_eq!(greedy_choice(&s, 0, &tie), Some(a.min(b)));
        let mut one = vec![false; l.n_nodes()];
        one[far.index()] = true;
        assert_eq!(greedy_choice(&s, 0, &one), Some(far));
    }

    #[test]
    fn greedy_prefers_where_amrs_are_heading() {
        let wh = Warehouse::new(3, 5).unwrap();
        let l = &wh.layout;
        let base = l.node(0, 0, Side::Left);
        let picker = l.node(2, 2, Side::Left);
        let current = l.node(0, 4, Side::Left);
        let following = l.node(2, 3, Side::Left);
        let s = state_with(&wh, vec![(base, vec![line(0, current), line(1, following)])], &[picker]);
        let mask = s.action_mask(0);
        assert!(mask[current.index()] && mask[following.index()]);
        assert!(wh.picker_dist.get(picker, following) < wh.picker_dist.get(picker, current));
        assert_eq!(greedy_choice(&s, 0, &mask), Some(current));
        // With the current destination unavailable the following stop is used.
        let mut only_next = mask.clone();
        only_next[current.index()] = false;
        assert_eq!(greedy_choice(&s, 0, &only_next), Some(following));
    }

    #[test]
    fn greedy_is_invariant_to_mask_order() {
        // Brute-force minimum over random masks.
        let wh = Warehouse::new(4, 4).unwrap();
        let l = &wh.layout;
        let p = l.node(2, 1, Side::Right);
        let s = state_with(&wh, vec![(p, vec![line(0, p)])], &[p]);
        let mut rs = RandomStream::new(1);
        for _ in 0..50 {
            let mask: Vec<bool> = (0..l.n_nodes()).map(|_| rs.bernoulli(0.3)).collect();
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let g = greedy_choice(&s, 0, &mask).unwrap();
            let best = valid_nodes(&mask)
                .map(|v| wh.picker_dist.get(p, v))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(wh.picker_dist.get(p, g), best);
        }
    }

    #[test]
    fn random_is_uniform_over_valid() {
        let mut pol = RandomPolicy::new(5);
        let mut mask = vec![false; 10];
        for i in [1, 4, 6, 9] {
            mask[i] = true;
        }
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[pol.choose(&mask).unwrap().index()] += 1;
        }
        for i in 0..10 {
            if mask[i] {
                assert!((counts[i] as f64 / 10_000.0 - 0.25).abs() < 0.02);
            } else {
                assert_eq!(counts[i], 0);
            }
        }
        let mut single = vec![false; 3];
        single[2] = true;
        assert_eq!(pol.choose(&single), Some(NodeId(2)));
    }

    #[test]
    fn aisle_cost_formula() {
        assert_eq!(vi_aisle_cost(3, 5, 3), -1);
        assert_eq!(vi_aisle_cost(5, 3, 0), 2);
    }

    /// One picker serves the AMR next to it; by the time it requests again
    /// the other AMRs have arrived and wait.
    fn after_first_pick(wh: &std::sync::Arc<Warehouse>, start: NodeId, first: NodeId, others: &[NodeId]) -> SimState {
        let mut runs = vec![(first, vec![line(0, first)])];
        runs.extend(others.iter().enumerate().map(|(i, &v)| (v, vec![line(i + 1, v)])));
        let mut s = state_with(wh, runs, &[start]);
        let Advance::Decision { picker } = s.advance_to_next_request().unwrap() else {
            panic!()
        };
        s.apply_allocation(picker, first).unwrap();
        let Advance::Decision { picker } = s.advance_to_next_request().unwrap() else {
            panic!()
        };
        assert_eq!((picker, s.pickers()[0].node), (0, first));
        s
    }

    #[test]
    fn vi_breaks_window_ties_towards_amr_direction() {
        let wh = Warehouse::new(2, 20).unwrap();
        let l = &wh.layout;
        // Aisle 0 runs up; the picker ends at depth 8 with AMRs waiting 4 ahead and 4 behind.
        let x = l.node(0, 8, Side::Right);
        let ahead = l.node(0, 12, Side::Left);
        let behind = l.node(0, 4, Side::Right);
        let s = after_first_pick(&wh, l.node(0, 8, Side::Left), x, &[ahead, behind]);
        let mask = s.action_mask(0);
        assert!(waiting_at(&s, ahead) && waiting_at(&s, behind));
        // Greedy prefers `behind` (no side change); the walking rule goes ahead.
        assert_eq!(greedy_choice(&s, 0, &mask), Some(behind));
        assert_eq!(ViPolicy::default().choose(&s, 0, &mask), Some(ahead));
    }

    #[test]
    fn vi_takes_nearest_waiting_amr_in_window() {
        let wh = Warehouse::new(2, 20).unwrap();
        let l = &wh.layout;
        let x = l.node(0, 8, Side::Right);
        let ahead = l.node(0, 14, Side::Right);
        let behind = l.node(0, 5, Side::Left);
        let s = after_first_pick(&wh, l.node(0, 8, Side::Left), x, &[ahead, behind]);
        let mask = s.action_mask(0);
        assert_eq!(ViPolicy::default().choose(&s, 0, &mask), Some(behind));
    }

    #[test]
    fn vi_aisle_choice_counts_waiting_amrs() {
        let wh = Warehouse::new(4, 3).unwrap();
        let l = &wh.layout;
        // Own aisle 0 is empty after the first pick. Aisle 1 is nearer, but
        // the four AMRs waiting in aisle 3 make it cheaper.
        let x = l.node(0, 2, Side::Right);
        let a1 = l.node(1, 1, Side::Left);
        let a3 = [
            l.node(3, 0, Side::Left),
            l.node(3, 1, Side::Left),
            l.node(3, 2, Side::Left),
            l.node(3, 2, Side::Right),
        ];
        let mut others = vec![a1];
        others.extend(a3);
        let s = after_first_pick(&wh, l.node(0, 2, Side::Left), x, &others);
        assert_eq!(vi_aisle_cost(0, 1, 1), 0);
        assert_eq!(vi_aisle_cost(0, 3, 4), -1);
        let mask = s.action_mask(0);
        let mut vi = ViPolicy::default();
        let v = vi.choose(&s, 0, &mask).unwrap();
        // Aisle 3 runs down: entry is depth 2, where the left node has the lower id.
        assert_eq!(v, l.node(3, 2, Side::Left));
        assert_eq!(vi.walker.committed_aisle[0], Some(3));
        assert_eq!(vi.fallbacks, 0);
    }

    #[test]
    fn baselines_always_return_valid_nodes() {
        let cfg = EnvConfig {
            sim: SimConfig {
                n_aisles: 4,
                depth: 4,
                n_pickers: 3,
                n_amrs: 6,
                total_picks: 300,
                pickrun_min: 9,
                pickrun_max: 14,
                ..SimConfig::default()
            },
            ..EnvConfig::default()
        };
        let mut env = Env::new(cfg).unwrap();
        for name in ["greedy", "vi", "random"] {
            let mut p = baseline_by_name(name, 3).unwrap();
            for seed in 0..10 {
                // run_episode rejects any masked-out action.
                let out = run_episode(&mut env, p.as_mut(), seed).unwrap();
                assert!(out.decisions > 0);
            }
        }
        assert!(baseline_by_name("nope", 0).is_err());
    }
}
