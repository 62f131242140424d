use super::*;
use crate::layout::Side;
use crate::sim::Line;
use crate::stochastic::NoiseConfig;

struct FirstValid;

impl Policy for FirstValid {
    fn name(&self) -> String {
        "first".into()
    }
    fn act(&mut self, _env: &Env, _picker: usize, mask: &[bool]) -> Result<NodeId> {
        Ok(NodeId::from(mask.iter().position(|&m| m).unwrap()))
    }
}

struct Uniform(RandomStream);

impl Policy for Uniform {
    fn name(&self) -> String {
        "uniform".into()
    }
    fn act(&mut self, _env: &Env, _picker: usize, mask: &[bool]) -> Result<NodeId> {
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        Ok(NodeId::from(valid[self.0.index(valid.len())]))
    }
}

fn small_env() -> Env {
    Env::new(EnvConfig {
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
    })
    .unwrap()
}

fn line(id: usize, node: NodeId) -> Line {
    Line {
        id,
        node,
        n_items: 1,
        mass: 1.0,
        expected_time: 7.5,
    }
}

#[test]
fn manifest_has_35_unique_features() {
    let m = feature_manifest();
    assert_eq!(m.len(), 35);
    assert_eq!(m.iter().filter(|f| f.block == "efficiency").count(), 23);
    let mut names: Vec<_> = m.iter().map(|f| f.name.clone()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 35);
    let h = feature_manifest_hash();
    assert_eq!(h.len(), 64);
    assert_eq!(h, feature_manifest_hash());
}

#[test]
fn features_finite_and_well_formed_over_many_decisions() {
    let mut env = small_env();
    let mut policy = Uniform(RandomStream::new(3));
    let mut checked = 0;
    let mut seed = 0;
    while checked < 1000 {
        env.reset(seed).unwrap();
        while let Some(k) = env.requester() {
            let f = env.features();
            assert_eq!(f.eff.len(), env.n_nodes() * N_EFF);
            assert_eq!(f.fair.len(), env.n_nodes() * N_FAIR);
            assert!(f.eff.iter().chain(&f.fair).all(|x| x.is_finite()));
            for v in 0..env.n_nodes() {
                let e = f.eff_row(v);
                // Genuine distances are never negative; only sentinel slots may be -10.
                for (j, &x) in e.iter().enumerate() {
                    if [4, 5, 6, 10].contains(&j) {
                        assert!(x == SENTINEL || x >= 0.0);
                    } else {
                        assert!(x >= 0.0, "feature {j} = {x}");
                    }
                }
                // Distributional block identical across nodes.
                assert_eq!(f.fair_row(v)[7..], f.fair_row(0)[7..]);
            }
            let mask = env.mask();
            let a = policy.act(&env, k, &mask).unwrap();
            env.step(a).unwrap();
            checked += 1;
        }
        seed += 1;
    }
}

#[test]
fn equal_workloads_centre_to_zero() {
    let mut env = small_env();
    let wh = env.warehouse().clone();
    let l = &wh.layout;
    let x = l.node(1, 1, Side::Left);
    let s = SimState::from_parts(
        wh.clone(),
        NoiseConfig::deterministic(1.25, 1.5),
        RandomStream::new(0),
        vec![(l.base_node(), vec![line(0, x)])],
        &[l.base_node(), x],
        false,
    )
    .unwrap();
    env.reset_with(s).unwrap();
    let f = env.features();
    for v in 0..env.n_nodes() {
        let r = f.fair_row(v);
        for j in [0, 1, 5, 6, 7, 8, 9, 10, 11] {
            assert_eq!(r[j], 0.0);
        }
    }
}

#[test]
fn amr_going_counts_and_sentinels() {
    let wh = Warehouse::new(2, 4).unwrap();
    let l = &wh.layout;
    let x = l.node(1, 2, Side::Right);
    let y = l.node(1, 0, Side::Left);
    let s = SimState::from_parts(
        wh.clone(),
        NoiseConfig::deterministic(1.25, 1.5),
        RandomStream::new(0),
        vec![(l.base_node(), vec![line(0, x), line(1, y)])],
        &[l.base_node()],
        false,
    )
    .unwrap();
    let mut env = Env::with_warehouse(EnvConfig::default(), wh.clone());
    env.reset_with(s).unwrap();
    let f = env.features();
    // Direct inspection: the only AMR is moving from the base towards x.
    let trip = wh.amr_dist.get(l.base_node(), x);
    for v in l.nodes() {
        let e = f.eff_row(v.index());
        if v == x {
            assert_eq!(e[3], 1.0);
            assert!((e[4] - trip).abs() < 1e-9);
            assert_eq!(e[5], SENTINEL);
            assert!((e[16] - wh.picker_dist.get(x, y)).abs() < 1e-12);
        } else {
            assert_eq!(e[3], 0.0);
            assert_eq!(e[4], SENTINEL);
        }
        if v == y {
            let eta = trip / 1.5 + 7.5 + wh.amr_dist.get(x, y) / 1.5;
            assert!((e[5] - eta).abs() < 1e-9);
        }
        assert_eq!(e[0], (v == l.base_node()) as u8 as f64);
        assert_eq!(e[7], if l.aisle_of(v) == 1 { 1.0 } else { 0.0 });
    }
}

fn distinct_targets_state(n_amrs: usize, n_pickers: usize) -> (Arc<Warehouse>, SimState) {
    let wh = Warehouse::new(10, 10).unwrap();
    let runs = (0..n_amrs)
        .map(|r| {
            let a = NodeId::from(2 * r + 100);
            let b = NodeId::from(2 * r + 101);
            (wh.layout.base_node(), vec![line(2 * r, a), line(2 * r + 1, b)])
        })
        .collect();
    let starts = vec![wh.layout.base_node(); n_pickers];
    let s = SimState::from_parts(
        wh.clone(),
        NoiseConfig::deterministic(1.25, 1.5),
        RandomStream::new(0),
        runs,
        &starts,
        false,
    )
    .unwrap();
    (wh, s)
}

#[test]
fn mask_popcount_reaches_the_bound() {
    let (wh, s) = distinct_targets_state(25, 10);
    let mut env = Env::with_warehouse(EnvConfig::default(), wh);
    env.reset_with(s).unwrap();
    for _ in 0..9 {
        let mask = env.mask();
        let a = (0..mask.len()).find(|&i| mask[i]).unwrap();
        env.step(NodeId::from(a)).unwrap();
    }
    let pop = env.mask().iter().filter(|&&m| m).count();
    assert_eq!(pop, 2 * 25 - 9);
}

#[test]
fn shared_destination_counts_once() {
    let wh = Warehouse::new(2, 3).unwrap();
    let l = &wh.layout;
    let x = l.node(1, 1, Side::Left);
    let s = SimState::from_parts(
        wh.clone(),
        NoiseConfig::deterministic(1.25, 1.5),
        RandomStream::new(0),
        vec![(l.base_node(), vec![line(0, x)]), (l.base_node(), vec![line(1, x)])],
        &[l.base_node()],
        false,
    )
    .unwrap();
    assert_eq!(s.valid_targets(0), vec![x]);
}

#[test]
fn claimed_current_destinations_leave_next_ones() {
    // Both current destinations claimed: only next destinations remain.
    let (_, mut s) = distinct_targets_state(2, 3);
    let Advance::Decision { picker } = s.advance_to_next_request().unwrap() else {
        panic!()
    };
    let cur: Vec<NodeId> = s.amrs().iter().filter_map(|a| a.current_dest()).collect();
    s.apply_allocation(picker, cur[0]).unwrap();
    let Advance::Decision { picker } = s.advance_to_next_request().unwrap() else {
        panic!()
    };
    s.apply_allocation(picker, cur[1]).unwrap();
    let Advance::Decision { picker } = s.advance_to_next_request().unwrap() else {
        panic!()
    };
    let mask = s.action_mask(picker);
    let expected: Vec<bool> = (0..mask.len())
        .map(|i| {
            let v = NodeId::from(i);
            s.amrs().iter().any(|a| a.next_dest() == Some(v)) && !s.amrs().iter().any(|a| a.current_dest() == Some(v))
        })
        .collect();
    assert_eq!(mask, expected);
}

#[test]
fn rewards_telescope() {
    let mut env = small_env();
    for seed in 0..10 {
        let out = run_episode(&mut env, &mut Uniform(RandomStream::new(seed)), seed).unwrap();
        let c = out.metrics.completion_time;
        assert!((out.reward_sum.efficiency + c).abs() <= 1e-9 * c);
        assert!((out.reward_sum.fairness + out.metrics.workload_sd).abs() <= 1e-9 * c);
    }
}

#[test]
fn efficiency_rewards_are_non_positive() {
    let mut env = small_env();
    env.reset(4).unwrap();
    let mut p = FirstValid;
    while let Some(k) = env.requester() {
        let a = p.act(&env, k, &env.mask()).unwrap();
        assert!(env.step(a).unwrap().reward.efficiency <= 0.0);
    }
}

#[test]
fn single_picker_has_no_fairness_signal() {
    let mut cfg = small_env().config().clone();
    cfg.sim.n_pickers = 1;
    cfg.sim.total_picks = 100;
    let mut env = Env::new(cfg).unwrap();
    env.reset(2).unwrap();
    let mut p = FirstValid;
    while let Some(k) = env.requester() {
        let a = p.act(&env, k, &env.mask()).unwrap();
        assert_eq!(env.step(a).unwrap().reward.fairness, 0.0);
    }
}

#[test]
fn reward_normalisation() {
    let r = RewardVector {
        efficiency: -100.0,
        fairness: -5.0,
    };
    assert_eq!(normalize_rewards(r, [1.0, 1.0]), r);
    let n = normalize_rewards(r, [100.0, 5.0]);
    assert_eq!((n.efficiency, n.fairness), (-1.0, -1.0));
}

#[test]
fn reward_scales_do_not_change_metrics() {
    let mut a = small_env();
    let mut cfg = a.config().clone();
    cfg.reward_scales = [300.0, 7.0];
    let mut b = Env::new(cfg).unwrap();
    let ra = run_episode(&mut a, &mut Uniform(RandomStream::new(1)), 9).unwrap();
    let rb = run_episode(&mut b, &mut Uniform(RandomStream::new(1)), 9).unwrap();
    assert_eq!(ra.metrics, rb.metrics);
}

#[test]
fn efficiency_only_zeroes_fairness_block() {
    let mut cfg = small_env().config().clone();
    cfg.efficiency_only = true;
    let mut env = Env::new(cfg).unwrap();
    env.reset(0).unwrap();
    let f = env.features();
    assert!(f.fair.iter().all(|&x| x == 0.0));
}

#[test]
fn percentile_interpolates() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(percentile(&xs, 0.25), 2.0);
    assert_eq!(percentile(&[0.0, 10.0], 0.75), 7.5);
}
