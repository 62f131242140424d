use super::*;
use crate::baseline::{GreedyPolicy, RandomPolicy, ViPolicy};
use crate::layout::Side;

fn wh(a: usize, d: usize) -> Arc<Warehouse> {
    Warehouse::new(a, d).unwrap()
}

fn item(node: NodeId, workload: f64) -> OracleItem {
    OracleItem {
        node,
        workload,
        load_time: FIXED_LOAD_TIME,
    }
}

/// All permutations of `xs`.
fn permutations(xs: &[usize]) -> Vec<Vec<usize>> {
    if xs.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..xs.len() {
        let mut rest = xs.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Every assignment and every per-picker order, evaluated directly.
fn brute_force(inst: &DeterministicInstance) -> Vec<Schedule> {
    let prep = Prepared::new(inst).unwrap();
    let (n, k) = (inst.n_items(), inst.n_pickers());
    let mut out = Vec::new();
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        let mut groups = vec![Vec::new(); k];
        for i in 0..n {
            groups[c % k].push(i);
            c /= k;
        }
        let perms: Vec<Vec<Vec<usize>>> = groups.iter().map(|g| permutations(g)).collect();
        let mut idx = vec![0; k];
        loop {
            let orders: Vec<Vec<usize>> = (0..k).map(|p| perms[p][idx[p]].clone()).collect();
            if let Ok(s) = evaluate_schedule(&prep, &orders, None) {
                out.push(s);
            }
            let mut p = 0;
            while p < k {
                idx[p] += 1;
                if idx[p] < perms[p].len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
            if p == k {
                break;
            }
        }
    }
    out
}

fn random_instances(seed: u64, count: usize, spec: &InstanceSpec) -> Vec<DeterministicInstance> {
    let mut rs = RandomStream::new(seed);
    (0..count).map(|_| random_instance(&mut rs, spec).unwrap()).collect()
}

#[test]
fn single_item_hand_timeline() {
    let w = wh(2, 3);
    let l = &w.layout;
    let v = l.node(1, 1, Side::Left);
    let u = l.node(0, 2, Side::Right);
    let base = l.base_node();
    // Speeds chosen so the picker needs 4 s and the AMR 6 s.
    let inst = DeterministicInstance {
        n_aisles: 2,
        depth: 3,
        picker_speed: w.picker_dist.get(u, v) / 4.0,
        amr_speed: w.amr_dist.get(base, v) / 6.0,
        items: vec![item(v, 3.0)],
        amr_sequences: vec![vec![0]],
        amr_starts: vec![base],
        picker_starts: vec![u],
    };
    let prep = Prepared::new(&inst).unwrap();
    let s = evaluate_schedule(&prep, &[vec![0]], None).unwrap();
    assert!((s.picker_arrival[0] - 4.0).abs() < 1e-12);
    assert!((s.amr_arrival[0] - 6.0).abs() < 1e-12);
    assert!((s.completion_time - 13.5).abs() < 1e-12);
    assert_eq!(s.workloads, vec![3.0]);
    let sim = simulate_deterministic(&inst, &mut GreedyPolicy).unwrap();
    assert!((sim.completion_time - 13.5).abs() < 1e-9);
}

#[test]
fn two_items_same_node_load_back_to_back() {
    let w = wh(2, 3);
    let v = w.layout.node(0, 1, Side::Right);
    let base = w.layout.base_node();
    let inst = DeterministicInstance {
        n_aisles: 2,
        depth: 3,
        picker_speed: 1.25,
        amr_speed: 1.5,
        items: vec![item(v, 2.0), item(v, 4.5)],
        amr_sequences: vec![vec![0, 1]],
        amr_starts: vec![base],
        picker_starts: vec![v],
    };
    let arrival = w.amr_dist.get(base, v) / 1.5;
    let prep = Prepared::new(&inst).unwrap();
    let s = evaluate_schedule(&prep, &[vec![0, 1]], None).unwrap();
    assert!((s.completion_time - (arrival + 2.0 * FIXED_LOAD_TIME)).abs() < 1e-12);
    assert_eq!(s.workloads, vec![6.5]);
    assert_eq!(s.workload_sd, 0.0);
    // Picking the second item first contradicts the AMR order.
    assert!(matches!(
        evaluate_schedule(&prep, &[vec![1, 0]], None),
        Err(Error::Infeasible(_))
    ));
    assert!(evaluate_schedule(&prep, &[vec![0]], None).is_err());
    let sim = simulate_deterministic(&inst, &mut GreedyPolicy).unwrap();
    assert!((sim.completion_time - s.completion_time).abs() < 1e-9);
    assert_eq!(sim.orders, vec![vec![0, 1]]);
}

#[test]
fn workloads_sum_assigned_items() {
    let inst = &random_instances(
        3,
        1,
        &InstanceSpec {
            items: (6, 6),
            pickers: (3, 3),
            ..InstanceSpec::default()
        },
    )[0];
    let prep = Prepared::new(inst).unwrap();
    let orders = vec![vec![], vec![], (0..6).collect::<Vec<_>>()];
    if let Ok(s) = evaluate_schedule(&prep, &orders, None) {
        let total: f64 = inst.items.iter().map(|i| i.workload).sum();
        assert_eq!(s.workloads[0], 0.0);
        assert!((s.workloads[2] - total).abs() < 1e-12);
    }
    let sol = solve_exact(inst, Objective::Efficiency, true).unwrap();
    for (k, order) in sol.schedule.orders.iter().enumerate() {
        let w: f64 = order.iter().map(|&i| inst.items[i].workload).sum();
        assert_eq!(sol.schedule.workloads[k], w);
    }
}

#[test]
fn two_items_one_picker_matches_hand_enumeration() {
    let w = wh(2, 2);
    let l = &w.layout;
    let (a, b) = (l.node(0, 1, Side::Left), l.node(1, 0, Side::Right));
    let inst = DeterministicInstance {
        n_aisles: 2,
        depth: 2,
        picker_speed: 1.25,
        amr_speed: 1.5,
        items: vec![item(a, 1.0), item(b, 2.0)],
        amr_sequences: vec![vec![0], vec![1]],
        amr_starts: vec![l.base_node(); 2],
        picker_starts: vec![l.node(1, 1, Side::Left)],
    };
    let prep = Prepared::new(&inst).unwrap();
    let c01 = evaluate_schedule(&prep, &[vec![0, 1]], None).unwrap().completion_time;
    let c10 = evaluate_schedule(&prep, &[vec![1, 0]], None).unwrap().completion_time;
    let sol = solve_exact(&inst, Objective::Efficiency, true).unwrap();
    assert_eq!(sol.value, c01.min(c10));
    assert_eq!(solve_exact(&inst, Objective::Efficiency, false).unwrap().leaves, 2);
}

#[test]
fn search_matches_independent_brute_force() {
    let spec = InstanceSpec {
        items: (4, 6),
        pickers: (1, 3),
        amrs: (1, 3),
        ..InstanceSpec::default()
    };
    for (n, inst) in random_instances(17, 12, &spec).iter().enumerate() {
        let all = brute_force(inst);
        let best_c = all.iter().map(|s| s.completion_time).fold(f64::INFINITY, f64::min);
        let best_sd = all.iter().map(|s| s.workload_sd).fold(f64::INFINITY, f64::min);
        let w = [0.7, 0.3];
        let best_w = all
            .iter()
            .map(|s| w[0] * s.completion_time + w[1] * s.workload_sd)
            .fold(f64::INFINITY, f64::min);
        let full = solve_exact(inst, Objective::Efficiency, false).unwrap();
        assert_eq!(
            full.leaves as usize,
            all.len(),
            "instance {n}: every acyclic schedule exactly once"
        );
        assert!((full.value - best_c).abs() < 1e-9, "instance {n}");
        let pruned = solve_exact(inst, Objective::Efficiency, true).unwrap();
        assert!((pruned.value - best_c).abs() < 1e-9, "instance {n}");
        assert!(pruned.leaves <= full.leaves);
        assert_eq!(pruned.schedule, full.schedule, "pruning keeps the tie-break");
        assert!((solve_exact(inst, Objective::Fairness, true).unwrap().value - best_sd).abs() < 1e-9);
        let ws = solve_exact(inst, Objective::Weighted(w), true).unwrap();
        assert!((ws.value - best_w).abs() < 1e-9, "instance {n}");
        // Reported schedule reproduces its value.
        let s = &pruned.schedule;
        assert_eq!(s.completion_time, pruned.value);
    }
}

#[test]
fn six_item_pruned_equals_unpruned() {
    let spec = InstanceSpec {
        items: (6, 6),
        pickers: (2, 3),
        ..InstanceSpec::default()
    };
    for inst in random_instances(5, 4, &spec) {
        for obj in [
            Objective::Efficiency,
            Objective::Fairness,
            Objective::Weighted([0.5, 0.5]),
        ] {
            let a = solve_exact(&inst, obj, true).unwrap();
            let b = solve_exact(&inst, obj, false).unwrap();
            assert_eq!(a.value, b.value);
            assert_eq!(a.schedule, b.schedule);
        }
    }
}

#[test]
fn more_pickers_never_hurt() {
    let spec = InstanceSpec {
        items: (4, 6),
        pickers: (1, 2),
        ..InstanceSpec::default()
    };
    let mut rs = RandomStream::new(99);
    for inst in random_instances(23, 10, &spec) {
        let c = solve_exact(&inst, Objective::Efficiency, true).unwrap().value;
        let mut more = inst.clone();
        more.picker_starts
            .push(NodeId::from(rs.index(2 * inst.n_aisles * inst.depth)));
        let c2 = solve_exact(&more, Objective::Efficiency, true).unwrap().value;
        assert!(c2 <= c + 1e-12, "{c2} > {c}");
    }
}

#[test]
fn bounds_are_enforced() {
    let spec = InstanceSpec {
        items: (10, 10),
        ..InstanceSpec::default()
    };
    let inst = &random_instances(1, 1, &spec)[0];
    assert!(matches!(
        solve_exact(inst, Objective::Efficiency, true),
        Err(Error::Config(_))
    ));
    let mut four = random_instances(1, 1, &InstanceSpec::default())[0].clone();
    four.picker_starts = vec![NodeId(0); 4];
    assert!(solve_exact(&four, Objective::Efficiency, true).is_err());
}

#[test]
fn simulator_agrees_with_evaluator_on_random_decisions() {
    let spec = InstanceSpec {
        items: (1, 8),
        ..InstanceSpec::default()
    };
    let mut checked = 0;
    for (n, inst) in random_instances(41, 150, &spec).iter().enumerate() {
        let run = simulate_deterministic(inst, &mut RandomPolicy::new(n as u64)).unwrap();
        if run.repolls > 0 {
            continue;
        }
        let prep = Prepared::new(inst).unwrap();
        let s = evaluate_schedule(&prep, &run.orders, Some(&run.release)).unwrap();
        assert!((s.completion_time - run.completion_time).abs() < 1e-9, "instance {n}");
        for (a, b) in s.workloads.iter().zip(&run.workloads) {
            assert!((a - b).abs() < 1e-9);
        }
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} stall-free runs");
}

#[test]
fn baselines_never_beat_the_optimum() {
    let spec = InstanceSpec {
        items: (4, 7),
        pickers: (2, 3),
        amrs: (2, 3),
        ..InstanceSpec::default()
    };
    for inst in random_instances(8, 10, &spec) {
        let opt = solve_exact(&inst, Objective::Efficiency, true).unwrap().value;
        let g = simulate_deterministic(&inst, &mut GreedyPolicy).unwrap();
        let v = simulate_deterministic(&inst, &mut ViPolicy::default()).unwrap();
        assert!(g.completion_time >= opt - 1e-9);
        assert!(v.completion_time >= opt - 1e-9);
    }
}

#[test]
fn replaying_the_optimum_reproduces_its_completion_time() {
    let spec = InstanceSpec {
        items: (3, 7),
        pickers: (1, 3),
        amrs: (1, 3),
        ..InstanceSpec::default()
    };
    let mut replayed = 0;
    let instances = random_instances(29, 40, &spec);
    for inst in &instances {
        let sol = solve_exact(inst, Objective::Efficiency, true).unwrap();
        let mut script = ScriptedPolicy::new(inst, sol.schedule.orders.clone());
        // Orders the action space cannot express are rejected by the simulator.
        let Ok(run) = simulate_deterministic(inst, &mut script) else {
            continue;
        };
        if run.orders == sol.schedule.orders && run.repolls == 0 {
            assert!((run.completion_time - sol.value).abs() < 1e-9);
            replayed += 1;
        }
    }
    assert!(replayed >= instances.len() / 4, "only {replayed} optima replayed");
}

#[test]
fn instance_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = &random_instances(2, 1, &InstanceSpec::default())[0];
    let p = dir.path().join("i.json");
    inst.save(&p).unwrap();
    assert_eq!(&DeterministicInstance::load(&p).unwrap(), inst);
    let mut bad = inst.clone();
    bad.amr_sequences[0].push(0);
    assert!(bad.validate().is_err());
}
