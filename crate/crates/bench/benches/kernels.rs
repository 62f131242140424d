use std::hint::black_box;
use std::sync::Arc;

use cobot_pick::baseline::GreedyPolicy;
use cobot_pick::env::run_episode;
use cobot_pick::experiment::Preset;
use cobot_pick::layout::Warehouse;
use cobot_pick::morl::{hypervolume_2d, Point};
use cobot_pick::nn::{Actor, ActorKind, AisleIndex, Critic, NetInput, Params};
use cobot_pick::oracle::{solve_exact, Objective};
use cobot_pick::stochastic::RandomStream;
use cobot_pick_bench::{env, oracle_instance, small_env};
use criterion::{criterion_group, criterion_main, Criterion};

fn layout(c: &mut Criterion) {
    c.bench_function("warehouse_distances_S", |b| {
        b.iter(|| Warehouse::new(black_box(10), 10).unwrap())
    });
    c.bench_function("warehouse_distances_L", |b| {
        b.iter(|| Warehouse::new(black_box(25), 25).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let mut small = small_env();
    let mut seed = 0;
    c.bench_function("episode_greedy_small", |b| {
        b.iter(|| {
            seed += 1;
            run_episode(&mut small, &mut GreedyPolicy, seed).unwrap()
        })
    });
    let mut s = env(Preset::S.sim_config());
    let mut g = c.benchmark_group("preset_S");
    g.sample_size(10);
    g.bench_function("episode_greedy", |b| {
        b.iter(|| {
            seed += 1;
            run_episode(&mut s, &mut GreedyPolicy, seed).unwrap()
        })
    });
    s.reset(1).unwrap();
    g.bench_function("observe", |b| b.iter(|| black_box(s.features())));
    g.finish();
}

fn networks(c: &mut Criterion) {
    let mut e = env(Preset::S.sim_config());
    e.reset(3).unwrap();
    let aisles = Arc::new(AisleIndex::from_layout(&e.warehouse().layout));
    let inp = NetInput::<f32>::new(&e.features(), aisles).unwrap();
    let mask = e.mask();
    let mut rs = RandomStream::new(1);
    let actor = Actor::<f32>::init(ActorKind::Aemo, &mut rs);
    let critic = Critic::<f32>::init(&mut rs);
    c.bench_function("aemo_forward_S", |b| {
        b.iter(|| actor.forward(black_box(&inp), &mask).unwrap())
    });
    c.bench_function("aemo_forward_backward_S", |b| {
        let mut grad = actor.zeros_like();
        b.iter(|| {
            let (out, cache) = actor.forward_cached(&inp, &mask).unwrap();
            actor.backward(&inp, &cache, &out.probs, &mut grad);
        })
    });
    c.bench_function("critic_forward_S", |b| b.iter(|| critic.forward(black_box(&inp))));
}

fn oracle(c: &mut Criterion) {
    let inst = oracle_instance(7, 5);
    let mut g = c.benchmark_group("exact_solver");
    g.sample_size(10);
    g.bench_function("7_items_efficiency", |b| {
        b.iter(|| solve_exact(black_box(&inst), Objective::Efficiency, true).unwrap())
    });
    g.finish();
}

fn archive(c: &mut Criterion) {
    let mut rs = RandomStream::new(2);
    let pts: Vec<Point> = (0..200)
        .map(|_| [-100.0 * rs.uniform(), -10.0 * rs.uniform()])
        .collect();
    c.bench_function("hypervolume_200", |b| {
        b.iter(|| hypervolume_2d(black_box(&pts), [-110.0, -11.0]))
    });
}

criterion_group!(benches, layout, simulation, networks, oracle, archive);
criterion_main!(benches);
