//! Shared fixtures for the kernel benchmarks.

use cobot_pick::env::{Env, EnvConfig};
use cobot_pick::experiment::small_scenario;
use cobot_pick::oracle::{random_instance, DeterministicInstance, InstanceSpec};
use cobot_pick::sim::SimConfig;
use cobot_pick::stochastic::RandomStream;

pub fn env(sim: SimConfig) -> Env {
    Env::new(EnvConfig {
        sim,
        ..EnvConfig::default()
    })
    .expect("valid benchmark scenario")
}

pub fn small_env() -> Env {
    env(small_scenario())
}

/// Exact-solver instance with `items` items, two pickers and three AMRs.
pub fn oracle_instance(items: usize, seed: u64) -> DeterministicInstance {
    let spec = InstanceSpec {
        items: (items, items),
        pickers: (2, 2),
        amrs: (3, 3),
        ..InstanceSpec::default()
    };
    random_instance(&mut RandomStream::new(seed), &spec).expect("valid instance spec")
}
