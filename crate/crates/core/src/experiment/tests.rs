use super::*;
use crate::oracle::InstanceSpec;
use crate::ppo::PpoConfig;

fn tiny(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        sim: SimConfig {
            total_picks: 120,
            ..small_scenario()
        },
        episodes: 4,
        seed: 5,
        out_dir: dir.to_path_buf(),
        ppo: PpoConfig {
            workers: 2,
            steps_per_worker: 40,
            minibatch: 32,
            ..PpoConfig::default()
        },
        iterations: 2,
        checkpoint_every: 1,
        morl: MorlSettings {
            n_tasks: 2,
            warmup_iterations: 2,
            task_iterations: 2,
            generations: 1,
            eval_episodes: 2,
            ..MorlSettings::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn presets_have_listed_sizes() {
    let locs: Vec<usize> = Preset::ALL
        .iter()
        .map(|p| {
            let (a, d, ..) = p.dims();
            2 * a * d
        })
        .collect();
    assert_eq!(locs, vec![200, 450, 1250, 2800]);
    assert_eq!("xl".parse::<Preset>().unwrap(), Preset::XL);
    assert!("XXL".parse::<Preset>().is_err());
    let mut c = ExperimentConfig {
        preset: Some(Preset::M),
        ..ExperimentConfig::default()
    };
    assert_eq!(c.sim_config().n_pickers, 20);
    c.preset = None;
    assert_eq!(c.sim_config().n_pickers, 3);
}

#[test]
fn policy_spec_parses_and_round_trips() {
    for s in ["greedy", "vi", "random", "checkpoint:a/b.json"] {
        let p: PolicySpec = s.parse().unwrap();
        assert_eq!(p.to_string(), s);
        let j = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PolicySpec>(&j).unwrap(), p);
    }
    assert!("checkpoint:".parse::<PolicySpec>().is_err());
    assert!("best".parse::<PolicySpec>().is_err());
}

#[test]
fn config_round_trips_and_rejects_bad_values() {
    let c = ExperimentConfig::default();
    let j = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&j).unwrap(), c);
    let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 9, "preset": "L"}"#).unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.sim_config().n_amrs, 90);
    let bad = ExperimentConfig {
        episodes: 0,
        ..c.clone()
    };
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    let bad = ExperimentConfig {
        reward_scales: [0.0, 1.0],
        ..c
    };
    assert!(bad.validate().is_err());
}

#[test]
fn simulate_writes_rows_and_summary_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let (rows, summary) = cmd_simulate(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![5, 6, 7, 8]);
    let text = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert!(text.contains("episode,seed,completion_time_s,workload_sd_kg,workload_0_kg"));
    assert!(text.contains("\nmean,"));
    assert!(text.contains("\nci95_half_width,"));
    let (again, _) = cmd_simulate(&cfg).unwrap();
    assert_eq!(rows, again);
    let mean = rows.iter().map(|r| r.completion_time).sum::<f64>() / 4.0;
    assert!((summary.completion_time - mean).abs() < 1e-9);
}

#[test]
fn train_efficiency_then_simulate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        mode: TrainMode::Efficiency,
        ..tiny(dir.path())
    };
    let s = train_efficiency(&cfg).unwrap();
    assert_eq!(s.env_steps, 2 * 2 * 40);
    let ck = Checkpoint::load(&s.final_checkpoint).unwrap();
    assert!(ck.efficiency_only);
    assert!(dir.path().join("checkpoints/iter_00001.json").exists());
    let sim = ExperimentConfig {
        policy: PolicySpec::Checkpoint(s.final_checkpoint.clone()),
        ..tiny(dir.path())
    };
    let (rows, _) = cmd_simulate(&sim).unwrap();
    assert!(rows.iter().all(|r| r.completion_time > 0.0));
    // Resuming continues the step count.
    let resumed = ExperimentConfig {
        resume: Some(s.final_checkpoint),
        out_dir: dir.path().join("resumed"),
        iterations: 1,
        ..cfg
    };
    let r = train_efficiency(&resumed).unwrap();
    assert_eq!(r.env_steps, 3 * 2 * 40);
}

#[test]
fn morl_train_then_pareto_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("run"));
    cmd_train(&cfg).unwrap();
    let report_cfg = ExperimentConfig {
        out_dir: dir.path().to_path_buf(),
        episodes: 2,
        ..cfg.clone()
    };
    let r = cmd_pareto(&cfg.out_dir, &report_cfg, &[PolicySpec::Greedy]).unwrap();
    assert!(r.rows.iter().any(|x| x.non_dominated));
    assert_eq!(r.rows.last().unwrap().label, "greedy");
    let pts: Vec<Point> = r
        .rows
        .iter()
        .filter(|x| x.non_dominated)
        .map(|x| x.summary.point())
        .collect();
    assert!((r.hypervolume - hypervolume_2d(&pts, r.reference)).abs() < 1e-12);
    for f in ["pareto.csv", "front.dat", "pareto_summary.csv"] {
        assert!(std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .starts_with("# config_hash="));
    }
}

#[test]
fn oracle_compare_reports_nonnegative_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    let spec = InstanceSpec {
        items: (3, 5),
        ..InstanceSpec::default()
    };
    let paths = cmd_gen_instances(&inst_dir, 4, 3, &spec).unwrap();
    assert_eq!(paths.len(), 4);
    let cfg = tiny(dir.path());
    let rows = cmd_oracle_compare(&inst_dir, &cfg, Some(&PolicySpec::Random)).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r.gap(r.greedy) >= -1e-9 && r.gap(r.vi) >= -1e-9 && r.gap(r.policy.unwrap()) >= -1e-9);
    }
    let text = std::fs::read_to_string(dir.path().join("oracle_compare.csv")).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("instance,optimum,greedy,vi,policy"));
    assert!(cmd_oracle_compare(dir.path().join("none").as_path(), &cfg, None).is_err());
}
