use ipk_core::agent::{evaluate, train, Checkpoint, Phase, Trainer};
use ipk_core::config::{ExperimentConfig, Mode};
use ipk_core::report::{export, read_metrics, write_metrics};

fn tiny(mode: Mode, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(mode, seed);
    c.epochs = 2;
    c.epoch_length = 50;
    c.initial_exploration = 40;
    c.batch_size = 32;
    c.model_train_freq = 25;
    c.model_train_steps = 4;
    c.rollout_batch = 8;
    c.rollout_length = 3;
    c.sac.hidden = 16;
    c.ensemble.hidden = 16;
    c.ensemble.members = 2;
    c.ensemble.batch_size = 32;
    c.env.task_length = 30;
    c
}

#[test]
fn shipped_desk_config_matches_preset() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json")).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), ExperimentConfig::desk(Mode::Ipk, 0));
}

#[test]
fn every_mode_trains_and_reports() {
    for mode in [Mode::Ipk, Mode::Mbpo, Mode::Sac, Mode::Basic] {
        let out = train(tiny(mode, 1)).unwrap();
        assert_eq!(out.metrics.len(), 2, "{mode}");
        assert!(out.metrics.iter().all(|m| m.total_return.is_finite()));
        assert_eq!(out.metrics.iter().all(|m| m.mean_kl.is_nan()), mode != Mode::Ipk, "{mode}");
        assert_eq!(out.model_losses.is_empty(), !mode.uses_models(), "{mode}");

        let mut csv = Vec::new();
        write_metrics(&mut csv, &out.metrics).unwrap();
        let rows = read_metrics(&csv[..]).unwrap();
        let (smoothed, summary) = export(&rows).unwrap();
        assert_eq!(smoothed.len(), 2);
        assert_eq!(summary.final_return, out.metrics[1].total_return);
    }
}

#[test]
fn ipk_buffer_pairs_real_and_estimated_halves() {
    let mut t = Trainer::new(tiny(Mode::Ipk, 2)).unwrap();
    t.run_epoch().unwrap();
    let buf = t.buffer();
    let phases: Vec<Phase> = buf.iter().map(|x| x.phase).collect();
    let first_fusion = phases.iter().position(|p| *p == Phase::Fusion).unwrap();
    assert_eq!(first_fusion, 40);
    assert!(phases[first_fusion..].iter().all(|p| *p == Phase::Fusion));
    assert!(buf.iter().filter(|x| x.mbpo.is_some()).count() > buf.len() / 2);
    assert!(t.estimate().is_some());
}

#[test]
fn checkpoint_survives_json_and_evaluates_identically() {
    let out = train(tiny(Mode::Ipk, 3)).unwrap();
    let back = Checkpoint::from_json(&out.checkpoint.to_json()).unwrap();
    assert_eq!(back.epochs_done, 2);
    let a = evaluate(&out.checkpoint, 2, 9).unwrap();
    let b = evaluate(&back, 2, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.returns.len(), 2);
}
