use grasp_ssl::harness::{velocity_sweep, ScenarioConfig};
use grasp_ssl::learner::LearnerKind;

#[test]
fn frozen_success_falls_with_speed() {
    let config = ScenarioConfig {
        learners: vec![LearnerKind::SupervisedFrozen],
        seeds: (0..10).collect(),
        ..ScenarioConfig::default()
    };
    assert_eq!(config.speeds, vec![0.0, 0.05, 0.1, 0.15, 0.2]);
    let rows = velocity_sweep(&config, None).unwrap();
    let rates: Vec<f64> = rows.iter().map(|r| r.success_rate).collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0], "{rates:?}");
    }
    let finals: Vec<f64> = rows.iter().map(|r| r.final_window_success_rate).collect();
    for w in finals.windows(2) {
        assert!(w[1] <= w[0], "{finals:?}");
    }
}
