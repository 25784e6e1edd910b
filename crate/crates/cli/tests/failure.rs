use std::cell::Cell;

use trajopt::problems::{Simulator, Toy1d};
use trajopt_cli::config::CampaignConfig;
use trajopt_cli::CliError;

/// Fails on the n-th call.
struct Flaky {
    inner: Toy1d,
    calls: Cell<usize>,
    fail_at: usize,
}

impl Simulator for Flaky {
    fn dim(&self) -> usize {
        1
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn simulate(&self, x: &[f64], seed: u64) -> trajopt::Result<Vec<Vec<f64>>> {
        let n = self.calls.get() + 1;
        self.calls.set(n);
        // the first call produces the truth
        if n == self.fail_at + 1 {
            return Err(trajopt::Error::Simulator("worker crashed".into()));
        }
        self.inner.simulate(x, seed)
    }
}

#[test]
fn simulator_failure_keeps_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = CampaignConfig::from_json(
        r#"{"schema_version": 1, "problem": "toy_1d", "n_init": 6, "n_max": 12, "n_initial_seeds": 3, "grid_size": 16}"#,
    )
    .unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let sim = Flaky {
        inner: Toy1d::default(),
        calls: Cell::new(0),
        fail_at: 8,
    };
    let err = trajopt_cli::optimize_with(&cfg, &sim, &["y".to_string()]).unwrap_err();
    assert!(matches!(err, CliError::Runtime(_)));
    assert_eq!(err.exit_code(), 1);
    let evals = std::fs::read_to_string(dir.path().join("evals.csv")).unwrap();
    assert_eq!(evals.lines().count(), 1 + 7);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "failed");
    assert!(summary["error"].as_str().unwrap().contains("worker crashed"));
}
