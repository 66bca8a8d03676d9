use nfl_core::experiment::{choose_per_budget, curve_row, run_sweep, verify_reports};
use nfl_core::{ExperimentConfig, FederationConfig, MechanismSpec, TradeoffReport, UniverseSpec};

fn small(sweep: Vec<MechanismSpec>) -> ExperimentConfig {
    ExperimentConfig {
        federation: FederationConfig {
            clients: 3,
            rounds: 4,
            trials: 300,
            seed: 11,
            universe: UniverseSpec { candidates: 6, ..UniverseSpec::default() },
            ..FederationConfig::default()
        },
        sweep,
        budgets: vec![0.05, 0.5],
        ..ExperimentConfig::default()
    }
}

fn reports(cfg: &ExperimentConfig) -> Vec<TradeoffReport> {
    run_sweep(cfg).unwrap().into_iter().flat_map(|p| p.reports).collect()
}

#[test]
fn small_sweep_passes_every_gated_check() {
    let cfg = small(vec![
        MechanismSpec::NoOp,
        MechanismSpec::Randomization { sigma: 0.0 },
        MechanismSpec::Randomization { sigma: 0.5 },
        MechanismSpec::Sparsity { d: 0, mu_g: None, var_g: None },
        MechanismSpec::Sparsity { d: 2, mu_g: None, var_g: None },
    ]);
    let rs = reports(&cfg);
    let checks = verify_reports(&rs);
    let failed: Vec<_> = checks.iter().filter(|c| c.fails()).map(|c| &c.name).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
    assert!(checks.iter().any(|c| c.name.ends_with(":nfl_privacy_tv")));

    let noop = &rs[0];
    assert!((noop.eps_p - noop.c1).abs() < 1e-12, "{} vs {}", noop.eps_p, noop.c1);
    assert_eq!(noop.eps_u, 0.0);
    let sigma0 = &rs[1];
    assert_eq!(sigma0.eps_u, 0.0);

    for r in &rs {
        let row = curve_row(r, &cfg.budgets).unwrap();
        assert_eq!(row.eps_p, r.eps_p);
    }
    assert_eq!(choose_per_budget(&rs, &cfg.budgets).unwrap().len(), 2);
}

#[test]
fn tampered_report_is_caught() {
    let cfg = small(vec![MechanismSpec::Randomization { sigma: 0.5 }]);
    let mut rs = reports(&cfg);
    assert!(verify_reports(&rs).iter().all(|c| !c.fails()));
    rs[0].eps_p *= 0.5;
    let failed: Vec<_> = verify_reports(&rs).into_iter().filter(|c| c.fails()).map(|c| c.name).collect();
    assert!(failed.iter().any(|n| n.ends_with(":consistency")), "{failed:?}");
}

#[test]
fn sweep_is_deterministic_and_seed_sensitive() {
    let cfg = small(vec![MechanismSpec::Randomization { sigma: 0.3 }]);
    let a = reports(&cfg);
    assert_eq!(a, reports(&cfg));
    let mut other = cfg.clone();
    other.federation.seed += 1;
    assert_ne!(a, reports(&other));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(vec![MechanismSpec::Randomization { sigma: -1.0 }]);
    assert!(run_sweep(&cfg).is_err());
    cfg.sweep = vec![];
    cfg.federation.clients = 1;
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small(vec![]);
    cfg.budgets = vec![f64::NAN];
    assert!(run_sweep(&cfg).is_err());
}
