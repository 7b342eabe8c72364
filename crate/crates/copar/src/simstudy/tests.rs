use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[test]
fn rmse_examples() {
    assert_eq!(rmse(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
    assert_eq!(rmse(&[1.0, 3.0], 2.0).unwrap(), 1.0);
    assert_eq!(rmse(&[0.9, 0.9, 0.9], 0.9).unwrap(), 0.0);
    assert!(matches!(rmse(&[], 1.0), Err(SimStudyError::EmptyEstimates)));
}

#[test]
fn bias_examples() {
    assert_eq!(bias(2.0, 2.0), 0.0);
    assert_eq!(relative_bias(2.0, 2.0).unwrap(), 0.0);
    assert!((bias(1.1, 1.0) - 0.1).abs() < 1e-15);
    assert!((relative_bias(1.1, 1.0).unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(bias(0.5, -0.5), 1.0);
    assert_eq!(relative_bias(0.5, -0.5).unwrap(), -2.0);
    assert!(matches!(
        relative_bias(1.0, 0.0),
        Err(SimStudyError::ZeroTruth)
    ));
}

#[test]
fn rmse_squared_is_the_mean_squared_bias() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    for _ in 0..50 {
        let truth: f64 = rng.random_range(-3.0..3.0);
        let estimates: Vec<f64> = (0..rng.random_range(1..40))
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let r = rmse(&estimates, truth).unwrap();
        let mean_sq = estimates
            .iter()
            .map(|&e| bias(e, truth).powi(2))
            .sum::<f64>()
            / estimates.len() as f64;
        assert!((r * r - mean_sq).abs() < 1e-12);
    }
}

#[test]
fn builtin_scenarios_carry_the_study_design() {
    let s1 = Scenario::builtin(ScenarioId::S1).unwrap();
    assert_eq!((s1.g, s1.horizon), (10, 20));
    assert_eq!(s1.truth.gamma, -0.05);
    assert_eq!(s1.truth.mu_psi, -0.5);
    assert_eq!(s1.truth.mu_delta, 0.2);
    assert_eq!(s1.truth.omega_y, 0.9);
    assert_eq!(s1.truth.sigma_psi, 0.04);
    assert_eq!(s1.n_replicates, 100);
    assert_eq!(s1.sampler.n_iterations, 20_000);
    assert_eq!(s1.sampler.thin, 20);

    let s2 = Scenario::builtin(ScenarioId::S2).unwrap();
    assert_eq!((s2.g, s2.horizon), (42, 20));

    let s3 = Scenario::builtin(ScenarioId::S3).unwrap();
    assert_eq!((s3.g, s3.horizon), (50, 50));
    assert_eq!(s3.sampler.n_iterations, 40_000);
    assert_eq!(s3.sampler.burnin, 4_000);
    assert_eq!(s3.sampler.thin, 40);

    let s4 = Scenario::builtin(ScenarioId::S4).unwrap();
    assert_eq!(
        (s4.truth.gamma, s4.truth.mu_psi, s4.truth.mu_delta),
        (-0.15, 0.15, 0.15)
    );

    let s5 = Scenario::builtin(ScenarioId::S5).unwrap();
    assert_eq!(
        (s5.truth.gamma, s5.truth.mu_psi, s5.truth.mu_delta),
        (0.05, -0.05, -0.05)
    );

    let fast = Scenario::fast(ScenarioId::S1).unwrap();
    assert_eq!(fast.n_replicates, 20);
    assert_eq!(fast.sampler.n_iterations, 4_000);
}

fn estimates_at_truth(truth: &HyperParams, replicate: usize) -> PointEstimates {
    let values: Vec<f64> = HYPER_NAMES.iter().map(|n| hyper_value(truth, n)).collect();
    PointEstimates {
        replicate,
        posterior_mean: values.clone(),
        posterior_median: values,
    }
}

#[test]
fn estimates_equal_to_truth_score_zero() {
    let truth = Scenario::builtin(ScenarioId::S1).unwrap().truth;
    let params = aggregate_metrics(&truth, &[estimates_at_truth(&truth, 0)]).unwrap();
    assert_eq!(params.len(), 11);
    for p in &params {
        assert_eq!(p.rmse, 0.0, "{}", p.name);
        assert_eq!(p.median_bias, 0.0);
        assert_eq!(p.median_relative_bias, Some(0.0));
        assert_eq!(p.bias_samples, vec![0.0]);
    }
}

#[test]
fn metrics_are_order_invariant() {
    let truth = Scenario::builtin(ScenarioId::S1).unwrap().truth;
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let mut estimates: Vec<PointEstimates> = (0..9)
        .map(|r| {
            let values: Vec<f64> = HYPER_NAMES
                .iter()
                .map(|n| hyper_value(&truth, n) + rng.random_range(-0.2..0.2))
                .collect();
            PointEstimates {
                replicate: r,
                posterior_mean: values.clone(),
                posterior_median: values,
            }
        })
        .collect();
    let forward = aggregate_metrics(&truth, &estimates).unwrap();
    estimates.reverse();
    let reversed = aggregate_metrics(&truth, &estimates).unwrap();
    for (a, b) in forward.iter().zip(&reversed) {
        assert!((a.rmse - b.rmse).abs() < 1e-12);
        assert!((a.median_bias - b.median_bias).abs() < 1e-12);
    }
}

#[test]
fn zero_truth_disables_relative_bias() {
    let mut truth = Scenario::builtin(ScenarioId::S1).unwrap().truth;
    truth.gamma = 0.0;
    let params = aggregate_metrics(&truth, &[estimates_at_truth(&truth, 0)]).unwrap();
    let gamma = params.iter().find(|p| p.name == "gamma").unwrap();
    assert!(gamma.median_relative_bias.is_none());
    assert!(gamma.relative_bias_samples.is_none());
}

#[test]
fn tiny_scenario_sweep_accounts_for_every_replicate() {
    let mut scenario = Scenario::fast(ScenarioId::S1).unwrap();
    scenario.g = 3;
    scenario.horizon = 8;
    scenario.n_replicates = 2;
    scenario.sampler = SamplerConfig::new(400, 150, 2, 0);
    scenario.sampler.n_chains = 2;
    let report = run_scenario(&scenario, 11).unwrap();
    assert_eq!(report.included + report.excluded.len(), 2);
    assert_eq!(report.params.len(), 11);
    assert_eq!(report.replicate_seeds.len(), 2);
    assert_eq!(report.confounding.len(), report.included);
    for c in &report.confounding {
        assert_eq!(c.rows.len(), 2 * scenario.sampler.n_kept());
    }
}

#[test]
fn derived_seeds_are_distinct() {
    let mut seen = std::collections::HashSet::new();
    for r in 0..1000u64 {
        assert!(seen.insert(derive_seed(12345, r)));
    }
}
