use super::*;

fn test_hyper() -> HyperParams {
    HyperParams {
        mu_omega: 0.9,
        mu_lambda: 0.06,
        mu_psi: -0.5,
        mu_delta: 0.2,
        sigma_omega: 0.2,
        sigma_lambda: 0.2,
        sigma_psi: 0.04,
        sigma_delta: 0.04,
        omega_y: 0.9,
        lambda_y: 0.9,
        gamma: -0.05,
    }
}

#[test]
fn zero_sigma_is_rejected() {
    let hyper = HyperParams {
        sigma_omega: 0.0,
        ..test_hyper()
    };
    let err = draw_group_effects(&hyper, 10, 1).unwrap_err();
    assert!(matches!(err, ModelError::InvalidHyperParams(_)), "{err}");
}

#[test]
fn effect_draws_center_on_the_population_mean() {
    let hyper = test_hyper();
    let g = 10;
    let reps = 1000; // 10_000 omega draws in total
    let mut sum = 0.0;
    for seed in 0..reps {
        let effects = draw_group_effects(&hyper, g, seed).unwrap();
        sum += effects.omega_x.iter().sum::<f64>();
    }
    let mean = sum / (reps as f64 * g as f64);
    assert!((mean - 0.9).abs() < 0.01, "mean {mean}");
}

#[test]
fn effect_draws_are_deterministic() {
    let hyper = test_hyper();
    let a = draw_group_effects(&hyper, 7, 42).unwrap();
    let b = draw_group_effects(&hyper, 7, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mismatched_effect_vectors_are_rejected() {
    let err = GroupEffects::new(vec![0.0; 3], vec![0.0; 3], vec![0.0; 2], vec![0.0; 3]);
    assert!(err.is_err());
}

#[test]
fn group_log_intensity_zero_coefficients() {
    let coeffs = GroupCoeffs {
        omega: 0.0,
        lambda: 0.0,
        psi: 0.0,
        delta: 0.0,
    };
    assert_eq!(group_log_intensity(coeffs, 17, 230, 9000), 0.0);
}

#[test]
fn group_log_intensity_zero_counts() {
    let coeffs = GroupCoeffs {
        omega: 1.0,
        lambda: 1.0,
        psi: 1.0,
        delta: 1.0,
    };
    assert_eq!(group_log_intensity(coeffs, 0, 0, 0), 1.0);
}

#[test]
fn group_log_intensity_arithmetic() {
    let coeffs = GroupCoeffs {
        omega: 0.9,
        lambda: 0.06,
        psi: -0.5,
        delta: 0.2,
    };
    let expected = 0.9 + 0.06 * 5f64.ln() - 0.5 * 10f64.ln() + 0.2 * 8f64.ln();
    let got = group_log_intensity(coeffs, 4, 9, 7);
    assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
}

#[test]
fn aux_log_intensity_cases() {
    let mut hyper = test_hyper();
    hyper.omega_y = 0.0;
    hyper.lambda_y = 0.0;
    hyper.gamma = 0.0;
    assert_eq!(aux_log_intensity(&hyper, 123, 456), 0.0);

    hyper.omega_y = 0.9;
    hyper.lambda_y = 0.9;
    hyper.gamma = -0.05;
    let expected = 0.9 + 0.9 * 11f64.ln() - 0.05 * 21f64.ln();
    let got = aux_log_intensity(&hyper, 10, 20);
    assert!((got - expected).abs() < 1e-15);

    assert_eq!(aux_log_intensity(&hyper, 0, 0), 0.9);
}

#[test]
fn formation_factor_matches_published_indicator_table() {
    // Counts 0,0,3,10,5,0 then two forced zeros; expected (A, B, C) per step.
    let counts = [0u64, 0, 3, 10, 5, 0, 0, 0];
    let expected = [
        (0, 1, 1),
        (0, 1, 1),
        (0, 1, 1),
        (1, 0, 1),
        (1, 0, 1),
        (1, 0, 1),
        (0, 0, 0),
        (0, 0, 0),
    ];
    for (t, &(ea, eb, ec)) in expected.iter().enumerate() {
        let (a, b) = formation_indicators(&counts[..t], InitConvention::NotYetFormed);
        let c = formation_factor(&counts[..t], InitConvention::NotYetFormed);
        assert_eq!((a, b, c), (ea, eb, ec), "step {t}");
    }
}

#[test]
fn formation_is_still_possible_after_a_zero_run() {
    let history = [0u64; 5];
    assert_eq!(formation_factor(&history, InitConvention::NotYetFormed), 1);
}

#[test]
fn split_groups_stay_at_zero() {
    let mut history = vec![2u64, 0];
    assert_eq!(formation_factor(&history, InitConvention::NotYetFormed), 0);
    for _ in 0..5 {
        history.push(0);
        assert_eq!(formation_factor(&history, InitConvention::NotYetFormed), 0);
    }
}

#[test]
fn already_formed_treats_a_zero_start_as_split() {
    assert_eq!(formation_indicators(&[], InitConvention::AlreadyFormed), (1, 0));
    assert_eq!(formation_factor(&[0], InitConvention::AlreadyFormed), 0);
    assert_eq!(formation_factor(&[3], InitConvention::AlreadyFormed), 1);
}

#[test]
fn indicators_are_mutually_exclusive() {
    // Every history over {0,1,2} up to length 8.
    for convention in [InitConvention::NotYetFormed, InitConvention::AlreadyFormed] {
        let mut stack = vec![Vec::<u64>::new()];
        while let Some(history) = stack.pop() {
            let (a, b) = formation_indicators(&history, convention);
            assert!(a + b <= 1, "history {history:?}");
            if history.len() < 8 {
                for v in 0..3u64 {
                    let mut next = history.clone();
                    next.push(v);
                    stack.push(next);
                }
            }
        }
    }
}

#[test]
fn near_zero_intercepts_give_an_all_zero_panel() {
    let hyper = test_hyper();
    let effects = GroupEffects::new(
        vec![-40.0; 4],
        vec![0.0; 4],
        vec![0.0; 4],
        vec![0.0; 4],
    )
    .unwrap();
    let mut cfg = SimConfig::new(4, 20, 5);
    cfg.x0 = vec![0; 4];
    cfg.y0 = 0;
    let mut aux_hyper = hyper;
    aux_hyper.omega_y = -40.0;
    aux_hyper.lambda_y = 0.0;
    aux_hyper.gamma = 0.0;
    let panel = simulate_panel(&aux_hyper, &effects, &cfg).unwrap();
    for t in 0..panel.n_steps() {
        assert_eq!(panel.y(t), 0);
        for i in 0..4 {
            assert_eq!(panel.x(i, t), 0);
        }
    }
}

fn lag1_autocorr(series: &[f64]) -> f64 {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
    let numer: f64 = (1..n)
        .map(|t| (series[t] - mean) * (series[t - 1] - mean))
        .sum();
    numer / denom
}

#[test]
fn simulated_groups_show_positive_persistence() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 10, 314).unwrap();
    let cfg = SimConfig::new(10, 20, 314);
    let panel = simulate_panel(&hyper, &effects, &cfg).unwrap();
    let positive = (0..10)
        .filter(|&i| {
            let logs: Vec<f64> = panel.x_row(i).iter().map(|&v| (v as f64 + 1.0).ln()).collect();
            lag1_autocorr(&logs) > 0.0
        })
        .count();
    assert!(positive > 5, "only {positive} of 10 groups persistent");
}

#[test]
fn simulation_is_deterministic() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 6, 8).unwrap();
    let cfg = SimConfig::new(6, 25, 8);
    let a = simulate_panel(&hyper, &effects, &cfg).unwrap();
    let b = simulate_panel(&hyper, &effects, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn extending_the_horizon_preserves_the_prefix() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 5, 21).unwrap();
    let short = simulate_panel(&hyper, &effects, &SimConfig::new(5, 10, 21)).unwrap();
    let long = simulate_panel(&hyper, &effects, &SimConfig::new(5, 30, 21)).unwrap();
    for t in 0..=10 {
        assert_eq!(short.y(t), long.y(t));
        for i in 0..5 {
            assert_eq!(short.x(i, t), long.x(i, t));
        }
    }
}

#[test]
fn resuming_from_a_cloned_state_reproduces_the_suffix() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 4, 77).unwrap();
    let cfg = SimConfig::new(4, 20, 77);
    let mut full = SimEngine::new(&hyper, &effects, &cfg).unwrap();
    for _ in 0..8 {
        full.step().unwrap();
    }
    let mut resumed = full.clone();
    for _ in 0..12 {
        full.step().unwrap();
        resumed.step().unwrap();
    }
    assert_eq!(full.into_panel(), resumed.into_panel());
}

#[test]
fn conditional_mean_matches_the_intensity() {
    use rand::SeedableRng;
    let coeffs = GroupCoeffs {
        omega: 0.9,
        lambda: 0.4,
        psi: -0.2,
        delta: 0.3,
    };
    for (x_prev, others, y_prev) in [(4u64, 9u64, 7u64), (60, 300, 4000)] {
        let mean = group_log_intensity(coeffs, x_prev, others, y_prev).exp();
        let n = 100_000;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        let total: u64 = (0..n).map(|_| sample_poisson(&mut rng, mean)).sum();
        let empirical = total as f64 / n as f64;
        let se = (mean / n as f64).sqrt();
        assert!(
            (empirical - mean).abs() < 3.0 * se,
            "mean {mean}, empirical {empirical}, se {se}"
        );
    }
}

#[test]
fn log_intensities_are_finite_for_extreme_counts() {
    let coeffs = GroupCoeffs {
        omega: -3.0,
        lambda: 2.0,
        psi: -2.0,
        delta: 2.0,
    };
    for count in [0u64, 1, u64::MAX] {
        assert!(group_log_intensity(coeffs, count, count, count).is_finite());
        assert!(aux_log_intensity(&test_hyper(), count, count).is_finite());
    }
}

#[test]
fn splitting_support_is_an_interval() {
    // Parameters chosen so packs form late and sometimes split.
    let hyper = HyperParams {
        mu_omega: 0.3,
        mu_lambda: 0.4,
        mu_psi: 0.1,
        mu_delta: -0.2,
        sigma_omega: 0.4,
        sigma_lambda: 0.2,
        sigma_psi: 0.1,
        sigma_delta: 0.1,
        omega_y: 0.8,
        lambda_y: 0.8,
        gamma: -0.05,
    };
    for seed in 0..20 {
        let effects = draw_group_effects(&hyper, 8, seed).unwrap();
        let mut cfg = SimConfig::new(8, 30, seed);
        cfg.splitting_enabled = true;
        cfg.x0 = vec![0; 8];
        cfg.y0 = 40;
        let panel = simulate_panel(&hyper, &effects, &cfg).unwrap();
        assert!(
            panel.interval_violations().is_empty(),
            "seed {seed}: {:?}",
            panel.interval_violations()
        );
    }
}

#[test]
fn group_explosion_reports_group_and_step() {
    let hyper = test_hyper();
    let effects =
        GroupEffects::new(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]).unwrap();
    let mut cfg = SimConfig::new(3, 5, 1);
    cfg.intensity_cap = 0.5;
    let err = simulate_panel(&hyper, &effects, &cfg).unwrap_err();
    match err {
        ModelError::IntensityExplosion { series, step, .. } => {
            assert_eq!(series, SeriesId::Group(0));
            assert_eq!(step, 1);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn aux_explosion_is_reported() {
    let mut hyper = test_hyper();
    hyper.omega_y = 5.0;
    hyper.lambda_y = 0.0;
    hyper.gamma = 0.0;
    let effects =
        GroupEffects::new(vec![-40.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]).unwrap();
    let mut cfg = SimConfig::new(3, 5, 1);
    cfg.intensity_cap = 100.0;
    let err = simulate_panel(&hyper, &effects, &cfg).unwrap_err();
    match err {
        ModelError::IntensityExplosion { series, step, .. } => {
            assert_eq!(series, SeriesId::Auxiliary);
            assert_eq!(step, 1);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn effects_length_mismatch_is_an_error() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 4, 1).unwrap();
    let cfg = SimConfig::new(5, 10, 1);
    assert!(matches!(
        simulate_panel(&hyper, &effects, &cfg),
        Err(ModelError::DimensionMismatch(_))
    ));
}

#[test]
fn panel_csv_round_trips() {
    let hyper = test_hyper();
    let effects = draw_group_effects(&hyper, 3, 9).unwrap();
    let panel = simulate_panel(&hyper, &effects, &SimConfig::new(3, 12, 9)).unwrap();
    let text = write_panel_csv(&panel);
    let back = parse_panel_csv(&text).unwrap();
    assert_eq!(panel, back);
}

#[test]
fn panel_csv_rejects_malformed_rows() {
    assert!(matches!(
        parse_panel_csv("t,y,x1,x2\n0,1,-2,3\n"),
        Err(ModelError::PanelCsv { line: 2, .. })
    ));
    assert!(matches!(
        parse_panel_csv("t,y,x1,x2\n1,1,2,3\n"),
        Err(ModelError::PanelCsv { line: 2, .. })
    ));
    assert!(parse_panel_csv("t,y,x1\n0,1,2\n").is_err());
}

#[test]
fn panel_requires_two_groups_and_one_step() {
    assert!(Panel::new(vec![vec![1, 2]], vec![1, 2], None).is_err());
    assert!(Panel::new(vec![vec![], vec![]], vec![], None).is_err());
    assert!(Panel::new(vec![vec![1], vec![1, 2]], vec![1], None).is_err());
    // A lone initial column is allowed: it carries no transitions.
    let panel = Panel::new(vec![vec![1], vec![2]], vec![3], None).unwrap();
    assert_eq!(panel.horizon(), 0);
}
