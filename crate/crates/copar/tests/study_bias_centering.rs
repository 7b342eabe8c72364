//! Slow sweep check: across every built-in scenario at reduced scale, the
//! per-parameter bias distribution should straddle zero (first quartile at
//! or below zero, third at or above). Run explicitly:
//!
//! ```sh
//! cargo test -p copar --test study_bias_centering -- --ignored --nocapture
//! ```

use copar::infer::quantile;
use copar::simstudy::{run_scenario, Scenario, ScenarioId};

#[test]
#[ignore = "runs five scenario sweeps; takes tens of minutes on one core"]
fn bias_distributions_bracket_zero_across_scenarios() {
    for id in [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
    ] {
        let mut scenario = Scenario::fast(id).unwrap();
        scenario.n_replicates = 10;
        let report = run_scenario(&scenario, 424242).unwrap();
        assert!(
            report.included >= 8,
            "{id}: only {} replicates converged",
            report.included
        );
        for p in &report.params {
            let q1 = quantile(&p.bias_samples, 0.25);
            let q3 = quantile(&p.bias_samples, 0.75);
            assert!(
                q1 <= 0.0 && q3 >= 0.0,
                "{id}: bias quartiles of {} are [{q1:.4}, {q3:.4}], not straddling zero",
                p.name
            );
        }
        println!("{id}: bias quartiles straddle zero for all 11 parameters");
    }
}
