//! Subcommand implementations. Every artifact embeds the resolved
//! configuration and seed, and identical configuration plus seed produces
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use copar::corr::{rho_tilde_with_tolerance, stationary_means_from_panel, CorrError, RhoReport, StationaryMeans, DEFAULT_CONSISTENCY_TOLERANCE};
use copar::infer::{
    effective_sample_size, gelman_rubin, param_stats, prior_posterior_overlap, sample,
    InferError, PosteriorDraws, PriorSpec, SamplerConfig, HYPER_NAMES,
};
use copar::model::{
    draw_group_effects, parse_panel_csv, simulate_panel, write_panel_csv, HyperParams, Panel,
    SimConfig,
};
use copar::simstudy::{run_scenario, Scenario, ScenarioId, SimStudyError};
use serde::Serialize;

use crate::config::FileConfig;
use crate::CliError;

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::validation(format!("creating {}: {e}", out.display())))
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::validation(format!("writing {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::validation(format!("serializing report: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn infer_error(err: InferError) -> CliError {
    match err {
        InferError::TooManyDivergences { .. } | InferError::DegenerateLikelihood(_) => {
            CliError::convergence(err.to_string())
        }
        other => CliError::validation(other.to_string()),
    }
}

/// Panel input: the wide panel format, or the long `year,series,count`
/// format detected by its header.
fn load_panel(path: &Path, quiet: bool) -> Result<Panel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("reading {}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or_default().trim();
    if header == "year,series,count" {
        let loaded = copar::ingest::load_long_csv(&text)
            .map_err(|e| CliError::validation(e.to_string()))?;
        if !quiet {
            for warning in &loaded.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!(
                "loaded {} groups over {}..{} ({} structural zeros)",
                loaded.panel.n_groups(),
                loaded.first_year,
                loaded.last_year,
                loaded.structural_zeros
            );
        }
        Ok(loaded.panel)
    } else {
        parse_panel_csv(&text).map_err(|e| CliError::validation(e.to_string()))
    }
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    command: &'static str,
    seed: u64,
    sim_config: &'a SimConfig,
    hyper_params: &'a HyperParams,
}

pub fn cmd_simulate(
    config: &FileConfig,
    seed: u64,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    let hyper = config.hyper();
    hyper
        .validate()
        .map_err(|e| CliError::validation(e.to_string()))?;
    let sim_config = config.sim_config(seed)?;
    let effects = draw_group_effects(&hyper, sim_config.g, seed)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let panel = simulate_panel(&hyper, &effects, &sim_config)
        .map_err(|e| CliError::validation(e.to_string()))?;
    ensure_out_dir(out)?;
    write_text(&out.join("panel.csv"), &write_panel_csv(&panel))?;
    let meta = SimulateMeta {
        command: "simulate",
        seed,
        sim_config: &sim_config,
        hyper_params: &hyper,
    };
    write_text(&out.join("panel.meta.json"), &to_json(&meta)?)?;
    if !quiet {
        eprintln!(
            "simulated {} groups over horizon {} -> {}",
            sim_config.g,
            sim_config.horizon,
            out.join("panel.csv").display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
pub struct ParamSummary {
    mean: f64,
    sd: f64,
    median: f64,
    #[serde(rename = "q2.5")]
    q2_5: f64,
    #[serde(rename = "q97.5")]
    q97_5: f64,
    rhat: f64,
    ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ppo_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weakly_identifiable: Option<bool>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    input: String,
    seed: u64,
    splitting: bool,
    sampler: &'a SamplerConfig,
    prior: &'a PriorSpec,
    divergences: &'a [usize],
    mean_accept: &'a [f64],
    params: BTreeMap<String, ParamSummary>,
}

fn draws_csv(draws: &PosteriorDraws) -> String {
    let mut text = String::from("chain,iter");
    for name in draws.names() {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for chain in 0..draws.n_chains() {
        for iter in 0..draws.n_kept() {
            text.push_str(&format!("{},{}", chain + 1, iter + 1));
            for param in 0..draws.names().len() {
                text.push_str(&format!(",{}", draws.value(chain, iter, param)));
            }
            text.push('\n');
        }
    }
    text
}

fn summarize_fit(
    draws: &PosteriorDraws,
    prior: &PriorSpec,
) -> Result<BTreeMap<String, ParamSummary>, CliError> {
    let mut params = BTreeMap::new();
    for (idx, name) in draws.names().iter().enumerate() {
        let stats = param_stats(draws, idx);
        let rhat = gelman_rubin(draws, name).map_err(infer_error)?;
        let ess = effective_sample_size(draws, name).map_err(infer_error)?;
        let ppo = if HYPER_NAMES.contains(&name.as_str()) {
            Some(prior_posterior_overlap(draws, name, prior).map_err(infer_error)?)
        } else {
            None
        };
        params.insert(
            name.clone(),
            ParamSummary {
                mean: stats.mean,
                sd: stats.sd,
                median: stats.median,
                q2_5: stats.q2_5,
                q97_5: stats.q97_5,
                rhat: rhat.value,
                ess: ess.value,
                ppo_percent: ppo.map(|p| p.percent),
                weakly_identifiable: ppo.map(|p| p.weakly_identifiable),
            },
        );
    }
    Ok(params)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    input: &Path,
    config: &FileConfig,
    seed: u64,
    out: &Path,
    fast: bool,
    splitting_flag: bool,
    quiet: bool,
) -> Result<(), CliError> {
    let panel = load_panel(input, quiet)?;
    let sampler = config.sampler(seed, fast);
    let prior = config.prior();
    let splitting = splitting_flag
        || config
            .fit
            .and_then(|section| section.splitting)
            .unwrap_or(false);
    let draws = sample(&panel, &prior, &sampler, splitting).map_err(infer_error)?;
    let params = summarize_fit(&draws, &prior)?;
    let report = FitReport {
        command: "fit",
        input: input.display().to_string(),
        seed,
        splitting,
        sampler: &sampler,
        prior: &prior,
        divergences: &draws.divergences,
        mean_accept: &draws.mean_accept,
        params,
    };
    ensure_out_dir(out)?;
    write_text(&out.join("draws.csv"), &draws_csv(&draws))?;
    write_text(&out.join("diagnostics.json"), &to_json(&report)?)?;
    if !quiet {
        let divergent: usize = draws.divergences.iter().sum();
        eprintln!(
            "fit {} chains x {} kept draws ({} divergent transitions) -> {}",
            draws.n_chains(),
            draws.n_kept(),
            divergent,
            out.join("diagnostics.json").display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct GroupCorrelation {
    group: usize,
    rho_tilde: f64,
    rho_star: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    v_x: f64,
    taylor_remainder: f64,
}

#[derive(Serialize)]
struct CorrelateReport<'a> {
    command: &'static str,
    input: String,
    seed: u64,
    hyper_source: String,
    tolerance: f64,
    forced: bool,
    hyper_params: &'a HyperParams,
    stationary_means: &'a StationaryMeans,
    groups: Vec<GroupCorrelation>,
    report: &'a RhoReport,
}

fn group_records(report: &RhoReport) -> Vec<GroupCorrelation> {
    report
        .rho_tilde
        .iter()
        .enumerate()
        .map(|(i, &rho)| GroupCorrelation {
            group: i + 1,
            rho_tilde: rho,
            rho_star: report.rho_star[i],
            a: report.terms[i].a,
            b: report.terms[i].b,
            c: report.terms[i].c,
            d: report.terms[i].d,
            v_x: report.terms[i].v_x,
            taylor_remainder: report.terms[i].taylor_remainder,
        })
        .collect()
}

/// Posterior means of the population-level parameters from a fit
/// diagnostics file.
fn hyper_from_diagnostics(path: &Path) -> Result<HyperParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("reading {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("parsing {}: {e}", path.display())))?;
    let mean_of = |name: &str| -> Result<f64, CliError> {
        value
            .get("params")
            .and_then(|p| p.get(name))
            .and_then(|p| p.get("mean"))
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| {
                CliError::validation(format!(
                    "{} has no posterior mean for {name}",
                    path.display()
                ))
            })
    };
    Ok(HyperParams {
        omega_y: mean_of("omega_Y")?,
        lambda_y: mean_of("lambda_Y")?,
        gamma: mean_of("gamma")?,
        mu_omega: mean_of("mu_omega")?,
        mu_lambda: mean_of("mu_lambda")?,
        mu_psi: mean_of("mu_psi")?,
        mu_delta: mean_of("mu_delta")?,
        sigma_omega: mean_of("sigma_omega")?,
        sigma_lambda: mean_of("sigma_lambda")?,
        sigma_psi: mean_of("sigma_psi")?,
        sigma_delta: mean_of("sigma_delta")?,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_correlate(
    input: &Path,
    hyper_file: Option<&Path>,
    from_fit: Option<&Path>,
    config: &FileConfig,
    tolerance_flag: Option<f64>,
    force: bool,
    seed: u64,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    let panel = load_panel(input, quiet)?;
    let (hyper, hyper_source) = match (hyper_file, from_fit) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("reading {}: {e}", path.display())))?;
            let hyper: HyperParams = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("parsing {}: {e}", path.display())))?;
            (hyper, path.display().to_string())
        }
        (None, Some(path)) => (
            hyper_from_diagnostics(path)?,
            format!("posterior means of {}", path.display()),
        ),
        (None, None) => (config.hyper(), "config".to_string()),
        (Some(_), Some(_)) => {
            return Err(CliError::validation(
                "pass either --hyper or --from-fit, not both".into(),
            ))
        }
    };
    let means =
        stationary_means_from_panel(&panel).map_err(|e| CliError::validation(e.to_string()))?;
    if !means.warnings.is_empty() && !force {
        let mut message = String::from(
            "the series look nonstationary, so the correlation approximation does not apply; \
             rerun with --force to compute it anyway\n",
        );
        for warning in &means.warnings {
            message.push_str(&format!("  {warning}\n"));
        }
        return Err(CliError::validation(message));
    }
    let tolerance = tolerance_flag
        .or(config.correlate.and_then(|c| c.tolerance))
        .unwrap_or(DEFAULT_CONSISTENCY_TOLERANCE);
    let report = rho_tilde_with_tolerance(&means, &hyper, tolerance).map_err(|e| match e {
        CorrError::ZeroMuPsi => CliError::validation(
            "mu_psi must be nonzero for the correlation approximation".into(),
        ),
        other => CliError::validation(other.to_string()),
    })?;
    let artifact = CorrelateReport {
        command: "correlate",
        input: input.display().to_string(),
        seed,
        hyper_source,
        tolerance,
        forced: force,
        hyper_params: &hyper,
        stationary_means: &means,
        groups: group_records(&report),
        report: &report,
    };
    ensure_out_dir(out)?;
    write_text(&out.join("rho_report.json"), &to_json(&artifact)?)?;
    if !quiet {
        eprintln!(
            "dispersion {:.4} ({}) -> {}",
            report.dispersion,
            if report.consistent {
                "consistent"
            } else {
                "inconsistent"
            },
            out.join("rho_report.json").display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ScenarioMeta<'a> {
    command: &'static str,
    master_seed: u64,
    scenario: &'a Scenario,
    report: &'a copar::simstudy::MetricsReport,
}

fn metrics_csv(report: &copar::simstudy::MetricsReport) -> String {
    let mut text = String::from("scenario,parameter,metric,value\n");
    for p in &report.params {
        text.push_str(&format!("{},{},rmse,{}\n", report.scenario, p.name, p.rmse));
        text.push_str(&format!(
            "{},{},median_bias,{}\n",
            report.scenario, p.name, p.median_bias
        ));
        if let Some(mrb) = p.median_relative_bias {
            text.push_str(&format!(
                "{},{},median_relative_bias,{mrb}\n",
                report.scenario, p.name
            ));
        }
    }
    text
}

fn bias_samples_csv(report: &copar::simstudy::MetricsReport) -> String {
    let mut text = String::from("scenario,replicate,parameter,bias,relative_bias\n");
    for p in &report.params {
        for (row, estimate) in report.estimates.iter().enumerate() {
            let bias = p.bias_samples[row];
            let relative = p
                .relative_bias_samples
                .as_ref()
                .map(|v| v[row].to_string())
                .unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{bias},{relative}\n",
                report.scenario, estimate.replicate, p.name
            ));
        }
    }
    text
}

fn confounding_csv(report: &copar::simstudy::MetricsReport) -> String {
    let mut text = String::from("scenario,replicate,omega_Y,lambda_Y,mu_psi,mu_delta\n");
    for block in &report.confounding {
        for row in &block.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                report.scenario, block.replicate, row[0], row[1], row[2], row[3]
            ));
        }
    }
    text
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_scenario(
    id: Option<&str>,
    replicates: Option<usize>,
    fast: bool,
    full: bool,
    config: &FileConfig,
    seed: u64,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    if fast && full {
        return Err(CliError::validation(
            "pass either --fast or --full, not both".into(),
        ));
    }
    let id_text = id
        .map(str::to_string)
        .or_else(|| config.scenario.as_ref().and_then(|s| s.id.clone()))
        .unwrap_or_else(|| "S1".to_string());
    let scenario_id: ScenarioId = id_text
        .parse()
        .map_err(|e: String| CliError::validation(e))?;
    let use_full = full
        || config
            .scenario
            .as_ref()
            .and_then(|s| s.full)
            .unwrap_or(false);
    let mut scenario = if matches!(scenario_id, ScenarioId::Custom) {
        let sim = config.sim_config(seed)?;
        Scenario {
            id: ScenarioId::Custom,
            g: sim.g,
            horizon: sim.horizon,
            truth: config.hyper(),
            n_replicates: 20,
            sampler: config.sampler(seed, !use_full),
        }
    } else if use_full {
        Scenario::builtin(scenario_id).map_err(|e| CliError::validation(e.to_string()))?
    } else {
        Scenario::fast(scenario_id).map_err(|e| CliError::validation(e.to_string()))?
    };
    if let Some(n) = replicates.or_else(|| config.scenario.as_ref().and_then(|s| s.replicates)) {
        scenario.n_replicates = n;
    }
    if !quiet {
        eprintln!(
            "running scenario {} with {} replicates (g={}, horizon={})",
            scenario.id, scenario.n_replicates, scenario.g, scenario.horizon
        );
    }
    let report = run_scenario(&scenario, seed).map_err(|e| match e {
        SimStudyError::AllReplicatesFailed { .. } => CliError::convergence(e.to_string()),
        other => CliError::validation(other.to_string()),
    })?;
    ensure_out_dir(out)?;
    let meta = ScenarioMeta {
        command: "scenario",
        master_seed: seed,
        scenario: &scenario,
        report: &report,
    };
    write_text(&out.join("metrics.json"), &to_json(&meta)?)?;
    write_text(&out.join("metrics.csv"), &metrics_csv(&report))?;
    write_text(&out.join("bias_samples.csv"), &bias_samples_csv(&report))?;
    write_text(&out.join("confounding.csv"), &confounding_csv(&report))?;
    if !quiet {
        eprintln!(
            "{} of {} replicates converged -> {}",
            report.included,
            report.n_replicates,
            out.join("metrics.json").display()
        );
    }
    Ok(())
}
