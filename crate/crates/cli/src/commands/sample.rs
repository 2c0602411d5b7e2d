//! Posterior sampling of the operating conditions.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use smbbayes_core::network::{OperatingPoint, Plant, SmbSystem, PARAMETER_NAMES};
use smbbayes_core::performance::SmbPosterior;
use smbbayes_core::sampler::{
    credible_interval, initial_covariance_fisher, initial_covariance_pilot, metropolis_step,
    resume_chains, run_chains, ChainState, Checkpoint, Evaluation, PriorSpec,
    ProposalCovariance, RunOutcome, TargetDensity,
};

use crate::config::{InitialCovariance, RunConfig};
use crate::CliError;

use super::{
    persist_store, write_json, CredibleRow, DiagnosticsReport, RunMetadata,
};

/// Concatenated port traces at cyclic steady state; the observation
/// vector whose parameter sensitivities seed the proposal covariance.
fn trace_observables(plant: &Plant<f64>, theta: &[f64]) -> smbbayes_core::Result<Vec<f64>> {
    let op = OperatingPoint::from_array(theta);
    let system = SmbSystem::new(plant, &op)?;
    let css = system.simulate_to_css()?;
    let m = plant.network.n_components();
    let mut out = Vec::new();
    for i in 0..m {
        out.extend_from_slice(css.state.extract_trace.samples(i));
        out.extend_from_slice(css.state.raffinate_trace.samples(i));
    }
    Ok(out)
}

/// Short single-chain pre-run with a diagonal proposal sized from the
/// box widths; its visited points seed the covariance.
fn pilot_points(
    posterior: &SmbPosterior<f64>,
    prior: &PriorSpec<f64>,
    theta0: &[f64],
    size: usize,
    seed: u64,
    shrink: f64,
) -> Result<Vec<Vec<f64>>, CliError> {
    let n = prior.dim();
    let mut sigma = smbbayes_core::linalg::Matrix::zeros(n, n);
    for i in 0..n {
        let w = (prior.upper[i] - prior.lower[i]) / 50.0;
        sigma[(i, i)] = w * w;
    }
    let cov = ProposalCovariance::from_sigma(sigma, shrink, prior.regularization())?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // stream 0 is reserved for the pilot; chains use 1..
    rng.set_stream(0);
    let eval = if prior.contains(theta0) {
        posterior.log_density(theta0)
    } else {
        Evaluation::rejected()
    };
    let mut chain = ChainState::new(theta0.to_vec(), eval);
    let mut points = vec![chain.theta.clone()];
    for _ in 1..size {
        metropolis_step(&mut chain, &cov, posterior, prior, &mut rng, true);
        points.push(chain.theta.clone());
    }
    Ok(points)
}

pub fn run(
    config: &RunConfig,
    out: &Path,
    seed_override: Option<u64>,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let plant = config.to_plant();
    plant.validate()?;
    let objective = config.to_objective()?;
    let posterior = SmbPosterior::new(plant.clone(), objective)?;
    let bounds = config.to_bounds();
    bounds.validate()?;
    let prior = PriorSpec::from_bounds(&bounds)?;
    let settings = config.to_run_settings(seed_override);
    settings.validate()?;

    let checkpoint_file = out.join("checkpoint.json");
    let mut sink_error: Option<CliError> = None;
    let mut sink = |cp: &Checkpoint<f64>| {
        if sink_error.is_none() {
            if let Err(e) = write_json(&checkpoint_file, cp) {
                sink_error = Some(e);
            }
        }
    };

    let outcome: RunOutcome<f64> = match resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::invalid(format!("cannot read checkpoint {}: {e}", path.display()))
            })?;
            let checkpoint: Checkpoint<f64> = serde_json::from_str(&text)
                .map_err(|e| CliError::invalid(format!("corrupt checkpoint: {e}")))?;
            resume_chains(&posterior, &prior, checkpoint, &settings, Some(&mut sink))?
        }
        None => {
            let theta0 = config.operating_point.to_core().to_array().to_vec();
            let initial_cov = match config.sampler.initial_covariance {
                InitialCovariance::Fisher { sigma0 } => initial_covariance_fisher(
                    &theta0,
                    |theta: &[f64]| trace_observables(&plant, theta),
                    sigma0,
                    config.sampler.shrink,
                    &prior,
                )?,
                InitialCovariance::Pilot { size } => {
                    let pilot = pilot_points(
                        &posterior,
                        &prior,
                        &theta0,
                        size,
                        settings.seed,
                        config.sampler.shrink,
                    )?;
                    initial_covariance_pilot(&pilot, config.sampler.shrink, prior.regularization())?
                }
            };
            let starts = vec![theta0; settings.chains];
            run_chains(&posterior, &prior, &initial_cov, &starts, &settings, Some(&mut sink))?
        }
    };
    if let Some(e) = sink_error {
        return Err(e);
    }

    let meta = RunMetadata {
        seed: settings.seed,
        chains: settings.chains,
        budget: settings.budget,
        burn_in: settings.burn_in,
        rhat_threshold: settings.rhat_threshold,
        check_interval: settings.check_interval,
        adapt_interval: settings.adapt_interval,
        delayed_rejection: settings.delayed_rejection,
        penalty_factor: config.objective.penalty_factor,
        purity_threshold_extract: config.objective.purity_threshold_extract,
        purity_threshold_raffinate: config.objective.purity_threshold_raffinate,
        component_names: plant.component_names.clone(),
        parameter_names: PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
        converged: outcome.converged,
        stopped_at: outcome.stopped_at,
        acceptance_first: outcome.chain_states.iter().map(|s| s.accepted_first).collect(),
        acceptance_second: outcome
            .chain_states
            .iter()
            .map(|s| s.accepted_second)
            .collect(),
    };
    persist_store(out, &outcome.store, &meta)?;

    let diagnostics = diagnostics_report(config, &outcome)?;
    write_json(&out.join("diagnostics.json"), &diagnostics)?;

    println!(
        "{} chains x {} samples, converged: {} (stopped at {})",
        settings.chains, settings.budget, outcome.converged, outcome.stopped_at
    );
    for (l, name) in PARAMETER_NAMES.iter().enumerate() {
        println!(
            "  {name}: rhat {:.4}, ess {:.1}",
            diagnostics.rhat[l], diagnostics.ess[l]
        );
    }
    Ok(())
}

fn diagnostics_report(
    config: &RunConfig,
    outcome: &RunOutcome<f64>,
) -> Result<DiagnosticsReport, CliError> {
    let store = &outcome.store;
    let mass = config.sampler.credible_mass;
    let mut intervals = Vec::new();
    for (l, name) in PARAMETER_NAMES.iter().enumerate() {
        let samples = store.mixed_param(l);
        if samples.is_empty() {
            continue;
        }
        let (lower, upper) = credible_interval(&samples, mass)?;
        intervals.push(CredibleRow {
            parameter: name.to_string(),
            lower,
            upper,
        });
    }
    Ok(DiagnosticsReport {
        rhat: outcome.diagnostics.rhat.clone(),
        ess: outcome.diagnostics.ess.clone(),
        mean_ess: outcome.diagnostics.mean_ess,
        threshold: outcome.diagnostics.threshold,
        converged: outcome.diagnostics.converged,
        credible_mass: mass,
        credible_intervals: intervals,
        rhat_history: outcome.rhat_history.clone(),
    })
}
