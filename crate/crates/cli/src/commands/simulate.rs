//! Forward simulation of the configured operating point.

use std::path::Path;

use serde::Serialize;

use smbbayes_core::network::{derive_flowrates, write_chromatogram_csv, SmbSystem};
use smbbayes_core::performance::{
    evaluate_objective, indicators, log_likelihood, period_average, PerformanceRecord,
};
use smbbayes_core::sampler::{SampleRow, SampleStore};
use smbbayes_core::Error;

use crate::config::RunConfig;
use crate::CliError;

use super::{persist_store, write_json, write_text, RunMetadata};

#[derive(Serialize)]
struct SimulationReport {
    switches: usize,
    residual: f64,
    log_posterior: f64,
    record: PerformanceRecord<f64>,
}

pub fn run(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let plant = config.to_plant();
    plant.validate()?;
    let objective = config.to_objective()?;
    let op = config.operating_point.to_core();
    let flows = derive_flowrates(&op)?;

    let system = SmbSystem::new(&plant, &op)?;
    let css = system.simulate_to_css()?;

    let profile = system.axial_profile(&css.state);
    write_text(&out.join("chromatogram.csv"), |w| {
        write_chromatogram_csv(w, &profile, &plant.component_names).map_err(CliError::from)
    })?;

    let avg_e = period_average(&css.state.extract_trace, op.switch_time)?;
    let avg_r = period_average(&css.state.raffinate_trace, op.switch_time)?;
    let record = match indicators(&avg_e, &avg_r, &flows, &op, &plant.network, &system.geometry) {
        Ok(mut record) => {
            evaluate_objective(&mut record, &objective);
            record
        }
        // A zero-feed plant reaches an all-zero steady state; report a
        // zeroed record with undefined purities instead of failing.
        Err(Error::DegenerateSimulation(_)) => {
            let m = plant.network.n_components();
            PerformanceRecord {
                average_extract: avg_e,
                average_raffinate: avg_r,
                purity_extract: vec![f64::NAN; m],
                purity_raffinate: vec![f64::NAN; m],
                yield_extract: vec![0.0; m],
                yield_raffinate: vec![0.0; m],
                productivity_extract: vec![0.0; m],
                productivity_raffinate: vec![0.0; m],
                objective: 0.0,
                penalty: 0.0,
                total: 0.0,
            }
        }
        Err(e) => return Err(e.into()),
    };
    let log_posterior = log_likelihood(record.total)?;

    write_json(
        &out.join("performance.json"),
        &SimulationReport {
            switches: css.switches,
            residual: css.residual,
            log_posterior,
            record: record.clone(),
        },
    )?;

    // single-point store so `analyze` can run on a forward simulation
    let store = SampleStore {
        n_params: smbbayes_core::network::N_PARAMETERS,
        burn_in: 0,
        chains: vec![vec![SampleRow {
            iteration: 0,
            theta: op.to_array().to_vec(),
            log_posterior,
            objective: [record.objective, record.penalty, record.total],
            accepted_stage: 0,
        }]],
        records: vec![vec![Some(record.clone())]],
    };
    let meta = RunMetadata {
        seed: 0,
        chains: 1,
        budget: 1,
        burn_in: 0,
        rhat_threshold: config.sampler.rhat_threshold,
        check_interval: config.sampler.check_interval,
        adapt_interval: config.sampler.adapt_interval,
        delayed_rejection: config.sampler.delayed_rejection,
        penalty_factor: config.objective.penalty_factor,
        purity_threshold_extract: config.objective.purity_threshold_extract,
        purity_threshold_raffinate: config.objective.purity_threshold_raffinate,
        component_names: plant.component_names.clone(),
        parameter_names: smbbayes_core::network::PARAMETER_NAMES
            .iter()
            .map(|s| s.to_string())
            .collect(),
        converged: true,
        stopped_at: 1,
        acceptance_first: vec![0],
        acceptance_second: vec![0],
    };
    persist_store(out, &store, &meta)?;

    println!(
        "cyclic steady state after {} switches (residual {:.3e})",
        css.switches, css.residual
    );
    let e = objective.extract_target;
    let r = objective.raffinate_target;
    println!(
        "purity  {}: extract {:.4}, {} raffinate {:.4}",
        plant.component_names[e],
        record.purity_extract[e],
        plant.component_names[r],
        record.purity_raffinate[r]
    );
    println!(
        "yield   {}: extract {:.4}, {} raffinate {:.4}",
        plant.component_names[e],
        record.yield_extract[e],
        plant.component_names[r],
        record.yield_raffinate[r]
    );
    Ok(())
}
