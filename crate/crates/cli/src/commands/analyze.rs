//! Post-processing of a sample store into plot-ready tables.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use smbbayes_core::analysis::{
    flowrate_ratios, linear_fit, marginal_density, pareto_front, ppc_envelope,
    ratio_difference_histogram, ratio_differences, triangle_rows, write_envelope_csv,
    write_marginal_csv, write_pareto_csv, write_triangle_csv, LinearFit, RatioPair,
};
use smbbayes_core::network::{derive_flowrates, OperatingPoint, PARAMETER_NAMES};
use smbbayes_core::performance::{ObjectiveSpec, PerformanceRecord};
use smbbayes_core::sampler::{credible_interval, SampleStore};

use crate::config::RunConfig;
use crate::CliError;

use super::{load_metadata, load_store, write_json, write_text};

const ALL_ANALYSES: [&str; 7] = [
    "pareto",
    "marginals",
    "triangle",
    "ppc",
    "fits",
    "ci-table",
    "mdiff",
];

pub fn run(
    config: &RunConfig,
    store_dir: &Path,
    out: &Path,
    analyses: Option<&[String]>,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<(), CliError> {
    let requested: Vec<String> = match analyses {
        None => ALL_ANALYSES.iter().map(|s| s.to_string()).collect(),
        Some(list) => list.iter().filter(|s| !s.is_empty()).cloned().collect(),
    };
    for name in &requested {
        if !ALL_ANALYSES.contains(&name.as_str()) {
            return Err(CliError::invalid(format!(
                "unknown analysis {name:?}; available: {}",
                ALL_ANALYSES.join(", ")
            )));
        }
    }
    if requested.is_empty() {
        return Ok(());
    }

    let meta = load_metadata(store_dir)?;
    let store = load_store(store_dir, &meta)?;
    let plant = config.to_plant();
    plant.validate()?;
    let objective = config.to_objective()?;
    let seed = seed_override.unwrap_or(meta.seed);

    let set: BTreeSet<&str> = requested.iter().map(String::as_str).collect();
    if set.contains("pareto") {
        emit_pareto(&store, &plant.component_names, &objective, out)?;
    }
    if set.contains("marginals") {
        emit_marginals(&store, out)?;
    }
    if set.contains("triangle") {
        let rows = triangle_rows(&store, &plant, &objective)?;
        write_text(&out.join("triangle_m23.csv"), |w| {
            write_triangle_csv(w, &rows, RatioPair::FeedZones).map_err(CliError::from)
        })?;
        write_text(&out.join("triangle_m41.csv"), |w| {
            write_triangle_csv(w, &rows, RatioPair::RecycleZones).map_err(CliError::from)
        })?;
    }
    if set.contains("ppc") {
        let (envelope, _) = ppc_envelope(
            &store,
            &plant,
            config.analysis.ppc_replicates,
            seed,
            threads,
        )?;
        write_text(&out.join("ppc_envelope.csv"), |w| {
            write_envelope_csv(w, &envelope, &plant.component_names).map_err(CliError::from)
        })?;
    }
    if set.contains("fits") {
        emit_fits(&store, &plant, out)?;
    }
    if set.contains("ci-table") {
        emit_ci_table(&store, config.sampler.credible_mass, out)?;
    }
    if set.contains("mdiff") {
        for (pair, name) in [
            (RatioPair::FeedZones, "mdiff_m3_m2.csv"),
            (RatioPair::RecycleZones, "mdiff_m1_m4.csv"),
        ] {
            let diffs = ratio_differences(&store, &plant, pair)?;
            let hist = ratio_difference_histogram(&diffs, config.analysis.histogram_bins)?;
            write_text(&out.join(name), |w| {
                writeln!(w, "bin_lower,bin_upper,count").map_err(CliError::from)?;
                for (b, count) in hist.counts.iter().enumerate() {
                    writeln!(w, "{},{},{count}", hist.edges[b], hist.edges[b + 1])
                        .map_err(CliError::from)?;
                }
                writeln!(w, "# mode,{}", hist.mode).map_err(CliError::from)
            })?;
        }
    }
    Ok(())
}

/// The six indicator pairs plotted against each other: purity vs yield at
/// each port, cross-port purities and yields, purity vs productivity.
fn pareto_pairs(
    objective: &ObjectiveSpec<f64>,
) -> Vec<(&'static str, Box<dyn Fn(&PerformanceRecord<f64>) -> [f64; 2]>, [String; 2])> {
    let e = objective.extract_target;
    let r = objective.raffinate_target;
    vec![
        (
            "pareto_pu_e_y_e.csv",
            Box::new(move |rec| [rec.purity_extract[e], rec.yield_extract[e]]),
            ["purity_extract".into(), "yield_extract".into()],
        ),
        (
            "pareto_pu_r_y_r.csv",
            Box::new(move |rec| [rec.purity_raffinate[r], rec.yield_raffinate[r]]),
            ["purity_raffinate".into(), "yield_raffinate".into()],
        ),
        (
            "pareto_pu_e_pu_r.csv",
            Box::new(move |rec| [rec.purity_extract[e], rec.purity_raffinate[r]]),
            ["purity_extract".into(), "purity_raffinate".into()],
        ),
        (
            "pareto_y_e_y_r.csv",
            Box::new(move |rec| [rec.yield_extract[e], rec.yield_raffinate[r]]),
            ["yield_extract".into(), "yield_raffinate".into()],
        ),
        (
            "pareto_pu_e_pr_e.csv",
            Box::new(move |rec| [rec.purity_extract[e], rec.productivity_extract[e]]),
            ["purity_extract".into(), "productivity_extract".into()],
        ),
        (
            "pareto_pu_r_pr_r.csv",
            Box::new(move |rec| [rec.purity_raffinate[r], rec.productivity_raffinate[r]]),
            ["purity_raffinate".into(), "productivity_raffinate".into()],
        ),
    ]
}

fn emit_pareto(
    store: &SampleStore<f64>,
    _components: &[String],
    objective: &ObjectiveSpec<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let records: Vec<&PerformanceRecord<f64>> = store
        .post_burn_rows()
        .filter_map(|(c, i, _)| store.record(c, i))
        .collect();
    if records.is_empty() {
        return Err(CliError::invalid(
            "store holds no performance records for the pareto fronts",
        ));
    }
    for (file, extract, axes) in pareto_pairs(objective) {
        let points: Vec<[f64; 2]> = records.iter().map(|r| extract(r)).collect();
        let set = pareto_front(&points)?;
        write_text(&out.join(file), |w| {
            write_pareto_csv(w, &points, &set, (&axes[0], &axes[1])).map_err(CliError::from)
        })?;
    }
    Ok(())
}

/// Marginals of the six decision parameters plus the derived raffinate
/// and zone flowrates.
fn derived_series(store: &SampleStore<f64>) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut series: Vec<(String, Vec<f64>)> = PARAMETER_NAMES
        .iter()
        .enumerate()
        .map(|(l, name)| (name.to_string(), store.mixed_param(l)))
        .collect();
    let mut q_r = Vec::new();
    let mut q_zone = vec![Vec::new(); 3];
    for (_, _, row) in store.post_burn_rows() {
        let op = OperatingPoint::from_array(&row.theta);
        let flows = derive_flowrates(&op)?;
        q_r.push(flows.raffinate);
        q_zone[0].push(flows.zones[1]);
        q_zone[1].push(flows.zones[2]);
        q_zone[2].push(flows.zones[3]);
    }
    series.push(("q_raffinate_m3_s".into(), q_r));
    series.push(("q_zone2_m3_s".into(), q_zone[0].clone()));
    series.push(("q_zone3_m3_s".into(), q_zone[1].clone()));
    series.push(("q_zone4_m3_s".into(), q_zone[2].clone()));
    Ok(series)
}

fn emit_marginals(store: &SampleStore<f64>, out: &Path) -> Result<(), CliError> {
    for (name, samples) in derived_series(store)? {
        match marginal_density(&samples) {
            Ok(curve) => write_text(&out.join(format!("marginal_{name}.csv")), |w| {
                write_marginal_csv(w, &curve, &name).map_err(CliError::from)
            })?,
            // single-point stores have no spread; skip quietly
            Err(smbbayes_core::Error::InsufficientSamples(_))
            | Err(smbbayes_core::Error::UndefinedDiagnostic(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    m23: PlaneFit,
    m41: PlaneFit,
}

#[derive(Serialize)]
struct PlaneFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    difference_mode: f64,
}

fn emit_fits(
    store: &SampleStore<f64>,
    plant: &smbbayes_core::network::Plant<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut coords: Vec<[f64; 4]> = Vec::new();
    for (_, _, row) in store.post_burn_rows() {
        let op = OperatingPoint::from_array(&row.theta);
        let flows = derive_flowrates(&op)?;
        let ratios = flowrate_ratios(&op, &plant.geometry(op.length), &flows);
        coords.push(ratios.m);
    }
    if coords.len() < 2 {
        return Err(CliError::invalid("need at least two samples for the fits"));
    }
    let fit_plane = |x: Vec<f64>, y: Vec<f64>, diffs: Vec<f64>| -> Result<PlaneFit, CliError> {
        let fit: LinearFit<f64> = linear_fit(&x, &y)?;
        let hist = ratio_difference_histogram(&diffs, 24)?;
        Ok(PlaneFit {
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            difference_mode: hist.mode,
        })
    };
    let report = FitReport {
        m23: fit_plane(
            coords.iter().map(|m| m[1]).collect(),
            coords.iter().map(|m| m[2]).collect(),
            coords.iter().map(|m| m[2] - m[1]).collect(),
        )?,
        m41: fit_plane(
            coords.iter().map(|m| m[3]).collect(),
            coords.iter().map(|m| m[0]).collect(),
            coords.iter().map(|m| m[0] - m[3]).collect(),
        )?,
    };
    write_json(&out.join("fits.json"), &report)
}

fn emit_ci_table(store: &SampleStore<f64>, mass: f64, out: &Path) -> Result<(), CliError> {
    write_text(&out.join("ci_table.csv"), |w| {
        writeln!(
            w,
            "parameter,mode,ci_lower,ci_upper,dev_lower_pct,dev_upper_pct"
        )
        .map_err(CliError::from)?;
        for (name, samples) in derived_series(store)? {
            if samples.len() < 2 {
                continue;
            }
            let mode = match marginal_density(&samples) {
                Ok(curve) => curve.mode(),
                Err(_) => samples[0],
            };
            let (lower, upper) = credible_interval(&samples, mass)?;
            let dev = |v: f64| ((mode - v) / mode * 100.0).abs();
            writeln!(
                w,
                "{name},{mode},{lower},{upper},{},{}",
                dev(lower),
                dev(upper)
            )
            .map_err(CliError::from)?;
        }
        Ok(())
    })
}
