//! The numeric kernels stay usable in single precision.

use smbbayes_core::analysis::{classify_region, flowrate_ratios, pareto_front, SeparationRegion};
use smbbayes_core::network::derive_flowrates;
use smbbayes_core::presets::klatt_reference;
use smbbayes_core::sampler::{credible_interval, gelman_rhat_chains};
use smbbayes_core::transport::{InletProfile, TransportMode};

#[test]
fn f32_reference_mapping() {
    let case = klatt_reference::<f32>();
    let op = case.operating_point;
    let flows = derive_flowrates(&op).unwrap();
    let ratios = flowrate_ratios(&op, &case.plant.geometry(op.length), &flows);
    assert!((ratios.m2() - 0.308).abs() < 2e-3, "{}", ratios.m2());
    assert!((ratios.m3() - 0.484).abs() < 2e-3, "{}", ratios.m3());
    let iso = case.plant.isotherm().unwrap();
    assert_eq!(
        classify_region(ratios.m2(), ratios.m3(), &iso),
        SeparationRegion::CompleteSeparation
    );
}

#[test]
fn f32_column_pulse() {
    let mut case = klatt_reference::<f32>();
    case.plant.discretization.axial_cells = 16;
    case.plant.discretization.mode = TransportMode::EdmEquilibrium;
    // single precision cannot honour the double-precision preset
    // tolerances; they only gate the negativity guard here
    case.plant.discretization.abs_tol = 1e-6;
    let system =
        smbbayes_core::network::SmbSystem::new(&case.plant, &case.operating_point).unwrap();
    let model = system.model(0);
    let horizon = 3000.0f32;
    let inlet = InletProfile::pulse(2, 0, 100.0, 0.0, 100.0, horizon, 1000);
    let (_, outlet) = model
        .integrate_period(&model.empty_state(), &inlet, horizon)
        .unwrap();
    let recovered = outlet.time_integral(0) / inlet.integral(0);
    assert!((recovered - 1.0).abs() < 0.05, "recovered {recovered}");
}

#[test]
fn f32_statistics() {
    let chains = vec![vec![1.0f32, 2.0, 3.0, 4.0], vec![2.0, 3.0, 4.0, 5.0]];
    let r = gelman_rhat_chains(&chains).unwrap();
    assert!((r - 1.0247).abs() < 1e-3);

    let samples: Vec<f32> = (1..=100).map(|i| i as f32).collect();
    let (lo, hi) = credible_interval(&samples, 0.66f32).unwrap();
    assert!((lo - 17.5).abs() < 1e-3 && (hi - 83.5).abs() < 1e-3);

    let pts = [[1.0f32, 1.0], [2.0, 0.5], [0.5, 2.0], [1.5, 1.5]];
    assert_eq!(pareto_front(&pts).unwrap().front, vec![1, 2, 3]);
}
