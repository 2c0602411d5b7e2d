use super::*;

fn reference_geometry(porosity_particle: f64) -> ColumnGeometry<f64> {
    ColumnGeometry {
        length: 0.536,
        diameter: 0.026,
        particle_radius: 1.625e-3,
        porosity_column: 0.38,
        porosity_particle,
    }
}

fn zone_velocity(q: f64, geo: &ColumnGeometry<f64>) -> f64 {
    q / (geo.porosity_column * geo.cross_section())
}

fn edm_discretization(nz: usize) -> Discretization<f64> {
    let preset = edm_limit_preset::<f64>();
    Discretization {
        axial_cells: nz,
        mode: TransportMode::EdmEquilibrium,
        ..preset.discretization
    }
}

fn single_component_model(
    henry: f64,
    mode: TransportMode,
    nz: usize,
    d_ax: f64,
) -> ColumnModel<f64> {
    let preset = edm_limit_preset::<f64>();
    let geo = reference_geometry(preset.porosity_particle);
    let disc = Discretization {
        axial_cells: nz,
        mode,
        ..preset.discretization
    };
    let params = TransportParams {
        axial_dispersion: d_ax,
        pore_diffusion: vec![preset.pore_diffusion],
        film_transfer: vec![preset.film_transfer],
        velocity: zone_velocity(1.047e-7, &geo),
    };
    ColumnModel::new(geo, params, LinearIsotherm::new(vec![henry]).unwrap(), disc).unwrap()
}

#[test]
fn grid_dimensions() {
    let geo = reference_geometry(1e-5);
    let disc = edm_discretization(40);
    let op = build_grid(&geo, &disc).unwrap();
    assert_eq!(op.axial_cells, 40);
    assert_eq!(op.radial_shells, 1);
    assert!((op.cell_width - 0.0134).abs() < 1e-12);

    let two = Discretization {
        axial_cells: 2,
        ..disc
    };
    let op2 = build_grid(&geo, &two).unwrap();
    assert!((op2.cell_width - 0.268).abs() < 1e-12);

    let bad = Discretization {
        axial_cells: 1,
        ..edm_discretization(40)
    };
    assert!(build_grid(&geo, &bad).is_err());
}

#[test]
fn preset_matches_reference_settings() {
    let preset = edm_limit_preset::<f64>();
    assert_eq!(preset.porosity_particle, 1e-5);
    assert_eq!(preset.pore_diffusion, 5e-5);
    assert_eq!(preset.film_transfer, 1.6e4);
    assert_eq!(preset.discretization.abs_tol, 1e-10);
    assert_eq!(preset.discretization.rel_tol, 1e-6);
    assert_eq!(preset.discretization.initial_step, 1e-14);
    assert_eq!(preset.discretization.max_step, 5e6);
    assert_eq!(preset.discretization.radial_shells, 1);

    let geo = reference_geometry(preset.porosity_particle);
    let et = geo.total_porosity();
    assert!((et - (0.38 + 1e-5 * 0.62)).abs() < 1e-12);
}

#[test]
fn zero_inlet_stays_zero() {
    let model = single_component_model(0.54, TransportMode::EdmEquilibrium, 20, 1e-7);
    let state = model.empty_state();
    let inlet = InletProfile::zero(1, 1552.0);
    let (end, outlet) = model.integrate_period(&state, &inlet, 1552.0).unwrap();
    assert!(outlet.samples(0).iter().all(|c| c.abs() < 1e-12));
    assert!(end.bulk(0).iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn pulse_mass_is_conserved_without_adsorption() {
    // Non-retained tracer: everything that goes in must come out.
    for mode in [TransportMode::EdmEquilibrium, TransportMode::GeneralRate] {
        let model = single_component_model(1e-12, mode, 40, 1e-7);
        let horizon = 2500.0;
        let inlet = InletProfile::pulse(1, 0, 100.0, 0.0, 100.0, horizon, 2000);
        let state = model.empty_state();
        let (end, outlet) = model.integrate_period(&state, &inlet, horizon).unwrap();
        let injected = inlet.integral(0);
        let eluted = outlet.time_integral(0);
        let held = model.total_moles(&end)[0]
            / (model.params.velocity * model.geometry.porosity_column * model.geometry.cross_section());
        let recovered = (eluted + held) / injected;
        assert!(
            (recovered - 1.0).abs() < 1e-3,
            "{mode:?}: recovered fraction {recovered}"
        );
    }
}

#[test]
fn retention_time_matches_first_moment_oracle() {
    // First moment of the pulse response equals (L/u)(1 + F H) for linear
    // chromatography with closed-closed boundaries.
    let geo = reference_geometry(1e-5);
    let u = zone_velocity(1.047e-7, &geo);
    let f = geo.phase_ratio();
    for henry in [0.28, 0.54] {
        let model = single_component_model(henry, TransportMode::EdmEquilibrium, 40, 1e-7);
        let horizon = 4000.0;
        let mut disc = model.disc.clone();
        disc.outlet_samples = 800;
        let model = ColumnModel::new(model.geometry, model.params, model.isotherm, disc).unwrap();
        let inlet = InletProfile::pulse(1, 0, 50.0, 0.0, 50.0, horizon, 4000);
        let (_, outlet) = model
            .integrate_period(&model.empty_state(), &inlet, horizon)
            .unwrap();
        let observed = outlet.first_moment(0).unwrap();
        // subtract the centroid of the injected pulse
        let t_inlet = 25.0;
        let expected = geo.length / u * (1.0 + f * henry);
        let rel = ((observed - t_inlet) - expected).abs() / expected;
        assert!(rel < 0.01, "H = {henry}: measured {observed}, expected {expected}");
    }
}

#[test]
fn grm_limit_agrees_with_equilibrium_mode() {
    let horizon = 4000.0;
    let inlet = InletProfile::pulse(1, 0, 100.0, 0.0, 200.0, horizon, 2000);
    let grm = single_component_model(0.54, TransportMode::GeneralRate, 40, 1e-7);
    let edm = single_component_model(0.54, TransportMode::EdmEquilibrium, 40, 1e-7);
    let (_, out_grm) = grm
        .integrate_period(&grm.empty_state(), &inlet, horizon)
        .unwrap();
    let (_, out_edm) = edm
        .integrate_period(&edm.empty_state(), &inlet, horizon)
        .unwrap();
    let peak = out_grm
        .samples(0)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v));
    assert!(peak > 1.0, "pulse never reached the outlet");
    let max_diff = out_grm
        .samples(0)
        .iter()
        .zip(out_edm.samples(0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_diff < 0.01 * peak,
        "traces differ by {max_diff} with peak {peak}"
    );
}

#[test]
fn outlet_average_converges_with_grid_refinement() {
    // Richardson-style check of the spatial order on a partially eluted
    // pulse; the time integration is run much tighter than the grid error.
    let avg = |nz: usize| -> f64 {
        let mut model = single_component_model(0.54, TransportMode::EdmEquilibrium, nz, 1e-6);
        model.disc.abs_tol = 1e-12;
        model.disc.rel_tol = 1e-8;
        model.disc.outlet_samples = 400;
        let model =
            ColumnModel::new(model.geometry, model.params, model.isotherm, model.disc).unwrap();
        let horizon = 2000.0;
        let inlet = InletProfile::pulse(1, 0, 10.0, 0.0, 100.0, horizon, 2000);
        let (_, outlet) = model
            .integrate_period(&model.empty_state(), &inlet, horizon)
            .unwrap();
        outlet.time_average(0)
    };
    let reference = avg(160);
    let e20 = (avg(20) - reference).abs();
    let e40 = (avg(40) - reference).abs();
    let e80 = (avg(80) - reference).abs();
    assert!(e20 > 0.0 && e40 > 0.0 && e80 > 0.0);
    assert!(
        e20 / e40 >= 1.8,
        "error ratio 20->40 too small: {} / {}",
        e20,
        e40
    );
    assert!(
        e40 / e80 >= 1.8,
        "error ratio 40->80 too small: {} / {}",
        e40,
        e80
    );
}

#[test]
fn concentrations_stay_nonnegative() {
    let model = single_component_model(0.28, TransportMode::EdmEquilibrium, 40, 1e-7);
    let horizon = 3000.0;
    let inlet = InletProfile::pulse(1, 0, 3052.8, 0.0, 150.0, horizon, 1500);
    let (end, outlet) = model
        .integrate_period(&model.empty_state(), &inlet, horizon)
        .unwrap();
    let floor = -10.0 * model.disc.abs_tol;
    assert!(end.min_concentration() >= floor);
    assert!(outlet.samples(0).iter().all(|c| *c >= floor));
}

#[test]
fn rejects_bad_horizons() {
    let model = single_component_model(0.54, TransportMode::EdmEquilibrium, 20, 1e-7);
    let inlet = InletProfile::zero(1, 100.0);
    assert!(model
        .integrate_period(&model.empty_state(), &inlet, -1.0)
        .is_err());
    assert!(model
        .integrate_period(&model.empty_state(), &inlet, 500.0)
        .is_err());
}

#[test]
fn isotherm_ordering_is_enforced() {
    assert!(LinearIsotherm::new(vec![0.54, 0.28]).is_err());
    assert!(LinearIsotherm::new(vec![0.28, 0.28]).is_err());
    assert!(LinearIsotherm::<f64>::new(vec![]).is_err());
    assert!(LinearIsotherm::new(vec![0.28, 0.54]).is_ok());
}
