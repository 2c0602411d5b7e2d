//! Bundled reference case: glucose-fructose separation on an eight-column
//! laboratory plant, two columns per zone, linear isotherm.

use crate::network::{NetworkConfig, OperatingBounds, OperatingPoint, Plant};
use crate::performance::ObjectiveSpec;
use crate::scalar::Scalar;
use crate::transport::{edm_limit_preset, TransportMode};

/// A complete runnable case: plant data, the reference operating point,
/// the search box of the design study, and the objective settings.
#[derive(Debug, Clone)]
pub struct ReferenceCase<T> {
    pub plant: Plant<T>,
    pub operating_point: OperatingPoint<T>,
    pub bounds: OperatingBounds<T>,
    pub objective: ObjectiveSpec<T>,
}

/// Feed of 550 g/L at 180.16 g/mol for both sugars, kept to five
/// significant digits.
pub const FEED_CONCENTRATION: f64 = 3052.8;

/// The glucose-fructose reference plant.
///
/// The solver runs the equilibrium-dispersive reduction by default; the
/// particle-side rate coefficients are kept at values fast enough not to
/// be limiting so the general rate mode reproduces the same traces. Axial
/// dispersion defaults to 1e-7 m^2/s in every zone and is overridable per
/// zone through the plant struct.
pub fn klatt_reference<T: Scalar>() -> ReferenceCase<T> {
    let limit = edm_limit_preset::<T>();
    let mut discretization = limit.discretization.clone();
    discretization.mode = TransportMode::EdmEquilibrium;
    let plant = Plant {
        diameter: T::of(2.6e-2),
        particle_radius: T::of(3.25e-3 / 2.0),
        porosity_column: T::of(0.38),
        porosity_particle: limit.porosity_particle,
        henry: vec![T::of(0.28), T::of(0.54)],
        component_names: vec!["glc".into(), "fru".into()],
        network: NetworkConfig {
            columns_per_zone: [2, 2, 2, 2],
            feed_concentration: vec![T::of(FEED_CONCENTRATION); 2],
            desorbent_concentration: vec![T::zero(); 2],
            css_tolerance: T::of(1e-5),
            css_max_switches: 300,
        },
        axial_dispersion: [T::of(1e-7); 4],
        pore_diffusion: vec![limit.pore_diffusion; 2],
        film_transfer: vec![limit.film_transfer; 2],
        discretization,
    };
    let operating_point = OperatingPoint {
        length: T::of(5.36e-1),
        switch_time: T::of(1.552e3),
        q_recycle: T::of(1.395e-7),
        q_feed: T::of(2.00e-8),
        q_desorbent: T::of(4.14e-8),
        q_extract: T::of(3.48e-8),
    };
    let bounds = OperatingBounds {
        lower: OperatingPoint {
            length: T::of(50.0e-2),
            switch_time: T::of(1.5e3),
            q_recycle: T::of(1.0e-7),
            q_feed: T::of(1.5e-8),
            q_desorbent: T::of(3.5e-8),
            q_extract: T::of(3.0e-8),
        },
        upper: OperatingPoint {
            length: T::of(60.0e-2),
            switch_time: T::of(1.6e3),
            q_recycle: T::of(1.8e-7),
            q_feed: T::of(2.5e-8),
            q_desorbent: T::of(4.5e-8),
            q_extract: T::of(4.0e-8),
        },
    };
    let objective = ObjectiveSpec {
        extract_target: 1,
        raffinate_target: 0,
        purity_threshold_extract: T::of(0.99),
        purity_threshold_raffinate: T::of(0.99),
        penalty_factor: T::of(100.0),
    };
    ReferenceCase {
        plant,
        operating_point,
        bounds,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::derive_flowrates;

    #[test]
    fn reference_case_is_valid() {
        let case = klatt_reference::<f64>();
        case.plant.validate().unwrap();
        case.bounds.validate().unwrap();
        case.objective.validate().unwrap();
        assert!(case.bounds.contains(&case.operating_point));
        derive_flowrates(&case.operating_point).unwrap();
        assert!((case.plant.geometry(0.536).total_porosity() - 0.3800062).abs() < 1e-7);
    }
}
