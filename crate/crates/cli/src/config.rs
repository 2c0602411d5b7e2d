//! Run configuration: one JSON file describing the plant, solver,
//! objective and sampler settings, with a bundled reference preset.
//!
//! All quantities are SI; field names carry the unit.

use serde::{Deserialize, Serialize};

use smbbayes_core::network::{
    NetworkConfig, OperatingBounds, OperatingPoint, Plant, N_ZONES,
};
use smbbayes_core::performance::ObjectiveSpec;
use smbbayes_core::presets;
use smbbayes_core::sampler::RunSettings;
use smbbayes_core::transport::{Discretization, TransportMode};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantBlock,
    pub solver: SolverBlock,
    pub operating_point: OperatingPointBlock,
    pub objective: ObjectiveBlock,
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    pub diameter_m: f64,
    pub particle_radius_m: f64,
    pub porosity_column: f64,
    pub porosity_particle: f64,
    /// Henry coefficients, weakly adsorbed component first.
    pub henry: Vec<f64>,
    pub component_names: Vec<String>,
    pub columns_per_zone: [usize; N_ZONES],
    pub feed_concentration_mol_m3: Vec<f64>,
    pub desorbent_concentration_mol_m3: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// `"grm"` or `"edm-equilibrium"`.
    pub mode: TransportMode,
    pub axial_cells: usize,
    pub radial_shells: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step_s: f64,
    pub max_step_s: f64,
    pub outlet_samples: usize,
    pub axial_dispersion_m2_s: [f64; N_ZONES],
    pub pore_diffusion_m2_s: Vec<f64>,
    pub film_transfer_m_s: Vec<f64>,
    pub css_tolerance: f64,
    pub css_max_switches: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointBlock {
    pub length_m: f64,
    pub switch_time_s: f64,
    pub q_recycle_m3_s: f64,
    pub q_feed_m3_s: f64,
    pub q_desorbent_m3_s: f64,
    pub q_extract_m3_s: f64,
}

impl OperatingPointBlock {
    pub fn to_core(self) -> OperatingPoint<f64> {
        OperatingPoint {
            length: self.length_m,
            switch_time: self.switch_time_s,
            q_recycle: self.q_recycle_m3_s,
            q_feed: self.q_feed_m3_s,
            q_desorbent: self.q_desorbent_m3_s,
            q_extract: self.q_extract_m3_s,
        }
    }

    pub fn from_core(op: &OperatingPoint<f64>) -> Self {
        Self {
            length_m: op.length,
            switch_time_s: op.switch_time,
            q_recycle_m3_s: op.q_recycle,
            q_feed_m3_s: op.q_feed,
            q_desorbent_m3_s: op.q_desorbent,
            q_extract_m3_s: op.q_extract,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveBlock {
    /// Component collected at the extract port, by name.
    pub extract_target: String,
    /// Component collected at the raffinate port, by name.
    pub raffinate_target: String,
    pub purity_threshold_extract: f64,
    pub purity_threshold_raffinate: f64,
    pub penalty_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    pub bounds_lower: OperatingPointBlock,
    pub bounds_upper: OperatingPointBlock,
    pub chains: usize,
    /// Stored samples per chain, including the start point.
    pub budget: usize,
    pub burn_in: usize,
    pub rhat_threshold: f64,
    pub check_interval: usize,
    pub adapt_interval: usize,
    pub adapt_enabled: bool,
    pub delayed_rejection: bool,
    /// Second-stage covariance shrink factor.
    pub shrink: f64,
    pub seed: u64,
    pub initial_covariance: InitialCovariance,
    /// Mass of the reported credible intervals.
    pub credible_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCovariance {
    /// Sensitivity-based start covariance from finite differences of the
    /// port traces at the reference point.
    Fisher { sigma0: f64 },
    /// Short diagonal-proposal pre-run; the sample covariance seeds the
    /// chains.
    Pilot { size: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    pub ppc_replicates: usize,
    pub histogram_bins: usize,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            ppc_replicates: 30,
            histogram_bins: 24,
        }
    }
}

impl RunConfig {
    /// The bundled glucose-fructose reference case.
    pub fn klatt_reference() -> Self {
        let case = presets::klatt_reference::<f64>();
        let plant = &case.plant;
        Self {
            plant: PlantBlock {
                diameter_m: plant.diameter,
                particle_radius_m: plant.particle_radius,
                porosity_column: plant.porosity_column,
                porosity_particle: plant.porosity_particle,
                henry: plant.henry.clone(),
                component_names: plant.component_names.clone(),
                columns_per_zone: plant.network.columns_per_zone,
                feed_concentration_mol_m3: plant.network.feed_concentration.clone(),
                desorbent_concentration_mol_m3: plant.network.desorbent_concentration.clone(),
            },
            solver: SolverBlock {
                mode: plant.discretization.mode,
                axial_cells: plant.discretization.axial_cells,
                radial_shells: plant.discretization.radial_shells,
                abs_tol: plant.discretization.abs_tol,
                rel_tol: plant.discretization.rel_tol,
                initial_step_s: plant.discretization.initial_step,
                max_step_s: plant.discretization.max_step,
                outlet_samples: plant.discretization.outlet_samples,
                axial_dispersion_m2_s: plant.axial_dispersion,
                pore_diffusion_m2_s: plant.pore_diffusion.clone(),
                film_transfer_m_s: plant.film_transfer.clone(),
                css_tolerance: plant.network.css_tolerance,
                css_max_switches: plant.network.css_max_switches,
            },
            operating_point: OperatingPointBlock::from_core(&case.operating_point),
            objective: ObjectiveBlock {
                extract_target: plant.component_names[case.objective.extract_target].clone(),
                raffinate_target: plant.component_names[case.objective.raffinate_target].clone(),
                purity_threshold_extract: case.objective.purity_threshold_extract,
                purity_threshold_raffinate: case.objective.purity_threshold_raffinate,
                penalty_factor: case.objective.penalty_factor,
            },
            sampler: SamplerBlock {
                bounds_lower: OperatingPointBlock::from_core(&case.bounds.lower),
                bounds_upper: OperatingPointBlock::from_core(&case.bounds.upper),
                chains: 2,
                budget: 400,
                burn_in: 50,
                rhat_threshold: 1.1,
                check_interval: 10,
                adapt_interval: 50,
                adapt_enabled: true,
                delayed_rejection: true,
                shrink: 0.1,
                seed: 0,
                initial_covariance: InitialCovariance::Fisher { sigma0: 1.0 },
                credible_mass: 0.66,
            },
            analysis: AnalysisBlock::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| CliError::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = self.plant.henry.len();
        let check = |ok: bool, path: &str, msg: &str| -> Result<(), CliError> {
            if ok {
                Ok(())
            } else {
                Err(CliError::invalid(format!("{path}: {msg}")))
            }
        };
        check(m >= 2, "plant.henry", "need at least two components")?;
        check(
            self.plant.component_names.len() == m,
            "plant.component_names",
            "must match the component count",
        )?;
        check(
            self.plant.feed_concentration_mol_m3.len() == m,
            "plant.feed_concentration_mol_m3",
            "must match the component count",
        )?;
        check(
            self.plant.desorbent_concentration_mol_m3.len() == m,
            "plant.desorbent_concentration_mol_m3",
            "must match the component count",
        )?;
        check(
            self.plant.porosity_column > 0.0 && self.plant.porosity_column < 1.0,
            "plant.porosity_column",
            "must lie in (0, 1)",
        )?;
        check(
            self.plant.porosity_particle >= 0.0 && self.plant.porosity_particle < 1.0,
            "plant.porosity_particle",
            "must lie in [0, 1)",
        )?;
        check(
            self.solver.pore_diffusion_m2_s.len() == m,
            "solver.pore_diffusion_m2_s",
            "must match the component count",
        )?;
        check(
            self.solver.film_transfer_m_s.len() == m,
            "solver.film_transfer_m_s",
            "must match the component count",
        )?;
        check(self.solver.axial_cells >= 2, "solver.axial_cells", "must be at least 2")?;
        check(
            self.solver.radial_shells >= 1,
            "solver.radial_shells",
            "must be at least 1",
        )?;
        check(
            self.solver.outlet_samples >= 8,
            "solver.outlet_samples",
            "must be at least 8",
        )?;
        check(
            self.solver.css_tolerance > 0.0,
            "solver.css_tolerance",
            "must be positive",
        )?;
        check(
            self.solver.css_max_switches >= 1,
            "solver.css_max_switches",
            "must be at least 1",
        )?;
        self.component_index(&self.objective.extract_target, "objective.extract_target")?;
        self.component_index(&self.objective.raffinate_target, "objective.raffinate_target")?;
        check(
            self.objective.purity_threshold_extract > 0.0
                && self.objective.purity_threshold_extract < 1.0,
            "objective.purity_threshold_extract",
            "must lie in (0, 1)",
        )?;
        check(
            self.objective.purity_threshold_raffinate > 0.0
                && self.objective.purity_threshold_raffinate < 1.0,
            "objective.purity_threshold_raffinate",
            "must lie in (0, 1)",
        )?;
        check(
            self.objective.penalty_factor > 0.0,
            "objective.penalty_factor",
            "must be positive",
        )?;
        check(self.sampler.chains >= 2, "sampler.chains", "need at least two chains")?;
        check(
            self.sampler.budget > self.sampler.burn_in,
            "sampler.budget",
            "must exceed the burn-in length",
        )?;
        check(
            self.sampler.shrink > 0.0 && self.sampler.shrink < 1.0,
            "sampler.shrink",
            "must lie in (0, 1)",
        )?;
        check(
            self.sampler.credible_mass > 0.0 && self.sampler.credible_mass <= 1.0,
            "sampler.credible_mass",
            "must lie in (0, 1]",
        )?;
        let lo = self.sampler.bounds_lower.to_core().to_array();
        let hi = self.sampler.bounds_upper.to_core().to_array();
        check(
            lo.iter().zip(&hi).all(|(l, h)| l < h),
            "sampler.bounds_lower",
            "every bound must satisfy min < max",
        )?;
        check(
            self.analysis.ppc_replicates >= 2,
            "analysis.ppc_replicates",
            "need at least two replicates",
        )?;
        Ok(())
    }

    pub fn component_index(&self, name: &str, path: &str) -> Result<usize, CliError> {
        self.plant
            .component_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                CliError::invalid(format!(
                    "{path}: unknown component {name:?} (have {:?})",
                    self.plant.component_names
                ))
            })
    }

    pub fn to_plant(&self) -> Plant<f64> {
        Plant {
            diameter: self.plant.diameter_m,
            particle_radius: self.plant.particle_radius_m,
            porosity_column: self.plant.porosity_column,
            porosity_particle: self.plant.porosity_particle,
            henry: self.plant.henry.clone(),
            component_names: self.plant.component_names.clone(),
            network: NetworkConfig {
                columns_per_zone: self.plant.columns_per_zone,
                feed_concentration: self.plant.feed_concentration_mol_m3.clone(),
                desorbent_concentration: self.plant.desorbent_concentration_mol_m3.clone(),
                css_tolerance: self.solver.css_tolerance,
                css_max_switches: self.solver.css_max_switches,
            },
            axial_dispersion: self.solver.axial_dispersion_m2_s,
            pore_diffusion: self.solver.pore_diffusion_m2_s.clone(),
            film_transfer: self.solver.film_transfer_m_s.clone(),
            discretization: Discretization {
                axial_cells: self.solver.axial_cells,
                radial_shells: self.solver.radial_shells,
                mode: self.solver.mode,
                abs_tol: self.solver.abs_tol,
                rel_tol: self.solver.rel_tol,
                initial_step: self.solver.initial_step_s,
                max_step: self.solver.max_step_s,
                outlet_samples: self.solver.outlet_samples,
            },
        }
    }

    pub fn to_objective(&self) -> Result<ObjectiveSpec<f64>, CliError> {
        Ok(ObjectiveSpec {
            extract_target: self
                .component_index(&self.objective.extract_target, "objective.extract_target")?,
            raffinate_target: self
                .component_index(&self.objective.raffinate_target, "objective.raffinate_target")?,
            purity_threshold_extract: self.objective.purity_threshold_extract,
            purity_threshold_raffinate: self.objective.purity_threshold_raffinate,
            penalty_factor: self.objective.penalty_factor,
        })
    }

    pub fn to_bounds(&self) -> OperatingBounds<f64> {
        OperatingBounds {
            lower: self.sampler.bounds_lower.to_core(),
            upper: self.sampler.bounds_upper.to_core(),
        }
    }

    pub fn to_run_settings(&self, seed_override: Option<u64>) -> RunSettings<f64> {
        RunSettings {
            chains: self.sampler.chains,
            budget: self.sampler.budget,
            burn_in: self.sampler.burn_in,
            rhat_threshold: self.sampler.rhat_threshold,
            check_interval: self.sampler.check_interval,
            adapt_interval: self.sampler.adapt_interval,
            adapt_enabled: self.sampler.adapt_enabled,
            delayed_rejection: self.sampler.delayed_rejection,
            seed: seed_override.unwrap_or(self.sampler.seed),
            freeze_on_converge: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips() {
        let config = RunConfig::klatt_reference();
        config.validate().unwrap();
        let text = config.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut value: serde_json::Value =
            serde_json::from_str(&RunConfig::klatt_reference().to_json()).unwrap();
        value["plant"]["unexpected"] = serde_json::json!(1);
        let err = RunConfig::from_json(&value.to_string()).unwrap_err();
        assert!(format!("{err}").contains("unexpected"));
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut config = RunConfig::klatt_reference();
        config.plant.porosity_column = 1.5;
        let err = config.validate().unwrap_err();
        assert!(format!("{err}").contains("plant.porosity_column"));

        let mut config = RunConfig::klatt_reference();
        config.objective.extract_target = "xyz".into();
        let err = config.validate().unwrap_err();
        assert!(format!("{err}").contains("objective.extract_target"));

        let mut config = RunConfig::klatt_reference();
        config.sampler.budget = 0;
        assert!(config.validate().is_err());
    }
}
