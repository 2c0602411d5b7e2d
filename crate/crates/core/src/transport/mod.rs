//! Single-column chromatography model.
//!
//! Solves the general rate model (bulk convection-dispersion, film mass
//! transfer, intraparticle pore diffusion, linear adsorption) over one
//! switching period by a finite-volume method of lines. An
//! equilibrium-dispersive reduction is available for fast evaluations: the
//! particle phase is eliminated through the linear isotherm, leaving one
//! retarded advection-dispersion equation per component.

mod integrator;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which column model the solver integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    /// Full general rate model with film transfer and pore diffusion.
    #[serde(rename = "grm")]
    GeneralRate,
    /// Equilibrium-dispersive limit: one retarded equation per component.
    #[serde(rename = "edm-equilibrium")]
    EdmEquilibrium,
}

/// Column and packing geometry. Lengths in metres.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ColumnGeometry<T> {
    pub length: T,
    pub diameter: T,
    pub particle_radius: T,
    pub porosity_column: T,
    pub porosity_particle: T,
}

impl<T: Scalar> ColumnGeometry<T> {
    /// Total porosity `eps_t = eps_c + eps_p (1 - eps_c)`.
    pub fn total_porosity(&self) -> T {
        self.porosity_column + self.porosity_particle * (T::one() - self.porosity_column)
    }

    /// Cross-section area in m^2.
    pub fn cross_section(&self) -> T {
        T::of(std::f64::consts::PI) * self.diameter * self.diameter / T::of(4.0)
    }

    /// Column volume in m^3.
    pub fn volume(&self) -> T {
        self.length * self.cross_section()
    }

    /// Phase ratio `(1 - eps_t) / eps_t` of the equilibrium-dispersive form.
    pub fn phase_ratio(&self) -> T {
        let et = self.total_porosity();
        (T::one() - et) / et
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length > T::zero()
            && self.diameter > T::zero()
            && self.particle_radius > T::zero()
            && self.porosity_column > T::zero()
            && self.porosity_column < T::one()
            && self.porosity_particle >= T::zero()
            && self.porosity_particle < T::one();
        if !ok {
            return Err(Error::InvalidGeometry(format!("{self:?}")));
        }
        let et = self.total_porosity();
        if et < self.porosity_column || et >= T::one() {
            return Err(Error::InvalidGeometry(format!(
                "total porosity {} outside [{}, 1)",
                et.as_f64(),
                self.porosity_column.as_f64()
            )));
        }
        Ok(())
    }
}

/// Rate and dispersion parameters of one column. SI units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportParams<T> {
    /// Axial dispersion coefficient, m^2/s.
    pub axial_dispersion: T,
    /// Effective pore diffusion per component, m^2/s.
    pub pore_diffusion: Vec<T>,
    /// Film mass transfer coefficient per component, m/s.
    pub film_transfer: Vec<T>,
    /// Interstitial velocity, m/s.
    pub velocity: T,
}

impl<T: Scalar> TransportParams<T> {
    pub fn validate(&self, n_components: usize) -> Result<()> {
        if self.pore_diffusion.len() != n_components || self.film_transfer.len() != n_components {
            return Err(Error::InvalidInput(format!(
                "expected {n_components} per-component rate coefficients"
            )));
        }
        let positive = self.axial_dispersion > T::zero()
            && self.velocity > T::zero()
            && self.pore_diffusion.iter().all(|d| *d > T::zero())
            && self.film_transfer.iter().all(|k| *k > T::zero());
        if !positive {
            return Err(Error::InvalidInput(
                "transport parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Linear adsorption equilibrium `q_i = H_i c_p,i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearIsotherm<T> {
    henry: Vec<T>,
}

impl<T: Scalar> LinearIsotherm<T> {
    /// Components must be ordered by increasing Henry coefficient
    /// (weakly adsorbed first).
    pub fn new(henry: Vec<T>) -> Result<Self> {
        if henry.is_empty() {
            return Err(Error::InvalidInput("no components".into()));
        }
        if henry.iter().any(|h| *h <= T::zero()) {
            return Err(Error::InvalidInput("Henry coefficients must be positive".into()));
        }
        if henry.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "Henry coefficients must be strictly increasing".into(),
            ));
        }
        Ok(Self { henry })
    }

    pub fn henry(&self) -> &[T] {
        &self.henry
    }

    pub fn n_components(&self) -> usize {
        self.henry.len()
    }
}

/// Spatial and temporal solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretization<T> {
    pub axial_cells: usize,
    pub radial_shells: usize,
    pub mode: TransportMode,
    pub abs_tol: T,
    pub rel_tol: T,
    /// First step attempted after each period start, in seconds.
    pub initial_step: T,
    pub max_step: T,
    /// Uniform outlet samples recorded per integration horizon.
    pub outlet_samples: usize,
}

impl<T: Scalar> Discretization<T> {
    pub fn validate(&self) -> Result<()> {
        if self.axial_cells < 2 {
            return Err(Error::InvalidDiscretization(format!(
                "axial cell count {} below 2",
                self.axial_cells
            )));
        }
        if self.radial_shells < 1 {
            return Err(Error::InvalidDiscretization("radial shell count below 1".into()));
        }
        let pos = self.abs_tol > T::zero()
            && self.rel_tol > T::zero()
            && self.initial_step > T::zero()
            && self.max_step > T::zero();
        if !pos {
            return Err(Error::InvalidDiscretization(
                "tolerances and step sizes must be positive".into(),
            ));
        }
        if self.outlet_samples < 8 {
            return Err(Error::InvalidDiscretization(
                "need at least 8 outlet samples per period".into(),
            ));
        }
        Ok(())
    }
}

/// Settings that push the general rate model into its equilibrium-dispersive
/// limit: one radial shell, vanishing particle porosity, and rate
/// coefficients fast enough not to be limiting.
#[derive(Debug, Clone)]
pub struct EdmLimitPreset<T> {
    pub discretization: Discretization<T>,
    pub porosity_particle: T,
    pub pore_diffusion: T,
    pub film_transfer: T,
}

pub fn edm_limit_preset<T: Scalar>() -> EdmLimitPreset<T> {
    EdmLimitPreset {
        discretization: Discretization {
            axial_cells: 40,
            radial_shells: 1,
            mode: TransportMode::GeneralRate,
            abs_tol: T::of(1e-10),
            rel_tol: T::of(1e-6),
            initial_step: T::of(1e-14),
            max_step: T::of(5e6),
            outlet_samples: 200,
        },
        porosity_particle: T::of(1e-5),
        pore_diffusion: T::of(5e-5),
        film_transfer: T::of(1.6e4),
    }
}

/// Discrete concentrations of one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ColumnState<T> {
    n_components: usize,
    axial_cells: usize,
    radial_shells: usize,
    /// Bulk liquid concentration, `[component][cell]`, mol/m^3.
    bulk: Vec<T>,
    /// Particle liquid concentration, `[component][cell][shell]`, mol/m^3.
    pore: Vec<T>,
    /// Adsorbed concentration, `[component][cell][shell]`, mol/m^3.
    bound: Vec<T>,
    /// Simulation clock, s.
    pub time: T,
}

impl<T: Scalar> ColumnState<T> {
    pub fn zeros(n_components: usize, axial_cells: usize, radial_shells: usize) -> Self {
        Self {
            n_components,
            axial_cells,
            radial_shells,
            bulk: vec![T::zero(); n_components * axial_cells],
            pore: vec![T::zero(); n_components * axial_cells * radial_shells],
            bound: vec![T::zero(); n_components * axial_cells * radial_shells],
            time: T::zero(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn axial_cells(&self) -> usize {
        self.axial_cells
    }

    pub fn radial_shells(&self) -> usize {
        self.radial_shells
    }

    pub fn bulk(&self, component: usize) -> &[T] {
        let nz = self.axial_cells;
        &self.bulk[component * nz..(component + 1) * nz]
    }

    pub fn bulk_mut(&mut self, component: usize) -> &mut [T] {
        let nz = self.axial_cells;
        &mut self.bulk[component * nz..(component + 1) * nz]
    }

    pub fn pore(&self, component: usize) -> &[T] {
        let n = self.axial_cells * self.radial_shells;
        &self.pore[component * n..(component + 1) * n]
    }

    pub fn pore_mut(&mut self, component: usize) -> &mut [T] {
        let n = self.axial_cells * self.radial_shells;
        &mut self.pore[component * n..(component + 1) * n]
    }

    pub fn bound(&self, component: usize) -> &[T] {
        let n = self.axial_cells * self.radial_shells;
        &self.bound[component * n..(component + 1) * n]
    }

    pub fn bound_mut(&mut self, component: usize) -> &mut [T] {
        let n = self.axial_cells * self.radial_shells;
        &mut self.bound[component * n..(component + 1) * n]
    }

    pub fn min_concentration(&self) -> T {
        let mut m = T::infinity();
        for v in self.bulk.iter().chain(&self.pore).chain(&self.bound) {
            m = m.min(*v);
        }
        m
    }
}

/// Piecewise-linear inlet concentration over one integration horizon.
///
/// When the profile was produced by the column solver it also carries the
/// exact integral of the concentration over every sample interval, which
/// the solver uses to keep the mass hand-off between columns exact.
#[derive(Debug, Clone)]
pub struct InletProfile<T> {
    span: T,
    /// `[component][sample]`, uniform grid including both endpoints.
    values: Vec<Vec<T>>,
    /// `[component][interval]`, exact integrals where available.
    interval_integrals: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> InletProfile<T> {
    pub fn from_samples(span: T, values: Vec<Vec<T>>) -> Result<Self> {
        if span <= T::zero() {
            return Err(Error::InvalidInput("inlet span must be positive".into()));
        }
        if values.is_empty() || values.iter().any(|v| v.len() < 2) {
            return Err(Error::InvalidInput("inlet profile needs >= 2 samples".into()));
        }
        let len = values[0].len();
        if values.iter().any(|v| v.len() != len) {
            return Err(Error::InvalidInput("ragged inlet profile".into()));
        }
        Ok(Self {
            span,
            values,
            interval_integrals: None,
        })
    }

    pub fn zero(n_components: usize, span: T) -> Self {
        Self {
            span,
            values: vec![vec![T::zero(); 2]; n_components],
            interval_integrals: None,
        }
    }

    pub fn constant(levels: &[T], span: T) -> Self {
        Self {
            span,
            values: levels.iter().map(|c| vec![*c; 2]).collect(),
            interval_integrals: None,
        }
    }

    /// Rectangular pulse on one component, zero elsewhere.
    pub fn pulse(
        n_components: usize,
        component: usize,
        level: T,
        t_on: T,
        t_off: T,
        span: T,
        samples: usize,
    ) -> Self {
        let mut values = vec![vec![T::zero(); samples + 1]; n_components];
        for s in 0..=samples {
            let t = span * T::from_count(s) / T::from_count(samples);
            if t >= t_on && t <= t_off {
                values[component][s] = level;
            }
        }
        Self {
            span,
            values,
            interval_integrals: None,
        }
    }

    pub fn span(&self) -> T {
        self.span
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    /// Number of sample intervals of the uniform grid.
    pub fn intervals(&self) -> usize {
        self.values[0].len() - 1
    }

    /// Linear interpolation; clamps outside `[0, span]`.
    pub fn eval(&self, component: usize, t: T) -> T {
        let vals = &self.values[component];
        let n = vals.len() - 1;
        let x = (t / self.span * T::from_count(n)).max(T::zero());
        let i = x.floor().as_f64() as usize;
        if i >= n {
            return vals[n];
        }
        let frac = x - T::from_count(i);
        vals[i] + frac * (vals[i + 1] - vals[i])
    }

    /// Time integral over the full span: exact where interval integrals
    /// are available, trapezoid of the piecewise-linear samples otherwise.
    pub fn integral(&self, component: usize) -> T {
        match &self.interval_integrals {
            Some(ints) => ints[component].iter().copied().sum(),
            None => trapezoid(&self.values[component], self.span),
        }
    }

    /// Exact integral of one sample interval, when recorded.
    pub fn interval_integral(&self, component: usize, interval: usize) -> Option<T> {
        self.interval_integrals
            .as_ref()
            .map(|ints| ints[component][interval])
    }
}

/// Outlet concentration trace on a uniform grid over the horizon.
///
/// Traces produced by the column solver carry the exact integral of the
/// outlet concentration over every sample interval next to the point
/// samples; averages and node hand-offs then introduce no quadrature
/// error. Hand-built traces fall back to the trapezoid rule.
#[derive(Debug, Clone)]
pub struct OutletProfile<T> {
    span: T,
    /// `[component][sample]` at `t = i * span / (len-1)`.
    values: Vec<Vec<T>>,
    /// `[component][interval]`, exact integrals where available.
    interval_integrals: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> OutletProfile<T> {
    pub fn zero(n_components: usize, span: T, samples: usize) -> Self {
        Self {
            span,
            values: vec![vec![T::zero(); samples + 1]; n_components],
            interval_integrals: Some(vec![vec![T::zero(); samples]; n_components]),
        }
    }

    pub fn from_samples(span: T, values: Vec<Vec<T>>) -> Result<Self> {
        if span <= T::zero() || values.is_empty() || values.iter().any(|v| v.len() < 2) {
            return Err(Error::InvalidInput("outlet trace needs a span and >= 2 samples".into()));
        }
        let len = values[0].len();
        if values.iter().any(|v| v.len() != len) {
            return Err(Error::InvalidInput("ragged outlet trace".into()));
        }
        Ok(Self {
            span,
            values,
            interval_integrals: None,
        })
    }

    pub fn span(&self) -> T {
        self.span
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    pub fn samples(&self, component: usize) -> &[T] {
        &self.values[component]
    }

    /// Average over the full span, `(1/T) \int c dt`.
    pub fn time_average(&self, component: usize) -> T {
        self.time_integral(component) / self.span
    }

    /// Exact where interval integrals were recorded, trapezoid otherwise.
    pub fn time_integral(&self, component: usize) -> T {
        match &self.interval_integrals {
            Some(ints) => ints[component].iter().copied().sum(),
            None => trapezoid(&self.values[component], self.span),
        }
    }

    pub(crate) fn set_interval_integrals(&mut self, component: usize, integrals: Vec<T>) {
        debug_assert_eq!(integrals.len(), self.values[component].len() - 1);
        match &mut self.interval_integrals {
            Some(ints) => ints[component] = integrals,
            None => {
                let m = self.values.len();
                let mut ints = vec![Vec::new(); m];
                ints[component] = integrals;
                self.interval_integrals = Some(ints);
            }
        }
    }

    /// First temporal moment `\int t c dt / \int c dt`.
    pub fn first_moment(&self, component: usize) -> Option<T> {
        let vals = &self.values[component];
        let n = vals.len() - 1;
        let dt = self.span / T::from_count(n);
        let mut m0 = T::zero();
        let mut m1 = T::zero();
        for i in 0..n {
            let t0 = dt * T::from_count(i);
            let t1 = t0 + dt;
            m0 = m0 + (vals[i] + vals[i + 1]) * dt / T::of(2.0);
            m1 = m1 + (vals[i] * t0 + vals[i + 1] * t1) * dt / T::of(2.0);
        }
        if m0 <= T::zero() {
            None
        } else {
            Some(m1 / m0)
        }
    }

    /// Converts this outlet trace into the inlet of a downstream column via
    /// `c_in = (c * q_up + injection) / q_down`, carrying the exact
    /// interval integrals along when present.
    pub fn to_inlet(&self, q_up: T, injection: &[T], q_down: T) -> InletProfile<T> {
        let values: Vec<Vec<T>> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, vals)| {
                vals.iter()
                    .map(|c| (*c * q_up + injection[i]) / q_down)
                    .collect()
            })
            .collect();
        let dt = self.span / T::from_count(self.values[0].len() - 1);
        let interval_integrals = self.interval_integrals.as_ref().map(|ints| {
            ints.iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .map(|int| (*int * q_up + injection[i] * dt) / q_down)
                        .collect()
                })
                .collect()
        });
        InletProfile {
            span: self.span,
            values,
            interval_integrals,
        }
    }
}

fn trapezoid<T: Scalar>(vals: &[T], span: T) -> T {
    let n = vals.len() - 1;
    let dt = span / T::from_count(n);
    let mut acc = (vals[0] + vals[n]) / T::of(2.0);
    for v in &vals[1..n] {
        acc += *v;
    }
    acc * dt
}

/// Geometric factors of the finite-volume grid.
#[derive(Debug, Clone)]
pub struct SpatialOperator<T> {
    pub axial_cells: usize,
    pub cell_width: T,
    pub radial_shells: usize,
    pub shell_width: T,
    pub mode: TransportMode,
    /// `r^2` at the inner face of each shell.
    pub shell_inner_area: Vec<T>,
    /// `r^2` at the outer face of each shell.
    pub shell_outer_area: Vec<T>,
    /// `3 / (r_out^3 - r_in^3)` per shell.
    pub shell_inv_volume: Vec<T>,
    /// Shell volume fractions, summing to one.
    pub shell_volume_fraction: Vec<T>,
}

/// Builds the finite-volume grid for the configured geometry.
pub fn build_grid<T: Scalar>(
    geometry: &ColumnGeometry<T>,
    disc: &Discretization<T>,
) -> Result<SpatialOperator<T>> {
    geometry.validate()?;
    disc.validate()?;
    let nz = disc.axial_cells;
    let nr = disc.radial_shells;
    let dz = geometry.length / T::from_count(nz);
    let dr = geometry.particle_radius / T::from_count(nr);
    let mut inner = Vec::with_capacity(nr);
    let mut outer = Vec::with_capacity(nr);
    let mut inv_vol = Vec::with_capacity(nr);
    let mut vol_frac = Vec::with_capacity(nr);
    let r_total = geometry.particle_radius.powi(3);
    for s in 0..nr {
        let r_in = dr * T::from_count(s);
        let r_out = dr * T::from_count(s + 1);
        inner.push(r_in * r_in);
        outer.push(r_out * r_out);
        let dv = r_out.powi(3) - r_in.powi(3);
        inv_vol.push(T::of(3.0) / dv);
        vol_frac.push(dv / r_total);
    }
    Ok(SpatialOperator {
        axial_cells: nz,
        cell_width: dz,
        radial_shells: nr,
        shell_width: dr,
        mode: disc.mode,
        shell_inner_area: inner,
        shell_outer_area: outer,
        shell_inv_volume: inv_vol,
        shell_volume_fraction: vol_frac,
    })
}

/// One column bound to its geometry, rates, isotherm and grid.
#[derive(Debug, Clone)]
pub struct ColumnModel<T> {
    pub geometry: ColumnGeometry<T>,
    pub params: TransportParams<T>,
    pub isotherm: LinearIsotherm<T>,
    pub disc: Discretization<T>,
    pub operator: SpatialOperator<T>,
}

impl<T: Scalar> ColumnModel<T> {
    pub fn new(
        geometry: ColumnGeometry<T>,
        params: TransportParams<T>,
        isotherm: LinearIsotherm<T>,
        disc: Discretization<T>,
    ) -> Result<Self> {
        params.validate(isotherm.n_components())?;
        if disc.mode == TransportMode::GeneralRate && geometry.porosity_particle <= T::zero() {
            return Err(Error::InvalidGeometry(
                "general rate model needs a positive particle porosity".into(),
            ));
        }
        let operator = build_grid(&geometry, &disc)?;
        Ok(Self {
            geometry,
            params,
            isotherm,
            disc,
            operator,
        })
    }

    pub fn n_components(&self) -> usize {
        self.isotherm.n_components()
    }

    pub fn empty_state(&self) -> ColumnState<T> {
        ColumnState::zeros(
            self.n_components(),
            self.disc.axial_cells,
            self.disc.radial_shells,
        )
    }

    /// Advances the column over `horizon` seconds under the given inlet and
    /// returns the end state together with the outlet trace.
    pub fn integrate_period(
        &self,
        state: &ColumnState<T>,
        inlet: &InletProfile<T>,
        horizon: T,
    ) -> Result<(ColumnState<T>, OutletProfile<T>)> {
        integrator::integrate_period(self, state, inlet, horizon)
    }

    /// Total moles of each component held in the column.
    pub fn total_moles(&self, state: &ColumnState<T>) -> Vec<T> {
        let a = self.geometry.cross_section();
        let dz = self.operator.cell_width;
        let ec = self.geometry.porosity_column;
        let ep = self.geometry.porosity_particle;
        let mut out = Vec::with_capacity(self.n_components());
        for (i, h) in self.isotherm.henry().iter().enumerate() {
            let bulk_sum: T = state.bulk(i).iter().copied().sum();
            let moles = match self.disc.mode {
                TransportMode::EdmEquilibrium => {
                    let et = self.geometry.total_porosity();
                    a * dz * bulk_sum * (et + (T::one() - et) * *h)
                }
                TransportMode::GeneralRate => {
                    let mut pore_sum = T::zero();
                    let pore = state.pore(i);
                    for k in 0..state.axial_cells() {
                        for s in 0..state.radial_shells() {
                            pore_sum = pore_sum
                                + pore[k * state.radial_shells() + s]
                                    * self.operator.shell_volume_fraction[s];
                        }
                    }
                    let particle_cap = ep + (T::one() - ep) * *h;
                    a * dz * (ec * bulk_sum + (T::one() - ec) * particle_cap * pore_sum)
                }
            };
            out.push(moles);
        }
        out
    }
}

#[cfg(test)]
mod tests;
