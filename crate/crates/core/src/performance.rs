//! Performance indicators, the penalized multi-objective value and the
//! unnormalized posterior density of an operating point.
//!
//! Given the cyclic-steady-state traces at the product ports, this module
//! computes purities, yields and productivities, folds the purity
//! constraints into a penalized objective `H = f + d_k g`, and exposes the
//! likelihood `p = exp(-H/2)` through [`SmbPosterior`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkConfig, OperatingPoint, Plant, SmbSystem, ZonalFlowrates};
use crate::sampler::{Evaluation, TargetDensity};
use crate::scalar::Scalar;
use crate::transport::{ColumnGeometry, OutletProfile};

/// Which components are collected where, the purity thresholds, and the
/// penalty weight.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveSpec<T> {
    /// Component index collected at the extract port (strongly adsorbed).
    pub extract_target: usize,
    /// Component index collected at the raffinate port (weakly adsorbed).
    pub raffinate_target: usize,
    pub purity_threshold_extract: T,
    pub purity_threshold_raffinate: T,
    /// Penalty factor `d_k` on the squared purity violations.
    pub penalty_factor: T,
}

impl<T: Scalar> ObjectiveSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let thr_ok = self.purity_threshold_extract > T::zero()
            && self.purity_threshold_extract < T::one()
            && self.purity_threshold_raffinate > T::zero()
            && self.purity_threshold_raffinate < T::one();
        if !thr_ok {
            return Err(Error::InvalidInput("purity thresholds must lie in (0, 1)".into()));
        }
        if self.penalty_factor <= T::zero() {
            return Err(Error::InvalidInput("penalty factor must be positive".into()));
        }
        Ok(())
    }
}

/// Indicators and objective values of one simulated operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PerformanceRecord<T> {
    /// Period-averaged outlet concentration at the extract, mol/m^3.
    pub average_extract: Vec<T>,
    /// Period-averaged outlet concentration at the raffinate, mol/m^3.
    pub average_raffinate: Vec<T>,
    pub purity_extract: Vec<T>,
    pub purity_raffinate: Vec<T>,
    pub yield_extract: Vec<T>,
    pub yield_raffinate: Vec<T>,
    /// mol/(m^3 s), relative to the packed bed volume of all columns.
    pub productivity_extract: Vec<T>,
    pub productivity_raffinate: Vec<T>,
    /// Objective `f = -(Y_R + Y_E)` of the target components.
    pub objective: T,
    /// Penalty `g`, sum of squared purity shortfalls.
    pub penalty: T,
    /// Total `H = f + d_k g`.
    pub total: T,
}

/// Period average `(1/t_s) \int c dt` of a port trace.
pub fn period_average<T: Scalar>(trace: &OutletProfile<T>, switch_time: T) -> Result<Vec<T>> {
    if trace.span() < switch_time * T::of(1.0 - 1e-9) {
        return Err(Error::InvalidInput(format!(
            "trace spans {} s, shorter than the switching time {} s",
            trace.span().as_f64(),
            switch_time.as_f64()
        )));
    }
    Ok((0..trace.n_components())
        .map(|i| trace.time_average(i))
        .collect())
}

/// Purity, yield and productivity from the period-averaged port
/// concentrations. The objective fields are left at zero.
pub fn indicators<T: Scalar>(
    average_extract: &[T],
    average_raffinate: &[T],
    flows: &ZonalFlowrates<T>,
    op: &OperatingPoint<T>,
    config: &NetworkConfig<T>,
    geometry: &ColumnGeometry<T>,
) -> Result<PerformanceRecord<T>> {
    let m = config.n_components();
    let total_e: T = average_extract.iter().copied().sum();
    let total_r: T = average_raffinate.iter().copied().sum();
    if total_e <= T::zero() || total_r <= T::zero() {
        return Err(Error::DegenerateSimulation(
            "a product port sees no solute; purity is undefined".into(),
        ));
    }
    let q_e = op.q_extract;
    let q_r = flows.raffinate;
    // Packed bed volume of the whole train.
    let bed = (T::one() - geometry.porosity_column)
        * geometry.volume()
        * T::from_count(config.n_columns());
    let mut rec = PerformanceRecord {
        average_extract: average_extract.to_vec(),
        average_raffinate: average_raffinate.to_vec(),
        purity_extract: Vec::with_capacity(m),
        purity_raffinate: Vec::with_capacity(m),
        yield_extract: Vec::with_capacity(m),
        yield_raffinate: Vec::with_capacity(m),
        productivity_extract: Vec::with_capacity(m),
        productivity_raffinate: Vec::with_capacity(m),
        objective: T::zero(),
        penalty: T::zero(),
        total: T::zero(),
    };
    for i in 0..m {
        rec.purity_extract.push(average_extract[i] / total_e);
        rec.purity_raffinate.push(average_raffinate[i] / total_r);
        let fed = op.q_feed * config.feed_concentration[i];
        let (y_e, y_r) = if fed > T::zero() {
            (
                q_e * average_extract[i] / fed,
                q_r * average_raffinate[i] / fed,
            )
        } else {
            (T::zero(), T::zero())
        };
        rec.yield_extract.push(y_e);
        rec.yield_raffinate.push(y_r);
        rec.productivity_extract.push(q_e * average_extract[i] / bed);
        rec.productivity_raffinate.push(q_r * average_raffinate[i] / bed);
    }
    Ok(rec)
}

/// Penalized objective: `f = -(Y_glc^R + Y_fru^E)`,
/// `g = sum_j min(0, Pu^j - eps^j)^2`, `H = f + d_k g`.
pub fn objective<T: Scalar>(record: &PerformanceRecord<T>, spec: &ObjectiveSpec<T>) -> (T, T, T) {
    let f = -(record.yield_raffinate[spec.raffinate_target]
        + record.yield_extract[spec.extract_target]);
    let viol_e = (record.purity_extract[spec.extract_target] - spec.purity_threshold_extract)
        .min(T::zero());
    let viol_r = (record.purity_raffinate[spec.raffinate_target]
        - spec.purity_threshold_raffinate)
        .min(T::zero());
    let g = viol_e * viol_e + viol_r * viol_r;
    let h = f + spec.penalty_factor * g;
    (f, g, h)
}

/// Fills the objective fields of a record in place.
pub fn evaluate_objective<T: Scalar>(record: &mut PerformanceRecord<T>, spec: &ObjectiveSpec<T>) {
    let (f, g, h) = objective(record, spec);
    record.objective = f;
    record.penalty = g;
    record.total = h;
}

/// Log of the exponential likelihood `p = exp(-H/2)`.
pub fn log_likelihood<T: Scalar>(total: T) -> Result<T> {
    if !total.is_finite() {
        return Err(Error::InvalidInput(format!(
            "objective value {} is not finite",
            total.as_f64()
        )));
    }
    Ok(-total / T::of(2.0))
}

/// Unnormalized posterior of the operating conditions: the full plant
/// simulation chained with the indicators and the exponential likelihood.
///
/// Evaluation failures (infeasible flowrates, non-converged cyclic steady
/// state, degenerate ports) carry zero posterior probability.
#[derive(Debug, Clone)]
pub struct SmbPosterior<T> {
    pub plant: Plant<T>,
    pub objective: ObjectiveSpec<T>,
}

impl<T: Scalar> SmbPosterior<T> {
    pub fn new(plant: Plant<T>, objective: ObjectiveSpec<T>) -> Result<Self> {
        plant.validate()?;
        objective.validate()?;
        Ok(Self { plant, objective })
    }

    /// Runs the plant to cyclic steady state and scores the result.
    pub fn evaluate(&self, op: &OperatingPoint<T>) -> Result<(PerformanceRecord<T>, T)> {
        let system = SmbSystem::new(&self.plant, op)?;
        let css = system.simulate_to_css()?;
        let avg_e = period_average(&css.state.extract_trace, op.switch_time)?;
        let avg_r = period_average(&css.state.raffinate_trace, op.switch_time)?;
        let mut record = indicators(
            &avg_e,
            &avg_r,
            &system.flows,
            op,
            &self.plant.network,
            &system.geometry,
        )?;
        evaluate_objective(&mut record, &self.objective);
        let logp = log_likelihood(record.total)?;
        Ok((record, logp))
    }
}

impl<T: Scalar> TargetDensity<T> for SmbPosterior<T> {
    fn log_density(&self, theta: &[T]) -> Evaluation<T> {
        let op = OperatingPoint::from_array(theta);
        match self.evaluate(&op) {
            Ok((record, logp)) => Evaluation {
                log_posterior: logp,
                objective: Some([record.objective, record.penalty, record.total]),
                record: Some(record),
            },
            Err(_) => Evaluation {
                log_posterior: T::neg_infinity(),
                objective: None,
                record: None,
            },
        }
    }
}

/// Writes records as CSV rows keyed by chain and sample index.
pub fn write_records_csv<T: Scalar, W: Write + ?Sized>(
    out: &mut W,
    rows: &[(usize, Option<&PerformanceRecord<T>>)],
    component_names: &[String],
) -> Result<()> {
    write!(out, "iteration")?;
    for port in ["extract", "raffinate"] {
        for name in component_names {
            write!(out, ",average_{port}_{name}_mol_m3")?;
        }
    }
    for port in ["extract", "raffinate"] {
        for name in component_names {
            write!(out, ",purity_{port}_{name}")?;
        }
    }
    for port in ["extract", "raffinate"] {
        for name in component_names {
            write!(out, ",yield_{port}_{name}")?;
        }
    }
    for port in ["extract", "raffinate"] {
        for name in component_names {
            write!(out, ",productivity_{port}_{name}_mol_m3_s")?;
        }
    }
    writeln!(out, ",f_objective,g_penalty,h_total")?;
    for (iteration, rec) in rows {
        write!(out, "{iteration}")?;
        match rec {
            Some(r) => {
                for vals in [
                    &r.average_extract,
                    &r.average_raffinate,
                    &r.purity_extract,
                    &r.purity_raffinate,
                    &r.yield_extract,
                    &r.yield_raffinate,
                    &r.productivity_extract,
                    &r.productivity_raffinate,
                ] {
                    for v in vals.iter() {
                        write!(out, ",{}", v.as_f64())?;
                    }
                }
                writeln!(
                    out,
                    ",{},{},{}",
                    r.objective.as_f64(),
                    r.penalty.as_f64(),
                    r.total.as_f64()
                )?;
            }
            None => {
                let m = component_names.len();
                for _ in 0..(8 * m + 3) {
                    write!(out, ",nan")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
