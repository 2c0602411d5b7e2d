//! Post-processing of sampled designs: dimensionless flowrate-ratio
//! coordinates with separation-region labels, Pareto fronts, marginal
//! densities, posterior predictive envelopes, and linear correlation fits.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AxialProfile, OperatingPoint, Plant, SmbSystem, ZonalFlowrates};
use crate::performance::ObjectiveSpec;
use crate::sampler::SampleStore;
use crate::scalar::Scalar;
use crate::transport::{ColumnGeometry, LinearIsotherm};

/// Separation regimes on the `(m_II, m_III)` plane.
///
/// Letters follow the usual diagram: `A` complete separation, `B` pure
/// extract, `C` pure raffinate, `D` the infeasible half below the
/// diagonal, `E` neither stream pure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationRegion {
    CompleteSeparation,
    PureExtract,
    PureRaffinate,
    Infeasible,
    NeitherPure,
}

impl SeparationRegion {
    pub fn letter(self) -> char {
        match self {
            SeparationRegion::CompleteSeparation => 'A',
            SeparationRegion::PureExtract => 'B',
            SeparationRegion::PureRaffinate => 'C',
            SeparationRegion::Infeasible => 'D',
            SeparationRegion::NeitherPure => 'E',
        }
    }
}

/// Dimensionless net flow ratios `m_I .. m_IV` of one operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowrateRatios<T> {
    /// Indexed by zone: `m[0] = m_I` .. `m[3] = m_IV`.
    pub m: [T; 4],
    pub region: Option<SeparationRegion>,
}

impl<T: Scalar> FlowrateRatios<T> {
    pub fn m1(&self) -> T {
        self.m[0]
    }
    pub fn m2(&self) -> T {
        self.m[1]
    }
    pub fn m3(&self) -> T {
        self.m[2]
    }
    pub fn m4(&self) -> T {
        self.m[3]
    }

    pub fn classified(mut self, isotherm: &LinearIsotherm<T>) -> Self {
        self.region = Some(classify_region(self.m2(), self.m3(), isotherm));
        self
    }
}

/// `m_j = (t_s Q_j - eps_t V_c) / ((1 - eps_t) V_c)` with the column
/// volume recomputed from the sampled length.
pub fn flowrate_ratios<T: Scalar>(
    op: &OperatingPoint<T>,
    geometry: &ColumnGeometry<T>,
    flows: &ZonalFlowrates<T>,
) -> FlowrateRatios<T> {
    let et = geometry.total_porosity();
    let vc = geometry.volume();
    let solid = (T::one() - et) * vc;
    let mut m = [T::zero(); 4];
    for (j, q) in flows.zones.iter().enumerate() {
        m[j] = (op.switch_time * *q - et * vc) / solid;
    }
    FlowrateRatios { m, region: None }
}

/// Region of a point on the `(m_II, m_III)` plane. Boundaries go to the
/// non-complete-separation side.
pub fn classify_region<T: Scalar>(
    m2: T,
    m3: T,
    isotherm: &LinearIsotherm<T>,
) -> SeparationRegion {
    let h = isotherm.henry();
    let weak = h[0];
    let strong = h[h.len() - 1];
    if m3 <= m2 {
        SeparationRegion::Infeasible
    } else if m2 > weak && m3 < strong {
        SeparationRegion::CompleteSeparation
    } else if m2 <= weak && m3 < strong {
        SeparationRegion::PureRaffinate
    } else if m2 > weak {
        SeparationRegion::PureExtract
    } else {
        SeparationRegion::NeitherPure
    }
}

/// Indices of the non-dominated subset (both axes maximized) and of the
/// dominated remainder, each in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParetoSet {
    pub front: Vec<usize>,
    pub dominated: Vec<usize>,
}

/// Non-dominated filtering of objective pairs, maximizing both axes.
/// Ties and duplicate points are kept on the front.
pub fn pareto_front<T: Scalar>(points: &[[T; 2]]) -> Result<ParetoSet> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to sort".into()));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("objective values must be finite".into()));
    }
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[b][0]
            .partial_cmp(&points[a][0])
            .unwrap()
            .then(points[b][1].partial_cmp(&points[a][1]).unwrap())
            .then(a.cmp(&b))
    });
    let mut dominated = vec![false; n];
    let mut best_y = T::neg_infinity();
    let mut g = 0;
    while g < n {
        // group of equal first coordinate
        let x = points[order[g]][0];
        let mut end = g;
        let mut group_max_y = T::neg_infinity();
        while end < n && points[order[end]][0] == x {
            group_max_y = group_max_y.max(points[order[end]][1]);
            end += 1;
        }
        for &idx in &order[g..end] {
            let y = points[idx][1];
            // dominated by a strictly better x with at least this y, or by
            // a group mate with the same x and strictly better y
            if y <= best_y || y < group_max_y {
                dominated[idx] = true;
            }
        }
        best_y = best_y.max(group_max_y);
        g = end;
    }
    let mut set = ParetoSet {
        front: Vec::new(),
        dominated: Vec::new(),
    };
    for (i, d) in dominated.iter().enumerate() {
        if *d {
            set.dominated.push(i);
        } else {
            set.front.push(i);
        }
    }
    Ok(set)
}

/// Gaussian kernel density estimate on a regular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct DensityCurve<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    pub bandwidth: T,
}

impl<T: Scalar> DensityCurve<T> {
    /// Grid point with the highest density.
    pub fn mode(&self) -> T {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// Trapezoid integral of the curve, close to one by construction.
    pub fn integral(&self) -> T {
        let n = self.grid.len();
        let mut acc = T::zero();
        for i in 1..n {
            acc = acc
                + (self.density[i] + self.density[i - 1])
                    * (self.grid[i] - self.grid[i - 1])
                    / T::of(2.0);
        }
        acc
    }
}

const KDE_GRID: usize = 512;

/// Smooth marginal density with Silverman's bandwidth
/// `1.06 sigma k^(-1/5)`, evaluated on a 512-point grid padded by three
/// bandwidths.
pub fn marginal_density<T: Scalar>(samples: &[T]) -> Result<DensityCurve<T>> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::InsufficientSamples("need at least two samples".into()));
    }
    let kf = T::from_count(k);
    let mean = samples.iter().copied().sum::<T>() / kf;
    let var = samples.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / (kf - T::one());
    if var <= T::zero() {
        return Err(Error::UndefinedDiagnostic(
            "zero variance; density is a point mass".into(),
        ));
    }
    let bandwidth = T::of(1.06) * var.sqrt() * kf.powf(-T::of(0.2));
    let lo = samples.iter().copied().fold(T::infinity(), T::min) - T::of(3.0) * bandwidth;
    let hi = samples.iter().copied().fold(T::neg_infinity(), T::max) + T::of(3.0) * bandwidth;
    let step = (hi - lo) / T::from_count(KDE_GRID - 1);
    let norm = T::one() / (kf * bandwidth * T::of((2.0 * std::f64::consts::PI).sqrt()));
    let mut grid = Vec::with_capacity(KDE_GRID);
    let mut density = Vec::with_capacity(KDE_GRID);
    for g in 0..KDE_GRID {
        let x = lo + step * T::from_count(g);
        let mut acc = T::zero();
        for s in samples {
            let z = (x - *s) / bandwidth;
            acc = acc + (-z * z / T::of(2.0)).exp();
        }
        grid.push(x);
        density.push(acc * norm);
    }
    Ok(DensityCurve {
        grid,
        density,
        bandwidth,
    })
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub fn linear_fit<T: Scalar>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientSamples(
            "need at least two paired samples".into(),
        ));
    }
    let n = T::from_count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (xi, yi) in x.iter().zip(y) {
        sxx = sxx + (*xi - mx) * (*xi - mx);
        sxy = sxy + (*xi - mx) * (*yi - my);
    }
    if sxx <= T::zero() {
        return Err(Error::InvalidInput("degenerate abscissa for the fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_tot = T::zero();
    let mut ss_res = T::zero();
    for (xi, yi) in x.iter().zip(y) {
        let pred = intercept + slope * *xi;
        ss_tot = ss_tot + (*yi - my) * (*yi - my);
        ss_res = ss_res + (*yi - pred) * (*yi - pred);
    }
    let r_squared = if ss_tot <= T::zero() {
        T::zero()
    } else {
        (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Which dimensionless difference to histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioPair {
    /// `m_III - m_II`, the treated feed per period.
    FeedZones,
    /// `m_I - m_IV`, the consumed desorbent per period.
    RecycleZones,
}

impl RatioPair {
    pub fn difference<T: Scalar>(self, ratios: &FlowrateRatios<T>) -> T {
        match self {
            RatioPair::FeedZones => ratios.m3() - ratios.m2(),
            RatioPair::RecycleZones => ratios.m1() - ratios.m4(),
        }
    }
}

/// Binned counts plus the smooth mode of a ratio difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Histogram<T> {
    pub edges: Vec<T>,
    pub counts: Vec<usize>,
    pub mode: T,
}

/// The chosen ratio difference for every post-burn-in sample.
pub fn ratio_differences<T: Scalar>(
    store: &SampleStore<T>,
    plant: &Plant<T>,
    pair: RatioPair,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (_, _, row) in store.post_burn_rows() {
        let op = OperatingPoint::from_array(&row.theta);
        let flows = crate::network::derive_flowrates(&op)?;
        let ratios = flowrate_ratios(&op, &plant.geometry(op.length), &flows);
        out.push(pair.difference(&ratios));
    }
    if out.is_empty() {
        return Err(Error::InsufficientSamples("store holds no samples".into()));
    }
    Ok(out)
}

pub fn ratio_difference_histogram<T: Scalar>(
    differences: &[T],
    bins: usize,
) -> Result<Histogram<T>> {
    if differences.is_empty() {
        return Err(Error::InsufficientSamples("no differences to bin".into()));
    }
    let lo = differences.iter().copied().fold(T::infinity(), T::min);
    let hi = differences.iter().copied().fold(T::neg_infinity(), T::max);
    if lo == hi {
        return Ok(Histogram {
            edges: vec![lo, hi],
            counts: vec![differences.len()],
            mode: lo,
        });
    }
    let nb = bins.max(1);
    let width = (hi - lo) / T::from_count(nb);
    let mut counts = vec![0usize; nb];
    for d in differences {
        let mut b = ((*d - lo) / width).floor().as_f64() as usize;
        if b >= nb {
            b = nb - 1;
        }
        counts[b] += 1;
    }
    let edges = (0..=nb).map(|b| lo + width * T::from_count(b)).collect();
    let mode = marginal_density(differences)?.mode();
    Ok(Histogram {
        edges,
        counts,
        mode,
    })
}

/// Pointwise band of cyclic-steady-state profiles over posterior
/// replicates, on the dimensionless train coordinate (the sampled column
/// lengths differ).
#[derive(Debug, Clone)]
pub struct PpcEnvelope<T> {
    pub train_coordinate: Vec<T>,
    /// Per component, pointwise minimum over the replicates.
    pub lower: Vec<Vec<T>>,
    /// Per component, pointwise maximum over the replicates.
    pub upper: Vec<Vec<T>>,
    /// `(chain, sample index)` of the replicates that simulated
    /// successfully.
    pub replicate_indices: Vec<(usize, usize)>,
}

/// Profile of one replicate, kept for containment checks.
#[derive(Debug, Clone)]
pub struct ReplicateProfile<T> {
    pub chain: usize,
    pub index: usize,
    pub profile: AxialProfile<T>,
}

/// Draws operating points from the post-burn-in samples, re-simulates
/// them to cyclic steady state, and brackets the axial profiles.
/// Failed replicates are skipped; fewer than two successes is an error.
pub fn ppc_envelope<T: Scalar>(
    store: &SampleStore<T>,
    plant: &Plant<T>,
    replicates: usize,
    seed: u64,
    threads: usize,
) -> Result<(PpcEnvelope<T>, Vec<ReplicateProfile<T>>)> {
    if replicates < 2 {
        return Err(Error::InvalidInput("need at least two replicates".into()));
    }
    let rows: Vec<(usize, usize, Vec<T>)> = store
        .post_burn_rows()
        .map(|(c, i, row)| (c, i, row.theta.clone()))
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientSamples("store holds no samples".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..replicates)
        .map(|_| rng.random_range(0..rows.len()))
        .collect();

    let results: Vec<Result<ReplicateProfile<T>>> = run_replicates(&rows, &picks, plant, threads);

    let mut profiles = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(p) => profiles.push(p),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if profiles.len() < 2 {
        return Err(first_error.unwrap_or_else(|| {
            Error::InsufficientSamples("fewer than two replicates succeeded".into())
        }));
    }
    let grid = profiles[0].profile.train_coordinate.clone();
    let m = profiles[0].profile.concentrations.len();
    let mut lower = vec![vec![T::infinity(); grid.len()]; m];
    let mut upper = vec![vec![T::neg_infinity(); grid.len()]; m];
    for p in &profiles {
        for i in 0..m {
            for (j, v) in p.profile.concentrations[i].iter().enumerate() {
                lower[i][j] = lower[i][j].min(*v);
                upper[i][j] = upper[i][j].max(*v);
            }
        }
    }
    let envelope = PpcEnvelope {
        train_coordinate: grid,
        lower,
        upper,
        replicate_indices: profiles.iter().map(|p| (p.chain, p.index)).collect(),
    };
    Ok((envelope, profiles))
}

fn run_replicates<T: Scalar>(
    rows: &[(usize, usize, Vec<T>)],
    picks: &[usize],
    plant: &Plant<T>,
    threads: usize,
) -> Vec<Result<ReplicateProfile<T>>> {
    let workers = threads.max(1).min(picks.len());
    let mut results: Vec<Option<Result<ReplicateProfile<T>>>> = Vec::new();
    results.resize_with(picks.len(), || None);
    let chunk = picks.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot) in results.chunks_mut(chunk).enumerate() {
            let picks = &picks[w * chunk..(w * chunk + slot.len())];
            scope.spawn(move || {
                for (slot, &pick) in slot.iter_mut().zip(picks) {
                    let (chain, index, theta) = &rows[pick];
                    let op = OperatingPoint::from_array(theta);
                    let outcome = SmbSystem::new(plant, &op)
                        .and_then(|system| {
                            system.simulate_to_css().map(|css| (system, css))
                        })
                        .map(|(system, css)| ReplicateProfile {
                            chain: *chain,
                            index: *index,
                            profile: system.axial_profile(&css.state),
                        });
                    *slot = Some(outcome);
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("replicate ran")).collect()
}

/// Simulated-purity class of a sample, used to color the ratio planes.
pub fn purity_class<T: Scalar>(
    record: Option<&crate::performance::PerformanceRecord<T>>,
    spec: &ObjectiveSpec<T>,
) -> &'static str {
    match record {
        Some(r) => {
            let pu_e = r.purity_extract[spec.extract_target];
            let pu_r = r.purity_raffinate[spec.raffinate_target];
            if pu_e >= T::of(0.999) && pu_r >= T::of(0.999) {
                "p999"
            } else if pu_e >= T::of(0.99) && pu_r >= T::of(0.99) {
                "p99"
            } else {
                "ensemble"
            }
        }
        None => "ensemble",
    }
}

/// One row of a triangle-plane CSV.
#[derive(Debug, Clone)]
pub struct TriangleRow<T> {
    pub ratios: FlowrateRatios<T>,
    pub region: SeparationRegion,
    pub purity_class: &'static str,
}

/// Ratio coordinates, region labels and purity classes of every
/// post-burn-in sample.
pub fn triangle_rows<T: Scalar>(
    store: &SampleStore<T>,
    plant: &Plant<T>,
    spec: &ObjectiveSpec<T>,
) -> Result<Vec<TriangleRow<T>>> {
    let isotherm = plant.isotherm()?;
    let mut rows = Vec::new();
    for (c, i, row) in store.post_burn_rows() {
        let op = OperatingPoint::from_array(&row.theta);
        let flows = crate::network::derive_flowrates(&op)?;
        let ratios = flowrate_ratios(&op, &plant.geometry(op.length), &flows);
        let region = classify_region(ratios.m2(), ratios.m3(), &isotherm);
        rows.push(TriangleRow {
            ratios: FlowrateRatios {
                region: Some(region),
                ..ratios
            },
            region,
            purity_class: purity_class(store.record(c, i), spec),
        });
    }
    Ok(rows)
}

pub fn write_triangle_csv<T: Scalar, W: Write + ?Sized>(
    out: &mut W,
    rows: &[TriangleRow<T>],
    pair: RatioPair,
) -> Result<()> {
    let (a, b) = match pair {
        RatioPair::FeedZones => ("m2", "m3"),
        RatioPair::RecycleZones => ("m4", "m1"),
    };
    writeln!(out, "{a},{b},region,purity_class")?;
    for row in rows {
        let (x, y) = match pair {
            RatioPair::FeedZones => (row.ratios.m2(), row.ratios.m3()),
            RatioPair::RecycleZones => (row.ratios.m4(), row.ratios.m1()),
        };
        writeln!(
            out,
            "{},{},{},{}",
            x.as_f64(),
            y.as_f64(),
            row.region.letter(),
            row.purity_class
        )?;
    }
    Ok(())
}

pub fn write_pareto_csv<T: Scalar, W: Write + ?Sized>(
    out: &mut W,
    points: &[[T; 2]],
    set: &ParetoSet,
    axes: (&str, &str),
) -> Result<()> {
    writeln!(out, "{},{},on_front", axes.0, axes.1)?;
    let mut on_front = vec![false; points.len()];
    for &i in &set.front {
        on_front[i] = true;
    }
    for (p, f) in points.iter().zip(&on_front) {
        writeln!(out, "{},{},{}", p[0].as_f64(), p[1].as_f64(), u8::from(*f))?;
    }
    Ok(())
}

pub fn write_marginal_csv<T: Scalar, W: Write + ?Sized>(
    out: &mut W,
    curve: &DensityCurve<T>,
    parameter: &str,
) -> Result<()> {
    writeln!(out, "{parameter},density")?;
    for (x, d) in curve.grid.iter().zip(&curve.density) {
        writeln!(out, "{},{}", x.as_f64(), d.as_f64())?;
    }
    Ok(())
}

pub fn write_envelope_csv<T: Scalar, W: Write + ?Sized>(
    out: &mut W,
    envelope: &PpcEnvelope<T>,
    component_names: &[String],
) -> Result<()> {
    write!(out, "train_coordinate")?;
    for name in component_names {
        write!(out, ",{name}_min_mol_m3,{name}_max_mol_m3")?;
    }
    writeln!(out)?;
    for (j, x) in envelope.train_coordinate.iter().enumerate() {
        write!(out, "{}", x.as_f64())?;
        for i in 0..component_names.len() {
            write!(
                out,
                ",{},{}",
                envelope.lower[i][j].as_f64(),
                envelope.upper[i][j].as_f64()
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}
