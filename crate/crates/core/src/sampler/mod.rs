//! Random-walk Metropolis sampling of operating points with delayed
//! rejection and covariance adaptation, multi-chain execution, and
//! convergence diagnostics.
//!
//! The first stage proposes from a Gaussian centred at the current point.
//! On rejection a second candidate is drawn from the same Gaussian with
//! its covariance shrunk by a fixed factor, and accepted with the ratio
//! that preserves reversibility of the two-stage kernel. The proposal
//! covariance is re-estimated from the chain history at a fixed cadence
//! and frozen once the between-chain diagnostics drop below threshold.

mod diagnostics;
mod runner;

pub use diagnostics::{
    autocorrelation, autocorrelations, credible_interval, effective_sample_size_mixed,
    gelman_rhat_chains, Diagnostics,
};
pub use runner::{
    resume_chains, run_chains, Checkpoint, ChainCheckpoint, RhatSnapshot, RunOutcome,
    RunSettings, SampleRow, SampleStore,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sample_covariance, solve_lower, sym_eigen, Matrix};
use crate::network::OperatingBounds;
use crate::performance::PerformanceRecord;
use crate::scalar::{standard_normal, Scalar};

/// Non-informative prior: uniform inside the parameter box, zero outside.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PriorSpec<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> PriorSpec<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput("bound vectors must match and be nonempty".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| *l >= *u) {
            return Err(Error::InvalidInput("bounds must satisfy min < max".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_bounds(bounds: &OperatingBounds<T>) -> Result<Self> {
        Self::new(
            bounds.lower.to_array().to_vec(),
            bounds.upper.to_array().to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[T]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    /// Per-coordinate regularization floor, scaled to the box widths.
    pub fn regularization(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let w = *u - *l;
                T::of(1e-12) * w * w
            })
            .collect()
    }
}

/// Covariance scaling rule for the adapted proposal.
pub fn adaptation_scale<T: Scalar>(dim: usize) -> T {
    T::of(2.4 * 2.4) / T::from_count(dim).sqrt()
}

/// Gaussian proposal: covariance, its Cholesky factor, and the
/// delayed-rejection shrink factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ProposalCovariance<T> {
    sigma: Matrix<T>,
    factor: Matrix<T>,
    /// Covariance shrink applied at the second stage.
    pub shrink: T,
    /// Adaptation scale `c = 2.4^2 / sqrt(n)`.
    pub scale: T,
    /// Additive diagonal keeping the adapted covariance positive definite.
    pub regularization: Vec<T>,
}

impl<T: Scalar> ProposalCovariance<T> {
    pub fn from_sigma(sigma: Matrix<T>, shrink: T, regularization: Vec<T>) -> Result<Self> {
        if shrink <= T::zero() || shrink >= T::one() {
            return Err(Error::InvalidInput("shrink factor must lie in (0, 1)".into()));
        }
        let n = sigma.rows();
        if regularization.len() != n {
            return Err(Error::InvalidInput("regularization dimension mismatch".into()));
        }
        let factor = cholesky(&sigma)?;
        Ok(Self {
            sigma,
            factor,
            shrink,
            scale: adaptation_scale(n),
            regularization,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.rows()
    }

    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    /// Draws `center + s R z` with `s = sqrt(shrink)` at the second stage.
    pub fn propose<R: Rng + ?Sized>(&self, center: &[T], rng: &mut R, shrunk: bool) -> Vec<T> {
        let n = self.dim();
        let s = if shrunk { self.shrink.sqrt() } else { T::one() };
        let z: Vec<T> = (0..n).map(|_| standard_normal(rng)).collect();
        let mut out = center.to_vec();
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..=i {
                acc = acc + self.factor[(i, j)] * z[j];
            }
            out[i] += s * acc;
        }
        out
    }

    /// Squared Mahalanobis norm `|| R^{-1} d ||^2` of the first-stage
    /// proposal.
    pub fn mahalanobis_sq(&self, d: &[T]) -> T {
        let y = solve_lower(&self.factor, d);
        y.iter().map(|v| *v * *v).sum()
    }
}

/// Initial proposal covariance from the model sensitivities at the start
/// point: `Sigma_0 = sigma0 V (S^T S)^{-1} V^T` with `U S V^T` the singular
/// value decomposition of the finite-difference Jacobian of the model
/// observations, plus the diagonal regularization.
///
/// The decomposition runs in box-scaled parameter coordinates (the
/// decision variables mix metres, seconds and flowrates across eleven
/// orders of magnitude) and the variance along any direction is capped at
/// one squared box width; directions the observations barely constrain
/// get full-box proposals instead of astronomically large ones.
pub fn initial_covariance_fisher<T: Scalar, F>(
    theta0: &[T],
    mut model: F,
    sigma0: T,
    shrink: T,
    prior: &PriorSpec<T>,
) -> Result<ProposalCovariance<T>>
where
    F: FnMut(&[T]) -> Result<Vec<T>>,
{
    let n = theta0.len();
    if prior.dim() != n {
        return Err(Error::InvalidInput("prior dimension mismatch".into()));
    }
    let widths: Vec<T> = prior
        .lower
        .iter()
        .zip(&prior.upper)
        .map(|(l, u)| *u - *l)
        .collect();
    let rel_step = T::of(1e-4);
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut h = rel_step * theta0[j].abs();
        if h <= T::zero() {
            h = rel_step * widths[j];
        }
        let mut plus = theta0.to_vec();
        plus[j] += h;
        let mut minus = theta0.to_vec();
        minus[j] -= h;
        let yp = model(&plus)?;
        let ym = model(&minus)?;
        if yp.len() != ym.len() {
            return Err(Error::InvalidInput("model output length changed".into()));
        }
        // sensitivity per box width
        columns.push(
            yp.iter()
                .zip(&ym)
                .map(|(a, b)| (*a - *b) / (T::of(2.0) * h) * widths[j])
                .collect(),
        );
    }
    // Gram matrix J^T J; its eigenvalues are the squared singular values
    // and its eigenvectors the right singular vectors.
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for k in 0..columns[i].len() {
                acc = acc + columns[i][k] * columns[j][k];
            }
            gram[(i, j)] = acc;
        }
    }
    let (eig, v) = sym_eigen(&gram);
    let max_e = eig.iter().fold(T::zero(), |a, b| a.max(*b));
    let min_e = eig.iter().fold(T::infinity(), |a, b| a.min(*b));
    if max_e <= T::zero() {
        return Err(Error::RankDeficientJacobian {
            min_sv: min_e.max(T::zero()).sqrt().as_f64(),
            max_sv: max_e.max(T::zero()).sqrt().as_f64(),
        });
    }
    let regularization = prior.regularization();
    let mut sigma = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for k in 0..n {
                // inverse squared singular value, capped at a full box
                // width of proposal variance in scaled coordinates
                let lambda = (T::one() / eig[k].max(max_e * T::of(1e-12))).min(T::one() / sigma0);
                acc = acc + v[(i, k)] * v[(j, k)] * lambda;
            }
            sigma[(i, j)] = sigma0 * acc * widths[i] * widths[j];
        }
    }
    sigma.add_diagonal(&regularization);
    ProposalCovariance::from_sigma(sigma, shrink, regularization)
}

/// Initial proposal covariance from a pilot sample cloud, scaled like the
/// adaptation rule.
pub fn initial_covariance_pilot<T: Scalar>(
    pilot: &[Vec<T>],
    shrink: T,
    regularization: Vec<T>,
) -> Result<ProposalCovariance<T>> {
    if pilot.is_empty() {
        return Err(Error::InsufficientSamples("empty pilot run".into()));
    }
    let n = pilot[0].len();
    if pilot.len() < n + 1 {
        return Err(Error::InsufficientSamples(format!(
            "{} pilot samples for {} parameters; need at least {}",
            pilot.len(),
            n,
            n + 1
        )));
    }
    let mut sigma = sample_covariance(pilot).scaled(adaptation_scale::<T>(n));
    sigma.add_diagonal(&regularization);
    ProposalCovariance::from_sigma(sigma, shrink, regularization)
}

/// Re-estimates the proposal covariance from the full chain history:
/// `Sigma = c Cov(history) + eps I`.
pub fn adapt_covariance<T: Scalar>(
    history: &[Vec<T>],
    current: &ProposalCovariance<T>,
) -> Result<ProposalCovariance<T>> {
    if history.len() < 2 {
        return Ok(current.clone());
    }
    let mut sigma = sample_covariance(history).scaled(current.scale);
    sigma.add_diagonal(&current.regularization);
    ProposalCovariance::from_sigma(sigma, current.shrink, current.regularization.clone())
}

/// Target evaluation: the log density plus whatever the model recorded.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub log_posterior: T,
    /// `(f, g, H)` of the penalized objective when the target computes one.
    pub objective: Option<[T; 3]>,
    pub record: Option<PerformanceRecord<T>>,
}

impl<T: Scalar> Evaluation<T> {
    /// Zero posterior mass, e.g. outside the prior box or on simulation
    /// failure.
    pub fn rejected() -> Self {
        Self {
            log_posterior: T::neg_infinity(),
            objective: None,
            record: None,
        }
    }

    pub fn of_log_density(lp: T) -> Self {
        Self {
            log_posterior: lp,
            objective: None,
            record: None,
        }
    }
}

/// Unnormalized log target density. Implementations must be reentrant:
/// chains evaluate concurrently.
pub trait TargetDensity<T: Scalar>: Sync {
    fn log_density(&self, theta: &[T]) -> Evaluation<T>;
}

/// Current position and acceptance bookkeeping of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ChainState<T> {
    pub theta: Vec<T>,
    pub log_posterior: T,
    pub objective: Option<[T; 3]>,
    pub record: Option<PerformanceRecord<T>>,
    pub iteration: usize,
    pub accepted_first: usize,
    pub accepted_second: usize,
    pub second_stage_trials: usize,
}

impl<T: Scalar> ChainState<T> {
    pub fn new(theta: Vec<T>, eval: Evaluation<T>) -> Self {
        Self {
            theta,
            log_posterior: eval.log_posterior,
            objective: eval.objective,
            record: eval.record,
            iteration: 0,
            accepted_first: 0,
            accepted_second: 0,
            second_stage_trials: 0,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iteration == 0 {
            return 0.0;
        }
        (self.accepted_first + self.accepted_second) as f64 / self.iteration as f64
    }
}

/// What a Metropolis step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    AcceptedFirst,
    AcceptedSecond,
    Rejected,
}

impl StepOutcome {
    pub fn stage_flag(self) -> u8 {
        match self {
            StepOutcome::AcceptedFirst => 1,
            StepOutcome::AcceptedSecond => 2,
            StepOutcome::Rejected => 0,
        }
    }
}

/// `log(new) - log(old)` with the conventions needed around zero-mass
/// states: any finite candidate beats a zero-mass current point.
fn log_ratio<T: Scalar>(lp_new: T, lp_old: T) -> T {
    if lp_new == T::neg_infinity() {
        T::neg_infinity()
    } else if lp_old == T::neg_infinity() {
        T::infinity()
    } else {
        lp_new - lp_old
    }
}

/// Draws a uniform and accepts with probability `min(1, exp(logp))`.
/// Always consumes exactly one draw.
fn accept_with_log_prob<T: Scalar, R: Rng + ?Sized>(rng: &mut R, logp: T) -> bool {
    let u = T::one() - T::uniform(rng); // (0, 1]
    u.ln() <= logp
}

/// `min(1, exp(a - b))` guarded against infinities.
fn clipped_ratio<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        T::zero()
    } else if b == T::neg_infinity() {
        T::one()
    } else {
        (a - b).exp().min(T::one())
    }
}

/// One random-walk Metropolis step; on first-stage rejection the delayed
/// second stage runs when enabled. The chain state is updated in place.
pub fn metropolis_step<T: Scalar, R: Rng + ?Sized, D: TargetDensity<T> + ?Sized>(
    chain: &mut ChainState<T>,
    cov: &ProposalCovariance<T>,
    target: &D,
    prior: &PriorSpec<T>,
    rng: &mut R,
    use_dr: bool,
) -> StepOutcome {
    let cand = cov.propose(&chain.theta, rng, false);
    let eval = if prior.contains(&cand) {
        target.log_density(&cand)
    } else {
        Evaluation::rejected()
    };
    let log_gamma = log_ratio(eval.log_posterior, chain.log_posterior);
    if accept_with_log_prob(rng, log_gamma) {
        chain.theta = cand;
        chain.log_posterior = eval.log_posterior;
        chain.objective = eval.objective;
        chain.record = eval.record;
        chain.accepted_first += 1;
        StepOutcome::AcceptedFirst
    } else if use_dr {
        delayed_rejection_step(chain, &cand, eval.log_posterior, cov, target, prior, rng)
    } else {
        StepOutcome::Rejected
    }
}

/// Second-stage move after a first-stage rejection.
///
/// The candidate is drawn around the current point with the shrunken
/// covariance; the acceptance ratio `q1 q2 (1 - beta_new)/(1 - beta_old)`
/// preserves reversibility of the compound kernel. `q2` compares the
/// first-stage proposal densities of the rejected point seen from the new
/// and the current position.
pub fn delayed_rejection_step<T: Scalar, R: Rng + ?Sized, D: TargetDensity<T> + ?Sized>(
    chain: &mut ChainState<T>,
    rejected_theta: &[T],
    rejected_lp: T,
    cov: &ProposalCovariance<T>,
    target: &D,
    prior: &PriorSpec<T>,
    rng: &mut R,
) -> StepOutcome {
    chain.second_stage_trials += 1;
    let cand = cov.propose(&chain.theta, rng, true);
    let eval = if prior.contains(&cand) {
        target.log_density(&cand)
    } else {
        Evaluation::rejected()
    };
    let log_q1 = log_ratio(eval.log_posterior, chain.log_posterior);

    let n = chain.theta.len();
    let mut d_new = vec![T::zero(); n];
    let mut d_old = vec![T::zero(); n];
    for i in 0..n {
        d_new[i] = cand[i] - rejected_theta[i];
        d_old[i] = chain.theta[i] - rejected_theta[i];
    }
    let log_q2 = -T::of(0.5) * (cov.mahalanobis_sq(&d_new) - cov.mahalanobis_sq(&d_old));

    // Acceptance probabilities the rejected point would have had as a
    // first-stage candidate from the new and from the current position.
    let beta_new = clipped_ratio(rejected_lp, eval.log_posterior);
    let beta_old = clipped_ratio(rejected_lp, chain.log_posterior);
    let num = T::one() - beta_new;
    let den = T::one() - beta_old;
    let log_alpha = if eval.log_posterior == T::neg_infinity() || num <= T::zero() {
        T::neg_infinity()
    } else if den <= T::zero() {
        // Stage one can only reject when its ratio was below one, so the
        // denominator only degenerates from a zero-mass current point;
        // any feasible candidate is then accepted.
        T::infinity()
    } else {
        log_q1 + log_q2 + num.ln() - den.ln()
    };
    if accept_with_log_prob(rng, log_alpha) {
        chain.theta = cand;
        chain.log_posterior = eval.log_posterior;
        chain.objective = eval.objective;
        chain.record = eval.record;
        chain.accepted_second += 1;
        StepOutcome::AcceptedSecond
    } else {
        StepOutcome::Rejected
    }
}

#[cfg(test)]
mod tests;
