//! Convergence diagnostics: potential scale reduction, autocorrelation,
//! effective sample size, and credible intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::runner::SampleStore;

/// Potential scale reduction factor over equal-length chains of one
/// parameter: `sqrt(var_plus / W)` with
/// `var_plus = (k-1)/k W + B/k`,
/// `B = k/(m-1) sum (mean_i - grand_mean)^2`, and `W` the mean of the
/// unbiased within-chain variances. Chains are truncated to the shortest.
pub fn gelman_rhat_chains<T: Scalar>(chains: &[Vec<T>]) -> Result<T> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::UndefinedDiagnostic("need at least two chains".into()));
    }
    let k = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if k < 2 {
        return Err(Error::UndefinedDiagnostic(
            "need at least two samples per chain".into(),
        ));
    }
    let kf = T::from_count(k);
    let mf = T::from_count(m);
    let means: Vec<T> = chains
        .iter()
        .map(|c| c[..k].iter().copied().sum::<T>() / kf)
        .collect();
    let grand = means.iter().copied().sum::<T>() / mf;
    let between = means
        .iter()
        .map(|mu| (*mu - grand) * (*mu - grand))
        .sum::<T>()
        * kf
        / (mf - T::one());
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| {
            c[..k]
                .iter()
                .map(|x| (*x - *mu) * (*x - *mu))
                .sum::<T>()
                / (kf - T::one())
        })
        .sum::<T>()
        / mf;
    if within <= T::zero() {
        return Err(Error::UndefinedDiagnostic(
            "within-chain variance is zero".into(),
        ));
    }
    let var_plus = (kf - T::one()) / kf * within + between / kf;
    Ok((var_plus / within).sqrt())
}

/// Biased autocorrelation estimate at one lag.
pub fn autocorrelation<T: Scalar>(values: &[T], lag: usize) -> Result<T> {
    let rho = autocorrelations(values, lag)?;
    Ok(rho[lag])
}

/// Autocorrelations `rho_0 .. rho_max_lag` with the biased estimator
/// (denominator `k`, single global mean).
pub fn autocorrelations<T: Scalar>(values: &[T], max_lag: usize) -> Result<Vec<T>> {
    let k = values.len();
    if max_lag >= k {
        return Err(Error::InvalidInput(format!(
            "lag {max_lag} out of range for {k} samples"
        )));
    }
    let kf = T::from_count(k);
    let mean = values.iter().copied().sum::<T>() / kf;
    let var = values.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / kf;
    if var <= T::zero() {
        return Err(Error::UndefinedDiagnostic("series has zero variance".into()));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for t in 0..=max_lag {
        let mut acc = T::zero();
        for i in 0..(k - t) {
            acc = acc + (values[i] - mean) * (values[i + t] - mean);
        }
        out.push(acc / kf / var);
    }
    Ok(out)
}

/// Effective sample size of the mixed post-burn-in chain:
/// `n_eff = m k / (1 + 2 sum rho_t)` with the sum truncated at the first
/// lag where `rho_t + rho_{t+1}` turns negative.
pub fn effective_sample_size_mixed<T: Scalar>(chains: &[Vec<T>]) -> Result<T> {
    let m = chains.len();
    let k = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || k < 4 {
        return Err(Error::UndefinedDiagnostic(
            "need at least four samples per chain".into(),
        ));
    }
    let mixed: Vec<T> = chains.iter().flat_map(|c| c[..k].iter().copied()).collect();
    let total = mixed.len();
    let max_lag = total - 1;
    let rho = autocorrelations(&mixed, max_lag)?;
    let mut sum = T::zero();
    let mut t = 1;
    while t + 1 <= max_lag {
        if rho[t] + rho[t + 1] < T::zero() {
            break;
        }
        sum += rho[t];
        t += 1;
    }
    let total_f = T::from_count(total);
    let denom = (T::one() + T::of(2.0) * sum).max(T::epsilon());
    Ok((total_f / denom).min(total_f))
}

/// Empirical credible interval at mass `level = 1 - alpha` using the
/// Hazen percentile rule (`h = k p + 1/2`, linear interpolation, clamped
/// to the extremes).
pub fn credible_interval<T: Scalar>(values: &[T], level: T) -> Result<(T, T)> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples("no samples for the interval".into()));
    }
    if level <= T::zero() || level > T::one() {
        return Err(Error::InvalidInput("credible mass must lie in (0, 1]".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let alpha = T::one() - level;
    let two = T::of(2.0);
    Ok((
        hazen_percentile(&sorted, alpha / two),
        hazen_percentile(&sorted, T::one() - alpha / two),
    ))
}

fn hazen_percentile<T: Scalar>(sorted: &[T], p: T) -> T {
    let k = sorted.len();
    let kf = T::from_count(k);
    let h = kf * p + T::of(0.5);
    if h <= T::one() {
        return sorted[0];
    }
    if h >= kf {
        return sorted[k - 1];
    }
    let i = h.floor();
    let idx = i.as_f64() as usize;
    let frac = h - i;
    sorted[idx - 1] + frac * (sorted[idx] - sorted[idx - 1])
}

/// Per-parameter convergence summary of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Diagnostics<T> {
    /// Potential scale reduction per parameter; NaN when undefined.
    pub rhat: Vec<T>,
    /// Effective sample size per parameter; NaN when undefined.
    pub ess: Vec<T>,
    pub mean_ess: T,
    pub threshold: T,
    pub converged: bool,
}

impl<T: Scalar> Diagnostics<T> {
    pub fn compute(store: &SampleStore<T>, threshold: T) -> Self {
        let n = store.n_params;
        let mut rhat = Vec::with_capacity(n);
        let mut ess = Vec::with_capacity(n);
        for l in 0..n {
            let chains = store.post_burn_param(l);
            rhat.push(gelman_rhat_chains(&chains).unwrap_or(T::nan()));
            ess.push(effective_sample_size_mixed(&chains).unwrap_or(T::nan()));
        }
        let finite: Vec<T> = ess.iter().copied().filter(|e| e.is_finite()).collect();
        let mean_ess = if finite.is_empty() {
            T::nan()
        } else {
            finite.iter().copied().sum::<T>() / T::from_count(finite.len())
        };
        let converged = !rhat.is_empty() && rhat.iter().all(|r| r.is_finite() && *r < threshold);
        Self {
            rhat,
            ess,
            mean_ess,
            threshold,
            converged,
        }
    }
}
