//! Multi-chain execution with shared convergence monitoring.
//!
//! Chains run on their own threads in lockstep batches of
//! `check_interval` iterations. Between batches the monitor recomputes
//! the scale-reduction factors on the post-burn-in prefix and raises the
//! stop flag once every parameter is below threshold, which also freezes
//! covariance adaptation. Batches are deterministic per seed: chain `c`
//! draws from stream `c + 1` of the counter-based generator, and stop
//! decisions depend only on iteration counts, so fixed seeds reproduce
//! byte-identical chains regardless of thread scheduling.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::PerformanceRecord;
use crate::scalar::Scalar;

use super::diagnostics::{gelman_rhat_chains, Diagnostics};
use super::{
    adapt_covariance, metropolis_step, ChainState, Evaluation, PriorSpec, ProposalCovariance,
    TargetDensity,
};

/// Execution settings of a sampling run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RunSettings<T> {
    pub chains: usize,
    /// Total stored samples per chain, including the start point.
    pub budget: usize,
    /// Leading samples excluded from diagnostics.
    pub burn_in: usize,
    pub rhat_threshold: T,
    /// Monitor cadence in samples per chain.
    pub check_interval: usize,
    /// Adaptation cadence in post-burn-in samples.
    pub adapt_interval: usize,
    pub adapt_enabled: bool,
    pub delayed_rejection: bool,
    pub seed: u64,
    /// Freeze adaptation once the diagnostics first clear the threshold.
    pub freeze_on_converge: bool,
}

impl<T: Scalar> RunSettings<T> {
    /// Two chains of 400 samples, 50 burn-in, threshold 1.1.
    pub fn reference(seed: u64) -> Self {
        Self {
            chains: 2,
            budget: 400,
            burn_in: 50,
            rhat_threshold: T::of(1.1),
            check_interval: 10,
            adapt_interval: 50,
            adapt_enabled: true,
            delayed_rejection: true,
            seed,
            freeze_on_converge: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidInput("need at least two chains".into()));
        }
        if self.budget == 0 || self.budget <= self.burn_in {
            return Err(Error::InvalidInput(
                "sample budget must exceed the burn-in length".into(),
            ));
        }
        if self.check_interval == 0 || self.adapt_interval == 0 {
            return Err(Error::InvalidInput("cadences must be nonzero".into()));
        }
        Ok(())
    }
}

/// One stored sample of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SampleRow<T> {
    pub iteration: usize,
    pub theta: Vec<T>,
    pub log_posterior: T,
    /// `(f, g, H)`; NaN when the target did not expose an objective.
    pub objective: [T; 3],
    /// 0 = rejected (repeat), 1 = first stage, 2 = delayed second stage.
    pub accepted_stage: u8,
}

/// Full multi-chain history with the associated performance records.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SampleStore<T> {
    pub n_params: usize,
    pub burn_in: usize,
    pub chains: Vec<Vec<SampleRow<T>>>,
    pub records: Vec<Vec<Option<PerformanceRecord<T>>>>,
}

impl<T: Scalar> SampleStore<T> {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Common chain length (chains advance in lockstep).
    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.len()).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn post_burn_len(&self) -> usize {
        self.len().saturating_sub(self.burn_in)
    }

    /// Post-burn-in values of one parameter, chain by chain.
    pub fn post_burn_param(&self, param: usize) -> Vec<Vec<T>> {
        let k = self.len();
        self.chains
            .iter()
            .map(|c| {
                c[self.burn_in.min(k)..k]
                    .iter()
                    .map(|row| row.theta[param])
                    .collect()
            })
            .collect()
    }

    /// Post-burn-in values of one parameter pooled across chains.
    pub fn mixed_param(&self, param: usize) -> Vec<T> {
        self.post_burn_param(param).concat()
    }

    /// Post-burn-in `(chain, index, row)` triples in storage order.
    pub fn post_burn_rows(&self) -> impl Iterator<Item = (usize, usize, &SampleRow<T>)> {
        let burn = self.burn_in;
        self.chains.iter().enumerate().flat_map(move |(c, rows)| {
            rows.iter()
                .enumerate()
                .skip(burn)
                .map(move |(i, row)| (c, i, row))
        })
    }

    pub fn record(&self, chain: usize, index: usize) -> Option<&PerformanceRecord<T>> {
        self.records[chain][index].as_ref()
    }

    /// Writes one chain as CSV: iteration, decision vector, log posterior,
    /// objective triple and the acceptance-stage flag.
    pub fn write_chain_csv<W: Write + ?Sized>(
        &self,
        out: &mut W,
        chain: usize,
        parameter_names: &[&str],
    ) -> Result<()> {
        write!(out, "iteration")?;
        for name in parameter_names {
            write!(out, ",{name}")?;
        }
        writeln!(out, ",log_posterior,h_total,f_objective,g_penalty,accepted_stage")?;
        for row in &self.chains[chain] {
            write!(out, "{}", row.iteration)?;
            for v in &row.theta {
                write!(out, ",{}", v.as_f64())?;
            }
            writeln!(
                out,
                ",{},{},{},{},{}",
                row.log_posterior.as_f64(),
                row.objective[2].as_f64(),
                row.objective[0].as_f64(),
                row.objective[1].as_f64(),
                row.accepted_stage
            )?;
        }
        Ok(())
    }
}

/// Scale-reduction factors recorded by the monitor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RhatSnapshot<T> {
    /// Samples per chain when the snapshot was taken.
    pub at: usize,
    /// Per-parameter factors; NaN while undefined.
    pub rhat: Vec<T>,
}

/// Everything a finished run hands back.
#[derive(Debug)]
pub struct RunOutcome<T> {
    pub store: SampleStore<T>,
    pub diagnostics: Diagnostics<T>,
    pub rhat_history: Vec<RhatSnapshot<T>>,
    pub chain_states: Vec<ChainState<T>>,
    pub covariances: Vec<ProposalCovariance<T>>,
    pub converged: bool,
    /// Samples per chain when sampling stopped.
    pub stopped_at: usize,
}

/// Resumable snapshot of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ChainCheckpoint<T> {
    pub state: ChainState<T>,
    pub covariance: ProposalCovariance<T>,
    /// Word position of the counter-based generator, decimal `u128`.
    pub rng_word_pos: String,
    pub rows: Vec<SampleRow<T>>,
    pub records: Vec<Option<PerformanceRecord<T>>>,
}

/// Resumable snapshot of a whole run, written at every adaptation
/// interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Checkpoint<T> {
    pub seed: u64,
    /// Samples stored per chain so far.
    pub completed: usize,
    pub frozen: bool,
    pub chains: Vec<ChainCheckpoint<T>>,
    pub rhat_history: Vec<RhatSnapshot<T>>,
}

struct ChainCtx<T> {
    state: ChainState<T>,
    cov: ProposalCovariance<T>,
    rng: ChaCha12Rng,
    rows: Vec<SampleRow<T>>,
    records: Vec<Option<PerformanceRecord<T>>>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn objective_or_nan<T: Scalar>(objective: &Option<[T; 3]>) -> [T; 3] {
    objective.unwrap_or([T::nan(); 3])
}

/// Runs `settings.chains` chains from the given start points.
pub fn run_chains<T: Scalar, D: TargetDensity<T>>(
    target: &D,
    prior: &PriorSpec<T>,
    initial_cov: &ProposalCovariance<T>,
    starts: &[Vec<T>],
    settings: &RunSettings<T>,
    checkpoint_sink: Option<&mut dyn FnMut(&Checkpoint<T>)>,
) -> Result<RunOutcome<T>> {
    settings.validate()?;
    if starts.len() != settings.chains {
        return Err(Error::InvalidInput(format!(
            "{} start points for {} chains",
            starts.len(),
            settings.chains
        )));
    }
    let mut contexts = Vec::with_capacity(settings.chains);
    for (c, theta0) in starts.iter().enumerate() {
        let eval = if prior.contains(theta0) {
            target.log_density(theta0)
        } else {
            Evaluation::rejected()
        };
        let state = ChainState::new(theta0.clone(), eval);
        let row = SampleRow {
            iteration: 0,
            theta: state.theta.clone(),
            log_posterior: state.log_posterior,
            objective: objective_or_nan(&state.objective),
            accepted_stage: 0,
        };
        let record = state.record.clone();
        contexts.push(ChainCtx {
            state,
            cov: initial_cov.clone(),
            rng: chain_rng(settings.seed, c),
            rows: vec![row],
            records: vec![record],
        });
    }
    drive(target, prior, settings, contexts, 1, false, Vec::new(), checkpoint_sink)
}

/// Continues a checkpointed run to the configured budget.
pub fn resume_chains<T: Scalar, D: TargetDensity<T>>(
    target: &D,
    prior: &PriorSpec<T>,
    checkpoint: Checkpoint<T>,
    settings: &RunSettings<T>,
    checkpoint_sink: Option<&mut dyn FnMut(&Checkpoint<T>)>,
) -> Result<RunOutcome<T>> {
    settings.validate()?;
    if checkpoint.chains.len() != settings.chains {
        return Err(Error::InvalidInput(format!(
            "checkpoint holds {} chains, settings expect {}",
            checkpoint.chains.len(),
            settings.chains
        )));
    }
    if checkpoint.completed == 0 || checkpoint.completed > settings.budget {
        return Err(Error::InvalidInput(format!(
            "checkpoint progress {} incompatible with budget {}",
            checkpoint.completed, settings.budget
        )));
    }
    let mut contexts = Vec::with_capacity(settings.chains);
    for (c, snap) in checkpoint.chains.into_iter().enumerate() {
        if snap.rows.len() != checkpoint.completed || snap.records.len() != checkpoint.completed {
            return Err(Error::InvalidInput("corrupt checkpoint: row count mismatch".into()));
        }
        let word_pos: u128 = snap
            .rng_word_pos
            .parse()
            .map_err(|_| Error::InvalidInput("corrupt checkpoint: bad rng position".into()))?;
        let mut rng = chain_rng(checkpoint.seed, c);
        rng.set_word_pos(word_pos);
        contexts.push(ChainCtx {
            state: snap.state,
            cov: snap.covariance,
            rng,
            rows: snap.rows,
            records: snap.records,
        });
    }
    drive(
        target,
        prior,
        settings,
        contexts,
        checkpoint.completed,
        checkpoint.frozen,
        checkpoint.rhat_history,
        checkpoint_sink,
    )
}

#[allow(clippy::too_many_arguments)]
fn drive<T: Scalar, D: TargetDensity<T>>(
    target: &D,
    prior: &PriorSpec<T>,
    settings: &RunSettings<T>,
    mut contexts: Vec<ChainCtx<T>>,
    start_completed: usize,
    mut frozen: bool,
    mut rhat_history: Vec<RhatSnapshot<T>>,
    mut checkpoint_sink: Option<&mut dyn FnMut(&Checkpoint<T>)>,
) -> Result<RunOutcome<T>> {
    let n_params = prior.dim();
    let stop = AtomicBool::new(false);
    let mut completed = start_completed;
    let mut converged = rhat_history
        .last()
        .map(|s| s.rhat.iter().all(|r| r.is_finite() && *r < settings.rhat_threshold))
        .unwrap_or(false);

    let adapt_epoch = |completed: usize| {
        if completed <= settings.burn_in {
            0
        } else {
            (completed - settings.burn_in) / settings.adapt_interval
        }
    };
    while completed < settings.budget && !stop.load(Ordering::Acquire) {
        // batches end on multiples of the monitor cadence so adaptation
        // and checkpoint boundaries land deterministically
        let batch_start = completed;
        let batch_end = ((completed / settings.check_interval + 1) * settings.check_interval)
            .min(settings.budget);
        let frozen_now = frozen;
        std::thread::scope(|scope| {
            for ctx in contexts.iter_mut() {
                let stop = &stop;
                scope.spawn(move || {
                    for iter in completed..batch_end {
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let outcome = metropolis_step(
                            &mut ctx.state,
                            &ctx.cov,
                            target,
                            prior,
                            &mut ctx.rng,
                            settings.delayed_rejection,
                        );
                        ctx.state.iteration = iter;
                        ctx.rows.push(SampleRow {
                            iteration: iter,
                            theta: ctx.state.theta.clone(),
                            log_posterior: ctx.state.log_posterior,
                            objective: objective_or_nan(&ctx.state.objective),
                            accepted_stage: outcome.stage_flag(),
                        });
                        ctx.records.push(ctx.state.record.clone());
                        let stored = iter + 1;
                        if settings.adapt_enabled
                            && !frozen_now
                            && stored > settings.burn_in
                            && (stored - settings.burn_in) % settings.adapt_interval == 0
                        {
                            let history: Vec<Vec<T>> =
                                ctx.rows.iter().map(|r| r.theta.clone()).collect();
                            if let Ok(cov) = adapt_covariance(&history, &ctx.cov) {
                                ctx.cov = cov;
                            }
                        }
                    }
                });
            }
        });
        completed = batch_end;

        // Monitor: scale reduction on the post-burn-in prefix.
        if completed > settings.burn_in + 1 {
            let mut rhat = Vec::with_capacity(n_params);
            for l in 0..n_params {
                let chains: Vec<Vec<T>> = contexts
                    .iter()
                    .map(|ctx| {
                        ctx.rows[settings.burn_in..completed]
                            .iter()
                            .map(|row| row.theta[l])
                            .collect()
                    })
                    .collect();
                rhat.push(gelman_rhat_chains(&chains).unwrap_or(T::nan()));
            }
            let all_below = rhat
                .iter()
                .all(|r| r.is_finite() && *r < settings.rhat_threshold);
            rhat_history.push(RhatSnapshot {
                at: completed,
                rhat,
            });
            if all_below {
                converged = true;
                if settings.freeze_on_converge {
                    frozen = true;
                }
                stop.store(true, Ordering::Release);
            }
        }

        let crossed_adaptation = adapt_epoch(completed) > adapt_epoch(batch_start);
        if crossed_adaptation || completed == settings.budget {
            if let Some(sink) = checkpoint_sink.as_mut() {
                let snapshot = build_checkpoint(settings, &contexts, completed, frozen, &rhat_history);
                sink(&snapshot);
            }
        }
    }

    let any_feasible = contexts
        .iter()
        .any(|ctx| ctx.rows.iter().any(|r| r.log_posterior.is_finite()));
    if !any_feasible {
        return Err(Error::DegenerateSimulation(
            "no chain produced a feasible point".into(),
        ));
    }

    let store = SampleStore {
        n_params,
        burn_in: settings.burn_in,
        chains: contexts.iter().map(|c| c.rows.clone()).collect(),
        records: contexts.iter().map(|c| c.records.clone()).collect(),
    };
    let diagnostics = Diagnostics::compute(&store, settings.rhat_threshold);
    Ok(RunOutcome {
        store,
        diagnostics,
        rhat_history,
        chain_states: contexts.iter().map(|c| c.state.clone()).collect(),
        covariances: contexts.into_iter().map(|c| c.cov).collect(),
        converged,
        stopped_at: completed,
    })
}

fn build_checkpoint<T: Scalar>(
    settings: &RunSettings<T>,
    contexts: &[ChainCtx<T>],
    completed: usize,
    frozen: bool,
    rhat_history: &[RhatSnapshot<T>],
) -> Checkpoint<T> {
    Checkpoint {
        seed: settings.seed,
        completed,
        frozen,
        chains: contexts
            .iter()
            .map(|ctx| ChainCheckpoint {
                state: ctx.state.clone(),
                covariance: ctx.cov.clone(),
                rng_word_pos: ctx.rng.get_word_pos().to_string(),
                rows: ctx.rows.clone(),
                records: ctx.records.clone(),
            })
            .collect(),
        rhat_history: rhat_history.to_vec(),
    }
}
