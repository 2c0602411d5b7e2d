use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::linalg::sample_covariance;

/// Gaussian with diagonal covariance, wide support box.
struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl TargetDensity<f64> for DiagGaussian {
    fn log_density(&self, theta: &[f64]) -> Evaluation<f64> {
        let mut acc = 0.0;
        for ((x, m), v) in theta.iter().zip(&self.mean).zip(&self.var) {
            acc -= (x - m) * (x - m) / (2.0 * v);
        }
        Evaluation::of_log_density(acc)
    }
}

fn wide_prior(dim: usize) -> PriorSpec<f64> {
    PriorSpec::new(vec![-100.0; dim], vec![100.0; dim]).unwrap()
}

fn unit_cov(dim: usize, prior: &PriorSpec<f64>) -> ProposalCovariance<f64> {
    ProposalCovariance::from_sigma(
        crate::linalg::Matrix::identity(dim),
        0.1,
        prior.regularization(),
    )
    .unwrap()
}

#[test]
fn fisher_covariance_examples() {
    let prior = wide_prior(2);

    // identity sensitivity keeps the unit covariance
    let cov = initial_covariance_fisher(
        &[1.0, 1.0],
        |theta: &[f64]| Ok(theta.to_vec()),
        1.0,
        0.1,
        &prior,
    )
    .unwrap();
    assert!((cov.sigma()[(0, 0)] - 1.0).abs() < 1e-6);
    assert!((cov.sigma()[(1, 1)] - 1.0).abs() < 1e-6);
    assert!(cov.sigma()[(0, 1)].abs() < 1e-6);

    // diag(2, 1) sensitivity inverts to diag(1/4, 1)
    let cov = initial_covariance_fisher(
        &[1.0, 1.0],
        |theta: &[f64]| Ok(vec![2.0 * theta[0], theta[1]]),
        1.0,
        0.1,
        &prior,
    )
    .unwrap();
    assert!((cov.sigma()[(0, 0)] - 0.25).abs() < 1e-6, "{}", cov.sigma()[(0, 0)]);
    assert!((cov.sigma()[(1, 1)] - 1.0).abs() < 1e-6);

    // a direction the observations cannot see gets a full-box proposal
    // instead of a divergent one
    let cov = initial_covariance_fisher(
        &[1.0, 1.0],
        |theta: &[f64]| Ok(vec![2.0 * theta[0]]),
        1.0,
        0.1,
        &prior,
    )
    .unwrap();
    assert!((cov.sigma()[(0, 0)] - 0.25).abs() < 1e-6);
    let w = 200.0f64;
    assert!((cov.sigma()[(1, 1)] - w * w).abs() < 1.0, "{}", cov.sigma()[(1, 1)]);

    // flat model has no information
    let err = initial_covariance_fisher(
        &[1.0, 1.0],
        |_: &[f64]| Ok(vec![3.0, 3.0]),
        1.0,
        0.1,
        &prior,
    );
    assert!(matches!(err, Err(Error::RankDeficientJacobian { .. })));
}

#[test]
fn pilot_covariance_examples() {
    let prior = wide_prior(2);
    let reg = prior.regularization();
    let c: f64 = adaptation_scale(2);

    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let pilot: Vec<Vec<f64>> = (0..4000)
        .map(|_| {
            vec![
                crate::scalar::standard_normal(&mut rng),
                crate::scalar::standard_normal(&mut rng),
            ]
        })
        .collect();
    let cov = initial_covariance_pilot(&pilot, 0.1, reg.clone()).unwrap();
    assert!((cov.sigma()[(0, 0)] - c).abs() < 0.15 * c, "{}", cov.sigma()[(0, 0)]);
    assert!(cov.sigma()[(0, 1)].abs() < 0.15 * c);

    // identical pilot points collapse onto the regularization floor
    let same = vec![vec![1.0, 2.0]; 10];
    let cov = initial_covariance_pilot(&same, 0.1, reg.clone()).unwrap();
    assert!((cov.sigma()[(0, 0)] - reg[0]).abs() < 1e-18);

    // too few points for six dimensions
    let short = vec![vec![0.0; 6], vec![1.0; 6]];
    let reg6 = wide_prior(6).regularization();
    assert!(matches!(
        initial_covariance_pilot(&short, 0.1, reg6),
        Err(Error::InsufficientSamples(_))
    ));
}

#[test]
fn adaptation_scaling_rule() {
    let c6: f64 = adaptation_scale(6);
    assert!((c6 - 2.4 * 2.4 / 6.0f64.sqrt()).abs() < 1e-12);
    assert!((c6 - 2.351).abs() < 1e-3);

    // unit-variance history in six dimensions adapts to roughly c * I
    let prior = wide_prior(6);
    let cov0 = unit_cov(6, &prior);
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let history: Vec<Vec<f64>> = (0..20000)
        .map(|_| (0..6).map(|_| crate::scalar::standard_normal(&mut rng)).collect())
        .collect();
    let adapted = adapt_covariance(&history, &cov0).unwrap();
    for i in 0..6 {
        assert!(
            (adapted.sigma()[(i, i)] - c6).abs() < 0.1 * c6,
            "{}",
            adapted.sigma()[(i, i)]
        );
    }

    // constant history collapses onto the regularization diagonal
    let constant = vec![vec![3.0; 6]; 100];
    let adapted = adapt_covariance(&constant, &cov0).unwrap();
    assert!((adapted.sigma()[(0, 0)] - prior.regularization()[0]).abs() < 1e-18);
}

#[test]
fn proposal_draws_match_covariance() {
    let prior = wide_prior(2);
    let sigma = crate::linalg::Matrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]);
    let cov = ProposalCovariance::from_sigma(sigma.clone(), 0.1, prior.regularization()).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let draws: Vec<Vec<f64>> = (0..40000)
        .map(|_| cov.propose(&[0.0, 0.0], &mut rng, false))
        .collect();
    let emp = sample_covariance(&draws);
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (emp[(i, j)] - sigma[(i, j)]).abs() < 0.05,
                "({i},{j}): {} vs {}",
                emp[(i, j)],
                sigma[(i, j)]
            );
        }
    }

    // shrunken second-stage draws have covariance a * Sigma
    let draws: Vec<Vec<f64>> = (0..40000)
        .map(|_| cov.propose(&[0.0, 0.0], &mut rng, true))
        .collect();
    let emp = sample_covariance(&draws);
    assert!((emp[(0, 0)] - 0.2).abs() < 0.01, "{}", emp[(0, 0)]);

    // Mahalanobis norm against a diagonal factor
    let diag = ProposalCovariance::from_sigma(
        crate::linalg::Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 1.0]]),
        0.1,
        prior.regularization(),
    )
    .unwrap();
    let d = diag.mahalanobis_sq(&[2.0, 3.0]);
    assert!((d - (1.0 + 9.0)).abs() < 1e-9, "{d}");
}

#[test]
fn chains_stay_inside_the_prior_box() {
    let prior = PriorSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let target = DiagGaussian {
        mean: vec![0.9, -0.9],
        var: vec![1.0, 1.0],
    };
    let cov = ProposalCovariance::from_sigma(
        crate::linalg::Matrix::identity(2).scaled(0.5),
        0.1,
        prior.regularization(),
    )
    .unwrap();
    let settings = RunSettings {
        chains: 2,
        budget: 500,
        burn_in: 50,
        rhat_threshold: 1.1,
        check_interval: 10,
        adapt_interval: 50,
        adapt_enabled: true,
        delayed_rejection: true,
        seed: 4,
        freeze_on_converge: true,
    };
    let out = run_chains(&target, &prior, &cov, &[vec![0.0, 0.0], vec![0.5, 0.5]], &settings, None)
        .unwrap();
    for chain in &out.store.chains {
        for row in chain {
            assert!(prior.contains(&row.theta), "escaped: {:?}", row.theta);
        }
    }
    // both acceptance stages must actually fire in this setup
    let s1: usize = out.chain_states.iter().map(|s| s.accepted_first).sum();
    let s2: usize = out.chain_states.iter().map(|s| s.accepted_second).sum();
    assert!(s1 > 0);
    assert!(s2 > 0, "delayed rejection never accepted anything");
}

#[test]
fn tiny_budget_flags_unconverged() {
    let prior = wide_prior(2);
    let target = DiagGaussian {
        mean: vec![0.0, 0.0],
        var: vec![1.0, 1.0],
    };
    let cov = unit_cov(2, &prior);
    let settings = RunSettings {
        chains: 2,
        budget: 6,
        burn_in: 5,
        rhat_threshold: 1.1,
        check_interval: 10,
        adapt_interval: 50,
        adapt_enabled: true,
        delayed_rejection: true,
        seed: 1,
        freeze_on_converge: true,
    };
    let out = run_chains(&target, &prior, &cov, &[vec![0.0, 0.0], vec![1.0, 1.0]], &settings, None)
        .unwrap();
    assert_eq!(out.store.post_burn_len(), 1);
    assert!(!out.diagnostics.converged);
}

#[test]
fn fixed_seed_reproduces_chains_exactly() {
    let prior = wide_prior(2);
    let target = DiagGaussian {
        mean: vec![1.0, -1.0],
        var: vec![2.0, 0.5],
    };
    let cov = unit_cov(2, &prior);
    let settings = RunSettings {
        chains: 2,
        budget: 200,
        burn_in: 20,
        rhat_threshold: 1.01,
        check_interval: 10,
        adapt_interval: 50,
        adapt_enabled: true,
        delayed_rejection: true,
        seed: 99,
        freeze_on_converge: true,
    };
    let starts = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
    let a = run_chains(&target, &prior, &cov, &starts, &settings, None).unwrap();
    let b = run_chains(&target, &prior, &cov, &starts, &settings, None).unwrap();
    assert_eq!(a.stopped_at, b.stopped_at);
    for (ca, cb) in a.store.chains.iter().zip(&b.store.chains) {
        assert_eq!(ca.len(), cb.len());
        for (ra, rb) in ca.iter().zip(cb) {
            assert_eq!(ra.theta, rb.theta);
            assert_eq!(ra.log_posterior.to_bits(), rb.log_posterior.to_bits());
            assert_eq!(ra.accepted_stage, rb.accepted_stage);
        }
    }
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let prior = wide_prior(2);
    let target = DiagGaussian {
        mean: vec![0.0, 0.0],
        var: vec![1.0, 1.0],
    };
    let cov = unit_cov(2, &prior);
    let settings = RunSettings {
        chains: 2,
        budget: 240,
        burn_in: 40,
        rhat_threshold: 1e-9, // never converges, runs to budget
        check_interval: 10,
        adapt_interval: 50,
        adapt_enabled: true,
        delayed_rejection: true,
        seed: 7,
        freeze_on_converge: true,
    };
    let starts = vec![vec![1.0, 1.0], vec![-1.0, -1.0]];

    let mut snapshots: Vec<Checkpoint<f64>> = Vec::new();
    let mut sink = |cp: &Checkpoint<f64>| snapshots.push(cp.clone());
    let full = run_chains(&target, &prior, &cov, &starts, &settings, Some(&mut sink)).unwrap();
    assert!(!snapshots.is_empty());

    // resume from the first snapshot and compare the tail
    let first = snapshots[0].clone();
    assert!(first.completed < settings.budget);
    let resumed = resume_chains(&target, &prior, first, &settings, None).unwrap();
    assert_eq!(resumed.stopped_at, full.stopped_at);
    for (ca, cb) in resumed.store.chains.iter().zip(&full.store.chains) {
        for (ra, rb) in ca.iter().zip(cb) {
            assert_eq!(ra.theta, rb.theta, "diverged at iteration {}", ra.iteration);
        }
    }
}

#[test]
fn infeasible_everywhere_is_an_error() {
    struct Never;
    impl TargetDensity<f64> for Never {
        fn log_density(&self, _: &[f64]) -> Evaluation<f64> {
            Evaluation::rejected()
        }
    }
    let prior = wide_prior(2);
    let cov = unit_cov(2, &prior);
    let settings = RunSettings {
        chains: 2,
        budget: 20,
        burn_in: 5,
        rhat_threshold: 1.1,
        check_interval: 10,
        adapt_interval: 50,
        adapt_enabled: false,
        delayed_rejection: true,
        seed: 2,
        freeze_on_converge: true,
    };
    let err = run_chains(&Never, &prior, &cov, &[vec![0.0; 2], vec![1.0; 2]], &settings, None);
    assert!(matches!(err, Err(Error::DegenerateSimulation(_))));
}
