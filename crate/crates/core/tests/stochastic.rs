use dualtherm::stochastic::{
    bfield_step, drift_step, sample_poisson_counts, BFieldProcess, DriftState, RngSeed,
};

fn peak_to_peak(seed: u64) -> f64 {
    let mut rng = RngSeed(seed).state();
    let mut state = DriftState::default();
    let (mut lo, mut hi, mut sum) = (1.0f64, 1.0f64, 0.0);
    let steps = 180_000; // 30 min at 10 ms
    for _ in 0..steps {
        state = drift_step(&state, 0.01, &mut rng).unwrap();
        let f = state.current_factor;
        lo = lo.min(f);
        hi = hi.max(f);
        sum += f;
    }
    (hi - lo) / (sum / steps as f64)
}

#[test]
fn default_drift_stays_within_photostability_bound() {
    let runs = 200;
    let within = (0..runs).filter(|&s| peak_to_peak(s) < 0.0041).count();
    assert!(
        within * 100 >= 95 * runs as usize,
        "{within}/{runs} runs below 0.41%"
    );
}

#[test]
fn drift_step_composes_in_distribution() {
    // Exact OU transitions: one 2 s step and two 1 s steps share the variance
    // of the log factor, 1 - e^{-2·k·2}.
    let start = DriftState::new(0.1, 0.01).unwrap();
    let n = 20_000;
    let var = |two_steps: bool| {
        let mut rng = RngSeed(if two_steps { 2 } else { 1 }).state();
        let logs: Vec<f64> = (0..n)
            .map(|_| {
                let s = if two_steps {
                    let mid = drift_step(&start, 1.0, &mut rng).unwrap();
                    drift_step(&mid, 1.0, &mut rng).unwrap()
                } else {
                    drift_step(&start, 2.0, &mut rng).unwrap()
                };
                s.current_factor.ln()
            })
            .collect();
        logs.iter().map(|l| l * l).sum::<f64>() / n as f64
    };
    let expected = 1e-4 * (1.0 - (-0.4f64).exp());
    for v in [var(false), var(true)] {
        assert!((v - expected).abs() < 0.05 * expected, "{v} vs {expected}");
    }
}

#[test]
fn poisson_counts_match_mean_and_variance() {
    for mu in [0.5, 5.0, 29.0, 31.0, 1e4] {
        let counts = sample_poisson_counts(&vec![mu; 40_000], &mut RngSeed(7).state()).unwrap();
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&k| k as f64).sum::<f64>() / n;
        let var = counts
            .iter()
            .map(|&k| (k as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let se = (mu / n).sqrt();
        assert!((mean - mu).abs() < 5.0 * se, "mu {mu}: mean {mean}");
        assert!((var - mu).abs() < 0.05 * mu, "mu {mu}: var {var}");
    }
}

#[test]
fn bfield_projection_is_bounded_and_resampled_per_dwell() {
    let mut rng = RngSeed(11).state();
    let mut proc = BFieldProcess::new(0.5, 0.5, &mut rng).unwrap();
    let first = proc.resamples;
    for _ in 0..400 {
        proc = bfield_step(&proc, 0.25, &mut rng).unwrap();
        assert!(proc.current_projection.abs() <= 0.5);
    }
    // 100 s of 0.5 s dwells.
    assert_eq!(proc.resamples - first, 200);
}
