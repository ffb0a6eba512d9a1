use omnisync::analysis::fa_closed_form;
use omnisync::montecarlo::{
    estimate_fa, noise_var, reduced_md_counts, run_md_full, run_md_reduced, sweep, Approach, ChannelParams, Estimator,
    ExperimentConfig, ReducedDims,
};
use omnisync::{CMatrix, Complex};

fn small(approaches: Vec<Approach>, channel: ChannelParams, k: usize) -> ExperimentConfig {
    ExperimentConfig {
        approaches,
        k,
        mt: 8,
        mr: 4,
        l: 16,
        channel,
        snr_db: vec![-6.0, 0.0],
        p_fa_target: 1e-2,
        drops: 40,
        frames_per_drop: 500,
        ..ExperimentConfig::paper_sec6()
    }
}

#[test]
fn absent_signal_misses_with_one_minus_false_alarm() {
    let dims = ReducedDims {
        k: 2,
        l: 16,
        nr: 2,
        nt: 2,
    };
    let s = CMatrix::<f64>::zeros(8, 1);
    let gamma = 0.15;
    let n = 200_000;
    let md = reduced_md_counts(&s, dims, gamma, &[0.5, 3.0], n, 17).unwrap();
    let expected = 1.0 - fa_closed_form(gamma, 2, 16, 2, 2);
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    for m in md {
        assert!((m as f64 / n as f64 - expected).abs() < 4.0 * se);
    }
}

#[test]
fn scalar_signal_has_closed_form_miss_probability() {
    // One complex dimension: |g + z|² / ν ~ c·Exp(1) with c = 1 + Lλ/(N_t ν),
    // so P_MD = P{c E < t Y0} = 1 - (1 + t/c)^(-b).
    let dims = ReducedDims {
        k: 1,
        l: 16,
        nr: 1,
        nt: 1,
    };
    let lambda: f64 = 0.8;
    let s = CMatrix::from_element(1, 1, Complex::new(lambda.sqrt(), 0.0));
    let gamma = 0.4;
    let t = gamma / (1.0 - gamma);
    let b = 15.0;
    let nus = [0.5, 2.0, 8.0];
    let n = 200_000;
    let md = reduced_md_counts(&s, dims, gamma, &nus, n, 3).unwrap();
    for (m, nu) in md.iter().zip(nus) {
        let c = 1.0 + 16.0 * lambda / nu;
        let expected = 1.0 - (1.0 + t / c).powf(-b);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        let hat = *m as f64 / n as f64;
        assert!((hat - expected).abs() < 4.0 * se, "ν={nu}: {hat} vs {expected}");
    }
}

#[test]
fn stderr_matches_spread_of_repeats() {
    let dims = ReducedDims {
        k: 1,
        l: 16,
        nr: 1,
        nt: 1,
    };
    let s = CMatrix::from_element(1, 1, Complex::new(0.5, 0.0));
    let n = 2000;
    let reps = 200;
    let hats: Vec<f64> = (0..reps)
        .map(|seed| reduced_md_counts(&s, dims, 0.3, &[1.0], n, seed).unwrap()[0] as f64 / n as f64)
        .collect();
    let mean = hats.iter().sum::<f64>() / reps as f64;
    let sd = (hats.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let binomial = (mean * (1.0 - mean) / n as f64).sqrt();
    assert!((sd / binomial - 1.0).abs() < 0.2, "{sd} vs {binomial}");
}

#[test]
fn full_and_reduced_agree_across_setups() {
    let cases = [
        small(vec![Approach::OmniGolay], ChannelParams::geometric(2), 2),
        small(vec![Approach::OmniGolay], ChannelParams::iid(), 1),
        small(vec![Approach::QuasiOmniZc], ChannelParams::geometric(1), 2),
        small(vec![Approach::DftSweep], ChannelParams::geometric(1), 4),
        small(vec![Approach::RandomPhase], ChannelParams::geometric(3), 1),
    ];
    for cfg in cases {
        let a = cfg.approaches[0];
        // One master seed: both estimators see the same path angles.
        let full = run_md_full(&cfg, a).unwrap();
        let red = run_md_reduced(&cfg, a).unwrap();
        for (f, r) in full.rows.iter().zip(&red.rows) {
            let se = (f.p_md_stderr.powi(2) + r.p_md_stderr.powi(2)).sqrt();
            assert!(
                (f.p_md_hat - r.p_md_hat).abs() < 4.0 * se,
                "{a} at {} dB: full {} reduced {}",
                f.snr_db,
                f.p_md_hat,
                r.p_md_hat
            );
        }
    }
}

#[test]
fn miss_rate_falls_with_snr() {
    let cfg = ExperimentConfig {
        snr_db: vec![-15.0, -10.0, -5.0, 0.0, 5.0],
        ..small(
            vec![Approach::OmniGolay, Approach::RandomPhase],
            ChannelParams::geometric(2),
            2,
        )
    };
    let out = sweep(&cfg).unwrap();
    for a in [Approach::OmniGolay, Approach::RandomPhase] {
        let rows = out.rows_for(a);
        for w in rows.windows(2) {
            assert!(w[1].p_md_hat <= w[0].p_md_hat + 3.0 * w[0].p_md_stderr);
        }
        assert!(rows[0].p_md_hat > rows[4].p_md_hat);
    }
}

#[test]
fn false_alarm_estimators_match_closed_form() {
    let base = ExperimentConfig {
        drops: 10,
        frames_per_drop: 10_000,
        p_fa_target: 0.05,
        ..small(vec![Approach::OmniGolay], ChannelParams::geometric(1), 1)
    };
    for estimator in [Estimator::Reduced, Estimator::Full] {
        for gamma in [0.05, 0.1, 0.2] {
            let cfg = ExperimentConfig {
                estimator,
                ..base.clone()
            };
            let fa = estimate_fa(&cfg, Approach::OmniGolay, Some(gamma)).unwrap();
            let p = fa_closed_form(gamma, 1, 16, 2, 2);
            let se = (p * (1.0 - p) / fa.trials as f64).sqrt();
            assert!(
                (fa.p_fa_hat - p).abs() < 4.0 * se,
                "{estimator:?} γ={gamma}: {} vs {p}",
                fa.p_fa_hat
            );
        }
    }
}

#[test]
fn same_seed_same_table() {
    let cfg = small(
        vec![Approach::OmniGolay, Approach::RandomPhase],
        ChannelParams::geometric(2),
        2,
    );
    assert_eq!(sweep(&cfg).unwrap().csv(), sweep(&cfg).unwrap().csv());
    let other = ExperimentConfig {
        master_seed: 99,
        ..cfg.clone()
    };
    assert_ne!(sweep(&cfg).unwrap().csv(), sweep(&other).unwrap().csv());
}

#[test]
fn config_round_trips_and_reports_paths() {
    let cfg = ExperimentConfig::paper_sec6();
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert_eq!(ExperimentConfig::preset("desk").unwrap().drops, 100);
    assert!(ExperimentConfig::preset("nope").is_none());

    let mut doc: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    doc["channel"]["paths"] = "two".into();
    let err = ExperimentConfig::from_json(&doc.to_string()).unwrap_err();
    assert_eq!(err.0[0].path, "$.channel.paths");

    let mut doc: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    doc["nt"] = 3.into();
    doc["p_fa_target"] = 2.0.into();
    let err = ExperimentConfig::from_json(&doc.to_string()).unwrap_err();
    let paths: Vec<&str> = err.0.iter().map(|i| i.path.as_str()).collect();
    assert_eq!(paths, ["$.nt", "$.p_fa_target"]);

    let mut doc: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    doc["extra"] = 1.into();
    assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
}

#[test]
fn snr_maps_to_inverse_noise_variance() {
    assert!((noise_var(0.0) - 1.0).abs() < 1e-15);
    assert!((noise_var(10.0) - 0.1).abs() < 1e-15);
    assert!((noise_var(-20.0) - 100.0).abs() < 1e-12);
}
