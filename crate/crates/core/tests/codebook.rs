use omnisync::codebook::{
    beam_pattern, build_omni_codebook, dft_sweep_codebook, flatness_deviation, golay_hadamard, golay_pair,
    random_phase_codebook, random_phase_side, unitarity_deviation, verify_codebook, verify_schedule, zc_codebook,
    AngleGrid, BinarySequence, Codebook, GolayPair, SlotSchedule,
};
use proptest::prelude::*;

fn direct_autocorrelation(s: &[i8]) -> Vec<i64> {
    (0..s.len())
        .map(|lag| (0..s.len() - lag).map(|i| s[i] as i64 * s[i + lag] as i64).sum())
        .collect()
}

#[test]
fn known_length_four_pair_is_complementary() {
    let a = BinarySequence::new(vec![1, 1, 1, -1]).unwrap();
    let b = BinarySequence::new(vec![1, 1, -1, 1]).unwrap();
    let pair = GolayPair::new(a, b).unwrap();
    assert_eq!(pair.autocorrelation_sum(), vec![8, 0, 0, 0]);
    assert_eq!(golay_pair(4).unwrap(), pair);

    assert!(GolayPair::new(
        BinarySequence::new(vec![1, 1, 1, 1]).unwrap(),
        BinarySequence::new(vec![1, 1, 1, 1]).unwrap(),
    )
    .is_err());
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(BinarySequence::new(vec![1, 0, -1]).is_err());
    assert!(golay_pair(12).is_err());
    assert!(golay_hadamard(6).is_err());
    let s = SlotSchedule::cyclic(1, 16, 2).unwrap();
    assert!(build_omni_codebook::<f64>(16, 3, 16, 2, 1, &s, &s).is_err());
    assert!(build_omni_codebook::<f64>(12, 2, 16, 2, 1, &s, &s).is_err());
    assert!(dft_sweep_codebook::<f64>(8, 9).is_err());
    assert!(SlotSchedule::cyclic(4, 16, 3).is_err());
}

#[test]
fn golay_hadamard_small_orders_by_hand() {
    let p2 = golay_hadamard(2).unwrap();
    let g2 = p2.gram();
    assert_eq!(g2, nalgebra::DMatrix::from_diagonal_element(2, 2, 2));
    for m in [2usize, 4, 8, 16, 32] {
        let p = golay_hadamard(m).unwrap();
        for n in 1..=m / 2 {
            let a = p.column(n);
            let b = p.column(n + m / 2);
            let sum: Vec<i64> = direct_autocorrelation(a.entries())
                .iter()
                .zip(direct_autocorrelation(b.entries()))
                .map(|(x, y)| x + y)
                .collect();
            assert_eq!(sum[0], 2 * m as i64);
            assert!(sum[1..].iter().all(|&v| v == 0), "M={m} n={n}");
        }
    }
}

#[test]
fn cyclic_schedule_wraps_after_half_the_array() {
    let tx = SlotSchedule::cyclic(64, 64, 2).unwrap();
    let rx = SlotSchedule::cyclic(64, 16, 2).unwrap();
    let report = verify_schedule(&tx, &rx, 64);
    assert!(!report.pass);
    let clash = report.pairs.iter().find(|p| !p.tx_disjoint && !p.rx_disjoint).unwrap();
    assert_eq!((clash.k, clash.l), (1, 33));

    let short = verify_schedule(
        &SlotSchedule::cyclic(8, 64, 2).unwrap(),
        &SlotSchedule::cyclic(8, 16, 2).unwrap(),
        8,
    );
    assert!(short.pass);
}

#[test]
fn omni_codebook_verifies_and_others_do_not() {
    let s = SlotSchedule::cyclic(4, 16, 2).unwrap();
    let omni = build_omni_codebook::<f64>(16, 2, 16, 2, 4, &s, &s).unwrap();
    let report = verify_codebook(&omni, 1024, 64).unwrap();
    assert!(report.pass(), "{report:?}");

    let zc = zc_codebook::<f64>(16, 1, 4).unwrap();
    let report = verify_codebook(&zc, 1024, 64).unwrap();
    assert!(!report.get("flatness-tx").unwrap().pass);
    assert!(report.get("constant-modulus").unwrap().pass);

    let rnd = random_phase_codebook::<f64>(16, 1, 4, 3).unwrap();
    assert!(
        !verify_codebook(&rnd, 1024, 64)
            .unwrap()
            .get("flatness-tx")
            .unwrap()
            .pass
    );
}

#[test]
fn dft_sweep_slots_tile_the_angle_domain() {
    let cb = dft_sweep_codebook::<f64>(64, 64).unwrap();
    let grid = AngleGrid::new(1000).unwrap();
    let mut sum = vec![0.0; grid.len()];
    for w in &cb.w {
        for (s, p) in sum.iter_mut().zip(beam_pattern(w, &grid)) {
            *s += p;
        }
    }
    assert!(sum.iter().all(|s| (s - 64.0).abs() < 1e-9));
    // Slot k steers to k/M: peak power M at θ = k/64.
    let fine = AngleGrid::new(64).unwrap();
    for (k, w) in cb.w.iter().enumerate() {
        let p = beam_pattern(w, &fine);
        assert!((p[(k + 1) % 64] - 64.0).abs() < 1e-9);
    }
}

#[test]
fn random_phase_ensemble_is_flat_on_average() {
    let grid = AngleGrid::new(16).unwrap();
    let draws = 10_000;
    let n = 2;
    let mut sum = vec![0.0; 16];
    let mut sq = vec![0.0; 16];
    for seed in 0..draws {
        let w = random_phase_side::<f64>(8, n, 1, seed).unwrap();
        for (g, p) in beam_pattern(&w[0], &grid).into_iter().enumerate() {
            sum[g] += p;
            sq[g] += p * p;
        }
    }
    for g in 0..16 {
        let mean = sum[g] / draws as f64;
        let se = ((sq[g] / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((mean - n as f64).abs() < 3.5 * se, "grid point {g}: {mean} ± {se}");
    }
}

#[test]
fn json_round_trip_is_exact() {
    let s = SlotSchedule::cyclic(3, 32, 4).unwrap();
    let r = SlotSchedule::cyclic(3, 8, 2).unwrap();
    let cb = build_omni_codebook::<f64>(32, 4, 8, 2, 3, &s, &r).unwrap();
    let back = Codebook::<f64>::from_json(&cb.to_json()).unwrap();
    assert_eq!(back, cb);

    let rnd = random_phase_codebook::<f64>(8, 1, 2, 11).unwrap();
    assert_eq!(Codebook::<f64>::from_json(&rnd.to_json()).unwrap(), rnd);

    let mut doc: serde_json::Value = serde_json::from_str(&cb.to_json()).unwrap();
    doc["k"] = 5.into();
    assert!(Codebook::<f64>::from_json(&doc.to_string()).is_err());
}

#[test]
fn single_precision_codebook_is_flat() {
    let s = SlotSchedule::cyclic(2, 64, 2).unwrap();
    let cb = build_omni_codebook::<f32>(64, 2, 16, 2, 2, &s, &s).unwrap();
    let grid = AngleGrid::new(2048).unwrap();
    assert!(flatness_deviation(&cb.w, &grid) < 1e-4);
    assert!(unitarity_deviation(&cb.f) < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_pair_column_is_complementary(log_m in 1u32..9, pick in any::<prop::sample::Index>()) {
        let m = 1usize << log_m;
        let p = golay_hadamard(m).unwrap();
        let n = pick.index(m / 2) + 1;
        prop_assert!(p.column_pair(n).unwrap().is_complementary());
        let g = p.gram();
        prop_assert_eq!(g, nalgebra::DMatrix::from_diagonal_element(m, m, m as i64));
    }

    #[test]
    fn any_schedule_gives_flat_unitary_slots(
        log_m in 2u32..8,
        log_n in 1u32..4,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let m = 1usize << log_m;
        let n = (1usize << log_n).min(m);
        let q = n / 2;
        let mut stream = omnisync::rng::stream(seed);
        let slots: Vec<Vec<usize>> = (0..k)
            .map(|_| rand::seq::index::sample(&mut stream, m / 2, q).iter().map(|i| i + 1).collect())
            .collect();
        let sched = SlotSchedule::new(slots).unwrap();
        let cb = build_omni_codebook::<f64>(m, n, m, n, k, &sched, &sched).unwrap();
        let grid = AngleGrid::new(4 * m).unwrap();
        prop_assert!(flatness_deviation(&cb.w, &grid) < 1e-9);
        prop_assert!(unitarity_deviation(&cb.w) < 1e-12);
        for w in &cb.w {
            prop_assert!(w.iter().all(|z| (z.norm_sqr() * m as f64 - 1.0).abs() < 1e-12));
        }
    }
}
