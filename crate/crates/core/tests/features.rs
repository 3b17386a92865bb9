mod common;

use proptest::prelude::*;
use vrattract::dsp::wavelet::wavedec;
use vrattract::features::eeg::{band_powers, dwt_subbands, higuchi_fd, hoc, nsi, EEG_BANDS};
use vrattract::features::{build_matrix, extract_all, layout, FeatureConfig, FeatureMatrix, Modality};
use vrattract::pipeline::{session_features, PipelineConfig};
use vrattract::synth::{generate_session, GeneratorConfig};

use common::{dft_band_power, gaussian, rng, tone};

#[test]
fn band_powers_match_direct_dft() {
    let rate = 250.0;
    for (i, (_, lo, hi)) in EEG_BANDS.iter().enumerate() {
        let x: Vec<f64> = tone(0.5 * (lo + hi), 2.0, rate, 500)
            .iter()
            .zip(tone(0.5 * (lo + hi) + 0.7, 0.5, rate, 500))
            .map(|(a, b)| a + b)
            .collect();
        let got = band_powers(&x, rate).unwrap().absolute[i];
        let want = dft_band_power(&x, rate, *lo, *hi);
        assert!((got - want).abs() <= 0.15 * want, "band {i}: {got} vs {want}");
    }
}

#[test]
fn white_noise_follows_bandwidths() {
    let widths = [3.0, 4.0, 6.0, 17.0, 19.0];
    let mut acc = [0.0; 5];
    for seed in 0..10 {
        let x = gaussian(&mut rng(seed), 500);
        let bp = band_powers(&x, 250.0).unwrap();
        for (a, p) in acc.iter_mut().zip(bp.absolute) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    for b in 0..5 {
        let measured = acc[b] / total;
        let expected = widths[b] / 49.0;
        assert!((measured / expected - 1.0).abs() <= 0.2, "band {b}: {measured} vs {expected}");
    }
}

#[test]
fn equal_tones_in_theta_and_gamma_balance() {
    let x: Vec<f64> = tone(5.0, 1.0, 250.0, 500)
        .iter()
        .zip(tone(40.0, 1.0, 250.0, 500))
        .map(|(a, b)| a + b)
        .collect();
    let bp = band_powers(&x, 250.0).unwrap();
    assert!((bp.absolute[1] / bp.absolute[4] - 1.0).abs() <= 0.1);
}

#[test]
fn dwt_is_energy_preserving() {
    let mut r = rng(11);
    for len in [32usize, 128, 512, 2048] {
        let x = gaussian(&mut r, len);
        let d = wavedec(&x, 5);
        let e: f64 = d.approx.iter().chain(d.details.iter().flatten()).map(|c| c * c).sum();
        let s: f64 = x.iter().map(|v| v * v).sum();
        assert!((e - s).abs() <= 1e-6 * s);
    }
}

#[test]
fn dwt_separates_slow_and_fast_tones() {
    let energy = |b: &Vec<f64>| b.iter().map(|c| c * c).sum::<f64>();
    let slow = dwt_subbands(&tone(2.0, 1.0, 250.0, 500)).unwrap();
    let es: Vec<f64> = slow.iter().map(energy).collect();
    assert!(es[0] > es[1..].iter().sum::<f64>());
    let fast = dwt_subbands(&tone(90.0, 1.0, 250.0, 500)).unwrap();
    let ef: Vec<f64> = fast.iter().map(energy).collect();
    assert!(ef[4] + ef[5] > ef[..4].iter().sum::<f64>());
}

#[test]
fn nsi_sees_drift() {
    let mut wins = 0;
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let still = gaussian(&mut r, 500);
        let drift: Vec<f64> = gaussian(&mut r, 500)
            .iter()
            .enumerate()
            .map(|(i, v)| v + 2.0 * i as f64 / 500.0)
            .collect();
        if nsi(&drift, 10).unwrap() > nsi(&still, 10).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}");
}

#[test]
fn higuchi_orders_line_tone_noise() {
    let ramp: Vec<f64> = (0..500).map(|i| 0.01 * i as f64).collect();
    let line = higuchi_fd(&ramp, 8).unwrap();
    assert!((line - 1.0).abs() <= 0.05);
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let noise = higuchi_fd(&gaussian(&mut rng(seed), 500), 8).unwrap();
        worst = worst.max((noise - 2.0).abs());
        let sine = higuchi_fd(&tone(7.0 + seed as f64 * 0.05, 1.0, 250.0, 500), 8).unwrap();
        assert!(sine > line && sine < noise, "{line} {sine} {noise}");
    }
    assert!(worst <= 0.15, "{worst}");
}

#[test]
fn hoc_counts() {
    let alt: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert_eq!(hoc(&alt, 1).unwrap()[0], 49);
    // A ramp minus its mean changes sign once.
    let ramp: Vec<f64> = (1..=40).map(|i| i as f64).collect();
    assert_eq!(hoc(&ramp, 1).unwrap()[0], 1);
    let n = 500.0;
    for seed in 0..20 {
        let c = hoc(&gaussian(&mut rng(900 + seed), 500), 1).unwrap()[0] as f64;
        assert!((c - n / 2.0).abs() <= 3.0 * n.sqrt(), "{c}");
    }
}

#[test]
fn session_matrix_has_canonical_layout() {
    let gen = GeneratorConfig {
        n_face: 6,
        n_cloth: 6,
        n_color: 6,
        n_composite: 6,
        ..Default::default()
    };
    let (s, _) = generate_session(&gen).unwrap();
    let (trials, _, m, skipped) = session_features(&s, &PipelineConfig::default()).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(m.n_cols(), 252);
    assert_eq!(m.modality_columns(Modality::Eeg).len(), 240);
    assert_eq!(m.modality_columns(Modality::Eye).len(), 12);
    let names: Vec<String> = layout(&FeatureConfig::default()).into_iter().map(|c| c.name).collect();
    assert_eq!(m.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>(), names);

    let v = extract_all(&trials[0], &FeatureConfig::default()).unwrap();
    assert_eq!(v.values.len(), 252);
    assert_eq!(v, extract_all(&trials[0].clone(), &FeatureConfig::default()).unwrap());
    let (again, _) = build_matrix(&trials, &FeatureConfig::default()).unwrap();
    assert_eq!(again, m);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    m.write_csv(&path).unwrap();
    assert_eq!(FeatureMatrix::read_csv(&path).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scale_invariant_descriptors(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let x = gaussian(&mut rng(seed), 500);
        let y: Vec<f64> = x.iter().map(|v| v * scale + 3.0).collect();
        prop_assert_eq!(hoc(&x, 10).unwrap(), hoc(&y, 10).unwrap());
        prop_assert!((nsi(&x, 10).unwrap() - nsi(&y, 10).unwrap()).abs() < 1e-9);
        prop_assert!((higuchi_fd(&x, 8).unwrap() - higuchi_fd(&y, 8).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn relative_powers_are_fractions(seed in 0u64..10_000) {
        let x = gaussian(&mut rng(seed), 500);
        let bp = band_powers(&x, 250.0).unwrap();
        let s: f64 = bp.relative.iter().sum();
        prop_assert!(bp.relative.iter().all(|r| (0.0..=1.0).contains(r)));
        prop_assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fd_stays_in_range(seed in 0u64..10_000, n in 32usize..600) {
        let fd = higuchi_fd(&gaussian(&mut rng(seed), n), 8).unwrap();
        prop_assert!((1.0..=2.0).contains(&fd));
    }
}
