use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use ddq_core::analysis::welch;
use ddq_core::campaign::summarize;
use ddq_core::device::{DeviceConfig, DimonLevel};
use ddq_core::dynamics::{PulseSequence, TrajectoryEngine};

#[test]
fn lognormal_median_from_1750_samples() {
    let truth = 1.8f64;
    let dist = LogNormal::new(truth.ln(), 0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1750);
    let v: Vec<f64> = (0..1750).map(|_| dist.sample(&mut rng)).collect();
    let s = summarize(&v).unwrap();
    assert!((s.median / truth - 1.0).abs() < 0.03, "{}", s.median);
}

#[test]
fn sinusoid_has_one_dominant_bin() {
    let (dt, f0) = (0.1, 1.25);
    let v: Vec<f64> = (0..4096).map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 * dt).sin()).collect();
    let p = welch(&v, dt, None).unwrap();
    let peak = (0..p.density.len()).max_by(|&a, &b| p.density[a].total_cmp(&p.density[b])).unwrap();
    assert!((p.freqs_hz[peak] - f0).abs() <= p.freqs_hz[1] - p.freqs_hz[0]);
    let second = p
        .density
        .iter()
        .enumerate()
        .filter(|(k, _)| k.abs_diff(peak) > 2)
        .map(|(_, d)| *d)
        .fold(0.0, f64::max);
    assert!(second < 1e-3 * p.density[peak]);
}

#[test]
fn zero_series_has_zero_spectrum() {
    let p = welch(&[0.0; 512], 1.0, None).unwrap();
    assert!(p.density.iter().all(|d| *d == 0.0));
}

#[test]
fn no_bit_flips_without_thermal_excitation() {
    let params = DeviceConfig::preset("q1").unwrap().to_params().unwrap().with_n_th(0.0);
    let engine = TrajectoryEngine::new(&params, &[]).unwrap();
    for (init, other) in [(DimonLevel::L10, DimonLevel::L01), (DimonLevel::L01, DimonLevel::L10)] {
        for delay in [5.0, 30.0, 200.0] {
            let seq = PulseSequence::bitflip(init, delay).unwrap();
            let counts = engine.level_counts(&seq, 3, 0, 20_000);
            assert_eq!(counts[other as usize], 0, "{init:?} at {delay} us");
        }
    }
}
