use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use chainsense::protocol::{
    invert_magnetization, median_delta_h, run_ensemble, run_protocol, FloorPolicy, JzSampler, ProtocolConfig,
    Termination,
};
use chainsense::thermo;
use chainsense::ChainSpec;

#[test]
fn sampled_moments_match_the_ensemble() {
    for (n, h, beta) in [(200, 0.6, 10.0), (64, 0.95, 3.0), (1000, 0.3, 100.0)] {
        let s = ChainSpec::xx(n, 1.0, h, beta).unwrap();
        let sampler = JzSampler::new(&s).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let m = 40_000;
        let xs: Vec<f64> = (0..m).map(|_| sampler.sample(&mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let want_mean = thermo::magnetization_z(&s);
        let want_var = thermo::jz_variance_xx(&s).unwrap();
        let se = (want_var / m as f64).sqrt();
        assert!((mean - want_mean).abs() < 4.0 * se, "N={n}: mean {mean} vs {want_mean} (se {se})");
        assert!((var / want_var - 1.0).abs() < 0.05, "N={n}: var {var} vs {want_var}");
    }
}

#[test]
fn outcomes_have_the_parity_of_n() {
    let s = ChainSpec::xx(30, 1.0, 0.5, 2.0).unwrap();
    let sampler = JzSampler::new(&s).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = sampler.sample(&mut rng);
        assert_eq!(x.rem_euclid(2), 0);
        assert!(x.abs() <= 30);
    }
}

#[test]
fn inversion_recovers_the_field() {
    let s = ChainSpec::xx(10_000, 1.0, 0.8, 200.0).unwrap();
    let m = thermo::magnetization_z(&s);
    let inv = invert_magnetization(m, &s.with_h(0.0), (0.0, 1.0)).unwrap();
    assert!(!inv.clamped);
    assert!((inv.h - 0.8).abs() < 1e-8, "{}", inv.h);
}

#[test]
fn estimates_are_unbiased_across_seeds() {
    let cfg = ProtocolConfig {
        n: 10_000,
        beta: 200.0,
        k_max: 1,
        floor_policy: FloorPolicy::RunToKmax,
        ..Default::default()
    };
    let traces = run_ensemble(&cfg, 200).unwrap();
    let est: Vec<f64> = traces.iter().map(|t| t.iterations[0].h_est).collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let sd = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (est.len() as f64 - 1.0)).sqrt();
    assert!((mean - cfg.h_true).abs() < 4.0 * sd / (est.len() as f64).sqrt(), "{mean} +- {sd}");
    // the reported error tracks the actual spread of the estimates
    let dh = median_delta_h(&traces, 1).unwrap();
    assert!((dh / sd - 1.0).abs() < 0.3, "median dh {dh} vs spread {sd}");
}

#[test]
fn thermal_floor_stops_the_run() {
    let cfg = ProtocolConfig {
        n: 100_000,
        beta: 1000.0,
        floor_policy: FloorPolicy::StopAtThermalFloor,
        ..Default::default()
    };
    let t = run_protocol(&cfg).unwrap();
    let last = t.iterations.last().unwrap();
    if t.terminated_by == Termination::ThermalFloor {
        assert!(last.delta_h < 1.0 / cfg.beta);
    }
    for it in &t.iterations[..t.iterations.len() - 1] {
        assert!(it.delta_h >= 1.0 / cfg.beta);
    }
}

#[test]
fn couplings_follow_the_retuning_rule() {
    let cfg = ProtocolConfig {
        n: 20_000,
        beta: 500.0,
        floor_policy: FloorPolicy::RunToKmax,
        seed: 5,
        ..Default::default()
    };
    let t = run_protocol(&cfg).unwrap();
    assert_eq!(t.iterations[0].j_k, cfg.h_max);
    for w in t.iterations.windows(2) {
        let want = w[0].h_est + cfg.retune_margin * w[0].delta_h;
        assert_eq!(w[1].j_k, want);
        assert!(w[1].j_k > w[1].h_est);
    }
}
