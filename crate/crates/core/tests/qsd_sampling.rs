//! Sampler accuracy against the spectral QSD of the flat well (0, 1).
//!
//! At 1000 samples the 50-bin TV of exact QSD draws is itself about 0.085,
//! so the accuracy checks use 10⁴ samples, where that floor is about 0.027.

use parrep::exec::Exec;
use parrep::potential::{builtin_potential, interval_state_map, PotentialModel, PotentialName, StateMap};
use parrep::qsd::{fleming_viot, restart_dephasing, single_walker_redistribution, tv_to_density};
use parrep::rng::RngStream;
use parrep::sde::WalkerState;
use parrep::spectral::{build_spectral_model, InitialMeasure, SpectralModel};

const DT: f64 = 1e-4;

fn flat() -> (PotentialModel, StateMap, SpectralModel) {
    let pot = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
    let model = build_spectral_model(&pot, 0.0, 1.0, 2000, 16).unwrap();
    (pot, interval_state_map(&[0.0, 1.0]).unwrap(), model)
}

fn tv(samples: &[f64], m: &SpectralModel) -> f64 {
    tv_to_density(samples, &m.grid().nodes(), m.qsd_density(), (0.0, 1.0), 50).unwrap()
}

#[test]
fn exact_draws_set_the_noise_floor() {
    let (_, _, m) = flat();
    let xs = m.sample_qsd(&mut RngStream::new(3, 0), 10_000);
    let t = tv(&xs, &m);
    assert!(t < 3.0 * (50.0f64 / 10_000.0).sqrt(), "{t}");
    assert!(t < 0.04, "{t}");
}

#[test]
fn fleming_viot_reaches_the_qsd() {
    let (pot, map, m) = flat();
    let start = WalkerState::at(vec![0.5], &map);
    let e = fleming_viot(&start, 10_000, 2.0, DT, &pot, &map, &RngStream::new(5, 0), Exec::default()).unwrap();
    let t = tv(&e.first_coordinates(), &m);
    assert!(t < 0.08, "{t}");
    assert!(e.branch_count > 0);
}

#[test]
fn restart_dephasing_reaches_the_qsd() {
    let (pot, map, m) = flat();
    let start = WalkerState::at(vec![0.5], &map);
    let tau = 0.2;
    let e = restart_dephasing(&start, 10_000, tau, DT, &pot, &map, &RngStream::new(6, 0), 10_000, Exec::default())
        .unwrap();
    let t = tv(&e.first_coordinates(), &m);
    assert!(t < 0.08, "{t}");

    // each attempt is accepted with probability P(T ≥ τ | X₀ = 0.5)
    let attempts = (e.len() as u64 + e.restarts.iter().sum::<u64>()) as f64;
    let p_hat = e.len() as f64 / attempts;
    let p = m.survival_probability(&InitialMeasure::PointMass(0.5), tau, 16).unwrap().value;
    let se = (p * (1.0 - p) / attempts).sqrt();
    // grid detection misses some excursions, which can only raise acceptance
    assert!(p_hat > p - 3.0 * se && p_hat < p + 3.0 * se + 0.03, "{p_hat} vs {p} ± {se}");
}

#[test]
fn redistribution_occupation_reaches_the_qsd() {
    let (pot, map, m) = flat();
    let start = WalkerState::at(vec![0.5], &map);
    let r = single_walker_redistribution(&start, 200.0, DT, &pot, &map, &RngStream::new(7, 0)).unwrap();
    let t = tv(&r.occupation_first_coordinates(), &m);
    assert!(t < 0.05, "{t}");
}

#[test]
fn fleming_viot_without_exits_keeps_replicas_independent() {
    let pot = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
    let map = interval_state_map(&[f64::NEG_INFINITY, f64::INFINITY]).unwrap();
    let start = WalkerState::at(vec![0.0], &map);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for run in 0..20 {
        let e = fleming_viot(&start, 1000, 0.01, DT, &pot, &map, &RngStream::new(8, run), Exec::default()).unwrap();
        assert_eq!(e.branch_count, 0);
        let x = e.first_coordinates();
        for w in x.windows(2) {
            sxy += w[0] * w[1];
            sxx += w[0] * w[0];
            syy += w[1] * w[1];
        }
    }
    // centered at the start, so raw moments suffice
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr.abs() < 0.02, "{corr}");
}
