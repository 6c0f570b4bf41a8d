//! Metric bounds, determinism and forward-model linearity.

use alcmv_core::simkit::*;
use proptest::prelude::*;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn orientation() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0..1.0f64)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
        .prop_map(unit)
}

proptest! {
    #[test]
    fn orientation_error_in_unit_interval(a in prop::array::uniform3(-5.0..5.0f64), b in prop::array::uniform3(-5.0..5.0f64)) {
        for e in [orientation_error(&a, &b), orientation_error_scaled(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&e));
        }
        prop_assert_eq!(orientation_error(&a, &b), orientation_error(&b, &a));
        prop_assert_eq!(orientation_error(&a, &a.map(|v| -v)), 0.0);
    }

    #[test]
    fn literal_orientation_error_is_zero_or_at_least_a_third(a in prop::array::uniform3(-5.0..5.0f64), b in prop::array::uniform3(-5.0..5.0f64)) {
        let e = orientation_error(&a, &b);
        prop_assert!(e == 0.0 || e >= 1.0 / 3.0);
    }

    #[test]
    fn recon_error_in_unit_interval(a in prop::collection::vec(-5.0..5.0f64, 1..64), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * (1.0 + ((seed ^ i as u64) % 7) as f64 * 0.1)).collect();
        for e in [recon_error(&a, &b).unwrap(), recon_error_scaled(&a, &b).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&e));
        }
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        prop_assert_eq!(recon_error(&a, &neg).unwrap(), 0.0);
    }

    #[test]
    fn localization_error_is_a_metric(a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64)) {
        let d = localization_error(&a, &b);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, localization_error(&b, &a));
        prop_assert_eq!(localization_error(&a, &a), 0.0);
    }

    #[test]
    fn simulation_is_deterministic_and_linear(seed in any::<u64>(), o1 in orientation(), o2 in orientation(), sigma in 0.0..0.1f64) {
        let electrodes = cap(0.1, 8);
        let grid = lattice([-0.02, 0.0, 0.0], [0.02, 0.0, 0.04], [3, 1, 3]).unwrap();
        let lf = make_leadfield(&electrodes, &grid, LeadFieldModel::HomogeneousDipole).unwrap();
        let n = 32;
        let wave = |f: f64| (0..n).map(|t| (t as f64 * f).sin()).collect::<Vec<_>>();
        let a = Dipole { position: grid[1], orientation: o1, waveform: wave(0.3) };
        let b = Dipole { position: grid[7], orientation: o2, waveform: wave(0.7) };
        let scene = |s: Vec<Dipole>, sigma| DipoleScene::new(s, n, None, sigma, seed).unwrap();
        let noisy = simulate_eeg(&lf, &scene(vec![a.clone(), b.clone()], sigma)).unwrap();
        let again = simulate_eeg(&lf, &scene(vec![a.clone(), b.clone()], sigma)).unwrap();
        prop_assert_eq!(noisy.data(), again.data());
        let both = clean_signal(&lf, &scene(vec![a.clone(), b.clone()], 0.0)).unwrap();
        let sum = clean_signal(&lf, &scene(vec![a], 0.0)).unwrap().add(&clean_signal(&lf, &scene(vec![b], 0.0)).unwrap());
        prop_assert!(both.sub(&sum).max_abs() <= 1e-12 * (1.0 + sum.max_abs()));
    }

    #[test]
    fn random_leadfield_is_seeded(seed in any::<u64>()) {
        let electrodes = cap(0.1, 6);
        let grid = [[0.0; 3], [1.0, 0.0, 0.0]];
        let m = LeadFieldModel::RandomFullrank { seed };
        prop_assert_eq!(make_leadfield(&electrodes, &grid, m).unwrap(), make_leadfield(&electrodes, &grid, m).unwrap());
    }
}
