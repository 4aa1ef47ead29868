use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use nhsync_core::disorder::{histogram, sample_frequencies, DisorderConfig};
use nhsync_core::elimination::{effective_two_mode, ThreeModeParams};
use nhsync_core::kuramoto::{
    assemble_collective_matrix, build_transform, closed_form_collective_matrix, from_collective, to_collective,
    BranchChoice,
};
use nhsync_core::linear::{evolve_linear, propagate_dense, spectrum, steady_state, AmplitudeVector};
use nhsync_core::params::{build_evolution_matrix, derived_params, wrap_angle, SystemParams};
use nhsync_core::phase::{integrate, phase_coherence, polar_state, BareFlow};

fn params() -> impl Strategy<Value = SystemParams> {
    (
        1usize..8,
        0.5f64..1.5,
        0.0f64..0.5,
        0.5f64..1.5,
        0.0f64..0.5,
        0.0f64..1.0,
        -3.1f64..3.1,
        prop_oneof![Just(0.0), 0.1f64..1.0],
        0.5f64..1.5,
    )
        .prop_map(
            |(n_modes, omega0, gamma0, omega, gamma, coupling, theta, drive, drive_freq)| SystemParams {
                n_modes,
                omega0,
                gamma0,
                omega,
                gamma,
                coupling,
                theta,
                drive,
                drive_freq,
            },
        )
}

fn amplitudes(p: &SystemParams, seed: &[(f64, f64)]) -> AmplitudeVector {
    AmplitudeVector::new((0..=p.n_modes).map(|k| C64::from_polar(seed[k].0, seed[k].1)).collect())
}

fn seeds() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((0.2f64..1.5, -PI..PI), 9)
}

fn max_rel(a: &AmplitudeVector, b: &AmplitudeVector) -> f64 {
    let scale = a.norm().max(b.norm()).max(1e-300);
    a.distance(b) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closed_form_propagator_matches_matrix_exponential(p in params(), seed in seeds(), t in 0.1f64..30.0) {
        let d = derived_params(&p).unwrap();
        prop_assume!(d.mu.norm() > 1e-3);
        let a0 = amplitudes(&p, &seed);
        let times = [0.5 * t, t];
        let fast = evolve_linear(&p, &a0, &times).unwrap();
        let dense = propagate_dense(&build_evolution_matrix(&p).unwrap(), &a0, p.drive, &times).unwrap();
        for (a, b) in fast.states.iter().zip(&dense.states) {
            prop_assert!(max_rel(a, b) < 1e-9, "{}", max_rel(a, b));
        }
    }

    #[test]
    fn spectrum_trace_matches_matrix_trace(p in params()) {
        let h = build_evolution_matrix(&p).unwrap();
        let tr = (0..h.dim).map(|k| h.get(k, k)).sum::<C64>();
        prop_assert!((spectrum(&p).unwrap().trace() - tr).norm() < 1e-10);
    }

    #[test]
    fn steady_state_solves_the_linear_system(p in params()) {
        prop_assume!(p.drive > 0.0);
        let Ok(a) = steady_state(&p) else { return Ok(()) };
        let h = build_evolution_matrix(&p).unwrap().entries;
        let x = DVector::from_column_slice(&a.values);
        let mut r = &h * &x * C64::new(0.0, -1.0);
        r[0] += p.drive;
        prop_assert!(r.norm() < 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn collective_map_is_a_similarity(p in params(), seed in seeds()) {
        let d = derived_params(&p).unwrap();
        prop_assume!(d.mu.norm() > 0.05 && p.coupling > 0.05);
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let m = assemble_collective_matrix(&p, &tr).unwrap();
        let closed = closed_form_collective_matrix(&p, tr.branch).unwrap();
        prop_assert!((&m - &closed).iter().all(|z| z.norm() < 1e-10));
        let a = amplitudes(&p, &seed);
        let back = from_collective(&to_collective(&a, &tr).unwrap(), &tr).unwrap();
        prop_assert!(max_rel(&a, &back) < 1e-12);
    }

    #[test]
    fn polar_flow_tracks_linear_flow(p in params(), seed in seeds()) {
        let a0 = amplitudes(&p, &seed);
        let dt = 0.05;
        let lin = evolve_linear(&p, &a0, &(0..=40).map(|k| k as f64 * dt).collect::<Vec<_>>()).unwrap();
        let pol = integrate(&BareFlow { params: p }, &polar_state(&a0), dt, 40).unwrap();
        for (s, l) in pol.states.iter().zip(&lin.states) {
            prop_assert!(max_rel(&AmplitudeVector::new(s.to_amplitudes()), l) < 1e-7);
        }
    }

    #[test]
    fn coherence_is_bounded_and_rotation_invariant(phases in proptest::collection::vec(-10.0f64..10.0, 1..50), shift in -PI..PI) {
        let z = phase_coherence(&phases).unwrap();
        prop_assert!((0.0..=1.0).contains(&z));
        let moved: Vec<f64> = phases.iter().map(|x| x + shift).collect();
        prop_assert!((phase_coherence(&moved).unwrap() - z).abs() < 1e-12);
    }

    #[test]
    fn wrapped_angles_lie_in_the_half_open_circle(x in -1e3f64..1e3) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        let turns = (x - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn elimination_only_adds_loss(
        dw in -1.0f64..1.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0,
        big in 1.0f64..100.0, a1 in -PI..PI, a2 in -PI..PI,
    ) {
        let p = ThreeModeParams {
            omega1: 1.0 + dw,
            omega2: 1.0,
            omega_aux: 1.0 - dw,
            gamma1: 0.01,
            gamma2: 0.02,
            gamma_aux: big,
            g1: C64::from_polar(g1, a1),
            g2: C64::from_polar(g2, a2),
        };
        let e = effective_two_mode(&p).unwrap();
        prop_assert!(e.gamma_eff_1 >= p.gamma1 && e.gamma_eff_2 >= p.gamma2);
        prop_assert!((e.g_eff_12.norm() - e.g_eff_21.norm()).abs() < 1e-12);
    }

    #[test]
    fn disorder_draws_are_reproducible(seed in any::<u64>(), sigma in 0.0f64..2.0, trial in 0usize..100) {
        let cfg = DisorderConfig { mean_freq: 1.0, sigma, n_trials: 1, seed };
        let a = sample_frequencies(&cfg, 16, trial).unwrap();
        prop_assert_eq!(&a, &sample_frequencies(&cfg, 16, trial).unwrap());
        let h = histogram(&a);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), 16);
    }
}
