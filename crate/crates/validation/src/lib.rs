//! Numerical acceptance criteria for the workspace. Each criterion is a
//! function returning an [`Outcome`]; the `acceptance` test target runs them
//! all.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;
use std::time::Duration;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use nhsync_cli::config::{parse_config, InitialState, SweepAxis, TimeGrid};
use nhsync_cli::run::{initial_amplitudes, inverse_time_fit, sync_time_sweep, theta_for_sin};
use nhsync_core::disorder::{run_disorder, sweep_sigma_with_cutoff, DisorderConfig};
use nhsync_core::elimination::{compare_spectra, ThreeModeParams};
use nhsync_core::kuramoto::{assemble_collective_matrix, build_transform, closed_form_collective_matrix, BranchChoice};
use nhsync_core::linear::{evolve_linear, long_time_ratio, propagate_dense, spectrum, AmplitudeVector};
use nhsync_core::params::{
    build_evolution_matrix, derived_params, solve_sync_angle, sync_condition_driven, sync_condition_undriven,
    wrap_angle, SyncMode, SystemParams, Verdict,
};
use nhsync_core::phase::{integrate, polar_state, BareFlow, PhaseTrajectory, DEFAULT_SYNC_THRESHOLD};
use nhsync_core::stats::linear_fit;
use nhsync_core::stochastic::{
    moments, phase_stats, scalar_stationary_second_moment, sde_evolve, sde_evolve_with, Execution, NoiseConfig,
};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub ok: bool,
    pub detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

pub fn outcome_from_panic(e: Box<dyn std::any::Any + Send>) -> Outcome {
    let msg = e
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default();
    outcome(false, format!("panicked: {msg}"))
}

pub struct Criterion {
    pub number: usize,
    /// Wall-clock budget.
    pub limit: Duration,
    pub check: fn() -> Outcome,
}

const fn criterion(number: usize, secs: u64, check: fn() -> Outcome) -> Criterion {
    Criterion {
        number,
        limit: Duration::from_secs(secs),
        check,
    }
}

pub const CRITERIA: [Criterion; 10] = [
    criterion(1, 60, sync_theorem),
    criterion(2, 30, kuramoto_exactness),
    criterion(3, 30, coherence_rise),
    criterion(4, 120, sync_time_scaling),
    criterion(5, 60, polar_matches_linear),
    criterion(6, 300, stochastic_moments),
    criterion(7, 300, noise_phenomenology),
    criterion(8, 600, disorder_phenomenology),
    criterion(9, 30, elimination_spectra),
    criterion(10, 120, determinism),
];

fn random_unit(rng: &mut ChaCha20Rng) -> C64 {
    C64::from_polar(1.0, rng.random_range(-PI..PI))
}

fn relative_phases(a: &AmplitudeVector) -> Vec<f64> {
    let r = a.values[0].arg();
    a.values.iter().map(|z| wrap_angle(z.arg() - r)).collect()
}

fn spread(phases: &[f64]) -> f64 {
    phases.iter().fold(0.0, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------- 1

fn undriven_draw(rng: &mut ChaCha20Rng) -> SystemParams {
    SystemParams {
        n_modes: rng.random_range(2..=50),
        omega0: rng.random_range(0.5..1.5),
        gamma0: rng.random_range(0.01..0.5),
        omega: rng.random_range(0.5..1.5),
        gamma: rng.random_range(0.01..0.5),
        coupling: rng.random_range(0.2..1.5),
        theta: 0.0,
        drive: 0.0,
        drive_freq: 0.0,
    }
}

/// Decay gap between the slowest mode and the rest of the spectrum.
fn slow_gap(p: &SystemParams) -> Option<(f64, f64)> {
    let sp = spectrum(p).ok()?;
    let mut decays: Vec<f64> = vec![-sp.lambda_plus.im, -sp.lambda_minus.im];
    if p.n_modes > 1 {
        decays.push(-sp.lambda_dark.im);
    }
    decays.sort_by(f64::total_cmp);
    Some((decays[0], decays[1] - decays[0]))
}

/// Relative phases of the long-time state by repeated propagation with
/// renormalization.
fn undriven_limit(p: &SystemParams, rng: &mut ChaCha20Rng) -> Option<Vec<f64>> {
    let (slow, gap) = slow_gap(p)?;
    let chunk = (5.0 / gap).min(200.0 / slow.abs().max(1e-12));
    let dim = p.n_modes + 1;
    let mut a = AmplitudeVector::new(
        (0..dim)
            .map(|_| random_unit(rng) * rng.random_range(0.5..1.5))
            .collect(),
    );
    let mut prev = relative_phases(&a);
    for _ in 0..5000 {
        let next = evolve_linear(p, &a, &[chunk]).ok()?.states.pop()?;
        let norm = next.norm();
        a = AmplitudeVector::new(next.values.iter().map(|z| z / norm).collect());
        let ph = relative_phases(&a);
        let change = ph
            .iter()
            .zip(&prev)
            .fold(0.0f64, |m, (x, y)| m.max(wrap_angle(x - y).abs()));
        prev = ph;
        if change < 1e-13 {
            return Some(prev);
        }
    }
    None
}

fn driven_draw(rng: &mut ChaCha20Rng) -> SystemParams {
    SystemParams {
        drive: rng.random_range(0.5..2.0),
        drive_freq: rng.random_range(0.5..1.5),
        ..undriven_draw(rng)
    }
}

/// Steady state from a dense LU solve of `H A = -iη u`.
fn driven_limit(p: &SystemParams) -> Option<Vec<f64>> {
    let sp = spectrum(p).ok()?;
    if sp.eigenvalues().iter().any(|l| l.im >= -1e-6) {
        return None;
    }
    let h = build_evolution_matrix(p).ok()?.entries;
    let mut b = DVector::<C64>::zeros(h.nrows());
    b[0] = C64::new(0.0, -p.drive);
    let x = h.lu().solve(&b)?;
    Some(relative_phases(&AmplitudeVector::new(x.iter().copied().collect())))
}

pub fn sync_theorem() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let target = 200;
    let (mut und_ok, mut und_worst, mut und_n) = (0, 0.0f64, 0);
    let (mut drv_ok, mut drv_worst, mut drv_n) = (0, 0.0f64, 0);
    let (mut und_bad_ok, mut und_bad_min, mut und_bad_n) = (0, f64::INFINITY, 0);
    let (mut drv_bad_ok, mut drv_bad_min, mut drv_bad_n) = (0, f64::INFINITY, 0);

    for _ in 0..200_000 {
        if und_n >= target && drv_n >= target && und_bad_n >= target && drv_bad_n >= target {
            break;
        }
        // satisfying, undriven
        if und_n < target {
            let p = undriven_draw(&mut rng);
            if let Ok(theta) = solve_sync_angle(&p, SyncMode::Undriven) {
                let q = p.with_theta(theta);
                let rep = sync_condition_undriven(&q, 1e-9).unwrap();
                let usable = rep.verdict == Verdict::Synchronizes
                    && rep.branch_note.is_empty()
                    && long_time_ratio(&q).is_ok()
                    && slow_gap(&q).is_some_and(|(_, g)| g >= 1e-3);
                if usable {
                    if let Some(ph) = undriven_limit(&q, &mut rng) {
                        und_n += 1;
                        und_worst = und_worst.max(spread(&ph));
                        und_ok += usize::from(spread(&ph) <= 1e-6);
                    }
                }
            }
        }
        // satisfying, driven
        if drv_n < target {
            let p = driven_draw(&mut rng);
            if let Ok(theta) = solve_sync_angle(&p, SyncMode::Driven) {
                if let Some(ph) = driven_limit(&p.with_theta(theta)) {
                    drv_n += 1;
                    drv_worst = drv_worst.max(spread(&ph));
                    drv_ok += usize::from(spread(&ph) <= 1e-6);
                }
            }
        }
        // violating, undriven
        if und_bad_n < target {
            let q = undriven_draw(&mut rng).with_theta(rng.random_range(-PI..PI));
            let rep = sync_condition_undriven(&q, 1e-9).unwrap();
            let usable = rep.residual_imag.abs() >= 0.1
                && long_time_ratio(&q).is_ok()
                && slow_gap(&q).is_some_and(|(_, g)| g >= 1e-3);
            if usable {
                if let Some(ph) = undriven_limit(&q, &mut rng) {
                    und_bad_n += 1;
                    und_bad_min = und_bad_min.min(spread(&ph));
                    und_bad_ok += usize::from(spread(&ph) > 1e-2);
                }
            }
        }
        // violating, driven
        if drv_bad_n < target {
            let q = driven_draw(&mut rng).with_theta(rng.random_range(-PI..PI));
            let rep = sync_condition_driven(&q, 1e-9).unwrap();
            if rep.residual_imag.abs() >= 0.1 {
                if let Some(ph) = driven_limit(&q) {
                    drv_bad_n += 1;
                    drv_bad_min = drv_bad_min.min(spread(&ph));
                    drv_bad_ok += usize::from(spread(&ph) > 1e-2);
                }
            }
        }
    }
    let ok = [und_ok, drv_ok, und_bad_ok, drv_bad_ok].iter().all(|&k| k == target);
    outcome(
        ok,
        format!(
            "locked undriven {und_ok}/{und_n} (worst {und_worst:.1e}), driven {drv_ok}/{drv_n} (worst {drv_worst:.1e}); \
             violating undriven {und_bad_ok}/{und_bad_n} (min spread {und_bad_min:.2e}), driven {drv_bad_ok}/{drv_bad_n} (min {drv_bad_min:.2e})"
        ),
    )
}

// ---------------------------------------------------------------- 2

pub fn kuramoto_exactness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let (mut n, mut entry_max, mut eig_max, mut prod_max) = (0, 0.0f64, 0.0f64, 0.0f64);
    while n < 500 {
        let p = SystemParams {
            n_modes: rng.random_range(1..=12),
            omega0: rng.random_range(0.5..1.5),
            gamma0: rng.random_range(0.0..0.5),
            omega: rng.random_range(0.5..1.5),
            gamma: rng.random_range(0.0..0.5),
            coupling: rng.random_range(0.1..1.0),
            theta: rng.random_range(-PI..PI),
            drive: 0.0,
            drive_freq: 0.0,
        };
        let d = derived_params(&p).unwrap();
        if d.mu.norm() < 0.05 {
            continue;
        }
        n += 1;
        prod_max = prod_max.max((d.s_plus * d.s_minus + 1.0).norm());
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let numeric = assemble_collective_matrix(&p, &tr).unwrap();
        let closed = closed_form_collective_matrix(&p, tr.branch).unwrap();
        entry_max = entry_max.max((&numeric - &closed).iter().fold(0.0, |m, z| m.max(z.norm())));

        let mut computed: Vec<C64> = closed.clone().schur().eigenvalues().unwrap().iter().copied().collect();
        for l in spectrum(&p).unwrap().eigenvalues() {
            let (k, dist) = computed
                .iter()
                .enumerate()
                .map(|(k, z)| (k, (z - l).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            eig_max = eig_max.max(dist);
            computed.swap_remove(k);
        }
    }
    let ok = entry_max <= 1e-10 && eig_max <= 1e-10 && prod_max <= 1e-12;
    outcome(
        ok,
        format!("{n} draws: entries {entry_max:.1e}, eigenvalues {eig_max:.1e}, |s+s- + 1| {prod_max:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

pub fn coherence_rise() -> Outcome {
    let p = SystemParams {
        n_modes: 100,
        omega0: 1.0,
        gamma0: 0.05,
        omega: 1.0,
        gamma: 0.1,
        coupling: 1.0,
        theta: FRAC_PI_2,
        drive: 0.0,
        drive_freq: 0.0,
    };
    let tau_dec = 1.0 / p.gamma;
    let times = TimeGrid {
        t_final: 2.0 * tau_dec,
        dt: 0.01,
    }
    .times();
    let a0 = initial_amplitudes(InitialState::RandomPhases { amplitude: 1.0 }, p.n_modes + 1, 1, 0);
    let traj = PhaseTrajectory::from_linear(&evolve_linear(&p, &a0, &times).unwrap());
    let z = traj.z_series(1);
    let z0 = z[0];
    let t99 = times.iter().zip(&z).find(|(_, &v)| v >= 0.99).map(|(t, _)| *t);
    let worst_after = traj
        .states
        .iter()
        .zip(&times)
        .filter(|(_, &t)| t >= tau_dec)
        .flat_map(|(s, _)| s.phi[1..].iter().map(move |x| wrap_angle(x - s.phi[0]).abs()))
        .fold(0.0f64, f64::max);
    let ok = z0 <= 3.0 / (p.n_modes as f64).sqrt()
        && t99.is_some_and(|t| t < tau_dec)
        && worst_after <= DEFAULT_SYNC_THRESHOLD;
    outcome(
        ok,
        format!(
            "z(0) = {z0:.3}, z >= 0.99 at t = {}, max |dphi| after tau_dec = {worst_after:.2e}",
            t99.map_or("never".into(), |t| format!("{t:.2}"))
        ),
    )
}

// ---------------------------------------------------------------- 4

pub fn sync_time_scaling() -> Outcome {
    let p = SystemParams {
        n_modes: 20,
        omega0: 1.0,
        gamma0: 0.1,
        omega: 1.0,
        gamma: 0.1,
        coupling: 0.5,
        theta: theta_for_sin(0.7),
        drive: 0.0,
        drive_freq: 0.0,
    };
    let tau_dec = 1.0 / p.gamma;
    let grid = TimeGrid {
        t_final: 200.0,
        dt: 0.05,
    };
    let values: Vec<f64> = (0..8).map(|k| 0.2 + 0.1 * k as f64).collect();
    let by_g = sync_time_sweep(&p, SweepAxis::Coupling, &values, &grid, 10, DEFAULT_SYNC_THRESHOLD, 11).unwrap();
    let by_s = sync_time_sweep(&p, SweepAxis::SinTheta, &values, &grid, 10, DEFAULT_SYNC_THRESHOLD, 12).unwrap();
    let all_locked = by_g.iter().chain(&by_s).all(|pt| pt.tau_sync.is_some());
    let fit_g = inverse_time_fit(&by_g);
    let fit_s = inverse_time_fit(&by_s);

    let herm = SystemParams { theta: 0.0, ..p };
    let herm_grid = TimeGrid {
        t_final: 10.0 * tau_dec,
        dt: 0.05,
    };
    let h = sync_time_sweep(
        &herm,
        SweepAxis::Coupling,
        &[0.5],
        &herm_grid,
        10,
        DEFAULT_SYNC_THRESHOLD,
        13,
    )
    .unwrap();
    let herm_locked = h[0].locked_trials;

    let r2 = |f: Option<nhsync_core::stats::LinearFit>| f.map_or(f64::NAN, |f| f.r_squared);
    let ok = all_locked && r2(fit_g) >= 0.99 && r2(fit_s) >= 0.99 && herm_locked == 0;
    outcome(
        ok,
        format!(
            "R^2 vs g = {:.5}, R^2 vs sin(theta) = {:.5}, hermitian locked trials {herm_locked}/10",
            r2(fit_g),
            r2(fit_s)
        ),
    )
}

// ---------------------------------------------------------------- 5

pub fn polar_matches_linear() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let (mut n, mut dr_max, mut dphi_max, mut rejected) = (0, 0.0f64, 0.0f64, 0);
    let steps = 500;
    while n < 50 {
        let driven = rng.random_bool(0.5);
        let p = SystemParams {
            n_modes: rng.random_range(1..=8),
            omega0: rng.random_range(0.5..1.5),
            gamma0: rng.random_range(0.05..0.5),
            omega: rng.random_range(0.5..1.5),
            gamma: rng.random_range(0.05..0.5),
            coupling: rng.random_range(0.05..1.0),
            theta: rng.random_range(-PI..PI),
            drive: if driven { rng.random_range(0.1..1.0) } else { 0.0 },
            drive_freq: rng.random_range(0.5..1.5),
        };
        let dim = p.n_modes + 1;
        let a0 = AmplitudeVector::new(
            (0..dim)
                .map(|_| random_unit(&mut rng) * rng.random_range(0.5..1.5))
                .collect(),
        );
        let dt = 5.0 / p.gamma / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let lin = evolve_linear(&p, &a0, &times).unwrap();
        let radii = lin.states.iter().flat_map(|s| s.values.iter().map(|z| z.norm()));
        let (rmin, rmax) = radii.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if rmin < 1e-3 || rmax > 1e3 {
            rejected += 1;
            continue;
        }
        n += 1;
        let polar = integrate(&BareFlow { params: p }, &polar_state(&a0), dt, steps).unwrap();
        for (s, l) in polar.states.iter().zip(&lin.states) {
            for (j, z) in l.values.iter().enumerate() {
                dr_max = dr_max.max((s.r[j] - z.norm()).abs() / z.norm().max(1.0));
                dphi_max = dphi_max.max(wrap_angle(s.phi[j] - z.arg()).abs());
            }
        }
    }
    let ok = dr_max <= 1e-5 && dphi_max <= 1e-5;
    outcome(
        ok,
        format!("{n} draws ({rejected} rejected): max dr {dr_max:.1e}, max dphi {dphi_max:.1e}"),
    )
}

// ---------------------------------------------------------------- 6

/// Largest `|mean - oracle| / SE` over slices after the first and all modes.
fn mean_z_score(p: &SystemParams, cfg: &NoiseConfig, a0: &AmplitudeVector, t_final: f64) -> f64 {
    let ens = sde_evolve(p, cfg, a0, t_final).unwrap();
    let m = moments(&ens);
    let oracle = propagate_dense(&build_evolution_matrix(p).unwrap(), a0, p.drive, &ens.times).unwrap();
    let mut worst = 0.0f64;
    for k in 1..ens.times.len() {
        for (i, z) in oracle.states[k].values.iter().enumerate() {
            worst = worst.max((m.mean[k][i] - z).norm() / m.mean_se[k][i]);
        }
    }
    worst
}

pub fn stochastic_moments() -> Outcome {
    // zero noise reduces to the deterministic trajectory bit for bit
    let p10 = SystemParams {
        n_modes: 10,
        omega0: 1.0,
        gamma0: 0.05,
        omega: 1.0,
        gamma: 0.1,
        coupling: 0.06,
        theta: FRAC_PI_2,
        drive: 0.5,
        drive_freq: 1.0,
    };
    let a10 = initial_amplitudes(InitialState::RandomPhases { amplitude: 1.0 }, 11, 6, 0);
    let cold = NoiseConfig {
        temperature: 0.0,
        n_paths: 4,
        dt: 0.05,
        record_every: 10,
        seed: 6,
        ..Default::default()
    };
    let ens = sde_evolve(&p10, &cold, &a10, 50.0).unwrap();
    let det = evolve_linear(&p10, &a10, &ens.times).unwrap();
    let exact = ens
        .paths
        .iter()
        .all(|path| path.iter().zip(&det.states).all(|(a, b)| a.values == b.values));

    // scalar modes: no coupling
    let scalar = SystemParams {
        n_modes: 1,
        omega0: 1.0,
        gamma0: 0.2,
        omega: 1.0,
        gamma: 0.1,
        coupling: 0.0,
        theta: 0.0,
        drive: 0.0,
        drive_freq: 0.0,
    };
    let warm = NoiseConfig {
        temperature: 0.01,
        n_paths: 10_000,
        dt: 0.01,
        record_every: 100,
        seed: 61,
        ..Default::default()
    };
    let a1 = AmplitudeVector::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
    let z_scalar = mean_z_score(&scalar, &warm, &a1, 20.0);
    let z_many = mean_z_score(
        &p10,
        &NoiseConfig {
            dt: 0.05,
            record_every: 40,
            seed: 62,
            ..warm
        },
        &a10,
        40.0,
    );

    // stationary second moment of each scalar mode
    let t_final = 150.0;
    let stat_cfg = NoiseConfig {
        dt: 0.05,
        record_every: 3000,
        seed: 63,
        ..warm
    };
    let ens = sde_evolve(&scalar, &stat_cfg, &AmplitudeVector::zeros(2), t_final).unwrap();
    let m = moments(&ens);
    let last = ens.times.len() - 1;
    let mut z_second = 0.0f64;
    for (i, (gamma, occ_freq)) in [(scalar.gamma0, scalar.omega0), (scalar.gamma, scalar.omega)]
        .into_iter()
        .enumerate()
    {
        let xi = (2.0 * gamma * warm.temperature / occ_freq).sqrt();
        let oracle = scalar_stationary_second_moment(xi, gamma);
        z_second = z_second.max((m.second[last][i] - oracle).abs() / m.second_se[last][i]);
    }
    let ok = exact && z_scalar <= 3.0 && z_many <= 3.0 && z_second <= 3.0;
    outcome(
        ok,
        format!(
            "zero-noise bit-exact {exact}; mean within {z_scalar:.2} SE (scalar), {z_many:.2} SE (N = 10); \
             stationary E|a|^2 within {z_second:.2} SE"
        ),
    )
}

// ---------------------------------------------------------------- 7

pub fn noise_phenomenology() -> Outcome {
    let base = SystemParams {
        n_modes: 10,
        omega0: 1.0,
        gamma0: 0.05,
        omega: 1.0,
        gamma: 0.1,
        coupling: 0.06,
        theta: FRAC_PI_2,
        drive: 0.0,
        drive_freq: 0.0,
    };
    let cfg = NoiseConfig {
        temperature: 3e-4,
        n_paths: 2000,
        dt: 0.05,
        record_every: 20,
        seed: 7,
        ..Default::default()
    };
    let t_final = 400.0;

    let uniform = AmplitudeVector::new(vec![C64::new(1.0, 0.0); 11]);
    let st = phase_stats(&sde_evolve(&base, &cfg, &uniform, t_final).unwrap(), 0).unwrap();
    let (fit, tau_noise) = match st.tau_noise {
        Some(tn) => {
            let (x, y): (Vec<f64>, Vec<f64>) = (0..st.times.len())
                .filter(|&k| st.valid[k] && st.times[k] >= tn / 2.0 && st.times[k] < tn)
                .map(|k| (st.times[k], st.var_dphi[k]))
                .unzip();
            (linear_fit(&x, &y).ok(), tn)
        }
        None => (None, f64::NAN),
    };
    let growth_ok = fit.is_some_and(|f| f.r_squared >= 0.9 && f.slope > 0.0);

    let mut driven = SystemParams {
        drive: 1.0,
        drive_freq: 1.0,
        ..base
    };
    driven.theta = solve_sync_angle(&driven, SyncMode::Driven).unwrap();
    let condition = sync_condition_driven(&driven, 1e-9).unwrap().verdict == Verdict::Synchronizes;
    let st = phase_stats(
        &sde_evolve(&driven, &cfg, &AmplitudeVector::zeros(11), t_final).unwrap(),
        0,
    )
    .unwrap();
    let late: Vec<usize> = (0..st.times.len()).filter(|&k| st.times[k] >= t_final / 2.0).collect();
    let all_valid = late.iter().all(|&k| st.valid[k]);
    let mut var: Vec<f64> = late.iter().map(|&k| st.var_dphi[k]).collect();
    var.sort_by(f64::total_cmp);
    let median = var[var.len() / 2];
    let max = var[var.len() - 1];
    let mean_abs = late.iter().fold(0.0f64, |m, &k| m.max(st.mean_dphi[k].abs()));
    let bounded_ok = condition && all_valid && max <= 2.0 * median && mean_abs <= 0.05;

    outcome(
        growth_ok && bounded_ok,
        format!(
            "undriven tau_noise = {tau_noise}, late fit R^2 = {:.3} slope = {:.2e}; driven last-half max/median var = {:.3}, max |mean dphi| = {mean_abs:.1e}",
            fit.map_or(f64::NAN, |f| f.r_squared),
            fit.map_or(f64::NAN, |f| f.slope),
            max / median
        ),
    )
}

// ---------------------------------------------------------------- 8

pub fn disorder_phenomenology() -> Outcome {
    let mean_freq = 1.0;
    let p = SystemParams {
        n_modes: 100,
        omega0: 1.0,
        gamma0: 0.1,
        omega: mean_freq,
        gamma: 0.1,
        coupling: 0.05,
        theta: FRAC_PI_2,
        drive: 1.0,
        drive_freq: mean_freq,
    };
    let cfg = DisorderConfig {
        mean_freq,
        sigma: 0.0,
        n_trials: 50,
        seed: 8,
    };

    let grid = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0].map(|s| s * mean_freq);
    let reports: Vec<_> = grid
        .iter()
        .map(|&sigma| run_disorder(&p, &DisorderConfig { sigma, ..cfg }).unwrap())
        .collect();
    let monotone = reports.windows(2).all(|w| {
        let se = (w[0].z_se.powi(2) + w[1].z_se.powi(2)).sqrt();
        w[1].z_mean <= w[0].z_mean + 2.0 * se
    });
    let zs: Vec<String> = reports.iter().map(|r| format!("{:.3}", r.z_mean)).collect();

    let small = [1e-3, 2e-3, 5e-3, 1e-2].map(|s| s * mean_freq);
    let mut slopes = Vec::new();
    let mut r2_half_pi = f64::NAN;
    for frac in [0.3, 0.4, 0.45, 0.5] {
        let theta = frac * PI;
        let q = SystemParams {
            theta,
            drive_freq: mean_freq + p.gamma / theta.tan(),
            ..p
        };
        let sweep = sweep_sigma_with_cutoff(&q, &cfg, &small, small[3]).unwrap();
        if frac == 0.5 {
            r2_half_pi = sweep.c_fit.r_squared;
        }
        slopes.push(sweep.c_fit.slope);
    }
    let c_max = slopes[3] >= slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let wide = reports.last().unwrap();
    let peaks_ok = wide
        .peak_locations
        .is_some_and(|(a, b)| (a + FRAC_PI_2).abs() <= 0.2 && (b - FRAC_PI_2).abs() <= 0.2);

    let ok = monotone && r2_half_pi >= 0.95 && c_max && wide.bimodal && peaks_ok;
    outcome(
        ok,
        format!(
            "z(sigma) = [{}], small-sigma R^2 = {r2_half_pi:.5}, c(theta = 0.3pi..0.5pi) = {:.3?}, peaks {:?}",
            zs.join(", "),
            slopes,
            wide.peak_locations
        ),
    )
}

// ---------------------------------------------------------------- 9

pub fn elimination_spectra() -> Outcome {
    let reference = ThreeModeParams {
        omega1: 1.0,
        omega2: 1.0,
        omega_aux: 1.0,
        gamma1: 0.01,
        gamma2: 0.012,
        gamma_aux: 10.0,
        g1: C64::new(0.5, 0.0),
        g2: C64::new(0.5, 0.0),
    };
    let deltas: Vec<f64> = (0..=200).map(|k| -1.0 + 0.01 * k as f64).collect();
    let at_10 = compare_spectra(&reference, &deltas).unwrap();
    let at_100 = compare_spectra(
        &ThreeModeParams {
            gamma_aux: 100.0,
            ..reference
        },
        &deltas,
    )
    .unwrap();
    let shrink = at_10.max_deviation / at_100.max_deviation;
    let worst = at_10
        .rows
        .iter()
        .max_by(|a, b| {
            a.deviation_re
                .max(a.deviation_im)
                .total_cmp(&b.deviation_re.max(b.deviation_im))
        })
        .unwrap();
    let ok = at_10.max_deviation < 1e-2 && shrink >= 10.0;
    outcome(
        ok,
        format!(
            "Gamma = 10: max deviation {:.3e} (worst at delta = {:.2}); Gamma = 100: {:.3e}; shrink {shrink:.0}x",
            at_10.max_deviation, worst.delta, at_100.max_deviation
        ),
    )
}

// ---------------------------------------------------------------- 10

const NOISE_CONFIG: &str = r#"
command = "noise"
seed = 10

[params]
n_modes = 6
omega0 = 1.0
gamma0 = 0.05
omega = 1.0
gamma = 0.1
coupling = 0.06
theta = 1.5707963267948966

[noise]
temperature = 1e-3
n_paths = 300
dt = 0.05
t_final = 60.0
record_every = 10
"#;

const SWEEP_CONFIG: &str = r#"
command = "sweep"
seed = 10

[params]
n_modes = 20
omega0 = 1.0
gamma0 = 0.1
omega = 1.0
gamma = 0.1
coupling = 0.05
theta = 1.5707963267948966
drive = 1.0
drive_freq = 1.0

[disorder]
mean_freq = 1.0
n_trials = 8

[sweep]
axis = "sigma"
values = [0.001, 0.002, 0.005, 1.0]
small_sigma_max = 0.005
"#;

/// The binary's run path: parse, then run inside a dedicated thread pool.
fn run_cli(text: &str, out: &Path, threads: usize) -> Vec<Vec<u8>> {
    let cfg = parse_config(text, None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let written = pool
        .install(|| nhsync_cli::run(&cfg, out, pool.current_num_threads()))
        .unwrap();
    [written.csv, written.summary]
        .iter()
        .map(|f| fs::read(f).unwrap())
        .collect()
}

pub fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("nhsync-acceptance-{}", std::process::id()));
    let mut identical = true;
    let mut compared = Vec::new();
    for (name, text) in [("noise", NOISE_CONFIG), ("sweep", SWEEP_CONFIG)] {
        let a = run_cli(text, &dir.join(format!("{name}-a")), 1);
        let b = run_cli(text, &dir.join(format!("{name}-b")), 0);
        identical &= a == b;
        compared.push(name);
    }
    let _ = fs::remove_dir_all(&dir);

    let p = SystemParams {
        n_modes: 8,
        omega0: 1.0,
        gamma0: 0.05,
        omega: 1.0,
        gamma: 0.1,
        coupling: 0.06,
        theta: FRAC_PI_2,
        drive: 0.3,
        drive_freq: 1.0,
    };
    let cfg = NoiseConfig {
        temperature: 1e-3,
        n_paths: 500,
        dt: 0.05,
        record_every: 20,
        seed: 10,
        ..Default::default()
    };
    let a0 = AmplitudeVector::new(vec![C64::new(1.0, 0.0); 9]);
    let par = moments(&sde_evolve_with(&p, &cfg, &a0, 40.0, Execution::Parallel).unwrap());
    let ser = moments(&sde_evolve_with(&p, &cfg, &a0, 40.0, Execution::Serial).unwrap());
    let mut diff = 0.0f64;
    for k in 0..par.mean.len() {
        for i in 0..par.mean[k].len() {
            diff = diff.max((par.mean[k][i] - ser.mean[k][i]).norm());
            diff = diff.max((par.second[k][i] - ser.second[k][i]).abs());
        }
    }
    outcome(
        identical && diff <= 1e-12,
        format!(
            "CLI reruns byte-identical for {compared:?}: {identical}; parallel vs serial moments differ by {diff:.1e}"
        ),
    )
}
