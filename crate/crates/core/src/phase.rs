//! Amplitude/phase form of the dynamics.
//!
//! Two flows share one fixed-step RK4 driver: the bare star system and the
//! all-to-all collective equations. The phase equations carry `1/r` terms;
//! whenever an amplitude falls below `1e-12 · max r` the step is taken in
//! Cartesian form and the polar coordinates are re-derived, keeping the
//! phase on the branch closest to its previous value.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kuramoto::EffectiveParams;
use crate::linear::{AmplitudeVector, Trajectory};
use crate::params::{wrap_angle, SystemParams};

/// Default locking threshold `0.05π`.
pub const DEFAULT_SYNC_THRESHOLD: f64 = 0.05 * PI;

/// Relative amplitude floor below which the polar form is abandoned.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Step cap as a fraction of `1/‖H‖`.
pub const STEP_FACTOR: f64 = 0.01;

const MAX_RATIO: f64 = 1e3;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub r: Vec<f64>,
    /// Unwrapped phases.
    pub phi: Vec<f64>,
}

impl PhaseState {
    pub fn new(r: Vec<f64>, phi: Vec<f64>) -> Self {
        Self { r, phi }
    }

    pub fn from_amplitudes(a: &[C64]) -> Self {
        Self {
            r: a.iter().map(|z| z.norm()).collect(),
            phi: a.iter().map(|z| z.arg()).collect(),
        }
    }

    pub fn to_amplitudes(&self) -> Vec<C64> {
        self.r
            .iter()
            .zip(&self.phi)
            .map(|(&r, &p)| C64::from_polar(r, p))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn is_finite(&self) -> bool {
        self.r.iter().chain(&self.phi).all(|x| x.is_finite())
    }

    fn max_r(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }

    /// Polar form of `a`, with each phase moved to the branch nearest to
    /// the corresponding phase of `self`.
    fn follow(&self, a: &[C64]) -> Self {
        let phi = a
            .iter()
            .zip(&self.phi)
            .map(|(z, &prev)| prev + wrap_angle(z.arg() - prev))
            .collect();
        Self {
            r: a.iter().map(|z| z.norm()).collect(),
            phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    StarBare,
    AllToAllCollective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub topology: Topology,
}

impl PhaseTrajectory {
    /// Polar form of a linear trajectory with phases unwrapped between
    /// consecutive samples.
    pub fn from_linear(tr: &Trajectory) -> Self {
        let mut states: Vec<PhaseState> = Vec::with_capacity(tr.states.len());
        for s in &tr.states {
            let next = match states.last() {
                Some(prev) => prev.follow(&s.values),
                None => PhaseState::from_amplitudes(&s.values),
            };
            states.push(next);
        }
        Self {
            times: tr.times.clone(),
            states,
            topology: Topology::StarBare,
        }
    }

    /// Phase coherence of modes `first..` at every sample.
    pub fn z_series(&self, first: usize) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| phase_coherence(&s.phi[first..]).unwrap_or(0.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncVerdict {
    Synchronized,
    Desynchronized,
    DecayedFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub tau_sync: Option<f64>,
    pub tau_dec: f64,
    /// Coherence of the main modes `1…N`.
    pub z_series: Vec<f64>,
    pub verdict: SyncVerdict,
    pub threshold: f64,
}

/// Summarize a bare trajectory. Undriven systems count as synchronized
/// only if locking happens before `τ_dec = 1/γ`.
pub fn sync_report(traj: &PhaseTrajectory, p: &SystemParams, threshold: f64) -> SyncReport {
    let tau_sync = estimate_sync_time(traj, threshold);
    let tau_dec = if p.gamma > 0.0 { 1.0 / p.gamma } else { f64::INFINITY };
    let verdict = match tau_sync {
        None => SyncVerdict::Desynchronized,
        Some(t) if p.is_driven() || t < tau_dec => SyncVerdict::Synchronized,
        Some(_) => SyncVerdict::DecayedFirst,
    };
    SyncReport {
        tau_sync,
        tau_dec,
        z_series: traj.z_series(1),
        verdict,
        threshold,
    }
}

/// A phase/amplitude flow with an equivalent Cartesian form.
pub trait PolarFlow {
    fn dim(&self) -> usize;
    fn topology(&self) -> Topology;
    fn polar_rhs(&self, s: &PhaseState, out: &mut PhaseState);
    fn cartesian_rhs(&self, a: &[C64], out: &mut [C64]);
    /// Largest step allowed by the `0.01/‖H‖` rule.
    fn max_step(&self) -> f64;
}

/// Bare star topology: auxiliary mode 0 coupled to modes `1…N`, drive on
/// mode 0 only.
#[derive(Debug, Clone, Copy)]
pub struct BareFlow {
    pub params: SystemParams,
}

impl PolarFlow for BareFlow {
    fn dim(&self) -> usize {
        self.params.n_modes + 1
    }

    fn topology(&self) -> Topology {
        Topology::StarBare
    }

    fn polar_rhs(&self, s: &PhaseState, out: &mut PhaseState) {
        rhs_bare_into(s, &self.params, out);
    }

    fn cartesian_rhs(&self, a: &[C64], out: &mut [C64]) {
        let p = &self.params;
        let c = p.star_coupling();
        let h00 = p.aux_diagonal();
        let dm = p.main_diagonal();
        let sum: C64 = a[1..].iter().sum();
        out[0] = -I * (h00 * a[0] + c * sum) + p.drive;
        for k in 1..a.len() {
            out[k] = -I * (c * a[0] + dm * a[k]);
        }
    }

    fn max_step(&self) -> f64 {
        let p = &self.params;
        let sqrt_n = (p.n_modes as f64).sqrt();
        let row = (p.aux_diagonal().norm() + p.coupling * sqrt_n).max(p.main_diagonal().norm() + p.coupling / sqrt_n);
        step_cap(row)
    }
}

/// Collective modes `π₁…π_N` with all-to-all coupling `(g̃/N) e^{iΘ̃}`.
#[derive(Debug, Clone, Copy)]
pub struct CollectiveFlow {
    pub eff: EffectiveParams,
    pub n_modes: usize,
}

impl PolarFlow for CollectiveFlow {
    fn dim(&self) -> usize {
        self.n_modes
    }

    fn topology(&self) -> Topology {
        Topology::AllToAllCollective
    }

    fn polar_rhs(&self, s: &PhaseState, out: &mut PhaseState) {
        rhs_collective_into(s, &self.eff, out);
    }

    fn cartesian_rhs(&self, a: &[C64], out: &mut [C64]) {
        let e = &self.eff;
        let n = a.len() as f64;
        let diag = C64::new(e.delta_eff, -e.gamma_eff);
        let k = e.coupling() / n;
        let sum: C64 = a.iter().sum();
        let drive = e.drive();
        for (o, z) in out.iter_mut().zip(a) {
            *o = -I * (diag * z + k * (sum - z)) - drive;
        }
    }

    fn max_step(&self) -> f64 {
        let e = &self.eff;
        let n = self.n_modes as f64;
        let row = C64::new(e.delta_eff, -e.gamma_eff).norm() + e.g_eff * (n - 1.0) / n;
        step_cap(row)
    }
}

fn step_cap(row_norm: f64) -> f64 {
    if row_norm > 0.0 {
        STEP_FACTOR / row_norm
    } else {
        f64::INFINITY
    }
}

/// Right-hand side of the bare polar equations.
pub fn rhs_bare(s: &PhaseState, p: &SystemParams) -> PhaseState {
    let mut out = PhaseState::new(vec![0.0; s.len()], vec![0.0; s.len()]);
    rhs_bare_into(s, p, &mut out);
    out
}

fn rhs_bare_into(s: &PhaseState, p: &SystemParams, out: &mut PhaseState) {
    let c = p.coupling / (p.n_modes as f64).sqrt();
    let th = p.theta;
    let (r0, phi0) = (s.r[0], s.phi[0]);
    let (delta0, delta, eta) = (p.delta0(), p.delta(), p.drive);
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for k in 1..s.len() {
        let (sn, cs) = (th + s.phi[k] - phi0).sin_cos();
        sin_sum += s.r[k] * sn;
        cos_sum += s.r[k] * cs;
        let (sb, cb) = (th + phi0 - s.phi[k]).sin_cos();
        out.r[k] = -p.gamma * s.r[k] + c * sb * r0;
        out.phi[k] = -delta - c * (r0 / s.r[k]) * cb;
    }
    let (sp, cp) = phi0.sin_cos();
    out.r[0] = -p.gamma0 * r0 + c * sin_sum + eta * cp;
    out.phi[0] = -delta0 - c * cos_sum / r0 - eta * sp / r0;
}

/// Right-hand side of the collective polar equations for `π₁…π_N`.
pub fn rhs_collective(s: &PhaseState, eff: &EffectiveParams) -> PhaseState {
    let mut out = PhaseState::new(vec![0.0; s.len()], vec![0.0; s.len()]);
    rhs_collective_into(s, eff, &mut out);
    out
}

fn rhs_collective_into(s: &PhaseState, e: &EffectiveParams, out: &mut PhaseState) {
    let n = s.len() as f64;
    let k = e.g_eff / n;
    let mean: C64 = s.r.iter().zip(&s.phi).map(|(&r, &p)| C64::from_polar(r, p)).sum();
    for i in 0..s.len() {
        let (ri, pi) = (s.r[i], s.phi[i]);
        // Σ_{j≠i} ρ_j e^{i(Θ̃ + ψ_j - ψ_i)}
        let others = (mean - C64::from_polar(ri, pi)) * C64::from_polar(1.0, e.theta_eff - pi);
        let (sd, cd) = (e.theta_drive - pi).sin_cos();
        out.r[i] = -e.gamma_eff * ri + k * others.im - e.eta_eff * cd;
        out.phi[i] = -e.delta_eff - k * others.re / ri - e.eta_eff * sd / ri;
    }
}

fn axpy_state(base: &PhaseState, h: f64, k: &PhaseState, out: &mut PhaseState) {
    for i in 0..base.len() {
        out.r[i] = base.r[i] + h * k.r[i];
        out.phi[i] = base.phi[i] + h * k.phi[i];
    }
}

fn rk4_polar<F: PolarFlow + ?Sized>(flow: &F, s: &PhaseState, h: f64) -> PhaseState {
    let n = s.len();
    let zero = || PhaseState::new(vec![0.0; n], vec![0.0; n]);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero(), zero(), zero(), zero(), zero());
    flow.polar_rhs(s, &mut k1);
    axpy_state(s, 0.5 * h, &k1, &mut tmp);
    flow.polar_rhs(&tmp, &mut k2);
    axpy_state(s, 0.5 * h, &k2, &mut tmp);
    flow.polar_rhs(&tmp, &mut k3);
    axpy_state(s, h, &k3, &mut tmp);
    flow.polar_rhs(&tmp, &mut k4);
    for i in 0..n {
        tmp.r[i] = s.r[i] + h / 6.0 * (k1.r[i] + 2.0 * k2.r[i] + 2.0 * k3.r[i] + k4.r[i]);
        tmp.phi[i] = s.phi[i] + h / 6.0 * (k1.phi[i] + 2.0 * k2.phi[i] + 2.0 * k3.phi[i] + k4.phi[i]);
    }
    tmp
}

fn rk4_cartesian<F: PolarFlow + ?Sized>(flow: &F, a: &[C64], h: f64) -> Vec<C64> {
    let n = a.len();
    let zero = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut tmp = vec![zero; n];
    flow.cartesian_rhs(a, &mut k1);
    for i in 0..n {
        tmp[i] = a[i] + 0.5 * h * k1[i];
    }
    flow.cartesian_rhs(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = a[i] + 0.5 * h * k2[i];
    }
    flow.cartesian_rhs(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = a[i] + h * k3[i];
    }
    flow.cartesian_rhs(&tmp, &mut k4);
    (0..n)
        .map(|i| a[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn below_floor(s: &PhaseState) -> bool {
    let floor = AMPLITUDE_FLOOR * s.max_r();
    s.r.iter().any(|&r| !(r > floor))
}

fn step<F: PolarFlow + ?Sized>(flow: &F, s: &PhaseState, h: f64) -> PhaseState {
    if !below_floor(s) {
        let next = rk4_polar(flow, s, h);
        if next.is_finite() && !below_floor(&next) {
            return next;
        }
    }
    s.follow(&rk4_cartesian(flow, &s.to_amplitudes(), h))
}

#[derive(Clone, Copy)]
enum Substeps {
    Fixed(usize),
    Capped(f64),
}

/// Largest amplitude ratio, clamped. The polar phase rates carry `r_k/r_j`
/// factors, so the step cap shrinks with it.
fn amplitude_ratio(s: &PhaseState) -> f64 {
    let lo = s.r.iter().copied().fold(f64::INFINITY, f64::min);
    (s.max_r() / lo).clamp(1.0, MAX_RATIO)
}

fn run<F: PolarFlow + ?Sized>(
    flow: &F,
    state0: &PhaseState,
    dt: f64,
    n_steps: usize,
    substeps: Substeps,
) -> Result<PhaseTrajectory> {
    if state0.len() != flow.dim() || state0.phi.len() != flow.dim() {
        return Err(Error::DimensionMismatch {
            expected: flow.dim(),
            got: state0.len(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(crate::error::invalid("dt", "must be positive and finite"));
    }
    if state0.r.iter().any(|&r| r < 0.0) {
        return Err(crate::error::invalid("r", "amplitudes must be nonnegative"));
    }
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut s = state0.clone();
    times.push(0.0);
    states.push(s.clone());
    for k in 1..=n_steps {
        let m = match substeps {
            Substeps::Fixed(m) => m,
            Substeps::Capped(cap) => {
                let cap = cap / amplitude_ratio(&s);
                if dt > cap {
                    (dt / cap).ceil() as usize
                } else {
                    1
                }
            }
        };
        let h = dt / m as f64;
        for _ in 0..m {
            s = step(flow, &s, h);
        }
        if !s.is_finite() {
            return Err(Error::NumericFailure {
                step: k,
                what: "non-finite polar state".into(),
            });
        }
        times.push(k as f64 * dt);
        states.push(s.clone());
    }
    Ok(PhaseTrajectory {
        times,
        states,
        topology: flow.topology(),
    })
}

/// Fixed-step RK4 sampled every `dt`. Each sample interval is split into
/// equal substeps no longer than [`PolarFlow::max_step`] divided by the
/// current max/min amplitude ratio (clamped at `10³`).
pub fn integrate<F: PolarFlow + ?Sized>(
    flow: &F,
    state0: &PhaseState,
    dt: f64,
    n_steps: usize,
) -> Result<PhaseTrajectory> {
    run(flow, state0, dt, n_steps, Substeps::Capped(flow.max_step()))
}

/// RK4 with step exactly `dt`, ignoring the step cap.
pub fn integrate_uncapped<F: PolarFlow + ?Sized>(
    flow: &F,
    state0: &PhaseState,
    dt: f64,
    n_steps: usize,
) -> Result<PhaseTrajectory> {
    run(flow, state0, dt, n_steps, Substeps::Fixed(1))
}

/// `z = |Σ e^{iφ}|/N`.
pub fn phase_coherence(phases: &[f64]) -> Result<f64> {
    if phases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s: C64 = phases.iter().map(|&p| C64::from_polar(1.0, p)).sum();
    Ok((s.norm() / phases.len() as f64).clamp(0.0, 1.0))
}

/// Mean over `j ≥ 1` of the first time after which `|wrap(φ_j - φ₀)|`
/// stays within `threshold`. `None` if some mode is still unlocked at the
/// final sample.
pub fn estimate_sync_time(traj: &PhaseTrajectory, threshold: f64) -> Option<f64> {
    let last = traj.states.last()?;
    let n = last.len();
    if n < 2 {
        return None;
    }
    let mut total = 0.0;
    for j in 1..n {
        let mut lock = 0.0;
        for (k, s) in traj.states.iter().enumerate().rev() {
            if wrap_angle(s.phi[j] - s.phi[0]).abs() > threshold {
                if k + 1 == traj.states.len() {
                    return None;
                }
                lock = traj.times[k + 1];
                break;
            }
        }
        total += lock;
    }
    Some(total / (n - 1) as f64)
}

/// Polar state of an amplitude vector, for use as an integration start.
pub fn polar_state(a: &AmplitudeVector) -> PhaseState {
    PhaseState::from_amplitudes(&a.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::evolve_linear;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn p0() -> SystemParams {
        SystemParams {
            n_modes: 3,
            omega0: 1.0,
            gamma0: 0.05,
            omega: 1.2,
            gamma: 0.1,
            coupling: 0.3,
            theta: 0.8,
            drive: 0.0,
            drive_freq: 0.0,
        }
    }

    #[test]
    fn decoupled_rhs() {
        let p = SystemParams { coupling: 0.0, ..p0() };
        let s = PhaseState::new(vec![1.0, 2.0, 0.5, 3.0], vec![0.1, -1.0, 2.0, 0.3]);
        let d = rhs_bare(&s, &p);
        assert_abs_diff_eq!(d.r[0], -0.05);
        assert_abs_diff_eq!(d.phi[0], -1.0);
        for k in 1..4 {
            assert_abs_diff_eq!(d.r[k], -0.1 * s.r[k]);
            assert_abs_diff_eq!(d.phi[k], -1.2);
        }
    }

    #[test]
    fn equal_phases_anti_hermitian() {
        let p = SystemParams {
            theta: FRAC_PI_2,
            gamma0: 0.0,
            gamma: 0.0,
            omega0: 0.0,
            omega: 0.0,
            ..p0()
        };
        let s = PhaseState::new(vec![1.0; 4], vec![0.4; 4]);
        let d = rhs_bare(&s, &p);
        let c = 0.3 / 3f64.sqrt();
        assert_abs_diff_eq!(d.r[0], 3.0 * c, epsilon = 1e-15);
        for k in 0..4 {
            assert_abs_diff_eq!(d.phi[k], 0.0, epsilon = 1e-15);
        }
        for k in 1..4 {
            assert_abs_diff_eq!(d.r[k], c, epsilon = 1e-15);
        }
    }

    #[test]
    fn bare_rhs_matches_linear_flow() {
        let p = SystemParams {
            drive: 0.4,
            drive_freq: 0.9,
            ..p0()
        };
        let a = AmplitudeVector::new(vec![
            C64::new(0.7, 0.2),
            C64::new(-0.3, 1.1),
            C64::new(0.5, -0.5),
            C64::new(-1.0, -0.2),
        ]);
        let h = 1e-4;
        let tr = evolve_linear(&p, &a, &[0.0, h, 2.0 * h]).unwrap();
        let pt = PhaseTrajectory::from_linear(&tr);
        let d = rhs_bare(&pt.states[1], &p);
        for k in 0..4 {
            let dr = (pt.states[2].r[k] - pt.states[0].r[k]) / (2.0 * h);
            let dp = (pt.states[2].phi[k] - pt.states[0].phi[k]) / (2.0 * h);
            assert!((dr - d.r[k]).abs() < 1e-6, "r{k}");
            assert!((dp - d.phi[k]).abs() < 1e-6, "phi{k}");
        }
    }

    #[test]
    fn collective_pure_kuramoto() {
        let e = EffectiveParams {
            g_eff: 0.8,
            theta_eff: FRAC_PI_2,
            delta_eff: 0.3,
            gamma_eff: 0.0,
            delta0_eff: 0.0,
            gamma0_eff: 0.0,
            eta_eff: 0.0,
            theta_drive: 0.0,
        };
        let phis = vec![0.1, 1.3, -2.0, 0.7, 2.9];
        let s = PhaseState::new(vec![1.0; 5], phis.clone());
        let d = rhs_collective(&s, &e);
        for i in 0..5 {
            let want = -0.3 + 0.8 / 5.0 * phis.iter().map(|pj| (pj - phis[i]).sin()).sum::<f64>();
            assert_abs_diff_eq!(d.phi[i], want, epsilon = 1e-14);
        }
        let s = PhaseState::new(vec![1.0; 5], vec![0.4; 5]);
        let d = rhs_collective(&s, &EffectiveParams { theta_eff: 1.0, ..e });
        for i in 1..5 {
            assert_abs_diff_eq!(d.phi[i], d.phi[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn appendix_drive_form_is_shifted_main_form() {
        // Shifted-variable form: drive +η̃ cos(ψ - Θ') on ρ̇ and
        // -(η̃/ρ) sin(ψ - Θ') on ψ̇. It reproduces the flow with Θ' = Θ_D + π.
        let e = EffectiveParams {
            g_eff: 0.4,
            theta_eff: 1.1,
            delta_eff: 0.2,
            gamma_eff: 0.1,
            delta0_eff: 0.0,
            gamma0_eff: 0.0,
            eta_eff: 0.6,
            theta_drive: -0.7,
        };
        let s = PhaseState::new(vec![1.0, 0.4, 2.0], vec![0.3, -1.2, 2.5]);
        let d = rhs_collective(&s, &e);
        let n = 3.0;
        for i in 0..3 {
            let (mut sr, mut sp) = (0.0, 0.0);
            for j in 0..3 {
                if j != i {
                    let x = e.theta_eff + s.phi[j] - s.phi[i];
                    sr += s.r[j] * x.sin();
                    sp += s.r[j] / s.r[i] * x.cos();
                }
            }
            let td = e.theta_drive + PI;
            let dr = -e.gamma_eff * s.r[i] + e.g_eff / n * sr + e.eta_eff * (s.phi[i] - td).cos();
            let dp = -e.delta_eff - e.g_eff / n * sp - e.eta_eff / s.r[i] * (s.phi[i] - td).sin();
            assert_abs_diff_eq!(d.r[i], dr, epsilon = 1e-13);
            assert_abs_diff_eq!(d.phi[i], dp, epsilon = 1e-13);
        }
    }

    #[test]
    fn harmonic_phase() {
        let p = SystemParams {
            coupling: 0.0,
            gamma0: 0.0,
            gamma: 0.0,
            n_modes: 1,
            ..p0()
        };
        let s0 = PhaseState::new(vec![1.0, 2.0], vec![0.5, -0.5]);
        let tr = integrate(&BareFlow { params: p }, &s0, 0.1, 100).unwrap();
        let last = tr.states.last().unwrap();
        assert_abs_diff_eq!(last.phi[0], 0.5 - 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(last.phi[1], -0.5 - 12.0, epsilon = 1e-10);
        assert_abs_diff_eq!(last.r[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rk4_convergence_order() {
        let p = p0();
        let flow = BareFlow { params: p };
        let s0 = PhaseState::new(vec![1.0, 0.8, 1.2, 0.9], vec![0.0, 1.0, -1.0, 2.0]);
        let t = 4.0;
        let end = |n: usize| {
            integrate_uncapped(&flow, &s0, t / n as f64, n)
                .unwrap()
                .states
                .pop()
                .unwrap()
        };
        let (a, b, c) = (end(20), end(40), end(80));
        let diff = |x: &PhaseState, y: &PhaseState| {
            x.r.iter()
                .zip(&y.r)
                .chain(x.phi.iter().zip(&y.phi))
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn cartesian_fallback_through_zero() {
        // mode 1 starts at zero amplitude and is populated by the coupling
        let p = p0();
        let s0 = PhaseState::new(vec![1.0, 0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0, -1.0]);
        let tr = integrate(&BareFlow { params: p }, &s0, 0.05, 40).unwrap();
        let a0 = AmplitudeVector::new(s0.to_amplitudes());
        let lin = evolve_linear(&p, &a0, &tr.times).unwrap();
        for (ps, ls) in tr.states.iter().zip(&lin.states) {
            let got = ps.to_amplitudes();
            for (g, w) in got.iter().zip(&ls.values) {
                assert!((g - w).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn numeric_failure_reports_step() {
        let p = SystemParams {
            omega0: f64::MAX,
            ..p0()
        };
        let s0 = PhaseState::new(vec![1.0; 4], vec![0.0; 4]);
        let r = integrate_uncapped(&BareFlow { params: p }, &s0, 1e300, 3);
        assert!(matches!(r, Err(Error::NumericFailure { step: 1, .. })));
    }

    #[test]
    fn coherence_examples() {
        assert_abs_diff_eq!(phase_coherence(&[0.3; 7]).unwrap(), 1.0, epsilon = 1e-15);
        let n = 12;
        let ring: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        assert!(phase_coherence(&ring).unwrap() < 1e-12);
        let bimodal = [FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2];
        assert!(phase_coherence(&bimodal).unwrap() < 1e-15);
        assert_eq!(phase_coherence(&[]), Err(Error::EmptyInput));
    }

    #[test]
    fn sync_time_trivial_and_never() {
        let locked = PhaseTrajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![PhaseState::new(vec![1.0; 3], vec![0.2; 3]); 3],
            topology: Topology::StarBare,
        };
        assert_eq!(estimate_sync_time(&locked, DEFAULT_SYNC_THRESHOLD), Some(0.0));
        let mut late = locked.clone();
        late.states[0].phi[2] = 2.0;
        late.states[1].phi[1] = -1.0;
        assert_eq!(estimate_sync_time(&late, DEFAULT_SYNC_THRESHOLD), Some(1.5));
        late.states[2].phi[1] = 1.0;
        assert_eq!(estimate_sync_time(&late, DEFAULT_SYNC_THRESHOLD), None);
    }
}
