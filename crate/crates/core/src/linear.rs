//! Linear amplitude dynamics `dA/dt = -i H A + η u`.
//!
//! The star structure of `H` splits into the auxiliary/bright pair, which
//! evolves under a 2×2 block, and `N - 1` dark modes that only pick up the
//! phase `e^{-i(δ - iγ)t}`. [`evolve_linear`] uses this split and costs
//! `O(N)` per output time. [`propagate_dense`] is the independent route
//! through the matrix exponential of the augmented affine system.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{build_evolution_matrix, derived_params, EvolutionMatrix, SystemParams};

/// Relative threshold used when comparing decay rates.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);

/// Closed-form spectrum of `H` in the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    /// `δ - iγ`, multiplicity `N - 1`.
    pub lambda_dark: C64,
    pub ep_flag: bool,
    pub n_modes: usize,
}

impl Spectrum {
    /// Full eigenvalue multiset of length `N + 1`.
    pub fn eigenvalues(&self) -> Vec<C64> {
        let mut v = vec![self.lambda_plus, self.lambda_minus];
        v.extend(std::iter::repeat_n(self.lambda_dark, self.n_modes - 1));
        v
    }

    /// Smallest decay rate `min |Im λ|` over the full spectrum.
    pub fn min_decay(&self) -> f64 {
        self.eigenvalues().iter().map(|l| -l.im).fold(f64::INFINITY, f64::min)
    }

    pub fn trace(&self) -> C64 {
        self.lambda_plus + self.lambda_minus + self.lambda_dark * (self.n_modes as f64 - 1.0)
    }
}

pub fn spectrum(p: &SystemParams) -> Result<Spectrum> {
    let d = derived_params(p)?;
    let shift = p.main_diagonal() + d.half_detuning();
    Ok(Spectrum {
        lambda_plus: shift + d.mu,
        lambda_minus: shift - d.mu,
        lambda_dark: p.main_diagonal(),
        ep_flag: d.exceptional_point,
        n_modes: p.n_modes,
    })
}

/// Complex amplitudes `(α₀, α₁, …, α_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeVector {
    pub values: Vec<C64>,
}

impl AmplitudeVector {
    pub fn new(values: Vec<C64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); len])
    }

    pub fn from_polar(r: &[f64], phi: &[f64]) -> Self {
        Self::new(r.iter().zip(phi).map(|(&r, &p)| C64::from_polar(r, p)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Rotating,
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AmplitudeVector>,
    pub frame: Frame,
    /// Frequency `Ω` of the rotating frame.
    pub frame_freq: f64,
}

impl Trajectory {
    /// Multiply every amplitude by `e^{-iΩt}`.
    pub fn to_lab(&self) -> Trajectory {
        if self.frame == Frame::Lab {
            return self.clone();
        }
        let states = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| {
                let f = C64::from_polar(1.0, -self.frame_freq * t);
                AmplitudeVector::new(s.values.iter().map(|z| z * f).collect())
            })
            .collect();
        Trajectory {
            times: self.times.clone(),
            states,
            frame: Frame::Lab,
            frame_freq: self.frame_freq,
        }
    }

    pub fn last(&self) -> Option<&AmplitudeVector> {
        self.states.last()
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&t0) = times.first() {
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(invalid("times", "must be finite and nonnegative"));
        }
    }
    for (k, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::NonIncreasingTimes { index: k + 1 });
        }
    }
    Ok(())
}

/// `e^z - 1` without cancellation for small `|z|`.
pub(crate) fn expm1(z: C64) -> C64 {
    let (s, c) = z.im.sin_cos();
    let h = (0.5 * z.im).sin();
    C64::new(z.re.exp_m1() * c - 2.0 * h * h, z.re.exp() * s)
}

/// `(e^z - 1)/z`, equal to 1 at `z = 0`.
pub(crate) fn exprel(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        C64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        expm1(z) / z
    }
}

/// `∫₀ᵗ e^{-iλs} ds = (1 - e^{-iλt})/(iλ)`.
pub(crate) fn drive_integral(lambda: C64, t: f64) -> C64 {
    exprel(-I * lambda * t) * t
}

/// Propagator of the 2×2 auxiliary/bright block `c I + N` with
/// `N = [[h, G], [G, -h]]` and `N² = μ² I`, as `(p, q)` such that
/// `e^{-iKt} = p I + q N`.
fn pair_propagator(lambda_plus: C64, lambda_minus: C64, mu: C64, t: f64) -> (C64, C64) {
    let a = (-I * lambda_plus * t).exp();
    let b = (-I * lambda_minus * t).exp();
    // (a - b)/(2μ) factored around the larger exponential
    let q = if a.norm() >= b.norm() {
        -I * t * a * exprel(2.0 * I * mu * t)
    } else {
        -I * t * b * exprel(-2.0 * I * mu * t)
    };
    (0.5 * (a + b), q)
}

/// Time evolution from `A(0) = a0` sampled at `times` (rotating frame).
/// Exceptional points are routed to [`propagate_dense`].
pub fn evolve_linear(p: &SystemParams, a0: &AmplitudeVector, times: &[f64]) -> Result<Trajectory> {
    let d = derived_params(p)?;
    let n = p.n_modes;
    if a0.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: a0.len(),
        });
    }
    check_times(times)?;
    if d.exceptional_point {
        let h = build_evolution_matrix(p)?;
        return propagate_dense(&h, a0, p.drive, times).map(|mut tr| {
            tr.frame_freq = p.frame_freq();
            tr
        });
    }

    let sp = spectrum(p)?;
    let g = p.bright_coupling();
    let h = d.half_detuning();
    let sqrt_n = (n as f64).sqrt();
    let alpha0 = a0.values[0];
    let bright = a0.values[1..].iter().sum::<C64>() / sqrt_n;
    let dark: Vec<C64> = a0.values[1..].iter().map(|z| z - bright / sqrt_n).collect();
    let eta = p.drive;

    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let (pp, qq) = pair_propagator(sp.lambda_plus, sp.lambda_minus, d.mu, t);
        let mut x0 = pp * alpha0 + qq * (h * alpha0 + g * bright);
        let mut xb = pp * bright + qq * (g * alpha0 - h * bright);
        if eta != 0.0 {
            let fp = drive_integral(sp.lambda_plus, t);
            let fm = drive_integral(sp.lambda_minus, t);
            let s = 0.5 * (fp + fm);
            let dq = (fp - fm) / (2.0 * d.mu);
            x0 += eta * (s + dq * h);
            xb += eta * dq * g;
        }
        let phase = (-I * sp.lambda_dark * t).exp();
        let mut v = Vec::with_capacity(n + 1);
        v.push(x0);
        let bshare = xb / sqrt_n;
        v.extend(dark.iter().map(|r| bshare + phase * r));
        let state = AmplitudeVector::new(v);
        if !state.is_finite() {
            return Err(Error::NumericFailure {
                step: states.len(),
                what: "non-finite amplitude".into(),
            });
        }
        states.push(state);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        frame: Frame::Rotating,
        frame_freq: p.frame_freq(),
    })
}

/// Dense propagation through `exp` of the augmented `(dim+1)`-square affine
/// generator `[[-iH, ηu], [0, 0]]`, stepping between consecutive times.
pub fn propagate_dense(
    matrix: &EvolutionMatrix,
    a0: &AmplitudeVector,
    drive: f64,
    times: &[f64],
) -> Result<Trajectory> {
    let dim = matrix.dim;
    if a0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: a0.len(),
        });
    }
    check_times(times)?;
    let mut gen = DMatrix::<C64>::zeros(dim + 1, dim + 1);
    gen.view_mut((0, 0), (dim, dim)).copy_from(&(&matrix.entries * (-I)));
    gen[(0, dim)] = C64::new(drive, 0.0);

    let mut x = nalgebra::DVector::<C64>::zeros(dim + 1);
    for (k, z) in a0.values.iter().enumerate() {
        x[k] = *z;
    }
    x[dim] = C64::new(1.0, 0.0);

    let mut states = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut cached: Option<(f64, DMatrix<C64>)> = None;
    for (k, &t) in times.iter().enumerate() {
        let dt = t - t_prev;
        if dt > 0.0 {
            let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-14 * dt);
            if !reuse {
                cached = Some((dt, (&gen * C64::new(dt, 0.0)).exp()));
            }
            x = &cached.as_ref().unwrap().1 * &x;
        }
        let state = AmplitudeVector::new(x.iter().take(dim).copied().collect());
        if !state.is_finite() {
            return Err(Error::NumericFailure {
                step: k,
                what: "non-finite amplitude".into(),
            });
        }
        states.push(state);
        t_prev = t;
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        frame: Frame::Rotating,
        frame_freq: 0.0,
    })
}

/// Driven steady state, the solution of `-i H A + η u = 0`.
pub fn steady_state(p: &SystemParams) -> Result<AmplitudeVector> {
    p.validate()?;
    if !p.is_driven() {
        return Err(Error::DriveRegime { expected: "a driven" });
    }
    let sp = spectrum(p)?;
    if sp.eigenvalues().iter().any(|l| !(l.im < 0.0)) {
        return Err(Error::Singular("undamped mode: spectrum has Im(lambda) >= 0".into()));
    }
    let n = p.n_modes;
    let c = p.star_coupling();
    let dm = p.main_diagonal();
    let h00 = p.aux_diagonal();
    let schur = h00 - p.bright_coupling().powi(2) / dm;
    if dm.norm() == 0.0 || schur.norm() == 0.0 {
        return Err(Error::Singular("evolution matrix is singular".into()));
    }
    let eta = p.drive;
    let a0 = -I * eta / schur;
    let ak = -c * a0 / dm;
    let mut v = vec![ak; n + 1];
    v[0] = a0;

    let res0 = h00 * a0 + c * ak * n as f64 + I * eta;
    let resk = c * a0 + dm * ak;
    let residual = (res0.norm_sqr() + n as f64 * resk.norm_sqr()).sqrt();
    let h_norm = (h00.norm() + c.norm() * n as f64).max(dm.norm() + c.norm());
    let scale = eta.max(1e-6 * h_norm * AmplitudeVector::new(v.clone()).norm());
    if residual > 1e-10 * scale {
        return Err(Error::Singular(format!("steady-state residual {residual:e} too large")));
    }
    Ok(AmplitudeVector::new(v))
}

/// Long-time ratio `α_j/α₀` for any main mode `j ≥ 1`.
///
/// Undriven systems need a unique slowest bright eigenvalue that also
/// outlives the dark modes; driven systems use the steady state.
pub fn long_time_ratio(p: &SystemParams) -> Result<C64> {
    let d = derived_params(p)?;
    let sqrt_n = (p.n_modes as f64).sqrt();
    if p.is_driven() {
        let dm = p.main_diagonal();
        if dm.norm() == 0.0 {
            return Err(Error::Singular("main-mode diagonal vanishes".into()));
        }
        return Ok(-p.bright_coupling() / (sqrt_n * dm));
    }
    if p.coupling == 0.0 {
        return Err(invalid("coupling", "ratio undefined for decoupled modes"));
    }
    if d.exceptional_point {
        return Err(Error::ExceptionalPoint {
            mu_abs: d.mu.norm(),
            threshold: crate::params::ep_threshold(d.dw, d.dg, p.coupling),
        });
    }
    let sp = spectrum(p)?;
    let scale = sp.lambda_plus.norm().max(sp.lambda_minus.norm()).max(f64::MIN_POSITIVE);
    if (sp.lambda_plus.im - sp.lambda_minus.im).abs() <= DEGENERACY_THRESHOLD * scale {
        return Err(Error::NoDominantMode);
    }
    let fast = d.fastest_branch();
    let slow_im = sp.lambda_plus.im.max(sp.lambda_minus.im);
    if p.n_modes > 1 && sp.lambda_dark.im >= slow_im - DEGENERACY_THRESHOLD * scale {
        return Err(Error::DarkDominated);
    }
    Ok(d.s(fast.flip()) / sqrt_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn p0() -> SystemParams {
        SystemParams {
            n_modes: 3,
            omega0: 1.0,
            gamma0: 0.2,
            omega: 1.3,
            gamma: 0.1,
            coupling: 0.4,
            theta: 0.7,
            drive: 0.0,
            drive_freq: 0.0,
        }
    }

    #[test]
    fn decoupled_spectrum() {
        let p = SystemParams { coupling: 0.0, ..p0() };
        let sp = spectrum(&p).unwrap();
        let mut got = [sp.lambda_plus, sp.lambda_minus];
        got.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert_abs_diff_eq!((got[0] - C64::new(1.0, -0.2)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((got[1] - C64::new(1.3, -0.1)).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(sp.lambda_dark, C64::new(1.3, -0.1));
    }

    #[test]
    fn repulsion_and_attraction() {
        let base = SystemParams {
            n_modes: 4,
            omega0: 1.0,
            omega: 1.0,
            gamma0: 0.1,
            gamma: 0.1,
            coupling: 1.0,
            ..p0()
        };
        let d = C64::new(1.0, -0.1);
        let sp = spectrum(&base.with_theta(0.0)).unwrap();
        assert_abs_diff_eq!((sp.lambda_plus - (d + 1.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((sp.lambda_minus - (d - 1.0)).norm(), 0.0, epsilon = 1e-14);
        let sp = spectrum(&base.with_theta(FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!((sp.lambda_plus - (d + I)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((sp.lambda_minus - (d - I)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn decoupled_decay() {
        let p = SystemParams { coupling: 0.0, ..p0() };
        let mut a = AmplitudeVector::zeros(4);
        a.values[0] = C64::new(1.0, 0.0);
        let tr = evolve_linear(&p, &a, &[0.0, 1.0, 5.0]).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let want = (-I * C64::new(1.0, -0.2) * *t).exp();
            assert_abs_diff_eq!((s.values[0] - want).norm(), 0.0, epsilon = 1e-14);
            for z in &s.values[1..] {
                assert_eq!(z.norm(), 0.0);
            }
        }
    }

    #[test]
    fn identity_at_zero() {
        let a = AmplitudeVector::new(vec![
            C64::new(0.3, -1.0),
            C64::new(2.0, 0.5),
            C64::new(-1.0, 0.1),
            C64::new(0.0, 0.7),
        ]);
        let p = SystemParams {
            drive: 0.8,
            drive_freq: 0.9,
            ..p0()
        };
        let tr = evolve_linear(&p, &a, &[0.0]).unwrap();
        assert!(tr.states[0].distance(&a) < 1e-15);
    }

    #[test]
    fn rejects_bad_times() {
        let a = AmplitudeVector::zeros(4);
        assert_eq!(
            evolve_linear(&p0(), &a, &[0.0, 1.0, 1.0]),
            Err(Error::NonIncreasingTimes { index: 2 })
        );
        assert!(evolve_linear(&p0(), &AmplitudeVector::zeros(2), &[0.0]).is_err());
    }

    #[test]
    fn dense_trivial_cases() {
        let h = EvolutionMatrix {
            dim: 3,
            entries: DMatrix::zeros(3, 3),
        };
        let a = AmplitudeVector::new(vec![C64::new(1.0, 2.0), C64::new(0.0, 1.0), C64::new(3.0, 0.0)]);
        let tr = propagate_dense(&h, &a, 0.0, &[0.5, 1.0, 7.0]).unwrap();
        for s in &tr.states {
            assert!(s.distance(&a) < 1e-14);
        }
        let tr = propagate_dense(&h, &AmplitudeVector::zeros(3), 1.0, &[0.5, 1.0, 7.0]).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert_abs_diff_eq!((s.values[0] - C64::new(*t, 0.0)).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exprel_limits() {
        assert_eq!(exprel(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        for z in [C64::new(1e-5, 2e-5), C64::new(0.3, -0.2), C64::new(-3.0, 5.0)] {
            let want = (z.exp() - 1.0) / z;
            assert!((exprel(z) - want).norm() < 1e-10 * want.norm());
        }
        let lam = C64::new(1e-9, -1e-9);
        assert_abs_diff_eq!(
            (drive_integral(lam, 2.0) - C64::new(2.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn scalar_steady_state() {
        let p = SystemParams {
            n_modes: 1,
            omega0: 1.5,
            gamma0: 0.3,
            coupling: 0.0,
            drive: 2.0,
            drive_freq: 1.0,
            gamma: 0.1,
            ..p0()
        };
        let a = steady_state(&p).unwrap();
        let want = -I * 2.0 / C64::new(0.5, -0.3);
        assert_abs_diff_eq!((a.values[0] - want).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(a.values[1].norm(), 0.0);
    }

    #[test]
    fn steady_state_ratio_and_errors() {
        let p = SystemParams {
            drive: 1.0,
            drive_freq: 1.1,
            coupling: 0.1,
            ..p0()
        };
        let a = steady_state(&p).unwrap();
        let want = -(p.bright_coupling()) / (3f64.sqrt() * p.main_diagonal());
        for z in &a.values[1..] {
            assert!((z / a.values[0] - want).norm() < 1e-12);
        }
        assert!((long_time_ratio(&p).unwrap() - want).norm() < 1e-15);
        assert!(steady_state(&SystemParams { drive: 0.0, ..p }).is_err());
        let undamped = SystemParams { gamma: 0.0, ..p };
        assert!(matches!(steady_state(&undamped), Err(Error::Singular(_))));
    }

    #[test]
    fn driven_resonant_ratio_is_positive() {
        let p = SystemParams {
            n_modes: 4,
            omega: 1.0,
            drive_freq: 1.0,
            gamma: 0.05,
            coupling: 0.3,
            theta: FRAC_PI_2,
            drive: 1.0,
            ..p0()
        };
        let r = long_time_ratio(&p).unwrap();
        assert_abs_diff_eq!(r.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.re, 0.3 / (2.0 * 0.05), epsilon = 1e-12);
    }

    #[test]
    fn undriven_ratio_errors() {
        let flat = SystemParams {
            omega0: 1.0,
            omega: 1.0,
            gamma0: 0.1,
            gamma: 0.1,
            theta: 0.0,
            ..p0()
        };
        assert_eq!(long_time_ratio(&flat), Err(Error::NoDominantMode));
        let ep = SystemParams {
            gamma0: 0.9,
            gamma: 0.1,
            theta: 0.0,
            coupling: 0.4,
            omega0: 1.3,
            ..p0()
        };
        assert!(matches!(long_time_ratio(&ep), Err(Error::ExceptionalPoint { .. })));
        let dark = SystemParams {
            coupling: 0.01,
            gamma0: 0.5,
            gamma: 0.1,
            theta: 0.3,
            ..p0()
        };
        // both bright eigenvalues stay near δ₀-iγ₀ and δ-iγ; weak coupling
        // drags the bright main mode below the dark ones
        assert_eq!(long_time_ratio(&dark), Err(Error::DarkDominated));
    }

    #[test]
    fn lab_frame_phase() {
        let p = SystemParams {
            drive: 1.0,
            drive_freq: 2.0,
            ..p0()
        };
        let a = AmplitudeVector::new(vec![C64::new(1.0, 0.0); 4]);
        let tr = evolve_linear(&p, &a, &[0.0, 0.5, 1.0]).unwrap();
        let lab = tr.to_lab();
        for k in 0..3 {
            let f = C64::from_polar(1.0, -2.0 * tr.times[k]);
            for j in 0..4 {
                assert!((lab.states[k].values[j] - tr.states[k].values[j] * f).norm() < 1e-15);
            }
        }
    }
}
