//! Thermal noise: `dA = (-i H A + η u) dt + i dW` with independent real
//! Wiener increments of variance `ξ_i² dt` per mode.
//!
//! Each path is split into the deterministic trajectory from
//! [`evolve_linear`] and a zero-mean fluctuation `X` stepped exactly by the
//! propagator `P = e^{-iH dt}`. The increment of a step enters at its
//! midpoint, `X ← P X + i P_{1/2} ΔW`, which keeps the stationary variance
//! accurate to second order in `γ dt`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear::{evolve_linear, AmplitudeVector};
use crate::params::{build_evolution_matrix, wrap_angle, SystemParams};

/// Name of the per-path generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha), seed_from_u64(seed), stream = path index";

/// Multiple of the ensemble noise scale below which a phase is not trusted.
pub const AMPLITUDE_FLOOR_FACTOR: f64 = 5.0;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub temperature: f64,
    /// Frequency entering the auxiliary-mode occupation `T/ω`; `None`
    /// uses `ω₀`.
    pub auxiliary_freq_for_occupation: Option<f64>,
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            auxiliary_freq_for_occupation: None,
            seed: 0,
            n_paths: 1,
            dt: 0.01,
            record_every: 1,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(invalid("temperature", "must be finite and nonnegative"));
        }
        if self.n_paths < 1 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive and finite"));
        }
        if self.record_every < 1 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub times: Vec<f64>,
    /// `paths[p][k]` is the state of path `p` at `times[k]`.
    pub paths: Vec<Vec<AmplitudeVector>>,
    pub seed: u64,
    pub rng_algorithm: String,
}

impl Ensemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub times: Vec<f64>,
    pub mean_dphi: Vec<f64>,
    pub var_dphi: Vec<f64>,
    /// Paths dropped at each slice because an amplitude fell below the floor.
    pub excluded: Vec<usize>,
    pub valid: Vec<bool>,
    /// First time more than half of the paths are noise dominated, counted
    /// once the ensemble has been signal dominated.
    pub tau_noise: Option<f64>,
}

/// `ξ₀ = √(2γ₀ T/ω_occ)`, `ξ_{i>0} = √(2γ T/ω)`.
pub fn noise_weights(p: &SystemParams, cfg: &NoiseConfig) -> Result<Vec<f64>> {
    p.validate()?;
    cfg.validate()?;
    let w0 = cfg.auxiliary_freq_for_occupation.unwrap_or(p.omega0);
    if !(w0 > 0.0) {
        return Err(invalid(
            "auxiliary_freq_for_occupation",
            format!("occupation frequency must be positive, got {w0}"),
        ));
    }
    if !(p.omega > 0.0) {
        return Err(invalid(
            "omega",
            format!("occupation frequency must be positive, got {}", p.omega),
        ));
    }
    let t = cfg.temperature;
    let mut xi = vec![(2.0 * p.gamma * t / p.omega).sqrt(); p.n_modes + 1];
    xi[0] = (2.0 * p.gamma0 * t / w0).sqrt();
    Ok(xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Serial,
}

pub fn sde_evolve(p: &SystemParams, cfg: &NoiseConfig, a0: &AmplitudeVector, t_final: f64) -> Result<Ensemble> {
    sde_evolve_with(p, cfg, a0, t_final, Execution::Parallel)
}

pub fn sde_evolve_with(
    p: &SystemParams,
    cfg: &NoiseConfig,
    a0: &AmplitudeVector,
    t_final: f64,
    exec: Execution,
) -> Result<Ensemble> {
    let xi = noise_weights(p, cfg)?;
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(invalid("t_final", "must be finite and nonnegative"));
    }
    let n_steps = (t_final / cfg.dt).round() as usize;
    let rec: Vec<usize> = (0..=n_steps).step_by(cfg.record_every).collect();
    let times: Vec<f64> = rec.iter().map(|&k| k as f64 * cfg.dt).collect();
    let det = evolve_linear(p, a0, &times)?;

    let make = |_: usize| -> Vec<AmplitudeVector> { det.states.clone() };
    if xi.iter().all(|&x| x == 0.0) {
        let paths = run_paths(cfg.n_paths, exec, make);
        return Ok(Ensemble {
            times,
            paths,
            seed: cfg.seed,
            rng_algorithm: RNG_ALGORITHM.into(),
        });
    }

    let h = build_evolution_matrix(p)?.entries;
    let prop = (&h * (-I * cfg.dt)).exp();
    let half = (&h * (-I * 0.5 * cfg.dt)).exp();
    let scale: Vec<f64> = xi.iter().map(|x| x * cfg.dt.sqrt()).collect();
    let dim = p.n_modes + 1;

    let simulate = |path: usize| -> Vec<AmplitudeVector> {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let mut x = DVector::<C64>::zeros(dim);
        let mut dw = DVector::<C64>::zeros(dim);
        let mut out = Vec::with_capacity(rec.len());
        let mut next = 0;
        for k in 0..=n_steps {
            if k > 0 {
                for i in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    dw[i] = C64::new(0.0, scale[i] * z);
                }
                x = &prop * &x + &half * &dw;
            }
            if next < rec.len() && rec[next] == k {
                let d = &det.states[next].values;
                out.push(AmplitudeVector::new(
                    d.iter().zip(x.iter()).map(|(a, b)| a + b).collect(),
                ));
                next += 1;
            }
        }
        out
    };
    let paths = run_paths(cfg.n_paths, exec, simulate);
    if let Some(bad) = paths.iter().flatten().position(|s| !s.is_finite()) {
        return Err(Error::NumericFailure {
            step: bad % rec.len().max(1),
            what: "non-finite path".into(),
        });
    }
    Ok(Ensemble {
        times,
        paths,
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.into(),
    })
}

fn run_paths<F>(n: usize, exec: Execution, f: F) -> Vec<Vec<AmplitudeVector>>
where
    F: Fn(usize) -> Vec<AmplitudeVector> + Sync,
{
    match exec {
        Execution::Parallel => (0..n).into_par_iter().map(&f).collect(),
        Execution::Serial => (0..n).map(&f).collect(),
    }
}

/// Ensemble mean and standard errors per time slice and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<Vec<C64>>,
    /// Standard error of the complex mean, `√(E|α - ᾱ|²/(n-1))/√n`.
    pub mean_se: Vec<Vec<f64>>,
    /// RMS deviation from the mean, `√(E|α - ᾱ|²)`.
    pub spread: Vec<Vec<f64>>,
    /// Ensemble average of `|α|²`.
    pub second: Vec<Vec<f64>>,
    pub second_se: Vec<Vec<f64>>,
}

/// Moments reduced over paths in index order, so the result does not depend
/// on how the paths were produced.
pub fn moments(ens: &Ensemble) -> Moments {
    let n = ens.n_paths() as f64;
    let nt = ens.times.len();
    let dim = ens.paths.first().map(|p| p[0].len()).unwrap_or(0);
    let mut m = Moments {
        mean: vec![vec![C64::new(0.0, 0.0); dim]; nt],
        mean_se: vec![vec![0.0; dim]; nt],
        spread: vec![vec![0.0; dim]; nt],
        second: vec![vec![0.0; dim]; nt],
        second_se: vec![vec![0.0; dim]; nt],
    };
    for k in 0..nt {
        for i in 0..dim {
            let mut s = C64::new(0.0, 0.0);
            let mut s2 = 0.0;
            for path in &ens.paths {
                let z = path[k].values[i];
                s += z;
                s2 += z.norm_sqr();
            }
            let mu = s / n;
            let mu2 = s2 / n;
            let (mut v, mut v2) = (0.0, 0.0);
            for path in &ens.paths {
                let z = path[k].values[i];
                v += (z - mu).norm_sqr();
                v2 += (z.norm_sqr() - mu2).powi(2);
            }
            let denom = (n - 1.0).max(1.0);
            m.mean[k][i] = mu;
            m.second[k][i] = mu2;
            m.mean_se[k][i] = (v / denom / n).sqrt();
            m.spread[k][i] = (v / n).sqrt();
            m.second_se[k][i] = (v2 / denom / n).sqrt();
        }
    }
    m
}

/// Wrapped phase differences `φ_j - φ_ref` pooled over paths and modes.
///
/// At each slice the noise scale of mode `i` is the ensemble RMS deviation
/// `σ_i` from the mean; a path is excluded when any `|α_i| < 5 σ_i`.
pub fn phase_stats(ens: &Ensemble, ref_mode: usize) -> Result<PhaseStats> {
    let dim = ens
        .paths
        .first()
        .and_then(|p| p.first())
        .map(|s| s.len())
        .ok_or(Error::EmptyInput)?;
    if ref_mode >= dim {
        return Err(invalid("ref_mode", format!("must be below {dim}")));
    }
    if dim < 2 {
        return Err(Error::Insufficient("phase differences need at least two modes".into()));
    }
    let mom = moments(ens);
    let n_paths = ens.n_paths();
    let nt = ens.times.len();
    let mut out = PhaseStats {
        times: ens.times.clone(),
        mean_dphi: vec![f64::NAN; nt],
        var_dphi: vec![f64::NAN; nt],
        excluded: vec![0; nt],
        valid: vec![false; nt],
        tau_noise: None,
    };
    let mut signal_seen = false;
    for k in 0..nt {
        let sigma = &mom.spread[k];
        let mut pool = Vec::with_capacity(n_paths * (dim - 1));
        let mut excluded = 0;
        for path in &ens.paths {
            let s = &path[k].values;
            if s.iter()
                .zip(sigma)
                .any(|(z, sg)| z.norm() < AMPLITUDE_FLOOR_FACTOR * sg || z.norm() == 0.0)
            {
                excluded += 1;
                continue;
            }
            let r = s[ref_mode].arg();
            for (j, z) in s.iter().enumerate() {
                if j != ref_mode {
                    pool.push(wrap_angle(z.arg() - r));
                }
            }
        }
        out.excluded[k] = excluded;
        if 2 * excluded <= n_paths {
            signal_seen = true;
        } else if signal_seen && out.tau_noise.is_none() {
            out.tau_noise = Some(ens.times[k]);
        }
        if !pool.is_empty() {
            let m = pool.iter().sum::<f64>() / pool.len() as f64;
            let v = pool.iter().map(|x| (x - m).powi(2)).sum::<f64>() / pool.len() as f64;
            out.mean_dphi[k] = m;
            out.var_dphi[k] = v;
            out.valid[k] = true;
        }
    }
    Ok(out)
}

/// Stationary `E|α|²` of the scalar process `dα = -(γ + iδ) α dt + i dW`,
/// `dW ~ N(0, ξ² dt)`: Itô on `|α|²` gives `d E|α|² = (-2γ E|α|² + ξ²) dt`.
pub fn scalar_stationary_second_moment(xi: f64, gamma: f64) -> f64 {
    xi * xi / (2.0 * gamma)
}

/// Dense `(P, P_{1/2})` pair used by the stepper, exposed for tests.
pub fn step_propagators(p: &SystemParams, dt: f64) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let h = build_evolution_matrix(p)?.entries;
    Ok(((&h * (-I * dt)).exp(), (&h * (-I * 0.5 * dt)).exp()))
}
