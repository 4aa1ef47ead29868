//! Gaussian frequency disorder on the main modes and the statistics of the
//! resulting steady phase differences `Δφ_i = φ₀ - φ_i`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear::{propagate_dense, AmplitudeVector};
use crate::params::{build_with_frequencies, wrap_angle, SystemParams};
use crate::phase::{phase_coherence, DEFAULT_SYNC_THRESHOLD};
use crate::stats::{fit_through_origin, LinearFit};

pub const HISTOGRAM_BINS: usize = 64;

/// Driven readout at `DRIVEN_READOUT_DECAYS / min|Im λ|`.
pub const DRIVEN_READOUT_DECAYS: f64 = 20.0;

/// Undriven readout once the surviving mode dominates by this factor.
pub const UNDRIVEN_DOMINANCE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderConfig {
    pub mean_freq: f64,
    pub sigma: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl DisorderConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mean_freq.is_finite() {
            return Err(invalid("mean_freq", "must be finite"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid("sigma", "must be finite and nonnegative"));
        }
        if self.n_trials < 1 {
            return Err(invalid("n_trials", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin `k` covers `(edges[k], edges[k+1]]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderReport {
    pub sigma_phi: f64,
    pub mean_dphi: f64,
    pub z_mean: f64,
    /// Standard error of `z_mean` over trials (0 for a single trial).
    pub z_se: f64,
    pub histogram: Histogram,
    pub bimodal: bool,
    pub peak_locations: Option<(f64, f64)>,
    /// Every `|Δφ_i|` within the locking threshold.
    pub locked: bool,
    pub n_trials: usize,
    /// Pooled phase differences.
    pub dphi: Vec<f64>,
}

/// Draw `N` frequencies from `Normal(ω̄, σ)`, deterministic in
/// `(seed, trial)`.
pub fn sample_frequencies(cfg: &DisorderConfig, n_modes: usize, trial: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.sigma == 0.0 {
        return Ok(vec![cfg.mean_freq; n_modes]);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let dist = Normal::new(cfg.mean_freq, cfg.sigma).map_err(|e| invalid("sigma", e.to_string()))?;
    Ok((0..n_modes).map(|_| dist.sample(&mut rng)).collect())
}

fn eigenvalues(h: &DMatrix<C64>) -> Result<Vec<C64>> {
    h.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Singular("eigenvalue computation failed".into()))
}

/// Long-time amplitudes of a system whose main-mode frequencies are
/// replaced by `freqs`.
///
/// Driven: start from rest and read at `20/min|Im λ|`. Undriven: start
/// from equal amplitudes, remove the slowest decay from the generator and
/// read once the next mode is suppressed by `10⁶`.
pub fn long_time_state(p: &SystemParams, freqs: &[f64]) -> Result<AmplitudeVector> {
    p.validate()?;
    if freqs.len() != p.n_modes {
        return Err(Error::DimensionMismatch {
            expected: p.n_modes,
            got: freqs.len(),
        });
    }
    let mut h = build_with_frequencies(p, freqs);
    let ev = eigenvalues(&h.entries)?;
    let dim = h.dim;
    if p.is_driven() {
        let min_decay = ev.iter().map(|l| -l.im).fold(f64::INFINITY, f64::min);
        if !(min_decay > 0.0) {
            return Err(Error::Singular("undamped mode in the disordered system".into()));
        }
        let t = DRIVEN_READOUT_DECAYS / min_decay;
        let tr = propagate_dense(&h, &AmplitudeVector::zeros(dim), p.drive, &[t])?;
        return Ok(tr.states.into_iter().next().unwrap());
    }
    let mut im: Vec<f64> = ev.iter().map(|l| l.im).collect();
    im.sort_by(|a, b| b.total_cmp(a));
    let slow = im[0];
    let scale = ev.iter().map(|l| l.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let next = im
        .iter()
        .copied()
        .find(|&x| x < slow - 1e-9 * scale)
        .ok_or_else(|| Error::Insufficient("no decay gap between eigenmodes".into()))?;
    let gap = slow - next;
    let t = UNDRIVEN_DOMINANCE.ln() / gap;
    for k in 0..dim {
        h.entries[(k, k)] -= C64::new(0.0, slow);
    }
    let a0 = AmplitudeVector::new(vec![C64::new(1.0, 0.0); dim]);
    let tr = propagate_dense(&h, &a0, 0.0, &[t])?;
    Ok(tr.states.into_iter().next().unwrap())
}

struct Trial {
    dphi: Vec<f64>,
    z: f64,
}

fn trial(p: &SystemParams, freqs: &[f64]) -> Result<Trial> {
    let a = long_time_state(p, freqs)?;
    let phi: Vec<f64> = a.values.iter().map(|z| z.arg()).collect();
    let dphi = phi[1..].iter().map(|x| wrap_angle(phi[0] - x)).collect();
    let z = phase_coherence(&phi[1..])?;
    Ok(Trial { dphi, z })
}

/// Report for a single disordered realization.
pub fn run_disorder_trial(p: &SystemParams, freqs: &[f64]) -> Result<DisorderReport> {
    let t = trial(p, freqs)?;
    Ok(build_report(vec![t]))
}

/// Pool `cfg.n_trials` realizations (computed in parallel, reduced in
/// trial order).
pub fn run_disorder(p: &SystemParams, cfg: &DisorderConfig) -> Result<DisorderReport> {
    cfg.validate()?;
    let trials: Result<Vec<Trial>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|k| trial(p, &sample_frequencies(cfg, p.n_modes, k)?))
        .collect();
    Ok(build_report(trials?))
}

fn build_report(trials: Vec<Trial>) -> DisorderReport {
    let n_trials = trials.len();
    let zs: Vec<f64> = trials.iter().map(|t| t.z).collect();
    let dphi: Vec<f64> = trials.into_iter().flat_map(|t| t.dphi).collect();
    let m = dphi.iter().sum::<f64>() / dphi.len() as f64;
    let var = dphi.iter().map(|x| (x - m).powi(2)).sum::<f64>() / dphi.len() as f64;
    let z_mean = zs.iter().sum::<f64>() / n_trials as f64;
    let z_se = if n_trials > 1 {
        (crate::stats::sample_variance(&zs) / n_trials as f64).sqrt()
    } else {
        0.0
    };
    let histogram = histogram(&dphi);
    let peaks = detect_bimodal(&histogram);
    DisorderReport {
        sigma_phi: var.sqrt(),
        mean_dphi: m,
        z_mean,
        z_se,
        bimodal: peaks.is_some(),
        peak_locations: peaks,
        locked: dphi.iter().all(|x| x.abs() <= DEFAULT_SYNC_THRESHOLD),
        histogram,
        n_trials,
        dphi,
    }
}

/// 64-bin histogram on `(-π, π]`.
pub fn histogram(values: &[f64]) -> Histogram {
    let w = 2.0 * PI / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|k| -PI + k as f64 * w).collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let x = wrap_angle(v);
        let k = ((x + PI) / w).ceil() as usize;
        counts[k.clamp(1, HISTOGRAM_BINS) - 1] += 1;
    }
    let total = values.len().max(1) as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * w)).collect();
    Histogram { edges, counts, density }
}

/// Two-peak test on the 3-bin circular moving average: the two highest
/// local maxima at least `π/4` apart, with the minimum along the shorter
/// arc between them below 60% of the lower one. Returns the sorted peak
/// centers when bimodal.
pub fn detect_bimodal(h: &Histogram) -> Option<(f64, f64)> {
    let n = h.density.len();
    let at = |k: isize| h.density[k.rem_euclid(n as isize) as usize];
    let smooth: Vec<f64> = (0..n as isize).map(|k| (at(k - 1) + at(k) + at(k + 1)) / 3.0).collect();
    let sm = |k: isize| smooth[k.rem_euclid(n as isize) as usize];
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&k| {
            let k = k as isize;
            sm(k) > sm(k - 1) && sm(k) >= sm(k + 1)
        })
        .collect();
    maxima.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]).then(a.cmp(&b)));
    let centers = h.centers();
    let first = *maxima.first()?;
    let min_sep = (PI / 4.0 / (2.0 * PI / n as f64)).ceil() as usize;
    let circ = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(n - d)
    };
    let second = *maxima.iter().find(|&&k| circ(k, first) >= min_sep)?;
    let (lo, hi) = (first.min(second), first.max(second));
    let inner = hi - lo;
    let trough = if inner <= n - inner {
        (lo..=hi).map(|k| smooth[k]).fold(f64::INFINITY, f64::min)
    } else {
        (hi..lo + n).map(|k| smooth[k % n]).fold(f64::INFINITY, f64::min)
    };
    let lower = smooth[first].min(smooth[second]);
    if trough < 0.6 * lower {
        let (a, b) = (centers[first], centers[second]);
        Some((a.min(b), a.max(b)))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub sigma: f64,
    pub report: DisorderReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSweep {
    pub points: Vec<SigmaPoint>,
    /// Fit `σ_φ = c σ` over the small-σ subrange; its slope is `c(g, θ)`.
    pub c_fit: LinearFit,
    pub small_sigma_max: f64,
}

/// Default small-σ cutoff as a fraction of `ω̄`.
pub const SMALL_SIGMA_FRACTION: f64 = 0.05;

pub fn sweep_sigma(p: &SystemParams, cfg: &DisorderConfig, sigma_grid: &[f64]) -> Result<SigmaSweep> {
    sweep_sigma_with_cutoff(p, cfg, sigma_grid, SMALL_SIGMA_FRACTION * cfg.mean_freq.abs())
}

pub fn sweep_sigma_with_cutoff(
    p: &SystemParams,
    cfg: &DisorderConfig,
    sigma_grid: &[f64],
    small_sigma_max: f64,
) -> Result<SigmaSweep> {
    if sigma_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sigma_grid", "must be strictly increasing"));
    }
    let small: Vec<f64> = sigma_grid.iter().copied().filter(|&s| s <= small_sigma_max).collect();
    if small.len() < 3 {
        return Err(Error::Insufficient(format!(
            "{} grid points at or below sigma = {small_sigma_max}, need 3",
            small.len()
        )));
    }
    let mut points = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let report = run_disorder(p, &DisorderConfig { sigma, ..*cfg })?;
        points.push(SigmaPoint { sigma, report });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|pt| pt.sigma <= small_sigma_max)
        .map(|pt| (pt.sigma, pt.report.sigma_phi))
        .unzip();
    let c_fit = fit_through_origin(&xs, &ys)?;
    Ok(SigmaSweep {
        points,
        c_fit,
        small_sigma_max,
    })
}

/// Steady-state `c(g, θ) = sin²θ/γ` when the drive frequency satisfies the
/// driven condition `(ω̄ - Ω) sinθ + γ cosθ = 0`.
pub fn small_sigma_slope(gamma: f64, theta: f64) -> f64 {
    theta.sin().powi(2) / gamma
}
