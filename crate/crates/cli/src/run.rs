//! Experiment orchestration: one function per command, each producing a
//! CSV table and a JSON summary.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nhsync_core::disorder::{self, DisorderConfig};
use nhsync_core::elimination::{compare_spectra, effective_two_mode};
use nhsync_core::kuramoto::{
    assemble_collective_matrix, build_transform, closed_form_collective_matrix, collective_steady_states,
    effective_parameters, to_collective,
};
use nhsync_core::linear::{self, evolve_linear, AmplitudeVector};
use nhsync_core::params::{
    self, derived_params, solve_sync_angle, sync_condition_driven, sync_condition_undriven, SyncMode, SystemParams,
};
use nhsync_core::phase::{self, integrate, sync_report, BareFlow, PhaseTrajectory};
use nhsync_core::stats::{linear_fit, LinearFit};
use nhsync_core::stochastic::{self, moments, noise_weights, phase_stats, sde_evolve, NoiseConfig};
use nhsync_core::Error as CoreError;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    Command, ConfigErrors, ExperimentConfig, InitialState, Integrator, SweepAxis, ThetaSpec, TimeGrid,
};
use crate::output::{num, write_atomic, write_json, CsvSchema, RunMetadata, Table, CSV_SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("numeric failure: {0}")]
    Numeric(#[from] CoreError),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numeric(CoreError::InvalidParameter { .. }) => 1,
            RunError::Numeric(_) => 2,
            RunError::Io { .. } => 3,
        }
    }
}

/// In-memory result of a command, before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    pub resolved_theta: Option<f64>,
}

/// Paths written by [`run`].
#[derive(Debug, Clone)]
pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub meta: PathBuf,
    pub summary_value: Value,
}

/// Parameters with `θ = "auto"` resolved through the synchronization
/// condition matching the drive regime.
pub fn resolve_params(cfg: &ExperimentConfig) -> Result<Option<SystemParams>, RunError> {
    let Some(mut p) = cfg.params else { return Ok(None) };
    if cfg.theta == Some(ThetaSpec::Auto) {
        let mode = if p.is_driven() {
            SyncMode::Driven
        } else {
            SyncMode::Undriven
        };
        p.theta = solve_sync_angle(&p, mode)?;
    }
    Ok(Some(p))
}

/// Initial amplitudes; random phases come from ChaCha20 seeded with
/// `seed` on stream `stream`.
pub fn initial_amplitudes(init: InitialState, dim: usize, seed: u64, stream: u64) -> AmplitudeVector {
    match init {
        InitialState::Rest => AmplitudeVector::zeros(dim),
        InitialState::Uniform { amplitude } => AmplitudeVector::new(vec![C64::new(amplitude, 0.0); dim]),
        InitialState::RandomPhases { amplitude } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let phi: Vec<f64> = (0..dim).map(|_| PI - rng.random::<f64>() * 2.0 * PI).collect();
            AmplitudeVector::from_polar(&vec![amplitude; dim], &phi)
        }
    }
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, RunError> {
    v.ok_or_else(|| {
        RunError::Config(ConfigErrors(vec![crate::config::ConfigError {
            key: what.into(),
            message: "missing".into(),
        }]))
    })
}

fn complex_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = resolve_params(cfg)?;
    let resolved_theta = p.map(|p| p.theta);
    let (table, summary) = match cfg.command {
        Command::Check => check(&need(p, "params")?)?,
        Command::Evolve => evolve(cfg, &need(p, "params")?)?,
        Command::Kuramoto => kuramoto(cfg, &need(p, "params")?)?,
        Command::Noise => noise(cfg, &need(p, "params")?)?,
        Command::Disorder => disorder_cmd(cfg, &need(p, "params")?)?,
        Command::Eliminate => eliminate(cfg)?,
        Command::Sweep => sweep(cfg, &need(p, "params")?)?,
    };
    Ok(Outcome {
        table,
        summary,
        resolved_theta,
    })
}

fn check(p: &SystemParams) -> Result<(Table, Value), RunError> {
    let (mode, report) = if p.is_driven() {
        ("driven", sync_condition_driven(p, params::DEFAULT_TOLERANCE)?)
    } else {
        ("undriven", sync_condition_undriven(p, params::DEFAULT_TOLERANCE)?)
    };
    let d = derived_params(p)?;
    let sp = linear::spectrum(p)?;
    let mut t = Table::new(&["label", "re", "im", "multiplicity"]);
    t.push(vec![
        "plus".into(),
        num(sp.lambda_plus.re),
        num(sp.lambda_plus.im),
        "1".into(),
    ]);
    t.push(vec![
        "minus".into(),
        num(sp.lambda_minus.re),
        num(sp.lambda_minus.im),
        "1".into(),
    ]);
    if p.n_modes > 1 {
        t.push(vec![
            "dark".into(),
            num(sp.lambda_dark.re),
            num(sp.lambda_dark.im),
            (p.n_modes - 1).to_string(),
        ]);
    }
    let ratio = match linear::long_time_ratio(p) {
        Ok(r) => json!({ "re": r.re, "im": r.im, "phase": r.arg() }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let summary = json!({
        "mode": mode,
        "theta": p.theta,
        "condition": report,
        "derived": d,
        "exceptional_point": sp.ep_flag,
        "long_time_ratio": ratio,
    });
    Ok((t, summary))
}

fn polar_trajectory(p: &SystemParams, a0: &AmplitudeVector, grid: &TimeGrid) -> Result<PhaseTrajectory, RunError> {
    let n = grid.times().len() - 1;
    Ok(integrate(
        &BareFlow { params: *p },
        &phase::polar_state(a0),
        grid.dt,
        n,
    )?)
}

#[derive(Serialize)]
struct SyncSummary {
    tau_sync: Option<f64>,
    tau_dec: f64,
    verdict: phase::SyncVerdict,
    threshold: f64,
    z_initial: f64,
    z_final: f64,
    integrator: Integrator,
}

fn evolve(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(Table, Value), RunError> {
    let grid = need(cfg.time, "time")?;
    let dim = p.n_modes + 1;
    let a0 = initial_amplitudes(cfg.initial, dim, cfg.seed, 0);
    let traj = match cfg.integrator {
        Integrator::Linear => PhaseTrajectory::from_linear(&evolve_linear(p, &a0, &grid.times())?),
        Integrator::Polar => polar_trajectory(p, &a0, &grid)?,
    };
    let report = sync_report(&traj, p, phase::DEFAULT_SYNC_THRESHOLD);
    let mut t = Table::new(&["t", "mode", "re", "im", "r", "phi", "z"]);
    for (k, s) in traj.states.iter().enumerate() {
        let z = num(report.z_series[k]);
        let tk = num(traj.times[k]);
        for j in 0..s.len() {
            let a = C64::from_polar(s.r[j], s.phi[j]);
            t.push(vec![
                tk.clone(),
                j.to_string(),
                num(a.re),
                num(a.im),
                num(s.r[j]),
                num(s.phi[j]),
                z.clone(),
            ]);
        }
    }
    let summary = SyncSummary {
        tau_sync: report.tau_sync,
        tau_dec: report.tau_dec,
        verdict: report.verdict,
        threshold: report.threshold,
        z_initial: report.z_series.first().copied().unwrap_or(0.0),
        z_final: report.z_series.last().copied().unwrap_or(0.0),
        integrator: cfg.integrator,
    };
    Ok((t, serde_json::to_value(summary).expect("plain data")))
}

fn kuramoto(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(Table, Value), RunError> {
    let grid = need(cfg.time, "time")?;
    let tr = build_transform(p, cfg.branch)?;
    let eff = effective_parameters(p, cfg.branch)?;
    let assembled = assemble_collective_matrix(p, &tr)?;
    let closed = closed_form_collective_matrix(p, tr.branch)?;
    let mapping_deviation = (&assembled - &closed).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let steady = if p.is_driven() {
        let (s0, s1) = collective_steady_states(p, &tr)?;
        json!({ "pi0": complex_pair(s0), "pi_sync": complex_pair(s1) })
    } else {
        Value::Null
    };
    let a0 = initial_amplitudes(cfg.initial, p.n_modes + 1, cfg.seed, 0);
    let traj = evolve_linear(p, &a0, &grid.times())?;
    let mut t = Table::new(&["t", "mode", "re", "im", "rho", "psi"]);
    for (k, s) in traj.states.iter().enumerate() {
        let c = to_collective(s, &tr)?;
        let tk = num(traj.times[k]);
        for (j, z) in c.values.iter().enumerate() {
            t.push(vec![
                tk.clone(),
                j.to_string(),
                num(z.re),
                num(z.im),
                num(z.norm()),
                num(z.arg()),
            ]);
        }
    }
    let summary = json!({
        "branch": tr.branch,
        "shear": complex_pair(tr.shear),
        "effective": eff,
        "mapping_max_deviation": mapping_deviation,
        "steady_states": steady,
    });
    Ok((t, summary))
}

fn noise(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(Table, Value), RunError> {
    let b = need(cfg.noise, "noise")?;
    let nc = NoiseConfig {
        temperature: b.temperature,
        auxiliary_freq_for_occupation: b.auxiliary_freq_for_occupation,
        seed: cfg.seed,
        n_paths: b.n_paths,
        dt: b.dt,
        record_every: b.record_every,
    };
    let xi = noise_weights(p, &nc)?;
    let a0 = initial_amplitudes(cfg.initial, p.n_modes + 1, cfg.seed, u64::MAX);
    let ens = sde_evolve(p, &nc, &a0, b.t_final)?;
    let stats = phase_stats(&ens, b.ref_mode)?;
    let mom = moments(&ens);
    let mut t = Table::new(&["t", "mean_dphi", "var_dphi", "excluded", "valid", "mean_abs2_ref"]);
    for k in 0..stats.times.len() {
        t.push(vec![
            num(stats.times[k]),
            num(stats.mean_dphi[k]),
            num(stats.var_dphi[k]),
            stats.excluded[k].to_string(),
            stats.valid[k].to_string(),
            num(mom.second[k][b.ref_mode]),
        ]);
    }
    let summary = json!({
        "noise_weights": xi,
        "n_paths": ens.n_paths(),
        "tau_noise": stats.tau_noise,
        "rng_algorithm": ens.rng_algorithm,
        "final_var_dphi": stats.var_dphi.last(),
        "final_mean_dphi": stats.mean_dphi.last(),
    });
    Ok((t, summary))
}

fn disorder_summary(r: &disorder::DisorderReport) -> Value {
    json!({
        "sigma_phi": r.sigma_phi,
        "mean_dphi": r.mean_dphi,
        "z_mean": r.z_mean,
        "z_se": r.z_se,
        "bimodal": r.bimodal,
        "peak_locations": r.peak_locations,
        "locked": r.locked,
        "n_trials": r.n_trials,
    })
}

fn disorder_cmd(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(Table, Value), RunError> {
    let b = need(cfg.disorder, "disorder")?;
    let dc = DisorderConfig {
        mean_freq: b.mean_freq,
        sigma: b.sigma,
        n_trials: b.n_trials,
        seed: cfg.seed,
    };
    let r = disorder::run_disorder(p, &dc)?;
    let mut t = Table::new(&["bin_left", "bin_right", "count", "density"]);
    for k in 0..r.histogram.counts.len() {
        t.push(vec![
            num(r.histogram.edges[k]),
            num(r.histogram.edges[k + 1]),
            r.histogram.counts[k].to_string(),
            num(r.histogram.density[k]),
        ]);
    }
    Ok((t, disorder_summary(&r)))
}

fn eliminate(cfg: &ExperimentConfig) -> Result<(Table, Value), RunError> {
    let b = need(cfg.eliminate.clone(), "eliminate")?;
    let eff = effective_two_mode(&b.params)?;
    let cmp = compare_spectra(&b.params, &b.grid())?;
    let mut t = Table::new(&["delta", "index", "full_re", "full_im", "eff_re", "eff_im", "ambiguous"]);
    for r in &cmp.rows {
        for k in 0..2 {
            t.push(vec![
                num(r.delta),
                k.to_string(),
                num(r.full[k].re),
                num(r.full[k].im),
                num(r.effective[k].re),
                num(r.effective[k].im),
                r.ambiguous.to_string(),
            ]);
        }
    }
    let summary = json!({
        "effective": eff,
        "max_deviation": cmp.max_deviation,
        "max_deviation_re": cmp.max_deviation_re,
        "max_deviation_im": cmp.max_deviation_im,
        "flagged_ties": cmp.flagged,
    });
    Ok((t, summary))
}

/// One point of a synchronization-time sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SyncPoint {
    pub value: f64,
    /// Mean over trials; `None` if any trial failed to lock.
    pub tau_sync: Option<f64>,
    pub locked_trials: usize,
}

/// `θ` with the requested `sin θ`, on the branch with `cos θ ≥ 0`.
pub fn theta_for_sin(s: f64) -> f64 {
    s.clamp(-1.0, 1.0).asin()
}

/// Mean locking time along `axis` for random initial phases. Trial `k`
/// uses stream `k` at every point.
pub fn sync_time_sweep(
    p: &SystemParams,
    axis: SweepAxis,
    values: &[f64],
    grid: &TimeGrid,
    n_trials: usize,
    threshold: f64,
    seed: u64,
) -> Result<Vec<SyncPoint>, CoreError> {
    let times = grid.times();
    let dim = p.n_modes + 1;
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|i| (0..n_trials).map(move |k| (i, k)))
        .collect();
    let taus: Result<Vec<Option<f64>>, CoreError> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let mut q = *p;
            match axis {
                SweepAxis::Coupling => q.coupling = values[i],
                SweepAxis::SinTheta => q.theta = theta_for_sin(values[i]),
                SweepAxis::Sigma => return Err(CoreError::Insufficient("sigma is not a sync-time axis".into())),
            }
            let a0 = initial_amplitudes(InitialState::RandomPhases { amplitude: 1.0 }, dim, seed, k as u64);
            let traj = PhaseTrajectory::from_linear(&evolve_linear(&q, &a0, &times)?);
            Ok(phase::estimate_sync_time(&traj, threshold))
        })
        .collect();
    let taus = taus?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let chunk = &taus[i * n_trials..(i + 1) * n_trials];
            let locked: Vec<f64> = chunk.iter().flatten().copied().collect();
            let tau_sync = (locked.len() == n_trials).then(|| locked.iter().sum::<f64>() / n_trials as f64);
            SyncPoint {
                value,
                tau_sync,
                locked_trials: locked.len(),
            }
        })
        .collect())
}

/// Fit of `1/τ_sync` against the swept value over the locked points.
pub fn inverse_time_fit(points: &[SyncPoint]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|pt| pt.tau_sync.filter(|t| *t > 0.0).map(|t| (pt.value, 1.0 / t)))
        .unzip();
    linear_fit(&x, &y).ok()
}

fn sweep(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(Table, Value), RunError> {
    let b = need(cfg.sweep.clone(), "sweep")?;
    if b.axis == SweepAxis::Sigma {
        let d = need(cfg.disorder, "disorder")?;
        let dc = DisorderConfig {
            mean_freq: d.mean_freq,
            sigma: 0.0,
            n_trials: d.n_trials,
            seed: cfg.seed,
        };
        let cutoff = b
            .small_sigma_max
            .unwrap_or(disorder::SMALL_SIGMA_FRACTION * d.mean_freq.abs());
        let sw = disorder::sweep_sigma_with_cutoff(p, &dc, &b.values, cutoff)?;
        let mut t = Table::new(&["sigma", "sigma_phi", "z_mean", "z_se", "mean_dphi", "bimodal"]);
        for pt in &sw.points {
            let r = &pt.report;
            t.push(vec![
                num(pt.sigma),
                num(r.sigma_phi),
                num(r.z_mean),
                num(r.z_se),
                num(r.mean_dphi),
                r.bimodal.to_string(),
            ]);
        }
        let summary = json!({
            "axis": b.axis,
            "c_fit": sw.c_fit,
            "small_sigma_max": sw.small_sigma_max,
            "c_reference": disorder::small_sigma_slope(p.gamma, p.theta),
            "points": sw.points.iter().map(|pt| disorder_summary(&pt.report)).collect::<Vec<_>>(),
        });
        return Ok((t, summary));
    }
    let grid = need(cfg.time, "time")?;
    let pts = sync_time_sweep(p, b.axis, &b.values, &grid, b.n_trials, b.threshold, cfg.seed)?;
    let mut t = Table::new(&["value", "tau_sync", "inv_tau_sync", "locked_trials"]);
    for pt in &pts {
        let tau = pt.tau_sync.unwrap_or(f64::NAN);
        t.push(vec![
            num(pt.value),
            num(tau),
            num(1.0 / tau),
            pt.locked_trials.to_string(),
        ]);
    }
    let summary = json!({
        "axis": b.axis,
        "n_trials": b.n_trials,
        "threshold": b.threshold,
        "fit_inverse_tau": inverse_time_fit(&pts),
        "points": pts,
    });
    Ok((t, summary))
}

fn tolerances() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("condition_tolerance", params::DEFAULT_TOLERANCE),
        ("ep_relative_threshold", params::EP_RELATIVE_THRESHOLD),
        ("degeneracy_threshold", linear::DEGENERACY_THRESHOLD),
        ("sync_threshold", phase::DEFAULT_SYNC_THRESHOLD),
        ("polar_amplitude_floor", phase::AMPLITUDE_FLOOR),
        ("polar_step_factor", phase::STEP_FACTOR),
        ("noise_floor_factor", stochastic::AMPLITUDE_FLOOR_FACTOR),
        ("histogram_bins", disorder::HISTOGRAM_BINS as f64),
        ("driven_readout_decays", disorder::DRIVEN_READOUT_DECAYS),
        ("undriven_dominance", disorder::UNDRIVEN_DOMINANCE),
    ])
}

/// Run `cfg` and write `<cmd>.csv`, `<cmd>_summary.json` and
/// `<cmd>_meta.json` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, threads: usize) -> Result<Written, RunError> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let outcome = execute(cfg)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let name = cfg.command.name();
    let csv = out_dir.join(format!("{name}.csv"));
    let summary = out_dir.join(format!("{name}_summary.json"));
    let meta = out_dir.join(format!("{name}_meta.json"));
    let bytes = outcome.table.to_bytes().map_err(io_err(&csv))?;
    write_atomic(&csv, &bytes).map_err(io_err(&csv))?;
    write_json(&summary, &outcome.summary).map_err(io_err(&summary))?;
    let metadata = RunMetadata {
        command: name,
        code_version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        resolved_theta: outcome.resolved_theta,
        seed: cfg.seed,
        rng_algorithm: stochastic::RNG_ALGORITHM,
        threads,
        tolerances: tolerances(),
        csv_schema: CsvSchema {
            version: CSV_SCHEMA_VERSION,
            file: format!("{name}.csv"),
            columns: outcome.table.columns.clone(),
        },
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&meta, &metadata).map_err(io_err(&meta))?;
    Ok(Written {
        csv,
        summary,
        meta,
        summary_value: outcome.summary,
    })
}
