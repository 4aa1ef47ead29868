//! Experiment configuration.
//!
//! Configs are TOML documents. Top-level keys are `command`, `seed` and
//! `output`; everything else lives in sections (`[params]`, `[time]`,
//! `[initial]`, `[evolve]`, `[kuramoto]`, `[noise]`, `[disorder]`,
//! `[eliminate]`, `[sweep]`). The full grammar is documented in the README.
//! Parsing collects every problem it finds instead of stopping at the first.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use nhsync_core::elimination::ThreeModeParams;
use nhsync_core::kuramoto::BranchChoice;
use nhsync_core::params::SystemParams;
use num_complex::Complex64 as C64;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Evolve,
    Kuramoto,
    Noise,
    Disorder,
    Eliminate,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Evolve => "evolve",
            Command::Kuramoto => "kuramoto",
            Command::Noise => "noise",
            Command::Disorder => "disorder",
            Command::Eliminate => "eliminate",
            Command::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "check" => Command::Check,
            "evolve" => Command::Evolve,
            "kuramoto" => Command::Kuramoto,
            "noise" => Command::Noise,
            "disorder" => Command::Disorder,
            "eliminate" => Command::Eliminate,
            "sweep" => Command::Sweep,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// All problems found in one config.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} config error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ThetaSpec {
    Value(f64),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_final / self.dt).round() as usize;
        (0..=n).map(|k| k as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    /// Unit amplitudes with phases uniform on `(-π, π]`.
    RandomPhases {
        amplitude: f64,
    },
    Uniform {
        amplitude: f64,
    },
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Linear,
    Polar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBlock {
    pub temperature: f64,
    pub auxiliary_freq_for_occupation: Option<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub ref_mode: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisorderBlock {
    pub mean_freq: f64,
    pub sigma: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EliminateBlock {
    pub params: ThreeModeParams,
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_delta: usize,
}

impl EliminateBlock {
    pub fn grid(&self) -> Vec<f64> {
        if self.n_delta == 1 {
            return vec![self.delta_min];
        }
        let step = (self.delta_max - self.delta_min) / (self.n_delta - 1) as f64;
        (0..self.n_delta).map(|k| self.delta_min + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Coupling,
    SinTheta,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBlock {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Random initial states averaged per point (sync-time axes).
    pub n_trials: usize,
    pub threshold: f64,
    /// Upper end of the linear σ regime (sigma axis).
    pub small_sigma_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub params: Option<SystemParams>,
    pub theta: Option<ThetaSpec>,
    pub time: Option<TimeGrid>,
    pub initial: InitialState,
    pub integrator: Integrator,
    pub branch: BranchChoice,
    pub noise: Option<NoiseBlock>,
    pub disorder: Option<DisorderBlock>,
    pub eliminate: Option<EliminateBlock>,
    pub sweep: Option<SweepBlock>,
}

struct Walker {
    errors: Vec<ConfigError>,
}

impl Walker {
    fn err(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            key: key.into(),
            message: message.into(),
        });
    }

    fn unknown(&mut self, path: &str, t: &Table, known: &[&str]) {
        for k in t.keys() {
            if !known.contains(&k.as_str()) {
                let key = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                self.err(key, "unknown key");
            }
        }
    }

    fn section<'a>(&mut self, root: &'a Table, name: &str) -> Option<&'a Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(name, "expected a section");
                None
            }
        }
    }

    fn float(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let full = format!("{path}.{key}");
        match t.get(key) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(v) => {
                self.err(full, format!("expected a number, found {}", v.type_str()));
                None
            }
        }
        .and_then(|x| {
            if x.is_finite() {
                Some(x)
            } else {
                self.err(format!("{path}.{key}"), "must be finite");
                None
            }
        })
    }

    fn req_float(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.err(format!("{path}.{key}"), "missing");
            return None;
        }
        self.float(t, path, key)
    }

    fn nonneg(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let v = match default {
            Some(d) if !t.contains_key(key) => Some(d),
            _ => self.req_float(t, path, key),
        }?;
        if v < 0.0 {
            self.err(format!("{path}.{key}"), format!("must be nonnegative, got {v}"));
            return None;
        }
        Some(v)
    }

    fn positive(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let v = match default {
            Some(d) if !t.contains_key(key) => Some(d),
            _ => self.req_float(t, path, key),
        }?;
        if !(v > 0.0) {
            self.err(format!("{path}.{key}"), format!("must be positive, got {v}"));
            return None;
        }
        Some(v)
    }

    fn count(&mut self, t: &Table, path: &str, key: &str, default: Option<usize>, min: usize) -> Option<usize> {
        let full = format!("{path}.{key}");
        let v = match (t.get(key), default) {
            (None, Some(d)) => d,
            (None, None) => {
                self.err(full, "missing");
                return None;
            }
            (Some(Value::Integer(i)), _) if *i >= 0 => *i as usize,
            (Some(Value::Integer(i)), _) => {
                self.err(full, format!("must be nonnegative, got {i}"));
                return None;
            }
            (Some(v), _) => {
                self.err(full, format!("expected an integer, found {}", v.type_str()));
                return None;
            }
        };
        if v < min {
            self.err(format!("{path}.{key}"), format!("must be at least {min}, got {v}"));
            return None;
        }
        Some(v)
    }

    fn string<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.err(
                    format!("{path}.{key}"),
                    format!("expected a string, found {}", v.type_str()),
                );
                None
            }
        }
    }

    fn complex(&mut self, t: &Table, path: &str, key: &str) -> Option<C64> {
        let full = format!("{path}.{key}");
        match t.get(key) {
            None => {
                self.err(full, "missing");
                None
            }
            Some(Value::Float(x)) => Some(C64::new(*x, 0.0)),
            Some(Value::Integer(i)) => Some(C64::new(*i as f64, 0.0)),
            Some(Value::Array(a)) if a.len() == 2 => {
                let part = |v: &Value| match v {
                    Value::Float(x) => Some(*x),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                };
                match (part(&a[0]), part(&a[1])) {
                    (Some(re), Some(im)) => Some(C64::new(re, im)),
                    _ => {
                        self.err(full, "expected [re, im] numbers");
                        None
                    }
                }
            }
            Some(_) => {
                self.err(full, "expected a number or [re, im]");
                None
            }
        }
    }

    fn floats(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let full = format!("{path}.{key}");
        match t.get(key) {
            None => {
                self.err(full, "missing");
                None
            }
            Some(Value::Array(a)) => {
                let mut out = Vec::with_capacity(a.len());
                for v in a {
                    match v {
                        Value::Float(x) if x.is_finite() => out.push(*x),
                        Value::Integer(i) => out.push(*i as f64),
                        _ => {
                            self.err(full, "expected an array of finite numbers");
                            return None;
                        }
                    }
                }
                if out.is_empty() {
                    self.err(full, "must not be empty");
                    return None;
                }
                Some(out)
            }
            Some(v) => {
                self.err(full, format!("expected an array, found {}", v.type_str()));
                None
            }
        }
    }
}

fn parse_params(w: &mut Walker, t: &Table) -> (Option<SystemParams>, Option<ThetaSpec>) {
    const P: &str = "params";
    w.unknown(
        P,
        t,
        &[
            "n_modes",
            "omega0",
            "gamma0",
            "omega",
            "gamma",
            "coupling",
            "theta",
            "drive",
            "drive_freq",
        ],
    );
    let n_modes = w.count(t, P, "n_modes", None, 1);
    let omega0 = w.req_float(t, P, "omega0");
    let omega = w.req_float(t, P, "omega");
    let gamma0 = w.nonneg(t, P, "gamma0", None);
    let gamma = w.nonneg(t, P, "gamma", None);
    let coupling = w.nonneg(t, P, "coupling", None);
    let drive = w.nonneg(t, P, "drive", Some(0.0));
    let drive_freq = w.float(t, P, "drive_freq").or(Some(0.0));
    let theta = match t.get("theta") {
        None => {
            w.err("params.theta", "missing");
            None
        }
        Some(Value::String(s)) if s == "auto" => Some(ThetaSpec::Auto),
        Some(Value::String(s)) => {
            w.err("params.theta", format!("expected a number or \"auto\", found \"{s}\""));
            None
        }
        Some(_) => w.float(t, P, "theta").and_then(|x| {
            if x > -std::f64::consts::PI && x <= std::f64::consts::PI {
                Some(ThetaSpec::Value(x))
            } else {
                w.err("params.theta", format!("must lie in (-pi, pi], got {x}"));
                None
            }
        }),
    };
    let params = (|| {
        Some(SystemParams {
            n_modes: n_modes?,
            omega0: omega0?,
            gamma0: gamma0?,
            omega: omega?,
            gamma: gamma?,
            coupling: coupling?,
            theta: match theta? {
                ThetaSpec::Value(x) => x,
                ThetaSpec::Auto => 0.0,
            },
            drive: drive?,
            drive_freq: drive_freq?,
        })
    })();
    (params, theta)
}

fn parse_time(w: &mut Walker, t: &Table) -> Option<TimeGrid> {
    w.unknown("time", t, &["t_final", "dt"]);
    let t_final = w.positive(t, "time", "t_final", None);
    let dt = w.positive(t, "time", "dt", None);
    Some(TimeGrid {
        t_final: t_final?,
        dt: dt?,
    })
}

fn parse_initial(w: &mut Walker, t: &Table, default: InitialState) -> Option<InitialState> {
    w.unknown("initial", t, &["kind", "amplitude"]);
    let amplitude = w.positive(t, "initial", "amplitude", Some(1.0));
    let kind = w.string(t, "initial", "kind");
    let state = match kind {
        None => default,
        Some("random_phases") => InitialState::RandomPhases { amplitude: amplitude? },
        Some("uniform") => InitialState::Uniform { amplitude: amplitude? },
        Some("rest") => InitialState::Rest,
        Some(other) => {
            w.err(
                "initial.kind",
                format!("expected random_phases, uniform or rest, found \"{other}\""),
            );
            return None;
        }
    };
    Some(state)
}

fn parse_noise(w: &mut Walker, t: &Table) -> Option<NoiseBlock> {
    const P: &str = "noise";
    w.unknown(
        P,
        t,
        &[
            "temperature",
            "auxiliary_freq_for_occupation",
            "n_paths",
            "dt",
            "t_final",
            "record_every",
            "ref_mode",
        ],
    );
    let temperature = w.nonneg(t, P, "temperature", None);
    let occ = if t.contains_key("auxiliary_freq_for_occupation") {
        w.positive(t, P, "auxiliary_freq_for_occupation", None).map(Some)
    } else {
        Some(None)
    };
    let n_paths = w.count(t, P, "n_paths", None, 1);
    let dt = w.positive(t, P, "dt", None);
    let t_final = w.positive(t, P, "t_final", None);
    let record_every = w.count(t, P, "record_every", Some(1), 1);
    let ref_mode = w.count(t, P, "ref_mode", Some(0), 0);
    Some(NoiseBlock {
        temperature: temperature?,
        auxiliary_freq_for_occupation: occ?,
        n_paths: n_paths?,
        dt: dt?,
        t_final: t_final?,
        record_every: record_every?,
        ref_mode: ref_mode?,
    })
}

fn parse_disorder(w: &mut Walker, t: &Table, need_sigma: bool) -> Option<DisorderBlock> {
    const P: &str = "disorder";
    w.unknown(P, t, &["mean_freq", "sigma", "n_trials"]);
    let mean_freq = w.req_float(t, P, "mean_freq");
    let sigma = if need_sigma {
        w.nonneg(t, P, "sigma", None)
    } else {
        w.nonneg(t, P, "sigma", Some(0.0))
    };
    let n_trials = w.count(t, P, "n_trials", None, 1);
    Some(DisorderBlock {
        mean_freq: mean_freq?,
        sigma: sigma?,
        n_trials: n_trials?,
    })
}

fn parse_eliminate(w: &mut Walker, t: &Table) -> Option<EliminateBlock> {
    const P: &str = "eliminate";
    w.unknown(
        P,
        t,
        &[
            "omega1",
            "omega2",
            "omega_aux",
            "gamma1",
            "gamma2",
            "gamma_aux",
            "g1",
            "g2",
            "delta_min",
            "delta_max",
            "n_delta",
        ],
    );
    let omega1 = w.req_float(t, P, "omega1");
    let omega2 = w.req_float(t, P, "omega2");
    let omega_aux = w.req_float(t, P, "omega_aux");
    let gamma1 = w.nonneg(t, P, "gamma1", None);
    let gamma2 = w.nonneg(t, P, "gamma2", None);
    let gamma_aux = w.positive(t, P, "gamma_aux", None);
    let g1 = w.complex(t, P, "g1");
    let g2 = w.complex(t, P, "g2");
    let delta_min = w.req_float(t, P, "delta_min");
    let delta_max = w.req_float(t, P, "delta_max");
    let n_delta = w.count(t, P, "n_delta", None, 1);
    if let (Some(a), Some(b)) = (delta_min, delta_max) {
        if b < a {
            w.err("eliminate.delta_max", "must not be below delta_min");
            return None;
        }
    }
    Some(EliminateBlock {
        params: ThreeModeParams {
            omega1: omega1?,
            omega2: omega2?,
            omega_aux: omega_aux?,
            gamma1: gamma1?,
            gamma2: gamma2?,
            gamma_aux: gamma_aux?,
            g1: g1?,
            g2: g2?,
        },
        delta_min: delta_min?,
        delta_max: delta_max?,
        n_delta: n_delta?,
    })
}

fn parse_sweep(w: &mut Walker, t: &Table) -> Option<SweepBlock> {
    const P: &str = "sweep";
    w.unknown(P, t, &["axis", "values", "n_trials", "threshold", "small_sigma_max"]);
    let axis = match w.string(t, P, "axis") {
        Some("coupling") => Some(SweepAxis::Coupling),
        Some("sin_theta") => Some(SweepAxis::SinTheta),
        Some("sigma") => Some(SweepAxis::Sigma),
        Some(other) => {
            w.err(
                "sweep.axis",
                format!("expected coupling, sin_theta or sigma, found \"{other}\""),
            );
            None
        }
        None => {
            if !t.contains_key("axis") {
                w.err("sweep.axis", "missing");
            }
            None
        }
    };
    let values = w.floats(t, P, "values");
    let n_trials = w.count(t, P, "n_trials", Some(10), 1);
    let threshold = w.positive(t, P, "threshold", Some(nhsync_core::phase::DEFAULT_SYNC_THRESHOLD));
    let small_sigma_max = if t.contains_key("small_sigma_max") {
        w.positive(t, P, "small_sigma_max", None).map(Some)
    } else {
        Some(None)
    };
    if let (Some(SweepAxis::SinTheta), Some(v)) = (axis, &values) {
        if v.iter().any(|s| !(-1.0..=1.0).contains(s)) {
            w.err("sweep.values", "sin_theta values must lie in [-1, 1]");
            return None;
        }
    }
    if let (Some(SweepAxis::Coupling | SweepAxis::Sigma), Some(v)) = (axis, &values) {
        if v.iter().any(|s| *s < 0.0) {
            w.err("sweep.values", "values must be nonnegative");
            return None;
        }
    }
    Some(SweepBlock {
        axis: axis?,
        values: values?,
        n_trials: n_trials?,
        threshold: threshold?,
        small_sigma_max: small_sigma_max?,
    })
}

/// Parse a config. `command` overrides (or supplies) the `command` key.
pub fn parse_config(text: &str, command: Option<Command>) -> Result<ExperimentConfig, ConfigErrors> {
    let root: Table = toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            key: "<document>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut w = Walker { errors: Vec::new() };
    w.unknown(
        "",
        &root,
        &[
            "command",
            "seed",
            "output",
            "params",
            "time",
            "initial",
            "evolve",
            "kuramoto",
            "noise",
            "disorder",
            "eliminate",
            "sweep",
        ],
    );

    let from_file = match w.string(&root, "", "command") {
        Some(s) => match Command::parse(s) {
            Some(c) => Some(c),
            None => {
                w.err("command", format!("unknown command \"{s}\""));
                None
            }
        },
        None => None,
    };
    let cmd = match (from_file, command) {
        (Some(a), Some(b)) if a != b => {
            w.err(
                "command",
                format!("config is for `{}` but `{}` was requested", a.name(), b.name()),
            );
            None
        }
        (a, b) => b.or(a),
    };
    if cmd.is_none() && from_file.is_none() && !root.contains_key("command") {
        w.err("command", "missing");
    }
    let seed = match root.get("seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            w.err("seed", "expected a nonnegative integer");
            0
        }
    };
    let output = w.string(&root, "", "output").map(PathBuf::from);

    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut require = |w: &mut Walker, name: &'static str| -> Option<&Table> {
        used.insert(name);
        let s = w.section(&root, name);
        if s.is_none() && !root.contains_key(name) {
            w.err(name, "missing section");
        }
        s
    };

    let (mut params, mut theta, mut time, mut noise, mut disorder, mut eliminate, mut sweep) =
        (None, None, None, None, None, None, None);
    let mut initial = InitialState::RandomPhases { amplitude: 1.0 };
    let mut integrator = Integrator::Linear;
    let mut branch = BranchChoice::Auto;
    let mut optional: Vec<&str> = Vec::new();

    if let Some(cmd) = cmd {
        if cmd != Command::Eliminate {
            if let Some(t) = require(&mut w, "params") {
                (params, theta) = parse_params(&mut w, t);
            }
        }
        match cmd {
            Command::Evolve => {
                optional.push("evolve");
                if let Some(t) = w.section(&root, "evolve") {
                    w.unknown("evolve", t, &["integrator"]);
                    match w.string(t, "evolve", "integrator") {
                        None | Some("linear") => {}
                        Some("polar") => integrator = Integrator::Polar,
                        Some(o) => w.err("evolve.integrator", format!("expected linear or polar, found \"{o}\"")),
                    }
                }
            }
            Command::Kuramoto => {
                optional.push("kuramoto");
                if let Some(t) = w.section(&root, "kuramoto") {
                    w.unknown("kuramoto", t, &["branch"]);
                    match w.string(t, "kuramoto", "branch") {
                        None | Some("auto") => {}
                        Some("plus") => branch = BranchChoice::Plus,
                        Some("minus") => branch = BranchChoice::Minus,
                        Some(o) => w.err(
                            "kuramoto.branch",
                            format!("expected auto, plus or minus, found \"{o}\""),
                        ),
                    }
                }
            }
            Command::Noise => {
                if let Some(t) = require(&mut w, "noise") {
                    noise = parse_noise(&mut w, t);
                }
            }
            Command::Disorder => {
                if let Some(t) = require(&mut w, "disorder") {
                    disorder = parse_disorder(&mut w, t, true);
                }
            }
            Command::Eliminate => {
                if let Some(t) = require(&mut w, "eliminate") {
                    eliminate = parse_eliminate(&mut w, t);
                }
            }
            Command::Sweep => {
                if let Some(t) = require(&mut w, "sweep") {
                    sweep = parse_sweep(&mut w, t);
                }
                if matches!(
                    sweep,
                    Some(SweepBlock {
                        axis: SweepAxis::Sigma,
                        ..
                    })
                ) {
                    if let Some(t) = require(&mut w, "disorder") {
                        disorder = parse_disorder(&mut w, t, false);
                    }
                }
            }
            Command::Check => {}
        }
        let sync_sweep = matches!(
            sweep,
            Some(SweepBlock {
                axis: SweepAxis::Coupling | SweepAxis::SinTheta,
                ..
            })
        );
        if matches!(cmd, Command::Evolve | Command::Kuramoto) || sync_sweep {
            if let Some(t) = require(&mut w, "time") {
                time = parse_time(&mut w, t);
            }
        }
        if matches!(cmd, Command::Evolve | Command::Kuramoto | Command::Noise) {
            initial = if cmd == Command::Noise {
                InitialState::Uniform { amplitude: 1.0 }
            } else {
                InitialState::RandomPhases { amplitude: 1.0 }
            };
            optional.push("initial");
            if let Some(t) = w.section(&root, "initial") {
                if let Some(s) = parse_initial(&mut w, t, initial) {
                    initial = s;
                }
            }
        }
        for name in [
            "time",
            "initial",
            "evolve",
            "kuramoto",
            "noise",
            "disorder",
            "eliminate",
            "sweep",
        ] {
            if root.contains_key(name) && !used.contains(name) && !optional.contains(&name) {
                w.err(name, format!("section not used by `{}`", cmd.name()));
            }
        }
    }

    if let Some(p) = &params {
        if let Err(e) = p.validate() {
            w.err("params", e.to_string());
        }
    }
    if !w.errors.is_empty() {
        return Err(ConfigErrors(w.errors));
    }
    Ok(ExperimentConfig {
        command: cmd.expect("command resolved"),
        seed,
        output,
        params,
        theta,
        time,
        initial,
        integrator,
        branch,
        noise,
        disorder,
        eliminate,
        sweep,
    })
}
