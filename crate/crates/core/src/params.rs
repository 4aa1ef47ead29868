//! Parameter model of an auxiliary mode `a0` coupled to `N` identical main
//! modes with strength `g e^{iθ}`, the evolution matrix of the amplitude
//! equations `dA/dt = -i H A + η u`, and the closed-form synchronization
//! conditions.
//!
//! Natural units (`ħ = k_B = 1`) are used throughout. The rotating frame
//! co-rotates with the drive frequency `Ω`; an undriven system (`η = 0`)
//! uses `Ω = 0`, so detunings equal bare frequencies.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default tolerance on the condition residuals.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Relative scale for the exceptional-point guard on `|μ|`.
pub const EP_RELATIVE_THRESHOLD: f64 = 1e-10;

/// Physical constants of the coupled-mode system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of main modes `N`.
    pub n_modes: usize,
    /// Auxiliary-mode frequency `ω₀`.
    pub omega0: f64,
    /// Auxiliary-mode decay rate `γ₀`.
    pub gamma0: f64,
    /// Main-mode frequency `ω`.
    pub omega: f64,
    /// Main-mode decay rate `γ`.
    pub gamma: f64,
    /// Coupling strength `g`.
    pub coupling: f64,
    /// Non-Hermitian angle `θ ∈ (-π, π]`.
    pub theta: f64,
    /// Drive strength `η` on the auxiliary mode.
    pub drive: f64,
    /// Drive frequency `Ω`.
    pub drive_freq: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            n_modes: 1,
            omega0: 1.0,
            gamma0: 0.0,
            omega: 1.0,
            gamma: 0.0,
            coupling: 0.0,
            theta: 0.0,
            drive: 0.0,
            drive_freq: 0.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 1 {
            return Err(invalid("n_modes", "must be at least 1"));
        }
        let finite = [
            ("omega0", self.omega0),
            ("gamma0", self.gamma0),
            ("omega", self.omega),
            ("gamma", self.gamma),
            ("coupling", self.coupling),
            ("theta", self.theta),
            ("drive", self.drive),
            ("drive_freq", self.drive_freq),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("gamma0", self.gamma0),
            ("gamma", self.gamma),
            ("coupling", self.coupling),
            ("drive", self.drive),
        ] {
            if v < 0.0 {
                return Err(invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.theta > -PI && self.theta <= PI) {
            return Err(invalid("theta", format!("must lie in (-pi, pi], got {}", self.theta)));
        }
        Ok(())
    }

    pub fn is_driven(&self) -> bool {
        self.drive > 0.0
    }

    /// Frequency of the rotating frame; zero for an undriven system.
    pub fn frame_freq(&self) -> f64 {
        if self.is_driven() {
            self.drive_freq
        } else {
            0.0
        }
    }

    /// `δ₀ = ω₀ - Ω`.
    pub fn delta0(&self) -> f64 {
        self.omega0 - self.frame_freq()
    }

    /// `δ = ω - Ω`.
    pub fn delta(&self) -> f64 {
        self.omega - self.frame_freq()
    }

    /// Star coupling entry `(g/√N) e^{iθ}`.
    pub fn star_coupling(&self) -> C64 {
        C64::from_polar(self.coupling / (self.n_modes as f64).sqrt(), self.theta)
    }

    /// Collective coupling `g e^{iθ}` between the auxiliary and bright modes.
    pub fn bright_coupling(&self) -> C64 {
        C64::from_polar(self.coupling, self.theta)
    }

    /// Complex diagonal entry `δ₀ - iγ₀` of the auxiliary mode.
    pub fn aux_diagonal(&self) -> C64 {
        C64::new(self.delta0(), -self.gamma0)
    }

    /// Complex diagonal entry `δ - iγ` of a main mode.
    pub fn main_diagonal(&self) -> C64 {
        C64::new(self.delta(), -self.gamma)
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    // rem_euclid can round up to exactly 2π
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Principal complex square root: nonnegative real part, and a positive
/// imaginary part whenever the real part vanishes.
pub fn principal_sqrt(z: C64) -> C64 {
    let r = z.sqrt();
    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// Which sign of `±μ` the shear transformation isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// Quantities derived from [`SystemParams`] that appear in the
/// diagonalization and in the Kuramoto-basis mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub delta0: f64,
    pub delta: f64,
    /// `Δω = ω₀ - ω`
    pub dw: f64,
    /// `Δγ = γ₀ - γ`
    pub dg: f64,
    pub mu: C64,
    pub s_plus: C64,
    pub s_minus: C64,
    /// `|μ|` fell below the exceptional-point threshold.
    pub exceptional_point: bool,
}

impl DerivedParams {
    /// `(Δω - iΔγ)/2`
    pub fn half_detuning(&self) -> C64 {
        C64::new(self.dw, -self.dg) * 0.5
    }

    pub fn s(&self, branch: Branch) -> C64 {
        match branch {
            Branch::Plus => self.s_plus,
            Branch::Minus => self.s_minus,
        }
    }

    /// Shifted bright eigenvalue `(Δω - iΔγ)/2 ± μ` for the given sign.
    pub fn bright_shift(&self, branch: Branch) -> C64 {
        self.half_detuning() + self.mu * branch.sign()
    }

    /// The branch whose isolated eigenvalue decays fastest. Ties (equal
    /// decay of both bright eigenvalues) resolve to [`Branch::Plus`].
    pub fn fastest_branch(&self) -> Branch {
        if self.bright_shift(Branch::Minus).im < self.bright_shift(Branch::Plus).im {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }
}

pub fn ep_threshold(dw: f64, dg: f64, g: f64) -> f64 {
    EP_RELATIVE_THRESHOLD * dw.abs().max(dg.abs()).max(g).max(1.0)
}

/// `μ = sqrt((Δω - iΔγ)²/4 + g² e^{2iθ})` on the principal branch.
pub fn mu(dw: f64, dg: f64, g: f64, theta: f64) -> C64 {
    let half = C64::new(dw, -dg) * 0.5;
    principal_sqrt(half * half + C64::from_polar(g * g, 2.0 * theta))
}

pub fn derived_params(p: &SystemParams) -> Result<DerivedParams> {
    p.validate()?;
    let dw = p.omega0 - p.omega;
    let dg = p.gamma0 - p.gamma;
    let mu = mu(dw, dg, p.coupling, p.theta);
    let ep = mu.norm() < ep_threshold(dw, dg, p.coupling);

    let half = C64::new(dw, -dg) * 0.5;
    let big_g = p.bright_coupling();
    let (den_p, den_m) = (half + mu, half - mu);
    // Both closed forms are exact; take the one that avoids dividing by a
    // cancelled denominator.
    let (s_plus, s_minus) = if den_p.norm() >= den_m.norm() {
        (big_g / den_p, -den_p / big_g)
    } else {
        (-den_m / big_g, big_g / den_m)
    };

    Ok(DerivedParams {
        delta0: p.delta0(),
        delta: p.delta(),
        dw,
        dg,
        mu,
        s_plus,
        s_minus,
        exceptional_point: ep,
    })
}

/// Dense `(N+1) × (N+1)` evolution matrix `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionMatrix {
    pub dim: usize,
    pub entries: DMatrix<C64>,
}

impl EvolutionMatrix {
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    /// Maximum absolute row sum.
    pub fn max_row_norm(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn build_evolution_matrix(p: &SystemParams) -> Result<EvolutionMatrix> {
    p.validate()?;
    let freqs = vec![p.omega; p.n_modes];
    Ok(build_with_frequencies(p, &freqs))
}

/// Evolution matrix with individual main-mode frequencies `ω_j` replacing
/// the uniform `ω` on the diagonal.
pub(crate) fn build_with_frequencies(p: &SystemParams, freqs: &[f64]) -> EvolutionMatrix {
    let dim = freqs.len() + 1;
    let c = p.star_coupling();
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    h[(0, 0)] = p.aux_diagonal();
    for (j, &w) in freqs.iter().enumerate() {
        let k = j + 1;
        h[(k, k)] = C64::new(w - p.frame_freq(), -p.gamma);
        h[(0, k)] = c;
        h[(k, 0)] = c;
    }
    EvolutionMatrix { dim, entries: h }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Synchronizes,
    AntiSynchronizes,
    Fails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Division-free residual of the tangent condition.
    pub residual_imag: f64,
    /// Strict inequality selecting zero rather than π phase difference.
    pub inequality_ok: bool,
    pub verdict: Verdict,
    pub branch_note: String,
}

fn verdict(residual: f64, inequality_ok: bool, tol: f64) -> Verdict {
    match (residual.abs() <= tol, inequality_ok) {
        (true, true) => Verdict::Synchronizes,
        (true, false) => Verdict::AntiSynchronizes,
        (false, _) => Verdict::Fails,
    }
}

/// Undriven condition: `Δω sinθ + Δγ cosθ = 0` with `Δγ sinθ < Δω cosθ`.
pub fn sync_condition_undriven(p: &SystemParams, tol: f64) -> Result<ConditionReport> {
    p.validate()?;
    if p.is_driven() {
        return Err(Error::DriveRegime {
            expected: "an undriven",
        });
    }
    let dw = p.omega0 - p.omega;
    let dg = p.gamma0 - p.gamma;
    let (s, c) = p.theta.sin_cos();
    let residual = dw * s + dg * c;
    let inequality_ok = dg * s < dw * c;
    let verdict = verdict(residual, inequality_ok, tol);

    let mut note = String::new();
    if verdict != Verdict::Fails && p.coupling > 0.0 {
        // With the residual satisfied, the surviving bright eigenvector gives
        // α_j/α₀ = 1/(√N x) with x real, and the slower root has the sign of sinθ.
        if s == 0.0 {
            note = "hermitian coupling: bright eigenvalues decay equally, locking time diverges".to_string();
        } else if (s > 0.0) != inequality_ok {
            note = format!(
                "dg = {dg} > 0: sign of the long-time ratio follows sin(theta) and disagrees with the inequality"
            );
        }
    }
    Ok(ConditionReport {
        residual_imag: residual,
        inequality_ok,
        verdict,
        branch_note: note,
    })
}

/// Driven condition: `(ω - Ω) sinθ + γ cosθ = 0` with `(ω - Ω) cosθ < γ sinθ`.
pub fn sync_condition_driven(p: &SystemParams, tol: f64) -> Result<ConditionReport> {
    p.validate()?;
    if !p.is_driven() {
        return Err(Error::DriveRegime { expected: "a driven" });
    }
    let detuning = p.omega - p.drive_freq;
    let (s, c) = p.theta.sin_cos();
    let residual = detuning * s + p.gamma * c;
    let inequality_ok = detuning * c < p.gamma * s;
    Ok(ConditionReport {
        residual_imag: residual,
        inequality_ok,
        verdict: verdict(residual, inequality_ok, tol),
        branch_note: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    Driven,
    Undriven,
}

/// Angle `θ ∈ (-π, π]` satisfying both the residual and the strict
/// inequality of the chosen condition.
pub fn solve_sync_angle(p: &SystemParams, mode: SyncMode) -> Result<f64> {
    p.validate()?;
    let (a, b) = match mode {
        SyncMode::Undriven => (p.omega0 - p.omega, p.gamma0 - p.gamma),
        SyncMode::Driven => (p.omega - p.drive_freq, p.gamma),
    };
    if a == 0.0 && b == 0.0 {
        return Err(Error::ConditionVacuous);
    }
    let tol = DEFAULT_TOLERANCE * a.abs().max(b.abs()).max(1.0);
    // a sinθ + b cosθ = 0  ⇒  θ ∈ {atan2(-b, a), atan2(-b, a) + π}
    let base = normalize_angle(f64::atan2(-b, a));
    for cand in [base, normalize_angle(base + PI)] {
        let trial = p.with_theta(cand);
        let report = match mode {
            SyncMode::Undriven => {
                let mut q = trial;
                q.drive = 0.0;
                sync_condition_undriven(&q, tol)?
            }
            SyncMode::Driven => {
                let mut q = trial;
                if q.drive <= 0.0 {
                    q.drive = 1.0;
                }
                sync_condition_driven(&q, tol)?
            }
        };
        if report.verdict == Verdict::Synchronizes {
            return Ok(cand);
        }
    }
    Err(Error::ConditionVacuous)
}

/// [`wrap_angle`] with `-0` mapped to `0`.
pub fn normalize_angle(x: f64) -> f64 {
    let y = wrap_angle(x);
    if y == 0.0 {
        0.0
    } else {
        y
    }
}
