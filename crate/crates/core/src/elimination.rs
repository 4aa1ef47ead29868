//! Adiabatic elimination of a lossy mediator from a three-mode model with
//! Hermitian couplings `g₁, g₂`, giving an effective two-mode model with
//! non-Hermitian coupling.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::principal_sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeModeParams {
    pub omega1: f64,
    pub omega2: f64,
    pub omega_aux: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_aux: f64,
    pub g1: C64,
    pub g2: C64,
}

impl ThreeModeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("omega_aux", self.omega_aux),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma_aux", self.gamma_aux),
            ("g1", self.g1.norm()),
            ("g2", self.g2.norm()),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(invalid("gamma", "decay rates must be nonnegative"));
        }
        if !(self.gamma_aux > 0.0) {
            return Err(invalid("gamma_aux", "must be positive"));
        }
        Ok(())
    }

    /// `Γ` over the largest other scale; elimination needs this large.
    pub fn regime_ratio(&self) -> f64 {
        let other = [
            self.omega_aux.abs(),
            self.omega1.abs(),
            self.omega2.abs(),
            self.gamma1,
            self.gamma2,
            self.g1.norm(),
            self.g2.norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        self.gamma_aux / other
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let z = C64::new(0.0, 0.0);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(self.omega1, -self.gamma1),
                z,
                self.g1,
                z,
                C64::new(self.omega2, -self.gamma2),
                self.g2,
                self.g1.conj(),
                self.g2.conj(),
                C64::new(self.omega_aux, -self.gamma_aux),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeEffective {
    pub omega_eff_1: f64,
    pub omega_eff_2: f64,
    pub gamma_eff_1: f64,
    pub gamma_eff_2: f64,
    pub g_eff_12: C64,
    pub g_eff_21: C64,
    /// Large-`Γ` forms `-i g₁ g₂*/Γ` and `-i g₂ g₁*/Γ`.
    pub g_approx_12: C64,
    pub g_approx_21: C64,
    /// Large-`Γ` forms `γ_i + |g_i|²/Γ`.
    pub gamma_approx_1: f64,
    pub gamma_approx_2: f64,
    /// Largest deviation between the exact and approximate forms.
    pub approx_deviation: f64,
    pub regime_ratio: f64,
}

impl TwoModeEffective {
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        [
            [C64::new(self.omega_eff_1, -self.gamma_eff_1), self.g_eff_12],
            [self.g_eff_21, C64::new(self.omega_eff_2, -self.gamma_eff_2)],
        ]
    }

    /// Eigenvalues of the 2×2 effective matrix.
    pub fn eigenvalues(&self) -> [C64; 2] {
        let m = self.matrix();
        let (a, d) = (m[0][0], m[1][1]);
        let off = m[0][1] * m[1][0];
        if off == C64::new(0.0, 0.0) {
            return [a, d];
        }
        let half = 0.5 * (a - d);
        let root = principal_sqrt(half * half + off);
        let mid = 0.5 * (a + d);
        [mid + root, mid - root]
    }
}

pub fn effective_two_mode(p: &ThreeModeParams) -> Result<TwoModeEffective> {
    p.validate()?;
    let (w, g) = (p.omega_aux, p.gamma_aux);
    let den = w * w + g * g;
    let f = C64::new(w, g) / den;
    let (n1, n2) = (p.g1.norm_sqr(), p.g2.norm_sqr());
    let g12 = -p.g1 * f * p.g2.conj();
    let g21 = -p.g2 * f * p.g1.conj();
    let minus_i = C64::new(0.0, -1.0);
    let a12 = minus_i * p.g1 * p.g2.conj() / g;
    let a21 = minus_i * p.g2 * p.g1.conj() / g;
    let (ga1, ga2) = (p.gamma1 + n1 / g, p.gamma2 + n2 / g);
    let (ge1, ge2) = (p.gamma1 + n1 * g / den, p.gamma2 + n2 * g / den);
    let approx_deviation = [
        (g12 - a12).norm(),
        (g21 - a21).norm(),
        (ge1 - ga1).abs(),
        (ge2 - ga2).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(TwoModeEffective {
        omega_eff_1: p.omega1 - n1 * w / den,
        omega_eff_2: p.omega2 - n2 * w / den,
        gamma_eff_1: ge1,
        gamma_eff_2: ge2,
        g_eff_12: g12,
        g_eff_21: g21,
        g_approx_12: a12,
        g_approx_21: a21,
        gamma_approx_1: ga1,
        gamma_approx_2: ga2,
        approx_deviation,
        regime_ratio: p.regime_ratio(),
    })
}

fn eigenvalues3(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    let lower_zero = (0..3).all(|i| (0..i).all(|j| m[(i, j)] == C64::new(0.0, 0.0)));
    let upper_zero = (0..3).all(|i| (i + 1..3).all(|j| m[(i, j)] == C64::new(0.0, 0.0)));
    if lower_zero || upper_zero {
        return Ok((0..3).map(|k| m[(k, k)]).collect());
    }
    m.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Singular("eigenvalue computation failed".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub delta: f64,
    /// Slow eigenvalues of the full model, matched to `effective`.
    pub full: [C64; 2],
    pub effective: [C64; 2],
    /// Discarded mediator eigenvalue.
    pub mediator: C64,
    pub deviation_re: f64,
    pub deviation_im: f64,
    /// Both assignments have equal cost.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComparison {
    pub rows: Vec<ComparisonRow>,
    pub max_deviation_re: f64,
    pub max_deviation_im: f64,
    /// Largest `|λ_full - λ_eff|` over the grid.
    pub max_deviation: f64,
    pub flagged: usize,
}

/// Sweep `ω₁ = p.omega1 + δ` and compare the two slow eigenvalues of the
/// full model with the effective ones.
pub fn compare_spectra(p: &ThreeModeParams, delta_grid: &[f64]) -> Result<SpectrumComparison> {
    p.validate()?;
    let mut rows = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        if !delta.is_finite() {
            return Err(invalid("delta_grid", "must be finite"));
        }
        let q = ThreeModeParams {
            omega1: p.omega1 + delta,
            ..*p
        };
        let mut eff = effective_two_mode(&q)?.eigenvalues();
        eff.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut full = eigenvalues3(&q.matrix())?;
        let fast = (0..3).min_by(|&a, &b| full[a].im.total_cmp(&full[b].im)).unwrap();
        let mediator = full.remove(fast);
        let keep = (full[0] - eff[0]).norm() + (full[1] - eff[1]).norm();
        let swap = (full[0] - eff[1]).norm() + (full[1] - eff[0]).norm();
        let scale = eff.iter().chain(&full).map(|z| z.norm()).fold(0.0, f64::max);
        let ambiguous = keep != swap && (keep - swap).abs() <= 1e-12 * scale.max(1.0) || (keep == swap && keep > 0.0);
        let matched = if swap < keep {
            [full[1], full[0]]
        } else {
            [full[0], full[1]]
        };
        let deviation_re = (0..2).map(|k| (matched[k].re - eff[k].re).abs()).fold(0.0, f64::max);
        let deviation_im = (0..2).map(|k| (matched[k].im - eff[k].im).abs()).fold(0.0, f64::max);
        rows.push(ComparisonRow {
            delta,
            full: matched,
            effective: eff,
            mediator,
            deviation_re,
            deviation_im,
            ambiguous,
        });
    }
    let max_deviation_re = rows.iter().map(|r| r.deviation_re).fold(0.0, f64::max);
    let max_deviation_im = rows.iter().map(|r| r.deviation_im).fold(0.0, f64::max);
    let max_deviation = rows
        .iter()
        .flat_map(|r| (0..2).map(move |k| (r.full[k] - r.effective[k]).norm()))
        .fold(0.0, f64::max);
    let flagged = rows.iter().filter(|r| r.ambiguous).count();
    Ok(SpectrumComparison {
        rows,
        max_deviation_re,
        max_deviation_im,
        max_deviation,
        flagged,
    })
}
