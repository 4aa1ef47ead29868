//! Collective (Kuramoto) basis `P = U A` with `U = V S T`.
//!
//! `T = 1 ⊕ F` is the discrete Fourier transform on the main modes, whose
//! last row is the bright combination. The shear `S` decouples the
//! auxiliary/bright pair and isolates one bright eigenmode in `π₀`. The
//! mixer `V` spreads the remaining bright mode over all `N` collective
//! coordinates so that they couple all-to-all with strength `κ/N`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear::{spectrum, AmplitudeVector};
use crate::params::{build_evolution_matrix, derived_params, ep_threshold, normalize_angle, Branch, SystemParams};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchChoice {
    Auto,
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoTransform {
    pub t_matrix: DMatrix<C64>,
    pub s_matrix: DMatrix<C64>,
    pub v_matrix: DMatrix<C64>,
    pub u_matrix: DMatrix<C64>,
    pub u_inverse: DMatrix<C64>,
    pub branch: Branch,
    /// Shear `s_b` of the chosen branch.
    pub shear: C64,
}

impl KuramotoTransform {
    pub fn dim(&self) -> usize {
        self.u_matrix.nrows()
    }
}

/// Renormalized parameters of the collective equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub g_eff: f64,
    pub theta_eff: f64,
    pub delta_eff: f64,
    pub gamma_eff: f64,
    pub delta0_eff: f64,
    pub gamma0_eff: f64,
    pub eta_eff: f64,
    pub theta_drive: f64,
}

impl EffectiveParams {
    /// `g̃ e^{iΘ̃}`
    pub fn coupling(&self) -> C64 {
        C64::from_polar(self.g_eff, self.theta_eff)
    }

    /// `η̃ e^{iΘ_D}`
    pub fn drive(&self) -> C64 {
        C64::from_polar(self.eta_eff, self.theta_drive)
    }
}

/// Collective amplitudes `(π₀, π₁, …, π_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveState {
    pub values: Vec<C64>,
}

impl CollectiveState {
    pub fn rho(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn psi(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.arg()).collect()
    }
}

fn resolve_branch(p: &SystemParams, choice: BranchChoice) -> Result<(Branch, C64)> {
    let d = derived_params(p)?;
    if d.exceptional_point {
        return Err(Error::ExceptionalPoint {
            mu_abs: d.mu.norm(),
            threshold: ep_threshold(d.dw, d.dg, p.coupling),
        });
    }
    let branch = match choice {
        BranchChoice::Auto => d.fastest_branch(),
        BranchChoice::Plus => Branch::Plus,
        BranchChoice::Minus => Branch::Minus,
    };
    let s = d.s(branch);
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(invalid("coupling", "shear is unbounded for this branch"));
    }
    Ok((branch, s))
}

/// Fourier block with `F_{jk} = e^{i2πjk/N}/√N`, `j, k = 1…N`.
fn fourier(n: usize) -> DMatrix<C64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |r, c| {
        let (j, k) = ((r + 1) as u64, (c + 1) as u64);
        let m = (j * k) % n as u64;
        C64::from_polar(norm, 2.0 * PI * m as f64 / n as f64)
    })
}

pub fn build_transform(p: &SystemParams, choice: BranchChoice) -> Result<KuramotoTransform> {
    let (branch, s) = resolve_branch(p, choice)?;
    let n = p.n_modes;
    let dim = n + 1;
    let one = C64::new(1.0, 0.0);

    let mut t = DMatrix::<C64>::zeros(dim, dim);
    t[(0, 0)] = one;
    t.view_mut((1, 1), (n, n)).copy_from(&fourier(n));

    let mut sm = DMatrix::<C64>::identity(dim, dim);
    sm[(0, n)] += s;
    sm[(n, 0)] -= s;

    let mut v = DMatrix::<C64>::zeros(dim, dim);
    v[(0, 0)] = one;
    for i in 1..n {
        v[(i, i)] = -one;
        v[(i, n)] = one;
    }
    for k in 1..dim {
        v[(n, k)] = one;
    }

    let u = &v * &sm * &t;
    let u_inv = u
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("transform U is not invertible".into()))?;
    let resid = (&u * &u_inv - DMatrix::<C64>::identity(dim, dim)).camax();
    if !(resid <= 1e-8) {
        return Err(Error::Singular(format!("U U^-1 deviates from identity by {resid:e}")));
    }
    Ok(KuramotoTransform {
        t_matrix: t,
        s_matrix: sm,
        v_matrix: v,
        u_matrix: u,
        u_inverse: u_inv,
        branch,
        shear: s,
    })
}

/// `U H U⁻¹` evaluated numerically.
pub fn assemble_collective_matrix(p: &SystemParams, tr: &KuramotoTransform) -> Result<DMatrix<C64>> {
    let h = build_evolution_matrix(p)?;
    if h.dim != tr.dim() {
        return Err(Error::DimensionMismatch {
            expected: tr.dim(),
            got: h.dim,
        });
    }
    Ok(&tr.u_matrix * &h.entries * &tr.u_inverse)
}

/// Closed-form collective matrix: `M₀₀ = δ̃₀ - iγ̃₀`, lower block with
/// diagonal `δ̃ - iγ̃` and off-diagonal `(g̃/N) e^{iΘ̃}`, zero elsewhere.
pub fn closed_form_collective_matrix(p: &SystemParams, branch: Branch) -> Result<DMatrix<C64>> {
    let n = p.n_modes;
    let (m00, kappa) = collective_entries(p, branch)?;
    let dm = p.main_diagonal();
    let off = kappa / n as f64;
    let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
    m[(0, 0)] = m00;
    for i in 1..=n {
        for j in 1..=n {
            m[(i, j)] = if i == j { dm + off } else { off };
        }
    }
    Ok(m)
}

/// `(M₀₀, κ)` with `κ = g̃ e^{iΘ̃} = (Δω - iΔγ)/2 ∓ μ`.
fn collective_entries(p: &SystemParams, branch: Branch) -> Result<(C64, C64)> {
    let d = derived_params(p)?;
    let dm = p.main_diagonal();
    Ok((dm + d.bright_shift(branch), d.bright_shift(branch.flip())))
}

pub fn effective_parameters(p: &SystemParams, choice: BranchChoice) -> Result<EffectiveParams> {
    let (branch, s) = resolve_branch(p, choice)?;
    let (m00, kappa) = collective_entries(p, branch)?;
    let diag = p.main_diagonal() + kappa / p.n_modes as f64;
    let drive = s * p.drive;
    let (eta_eff, theta_drive) = if p.drive == 0.0 {
        (0.0, 0.0)
    } else {
        (drive.norm(), normalize_angle(drive.arg()))
    };
    Ok(EffectiveParams {
        g_eff: kappa.norm(),
        theta_eff: if kappa.norm() == 0.0 {
            0.0
        } else {
            normalize_angle(kappa.arg())
        },
        delta_eff: diag.re,
        gamma_eff: -diag.im,
        delta0_eff: m00.re,
        gamma0_eff: -m00.im,
        eta_eff,
        theta_drive,
    })
}

pub fn to_collective(a: &AmplitudeVector, tr: &KuramotoTransform) -> Result<CollectiveState> {
    if a.len() != tr.dim() {
        return Err(Error::DimensionMismatch {
            expected: tr.dim(),
            got: a.len(),
        });
    }
    let x = nalgebra::DVector::from_column_slice(&a.values);
    Ok(CollectiveState {
        values: (&tr.u_matrix * x).iter().copied().collect(),
    })
}

pub fn from_collective(p: &CollectiveState, tr: &KuramotoTransform) -> Result<AmplitudeVector> {
    if p.values.len() != tr.dim() {
        return Err(Error::DimensionMismatch {
            expected: tr.dim(),
            got: p.values.len(),
        });
    }
    let x = nalgebra::DVector::from_column_slice(&p.values);
    Ok(AmplitudeVector::new((&tr.u_inverse * x).iter().copied().collect()))
}

/// Steady states `(π₀, π_sync)` of the isolated mode and of every
/// collective mode, the latter shared by all `π_i`, `i ≥ 1`.
pub fn collective_steady_states(p: &SystemParams, tr: &KuramotoTransform) -> Result<(C64, C64)> {
    let zero = C64::new(0.0, 0.0);
    if tr.dim() != p.n_modes + 1 {
        return Err(Error::DimensionMismatch {
            expected: p.n_modes + 1,
            got: tr.dim(),
        });
    }
    if !p.is_driven() {
        p.validate()?;
        return Ok((zero, zero));
    }
    let sp = spectrum(p)?;
    if sp.ep_flag {
        let d = derived_params(p)?;
        return Err(Error::ExceptionalPoint {
            mu_abs: d.mu.norm(),
            threshold: ep_threshold(d.dw, d.dg, p.coupling),
        });
    }
    if sp.eigenvalues().iter().any(|l| !(l.im < 0.0)) {
        return Err(Error::Singular("undamped mode: spectrum has Im(lambda) >= 0".into()));
    }
    let (m00, kappa) = collective_entries(p, tr.branch)?;
    let eta = p.drive;
    let pi0 = -I * eta / m00;
    let pi_sync = I * eta * tr.shear / (p.main_diagonal() + kappa);
    Ok((pi0, pi_sync))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn p0(n: usize) -> SystemParams {
        SystemParams {
            n_modes: n,
            omega0: 1.2,
            gamma0: 0.3,
            omega: 0.9,
            gamma: 0.1,
            coupling: 0.25,
            theta: 1.1,
            drive: 0.0,
            drive_freq: 0.0,
        }
    }

    #[test]
    fn single_mode_is_pure_shear() {
        let tr = build_transform(&p0(1), BranchChoice::Auto).unwrap();
        assert_eq!(tr.t_matrix, DMatrix::identity(2, 2));
        assert_eq!(tr.v_matrix, DMatrix::identity(2, 2));
        assert_eq!(tr.u_matrix, tr.s_matrix);
    }

    #[test]
    fn fourier_is_unitary() {
        for n in [1, 2, 5, 16] {
            let f = fourier(n);
            let e = (&f * f.adjoint() - DMatrix::<C64>::identity(n, n)).camax();
            assert!(e < 1e-13);
            for k in 0..n {
                assert_abs_diff_eq!(
                    (f[(n - 1, k)] - C64::new(1.0 / (n as f64).sqrt(), 0.0)).norm(),
                    0.0,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn isolates_row_and_column_zero() {
        let p = p0(6);
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let m = assemble_collective_matrix(&p, &tr).unwrap();
        for j in 1..7 {
            assert!(m[(0, j)].norm() < 1e-12 && m[(j, 0)].norm() < 1e-12);
        }
        let cf = closed_form_collective_matrix(&p, tr.branch).unwrap();
        assert!((&m - &cf).camax() < 1e-12);
        let h = build_evolution_matrix(&p).unwrap().entries;
        assert!((m.trace() - h.trace()).norm() < 1e-12);
    }

    /// N = 2 collective matrix assembled by hand from the block formulas.
    #[test]
    fn hand_computed_three_by_three() {
        let p = p0(2);
        let tr = build_transform(&p, BranchChoice::Plus).unwrap();
        let m = assemble_collective_matrix(&p, &tr).unwrap();
        let d = derived_params(&p).unwrap();
        let dm = C64::new(0.9, -0.1);
        let half = C64::new(0.3, -0.2) * 0.5;
        let kappa = half - d.mu;
        let want = [
            [dm + half + d.mu, C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), dm + kappa / 2.0, kappa / 2.0],
            [C64::new(0.0, 0.0), kappa / 2.0, dm + kappa / 2.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - want[i][j]).norm() < 1e-13, "({i},{j})");
            }
        }
    }

    #[test]
    fn anti_hermitian_effective_coupling() {
        let p = SystemParams {
            n_modes: 5,
            omega0: 1.0,
            omega: 1.0,
            gamma0: 0.1,
            gamma: 0.1,
            coupling: 1.0,
            theta: FRAC_PI_2,
            ..Default::default()
        };
        let e = effective_parameters(&p, BranchChoice::Auto).unwrap();
        assert_abs_diff_eq!(e.g_eff, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.theta_eff, FRAC_PI_2, epsilon = 1e-14);
        assert_eq!(e.eta_eff, 0.0);
        assert_eq!(e.theta_drive, 0.0);
        let e = effective_parameters(&p, BranchChoice::Plus).unwrap();
        assert_abs_diff_eq!(e.theta_eff, -FRAC_PI_2, epsilon = 1e-14);
    }

    /// With γ₀ > γ the fast eigenmode is the auxiliary-like one and its
    /// shear stays finite; with γ₀ < γ the fast mode is the bright main
    /// mode and the shear grows like |Δ|/g.
    #[test]
    fn weak_coupling_branch_limits() {
        let g = 1e-6;
        let fast_aux = SystemParams {
            gamma0: 0.3,
            gamma: 0.1,
            coupling: g,
            ..p0(3)
        };
        let tr = build_transform(&fast_aux, BranchChoice::Auto).unwrap();
        assert!(tr.shear.norm() < 1e-4);
        let e = effective_parameters(
            &SystemParams {
                coupling: 1e-8,
                ..fast_aux
            },
            BranchChoice::Auto,
        )
        .unwrap();
        assert!(e.g_eff < 1e-7);

        let fast_main = SystemParams {
            gamma0: 0.1,
            gamma: 0.3,
            coupling: g,
            ..p0(3)
        };
        let d = derived_params(&fast_main).unwrap();
        let b = d.fastest_branch();
        assert!(d.s(b).norm() > 1e4);
        assert!(d.s(b.flip()).norm() < 1e-4);
    }

    #[test]
    fn round_trip_and_bright_preimage() {
        let p = p0(4);
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let a = AmplitudeVector::new((0..5).map(|k| C64::new(k as f64 - 1.5, 0.3 * k as f64)).collect());
        let back = from_collective(&to_collective(&a, &tr).unwrap(), &tr).unwrap();
        assert!(back.distance(&a) < 1e-12);

        let c = C64::new(0.4, -0.7);
        let mut pv = vec![c; 5];
        pv[0] = C64::new(0.0, 0.0);
        let a = from_collective(&CollectiveState { values: pv }, &tr).unwrap();
        let want0 = -2.0 * tr.shear * a.values[1];
        assert!((a.values[0] - want0).norm() < 1e-12);
        for k in 2..5 {
            assert!((a.values[k] - a.values[1]).norm() < 1e-12);
        }
        assert!(to_collective(&AmplitudeVector::zeros(3), &tr).is_err());
    }

    #[test]
    fn fastest_eigenvector_maps_to_isolated_mode() {
        let p = p0(3);
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let h = build_evolution_matrix(&p).unwrap().entries;
        let m = assemble_collective_matrix(&p, &tr).unwrap();
        let lam = m[(0, 0)];
        // eigenvector of H for λ: null vector of H - λ from a linear solve
        // with the first component pinned to 1
        let n = 4;
        let shifted = &h - DMatrix::<C64>::identity(n, n) * lam;
        let sub = shifted.view((1, 1), (n - 1, n - 1)).into_owned();
        let rhs = -shifted.view((1, 0), (n - 1, 1)).into_owned();
        let x = sub.lu().solve(&rhs).unwrap();
        let mut v = vec![C64::new(1.0, 0.0)];
        v.extend(x.iter().copied());
        let a = AmplitudeVector::new(v);
        assert!(
            ((&h * nalgebra::DVector::from_column_slice(&a.values))
                - nalgebra::DVector::from_column_slice(&a.values) * lam)
                .camax()
                < 1e-12
        );
        let pc = to_collective(&a, &tr).unwrap();
        for z in &pc.values[1..] {
            assert!(z.norm() < 1e-10);
        }
    }

    #[test]
    fn steady_states_match_linear_solve() {
        let p = SystemParams {
            drive: 0.8,
            drive_freq: 1.0,
            coupling: 0.1,
            ..p0(5)
        };
        let tr = build_transform(&p, BranchChoice::Auto).unwrap();
        let (pi0, pis) = collective_steady_states(&p, &tr).unwrap();
        let a = crate::linear::steady_state(&p).unwrap();
        let pc = to_collective(&a, &tr).unwrap();
        assert!((pc.values[0] - pi0).norm() < 1e-9);
        for z in &pc.values[1..] {
            assert!((z - pis).norm() < 1e-9);
        }
        let undriven = SystemParams { drive: 0.0, ..p };
        let tr = build_transform(&undriven, BranchChoice::Auto).unwrap();
        assert_eq!(
            collective_steady_states(&undriven, &tr).unwrap(),
            (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
        );
    }

    #[test]
    fn exceptional_point_is_rejected() {
        let p = SystemParams {
            omega0: 0.9,
            gamma0: 0.6,
            gamma: 0.1,
            coupling: 0.25,
            theta: 0.0,
            ..p0(2)
        };
        assert!(matches!(
            build_transform(&p, BranchChoice::Auto),
            Err(Error::ExceptionalPoint { .. })
        ));
    }
}
