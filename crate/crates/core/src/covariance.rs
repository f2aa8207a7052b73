//! Estimation-error and augmented (state, error) covariance propagation,
//! their periodic steady states, mean dynamics and the contraction
//! certificate for the error covariance.
//!
//! Periodic steady states are computed phase by phase: for phase `k` the
//! one-period monodromy `M_k` starting at `k` and the noise `W_k`
//! accumulated over that period give `X_k = M_k X_k M_kᵀ + W_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_psd, ensure_shape, solve_discrete_lyapunov, spectral_norm, spectral_radius, symmetrize,
    Matrix, Vector,
};
use crate::plant::{GainSet, ModeMatrices, SystemModel, TargetSpec};
use crate::sequence::{monodromy, SwitchSequence};

/// `R = (1−η) L Σ_ν Lᵀ + Σ_w`
pub fn error_noise_term(
    eta: bool,
    l: &Matrix,
    measurement_noise: &Matrix,
    process_noise: &Matrix,
) -> Result<Matrix> {
    let n = process_noise.nrows();
    ensure_shape(process_noise, n, n, "error_noise_term: Σ_w")?;
    ensure_shape(l, n, measurement_noise.nrows(), "error_noise_term: L")?;
    ensure_shape(
        measurement_noise,
        l.ncols(),
        l.ncols(),
        "error_noise_term: Σ_ν",
    )?;
    if eta {
        Ok(process_noise.clone())
    } else {
        Ok(symmetrize(&(l * measurement_noise * l.transpose() + process_noise)))
    }
}

/// Per-phase covariances of an N-periodic steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCovariance {
    phases: Vec<Matrix>,
}

impl PeriodicCovariance {
    pub fn new(phases: Vec<Matrix>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Domain("periodic covariance needs at least one phase".into()));
        }
        Ok(PeriodicCovariance { phases })
    }

    pub fn period(&self) -> usize {
        self.phases.len()
    }

    /// Phase `k mod N`.
    pub fn phase(&self, k: usize) -> &Matrix {
        &self.phases[k % self.phases.len()]
    }

    pub fn phases(&self) -> &[Matrix] {
        &self.phases
    }

    /// Principal sub-block on `indices` for every phase.
    pub fn select(&self, indices: &[usize]) -> PeriodicCovariance {
        PeriodicCovariance {
            phases: self.phases.iter().map(|p| p.select_rows(indices).select_columns(indices)).collect(),
        }
    }

    pub fn block(&self, start: usize, len: usize) -> PeriodicCovariance {
        PeriodicCovariance {
            phases: self
                .phases
                .iter()
                .map(|p| p.view((start, start), (len, len)).into_owned())
                .collect(),
        }
    }
}

/// Error covariance trajectory `P_0 … P_steps` under `P⁺ = Ã P Ãᵀ + R`.
pub fn propagate_error_cov(
    p0: &Matrix,
    s: &SwitchSequence,
    mm: &ModeMatrices,
    model: &SystemModel,
    steps: usize,
) -> Result<Vec<Matrix>> {
    ensure_psd(p0, "propagate_error_cov: P0")?;
    ensure_shape(p0, mm.states(), mm.states(), "propagate_error_cov: P0")?;
    let noise = noise_terms(mm, model)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = p0.clone();
    out.push(p.clone());
    for k in 0..steps {
        let eta = s.eta(k);
        let a = mm.observer(eta);
        p = symmetrize(&(a * &p * a.transpose() + &noise[eta as usize]));
        out.push(p.clone());
    }
    Ok(out)
}

/// `[R(η=0), R(η=1)]`
fn noise_terms(mm: &ModeMatrices, model: &SystemModel) -> Result<[Matrix; 2]> {
    Ok([
        error_noise_term(false, &mm.l, &model.measurement_noise, &model.process_noise)?,
        error_noise_term(true, &mm.l, &model.measurement_noise, &model.process_noise)?,
    ])
}

/// Monodromy and accumulated noise of one period starting at `phase`.
fn period_from_phase<'a>(
    s: &SwitchSequence,
    phase: usize,
    step: impl Fn(bool) -> (&'a Matrix, &'a Matrix),
    dim: usize,
) -> (Matrix, Matrix) {
    let mut m = Matrix::identity(dim, dim);
    let mut w = Matrix::zeros(dim, dim);
    for j in 0..s.len() {
        let (a, r) = step(s.eta(phase + j));
        m = a * &m;
        w = a * &w * a.transpose() + r;
    }
    (m, symmetrize(&w))
}

fn solve_phases<'a>(
    s: &SwitchSequence,
    dim: usize,
    step: impl Fn(bool) -> (&'a Matrix, &'a Matrix) + Copy,
    context: &'static str,
) -> Result<PeriodicCovariance> {
    let phases = (0..s.len())
        .map(|k| {
            let (m, w) = period_from_phase(s, k, step, dim);
            solve_discrete_lyapunov(&m, &w).map_err(|e| match e {
                Error::Unstable { radius, .. } => Error::Unstable { context, radius },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PeriodicCovariance::new(phases)
}

/// Periodic steady state of the error covariance. Requires `q̃ < 1`.
pub fn steady_error_cov(
    s: &SwitchSequence,
    mm: &ModeMatrices,
    model: &SystemModel,
) -> Result<PeriodicCovariance> {
    let (_, observer) = monodromy(s, mm);
    let qtilde = spectral_radius(&observer)?;
    if qtilde >= 1.0 {
        return Err(Error::Unstable {
            context: "observer monodromy (steady error covariance)",
            radius: qtilde,
        });
    }
    let noise = noise_terms(mm, model)?;
    solve_phases(
        s,
        mm.states(),
        |eta| (mm.observer(eta), &noise[eta as usize]),
        "observer monodromy (steady error covariance)",
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanTrajectory {
    pub state: Vec<Vector>,
    pub error: Vec<Vector>,
}

/// Propagates
/// `μx⁺ = Ā μx − η BK μe + η B (u_T − K x_T)`, `μe⁺ = Ã μe`.
/// With `x_T = 0` the forcing reduces to `η B u_T`.
pub fn mean_propagate(
    mu_x0: &Vector,
    mu_e0: &Vector,
    s: &SwitchSequence,
    mm: &ModeMatrices,
    target: &TargetSpec,
    steps: usize,
) -> Result<MeanTrajectory> {
    let n = mm.states();
    for (v, ctx) in [(mu_x0, "mean_propagate: μx0"), (mu_e0, "mean_propagate: μe0"), (&target.x_t, "mean_propagate: x_T")] {
        if v.len() != n {
            return Err(Error::dim(ctx, n, v.len()));
        }
    }
    if target.u_t.len() != mm.b.ncols() {
        return Err(Error::dim("mean_propagate: u_T", mm.b.ncols(), target.u_t.len()));
    }
    let bk = &mm.b * &mm.k;
    let forcing = &mm.b * (&target.u_t - &mm.k * &target.x_t);
    let mut state = Vec::with_capacity(steps + 1);
    let mut error = Vec::with_capacity(steps + 1);
    let (mut x, mut e) = (mu_x0.clone(), mu_e0.clone());
    state.push(x.clone());
    error.push(e.clone());
    for k in 0..steps {
        let eta = s.eta(k);
        let mut x_next = mm.control(eta) * &x;
        if eta {
            x_next -= &bk * &e;
            x_next += &forcing;
        }
        e = mm.observer(eta) * &e;
        x = x_next;
        state.push(x.clone());
        error.push(e.clone());
    }
    Ok(MeanTrajectory { state, error })
}

/// The N-periodic steady-state mean `μ^s_{x,k}` (error mean zero).
/// Requires `q̄ < 1`.
pub fn steady_mean(s: &SwitchSequence, mm: &ModeMatrices, target: &TargetSpec) -> Result<Vec<Vector>> {
    let n = mm.states();
    let (control, _) = monodromy(s, mm);
    let qbar = spectral_radius(&control)?;
    if qbar >= 1.0 {
        return Err(Error::Unstable {
            context: "control monodromy (steady mean)",
            radius: qbar,
        });
    }
    let zero = Vector::zeros(n);
    // particular response over one period from zero
    let from_zero = mean_propagate(&zero, &zero, s, mm, target, s.len())?;
    let drift = &from_zero.state[s.len()];
    let mu0 = (Matrix::identity(n, n) - control)
        .lu()
        .solve(drift)
        .ok_or_else(|| Error::Domain("I − monodromy is singular".into()))?;
    let traj = mean_propagate(&mu0, &zero, s, mm, target, s.len() - 1)?;
    Ok(traj.state)
}

/// Bound on the error-covariance norm growth over periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    /// Spectral norm of the noise accumulated over one period from phase 0.
    pub gamma: f64,
    /// `ρ(Ã_{N−1}⋯Ã_0)`
    pub qtilde: f64,
    pub qtilde_sq: f64,
    /// `γ / (1 − q̃²)`
    pub limsup_bound: f64,
    /// Spectral norm of the observer monodromy.
    pub monodromy_norm: f64,
    /// `γ / (1 − ‖M‖²)` when `‖M‖ < 1`.
    pub rigorous_bound: Option<f64>,
}

impl ContractionCertificate {
    /// One-period inequality
    /// `‖P_{N(n+1)}‖ − γ/(1−q²) ≤ q² (‖P_{Nn}‖ − γ/(1−q²))` with `q = ‖M‖₂`,
    /// evaluated as the equivalent `‖P'‖ ≤ q²‖P‖ + γ`.
    pub fn step_holds(&self, prev_norm: f64, next_norm: f64) -> bool {
        let q2 = self.monodromy_norm * self.monodromy_norm;
        let tol = 1e-10 * (1.0 + next_norm);
        next_norm <= q2 * prev_norm + self.gamma + tol
    }
}

pub fn contraction_certificate(
    s: &SwitchSequence,
    mm: &ModeMatrices,
    model: &SystemModel,
) -> Result<ContractionCertificate> {
    let noise = noise_terms(mm, model)?;
    let (m, w) = period_from_phase(s, 0, |eta| (mm.observer(eta), &noise[eta as usize]), mm.states());
    let qtilde = spectral_radius(&m)?;
    if qtilde >= 1.0 {
        return Err(Error::Unstable {
            context: "observer monodromy (contraction certificate)",
            radius: qtilde,
        });
    }
    let gamma = spectral_norm(&w);
    let qtilde_sq = qtilde * qtilde;
    let monodromy_norm = spectral_norm(&m);
    Ok(ContractionCertificate {
        gamma,
        qtilde,
        qtilde_sq,
        limsup_bound: gamma / (1.0 - qtilde_sq),
        monodromy_norm,
        rigorous_bound: (monodromy_norm < 1.0).then(|| gamma / (1.0 - monodromy_norm * monodromy_norm)),
    })
}

/// Augmented dynamics of `z = [x; e]` for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMode {
    /// `[[Ā, −ηBK], [0, Ã]]`
    pub a: Matrix,
    /// `[[0, I], [(1−η)L, I]]`, acting on `ζ = [ν; w]`
    pub gamma: Matrix,
    /// `[0; ηB]`
    pub g: Matrix,
    /// `Γ diag(Σ_ν, Σ_w) Γᵀ`
    pub noise: Matrix,
}

pub fn augmented_matrices(model: &SystemModel, gains: &GainSet, eta: bool) -> Result<AugmentedMode> {
    let mm = ModeMatrices::new(model, gains)?;
    Ok(augmented_from_modes(&mm, model, eta))
}

fn augmented_from_modes(mm: &ModeMatrices, model: &SystemModel, eta: bool) -> AugmentedMode {
    let n = mm.states();
    let m = mm.b.ncols();
    let p = mm.l.ncols();
    let h = if eta { 1.0 } else { 0.0 };

    let mut a = Matrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(mm.control(eta));
    a.view_mut((0, n), (n, n)).copy_from(&(&mm.b * &mm.k * (-h)));
    a.view_mut((n, n), (n, n)).copy_from(mm.observer(eta));

    let mut gamma = Matrix::zeros(2 * n, p + n);
    gamma.view_mut((0, p), (n, n)).fill_with_identity();
    gamma.view_mut((n, 0), (n, p)).copy_from(&(&mm.l * (1.0 - h)));
    gamma.view_mut((n, p), (n, n)).fill_with_identity();

    let mut g = Matrix::zeros(2 * n, m);
    g.view_mut((n, 0), (n, m)).copy_from(&(&mm.b * h));

    let mut zeta = Matrix::zeros(p + n, p + n);
    zeta.view_mut((0, 0), (p, p)).copy_from(&model.measurement_noise);
    zeta.view_mut((p, p), (n, n)).copy_from(&model.process_noise);
    let noise = symmetrize(&(&gamma * zeta * gamma.transpose()));

    AugmentedMode { a, gamma, g, noise }
}

/// Steady augmented covariance with its state and error diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCovariance {
    pub joint: PeriodicCovariance,
    /// `[I 0] P̆ [I 0]ᵀ`
    pub state: PeriodicCovariance,
    /// `[0 I] P̆ [0 I]ᵀ`
    pub error: PeriodicCovariance,
}

/// Requires both `q̄ < 1` and `q̃ < 1`.
pub fn steady_augmented_cov(
    s: &SwitchSequence,
    model: &SystemModel,
    mm: &ModeMatrices,
) -> Result<AugmentedCovariance> {
    let (control, observer) = monodromy(s, mm);
    let qbar = spectral_radius(&control)?;
    let qtilde = spectral_radius(&observer)?;
    if qbar >= 1.0 || qtilde >= 1.0 {
        return Err(Error::Unstable {
            context: "augmented monodromy (sequence not admissible)",
            radius: qbar.max(qtilde),
        });
    }
    let n = mm.states();
    let modes = [
        augmented_from_modes(mm, model, false),
        augmented_from_modes(mm, model, true),
    ];
    let joint = solve_phases(
        s,
        2 * n,
        |eta| {
            let m = &modes[eta as usize];
            (&m.a, &m.noise)
        },
        "augmented monodromy",
    )?;
    Ok(AugmentedCovariance {
        state: joint.block(0, n),
        error: joint.block(n, n),
        joint,
    })
}
