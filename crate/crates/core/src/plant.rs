//! Plant and gain data model, zero-order-hold discretization, the
//! Clohessy-Wiltshire relative-motion model, gain synthesis and the four
//! per-mode closed/open-loop matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, ensure_psd, ensure_shape, ensure_square, frobenius_norm, matrix_exponential,
    solve_dare, spectral_radius, Matrix, Vector,
};

/// Discrete-time plant `x⁺ = A x + B u + w`, `y = C x + ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub process_noise: Matrix,
    pub measurement_noise: Matrix,
    /// Sampling period in seconds; metadata only.
    pub sample_period: Option<f64>,
}

impl SystemModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        process_noise: Matrix,
        measurement_noise: Matrix,
    ) -> Result<Self> {
        let model = SystemModel {
            a,
            b,
            c,
            process_noise,
            measurement_noise,
            sample_period: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_sample_period(mut self, ts: f64) -> Self {
        self.sample_period = Some(ts);
        self
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = ensure_square(&self.a, "model: A")?;
        if n == 0 {
            return Err(Error::dim("model: A", "at least 1x1", "0x0"));
        }
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::dim(
                "model: B",
                format!("{n}xm with m >= 1"),
                format!("{}x{}", self.b.nrows(), self.b.ncols()),
            ));
        }
        if self.c.ncols() != n || self.c.nrows() == 0 {
            return Err(Error::dim(
                "model: C",
                format!("px{n} with p >= 1"),
                format!("{}x{}", self.c.nrows(), self.c.ncols()),
            ));
        }
        let p = self.c.nrows();
        ensure_shape(&self.process_noise, n, n, "model: process noise")?;
        ensure_shape(&self.measurement_noise, p, p, "model: measurement noise")?;
        ensure_finite(&self.a, "model: A")?;
        ensure_finite(&self.b, "model: B")?;
        ensure_finite(&self.c, "model: C")?;
        ensure_psd(&self.process_noise, "model: process noise")?;
        ensure_psd(&self.measurement_noise, "model: measurement noise")?;
        Ok(())
    }
}

/// Feedback gain `K` (m×n) and observer injection gain `L` (n×p), with the
/// closed-loop spectral radii recorded at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: Matrix,
    pub l: Matrix,
    pub control_radius: f64,
    pub observer_radius: f64,
}

impl GainSet {
    pub fn new(model: &SystemModel, k: Matrix, l: Matrix) -> Result<Self> {
        ensure_shape(&k, model.inputs(), model.states(), "gains: K")?;
        ensure_shape(&l, model.states(), model.outputs(), "gains: L")?;
        ensure_finite(&k, "gains: K")?;
        ensure_finite(&l, "gains: L")?;
        let control_radius = spectral_radius(&(&model.a + &model.b * &k))?;
        let observer_radius = spectral_radius(&(&model.a + &l * &model.c))?;
        Ok(GainSet {
            k,
            l,
            control_radius,
            observer_radius,
        })
    }

    /// LQR feedback plus dual-Riccati observer.
    pub fn synthesize(model: &SystemModel, weights: &GainWeights) -> Result<Self> {
        let k = synthesize_lqr_gain(&model.a, &model.b, &weights.control_q, &weights.control_r)?;
        let l = synthesize_observer_gain(
            &model.a,
            &model.c,
            &weights.observer_q,
            &weights.observer_r,
        )?;
        GainSet::new(model, k, l)
    }
}

/// Riccati weights for the two syntheses.
#[derive(Debug, Clone, PartialEq)]
pub struct GainWeights {
    pub control_q: Matrix,
    pub control_r: Matrix,
    pub observer_q: Matrix,
    pub observer_r: Matrix,
}

impl GainWeights {
    /// `Q = I`, `R = I` for both designs.
    pub fn identity(n: usize, m: usize, p: usize) -> Self {
        GainWeights {
            control_q: Matrix::identity(n, n),
            control_r: Matrix::identity(m, m),
            observer_q: Matrix::identity(n, n),
            observer_r: Matrix::identity(p, p),
        }
    }
}

/// Target equilibrium `x_T = A x_T + B u_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub x_t: Vector,
    pub u_t: Vector,
}

impl TargetSpec {
    pub fn origin(n: usize, m: usize) -> Self {
        TargetSpec {
            x_t: Vector::zeros(n),
            u_t: Vector::zeros(m),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x_t.iter().all(|v| *v == 0.0) && self.u_t.iter().all(|v| *v == 0.0)
    }

    pub fn equilibrium_residual(&self, model: &SystemModel) -> Result<f64> {
        if self.x_t.len() != model.states() || self.u_t.len() != model.inputs() {
            return Err(Error::dim(
                "target",
                format!("x_T: {}, u_T: {}", model.states(), model.inputs()),
                format!("x_T: {}, u_T: {}", self.x_t.len(), self.u_t.len()),
            ));
        }
        Ok((&self.x_t - &model.a * &self.x_t - &model.b * &self.u_t).norm())
    }

    pub fn check_equilibrium(&self, model: &SystemModel) -> Result<()> {
        let res = self.equilibrium_residual(model)?;
        if res <= 1e-8 * (1.0 + self.x_t.norm()) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "target is not an equilibrium: ‖x_T − A x_T − B u_T‖ = {res:e}"
            )))
        }
    }
}

/// Clohessy-Wiltshire parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwParams {
    /// Chaser mass, kg.
    pub mass: f64,
    /// Mean motion of the target orbit, rad/s.
    pub mean_motion: f64,
    /// Sampling period, s.
    pub sample_period: f64,
}

impl CwParams {
    /// 140 kg chaser, ω = 0.001 rad/s, 30 s sampling.
    pub const RENDEZVOUS: CwParams = CwParams {
        mass: 140.0,
        mean_motion: 0.001,
        sample_period: 30.0,
    };

    pub fn validate(&self) -> Result<()> {
        // ω = 0 (double integrator) is accepted as the degenerate limit.
        if !(self.mass > 0.0 && self.sample_period > 0.0 && self.mean_motion >= 0.0)
            || !self.mass.is_finite()
            || !self.sample_period.is_finite()
            || !self.mean_motion.is_finite()
        {
            return Err(Error::Domain(format!(
                "CW parameters must be positive and finite, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Continuous CW model in first-order form with state
/// `[x1, x2, x3, ẋ1, ẋ2, ẋ3]`.
pub fn build_cw_continuous(p: &CwParams) -> Result<(Matrix, Matrix)> {
    p.validate()?;
    let w = p.mean_motion;
    let mut a = Matrix::zeros(6, 6);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    a[(3, 0)] = 3.0 * w * w;
    a[(3, 4)] = 2.0 * w;
    a[(4, 3)] = -2.0 * w;
    a[(5, 2)] = -w * w;
    let mut b = Matrix::zeros(6, 3);
    for i in 0..3 {
        b[(i + 3, i)] = 1.0 / p.mass;
    }
    Ok((a, b))
}

/// Exact zero-order-hold discretization via the augmented exponential
/// `exp([[A, B], [0, 0]] Ts)`.
pub fn discretize_zoh(a_c: &Matrix, b_c: &Matrix, ts: f64) -> Result<(Matrix, Matrix)> {
    let n = ensure_square(a_c, "discretize_zoh: A")?;
    if b_c.nrows() != n {
        return Err(Error::dim("discretize_zoh: B", format!("{n} rows"), b_c.nrows()));
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::Domain(format!("sampling period must be positive, got {ts}")));
    }
    let m = b_c.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * ts));
    let e = matrix_exponential(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// `K = −(R + BᵀPB)⁻¹ BᵀPA`, signed so that `A + BK` is the closed loop.
pub fn synthesize_lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let p = solve_dare(a, b, q, r).map_err(|e| match e {
        Error::NotConverged { .. } | Error::NotStabilizable(_) => {
            Error::NotStabilizable(format!("LQR synthesis failed: {e}"))
        }
        other => other,
    })?;
    let s = r + b.transpose() * &p * b;
    let k = -s
        .lu()
        .solve(&(b.transpose() * &p * a))
        .ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
    let rho = spectral_radius(&(a + b * &k))?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizable(format!("ρ(A + BK) = {rho}")));
    }
    Ok(k)
}

/// `L = −A P Cᵀ (C P Cᵀ + R)⁻¹` from the dual Riccati equation, signed so
/// that `A + LC` is the error dynamics.
pub fn synthesize_observer_gain(a: &Matrix, c: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "synthesize_observer_gain: A")?;
    if c.nrows() == 0 {
        return Err(Error::NotDetectable("output map has no rows".into()));
    }
    ensure_shape(c, c.nrows(), n, "synthesize_observer_gain: C")?;
    let p = solve_dare(&a.transpose(), &c.transpose(), q, r).map_err(|e| match e {
        Error::NotConverged { .. } | Error::NotStabilizable(_) => {
            Error::NotDetectable(format!("observer synthesis failed: {e}"))
        }
        other => other,
    })?;
    let s = c * &p * c.transpose() + r;
    // L = −A P Cᵀ S⁻¹  ⇔  Lᵀ = −S⁻¹ C P Aᵀ
    let lt = s
        .lu()
        .solve(&(c * &p * a.transpose()))
        .ok_or(Error::NotPositiveDefinite("C P Cᵀ + R"))?;
    let l = -lt.transpose();
    let rho = spectral_radius(&(a + &l * c))?;
    if rho >= 1.0 {
        return Err(Error::NotDetectable(format!("ρ(A + LC) = {rho}")));
    }
    Ok(l)
}

/// Identifies one of the four per-mode matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeId {
    /// `A`: control side, sensing step.
    ControlSense,
    /// `A + BK`: control side, actuation step.
    ControlActuate,
    /// `A + LC`: observer side, sensing step.
    ObserverSense,
    /// `A`: observer side, actuation step.
    ObserverActuate,
}

impl ModeId {
    pub const ALL: [ModeId; 4] = [
        ModeId::ControlSense,
        ModeId::ControlActuate,
        ModeId::ObserverSense,
        ModeId::ObserverActuate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModeId::ControlSense => "control/sense (A)",
            ModeId::ControlActuate => "control/actuate (A+BK)",
            ModeId::ObserverSense => "observer/sense (A+LC)",
            ModeId::ObserverActuate => "observer/actuate (A)",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Spectral radii of the four mode matrices, in `ModeId::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRates {
    pub control: [f64; 2],
    pub observer: [f64; 2],
}

/// The four per-mode matrices. Indexing by `η`: `control(η) = A + ηBK`,
/// `observer(η) = A + (1−η)LC`.
#[derive(Debug, Clone)]
pub struct ModeMatrices {
    control: [Matrix; 2],
    observer: [Matrix; 2],
    pub b: Matrix,
    pub k: Matrix,
    pub l: Matrix,
    pub rates: ModeRates,
    /// Frobenius norms in `ModeId::ALL` order.
    pub norms: [f64; 4],
    nilpotent: [bool; 4],
}

impl ModeMatrices {
    pub fn new(model: &SystemModel, gains: &GainSet) -> Result<Self> {
        model.validate()?;
        ensure_shape(&gains.k, model.inputs(), model.states(), "mode_matrices: K")?;
        ensure_shape(&gains.l, model.states(), model.outputs(), "mode_matrices: L")?;
        let a = &model.a;
        let control = [a.clone(), a + &model.b * &gains.k];
        let observer = [a + &gains.l * &model.c, a.clone()];
        let rates = ModeRates {
            control: [spectral_radius(&control[0])?, spectral_radius(&control[1])?],
            observer: [spectral_radius(&observer[0])?, spectral_radius(&observer[1])?],
        };
        let all = [&control[0], &control[1], &observer[0], &observer[1]];
        let norms = all.map(frobenius_norm);
        let nilpotent = all.map(is_nilpotent);
        Ok(ModeMatrices {
            control,
            observer,
            b: model.b.clone(),
            k: gains.k.clone(),
            l: gains.l.clone(),
            rates,
            norms,
            nilpotent,
        })
    }

    pub fn states(&self) -> usize {
        self.control[0].nrows()
    }

    /// `Ā(η) = A + ηBK`
    pub fn control(&self, eta: bool) -> &Matrix {
        &self.control[eta as usize]
    }

    /// `Ã(η) = A + (1−η)LC`
    pub fn observer(&self, eta: bool) -> &Matrix {
        &self.observer[eta as usize]
    }

    pub fn get(&self, id: ModeId) -> &Matrix {
        match id {
            ModeId::ControlSense => &self.control[0],
            ModeId::ControlActuate => &self.control[1],
            ModeId::ObserverSense => &self.observer[0],
            ModeId::ObserverActuate => &self.observer[1],
        }
    }

    pub fn rate(&self, id: ModeId) -> f64 {
        match id {
            ModeId::ControlSense => self.rates.control[0],
            ModeId::ControlActuate => self.rates.control[1],
            ModeId::ObserverSense => self.rates.observer[0],
            ModeId::ObserverActuate => self.rates.observer[1],
        }
    }

    pub fn norm(&self, id: ModeId) -> f64 {
        self.norms[id.index()]
    }

    pub fn is_nilpotent(&self, id: ModeId) -> bool {
        self.nilpotent[id.index()]
    }
}

pub fn mode_matrices(model: &SystemModel, gains: &GainSet) -> Result<ModeMatrices> {
    ModeMatrices::new(model, gains)
}

/// `Ω` is treated as nilpotent when some power `j ≤ n` collapses relative to
/// the previous one: `‖Ω^j‖_F ≤ 1e−10·‖Ω^{j−1}‖_F·‖Ω‖_F`.
pub fn is_nilpotent(omega: &Matrix) -> bool {
    let n = omega.nrows();
    let norm = omega.norm();
    if norm == 0.0 {
        return true;
    }
    let mut prev = Matrix::identity(n, n);
    for _ in 0..n {
        let next = &prev * omega;
        if next.norm() <= 1e-10 * prev.norm() * norm {
            return true;
        }
        prev = next;
    }
    false
}

/// The relative-motion case study: CW dynamics (140 kg, ω = 0.001 rad/s,
/// Ts = 30 s), position measurements, `Σ_w = 1e−4·I6`, `Σ_ν = 1e−2·I3`.
pub fn rendezvous_model() -> Result<SystemModel> {
    let p = CwParams::RENDEZVOUS;
    let (a_c, b_c) = build_cw_continuous(&p)?;
    let (a, b) = discretize_zoh(&a_c, &b_c, p.sample_period)?;
    let mut c = Matrix::zeros(3, 6);
    for i in 0..3 {
        c[(i, i)] = 1.0;
    }
    Ok(SystemModel::new(
        a,
        b,
        c,
        Matrix::identity(6, 6) * 1e-4,
        Matrix::identity(3, 3) * 1e-2,
    )?
    .with_sample_period(p.sample_period))
}

/// Case-study model with LQR/observer gains from `Q = I6`, `R = I3`.
pub fn rendezvous_system() -> Result<(SystemModel, GainSet)> {
    let model = rendezvous_model()?;
    let gains = GainSet::synthesize(&model, &GainWeights::identity(6, 3, 3))?;
    Ok((model, gains))
}
