//! Seeded Monte-Carlo simulation of the switched closed loop.
//!
//! Run `r` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `r`, so
//! every run is reproducible on its own and the ensemble does not depend on
//! how runs are scheduled across threads.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chance::BoxConstraint;
use crate::covariance::PeriodicCovariance;
use crate::error::{Error, Result};
use crate::linalg::{ensure_psd, ensure_shape, psd_sqrt, Matrix, Vector};
use crate::plant::{GainSet, SystemModel, TargetSpec};
use crate::sequence::SwitchSequence;

pub const RNG_DESCRIPTION: &str = "ChaCha8Rng::seed_from_u64(seed), stream = run index";
pub const NORMAL_DESCRIPTION: &str = "rand_distr::StandardNormal (ziggurat)";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub x0_mean: Vector,
    pub x0_cov: Matrix,
    /// Initial estimate; the prior mean when absent.
    pub xhat0: Option<Vector>,
    pub target: TargetSpec,
}

impl SimConfig {
    pub fn new(steps: usize, runs: usize, seed: u64, x0_mean: Vector, x0_cov: Matrix, m: usize) -> Self {
        let n = x0_mean.len();
        SimConfig {
            steps,
            runs,
            seed,
            x0_mean,
            x0_cov,
            xhat0: None,
            target: TargetSpec::origin(n, m),
        }
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        let n = model.states();
        if self.steps == 0 || self.runs == 0 {
            return Err(Error::Domain(format!(
                "steps and runs must be at least 1, got steps = {}, runs = {}",
                self.steps, self.runs
            )));
        }
        if self.x0_mean.len() != n {
            return Err(Error::dim("sim: x0 mean", n, self.x0_mean.len()));
        }
        ensure_shape(&self.x0_cov, n, n, "sim: x0 covariance")?;
        ensure_psd(&self.x0_cov, "sim: x0 covariance")?;
        if let Some(xh) = &self.xhat0 {
            if xh.len() != n {
                return Err(Error::dim("sim: initial estimate", n, xh.len()));
            }
        }
        if self.target.x_t.len() != n || self.target.u_t.len() != model.inputs() {
            return Err(Error::dim(
                "sim: target",
                format!("x_T: {n}, u_T: {}", model.inputs()),
                format!("x_T: {}, u_T: {}", self.target.x_t.len(), self.target.u_t.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x: Vector,
    pub xhat: Vector,
    /// Applied input, actuation steps only.
    pub u: Option<Vector>,
    /// Measurement, sensing steps only.
    pub y: Option<Vector>,
}

/// One step of the plant and observer:
/// `u = u_T + K(x̂ − x_T)` applied only when `η = 1`, `x⁺ = Ax + ηBu + w`,
/// `y = Cx + ν` only when `η = 0`, `x̂⁺ = Ax̂ + ηBu − (1−η)L(y − Cx̂)`.
#[allow(clippy::too_many_arguments)]
pub fn step_closed_loop(
    x: &Vector,
    xhat: &Vector,
    eta: bool,
    w: &Vector,
    nu: &Vector,
    model: &SystemModel,
    gains: &GainSet,
    target: &TargetSpec,
) -> Result<StepOutput> {
    let n = model.states();
    for (v, len, ctx) in [
        (x, n, "step: x"),
        (xhat, n, "step: x̂"),
        (w, n, "step: w"),
        (nu, model.outputs(), "step: ν"),
        (&target.x_t, n, "step: x_T"),
        (&target.u_t, model.inputs(), "step: u_T"),
    ] {
        if v.len() != len {
            return Err(Error::dim(ctx, len, v.len()));
        }
    }
    let mut x_next = &model.a * x + w;
    let mut xhat_next = &model.a * xhat;
    let (u, y) = if eta {
        let u = &target.u_t + &gains.k * (xhat - &target.x_t);
        let bu = &model.b * &u;
        x_next += &bu;
        xhat_next += &bu;
        (Some(u), None)
    } else {
        let y = &model.c * x + nu;
        let innovation = &y - &model.c * xhat;
        xhat_next -= &gains.l * innovation;
        (None, Some(y))
    };
    Ok(StepOutput {
        x: x_next,
        xhat: xhat_next,
        u,
        y,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub eta: bool,
    pub x: Vector,
    pub xhat: Vector,
    pub u: Option<Vector>,
    pub y: Option<Vector>,
    pub w: Vector,
    pub nu: Vector,
}

impl StepRecord {
    pub fn error(&self) -> Vector {
        &self.x - &self.xhat
    }
}

/// `steps` records carrying the input, output and noise of each step, plus
/// the final state and estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run: usize,
    pub records: Vec<StepRecord>,
    pub final_x: Vector,
    pub final_xhat: Vector,
}

impl Trajectory {
    /// `x_0 … x_steps`.
    pub fn states(&self) -> Vec<&Vector> {
        self.records.iter().map(|r| &r.x).chain(std::iter::once(&self.final_x)).collect()
    }

    pub fn estimates(&self) -> Vec<&Vector> {
        self.records.iter().map(|r| &r.xhat).chain(std::iter::once(&self.final_xhat)).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt: &Matrix) -> Vector {
    let z = Vector::from_fn(sqrt.ncols(), |_, _| StandardNormal.sample(rng));
    sqrt * z
}

/// One run with its own RNG stream.
pub fn simulate_run(
    model: &SystemModel,
    gains: &GainSet,
    s: &SwitchSequence,
    cfg: &SimConfig,
    run: usize,
) -> Result<Trajectory> {
    cfg.validate(model)?;
    let sw = psd_sqrt(&model.process_noise);
    let sv = psd_sqrt(&model.measurement_noise);
    let s0 = psd_sqrt(&cfg.x0_cov);
    simulate_run_with(model, gains, s, cfg, run, &sw, &sv, &s0)
}

#[allow(clippy::too_many_arguments)]
fn simulate_run_with(
    model: &SystemModel,
    gains: &GainSet,
    s: &SwitchSequence,
    cfg: &SimConfig,
    run: usize,
    sw: &Matrix,
    sv: &Matrix,
    s0: &Matrix,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run as u64);
    let mut x = &cfg.x0_mean + gaussian(&mut rng, s0);
    let mut xhat = cfg.xhat0.clone().unwrap_or_else(|| cfg.x0_mean.clone());
    let mut records = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        let eta = s.eta(k);
        let w = gaussian(&mut rng, sw);
        let nu = gaussian(&mut rng, sv);
        let out = step_closed_loop(&x, &xhat, eta, &w, &nu, model, gains, &cfg.target)?;
        records.push(StepRecord {
            k,
            eta,
            x,
            xhat,
            u: out.u,
            y: out.y,
            w,
            nu,
        });
        x = out.x;
        xhat = out.xhat;
    }
    Ok(Trajectory {
        run,
        records,
        final_x: x,
        final_xhat: xhat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    /// Per-step mean of `x`, `steps + 1` entries.
    pub mean: Vec<Vector>,
    /// Per-step sample covariance of `x` (zero for a single run).
    pub covariance: Vec<Matrix>,
    /// Per-step mean of the estimation error.
    pub error_mean: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub sequence: SwitchSequence,
    pub trajectories: Vec<Trajectory>,
    pub stats: EnsembleStats,
}

impl Ensemble {
    pub fn steps(&self) -> usize {
        self.stats.mean.len() - 1
    }

    pub fn runs(&self) -> usize {
        self.trajectories.len()
    }
}

pub fn run_ensemble(model: &SystemModel, gains: &GainSet, s: &SwitchSequence, cfg: &SimConfig) -> Result<Ensemble> {
    cfg.validate(model)?;
    let sw = psd_sqrt(&model.process_noise);
    let sv = psd_sqrt(&model.measurement_noise);
    let s0 = psd_sqrt(&cfg.x0_cov);
    let trajectories: Vec<Trajectory> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| simulate_run_with(model, gains, s, cfg, r, &sw, &sv, &s0))
        .collect::<Result<_>>()?;
    let stats = ensemble_stats(&trajectories, model.states());
    Ok(Ensemble {
        sequence: s.clone(),
        trajectories,
        stats,
    })
}

fn ensemble_stats(trajectories: &[Trajectory], n: usize) -> EnsembleStats {
    let steps = trajectories[0].records.len();
    let runs = trajectories.len() as f64;
    let states: Vec<Vec<&Vector>> = trajectories.iter().map(|t| t.states()).collect();
    let estimates: Vec<Vec<&Vector>> = trajectories.iter().map(|t| t.estimates()).collect();
    let mut mean = Vec::with_capacity(steps + 1);
    let mut covariance = Vec::with_capacity(steps + 1);
    let mut error_mean = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let mut mu = Vector::zeros(n);
        let mut mu_e = Vector::zeros(n);
        for (xs, xh) in states.iter().zip(&estimates) {
            mu += xs[k];
            mu_e += xs[k] - xh[k];
        }
        mu /= runs;
        mu_e /= runs;
        let mut cov = Matrix::zeros(n, n);
        if trajectories.len() > 1 {
            for xs in &states {
                let d = xs[k] - &mu;
                cov += &d * d.transpose();
            }
            cov /= runs - 1.0;
        }
        mean.push(mu);
        covariance.push(cov);
        error_mean.push(mu_e);
    }
    EnsembleStats {
        mean,
        covariance,
        error_mean,
    }
}

/// Default steady window: the last half of the horizon, `k ≥ steps / 2`.
pub fn steady_window_start(steps: usize) -> usize {
    steps / 2
}

/// Per-step fraction of runs outside the box, `steps + 1` entries.
pub fn empirical_violation(trajectories: &[Trajectory], bounds: &BoxConstraint) -> Result<Vec<f64>> {
    bounds.validate()?;
    let Some(first) = trajectories.first() else {
        return Ok(Vec::new());
    };
    let n = first.final_x.len();
    if let Some(&bad) = bounds.components.iter().find(|&&i| i >= n) {
        return Err(Error::dim("box constraint component", format!("< {n}"), bad));
    }
    let states: Vec<Vec<&Vector>> = trajectories.iter().map(|t| t.states()).collect();
    let len = states[0].len();
    Ok((0..len)
        .map(|k| {
            let hits = states.iter().filter(|xs| bounds.violated_by(xs[k].as_slice())).count();
            hits as f64 / trajectories.len() as f64
        })
        .collect())
}

/// Per-step fraction of runs outside the Chebyshev ellipsoid
/// `(x−μ_k)ᵀ P_k⁺ (x−μ_k) ≤ α²` on the given components, using the steady
/// phase `k mod N`.
pub fn ellipsoid_exceedance(
    trajectories: &[Trajectory],
    covariance: &PeriodicCovariance,
    means: &[Vector],
    components: &[usize],
    alpha: f64,
) -> Result<Vec<f64>> {
    if means.len() != covariance.period() {
        return Err(Error::dim("ellipsoid_exceedance: mean phases", covariance.period(), means.len()));
    }
    let Some(first) = trajectories.first() else {
        return Ok(Vec::new());
    };
    let n = first.final_x.len();
    if let Some(&bad) = components.iter().find(|&&i| i >= n) {
        return Err(Error::dim("ellipsoid_exceedance component", format!("< {n}"), bad));
    }
    let sub = covariance.select(components);
    let inverses: Vec<Matrix> = sub
        .phases()
        .iter()
        .map(|p| {
            p.clone()
                .pseudo_inverse(1e-12 * p.norm().max(f64::MIN_POSITIVE))
                .map_err(|e| Error::Domain(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let states: Vec<Vec<&Vector>> = trajectories.iter().map(|t| t.states()).collect();
    let len = states[0].len();
    let a2 = alpha * alpha;
    Ok((0..len)
        .map(|k| {
            let phase = k % covariance.period();
            let hits = states
                .iter()
                .filter(|xs| {
                    let d = Vector::from_iterator(
                        components.len(),
                        components.iter().map(|&i| xs[k][i] - means[phase][i]),
                    );
                    (d.transpose() * &inverses[phase] * &d)[(0, 0)] > a2
                })
                .count();
            hits as f64 / trajectories.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub window_start: usize,
    pub steady_max: f64,
    pub steady_mean: f64,
    pub overall_max: f64,
}

pub fn summarize_violation(per_step: &[f64], window_start: usize) -> ViolationSummary {
    let window = &per_step[window_start.min(per_step.len())..];
    ViolationSummary {
        window_start,
        steady_max: window.iter().copied().fold(0.0, f64::max),
        steady_mean: if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        },
        overall_max: per_step.iter().copied().fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub software: String,
    pub version: String,
    pub seed: u64,
    pub runs: usize,
    pub steps: usize,
    pub sequence: SwitchSequence,
    pub rng: String,
    pub normal_sampler: String,
    pub x0_mean: Vec<f64>,
    pub x0_cov: Vec<Vec<f64>>,
    pub xhat0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationSummary>,
}

impl SimMetadata {
    pub fn new(cfg: &SimConfig, s: &SwitchSequence) -> Self {
        SimMetadata {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            runs: cfg.runs,
            steps: cfg.steps,
            sequence: s.clone(),
            rng: RNG_DESCRIPTION.to_string(),
            normal_sampler: NORMAL_DESCRIPTION.to_string(),
            x0_mean: cfg.x0_mean.iter().copied().collect(),
            x0_cov: cfg.x0_cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            xhat0: cfg.xhat0.as_ref().map(|v| v.iter().copied().collect()),
            violation: None,
        }
    }
}

fn push_row(line: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        line.push(',');
        line.push_str(&v.to_string());
    }
}

/// `run,k,eta,x1..xn,xh1..xn,u1..um`; the input columns are empty on
/// sensing steps and on the final row.
pub fn write_trajectories_csv<W: Write>(out: &mut W, trajectories: &[Trajectory], m: usize) -> Result<()> {
    let Some(first) = trajectories.first() else {
        return Ok(());
    };
    let n = first.final_x.len();
    let mut header = String::from("run,k,eta");
    for prefix in ["x", "xh"] {
        for i in 1..=n {
            header.push_str(&format!(",{prefix}{i}"));
        }
    }
    for i in 1..=m {
        header.push_str(&format!(",u{i}"));
    }
    writeln!(out, "{header}")?;
    for t in trajectories {
        for r in &t.records {
            let mut line = format!("{},{},{}", t.run, r.k, r.eta as u8);
            push_row(&mut line, r.x.iter().copied());
            push_row(&mut line, r.xhat.iter().copied());
            match &r.u {
                Some(u) => push_row(&mut line, u.iter().copied()),
                None => line.push_str(&",".repeat(m)),
            }
            writeln!(out, "{line}")?;
        }
        let mut line = format!("{},{},", t.run, t.records.len());
        push_row(&mut line, t.final_x.iter().copied());
        push_row(&mut line, t.final_xhat.iter().copied());
        line.push_str(&",".repeat(m));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `k,mean_x1..mean_xn,violation_fraction`; the last column is empty when
/// no box is given.
pub fn write_ensemble_csv<W: Write>(out: &mut W, stats: &EnsembleStats, violation: Option<&[f64]>) -> Result<()> {
    let n = stats.mean.first().map_or(0, |v| v.len());
    let mut header = String::from("k");
    for i in 1..=n {
        header.push_str(&format!(",mean_x{i}"));
    }
    header.push_str(",violation_fraction");
    writeln!(out, "{header}")?;
    for (k, mu) in stats.mean.iter().enumerate() {
        let mut line = k.to_string();
        push_row(&mut line, mu.iter().copied());
        line.push(',');
        if let Some(v) = violation {
            line.push_str(&v[k].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
