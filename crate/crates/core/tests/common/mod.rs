#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensact_core::linalg::{spectral_radius, symmetrize};
use sensact_core::plant::{mode_matrices, GainWeights};
use sensact_core::sequence::admissibility;
use sensact_core::{GainSet, Matrix, ModeMatrices, SwitchSequence, SystemModel, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> Matrix {
    let g = random_matrix(rng, n, n);
    symmetrize(&(&g * g.transpose() + Matrix::identity(n, n) * ridge))
}

/// Random matrix rescaled to spectral radius `rho`.
pub fn random_with_radius(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> Matrix {
    loop {
        let m = random_matrix(rng, n, n);
        let r = spectral_radius(&m).unwrap();
        if r > 1e-3 {
            return m * (rho / r);
        }
    }
}

/// `vec(X) = (I − F⊗F)⁻¹ vec(W)`.
pub fn kronecker_lyapunov(f: &Matrix, w: &Matrix) -> Matrix {
    let n = f.nrows();
    let big = Matrix::identity(n * n, n * n) - f.kronecker(f);
    let rhs = Vector::from_column_slice(w.as_slice());
    let x = big.lu().solve(&rhs).expect("nonsingular Kronecker system");
    Matrix::from_column_slice(n, n, x.as_slice())
}

/// Positive root of `b²p² + (r − a²r − qb²)p − qr = 0`.
pub fn scalar_dare(a: f64, b: f64, q: f64, r: f64) -> f64 {
    let b2 = b * b;
    let lin = r - a * a * r - q * b2;
    (-lin + (lin * lin + 4.0 * b2 * q * r).sqrt()) / (2.0 * b2)
}

/// Smallest `k > 0` with `rotate(w, k) = w`.
pub fn rotation_period(w: &SwitchSequence) -> usize {
    (1..=w.len()).find(|&k| w.rotate(k) == *w).unwrap()
}

pub struct Instance {
    pub model: SystemModel,
    pub gains: GainSet,
    pub mm: ModeMatrices,
}

/// Random plant with synthesized gains; `n ∈ 2..=4`, `m, p ∈ 1..=2`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let p = rng.random_range(1..=2);
        let rho = rng.random_range(0.5..1.3);
        let a = random_with_radius(rng, n, rho);
        let b = random_matrix(rng, n, m);
        let c = random_matrix(rng, p, n);
        let sw = random_psd(rng, n, 0.01) * 0.1;
        let sv = random_psd(rng, p, 0.01) * 0.1;
        let Ok(model) = SystemModel::new(a, b, c, sw, sv) else { continue };
        let Ok(gains) = GainSet::synthesize(&model, &GainWeights::identity(n, m, p)) else { continue };
        let Ok(mm) = mode_matrices(&model, &gains) else { continue };
        return Instance { model, gains, mm };
    }
}

pub fn random_sequence(rng: &mut ChaCha8Rng, max_len: usize) -> SwitchSequence {
    let len = rng.random_range(1..=max_len);
    SwitchSequence::new((0..len).map(|_| rng.random_bool(0.5)).collect()).unwrap()
}

/// Random admissible (instance, sequence) pair.
pub fn random_admissible(rng: &mut ChaCha8Rng, max_len: usize) -> (Instance, SwitchSequence) {
    loop {
        let inst = random_instance(rng);
        for _ in 0..20 {
            let s = random_sequence(rng, max_len);
            if let Ok(r) = admissibility(&s, &inst.mm) {
                if r.admissible {
                    return (inst, s);
                }
            }
        }
    }
}

/// Oracle check: Lyapunov solve against the Kronecker system.
pub fn lyapunov_oracle_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=8);
            let rho = rng.random_range(0.0..0.95);
            let f = random_with_radius(&mut rng, n, rho);
            let w = random_psd(&mut rng, n, 0.0);
            let x = sensact_core::linalg::solve_discrete_lyapunov(&f, &w).unwrap();
            let oracle = kronecker_lyapunov(&f, &w);
            (&x - &oracle).abs().max() / (1.0 + oracle.abs().max())
        })
        .collect()
}

/// Oracle check: DARE against the scalar closed form, and against the
/// same closed form on decoupled diagonal systems.
pub fn dare_oracle_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let n = if i % 2 == 0 { 1 } else { rng.random_range(2..=5) };
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.random_range(0.2..2.0);
                    if rng.random_bool(0.5) { v } else { -v }
                })
                .collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let diag = |v: &[f64]| Matrix::from_diagonal(&Vector::from_column_slice(v));
            let p = sensact_core::linalg::solve_dare(&diag(&a), &diag(&b), &diag(&q), &diag(&r)).unwrap();
            (0..n)
                .map(|j| {
                    let exact = scalar_dare(a[j], b[j], q[j], r[j]);
                    (p[(j, j)] - exact).abs() / (1.0 + exact.abs())
                })
                .chain((0..n).flat_map(|j| (0..n).filter(move |k| *k != j).map(move |k| (j, k))).map(|(j, k)| p[(j, k)].abs()))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Residual of the cyclic recursion `P_{k+1} = Ã_k P_k Ã_kᵀ + R_k` for the
/// steady error covariance, and of the augmented recursion.
pub fn periodic_fixed_point_residual(inst: &Instance, s: &SwitchSequence) -> f64 {
    use sensact_core::covariance::{augmented_matrices, error_noise_term, steady_augmented_cov, steady_error_cov};
    let n = s.len();
    let err = steady_error_cov(s, &inst.mm, &inst.model).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let eta = s.eta(k);
        let a = inst.mm.observer(eta);
        let r = error_noise_term(eta, &inst.mm.l, &inst.model.measurement_noise, &inst.model.process_noise).unwrap();
        let next = a * err.phase(k) * a.transpose() + r;
        let target = err.phase(k + 1);
        worst = worst.max((&next - target).norm() / (1.0 + target.norm()));
    }
    let aug = steady_augmented_cov(s, &inst.model, &inst.mm).unwrap();
    for k in 0..n {
        let mode = augmented_matrices(&inst.model, &inst.gains, s.eta(k)).unwrap();
        let next = &mode.a * aug.joint.phase(k) * mode.a.transpose() + &mode.noise;
        let target = aug.joint.phase(k + 1);
        worst = worst.max((&next - target).norm() / (1.0 + target.norm()));
    }
    worst
}

/// Maximum slack violation of the one-period contraction inequality along a
/// propagated error covariance (positive means violated).
pub fn contraction_violation(inst: &Instance, s: &SwitchSequence, periods: usize, p0: &Matrix) -> f64 {
    use sensact_core::covariance::{contraction_certificate, propagate_error_cov};
    use sensact_core::linalg::spectral_norm;
    let cert = contraction_certificate(s, &inst.mm, &inst.model).unwrap();
    let traj = propagate_error_cov(p0, s, &inst.mm, &inst.model, periods * s.len()).unwrap();
    let q2 = cert.monodromy_norm * cert.monodromy_norm;
    let mut worst = f64::NEG_INFINITY;
    for n in 0..periods {
        let prev = spectral_norm(&traj[n * s.len()]);
        let next = spectral_norm(&traj[(n + 1) * s.len()]);
        assert_eq!(cert.step_holds(prev, next), next <= q2 * prev + cert.gamma + 1e-10 * (1.0 + next));
        worst = worst.max((next - q2 * prev - cert.gamma) / (1.0 + next));
    }
    worst
}
