//! Chebyshev chance constraints on the steady periodic state.
//!
//! For each phase the confidence ellipsoid `{x : xᵀP⁻¹x ≤ α²}` with
//! `α = √(n_x/δ)` is subtracted from a box constraint face by face through
//! its support function, so rank-deficient covariances need no inverse.

use serde::{Deserialize, Serialize};

use crate::covariance::{steady_augmented_cov, PeriodicCovariance};
use crate::error::{Error, Result};
use crate::linalg::{ensure_psd, max_sym_eigenvalue, Matrix, Vector};
use crate::plant::{ModeMatrices, SystemModel, TargetSpec};
use crate::covariance::steady_mean;
use crate::sequence::{admissibility, SwitchSequence};

/// `α = √(n_x / δ)`
pub fn chebyshev_alpha(n_x: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("violation budget δ must lie in (0, 1), got {delta}")));
    }
    if n_x == 0 {
        return Err(Error::Domain("constrained dimension must be at least 1".into()));
    }
    Ok((n_x as f64 / delta).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceSpec {
    pub delta: f64,
    pub n_x: usize,
    pub alpha: f64,
}

impl ChanceSpec {
    pub fn new(n_x: usize, delta: f64) -> Result<Self> {
        Ok(ChanceSpec {
            delta,
            n_x,
            alpha: chebyshev_alpha(n_x, delta)?,
        })
    }
}

/// Radius of the smallest origin-centred sphere containing the Chebyshev
/// ellipsoid: `α √λ_max(P)`.
pub fn confidence_radius(p: &Matrix, alpha: f64) -> Result<f64> {
    ensure_psd(p, "confidence_radius: P")?;
    Ok(alpha * max_sym_eigenvalue(p).max(0.0).sqrt())
}

/// Support function of the Chebyshev ellipsoid, `α √(aᵀPa)`.
pub fn ellipsoid_support(p: &Matrix, alpha: f64, direction: &Vector) -> Result<f64> {
    if direction.len() != p.nrows() {
        return Err(Error::dim("ellipsoid_support: direction", p.nrows(), direction.len()));
    }
    if direction.norm() == 0.0 {
        return Err(Error::Domain("support direction must be nonzero".into()));
    }
    ensure_psd(p, "ellipsoid_support: P")?;
    let q = (direction.transpose() * p * direction)[(0, 0)];
    Ok(alpha * q.max(0.0).sqrt())
}

/// Box `|x_i| ≤ b_i` on a subset of the state components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    /// State indices the box acts on.
    pub components: Vec<usize>,
    pub half_widths: Vec<f64>,
}

impl BoxConstraint {
    pub fn uniform(components: Vec<usize>, b: f64) -> Result<Self> {
        let half_widths = vec![b; components.len()];
        let bc = BoxConstraint { components, half_widths };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() != self.half_widths.len() {
            return Err(Error::Domain(
                "box constraint needs one half-width per constrained component".into(),
            ));
        }
        // b = 0 is allowed as a degenerate box; only the strict inequality is
        // required for a meaningful chance constraint.
        if self.half_widths.iter().any(|b| !(*b >= 0.0) || b.is_nan()) {
            return Err(Error::Domain(format!("box half-widths must be nonnegative, got {:?}", self.half_widths)));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    /// True when `x` lies outside the box.
    pub fn violated_by(&self, x: &[f64]) -> bool {
        self.components
            .iter()
            .zip(&self.half_widths)
            .any(|(&i, &b)| x[i].abs() > b)
    }
}

/// Which diagonal block of the augmented covariance is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceBlock {
    /// `[I 0] P̆ [I 0]ᵀ`, the plant state.
    #[default]
    State,
    /// `[0 I] P̆ [0 I]ᵀ`, the estimation error.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChance {
    pub phase: usize,
    /// Bounding-sphere radius of the confidence ellipsoid.
    pub radius: f64,
    /// Per-face `b_i − α √P_ii`.
    pub margins: Vec<f64>,
    pub mean: Vec<f64>,
    /// Exact per-face Pontryagin test.
    pub pass: bool,
    /// Conservative bounding-sphere test.
    pub pass_sphere: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceReport {
    pub spec: ChanceSpec,
    pub block: CovarianceBlock,
    pub phases: Vec<PhaseChance>,
    pub pass: bool,
    pub pass_sphere: bool,
}

impl ChanceReport {
    pub fn min_radius(&self) -> f64 {
        self.phases.iter().map(|p| p.radius).fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.phases.iter().map(|p| p.radius).fold(0.0, f64::max)
    }
}

/// Checks the steady-state condition for each phase against already
/// computed covariances (full state dimension) and means.
pub fn verify_with_covariance(
    covariance: &PeriodicCovariance,
    means: &[Vector],
    bounds: &BoxConstraint,
    delta: f64,
    block: CovarianceBlock,
) -> Result<ChanceReport> {
    bounds.validate()?;
    let n = covariance.phase(0).nrows();
    if let Some(&bad) = bounds.components.iter().find(|&&i| i >= n) {
        return Err(Error::dim("box constraint component", format!("< {n}"), bad));
    }
    if means.len() != covariance.period() {
        return Err(Error::dim("chance: mean phases", covariance.period(), means.len()));
    }
    let spec = ChanceSpec::new(bounds.dimension(), delta)?;
    let sub = covariance.select(&bounds.components);
    let b_min = bounds.half_widths.iter().copied().fold(f64::INFINITY, f64::min);
    let mut phases = Vec::with_capacity(covariance.period());
    for (k, p) in sub.phases().iter().enumerate() {
        if means[k].len() != n {
            return Err(Error::dim("chance: mean", n, means[k].len()));
        }
        let mean: Vec<f64> = bounds.components.iter().map(|&i| means[k][i]).collect();
        let radius = confidence_radius(p, spec.alpha)?;
        let margins: Vec<f64> = bounds
            .half_widths
            .iter()
            .enumerate()
            .map(|(i, b)| b - spec.alpha * p[(i, i)].max(0.0).sqrt())
            .collect();
        let pass = mean.iter().zip(&margins).all(|(mu, m)| mu.abs() <= *m);
        let mean_inf = mean.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let pass_sphere = radius <= b_min - mean_inf;
        phases.push(PhaseChance {
            phase: k,
            radius,
            margins,
            mean,
            pass,
            pass_sphere,
        });
    }
    Ok(ChanceReport {
        spec,
        block,
        pass: phases.iter().all(|p| p.pass),
        pass_sphere: phases.iter().all(|p| p.pass_sphere),
        phases,
    })
}

/// Steady-state chance-constraint verification for an admissible sequence.
/// `means` defaults to the steady periodic mean for `target`.
pub fn verify_chance(
    s: &SwitchSequence,
    model: &SystemModel,
    mm: &ModeMatrices,
    bounds: &BoxConstraint,
    delta: f64,
    means: Option<&[Vector]>,
    target: &TargetSpec,
    block: CovarianceBlock,
) -> Result<ChanceReport> {
    let report = admissibility(s, mm)?;
    if !report.admissible {
        return Err(Error::Precondition(format!(
            "sequence {s} is not admissible (q̄ = {:.6}, q̃ = {:.6})",
            report.qbar, report.qtilde
        )));
    }
    let aug = steady_augmented_cov(s, model, mm)?;
    let cov = match block {
        CovarianceBlock::State => &aug.state,
        CovarianceBlock::Error => &aug.error,
    };
    let owned;
    let means = match (means, block) {
        (Some(m), _) => m,
        (None, CovarianceBlock::State) => {
            owned = steady_mean(s, mm, target)?;
            &owned[..]
        }
        (None, CovarianceBlock::Error) => {
            owned = vec![Vector::zeros(mm.states()); s.len()];
            &owned[..]
        }
    };
    verify_with_covariance(cov, means, bounds, delta, block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{mode_matrices, rendezvous_system};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_vec(v.to_vec()))
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(chebyshev_alpha(3, 0.05).unwrap(), 60f64.sqrt());
        assert_relative_eq!(chebyshev_alpha(3, 0.05).unwrap(), 7.7460, epsilon = 1e-4);
        assert!((chebyshev_alpha(1, 1.0 - 1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert_relative_eq!(chebyshev_alpha(6, 0.05).unwrap(), 120f64.sqrt());
        assert!(chebyshev_alpha(3, 0.0).is_err());
        assert!(chebyshev_alpha(3, 1.0).is_err());
    }

    #[test]
    fn radius_examples() {
        assert_relative_eq!(confidence_radius(&Matrix::identity(3, 3), 2.0).unwrap(), 2.0);
        assert_relative_eq!(confidence_radius(&diag(&[4.0, 1.0]), 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(confidence_radius(&diag(&[1.0, -1.0]), 1.0).is_err());
    }

    #[test]
    fn support_examples() {
        let a = Vector::from_vec(vec![0.6, 0.8]);
        assert_relative_eq!(ellipsoid_support(&Matrix::identity(2, 2), 3.0, &a).unwrap(), 3.0, epsilon = 1e-12);
        let p = diag(&[4.0, 9.0, 0.25]);
        let e1 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_relative_eq!(ellipsoid_support(&p, 1.5, &e1).unwrap(), 1.5 * 3.0, epsilon = 1e-12);
        assert!(ellipsoid_support(&p, 1.5, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn support_matches_boundary_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let g = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let p = &g * g.transpose() + Matrix::identity(3, 3) * 0.05;
            let a = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let alpha = 2.5;
            // boundary points x = α S u with S Sᵀ = P, ‖u‖ = 1
            let s = crate::linalg::psd_sqrt(&p);
            let best = (0..100_000)
                .map(|_| {
                    let u = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                    let u = &u / u.norm();
                    a.dot(&(&s * u * alpha))
                })
                .fold(f64::MIN, f64::max);
            let exact = ellipsoid_support(&p, alpha, &a).unwrap();
            assert!(best <= exact * (1.0 + 1e-12));
            assert!((exact - best) / exact < 0.01, "exact {exact}, sampled {best}");
        }
    }

    #[test]
    fn deterministic_box() {
        let cov = PeriodicCovariance::new(vec![Matrix::zeros(2, 2)]).unwrap();
        let bounds = BoxConstraint::uniform(vec![0, 1], 1.0).unwrap();
        let inside = [Vector::from_vec(vec![0.9, -1.0])];
        assert!(verify_with_covariance(&cov, &inside, &bounds, 0.05, CovarianceBlock::State).unwrap().pass);
        let outside = [Vector::from_vec(vec![1.1, 0.0])];
        assert!(!verify_with_covariance(&cov, &outside, &bounds, 0.05, CovarianceBlock::State).unwrap().pass);
    }

    #[test]
    fn rendezvous_phase_radii() {
        let (model, gains) = rendezvous_system().unwrap();
        let mm = mode_matrices(&model, &gains).unwrap();
        let s: SwitchSequence = "0011".parse().unwrap();
        let origin = TargetSpec::origin(6, 3);
        let b10 = BoxConstraint::uniform(vec![0, 1, 2], 10.0).unwrap();
        let err = verify_chance(&s, &model, &mm, &b10, 0.05, None, &origin, CovarianceBlock::Error).unwrap();
        assert_relative_eq!(err.spec.alpha, 60f64.sqrt());
        assert!((err.max_radius() - 9.54).abs() < 0.1, "{}", err.max_radius());
        assert!(err.pass_sphere && err.pass);
        let b25 = BoxConstraint::uniform(vec![0, 1, 2], 2.5).unwrap();
        let err = verify_chance(&s, &model, &mm, &b25, 0.05, None, &origin, CovarianceBlock::Error).unwrap();
        assert!(!err.pass_sphere);
        // the plant-state block is wider than the error block at every phase
        let st = verify_chance(&s, &model, &mm, &b10, 0.05, None, &origin, CovarianceBlock::State).unwrap();
        assert!(st.min_radius() > err.min_radius());
    }

    #[test]
    fn inadmissible_sequence_is_a_precondition_error() {
        let (model, gains) = rendezvous_system().unwrap();
        let mm = mode_matrices(&model, &gains).unwrap();
        let b = BoxConstraint::uniform(vec![0, 1, 2], 10.0).unwrap();
        let err = verify_chance(&"01".parse().unwrap(), &model, &mm, &b, 0.05, None, &TargetSpec::origin(6, 3), CovarianceBlock::State)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    fn arb_cov() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let g = Matrix::from_vec(3, 3, v);
            &g * g.transpose()
        })
    }

    proptest! {
        #[test]
        fn smaller_delta_never_helps(p in arb_cov(), mu in proptest::collection::vec(-0.5f64..0.5, 3), b in 0.5f64..5.0, d1 in 0.01f64..0.9, shrink in 0.1f64..1.0) {
            let cov = PeriodicCovariance::new(vec![p]).unwrap();
            let means = [Vector::from_vec(mu)];
            let bounds = BoxConstraint::uniform(vec![0, 1, 2], b).unwrap();
            let loose = verify_with_covariance(&cov, &means, &bounds, d1, CovarianceBlock::State).unwrap();
            let tight = verify_with_covariance(&cov, &means, &bounds, d1 * shrink, CovarianceBlock::State).unwrap();
            prop_assert!(!tight.pass || loose.pass);
            prop_assert!(!tight.pass_sphere || loose.pass_sphere);
        }

        #[test]
        fn sphere_implies_faces(p in arb_cov(), b in 0.1f64..8.0) {
            let cov = PeriodicCovariance::new(vec![p]).unwrap();
            let means = [Vector::zeros(3)];
            let bounds = BoxConstraint::uniform(vec![0, 1, 2], b).unwrap();
            let r = verify_with_covariance(&cov, &means, &bounds, 0.05, CovarianceBlock::State).unwrap();
            prop_assert!(!r.pass_sphere || r.pass);
        }

        #[test]
        fn radius_is_rotation_invariant(p in arb_cov(), angle in 0.0f64..6.3) {
            let (c, s) = (angle.cos(), angle.sin());
            let q = Matrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
            let rotated = crate::linalg::symmetrize(&(&q * &p * q.transpose()));
            let r1 = confidence_radius(&p, 2.0).unwrap();
            let r2 = confidence_radius(&rotated, 2.0).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-9 * (1.0 + r1));
        }
    }
}
