//! Binary switching sequences: irreducible cores, dwell-time counting and
//! sufficient conditions, and exact admissibility of the periodic schedule.
//!
//! A sequence is written as a bitstring with index 0 leftmost; `1` means
//! actuate, `0` means sense.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matrix_power, spectral_radius, Matrix};
use crate::plant::{ModeId, ModeMatrices, ModeRates};

/// `η_0 … η_{N−1}`, repeated N-periodically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SwitchSequence(Vec<bool>);

impl SwitchSequence {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Domain("switching sequence must be nonempty".into()));
        }
        Ok(SwitchSequence(bits))
    }

    /// Word number `index` of length `len`, most significant bit first.
    pub fn from_index(index: u64, len: usize) -> Self {
        assert!((1..=64).contains(&len), "sequence length must be in 1..=64");
        SwitchSequence((0..len).map(|k| (index >> (len - 1 - k)) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// `η_k` of the periodic extension.
    pub fn eta(&self, k: usize) -> bool {
        self.0[k % self.0.len()]
    }

    pub fn actuation_count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|b| *b == self.0[0])
    }

    /// Starts the period at phase `k`.
    pub fn rotate(&self, k: usize) -> Self {
        let n = self.len();
        SwitchSequence((0..n).map(|i| self.0[(i + k) % n]).collect())
    }

    pub fn repeat(&self, times: usize) -> Self {
        SwitchSequence(self.0.repeat(times.max(1)))
    }
}

impl fmt::Display for SwitchSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SwitchSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Parse("empty bitstring".into()));
        }
        let bits = s
            .chars()
            .enumerate()
            .map(|(i, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!(
                    "bitstring may only contain '0' and '1', found {other:?} at position {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchSequence::new(bits)
    }
}

impl Serialize for SwitchSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SwitchSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn proper_divisors(n: usize) -> Vec<usize> {
    (1..n).filter(|d| n % d == 0).collect()
}

/// Shortest prefix whose repetition reproduces `s`.
pub fn irreducible_core(s: &SwitchSequence) -> SwitchSequence {
    let n = s.len();
    let bits = s.bits();
    proper_divisors(n)
        .into_iter()
        .find(|&d| (0..n - d).all(|i| bits[i] == bits[i + d]))
        .map(|d| SwitchSequence(bits[..d].to_vec()))
        .unwrap_or_else(|| s.clone())
}

pub fn is_irreducible(s: &SwitchSequence) -> bool {
    irreducible_core(s).len() == s.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwellSummary {
    /// Sensing steps per period.
    pub n0: usize,
    /// Actuation steps per period.
    pub n1: usize,
    /// Maximal constant runs within the written window (no wrap-around).
    pub ns: usize,
}

pub fn dwell_counts(s: &SwitchSequence) -> DwellSummary {
    let n1 = s.actuation_count();
    let switches = s.bits().windows(2).filter(|w| w[0] != w[1]).count();
    DwellSummary {
        n0: s.len() - n1,
        n1,
        ns: switches + 1,
    }
}

/// Which mode matrices a growth constant is maximized over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthFamily {
    /// `A` and `A + BK`.
    #[default]
    Control,
    /// `A + LC` and `A`.
    Observer,
    All,
}

impl GrowthFamily {
    pub fn members(self) -> &'static [ModeId] {
        match self {
            GrowthFamily::Control => &[ModeId::ControlSense, ModeId::ControlActuate],
            GrowthFamily::Observer => &[ModeId::ObserverSense, ModeId::ObserverActuate],
            GrowthFamily::All => &ModeId::ALL,
        }
    }
}

fn nonzero_rate(mm: &ModeMatrices, id: ModeId) -> Result<f64> {
    let rho = mm.rate(id);
    if rho <= 0.0 {
        return Err(Error::Domain(format!(
            "{} has zero spectral radius; growth constant undefined",
            id.name()
        )));
    }
    Ok(rho)
}

/// `c = max_i ‖Ω_i^{k*}‖_F^{1/k*} / ρ(Ω_i)` over the family.
pub fn growth_constant(mm: &ModeMatrices, kstar: usize, family: GrowthFamily) -> Result<f64> {
    if kstar == 0 {
        return Err(Error::Domain("k* must be at least 1".into()));
    }
    let mut c: f64 = 0.0;
    for &id in family.members() {
        let rho = nonzero_rate(mm, id)?;
        let root = frobenius_norm(&matrix_power(mm.get(id), kstar)).powf(1.0 / kstar as f64);
        c = c.max(root / rho);
    }
    Ok(c)
}

/// Per-matrix `k* = argmax_{1≤k≤max_kstar} ‖Ω^k‖_F^{1/k}` and the resulting
/// constant. Returns `(c, k*)` for the matrix attaining the maximum.
pub fn growth_constant_search(
    mm: &ModeMatrices,
    max_kstar: usize,
    family: GrowthFamily,
) -> Result<(f64, usize)> {
    if max_kstar == 0 {
        return Err(Error::Domain("k* search bound must be at least 1".into()));
    }
    let mut best = (0.0f64, 1usize);
    for &id in family.members() {
        let rho = nonzero_rate(mm, id)?;
        let omega = mm.get(id);
        let mut power = omega.clone();
        let mut local = (frobenius_norm(&power), 1usize);
        for k in 2..=max_kstar {
            power = &power * omega;
            let root = frobenius_norm(&power).powf(1.0 / k as f64);
            if root > local.0 {
                local = (root, k);
            }
        }
        let c = local.0 / rho;
        if c > best.0 {
            best = (c, local.1);
        }
    }
    Ok(best)
}

/// `max_{1≤k≤horizon} ‖Ω^k‖_F / ρ(Ω)^k`: bounds every block of length at most
/// `horizon` by `c·ρ^len`.
pub fn transient_constant(omega: &Matrix, horizon: usize) -> Result<f64> {
    let rho = spectral_radius(omega)?;
    if rho <= 0.0 {
        return Err(Error::Domain("zero spectral radius; transient constant undefined".into()));
    }
    let mut power = Matrix::identity(omega.nrows(), omega.ncols());
    let mut c: f64 = 0.0;
    for k in 1..=horizon.max(1) {
        power = &power * omega;
        c = c.max(frobenius_norm(&power) / rho.powi(k as i32));
    }
    Ok(c)
}

/// How the constants entering the dwell inequalities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DwellMode {
    /// One constant from the control pair with `k* = 1`, used for both
    /// inequalities.
    #[default]
    Paper,
    /// Separate per-family transient constants over the sequence length;
    /// a pass is then a proof of admissibility.
    Rigorous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellConstants {
    pub control: f64,
    pub observer: f64,
}

impl DwellConstants {
    pub fn uniform(c: f64) -> Self {
        DwellConstants {
            control: c,
            observer: c,
        }
    }

    pub fn for_mode(mm: &ModeMatrices, mode: DwellMode, horizon: usize) -> Result<Self> {
        match mode {
            DwellMode::Paper => Ok(Self::uniform(growth_constant(mm, 1, GrowthFamily::Control)?)),
            DwellMode::Rigorous => {
                let family = |f: GrowthFamily| -> Result<f64> {
                    f.members()
                        .iter()
                        .map(|&id| transient_constant(mm.get(id), horizon))
                        .try_fold(0.0f64, |acc, c| Ok(acc.max(c?)))
                };
                Ok(DwellConstants {
                    control: family(GrowthFamily::Control)?,
                    observer: family(GrowthFamily::Observer)?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellCheck {
    pub summary: DwellSummary,
    /// `ns ln c + n0 ln ρ̄0 + n1 ln ρ̄1`
    pub lhs_control: f64,
    /// `ns ln c + n0 ln ρ̃0 + n1 ln ρ̃1` (sensing count on the sensing matrix).
    pub lhs_observer: f64,
    /// Same with the exponents swapped, `ns ln c + n1 ln ρ̃0 + n0 ln ρ̃1`.
    pub lhs_observer_swapped: f64,
    pub constants: DwellConstants,
    pub pass: bool,
}

pub fn dwell_feasible(s: &SwitchSequence, rates: &ModeRates, c: f64) -> Result<DwellCheck> {
    dwell_feasible_with(s, rates, DwellConstants::uniform(c))
}

pub fn dwell_feasible_with(
    s: &SwitchSequence,
    rates: &ModeRates,
    constants: DwellConstants,
) -> Result<DwellCheck> {
    let all = [rates.control[0], rates.control[1], rates.observer[0], rates.observer[1]];
    if all.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain(format!("all spectral radii must be positive, got {all:?}")));
    }
    if !(constants.control > 0.0 && constants.observer > 0.0) {
        return Err(Error::Domain(format!("growth constants must be positive, got {constants:?}")));
    }
    let summary = dwell_counts(s);
    let (n0, n1, ns) = (summary.n0 as f64, summary.n1 as f64, summary.ns as f64);
    let lhs_control = ns * constants.control.ln() + n0 * rates.control[0].ln() + n1 * rates.control[1].ln();
    let lhs_observer = ns * constants.observer.ln() + n0 * rates.observer[0].ln() + n1 * rates.observer[1].ln();
    let lhs_observer_swapped =
        ns * constants.observer.ln() + n1 * rates.observer[0].ln() + n0 * rates.observer[1].ln();
    Ok(DwellCheck {
        summary,
        lhs_control,
        lhs_observer,
        lhs_observer_swapped,
        constants,
        pass: lhs_control < 0.0 && lhs_observer < 0.0,
    })
}

/// One-period products `Ā_{N−1}⋯Ā_0` and `Ã_{N−1}⋯Ã_0` (index 0 applied first).
pub fn monodromy(s: &SwitchSequence, mm: &ModeMatrices) -> (Matrix, Matrix) {
    let n = mm.states();
    let mut control = Matrix::identity(n, n);
    let mut observer = Matrix::identity(n, n);
    for &eta in s.bits() {
        control = mm.control(eta) * &control;
        observer = mm.observer(eta) * &observer;
    }
    (control, observer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub qbar: f64,
    pub qtilde: f64,
    pub admissible: bool,
}

/// Exact periodic admissibility. Fails if a mode matrix used by `s` is
/// nilpotent.
pub fn admissibility(s: &SwitchSequence, mm: &ModeMatrices) -> Result<AdmissibilityReport> {
    for eta in [false, true] {
        if !s.bits().contains(&eta) {
            continue;
        }
        let ids = if eta {
            [ModeId::ControlActuate, ModeId::ObserverActuate]
        } else {
            [ModeId::ControlSense, ModeId::ObserverSense]
        };
        if let Some(id) = ids.into_iter().find(|id| mm.is_nilpotent(*id)) {
            return Err(Error::Nilpotent(id.name()));
        }
    }
    let (control, observer) = monodromy(s, mm);
    let qbar = spectral_radius(&control)?;
    let qtilde = spectral_radius(&observer)?;
    Ok(AdmissibilityReport {
        qbar,
        qtilde,
        admissible: qbar < 1.0 && qtilde < 1.0,
    })
}
