//! Exhaustive search over periodic switching sequences of a given length.
//!
//! Words are enumerated as the integers `0 … 2^N − 1`, most significant bit
//! first, reduced to their irreducible cores and each distinct core is
//! certified and costed once. Results are cached across calls.

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{steady_augmented_cov, steady_error_cov, PeriodicCovariance};
use crate::error::{Error, Result};
use crate::linalg::{ensure_psd, ensure_shape, Matrix};
use crate::plant::{ModeMatrices, SystemModel};
use crate::sequence::{
    admissibility, dwell_feasible_with, irreducible_core, AdmissibilityReport, DwellConstants,
    DwellMode, SwitchSequence,
};

/// Relative tolerance under which two costs are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `J = (1/N) Σ_k Tr(R_e P_k) + Tr(R_x P_{x,k}) + r_η η_k`
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub r_e: Matrix,
    pub r_x: Matrix,
    pub r_eta: f64,
}

impl CostWeights {
    /// `R_e = I`, `R_x = 0`, `r_η = 0`.
    pub fn error_trace(n: usize) -> Self {
        CostWeights {
            r_e: Matrix::identity(n, n),
            r_x: Matrix::zeros(n, n),
            r_eta: 0.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        ensure_shape(&self.r_e, n, n, "cost weights: R_e")?;
        ensure_shape(&self.r_x, n, n, "cost weights: R_x")?;
        ensure_psd(&self.r_e, "cost weights: R_e")?;
        ensure_psd(&self.r_x, "cost weights: R_x")?;
        if !(self.r_eta >= 0.0) || !self.r_eta.is_finite() {
            return Err(Error::Domain(format!("actuation penalty must be nonnegative, got {}", self.r_eta)));
        }
        Ok(())
    }

    fn uses_state(&self) -> bool {
        self.r_x.iter().any(|v| *v != 0.0)
    }

    fn uses_error(&self) -> bool {
        self.r_e.iter().any(|v| *v != 0.0)
    }
}

/// Cost of `s` given its steady phases. `steady_state` may be omitted when
/// `R_x = 0`.
pub fn sequence_cost(
    s: &SwitchSequence,
    steady_err: &PeriodicCovariance,
    steady_state: Option<&PeriodicCovariance>,
    w: &CostWeights,
) -> Result<f64> {
    let n = s.len();
    if steady_err.period() != n {
        return Err(Error::dim("sequence_cost: error covariance phases", n, steady_err.period()));
    }
    if let Some(st) = steady_state {
        if st.period() != n {
            return Err(Error::dim("sequence_cost: state covariance phases", n, st.period()));
        }
    } else if w.uses_state() {
        return Err(Error::Precondition("R_x is nonzero but no state covariance was supplied".into()));
    }
    let mut total = 0.0;
    for k in 0..n {
        total += (&w.r_e * steady_err.phase(k)).trace();
        if let Some(st) = steady_state {
            total += (&w.r_x * st.phase(k)).trace();
        }
        if s.eta(k) {
            total += w.r_eta;
        }
    }
    Ok(total / n as f64)
}

/// Role of the dwell-time conditions during the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefilterMode {
    /// Every core is checked exactly.
    Off,
    /// A dwell pass is recorded as an accept; every core is still checked
    /// exactly, and failing cores are never rejected on that basis.
    #[default]
    FastAccept,
    /// Cores failing the dwell conditions are discarded without an exact
    /// check. May lose admissible sequences.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchOptions {
    pub prefilter: PrefilterMode,
    pub dwell_mode: DwellMode,
    /// Keep the per-core table in the result.
    pub keep_table: bool,
    /// `search_up_to` scans every length instead of stopping at the first
    /// feasible one.
    pub all_lengths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefilterVerdict {
    NotRun,
    Accepted,
    /// Dwell pass but the exact check disagrees.
    Contradicted,
    Undecided,
    Rejected,
}

/// Outcome for one irreducible core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreEvaluation {
    pub core: SwitchSequence,
    pub report: Option<AdmissibilityReport>,
    pub admissible: bool,
    pub cost: Option<f64>,
    pub prefilter: PrefilterVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub word: SwitchSequence,
    pub core: SwitchSequence,
    pub cost: f64,
    pub report: AdmissibilityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub enumerated: u64,
    pub distinct_cores: usize,
    /// Cores already present in the cache.
    pub cache_hits: usize,
    pub evaluated: usize,
    pub fast_accepted: usize,
    pub contradictions: usize,
    pub heuristic_rejected: usize,
    pub admissible_cores: usize,
}

impl SearchStats {
    fn absorb(&mut self, other: &SearchStats) {
        self.enumerated += other.enumerated;
        self.distinct_cores += other.distinct_cores;
        self.cache_hits += other.cache_hits;
        self.evaluated += other.evaluated;
        self.fast_accepted += other.fast_accepted;
        self.contradictions += other.contradictions;
        self.heuristic_rejected += other.heuristic_rejected;
        self.admissible_cores += other.admissible_cores;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub lengths: Vec<usize>,
    pub best: Option<Candidate>,
    /// Every enumerated word whose cost ties the optimum.
    pub tie_class: Vec<SwitchSequence>,
    pub stats: SearchStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<CoreEvaluation>>,
}

impl SearchResult {
    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }
}

/// Sequence search bound to one model, gain set and cost. The core cache is
/// shared by every call on the same searcher.
pub struct Searcher<'a> {
    model: &'a SystemModel,
    mm: &'a ModeMatrices,
    weights: CostWeights,
    options: SearchOptions,
    cache: DashMap<SwitchSequence, CoreEvaluation>,
}

impl<'a> Searcher<'a> {
    pub fn new(
        model: &'a SystemModel,
        mm: &'a ModeMatrices,
        weights: CostWeights,
        options: SearchOptions,
    ) -> Result<Self> {
        weights.validate(mm.states())?;
        Ok(Searcher {
            model,
            mm,
            weights,
            options,
            cache: DashMap::new(),
        })
    }

    pub fn cached_cores(&self) -> usize {
        self.cache.len()
    }

    /// Evaluates one core (cached).
    pub fn evaluate(&self, core: &SwitchSequence) -> Result<CoreEvaluation> {
        if let Some(hit) = self.cache.get(core) {
            return Ok(hit.clone());
        }
        let eval = self.evaluate_uncached(core)?;
        Ok(self.cache.entry(core.clone()).or_insert(eval).clone())
    }

    fn evaluate_uncached(&self, core: &SwitchSequence) -> Result<CoreEvaluation> {
        let dwell_pass = match self.options.prefilter {
            PrefilterMode::Off => None,
            _ => {
                let constants = DwellConstants::for_mode(self.mm, self.options.dwell_mode, core.len())?;
                Some(dwell_feasible_with(core, &self.mm.rates, constants)?.pass)
            }
        };
        if self.options.prefilter == PrefilterMode::Heuristic && dwell_pass == Some(false) {
            return Ok(CoreEvaluation {
                core: core.clone(),
                report: None,
                admissible: false,
                cost: None,
                prefilter: PrefilterVerdict::Rejected,
            });
        }
        let report = admissibility(core, self.mm)?;
        let prefilter = match dwell_pass {
            None => PrefilterVerdict::NotRun,
            Some(true) if report.admissible => PrefilterVerdict::Accepted,
            Some(true) => PrefilterVerdict::Contradicted,
            Some(false) => PrefilterVerdict::Undecided,
        };
        let cost = if report.admissible {
            Some(self.cost_of(core)?)
        } else {
            None
        };
        Ok(CoreEvaluation {
            core: core.clone(),
            report: Some(report),
            admissible: report.admissible,
            cost,
            prefilter,
        })
    }

    fn cost_of(&self, core: &SwitchSequence) -> Result<f64> {
        if self.weights.uses_state() {
            let aug = steady_augmented_cov(core, self.model, self.mm)?;
            sequence_cost(core, &aug.error, Some(&aug.state), &self.weights)
        } else if self.weights.uses_error() {
            let err = steady_error_cov(core, self.mm, self.model)?;
            sequence_cost(core, &err, None, &self.weights)
        } else {
            let zero = PeriodicCovariance::new(vec![Matrix::zeros(self.mm.states(), self.mm.states()); core.len()])?;
            sequence_cost(core, &zero, None, &self.weights)
        }
    }

    /// All `2^N` words of length `n`.
    pub fn search_fixed_length(&self, n: usize) -> Result<SearchResult> {
        if !(1..=40).contains(&n) {
            return Err(Error::Domain(format!("sequence length must be in 1..=40, got {n}")));
        }
        let words: Vec<(SwitchSequence, SwitchSequence)> = (0..1u64 << n)
            .map(|i| {
                let w = SwitchSequence::from_index(i, n);
                let c = irreducible_core(&w);
                (w, c)
            })
            .collect();

        let mut cores: Vec<SwitchSequence> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (_, c) in &words {
            if seen.insert(c.clone()) {
                cores.push(c.clone());
            }
        }
        let cache_hits = cores.iter().filter(|c| self.cache.contains_key(*c)).count();
        let fresh: Vec<&SwitchSequence> = cores.iter().filter(|c| !self.cache.contains_key(*c)).collect();
        fresh
            .par_iter()
            .map(|c| self.evaluate(c).map(|_| ()))
            .collect::<Result<Vec<()>>>()?;

        let evals: Vec<CoreEvaluation> = cores.iter().map(|c| self.evaluate(c)).collect::<Result<_>>()?;
        let mut stats = SearchStats {
            enumerated: words.len() as u64,
            distinct_cores: cores.len(),
            cache_hits,
            evaluated: fresh.len(),
            ..Default::default()
        };
        for e in &evals {
            match e.prefilter {
                PrefilterVerdict::Accepted => stats.fast_accepted += 1,
                PrefilterVerdict::Contradicted => stats.contradictions += 1,
                PrefilterVerdict::Rejected => stats.heuristic_rejected += 1,
                _ => {}
            }
            if e.admissible {
                stats.admissible_cores += 1;
            }
        }

        let lookup: std::collections::HashMap<&SwitchSequence, &CoreEvaluation> =
            evals.iter().map(|e| (&e.core, e)).collect();
        let scored: Vec<Candidate> = words
            .into_iter()
            .filter_map(|(word, core)| {
                let e = lookup[&core];
                e.cost.map(|cost| Candidate {
                    report: e.report.expect("admissible cores carry a report"),
                    word,
                    core,
                    cost,
                })
            })
            .collect();
        let (best, tie_class) = select_best(scored);
        Ok(SearchResult {
            lengths: vec![n],
            best,
            tie_class,
            stats,
            table: self.options.keep_table.then_some(evals),
        })
    }

    /// Lengths `1 … n_max`, stopping at the first feasible one unless
    /// `all_lengths` is set.
    pub fn search_up_to(&self, n_max: usize) -> Result<SearchResult> {
        if n_max == 0 {
            return Err(Error::Domain("maximum sequence length must be at least 1".into()));
        }
        let mut lengths = Vec::new();
        let mut stats = SearchStats::default();
        let mut table: Option<Vec<CoreEvaluation>> = self.options.keep_table.then(Vec::new);
        let mut pool: Vec<Candidate> = Vec::new();
        let mut ties: Vec<SwitchSequence> = Vec::new();
        for n in 1..=n_max {
            let r = self.search_fixed_length(n)?;
            lengths.push(n);
            stats.absorb(&r.stats);
            if let (Some(t), Some(rt)) = (table.as_mut(), r.table) {
                t.extend(rt.into_iter().filter(|e| e.core.len() == n));
            }
            if let Some(best) = r.best {
                pool.push(best);
                ties.extend(r.tie_class);
                if !self.options.all_lengths {
                    break;
                }
            }
        }
        let (best, _) = select_best(pool);
        let tie_class = match &best {
            Some(b) => {
                let mut t: Vec<SwitchSequence> = ties
                    .into_iter()
                    .filter(|w| {
                        let c = irreducible_core(w);
                        self.cache
                            .get(&c)
                            .and_then(|e| e.cost)
                            .is_some_and(|j| costs_tie(j, b.cost))
                    })
                    .collect();
                t.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
                t.dedup();
                t
            }
            None => Vec::new(),
        };
        Ok(SearchResult {
            lengths,
            best,
            tie_class,
            stats,
            table,
        })
    }
}

pub fn costs_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Minimum cost, then shorter core, then lexicographically smallest word.
fn select_best(scored: Vec<Candidate>) -> (Option<Candidate>, Vec<SwitchSequence>) {
    let Some(min) = scored.iter().map(|c| c.cost).min_by(f64::total_cmp) else {
        return (None, Vec::new());
    };
    let mut tied: Vec<Candidate> = scored.into_iter().filter(|c| costs_tie(c.cost, min)).collect();
    tied.sort_by(|a, b| {
        a.core
            .len()
            .cmp(&b.core.len())
            .then_with(|| a.word.len().cmp(&b.word.len()))
            .then_with(|| a.word.cmp(&b.word))
    });
    let class = tied.iter().map(|c| c.word.clone()).collect();
    (tied.into_iter().next(), class)
}

pub fn search_fixed_length(
    n: usize,
    model: &SystemModel,
    mm: &ModeMatrices,
    w: &CostWeights,
    options: SearchOptions,
) -> Result<SearchResult> {
    Searcher::new(model, mm, w.clone(), options)?.search_fixed_length(n)
}

pub fn search_up_to(
    n_max: usize,
    model: &SystemModel,
    mm: &ModeMatrices,
    w: &CostWeights,
    options: SearchOptions,
) -> Result<SearchResult> {
    Searcher::new(model, mm, w.clone(), options)?.search_up_to(n_max)
}
