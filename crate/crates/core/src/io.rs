//! JSON configuration and model files.
//!
//! Matrices are written as arrays of rows. Configs additionally accept
//! `{"identity": n, "scale": s}` and `{"diag": [..]}`. Floats are written in
//! shortest round-trip form, so a model file read back and written again is
//! byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chance::{BoxConstraint, CovarianceBlock};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::plant::{
    build_cw_continuous, discretize_zoh, mode_matrices, CwParams, GainSet, GainWeights, ModeId,
    ModeMatrices, SystemModel, TargetSpec,
};
use crate::search::{CostWeights, PrefilterMode, SearchOptions};
use crate::sequence::{growth_constant, DwellMode, GrowthFamily};
use crate::sim::SimConfig;

pub const MODEL_FORMAT: &str = "sensact-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Diag {
        diag: Vec<f64>,
    },
    Identity {
        identity: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl MatrixSpec {
    pub fn to_matrix(&self, what: &str) -> Result<Matrix> {
        match self {
            MatrixSpec::Rows(rows) => rows_to_matrix(rows, what),
            MatrixSpec::Diag { diag } => Ok(Matrix::from_diagonal(&Vector::from_vec(diag.clone()))),
            MatrixSpec::Identity { identity, scale } => Ok(Matrix::identity(*identity, *identity) * *scale),
        }
    }
}

impl From<&Matrix> for MatrixSpec {
    fn from(m: &Matrix) -> Self {
        MatrixSpec::Rows(matrix_to_rows(m))
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::Parse(format!(
            "{what}: row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// Clohessy-Wiltshire relative motion, discretized with a zero-order hold.
    Cw(CwParams),
    /// `ẋ = A x + B u`, discretized with a zero-order hold.
    Continuous {
        a: MatrixSpec,
        b: MatrixSpec,
        sample_period: f64,
    },
    Discrete {
        a: MatrixSpec,
        b: MatrixSpec,
        #[serde(default)]
        sample_period: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub process: MatrixSpec,
    pub measurement: MatrixSpec,
}

/// Riccati weights; each defaults to the identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(default)]
    pub control_q: Option<MatrixSpec>,
    #[serde(default)]
    pub control_r: Option<MatrixSpec>,
    #[serde(default)]
    pub observer_q: Option<MatrixSpec>,
    #[serde(default)]
    pub observer_r: Option<MatrixSpec>,
}

/// Cost weights; `R_e` defaults to the identity, `R_x` to zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub r_e: Option<MatrixSpec>,
    #[serde(default)]
    pub r_x: Option<MatrixSpec>,
    #[serde(default)]
    pub r_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default)]
    pub prefilter: PrefilterMode,
    #[serde(default)]
    pub dwell_mode: DwellMode,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub all_lengths: bool,
}

fn default_n_max() -> usize {
    8
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            prefilter: PrefilterMode::default(),
            dwell_mode: DwellMode::default(),
            n_max: default_n_max(),
            all_lengths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceConfig {
    pub delta: f64,
    pub bound: f64,
    pub components: Vec<usize>,
    #[serde(default)]
    pub block: CovarianceBlock,
}

impl ChanceConfig {
    pub fn box_constraint(&self, bound: Option<f64>) -> Result<BoxConstraint> {
        BoxConstraint::uniform(self.components.clone(), bound.unwrap_or(self.bound))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub x_t: Vec<f64>,
    pub u_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub x0_mean: Vec<f64>,
    pub x0_cov: MatrixSpec,
    #[serde(default)]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
}

impl SimSpec {
    pub fn to_config(&self, m: usize) -> Result<SimConfig> {
        let mut cfg = SimConfig::new(
            self.steps,
            self.runs,
            self.seed,
            Vector::from_vec(self.x0_mean.clone()),
            self.x0_cov.to_matrix("sim.x0_cov")?,
            m,
        );
        cfg.xhat0 = self.xhat0.clone().map(Vector::from_vec);
        if let Some(t) = &self.target {
            cfg.target = TargetSpec {
                x_t: Vector::from_vec(t.x_t.clone()),
                u_t: Vector::from_vec(t.u_t.clone()),
            };
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub plant: PlantSpec,
    /// Output matrix; position measurements `[I 0]` when omitted for a CW
    /// plant.
    #[serde(default)]
    pub c: Option<MatrixSpec>,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub gains: GainSpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub chance: Option<ChanceConfig>,
    #[serde(default)]
    pub sim: Option<SimSpec>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn model(&self) -> Result<SystemModel> {
        let (a, b, ts) = match &self.plant {
            PlantSpec::Cw(p) => {
                let (a_c, b_c) = build_cw_continuous(p)?;
                let (a, b) = discretize_zoh(&a_c, &b_c, p.sample_period)?;
                (a, b, Some(p.sample_period))
            }
            PlantSpec::Continuous { a, b, sample_period } => {
                let (a, b) = discretize_zoh(&a.to_matrix("plant.a")?, &b.to_matrix("plant.b")?, *sample_period)?;
                (a, b, Some(*sample_period))
            }
            PlantSpec::Discrete { a, b, sample_period } => {
                (a.to_matrix("plant.a")?, b.to_matrix("plant.b")?, *sample_period)
            }
        };
        let n = a.nrows();
        let c = match (&self.c, &self.plant) {
            (Some(c), _) => c.to_matrix("c")?,
            (None, PlantSpec::Cw(_)) => Matrix::identity(3, 6),
            (None, _) => return Err(Error::Parse("missing output matrix \"c\"".into())),
        };
        let mut model = SystemModel::new(
            a,
            b,
            c,
            self.noise.process.to_matrix("noise.process")?,
            self.noise.measurement.to_matrix("noise.measurement")?,
        )?;
        if let Some(ts) = ts {
            model = model.with_sample_period(ts);
        }
        debug_assert_eq!(model.states(), n);
        Ok(model)
    }

    pub fn gain_weights(&self, model: &SystemModel) -> Result<GainWeights> {
        let (n, m, p) = (model.states(), model.inputs(), model.outputs());
        let id = GainWeights::identity(n, m, p);
        let pick = |spec: &Option<MatrixSpec>, default: Matrix, what: &str| -> Result<Matrix> {
            spec.as_ref().map_or(Ok(default), |s| s.to_matrix(what))
        };
        Ok(GainWeights {
            control_q: pick(&self.gains.control_q, id.control_q, "gains.control_q")?,
            control_r: pick(&self.gains.control_r, id.control_r, "gains.control_r")?,
            observer_q: pick(&self.gains.observer_q, id.observer_q, "gains.observer_q")?,
            observer_r: pick(&self.gains.observer_r, id.observer_r, "gains.observer_r")?,
        })
    }

    /// Model plus synthesized gains.
    pub fn build(&self) -> Result<(SystemModel, GainSet)> {
        let model = self.model()?;
        let gains = GainSet::synthesize(&model, &self.gain_weights(&model)?)?;
        Ok((model, gains))
    }

    pub fn cost_weights(&self, n: usize) -> Result<CostWeights> {
        let w = CostWeights {
            r_e: self.cost.r_e.as_ref().map_or(Ok(Matrix::identity(n, n)), |s| s.to_matrix("cost.r_e"))?,
            r_x: self.cost.r_x.as_ref().map_or(Ok(Matrix::zeros(n, n)), |s| s.to_matrix("cost.r_x"))?,
            r_eta: self.cost.r_eta,
        };
        w.validate(n)?;
        Ok(w)
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            prefilter: self.search.prefilter,
            dwell_mode: self.search.dwell_mode,
            keep_table: false,
            all_lengths: self.search.all_lengths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub sample_period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    pub k: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSummary {
    pub mode: String,
    pub spectral_radius: f64,
    pub frobenius_norm: f64,
    pub nilpotent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSummary {
    pub modes: Vec<ModeSummary>,
    /// Growth constant of the control pair with `k* = 1`.
    pub growth_constant: f64,
}

impl ModelSummary {
    pub fn from_modes(mm: &ModeMatrices) -> Result<Self> {
        Ok(ModelSummary {
            modes: ModeId::ALL
                .iter()
                .map(|&id| ModeSummary {
                    mode: id.name().to_string(),
                    spectral_radius: mm.rate(id),
                    frobenius_norm: mm.norm(id),
                    nilpotent: mm.is_nilpotent(id),
                })
                .collect(),
            growth_constant: growth_constant(mm, 1, GrowthFamily::Control)?,
        })
    }
}

/// Serialized plant, gains and a summary of the four mode matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: ModelSection,
    pub gains: GainSection,
    pub summary: ModelSummary,
}

impl ModelFile {
    pub fn new(model: &SystemModel, gains: &GainSet) -> Result<Self> {
        let mm = mode_matrices(model, gains)?;
        Ok(ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: ModelSection {
                a: matrix_to_rows(&model.a),
                b: matrix_to_rows(&model.b),
                c: matrix_to_rows(&model.c),
                process_noise: matrix_to_rows(&model.process_noise),
                measurement_noise: matrix_to_rows(&model.measurement_noise),
                sample_period: model.sample_period,
            },
            gains: GainSection {
                k: matrix_to_rows(&gains.k),
                l: matrix_to_rows(&gains.l),
            },
            summary: ModelSummary::from_modes(&mm)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model file {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                file.format, file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn system(&self) -> Result<(SystemModel, GainSet)> {
        let m = &self.model;
        let mut model = SystemModel::new(
            rows_to_matrix(&m.a, "model.a")?,
            rows_to_matrix(&m.b, "model.b")?,
            rows_to_matrix(&m.c, "model.c")?,
            rows_to_matrix(&m.process_noise, "model.process_noise")?,
            rows_to_matrix(&m.measurement_noise, "model.measurement_noise")?,
        )?;
        if let Some(ts) = m.sample_period {
            model = model.with_sample_period(ts);
        }
        let gains = GainSet::new(
            &model,
            rows_to_matrix(&self.gains.k, "gains.k")?,
            rows_to_matrix(&self.gains.l, "gains.l")?,
        )?;
        Ok((model, gains))
    }
}
