use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::causal::TripletSet;
use crate::error::{Error, Result};
use crate::numkit::{streams, Matrix, RngStream};
use crate::operator_net::{forward_batch, put_u32, put_u64, Batch, Checkpoint, NetConfig, NetParams, Reader};

use super::config::{HistoryEntry, TrainConfig, TrainHistory};
use super::lowfi::{lf_forward, optimise};

const COMPOSITE_MAGIC: &[u8; 7] = b"SFCOMP1";
const COMPOSITE_VERSION: u32 = 1;

/// Frozen low-fidelity operator plus a residual correction.
///
/// The residual sees the same branch input and a trunk input of
/// `[g, x1, x2]`, where `g` is the normalised low-fidelity output.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub lf: Arc<Checkpoint>,
    pub residual: Checkpoint,
}

/// The two contributions of a composite prediction, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionParts {
    pub lf_mm: f64,
    pub residual_mm: f64,
    /// Always `lf_mm + residual_mm`.
    pub total_mm: f64,
}

fn residual_config(lf: &Checkpoint, width: usize, depth: usize) -> NetConfig {
    NetConfig {
        branch_input_dim: lf.config.branch_input_dim,
        trunk_input_dim: lf.config.trunk_input_dim + 1,
        width,
        depth,
    }
}

impl CompositeModel {
    pub fn new(lf: Arc<Checkpoint>, residual: Checkpoint) -> Result<Self> {
        let want = residual_config(&lf, residual.config.width, residual.config.depth);
        if residual.config != want {
            return Err(Error::invalid(format!(
                "residual network {:?} does not fit low-fidelity network {:?}",
                residual.config, lf.config
            )));
        }
        if residual.norm != lf.norm {
            return Err(Error::invalid("residual and low-fidelity scaling differ"));
        }
        Ok(Self { lf, residual })
    }

    /// Composite whose residual has all-zero parameters and so predicts exactly zero.
    pub fn zero_residual(lf: Arc<Checkpoint>, width: usize, depth: usize) -> Result<Self> {
        let params = NetParams::zeros(&residual_config(&lf, width, depth))?;
        let residual = Checkpoint::new(params, lf.norm);
        Ok(Self { lf, residual })
    }

    pub fn n_steps(&self) -> usize {
        self.lf.norm.n_steps
    }

    /// Predictions for dense normalised inputs.
    pub fn predict_normalized(&self, branch: &Matrix<f64>, trunk: &Matrix<f64>) -> Result<Vec<PredictionParts>> {
        let g = lf_forward(&self.lf, branch, trunk)?;
        let r = forward_batch(&self.residual.params, branch, &augment(&g, trunk))?;
        let norm = &self.lf.norm;
        Ok(g.iter()
            .zip(&r)
            .map(|(&g, &r)| {
                let lf_mm = norm.denormalize_settlement(g);
                let residual_mm = norm.denormalize_settlement(r);
                PredictionParts { lf_mm, residual_mm, total_mm: lf_mm + residual_mm }
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let lf = self.lf.to_bytes();
        let res = self.residual.to_bytes();
        let mut out = Vec::with_capacity(32 + lf.len() + res.len());
        out.extend_from_slice(COMPOSITE_MAGIC);
        put_u32(&mut out, COMPOSITE_VERSION);
        for section in [&lf, &res] {
            put_u64(&mut out, section.len() as u64);
            out.extend_from_slice(section);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(COMPOSITE_MAGIC.len())? != COMPOSITE_MAGIC {
            return Err(Error::CorruptCheckpoint("composite: bad magic bytes".into()));
        }
        let version = rd.u32()?;
        if version != COMPOSITE_VERSION {
            return Err(Error::CorruptCheckpoint(format!("composite: version {version} unsupported")));
        }
        let mut section = || -> Result<Checkpoint> {
            let len = rd.u64()? as usize;
            Checkpoint::from_bytes(rd.take(len)?)
        };
        let lf = section()?;
        let residual = section()?;
        if rd.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("composite: {} trailing bytes", bytes.len() - rd.pos)));
        }
        Self::new(Arc::new(lf), residual).map_err(|e| Error::CorruptCheckpoint(format!("composite: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn augment(g: &[f64], trunk: &Matrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(trunk.rows(), trunk.cols() + 1, |r, c| if c == 0 { g[r] } else { trunk.get(r, c - 1) })
}

/// Result of one online refit.
#[derive(Debug, Clone)]
pub struct ResidualRun {
    pub model: CompositeModel,
    pub history: TrainHistory,
    /// Composite-vs-target loss before any residual update, i.e. low-fidelity alone.
    pub initial_loss: f64,
    pub elapsed: Duration,
}

/// Fits a freshly initialised residual to `hf` with the low-fidelity net frozen.
///
/// The composite loss `mean((g + r − s)²)` is minimised as `mean((r − (s − g))²)`.
pub fn train_residual(hf: &TripletSet, lf: Arc<Checkpoint>, cfg: &TrainConfig) -> Result<ResidualRun> {
    let start = Instant::now();
    cfg.validate()?;
    if hf.is_empty() {
        return Err(Error::invalid("empty monitoring set"));
    }
    if hf.branch_dim() != lf.config.branch_input_dim || hf.trunk_dim() != lf.config.trunk_input_dim {
        return Err(Error::invalid(format!(
            "monitoring inputs are {}+{} wide, low-fidelity network takes {}+{}",
            hf.branch_dim(),
            hf.trunk_dim(),
            lf.config.branch_input_dim,
            lf.config.trunk_input_dim
        )));
    }
    let base = hf.full_batch()?;
    let g = lf_forward(&lf, &base.branch, &base.trunk)?;
    let shifted: Vec<f64> = base.target.iter().zip(&g).map(|(s, g)| s - g).collect();
    let initial_loss = shifted.iter().map(|d| d * d).sum::<f64>() / shifted.len() as f64;
    let batch = Batch::new(base.branch, augment(&g, &base.trunk), shifted)?;

    let rcfg = residual_config(&lf, cfg.width, cfg.depth);
    let mut params = NetParams::init(&rcfg, &mut RngStream::new(cfg.seed).derive(streams::INIT))?;
    let mut history = TrainHistory::default();
    optimise(
        &mut params,
        cfg,
        Some(&batch),
        || unreachable!("residual training is full-batch"),
        |iteration, loss, _| {
            history.entries.push(HistoryEntry { iteration, loss, val_r2: None });
            Ok(())
        },
    )?;
    let residual = Checkpoint::new(params, lf.norm);
    Ok(ResidualRun { model: CompositeModel { lf, residual }, history, initial_loss, elapsed: start.elapsed() })
}

/// Composite settlement at one point after step `t_i`.
pub fn predict_composite(
    model: &CompositeModel,
    grouting_kpa: &[f64],
    face_kpa: &[f64],
    t_i: usize,
    point: (f64, f64),
) -> Result<PredictionParts> {
    Ok(predict_field(model, grouting_kpa, face_kpa, t_i, &[point])?[0])
}

/// Composite settlement over `points` after step `t_n`.
pub fn predict_field(
    model: &CompositeModel,
    grouting_kpa: &[f64],
    face_kpa: &[f64],
    t_n: usize,
    points: &[(f64, f64)],
) -> Result<Vec<PredictionParts>> {
    let norm = &model.lf.norm;
    let branch = norm.embed_branch(grouting_kpa, face_kpa, t_n)?;
    let branches = Matrix::from_fn(points.len(), branch.len(), |_, c| branch[c]);
    let trunk: Vec<[f64; 2]> = points.iter().map(|&p| norm.trunk_input(p)).collect();
    if trunk.is_empty() {
        return Ok(Vec::new());
    }
    model.predict_normalized(&branches, &Matrix::from_rows(&trunk)?)
}
