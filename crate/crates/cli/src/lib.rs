//! Command-line pipeline: data generation, offline training, fusion studies,
//! field prediction and the drive-session server.
//!
//! Every command is a plain function here so the binary stays a thin argument
//! parser and the same code paths can be driven from tests.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use tunnelfuse_core::causal::{assemble_lowfi, fit_norm, LowFiSplits};
use tunnelfuse_core::eval::{
    export, export_timings, r2, run_study, Format, StudyContext, StudyKind, StudyReport, StudySpec,
};
use tunnelfuse_core::fidelity::{lf_forward, predict_field, train_lowfi, CompositeModel, LowFiRun, PredictionParts};
use tunnelfuse_core::ground::{gen_lowfi_dataset, read_dataset, write_dataset, LowFiData};
use tunnelfuse_core::operator_net::{load_checkpoint, save_checkpoint, Checkpoint};
use tunnelfuse_core::{Error, Result};
use tunnelfuse_service::{AppState, SiteConfig};

pub use config::{DataConfig, RunConfig, StudyConfig};

/// File stem of the generated low-fidelity dataset.
pub const DATASET_STEM: &str = "lowfi";
/// Checkpoint written by `train-lf`.
pub const CHECKPOINT_FILE: &str = "lf.ckpt";

/// Keeps glibc from returning large training buffers to the kernel after
/// every step; without it about a quarter of training time goes to page
/// faults on fresh mappings.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds and is called before any threads start.
    unsafe {
        const LIMIT: libc::c_int = 1 << 30;
        libc::mallopt(libc::M_MMAP_THRESHOLD, LIMIT);
        libc::mallopt(libc::M_TRIM_THRESHOLD, LIMIT);
    }
}

/// Process exit code for an error: 2 for bad input, 3 for a failed fit.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::DegenerateRange { .. } | Error::CorruptCheckpoint(_) => 2,
        Error::TrainingFailure { .. } | Error::NonFiniteGradient { .. } => 3,
        _ => 1,
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<LowFiData> {
    let spec = cfg.data.scenario_spec(cfg.seed);
    let model = cfg.data.ground_model(cfg.seed)?;
    gen_lowfi_dataset(&spec, &model, cfg.data.n_scenarios, &cfg.data.grid()?)
}

/// Generates the dataset and writes `lowfi.csv` / `lowfi.json` into `dir`.
pub fn gen_data_to(cfg: &RunConfig, dir: &Path) -> Result<LowFiData> {
    let data = gen_data(cfg)?;
    write_dataset(&data, dir, DATASET_STEM)?;
    Ok(data)
}

pub fn load_data(dir: &Path) -> Result<LowFiData> {
    read_dataset(dir, DATASET_STEM)
}

/// Scenario splits of `data` under its own scaling.
pub fn splits(data: &LowFiData) -> Result<LowFiSplits> {
    assemble_lowfi(data, &fit_norm(data)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run: LowFiRun,
    pub test_ids: Vec<usize>,
    /// R² on the held-out scenarios, normalised units.
    pub test_r2: f64,
}

pub fn train_lf(cfg: &RunConfig, data: &LowFiData) -> Result<TrainOutcome> {
    let sp = splits(data)?;
    let run = train_lowfi(&sp.train, Some(&sp.val), &sp.stats, &cfg.lowfi_train())?;
    let test_r2 = held_out_r2(&run.checkpoint, &sp)?;
    Ok(TrainOutcome { run, test_ids: sp.test_ids, test_r2 })
}

pub fn held_out_r2(lf: &Checkpoint, sp: &LowFiSplits) -> Result<f64> {
    let batch = sp.test.full_batch()?;
    r2(&lf_forward(lf, &batch.branch, &batch.trunk)?, &batch.target)
}

/// Trains and writes the checkpoint plus `lf_history.json` into `dir`.
pub fn train_lf_to(cfg: &RunConfig, data: &LowFiData, dir: &Path) -> Result<TrainOutcome> {
    let out = train_lf(cfg, data)?;
    fs::create_dir_all(dir)?;
    save_checkpoint(&out.run.checkpoint, dir.join(CHECKPOINT_FILE))?;
    let summary = serde_json::json!({
        "test_r2": out.test_r2,
        "test_scenarios": out.test_ids,
        "history": out.run.history,
    });
    fs::write(dir.join("lf_history.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(out)
}

pub fn study_spec(cfg: &RunConfig, kind: StudyKind) -> StudySpec {
    let s = &cfg.study;
    let spec = match kind {
        StudyKind::ErrorType => StudySpec::error_type(s.error_type_scenarios),
        StudyKind::ErrorLevel => StudySpec::error_level(s.error_level_scenario),
        StudyKind::MinData => StudySpec::min_data(s.min_data_30, s.min_data_50),
    };
    StudySpec { noise_seed: cfg.seed, residual: cfg.residual_train(), ..spec }
}

pub fn study_context(cfg: &RunConfig, data: &LowFiData, lf: Arc<Checkpoint>) -> Result<StudyContext> {
    if lf.norm.n_steps != data.spec.n_steps {
        return Err(Error::InvalidArgument(format!(
            "checkpoint covers {} steps, dataset has {}",
            lf.norm.n_steps, data.spec.n_steps
        )));
    }
    Ok(StudyContext {
        lf,
        model: data.model,
        scenarios: data.spec,
        grid: data.grid.clone(),
        sensors: cfg.data.sensors()?,
        test_ids: splits(data)?.test_ids,
    })
}

/// Runs one study and writes `<kind>` report files plus `<kind>_timings.csv`.
pub fn study_to(
    cfg: &RunConfig,
    kind: StudyKind,
    data: &LowFiData,
    lf: Arc<Checkpoint>,
    format: Format,
    dir: &Path,
) -> Result<(StudyReport, Vec<PathBuf>)> {
    let ctx = study_context(cfg, data, lf)?;
    let (report, timings) = run_study(&ctx, &study_spec(cfg, kind))?;
    let mut files = export(&report, format, dir, kind.name())?;
    let timing_path = dir.join(format!("{}_timings.csv", kind.name()));
    export_timings(&timings, &timing_path)?;
    files.push(timing_path);
    Ok((report, files))
}

pub fn load_lf(path: &Path) -> Result<Arc<Checkpoint>> {
    Ok(Arc::new(load_checkpoint(path)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldRow {
    pub x1_m: f64,
    pub x2_m: f64,
    pub lf_mm: f64,
    pub residual_mm: f64,
    pub total_mm: f64,
}

/// Field over the configured grid after step `t` (default: the last given step).
///
/// Without a composite file the residual is zero and `total = lf`.
pub fn predict(
    cfg: &RunConfig,
    lf: Arc<Checkpoint>,
    composite: Option<&Path>,
    grouting_kpa: &[f64],
    face_kpa: &[f64],
    t: Option<usize>,
) -> Result<Vec<FieldRow>> {
    let model = match composite {
        Some(p) => {
            let m = CompositeModel::load(p)?;
            if m.lf.to_bytes() != lf.to_bytes() {
                return Err(Error::InvalidArgument(
                    "composite was built on a different low-fidelity checkpoint".into(),
                ));
            }
            m
        }
        None => CompositeModel::zero_residual(lf, 1, 1)?,
    };
    if grouting_kpa.len() != face_kpa.len() {
        return Err(Error::InvalidArgument(format!(
            "{} grouting pressures but {} face pressures",
            grouting_kpa.len(),
            face_kpa.len()
        )));
    }
    let t = t.unwrap_or(grouting_kpa.len());
    if t == 0 || t > grouting_kpa.len() {
        return Err(Error::InvalidArgument(format!(
            "step {t} needs pressures for steps 1..={t}, got {}",
            grouting_kpa.len()
        )));
    }
    let grid = cfg.data.grid()?;
    let parts = predict_field(&model, grouting_kpa, face_kpa, t, &grid.points)?;
    Ok(grid
        .points
        .iter()
        .zip(parts)
        .map(|(&(x1_m, x2_m), PredictionParts { lf_mm, residual_mm, total_mm })| FieldRow {
            x1_m,
            x2_m,
            lf_mm,
            residual_mm,
            total_mm,
        })
        .collect())
}

pub fn write_field(rows: &[FieldRow], format: Format, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Json => {
            let path = dir.join("field.json");
            fs::write(&path, serde_json::to_string_pretty(rows)? + "\n")?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join("field.csv");
            let mut text = String::from("x1_m,x2_m,lf_mm,residual_mm,total_mm\n");
            for r in rows {
                text += &format!("{},{},{},{},{}\n", r.x1_m, r.x2_m, r.lf_mm, r.residual_mm, r.total_mm);
            }
            fs::write(&path, text)?;
            Ok(path)
        }
    }
}

/// Service state with one checkpoint per path, keyed by file stem.
pub fn app_state(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<AppState> {
    let mut map = BTreeMap::new();
    for path in checkpoints {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidArgument(format!("bad checkpoint path {}", path.display())))?
            .to_string();
        let lf = load_lf(path)?;
        if lf.norm.n_steps != cfg.data.n_steps {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {id} covers {} steps, config has {}",
                lf.norm.n_steps, cfg.data.n_steps
            )));
        }
        map.insert(id, lf);
    }
    if map.is_empty() {
        return Err(Error::InvalidArgument("serve needs at least one checkpoint".into()));
    }
    let site = SiteConfig {
        grid: cfg.data.grid()?,
        sensors: cfg.data.sensors()?,
        residual: cfg.residual_train(),
        oracle: cfg.data.ground_model(cfg.seed)?,
    };
    Ok(AppState::new(site, map))
}

/// Parses `"150,148.5,..."`.
pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad pressure {v:?}: {e}"))))
        .collect()
}
