use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::causal::{assemble_hifi, calibrate_noise, l2_error, synthesize_hifi, HfSpec};
use crate::error::{Error, Result};
use crate::fidelity::{predict_field, train_residual, CompositeModel, TrainConfig};
use crate::ground::{gen_scenario, GroundModel, Scenario, ScenarioSpec, SurfaceGrid};
use crate::numkit::RngStream;
use crate::operator_net::Checkpoint;

use super::metrics::r2;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    ErrorType,
    ErrorLevel,
    MinData,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::ErrorType => "error-type",
            StudyKind::ErrorLevel => "error-level",
            StudyKind::MinData => "min-data",
        }
    }
}

/// One synthetic monitoring setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub scenario_id: usize,
    /// Scaling factor applied to the simulated settlements.
    pub k: f64,
    /// Target relative L² discrepancy of the readings.
    pub target_level: f64,
}

/// What to run: cases, reconstruction steps and where to track settlement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub cases: Vec<CaseSpec>,
    /// Every case is refitted and evaluated at each of these steps.
    pub steps: Vec<usize>,
    /// Points whose settlement history is reported, m.
    pub tracking_points: Vec<(f64, f64)>,
    pub noise_seed: u64,
    pub residual: TrainConfig,
}

fn case(id: &str, scenario_id: usize, k: f64, target_level: f64) -> CaseSpec {
    CaseSpec { id: id.into(), scenario_id, k, target_level }
}

/// Scaling that leaves half of the squared error budget to noise.
pub fn balanced_k(level: f64) -> f64 {
    1.0 - level / std::f64::consts::SQRT_2
}

/// Tracking points A and B of the default monitoring layout.
pub const TRACK_A: (f64, f64) = (40.0, 0.0);
pub const TRACK_B: (f64, f64) = (64.0, -10.0);

impl StudySpec {
    /// Underestimating, overestimating and unbiased readings at ≈30 %, step 38.
    pub fn error_type(scenarios: [usize; 3]) -> Self {
        Self {
            kind: StudyKind::ErrorType,
            cases: vec![
                case("k<1", scenarios[0], 0.7, 0.30),
                case("k>1", scenarios[1], 1.3, 0.30),
                case("k=1", scenarios[2], 1.0, 0.30),
            ],
            steps: vec![38],
            tracking_points: vec![TRACK_A],
            noise_seed: 0,
            residual: TrainConfig::online(),
        }
    }

    /// 15 / 35 / 55 % readings with `k < 1` on one scenario, step 54.
    pub fn error_level(scenario: usize) -> Self {
        let levels = [0.15, 0.35, 0.55];
        Self {
            kind: StudyKind::ErrorLevel,
            cases: levels
                .iter()
                .map(|&l| case(&format!("level-{:.0}", l * 100.0), scenario, balanced_k(l), l))
                .collect(),
            steps: vec![54],
            tracking_points: vec![TRACK_B],
            noise_seed: 0,
            residual: TrainConfig::online(),
        }
    }

    /// Three error types at 30 % and 50 %, refitted at every step 15..=64.
    pub fn min_data(scenarios_30: [usize; 3], scenarios_50: [usize; 3]) -> Self {
        Self {
            kind: StudyKind::MinData,
            cases: vec![
                case("30-k<1", scenarios_30[0], 0.7, 0.30),
                case("30-k>1", scenarios_30[1], 1.3, 0.30),
                case("30-k=1", scenarios_30[2], 1.0, 0.30),
                case("50-k<1", scenarios_50[0], 0.6, 0.50),
                case("50-k>1", scenarios_50[1], 1.4, 0.50),
                case("50-k=1", scenarios_50[2], 1.0, 0.50),
            ],
            steps: (15..=64).collect(),
            tracking_points: Vec::new(),
            noise_seed: 0,
            residual: TrainConfig::online(),
        }
    }

    pub fn validate(&self, n_steps: usize, test_ids: &[usize]) -> Result<()> {
        if self.cases.is_empty() || self.steps.is_empty() {
            return Err(Error::invalid("study needs at least one case and one step"));
        }
        if let Some(&t) = self.steps.iter().find(|&&t| t == 0 || t > n_steps) {
            return Err(Error::invalid(format!("study step {t} outside 1..={n_steps}")));
        }
        for c in &self.cases {
            if !test_ids.contains(&c.scenario_id) {
                return Err(Error::invalid(format!(
                    "case {} uses scenario {}, which is not in the test split {:?}",
                    c.id, c.scenario_id, test_ids
                )));
            }
            let floor = (1.0 - c.k).abs();
            if c.target_level < floor - 1e-12 {
                return Err(Error::invalid(format!(
                    "case {}: level {} unreachable with k = {}; minimum is {floor}",
                    c.id, c.target_level, c.k
                )));
            }
        }
        self.residual.validate()
    }
}

/// Everything a study needs besides its spec.
#[derive(Debug, Clone)]
pub struct StudyContext {
    pub lf: Arc<Checkpoint>,
    /// Ground model that produced the low-fidelity data; it is the reference.
    pub model: GroundModel,
    pub scenarios: ScenarioSpec,
    pub grid: SurfaceGrid,
    /// Sensor grid indices.
    pub sensors: Vec<usize>,
    pub test_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x1_m: f64,
    pub x2_m: f64,
    pub truth_mm: f64,
    pub lf_mm: f64,
    pub composite_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub t_n: usize,
    pub sigma_mm: f64,
    pub realized_level: f64,
    pub r2: f64,
    pub r2_lf: f64,
    pub max_abs_truth_mm: f64,
    pub max_abs_lf_mm: f64,
    pub max_abs_composite_mm: f64,
    /// Largest reading magnitude at this step.
    pub max_abs_measured_mm: f64,
    pub field: Vec<FieldPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSample {
    pub t_i: usize,
    pub truth_mm: f64,
    pub lf_mm: f64,
    pub composite_mm: f64,
    /// Reading when the point is a sensor and the step is monitored.
    pub measured_mm: Option<f64>,
}

/// Settlement history at one point under the model fitted at the last study step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSeries {
    pub x1_m: f64,
    pub x2_m: f64,
    pub fitted_at: usize,
    pub samples: Vec<TrackingSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: CaseSpec,
    pub steps: Vec<StepResult>,
    pub tracking: Vec<TrackingSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub kind: StudyKind,
    pub cases: Vec<CaseResult>,
}

impl StudyReport {
    pub fn case(&self, id: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.case.id == id)
    }
}

/// Wall time of every residual refit, kept out of the report so that reports
/// stay byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyTimings {
    pub retrains: Vec<(String, usize, Duration)>,
}

impl StudyTimings {
    pub fn total(&self) -> Duration {
        self.retrains.iter().map(|r| r.2).sum()
    }
}

fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Simulated settlement `[step][point]` for the given points.
fn histories(model: &GroundModel, scenario: &Scenario, points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let per_point: Vec<Vec<f64>> = points.iter().map(|&p| model.settlement_history(scenario, p)).collect();
    (0..scenario.n_steps()).map(|t| per_point.iter().map(|h| h[t]).collect()).collect()
}

struct CaseData {
    scenario: Scenario,
    sensor_points: Vec<(f64, f64)>,
    /// Noise-free simulated readings `[step][sensor]`.
    sensor_sl: Vec<Vec<f64>>,
    grid_sl: Vec<Vec<f64>>,
    noise_seed: u64,
}

/// Readings for steps `1..=t_n` at the calibrated noise level.
fn readings(data: &CaseData, case: &CaseSpec, t_n: usize) -> Result<(Vec<Vec<f64>>, f64, f64)> {
    let flat_all: Vec<f64> = data.sensor_sl.iter().flatten().copied().collect();
    let n = t_n * data.sensor_points.len();
    let sigma = calibrate_noise(case.target_level, case.k, &flat_all[..n])?;
    let sh = synthesize_hifi(&flat_all, &HfSpec { k: case.k, sigma_mm: sigma, seed: data.noise_seed })?;
    let realized = l2_error(&sh[..n], &flat_all[..n])?;
    let rows = sh.chunks(data.sensor_points.len()).take(t_n).map(<[f64]>::to_vec).collect();
    Ok((rows, sigma, realized))
}

fn evaluate_step(
    ctx: &StudyContext,
    data: &CaseData,
    case: &CaseSpec,
    t_n: usize,
    cfg: &TrainConfig,
) -> Result<(StepResult, CompositeModel, Vec<Vec<f64>>, Duration)> {
    let (rows, sigma_mm, realized_level) = readings(data, case, t_n)?;
    let hf = assemble_hifi(&data.scenario, &data.sensor_points, &rows, t_n, &ctx.lf.norm)?;
    let run = train_residual(&hf, Arc::clone(&ctx.lf), cfg)?;
    let s = &data.scenario;
    let pred = predict_field(&run.model, &s.grouting_kpa, &s.face_kpa, t_n, &ctx.grid.points)?;
    let truth: Vec<f64> = data.grid_sl[t_n - 1].iter().map(|v| case.k * v).collect();
    let composite: Vec<f64> = pred.iter().map(|p| p.total_mm).collect();
    let lf: Vec<f64> = pred.iter().map(|p| p.lf_mm).collect();
    let field = ctx
        .grid
        .points
        .iter()
        .zip(&pred)
        .zip(&truth)
        .map(|((&(x1_m, x2_m), p), &truth_mm)| FieldPoint {
            x1_m,
            x2_m,
            truth_mm,
            lf_mm: p.lf_mm,
            composite_mm: p.total_mm,
        })
        .collect();
    let result = StepResult {
        t_n,
        sigma_mm,
        realized_level,
        r2: r2(&composite, &truth)?,
        r2_lf: r2(&lf, &truth)?,
        max_abs_truth_mm: max_abs(truth.iter().copied()),
        max_abs_lf_mm: max_abs(lf),
        max_abs_composite_mm: max_abs(composite),
        max_abs_measured_mm: max_abs(rows[t_n - 1].iter().copied()),
        field,
    };
    Ok((result, run.model, rows, run.elapsed))
}

fn tracking(
    ctx: &StudyContext,
    data: &CaseData,
    case: &CaseSpec,
    model: &CompositeModel,
    rows: &[Vec<f64>],
    fitted_at: usize,
    point: (f64, f64),
) -> Result<TrackingSeries> {
    let s = &data.scenario;
    let truth = ctx.model.settlement_history(s, point);
    let sensor = data.sensor_points.iter().position(|&p| p == point);
    let mut samples = Vec::with_capacity(s.n_steps());
    for t_i in 1..=s.n_steps() {
        let p = predict_field(model, &s.grouting_kpa, &s.face_kpa, t_i, &[point])?[0];
        samples.push(TrackingSample {
            t_i,
            truth_mm: case.k * truth[t_i - 1],
            lf_mm: p.lf_mm,
            composite_mm: p.total_mm,
            measured_mm: sensor.and_then(|k| rows.get(t_i - 1).map(|r| r[k])),
        });
    }
    Ok(TrackingSeries { x1_m: point.0, x2_m: point.1, fitted_at, samples })
}

/// Runs every case of `spec`: synthesises readings, refits the residual at
/// each study step and scores the reconstructed field against the scaled,
/// noise-free simulation.
pub fn run_study(ctx: &StudyContext, spec: &StudySpec) -> Result<(StudyReport, StudyTimings)> {
    let n_steps = ctx.lf.norm.n_steps;
    if ctx.scenarios.n_steps != n_steps {
        return Err(Error::invalid(format!(
            "scenarios have {} steps, the low-fidelity network {n_steps}",
            ctx.scenarios.n_steps
        )));
    }
    spec.validate(n_steps, &ctx.test_ids)?;
    let sensor_points: Vec<(f64, f64)> = ctx.sensors.iter().map(|&i| ctx.grid.points[i]).collect();
    let seeds = RngStream::new(spec.noise_seed);

    let mut timings = StudyTimings::default();
    let mut cases = Vec::with_capacity(spec.cases.len());
    for (ci, case) in spec.cases.iter().enumerate() {
        let scenario = gen_scenario(&ctx.scenarios, case.scenario_id)?;
        let data = CaseData {
            sensor_sl: histories(&ctx.model, &scenario, &sensor_points),
            grid_sl: histories(&ctx.model, &scenario, &ctx.grid.points),
            scenario,
            sensor_points: sensor_points.clone(),
            noise_seed: seeds.derive(ci as u64).next_u64(),
        };
        let mut steps = Vec::with_capacity(spec.steps.len());
        let mut last = None;
        for &t_n in &spec.steps {
            let (result, model, rows, elapsed) = evaluate_step(ctx, &data, case, t_n, &spec.residual)?;
            log::info!(
                "{} case {} t={t_n}: r2 {:.4} (lf {:.4}), level {:.3}",
                spec.kind.name(),
                case.id,
                result.r2,
                result.r2_lf,
                result.realized_level
            );
            timings.retrains.push((case.id.clone(), t_n, elapsed));
            steps.push(result);
            last = Some((model, rows, t_n));
        }
        let mut series = Vec::new();
        if let Some((model, rows, t_n)) = &last {
            for &p in &spec.tracking_points {
                series.push(tracking(ctx, &data, case, model, rows, *t_n, p)?);
            }
        }
        cases.push(CaseResult { case: case.clone(), steps, tracking: series });
    }
    Ok((StudyReport { schema_version: REPORT_SCHEMA_VERSION, kind: spec.kind, cases }, timings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_levels() {
        assert!((balanced_k(0.15) - 0.8939).abs() < 1e-4);
        assert!((balanced_k(0.55) - 0.6111).abs() < 1e-4);
    }

    #[test]
    fn default_specs_are_consistent() {
        let ids: Vec<usize> = (91..=100).collect();
        StudySpec::error_type([91, 95, 99]).validate(64, &ids).unwrap();
        StudySpec::error_level(100).validate(64, &ids).unwrap();
        let m = StudySpec::min_data([93, 94, 97], [92, 96, 98]);
        m.validate(64, &ids).unwrap();
        assert_eq!(m.cases.len() * m.steps.len(), 300);
        assert!(StudySpec::error_type([1, 95, 99]).validate(64, &ids).is_err());
        assert!(StudySpec::error_level(100).validate(50, &ids).is_err());
    }
}
