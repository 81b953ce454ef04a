use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ground::{LowFiData, Scenario};
use crate::numkit::Matrix;
use crate::operator_net::{put_f64, put_u32, put_u64, Batch, Reader};

use super::norm::NormStats;

/// One training sample in normalised units.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub branch: Vec<f64>,
    pub trunk: Vec<f64>,
    pub target: f64,
}

/// Index of one sample into the shared branch and trunk tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletRef {
    pub branch: usize,
    pub trunk: usize,
    pub target: f64,
}

/// Triplets stored by reference: every `(scenario, step)` branch vector and
/// every trunk point is kept once.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    branches: Matrix<f64>,
    trunks: Matrix<f64>,
    items: Vec<TripletRef>,
}

const CACHE_MAGIC: &[u8; 7] = b"SFTRIP1";
const CACHE_VERSION: u32 = 1;

impl TripletSet {
    pub fn new(branches: Matrix<f64>, trunks: Matrix<f64>, items: Vec<TripletRef>) -> Result<Self> {
        if let Some(bad) = items.iter().position(|r| r.branch >= branches.rows() || r.trunk >= trunks.rows()) {
            return Err(Error::invalid(format!("triplet {bad} points outside the branch or trunk table")));
        }
        Ok(Self { branches, trunks, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn branch_dim(&self) -> usize {
        self.branches.cols()
    }

    pub fn trunk_dim(&self) -> usize {
        self.trunks.cols()
    }

    pub fn branches(&self) -> &Matrix<f64> {
        &self.branches
    }

    pub fn trunks(&self) -> &Matrix<f64> {
        &self.trunks
    }

    pub fn items(&self) -> &[TripletRef] {
        &self.items
    }

    pub fn targets(&self) -> Vec<f64> {
        self.items.iter().map(|r| r.target).collect()
    }

    pub fn triplet(&self, i: usize) -> Triplet {
        let r = self.items[i];
        Triplet {
            branch: self.branches.row(r.branch).to_vec(),
            trunk: self.trunks.row(r.trunk).to_vec(),
            target: r.target,
        }
    }

    /// Dense batch for the given sample indices, in that order.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch<f64>> {
        let bi: Vec<usize> = indices.iter().map(|&i| self.items[i].branch).collect();
        let ti: Vec<usize> = indices.iter().map(|&i| self.items[i].trunk).collect();
        let target = indices.iter().map(|&i| self.items[i].target).collect();
        Batch::new(self.branches.gather_rows(&bi), self.trunks.gather_rows(&ti), target)
    }

    pub fn full_batch(&self) -> Result<Batch<f64>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.branches.len() + self.trunks.len()) + 16 * self.items.len());
        out.extend_from_slice(CACHE_MAGIC);
        put_u32(&mut out, CACHE_VERSION);
        for m in [&self.branches, &self.trunks] {
            put_u32(&mut out, m.rows() as u32);
            put_u32(&mut out, m.cols() as u32);
        }
        put_u64(&mut out, self.items.len() as u64);
        for m in [&self.branches, &self.trunks] {
            for &v in m.as_slice() {
                put_f64(&mut out, v);
            }
        }
        for r in &self.items {
            put_u32(&mut out, r.branch as u32);
            put_u32(&mut out, r.trunk as u32);
            put_f64(&mut out, r.target);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Error::CorruptCheckpoint(format!("triplet cache: {m}"));
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(corrupt("bad magic bytes".into()));
        }
        let version = rd.u32()?;
        if version != CACHE_VERSION {
            return Err(corrupt(format!("version {version} unsupported")));
        }
        let shape = [rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize];
        let n_items = rd.u64()? as usize;
        let expected = 8 * (shape[0] * shape[1] + shape[2] * shape[3]) + 16 * n_items;
        if bytes.len() - rd.pos != expected {
            return Err(corrupt(format!("body is {} bytes, header implies {expected}", bytes.len() - rd.pos)));
        }
        let mut read_matrix = |rows: usize, cols: usize| -> Result<Matrix<f64>> {
            let data = (0..rows * cols).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
            Matrix::from_vec(rows, cols, data)
        };
        let branches = read_matrix(shape[0], shape[1])?;
        let trunks = read_matrix(shape[2], shape[3])?;
        let mut items = Vec::with_capacity(n_items);
        for _ in 0..n_items {
            items.push(TripletRef { branch: rd.u32()? as usize, trunk: rd.u32()? as usize, target: rd.f64()? });
        }
        Self::new(branches, trunks, items).map_err(|e| corrupt(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Scenario counts `(train, val, test)` for an 80/10/10 split.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (0.8 * n as f64).round() as usize;
    let val = ((0.1 * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Scaling fitted on the training scenarios of `data`.
pub fn fit_norm(data: &LowFiData) -> Result<NormStats> {
    let (n_train, _, _) = split_counts(data.scenarios.len());
    let settlements =
        data.scenarios[..n_train].iter().flat_map(|s| data.records_of(s.id).iter().map(|r| r.settlement_mm));
    NormStats::fit(
        data.spec.n_steps,
        data.spec.grouting_bounds_kpa,
        data.spec.face_bounds_kpa,
        &data.grid.points,
        settlements,
    )
}

/// Low-fidelity triplets split by whole scenario in id order.
#[derive(Debug, Clone)]
pub struct LowFiSplits {
    pub stats: NormStats,
    pub train: TripletSet,
    pub val: TripletSet,
    pub test: TripletSet,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

fn check_complete(data: &LowFiData, scenario: &Scenario) -> Result<()> {
    let n_t = data.spec.n_steps;
    let n_p = data.grid.len();
    let recs = data.records_of(scenario.id);
    let partial = |what: String| Error::invalid(format!("scenario {} is partial: {what}", scenario.id));
    if scenario.grouting_kpa.len() < n_t || scenario.face_kpa.len() < n_t {
        return Err(partial(format!("pressure history shorter than {n_t} steps")));
    }
    if recs.len() != n_t * n_p {
        return Err(partial(format!("{} of {} records", recs.len(), n_t * n_p)));
    }
    for (k, r) in recs.iter().enumerate() {
        if r.scenario_id != scenario.id || r.t_i != k / n_p + 1 || r.point_index != k % n_p {
            return Err(partial(format!("record {k} out of order")));
        }
    }
    Ok(())
}

fn assemble_scenarios(data: &LowFiData, stats: &NormStats, scenarios: &[Scenario]) -> Result<TripletSet> {
    let n_t = stats.n_steps;
    let n_p = data.grid.len();
    let mut branch_rows = Vec::with_capacity(scenarios.len() * n_t);
    let mut items = Vec::with_capacity(scenarios.len() * n_t * n_p);
    for s in scenarios {
        for t in 1..=n_t {
            branch_rows.push(stats.embed_branch(&s.grouting_kpa, &s.face_kpa, t)?);
        }
    }
    for (si, s) in scenarios.iter().enumerate() {
        for r in data.records_of(s.id) {
            items.push(TripletRef {
                branch: si * n_t + r.t_i - 1,
                trunk: r.point_index,
                target: stats.normalize_settlement(r.settlement_mm),
            });
        }
    }
    let branches =
        if branch_rows.is_empty() { Matrix::zeros(0, stats.branch_dim()) } else { Matrix::from_rows(&branch_rows)? };
    let trunk_rows: Vec<[f64; 2]> = data.grid.points.iter().map(|&p| stats.trunk_input(p)).collect();
    TripletSet::new(branches, Matrix::from_rows(&trunk_rows)?, items)
}

pub fn assemble_lowfi(data: &LowFiData, stats: &NormStats) -> Result<LowFiSplits> {
    stats.validate()?;
    if stats.n_steps != data.spec.n_steps {
        return Err(Error::invalid(format!(
            "scaling built for {} steps, dataset has {}",
            stats.n_steps, data.spec.n_steps
        )));
    }
    if data.records.len() != data.scenarios.len() * data.spec.n_steps * data.grid.len() {
        return Err(Error::invalid(format!(
            "dataset holds {} records, expected {} complete scenarios",
            data.records.len(),
            data.scenarios.len()
        )));
    }
    for s in &data.scenarios {
        check_complete(data, s)?;
    }
    let (n_train, n_val, _) = split_counts(data.scenarios.len());
    let (train, rest) = data.scenarios.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    let ids = |s: &[Scenario]| s.iter().map(|s| s.id).collect::<Vec<_>>();
    Ok(LowFiSplits {
        stats: *stats,
        train: assemble_scenarios(data, stats, train)?,
        val: assemble_scenarios(data, stats, val)?,
        test: assemble_scenarios(data, stats, test)?,
        train_ids: ids(train),
        val_ids: ids(val),
        test_ids: ids(test),
    })
}

/// Monitoring triplets for steps `1..=t_n`.
///
/// `readings[j]` holds the sensor values (mm) of step `j + 1`; a missing
/// value is `NaN` or a short row. Rows past `t_n` are never read.
pub fn assemble_hifi(
    scenario: &Scenario,
    sensors: &[(f64, f64)],
    readings: &[Vec<f64>],
    t_n: usize,
    stats: &NormStats,
) -> Result<TripletSet> {
    if sensors.is_empty() {
        return Err(Error::invalid("no sensors"));
    }
    if t_n == 0 || t_n > stats.n_steps {
        return Err(Error::invalid(format!("step {t_n} outside 1..={}", stats.n_steps)));
    }
    let mut gaps = Vec::new();
    for step in 0..t_n {
        let row = readings.get(step).map(Vec::as_slice).unwrap_or(&[]);
        for k in 0..sensors.len() {
            if !row.get(k).is_some_and(|v| v.is_finite()) {
                gaps.push(format!("step {} sensor {k}", step + 1));
            }
        }
    }
    if !gaps.is_empty() {
        let shown = gaps.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = if gaps.len() > 20 { format!(" and {} more", gaps.len() - 20) } else { String::new() };
        return Err(Error::invalid(format!("missing sensor readings: {shown}{more}")));
    }
    let mut branch_rows = Vec::with_capacity(t_n);
    for t in 1..=t_n {
        branch_rows.push(stats.embed_branch(&scenario.grouting_kpa, &scenario.face_kpa, t)?);
    }
    let trunk_rows: Vec<[f64; 2]> = sensors.iter().map(|&p| stats.trunk_input(p)).collect();
    let mut items = Vec::with_capacity(t_n * sensors.len());
    for (step, row) in readings[..t_n].iter().enumerate() {
        for (k, &v) in row[..sensors.len()].iter().enumerate() {
            items.push(TripletRef { branch: step, trunk: k, target: stats.normalize_settlement(v) });
        }
    }
    TripletSet::new(Matrix::from_rows(&branch_rows)?, Matrix::from_rows(&trunk_rows)?, items)
}
