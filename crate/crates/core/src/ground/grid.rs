use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor grid of surface points, `x1` along the tunnel axis and `x2`
/// transverse, centred on the axis.
///
/// Point `i1 * n_x2 + i2` sits at station `i1` along `x1` and `i2` across.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub n_x1: usize,
    pub n_x2: usize,
    pub length_x1_m: f64,
    pub width_x2_m: f64,
    pub points: Vec<(f64, f64)>,
}

impl SurfaceGrid {
    pub fn tensor(n_x1: usize, n_x2: usize, length_x1_m: f64, width_x2_m: f64) -> Result<Self> {
        if n_x1 < 2 || n_x2 < 2 {
            return Err(Error::invalid(format!("grid needs ≥ 2 stations per axis, got {n_x1}×{n_x2}")));
        }
        if !(length_x1_m > 0.0 && width_x2_m > 0.0) {
            return Err(Error::invalid("grid extents must be positive"));
        }
        let dx1 = length_x1_m / (n_x1 - 1) as f64;
        let dx2 = width_x2_m / (n_x2 - 1) as f64;
        let centre = (n_x2 - 1) as f64 / 2.0;
        let mut points = Vec::with_capacity(n_x1 * n_x2);
        for i1 in 0..n_x1 {
            for i2 in 0..n_x2 {
                points.push((i1 as f64 * dx1, (i2 as f64 - centre) * dx2));
            }
        }
        Ok(Self { n_x1, n_x2, length_x1_m, width_x2_m, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n_x2 + i2
    }

    /// Index of the grid point closest to `(x1, x2)`.
    pub fn nearest(&self, x1: f64, x2: f64) -> usize {
        let d = |p: &(f64, f64)| (p.0 - x1).powi(2) + (p.1 - x2).powi(2);
        (0..self.points.len())
            .min_by(|&a, &b| d(&self.points[a]).total_cmp(&d(&self.points[b])))
            .expect("grid is never empty")
    }

    /// Indices of the points on the `x2 = 0` line, ordered by `x1`.
    pub fn centerline(&self) -> Option<Vec<usize>> {
        (self.n_x2 % 2 == 1).then(|| (0..self.n_x1).map(|i1| self.index(i1, self.n_x2 / 2)).collect())
    }
}

/// The 126-point, 104 m × 80 m monitoring area.
pub fn make_grid() -> SurfaceGrid {
    SurfaceGrid::tensor(14, 9, 104.0, 80.0).expect("default grid is valid")
}

fn spread(n: usize, k: usize, parts: usize) -> usize {
    ((k * (n - 1)) as f64 / parts as f64).round() as usize
}

/// Default 15-sensor layout: five centerline points spread along `x1` plus
/// two five-point transverse arrays at the one-third and two-thirds stations.
pub fn sensor_layout(grid: &SurfaceGrid) -> Result<Vec<usize>> {
    if grid.n_x1 < 5 || grid.n_x2 < 5 || grid.n_x2.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "default sensor layout needs ≥ 5 x1 stations and an odd count ≥ 5 of x2 stations, grid is {}×{}",
            grid.n_x1, grid.n_x2
        )));
    }
    let axis = grid.n_x2 / 2;
    let arrays = [spread(grid.n_x1, 1, 3), spread(grid.n_x1, 2, 3)];
    let mut out: Vec<usize> = (0..5).map(|k| grid.index(spread(grid.n_x1, k, 4), axis)).collect();
    for &i1 in &arrays {
        out.extend((0..5).map(|k| grid.index(i1, spread(grid.n_x2, k, 4))));
    }
    validate_sensors(grid, &out)?;
    Ok(out)
}

/// Checks a sensor list for range and duplicates.
pub fn validate_sensors(grid: &SurfaceGrid, sensors: &[usize]) -> Result<()> {
    if sensors.is_empty() {
        return Err(Error::invalid("sensor layout is empty"));
    }
    if let Some(&bad) = sensors.iter().find(|&&i| i >= grid.len()) {
        return Err(Error::invalid(format!("sensor index {bad} outside grid of {} points", grid.len())));
    }
    let mut sorted = sensors.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("sensor index {} listed twice", w[0])));
    }
    Ok(())
}
