use crate::error::{Error, Result};
use crate::numkit::{DoubleDouble as Dd, Real};

use super::model::{loss_and_grads, Batch};
use super::params::NetParams;

/// Below this magnitude the comparison switches to absolute error.
pub const ABS_FALLBACK: f64 = 1e-8;

/// Where the largest analytic/numeric disagreement was found.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_error: f64,
    pub matrix_index: usize,
    pub matrix_name: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// Relative error with an absolute fallback for tiny magnitudes.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if denom < ABS_FALLBACK {
        diff
    } else {
        diff / denom
    }
}

/// Compares the analytic gradient against central differences of the loss.
pub fn grad_check<T: Real>(params: &NetParams<T>, batch: &Batch<T>, h: T) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grads(params, batch)?;
    compare_gradients(params, &analytic, batch, h)
}

/// Parameters and batch widened to double-double, one `(w, b)` pair per layer
/// in declaration order.
struct Extended {
    layers: Vec<(usize, usize, Vec<Dd>, Vec<Dd>)>,
    depth: usize,
    branch: Vec<Vec<Dd>>,
    trunk: Vec<Vec<Dd>>,
    target: Vec<Dd>,
}

fn widen<T: Real>(v: T) -> Dd {
    Dd::from_f64(v.to_f64().unwrap_or(f64::NAN))
}

impl Extended {
    fn new<T: Real>(params: &NetParams<T>, batch: &Batch<T>) -> Self {
        let mats = params.matrices();
        let layers = mats
            .chunks(2)
            .map(|wb| {
                (
                    wb[0].rows(),
                    wb[0].cols(),
                    wb[0].as_slice().iter().map(|&v| widen(v)).collect(),
                    wb[1].as_slice().iter().map(|&v| widen(v)).collect(),
                )
            })
            .collect();
        let rows = |m: &crate::numkit::Matrix<T>| {
            (0..m.rows()).map(|r| m.row(r).iter().map(|&v| widen(v)).collect()).collect()
        };
        Self {
            layers,
            depth: params.config().depth,
            branch: rows(&batch.branch),
            trunk: rows(&batch.trunk),
            target: batch.target.iter().map(|&v| widen(v)).collect(),
        }
    }

    /// Parameter slot `(matrix index, flat offset)`.
    fn slot(&mut self, matrix: usize, offset: usize) -> &mut Dd {
        let layer = &mut self.layers[matrix / 2];
        if matrix.is_multiple_of(2) {
            &mut layer.2[offset]
        } else {
            &mut layer.3[offset]
        }
    }

    fn dense(&self, layer: usize, x: &[Dd]) -> Vec<Dd> {
        let (n_in, n_out, w, b) = &self.layers[layer];
        (0..*n_out)
            .map(|j| {
                let mut acc = b[j];
                for i in 0..*n_in {
                    acc = acc + x[i] * w[i * n_out + j];
                }
                acc.tanh()
            })
            .collect()
    }

    fn tower(&self, first: usize, x: &[Dd], u: &[Dd], v: &[Dd]) -> Vec<Dd> {
        let mut h = self.dense(first, x);
        for g in 0..self.depth - 1 {
            let z = self.dense(first + 1 + g, &h);
            h = z.iter().zip(u).zip(v).map(|((&z, &u), &v)| (Dd::ONE - z) * u + z * v).collect();
        }
        self.dense(first + self.depth, &h)
    }

    fn loss(&self) -> Dd {
        let trunk_first = 2 + self.depth + 1;
        let mut total = Dd::ZERO;
        for ((u_in, y_in), &t) in self.branch.iter().zip(&self.trunk).zip(&self.target) {
            let u = self.dense(0, u_in);
            let v = self.dense(1, y_in);
            let hb = self.tower(2, u_in, &u, &v);
            let ht = self.tower(trunk_first, y_in, &u, &v);
            let out = hb.iter().zip(&ht).fold(Dd::ZERO, |acc, (&a, &b)| acc + a * b);
            let r = out - t;
            total = total + r * r;
        }
        total / Dd::from_f64(self.target.len() as f64)
    }
}

/// Central-difference check of a supplied gradient (`analytic`).
///
/// The two loss evaluations per entry run in double-double arithmetic, so the
/// difference quotient at small `h` is limited by truncation rather than by
/// f64 round-off in the loss.
pub fn compare_gradients<T: Real>(
    params: &NetParams<T>,
    analytic: &NetParams<T>,
    batch: &Batch<T>,
    h: T,
) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient check needs a non-empty batch"));
    }
    let names = params.matrix_names();
    let grads = analytic.matrices();
    let mut probe = Extended::new(params, batch);
    let h = widen(h);
    let mut report = GradCheckReport {
        max_error: 0.0,
        matrix_index: 0,
        matrix_name: names[0].clone(),
        row: 0,
        col: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    for (idx, g) in grads.iter().enumerate() {
        let cols = g.cols();
        for offset in 0..g.len() {
            let orig = *probe.slot(idx, offset);
            *probe.slot(idx, offset) = orig + h;
            let plus = probe.loss();
            *probe.slot(idx, offset) = orig - h;
            let minus = probe.loss();
            *probe.slot(idx, offset) = orig;

            let numeric = ((plus - minus) / (h + h)).to_f64();
            let a = g.as_slice()[offset].to_f64().unwrap_or(f64::NAN);
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_error || err.is_nan() {
                report = GradCheckReport {
                    max_error: err,
                    matrix_index: idx,
                    matrix_name: names[idx].clone(),
                    row: offset / cols,
                    col: offset % cols,
                    analytic: a,
                    numeric,
                    entries_checked: report.entries_checked,
                };
            }
        }
    }
    Ok(report)
}
