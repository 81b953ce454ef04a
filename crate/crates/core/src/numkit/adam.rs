use crate::error::{Error, Result};

use super::{Matrix, Real};

/// Adam moments for an ordered list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
    pub step: usize,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new<'a, I>(params: I) -> Self
    where
        I: IntoIterator<Item = &'a Matrix<T>>,
    {
        let m: Vec<Matrix<T>> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self { v: m.clone(), m, step: 0, beta1: T::lit(0.9), beta2: T::lit(0.999), eps: T::lit(1e-8) }
    }

    /// One bias-corrected Adam update in place.
    ///
    /// Shapes and finiteness are checked before anything is mutated.
    pub fn update(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>], lr: T) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if lr.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::invalid("adam: learning rate must be > 0"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::invalid(format!(
                    "adam: parameter {i} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let one = T::one();
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].as_slice();
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (((p, &g), m), v) in p.as_mut_slice().iter_mut().zip(g).zip(m).zip(v) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
