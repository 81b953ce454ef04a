use crate::error::{Error, Result};

use super::{Matrix, Real, RngStream};

/// Glorot-normal weights of shape `fan_in × fan_out`.
///
/// Entries are i.i.d. `N(0, 2 / (fan_in + fan_out))`, drawn row-major from `rng`.
pub fn glorot_normal<T: Real>(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Result<Matrix<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!("glorot_normal needs non-zero fans, got {fan_in}×{fan_out}")));
    }
    let std = glorot_std(fan_in, fan_out);
    Ok(Matrix::from_fn(fan_in, fan_out, |_, _| T::lit(rng.normal(0.0, std))))
}

pub fn glorot_std(fan_in: usize, fan_out: usize) -> f64 {
    (2.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_closed_form() {
        assert!((glorot_std(128, 100) - 0.093_658_581_158_169_3).abs() < 1e-12);
        assert_eq!(glorot_std(1, 1), 1.0);
    }

    #[test]
    fn zero_fan_rejected() {
        let mut rng = RngStream::new(0);
        assert!(glorot_normal::<f64>(0, 3, &mut rng).is_err());
        assert!(glorot_normal::<f64>(3, 0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let a: Matrix<f64> = glorot_normal(5, 4, &mut RngStream::new(3)).unwrap();
        let b: Matrix<f64> = glorot_normal(5, 4, &mut RngStream::new(3)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn sample_moments_match() {
        let (fi, fo) = (128, 100);
        let mut rng = RngStream::new(11);
        let mut xs = Vec::new();
        while xs.len() < 100_000 {
            let m: Matrix<f64> = glorot_normal(fi, fo, &mut rng).unwrap();
            xs.extend_from_slice(m.as_slice());
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = glorot_std(fi, fo);
        assert!(mean.abs() < 0.01 * target, "mean {mean}");
        assert!((std / target - 1.0).abs() < 0.01, "std {std} vs {target}");
    }
}
