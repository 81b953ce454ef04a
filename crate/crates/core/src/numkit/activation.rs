use super::{Matrix, Real};

// Odd Taylor coefficients of tanh, x^3 .. x^23.
const TANH_TAYLOR: [f64; 11] = [
    -0.3333333333333333,
    0.13333333333333333,
    -0.05396825396825397,
    0.021869488536155203,
    -0.008863235529902197,
    0.003592128036572481,
    -0.0014558343870513183,
    0.000590027440945586,
    -0.00023912911424355248,
    9.691537956929451e-05,
    -3.927832388331683e-05,
];

// Split of ln 2 whose high part has trailing zero bits.
#[allow(clippy::excessive_precision)]
const LN2_HI: f64 = 6.93147180369123816490e-01;
#[allow(clippy::excessive_precision)]
const LN2_LO: f64 = 1.90821492927058770002e-10;

/// `exp(y)` for `0 ≤ y ≤ 40` in plain arithmetic so that slice loops vectorise.
#[inline(always)]
fn exp_bounded(y: f64) -> f64 {
    // round-to-nearest via the 1.5·2^52 shift
    let shift = 6755399441055744.0;
    let kf = y * std::f64::consts::LOG2_E + shift;
    let k = kf - shift;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6227020800.0;
    for c in [
        1.0 / 479001600.0,
        1.0 / 39916800.0,
        1.0 / 3628800.0,
        1.0 / 362880.0,
        1.0 / 40320.0,
        1.0 / 5040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // the low mantissa bits of `kf` hold k
    p * f64::from_bits(kf.to_bits().wrapping_add(1023) << 52)
}

/// Branch-free `tanh` accurate to a few ulp.
///
/// Small arguments use the odd Taylor series; larger ones `1 − 2 / (e^{2|x|} + 1)`.
/// Beyond `|x| = 20` the result is `±1` in double precision anyway.
#[inline(always)]
pub fn tanh_f64(x: f64) -> f64 {
    let a = x.abs().min(20.0);
    let z = a * a;
    let mut p = TANH_TAYLOR[10];
    for &c in TANH_TAYLOR[..10].iter().rev() {
        p = p * z + c;
    }
    let small = a + a * z * p;
    let large = 1.0 - 2.0 / (exp_bounded(2.0 * a) + 1.0);
    let t = if a < 0.25 { small } else { large };
    if x.is_nan() {
        x
    } else {
        t.copysign(x)
    }
}

/// [`tanh_f64`] over a slice, using 256-bit lanes when the CPU has them.
///
/// Both paths run the same operations in the same order, so results do not
/// depend on the host.
pub fn tanh_slice_f64(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        unsafe { tanh_slice_avx2(xs) };
        return;
    }
    for x in xs {
        *x = tanh_f64(*x);
    }
}

/// Single-precision variant, evaluated in double precision and rounded.
pub fn tanh_slice_f32(xs: &mut [f32]) {
    let mut buf = [0.0f64; 256];
    for chunk in xs.chunks_mut(256) {
        let buf = &mut buf[..chunk.len()];
        for (b, &x) in buf.iter_mut().zip(chunk.iter()) {
            *b = x as f64;
        }
        tanh_slice_f64(buf);
        for (x, &b) in chunk.iter_mut().zip(buf.iter()) {
            *x = b as f32;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_slice_avx2(xs: &mut [f64]) {
    for x in xs {
        *x = tanh_f64(*x);
    }
}

pub fn tanh_act<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let mut y = x.clone();
    tanh_inplace(&mut y);
    y
}

pub fn tanh_inplace<T: Real>(x: &mut Matrix<T>) {
    T::tanh_slice(x.as_mut_slice());
}

/// Derivative of tanh expressed through the activated value `y = tanh(x)`.
pub fn tanh_grad<T: Real>(y: &Matrix<T>) -> Matrix<T> {
    y.map(|v| T::one() - v * v)
}
