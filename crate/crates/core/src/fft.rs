//! Multidimensional FFT over row-major arrays (last axis fastest).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place N-d transform. The inverse is unnormalized (caller divides by the
/// total length).
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(total, data.len());
    let mut planner = FftPlanner::new();
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let n = shape[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        if stride == 1 {
            fft.process(data);
        } else {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let block = n * stride;
            for outer in 0..total / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for k in 0..n {
                        line[k] = data[base + k * stride];
                    }
                    fft.process(&mut line);
                    for k in 0..n {
                        data[base + k * stride] = line[k];
                    }
                }
            }
        }
        stride *= n;
    }
}

/// Signed frequency index for bin k of an n-point transform.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Zero-pads a row-major array of shape `[n; dim]` into `[m; dim]`, placing it
/// in the leading corner.
pub fn pad(values: &[f64], dim: usize, n: usize, m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.pow(dim as u32)];
    for (idx, &v) in values.iter().enumerate() {
        let mut rem = idx;
        let mut target = 0;
        let mut scale = 1;
        for _ in 0..dim {
            let c = rem % n;
            rem /= n;
            target += c * scale;
            scale *= m;
        }
        out[target] = Complex64::new(v, 0.0);
    }
    out
}
