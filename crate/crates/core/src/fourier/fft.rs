//! Multi-dimensional FFT on row-major grids, built from rustfft line transforms.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized transform over every axis of a row-major grid.
///
/// `Forward` uses `exp(-2 pi i k j / n)`, `Inverse` uses `exp(+2 pi i k j / n)`.
pub(crate) fn fft_nd(data: &mut [Complex64], dims: &[usize], direction: FftDirection) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total, "grid buffer does not match dims");
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let mut stride = total;
        for &len in dims {
            stride /= len;
            if len == 1 {
                continue;
            }
            let fft = planner.plan_fft(len, direction);
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let block = len * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, value) in line.iter().enumerate() {
                        data[base + i * stride] = *value;
                    }
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_direct_dft_in_two_dimensions() {
        let dims = [4usize, 6usize];
        let total = 24;
        let input: Vec<Complex64> = (0..total)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = input.clone();
        fft_nd(&mut fast, &dims, FftDirection::Forward);
        for k0 in 0..4 {
            for k1 in 0..6 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..4 {
                    for j1 in 0..6 {
                        let phase = -2.0 * PI * ((k0 * j0) as f64 / 4.0 + (k1 * j1) as f64 / 6.0);
                        acc += input[j0 * 6 + j1] * Complex64::from_polar(1.0, phase);
                    }
                }
                assert!((acc - fast[k0 * 6 + k1]).norm() < 1e-12);
            }
        }
    }
}
