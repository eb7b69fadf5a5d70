//! The difference equation `v(theta) - v(theta + omega) = h(theta)`, solved
//! mode by mode.

use num_complex::Complex64;

use crate::diophantine::ZERO_DIVISOR;
use crate::error::{Error, Result};
use crate::fourier::{phase_factor, FourierSeries, Truncation};

/// Relative default for the admissible average of the right-hand side.
pub const DEFAULT_AVG_RTOL: f64 = 1e-10;

/// `1 - exp(2 pi i k.omega)` for every mode of a truncation.
#[derive(Debug, Clone)]
pub struct Denominators {
    trunc: Truncation,
    values: Vec<Complex64>,
}

impl Denominators {
    pub fn new(trunc: &Truncation, omega: &[f64]) -> Self {
        assert_eq!(trunc.dim(), omega.len());
        let mut values = vec![Complex64::new(0.0, 0.0); trunc.num_modes()];
        trunc.for_each_mode(|idx, k| {
            let phase: f64 = k.iter().zip(omega).map(|(&a, &w)| a as f64 * w).sum();
            values[idx] = Complex64::new(1.0, 0.0) - phase_factor(phase);
        });
        Self {
            trunc: trunc.clone(),
            values,
        }
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Smallest modulus over the nonzero modes.
    pub fn floor(&self) -> f64 {
        let zero = self.trunc.zero_index();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != zero)
            .map(|(_, d)| d.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct DifferenceSolution {
    /// Zero-average solution.
    pub v: FourierSeries,
    /// `max_k |v_k (1 - e^{2 pi i k.omega}) - (h_k - avg)|`.
    pub residual: f64,
}

/// `(h - avg(h), avg(h))` componentwise.
pub fn remove_average(h: &FourierSeries) -> (FourierSeries, Vec<f64>) {
    let avg = h.average();
    let mut out = h.clone();
    let zero = h.truncation().zero_index();
    for c in 0..out.num_components() {
        out.component_mut(c)[zero] = Complex64::new(0.0, 0.0);
    }
    (out, avg)
}

/// `v - v o T_omega`.
pub fn difference(v: &FourierSeries, omega: &[f64]) -> FourierSeries {
    let mut out = v.clone();
    out.axpy(-1.0, &v.shift(omega));
    out
}

/// Solves `v - v o T_omega = h - avg(h)` with `avg(v) = 0`.
///
/// Fails with `NonzeroAverage` when some component of `avg(h)` exceeds
/// `avg_tolerance` (default `1e-10 ||h||`), and with `ResonantMode` when a
/// needed denominator falls below `1e-14`.
pub fn solve_difference(
    h: &FourierSeries,
    omega: &[f64],
    avg_tolerance: Option<f64>,
) -> Result<DifferenceSolution> {
    let den = Denominators::new(h.truncation(), omega);
    solve_with(h, &den, avg_tolerance)
}

/// As [`solve_difference`] with precomputed denominators.
pub fn solve_with(
    h: &FourierSeries,
    den: &Denominators,
    avg_tolerance: Option<f64>,
) -> Result<DifferenceSolution> {
    if h.truncation() != den.truncation() {
        return Err(Error::ShapeMismatch("denominators built for another truncation".into()));
    }
    let trunc = h.truncation();
    let zero = trunc.zero_index();
    let tol = match avg_tolerance {
        Some(t) => t,
        None => DEFAULT_AVG_RTOL * h.analytic_norm(0.0)?,
    };
    let worst_avg = (0..h.num_components())
        .map(|c| h.component(c)[zero].norm())
        .fold(0.0, f64::max);
    if worst_avg > tol {
        return Err(Error::NonzeroAverage(worst_avg));
    }
    let mut v = FourierSeries::zeros(trunc.clone(), h.rows(), h.cols());
    let mut residual = 0.0f64;
    for c in 0..h.num_components() {
        let src = h.component(c);
        let dest = v.component_mut(c);
        for (idx, (&hk, &dk)) in src.iter().zip(den.values()).enumerate() {
            if idx == zero || hk == Complex64::new(0.0, 0.0) {
                continue;
            }
            if dk.norm() < ZERO_DIVISOR {
                return Err(Error::ResonantMode {
                    k: trunc.mode(idx),
                    divisor: dk.norm(),
                });
            }
            let vk = hk / dk;
            dest[idx] = vk;
            residual = residual.max((vk * dk - hk).norm());
        }
    }
    Ok(DifferenceSolution { v, residual })
}
