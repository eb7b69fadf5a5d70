//! Phase alignment of two parameterizations of the same invariant torus.
//!
//! Invariant tori with a fixed Diophantine frequency are unique up to a
//! phase: if `K2 = K1 o T_tau` then both solve the same invariance equation.
//! Given `K1`, its frame `M`, and a nearby `K2`, the phase is found by Newton
//! rounds on the normalization
//!
//! ```text
//! avg( [T1; T3](theta) (K2(theta - tau) - K1(theta)) ) = 0,
//! ```
//!
//! where `T1`, `T3` are the `x` and `z` row blocks of `M^{-1}`. The action
//! block is left out: it cannot be moved by a phase and is only reported.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, TorusEmbedding};
use crate::linalg;
use crate::newton::RANK_RTOL;
use crate::reducibility::TangentFrame;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignOptions {
    /// Stop once `||K2 o T_{-tau} - K1||` falls below this.
    pub tolerance: f64,
    pub max_rounds: usize,
    /// Refuse inputs with `||K2 - K1||` above this.
    pub closeness: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_rounds: 30,
            closeness: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Alignment {
    /// Phase of `K2` relative to `K1`: `K2 ~ K1 o T_tau`.
    pub tau: Vec<f64>,
    /// `||K2 o T_{-tau} - K1||` before the first round and after each round.
    pub history: Vec<f64>,
    /// `avg` of the action rows of `M^{-1} (K2 o T_{-tau} - K1)` at the end.
    pub action_offset: Vec<f64>,
}

impl Alignment {
    pub fn residual(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }
}

fn difference(k1: &TorusEmbedding, k2: &TorusEmbedding, tau: &[f64]) -> FourierSeries {
    let back: Vec<f64> = tau.iter().map(|t| -t).collect();
    let mut diff = k2.shift(&back).periodic().clone();
    diff.axpy(-1.0, k1.periodic());
    diff
}

/// `(avg(T D), avg(T DK2(. - tau)))` with `T = M^{-1}` on the frame grid.
fn projected(
    frame: &TangentFrame,
    diff: &FourierSeries,
    k2_back: &TorusEmbedding,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dims = frame.dims();
    let dim = 2 * frame.d + frame.n;
    let r = frame.d + frame.n;
    let dg = diff.to_grid(dims)?;
    let jac = k2_back.jacobian_series().to_grid(dims)?;
    let np = dg.num_points();
    let mut avg_d = DVector::zeros(dim);
    let mut avg_j = DMatrix::zeros(dim, r);
    for p in 0..np {
        let t = frame.m_inv.matrix_at(p);
        avg_d += &t * DVector::from_column_slice(dg.point(p));
        avg_j += &t * jac.matrix_at(p);
    }
    avg_d /= np as f64;
    avg_j /= np as f64;
    Ok((avg_d, avg_j))
}

fn tangential_rows(d: usize, n: usize) -> Vec<usize> {
    (0..d).chain(2 * d..2 * d + n).collect()
}

/// Newton rounds on the phase; see the module docs for the normalization.
///
/// Errors: `TooFar` when the inputs exceed `options.closeness`,
/// `SingularResponse` when the averaged phase Jacobian loses rank, and
/// `NotAligned` when the residual stops decreasing above the tolerance.
pub fn align_phase(
    k1: &TorusEmbedding,
    k2: &TorusEmbedding,
    frame: &TangentFrame,
    options: &AlignOptions,
) -> Result<Alignment> {
    if k1.d() != k2.d() || k1.n() != k2.n() || frame.d != k1.d() || frame.n != k1.n() {
        return Err(Error::DimensionMismatch("tori and frame disagree in (d, n)".into()));
    }
    let (d, n) = (k1.d(), k1.n());
    let r = d + n;
    let k2 = if k2.truncation() == k1.truncation() {
        k2.clone()
    } else {
        k2.retruncate(k1.truncation())
    };
    let rho = k1.rho();
    let rows = tangential_rows(d, n);

    let mut tau = vec![0.0; r];
    let mut diff = difference(k1, &k2, &tau);
    let start = diff.analytic_norm(rho)?;
    if start > options.closeness {
        return Err(Error::TooFar {
            distance: start,
            threshold: options.closeness,
        });
    }
    let mut history = vec![start];
    let mut best = (start, tau.clone());

    for _ in 0..options.max_rounds {
        if best.0 <= options.tolerance {
            break;
        }
        let back: Vec<f64> = tau.iter().map(|t| -t).collect();
        let (avg_d, avg_j) = projected(frame, &diff, &k2.shift(&back))?;
        let b = DMatrix::from_fn(r, r, |i, j| avg_j[(rows[i], j)]);
        let rhs = DVector::from_fn(r, |i, _| avg_d[rows[i]]);
        let rank = linalg::rank(&b, RANK_RTOL);
        if rank < r {
            return Err(Error::SingularResponse { rank });
        }
        // D(tau + dtau) ~ D(tau) - DK2(. - tau) dtau
        let (step, _) = linalg::solve_linear(&b, &rhs, RANK_RTOL);
        let trial: Vec<f64> = tau.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
        let trial_diff = difference(k1, &k2, &trial);
        let res = trial_diff.analytic_norm(rho)?;
        history.push(res);
        if !(res < best.0) {
            break;
        }
        tau = trial;
        diff = trial_diff;
        best = (res, tau.clone());
    }

    if best.0 > options.tolerance {
        return Err(Error::NotAligned { residual: best.0 });
    }
    let back: Vec<f64> = tau.iter().map(|t| -t).collect();
    let (avg_d, _) = projected(frame, &diff, &k2.shift(&back))?;
    Ok(Alignment {
        tau,
        history,
        action_offset: (d..2 * d).map(|i| avg_d[i]).collect(),
    })
}
