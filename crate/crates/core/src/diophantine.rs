//! Small-divisor arithmetic for a rotation vector `omega`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::Truncation;

/// Below this `|l.omega - m|` counts as an exact resonance.
pub const ZERO_DIVISOR: f64 = 1e-14;

/// Rotation vector together with its finite-range Diophantine certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frequency {
    pub omega: Vec<f64>,
    pub sigma: f64,
    pub gamma_estimate: f64,
    pub scan_radius: usize,
    pub worst_l: Vec<i64>,
}

impl Frequency {
    /// Scans `0 < |l|_1 <= radius` and rejects resonant or inadmissible input.
    /// `sigma` defaults to the torus dimension.
    pub fn new(omega: Vec<f64>, sigma: Option<f64>, radius: usize) -> Result<Self> {
        let dim = omega.len();
        if dim == 0 || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("omega must be a nonempty finite vector".into()));
        }
        let sigma = sigma.unwrap_or(dim as f64);
        if sigma < dim as f64 {
            return Err(Error::Config(format!(
                "sigma = {sigma} is not admissible: the Diophantine exponent must be at least the torus dimension {dim}"
            )));
        }
        let scan = scan_divisors(&omega, sigma, radius)?;
        if !(scan.gamma_estimate > 0.0) {
            return Err(Error::ZeroDivisor { l: scan.worst_l });
        }
        Ok(Self {
            omega,
            sigma,
            gamma_estimate: scan.gamma_estimate,
            scan_radius: radius,
            worst_l: scan.worst_l,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivisorScan {
    /// `min |l.omega - m| |l|_1^sigma` over the scanned vectors.
    pub gamma_estimate: f64,
    pub worst_l: Vec<i64>,
    pub worst_m: i64,
    /// The smallest `|1 - exp(2 pi i l.omega)|` with their `l`, ascending.
    pub smallest: Vec<(Vec<i64>, f64)>,
    pub sigma: f64,
    pub radius: usize,
}

const KEEP_SMALLEST: usize = 8;

/// Exhaustive scan over `0 < |l|_1 <= radius`, one representative per `+-l`.
pub fn scan_divisors(omega: &[f64], sigma: f64, radius: usize) -> Result<DivisorScan> {
    if radius == 0 {
        return Err(Error::Config("scan radius must be at least 1".into()));
    }
    let dim = omega.len();
    // split the work on the first coordinate; results merged in order
    let chunks: Vec<Vec<(Vec<i64>, f64, i64)>> = (0..=radius as i64)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let rest = radius - first as usize;
            let mut l = vec![0i64; dim];
            l[0] = first;
            enumerate_tail(&mut l, 1, rest, first == 0, &mut |l| {
                let x: f64 = l.iter().zip(omega).map(|(&a, &w)| a as f64 * w).sum();
                let m = x.round();
                out.push((l.to_vec(), (x - m).abs(), m as i64));
            });
            out
        })
        .collect();

    let mut gamma = f64::INFINITY;
    let mut worst = (vec![0i64; dim], 0i64);
    let mut smallest: Vec<(Vec<i64>, f64)> = Vec::new();
    for (l, dist, m) in chunks.into_iter().flatten() {
        if dist < ZERO_DIVISOR {
            return Err(Error::ZeroDivisor { l });
        }
        let norm: i64 = l.iter().map(|v| v.abs()).sum();
        let g = dist * (norm as f64).powf(sigma);
        if g < gamma {
            gamma = g;
            worst = (l.clone(), m);
        }
        let div = 2.0 * (std::f64::consts::PI * dist).sin();
        insert_smallest(&mut smallest, l, div);
    }
    Ok(DivisorScan {
        gamma_estimate: gamma,
        worst_l: worst.0,
        worst_m: worst.1,
        smallest,
        sigma,
        radius,
    })
}

fn insert_smallest(list: &mut Vec<(Vec<i64>, f64)>, l: Vec<i64>, div: f64) {
    if list.len() == KEEP_SMALLEST && div >= list[KEEP_SMALLEST - 1].1 {
        return;
    }
    let pos = list.partition_point(|(_, v)| *v <= div);
    list.insert(pos, (l, div));
    list.truncate(KEEP_SMALLEST);
}

/// Visits all `l[axis..]` with `|l[axis..]|_1 <= budget`; when `leading_zero`
/// the first nonzero entry must be positive and `l = 0` is skipped.
fn enumerate_tail(
    l: &mut Vec<i64>,
    axis: usize,
    budget: usize,
    leading_zero: bool,
    visit: &mut dyn FnMut(&[i64]),
) {
    if axis == l.len() {
        if !leading_zero {
            visit(l);
        }
        return;
    }
    let b = budget as i64;
    let lo = if leading_zero { 0 } else { -b };
    for v in lo..=b {
        l[axis] = v;
        enumerate_tail(l, axis + 1, budget - v.unsigned_abs() as usize, leading_zero && v == 0, visit);
    }
    l[axis] = 0;
}

/// One-dimensional record denominators: the `l` in `1..=radius` at which
/// `min_{l' <= l} |l' omega - m|` strictly decreases.
pub fn record_denominators(omega: f64, radius: u64) -> Vec<u64> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for l in 1..=radius {
        let x = l as f64 * omega;
        let dist = (x - x.round()).abs();
        if dist < best {
            best = dist;
            out.push(l);
        }
    }
    out
}

/// `|1 - exp(2 pi i x)| = 2 |sin(pi x)|`, reduced first for accuracy.
pub fn divisor(x: f64) -> f64 {
    let r = x - x.round();
    2.0 * (std::f64::consts::PI * r).sin().abs()
}

/// Smallest `|1 - exp(2 pi i k.omega)|` over the nonzero modes of `trunc` and
/// the mode attaining it; `+inf` when there are no nonzero modes.
pub fn divisor_floor(omega: &[f64], trunc: &Truncation) -> (f64, Option<Vec<i64>>) {
    assert_eq!(omega.len(), trunc.dim());
    let zero = trunc.zero_index();
    let mut best = f64::INFINITY;
    let mut arg = None;
    trunc.for_each_mode(|idx, k| {
        // k and -k share the divisor; keep the later one in storage order
        if idx <= zero {
            return;
        }
        let x: f64 = k.iter().zip(omega).map(|(&a, &w)| a as f64 * w).sum();
        let div = divisor(x);
        if div < best {
            best = div;
            arg = Some(k.to_vec());
        }
    });
    (best, arg)
}
