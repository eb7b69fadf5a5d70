//! Reference computations written directly from the definitions, without
//! going through the library's FFT, frame or evaluation code.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pkam::fourier::TorusEmbedding;

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
pub const SILVER: f64 = 0.414_213_562_373_095_03;

/// Direct Fourier summation of a torus `K(theta) = W theta + sum c_k e^{2 pi i k.theta}`.
pub struct TorusOracle {
    d: usize,
    n: usize,
    radii: Vec<usize>,
    modes: Vec<Vec<i64>>,
    /// `coeffs[row][mode]`.
    coeffs: Vec<Vec<Complex64>>,
}

impl TorusOracle {
    pub fn new(k: &TorusEmbedding) -> Self {
        let trunc = k.truncation();
        let mut modes = Vec::with_capacity(trunc.num_modes());
        trunc.for_each_mode(|_, m| modes.push(m.to_vec()));
        let coeffs = (0..k.state_dim())
            .map(|row| modes.iter().map(|m| k.periodic().coeff(row, m)).collect())
            .collect();
        Self {
            d: k.d(),
            n: k.n(),
            radii: trunc.radii().to_vec(),
            modes,
            coeffs,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.d + self.n
    }

    fn winding_axis(&self, row: usize) -> Option<usize> {
        if row < self.d {
            Some(row)
        } else if row >= 2 * self.d {
            Some(row - self.d)
        } else {
            None
        }
    }

    /// Per-axis tables `e^{2 pi i j theta_a}` for `|j| <= R_a`.
    fn phases(&self, theta: &[f64]) -> Vec<Vec<Complex64>> {
        self.radii
            .iter()
            .zip(theta)
            .map(|(&r, &t)| {
                (-(r as i64)..=r as i64)
                    .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 * t))
                    .collect()
            })
            .collect()
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        self.eval_with_jacobian(theta).0
    }

    /// `K(theta)` and `DK(theta)` by direct summation.
    pub fn eval_with_jacobian(&self, theta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let r = self.radii.len();
        let dim = self.state_dim();
        let tables = self.phases(theta);
        let mut value = vec![0.0; dim];
        let mut jac = DMatrix::zeros(dim, r);
        for (idx, m) in self.modes.iter().enumerate() {
            let mut e = Complex64::new(1.0, 0.0);
            for (a, &j) in m.iter().enumerate() {
                e *= tables[a][(j + self.radii[a] as i64) as usize];
            }
            for row in 0..dim {
                let c = self.coeffs[row][idx];
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let term = c * e;
                value[row] += term.re;
                for (a, &j) in m.iter().enumerate() {
                    // d/dtheta_a of c e^{2 pi i k.theta} = 2 pi i k_a c e^{...}
                    jac[(row, a)] -= 2.0 * PI * j as f64 * term.im;
                }
            }
        }
        for row in 0..dim {
            if let Some(a) = self.winding_axis(row) {
                value[row] += theta[a];
                jac[(row, a)] += 1.0;
            }
        }
        (value, jac)
    }

    /// Coefficients of `K o T_tau` written out mode by mode.
    pub fn shifted_coeffs(&self, tau: &[f64]) -> Vec<(Vec<i64>, usize, Complex64)> {
        let mut out = Vec::new();
        for (idx, m) in self.modes.iter().enumerate() {
            let phase: f64 = m.iter().zip(tau).map(|(&j, &t)| j as f64 * t).sum();
            let rot = Complex64::from_polar(1.0, 2.0 * PI * phase);
            for row in 0..self.state_dim() {
                let mut c = self.coeffs[row][idx] * rot;
                if m.iter().all(|&j| j == 0) {
                    if let Some(a) = self.winding_axis(row) {
                        c += tau[a];
                    }
                }
                out.push((m.clone(), row, c));
            }
        }
        out
    }
}

/// Coupled standard map written out from its formula:
/// `y' = y + l_y - (K_s / 2 pi) sin 2 pi x`, `x' = x + y' + l_x`,
/// `z' = z + c + l_z + eta cos 2 pi x`.
pub fn coupled_standard(u: &[f64], lambda: &[f64], ks: f64, eta: f64, c: f64) -> Vec<f64> {
    let y1 = u[1] + lambda[1] - ks / (2.0 * PI) * (2.0 * PI * u[0]).sin();
    vec![
        u[0] + y1 + lambda[0],
        y1,
        u[2] + c + lambda[2] + eta * (2.0 * PI * u[0]).cos(),
    ]
}

/// Central differences with step `h` of a map `R^p -> R^q` at `u`.
pub fn central_jacobian(u: &[f64], q: usize, h: f64, map: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(q, u.len());
    for j in 0..u.len() {
        let mut p = u.to_vec();
        let mut m = u.to_vec();
        p[j] += h;
        m[j] -= h;
        let (fp, fm) = (map(&p), map(&m));
        for i in 0..q {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// `[[0, -I], [I, 0]]` on the `(x, y)` block, zero on the kernel.
pub fn standard_j_tilde(d: usize, n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d + n, 2 * d + n);
    for i in 0..d {
        j[(i, d + i)] = -1.0;
        j[(d + i, i)] = 1.0;
    }
    j
}

/// The frame `M = [[X_V, J^{-1} X_V (X_V^T X_V)^{-1}, Z_V], [X_N, 0, Z_N]]`
/// from `DK = [[X_V, Z_V], [X_N, Z_N]]` and the standard `J`.
pub fn frame_from_dk(dk: &DMatrix<f64>, d: usize, n: usize) -> DMatrix<f64> {
    let dim = 2 * d + n;
    let xv = dk.view((0, 0), (2 * d, d)).into_owned();
    let j = standard_j_tilde(d, 0);
    let j_inv = j.clone().try_inverse().expect("J is invertible");
    let gram_inv = (xv.transpose() * &xv).try_inverse().expect("X_V has full rank");
    let w = j_inv * &xv * gram_inv;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (dim, d)).copy_from(&dk.view((0, 0), (dim, d)));
    m.view_mut((0, d), (2 * d, d)).copy_from(&w);
    m.view_mut((0, 2 * d), (dim, n)).copy_from(&dk.view((0, d), (dim, n)));
    m
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
