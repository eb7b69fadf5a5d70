//! Exact presymplectic structure `Omega = d alpha` on `T^d x R^d x T^n`.
//!
//! In matrix form `Omega_u(xi, eta) = <xi, Jt(u) eta>` with `Jt = diag(J, 0)`;
//! the kernel is the `z` directions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, GridField, TorusEmbedding};
use crate::linalg;
use crate::models::MapFamily;

/// Primitive one-form `alpha = a(u) . du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    /// `alpha = sum_i y_i dx_i`.
    YDx,
    /// `a(u) = P u` for a `(2d+n) x (2d+n)` matrix whose angle columns vanish,
    /// so that `a` is a function on the phase space. Then `Jt = P^T - P`.
    Linear(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresymplecticStructure {
    d: usize,
    n: usize,
    j: DMatrix<f64>,
    j_inv: DMatrix<f64>,
    primitive: Primitive,
}

impl PresymplecticStructure {
    /// `J = [[0, -I], [I, 0]]` with `alpha = y dx`.
    pub fn standard(d: usize, n: usize) -> Self {
        let mut j = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            j[(i, d + i)] = -1.0;
            j[(d + i, i)] = 1.0;
        }
        let j_inv = -j.clone();
        Self {
            d,
            n,
            j,
            j_inv,
            primitive: Primitive::YDx,
        }
    }

    /// Custom constant `J` with a primitive that must be compatible with it.
    pub fn new(d: usize, n: usize, j: DMatrix<f64>, primitive: Primitive) -> Result<Self> {
        if j.nrows() != 2 * d || j.ncols() != 2 * d {
            return Err(Error::DimensionMismatch(format!(
                "J is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                2 * d,
                2 * d
            )));
        }
        let skew = (&j + j.transpose()).amax();
        if skew > 1e-12 * j.amax().max(1.0) {
            return Err(Error::Config(format!("J is not skew-symmetric (defect {skew:e})")));
        }
        let (j_inv, cond) = linalg::inverse_with_condition(&j)
            .ok_or_else(|| Error::Config("J is singular".into()))?;
        if cond > 1e12 {
            return Err(Error::Config(format!("J is ill-conditioned (cond {cond:e})")));
        }
        let s = Self {
            d,
            n,
            j,
            j_inv,
            primitive,
        };
        s.check_primitive()?;
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn primitive(&self) -> &Primitive {
        &self.primitive
    }

    /// `J(u)`; constant for every structure built here.
    pub fn j(&self, _u: &[f64]) -> &DMatrix<f64> {
        &self.j
    }

    pub fn j_inv(&self, _u: &[f64]) -> &DMatrix<f64> {
        &self.j_inv
    }

    /// `Jt(u) = diag(J(u), 0)`.
    pub fn j_tilde(&self, u: &[f64]) -> DMatrix<f64> {
        let dim = 2 * self.d + self.n;
        let mut out = DMatrix::zeros(dim, dim);
        out.view_mut((0, 0), (2 * self.d, 2 * self.d))
            .copy_from(self.j(u));
        out
    }

    /// Coefficients `a(u)` of the primitive.
    pub fn primitive_coeffs(&self, u: &[f64]) -> Vec<f64> {
        let dim = 2 * self.d + self.n;
        match &self.primitive {
            Primitive::YDx => {
                let mut a = vec![0.0; dim];
                a[..self.d].copy_from_slice(&u[self.d..2 * self.d]);
                a
            }
            Primitive::Linear(p) => p
                .iter()
                .map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    fn check_primitive(&self) -> Result<()> {
        let dim = 2 * self.d + self.n;
        if let Primitive::Linear(p) = &self.primitive {
            if p.len() != dim || p.iter().any(|r| r.len() != dim) {
                return Err(Error::DimensionMismatch(format!(
                    "primitive matrix must be {dim}x{dim}"
                )));
            }
            let angle_cols = (0..self.d).chain(2 * self.d..dim);
            for c in angle_cols {
                if p.iter().any(|r| r[c] != 0.0) {
                    return Err(Error::Config(format!(
                        "primitive depends on angle coordinate {c}"
                    )));
                }
            }
        }
        let defect = self.exterior_derivative_defect(&vec![0.3; dim], 1e-5);
        if defect > 1e-8 {
            return Err(Error::Config(format!(
                "d(alpha) does not reproduce J (defect {defect:e})"
            )));
        }
        Ok(())
    }

    /// `max |(Da)^T - Da - Jt|` at `u`, with `Da` by central differences.
    pub fn exterior_derivative_defect(&self, u: &[f64], h: f64) -> f64 {
        let dim = 2 * self.d + self.n;
        let mut da = DMatrix::zeros(dim, dim);
        let mut p = u.to_vec();
        for j in 0..dim {
            p[j] = u[j] + h;
            let plus = self.primitive_coeffs(&p);
            p[j] = u[j] - h;
            let minus = self.primitive_coeffs(&p);
            p[j] = u[j];
            for i in 0..dim {
                da[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        (da.transpose() - da - self.j_tilde(u)).amax()
    }
}

/// Pullback `L = DK^T Jt(K) DK` on the base grid of `K`.
#[derive(Debug, Clone)]
pub struct LagrangianDefect {
    pub field: GridField,
    /// Weighted-l1 norm at the torus strip width (an upper bound of the sup).
    pub norm: f64,
    pub sup: f64,
}

pub fn lagrangian_defect(k: &TorusEmbedding, s: &PresymplecticStructure) -> Result<LagrangianDefect> {
    check_dims(k, s)?;
    let dims = k.truncation().base_grid();
    let values = k.to_grid(&dims)?;
    let jac = k.jacobian_series().to_grid(&dims)?;
    let r = k.torus_dim();
    let mut field = GridField::zeros(dims, r, r);
    for p in 0..field.num_points() {
        let dk = jac.matrix_at(p);
        let l = dk.transpose() * s.j_tilde(values.point(p)) * &dk;
        field.set_matrix(p, &l);
    }
    let norm = FourierSeries::from_grid(&field, k.truncation())?.analytic_norm(k.rho())?;
    let sup = field.sup_norm();
    Ok(LagrangianDefect { field, norm, sup })
}

/// Periods of `f_lambda^* alpha - alpha` over the `d + n` coordinate loops
/// `t -> K(t e_i)` of a reference torus, by the trapezoid rule.
pub fn flux(
    f: &dyn MapFamily,
    lambda: &[f64],
    s: &PresymplecticStructure,
    reference: &TorusEmbedding,
    points: usize,
) -> Result<Vec<f64>> {
    check_dims(reference, s)?;
    let r = reference.torus_dim();
    let jac = reference.jacobian_series();
    let mut out = vec![0.0; r];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for q in 0..points {
            let mut theta = vec![0.0; r];
            theta[axis] = q as f64 / points as f64;
            let u = reference.evaluate(&theta);
            let dk = jac.eval(&theta);
            let tangent: Vec<f64> = (0..u.len()).map(|i| dk[i * r + axis]).collect();
            let image = f.eval(&u, lambda);
            let df = f.jacobian(&u, lambda);
            let pushed = &df * nalgebra::DVector::from_column_slice(&tangent);
            let a_image = s.primitive_coeffs(&image);
            let a_base = s.primitive_coeffs(&u);
            let pulled: f64 = a_image.iter().zip(pushed.iter()).map(|(a, v)| a * v).sum();
            let base: f64 = a_base.iter().zip(&tangent).map(|(a, v)| a * v).sum();
            acc += pulled - base;
        }
        *slot = acc / points as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PresymplecticCheck {
    /// `max |Df^T Jt Df - Jt|` over the samples.
    pub residual: f64,
    /// `max |d(x', y') / dz|` over the samples; zero for the triangular form.
    pub structural_block: f64,
    pub samples: usize,
}

impl PresymplecticCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.residual <= tol && self.structural_block <= tol
    }
}

/// Samples `x, z` uniformly on the unit cube and `y` in the declared domain
/// (or `[-1, 1]`).
pub fn verify_presymplectic(
    f: &dyn MapFamily,
    lambda: &[f64],
    s: &PresymplecticStructure,
    samples: usize,
    seed: u64,
) -> PresymplecticCheck {
    let (d, n) = (f.d(), f.n());
    let (lo, hi) = f
        .y_bounds()
        .map(|(lo, hi)| (lo.max(-1.0), hi.min(1.0)))
        .unwrap_or((-1.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual = 0.0f64;
    let mut structural = 0.0f64;
    for _ in 0..samples {
        let u: Vec<f64> = (0..2 * d + n)
            .map(|i| {
                if (d..2 * d).contains(&i) {
                    rng.gen_range(lo..=hi)
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let df = f.jacobian(&u, lambda);
        let image = f.eval(&u, lambda);
        let defect = df.transpose() * s.j_tilde(&image) * &df - s.j_tilde(&u);
        residual = residual.max(defect.amax());
        let block = df.view((0, 2 * d), (2 * d, n));
        structural = structural.max(block.amax());
    }
    PresymplecticCheck {
        residual,
        structural_block: structural,
        samples,
    }
}

fn check_dims(k: &TorusEmbedding, s: &PresymplecticStructure) -> Result<()> {
    if k.d() != s.d || k.n() != s.n {
        return Err(Error::DimensionMismatch(format!(
            "torus has (d, n) = ({}, {}), structure has ({}, {})",
            k.d(),
            k.n(),
            s.d,
            s.n
        )));
    }
    Ok(())
}
