use num_complex::Complex64;

use super::grid::GridField;
use super::series::{FourierSeries, Truncation};
use crate::error::{Error, Result};

/// Parameterization `K(theta) = W theta + u(theta)` of a torus in
/// `T^d x R^d x T^n`, with `theta in T^{d+n}`.
///
/// The winding `W` is fixed: the first `d` torus angles wind once around the
/// `x` angles and the last `n` around the `z` angles; the `y` rows have no
/// linear part. Only the periodic part `u` is stored. Angle rows are kept as
/// lifts to `R`, never reduced mod 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusEmbedding {
    d: usize,
    n: usize,
    periodic: FourierSeries,
    rho: f64,
}

impl TorusEmbedding {
    pub fn new(d: usize, n: usize, periodic: FourierSeries, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::DimensionMismatch("d must be at least 1".into()));
        }
        if periodic.rows() != 2 * d + n || periodic.cols() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "periodic part is {}x{}, expected {}x1",
                periodic.rows(),
                periodic.cols(),
                2 * d + n
            )));
        }
        if periodic.truncation().dim() != d + n {
            return Err(Error::DimensionMismatch(format!(
                "truncation has {} axes, expected {}",
                periodic.truncation().dim(),
                d + n
            )));
        }
        if !(rho >= 0.0) {
            return Err(Error::Config(format!("rho must be nonnegative, got {rho}")));
        }
        Ok(Self { d, n, periodic, rho })
    }

    /// `K(theta) = (theta_x, y0, theta_z)`.
    pub fn flat(d: usize, n: usize, trunc: Truncation, y0: &[f64], rho: f64) -> Result<Self> {
        if y0.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "y0 has length {}, expected {d}",
                y0.len()
            )));
        }
        let mut values = vec![0.0; 2 * d + n];
        values[d..2 * d].copy_from_slice(y0);
        let periodic = FourierSeries::constant(trunc, 2 * d + n, 1, &values);
        Self::new(d, n, periodic, rho)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `2d + n`.
    pub fn state_dim(&self) -> usize {
        2 * self.d + self.n
    }

    /// `d + n`.
    pub fn torus_dim(&self) -> usize {
        self.d + self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn truncation(&self) -> &Truncation {
        self.periodic.truncation()
    }

    pub fn periodic(&self) -> &FourierSeries {
        &self.periodic
    }

    pub fn periodic_mut(&mut self) -> &mut FourierSeries {
        &mut self.periodic
    }

    /// Torus angle driving state row `row`, if the row is an angle.
    pub fn winding_axis(&self, row: usize) -> Option<usize> {
        if row < self.d {
            Some(row)
        } else if row >= 2 * self.d {
            Some(row - self.d)
        } else {
            None
        }
    }

    pub fn is_angle_row(&self, row: usize) -> bool {
        self.winding_axis(row).is_some()
    }

    pub fn winding(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.state_dim())
            .map(|row| self.winding_axis(row).map_or(0.0, |a| theta[a]))
            .collect()
    }

    /// Direct summation of `K(theta)`.
    pub fn evaluate(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = self.periodic.eval(theta);
        for (row, w) in self.winding(theta).into_iter().enumerate() {
            u[row] += w;
        }
        u
    }

    /// `K(theta + omega)`; the constant term absorbs `W omega`.
    pub fn shift(&self, omega: &[f64]) -> TorusEmbedding {
        let mut periodic = self.periodic.shift(omega);
        periodic.add_constant(&self.winding(omega));
        TorusEmbedding {
            d: self.d,
            n: self.n,
            periodic,
            rho: self.rho,
        }
    }

    /// `DK` as a `(2d+n) x (d+n)` series including the constant winding.
    pub fn jacobian_series(&self) -> FourierSeries {
        let (rows, cols) = (self.state_dim(), self.torus_dim());
        let trunc = self.truncation().clone();
        let mut jac = FourierSeries::zeros(trunc.clone(), rows, cols);
        for axis in 0..cols {
            let col = self.periodic.derivative(axis);
            for row in 0..rows {
                jac.component_mut(row * cols + axis)
                    .copy_from_slice(col.component(row));
            }
        }
        let zero = vec![0i64; cols];
        for row in 0..rows {
            if let Some(axis) = self.winding_axis(row) {
                let c = jac.coeff(row * cols + axis, &zero);
                jac.set_coeff(row * cols + axis, &zero, c + Complex64::new(1.0, 0.0));
            }
        }
        jac
    }

    /// Column `axis` of `DK` on the base grid.
    pub fn differentiate(&self, axis: usize) -> Result<GridField> {
        if axis >= self.torus_dim() {
            return Err(Error::DimensionMismatch(format!(
                "axis {axis} out of range for a {}-torus",
                self.torus_dim()
            )));
        }
        let jac = self.jacobian_series();
        let col = jac.block(0, self.state_dim(), axis, axis + 1);
        col.to_grid(&self.truncation().base_grid())
    }

    /// Lifted values `K(theta_j)` on the given grid.
    pub fn to_grid(&self, dims: &[usize]) -> Result<GridField> {
        let mut grid = self.periodic.to_grid(dims)?;
        let rows = self.state_dim();
        for p in 0..grid.num_points() {
            let theta = grid.theta(p);
            let w = self.winding(&theta);
            for (v, wi) in grid.point_mut(p).iter_mut().zip(w) {
                *v += wi;
            }
            debug_assert_eq!(grid.point(p).len(), rows);
        }
        Ok(grid)
    }

    /// Analytic norm of the periodic part (winding excluded).
    pub fn analytic_norm(&self, rho: f64) -> Result<f64> {
        self.periodic.analytic_norm(rho)
    }

    /// `K + delta` for a periodic correction on the same truncation.
    pub fn add_periodic(&self, delta: &FourierSeries, scale: f64) -> TorusEmbedding {
        let mut out = self.clone();
        out.periodic.axpy(scale, delta);
        out
    }

    pub fn retruncate(&self, trunc: &Truncation) -> TorusEmbedding {
        TorusEmbedding {
            d: self.d,
            n: self.n,
            periodic: self.periodic.retruncate(trunc),
            rho: self.rho,
        }
    }
}
