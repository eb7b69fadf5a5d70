use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples of a `rows x cols` matrix field on the uniform product grid
/// `theta_j = j / dims`, stored point-major (row-major inside each point).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: Vec<usize>,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(dims: Vec<usize>, rows: usize, cols: usize) -> Self {
        let points: usize = dims.iter().product();
        Self {
            dims,
            rows,
            cols,
            values: vec![0.0; points * rows * cols],
        }
    }

    /// Builds a field by evaluating `fill(theta, out)` at every grid point.
    pub fn from_fn<F>(dims: Vec<usize>, rows: usize, cols: usize, fill: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let mut field = Self::zeros(dims, rows, cols);
        let comps = rows * cols;
        let dims = field.dims.clone();
        field
            .values
            .par_chunks_mut(comps)
            .enumerate()
            .for_each(|(p, out)| {
                let theta = point_theta(&dims, p);
                fill(&theta, out);
            });
        field
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_components(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn point(&self, p: usize) -> &[f64] {
        let c = self.num_components();
        &self.values[p * c..(p + 1) * c]
    }

    pub fn point_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.num_components();
        &mut self.values[p * c..(p + 1) * c]
    }

    pub fn theta(&self, p: usize) -> Vec<f64> {
        point_theta(&self.dims, p)
    }

    pub fn matrix_at(&self, p: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, self.point(p))
    }

    pub fn set_matrix(&mut self, p: usize, m: &DMatrix<f64>) {
        assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        let cols = self.cols;
        let out = self.point_mut(p);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[i * cols + j] = m[(i, j)];
            }
        }
    }

    /// Pointwise matrix product.
    pub fn matmul(&self, other: &GridField) -> Result<GridField> {
        if self.dims != other.dims || self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "grid product of {}x{} on {:?} with {}x{} on {:?}",
                self.rows, self.cols, self.dims, other.rows, other.cols, other.dims
            )));
        }
        let (p, q, s) = (self.rows, self.cols, other.cols);
        let mut out = GridField::zeros(self.dims.clone(), p, s);
        out.values
            .par_chunks_mut(p * s)
            .enumerate()
            .for_each(|(pt, dest)| {
                let a = &self.values[pt * p * q..(pt + 1) * p * q];
                let b = &other.values[pt * q * s..(pt + 1) * q * s];
                for i in 0..p {
                    for j in 0..s {
                        dest[i * s + j] = (0..q).map(|l| a[i * q + l] * b[l * s + j]).sum();
                    }
                }
            });
        Ok(out)
    }

    /// Grid mean of every component (trapezoid rule on the torus).
    pub fn average(&self) -> Vec<f64> {
        let c = self.num_components();
        let mut acc = vec![0.0; c];
        for chunk in self.values.chunks(c) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let n = self.num_points() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Largest pointwise max-row-sum norm.
    pub fn sup_norm(&self) -> f64 {
        let (r, c) = (self.rows, self.cols);
        self.values
            .chunks(r * c)
            .map(|m| {
                (0..r)
                    .map(|i| m[i * c..(i + 1) * c].iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn point_theta(dims: &[usize], mut p: usize) -> Vec<f64> {
    let mut theta = vec![0.0; dims.len()];
    for axis in (0..dims.len()).rev() {
        theta[axis] = (p % dims[axis]) as f64 / dims[axis] as f64;
        p /= dims[axis];
    }
    theta
}
