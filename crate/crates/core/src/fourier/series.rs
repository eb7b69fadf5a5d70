use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;

use super::fft::fft_nd;
use super::grid::GridField;
use crate::error::{Error, Result};

/// Per-axis truncation radii: the mode set is `{k : |k_i| <= radii[i]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Truncation {
    radii: Vec<usize>,
}

impl Truncation {
    pub fn new(radii: Vec<usize>) -> Self {
        assert!(!radii.is_empty(), "truncation needs at least one axis");
        Self { radii }
    }

    pub fn uniform(dim: usize, radius: usize) -> Self {
        Self::new(vec![radius; dim])
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn dim(&self) -> usize {
        self.radii.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.radii.iter().map(|r| 2 * r + 1).collect()
    }

    pub fn num_modes(&self) -> usize {
        self.radii.iter().map(|r| 2 * r + 1).product()
    }

    /// Smallest admissible grid: even and at least `2N + 2` per axis.
    pub fn base_grid(&self) -> Vec<usize> {
        self.radii.iter().map(|r| 2 * r + 2).collect()
    }

    /// Grid for quadratic products: 3/2 of the base grid, rounded up to even.
    pub fn padded_grid(&self) -> Vec<usize> {
        self.radii
            .iter()
            .map(|r| {
                let p = 3 * (r + 1);
                p + p % 2
            })
            .collect()
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for (&ki, &r) in k.iter().zip(&self.radii) {
            if ki.unsigned_abs() as usize > r {
                return None;
            }
            idx = idx * (2 * r + 1) + (ki + r as i64) as usize;
        }
        Some(idx)
    }

    pub fn mode(&self, mut idx: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            let ext = 2 * self.radii[axis] + 1;
            k[axis] = (idx % ext) as i64 - self.radii[axis] as i64;
            idx /= ext;
        }
        k
    }

    /// Visits every mode in storage order.
    pub fn for_each_mode(&self, mut visit: impl FnMut(usize, &[i64])) {
        let dim = self.dim();
        let mut k: Vec<i64> = self.radii.iter().map(|&r| -(r as i64)).collect();
        for idx in 0..self.num_modes() {
            visit(idx, &k);
            for axis in (0..dim).rev() {
                if k[axis] < self.radii[axis] as i64 {
                    k[axis] += 1;
                    break;
                }
                k[axis] = -(self.radii[axis] as i64);
            }
        }
    }

    pub fn zero_index(&self) -> usize {
        self.index(&vec![0; self.dim()]).expect("zero mode always present")
    }

    pub fn contains(&self, other: &Truncation) -> bool {
        self.dim() == other.dim() && self.radii.iter().zip(&other.radii).all(|(a, b)| a >= b)
    }

    /// Doubles the radius of one axis (a zero radius becomes one).
    pub fn grown(&self, axis: usize) -> Truncation {
        let mut radii = self.radii.clone();
        radii[axis] = (radii[axis] * 2).max(1);
        Truncation::new(radii)
    }

    fn check_grid(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} axes, truncation has {}",
                dims.len(),
                self.dim()
            )));
        }
        for (&g, &r) in dims.iter().zip(&self.radii) {
            if g % 2 != 0 || g < 2 * r + 2 {
                return Err(Error::ShapeMismatch(format!(
                    "grid size {g} must be even and >= {} for radius {r}",
                    2 * r + 2
                )));
            }
        }
        Ok(())
    }
}

/// Truncated Fourier series of a matrix-valued function on the torus,
/// `F(theta) = sum_k c_k exp(2 pi i k.theta)`, with `rows x cols` components
/// stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    trunc: Truncation,
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl FourierSeries {
    pub fn zeros(trunc: Truncation, rows: usize, cols: usize) -> Self {
        let len = trunc.num_modes() * rows * cols;
        Self {
            trunc,
            rows,
            cols,
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Constant field with the given row-major values.
    pub fn constant(trunc: Truncation, rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut out = Self::zeros(trunc, rows, cols);
        let zero = out.trunc.zero_index();
        for (c, &v) in values.iter().enumerate() {
            out.coeffs[c * out.trunc.num_modes() + zero] = Complex64::new(v, 0.0);
        }
        out
    }

    pub fn from_coeffs(
        trunc: Truncation,
        rows: usize,
        cols: usize,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if coeffs.len() != trunc.num_modes() * rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients, got {}",
                trunc.num_modes() * rows * cols,
                coeffs.len()
            )));
        }
        Ok(Self {
            trunc,
            rows,
            cols,
            coeffs,
        })
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
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

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component(&self, comp: usize) -> &[Complex64] {
        let m = self.trunc.num_modes();
        &self.coeffs[comp * m..(comp + 1) * m]
    }

    pub fn component_mut(&mut self, comp: usize) -> &mut [Complex64] {
        let m = self.trunc.num_modes();
        &mut self.coeffs[comp * m..(comp + 1) * m]
    }

    pub fn coeff(&self, comp: usize, k: &[i64]) -> Complex64 {
        match self.trunc.index(k) {
            Some(idx) => self.component(comp)[idx],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn set_coeff(&mut self, comp: usize, k: &[i64], value: Complex64) {
        let idx = self.trunc.index(k).expect("mode outside truncation");
        self.component_mut(comp)[idx] = value;
    }

    /// Sub-block of rows `r0..r1` and columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> FourierSeries {
        let mut out = FourierSeries::zeros(self.trunc.clone(), r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                let src = self.component(i * self.cols + j).to_vec();
                out.component_mut((i - r0) * (c1 - c0) + (j - c0))
                    .copy_from_slice(&src);
            }
        }
        out
    }

    /// Writes `block` into rows starting at `r0`, columns at `c0`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &FourierSeries) {
        assert_eq!(block.trunc, self.trunc);
        for i in 0..block.rows {
            for j in 0..block.cols {
                let src = block.component(i * block.cols + j).to_vec();
                let cols = self.cols;
                self.component_mut((r0 + i) * cols + c0 + j)
                    .copy_from_slice(&src);
            }
        }
    }

    /// Samples the series on a uniform grid `theta_j = j / dims`.
    pub fn to_grid(&self, dims: &[usize]) -> Result<GridField> {
        self.trunc.check_grid(dims)?;
        let total: usize = dims.iter().product();
        let comps = self.num_components();
        let mut grid = GridField::zeros(dims.to_vec(), self.rows, self.cols);
        let mut buffer = vec![Complex64::new(0.0, 0.0); total];
        for comp in 0..comps {
            buffer.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            let coeffs = self.component(comp);
            self.trunc.for_each_mode(|idx, k| {
                buffer[wrapped_index(k, dims)] = coeffs[idx];
            });
            fft_nd(&mut buffer, dims, FftDirection::Inverse);
            let values = grid.values_mut();
            for (p, b) in buffer.iter().enumerate() {
                values[p * comps + comp] = b.re;
            }
        }
        Ok(grid)
    }

    /// Fourier analysis of grid samples, keeping the modes inside `trunc`.
    /// The result is projected onto Hermitian-symmetric coefficients.
    pub fn from_grid(grid: &GridField, trunc: &Truncation) -> Result<Self> {
        let dims = grid.dims().to_vec();
        trunc.check_grid(&dims)?;
        let total = grid.num_points();
        let comps = grid.num_components();
        let scale = 1.0 / total as f64;
        let mut out = FourierSeries::zeros(trunc.clone(), grid.rows(), grid.cols());
        let mut buffer = vec![Complex64::new(0.0, 0.0); total];
        let values = grid.values();
        for comp in 0..comps {
            for (p, b) in buffer.iter_mut().enumerate() {
                *b = Complex64::new(values[p * comps + comp], 0.0);
            }
            fft_nd(&mut buffer, &dims, FftDirection::Forward);
            let m = trunc.num_modes();
            let dest = &mut out.coeffs[comp * m..(comp + 1) * m];
            trunc.for_each_mode(|idx, k| {
                dest[idx] = buffer[wrapped_index(k, &dims)] * scale;
            });
        }
        out.symmetrize();
        Ok(out)
    }

    /// Direct summation at an arbitrary point, row-major components.
    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let dim = self.trunc.dim();
        assert_eq!(theta.len(), dim);
        // per-axis tables of exp(2 pi i k theta_a), k = -N..N
        let tables: Vec<Vec<Complex64>> = (0..dim)
            .map(|a| {
                let r = self.trunc.radii[a] as i64;
                (-r..=r)
                    .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * theta[a]))
                    .collect()
            })
            .collect();
        let mut basis = vec![Complex64::new(0.0, 0.0); self.trunc.num_modes()];
        self.trunc.for_each_mode(|idx, k| {
            let mut e = Complex64::new(1.0, 0.0);
            for a in 0..dim {
                e *= tables[a][(k[a] + self.trunc.radii[a] as i64) as usize];
            }
            basis[idx] = e;
        });
        (0..self.num_components())
            .map(|c| {
                self.component(c)
                    .iter()
                    .zip(&basis)
                    .map(|(c, b)| (c * b).re)
                    .sum()
            })
            .collect()
    }

    /// `F(theta + omega)`: each coefficient picks up `exp(2 pi i k.omega)`.
    pub fn shift(&self, omega: &[f64]) -> FourierSeries {
        assert_eq!(omega.len(), self.trunc.dim());
        let mut factors = vec![Complex64::new(0.0, 0.0); self.trunc.num_modes()];
        self.trunc.for_each_mode(|idx, k| {
            let phase: f64 = k.iter().zip(omega).map(|(&ki, &w)| ki as f64 * w).sum();
            factors[idx] = phase_factor(phase);
        });
        let mut out = self.clone();
        for comp in 0..self.num_components() {
            for (c, f) in out.component_mut(comp).iter_mut().zip(&factors) {
                *c *= f;
            }
        }
        out
    }

    /// Partial derivative along `axis`: coefficients times `2 pi i k_axis`.
    pub fn derivative(&self, axis: usize) -> FourierSeries {
        let mut factors = vec![Complex64::new(0.0, 0.0); self.trunc.num_modes()];
        self.trunc.for_each_mode(|idx, k| {
            factors[idx] = Complex64::new(0.0, 2.0 * PI * k[axis] as f64);
        });
        let mut out = self.clone();
        for comp in 0..self.num_components() {
            for (c, f) in out.component_mut(comp).iter_mut().zip(&factors) {
                *c *= f;
            }
        }
        out
    }

    /// Weighted l1 norm `sum_k |c_k| exp(2 pi rho |k|_1)` of one component.
    pub fn component_norm(&self, comp: usize, rho: f64) -> Result<f64> {
        let weights = self.weights(rho)?;
        Ok(self
            .component(comp)
            .iter()
            .zip(&weights)
            .map(|(c, w)| c.norm() * w)
            .sum())
    }

    /// Weighted l1 surrogate of the strip sup norm. For matrix fields the
    /// component norms are combined as a max row sum, matching the max-norm
    /// on vectors.
    pub fn analytic_norm(&self, rho: f64) -> Result<f64> {
        let weights = self.weights(rho)?;
        let mut best = 0.0f64;
        for i in 0..self.rows {
            let mut row = 0.0;
            for j in 0..self.cols {
                row += self
                    .component(i * self.cols + j)
                    .iter()
                    .zip(&weights)
                    .map(|(c, w)| c.norm() * w)
                    .sum::<f64>();
            }
            best = best.max(row);
        }
        Ok(best)
    }

    fn weights(&self, rho: f64) -> Result<Vec<f64>> {
        assert!(rho >= 0.0, "strip width must be nonnegative");
        let mut weights = vec![0.0; self.trunc.num_modes()];
        let mut overflow = false;
        self.trunc.for_each_mode(|idx, k| {
            let l1: i64 = k.iter().map(|v| v.abs()).sum();
            let w = (2.0 * PI * rho * l1 as f64).exp();
            overflow |= !w.is_finite();
            weights[idx] = w;
        });
        if overflow {
            return Err(Error::NormOverflow { rho });
        }
        Ok(weights)
    }

    /// Real parts of the zero-mode coefficients (the torus averages).
    pub fn average(&self) -> Vec<f64> {
        let zero = self.trunc.zero_index();
        (0..self.num_components())
            .map(|c| self.component(c)[zero].re)
            .collect()
    }

    pub fn add_constant(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_components());
        let zero = self.trunc.zero_index();
        for (c, &v) in values.iter().enumerate() {
            self.component_mut(c)[zero] += v;
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &FourierSeries) {
        assert_eq!(self.trunc, other.trunc);
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> FourierSeries {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out
    }

    pub fn max_abs_diff(&self, other: &FourierSeries) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|c_k - conj(c_{-k})|` over all components.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for comp in 0..self.num_components() {
            let c = self.component(comp);
            self.trunc.for_each_mode(|idx, k| {
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                let j = self.trunc.index(&neg).unwrap();
                worst = worst.max((c[idx] - c[j].conj()).norm());
            });
        }
        worst
    }

    /// Projects onto real-valued fields: `c_k <- (c_k + conj(c_{-k})) / 2`.
    pub fn symmetrize(&mut self) {
        let m = self.trunc.num_modes();
        // storage order reverses under k -> -k
        for comp in 0..self.num_components() {
            let c = &mut self.coeffs[comp * m..(comp + 1) * m];
            for idx in 0..m {
                let j = m - 1 - idx;
                if idx > j {
                    break;
                }
                let avg = (c[idx] + c[j].conj()) * 0.5;
                c[idx] = avg;
                c[j] = avg.conj();
            }
        }
    }

    /// Same field on another truncation (zero padding or cutting).
    pub fn retruncate(&self, trunc: &Truncation) -> FourierSeries {
        let mut out = FourierSeries::zeros(trunc.clone(), self.rows, self.cols);
        for comp in 0..self.num_components() {
            let src = self.component(comp);
            let dest_modes = trunc.num_modes();
            let dest = &mut out.coeffs[comp * dest_modes..(comp + 1) * dest_modes];
            self.trunc.for_each_mode(|idx, k| {
                if let Some(j) = trunc.index(k) {
                    dest[j] = src[idx];
                }
            });
        }
        out
    }

    /// Energy in the outer quarter of `axis` (`|k_axis| > 3N/4`) over the
    /// total non-constant energy; zero when there is no oscillation.
    pub fn tail_ratio(&self, axis: usize) -> f64 {
        let radius = self.trunc.radii[axis] as f64;
        let cutoff = 0.75 * radius;
        let zero = self.trunc.zero_index();
        let mut tail = 0.0;
        let mut total = 0.0;
        for comp in 0..self.num_components() {
            let c = self.component(comp);
            self.trunc.for_each_mode(|idx, k| {
                if idx == zero {
                    return;
                }
                let e = c[idx].norm_sqr();
                total += e;
                if (k[axis].abs() as f64) > cutoff {
                    tail += e;
                }
            });
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// `exp(2 pi i phase)`, reducing the phase first to keep the argument small.
pub(crate) fn phase_factor(phase: f64) -> Complex64 {
    let reduced = phase - phase.round();
    Complex64::from_polar(1.0, 2.0 * PI * reduced)
}

fn wrapped_index(k: &[i64], dims: &[usize]) -> usize {
    let mut idx = 0usize;
    for (&ki, &g) in k.iter().zip(dims) {
        idx = idx * g + ki.rem_euclid(g as i64) as usize;
    }
    idx
}

/// Pointwise matrix product of two band-limited fields, evaluated on the
/// padded grid and re-truncated to the common truncation.
pub fn grid_product(a: &FourierSeries, b: &FourierSeries) -> Result<FourierSeries> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if a.trunc != b.trunc {
        return Err(Error::ShapeMismatch("factors have different truncations".into()));
    }
    let dims = a.trunc.padded_grid();
    let ga = a.to_grid(&dims)?;
    let gb = b.to_grid(&dims)?;
    let gc = ga.matmul(&gb)?;
    FourierSeries::from_grid(&gc, &a.trunc)
}
