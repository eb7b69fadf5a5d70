//! Parametric families of presymplectic maps of `T^d x R^d x T^n`.
//!
//! Every builtin has the triangular form `(x, y, z) -> (f1(x, y), f2(x, y),
//! f3(x, y, z))` and a translation parameter `lambda = (lambda_x, lambda_y,
//! lambda_z)` of dimension `2d + n`, ordered like the state.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

/// Evaluator bundle for `f_lambda`, `Df_lambda` and `df/dlambda`.
///
/// States are lifts: angle components live in `R` and `apply` must be
/// equivariant under integer shifts of the angles.
pub trait MapFamily: Send + Sync {
    fn name(&self) -> &str;
    fn d(&self) -> usize;
    fn n(&self) -> usize;
    fn param_dim(&self) -> usize;

    fn apply(&self, u: &[f64], lambda: &[f64], out: &mut [f64]);

    /// Full `(2d+n) x (2d+n)` Jacobian in `u`.
    fn jacobian(&self, u: &[f64], lambda: &[f64]) -> DMatrix<f64>;

    /// `(2d+n) x m` derivative in the parameters.
    fn param_jacobian(&self, u: &[f64], lambda: &[f64]) -> DMatrix<f64>;

    /// Whether `f_0` is exact presymplectic.
    fn exact_at_zero(&self) -> bool {
        true
    }

    /// Declared domain in the action variables, if bounded.
    fn y_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    fn state_dim(&self) -> usize {
        2 * self.d() + self.n()
    }

    fn eval(&self, u: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.apply(u, lambda, &mut out);
        out
    }
}

/// `y' = y + lambda_y - (K_s / 2 pi) sin(2 pi x)`,
/// `x' = x + y' + lambda_x`,
/// `z' = z + c + lambda_z + eta cos(2 pi x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledStandardFamily {
    pub strength: f64,
    pub coupling: f64,
    pub drift: f64,
    pub y_bound: f64,
}

impl CoupledStandardFamily {
    pub fn new(strength: f64, coupling: f64, drift: f64) -> Self {
        Self {
            strength,
            coupling,
            drift,
            y_bound: 10.0,
        }
    }

    pub fn integrable(drift: f64) -> Self {
        Self::new(0.0, 0.0, drift)
    }
}

impl MapFamily for CoupledStandardFamily {
    fn name(&self) -> &str {
        "coupled_standard"
    }

    fn d(&self) -> usize {
        1
    }

    fn n(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn apply(&self, u: &[f64], lambda: &[f64], out: &mut [f64]) {
        let (x, y, z) = (u[0], u[1], u[2]);
        let s = (2.0 * PI * x).sin();
        let y1 = y + lambda[1] - self.strength / (2.0 * PI) * s;
        out[0] = x + y1 + lambda[0];
        out[1] = y1;
        out[2] = z + self.drift + lambda[2] + self.coupling * (2.0 * PI * x).cos();
    }

    fn jacobian(&self, u: &[f64], _lambda: &[f64]) -> DMatrix<f64> {
        let x = u[0];
        let dy_dx = -self.strength * (2.0 * PI * x).cos();
        let dz_dx = -2.0 * PI * self.coupling * (2.0 * PI * x).sin();
        DMatrix::from_row_slice(
            3,
            3,
            &[1.0 + dy_dx, 1.0, 0.0, dy_dx, 1.0, 0.0, dz_dx, 0.0, 1.0],
        )
    }

    fn param_jacobian(&self, _u: &[f64], _lambda: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    }

    fn y_bounds(&self) -> Option<(f64, f64)> {
        Some((-self.y_bound, self.y_bound))
    }
}

/// Two coupled standard maps (Froeschle type) with one driven phase:
/// `y' = y + lambda_y - grad V(x)`, `x' = x + y' + lambda_x`,
/// `z' = z + c + lambda_z + eta (cos 2 pi x_1 + cos 2 pi x_2)`, where
/// `V = -(k_1 cos 2 pi x_1 + k_2 cos 2 pi x_2 + h cos 2 pi (x_1 - x_2)) / 4 pi^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FroeschleFamily {
    pub k1: f64,
    pub k2: f64,
    pub h: f64,
    pub coupling: f64,
    pub drift: f64,
    pub y_bound: f64,
}

impl FroeschleFamily {
    pub fn new(k1: f64, k2: f64, h: f64, coupling: f64, drift: f64) -> Self {
        Self {
            k1,
            k2,
            h,
            coupling,
            drift,
            y_bound: 10.0,
        }
    }

    fn force(&self, x: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let tau = 2.0 * PI;
        let (s1, c1) = (tau * x[0]).sin_cos();
        let (s2, c2) = (tau * x[1]).sin_cos();
        let (s12, c12) = (tau * (x[0] - x[1])).sin_cos();
        let g = [
            (self.k1 * s1 + self.h * s12) / tau,
            (self.k2 * s2 - self.h * s12) / tau,
        ];
        let hess = [
            [self.k1 * c1 + self.h * c12, -self.h * c12],
            [-self.h * c12, self.k2 * c2 + self.h * c12],
        ];
        (g, hess)
    }
}

impl MapFamily for FroeschleFamily {
    fn name(&self) -> &str {
        "froeschle"
    }

    fn d(&self) -> usize {
        2
    }

    fn n(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        5
    }

    fn apply(&self, u: &[f64], lambda: &[f64], out: &mut [f64]) {
        let (g, _) = self.force(&u[0..2]);
        let tau = 2.0 * PI;
        for i in 0..2 {
            let y1 = u[2 + i] + lambda[2 + i] - g[i];
            out[2 + i] = y1;
            out[i] = u[i] + y1 + lambda[i];
        }
        out[4] = u[4]
            + self.drift
            + lambda[4]
            + self.coupling * ((tau * u[0]).cos() + (tau * u[1]).cos());
    }

    fn jacobian(&self, u: &[f64], _lambda: &[f64]) -> DMatrix<f64> {
        let (_, hess) = self.force(&u[0..2]);
        let tau = 2.0 * PI;
        let mut jac = DMatrix::zeros(5, 5);
        for i in 0..2 {
            for j in 0..2 {
                jac[(2 + i, j)] = -hess[i][j];
                jac[(i, j)] = -hess[i][j];
            }
            jac[(i, i)] += 1.0;
            jac[(i, 2 + i)] = 1.0;
            jac[(2 + i, 2 + i)] = 1.0;
            jac[(4, i)] = -tau * self.coupling * (tau * u[i]).sin();
        }
        jac[(4, 4)] = 1.0;
        jac
    }

    fn param_jacobian(&self, _u: &[f64], _lambda: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::identity(5, 5);
        p[(0, 2)] = 1.0;
        p[(1, 3)] = 1.0;
        p
    }

    fn y_bounds(&self) -> Option<(f64, f64)> {
        Some((-self.y_bound, self.y_bound))
    }
}

type MapFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Family defined only by its map; derivatives by central differences with
/// relative step `1e-6`.
#[derive(Clone)]
pub struct FiniteDifferenceFamily {
    name: String,
    d: usize,
    n: usize,
    m: usize,
    exact: bool,
    y_bounds: Option<(f64, f64)>,
    map: Arc<MapFn>,
}

impl std::fmt::Debug for FiniteDifferenceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteDifferenceFamily")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl FiniteDifferenceFamily {
    pub const REL_STEP: f64 = 1e-6;

    pub fn new<F>(name: impl Into<String>, d: usize, n: usize, m: usize, map: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            d,
            n,
            m,
            exact: true,
            y_bounds: None,
            map: Arc::new(map),
        }
    }

    /// Wraps another family, discarding its analytic derivatives.
    pub fn wrap(family: Arc<dyn MapFamily>) -> Self {
        let (d, n, m) = (family.d(), family.n(), family.param_dim());
        let name = format!("fd({})", family.name());
        let exact = family.exact_at_zero();
        let bounds = family.y_bounds();
        let inner = family.clone();
        let mut out = Self::new(name, d, n, m, move |u, l, o| inner.apply(u, l, o));
        out.exact = exact;
        out.y_bounds = bounds;
        out
    }

    pub fn with_exactness(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn with_y_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.y_bounds = Some((lo, hi));
        self
    }

    fn central(&self, base: &[f64], which: usize, eval: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
        let dim = 2 * self.d + self.n;
        let h = Self::REL_STEP * base[which].abs().max(1.0);
        let mut p = base.to_vec();
        let mut fp = vec![0.0; dim];
        let mut fm = vec![0.0; dim];
        p[which] = base[which] + h;
        eval(&p, &mut fp);
        p[which] = base[which] - h;
        eval(&p, &mut fm);
        fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
}

impl MapFamily for FiniteDifferenceFamily {
    fn name(&self) -> &str {
        &self.name
    }

    fn d(&self) -> usize {
        self.d
    }

    fn n(&self) -> usize {
        self.n
    }

    fn param_dim(&self) -> usize {
        self.m
    }

    fn apply(&self, u: &[f64], lambda: &[f64], out: &mut [f64]) {
        (self.map)(u, lambda, out)
    }

    fn jacobian(&self, u: &[f64], lambda: &[f64]) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col = self.central(u, j, |p, o| (self.map)(p, lambda, o));
            for i in 0..dim {
                jac[(i, j)] = col[i];
            }
        }
        jac
    }

    fn param_jacobian(&self, u: &[f64], lambda: &[f64]) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut jac = DMatrix::zeros(dim, self.m);
        for j in 0..self.m {
            let col = self.central(lambda, j, |p, o| (self.map)(u, p, o));
            for i in 0..dim {
                jac[(i, j)] = col[i];
            }
        }
        jac
    }

    fn exact_at_zero(&self) -> bool {
        self.exact
    }

    fn y_bounds(&self) -> Option<(f64, f64)> {
        self.y_bounds
    }
}

/// Relative discrepancy `max |A - B| / max(1, max |A|)`.
pub fn relative_jacobian_error(analytic: &DMatrix<f64>, other: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(1.0);
    (analytic - other).amax() / scale
}
